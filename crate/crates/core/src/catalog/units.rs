//! Parsing of unit-suffixed quantities such as `41MB`, `460 GB/s` or
//! `245MHz`. Prefixes are decimal; a capital `B` means bytes and a lowercase
//! `b` means bits.

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(_, c)| !(c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '-' || c == '+'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    // `e` may also start a unit; back off if the number does not parse.
    let mut cut = end;
    while cut > 0 {
        if let Ok(v) = s[..cut].parse::<f64>() {
            return Some((v, s[cut..].trim()));
        }
        cut -= 1;
    }
    None
}

fn prefix_scale(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "k" | "K" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        _ => return None,
    })
}

/// Parses a bit quantity, returning bits. Bare numbers are already bits.
pub fn parse_bits(s: &str) -> Option<f64> {
    let (v, unit) = split_number(s)?;
    if unit.is_empty() {
        return Some(v);
    }
    let (prefix, base) = unit.split_at(unit.len() - 1);
    let per = match base {
        "B" => 8.0,
        "b" => 1.0,
        _ => return None,
    };
    Some(v * per * prefix_scale(prefix.trim())?)
}

/// Parses a bandwidth, returning bits/second. Bare numbers are bits/second.
pub fn parse_bandwidth(s: &str) -> Option<f64> {
    let (v, unit) = split_number(s)?;
    if unit.is_empty() {
        return Some(v);
    }
    let size = unit
        .strip_suffix("/s")
        .or_else(|| unit.strip_suffix("ps"))?;
    Some(v * parse_bits(&format!("1{size}"))?)
}

/// Parses a frequency, returning Hz. Bare numbers are Hz.
pub fn parse_frequency(s: &str) -> Option<f64> {
    let (v, unit) = split_number(s)?;
    if unit.is_empty() {
        return Some(v);
    }
    let prefix = unit.strip_suffix("Hz").or_else(|| unit.strip_suffix("hz"))?;
    Some(v * prefix_scale(prefix.trim())?)
}
