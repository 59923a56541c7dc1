//! The eight linear operators of one Transformer layer and a dense map keyed
//! by them.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorId {
    Q,
    K,
    V,
    /// `Q K^T` inside scaled dot-product attention.
    A1,
    /// `softmax(..) V` inside scaled dot-product attention.
    A2,
    P,
    F1,
    F2,
}

impl OperatorId {
    pub const ALL: [OperatorId; 8] = [
        OperatorId::Q,
        OperatorId::K,
        OperatorId::V,
        OperatorId::A1,
        OperatorId::A2,
        OperatorId::P,
        OperatorId::F1,
        OperatorId::F2,
    ];

    /// Operators that multiply an activation by a weight matrix.
    pub const WEIGHTED: [OperatorId; 6] = [
        OperatorId::Q,
        OperatorId::K,
        OperatorId::V,
        OperatorId::P,
        OperatorId::F1,
        OperatorId::F2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn has_weights(self) -> bool {
        !matches!(self, OperatorId::A1 | OperatorId::A2)
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorId::Q => "q",
            OperatorId::K => "k",
            OperatorId::V => "v",
            OperatorId::A1 => "a1",
            OperatorId::A2 => "a2",
            OperatorId::P => "p",
            OperatorId::F1 => "f1",
            OperatorId::F2 => "f2",
        }
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A value for each of the eight operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpMap<T>(pub [T; 8]);

impl<T: Copy> OpMap<T> {
    pub fn splat(value: T) -> Self {
        OpMap([value; 8])
    }

    pub fn from_fn(mut f: impl FnMut(OperatorId) -> T) -> Self {
        OpMap(OperatorId::ALL.map(&mut f))
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(OperatorId, T) -> U) -> OpMap<U> {
        OpMap::from_fn(|op| f(op, self[op]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (OperatorId, T)> + '_ {
        OperatorId::ALL.iter().map(move |&op| (op, self[op]))
    }
}

impl OpMap<u64> {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn weighted_total(&self) -> u64 {
        OperatorId::WEIGHTED.iter().map(|&op| self[op]).sum()
    }
}

impl<T> Index<OperatorId> for OpMap<T> {
    type Output = T;
    fn index(&self, op: OperatorId) -> &T {
        &self.0[op.index()]
    }
}

impl<T> IndexMut<OperatorId> for OpMap<T> {
    fn index_mut(&mut self, op: OperatorId) -> &mut T {
        &mut self.0[op.index()]
    }
}

// Serialized as an object keyed by operator name so JSON output stays readable.
impl<T: Serialize> Serialize for OpMap<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(8))?;
        for op in OperatorId::ALL {
            map.serialize_entry(op.name(), &self[op])?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de> + Copy + Default> Deserialize<'de> for OpMap<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = std::collections::BTreeMap::<OperatorId, T>::deserialize(deserializer)?;
        let mut out = OpMap::splat(T::default());
        for (op, v) in raw {
            out[op] = v;
        }
        Ok(out)
    }
}
