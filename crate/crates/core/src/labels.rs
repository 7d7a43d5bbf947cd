//! The fixed 32-label trigger vocabulary and bit-vector label sets.
//!
//! Index order is canonical across every stage: files store label names, everything
//! in memory uses the index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Error;

pub const NUM_CLASSES: usize = 32;

/// Trigger labels, most to least frequent in the reference training split.
pub const LABEL_NAMES: [&str; NUM_CLASSES] = [
    "pornographic",
    "violence",
    "death",
    "sexual-assault",
    "abuse",
    "blood",
    "suicide",
    "pregnancy",
    "child-abuse",
    "incest",
    "underage",
    "homophobia",
    "self-harm",
    "dying",
    "kidnapping",
    "mental-illness",
    "dissection",
    "eating-disorder",
    "abduction",
    "body-hatred",
    "childbirth",
    "racism",
    "sexism",
    "miscarriage",
    "transphobia",
    "abortion",
    "fat-phobia",
    "animal-death",
    "ableism",
    "classism",
    "misogyny",
    "animal-cruelty",
];

/// One of the 32 trigger classes. Stored 0-based, numbered 1..=32 for humans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriggerClass(u8);

impl TriggerClass {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then(|| TriggerClass(index as u8))
    }

    /// 1-based class number, as used by `--pos-weight-classes 15-32`.
    pub fn from_number(number: usize) -> Option<Self> {
        number.checked_sub(1).and_then(Self::from_index)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        // The shared-task page spells the first label out in full.
        let name = match name {
            "pornographic-content" => "pornographic",
            other => other,
        };
        LABEL_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| TriggerClass(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn number(self) -> usize {
        self.0 as usize + 1
    }

    pub fn name(self) -> &'static str {
        LABEL_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = TriggerClass> {
        (0..NUM_CLASSES as u8).map(TriggerClass)
    }
}

impl fmt::Display for TriggerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TriggerClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TriggerClass::from_name(s).ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// A set of trigger classes packed into 32 bits; bit `k` is class index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector(u32);

impl LabelVector {
    pub const EMPTY: LabelVector = LabelVector(0);

    pub fn from_bits(bits: u32) -> Self {
        LabelVector(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn from_classes<I: IntoIterator<Item = TriggerClass>>(classes: I) -> Self {
        let mut v = LabelVector::EMPTY;
        for c in classes {
            v.set(c, true);
        }
        v
    }

    pub fn from_names<I, S>(names: I) -> Result<Self, Error>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = LabelVector::EMPTY;
        for name in names {
            v.set(name.as_ref().parse()?, true);
        }
        Ok(v)
    }

    pub fn contains(self, class: TriggerClass) -> bool {
        self.0 & (1 << class.index()) != 0
    }

    pub fn set(&mut self, class: TriggerClass, on: bool) {
        if on {
            self.0 |= 1 << class.index();
        } else {
            self.0 &= !(1 << class.index());
        }
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn classes(self) -> impl Iterator<Item = TriggerClass> {
        TriggerClass::all().filter(move |c| self.contains(*c))
    }

    pub fn names(self) -> Vec<&'static str> {
        self.classes().map(TriggerClass::name).collect()
    }

    /// Complement over all 32 classes.
    pub fn complement(self) -> Self {
        LabelVector(!self.0)
    }
}

impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.names().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(deserializer)?;
        LabelVector::from_names(&names).map_err(serde::de::Error::custom)
    }
}

impl Serialize for TriggerClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TriggerClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}
