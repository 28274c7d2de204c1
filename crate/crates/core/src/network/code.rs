use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Hierarchical on/off pattern: one bit vector per hidden level.
///
/// Renders as `"10|011"` (level 1 bits, then level 2, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ActivationCode {
    levels: Vec<Vec<bool>>,
}

impl ActivationCode {
    pub fn new(levels: Vec<Vec<bool>>) -> Self {
        ActivationCode { levels }
    }

    pub fn empty() -> Self {
        ActivationCode::default()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Bits of level `l` (1-based).
    pub fn level(&self, l: usize) -> &[bool] {
        &self.levels[l - 1]
    }

    pub fn levels(&self) -> &[Vec<bool>] {
        &self.levels
    }

    pub fn last_level(&self) -> Option<&[bool]> {
        self.levels.last().map(Vec::as_slice)
    }

    /// The first `n` levels.
    pub fn prefix(&self, n: usize) -> ActivationCode {
        ActivationCode {
            levels: self.levels[..n.min(self.levels.len())].to_vec(),
        }
    }

    pub fn push_level(&mut self, bits: Vec<bool>) {
        self.levels.push(bits);
    }

    pub fn with_level(&self, bits: Vec<bool>) -> ActivationCode {
        let mut out = self.clone();
        out.push_level(bits);
        out
    }

    /// Copy with bit `index` of the last level flipped.
    pub fn flip_last(&self, index: usize) -> ActivationCode {
        let mut out = self.clone();
        if let Some(last) = out.levels.last_mut() {
            last[index] = !last[index];
        }
        out
    }

    pub fn total_bits(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Number of differing bits; `None` when the level shapes differ.
    pub fn hamming(&self, other: &ActivationCode) -> Option<usize> {
        if self.levels.len() != other.levels.len()
            || self.levels.iter().zip(&other.levels).any(|(a, b)| a.len() != b.len())
        {
            return None;
        }
        Some(
            self.levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
                .sum(),
        )
    }
}

impl fmt::Display for ActivationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, level) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            for &b in level {
                f.write_str(if b { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

impl FromStr for ActivationCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(ActivationCode::empty());
        }
        let levels = s
            .split('|')
            .map(|part| {
                part.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::parse(
                            "activation code",
                            format!("unexpected character {other:?}"),
                        )),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ActivationCode { levels })
    }
}

impl Serialize for ActivationCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActivationCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
