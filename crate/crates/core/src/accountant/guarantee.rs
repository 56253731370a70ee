use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Neighbouring relation under which a guarantee holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyKind {
    AddRemove,
    ZeroOut,
    ReplaceOne,
}

impl AdjacencyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdjacencyKind::AddRemove => "add-remove",
            AdjacencyKind::ZeroOut => "zero-out",
            AdjacencyKind::ReplaceOne => "replace-one",
        }
    }
}

impl fmt::Display for AdjacencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const ASSUME_POISSON: &str = "Poisson sampling";
pub const ASSUME_ADD_REMOVE: &str = "add-or-remove adjacency";

/// An (ε, δ) statement together with what it is a statement about.
///
/// `epsilon` may be `+inf`. In JSON an infinite epsilon is written as the
/// string `"inf"` so that the value survives a round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyGuarantee {
    #[serde(with = "extended_f64")]
    pub epsilon: f64,
    pub delta: f64,
    pub adjacency: AdjacencyKind,
    pub unit: String,
    pub accountant: String,
    #[serde(default)]
    pub assumptions: Vec<String>,
}

impl PrivacyGuarantee {
    /// Example-level, add-or-remove guarantee with no accountant label.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Self::with_adjacency(epsilon, delta, AdjacencyKind::AddRemove)
    }

    pub fn with_adjacency(epsilon: f64, delta: f64, adjacency: AdjacencyKind) -> Result<Self> {
        ensure(epsilon >= 0.0, || format!("epsilon must be nonnegative, got {epsilon}"))?;
        ensure((0.0..=1.0).contains(&delta), || format!("delta must lie in [0, 1], got {delta}"))?;
        Ok(Self {
            epsilon,
            delta,
            adjacency,
            unit: "example".into(),
            accountant: "closed-form".into(),
            assumptions: Vec::new(),
        })
    }

    /// Stamp produced by the subsampled-Gaussian accountants.
    pub(crate) fn accounted(epsilon: f64, delta: f64, accountant: &str) -> Self {
        Self {
            epsilon,
            delta,
            adjacency: AdjacencyKind::AddRemove,
            unit: "example".into(),
            accountant: accountant.into(),
            assumptions: vec![ASSUME_POISSON.into(), ASSUME_ADD_REMOVE.into()],
        }
    }

    pub fn unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn accountant(mut self, accountant: impl Into<String>) -> Self {
        self.accountant = accountant.into();
        self
    }

    pub fn assumption(mut self, a: impl Into<String>) -> Self {
        let a = a.into();
        if !self.assumptions.contains(&a) {
            self.assumptions.push(a);
        }
        self
    }
}

impl fmt::Display for PrivacyGuarantee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(epsilon={}, delta={}) [{}, unit={}, {}]",
            crate::report::sig6(self.epsilon),
            crate::report::sig6(self.delta),
            self.adjacency,
            self.unit,
            self.accountant
        )
    }
}

/// Serde helper for reals that may be infinite.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(PrivacyGuarantee::new(-0.1, 0.0).is_err());
        assert!(PrivacyGuarantee::new(1.0, 1.5).is_err());
        assert!(PrivacyGuarantee::new(f64::INFINITY, 1e-6).is_ok());
    }

    #[test]
    fn json_keys_and_round_trip() {
        let g = PrivacyGuarantee::accounted(f64::INFINITY, 1e-6, "pld");
        let s = serde_json::to_string(&g).unwrap();
        for key in ["epsilon", "delta", "adjacency", "unit", "accountant", "assumptions"] {
            assert!(s.contains(&format!("\"{key}\"")), "{s}");
        }
        assert!(s.contains("\"inf\""));
        let back: PrivacyGuarantee = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
