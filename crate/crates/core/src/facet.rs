use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// An independent dimension of paper similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    /// What problem or task the paper addresses.
    Background,
    /// How the paper solves it, independent of application domain.
    Method,
}

impl Facet {
    pub const ALL: [Facet; 2] = [Facet::Background, Facet::Method];

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::Background => "background",
            Facet::Method => "method",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Facet::Background => "bg",
            Facet::Method => "mt",
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown facet `{0}` (expected background|bg or method|mt)")]
pub struct UnknownFacet(pub String);

impl FromStr for Facet {
    type Err = UnknownFacet;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "background" | "bg" => Ok(Facet::Background),
            "method" | "mt" => Ok(Facet::Method),
            other => Err(UnknownFacet(other.to_string())),
        }
    }
}
