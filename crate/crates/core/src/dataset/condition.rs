use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved label at code 0, used for condition dropout and unseen targets.
pub const NULL_LABEL: &str = "<null>";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConditionToken {
    pub code: usize,
}

impl ConditionToken {
    pub const NULL: ConditionToken = ConditionToken { code: 0 };
}

/// `AIRPORT/RWYxx` when a runway is known, else the bare airport code.
pub fn condition_label(airport: &str, runway: Option<&str>) -> String {
    match runway.map(str::trim).filter(|r| !r.is_empty()) {
        Some(r) if r.starts_with("RWY") => format!("{airport}/{r}"),
        Some(r) => format!("{airport}/RWY{r}"),
        None => airport.to_string(),
    }
}

/// Ordered label list; code `i` decodes to `labels[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self { labels: vec![NULL_LABEL.to_string()] }
    }

    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        if labels.first().map(String::as_str) != Some(NULL_LABEL) {
            return Err(Error::InvalidConfig("vocabulary must start with the null label".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidConfig(format!("duplicate label {l}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn decode(&self, token: ConditionToken) -> Result<&str> {
        self.labels
            .get(token.code)
            .map(String::as_str)
            .ok_or(Error::UnknownToken(token.code))
    }

    pub fn lookup(&self, label: &str) -> Result<ConditionToken> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|code| ConditionToken { code })
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Code for `label`, appending it when absent.
    pub fn reserve(&mut self, label: &str) -> ConditionToken {
        if let Ok(t) = self.lookup(label) {
            return t;
        }
        self.labels.push(label.to_string());
        ConditionToken { code: self.labels.len() - 1 }
    }

    /// Encode while fitting: unseen labels extend the vocabulary.
    pub fn fit(&mut self, airport: &str, runway: Option<&str>) -> Result<ConditionToken> {
        check_airport(airport)?;
        Ok(self.reserve(&condition_label(airport, runway)))
    }

    /// Encode at inference time: unseen labels are an error.
    pub fn encode(&self, airport: &str, runway: Option<&str>) -> Result<ConditionToken> {
        check_airport(airport)?;
        self.lookup(&condition_label(airport, runway))
    }
}

fn check_airport(airport: &str) -> Result<()> {
    if airport.trim().is_empty() {
        return Err(Error::InvalidConfig("airport code is empty".into()));
    }
    Ok(())
}
