use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// The 15 Edge-IIoTset traffic classes in their canonical order.
pub const EDGE_IIOT_CLASSES: [&str; 15] = [
    "Normal",
    "DDoS_UDP",
    "DDoS_ICMP",
    "SQL_injection",
    "DDoS_TCP",
    "Vulnerability_scanner",
    "Password",
    "DDoS_HTTP",
    "Uploading",
    "Backdoor",
    "Port_Scanning",
    "XSS",
    "Ransomware",
    "Fingerprinting",
    "MITM",
];

/// Per-class row counts of the reduced Edge-IIoTset, aligned with
/// [`EDGE_IIOT_CLASSES`]. They sum to 486,362.
pub const EDGE_IIOT_COUNTS: [usize; 15] = [
    349_906, 30_392, 16_985, 12_706, 12_515, 12_507, 12_483, 12_136, 9_239, 6_007, 4_994, 3_767, 2_422, 213, 90,
];

/// Bijection between class names and indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(arg_err("class vocabulary is empty"));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(arg_err(format!("class `{n}` listed twice")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn edge_iiot() -> Self {
        Self::new(EDGE_IIOT_CLASSES.iter().map(|s| s.to_string()).collect()).expect("distinct names")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Maps every label; an unknown name is an argument error naming it and
    /// its row.
    pub fn encode(&self, labels: &[String]) -> Result<Vec<usize>> {
        labels
            .iter()
            .enumerate()
            .map(|(row, l)| {
                self.index_of(l)
                    .ok_or_else(|| arg_err(format!("row {row}: unknown class `{l}`")))
            })
            .collect()
    }
}

impl TryFrom<Vec<String>> for ClassVocabulary {
    type Error = crate::Error;
    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ClassVocabulary> for Vec<String> {
    fn from(v: ClassVocabulary) -> Self {
        v.names
    }
}
