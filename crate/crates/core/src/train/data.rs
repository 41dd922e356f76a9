use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// The three-way label vocabularies of the supported datasets. Index 0 and
/// 1 are the two stance-bearing classes, index 2 is the neutral one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSet {
    FavorAgainstNone,
    ProConNeutral,
}

impl LabelSet {
    pub fn names(self) -> [&'static str; 3] {
        match self {
            LabelSet::FavorAgainstNone => ["favor", "against", "none"],
            LabelSet::ProConNeutral => ["pro", "con", "neutral"],
        }
    }

    pub fn parse_label(self, value: &str) -> Option<usize> {
        let v = value.trim().to_ascii_lowercase();
        self.names().iter().position(|n| *n == v)
    }

    pub fn name(self, index: usize) -> &'static str {
        self.names()[index]
    }
}

impl FromStr for LabelSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "favor-against-none" | "favor_against_none" => Ok(LabelSet::FavorAgainstNone),
            "pro-con-neutral" | "pro_con_neutral" => Ok(LabelSet::ProConNeutral),
            other => Err(format!("unknown label set {other:?} (expected favor-against-none or pro-con-neutral)")),
        }
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSet::FavorAgainstNone => "favor-against-none",
            LabelSet::ProConNeutral => "pro-con-neutral",
        })
    }
}

/// One sentence–target pair and its gold class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub target: String,
    pub label: usize,
}

#[derive(Debug, Deserialize)]
struct Row {
    text: String,
    target: String,
    label: String,
}

/// Reads a `text,target,label` CSV file.
pub fn load_dataset(path: impl AsRef<Path>, labels: LabelSet) -> Result<Vec<LabeledExample>, TrainError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file, labels)
}

pub fn read_dataset(reader: impl std::io::Read, labels: LabelSet) -> Result<Vec<LabeledExample>, TrainError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| TrainError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if header != ["text", "target", "label"] {
        return Err(TrainError::BadHeader(header.join(",")));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| TrainError::Csv(e.to_string()))?;
        let label = labels.parse_label(&row.label).ok_or_else(|| TrainError::BadLabel {
            row: i + 1,
            value: row.label.clone(),
        })?;
        out.push(LabeledExample {
            text: row.text,
            target: row.target,
            label,
        });
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[LabeledExample], labels: LabelSet) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| TrainError::Io(e.to_string()))?;
    w.write_record(["text", "target", "label"]).map_err(|e| TrainError::Csv(e.to_string()))?;
    for ex in examples {
        w.write_record([ex.text.as_str(), ex.target.as_str(), labels.name(ex.label)])
            .map_err(|e| TrainError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| TrainError::Io(e.to_string()))
}
