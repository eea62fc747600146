//! Append-only history of every evaluated network.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dedup::NetworkKey;
use crate::encoding::{format_genome, NetworkGenome};
use crate::evaluators::ObjectiveVector;
use crate::moea::nondominated_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initialization,
    Exploration,
    Exploitation,
    Random,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Initialization => "initialization",
            Stage::Exploration => "exploration",
            Stage::Exploitation => "exploitation",
            Stage::Random => "random",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "initialization" => Ok(Stage::Initialization),
            "exploration" => Ok(Stage::Exploration),
            "exploitation" => Ok(Stage::Exploitation),
            "random" => Ok(Stage::Random),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub genome: NetworkGenome,
    pub key: NetworkKey,
    pub objectives: ObjectiveVector,
    pub generation: usize,
    pub stage: Stage,
}

/// Per-stage count of genomes created (including ones later resolved from the cache).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreationEvents {
    pub initialization: usize,
    pub exploration: usize,
    pub exploitation: usize,
    pub random: usize,
}

impl CreationEvents {
    pub fn record(&mut self, stage: Stage) {
        match stage {
            Stage::Initialization => self.initialization += 1,
            Stage::Exploration => self.exploration += 1,
            Stage::Exploitation => self.exploitation += 1,
            Stage::Random => self.random += 1,
        }
    }

    /// Offspring created after initialization.
    pub fn offspring(&self) -> usize {
        self.exploration + self.exploitation
    }
}

/// Insertion-ordered records with unique canonical keys.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "ArchiveData", into = "ArchiveData")]
pub struct SearchArchive {
    records: Vec<ArchiveRecord>,
    index: HashMap<NetworkKey, usize>,
    pub events: CreationEvents,
}

#[derive(Serialize, Deserialize)]
struct ArchiveData {
    records: Vec<ArchiveRecord>,
    events: CreationEvents,
}

impl From<ArchiveData> for SearchArchive {
    fn from(d: ArchiveData) -> Self {
        let index = d
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.key.clone(), i))
            .collect();
        SearchArchive {
            records: d.records,
            index,
            events: d.events,
        }
    }
}

impl From<SearchArchive> for ArchiveData {
    fn from(a: SearchArchive) -> Self {
        ArchiveData {
            records: a.records,
            events: a.events,
        }
    }
}

impl SearchArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a record unless its key is already present. Returns whether it was added.
    pub fn insert(&mut self, record: ArchiveRecord) -> bool {
        if self.index.contains_key(&record.key) {
            return false;
        }
        self.index.insert(record.key.clone(), self.records.len());
        self.records.push(record);
        true
    }

    pub fn contains(&self, key: &NetworkKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn get(&self, key: &NetworkKey) -> Option<&ArchiveRecord> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[ArchiveRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<ObjectiveVector> {
        self.records.iter().map(|r| r.objectives).collect()
    }

    /// Non-dominated records, in insertion order.
    pub fn front(&self) -> Vec<&ArchiveRecord> {
        nondominated_indices(&self.objectives())
            .into_iter()
            .map(|i| &self.records[i])
            .collect()
    }

    pub fn count_stage(&self, stage: Stage) -> usize {
        self.records.iter().filter(|r| r.stage == stage).count()
    }

    /// Comma-separated dump, one record per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("genome,key,error,flops,generation,stage\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                format_genome(&r.genome),
                r.key.digest(),
                r.objectives.error,
                r.objectives.complexity,
                r.generation,
                r.stage
            ));
        }
        out
    }
}
