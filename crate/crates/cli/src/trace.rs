use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CSV_HEADER: [&str; 8] = [
    "day",
    "temp",
    "humidity",
    "alive",
    "dead",
    "water_use",
    "action",
    "reward",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub day: u64,
    pub temp: f64,
    /// Model value, not clamped.
    pub humidity: f64,
    pub alive: u64,
    pub dead: u64,
    pub water_use: f64,
    /// Litres applied by the step that led to this row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

impl TraceRecord {
    /// Names of the fields that differ from `other`, in column order.
    pub fn differing_fields(&self, other: &TraceRecord) -> Vec<&'static str> {
        let checks = [
            self.day == other.day,
            self.temp == other.temp,
            self.humidity == other.humidity,
            self.alive == other.alive,
            self.dead == other.dead,
            self.water_use == other.water_use,
            self.action == other.action,
            self.reward == other.reward,
        ];
        CSV_HEADER
            .iter()
            .zip(checks)
            .filter(|(_, same)| !same)
            .map(|(name, _)| *name)
            .collect()
    }

    fn csv_fields(&self) -> [String; 8] {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.day.to_string(),
            self.temp.to_string(),
            self.humidity.to_string(),
            self.alive.to_string(),
            self.dead.to_string(),
            self.water_use.to_string(),
            opt(self.action),
            opt(self.reward),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format {other:?}, expected csv or jsonl")),
        }
    }
}

pub fn render_trace(records: &[TraceRecord], format: Format) -> Result<Vec<u8>, CliError> {
    if records.is_empty() {
        return Err(CliError::EmptyTrace);
    }
    let serialize = |e: &dyn std::fmt::Display| CliError::Serialize(e.to_string());
    match format {
        Format::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            writer.write_record(CSV_HEADER).map_err(|e| serialize(&e))?;
            for record in records {
                writer
                    .write_record(record.csv_fields())
                    .map_err(|e| serialize(&e))?;
            }
            writer.into_inner().map_err(|e| serialize(&e))
        }
        Format::Jsonl => {
            let mut out = Vec::new();
            for record in records {
                serde_json::to_writer(&mut out, record).map_err(|e| serialize(&e))?;
                out.push(b'\n');
            }
            Ok(out)
        }
    }
}

pub fn write_trace(records: &[TraceRecord], format: Format, path: &Path) -> Result<(), CliError> {
    let bytes = render_trace(records, format)?;
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}
