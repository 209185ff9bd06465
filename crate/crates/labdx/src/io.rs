//! Dataset files, lab-event CSVs and JSON helpers.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use labdx_core::data::{
    ingest_events, EventValue, FrequencyReport, IngestSchema, LabEvent, LabSequence, SynthConfig,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::DataConfig;
use crate::error::{CliError, CliResult};

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub num_episodes: usize,
    pub num_tests: usize,
    pub num_classes: usize,
    pub missing_rate: f64,
    pub label_counts: Vec<usize>,
    /// SHA-256 of episodes.jsonl.
    pub digest: String,
    pub source: DatasetSource,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic { seed: u64, generator: SynthConfig },
    Ingested { excluded_short: usize },
}

/// Episodes ready for splitting, with their provenance digest.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub episodes: Vec<LabSequence>,
    pub num_tests: usize,
    pub num_classes: usize,
    pub digest: String,
    /// Present for CSV input: short episodes dropped and per-test counts.
    pub ingest: Option<IngestSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub excluded_short: usize,
    pub frequency: FrequencyReport,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn episodes_jsonl(episodes: &[LabSequence]) -> String {
    let mut out = String::new();
    for e in episodes {
        out.push_str(&serde_json::to_string(e).expect("episode serializes"));
        out.push('\n');
    }
    out
}

/// Summary statistics for a manifest.
pub fn describe(episodes: &[LabSequence], num_classes: usize) -> (f64, Vec<usize>) {
    let mut counts = vec![0; num_classes];
    for e in episodes {
        if e.label < num_classes {
            counts[e.label] += 1;
        }
    }
    (labdx_core::data::missing_rate(episodes), counts)
}

pub fn write_dataset(
    dir: &Path,
    episodes: &[LabSequence],
    num_classes: usize,
    source: DatasetSource,
    config_hash: &str,
) -> CliResult<Manifest> {
    let body = episodes_jsonl(episodes);
    let (missing_rate, label_counts) = describe(episodes, num_classes);
    let manifest = Manifest {
        format: "labdx-dataset/1".into(),
        num_episodes: episodes.len(),
        num_tests: episodes.first().map_or(0, |e| e.tests()),
        num_classes,
        missing_rate,
        label_counts,
        digest: sha256_hex(body.as_bytes()),
        source,
        config_hash: config_hash.into(),
    };
    write_text(&dir.join(EPISODES_FILE), &body)?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> CliResult<(Manifest, Vec<LabSequence>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let path = dir.join(EPISODES_FILE);
    let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let mut episodes = Vec::with_capacity(manifest.num_episodes);
    let mut hasher = Sha256::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        let seq: LabSequence = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let rebuilt = LabSequence::new(
            seq.episode_id.clone(),
            seq.label,
            seq.days(),
            seq.tests(),
            seq.values().to_vec(),
            seq.mask().to_vec(),
        )?;
        rebuilt.validate(manifest.num_classes)?;
        episodes.push(rebuilt);
    }
    if hex::encode(hasher.finalize()) != manifest.digest {
        return Err(CliError::Data(format!(
            "{} does not match the manifest digest",
            path.display()
        )));
    }
    Ok((manifest, episodes))
}

#[derive(Debug, Deserialize)]
struct EventRow {
    episode_id: String,
    patient_id: String,
    day: u32,
    test_id: usize,
    value: String,
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    episode_id: String,
    label: usize,
}

/// Schema file for CSV ingestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub num_tests: usize,
    pub num_classes: usize,
    /// Test id (as a string key) → token → numeric code.
    #[serde(default)]
    pub categorical: BTreeMap<String, BTreeMap<String, f64>>,
}

impl SchemaFile {
    pub fn to_ingest(&self) -> CliResult<IngestSchema> {
        let mut categorical = BTreeMap::new();
        for (k, v) in &self.categorical {
            let id: usize = k
                .parse()
                .map_err(|_| CliError::Config(format!("categorical key {k:?} is not a test id")))?;
            categorical.insert(id, v.clone().into_iter().collect());
        }
        Ok(IngestSchema {
            num_tests: self.num_tests,
            categorical,
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        },
        _ => CliError::Data(format!("{}: {e}", path.display())),
    }
}

pub fn read_events(path: &Path) -> CliResult<Vec<LabEvent>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut events = Vec::new();
    for row in reader.deserialize::<EventRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        events.push(LabEvent {
            episode_id: row.episode_id,
            patient_id: row.patient_id,
            day: row.day,
            test_id: row.test_id,
            value: EventValue::parse(&row.value),
        });
    }
    Ok(events)
}

pub fn read_labels(path: &Path) -> CliResult<BTreeMap<String, usize>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut labels = BTreeMap::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if labels.insert(row.episode_id.clone(), row.label).is_some() {
            return Err(CliError::Data(format!(
                "{}: episode {:?} labelled twice",
                path.display(),
                row.episode_id
            )));
        }
    }
    Ok(labels)
}

pub fn read_schema(path: &Path) -> CliResult<SchemaFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn required<'a>(field: &'a Option<PathBuf>, name: &str) -> CliResult<&'a PathBuf> {
    field
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("data.{name} is required for CSV input")))
}

/// Loads episodes from a dataset directory or from CSV events.
pub fn load_data(cfg: &DataConfig) -> CliResult<LoadedData> {
    if let Some(dir) = &cfg.dataset {
        let (manifest, episodes) = read_dataset(dir)?;
        return Ok(LoadedData {
            num_tests: manifest.num_tests,
            num_classes: manifest.num_classes,
            digest: manifest.digest,
            episodes,
            ingest: None,
        });
    }
    let events_path = required(&cfg.events, "events")?;
    let schema = read_schema(required(&cfg.schema, "schema")?)?;
    let labels = read_labels(required(&cfg.labels, "labels")?)?;
    let events = read_events(events_path)?;
    let outcome = ingest_events(events, &schema.to_ingest()?, &labels)?;
    for e in &outcome.sequences {
        e.validate(schema.num_classes)?;
    }
    let digest = sha256_hex(episodes_jsonl(&outcome.sequences).as_bytes());
    Ok(LoadedData {
        episodes: outcome.sequences,
        num_tests: schema.num_tests,
        num_classes: schema.num_classes,
        digest,
        ingest: Some(IngestSummary {
            excluded_short: outcome.excluded_short,
            frequency: outcome.frequency,
        }),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("row serializes");
        out.write_all(b"\n").expect("vec write");
    }
    write_text(path, std::str::from_utf8(&out).expect("json is utf-8"))
}
