use alloc::{collections::BTreeMap, string::String, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use super::LabSequence;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventValue {
    Numeric(f64),
    Token(String),
}

impl EventValue {
    /// Numeric when the text parses as a finite number, a token otherwise.
    pub fn parse(text: &str) -> Self {
        match text.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => EventValue::Numeric(v),
            _ => EventValue::Token(String::from(text.trim())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabEvent {
    pub episode_id: String,
    pub patient_id: String,
    pub day: u32,
    pub test_id: usize,
    pub value: EventValue,
}

/// Test count plus the token tables of categorical tests, e.g.
/// `{"ABNORMAL": 0, "NORMAL": 1}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSchema {
    pub num_tests: usize,
    #[serde(default)]
    pub categorical: BTreeMap<usize, BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    /// Observation count per test id (after same-day averaging).
    pub per_test: Vec<usize>,
    /// Episode count per label among kept episodes.
    pub per_label: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOutcome {
    pub sequences: Vec<LabSequence>,
    /// Episodes dropped for having fewer than two distinct days.
    pub excluded_short: usize,
    pub frequency: FrequencyReport,
}

/// Day → test → (sum, count).
type DayCells = BTreeMap<u32, BTreeMap<usize, (f64, usize)>>;

/// Groups events into one [`LabSequence`] per episode, ordered by episode id.
///
/// Rows are the distinct days on which an episode has any result, in day
/// order. Several results of one test on one day are averaged. Sequences are
/// returned raw (not normalized, not truncated).
pub fn ingest_events<I>(
    events: I,
    schema: &IngestSchema,
    labels: &BTreeMap<String, usize>,
) -> Result<IngestOutcome>
where
    I: IntoIterator<Item = LabEvent>,
{
    let mut grouped: BTreeMap<String, DayCells> = BTreeMap::new();
    for ev in events {
        if ev.test_id >= schema.num_tests {
            return Err(Error::TestOutOfRange {
                test_id: ev.test_id,
                num_tests: schema.num_tests,
            });
        }
        let value = resolve(&ev, schema)?;
        let cell = grouped
            .entry(ev.episode_id)
            .or_default()
            .entry(ev.day)
            .or_default()
            .entry(ev.test_id)
            .or_insert((0.0, 0));
        cell.0 += value;
        cell.1 += 1;
    }

    let mut sequences = Vec::new();
    let mut excluded_short = 0;
    let mut frequency = FrequencyReport {
        per_test: vec![0; schema.num_tests],
        per_label: BTreeMap::new(),
    };
    for (episode_id, days) in grouped {
        if days.len() < 2 {
            excluded_short += 1;
            continue;
        }
        let label = *labels
            .get(&episode_id)
            .ok_or_else(|| Error::MissingLabel(episode_id.clone()))?;
        let mut seq = LabSequence::empty(episode_id, label, days.len(), schema.num_tests)?;
        for (t, tests) in days.values().enumerate() {
            for (&m, &(sum, count)) in tests {
                seq.set(t, m, sum / count as f64, true);
                frequency.per_test[m] += 1;
            }
        }
        *frequency.per_label.entry(label).or_default() += 1;
        sequences.push(seq);
    }
    Ok(IngestOutcome {
        sequences,
        excluded_short,
        frequency,
    })
}

fn resolve(ev: &LabEvent, schema: &IngestSchema) -> Result<f64> {
    match (schema.categorical.get(&ev.test_id), &ev.value) {
        (Some(map), EventValue::Token(tok)) => {
            map.get(tok).copied().ok_or_else(|| Error::UnknownToken {
                test_id: ev.test_id,
                token: tok.clone(),
            })
        }
        // a numeric code is accepted when it is one of the mapped codes
        (Some(map), EventValue::Numeric(v)) => {
            if map.values().any(|c| c == v) {
                Ok(*v)
            } else {
                Err(Error::UnknownToken {
                    test_id: ev.test_id,
                    token: alloc::format!("{v}"),
                })
            }
        }
        (None, EventValue::Numeric(v)) => Ok(*v),
        (None, EventValue::Token(tok)) => Err(Error::UnknownToken {
            test_id: ev.test_id,
            token: tok.clone(),
        }),
    }
}
