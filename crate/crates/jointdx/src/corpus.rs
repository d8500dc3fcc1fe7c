//! Line-delimited JSON corpus: one header document, then one document per
//! patient.
//!
//! ```text
//! {"static_dim":114,"event_dim":182,"version":1}
//! {"id":"P00000","static":[1.0,0.0,...],"events":[{"t":1,"features":[0,1,...],"decision":null}, ...]}
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use jointdx_core::data::{Event, PatientRecord};
use jointdx_core::decoder::JointTarget;
use jointdx_core::tensor::Vector;

pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("corpus has no header line")]
    MissingHeader,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("patient '{id}': {message}")]
    Record { id: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub static_dim: usize,
    pub event_dim: usize,
    pub version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionDoc {
    intention: usize,
    #[serde(rename = "type")]
    therapy_type: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventDoc {
    t: u32,
    features: Vec<u8>,
    decision: Option<DecisionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatientDoc {
    id: String,
    #[serde(rename = "static")]
    static_features: Vec<f64>,
    events: Vec<EventDoc>,
}

/// A loaded corpus with the dimensions its header declares.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub static_dim: usize,
    pub event_dim: usize,
    pub records: Vec<PatientRecord>,
}

impl Corpus {
    pub fn header(&self) -> Header {
        Header {
            static_dim: self.static_dim,
            event_dim: self.event_dim,
            version: CORPUS_VERSION,
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn find(&self, id: &str) -> Option<&PatientRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

fn to_doc(r: &PatientRecord) -> Result<PatientDoc, CorpusError> {
    if let Some(v) = r.static_features.iter().find(|v| !v.is_finite()) {
        return Err(CorpusError::Record {
            id: r.id.clone(),
            message: format!("static vector holds non-finite value {v}"),
        });
    }
    let events = r
        .events
        .iter()
        .map(|e| {
            let features = e
                .features
                .iter()
                .map(|&v| match v {
                    0.0 => Ok(0u8),
                    1.0 => Ok(1u8),
                    _ => Err(CorpusError::Record {
                        id: r.id.clone(),
                        message: format!("event t={} has non-binary feature {v}", e.t),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(EventDoc {
                t: e.t,
                features,
                decision: e.decision.map(|d| DecisionDoc {
                    intention: d.intention,
                    therapy_type: d.therapy_type,
                }),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PatientDoc {
        id: r.id.clone(),
        static_features: r.static_features.to_vec(),
        events,
    })
}

fn from_doc(doc: PatientDoc) -> jointdx_core::Result<PatientRecord> {
    let events = doc
        .events
        .into_iter()
        .map(|e| {
            Ok(Event {
                t: e.t,
                features: e.features.iter().map(|&v| f64::from(v)).collect::<Vec<_>>().into(),
                decision: e
                    .decision
                    .map(|d| JointTarget::new(d.intention, d.therapy_type))
                    .transpose()?,
            })
        })
        .collect::<jointdx_core::Result<Vec<_>>>()?;
    Ok(PatientRecord {
        id: doc.id,
        static_features: Vector::from(doc.static_features),
        events,
    })
}

/// Parses a corpus. A header line is required; blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R, source: &str) -> Result<Corpus, CorpusError> {
    let io_err = |e| CorpusError::Io {
        path: source.to_string(),
        source: e,
    };
    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |message: String| CorpusError::Line {
            line: line_no,
            message,
        };
        let Some(h) = header else {
            let h: Header = serde_json::from_str(&line).map_err(|e| at(format!("bad header: {e}")))?;
            if h.version != CORPUS_VERSION {
                return Err(at(format!(
                    "unsupported corpus version {} (expected {CORPUS_VERSION})",
                    h.version
                )));
            }
            header = Some(h);
            continue;
        };
        let doc: PatientDoc = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let record = from_doc(doc).map_err(|e| at(e.to_string()))?;
        record
            .validate(h.static_dim, h.event_dim)
            .map_err(|e| at(e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(at(format!("duplicate patient id '{}'", record.id)));
        }
        records.push(record);
    }
    let h = header.ok_or(CorpusError::MissingHeader)?;
    Ok(Corpus {
        static_dim: h.static_dim,
        event_dim: h.event_dim,
        records,
    })
}

/// Corpus documents hold only strings, integers and finite floats, so
/// serialization cannot fail.
fn to_line<T: Serialize>(doc: &T) -> String {
    serde_json::to_string(doc).expect("corpus documents always serialize")
}

pub fn write_corpus<W: Write>(mut w: W, corpus: &Corpus) -> Result<(), CorpusError> {
    let io_err = |e| CorpusError::Io {
        path: "<output>".into(),
        source: e,
    };
    writeln!(w, "{}", to_line(&corpus.header())).map_err(io_err)?;
    for r in &corpus.records {
        r.validate(corpus.static_dim, corpus.event_dim)
            .map_err(|e| CorpusError::Record {
                id: r.id.clone(),
                message: e.to_string(),
            })?;
        writeln!(w, "{}", to_line(&to_doc(r)?)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_corpus(BufReader::new(file), &path.display().to_string())
}

pub fn save_jsonl(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    write_corpus(BufWriter::new(file), corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Corpus {
        let ev = |t, f: [f64; 3], d: Option<(usize, usize)>| Event {
            t,
            features: f.to_vec().into(),
            decision: d.map(|(j, k)| JointTarget::new(j, k).unwrap()),
        };
        Corpus {
            static_dim: 2,
            event_dim: 3,
            records: vec![
                PatientRecord {
                    id: "A".into(),
                    static_features: vec![1.0, -0.3125].into(),
                    events: vec![ev(1, [0.0, 1.0, 0.0], None), ev(2, [1.0, 1.0, 0.0], Some((2, 1)))],
                },
                PatientRecord {
                    id: "B".into(),
                    static_features: vec![0.1, 1e-300].into(),
                    events: vec![ev(4, [0.0, 0.0, 1.0], Some((0, 0)))],
                },
            ],
        }
    }

    fn to_text(c: &Corpus) -> String {
        let mut buf = Vec::new();
        write_corpus(&mut buf, c).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn roundtrip_is_lossless() {
        let c = corpus();
        let text = to_text(&c);
        assert_eq!(read_corpus(text.as_bytes(), "mem").unwrap(), c);
        assert!(text.starts_with("{\"static_dim\":2,\"event_dim\":3,\"version\":1}\n"));
        assert!(text.contains("\"decision\":{\"intention\":2,\"type\":1}"));
        assert!(text.contains("\"decision\":null"));
    }

    #[test]
    fn header_only_is_empty_corpus() {
        let c = read_corpus("{\"static_dim\":2,\"event_dim\":3,\"version\":1}\n".as_bytes(), "m").unwrap();
        assert!(c.records.is_empty());
        assert!(matches!(read_corpus("".as_bytes(), "m"), Err(CorpusError::MissingHeader)));
    }

    #[test]
    fn errors_name_the_line() {
        let text = to_text(&corpus());
        let mut lines: Vec<&str> = text.lines().collect();
        let truncated = &lines[2][..lines[2].len() / 2];
        lines[2] = truncated;
        let err = read_corpus(lines.join("\n").as_bytes(), "m").unwrap_err();
        assert!(matches!(err, CorpusError::Line { line: 3, .. }), "{err}");
        assert!(err.to_string().starts_with("line 3:"));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let text = to_text(&corpus()).replacen("\"event_dim\":3", "\"event_dim\":4", 1);
        let err = read_corpus(text.as_bytes(), "m").unwrap_err();
        assert!(matches!(err, CorpusError::Line { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        let text = to_text(&corpus());
        for (from, to) in [
            ("\"intention\":2", "\"intention\":3"),
            ("\"features\":[0,1,0]", "\"features\":[0,2,0]"),
            ("\"version\":1", "\"version\":2"),
            ("\"id\":\"B\"", "\"id\":\"A\""),
            ("\"t\":2", "\"t\":1"),
            ("\"t\":4", "\"t\":4,\"extra\":0"),
        ] {
            let bad = text.replacen(from, to, 1);
            assert!(read_corpus(bad.as_bytes(), "m").is_err(), "{to}");
        }
        let mut c = corpus();
        c.records[0].events[0].features[1] = 0.5;
        assert!(write_corpus(Vec::new(), &c).is_err());
    }
}
