//! Corpus files: a JSON-lines manifest plus a little-endian f64 signal blob.
//!
//! `.sig` layout: `ECGSIG01`, u32 record count, u32 samples per lead, then
//! record-major, lead-major f64 samples.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{word_count, ReportText, MIN_REPORT_WORDS};
use super::synth::EcgRecord;
use super::{Corpus, CorpusRecord, FeatureSet, Split};
use crate::error::{Error, Result};

pub const SIG_MAGIC: &[u8; 8] = b"ECGSIG01";
const SIG_FAMILY: &[u8; 6] = b"ECGSIG";
const SIG_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: usize,
    split: Split,
    report: String,
    diagnoses: Vec<String>,
    true_features: Vec<usize>,
    mentioned_features: Vec<usize>,
    seed: u64,
    lead_count: usize,
    sample_rate: f64,
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let stem = match prefix.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("sig") => prefix.with_extension(""),
        _ => prefix.to_path_buf(),
    };
    let mut s = stem.into_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn manifest_path(prefix: &Path) -> PathBuf {
    with_ext(prefix, "jsonl")
}

pub fn signal_path(prefix: &Path) -> PathBuf {
    with_ext(prefix, "sig")
}

fn encode_header(count: usize, samples: usize) -> Result<Vec<u8>> {
    let count = u32::try_from(count).map_err(|_| Error::Format("too many records".into()))?;
    let samples = u32::try_from(samples).map_err(|_| Error::Format("too many samples".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(SIG_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&samples.to_le_bytes());
    Ok(out)
}

/// Parse the 16-byte header, returning `(record_count, samples_per_lead)`.
fn decode_header(bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "signal blob is {} bytes, shorter than the 16-byte header",
            bytes.len()
        )));
    }
    if &bytes[..8] != SIG_MAGIC {
        if &bytes[..6] == SIG_FAMILY {
            let found = std::str::from_utf8(&bytes[6..8])
                .ok()
                .and_then(|s| s.parse::<u32>().ok());
            if let Some(found) = found {
                return Err(Error::Version {
                    found,
                    expected: SIG_VERSION,
                });
            }
        }
        return Err(Error::Format("bad magic bytes in signal blob".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let samples = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    Ok((count, samples))
}

/// Write through a temporary sibling and rename into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Write `<prefix>.jsonl` and `<prefix>.sig`.
pub fn save_corpus(corpus: &Corpus, prefix: &Path) -> Result<()> {
    let samples = corpus.records.first().map_or(0, |r| r.ecg.samples());
    let mut manifest = Vec::new();
    let mut blob = encode_header(corpus.len(), samples)?;
    for r in &corpus.records {
        if r.ecg.samples() != samples || r.ecg.signal.len() != r.ecg.lead_count * samples {
            return Err(Error::Consistency(format!(
                "record {} has {} samples per lead, expected {samples}",
                r.id,
                r.ecg.samples()
            )));
        }
        let line = ManifestLine {
            id: r.id,
            split: r.split,
            report: r.report.text.clone(),
            diagnoses: r.report.diagnoses.clone(),
            true_features: r.ecg.true_features.iter().copied().collect(),
            mentioned_features: r.report.mentioned_features.iter().copied().collect(),
            seed: r.ecg.seed,
            lead_count: r.ecg.lead_count,
            sample_rate: r.ecg.sample_rate,
        };
        serde_json::to_writer(&mut manifest, &line)?;
        manifest.push(b'\n');
        for v in &r.ecg.signal {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(&manifest_path(prefix), &manifest)?;
    write_atomic(&signal_path(prefix), &blob)
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestLine>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        lines.push(parsed);
    }
    Ok(lines)
}

fn read_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Load a corpus written by [`save_corpus`]. Nothing is returned unless
/// both files are fully consistent.
pub fn load_corpus(prefix: &Path) -> Result<Corpus> {
    let lines = read_manifest(&manifest_path(prefix))?;
    let sig = signal_path(prefix);
    let bytes = fs::read(&sig).map_err(|e| Error::io(&sig, e))?;
    let (count, samples) = decode_header(&bytes)?;
    if count != lines.len() {
        return Err(Error::Consistency(format!(
            "signal blob declares {count} records, manifest has {}",
            lines.len()
        )));
    }
    let mut offset = HEADER_LEN;
    let mut records = Vec::with_capacity(lines.len());
    for line in lines {
        let needed = line.lead_count * samples * 8;
        let available = bytes.len() - offset;
        if available < needed {
            return Err(Error::Truncated {
                record: line.id,
                needed,
                available,
            });
        }
        let signal = read_f64s(&bytes[offset..offset + needed]);
        offset += needed;
        let to_set = |v: &[usize]| -> FeatureSet { v.iter().copied().collect() };
        records.push(CorpusRecord {
            id: line.id,
            split: line.split,
            ecg: EcgRecord {
                signal,
                sample_rate: line.sample_rate,
                lead_count: line.lead_count,
                true_features: to_set(&line.true_features),
                seed: line.seed,
            },
            report: ReportText {
                text: line.report,
                mentioned_features: to_set(&line.mentioned_features),
                diagnoses: line.diagnoses,
            },
        });
    }
    if offset != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last record",
            bytes.len() - offset
        )));
    }
    Ok(Corpus {
        records,
        generator: None,
    })
}

/// Result of [`import_pairs`]: the corpus plus notices for rejected rows.
#[derive(Debug, Clone)]
pub struct ImportOutcome {
    pub corpus: Corpus,
    pub notices: Vec<String>,
}

/// Pair an external signal blob with a plain-text file of one report per
/// line. Ground truth is unknown; reports under three words are dropped.
/// Remaining records are split 70/10/20 in file order.
pub fn import_pairs(signal_blob: &Path, reports: &Path, sample_rate: f64) -> Result<ImportOutcome> {
    let bytes = fs::read(signal_blob).map_err(|e| Error::io(signal_blob, e))?;
    let (count, samples) = decode_header(&bytes)?;
    let text = fs::read_to_string(reports).map_err(|e| Error::io(reports, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != count {
        return Err(Error::Consistency(format!(
            "signal blob has {count} records but {} has {} report lines",
            reports.display(),
            lines.len()
        )));
    }
    let payload = bytes.len() - HEADER_LEN;
    let per_lead = samples * 8;
    if count == 0 || samples == 0 || payload % (count * per_lead) != 0 {
        return Err(Error::Format(format!(
            "payload of {payload} bytes is not {count} records × leads × {samples} samples"
        )));
    }
    let lead_count = payload / (count * per_lead);
    if !(2..=12).contains(&lead_count) {
        return Err(Error::Format(format!("derived lead count {lead_count} outside 2..=12")));
    }

    let mut notices = Vec::new();
    let mut kept = Vec::new();
    let record_bytes = lead_count * per_lead;
    for (i, line) in lines.iter().enumerate() {
        let report = line.trim();
        if word_count(report) < MIN_REPORT_WORDS {
            notices.push(format!(
                "record {i} rejected: report has fewer than {MIN_REPORT_WORDS} words"
            ));
            continue;
        }
        let start = HEADER_LEN + i * record_bytes;
        let signal = read_f64s(&bytes[start..start + record_bytes]);
        if signal.iter().any(|v| !v.is_finite()) {
            notices.push(format!("record {i} rejected: non-finite samples"));
            continue;
        }
        kept.push((i, report.to_string(), signal));
    }

    let n = kept.len();
    let n_train = (0.7 * n as f64).round() as usize;
    let n_valid = (0.1 * n as f64).round() as usize;
    let records = kept
        .into_iter()
        .enumerate()
        .map(|(k, (id, report, signal))| CorpusRecord {
            id,
            split: if k < n_train {
                Split::Train
            } else if k < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            },
            ecg: EcgRecord {
                signal,
                sample_rate,
                lead_count,
                true_features: FeatureSet::new(),
                seed: 0,
            },
            report: ReportText {
                text: report,
                mentioned_features: FeatureSet::new(),
                diagnoses: Vec::new(),
            },
        })
        .collect();
    Ok(ImportOutcome {
        corpus: Corpus {
            records,
            generator: None,
        },
        notices,
    })
}

/// Raw blob writer used by tests and by external tooling.
pub fn write_signal_blob(path: &Path, signals: &[Vec<f64>], samples_per_lead: usize) -> Result<()> {
    let mut blob = encode_header(signals.len(), samples_per_lead)?;
    for s in signals {
        for v in s {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &blob)
}
