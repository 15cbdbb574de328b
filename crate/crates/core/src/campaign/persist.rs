use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BenchRow, CampaignSpec, IterationReport, RunRecord, RunStatus};
use crate::agent::{BatchStat, EpisodeStat};
use crate::error::{Error, Result};
use crate::feedback::FeedbackEvent;
use crate::io::{self, field_file_names, sha256_hex};
use crate::ledger::{LatencyLedger, LedgerEntry};
use crate::recon::{fmt_float, CSV_HEADER};
use crate::scope::Observation;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub class: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: CampaignSpec,
    pub status: RunStatus,
    pub scope_elapsed: f64,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    /// Distinct artifact classes present.
    pub fn classes(&self) -> Vec<&str> {
        let mut c: Vec<&str> = self.files.iter().map(|f| f.class.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<FileEntry>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, class: &str, bytes: &[u8]) -> Result<()> {
        io::write_bytes(&self.dir.join(rel), bytes)?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            class: class.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn jsonl<T: Serialize>(&mut self, rel: &str, class: &str, items: &[T]) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        let mut text = String::new();
        for item in items {
            text.push_str(&to_json(item, rel)?);
            text.push('\n');
        }
        self.put(rel, class, text.as_bytes())
    }

    fn csv(&mut self, rel: &str, class: &str, header: &str, rows: Vec<String>) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let mut text = format!("{header}\n");
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        self.put(rel, class, text.as_bytes())
    }
}

fn to_json<T: Serialize>(v: &T, what: &str) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::format(Path::new(what), e.to_string()))
}

/// Writes every artifact of `record` under `dir` plus a manifest with
/// checksums. Output depends only on the record, so rewriting is
/// byte-identical.
pub fn write_outputs(record: &RunRecord, dir: &Path) -> Result<Manifest> {
    let mut w = Writer { dir, files: Vec::new() };
    w.jsonl("observations.jsonl", "observations", &record.observations)?;
    w.jsonl("decisions.jsonl", "decisions", &record.decisions)?;
    w.jsonl("ledger.jsonl", "ledger", record.ledger.entries())?;
    if !record.ledger.entries().is_empty() {
        let rows = record
            .ledger
            .totals()
            .into_iter()
            .map(|(k, t)| format!("{},{t}", k.name()))
            .collect();
        w.csv("ledger_totals.csv", "ledger", "kind,total_s", rows)?;
    }
    w.jsonl("reports.jsonl", "metrics", &record.reports)?;
    w.csv(
        "metrics.csv",
        "metrics",
        &format!("iteration,{CSV_HEADER}"),
        record
            .reports
            .iter()
            .map(|r| format!("{},{}", r.iteration, r.report.csv_row(r.seed)))
            .collect(),
    )?;
    w.jsonl("bench.jsonl", "metrics", &record.bench)?;
    w.csv(
        "bench.csv",
        "metrics",
        &format!("arm,{CSV_HEADER}"),
        record
            .bench
            .iter()
            .map(|b| format!("{},{}", b.arm.name(), b.report.csv_row(b.seed)))
            .collect(),
    )?;
    w.jsonl("episodes.jsonl", "curves", &record.episodes)?;
    w.csv(
        "learning_curve.csv",
        "curves",
        "episode,return,epsilon",
        record
            .episodes
            .iter()
            .map(|e| format!("{},{},{}", e.episode, e.return_disc, e.epsilon))
            .collect(),
    )?;
    w.jsonl("batches.jsonl", "curves", &record.batches)?;
    w.csv(
        "policy_curve.csv",
        "curves",
        "batch,mean_return,grad_norm",
        record
            .batches
            .iter()
            .map(|b| format!("{},{},{}", b.batch, b.mean_return, b.grad_norm))
            .collect(),
    )?;
    w.jsonl("events.jsonl", "events", &record.events)?;
    for (name, field) in &record.fields {
        let [json, raw, pgm] = field_file_names(name);
        let header = io::RawHeader::new(field.grid(), vec![name.clone()]);
        let header_bytes = serde_json::to_vec_pretty(&header).expect("header serializes");
        w.put(&format!("fields/{json}"), "images", &header_bytes)?;
        w.put(&format!("fields/{raw}"), "images", &io::raw_bytes(&[&field.values]))?;
        w.put(&format!("fields/{pgm}"), "images", &io::pgm_bytes(field))?;
    }
    for (name, model) in &record.models {
        let bytes = serde_json::to_vec_pretty(model).expect("model serializes");
        w.put(&format!("models/{name}.json"), "models", &bytes)?;
    }
    if !record.summary.is_empty() {
        let text: String = record
            .summary
            .iter()
            .map(|(k, v)| format!("{k},{}\n", fmt_float(*v)))
            .collect();
        w.put("summary.csv", "summary", format!("key,value\n{text}").as_bytes())?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: record.spec.clone(),
        status: record.status.clone(),
        scope_elapsed: record.scope_elapsed,
        files: w.files,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    io::write_bytes(&dir.join(MANIFEST_FILE), &bytes)?;
    Ok(manifest)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::format(path, e.to_string()))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn parse_csv_map(path: &Path, bytes: &[u8]) -> Result<BTreeMap<String, f64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::format(path, e.to_string()))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l
                .split_once(',')
                .ok_or_else(|| Error::format(path, format!("bad row {l:?}")))?;
            let v = match v {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                _ => v.parse().map_err(|_| Error::format(path, format!("bad value {v:?}")))?,
            };
            Ok((k.to_string(), v))
        })
        .collect()
}

/// Loads a record written by [`write_outputs`], verifying every checksum.
/// `path` is the manifest or the run directory holding it.
pub fn replay(path: &Path) -> Result<RunRecord> {
    let manifest_path: PathBuf = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest: Manifest = serde_json::from_slice(&io::read_bytes(&manifest_path)?)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let mut contents: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for f in &manifest.files {
        let p = dir.join(&f.path);
        let bytes = io::read_bytes(&p)?;
        let found = sha256_hex(&bytes);
        if found != f.sha256 {
            return Err(Error::Checksum {
                path: p,
                expected: f.sha256.clone(),
                found,
            });
        }
        contents.insert(f.path.as_str(), bytes);
    }
    let mut rec = RunRecord::empty(manifest.spec.clone());
    rec.status = manifest.status.clone();
    rec.scope_elapsed = manifest.scope_elapsed;
    for (rel, bytes) in &contents {
        let p = dir.join(rel);
        match *rel {
            "observations.jsonl" => rec.observations = read_jsonl::<Observation>(&p, bytes)?,
            "decisions.jsonl" => rec.decisions = read_jsonl(&p, bytes)?,
            "ledger.jsonl" => {
                rec.ledger = LatencyLedger::from_entries(read_jsonl::<LedgerEntry>(&p, bytes)?)
            }
            "reports.jsonl" => rec.reports = read_jsonl::<IterationReport>(&p, bytes)?,
            "bench.jsonl" => rec.bench = read_jsonl::<BenchRow>(&p, bytes)?,
            "episodes.jsonl" => rec.episodes = read_jsonl::<EpisodeStat>(&p, bytes)?,
            "batches.jsonl" => rec.batches = read_jsonl::<BatchStat>(&p, bytes)?,
            "events.jsonl" => rec.events = read_jsonl::<FeedbackEvent>(&p, bytes)?,
            "summary.csv" => rec.summary = parse_csv_map(&p, bytes)?,
            _ => {
                if let Some(name) = rel.strip_prefix("fields/").and_then(|n| n.strip_suffix(".json")) {
                    rec.fields.insert(name.to_string(), io::read_field(&dir.join("fields"), name)?);
                } else if let Some(name) = rel.strip_prefix("models/").and_then(|n| n.strip_suffix(".json")) {
                    let v = serde_json::from_slice(bytes).map_err(|e| Error::format(&p, e.to_string()))?;
                    rec.models.insert(name.to_string(), v);
                }
            }
        }
    }
    Ok(rec)
}

/// Re-streams stored observations at their recorded simulated cadence.
/// Each item is the simulated wait since the previous observation plus the
/// observation itself.
#[derive(Debug, Clone)]
pub struct ObservationStream<'a> {
    obs: &'a [Observation],
    next: usize,
    clock: f64,
}

impl<'a> ObservationStream<'a> {
    pub fn new(obs: &'a [Observation]) -> Self {
        ObservationStream { obs, next: 0, clock: 0.0 }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Advances the simulated clock by `dt` and returns every observation
    /// that became available.
    pub fn advance(&mut self, dt: f64) -> &'a [Observation] {
        self.clock += dt;
        let start = self.next;
        while self.next < self.obs.len() && self.obs[self.next].t_sim <= self.clock {
            self.next += 1;
        }
        &self.obs[start..self.next]
    }
}

impl<'a> Iterator for ObservationStream<'a> {
    type Item = (f64, &'a Observation);

    fn next(&mut self) -> Option<Self::Item> {
        let o = self.obs.get(self.next)?;
        let wait = (o.t_sim - self.clock).max(0.0);
        self.clock = self.clock.max(o.t_sim);
        self.next += 1;
        Some((wait, o))
    }
}
