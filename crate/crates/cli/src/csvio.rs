//! CSV interchange for synchronized records.
//!
//! ```text
//! # fs=6400
//! # f0=50
//! # neutral=resonant
//! time,u0b,F1,F2,T
//! 0,0.12,1.5,-0.3,-1.2
//! ...
//! ```
//!
//! Leading `#` lines carry `key=value` metadata. The header must start with
//! `time,u0b`; every further column is a feeder current.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hifid_core::{FeederId, NeutralType, SampleSeries, SynchronizedRecord};

/// Relative tolerance on time-step jitter and on sampling-rate agreement.
pub const RATE_TOLERANCE: f64 = 1e-6;

/// Settings that a file may omit and the caller supplies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestDefaults {
    pub fs: f64,
    pub f0: f64,
    pub neutral: Option<NeutralType>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub record: SynchronizedRecord,
    pub metadata: BTreeMap<String, String>,
}

fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>> {
    let mut meta = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some(body) = line.trim_start().strip_prefix('#') else {
            break;
        };
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| anyhow!("row {}: metadata line must read '# key=value'", i + 1))?;
        meta.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(meta)
}

fn meta_number(meta: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    meta.get(key)
        .map(|v| {
            v.parse::<f64>()
                .with_context(|| format!("metadata '{key}' is not a number: '{v}'"))
        })
        .transpose()
}

/// Reads a record from CSV text. `source` names the input in messages.
pub fn parse_csv(text: &str, defaults: IngestDefaults, source: &str) -> Result<Ingested> {
    let meta = parse_metadata(text)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .with_context(|| format!("{source}: unreadable header"))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 || !header[0].eq_ignore_ascii_case("time") {
        bail!("{source}: header must start with 'time', then 'u0b' and at least one feeder column");
    }
    if !header[1].eq_ignore_ascii_case("u0b") {
        bail!("{source}: missing u0b column (second column is '{}')", header[1]);
    }
    let width = header.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width];
    let mut lines = Vec::new();
    for row in reader.records() {
        let row = row.with_context(|| format!("{source}: malformed CSV"))?;
        let line = row.position().map_or(0, |p| p.line());
        lines.push(line);
        if row.len() != width {
            bail!("{source}: row {line}: expected {width} fields, found {}", row.len());
        }
        for (c, cell) in row.iter().enumerate() {
            if cell.is_empty() {
                bail!("{source}: row {line}: empty cell in column '{}'", header[c]);
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| anyhow!("{source}: row {line}: '{cell}' in column '{}' is not a number", header[c]))?;
            if !v.is_finite() {
                bail!("{source}: row {line}: non-finite value in column '{}'", header[c]);
            }
            columns[c].push(v);
        }
    }
    let time = &columns[0];
    if time.len() < 2 {
        bail!("{source}: at least two data rows are required");
    }
    // fs is inferred from the time column, then every step is checked against it
    let span = time[time.len() - 1] - time[0];
    let dt = span / (time.len() - 1) as f64;
    if !(dt > 0.0) {
        bail!("{source}: time column must increase");
    }
    for k in 1..time.len() {
        let step = time[k] - time[k - 1];
        if (step - dt).abs() > RATE_TOLERANCE * dt {
            bail!(
                "{source}: row {}: time step {step:e} s deviates from {dt:e} s by more than 1 ppm",
                lines[k]
            );
        }
    }
    let inferred = 1.0 / dt;
    let declared = meta_number(&meta, "fs")?;
    if let Some(fs) = declared {
        if (fs - inferred).abs() > RATE_TOLERANCE * fs {
            bail!("{source}: declared fs={fs} Hz but the time column implies {inferred} Hz");
        }
    }
    let fs = declared.unwrap_or(defaults.fs);
    if (fs - inferred).abs() > RATE_TOLERANCE * fs {
        bail!("{source}: time column implies {inferred} Hz but the configuration expects {fs} Hz");
    }
    let f0 = meta_number(&meta, "f0")?.unwrap_or(defaults.f0);
    let neutral = match meta.get("neutral") {
        Some(n) => n.parse::<NeutralType>()?,
        None => defaults
            .neutral
            .ok_or_else(|| anyhow!("{source}: no neutral type in the file metadata or the configuration"))?,
    };
    let t0 = time[0];
    let series = |v: Vec<f64>| SampleSeries::new(v, fs, f0, t0);
    let mut cols = columns.into_iter().skip(1);
    let u0b = series(cols.next().expect("u0b column present"))?;
    let feeders = header[2..]
        .iter()
        .zip(cols)
        .map(|(h, v)| Ok((FeederId::new(h.clone()), series(v)?)))
        .collect::<Result<Vec<_>>>()?;
    let record = SynchronizedRecord::new(u0b, feeders, neutral)
        .with_context(|| format!("{source}: inconsistent channels"))?;
    Ok(Ingested { record, metadata: meta })
}

pub fn ingest_csv(path: &Path, defaults: IngestDefaults) -> Result<Ingested> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_csv(&text, defaults, &path.display().to_string())
}

/// CSV text of `record`. Values use the shortest representation that parses
/// back to the same number, so a round trip is lossless.
pub fn to_csv(record: &SynchronizedRecord, extra_meta: &[(&str, String)]) -> String {
    let u = record.u0b();
    let mut out = String::new();
    let _ = writeln!(out, "# fs={}", u.fs());
    let _ = writeln!(out, "# f0={}", u.f0());
    let _ = writeln!(out, "# neutral={}", record.neutral());
    for (k, v) in extra_meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("time,u0b");
    for (id, _) in record.feeders() {
        out.push(',');
        out.push_str(id.as_str());
    }
    out.push('\n');
    for n in 0..record.len() {
        let _ = write!(out, "{},{}", u.time(n), u.values()[n]);
        for (_, s) in record.feeders() {
            let _ = write!(out, ",{}", s.values()[n]);
        }
        out.push('\n');
    }
    out
}

pub fn export_csv(record: &SynchronizedRecord, path: &Path, extra_meta: &[(&str, String)]) -> Result<()> {
    fs::write(path, to_csv(record, extra_meta)).with_context(|| format!("cannot write {}", path.display()))
}
