//! Report files: schema-versioned JSON, a human summary and per-channel
//! column files for plotting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hifid_core::{
    interval_slope_series, IntervalSlopeSeries, RefitConfig, RunReport, SynchronizedRecord,
    SCHEMA_VERSION,
};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Summary,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn to_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn from_json(text: &str) -> Result<RunReport> {
    let report: RunReport = serde_json::from_str(text).context("report is not valid JSON")?;
    if report.schema_version != SCHEMA_VERSION {
        bail!(
            "report schema {} does not match this build's schema {SCHEMA_VERSION}",
            report.schema_version
        );
    }
    Ok(report)
}

pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "neutral         {}", report.neutral);
    let _ = writeln!(
        s,
        "record          {} samples, {} cycles (cycles {}..{} analysed)",
        report.samples, report.cycles, report.analysed_cycles.start, report.analysed_cycles.end
    );
    if let Some(d) = &report.input_digest {
        let _ = writeln!(s, "input sha256    {d}");
    }
    let _ = writeln!(s, "feeder          faulty cycles   triggered at");
    for c in &report.channels {
        let at = c
            .detection
            .triggered_at
            .map_or_else(|| "-".to_string(), |t| t.to_string());
        let _ = writeln!(s, "  {:<13} {:<15} {at}", c.feeder_id, c.faulty_cycles().len());
    }
    match &report.trigger {
        None => {
            let _ = writeln!(s, "trigger         none (no high impedance fault detected)");
        }
        Some(t) => {
            let _ = writeln!(s, "trigger         cycle {} on feeder {}", t.cycle, t.feeder_id);
        }
    }
    if let Some(id) = &report.identification {
        let _ = writeln!(
            s,
            "window          cycles {}..={}{}",
            id.window.0,
            id.window.1,
            if id.short_window { " (short)" } else { "" }
        );
        let _ = writeln!(s, "c_dir variant   {:?}", id.chosen_variant);
        for m in id.means() {
            let _ = writeln!(s, "  mean INDEX    {:<13} {:+.4}", m.feeder_id, m.mean_index);
        }
        match &id.chosen_feeder {
            Some(f) => {
                let _ = writeln!(s, "faulty feeder   {f}");
            }
            None => {
                let _ = writeln!(s, "faulty feeder   none (no strictly positive maximum)");
            }
        }
    }
    s
}

pub fn emit_report(report: &RunReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => to_json(report)?,
        ReportFormat::Summary => summary(report),
    };
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// File name used for a channel's plot data.
pub fn plot_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.csv")
}

/// Writes one column file per channel into `dir`:
/// `sample,time,raw,slope,slope_plain` plus, for feeders,
/// `index,m_shape,faulty_cycle`. `slope` uses the report's refit settings,
/// `slope_plain` the plain least-squares slope; undefined slopes are empty.
pub fn emit_plot_data(report: &RunReport, record: &SynchronizedRecord, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let cfg = report.config.slope_config();
    let plain_cfg = hifid_core::SlopeConfig {
        refit: RefitConfig::disabled(),
        ..cfg.clone()
    };
    let nt = record.samples_per_cycle();
    let mut written = Vec::new();

    let slopes_for = |id: &str, s: &hifid_core::SampleSeries, kept: Option<&IntervalSlopeSeries>| -> Result<(Vec<f64>, Vec<f64>)> {
        let refit = match kept {
            Some(k) => k.slopes.clone(),
            None => interval_slope_series(s, id, &cfg)?.slopes,
        };
        let plain = interval_slope_series(s, id, &plain_cfg)?.slopes;
        Ok((refit, plain))
    };

    let write = |name: String, text: String, written: &mut Vec<String>| -> Result<()> {
        let path = dir.join(&name);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(name);
        Ok(())
    };

    let u = record.u0b();
    let (refit, plain) = slopes_for("u0b", u, report.u0b_slopes.as_ref())?;
    let mut text = String::from("sample,time,raw,slope,slope_plain\n");
    for n in 0..u.len() {
        let _ = writeln!(text, "{n},{},{},{},{}", u.time(n), u.values()[n], cell(refit[n]), cell(plain[n]));
    }
    write(plot_file_name("u0b"), text, &mut written)?;

    let chosen = report.identification.as_ref().map(|id| id.chosen_variant);
    for (id, s) in record.feeders() {
        let channel = report.channels.iter().find(|c| &c.feeder_id == id);
        let (refit, plain) = slopes_for(id.as_str(), s, channel.and_then(|c| c.slopes.as_ref()))?;
        let mut index = vec![f64::NAN; s.len()];
        if let Some(ident) = &report.identification {
            for smp in ident
                .samples
                .iter()
                .filter(|x| &x.feeder_id == id && Some(x.c_dir_variant) == chosen)
            {
                if let Some(n) = smp.n_min {
                    index[n] = smp.index_value;
                }
            }
        }
        let mut m_shape = vec![0u8; s.len()];
        let mut faulty = vec![0u8; s.len()];
        if let Some(c) = channel {
            for v in &c.verdicts {
                for h in v.half_cycles.iter().filter(|h| h.is_m_shape) {
                    let end = h.bounds.1.min(s.len() - 1);
                    m_shape[h.bounds.0..=end].iter_mut().for_each(|f| *f = 1);
                }
                if v.faulty {
                    let range = v.cycle * nt..((v.cycle + 1) * nt).min(s.len());
                    faulty[range].iter_mut().for_each(|f| *f = 1);
                }
            }
        }
        let mut text = String::from("sample,time,raw,slope,slope_plain,index,m_shape,faulty_cycle\n");
        for n in 0..s.len() {
            let _ = writeln!(
                text,
                "{n},{},{},{},{},{},{},{}",
                s.time(n),
                s.values()[n],
                cell(refit[n]),
                cell(plain[n]),
                cell(index[n]),
                m_shape[n],
                faulty[n]
            );
        }
        write(plot_file_name(id.as_str()), text, &mut written)?;
    }

    if let Some(ident) = &report.identification {
        let mut text = String::from("feeder,variant,cycle,half_cycle_index,n_min,index_value\n");
        for x in &ident.samples {
            let _ = writeln!(
                text,
                "{},{:?},{},{},{},{}",
                x.feeder_id,
                x.c_dir_variant,
                x.cycle,
                x.half_cycle_index,
                x.n_min.map_or_else(String::new, |n| n.to_string()),
                x.index_value
            );
        }
        write("index_stream.csv".to_string(), text, &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_standard_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn plot_names_are_filesystem_safe() {
        assert_eq!(plot_file_name("F1"), "F1.csv");
        assert_eq!(plot_file_name("bay 3/a"), "bay_3_a.csv");
    }
}
