use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use hifid_cli::csvio::{ingest_csv, IngestDefaults};
use hifid_cli::report::{emit_plot_data, from_json, to_json};
use hifid_core::{interval_slope_series, NeutralType, PipelineConfig, SlopeConfig, SCHEMA_VERSION};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hifid"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A corpus written once for all tests of this file.
fn corpus() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["synth", "--out", dir.path().to_str().unwrap(), "--healthy", "3", "--seed", "40"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        dir
    })
    .path()
}

fn file(name: &str) -> String {
    corpus().join(name).to_str().unwrap().to_string()
}

#[test]
fn synth_writes_labels_and_records() {
    let labels = std::fs::read_to_string(corpus().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 1 + 28 + 3);
    let rec = ingest_csv(
        &corpus().join("iso-01.csv"),
        IngestDefaults {
            fs: 6400.0,
            f0: 50.0,
            neutral: None,
        },
    )
    .unwrap();
    assert_eq!(rec.record.neutral(), NeutralType::Isolated);
    assert_eq!(rec.metadata["scenario"], "iso-01");
}

#[test]
fn detect_on_a_fault_record_completes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let text = dir.path().join("r.txt");
    let o = run(&[
        "detect",
        &file("res-01.csv"),
        "--report",
        json.to_str().unwrap(),
        "--summary",
        text.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.schema_version, SCHEMA_VERSION);
    assert_eq!(report.chosen_feeder().unwrap().as_str(), "F1");
    assert_eq!(report.input_digest.as_ref().unwrap().len(), 64);
    let summary = std::fs::read_to_string(&text).unwrap();
    assert!(summary.contains("faulty feeder   F1"));
    assert!(summary.contains(&format!("trigger         cycle {}", report.trigger.unwrap().cycle)));
    assert!(stdout(&o).contains("faulty feeder"));
}

#[test]
fn healthy_record_exits_with_no_detection() {
    let o = run(&["detect", &file("healthy-000.csv")]);
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("trigger         none"));
}

#[test]
fn forced_identification_without_a_winner_exits_3() {
    let o = run(&["identify", &file("healthy-001.csv"), "--trigger-cycle", "10"]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn errors_exit_1() {
    assert_eq!(run(&["detect", "/no/such/file.csv"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["detect", &file("res-01.csv"), "--rho", "-1"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = run(&["detect", &file("res-01.csv"), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"));
}

#[test]
fn help_exits_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_beats_flags_beats_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "rho = 0.35\n[window]\npost = 18\n").unwrap();
    let json = dir.path().join("r.json");
    let o = run(&[
        "detect",
        &file("lr-01.csv"),
        "--rho",
        "0.2",
        "--epsilon-m",
        "0.12",
        "--config",
        cfg.to_str().unwrap(),
        "--report",
        json.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 2 | 3)), "{}", stderr(&o));
    let c = from_json(&std::fs::read_to_string(&json).unwrap()).unwrap().config;
    assert_eq!(c.rho, 0.35);
    assert_eq!(c.epsilon_m, 0.12);
    assert_eq!(c.window.post, 18);
    assert_eq!(c.window.pre, PipelineConfig::default().window.pre);
    let echoed = stderr(&o);
    assert!(echoed.contains("rho = 0.35") && echoed.contains("epsilon_m = 0.12") && echoed.contains("interval = 16"));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("r{k}.json"))).collect();
    for p in &paths {
        run(&["detect", &file("iso-04.csv"), "--report", p.to_str().unwrap()]);
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
}

#[test]
fn json_report_round_trips_field_by_field() {
    let report = hifid_cli::app::analyse_file(&corpus().join("res-04.csv"), &PipelineConfig::default()).unwrap();
    let back = from_json(&to_json(&report).unwrap()).unwrap();
    let mut stripped = report.clone();
    stripped.u0b_slopes = None;
    stripped.channels.iter_mut().for_each(|c| c.slopes = None);
    assert_eq!(back, stripped);
    assert!(!back.identification.as_ref().unwrap().samples.is_empty());
}

#[test]
fn foreign_schema_is_rejected() {
    let report = hifid_cli::app::analyse_file(&corpus().join("res-02.csv"), &PipelineConfig::default()).unwrap();
    let text = to_json(&report).unwrap().replacen(SCHEMA_VERSION, "0.0-other", 1);
    assert!(from_json(&text).unwrap_err().to_string().contains("schema"));
}

fn read_columns(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn plot_data_lines_up_with_the_waveforms() {
    let path = corpus().join("lr-03.csv");
    let cfg = PipelineConfig::default();
    let report = hifid_cli::app::analyse_file(&path, &cfg).unwrap();
    let record = ingest_csv(&path, IngestDefaults { fs: 6400.0, f0: 50.0, neutral: None }).unwrap().record;
    let dir = tempfile::tempdir().unwrap();
    let written = emit_plot_data(&report, &record, dir.path()).unwrap();
    // one file per channel plus the INDEX stream
    assert_eq!(written.len(), record.feeders().len() + 2);
    for (id, s) in record.feeders() {
        let (header, rows) = read_columns(&dir.path().join(format!("{id}.csv")));
        assert_eq!(header.len(), 8);
        assert_eq!(rows.len(), s.len());
        let raw: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(raw, s.values());
        // slopes recomputed from the emitted waveform match the emitted column
        let again = interval_slope_series(&s.with_values(raw), id.as_str(), &cfg.slope_config()).unwrap();
        for (n, row) in rows.iter().enumerate() {
            match row[3].as_str() {
                "" => assert!(!again.valid.contains(&n)),
                v => assert!((v.parse::<f64>().unwrap() - again.slopes[n]).abs() < 1e-9),
            }
        }
        let plain_cfg = SlopeConfig { refit: hifid_core::RefitConfig::disabled(), ..cfg.slope_config() };
        let plain = interval_slope_series(s, id.as_str(), &plain_cfg).unwrap();
        let defined = rows.iter().enumerate().filter(|(_, r)| !r[4].is_empty()).count();
        assert_eq!(defined, plain.valid.len());
    }
    let faulty = dir.path().join("F1.csv");
    let (_, rows) = read_columns(&faulty);
    assert!(rows.iter().any(|r| r[6] == "1") && rows.iter().any(|r| r[7] == "1"));
    assert!(rows.iter().any(|r| !r[5].is_empty()));
}

#[test]
fn oracle_verb_reports_every_draw() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("o.csv");
    let o = run(&["oracle", "--neutral", "low_resistor", "--draws", "3", "--out", dump.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("worst") && !text.contains("above 1%"), "{text}");
    let (_, rows) = read_columns(&dump);
    assert_eq!(rows.len(), 3 * 5 * 128);
    assert_eq!(run(&["oracle", "--neutral", "isolated"]).status.code(), Some(1));
}
