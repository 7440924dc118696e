use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::run::{Metadata, RunReport};
use crate::Failure;

pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const TIMING_FILE: &str = "timing.json";

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

fn opt(v: Option<impl ToString>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Flat tables rendered from one or more reports: `brackets.csv`,
/// `heatmap.csv`, `traces.csv` and `attribution.csv`.
pub fn write_tables(dir: &Path, reports: &[RunReport]) -> Result<(), Failure> {
    write_csv(
        &dir.join("brackets.csv"),
        &["combination", "pair", "x", "y", "rows", "mine", "club", "delta", "ksg", "weight", "final", "raw_mine", "true_mi"],
        reports.iter().flat_map(|r| {
            r.pairs.iter().map(|p| {
                let b = &p.bracket;
                vec![
                    r.combination.clone(),
                    p.name.clone(),
                    p.x.clone(),
                    p.y.clone(),
                    p.rows.to_string(),
                    num(b.mine),
                    num(b.club),
                    num(b.delta),
                    num(b.ksg),
                    num(b.weight),
                    num(b.final_estimate),
                    num(b.raw_mine),
                    opt(p.true_mi.map(num)),
                ]
            })
        }),
    )?;

    let mut pair_names: Vec<&str> = Vec::new();
    for p in reports.iter().flat_map(|r| &r.pairs) {
        if !pair_names.contains(&p.name.as_str()) {
            pair_names.push(&p.name);
        }
    }
    let mut header = vec!["pair"];
    header.extend(reports.iter().map(|r| r.combination.as_str()));
    write_csv(
        &dir.join("heatmap.csv"),
        &header,
        pair_names.iter().map(|name| {
            let mut row = vec![(*name).to_owned()];
            row.extend(reports.iter().map(|r| {
                opt(r.pairs.iter().find(|p| p.name == *name).map(|p| num(p.bracket.final_estimate)))
            }));
            row
        }),
    )?;

    write_csv(
        &dir.join("traces.csv"),
        &["combination", "pair", "member", "epoch", "mine", "club", "delta", "learning_rate", "early_stop_epoch"],
        reports.iter().flat_map(|r| {
            r.pairs.iter().flat_map(move |p| {
                p.members.iter().flat_map(move |m| {
                    (0..m.epochs()).map(move |e| {
                        vec![
                            r.combination.clone(),
                            p.name.clone(),
                            m.member.to_string(),
                            (e + 1).to_string(),
                            num(m.mine[e]),
                            num(m.club[e]),
                            num(m.delta[e]),
                            num(m.learning_rate[e]),
                            opt(m.early_stop_epoch),
                        ]
                    })
                })
            })
        }),
    )?;

    write_csv(
        &dir.join("attribution.csv"),
        &[
            "combination",
            "dimension",
            "source_mi",
            "filter_mi",
            "source_share",
            "filter_share",
            "ci_low",
            "ci_high",
            "level",
            "bootstrap",
            "bootstrap_valid",
            "floored",
        ],
        reports.iter().flat_map(|r| {
            r.attribution.iter().map(|a| {
                vec![
                    r.combination.clone(),
                    a.dimension.clone(),
                    num(a.source_mi),
                    num(a.filter_mi),
                    num(a.source_share),
                    num(a.filter_share),
                    num(a.ci_low),
                    num(a.ci_high),
                    num(a.level),
                    a.bootstrap.to_string(),
                    a.bootstrap_valid.to_string(),
                    a.floored.to_string(),
                ]
            })
        }),
    )
}

/// Everything a run produces, except the wall-clock timing file.
pub fn write_run(dir: &Path, report: &RunReport, meta: &Metadata) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    write_json(&dir.join(REPORT_FILE), report)?;
    write_json(&dir.join(METADATA_FILE), meta)?;
    let echo = dir.join(CONFIG_ECHO_FILE);
    fs::write(&echo, report.config.to_toml()).map_err(|e| io_failure(&echo, e))?;
    write_tables(dir, std::slice::from_ref(report))
}

pub fn read_report(path: &Path) -> Result<RunReport, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_failure(path, e))
}
