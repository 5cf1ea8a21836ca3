use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::run::RunRecord;
use crate::bounds::CertificateRecord;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 11] = [
    "task",
    "scheme",
    "objective",
    "n",
    "train_error",
    "test_error",
    "pb_bound",
    "upper_bound",
    "kl",
    "certified_gap",
    "vacuous",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" => Ok(ReportFormat::Md),
            other => Err(Error::Format(format!("unknown report format `{other}` (csv, json, md)"))),
        }
    }
}

fn csv_row(r: &CertificateRecord) -> [String; 11] {
    [
        r.task.clone(),
        r.provenance.scheme.clone(),
        r.provenance.objective.clone(),
        r.n.to_string(),
        r.train_error.to_string(),
        r.test_error.map(|v| v.to_string()).unwrap_or_default(),
        r.pb_bound.to_string(),
        r.upper_bound.to_string(),
        r.kl_qp.to_string(),
        r.certified_gap.to_string(),
        r.vacuous.to_string(),
    ]
}

fn render_csv(record: &RunRecord) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(COLUMNS).map_err(fail)?;
    for r in &record.records {
        w.write_record(csv_row(r)).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn render_md(record: &RunRecord) -> String {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for r in &record.records {
        let b = best.entry(&r.task).or_insert(f64::INFINITY);
        *b = b.min(r.pb_bound);
    }
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", COLUMNS.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(COLUMNS.len()));
    for r in &record.records {
        let pb = if r.pb_bound == best[r.task.as_str()] {
            format!("**{:.3}**", r.pb_bound)
        } else {
            format!("{:.3}", r.pb_bound)
        };
        let test = r.test_error.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.3} | {} | {} | {:.3} | {:.2} | {:.3} | {} |",
            r.task,
            r.provenance.scheme,
            r.provenance.objective,
            r.n,
            r.train_error,
            test,
            pb,
            r.upper_bound,
            r.kl_qp,
            r.certified_gap,
            r.vacuous
        );
    }
    out
}

pub fn render(record: &RunRecord, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => render_csv(record),
        ReportFormat::Json => {
            serde_json::to_string_pretty(record).map_err(|e| Error::Format(e.to_string()))
        }
        ReportFormat::Md => Ok(render_md(record)),
    }
}

pub fn report(record: &RunRecord, format: ReportFormat, path: &Path) -> Result<()> {
    let text = render(record, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{seeger_certificate, Provenance};

    fn rec(task: &str, objective: &str, train: f64, kl: f64) -> CertificateRecord {
        let cert = seeger_certificate(train, kl, 100, 0.05).unwrap();
        CertificateRecord::from_seeger(
            task,
            train,
            Some(0.1 + train),
            &cert,
            vec![0.5],
            Provenance {
                scheme: "task_arith".into(),
                objective: objective.into(),
                seeds: vec![("mc".into(), 1)],
                config_hash: "abc".into(),
            },
        )
    }

    fn record(records: Vec<CertificateRecord>) -> RunRecord {
        RunRecord {
            scenario: "s".into(),
            config_hash: "abc".into(),
            tool_version: "0".into(),
            wall_time_secs: 0.25,
            records,
        }
    }

    #[test]
    fn empty_record_gives_header_only_csv() {
        let csv = render(&record(vec![]), ReportFormat::Csv).unwrap();
        assert_eq!(csv, format!("{}\n", COLUMNS.join(",")));
    }

    #[test]
    fn csv_follows_the_column_order() {
        let csv = render(&record(vec![rec("t0", "train_risk", 0.2, 1.0)]), ReportFormat::Csv).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[..4], ["t0", "task_arith", "train_risk", "100"]);
        assert_eq!(row[4], "0.2");
        assert_eq!(row[10], "false");
    }

    #[test]
    fn md_bolds_the_best_bound_per_task() {
        let r = record(vec![
            rec("t0", "train_risk", 0.2, 30.0),
            rec("t0", "pac_bayes_upper", 0.25, 1.0),
            rec("t1", "train_risk", 0.1, 1.0),
        ]);
        let md = render(&r, ReportFormat::Md).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert!(!lines[2].contains("**"));
        assert!(lines[3].contains("**"));
        assert!(lines[4].contains("**"));
    }

    #[test]
    fn json_round_trips() {
        let r = record(vec![rec("t0", "ddp", 0.123456789012345, 2.0 / 3.0)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        report(&r, ReportFormat::Json, &path).unwrap();
        assert_eq!(RunRecord::load(&path).unwrap(), r);
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!(matches!("xlsx".parse::<ReportFormat>(), Err(Error::Format(_))));
        assert_eq!("md".parse::<ReportFormat>().unwrap(), ReportFormat::Md);
    }
}
