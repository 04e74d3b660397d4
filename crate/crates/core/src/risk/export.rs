use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RiskRecord;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, GuardReading, ThresholdRule};
use crate::losses::{LossKind, LossSpec, Phi};
use crate::matrix::NormIndex;
use crate::sampling::RngSeed;

/// Column order of the CSV export.
pub const CSV_COLUMNS: [&str; 14] = [
    "cell_id",
    "n",
    "p",
    "q",
    "c",
    "rule",
    "gamma",
    "loss_kind",
    "w_or_phi",
    "replicates",
    "mean_risk",
    "std_error",
    "seed",
    "wall_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Parse(format!("unknown export format '{other}'"))),
        }
    }
}

/// Writes `records` to `path` in the given format.
pub fn export(records: &[RiskRecord], format: ExportFormat, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        ExportFormat::Csv => write_csv(records, file),
        ExportFormat::Json => write_json(records, file),
    }
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Threshold rule and corrections, e.g. `hard`, `alasso:3+psd+guard-min`.
fn rule_descriptor(e: &EstimatorSpec) -> String {
    let mut s = match e.rule {
        ThresholdRule::AdaptiveLasso { eta } => format!("alasso:{eta}"),
        r => r.name().to_string(),
    };
    if e.keep_diagonal {
        s.push_str("+diag");
    }
    if e.psd_project {
        s.push_str("+psd");
    }
    if e.bregman_guard {
        s.push_str(match e.guard_reading {
            GuardReading::BothEigenvalues => "+guard",
            GuardReading::LambdaMinOnly => "+guard-min",
        });
    }
    s
}

fn parse_rule(descriptor: &str, gamma: f64) -> Result<EstimatorSpec> {
    let mut parts = descriptor.split('+');
    let head = parts.next().unwrap_or_default();
    let rule = match head.split_once(':') {
        Some(("alasso", eta)) => ThresholdRule::AdaptiveLasso {
            eta: eta.parse().map_err(|_| Error::Parse(format!("bad eta in rule '{descriptor}'")))?,
        },
        None if head == "hard" => ThresholdRule::Hard,
        None if head == "soft" => ThresholdRule::Soft,
        _ => return Err(Error::Parse(format!("unknown rule '{descriptor}'"))),
    };
    let mut spec = EstimatorSpec::new(rule, gamma)?;
    for flag in parts {
        match flag {
            "diag" => spec.keep_diagonal = true,
            "psd" => spec.psd_project = true,
            "guard" => spec.bregman_guard = true,
            "guard-min" => {
                spec.bregman_guard = true;
                spec.guard_reading = GuardReading::LambdaMinOnly;
            }
            other => return Err(Error::Parse(format!("unknown correction '{other}'"))),
        }
    }
    Ok(spec)
}

fn loss_kind_column(loss: &LossSpec) -> String {
    if loss.normalized && !matches!(loss.kind, LossKind::Operator(_)) {
        format!("{}/p", loss.kind_name())
    } else {
        loss.kind_name().to_string()
    }
}

fn parse_loss(kind: &str, qualifier: &str) -> Result<LossSpec> {
    let (base, normalized) = match kind.strip_suffix("/p") {
        Some(b) => (b, true),
        None => (kind, false),
    };
    let bad = || Error::Parse(format!("unknown loss '{kind}' / '{qualifier}'"));
    Ok(match base {
        "operator" => LossSpec::operator(qualifier.parse::<NormIndex>().map_err(|_| bad())?),
        "frobenius-squared" => LossSpec::frobenius_squared(normalized),
        "bregman" => {
            let phi = match qualifier {
                "stein" => Phi::Stein,
                "von-neumann" => Phi::VonNeumann,
                "squared-frobenius" => Phi::SquaredFrobenius,
                _ => return Err(bad()),
            };
            LossSpec::bregman(phi, normalized)
        }
        _ => return Err(bad()),
    })
}

/// Writes one row per record in [`CSV_COLUMNS`] order with 17 significant
/// digits. All records must share one loss.
pub fn write_csv<W: Write>(records: &[RiskRecord], out: W) -> Result<()> {
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.loss != first.loss) {
            return Err(Error::Schema(format!(
                "CSV export holds a single loss; found {} and {}",
                first.loss.label(),
                other.loss.label()
            )));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.cell_id.clone(),
            r.n.to_string(),
            r.p.to_string(),
            r.q.map(number).unwrap_or_default(),
            r.c.map(number).unwrap_or_default(),
            rule_descriptor(&r.estimator),
            number(r.estimator.gamma),
            loss_kind_column(&r.loss),
            r.loss.qualifier(),
            r.replicates.to_string(),
            number(r.mean_risk),
            number(r.std_error),
            format!("{}:{}", r.seed.seed, r.seed.stream),
            number(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_csv`]. Fields the CSV does not carry
/// (model, failures, median) come back empty.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RiskRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Schema(format!(
            "expected columns {}, found {}",
            CSV_COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let ctx = |col: &str| Error::Parse(format!("row {}: bad {col}", line + 1));
        let float = |i: usize| row[i].parse::<f64>().map_err(|_| ctx(CSV_COLUMNS[i]));
        let opt = |i: usize| -> Result<Option<f64>> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                float(i).map(Some)
            }
        };
        let count = |i: usize| row[i].parse::<usize>().map_err(|_| ctx(CSV_COLUMNS[i]));
        let (seed, stream) = row[12].split_once(':').ok_or_else(|| ctx("seed"))?;
        out.push(RiskRecord {
            cell_id: row[0].to_string(),
            model: String::new(),
            q: opt(3)?,
            c: opt(4)?,
            estimator: parse_rule(&row[5], float(6)?)?,
            loss: parse_loss(&row[7], &row[8])?,
            n: count(1)?,
            p: count(2)?,
            replicates: count(9)?,
            failures: 0,
            mean_risk: float(10)?,
            std_error: float(11)?,
            median_risk: None,
            seed: RngSeed::with_stream(
                seed.parse().map_err(|_| ctx("seed"))?,
                stream.parse().map_err(|_| ctx("seed"))?,
            ),
            wall_time: float(13)?,
        });
    }
    Ok(out)
}

pub fn write_json<W: Write>(records: &[RiskRecord], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, records)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<RiskRecord>> {
    Ok(serde_json::from_reader(input)?)
}
