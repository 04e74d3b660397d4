use serde::{Deserialize, Serialize};

use super::{run_risk_cell_multi, RiskRecord, TruthFamily};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::losses::LossSpec;
use crate::sampling::RngSeed;

/// How the `n` and `p` lists combine into cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// `n[i]` with `p[i]`; an empty `p` list means `p = n`.
    #[default]
    Zip,
    /// Every `n` with every `p`.
    Product,
}

fn default_q() -> Vec<f64> {
    vec![0.0]
}

fn default_estimators() -> Vec<EstimatorSpec> {
    vec![EstimatorSpec::default()]
}

/// A simulation grid as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    #[serde(default)]
    pub p: Vec<usize>,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default = "default_q")]
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub truth: TruthFamily,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    pub losses: Vec<LossSpec>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Worker threads; the rayon default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub record_wall_time: bool,
}

/// One `(q, c, n, p)` point of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub index: usize,
    pub q: f64,
    pub c: f64,
    pub n: usize,
    pub p: usize,
}

impl GridCell {
    /// Seed of the cell: the master seed on stream `index`.
    pub fn seed(&self, master: u64) -> RngSeed {
        RngSeed::with_stream(master, self.index as u64)
    }
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GridConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.c.is_empty() || self.q.is_empty() {
            return Err(Error::Config("grid has no cells: n, q and c must be non-empty".into()));
        }
        if self.losses.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("grid needs at least one estimator and one loss".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.pairing == Pairing::Zip && !self.p.is_empty() && self.p.len() != self.n.len() {
            return Err(Error::Config(format!(
                "zip pairing needs as many p values as n values ({} vs {})",
                self.p.len(),
                self.n.len()
            )));
        }
        if self.pairing == Pairing::Product && self.p.is_empty() {
            return Err(Error::Config("product pairing needs a p list".into()));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("sample sizes must be at least 2, got {n}")));
        }
        if let Some(&p) = self.p.iter().find(|&&p| p < 2) {
            return Err(Error::Config(format!("dimensions must be at least 2, got {p}")));
        }
        for &q in &self.q {
            if !(0.0..1.0).contains(&q) {
                return Err(Error::Config(format!("q must lie in [0, 1), got {q}")));
            }
        }
        for &c in &self.c {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("c must be positive, got {c}")));
            }
        }
        for e in &self.estimators {
            e.validate()?;
        }
        Ok(())
    }

    /// Cells in run order: `q` outermost, then `c`, then `(n, p)`.
    pub fn cells(&self) -> Vec<GridCell> {
        let sizes: Vec<(usize, usize)> = match self.pairing {
            Pairing::Zip if self.p.is_empty() => self.n.iter().map(|&n| (n, n)).collect(),
            Pairing::Zip => self.n.iter().copied().zip(self.p.iter().copied()).collect(),
            Pairing::Product => self
                .n
                .iter()
                .flat_map(|&n| self.p.iter().map(move |&p| (n, p)))
                .collect(),
        };
        let mut cells = Vec::new();
        for &q in &self.q {
            for &c in &self.c {
                for &(n, p) in &sizes {
                    cells.push(GridCell {
                        index: cells.len(),
                        q,
                        c,
                        n,
                        p,
                    });
                }
            }
        }
        cells
    }
}

/// Runs every cell of `cfg` on a dedicated pool of `cfg.threads` workers.
///
/// Cells run in order; replicates inside a cell run in parallel with
/// per-replicate seeds, so the records are identical for any thread count.
pub fn run_grid(cfg: &GridConfig) -> Result<Vec<RiskRecord>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let mut out = Vec::new();
        for cell in cfg.cells() {
            let seed = cell.seed(cfg.master_seed);
            // the truth draws from a stream no replicate uses
            let truth = cfg
                .truth
                .materialize(cell.q, cell.c, cell.n, cell.p, seed.replicate(u64::MAX))?;
            out.extend(run_risk_cell_multi(
                &truth,
                &cfg.estimators,
                &cfg.losses,
                cell.n,
                cfg.replicates,
                seed,
                &cell.index.to_string(),
                cfg.record_wall_time,
            )?);
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "n": [40, 80, 160],
        "c": [4.0],
        "truth": {"family": "block-banded", "block": 5, "rho": 0.65},
        "losses": [{"kind": "operator", "w": "2"}, {"kind": "frobenius-squared", "normalized": true}],
        "replicates": 4,
        "master_seed": 11
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = GridConfig::from_json(SMALL).unwrap();
        assert_eq!(cfg.q, vec![0.0]);
        assert_eq!(cfg.estimators, vec![EstimatorSpec::hard(2.0)]);
        let cells = cfg.cells();
        assert_eq!(cells.len(), 3);
        assert_eq!((cells[2].n, cells[2].p), (160, 160));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let text = SMALL.replace("[40, 80, 160]", "[]");
        assert!(matches!(GridConfig::from_json(&text), Err(Error::Config(_))));
        let text = SMALL.replace("\"replicates\": 4", "\"replicates\": 0");
        assert!(GridConfig::from_json(&text).is_err());
    }

    #[test]
    fn product_pairing() {
        let mut cfg = GridConfig::from_json(SMALL).unwrap();
        cfg.pairing = Pairing::Product;
        cfg.p = vec![10, 20];
        cfg.q = vec![0.0, 0.5];
        assert_eq!(cfg.cells().len(), 12);
        assert_eq!(cfg.cells()[11].index, 11);
    }

    #[test]
    fn grid_records_are_ordered() {
        let cfg = GridConfig::from_json(SMALL).unwrap();
        let recs = run_grid(&cfg).unwrap();
        assert_eq!(recs.len(), 6);
        let ids: Vec<_> = recs.iter().map(|r| r.cell_id.as_str()).collect();
        assert_eq!(ids, ["0.0.0", "0.0.1", "1.0.0", "1.0.1", "2.0.0", "2.0.1"]);
    }
}
