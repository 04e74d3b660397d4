use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LeastFavorableConfig;
use crate::error::{Error, Result};
use crate::sampling::RngSeed;

/// Rejection attempts before `sample_theta` gives up.
pub const MAX_REJECTION_ATTEMPTS: u64 = 10_000_000;

// Histogram states kept by the Λ-counting recursion before it gives up.
const MAX_COUNT_STATES: usize = 500_000;

/// One parameter θ = (γ, λ). Column indices in `lambda` are 1-based and lie in
/// `{p - r + 1, …, p}`; each row is strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThetaIndex {
    pub gamma: Vec<u8>,
    pub lambda: Vec<Vec<usize>>,
}

impl ThetaIndex {
    pub fn new(gamma: Vec<u8>, lambda: Vec<Vec<usize>>) -> Self {
        Self { gamma, lambda }
    }

    /// Number of positions where the γ parts differ.
    pub fn hamming(&self, other: &ThetaIndex) -> usize {
        self.gamma.iter().zip(&other.gamma).filter(|(a, b)| a != b).count()
    }

    pub fn validate(&self, cfg: &LeastFavorableConfig) -> Result<()> {
        let (r, k) = (cfg.r, cfg.k);
        if self.gamma.len() != r {
            return Err(Error::InvalidArgument(format!(
                "theta: gamma has length {}, expected r = {r}",
                self.gamma.len()
            )));
        }
        if let Some(b) = self.gamma.iter().find(|b| **b > 1) {
            return Err(Error::InvalidArgument(format!("theta: gamma entry {b} is not a bit")));
        }
        if self.lambda.len() != r {
            return Err(Error::InvalidArgument(format!(
                "theta: lambda has {} rows, expected r = {r}",
                self.lambda.len()
            )));
        }
        let lo = cfg.first_pattern_column();
        let mut counts = vec![0usize; r];
        for (m, row) in self.lambda.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidArgument(format!(
                    "theta: row {} has {} indices, expected k = {k}",
                    m + 1,
                    row.len()
                )));
            }
            for (idx, &col) in row.iter().enumerate() {
                if col < lo || col > cfg.p {
                    return Err(Error::InvalidArgument(format!(
                        "theta: row {} uses column {col} outside {lo}..={}",
                        m + 1,
                        cfg.p
                    )));
                }
                if idx > 0 && row[idx - 1] >= col {
                    return Err(Error::InvalidArgument(format!(
                        "theta: row {} is not strictly increasing",
                        m + 1
                    )));
                }
                counts[col - lo] += 1;
            }
        }
        if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n > 2 * k) {
            return Err(Error::InvalidArgument(format!(
                "theta: column {} is used by {n} rows, more than 2k = {}",
                c + lo,
                2 * k
            )));
        }
        Ok(())
    }
}

/// Draws θ uniformly: γ bits are fair coins and λ is uniform over Λ by
/// rejecting whole tuples that break the column-sum constraint.
pub fn sample_theta(cfg: &LeastFavorableConfig, seed: RngSeed) -> Result<ThetaIndex> {
    let mut rng = seed.rng();
    let (r, k) = (cfg.r, cfg.k);
    let lo = cfg.first_pattern_column();
    let gamma: Vec<u8> = (0..r).map(|_| rng.random::<bool>() as u8).collect();
    let mut counts = vec![0usize; r];
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut lambda = Vec::with_capacity(r);
        let mut ok = true;
        for _ in 0..r {
            let mut row: Vec<usize> = index::sample(&mut rng, r, k).into_iter().collect();
            row.sort_unstable();
            for &c in &row {
                counts[c] += 1;
                ok &= counts[c] <= 2 * k;
            }
            lambda.push(row.into_iter().map(|c| c + lo).collect());
        }
        if ok {
            return Ok(ThetaIndex { gamma, lambda });
        }
    }
    Err(Error::BudgetExceeded {
        what: "rejection sampling of lambda".into(),
        count: format!("more than {MAX_REJECTION_ATTEMPTS} attempts"),
        budget: MAX_REJECTION_ATTEMPTS,
    })
}

/// Size of Λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaCount {
    Exact(u128),
    /// Too many states (or too large a number) to count exactly.
    Unknown,
}

/// Counts Λ exactly by a recursion over rows whose state is the histogram of
/// column usage counts (columns are exchangeable, so only the histogram matters).
pub fn count_lambda(cfg: &LeastFavorableConfig) -> LambdaCount {
    let (r, k) = (cfg.r, cfg.k);
    if k == 0 {
        return LambdaCount::Exact(1);
    }
    let cap = 2 * k;
    let mut start = vec![0u32; cap + 1];
    start[0] = r as u32;
    let mut states: BTreeMap<Vec<u32>, u128> = BTreeMap::new();
    states.insert(start, 1);
    let binom = binomial_table(r);
    for _ in 0..r {
        let mut next: BTreeMap<Vec<u32>, u128> = BTreeMap::new();
        for (hist, &ways) in &states {
            let mut pick = vec![0u32; cap + 1];
            let mut overflow = false;
            distribute(hist, &mut pick, 0, k as u32, &mut |pick| {
                let mut mult: u128 = ways;
                for c in 0..cap {
                    if pick[c] > 0 {
                        match mult.checked_mul(binom[hist[c] as usize][pick[c] as usize]) {
                            Some(v) => mult = v,
                            None => {
                                overflow = true;
                                return;
                            }
                        }
                    }
                }
                let mut h = hist.clone();
                for c in 0..cap {
                    h[c] -= pick[c];
                    h[c + 1] += pick[c];
                }
                let entry = next.entry(h).or_insert(0);
                match entry.checked_add(mult) {
                    Some(v) => *entry = v,
                    None => overflow = true,
                }
            });
            if overflow || next.len() > MAX_COUNT_STATES {
                return LambdaCount::Unknown;
            }
        }
        states = next;
    }
    let mut total: u128 = 0;
    for v in states.values() {
        match total.checked_add(*v) {
            Some(t) => total = t,
            None => return LambdaCount::Unknown,
        }
    }
    LambdaCount::Exact(total)
}

// Enumerates ways to take `remaining` columns from usage classes c.. (class 2k excluded).
fn distribute(hist: &[u32], pick: &mut [u32], class: usize, remaining: u32, f: &mut impl FnMut(&[u32])) {
    let cap = hist.len() - 1;
    if remaining == 0 {
        f(pick);
        return;
    }
    if class >= cap {
        return;
    }
    let most = remaining.min(hist[class]);
    for x in (0..=most).rev() {
        pick[class] = x;
        distribute(hist, pick, class + 1, remaining - x, f);
    }
    pick[class] = 0;
}

fn binomial_table(n: usize) -> Vec<Vec<u128>> {
    let mut t = vec![vec![0u128; n + 1]; n + 1];
    for i in 0..=n {
        t[i][0] = 1;
        for j in 1..=i {
            t[i][j] = t[i - 1][j - 1].saturating_add(if j < i { t[i - 1][j] } else { 0 });
        }
    }
    t
}

/// `|Θ| = 2^r·|Λ|` when it fits in a u128.
pub(crate) fn theta_count(cfg: &LeastFavorableConfig) -> Option<u128> {
    let lambda = match count_lambda(cfg) {
        LambdaCount::Exact(v) => v,
        LambdaCount::Unknown => return None,
    };
    if cfg.r >= 128 {
        return None;
    }
    lambda.checked_mul(1u128 << cfg.r)
}

fn describe(count: Option<u128>, r: usize) -> String {
    match count {
        Some(c) => c.to_string(),
        None => format!("more than 2^{r} (too large to count exactly)"),
    }
}

/// All of Λ in lexicographic order (rows compared left to right, each row as
/// its increasing index list).
pub fn enumerate_lambda(cfg: &LeastFavorableConfig, budget: u64) -> Result<Vec<Vec<Vec<usize>>>> {
    let count = match count_lambda(cfg) {
        LambdaCount::Exact(c) if c <= budget as u128 => c as usize,
        LambdaCount::Exact(c) => {
            return Err(Error::BudgetExceeded {
                what: "enumerating lambda".into(),
                count: c.to_string(),
                budget,
            })
        }
        LambdaCount::Unknown => {
            return Err(Error::BudgetExceeded {
                what: "enumerating lambda".into(),
                count: "too large to count exactly".into(),
                budget,
            })
        }
    };
    let (r, k) = (cfg.r, cfg.k);
    let lo = cfg.first_pattern_column();
    let combos: Vec<Vec<usize>> = combinations(r, k);
    let mut out = Vec::with_capacity(count);
    let mut counts = vec![0usize; r];
    let mut current: Vec<usize> = Vec::with_capacity(r);
    fn walk(
        depth: usize,
        r: usize,
        k: usize,
        combos: &[Vec<usize>],
        counts: &mut [usize],
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if depth == r {
            out.push(current.clone());
            return;
        }
        for (ci, combo) in combos.iter().enumerate() {
            if combo.iter().any(|&c| counts[c] >= 2 * k) {
                continue;
            }
            combo.iter().for_each(|&c| counts[c] += 1);
            current.push(ci);
            walk(depth + 1, r, k, combos, counts, current, out);
            current.pop();
            combo.iter().for_each(|&c| counts[c] -= 1);
        }
    }
    let mut picks = Vec::with_capacity(count);
    if k == 0 {
        picks.push(vec![0; r]);
    } else {
        walk(0, r, k, &combos, &mut counts, &mut current, &mut picks);
    }
    debug_assert_eq!(picks.len(), count);
    for pick in picks {
        out.push(
            pick.iter()
                .map(|&ci| combos[ci].iter().map(|c| c + lo).collect())
                .collect(),
        );
    }
    Ok(out)
}

/// k-subsets of `0..r` in lexicographic order (one empty subset when k = 0).
pub(crate) fn combinations(r: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > r {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < r - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Every θ in lexicographic order: γ (as a bit string) outermost, then λ.
/// Fails with the exact count when `2^r·|Λ|` exceeds `budget`.
pub fn enumerate_theta(cfg: &LeastFavorableConfig, budget: u64) -> Result<Vec<ThetaIndex>> {
    let count = theta_count(cfg);
    match count {
        Some(c) if c <= budget as u128 => {}
        _ => {
            return Err(Error::BudgetExceeded {
                what: "enumerating theta".into(),
                count: describe(count, cfg.r),
                budget,
            })
        }
    }
    let lambdas = enumerate_lambda(cfg, budget)?;
    let r = cfg.r;
    let mut out = Vec::with_capacity(count.unwrap_or(0) as usize);
    for bits in 0u64..(1u64 << r) {
        let gamma: Vec<u8> = (0..r).map(|m| ((bits >> (r - 1 - m)) & 1) as u8).collect();
        for lambda in &lambdas {
            out.push(ThetaIndex {
                gamma: gamma.clone(),
                lambda: lambda.clone(),
            });
        }
    }
    Ok(out)
}
