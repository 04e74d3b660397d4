//! Acceptance criteria 1 to 11. Prints one PASS/FAIL line per criterion and
//! exits with a failure status if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sparsecov::estimators::{estimate, psd_project, EstimatorSpec};
use sparsecov::losses::{bregman_divergence, closed_form_divergence, LossSpec, Phi};
use sparsecov::lower_bound::{
    assemble_lower_bound, chi_square_mixture_bound, cross_product_integral, exact_chi_square_small,
    overlap_distribution, overlap_structure, row_mixtures, tv_affinity_mc, AffinityEstimate, CHI_SQUARE_TARGET,
};
use sparsecov::model::{sample_theta, LeastFavorableConfig};
use sparsecov::risk::{
    rate_fit, run_grid, run_risk_cell, write_csv, GridConfig, Pairing, RiskRecord, TruthFamily, TruthMatrix,
};
use sparsecov::sampling::{mle_covariance, sample_gaussian, RngSeed};
use sparsecov::{NormIndex, SymmetricMatrix};

use common::{random_spd, random_symmetric, to_na};

const GRID_N: [usize; 4] = [200, 400, 800, 1600];
const REPLICATES: usize = 200;
const MASTER_SEED: u64 = 20_240_601;
const BUDGET: u64 = 10_000_000;

type Outcome = (bool, String);

fn q0_grid(threads: usize) -> GridConfig {
    GridConfig {
        n: GRID_N.to_vec(),
        p: Vec::new(),
        pairing: Pairing::Zip,
        q: vec![0.0],
        c: vec![4.0],
        truth: TruthFamily::BlockBanded { block: 5, rho: 0.65 },
        estimators: vec![EstimatorSpec::hard(2.0)],
        losses: vec![LossSpec::operator(NormIndex::Two), LossSpec::frobenius_squared(true)],
        replicates: REPLICATES,
        master_seed: MASTER_SEED,
        threads: Some(threads),
        record_wall_time: false,
    }
}

fn q0_records() -> &'static (Vec<RiskRecord>, f64) {
    static CELL: OnceLock<(Vec<RiskRecord>, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let recs = run_grid(&q0_grid(1)).expect("q = 0 grid runs");
        (recs, start.elapsed().as_secs_f64())
    })
}

fn by_loss(records: &[RiskRecord], loss: &LossSpec) -> Vec<RiskRecord> {
    records.iter().filter(|r| &r.loss == loss).cloned().collect()
}

fn csv_bytes(records: &[RiskRecord], loss: &LossSpec) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&by_loss(records, loss), &mut buf).expect("csv export");
    buf
}

fn slope_check(records: &[RiskRecord], target: f64, tol: f64) -> Outcome {
    match rate_fit(records) {
        Ok(fit) => {
            let risks: Vec<String> = records.iter().map(|r| format!("{:.4e}", r.mean_risk)).collect();
            let ok = (fit.slope - target).abs() <= tol && (fit.target_exponent - target).abs() < 1e-12;
            (
                ok,
                format!(
                    "slope {:.4} (target {target} ± {tol}), r² {:.4}, risks [{}]",
                    fit.slope,
                    fit.r_squared,
                    risks.join(", ")
                ),
            )
        }
        Err(e) => (false, format!("rate fit failed: {e}")),
    }
}

fn criterion_1() -> Outcome {
    let (recs, secs) = q0_records();
    let (ok, msg) = slope_check(&by_loss(recs, &LossSpec::operator(NormIndex::Two)), 1.0, 0.25);
    (ok && *secs <= 600.0, format!("spectral {msg}; grid time {secs:.1} s"))
}

fn criterion_2() -> Outcome {
    let (recs, _) = q0_records();
    let (ok0, msg0) = slope_check(&by_loss(recs, &LossSpec::frobenius_squared(true)), 1.0, 0.25);
    let start = Instant::now();
    let cfg = GridConfig {
        q: vec![0.5],
        c: vec![2.0],
        truth: TruthFamily::CappedPolynomial { kappa: 1.0 },
        losses: vec![LossSpec::frobenius_squared(true)],
        ..q0_grid(1)
    };
    let (ok5, msg5) = match run_grid(&cfg) {
        Ok(recs) => slope_check(&recs, 0.75, 0.25),
        Err(e) => (false, format!("q = 0.5 grid failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    (
        ok0 && ok5,
        format!("q=0: {msg0}; q=0.5: {msg5}; q=0.5 grid time {secs:.1} s"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let p = 1 + i % 8;
        let x = random_spd(p, 0.5, 4.0, &mut rng);
        let y = random_spd(p, 0.5, 4.0, &mut rng);
        for phi in [Phi::Stein, Phi::VonNeumann, Phi::SquaredFrobenius] {
            let a = bregman_divergence(&x, &y, &phi).expect("divergence");
            let b = closed_form_divergence(&x, &y, &phi).expect("closed form");
            let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    (worst <= 1e-8, format!("max relative error {worst:.3e} over 300 comparisons"))
}

/// Monte Carlo `∫ g₁g₂/g₀` from draws of `g₀`, using nalgebra factorisations.
fn mc_cross_product(s0: &SymmetricMatrix, s1: &SymmetricMatrix, s2: &SymmetricMatrix, seed: u64) -> f64 {
    let p = s0.dim();
    let chol0 = to_na(s0).cholesky().unwrap();
    let l0 = chol0.l();
    let prec = |s: &SymmetricMatrix| {
        let c = to_na(s).cholesky().unwrap();
        (c.inverse(), c.determinant().ln())
    };
    let (p0, ld0) = prec(s0);
    let (p1, ld1) = prec(s1);
    let (p2, ld2) = prec(s2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..samples {
        let z = nalgebra::DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let x = &l0 * z;
        let quad = |m: &DMatrix<f64>| (x.transpose() * m * &x)[(0, 0)];
        // log g₁ + log g₂ − 2 log g₀; the 2π terms cancel
        let log_ratio = -0.5 * (ld1 + quad(&p1)) - 0.5 * (ld2 + quad(&p2)) + (ld0 + quad(&p0));
        acc += log_ratio.exp();
    }
    acc / samples as f64
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 10 {
        let p = 2 + done % 2;
        let s0 = random_spd(p, 1.0, 2.0, &mut rng);
        let s1 = s0.add(&random_symmetric(p, 0.15, &mut rng)).unwrap();
        let s2 = s0.add(&random_symmetric(p, 0.15, &mut rng)).unwrap();
        let inv = |s: &SymmetricMatrix| to_na(s).try_inverse().unwrap();
        // finite variance of the estimator needs 2S1⁻¹ + 2S2⁻¹ − 3S0⁻¹ ≻ 0
        let var_form = inv(&s1) * 2.0 + inv(&s2) * 2.0 - inv(&s0) * 3.0;
        let min_s = |s: &SymmetricMatrix| s.eigenvalues().unwrap()[p - 1];
        if min_s(&s1) <= 0.0 || min_s(&s2) <= 0.0 || var_form.symmetric_eigenvalues().min() <= 0.0 {
            continue;
        }
        let closed = cross_product_integral(&s0, &s1, &s2).expect("integral converges");
        let mc = mc_cross_product(&s0, &s1, &s2, 400 + done as u64);
        worst = worst.max((closed - mc).abs() / mc);
        done += 1;
    }
    (worst <= 0.02, format!("max relative gap {:.4}% over 10 triples", 100.0 * worst))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

fn criterion_5() -> Outcome {
    let p = 10;
    let eps = 0.1;
    let s0 = SymmetricMatrix::identity(p);
    let member = |cols: &[usize]| {
        SymmetricMatrix::from_fn(p, |i, j| {
            if i == j {
                1.0
            } else if (i == 0 && cols.contains(&j)) || (j == 0 && cols.contains(&i)) {
                eps
            } else {
                0.0
            }
        })
    };
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for k in 1..=3 {
        let patterns: Vec<Vec<usize>> = subsets(p - 1, k)
            .into_iter()
            .map(|s| s.into_iter().map(|c| c + 1).collect())
            .collect();
        for a in &patterns {
            for b in &patterns {
                let j = a.iter().filter(|c| b.contains(c)).count();
                let (s1, s2) = (member(a), member(b));
                let q = (to_na(&s0) - to_na(&s1)) * (to_na(&s0) - to_na(&s2));
                let eig = q.complex_eigenvalues();
                let nonzero: Vec<_> = eig.iter().filter(|z| z.norm() > 1e-12).collect();
                let expected = j as f64 * eps * eps;
                let rank = q.rank(1e-12);
                let lib = overlap_structure(&s0, &s1, &s2).expect("structured triple");
                let ok_oracle = if j == 0 {
                    nonzero.is_empty()
                } else {
                    nonzero.len() == 2 && nonzero.iter().all(|z| (z.re - expected).abs() <= 1e-10 && z.im.abs() <= 1e-10)
                };
                let ok_lib = lib.overlap == j
                    && lib.rank <= 2
                    && lib.nonzero_eigenvalues.len() == if j == 0 { 0 } else { 2 }
                    && lib.nonzero_eigenvalues.iter().all(|v| (v - expected).abs() <= 1e-10);
                if !(ok_oracle && ok_lib && rank <= 2) && bad.len() < 3 {
                    bad.push(format!("k={k} J={j} a={a:?} b={b:?}"));
                }
                checked += 1;
            }
        }
    }
    (
        bad.is_empty(),
        if bad.is_empty() {
            format!("{checked} triples at p = 10, eigenvalues and rank agree")
        } else {
            format!("mismatches: {}", bad.join("; "))
        },
    )
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bound_violations = Vec::new();
    let mut cases = 0;
    for p_lambda in 1..=12usize {
        for k in 0..=4.min(p_lambda) {
            let sets: Vec<u32> = (0u32..1 << p_lambda).filter(|m| m.count_ones() as usize == k).collect();
            let mut counts = vec![0u64; k + 1];
            for a in &sets {
                for b in &sets {
                    counts[(a & b).count_ones() as usize] += 1;
                }
            }
            let total: u64 = counts.iter().sum();
            let dist = overlap_distribution(k, p_lambda).expect("valid arguments");
            for j in 0..=k {
                worst = worst.max((dist[j] - counts[j] as f64 / total as f64).abs());
                if p_lambda > k {
                    let bound = ((k * k) as f64 / (p_lambda - k) as f64).powi(j as i32);
                    if dist[j] > bound * (1.0 + 1e-12) {
                        bound_violations.push(format!("p_λ={p_lambda} k={k} j={j}"));
                    }
                }
            }
            cases += 1;
        }
    }
    (
        worst <= 1e-12 && bound_violations.is_empty(),
        format!(
            "{cases} (p_λ, k) cases, max deviation {worst:.2e}, bound violations {}",
            if bound_violations.is_empty() { "none".to_string() } else { bound_violations.join(", ") }
        ),
    )
}

fn tiny_cfg() -> LeastFavorableConfig {
    let cfg = LeastFavorableConfig::build(8, 20, 0.0, 4.0, 0.1).expect("tiny config");
    assert_eq!((cfg.r, cfg.k), (4, 1));
    cfg
}

fn exact_chi() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| exact_chi_square_small(&tiny_cfg(), 20, BUDGET).expect("exact chi-square"))
}

fn measured_affinity() -> AffinityEstimate {
    static CELL: OnceLock<AffinityEstimate> = OnceLock::new();
    *CELL.get_or_init(|| {
        let cfg = tiny_cfg();
        let (p0, p1) = row_mixtures(&cfg, 0, cfg.n, BUDGET).expect("mixtures");
        tv_affinity_mc(&p0, &p1, 100_000, RngSeed::new(8)).expect("affinity")
    })
}

fn criterion_7() -> Outcome {
    let cfg = tiny_cfg();
    let exact = exact_chi();
    let env = chi_square_mixture_bound(&cfg);
    match env.value {
        Some(v) => (
            exact <= v && exact < CHI_SQUARE_TARGET && v < CHI_SQUARE_TARGET,
            format!("exact {exact:.6e}, envelope {v:.6e}"),
        ),
        None => (
            false,
            format!(
                "exact {exact:.6e} < 3/4, but the envelope diverges: p/4 - 1 - k = {} gives ratio {}",
                cfg.p as f64 / 4.0 - 1.0 - cfg.k as f64,
                env.ratio
            ),
        ),
    }
}

fn criterion_8() -> Outcome {
    let exact = exact_chi();
    let a = measured_affinity();
    let floor = 1.0 - exact.sqrt() - 3.0 * a.std_error;
    (
        a.value >= floor,
        format!(
            "affinity {:.6} ± {:.2e} vs 1 - sqrt(chi²) - 3 SE = {floor:.6}",
            a.value, a.std_error
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut indefinite = 0;
    let mut worst_ratio: f64 = 0.0;
    for i in 0..100u64 {
        let p = 12 + (i as usize % 4) * 4;
        let sigma = random_spd(p, 0.5, 4.0, &mut rng);
        let n = 8 + (i as usize % 5) * 4;
        let x = sample_gaussian(&sigma, n, RngSeed::with_stream(9, i)).unwrap();
        let s = mle_covariance(&x);
        let gamma = 0.25 + 0.25 * (i % 6) as f64;
        let raw = estimate(&s, &EstimatorSpec::hard(gamma), n).unwrap();
        let fixed = psd_project(&raw).unwrap();
        if raw.eigenvalues().unwrap()[p - 1] < 0.0 {
            indefinite += 1;
        }
        let e_raw = raw.sub(&sigma).unwrap().operator_norm(NormIndex::Two).unwrap();
        let e_psd = fixed.sub(&sigma).unwrap().operator_norm(NormIndex::Two).unwrap();
        if e_psd > 2.0 * e_raw + 1e-10 {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(e_psd / e_raw);
    }
    (
        violations == 0,
        format!("{violations} violations in 100 instances ({indefinite} indefinite), max ratio {worst_ratio:.4}"),
    )
}

fn criterion_10() -> Outcome {
    let cfg = tiny_cfg();
    let affinity = measured_affinity();
    let bound = assemble_lower_bound(&cfg, affinity.value);
    let est = EstimatorSpec::hard(2.0);
    let loss = LossSpec::operator(NormIndex::Two);
    let mut worst: Option<RiskRecord> = None;
    for t in 0..24u64 {
        let theta = sample_theta(&cfg, RngSeed::with_stream(10, t)).unwrap();
        let truth = TruthMatrix::explicit(format!("theta-{t}"), cfg.materialize_sigma(&theta).unwrap());
        let rec = run_risk_cell(&truth, &est, &loss, cfg.n, 400, RngSeed::with_stream(1010, t)).unwrap();
        if worst.as_ref().is_none_or(|w| rec.mean_risk > w.mean_risk) {
            worst = Some(rec);
        }
    }
    let worst = worst.unwrap();
    (
        bound <= worst.mean_risk + 3.0 * worst.std_error,
        format!(
            "lower bound {bound:.4e} vs max risk over 24 members {:.4e} ± {:.2e}",
            worst.mean_risk, worst.std_error
        ),
    )
}

fn criterion_11() -> Outcome {
    let (single, _) = q0_records();
    let start = Instant::now();
    let multi = match run_grid(&q0_grid(8)) {
        Ok(r) => r,
        Err(e) => return (false, format!("8-thread grid failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let same = [LossSpec::operator(NormIndex::Two), LossSpec::frobenius_squared(true)]
        .iter()
        .all(|l| csv_bytes(single, l) == csv_bytes(&multi, l));
    (same, format!("CSV bytes identical under 1 and 8 threads: {same}; 8-thread run {secs:.1} s"))
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        let start = Instant::now();
        let (ok, detail) = run();
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {id}: {detail} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {} passed, {} failed{}",
        11 - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
