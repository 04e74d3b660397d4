//! Seeded Gaussian sampling and the sample covariance.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Seed plus sub-stream index; together they fix every draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Seed for replicate `index` under this seed. Replicates of the same
    /// parent share a key and differ only in the ChaCha stream.
    pub fn replicate(&self, index: u64) -> RngSeed {
        RngSeed {
            seed: splitmix64(self.seed ^ splitmix64(self.stream)),
            stream: index,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `n` observations of dimension `p`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument("data matrix needs n >= 1 and p >= 1".into()));
        }
        if data.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data contains non-finite values".into()));
        }
        Ok(Self { n, p, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let p = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * p);
        for row in rows {
            let row = row.as_ref();
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), p, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.p..(l + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for l in 0..self.n {
            w.write_record(self.row(l).iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: '{f}' is not a number", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

enum Root {
    Dense(Vec<f64>),
    // per row: (column, value) pairs of the nonzero entries
    Sparse(Vec<Vec<(usize, f64)>>),
}

/// Draws from `N(0, Σ)` through the symmetric square root `Σ^{1/2}`, computed once.
pub struct GaussianSampler {
    p: usize,
    root: Root,
}

/// Relative negativity tolerated (and clamped) in the spectrum of Σ.
pub const PSD_TOLERANCE: f64 = 1e-10;

impl GaussianSampler {
    pub fn new(sigma: &SymmetricMatrix) -> Result<Self> {
        let eig = sigma.sym_eigen()?;
        let ev = eig.eigenvalues();
        let scale = ev[0].abs().max(ev[ev.len() - 1].abs());
        let min = eig.min_eigenvalue();
        if min < -PSD_TOLERANCE * scale {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        let roots: Vec<f64> = ev.iter().map(|&l| l.max(0.0).sqrt()).collect();
        let root = eig.reconstruct_with(&roots)?;
        let p = sigma.dim();
        let nnz = root.as_slice().iter().filter(|v| **v != 0.0).count();
        let root = if nnz * 4 < p * p {
            Root::Sparse(
                (0..p)
                    .map(|i| {
                        root.row(i)
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(|(j, v)| (j, *v))
                            .collect()
                    })
                    .collect(),
            )
        } else {
            Root::Dense(root.as_slice().to_vec())
        };
        Ok(Self { p, root })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// `n` rows `x_l = Σ^{1/2} z_l`, with the `z_l` drawn row by row from the seed's stream.
    pub fn sample(&self, n: usize, seed: RngSeed) -> Result<DataMatrix> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let p = self.p;
        let mut rng = seed.rng();
        let z: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = vec![0.0; n * p];
        match &self.root {
            Root::Dense(r) => {
                let s = p as isize;
                // SAFETY: z and x hold n*p elements and r holds p*p, all row-major.
                unsafe {
                    matrixmultiply::dgemm(
                        n,
                        p,
                        p,
                        1.0,
                        z.as_ptr(),
                        s,
                        1,
                        r.as_ptr(),
                        s,
                        1,
                        0.0,
                        x.as_mut_ptr(),
                        s,
                        1,
                    );
                }
            }
            Root::Sparse(rows) => {
                for l in 0..n {
                    let zl = &z[l * p..(l + 1) * p];
                    let xl = &mut x[l * p..(l + 1) * p];
                    for (j, row) in rows.iter().enumerate() {
                        let zj = zl[j];
                        for &(m, v) in row {
                            xl[m] += zj * v;
                        }
                    }
                }
            }
        }
        DataMatrix::new(n, p, x)
    }
}

/// `n` i.i.d. draws from `N(0, Σ)`.
pub fn sample_gaussian(sigma: &SymmetricMatrix, n: usize, seed: RngSeed) -> Result<DataMatrix> {
    GaussianSampler::new(sigma)?.sample(n, seed)
}

/// Centered sample covariance with divisor `n`.
pub fn mle_covariance(x: &DataMatrix) -> SymmetricMatrix {
    let (n, p) = (x.n, x.p);
    let mut mean = vec![0.0; p];
    for l in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(l)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut xc = x.data.clone();
    for l in 0..n {
        for (v, m) in xc[l * p..(l + 1) * p].iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    // Upper triangle only, one block column at a time.
    const BLOCK: usize = 128;
    let mut c = vec![0.0; p * p];
    let s = p as isize;
    let mut j0 = 0;
    while j0 < p {
        let width = BLOCK.min(p - j0);
        let rows = j0 + width;
        // SAFETY: A reads xc as the transpose of its leading `rows` columns,
        // B reads columns j0..j0+width of xc, C writes rows 0..rows and those
        // columns of c; every index stays inside the n*p and p*p buffers.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                n,
                width,
                1.0 / n as f64,
                xc.as_ptr(),
                1,
                s,
                xc.as_ptr().add(j0),
                s,
                1,
                0.0,
                c.as_mut_ptr().add(j0),
                s,
                1,
            );
        }
        j0 += width;
    }
    SymmetricMatrix::from_upper(p, c)
}

/// Per-entry exceedance frequencies `P(|σ*_ij − σ_ij| > t)` over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFrequencies {
    pub p: usize,
    pub t: f64,
    pub replicates: usize,
    /// Row-major p×p frequencies.
    pub frequencies: Vec<f64>,
}

impl TailFrequencies {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.frequencies[i * self.p + j]
    }

    pub fn max(&self) -> f64 {
        self.frequencies.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.frequencies.iter().sum::<f64>() / self.frequencies.len() as f64
    }
}

/// Empirical tail probe of the sample covariance. Replicate `r` uses
/// `seed.replicate(r)`, so the result does not depend on scheduling.
pub fn tail_probe(
    sigma: &SymmetricMatrix,
    n: usize,
    t: f64,
    replicates: usize,
    seed: RngSeed,
) -> Result<TailFrequencies> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("tail probe needs at least one replicate".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {t}")));
    }
    let sampler = GaussianSampler::new(sigma)?;
    let p = sigma.dim();
    let counts = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<u32>> {
            let x = sampler.sample(n, seed.replicate(r as u64))?;
            let s = mle_covariance(&x);
            Ok(s.as_slice()
                .iter()
                .zip(sigma.as_slice())
                .map(|(a, b)| ((a - b).abs() > t) as u32)
                .collect())
        })
        .try_reduce(
            || vec![0u32; p * p],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    Ok(TailFrequencies {
        p,
        t,
        replicates,
        frequencies: counts.iter().map(|&c| c as f64 / replicates as f64).collect(),
    })
}
