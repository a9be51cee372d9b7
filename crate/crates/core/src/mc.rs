//! Monte Carlo oracle for test channels: empirical MMSE error covariances,
//! the conditional-independence structure, and weak duality against the
//! lower bound.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{kz_from_a, lower_bound_at};
use crate::error::{Error, Result};
use crate::instance::{distortions_of_channel, MdInstance};
use crate::matcore::{dense_inverse, SymMatrix};
use crate::region::{achievable_sum_rate, TestChannel};

const CHUNK: usize = 8192;
const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub n_samples: usize,
    pub seed: u64,
    pub empirical_dl: Vec<SymMatrix>,
    pub empirical_d0: SymMatrix,
    pub analytic_dl: Vec<SymMatrix>,
    pub analytic_d0: SymMatrix,
    /// Relative Frobenius deviation per receiver, individual ones first.
    pub rel_errors: Vec<f64>,
    pub max_rel_frobenius_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Default acceptance band `3·N·L/√n`.
pub fn default_tolerance(n: usize, l: usize, samples: usize) -> f64 {
    3.0 * (n * l) as f64 / (samples as f64).sqrt()
}

/// Per-chunk sums of `e eᵗ` for every receiver, central receiver last.
type Sums = Vec<DMatrix<f64>>;

fn add_sums(mut a: Sums, b: &Sums) -> Sums {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Pairwise reduction in index order; the result does not depend on how
/// the chunks were scheduled.
fn pairwise(chunks: &[Sums]) -> Sums {
    match chunks.len() {
        1 => chunks[0].clone(),
        k => {
            let (lo, hi) = chunks.split_at(k / 2);
            add_sums(pairwise(lo), &pairwise(hi))
        }
    }
}

/// Draws `(x, w1…wL)` from the block-diagonal joint covariance, forms
/// `u_l = x + w_l`, applies the analytic linear MMSE estimators and
/// compares the empirical error covariances with the analytic ones.
/// Chunk `c` of 8192 samples uses stream `c` of a ChaCha generator seeded
/// with `seed`, so the report is identical for serial and parallel runs.
pub fn sample_verify(
    kx: &SymMatrix,
    tc: &TestChannel,
    samples: usize,
    seed: u64,
    tol: Option<f64>,
) -> Result<McReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    if kx.dim() != tc.dim() {
        return Err(Error::Dimension("source and channel differ in size".into()));
    }
    let n = kx.dim();
    let l = tc.descriptions();
    let kw = tc.assembled();
    let dim = n + l * n;
    let mut joint = DMatrix::zeros(dim, dim);
    joint.view_mut((0, 0), (n, n)).copy_from(kx.as_matrix());
    joint.view_mut((n, n), (l * n, l * n)).copy_from(kw.as_matrix());
    let chol = joint
        .cholesky()
        .ok_or_else(|| Error::NotPd { min_eigenvalue: kw.min_eigenvalue().min(kx.min_eigenvalue()) })?;
    let lower = chol.l();

    // estimators: G_l = Kx (Kx + Kwl)⁻¹ and G0 = Σ_xu Σ_uu⁻¹
    let gains: Vec<DMatrix<f64>> = tc
        .kw_blocks
        .iter()
        .map(|k| Ok(kx.as_matrix() * dense_inverse((kx + k).as_matrix())?))
        .collect::<Result<_>>()?;
    let mut cov_uu = kw.as_matrix().clone();
    let mut cov_xu = DMatrix::zeros(n, l * n);
    for i in 0..l {
        cov_xu.view_mut((0, i * n), (n, n)).copy_from(kx.as_matrix());
        for j in 0..l {
            let mut blk = cov_uu.view_mut((i * n, j * n), (n, n));
            blk += kx.as_matrix();
        }
    }
    let g0 = &cov_xu * dense_inverse(&cov_uu)?;

    let n_chunks = samples.div_ceil(CHUNK);
    let chunk_sums: Vec<Sums> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(samples - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let z = DMatrix::from_fn(dim, count, |_, _| StandardNormal.sample(&mut rng));
            let v = &lower * z;
            let x = v.rows(0, n).into_owned();
            let mut u_all = DMatrix::zeros(l * n, count);
            let mut sums = Vec::with_capacity(l + 1);
            for (i, gain) in gains.iter().enumerate() {
                let u = &x + v.rows(n + i * n, n);
                let e = &x - gain * &u;
                sums.push(&e * e.transpose());
                u_all.rows_mut(i * n, n).copy_from(&u);
            }
            let e0 = &x - &g0 * &u_all;
            sums.push(&e0 * e0.transpose());
            sums
        })
        .collect();
    let totals = pairwise(&chunk_sums);

    let analytic = distortions_of_channel(kx, tc)?;
    let scale = 1.0 / samples as f64;
    let empirical: Vec<SymMatrix> = totals.into_iter().map(|m| SymMatrix::symmetrized(m * scale)).collect();
    let mut rel_errors = Vec::with_capacity(l + 1);
    for (emp, ana) in empirical.iter().zip(analytic.individual.iter().chain(std::iter::once(&analytic.central))) {
        rel_errors.push((emp - ana).frobenius_norm() / ana.frobenius_norm());
    }
    let max_err = rel_errors.iter().copied().fold(0.0, f64::max);
    let tolerance = tol.unwrap_or_else(|| default_tolerance(n, l, samples));
    let mut empirical = empirical;
    let empirical_d0 = empirical.pop().expect("central receiver present");
    Ok(McReport {
        n_samples: samples,
        seed,
        empirical_dl: empirical,
        empirical_d0,
        analytic_dl: analytic.individual,
        analytic_d0: analytic.central,
        rel_errors,
        max_rel_frobenius_error: max_err,
        tolerance,
        pass: max_err <= tolerance,
    })
}

/// Largest `‖Cov(u_i, u_j | y)‖_F` over pairs `i < j`, where `y = x + z`
/// with `z ~ N(0, Kz)`, `Kz` matched to `a`, and the cross-covariances of
/// the `u`'s read from the channel.
pub fn independence_check(kx: &SymMatrix, tc: &TestChannel, a: &SymMatrix) -> Result<f64> {
    let kz = kz_from_a(a, kx)?;
    let seen = (kx + &kz).inverse()?.sandwich(kx);
    let kw = tc.assembled();
    let n = kx.dim();
    let l = tc.descriptions();
    let mut worst: f64 = 0.0;
    for i in 0..l {
        for j in i + 1..l {
            let cross = kw.as_matrix().view((i * n, j * n), (n, n)).into_owned();
            let cond = kx.as_matrix() + cross - seen.as_matrix();
            worst = worst.max(cond.norm());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub achievable_rate: f64,
    /// Smallest `achievable − lower bound` over the evaluated noises.
    pub min_gap: f64,
    pub argmin_kz: SymMatrix,
    pub evaluated: usize,
}

const GAP_TOL: f64 = 1e-9;
/// Whitened couplings this close to `I` have no usable matched noise.
const MATCHED_EDGE: f64 = 1e-7;
const AUDIT_KZ: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

/// Weak-duality audit: the channel's sum rate must dominate the lower bound
/// at every auxiliary noise. Evaluates the noise matched to the channel
/// coupling (when finite), then `Kz = S·Q·diag(k)·Qᵗ·S` over the grid of
/// `k`, `Q` the eigenbasis of the whitened `D0`, `S = Kx^{1/2}`, up to
/// `budget` points.
pub fn bound_consistency(inst: &MdInstance, tc: &TestChannel, budget: usize) -> Result<ConsistencyReport> {
    inst.ensure_valid()?;
    if tc.descriptions() != inst.descriptions() || tc.dim() != inst.dim() {
        return Err(Error::Dimension("channel does not match the instance".into()));
    }
    let got = distortions_of_channel(&inst.kx, tc)?;
    let tol = 1e-9 * inst.kx.spectral_norm();
    let meets = got.individual.iter().zip(&inst.d).all(|(g, d)| (d - g).min_eigenvalue() >= -tol)
        && (&inst.d0 - &got.central).min_eigenvalue() >= -tol;
    if !meets {
        return Err(Error::InvalidArgument("channel does not meet the distortion constraints".into()));
    }
    let achievable = achievable_sum_rate(&inst.kx, tc)?.0;

    let mut candidates: Vec<SymMatrix> = Vec::new();
    let w = inst.whiten()?;
    // a coupling at Kx up to rounding would give a numerically infinite Kz
    if w.whiten(&tc.a).max_eigenvalue() < 1.0 - MATCHED_EDGE {
        candidates.push(kz_from_a(&tc.a, &inst.kx)?);
    }
    let q = w.whitened.d0.eigen().vectors;
    let n = inst.dim();
    let k = AUDIT_KZ.len();
    let total = k.saturating_pow(n as u32);
    for code in 0..total {
        if candidates.len() >= budget.max(1) {
            break;
        }
        let mut c = code;
        let diag: Vec<f64> = (0..n)
            .map(|_| {
                let v = AUDIT_KZ[c % k];
                c /= k;
                v
            })
            .collect();
        candidates.push(w.unwhiten(&SymMatrix::diagonal(&diag).congruence(&q)));
    }
    candidates.truncate(budget.max(1));

    let mut min_gap = f64::INFINITY;
    let mut argmin = candidates[0].clone();
    for kz in &candidates {
        let gap = achievable - lower_bound_at(inst, kz)?.0;
        if gap < min_gap {
            min_gap = gap;
            argmin = kz.clone();
        }
    }
    if min_gap < -GAP_TOL * (1.0 + achievable.abs()) {
        return Err(Error::TheoryViolation(format!(
            "lower bound exceeds the achievable sum rate by {:e}",
            -min_gap
        )));
    }
    Ok(ConsistencyReport { achievable_rate: achievable, min_gap, argmin_kz: argmin, evaluated: candidates.len() })
}
