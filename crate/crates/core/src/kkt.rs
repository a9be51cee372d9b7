//! General-L engine: maximize `F(A) = log|Kw0+A| − Σ_l log|Kwl+A|` over the
//! matrix box `0 ≼ A ≼ I` of the whitened problem, classify the active
//! boundary, build the multipliers and enhanced distortions, and assemble
//! the optimal test channel.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bounds::{CouplingObjective, RateNats};
use crate::error::{Error, Result};
use crate::instance::{distortions_of_channel, noise_of_distortion, ChannelDistortions, MdInstance};
use crate::matcore::SymMatrix;
use crate::region::{achievable_sum_rate, TestChannel};

/// Eigenvalues of `A*` within this distance of 0 or 1 count as active.
pub const EIG_TOL: f64 = 1e-7;

/// Most negative multiplier eigenvalue tolerated as rounding.
const MULTIPLIER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KktCase {
    /// `0 ≺ A* ≺ I`
    Interior,
    /// `A*` has zero eigenvalues but none equal to one.
    ZeroEigs,
    /// `A*` has unit eigenvalues but none equal to zero.
    OneEigs,
    /// Both zero and unit eigenvalues.
    Both,
}

impl KktCase {
    pub fn as_str(self) -> &'static str {
        match self {
            KktCase::Interior => "Interior",
            KktCase::ZeroEigs => "ZeroEigs",
            KktCase::OneEigs => "OneEigs",
            KktCase::Both => "Both",
        }
    }
}

/// Active eigenspaces of a feasible coupling.
#[derive(Debug, Clone)]
pub struct CaseSplit {
    pub case: KktCase,
    /// Orthonormal basis (columns) of the eigenspace at 0.
    pub zero_basis: DMatrix<f64>,
    /// Orthonormal basis (columns) of the eigenspace at 1.
    pub one_basis: DMatrix<f64>,
    /// `A` with active eigenvalues set exactly to 0 and 1.
    pub snapped: SymMatrix,
}

impl CaseSplit {
    pub fn p(&self) -> usize {
        self.zero_basis.ncols()
    }

    pub fn q(&self) -> usize {
        self.one_basis.ncols()
    }
}

/// Auxiliary noise matched to a coupling. Unit eigenvalues of the whitened
/// coupling send `Kz` to infinity along the corresponding directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxNoise {
    Finite(SymMatrix),
    Unbounded {
        /// Limit of `Kz` restricted to the bounded directions.
        finite: SymMatrix,
        /// Unit vectors along which `Kz` grows without bound.
        directions: Vec<Vec<f64>>,
    },
}

impl AuxNoise {
    /// `(I−A)⁻¹ − I` for a whitened coupling `0 ≼ A ≼ I`.
    pub fn from_whitened_coupling(a: &SymMatrix) -> AuxNoise {
        let eig = a.eigen();
        let finite = eig.reassemble(|v| if v >= 1.0 - EIG_TOL { 0.0 } else { v / (1.0 - v) });
        let directions: Vec<Vec<f64>> = (0..a.dim())
            .filter(|&j| eig.values[j] >= 1.0 - EIG_TOL)
            .map(|j| eig.vectors.column(j).iter().copied().collect())
            .collect();
        if directions.is_empty() {
            AuxNoise::Finite(finite)
        } else {
            AuxNoise::Unbounded { finite, directions }
        }
    }

    /// Maps a whitened-frame noise `Kz_w` to `S·Kz_w·S`.
    pub fn unwhiten(&self, s: &SymMatrix) -> AuxNoise {
        match self {
            AuxNoise::Finite(m) => AuxNoise::Finite(m.sandwich(s)),
            AuxNoise::Unbounded { finite, directions } => AuxNoise::Unbounded {
                finite: finite.sandwich(s),
                directions: directions
                    .iter()
                    .map(|d| {
                        let v = s.as_matrix() * nalgebra::DVector::from_column_slice(d);
                        let norm = v.norm();
                        v.iter().map(|x| x / norm).collect()
                    })
                    .collect(),
            },
        }
    }

    pub fn finite(&self) -> Option<&SymMatrix> {
        match self {
            AuxNoise::Finite(m) => Some(m),
            AuxNoise::Unbounded { .. } => None,
        }
    }
}

fn check_blocks(a: &SymMatrix, kw0: &SymMatrix, kw: &[SymMatrix]) -> Result<()> {
    if kw.is_empty() {
        return Err(Error::Dimension("at least one noise block is required".into()));
    }
    let n = a.dim();
    if kw0.dim() != n || kw.iter().any(|k| k.dim() != n) {
        return Err(Error::Dimension("noise blocks and coupling differ in size".into()));
    }
    Ok(())
}

fn log_det_or_singular(m: &SymMatrix, what: &str) -> Result<f64> {
    m.log_det().map_err(|_| Error::Singular(format!("{what} is not positive definite")))
}

/// `F(A) = log|Kw0+A| − Σ_l log|Kwl+A|`.
pub fn objective_f(a: &SymMatrix, kw0: &SymMatrix, kw: &[SymMatrix]) -> Result<f64> {
    check_blocks(a, kw0, kw)?;
    let mut v = log_det_or_singular(&(kw0 + a), "Kw0 + A")?;
    for k in kw {
        v -= log_det_or_singular(&(k + a), "Kwl + A")?;
    }
    Ok(v)
}

/// `f(A) = (Kw0+A)⁻¹ − Σ_l (Kwl+A)⁻¹`, the gradient of [`objective_f`].
pub fn gradient_f(a: &SymMatrix, kw0: &SymMatrix, kw: &[SymMatrix]) -> Result<SymMatrix> {
    check_blocks(a, kw0, kw)?;
    let inv = |m: SymMatrix, what: &str| -> Result<SymMatrix> {
        if m.as_matrix().clone().cholesky().is_none() {
            return Err(Error::Singular(format!("{what} is not positive definite")));
        }
        m.inverse()
    };
    let mut g = inv(kw0 + a, "Kw0 + A")?;
    for k in kw {
        g = &g - &inv(k + a, "Kwl + A")?;
    }
    Ok(g)
}

/// Frobenius inner product.
fn dot(x: &SymMatrix, y: &SymMatrix) -> f64 {
    x.as_matrix().dot(y.as_matrix())
}

/// Projection onto `{0 ≼ A ≼ I}` by eigenvalue clamping.
pub fn project_unit_box(m: &SymMatrix) -> SymMatrix {
    m.map_spectrum(|v| v.clamp(0.0, 1.0))
}

/// `‖P(A + f(A)) − A‖_F`, zero exactly at first-order stationary points.
pub fn projected_gradient_norm(a: &SymMatrix, g: &SymMatrix) -> f64 {
    (&project_unit_box(&(a + g)) - a).frobenius_norm()
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stationarity tolerance on the projected gradient.
    pub tol: f64,
    /// Starting couplings are `s·I` for each `s`.
    pub starts: Vec<f64>,
    pub concavity_probes: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            tol: 1e-8,
            starts: vec![0.5, 1e-3, 1.0 - 1e-3],
            concavity_probes: 8,
            seed: 0x6b6b_7400,
        }
    }
}

/// Result of one maximization.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub a: SymMatrix,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Largest objective gap between converged starts.
    pub start_spread: f64,
    /// All midpoint concavity probes passed.
    pub concavity_ok: bool,
}

const NONMONOTONE_MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;

/// Spectral projected gradient ascent from one start.
fn ascend(
    start: SymMatrix,
    kw0: &SymMatrix,
    kw: &[SymMatrix],
    opts: &SolverOptions,
) -> Result<(SymMatrix, f64, f64, usize)> {
    let mut a = project_unit_box(&start);
    let mut fa = objective_f(&a, kw0, kw)?;
    let mut g = gradient_f(&a, kw0, kw)?;
    let mut history = vec![fa];
    let mut t = 1.0;
    let mut residual = projected_gradient_norm(&a, &g);
    for iter in 0..opts.max_iter {
        if residual <= opts.tol {
            return Ok((a, fa, residual, iter));
        }
        let d = &project_unit_box(&(&a + &(&g * t))) - &a;
        let slope = dot(&g, &d);
        let reference = history.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = 1e-14 * (1.0 + fa.abs());
        let mut lambda = 1.0;
        let (next, f_next) = loop {
            let cand = &a + &(&d * lambda);
            if let Ok(fc) = objective_f(&cand, kw0, kw) {
                if fc >= reference + ARMIJO * lambda * slope - slack {
                    break (cand, fc);
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                // no ascent left at working precision
                return if residual <= 1e2 * opts.tol {
                    Ok((a, fa, residual, iter))
                } else {
                    Err(Error::DidNotConverge {
                        iterations: iter,
                        residual,
                        last_iterate: Box::new(a),
                    })
                };
            }
        };
        let g_next = gradient_f(&next, kw0, kw)?;
        let s = &next - &a;
        let y = &g_next - &g;
        let sy = dot(&s, &y);
        let ss = dot(&s, &s);
        t = if sy < 0.0 { (ss / -sy).clamp(1e-10, 1e10) } else { (t * 2.0).min(1e10) };
        a = next;
        fa = f_next;
        g = g_next;
        residual = projected_gradient_norm(&a, &g);
        history.push(fa);
        if history.len() > NONMONOTONE_MEMORY {
            history.remove(0);
        }
    }
    if residual <= opts.tol {
        Ok((a, fa, residual, opts.max_iter))
    } else {
        Err(Error::DidNotConverge {
            iterations: opts.max_iter,
            residual,
            last_iterate: Box::new(a),
        })
    }
}

fn random_box_point(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let vals: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    SymMatrix::diagonal(&vals).congruence(&q)
}

/// Midpoint concavity probes of `F` on random segments inside the box.
fn concavity_probes(kw0: &SymMatrix, kw: &[SymMatrix], opts: &SolverOptions) -> Result<bool> {
    let n = kw0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.concavity_probes {
        let x = random_box_point(n, &mut rng);
        let y = random_box_point(n, &mut rng);
        let mid = &(&x + &y) * 0.5;
        let fx = objective_f(&x, kw0, kw)?;
        let fy = objective_f(&y, kw0, kw)?;
        let fm = objective_f(&mid, kw0, kw)?;
        if fm < 0.5 * (fx + fy) - 1e-10 * (1.0 + fm.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Maximizes `F` over `0 ≼ A ≼ I` for a whitened instance.
pub fn maximize_f(whitened: &MdInstance, opts: &SolverOptions) -> Result<Optimum> {
    let n = whitened.dim();
    let (kw0, kw) = whitened.noise_covariances()?;
    let mut runs = Vec::new();
    let mut last_err = None;
    for &s in &opts.starts {
        match ascend(SymMatrix::scaled_identity(n, s), &kw0, &kw, opts) {
            Ok(r) => runs.push(r),
            Err(e) => last_err = Some(e),
        }
    }
    if runs.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::InvalidArgument("no starting points".into())));
    }
    let hi = runs.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = runs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let best = runs.into_iter().max_by(|x, y| x.1.total_cmp(&y.1)).expect("nonempty");
    let concavity_ok = concavity_probes(&kw0, &kw, opts)?;
    Ok(Optimum {
        a: best.0,
        objective: best.1,
        residual: best.2,
        iterations: best.3,
        start_spread: hi - lo,
        concavity_ok,
    })
}

/// Splits the spectrum of a feasible `A` into the eigenspaces at 0, at 1,
/// and the interior.
pub fn classify_case(a: &SymMatrix, eig_tol: f64) -> CaseSplit {
    let eig = a.eigen();
    let n = a.dim();
    let zeros: Vec<usize> = (0..n).filter(|&j| eig.values[j] <= eig_tol).collect();
    let ones: Vec<usize> = (0..n).filter(|&j| eig.values[j] >= 1.0 - eig_tol).collect();
    let basis = |idx: &[usize]| DMatrix::from_fn(n, idx.len(), |i, k| eig.vectors[(i, idx[k])]);
    let case = match (zeros.is_empty(), ones.is_empty()) {
        (true, true) => KktCase::Interior,
        (false, true) => KktCase::ZeroEigs,
        (true, false) => KktCase::OneEigs,
        (false, false) => KktCase::Both,
    };
    let snapped = eig.reassemble(|v| {
        if v <= eig_tol {
            0.0
        } else if v >= 1.0 - eig_tol {
            1.0
        } else {
            v
        }
    });
    CaseSplit { case, zero_basis: basis(&zeros), one_basis: basis(&ones), snapped }
}

/// `B (Bᵗ M B)₊ Bᵗ` with a sign check on the compressed matrix.
fn compress_psd(m: &SymMatrix, basis: &DMatrix<f64>, name: &str) -> Result<SymMatrix> {
    let n = m.dim();
    if basis.ncols() == 0 {
        return Ok(SymMatrix::zeros(n));
    }
    let small = m.congruence(&basis.transpose());
    let lo = small.min_eigenvalue();
    if lo < -MULTIPLIER_TOL {
        return Err(Error::KktViolation(format!(
            "{name} has eigenvalue {lo:e} on its active eigenspace"
        )));
    }
    Ok(small.map_spectrum(|v| v.max(0.0)).congruence(basis))
}

/// `Λ1 = P0(−f(A))P0` and `Λ2 = P1 f(A) P1` on the active eigenspaces.
pub fn multipliers(
    split: &CaseSplit,
    kw0: &SymMatrix,
    kw: &[SymMatrix],
) -> Result<(SymMatrix, SymMatrix)> {
    let g = gradient_f(&split.snapped, kw0, kw)?;
    let lambda1 = compress_psd(&-&g, &split.zero_basis, "Λ1")?;
    let lambda2 = compress_psd(&g, &split.one_basis, "Λ2")?;
    Ok((lambda1, lambda2))
}

/// `D0* = (D0⁻¹ + Λ1)⁻¹`
pub fn enhanced_central(d0: &SymMatrix, lambda1: &SymMatrix) -> Result<SymMatrix> {
    (&d0.inverse()? + lambda1).inverse()
}

/// `Dl* = Dl − Λ2`, which must stay positive definite.
pub fn enhanced_individual(dl: &SymMatrix, lambda2: &SymMatrix) -> Result<SymMatrix> {
    let out = dl - lambda2;
    let lo = out.min_eigenvalue();
    if !(lo > 0.0) {
        return Err(Error::Internal(format!(
            "enhanced distortion is not positive definite (min eigenvalue {lo:e})"
        )));
    }
    Ok(out)
}

/// Optimizer output, whitened frame.
#[derive(Debug, Clone, Serialize)]
pub struct KktSolution {
    pub a_star: SymMatrix,
    pub case: KktCase,
    pub lambda1: SymMatrix,
    pub lambda2: SymMatrix,
    pub d0_enhanced: SymMatrix,
    pub dl_enhanced: SymMatrix,
    pub kz: AuxNoise,
    pub sum_rate: RateNats,
    /// `‖f(A*) + Λ1 − Λ2‖_F`
    pub stationarity: f64,
    /// `max(‖Λ1 A*‖_F, ‖Λ2 (A* − I)‖_F)`
    pub slackness: f64,
    pub objective: f64,
    pub iterations: usize,
    pub start_spread: f64,
    /// Stationary and every concavity probe passed.
    pub certified: bool,
}

/// Everything the sum-rate computation produces, original frame except for
/// `solution`.
#[derive(Debug, Clone, Serialize)]
pub struct SumRateResult {
    pub sum_rate: RateNats,
    pub case: KktCase,
    pub a_star: SymMatrix,
    pub kz: AuxNoise,
    pub channel: TestChannel,
    pub achieved: ChannelDistortions,
    /// Sum rate achieved by `channel`; equals `sum_rate` up to rounding.
    pub achievable_rate: RateNats,
    pub solution: KktSolution,
}

/// Exact sum rate with default solver options.
pub fn sum_rate(inst: &MdInstance) -> Result<SumRateResult> {
    sum_rate_with(inst, &SolverOptions::default())
}

pub fn sum_rate_with(inst: &MdInstance, opts: &SolverOptions) -> Result<SumRateResult> {
    inst.ensure_valid()?;
    let w = inst.whiten()?;
    let wi = &w.whitened;
    let n = inst.dim();
    let l = inst.descriptions();
    let (kw0, kw) = wi.noise_covariances()?;

    let opt = if l == 1 {
        // a single description never uses the coupling; take the A = I corner
        Optimum {
            a: SymMatrix::identity(n),
            objective: objective_f(&SymMatrix::identity(n), &kw0, &kw)?,
            residual: 0.0,
            iterations: 0,
            start_spread: 0.0,
            concavity_ok: true,
        }
    } else {
        maximize_f(wi, opts)?
    };
    let split = classify_case(&opt.a, EIG_TOL);
    let (lambda1, lambda2) = multipliers(&split, &kw0, &kw)?;
    let a_star = split.snapped.clone();
    let g = gradient_f(&a_star, &kw0, &kw)?;
    let stationarity = (&(&g + &lambda1) - &lambda2).frobenius_norm();
    let eye = SymMatrix::identity(n);
    let slackness = SymMatrix::symmetrized(lambda1.mul_mat(&a_star))
        .frobenius_norm()
        .max(SymMatrix::symmetrized(lambda2.mul_mat(&(&a_star - &eye))).frobenius_norm());

    let d0_enhanced = enhanced_central(&wi.d0, &lambda1)?;
    let dl_enhanced = enhanced_individual(&wi.d[l - 1], &lambda2)?;
    let mut blocks = kw.clone();
    blocks[l - 1] = noise_of_distortion(&dl_enhanced, &eye)?;
    let channel_w = TestChannel::new(blocks, a_star.clone())?;

    let sum = CouplingObjective::new(wi)?.value(&a_star)?;
    let kz_w = AuxNoise::from_whitened_coupling(&a_star);
    let s = &w.inverse_transform;
    let channel = channel_w.congruence(s)?;
    let achieved = distortions_of_channel(&inst.kx, &channel)?;
    let achievable_rate = achievable_sum_rate(&inst.kx, &channel)?;

    let solution = KktSolution {
        a_star: a_star.clone(),
        case: split.case,
        lambda1,
        lambda2,
        d0_enhanced,
        dl_enhanced,
        kz: kz_w.clone(),
        sum_rate: sum,
        stationarity,
        slackness,
        objective: opt.objective,
        iterations: opt.iterations,
        start_spread: opt.start_spread,
        certified: opt.concavity_ok && opt.residual <= opts.tol,
    };
    Ok(SumRateResult {
        sum_rate: sum,
        case: split.case,
        a_star: a_star.sandwich(s),
        kz: kz_w.unwhiten(s),
        channel,
        achieved,
        achievable_rate,
        solution,
    })
}
