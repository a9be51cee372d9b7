//! Lower bound on the sum rate as a function of the auxiliary noise `Kz`,
//! its special limits, and a derivative-free supremum oracle.

use std::fmt;
use std::ops::{Add, Sub};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::MdInstance;
use crate::matcore::{chol_log_det_in_place, SymMatrix};

/// Rate in nats per source symbol.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct RateNats(pub f64);

impl RateNats {
    pub fn nats(self) -> f64 {
        self.0
    }

    pub fn bits(self) -> f64 {
        self.0 / std::f64::consts::LN_2
    }
}

impl fmt::Display for RateNats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nats", self.0)
    }
}

impl Add for RateNats {
    type Output = RateNats;
    fn add(self, rhs: RateNats) -> RateNats {
        RateNats(self.0 + rhs.0)
    }
}

impl Sub for RateNats {
    type Output = RateNats;
    fn sub(self, rhs: RateNats) -> RateNats {
        RateNats(self.0 - rhs.0)
    }
}

/// Substituted for `Kz` when `Kz` sits on the PSD boundary and a
/// determinant underflows.
const KZ_FLOOR: f64 = 1e-12;

fn log_det_with_floor(m: &SymMatrix, kz_floor: bool) -> Result<f64> {
    match m.log_det() {
        Ok(v) => Ok(v),
        Err(_) if kz_floor => Err(Error::Singular("lower bound determinant".into())),
        Err(_) => log_det_with_floor(&(m + &SymMatrix::scaled_identity(m.dim(), KZ_FLOOR)), true),
    }
}

/// `½ log( |Kx|·|Kx+Kz|^{L−1}·|D0+Kz| / (|D0|·Π_l |Dl+Kz|) )`.
pub fn lower_bound_at(inst: &MdInstance, kz: &SymMatrix) -> Result<RateNats> {
    if kz.dim() != inst.dim() {
        return Err(Error::Dimension(format!("Kz is {0}x{0}, Kx is {1}x{1}", kz.dim(), inst.dim())));
    }
    let eval = |floor: bool| -> Result<f64> {
        let kz = if floor { kz + &SymMatrix::scaled_identity(kz.dim(), KZ_FLOOR) } else { kz.clone() };
        let l = inst.descriptions() as f64;
        let mut v = inst.kx.log_det()? + (l - 1.0) * (&inst.kx + &kz).log_det()?
            + (&inst.d0 + &kz).log_det()?
            - inst.d0.log_det()?;
        for dl in &inst.d {
            v -= (dl + &kz).log_det()?;
        }
        Ok(0.5 * v)
    };
    match eval(false) {
        Ok(v) => Ok(RateNats(v)),
        Err(_) => eval(true)
            .map(RateNats)
            .map_err(|_| Error::Singular("D0 + Kz or Dl + Kz".into())),
    }
}

/// Point-to-point bound `½ log(|Kx|/|Dl|)` for description `l` (0-based).
pub fn individual_bound(inst: &MdInstance, l: usize) -> Result<RateNats> {
    let dl = inst.d.get(l).ok_or_else(|| {
        Error::InvalidArgument(format!("description {l} out of range 0..{}", inst.descriptions()))
    })?;
    Ok(RateNats(0.5 * (log_det_with_floor(&inst.kx, true)? - log_det_with_floor(dl, true)?)))
}

/// `Σ_l ½ log(|Kx|/|Dl|)`
pub fn individual_bound_sum(inst: &MdInstance) -> Result<RateNats> {
    (0..inst.descriptions()).try_fold(RateNats(0.0), |acc, l| Ok(acc + individual_bound(inst, l)?))
}

/// Point-to-point bound of the central receiver, `½ log(|Kx|/|D0|)`.
pub fn central_bound(inst: &MdInstance) -> Result<RateNats> {
    Ok(RateNats(0.5 * (log_det_with_floor(&inst.kx, true)? - log_det_with_floor(&inst.d0, true)?)))
}

/// `Kz = Kx(Kx−A)⁻¹Kx − Kx`, the auxiliary noise matched to coupling `A`.
pub fn kz_from_a(a: &SymMatrix, kx: &SymMatrix) -> Result<SymMatrix> {
    if a.dim() != kx.dim() {
        return Err(Error::Dimension(format!("A is {0}x{0}, Kx is {1}x{1}", a.dim(), kx.dim())));
    }
    let gap = kx - a;
    let lo = gap.min_eigenvalue();
    if !(lo > 0.0) {
        return Err(Error::OrderingViolation(format!(
            "A ≺ Kx fails (min eigenvalue of Kx − A is {lo:e})"
        )));
    }
    let amin = a.min_eigenvalue();
    if amin < -crate::matcore::DEFAULT_REL_TOL * kx.spectral_norm() {
        return Err(Error::NotPsd { min_eigenvalue: amin });
    }
    Ok(&gap.inverse()?.sandwich(kx) - kx)
}

/// Lower bound of a whitened instance as a function of the coupling `A`,
/// `0 ≼ A ≼ I`:
///
/// `½ [ log|Kw0+A| − Σ_l log|Kwl+A| − log|Kw0| + Σ_l log|I+Kwl| ]`.
///
/// Equals [`lower_bound_at`] at `Kz = (I−A)⁻¹ − I` and extends it
/// continuously to couplings with unit eigenvalues, where `Kz` is unbounded.
#[derive(Debug, Clone)]
pub struct CouplingObjective {
    n: usize,
    /// Row-major `Kw0, Kw1…KwL`.
    blocks: Vec<Vec<f64>>,
    offset: f64,
}

impl CouplingObjective {
    /// `inst` must be whitened.
    pub fn new(whitened: &MdInstance) -> Result<Self> {
        let n = whitened.dim();
        let (kw0, kw) = whitened.noise_covariances()?;
        let eye = SymMatrix::identity(n);
        let mut offset = -kw0.log_det()?;
        for k in &kw {
            offset += (&eye + k).log_det()?;
        }
        let flat = |m: &SymMatrix| m.as_matrix().transpose().iter().copied().collect::<Vec<f64>>();
        let mut blocks = vec![flat(&kw0)];
        blocks.extend(kw.iter().map(flat));
        Ok(Self { n, blocks, offset })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Value at a row-major coupling; `None` if some `Kwl + A` is not PD.
    pub fn value_flat(&self, a: &[f64], scratch: &mut Vec<f64>) -> Option<f64> {
        let nn = self.n * self.n;
        scratch.resize(nn, 0.0);
        let mut v = self.offset;
        for (i, b) in self.blocks.iter().enumerate() {
            for k in 0..nn {
                scratch[k] = b[k] + a[k];
            }
            let ld = chol_log_det_in_place(scratch, self.n)?;
            v += if i == 0 { ld } else { -ld };
        }
        Some(0.5 * v)
    }

    pub fn value(&self, a: &SymMatrix) -> Result<RateNats> {
        let flat: Vec<f64> = a.as_matrix().transpose().iter().copied().collect();
        self.value_flat(&flat, &mut Vec::new())
            .map(RateNats)
            .ok_or_else(|| Error::Singular("Kwl + A".into()))
    }
}

/// Lower bound at the auxiliary noise matched to coupling `A`
/// (`0 ≼ A ≼ Kx`, original frame), finite even when `A` touches `Kx`.
pub fn lower_bound_at_coupling(inst: &MdInstance, a: &SymMatrix) -> Result<RateNats> {
    let w = inst.whiten()?;
    CouplingObjective::new(&w.whitened)?.value(&w.whiten(a))
}

/// Output of [`sup_lower_bound`].
#[derive(Debug, Clone, Serialize)]
pub struct SupBound {
    /// Largest lower-bound value among the evaluated points.
    pub value: RateNats,
    /// Maximizing auxiliary noise, original frame.
    pub kz: SymMatrix,
    /// Coupling `A` whose matched noise is `kz`, original frame.
    pub coupling: SymMatrix,
    pub evaluations: usize,
}

/// Couplings are kept at least this far below `I` (whitened) so that the
/// reported maximizer has a finite `Kz`.
const EDGE: f64 = 1e-7;

const GRID_KZ: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

/// Upper limit on grid points per basis.
const GRID_CAP: usize = 6561;

const RANDOM_BASES: usize = 2;
const ORACLE_SEED: u64 = 0x5eed_0a4c_1e00;

struct Tracker<'a> {
    obj: &'a CouplingObjective,
    budget: usize,
    used: usize,
    best: f64,
    best_a: Vec<f64>,
    scratch: Vec<f64>,
}

impl Tracker<'_> {
    fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    /// Evaluates one feasible coupling; returns its value.
    fn eval(&mut self, a: &[f64]) -> Option<f64> {
        if self.exhausted() {
            return None;
        }
        self.used += 1;
        let v = self.obj.value_flat(a, &mut self.scratch)?;
        if v > self.best {
            self.best = v;
            self.best_a.clear();
            self.best_a.extend_from_slice(a);
        }
        Some(v)
    }
}

fn grid_values(n: usize) -> Vec<f64> {
    let mut all = vec![0.0];
    all.extend(GRID_KZ.iter().map(|kz| kz / (1.0 + kz)));
    all.push(1.0 - EDGE);
    let mut k = all.len();
    while k > 2 && k.pow(n as u32) > GRID_CAP {
        k = if k > 5 { 5 } else if k > 3 { 3 } else { 2 };
    }
    match k {
        k if k == all.len() => all,
        5 => vec![0.0, 0.1 / 1.1, 0.5, 10.0 / 11.0, 1.0 - EDGE],
        3 => vec![0.0, 0.5, 1.0 - EDGE],
        _ => vec![0.0, 1.0 - EDGE],
    }
}

fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

/// Projects a symmetric matrix onto `{0 ≼ A ≼ (1−EDGE) I}`.
fn project_box(p: &[f64], n: usize) -> Vec<f64> {
    let m = SymMatrix::symmetrized(DMatrix::from_row_slice(n, n, p));
    flat(m.map_spectrum(|v| v.clamp(0.0, 1.0 - EDGE)).as_matrix())
}

/// Approximate supremum of the lower bound over `Kz ≽ 0`.
///
/// Works on the coupling parameterization `Kz = (I−A)⁻¹ − I` of the
/// whitened instance: the corners `A = 0` and `A → I`, then `A = Q·diag(a)·Qᵗ`
/// over a grid of eigenvalues (seven log-spaced `Kz` eigenvalues plus both
/// ends) for `Q` ranging over the eigenbases of `D0, D1…DL` and fixed random
/// rotations, then a compass search from the best grid point. The sequence of
/// evaluated points does not depend on `budget`, so the result is
/// nondecreasing in `budget`; every point is feasible, so the result never
/// exceeds the true supremum beyond rounding.
pub fn sup_lower_bound(inst: &MdInstance, budget: usize) -> Result<SupBound> {
    inst.ensure_valid()?;
    let w = inst.whiten()?;
    let obj = CouplingObjective::new(&w.whitened)?;
    let n = inst.dim();
    let mut t = Tracker {
        obj: &obj,
        budget: budget.max(1),
        used: 0,
        best: f64::NEG_INFINITY,
        best_a: vec![0.0; n * n],
        scratch: Vec::new(),
    };

    t.eval(&vec![0.0; n * n]);
    t.eval(&flat(&(DMatrix::identity(n, n) * (1.0 - EDGE))));

    let mut bases: Vec<DMatrix<f64>> = Vec::new();
    bases.push(w.whitened.d0.eigen().vectors);
    bases.extend(w.whitened.d.iter().map(|d| d.eigen().vectors));
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    bases.extend((0..RANDOM_BASES).map(|_| random_rotation(n, &mut rng)));

    let values = grid_values(n);
    let k = values.len();
    let total = k.pow(n as u32);
    'grid: for q in &bases {
        for code in 0..total {
            let mut c = code;
            let mut scaled = q.clone();
            for j in 0..n {
                let v = values[c % k];
                c /= k;
                scaled.column_mut(j).scale_mut(v);
            }
            let a = &scaled * q.transpose();
            if t.eval(&flat(&a)).is_none() && t.exhausted() {
                break 'grid;
            }
        }
    }

    // compass search over the symmetric entries
    let mut dirs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i..n {
            dirs.push((i, j));
        }
    }
    let mut x = t.best_a.clone();
    let mut fx = t.best;
    let mut step = 0.25;
    while step > 1e-10 && !t.exhausted() {
        let mut improved = false;
        for &(i, j) in &dirs {
            for sign in [1.0, -1.0] {
                let mut p = x.clone();
                let h = if i == j { step } else { step / std::f64::consts::SQRT_2 };
                p[i * n + j] += sign * h;
                if i != j {
                    p[j * n + i] += sign * h;
                }
                let a = project_box(&p, n);
                match t.eval(&a) {
                    Some(v) if v > fx => {
                        x = a;
                        fx = v;
                        improved = true;
                        break;
                    }
                    _ if t.exhausted() => break,
                    _ => {}
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let a_w = SymMatrix::symmetrized(DMatrix::from_row_slice(n, n, &t.best_a));
    let kz_w = &(&SymMatrix::identity(n) - &a_w).inverse()? - &SymMatrix::identity(n);
    Ok(SupBound {
        value: RateNats(t.best),
        kz: w.unwhiten(&kz_w),
        coupling: w.unwhiten(&a_w),
        evaluations: t.used,
    })
}
