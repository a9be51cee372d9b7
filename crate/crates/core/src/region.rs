//! Rate regions: the subset-rate function of a test channel, its
//! contra-polymatroid structure and vertices, the two-description region,
//! the region for induced subset distortions, and a certificate search for
//! separate distortion constraints.

use std::fmt;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::instance::MdInstance;
use crate::matcore::{assemble_kw, collapsed_inverse, inv_sqrt_pd, sqrt_psd, SymMatrix};
use crate::riccati::two_description_solve;

/// Slack below which a rate constraint counts as violated.
pub const CONSTRAINT_TOL: f64 = 1e-9;

const MAX_EXHAUSTIVE: usize = 6;
const MAX_VERTEX_DESCRIPTIONS: usize = 8;

/// Jointly Gaussian test channel `u_l = x + w_l`: noise covariances
/// `Kw1…KwL` on the diagonal and `−A` on every off-diagonal block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestChannel {
    pub kw_blocks: Vec<SymMatrix>,
    pub a: SymMatrix,
}

impl TestChannel {
    /// Requires the assembled covariance to be positive definite.
    pub fn new(kw_blocks: Vec<SymMatrix>, a: SymMatrix) -> Result<Self> {
        let kw = assemble_kw(&kw_blocks, &a)?;
        if kw.as_matrix().clone().cholesky().is_none() {
            return Err(Error::NotPd { min_eigenvalue: kw.min_eigenvalue() });
        }
        Ok(Self { kw_blocks, a })
    }

    pub fn descriptions(&self) -> usize {
        self.kw_blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn assembled(&self) -> SymMatrix {
        assemble_kw(&self.kw_blocks, &self.a).expect("validated at construction")
    }

    /// Blocks indexed by `s`, in increasing order.
    pub fn restricted(&self, s: Subset) -> Vec<SymMatrix> {
        s.members().map(|l| self.kw_blocks[l].clone()).collect()
    }

    /// The channel seen through `M ↦ S·M·S`.
    pub fn congruence(&self, s: &SymMatrix) -> Result<TestChannel> {
        TestChannel::new(self.kw_blocks.iter().map(|k| k.sandwich(s)).collect(), self.a.sandwich(s))
    }
}

/// Set of descriptions as a bitmask; the lowest bit is description 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset(pub u32);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn full(l: usize) -> Subset {
        Subset(((1u64 << l) - 1) as u32)
    }

    pub fn singleton(l: usize) -> Subset {
        Subset(1 << l)
    }

    pub fn from_members(members: &[usize]) -> Subset {
        Subset(members.iter().fold(0, |m, &l| m | (1 << l)))
    }

    pub fn contains(self, l: usize) -> bool {
        self.0 >> l & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Subset) -> Subset {
        Subset(self.0 | other.0)
    }

    pub fn intersection(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    pub fn with(self, l: usize) -> Subset {
        Subset(self.0 | 1 << l)
    }

    /// 0-based members in increasing order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&l| self.contains(l))
    }

    /// All nonempty subsets of `{0, …, l−1}` in bitmask order.
    pub fn all_nonempty(l: usize) -> impl Iterator<Item = Subset> {
        (1..=Subset::full(l).0).map(Subset)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.members().map(|l| (l + 1).to_string()).join(","))
    }
}

impl Serialize for Subset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.0)
    }
}

fn check_channel(kx: &SymMatrix, tc: &TestChannel) -> Result<()> {
    if kx.dim() != tc.dim() {
        return Err(Error::Dimension(format!("Kx is {0}x{0}, channel is {1}x{1}", kx.dim(), tc.dim())));
    }
    Ok(())
}

/// `φ(S) = ½ log( Π_{l∈S} |Kx+Kwl| / |Kw_S| )`, the rate needed by the
/// descriptions in `S` together.
pub fn phi(s: Subset, kx: &SymMatrix, tc: &TestChannel) -> Result<f64> {
    check_channel(kx, tc)?;
    if s.is_empty() {
        return Ok(0.0);
    }
    if s.members().any(|l| l >= tc.descriptions()) {
        return Err(Error::InvalidArgument(format!("subset {s} exceeds L = {}", tc.descriptions())));
    }
    let blocks = tc.restricted(s);
    let kw_s = assemble_kw(&blocks, &tc.a)?;
    let log_kw = kw_s.log_det()?;
    let mut v = -log_kw;
    for b in &blocks {
        v += (kx + b).log_det()?;
    }
    Ok(0.5 * v)
}

/// Sum rate achieved by a channel, `φ({1…L})`.
pub fn achievable_sum_rate(kx: &SymMatrix, tc: &TestChannel) -> Result<crate::bounds::RateNats> {
    phi(Subset::full(tc.descriptions()), kx, tc).map(crate::bounds::RateNats)
}

/// `φ` on every subset, indexed by bitmask.
pub fn phi_table(kx: &SymMatrix, tc: &TestChannel) -> Result<Vec<f64>> {
    let l = tc.descriptions();
    (0..=Subset::full(l).0).map(|m| phi(Subset(m), kx, tc)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolymatroidCheck {
    pub holds: bool,
    /// Smallest slack over all checked inequalities (negative = violated).
    pub worst_margin: f64,
    /// Subset pair attaining `worst_margin`.
    pub worst_pair: Option<(Subset, Subset)>,
    pub inequalities: usize,
}

/// Checks `φ(S∪{t}) ≥ φ(S)` and `φ(S∪T) + φ(S∩T) ≥ φ(S) + φ(T)`, over all
/// pairs for `L ≤ 6` and over `sample_budget` random pairs beyond.
pub fn is_contra_polymatroid(
    kx: &SymMatrix,
    tc: &TestChannel,
    sample_budget: usize,
) -> Result<PolymatroidCheck> {
    let l = tc.descriptions();
    let table = phi_table(kx, tc)?;
    let mut worst = f64::INFINITY;
    let mut worst_pair = None;
    let mut count = 0;
    let mut record = |margin: f64, s: Subset, t: Subset| {
        count += 1;
        if margin < worst {
            worst = margin;
            worst_pair = Some((s, t));
        }
    };
    let full = Subset::full(l).0;
    for m in 0..=full {
        for t in 0..l {
            if !Subset(m).contains(t) {
                let up = Subset(m).with(t);
                record(table[up.0 as usize] - table[m as usize], Subset(m), Subset::singleton(t));
            }
        }
    }
    let mut supermodular = |s: u32, t: u32| {
        let margin = table[(s | t) as usize] + table[(s & t) as usize]
            - table[s as usize]
            - table[t as usize];
        record(margin, Subset(s), Subset(t));
    };
    if l <= MAX_EXHAUSTIVE {
        for s in 0..=full {
            for t in s + 1..=full {
                supermodular(s, t);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9017_3a70);
        for _ in 0..sample_budget {
            supermodular(rng.random_range(0..=full), rng.random_range(0..=full));
        }
    }
    Ok(PolymatroidCheck { holds: worst >= -CONSTRAINT_TOL, worst_margin: worst, worst_pair, inequalities: count })
}

/// One vertex of the rate region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vertex {
    /// Permutation of 0-based descriptions.
    pub order: Vec<usize>,
    /// Rate of each description, indexed by description.
    pub rates: Vec<f64>,
}

/// `Σ_{l∈S} R_l ≥ bound`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constraint {
    pub subset: Subset,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRegion {
    pub descriptions: usize,
    pub constraints: Vec<Constraint>,
    pub vertices: Vec<Vertex>,
}

impl RateRegion {
    /// Smallest slack of `rates` over all constraints.
    pub fn slack(&self, rates: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.subset.members().map(|l| rates[l]).sum::<f64>() - c.bound)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, rates: &[f64]) -> bool {
        rates.len() == self.descriptions && self.slack(rates) >= -CONSTRAINT_TOL
    }

    /// Smallest slack of any vertex against any constraint.
    pub fn vertex_slack(&self) -> f64 {
        self.vertices.iter().map(|v| self.slack(&v.rates)).fold(f64::INFINITY, f64::min)
    }

    pub fn bound(&self, s: Subset) -> Option<f64> {
        self.constraints.iter().find(|c| c.subset == s).map(|c| c.bound)
    }
}

fn vertices_from_table(l: usize, table: &[f64]) -> Result<Vec<Vertex>> {
    if l > MAX_VERTEX_DESCRIPTIONS {
        return Err(Error::Unsupported(format!(
            "vertex enumeration is limited to L ≤ {MAX_VERTEX_DESCRIPTIONS}, got L = {l}"
        )));
    }
    Ok((0..l)
        .permutations(l)
        .map(|order| {
            let mut rates = vec![0.0; l];
            let mut prefix = Subset::EMPTY;
            for &d in &order {
                let next = prefix.with(d);
                rates[d] = table[next.0 as usize] - table[prefix.0 as usize];
                prefix = next;
            }
            Vertex { order, rates }
        })
        .collect())
}

/// The `L!` permutation vertices `b_i = φ({π1..πi}) − φ({π1..π_{i−1}})`.
pub fn vertices(kx: &SymMatrix, tc: &TestChannel) -> Result<Vec<Vertex>> {
    vertices_from_table(tc.descriptions(), &phi_table(kx, tc)?)
}

/// Region `{R : Σ_{l∈S} R_l ≥ φ(S)}` achieved by a channel.
pub fn channel_region(kx: &SymMatrix, tc: &TestChannel) -> Result<RateRegion> {
    let l = tc.descriptions();
    let table = phi_table(kx, tc)?;
    let constraints = Subset::all_nonempty(l)
        .map(|s| Constraint { subset: s, bound: table[s.0 as usize] })
        .collect();
    Ok(RateRegion { descriptions: l, constraints, vertices: vertices_from_table(l, &table)? })
}

/// Two-description rate region: the two individual bounds, the sum rate,
/// and the corners `B1`, `B2`.
pub fn two_description_region(inst: &MdInstance) -> Result<RateRegion> {
    let sol = two_description_solve(inst)?;
    let [b1, b2] = sol.corners;
    Ok(RateRegion {
        descriptions: 2,
        constraints: vec![
            Constraint { subset: Subset(0b01), bound: b1[0] },
            Constraint { subset: Subset(0b10), bound: b2[1] },
            Constraint { subset: Subset(0b11), bound: sol.sum_rate.0 },
        ],
        vertices: vec![
            Vertex { order: vec![0, 1], rates: b1.to_vec() },
            Vertex { order: vec![1, 0], rates: b2.to_vec() },
        ],
    })
}

/// Region for the subset distortions a channel induces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralRegion {
    pub region: RateRegion,
    /// `D_S` for every nonempty `S`, in bitmask order.
    pub distortions: Vec<(Subset, SymMatrix)>,
    /// Largest `|outer bound − φ(S)|` over all subsets.
    pub max_mismatch: f64,
}

/// For each nonempty `S`, takes `D_S = (Kx⁻¹ + (I…I) Kw_S⁻¹ (I…I)ᵗ)⁻¹` as
/// the distortion constraint of receiver `S` and evaluates the outer bound
/// on `Σ_{l∈S} R_l` at the auxiliary noise matched to the channel coupling.
/// For channels of the equal-coupling form the bound equals `φ(S)`, so
/// the region is exact for this distortion family.
pub fn general_region_from_channel(kx: &SymMatrix, tc: &TestChannel) -> Result<GeneralRegion> {
    check_channel(kx, tc)?;
    let l = tc.descriptions();
    let n = kx.dim();
    let t = inv_sqrt_pd(kx)?;
    let eye = SymMatrix::identity(n);
    let kx_inv = kx.inverse()?;
    let a_w = tc.a.sandwich(&t);
    let blocks_w: Vec<SymMatrix> = tc.kw_blocks.iter().map(|k| k.sandwich(&t)).collect();
    let table = phi_table(kx, tc)?;
    let mut constraints = Vec::new();
    let mut distortions = Vec::new();
    let mut max_mismatch: f64 = 0.0;
    for s in Subset::all_nonempty(l) {
        let blocks = tc.restricted(s);
        let d_s = (&kx_inv + &collapsed_inverse(&blocks, &tc.a)?).inverse()?;
        // whitened: K_S + A = (Σ_S (K_l + A)⁻¹)⁻¹
        let mut acc = SymMatrix::zeros(n);
        for l in s.members() {
            acc = &acc + &(&blocks_w[l] + &a_w).inverse()?;
        }
        let ks_plus_a = acc.inverse()?;
        let ks = &ks_plus_a - &a_w;
        let mut v = ks_plus_a.log_det()? - ks.log_det()?;
        for l in s.members() {
            v += (&eye + &blocks_w[l]).log_det()? - (&blocks_w[l] + &a_w).log_det()?;
        }
        let bound = 0.5 * v;
        max_mismatch = max_mismatch.max((bound - table[s.0 as usize]).abs());
        constraints.push(Constraint { subset: s, bound });
        distortions.push((s, d_s));
    }
    let region = RateRegion { descriptions: l, constraints, vertices: vertices_from_table(l, &table)? };
    Ok(GeneralRegion { region, distortions, max_mismatch })
}

/// Outcome of the separate-constraint search. `Unknown` does not mean the
/// rate pair is infeasible.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    Achievable {
        /// Full-size distortion constraints whose two-description region
        /// contains the rate pair.
        d1_completion: SymMatrix,
        d2_completion: SymMatrix,
        sum_rate: f64,
        individual: [f64; 2],
        candidates_tried: usize,
    },
    Unknown {
        candidates_tried: usize,
    },
}

/// Separate-constraint problem: description 1 serves the first `n1`
/// source coordinates under `D1`, description 2 the remaining ones under
/// `D2`, and the central receiver the whole source under `D0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparateProblem {
    pub kx: SymMatrix,
    pub n1: usize,
    pub d1: SymMatrix,
    pub d2: SymMatrix,
    pub d0: SymMatrix,
}

const SHRINK: [f64; 4] = [0.0, 0.1, 0.3, 0.6];
const CROSS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const SCHUR_THETA: [f64; 5] = [0.5, 0.05, 0.25, 0.75, 0.95];
const RANDOM_THETA: usize = 2;

fn index_range(lo: usize, hi: usize) -> Vec<usize> {
    (lo..hi).collect()
}

fn cross_block(m: &SymMatrix, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m.get(rows[i], cols[j]))
}

fn from_blocks(
    n: usize,
    idx: &[usize],
    rest: &[usize],
    top: &SymMatrix,
    c: &DMatrix<f64>,
    s: &SymMatrix,
) -> SymMatrix {
    let mut m = DMatrix::zeros(n, n);
    for (i, &r) in idx.iter().enumerate() {
        for (j, &q) in idx.iter().enumerate() {
            m[(r, q)] = top.get(i, j);
        }
        for (j, &q) in rest.iter().enumerate() {
            m[(r, q)] = c[(i, j)];
            m[(q, r)] = c[(i, j)];
        }
    }
    for (i, &r) in rest.iter().enumerate() {
        for (j, &q) in rest.iter().enumerate() {
            m[(r, q)] = s.get(i, j);
        }
    }
    SymMatrix::symmetrized(m)
}

/// Full-size completions of `block` on coordinates `idx`, each strictly
/// between `D0` and `Kx`.
fn completions(p: &SeparateProblem, block: &SymMatrix, idx: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<SymMatrix>> {
    let n = p.kx.dim();
    let rest: Vec<usize> = (0..n).filter(|i| !idx.contains(i)).collect();
    let d0_ii = p.d0.principal(idx);
    let kx_ii = p.kx.principal(idx);
    let delta = block - &d0_ii;
    let mut out = Vec::new();
    let mut thetas: Vec<SymMatrix> = SCHUR_THETA
        .iter()
        .map(|&v| SymMatrix::scaled_identity(rest.len().max(1), v))
        .collect();
    for _ in 0..RANDOM_THETA {
        let k = rest.len().max(1);
        let g = DMatrix::from_fn(k, k + 2, |_, _| rng.random::<f64>() - 0.5);
        let w = SymMatrix::symmetrized(&g * g.transpose());
        // map the spectrum into (0, 1)
        thetas.push(w.map_spectrum(|v| v / (1.0 + v)));
    }
    for &t in &SHRINK {
        let top = block - &(&delta * t);
        if rest.is_empty() {
            out.push(top);
            continue;
        }
        let top_gap = &top - &d0_ii;
        let top_room = &kx_ii - &top;
        if !(top_gap.min_eigenvalue() > 0.0 && top_room.min_eigenvalue() > 0.0) {
            continue;
        }
        let d0_ij = cross_block(&p.d0, idx, &rest);
        let kx_ij = cross_block(&p.kx, idx, &rest);
        for &rho in &CROSS {
            let c = &d0_ij + (&kx_ij - &d0_ij) * rho;
            let below = &c - &d0_ij;
            let above = &kx_ij - &c;
            let low = &p.d0.principal(&rest)
                + &SymMatrix::symmetrized(below.transpose() * top_gap.inverse()?.as_matrix() * &below);
            let high = &p.kx.principal(&rest)
                - &SymMatrix::symmetrized(above.transpose() * top_room.inverse()?.as_matrix() * &above);
            let gap = &high - &low;
            if !(gap.min_eigenvalue() > 0.0) {
                continue;
            }
            let gap_half = sqrt_psd(&gap)?;
            for theta in &thetas {
                let s = &low + &theta.sandwich(&gap_half);
                out.push(from_blocks(n, idx, &rest, &top, &c, &s));
            }
        }
    }
    Ok(out)
}

/// Searches completions `D1'`, `D2'` with `(D1')_{1..N1} ≼ D1` and
/// `(D2')_{N1+1..N} ≼ D2` whose two-description region contains `rates`.
/// Sound (every witness re-verifies) but incomplete. `budget` caps the
/// number of completion pairs whose sum rate is computed.
pub fn separate_constraint_certificate(
    p: &SeparateProblem,
    rates: [f64; 2],
    budget: usize,
) -> Result<Certificate> {
    let n = p.kx.dim();
    if p.n1 == 0 || p.n1 >= n || p.d1.dim() != p.n1 || p.d2.dim() != n - p.n1 || p.d0.dim() != n {
        return Err(Error::Dimension(format!(
            "separate problem: N = {n}, N1 = {}, D1 {1}x{1}, D2 {2}x{2}, D0 {3}x{3}",
            p.n1,
            p.d1.dim(),
            p.d2.dim(),
            p.d0.dim()
        )));
    }
    let idx1 = index_range(0, p.n1);
    let idx2 = index_range(p.n1, n);
    let probe = MdInstance::new(p.kx.clone(), vec![p.d0.clone()], p.d0.clone())?;
    let mut failures: Vec<String> = probe
        .validate()
        .violations
        .into_iter()
        .filter(|v| !v.predicate.starts_with("D0 ≺"))
        .map(|v| v.to_string())
        .collect();
    for (name, block, idx) in [("D1", &p.d1, &idx1), ("D2", &p.d2, &idx2)] {
        let sub = MdInstance::new(p.kx.principal(idx), vec![block.clone()], p.d0.principal(idx))?;
        failures.extend(sub.validate().violations.into_iter().map(|v| format!("{name} block: {v}")));
    }
    if !failures.is_empty() {
        return Err(Error::InvalidInstance(failures));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5e9a_2a7e);
    let c1 = completions(p, &p.d1, &idx1, &mut rng)?;
    let c2 = completions(p, &p.d2, &idx2, &mut rng)?;
    let log_kx = p.kx.log_det()?;
    let indiv = |d: &SymMatrix| -> Result<f64> { Ok(0.5 * (log_kx - d.log_det()?)) };
    let mut tried = 0;
    for d1 in &c1 {
        let b1 = indiv(d1)?;
        if rates[0] < b1 - CONSTRAINT_TOL {
            continue;
        }
        for d2 in &c2 {
            let b2 = indiv(d2)?;
            if rates[1] < b2 - CONSTRAINT_TOL {
                continue;
            }
            if tried >= budget {
                return Ok(Certificate::Unknown { candidates_tried: tried });
            }
            let inst = MdInstance::new(p.kx.clone(), vec![d1.clone(), d2.clone()], p.d0.clone())?;
            if !inst.validate().is_valid() {
                continue;
            }
            tried += 1;
            let sol = two_description_solve(&inst)?;
            if rates[0] + rates[1] >= sol.sum_rate.0 - CONSTRAINT_TOL {
                return Ok(Certificate::Achievable {
                    d1_completion: d1.clone(),
                    d2_completion: d2.clone(),
                    sum_rate: sol.sum_rate.0,
                    individual: [b1, b2],
                    candidates_tried: tried,
                });
            }
        }
    }
    Ok(Certificate::Unknown { candidates_tried: tried })
}
