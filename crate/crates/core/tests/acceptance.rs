//! Acceptance criteria 1–10. Each test writes one `PASS`/`FAIL` line to
//! stderr (bypassing the harness capture) before asserting.
//!
//! Reference values come from oracles written here: closed forms, dense
//! determinants and principal submatrices, constructed KKT points.

use std::io::Write as _;
use std::time::{Duration, Instant};

use mdrate::bounds::sup_lower_bound;
use mdrate::kkt::{gradient_f, objective_f, sum_rate, KktCase};
use mdrate::matcore::{assemble_kw, collapsed_inverse, collapsed_inverse_dense, sqrt_psd};
use mdrate::mc::{independence_check, sample_verify};
use mdrate::region::{channel_region, is_contra_polymatroid, Subset, TestChannel};
use mdrate::riccati::{check_sufficient, solve_riccati};
use mdrate::scalar::{ScalarCase, ScalarInstance};
use mdrate::{MdInstance, SymMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// pinned tolerances
const C1_RATE_TOL: f64 = 1e-9;
const C1_GRID_GAP: f64 = 5e-3;
const C1_GRID_OVERSHOOT: f64 = 1e-9;
const C1_BUDGET: usize = 100_000;
const C1_TIME: Duration = Duration::from_secs(1);
const C2_RATE_TOL: f64 = 1e-9;
const C3_ROOT_TOL: f64 = 1e-10;
const C3_RATE_TOL: f64 = 1e-8;
const C3_GRID_GAP: f64 = 5e-3;
const C4_RESIDUAL: f64 = 1e-8;
const C4_TIME: Duration = Duration::from_secs(5);
const C5_DUALITY_GAP: f64 = 1e-2;
const C5_STATIONARITY: f64 = 1e-6;
const C5_SLACKNESS: f64 = 1e-7;
const C5_BUDGET: usize = 100_000;
const C5_TIME: Duration = Duration::from_secs(60);
const C6_REL_ERR: f64 = 1e-10;
const C6_CORE_RESIDUAL: f64 = 1e-8;
const C8_REL_FROB: f64 = 0.02;
const C8_INDEPENDENCE: f64 = 1e-10;
const C8_SAMPLES: usize = 1_000_000;
const C8_TIME: Duration = Duration::from_secs(30);
const C9_TIGHT: f64 = 1e-9;
const C10_RATE_TOL: f64 = 1e-8;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance C{id:02} {verdict} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------------------
// random instances

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn orthogonal(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    gaussian(r, n, n).qr().q()
}

/// `Q diag(values) Qᵗ`
fn with_spectrum(q: &DMatrix<f64>, values: &[f64]) -> SymMatrix {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values));
    SymMatrix::new(q * d * q.transpose()).unwrap()
}

/// Random SPD matrix with spectrum in `[lo, hi]`.
fn spd(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> SymMatrix {
    let q = orthogonal(r, n);
    let values: Vec<f64> = (0..n).map(|_| r.random_range(lo..hi)).collect();
    with_spectrum(&q, &values)
}

/// `Kx`, `D_l = S U_l S`, `D0 = S V S` with `V ≺ U_l ≺ I`, `S = Kx^{1/2}`.
fn random_instance(r: &mut ChaCha8Rng, n: usize, l: usize, identity_kx: bool) -> MdInstance {
    let kx = if identity_kx { SymMatrix::identity(n) } else { spd(r, n, 0.3, 4.0) };
    let s = sqrt_psd(&kx).unwrap();
    let us: Vec<SymMatrix> = (0..l).map(|_| spd(r, n, 0.2, 0.95)).collect();
    let floor = us.iter().map(SymMatrix::min_eigenvalue).fold(f64::INFINITY, f64::min);
    let v = &spd(r, n, 0.3, 1.0) * (r.random_range(0.1..0.95) * floor);
    let d = us.iter().map(|u| u.sandwich(&s)).collect();
    MdInstance::validated(kx, d, v.sandwich(&s)).unwrap()
}

/// `T M Tᵗ` applied to every matrix of the instance.
fn transform(inst: &MdInstance, t: &DMatrix<f64>) -> MdInstance {
    let c = |m: &SymMatrix| SymMatrix::new(t * m.as_matrix() * t.transpose()).unwrap();
    MdInstance::validated(c(&inst.kx), inst.d.iter().map(c).collect(), c(&inst.d0)).unwrap()
}

fn dist_of_noise_whitened(kw: &SymMatrix) -> SymMatrix {
    (&kw.inverse().unwrap() + &SymMatrix::identity(kw.dim())).inverse().unwrap()
}

fn log_det(m: &DMatrix<f64>) -> f64 {
    let c = m.clone().cholesky().expect("positive definite");
    2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

// ---------------------------------------------------------------------------

/// Scalar closed form: `a* = σ² − 2σ0²` for two equal descriptions, rate
/// `½ log((σx² + σ²)² / (σ⁴ − a²))`.
#[test]
fn c01_flagship_scalar() {
    let start = Instant::now();
    let (sx, d, d0) = (1.0f64, 0.5f64, 0.2f64);
    let s2 = d * sx / (sx - d);
    let s02 = d0 * sx / (sx - d0);
    let a_ref = s2 - 2.0 * s02;
    let rate_ref = 0.5 * ((sx + s2).powi(2) / (s2 * s2 - a_ref * a_ref)).ln();
    assert!((rate_ref - 0.5 * (16.0f64 / 3.0).ln()).abs() < 1e-15);

    let sol = ScalarInstance::new(sx, vec![d, d], d0).unwrap().solve().unwrap();
    let inst = MdInstance::scalar(sx, &[d, d], d0).unwrap();
    let sup = sup_lower_bound(&inst, C1_BUDGET).unwrap().value.0;
    let elapsed = start.elapsed();

    let a_err = (sol.a_star - a_ref).abs();
    let rate_err = (sol.sum_rate.0 - rate_ref).abs();
    let pass = a_err <= C1_RATE_TOL
        && rate_err <= C1_RATE_TOL
        && rate_ref - sup <= C1_GRID_GAP
        && sup - rate_ref <= C1_GRID_OVERSHOOT
        && elapsed < C1_TIME;
    report(
        1,
        "flagship scalar",
        pass,
        format!(
            "a*={:.12} (err {a_err:.1e}), rate err {rate_err:.1e}, grid {sup:.9} (gap {:.1e}), {:.3}s",
            sol.a_star,
            rate_ref - sup,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c02_scalar_three_cases() {
    let both = |d: f64| 0.5 * (1.0 / d).ln();
    let cases = [
        (vec![0.5, 0.5], 0.2, ScalarCase::Case1, 0.5 * (16.0f64 / 3.0).ln()),
        (vec![0.5, 0.5], 1.0 / 3.0, ScalarCase::Case2, both(0.5) + both(0.5)),
        (vec![0.9, 0.9], 0.7, ScalarCase::Case3, both(0.7)),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (d, d0, case, expect) in cases.clone() {
        let sol = ScalarInstance::new(1.0, d, d0).unwrap().solve().unwrap();
        let err = (sol.sum_rate.0 - expect).abs();
        pass &= sol.case == case && err <= C2_RATE_TOL;
        detail.push(format!("{:?} {:.9} (err {err:.1e})", sol.case, sol.sum_rate.0));
    }
    assert!((cases[0].3 - 0.83699).abs() < 5e-6);
    report(2, "scalar three-case suite", pass, detail.join(", "));
}

/// Root of `1/(σ0² + a) = 3/(σ² + a)` and the rate from a dense 3×3
/// determinant.
#[test]
fn c03_three_descriptions() {
    let (s2, s02): (f64, f64) = (0.4 / 0.6, 0.15 / 0.85);
    let a_ref = (s2 - 3.0 * s02) / 2.0;
    assert!((a_ref - 7.0 / 102.0).abs() < 1e-15);
    let kw = DMatrix::from_fn(3, 3, |i, j| if i == j { s2 } else { -a_ref });
    let rate_ref = 0.5 * (3.0 * (1.0 + s2).ln() - kw.determinant().ln());

    let sol = ScalarInstance::new(1.0, vec![0.4; 3], 0.15).unwrap().solve().unwrap();
    let inst = MdInstance::scalar(1.0, &[0.4; 3], 0.15).unwrap();
    let sup = sup_lower_bound(&inst, 100_000).unwrap().value.0;

    let a_err = (sol.a_star - 7.0 / 102.0).abs();
    let rate_err = (sol.sum_rate.0 - rate_ref).abs();
    let pass = sol.case == ScalarCase::Case1
        && a_err <= C3_ROOT_TOL
        && rate_err <= C3_RATE_TOL
        && (rate_ref - sup).abs() <= C3_GRID_GAP
        && (rate_ref - 1.3918).abs() < 1e-4;
    report(
        3,
        "three descriptions",
        pass,
        format!("a* err {a_err:.1e}, rate {:.9} (err {rate_err:.1e}), grid gap {:.1e}", sol.sum_rate.0, rate_ref - sup),
    );
}

/// Instances whose whitened distortions satisfy both strict conditions:
/// `U1, U2` with spectra in `(0.3, 0.5)` and `V = c (U1⁻¹ + U2⁻¹ − I)⁻¹`.
fn sufficient_instance(r: &mut ChaCha8Rng, n: usize) -> MdInstance {
    let kx = spd(r, n, 0.3, 4.0);
    let s = sqrt_psd(&kx).unwrap();
    let u1 = spd(r, n, 0.3, 0.5);
    let u2 = spd(r, n, 0.3, 0.5);
    let sum = &(&u1.inverse().unwrap() + &u2.inverse().unwrap()) - &SymMatrix::identity(n);
    let v = &sum.inverse().unwrap() * r.random_range(0.3..0.95);
    MdInstance::validated(kx, vec![u1.sandwich(&s), u2.sandwich(&s)], v.sandwich(&s)).unwrap()
}

#[test]
fn c04_riccati() {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    let mut sufficient = 0;
    let mut interior_failures = 0;
    for i in 0..100 {
        let n = 1 + i % 6;
        let inst = if i % 2 == 0 { sufficient_instance(&mut r, n) } else { random_instance(&mut r, n, 2, false) };
        let (kw0, kw) = inst.noise_covariances().unwrap();
        let sol = solve_riccati(&kw[0], &kw[1], &kw0).unwrap();
        // residual recomputed here from the returned X
        let x = sol.x.as_matrix();
        let m = (&kw[0] - &kw0).into_matrix();
        let resid = x * m.clone().try_inverse().unwrap() * x - x * 2.0 - kw[1].as_matrix() + kw[0].as_matrix();
        worst = worst.max(resid.norm() / x.norm());
        if check_sufficient(&inst).unwrap().interior_guaranteed {
            sufficient += 1;
            let a = &sol.a_star;
            if !(a.min_eigenvalue() > 0.0 && (&inst.kx - a).min_eigenvalue() > 0.0) {
                interior_failures += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= C4_RESIDUAL && sufficient >= 50 && interior_failures == 0 && elapsed < C4_TIME;
    report(
        4,
        "Riccati residual and interior coupling",
        pass,
        format!(
            "max rel residual {worst:.1e}, {sufficient} sufficient cases, {interior_failures} non-interior, {:.3}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Builds a whitened instance from a chosen KKT point: blocks `Kw_l`,
/// coupling `A* = Q diag(a) Qᵗ` and multipliers supported on the active
/// eigenvectors, with `Kw0 = (Σ(Kw_l + A*)⁻¹ − Λ1 + Λ2)⁻¹ − A*`.
fn kkt_instance(r: &mut ChaCha8Rng, case: KktCase, n: usize, l: usize) -> Option<(MdInstance, SymMatrix)> {
    let q = orthogonal(r, n);
    let mut a = vec![0.0; n];
    let mut lam1 = vec![0.0; n];
    let mut lam2 = vec![0.0; n];
    let (zeros, ones) = match case {
        KktCase::Interior => (0, 0),
        KktCase::ZeroEigs => (r.random_range(1..=n), 0),
        KktCase::OneEigs => (0, r.random_range(1..=n)),
        KktCase::Both => {
            let z = r.random_range(1..n);
            (z, r.random_range(1..=n - z))
        }
    };
    for j in 0..n {
        if j < zeros {
            lam1[j] = r.random_range(0.05..0.5);
        } else if j < zeros + ones {
            a[j] = 1.0;
            lam2[j] = r.random_range(0.05..0.5);
        } else {
            a[j] = r.random_range(0.15..0.85);
        }
    }
    let a = with_spectrum(&q, &a);
    let lam1 = with_spectrum(&q, &lam1);
    let lam2 = with_spectrum(&q, &lam2);
    // wide log-uniform spectra: a unit eigenvalue of A* needs Σ(Kw_l + I)⁻¹ ≺ I there
    let kw: Vec<SymMatrix> = (0..l)
        .map(|_| {
            let q = orthogonal(r, n);
            let values: Vec<f64> = (0..n).map(|_| r.random_range(0.3f64.ln()..30f64.ln()).exp()).collect();
            with_spectrum(&q, &values)
        })
        .collect();
    let mut m = &lam2 - &lam1;
    for k in &kw {
        m = &m + &(k + &a).inverse().unwrap();
    }
    if m.min_eigenvalue() <= 1e-6 {
        return None;
    }
    let kw0 = &m.inverse().unwrap() - &a;
    if kw0.min_eigenvalue() <= 1e-6 || kw.iter().any(|k| (k - &kw0).min_eigenvalue() <= 1e-6) {
        return None;
    }
    let d: Vec<SymMatrix> = kw.iter().map(dist_of_noise_whitened).collect();
    if (&d[l - 1] - &lam2).min_eigenvalue() <= 1e-6 {
        return None;
    }
    let d0 = dist_of_noise_whitened(&kw0);
    let kx = spd(r, n, 0.3, 4.0);
    let s = sqrt_psd(&kx).unwrap();
    let inst = MdInstance::validated(kx, d.iter().map(|m| m.sandwich(&s)).collect(), d0.sandwich(&s)).ok()?;
    Some((inst, a))
}

#[test]
fn c05_duality_match() {
    let start = Instant::now();
    let mut r = rng(5);
    let cases = [KktCase::Interior, KktCase::ZeroEigs, KktCase::OneEigs, KktCase::Both];
    let mut seen = [0usize; 4];
    let mut worst_gap: f64 = 0.0;
    let mut worst_stat: f64 = 0.0;
    let mut worst_slack: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    let mut mismatched = Vec::new();
    for i in 0..50 {
        let case = cases[i % 4];
        let n = if case == KktCase::Both { r.random_range(2..=4) } else { r.random_range(1..=4) };
        let l = r.random_range(2..=4);
        let (inst, a_ref) = (0..10_000)
            .find_map(|_| kkt_instance(&mut r, case, n, l))
            .expect("constructible instance");
        let res = sum_rate(&inst).unwrap();
        let sup = sup_lower_bound(&inst, C5_BUDGET).unwrap().value.0;
        if res.case != case {
            mismatched.push(format!("#{i} built {} got {}", case.as_str(), res.case.as_str()));
        }
        seen[cases.iter().position(|c| *c == res.case).unwrap()] += 1;
        worst_gap = worst_gap.max((res.achievable_rate.0 - sup).abs());
        worst_stat = worst_stat.max(res.solution.stationarity);
        worst_slack = worst_slack.max(res.solution.slackness);
        worst_a = worst_a.max(res.solution.a_star.max_abs_diff(&a_ref));
    }
    let elapsed = start.elapsed();
    let pass = worst_gap <= C5_DUALITY_GAP
        && worst_stat <= C5_STATIONARITY
        && worst_slack <= C5_SLACKNESS
        && seen.iter().all(|&c| c > 0)
        && mismatched.is_empty()
        && elapsed < C5_TIME;
    report(
        5,
        "duality match over all KKT cases",
        pass,
        format!(
            "cases {seen:?}, max |achievable − grid| {worst_gap:.1e}, stationarity {worst_stat:.1e}, \
             slackness {worst_slack:.1e}, max |A* − built| {worst_a:.1e}, mismatches {mismatched:?}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c06_collapsed_inverse_and_positive_definiteness() {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 200 {
        let n = r.random_range(1..=6);
        let l = r.random_range(1..=5);
        let blocks: Vec<SymMatrix> = (0..l).map(|_| spd(&mut r, n, 0.2, 3.0)).collect();
        let top = r.random_range(0.01..1.0);
        let a = spd(&mut r, n, 0.0, top);
        let kw = assemble_kw(&blocks, &a).unwrap();
        if kw.min_eigenvalue() <= 1e-8 {
            continue;
        }
        let fast = collapsed_inverse(&blocks, &a).unwrap();
        let dense = collapsed_inverse_dense(&blocks, &a).unwrap();
        worst = worst.max((fast.as_matrix() - dense.as_matrix()).norm() / dense.frobenius_norm());
        tested += 1;
    }

    let mut core_checked = 0;
    let mut not_pd = 0;
    for _ in 0..400 {
        let n = r.random_range(1..=6);
        let l = r.random_range(1..=5);
        let blocks: Vec<SymMatrix> = (0..l).map(|_| spd(&mut r, n, 0.2, 3.0)).collect();
        let top = r.random_range(0.05..2.0);
        let a = spd(&mut r, n, 0.01, top);
        let sum = blocks.iter().fold(SymMatrix::zeros(n), |acc, b| &acc + &(b + &a).inverse().unwrap());
        let kw0 = &sum.inverse().unwrap() - &a;
        if kw0.min_eigenvalue() <= 0.0 {
            continue;
        }
        let resid = &(&kw0 + &a).inverse().unwrap() - &sum;
        if resid.frobenius_norm() > C6_CORE_RESIDUAL * sum.frobenius_norm() {
            continue;
        }
        core_checked += 1;
        // dense assembly in the test: Kw_l on the diagonal, −A off it
        let mut big = DMatrix::zeros(l * n, l * n);
        for (i, diag) in blocks.iter().enumerate() {
            for j in 0..l {
                let block = if i == j { diag.as_matrix().clone() } else { -a.as_matrix().clone() };
                big.view_mut((i * n, j * n), (n, n)).copy_from(&block);
            }
        }
        if big.symmetric_eigenvalues().min() <= 0.0 {
            not_pd += 1;
        }
    }
    let pass = worst <= C6_REL_ERR && core_checked >= 50 && not_pd == 0;
    report(
        6,
        "collapsed inverse and positive definiteness",
        pass,
        format!("max rel err {worst:.1e} over {tested}, {core_checked} core solutions, {not_pd} not PD"),
    );
}

#[test]
fn c07_gradient_check() {
    let mut r = rng(7);
    let eps = f64::EPSILON;
    let steps = [1e-3, 1e-4, 1e-5];
    let mut worst_second_ratio: f64 = 0.0;
    let mut worst_first_ratio: f64 = 0.0;
    let mut order_failures = 0;
    for _ in 0..20 {
        let n = r.random_range(1..=4);
        let l = r.random_range(1..=4);
        let inst = random_instance(&mut r, n, l, true);
        let (kw0, kw) = inst.noise_covariances().unwrap();
        let a = spd(&mut r, n, 0.1, 0.9);
        let e = {
            let g = gaussian(&mut r, n, n);
            let s = SymMatrix::new((&g + g.transpose()) * 0.5).unwrap();
            &s * (1.0 / s.frobenius_norm())
        };
        let f = |m: &SymMatrix| objective_f(m, &kw0, &kw).unwrap();
        let f0 = f(&a);
        let slope = gradient_f(&a, &kw0, &kw).unwrap().as_matrix().component_mul(e.as_matrix()).sum();
        let norms: Vec<f64> = std::iter::once(&kw0)
            .chain(kw.iter())
            .map(|k| (k + &a).inverse().unwrap().spectral_norm())
            .collect();
        // |F''| ≤ Σ‖X‖², |F'''| ≤ 2 Σ‖X‖³ with X = (Kw + A)⁻¹, ‖E‖_F = 1
        let second_bound = norms.iter().map(|v| v * v).sum::<f64>() * 1.1;
        let third_bound = 2.0 * norms.iter().map(|v| v * v * v).sum::<f64>() * 1.1;
        let scale: f64 = 1.0 + f0.abs() + std::iter::once(&kw0).chain(kw.iter()).map(|k| (k + &a).log_det().unwrap().abs()).sum::<f64>();
        let rounding = 64.0 * eps * scale;
        let mut errs = Vec::new();
        for &h in &steps {
            let plus = f(&(&a + &(&e * h)));
            let minus = f(&(&a - &(&e * h)));
            let second = (plus + minus - 2.0 * f0).abs() / (h * h);
            worst_second_ratio = worst_second_ratio.max(second / (second_bound + 4.0 * rounding / (h * h)));
            let err = ((plus - minus) / (2.0 * h) - slope).abs();
            worst_first_ratio = worst_first_ratio.max(err / (third_bound * h * h / 6.0 + rounding / h));
            errs.push((h, err));
        }
        // successive errors shrink by (h'/h)² until rounding takes over
        for w in errs.windows(2) {
            let ((h1, e1), (h2, e2)) = (w[0], w[1]);
            if e2 > 4.0 * e1 * (h2 / h1).powi(2) + 2.0 * rounding / h2 {
                order_failures += 1;
            }
        }
    }
    let pass = worst_second_ratio <= 1.0 && worst_first_ratio <= 1.0 && order_failures == 0;
    report(
        7,
        "gradient check",
        pass,
        format!(
            "second difference / bound {worst_second_ratio:.2}, central error / O(h²) bound {worst_first_ratio:.2}, \
             {order_failures} order failures"
        ),
    );
}

#[test]
fn c08_monte_carlo() {
    let start = Instant::now();
    let one = SymMatrix::scalar(1.0);
    let tc = TestChannel::new(vec![one.clone(), one.clone()], SymMatrix::scalar(0.5)).unwrap();
    let rep = sample_verify(&one, &tc, C8_SAMPLES, 20_241_014, Some(C8_REL_FROB)).unwrap();
    // analytic distortions of the flagship channel
    let targets = [0.5, 0.5, 0.2];
    let empirical: Vec<f64> = rep
        .empirical_dl
        .iter()
        .map(|m| m.get(0, 0))
        .chain(std::iter::once(rep.empirical_d0.get(0, 0)))
        .collect();
    let worst = empirical.iter().zip(targets).map(|(e, t)| (e - t).abs() / t).fold(0.0, f64::max);
    // Kz = Kx (Kx − A)⁻¹ Kx − Kx = 1 for A = 1/2
    let indep = independence_check(&one, &tc, &SymMatrix::scalar(0.5)).unwrap();
    let again = sample_verify(&one, &tc, C8_SAMPLES, 20_241_014, Some(C8_REL_FROB)).unwrap();
    let elapsed = start.elapsed();
    let pass = rep.pass
        && worst <= C8_REL_FROB
        && indep <= C8_INDEPENDENCE
        && again == rep
        && elapsed < C8_TIME;
    report(
        8,
        "Monte Carlo distortions",
        pass,
        format!(
            "empirical {empirical:.5?}, max rel err {worst:.2e}, independence {indep:.1e}, reproducible {}, {:.2}s",
            again == rep,
            elapsed.as_secs_f64()
        ),
    );
}

/// `φ(S) = ½[Σ_{l∈S} log|Kx + Kw_l| − log|Kw_S|]` from a dense assembly.
fn phi_oracle(kx: &SymMatrix, blocks: &[SymMatrix], a: &SymMatrix, s: u32) -> f64 {
    let n = kx.dim();
    let members: Vec<usize> = (0..blocks.len()).filter(|l| s >> l & 1 == 1).collect();
    if members.is_empty() {
        return 0.0;
    }
    let k = members.len();
    let mut sub = DMatrix::zeros(k * n, k * n);
    for (i, &p) in members.iter().enumerate() {
        for (j, &q) in members.iter().enumerate() {
            let block = if p == q { blocks[p].as_matrix().clone() } else { -a.as_matrix().clone() };
            sub.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
    }
    let marginals: f64 = members.iter().map(|&p| log_det(&(kx.as_matrix() + blocks[p].as_matrix()))).sum();
    0.5 * (marginals - log_det(&sub))
}

#[test]
fn c09_contra_polymatroid() {
    let mut r = rng(9);
    let mut worst_margin = f64::INFINITY;
    let mut worst_vertex_slack = f64::INFINITY;
    let mut worst_tight: f64 = 0.0;
    let mut library_agrees = true;
    let mut vertex_counts_ok = true;
    let mut inequalities = 0usize;
    let mut made = 0;
    while made < 20 {
        let n = r.random_range(1..=3);
        let l = 1 + made % 5;
        let kx = spd(&mut r, n, 0.3, 4.0);
        let blocks: Vec<SymMatrix> = (0..l).map(|_| spd(&mut r, n, 0.2, 3.0)).collect();
        let top = r.random_range(0.01..1.5);
        let a = spd(&mut r, n, 0.0, top);
        let Ok(tc) = TestChannel::new(blocks.clone(), a.clone()) else { continue };
        made += 1;
        let table: Vec<f64> = (0..1u32 << l).map(|s| phi_oracle(&kx, &blocks, &a, s)).collect();
        for s in 0..1u32 << l {
            for t in 0..l {
                if s >> t & 1 == 0 {
                    worst_margin = worst_margin.min(table[(s | 1 << t) as usize] - table[s as usize]);
                    inequalities += 1;
                }
            }
            for u in 0..1u32 << l {
                let m = table[(s | u) as usize] + table[(s & u) as usize] - table[s as usize] - table[u as usize];
                worst_margin = worst_margin.min(m);
                inequalities += 1;
            }
        }
        library_agrees &= is_contra_polymatroid(&kx, &tc, 0).unwrap().holds;
        let region = channel_region(&kx, &tc).unwrap();
        let factorial: usize = (1..=l).product();
        vertex_counts_ok &= region.vertices.len() == factorial;
        for v in &region.vertices {
            for s in Subset::all_nonempty(l) {
                let total: f64 = s.members().map(|p| v.rates[p]).sum();
                worst_vertex_slack = worst_vertex_slack.min(total - table[s.0 as usize]);
            }
            let mut prefix = 0u32;
            for &p in &v.order {
                prefix |= 1 << p;
                let total: f64 = (0..l).filter(|q| prefix >> q & 1 == 1).map(|q| v.rates[q]).sum();
                worst_tight = worst_tight.max((total - table[prefix as usize]).abs());
            }
        }
    }
    let pass = worst_margin >= -C9_TIGHT
        && worst_vertex_slack >= -C9_TIGHT
        && worst_tight <= C9_TIGHT
        && library_agrees
        && vertex_counts_ok;
    report(
        9,
        "contra-polymatroid region",
        pass,
        format!(
            "{inequalities} inequalities, worst margin {worst_margin:.1e}, worst vertex slack {worst_vertex_slack:.1e}, \
             nested tightness {worst_tight:.1e}, library agrees {library_agrees}"
        ),
    );
}

/// Per-coordinate scalar instance `(σx², d_l = σx² u_l, d0 = σx² t min u)`.
fn diagonal_instance(r: &mut ChaCha8Rng, n: usize, l: usize) -> (MdInstance, f64) {
    let mut kx = vec![0.0; n];
    let mut d = vec![vec![0.0; n]; l];
    let mut d0 = vec![0.0; n];
    let mut total = 0.0;
    for j in 0..n {
        let sx: f64 = r.random_range(0.5..3.0);
        let u: Vec<f64> = (0..l).map(|_| r.random_range(0.2..0.95)).collect();
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        let c0 = sx * lo * r.random_range(0.1..0.97);
        kx[j] = sx;
        for (k, uk) in u.iter().enumerate() {
            d[k][j] = sx * uk;
        }
        d0[j] = c0;
        let dl: Vec<f64> = u.iter().map(|uk| sx * uk).collect();
        total += ScalarInstance::new(sx, dl, c0).unwrap().solve().unwrap().sum_rate.0;
    }
    let inst = MdInstance::validated(
        SymMatrix::diagonal(&kx),
        d.iter().map(|v| SymMatrix::diagonal(v)).collect(),
        SymMatrix::diagonal(&d0),
    )
    .unwrap();
    (inst, total)
}

#[test]
fn c10_whitening_invariance() {
    let mut r = rng(10);
    let mut worst_whiten: f64 = 0.0;
    let mut worst_congruence: f64 = 0.0;
    for i in 0..30 {
        let n = 2 + i % 3;
        let l = 1 + i % 3;
        let inst = random_instance(&mut r, n, l, false);
        let rate = sum_rate(&inst).unwrap().sum_rate.0;
        let whitened = inst.whiten().unwrap().whitened;
        worst_whiten = worst_whiten.max((sum_rate(&whitened).unwrap().sum_rate.0 - rate).abs());
        // a non-symmetric invertible change of coordinates
        let t = gaussian(&mut r, n, n) * 0.3 + DMatrix::identity(n, n);
        if t.determinant().abs() > 1e-2 {
            let moved = transform(&inst, &t);
            worst_congruence = worst_congruence.max((sum_rate(&moved).unwrap().sum_rate.0 - rate).abs());
        }
    }
    let mut worst_diag: f64 = 0.0;
    let mut diag_cases: Vec<(MdInstance, f64)> = (0..20).map(|i| diagonal_instance(&mut r, 2 + i % 3, 2 + i % 2)).collect();
    // one coordinate on the full-coupling boundary, one interior
    diag_cases.push((
        MdInstance::validated(
            SymMatrix::identity(2),
            vec![SymMatrix::diagonal(&[0.9, 0.5]), SymMatrix::diagonal(&[0.9, 0.5])],
            SymMatrix::diagonal(&[0.7, 0.2]),
        )
        .unwrap(),
        0.5 * (1.0f64 / 0.7).ln() + 0.5 * (16.0f64 / 3.0).ln(),
    ));
    for (inst, expect) in &diag_cases {
        worst_diag = worst_diag.max((sum_rate(inst).unwrap().sum_rate.0 - expect).abs());
    }
    let pass = worst_whiten <= C10_RATE_TOL && worst_congruence <= C10_RATE_TOL && worst_diag <= C10_RATE_TOL;
    report(
        10,
        "whitening invariance",
        pass,
        format!(
            "max |whitened − original| {worst_whiten:.1e}, max |congruent − original| {worst_congruence:.1e}, \
             max |diagonal − scalar sum| {worst_diag:.1e} over {} diagonal instances",
            diag_cases.len()
        ),
    );
}
