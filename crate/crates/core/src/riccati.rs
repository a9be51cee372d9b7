//! Explicit two-description solution through the algebraic Riccati
//! equation `X M⁻¹ X = 2X + Kw2 − Kw1`, `M = Kw1 − Kw0`.

use serde::Serialize;

use crate::bounds::{central_bound, individual_bound, RateNats};
use crate::error::{Error, Result};
use crate::instance::{distortions_of_channel, noise_of_distortion, ChannelDistortions, MdInstance};
use crate::kkt::{self, KktCase};
use crate::matcore::{inv_sqrt_pd, sqrt_psd, SymMatrix};
use crate::region::{achievable_sum_rate, TestChannel};

/// Eigenvalue band treated as zero in the sign-definiteness tests.
const SIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub x: SymMatrix,
    pub a_star: SymMatrix,
    /// `‖X M⁻¹ X − 2X − Kw2 + Kw1‖_F / ‖X‖_F`
    pub relative_residual: f64,
}

impl RiccatiSolution {
    /// `0 ≺ A* ≺ Kx`, checked by eigenvalues.
    pub fn is_interior(&self, kx: &SymMatrix) -> bool {
        self.a_star.min_eigenvalue() > 0.0 && (kx - &self.a_star).min_eigenvalue() > 0.0
    }
}

/// `X = M + M^{1/2} [M^{-1/2} N M^{-1/2}]^{1/2} M^{1/2}` with
/// `M = Kw1 − Kw0`, `N = Kw2 − Kw0`, and `A* = X − Kw1`.
pub fn solve_riccati(kw1: &SymMatrix, kw2: &SymMatrix, kw0: &SymMatrix) -> Result<RiccatiSolution> {
    if kw1.dim() != kw0.dim() || kw2.dim() != kw0.dim() {
        return Err(Error::Dimension("Riccati blocks differ in size".into()));
    }
    let m = kw1 - kw0;
    let nn = kw2 - kw0;
    for (name, mat) in [("Kw0 ≺ Kw1", &m), ("Kw0 ≺ Kw2", &nn)] {
        let lo = mat.min_eigenvalue();
        if !(lo > 0.0) {
            return Err(Error::OrderingViolation(format!(
                "{name} fails (min eigenvalue of difference {lo:e})"
            )));
        }
    }
    let m_half = sqrt_psd(&m)?;
    let m_inv_half = inv_sqrt_pd(&m)?;
    let inner = sqrt_psd(&nn.sandwich(&m_inv_half))?;
    let x = &m + &inner.sandwich(&m_half);
    let a_star = &x - kw1;
    let resid = SymMatrix::symmetrized(x.mul_mat(&m.inverse()?) * x.as_matrix());
    let resid = &(&(&resid - &(&x * 2.0)) - kw2) + kw1;
    let relative_residual = resid.frobenius_norm() / x.frobenius_norm();
    Ok(RiccatiSolution { x, a_star, relative_residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sufficiency {
    /// Both matrix conditions hold strictly, so the Riccati coupling is
    /// interior.
    pub interior_guaranteed: bool,
    /// Smallest eigenvalue of `D0 + Kx − D1 − D2`.
    pub first_min_eigenvalue: f64,
    /// Smallest eigenvalue of `D0⁻¹ + Kx⁻¹ − D1⁻¹ − D2⁻¹`.
    pub second_min_eigenvalue: f64,
    pub first_max_eigenvalue: f64,
    pub second_max_eigenvalue: f64,
    /// Rounding bands for the two conditions.
    pub first_tol: f64,
    pub second_tol: f64,
}

impl Sufficiency {
    pub fn first_holds(&self) -> bool {
        self.first_min_eigenvalue > self.first_tol
    }

    pub fn second_holds(&self) -> bool {
        self.second_min_eigenvalue > self.second_tol
    }

    /// `D0⁻¹ + Kx⁻¹ − D1⁻¹ − D2⁻¹ ≼ 0`
    pub fn second_nonpositive(&self) -> bool {
        self.second_max_eigenvalue <= self.second_tol
    }

    /// `D0 + Kx − D1 − D2 ≼ 0`
    pub fn first_nonpositive(&self) -> bool {
        self.first_max_eigenvalue <= self.first_tol
    }
}

fn require_two(inst: &MdInstance) -> Result<()> {
    if inst.descriptions() != 2 {
        return Err(Error::InvalidArgument(format!(
            "two-description solver needs L = 2, got L = {}",
            inst.descriptions()
        )));
    }
    Ok(())
}

/// Evaluates `D0 + Kx − D1 − D2 ≻ 0` and `D0⁻¹ + Kx⁻¹ − D1⁻¹ − D2⁻¹ ≻ 0`.
pub fn check_sufficient(inst: &MdInstance) -> Result<Sufficiency> {
    require_two(inst)?;
    let first = &(&(&inst.d0 + &inst.kx) - &inst.d[0]) - &inst.d[1];
    let second = &(&(&inst.d0.inverse()? + &inst.kx.inverse()?) - &inst.d[0].inverse()?)
        - &inst.d[1].inverse()?;
    let f = first.eigenvalues();
    let s = second.eigenvalues();
    let n = f.len();
    let first_tol = SIGN_TOL * inst.kx.spectral_norm();
    let second_tol = SIGN_TOL * inst.d0.inverse()?.spectral_norm();
    Ok(Sufficiency {
        interior_guaranteed: f[0] > first_tol && s[0] > second_tol,
        first_min_eigenvalue: f[0],
        second_min_eigenvalue: s[0],
        first_max_eigenvalue: f[n - 1],
        second_max_eigenvalue: s[n - 1],
        first_tol,
        second_tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoDescriptionPath {
    /// Interior coupling from the Riccati solution.
    Riccati,
    /// `A* = 0`: the individual bounds add up to the sum rate.
    ZeroCoupling,
    /// `A* = Kx`: the central bound is the sum rate.
    FullCoupling,
    /// Neither matrix condition is sign-definite; solved by the general
    /// engine.
    General(KktCase),
}

impl TwoDescriptionPath {
    pub fn label(self) -> &'static str {
        match self {
            TwoDescriptionPath::Riccati => "Interior",
            TwoDescriptionPath::ZeroCoupling => "ZeroEigs",
            TwoDescriptionPath::FullCoupling => "OneEigs",
            TwoDescriptionPath::General(c) => c.as_str(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoDescription {
    pub sum_rate: RateNats,
    /// `B1 = (R1 bound, sum − R1 bound)`, `B2` symmetric.
    pub corners: [[f64; 2]; 2],
    pub channel: TestChannel,
    pub achieved: ChannelDistortions,
    pub path: TwoDescriptionPath,
    pub sufficiency: Sufficiency,
    /// Riccati residual when that path was taken.
    pub riccati_residual: Option<f64>,
}

/// Sum rate, corner points and optimal channel of a two-description instance.
pub fn two_description_solve(inst: &MdInstance) -> Result<TwoDescription> {
    require_two(inst)?;
    inst.ensure_valid()?;
    let suff = check_sufficient(inst)?;
    let r1 = individual_bound(inst, 0)?;
    let r2 = individual_bound(inst, 1)?;
    let (kw0, kw) = inst.noise_covariances()?;

    let mut riccati_residual = None;
    let (path, channel, sum) = if suff.interior_guaranteed {
        let sol = solve_riccati(&kw[0], &kw[1], &kw0)?;
        riccati_residual = Some(sol.relative_residual);
        let tc = TestChannel::new(kw.clone(), sol.a_star)?;
        let sum = achievable_sum_rate(&inst.kx, &tc)?;
        (TwoDescriptionPath::Riccati, tc, sum)
    } else if suff.second_nonpositive() {
        let tc = TestChannel::new(kw.clone(), SymMatrix::zeros(inst.dim()))?;
        (TwoDescriptionPath::ZeroCoupling, tc, r1 + r2)
    } else if suff.first_nonpositive() {
        let d2 = &(&inst.d0 + &inst.kx) - &inst.d[0];
        let kw2 = noise_of_distortion(&d2, &inst.kx)?;
        let tc = TestChannel::new(vec![kw[0].clone(), kw2], inst.kx.clone())?;
        (TwoDescriptionPath::FullCoupling, tc, central_bound(inst)?)
    } else {
        let r = kkt::sum_rate(inst)?;
        (TwoDescriptionPath::General(r.case), r.channel, r.sum_rate)
    };
    let achieved = distortions_of_channel(&inst.kx, &channel)?;
    Ok(TwoDescription {
        sum_rate: sum,
        corners: [[r1.0, sum.0 - r1.0], [sum.0 - r2.0, r2.0]],
        channel,
        achieved,
        path,
        sufficiency: suff,
        riccati_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn riccati_examples() {
        let i2 = SymMatrix::identity(2);
        let sol = solve_riccati(&i2, &i2, &(&i2 * 0.25)).unwrap();
        assert!(sol.x.max_abs_diff(&(&i2 * 1.5)) < 1e-14);
        assert!(sol.a_star.max_abs_diff(&(&i2 * 0.5)) < 1e-14);
        assert!(sol.relative_residual < 1e-14);

        let kw0 = SymMatrix::scalar(0.25);
        let sol = solve_riccati(&SymMatrix::scalar(1.0), &SymMatrix::scalar(2.0 / 3.0), &kw0).unwrap();
        let expect = 0.75 + (0.75f64 * (2.0 / 3.0 - 0.25)).sqrt();
        assert_relative_eq!(sol.x.get(0, 0), expect, epsilon = 1e-14);
        assert_relative_eq!(sol.x.get(0, 0), 1.30902, epsilon = 1e-5);

        for eps in [1e-3, 1e-6] {
            let k = &kw0 + &SymMatrix::scalar(eps);
            let sol = solve_riccati(&k, &k, &kw0).unwrap();
            assert!(sol.relative_residual <= 1e-8);
        }
        assert!(matches!(
            solve_riccati(&kw0, &SymMatrix::scalar(1.0), &kw0),
            Err(Error::OrderingViolation(_))
        ));
    }

    #[test]
    fn sufficiency_examples() {
        let a = check_sufficient(&MdInstance::scalar(1.0, &[0.5, 0.5], 0.2).unwrap()).unwrap();
        assert!(a.interior_guaranteed);
        let b = check_sufficient(&MdInstance::scalar(1.0, &[0.5, 0.5], 1.0 / 3.0).unwrap()).unwrap();
        assert!(!b.interior_guaranteed && b.first_holds() && !b.second_holds());
        let c = check_sufficient(&MdInstance::scalar(1.0, &[0.9, 0.9], 0.7).unwrap()).unwrap();
        assert!(!c.interior_guaranteed && !c.first_holds());
        assert_relative_eq!(c.first_min_eigenvalue, -0.1, epsilon = 1e-14);
    }

    #[test]
    fn two_description_examples() {
        let t = two_description_solve(&MdInstance::scalar(1.0, &[0.5, 0.5], 0.2).unwrap()).unwrap();
        assert_eq!(t.path, TwoDescriptionPath::Riccati);
        assert_relative_eq!(t.sum_rate.0, 0.5 * (16.0f64 / 3.0).ln(), epsilon = 1e-12);
        assert_relative_eq!(t.corners[0][0], 0.5 * 2f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(t.corners[0][1], 0.49042, epsilon = 1e-5);
        assert_relative_eq!(t.corners[1][0], t.corners[0][1], epsilon = 1e-14);

        let t = two_description_solve(&MdInstance::scalar(1.0, &[0.5, 0.5], 1.0 / 3.0).unwrap()).unwrap();
        assert_eq!(t.path, TwoDescriptionPath::ZeroCoupling);
        assert_relative_eq!(t.sum_rate.0, 2f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(t.corners[0][1], 0.5 * 2f64.ln(), epsilon = 1e-14);

        let t = two_description_solve(&MdInstance::scalar(1.0, &[0.9, 0.9], 0.7).unwrap()).unwrap();
        assert_eq!(t.path, TwoDescriptionPath::FullCoupling);
        assert_relative_eq!(t.sum_rate.0, 0.5 * (1.0f64 / 0.7).ln(), epsilon = 1e-14);
        assert_relative_eq!(t.corners[0][0], 0.05268, epsilon = 1e-5);
        assert_relative_eq!(t.corners[0][1], 0.12566, epsilon = 1e-5);
        assert_relative_eq!(t.achieved.individual[1].get(0, 0), 0.8, epsilon = 1e-12);
        assert_relative_eq!(t.achieved.central.get(0, 0), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn rejects_other_description_counts() {
        let inst = MdInstance::scalar(1.0, &[0.5], 0.2).unwrap();
        assert!(matches!(check_sufficient(&inst), Err(Error::InvalidArgument(_))));
    }
}
