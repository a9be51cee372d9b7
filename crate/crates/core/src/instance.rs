//! Problem statement, ordering validation, whitening, and the conversions
//! between distortion matrices and test-channel noise covariances.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{collapsed_inverse, inv_sqrt_pd, sqrt_psd, SymMatrix};
use crate::region::TestChannel;

/// Relative margin (against `‖Kx‖`) enforcing the strict orderings.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Source covariance `Kx`, individual distortion constraints `D1…DL` and
/// the central distortion constraint `D0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdInstance {
    pub kx: SymMatrix,
    pub d: Vec<SymMatrix>,
    pub d0: SymMatrix,
}

/// One failed strict ordering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// e.g. `"D0 ≺ D1"`
    pub predicate: String,
    /// Smallest eigenvalue of the difference that should have been positive.
    pub min_eigenvalue: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} fails (min eigenvalue of difference {:e})",
            self.predicate, self.min_eigenvalue
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(self.violations.iter().map(|v| v.to_string()).collect()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenReport {
    /// Same problem with `Kx = I`.
    pub whitened: MdInstance,
    /// `Kx^{-1/2}`
    pub transform: SymMatrix,
    /// `Kx^{1/2}`, maps whitened matrices back via `S·M·S`.
    pub inverse_transform: SymMatrix,
}

impl WhitenReport {
    pub fn unwhiten(&self, m: &SymMatrix) -> SymMatrix {
        m.sandwich(&self.inverse_transform)
    }

    pub fn whiten(&self, m: &SymMatrix) -> SymMatrix {
        m.sandwich(&self.transform)
    }
}

/// Distortions delivered by a test channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelDistortions {
    pub individual: Vec<SymMatrix>,
    pub central: SymMatrix,
}

impl MdInstance {
    /// Checks shapes only; the ordering is checked by [`MdInstance::validate`].
    pub fn new(kx: SymMatrix, d: Vec<SymMatrix>, d0: SymMatrix) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Dimension("at least one description is required".into()));
        }
        let n = kx.dim();
        if d0.dim() != n {
            return Err(Error::Dimension(format!("D0 is {0}x{0}, Kx is {n}x{n}", d0.dim())));
        }
        if let Some((l, m)) = d.iter().enumerate().find(|(_, m)| m.dim() != n) {
            return Err(Error::Dimension(format!("D{} is {1}x{1}, Kx is {n}x{n}", l + 1, m.dim())));
        }
        Ok(Self { kx, d, d0 })
    }

    /// Builds and validates in one step.
    pub fn validated(kx: SymMatrix, d: Vec<SymMatrix>, d0: SymMatrix) -> Result<Self> {
        let inst = Self::new(kx, d, d0)?;
        inst.validate().into_result()?;
        Ok(inst)
    }

    /// Scalar source: `σx²`, `d1…dL`, `d0`.
    pub fn scalar(sigma_x2: f64, d: &[f64], d0: f64) -> Result<Self> {
        Self::new(
            SymMatrix::scalar(sigma_x2),
            d.iter().map(|&v| SymMatrix::scalar(v)).collect(),
            SymMatrix::scalar(d0),
        )
    }

    pub fn dim(&self) -> usize {
        self.kx.dim()
    }

    pub fn descriptions(&self) -> usize {
        self.d.len()
    }

    /// Lists every failed ordering among `0 ≺ Kx`, `0 ≺ D0 ≺ Dl ≺ Kx`.
    pub fn validate(&self) -> ValidationReport {
        let margin = STRICT_MARGIN * self.kx.spectral_norm();
        let mut violations = Vec::new();
        let mut check = |predicate: String, diff: SymMatrix| {
            let lo = diff.min_eigenvalue();
            if !(lo > margin) {
                violations.push(Violation { predicate, min_eigenvalue: lo });
            }
        };
        check("0 ≺ Kx".into(), self.kx.clone());
        check("0 ≺ D0".into(), self.d0.clone());
        for (l, dl) in self.d.iter().enumerate() {
            check(format!("D0 ≺ D{}", l + 1), dl - &self.d0);
            check(format!("D{} ≺ Kx", l + 1), &self.kx - dl);
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().into_result()
    }

    /// Applies `T = Kx^{-1/2}` to every matrix of the instance.
    pub fn whiten(&self) -> Result<WhitenReport> {
        let transform = inv_sqrt_pd(&self.kx)?;
        let inverse_transform = sqrt_psd(&self.kx)?;
        let whitened = MdInstance {
            kx: SymMatrix::identity(self.dim()),
            d: self.d.iter().map(|m| m.sandwich(&transform)).collect(),
            d0: self.d0.sandwich(&transform),
        };
        Ok(WhitenReport { whitened, transform, inverse_transform })
    }

    /// Noise covariances `Kw0, Kw1…KwL` matching `D0, D1…DL`.
    pub fn noise_covariances(&self) -> Result<(SymMatrix, Vec<SymMatrix>)> {
        let kw0 = noise_of_distortion(&self.d0, &self.kx)?;
        let kw = self
            .d
            .iter()
            .map(|dl| noise_of_distortion(dl, &self.kx))
            .collect::<Result<Vec<_>>>()?;
        Ok((kw0, kw))
    }
}

/// `Kw = (D⁻¹ − Kx⁻¹)⁻¹`, the noise covariance whose MMSE error is `D`.
pub fn noise_of_distortion(d: &SymMatrix, kx: &SymMatrix) -> Result<SymMatrix> {
    let precision_gap = &d.inverse()? - &kx.inverse()?;
    let lo = precision_gap.min_eigenvalue();
    if !(lo > 0.0) {
        return Err(Error::OrderingViolation(format!(
            "D ≺ Kx fails (min eigenvalue of D⁻¹ − Kx⁻¹ is {lo:e})"
        )));
    }
    precision_gap.inverse()
}

/// `D = (Kx⁻¹ + Kw⁻¹)⁻¹`, the MMSE error of estimating `x` from `x + w`.
pub fn distortion_of_noise(kw: &SymMatrix, kx: &SymMatrix) -> Result<SymMatrix> {
    (&kx.inverse()? + &kw.inverse()?).inverse()
}

/// Individual and central MMSE error covariances of a test channel.
pub fn distortions_of_channel(kx: &SymMatrix, tc: &TestChannel) -> Result<ChannelDistortions> {
    let individual = tc
        .kw_blocks
        .iter()
        .map(|kw| distortion_of_noise(kw, kx))
        .collect::<Result<Vec<_>>>()?;
    let collapsed = collapsed_inverse(&tc.kw_blocks, &tc.a)?;
    let central = (&kx.inverse()? + &collapsed).inverse()?;
    Ok(ChannelDistortions { individual, central })
}
