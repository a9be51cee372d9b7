//! Closed-form solution for a scalar source.

use serde::Serialize;

use crate::bounds::RateNats;
use crate::error::{Error, Result};
use crate::instance::MdInstance;
use crate::matcore::SymMatrix;
use crate::region::TestChannel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarInstance {
    pub sigma_x2: f64,
    pub d: Vec<f64>,
    pub d0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScalarCase {
    /// Interior coupling, `0 < a* < σx²`.
    Case1,
    /// `a* = 0`: the individual bounds are tight and the central constraint
    /// is met for free.
    Case2,
    /// `a* = σx²`: the central bound is tight and the last individual
    /// constraint is met for free.
    Case3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub case: ScalarCase,
    pub f_at_zero: f64,
    pub f_at_top: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarSolution {
    pub case: ScalarCase,
    pub a_star: f64,
    pub sum_rate: RateNats,
    /// Distortions delivered by the optimal channel.
    pub achieved_d: Vec<f64>,
    pub achieved_d0: f64,
    /// Noise variances of the optimal channel.
    pub noise: Vec<f64>,
    /// `|f(a*)|`, zero outside Case 1.
    pub residual: f64,
}

impl ScalarSolution {
    pub fn test_channel(&self) -> Result<TestChannel> {
        TestChannel::new(
            self.noise.iter().map(|&v| SymMatrix::scalar(v)).collect(),
            SymMatrix::scalar(self.a_star),
        )
    }
}

const MAX_BISECTIONS: usize = 200;
const ROOT_TOL: f64 = 1e-12;
/// Relative band (against the magnitude of the terms of `f`) in which a
/// boundary value of `f` counts as zero.
const TIE_TOL: f64 = 1e-12;

impl ScalarInstance {
    pub fn new(sigma_x2: f64, d: Vec<f64>, d0: f64) -> Result<Self> {
        let inst = Self { sigma_x2, d, d0 };
        inst.validate()?;
        Ok(inst)
    }

    /// Reads a 1×1 instance.
    pub fn from_instance(inst: &MdInstance) -> Result<Self> {
        if inst.dim() != 1 {
            return Err(Error::Dimension(format!("scalar solver needs N = 1, got N = {}", inst.dim())));
        }
        Self::new(inst.kx.get(0, 0), inst.d.iter().map(|m| m.get(0, 0)).collect(), inst.d0.get(0, 0))
    }

    pub fn to_instance(&self) -> Result<MdInstance> {
        MdInstance::scalar(self.sigma_x2, &self.d, self.d0)
    }

    pub fn validate(&self) -> Result<()> {
        // same margin as the matrix validation
        let inst = self.to_instance()?;
        inst.ensure_valid()
    }

    /// `σ² = dσx²/(σx² − d)`
    pub fn noise_variance(&self, d: f64) -> f64 {
        d * self.sigma_x2 / (self.sigma_x2 - d)
    }

    /// `f(a) = 1/(σ0² + a) − Σ_l 1/(σl² + a)`
    pub fn f(&self, a: f64) -> f64 {
        let s0 = self.noise_variance(self.d0);
        1.0 / (s0 + a) - self.d.iter().map(|&dl| 1.0 / (self.noise_variance(dl) + a)).sum::<f64>()
    }

    /// `1/(σ0² + a) + Σ_l 1/(σl² + a)`, the scale of rounding in `f(a)`.
    fn f_scale(&self, a: f64) -> f64 {
        let s0 = self.noise_variance(self.d0);
        1.0 / (s0 + a) + self.d.iter().map(|&dl| 1.0 / (self.noise_variance(dl) + a)).sum::<f64>()
    }

    pub fn classify(&self) -> Result<Classification> {
        let f_at_zero = self.f(0.0);
        let f_at_top = self.f(self.sigma_x2);
        let zero_tie = TIE_TOL * self.f_scale(0.0);
        let top_tie = TIE_TOL * self.f_scale(self.sigma_x2);
        let case = match (f_at_zero <= zero_tie, f_at_top >= -top_tie) {
            (true, true) => {
                return Err(Error::Internal(format!(
                    "f(0) = {f_at_zero:e} ≤ 0 and f(σx²) = {f_at_top:e} ≥ 0 at once"
                )))
            }
            (true, false) => ScalarCase::Case2,
            (false, true) => ScalarCase::Case3,
            (false, false) => ScalarCase::Case1,
        };
        Ok(Classification { case, f_at_zero, f_at_top })
    }

    /// Central distortion of the channel with noise variances `noise` and
    /// coupling `a`.
    fn central_distortion(&self, noise: &[f64], a: f64) -> f64 {
        let s: f64 = noise.iter().map(|&v| 1.0 / (v + a)).sum();
        let collapsed = 1.0 / (1.0 / s - a);
        1.0 / (1.0 / self.sigma_x2 + collapsed)
    }

    fn bisect(&self) -> Result<(f64, f64)> {
        let (mut lo, mut hi) = (0.0, self.sigma_x2);
        let (mut f_lo, mut f_hi) = (self.f(lo), self.f(hi));
        if !(f_lo > 0.0 && f_hi < 0.0) {
            // classification already excluded the tie band
            return Err(Error::Internal(format!(
                "no sign change on [0, σx²]: f(0) = {f_lo:e}, f(σx²) = {f_hi:e}"
            )));
        }
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.f(mid);
            if fm == 0.0 {
                return Ok((mid, 0.0));
            }
            if fm > 0.0 {
                lo = mid;
                f_lo = fm;
            } else {
                hi = mid;
                f_hi = fm;
            }
        }
        let (root, res) = if f_lo.abs() <= f_hi.abs() { (lo, f_lo.abs()) } else { (hi, f_hi.abs()) };
        let scale = (1.0 / self.noise_variance(self.d0)).max(1.0);
        if res > ROOT_TOL * scale {
            return Err(Error::DidNotConverge {
                iterations: MAX_BISECTIONS,
                residual: res,
                last_iterate: Box::new(SymMatrix::scalar(root)),
            });
        }
        Ok((root, res))
    }

    pub fn solve(&self) -> Result<ScalarSolution> {
        let class = self.classify()?;
        let sx = self.sigma_x2;
        let l = self.d.len();
        let mut noise: Vec<f64> = self.d.iter().map(|&dl| self.noise_variance(dl)).collect();
        let mut achieved_d = self.d.clone();
        let (a_star, sum_rate, residual) = match class.case {
            ScalarCase::Case1 => {
                let (a, res) = self.bisect()?;
                // det of the equal-coupling covariance by the determinant lemma
                let prod: f64 = noise.iter().map(|&v| (v + a).ln()).sum();
                let corr: f64 = 1.0 - a * noise.iter().map(|&v| 1.0 / (v + a)).sum::<f64>();
                if !(corr > 0.0) {
                    return Err(Error::Internal(format!(
                        "noise covariance is not positive definite at a* = {a:e}"
                    )));
                }
                let log_det_kw = prod + corr.ln();
                let num: f64 = noise.iter().map(|&v| (sx + v).ln()).sum();
                (a, RateNats(0.5 * (num - log_det_kw)), res)
            }
            ScalarCase::Case2 => {
                let rate = self.d.iter().map(|&dl| 0.5 * (sx / dl).ln()).sum();
                (0.0, RateNats(rate), 0.0)
            }
            ScalarCase::Case3 => {
                let head: f64 = self.d[..l - 1].iter().sum();
                let d_last = self.d0 + (l as f64 - 1.0) * sx - head;
                if !(d_last > 0.0 && d_last <= self.d[l - 1] * (1.0 + 1e-12)) {
                    return Err(Error::Internal(format!(
                        "enhanced last distortion {d_last:e} outside (0, {}]",
                        self.d[l - 1]
                    )));
                }
                achieved_d[l - 1] = d_last;
                noise[l - 1] = self.noise_variance(d_last);
                (sx, RateNats(0.5 * (sx / self.d0).ln()), 0.0)
            }
        };
        let achieved_d0 = self.central_distortion(&noise, a_star);
        Ok(ScalarSolution {
            case: class.case,
            a_star,
            sum_rate,
            achieved_d,
            achieved_d0,
            noise,
            residual,
        })
    }
}
