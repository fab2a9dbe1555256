//! VP and EDM noise schedules.
//!
//! Both schedules have a Gaussian isotropic kernel
//! `p(x_t | x_0) = N(alpha_t x_0, sigma_t^2 I)`:
//!
//! * VP: `alpha_t = e^{-t}`, `sigma_t^2 = 1 - e^{-2t}`, drift `f = -x`, `g^2 = 2`.
//! * EDM: `alpha_t = 1`, `sigma_t = t`, drift `f = 0`, `g^2 = 2t`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, expm1, log, log1p, sqrt};

/// Smallest noise level of the EDM reverse grid.
pub const EDM_SIGMA_MIN: f64 = 0.002;
/// Exponent of the EDM sigma warp.
pub const EDM_RHO: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Vp,
    Edm,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Vp => "vp",
            ScheduleKind::Edm => "edm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vp" => Some(ScheduleKind::Vp),
            "edm" => Some(ScheduleKind::Edm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    t_max: f64,
}

/// Speciation time `t_s` of a schedule for a given dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeciationScale {
    pub t_s: f64,
    /// `t_s == 0` (VP with `d = 1`); rescaled time is undefined.
    pub degenerate: bool,
}

impl SpeciationScale {
    /// Rescaled time `u = t / t_s`, `None` when degenerate.
    pub fn rescale(&self, t: f64) -> Option<f64> {
        if self.degenerate {
            None
        } else {
            Some(t / self.t_s)
        }
    }
}

/// `t_s = ln(d) / 2` for VP, `t_s = sqrt(d)` for EDM.
pub fn speciation_time(kind: ScheduleKind, d: usize) -> Result<SpeciationScale> {
    if d == 0 {
        return Err(Error::ZeroDimension);
    }
    let t_s = match kind {
        ScheduleKind::Vp => 0.5 * log(d as f64),
        ScheduleKind::Edm => sqrt(d as f64),
    };
    Ok(SpeciationScale {
        t_s,
        degenerate: t_s <= 0.0,
    })
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, t_max: f64) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "t_max must be positive, got {t_max}"
            )));
        }
        Ok(Self { kind, t_max })
    }

    pub fn vp(t_max: f64) -> Result<Self> {
        Self::new(ScheduleKind::Vp, t_max)
    }

    pub fn edm(t_max: f64) -> Result<Self> {
        Self::new(ScheduleKind::Edm, t_max)
    }

    /// Default horizon: `max(10, 3 t_s)` for VP, `max(80, 3 t_s)` for EDM.
    pub fn with_default_horizon(kind: ScheduleKind, d: usize) -> Result<Self> {
        let t_s = speciation_time(kind, d)?.t_s;
        let floor = match kind {
            ScheduleKind::Vp => 10.0,
            ScheduleKind::Edm => 80.0,
        };
        Self::new(kind, f64::max(floor, 3.0 * t_s))
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn speciation_time(&self, d: usize) -> Result<SpeciationScale> {
        speciation_time(self.kind, d)
    }

    fn check(&self, t: f64) -> Result<()> {
        // tolerate round-off at the horizon
        if t.is_nan() || t < 0.0 || t > self.t_max * (1.0 + 1e-12) {
            return Err(Error::TimeOutOfRange {
                t,
                t_max: self.t_max,
            });
        }
        Ok(())
    }

    /// `(alpha_t, sigma_t^2)`.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check(t)?;
        Ok(match self.kind {
            ScheduleKind::Vp => (exp(-t), -expm1(-2.0 * t)),
            ScheduleKind::Edm => (1.0, t * t),
        })
    }

    /// Squared diffusion coefficient `g_t^2`.
    pub fn diffusion_coeff(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(match self.kind {
            ScheduleKind::Vp => 2.0,
            ScheduleKind::Edm => 2.0 * t,
        })
    }

    /// The drift is linear, `f(x, t) = rate * x`.
    pub fn drift_rate(&self) -> f64 {
        match self.kind {
            ScheduleKind::Vp => -1.0,
            ScheduleKind::Edm => 0.0,
        }
    }

    /// Noise std `sigma_t`.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        Ok(sqrt(self.alpha_sigma(t)?.1))
    }

    /// Inverse of `sigma_t`; `None` when `sigma` is not reachable.
    pub fn time_of_sigma(&self, sigma: f64) -> Option<f64> {
        if !(sigma >= 0.0) {
            return None;
        }
        match self.kind {
            ScheduleKind::Vp if sigma < 1.0 => Some(-0.5 * log1p(-sigma * sigma)),
            ScheduleKind::Vp => None,
            ScheduleKind::Edm => Some(sigma),
        }
    }

    /// Descending reverse-time grid from `t_start` to 0 with `steps` intervals.
    ///
    /// VP uses a uniform grid in `t`. EDM uses the `rho = 7` warp from
    /// `sigma_max = t_start` down to [`EDM_SIGMA_MIN`], followed by a final
    /// step to zero.
    pub fn reverse_grid(&self, t_start: f64, steps: usize) -> Result<Vec<f64>> {
        if steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        self.check(t_start)?;
        if t_start <= 0.0 {
            return Err(Error::InvalidArgument("t_start must be positive".into()));
        }
        let mut grid = Vec::with_capacity(steps + 1);
        match self.kind {
            ScheduleKind::Vp => {
                for j in 0..steps {
                    grid.push(t_start * (1.0 - j as f64 / steps as f64));
                }
            }
            ScheduleKind::Edm => {
                if steps == 1 || t_start <= EDM_SIGMA_MIN {
                    grid.push(t_start);
                    for j in 1..steps {
                        grid.push(t_start * (1.0 - j as f64 / steps as f64));
                    }
                } else {
                    let hi = libm::pow(t_start, 1.0 / EDM_RHO);
                    let lo = libm::pow(EDM_SIGMA_MIN, 1.0 / EDM_RHO);
                    let last = (steps - 1) as f64;
                    for j in 0..steps {
                        let s = hi + (j as f64 / last) * (lo - hi);
                        grid.push(libm::pow(s, EDM_RHO));
                    }
                    grid[0] = t_start;
                }
            }
        }
        grid.push(0.0);
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vp_alpha_sigma_values() {
        let s = NoiseSchedule::vp(10.0).unwrap();
        assert_eq!(s.alpha_sigma(0.0).unwrap(), (1.0, 0.0));
        let (a, v) = s.alpha_sigma(core::f64::consts::LN_2).unwrap();
        assert!(close(a, 0.5, 1e-15) && close(v, 0.75, 1e-15));
    }

    #[test]
    fn edm_alpha_sigma_values() {
        let s = NoiseSchedule::edm(80.0).unwrap();
        assert_eq!(s.alpha_sigma(3.0).unwrap(), (1.0, 9.0));
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let s = NoiseSchedule::vp(10.0).unwrap();
        assert!(matches!(
            s.alpha_sigma(-0.1),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            s.alpha_sigma(10.5),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            s.diffusion_coeff(11.0),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn diffusion_coefficients() {
        let vp = NoiseSchedule::vp(10.0).unwrap();
        for t in [0.0, 0.3, 7.0] {
            assert_eq!(vp.diffusion_coeff(t).unwrap(), 2.0);
        }
        let edm = NoiseSchedule::edm(80.0).unwrap();
        assert_eq!(edm.diffusion_coeff(0.0).unwrap(), 0.0);
        assert_eq!(edm.diffusion_coeff(5.0).unwrap(), 10.0);
    }

    #[test]
    fn speciation_times() {
        let vp = speciation_time(ScheduleKind::Vp, 10_000).unwrap();
        assert!(close(vp.t_s, 4.60517, 1e-5) && !vp.degenerate);
        let edm = speciation_time(ScheduleKind::Edm, 100).unwrap();
        assert_eq!(edm.t_s, 10.0);
        let one = speciation_time(ScheduleKind::Vp, 1).unwrap();
        assert_eq!(one.t_s, 0.0);
        assert!(one.degenerate);
        assert_eq!(one.rescale(1.0), None);
        assert_eq!(
            speciation_time(ScheduleKind::Vp, 0),
            Err(Error::ZeroDimension)
        );
    }

    #[test]
    fn speciation_time_is_monotone_in_d() {
        for kind in [ScheduleKind::Vp, ScheduleKind::Edm] {
            let mut prev = -1.0;
            for d in 1..2000 {
                let t = speciation_time(kind, d).unwrap().t_s;
                assert!(t > prev);
                prev = t;
            }
        }
    }

    #[test]
    fn vp_variance_is_preserved() {
        let s = NoiseSchedule::vp(20.0).unwrap();
        for i in 0..=200 {
            let (a, v) = s.alpha_sigma(i as f64 * 0.1).unwrap();
            assert!(close(a * a + v, 1.0, 1e-15));
        }
    }

    #[test]
    fn default_horizons() {
        assert_eq!(
            NoiseSchedule::with_default_horizon(ScheduleKind::Vp, 100)
                .unwrap()
                .t_max(),
            10.0
        );
        let big = NoiseSchedule::with_default_horizon(ScheduleKind::Vp, 1_000_000_000).unwrap();
        assert!(close(big.t_max(), 1.5 * libm::log(1e9), 1e-12));
        assert_eq!(
            NoiseSchedule::with_default_horizon(ScheduleKind::Edm, 1024)
                .unwrap()
                .t_max(),
            96.0
        );
    }

    #[test]
    fn reverse_grids() {
        let vp = NoiseSchedule::vp(10.0).unwrap();
        let g = vp.reverse_grid(10.0, 4).unwrap();
        assert_eq!(g, alloc::vec![10.0, 7.5, 5.0, 2.5, 0.0]);

        let edm = NoiseSchedule::edm(80.0).unwrap();
        let g = edm.reverse_grid(80.0, 64).unwrap();
        assert_eq!(g.len(), 65);
        assert_eq!(g[0], 80.0);
        assert!(close(g[63], EDM_SIGMA_MIN, 1e-15));
        assert_eq!(g[64], 0.0);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn time_of_sigma_inverts_sigma() {
        for kind in [ScheduleKind::Vp, ScheduleKind::Edm] {
            let s = NoiseSchedule::new(kind, 10.0).unwrap();
            for t in [0.0, 0.1, 1.0, 3.0] {
                let sig = s.sigma(t).unwrap();
                assert!(close(s.time_of_sigma(sig).unwrap(), t, 1e-9));
            }
        }
    }
}
