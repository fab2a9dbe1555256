//! Forward sampling through the closed-form kernel and Euler–Maruyama
//! integration of the reverse SDE `dX = (f − g² s) dt + g dW̃`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::mixture::MixtureSpec;
use crate::schedule::{NoiseSchedule, ScheduleKind};

/// A score field `∇_x log p_t(x)` that can be evaluated from many threads.
pub trait ScoreField: Sync {
    fn dim(&self) -> usize;
    fn score(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;
}

/// Exact score of a mixture, optionally restricted to a class subset.
#[derive(Debug, Clone)]
pub struct MixtureScore<'a> {
    spec: &'a MixtureSpec,
    sched: NoiseSchedule,
    subset: Option<Vec<usize>>,
}

impl<'a> MixtureScore<'a> {
    pub fn new(
        spec: &'a MixtureSpec,
        sched: NoiseSchedule,
        subset: Option<Vec<usize>>,
    ) -> Result<Self> {
        if let Some(s) = &subset {
            spec.check_subset(s)?;
        }
        Ok(Self {
            spec,
            sched,
            subset,
        })
    }
}

impl ScoreField for MixtureScore<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn score(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let s = self
            .spec
            .component_stats(&self.sched, t)?
            .mixture_score(x, self.subset.as_deref())?;
        out.copy_from_slice(&s);
        Ok(())
    }
}

/// Classifier-free guidance restricted to a noise interval.
///
/// `omega = 1` is the pure conditional score; `omega = 0` is the
/// unconditional one. Outside `[sigma_low, sigma_high]` the conditional score
/// is used unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    pub omega: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
}

impl GuidanceConfig {
    pub fn new(omega: f64, sigma_low: f64, sigma_high: f64) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::InvalidArgument(
                "guidance omega must be finite".into(),
            ));
        }
        if sigma_low.is_nan() || sigma_high.is_nan() || sigma_low > sigma_high {
            return Err(Error::InvalidArgument(
                "guidance interval needs sigma_low <= sigma_high".into(),
            ));
        }
        Ok(Self {
            omega,
            sigma_low,
            sigma_high,
        })
    }

    /// Guidance over every noise level.
    pub fn full_interval(omega: f64) -> Result<Self> {
        Self::new(omega, 0.0, f64::INFINITY)
    }

    pub fn is_active(&self, sigma: f64) -> bool {
        sigma >= self.sigma_low && sigma <= self.sigma_high
    }
}

/// `s_u + ω (s_c − s_u)` inside the interval, `s_c` outside.
///
/// Written as `s_c + (ω − 1)(s_c − s_u)` so that `ω = 1` reproduces `s_c`
/// bit for bit.
pub fn guided_score(
    s_cond: &[f64],
    s_uncond: &[f64],
    sigma_t: f64,
    cfg: &GuidanceConfig,
    out: &mut [f64],
) {
    debug_assert_eq!(s_cond.len(), s_uncond.len());
    if cfg.is_active(sigma_t) {
        let w = cfg.omega - 1.0;
        for ((o, c), u) in out.iter_mut().zip(s_cond).zip(s_uncond) {
            *o = c + w * (c - u);
        }
    } else {
        out.copy_from_slice(s_cond);
    }
}

/// Draw of `X_t | Z = k`, i.e. `α_t x_0 + σ_t ε` with `x_0 ~ N(μ_k, σ_0² I)`.
pub fn forward_sample<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.check_class(k)?;
    let cs = spec.component_stats(sched, t)?;
    let mut out = vec![0.0; spec.dim()];
    cs.sample_component(k, rng, &mut out);
    Ok(out)
}

/// Initial state for reverse integration: `N(0, I)` for VP (stationary law),
/// `N(0, σ_{t_max}² I)` for EDM.
pub fn terminal_sample<R: Rng + ?Sized>(
    dim: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Vec<f64> {
    let sd = match sched.kind() {
        ScheduleKind::Vp => 1.0,
        ScheduleKind::Edm => sched.t_max(),
    };
    (0..dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// One reverse Euler–Maruyama step of size `h` from time `t` to `t − h`:
/// `x' = x − (r x − g² s) h + sqrt(g² h) ξ` for the linear drift `f = r x`.
pub fn reverse_em_step(
    x: &[f64],
    drift_rate: f64,
    g2: f64,
    score: &[f64],
    h: f64,
    noise: &[f64],
    out: &mut [f64],
) {
    let sd = sqrt(g2 * h);
    for j in 0..x.len() {
        out[j] = x[j] - (drift_rate * x[j] - g2 * score[j]) * h + sd * noise[j];
    }
}

/// Mean of the reverse Euler–Maruyama transition, `x − (r x − g² s) h`.
pub fn reverse_em_mean(
    x: &[f64],
    drift_rate: f64,
    g2: f64,
    score: &[f64],
    h: f64,
    out: &mut [f64],
) {
    for j in 0..x.len() {
        out[j] = x[j] - (drift_rate * x[j] - g2 * score[j]) * h;
    }
}

/// Reverse-time path on a descending grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

/// Unconditional score and interval configuration for guided sampling.
#[derive(Clone, Copy)]
pub struct Guidance<'a> {
    pub uncond: &'a dyn ScoreField,
    pub cfg: GuidanceConfig,
}

impl core::fmt::Debug for Guidance<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Guidance")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

/// Integrates the reverse SDE from `x_init` at `t_start` down to `t = 0`
/// with Euler–Maruyama on [`NoiseSchedule::reverse_grid`].
///
/// The score is never evaluated at `t = 0`.
pub fn integrate_reverse<R: Rng + ?Sized>(
    score: &dyn ScoreField,
    sched: &NoiseSchedule,
    x_init: Vec<f64>,
    t_start: f64,
    steps: usize,
    rng: &mut R,
    guidance: Option<Guidance<'_>>,
) -> Result<Trajectory> {
    let dim = score.dim();
    if x_init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x_init.len(),
        });
    }
    let times = sched.reverse_grid(t_start, steps)?;
    let mut states = Vec::with_capacity(times.len() * dim);
    states.extend_from_slice(&x_init);
    let mut s_cond = vec![0.0; dim];
    let mut s_uncond = vec![0.0; dim];
    let mut s_eff = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let rate = sched.drift_rate();
    for step in 0..steps {
        let (t, t_next) = (times[step], times[step + 1]);
        let h = t - t_next;
        let x = &states[step * dim..(step + 1) * dim];
        score.score(x, t, &mut s_cond)?;
        match guidance {
            Some(g) => {
                g.uncond.score(x, t, &mut s_uncond)?;
                guided_score(&s_cond, &s_uncond, sched.sigma(t)?, &g.cfg, &mut s_eff);
            }
            None => s_eff.copy_from_slice(&s_cond),
        }
        for n in noise.iter_mut() {
            *n = rng.sample(StandardNormal);
        }
        reverse_em_step(
            x,
            rate,
            sched.diffusion_coeff(t)?,
            &s_eff,
            h,
            &noise,
            &mut next,
        );
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step });
        }
        states.extend_from_slice(&next);
    }
    Ok(Trajectory { dim, times, states })
}
