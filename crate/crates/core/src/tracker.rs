//! Online tracking of the branch posterior `p(y | x_{t:T})` along reverse
//! trajectories, using nothing but denoiser evaluations.
//!
//! Each reverse step `x_t → x_{t−h}` is scored under the Gaussian
//! Euler–Maruyama transition implied by each branch's denoiser. Both
//! branches share the transition variance `g_t² h`, so the log-odds
//! increment is a scaled difference of squared reconstruction errors.
//! Under the forward Markov property the tracked posterior approaches the
//! closed-form `γ_A(x_t)` as the step size shrinks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::{entropy_production_fd, Branch, EntropyProfile, Partition};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math::{binary_entropy, logit, sigmoid, squared_distance, CompensatedSum};
use crate::mixture::MixtureSpec;
use crate::rng::{tags, SeedStream};
use crate::schedule::NoiseSchedule;
use crate::sde::{
    integrate_reverse, reverse_em_mean, terminal_sample, Guidance, GuidanceConfig, ScoreField,
    Trajectory,
};
use crate::stats::Estimate;

/// Posterior clamp, keeps `logit(γ)` finite.
pub const GAMMA_EPS: f64 = 1e-12;

/// Predicts the clean state from a noisy one.
///
/// `t` is diffusion time in the schedule's own units and is always `> 0`.
/// `branch = None` asks for the unconditional prediction. The output has
/// the dimension of `x` and must be finite.
pub trait Denoiser: Sync {
    fn dim(&self) -> usize;
    fn denoise(&self, x: &[f64], t: f64, branch: Option<Branch>, out: &mut [f64]) -> Result<()>;
}

/// Exact posterior-mean denoiser of a Gaussian mixture, split by a
/// partition.
#[derive(Debug, Clone)]
pub struct GmmDenoiser<'a> {
    spec: &'a MixtureSpec,
    sched: NoiseSchedule,
    partition: Partition,
}

impl<'a> GmmDenoiser<'a> {
    pub fn new(spec: &'a MixtureSpec, sched: NoiseSchedule, partition: Partition) -> Result<Self> {
        partition.check_against(spec)?;
        Ok(Self {
            spec,
            sched,
            partition,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Closed-form `γ_A(x, t)`, the oracle for the tracker.
    pub fn closed_form_gamma(&self, x: &[f64], t: f64) -> Result<f64> {
        crate::entropy::binary_posterior(self.spec, &self.sched, &self.partition, t, x)
    }
}

impl Denoiser for GmmDenoiser<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn denoise(&self, x: &[f64], t: f64, branch: Option<Branch>, out: &mut [f64]) -> Result<()> {
        let subset = branch.and_then(|b| self.partition.subset(b));
        let x0 = self
            .spec
            .component_stats(&self.sched, t)?
            .denoiser(x, subset)?;
        out.copy_from_slice(&x0);
        Ok(())
    }
}

/// Score recovered from a denoiser by Tweedie's formula,
/// `s = (α x̂_0 − x) / σ²`.
#[derive(Clone, Copy)]
pub struct DenoiserScore<'a> {
    denoiser: &'a dyn Denoiser,
    sched: NoiseSchedule,
    branch: Option<Branch>,
}

impl core::fmt::Debug for DenoiserScore<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DenoiserScore")
            .field("sched", &self.sched)
            .field("branch", &self.branch)
            .finish_non_exhaustive()
    }
}

impl<'a> DenoiserScore<'a> {
    pub fn new(denoiser: &'a dyn Denoiser, sched: NoiseSchedule, branch: Option<Branch>) -> Self {
        Self {
            denoiser,
            sched,
            branch,
        }
    }
}

impl ScoreField for DenoiserScore<'_> {
    fn dim(&self) -> usize {
        self.denoiser.dim()
    }

    fn score(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let (alpha, sigma2) = self.sched.alpha_sigma(t)?;
        if !(sigma2 > 0.0) {
            return Err(Error::DegenerateVariance { t });
        }
        self.denoiser.denoise(x, t, self.branch, out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (alpha * *o - xi) / sigma2;
        }
        Ok(())
    }
}

/// One tracker update over the reverse step `x_t → x_prev` of size `h`.
///
/// Returns the clamped posterior of branch `A`.
pub fn update_posterior(
    gamma: f64,
    x_t: &[f64],
    x_prev: &[f64],
    t: f64,
    h: f64,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be in (0, 1), got {gamma}"
        )));
    }
    if x_t.len() != x_prev.len() || x_t.len() != denoiser.dim() {
        return Err(Error::DimensionMismatch {
            expected: denoiser.dim(),
            got: x_prev.len(),
        });
    }
    if x_t.iter().chain(x_prev).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState);
    }
    let dim = x_t.len();
    let g2 = sched.diffusion_coeff(t)?;
    let rate = sched.drift_rate();
    let mut score = vec![0.0; dim];
    let mut m_a = vec![0.0; dim];
    let mut m_b = vec![0.0; dim];
    DenoiserScore::new(denoiser, *sched, Some(Branch::A)).score(x_t, t, &mut score)?;
    reverse_em_mean(x_t, rate, g2, &score, h, &mut m_a);
    DenoiserScore::new(denoiser, *sched, Some(Branch::B)).score(x_t, t, &mut score)?;
    reverse_em_mean(x_t, rate, g2, &score, h, &mut m_b);
    let diff = squared_distance(x_prev, &m_b) - squared_distance(x_prev, &m_a);
    let var = g2 * h;
    let increment = if var > 0.0 {
        diff / (2.0 * var)
    } else if x_prev == m_a.as_slice() && x_prev == m_b.as_slice() {
        0.0
    } else {
        return Err(Error::ZeroTransitionVariance);
    };
    if !increment.is_finite() {
        return Err(Error::NonFiniteIncrement);
    }
    Ok(sigmoid(logit(gamma) + increment).clamp(GAMMA_EPS, 1.0 - GAMMA_EPS))
}

/// Posterior of branch `A` along one trajectory, in the trajectory's
/// (descending) time order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrack {
    /// Branch that generated the trajectory.
    pub branch: Branch,
    pub gamma: Vec<f64>,
    /// Binary entropy of `gamma` at each step, in nats.
    pub h: Vec<f64>,
}

/// Runs [`update_posterior`] along `traj`, starting from the partition
/// prior at the first (noisiest) state.
pub fn track(
    traj: &Trajectory,
    branch: Branch,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    prior_a: f64,
) -> Result<PosteriorTrack> {
    let times = traj.times();
    let mut gamma = Vec::with_capacity(times.len());
    let mut g = prior_a.clamp(GAMMA_EPS, 1.0 - GAMMA_EPS);
    gamma.push(g);
    for j in 0..times.len() - 1 {
        g = update_posterior(
            g,
            traj.state(j),
            traj.state(j + 1),
            times[j],
            times[j] - times[j + 1],
            denoiser,
            sched,
        )?;
        gamma.push(g);
    }
    let h = gamma.iter().map(|&g| binary_entropy(g)).collect();
    Ok(PosteriorTrack { branch, gamma, h })
}

/// Settings for [`estimate_entropy_online`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub steps: usize,
    pub n_trajectories: usize,
    /// Where the reverse integration starts; the schedule horizon if `None`.
    pub t_start: Option<f64>,
    /// Guidance applied while generating trajectories. Posterior updates
    /// always use the unguided denoisers.
    pub guidance: Option<GuidanceConfig>,
}

/// Closed-form branch posterior `γ_A(x, t)` used to score the tracker.
pub type GammaOracle<'a> = &'a (dyn Fn(&[f64], f64) -> Result<f64> + Sync);

/// Result of [`estimate_entropy_online`].
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineEstimate {
    /// `H[π(Z) | X_t]` on the reverse grid, stored in ascending time.
    pub profile: EntropyProfile,
    /// Mean `|γ_tracked − γ_oracle|` per grid point (ascending time), when
    /// an oracle was supplied.
    pub gamma_abs_err: Option<Vec<f64>>,
}

impl OnlineEstimate {
    /// Average of `gamma_abs_err` over the grid points where the oracle is
    /// defined.
    pub fn mean_gamma_abs_err(&self) -> Option<f64> {
        let err = self.gamma_abs_err.as_ref()?;
        let finite: Vec<f64> = err.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return None;
        }
        let mut acc = CompensatedSum::default();
        finite.iter().for_each(|&v| acc.add(v));
        Some(acc.value() / finite.len() as f64)
    }
}

struct BranchRun {
    h: Vec<f64>,
    err: Vec<f64>,
}

/// Estimates the partitioned entropy profile from tracked posteriors.
///
/// For each branch, `n_trajectories` reverse paths are generated with that
/// branch's score (from the denoiser), and the binary entropy of the
/// tracked posterior is averaged per step. Branches are weighted by the
/// partition prior. Trajectory `i` of branch `y` always uses stream
/// `(TRAJECTORY + y, i)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_entropy_online<E: Executor>(
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    partition: &Partition,
    cfg: &TrackerConfig,
    seeds: &SeedStream,
    exec: &E,
    oracle: Option<GammaOracle<'_>>,
) -> Result<OnlineEstimate> {
    if cfg.steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 steps, got {}",
            cfg.steps
        )));
    }
    if cfg.n_trajectories < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 trajectories, got {}",
            cfg.n_trajectories
        )));
    }
    let t_start = cfg.t_start.unwrap_or(sched.t_max());
    let grid = sched.reverse_grid(t_start, cfg.steps)?;
    let dim = denoiser.dim();
    let uncond = DenoiserScore::new(denoiser, *sched, None);

    let run_branch = |branch: Branch| -> Result<Vec<BranchRun>> {
        let field = DenoiserScore::new(denoiser, *sched, Some(branch));
        let guidance = cfg.guidance.map(|g| Guidance {
            uncond: &uncond,
            cfg: g,
        });
        let runs = exec.map_indexed(cfg.n_trajectories, |i| {
            let mut rng = seeds.rng(tags::TRAJECTORY + branch.index() as u64, i as u64);
            let x_init = terminal_sample(dim, sched, &mut rng);
            let traj = integrate_reverse(
                &field, sched, x_init, t_start, cfg.steps, &mut rng, guidance,
            )?;
            let tr = track(&traj, branch, denoiser, sched, partition.prior_a())?;
            let err = match oracle {
                Some(f) => (0..traj.len())
                    .map(|j| Ok((tr.gamma[j] - f(traj.state(j), traj.times()[j])?).abs()))
                    .collect::<Result<Vec<f64>>>()?,
                None => Vec::new(),
            };
            Ok(BranchRun { h: tr.h, err })
        });
        runs.into_iter().collect()
    };
    let runs_a = run_branch(Branch::A)?;
    let runs_b = run_branch(Branch::B)?;

    let n_points = grid.len();
    let (wa, wb) = (partition.prior(Branch::A), partition.prior(Branch::B));
    let mut h = Vec::with_capacity(n_points);
    let mut h_se = Vec::with_capacity(n_points);
    let mut err = Vec::with_capacity(n_points);
    let mut column = Vec::with_capacity(cfg.n_trajectories);
    // ascending time is the reverse of the integration order
    for j in (0..n_points).rev() {
        column.clear();
        column.extend(runs_a.iter().map(|r| r.h[j]));
        let ea = Estimate::from_samples(&column);
        column.clear();
        column.extend(runs_b.iter().map(|r| r.h[j]));
        let eb = Estimate::from_samples(&column);
        let e = Estimate::weighted(ea, wa, eb, wb);
        h.push(e.mean);
        h_se.push(e.stderr);
        if oracle.is_some() {
            let mut acc = CompensatedSum::default();
            runs_a.iter().chain(&runs_b).for_each(|r| acc.add(r.err[j]));
            err.push(acc.value() / (runs_a.len() + runs_b.len()) as f64);
        }
    }
    let times: Vec<f64> = grid.iter().rev().copied().collect();
    let scale = sched.speciation_time(dim)?;
    let mut profile = EntropyProfile {
        u: times
            .iter()
            .map(|&t| scale.rescale(t).unwrap_or(f64::NAN))
            .collect(),
        times,
        h,
        h_stderr: h_se,
        hdot: Vec::new(),
        hdot_stderr: Vec::new(),
        n_samples: cfg.n_trajectories,
        seed: seeds.seed(),
    };
    profile.fill_hdot_from_fd()?;
    Ok(OnlineEstimate {
        profile,
        gamma_abs_err: oracle.map(|_| err),
    })
}

/// `Ḣ_guided − Ḣ_base` by finite differences on a shared grid. Positive
/// values mark increased entropy production under guidance.
pub fn distortion_profile(base: &EntropyProfile, guided: &EntropyProfile) -> Result<Vec<f64>> {
    if base.times != guided.times {
        return Err(Error::GridMismatch);
    }
    let db = entropy_production_fd(&base.times, &base.h)?;
    let dg = entropy_production_fd(&guided.times, &guided.h)?;
    Ok(dg.iter().zip(&db).map(|(g, b)| g - b).collect())
}

/// Time of the largest value of `values` (first one on ties).
pub fn argmax_time(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::GridMismatch);
    }
    let mut best: Option<(f64, f64)> = None;
    for (&t, &v) in times.iter().zip(values) {
        if v.is_finite() && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((t, v));
        }
    }
    best.map(|(t, _)| t)
        .ok_or(Error::GridTooShort { needed: 1, got: 0 })
}
