//! Estimators for the class-conditional entropy `H[Z | X_t]`, its time
//! derivative, and the partitioned (binary) entropy `H[π(Z) | X_t]`.
//!
//! All entropies are in nats. Monte Carlo estimators sample in the reduced
//! coordinates of [`MixtureSpec::reduced`], which leaves every posterior
//! exactly unchanged, so the cost per sample does not grow with `d`.
//!
//! Sample `i` always uses stream `(tag, i)` of the supplied [`SeedStream`]
//! and draws its class label before its noise. Evaluating the same
//! estimator at different times therefore reuses the same underlying
//! normals (common random numbers), which keeps profiles smooth in `t`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math::{binary_entropy_from_logit, entropy, log, sqrt, LN_2};
use crate::mixture::{ComponentStats, MixtureSpec};
use crate::quadrature::{normal_pdf, GaussLegendre};
use crate::rng::{tags, SeedStream};
use crate::schedule::NoiseSchedule;
use crate::stats::{isotonic_increasing, Estimate};

/// Side of a binary partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `y = 0`, the classes in `set_a`.
    A,
    /// `y = 1`, the classes in `set_b` (or the full mixture under the
    /// complement proxy).
    B,
}

impl Branch {
    pub fn index(self) -> usize {
        match self {
            Branch::A => 0,
            Branch::B => 1,
        }
    }
}

/// A binary split `A` vs `B` of (a subset of) the classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    set_a: Vec<usize>,
    set_b: Vec<usize>,
    prior_a: f64,
    complement_proxy: bool,
}

impl Partition {
    pub fn new(
        set_a: Vec<usize>,
        set_b: Vec<usize>,
        prior_a: f64,
        complement_proxy: bool,
    ) -> Result<Self> {
        if set_a.is_empty() || set_b.is_empty() {
            return Err(Error::InvalidPartition(
                "both sides must be non-empty".into(),
            ));
        }
        if let Some(k) = set_a.iter().find(|k| set_b.contains(k)) {
            return Err(Error::InvalidPartition(format!(
                "class {k} is on both sides"
            )));
        }
        for side in [&set_a, &set_b] {
            for (i, k) in side.iter().enumerate() {
                if side[..i].contains(k) {
                    return Err(Error::InvalidPartition(format!("class {k} listed twice")));
                }
            }
        }
        if !(prior_a > 0.0 && prior_a < 1.0) {
            return Err(Error::InvalidPartition(format!(
                "prior_a must be in (0, 1), got {prior_a}"
            )));
        }
        Ok(Self {
            set_a,
            set_b,
            prior_a,
            complement_proxy,
        })
    }

    /// `A = {a}` against `B = {b}` with prior ½.
    pub fn pair(a: usize, b: usize) -> Result<Self> {
        Self::new(vec![a], vec![b], 0.5, false)
    }

    /// Class `k` against the rest, with the full mixture standing in for the
    /// complement.
    pub fn one_vs_rest(k: usize, n_classes: usize) -> Result<Self> {
        let rest: Vec<usize> = (0..n_classes).filter(|&j| j != k).collect();
        Self::new(vec![k], rest, 0.5, true)
    }

    pub fn set_a(&self) -> &[usize] {
        &self.set_a
    }

    pub fn set_b(&self) -> &[usize] {
        &self.set_b
    }

    pub fn prior_a(&self) -> f64 {
        self.prior_a
    }

    pub fn complement_proxy(&self) -> bool {
        self.complement_proxy
    }

    pub fn prior(&self, branch: Branch) -> f64 {
        match branch {
            Branch::A => self.prior_a,
            Branch::B => 1.0 - self.prior_a,
        }
    }

    /// Classes whose sub-mixture defines `p_t(x | branch)`; `None` is the
    /// full mixture.
    pub fn subset(&self, branch: Branch) -> Option<&[usize]> {
        match branch {
            Branch::A => Some(&self.set_a),
            Branch::B if self.complement_proxy => None,
            Branch::B => Some(&self.set_b),
        }
    }

    pub fn check_against(&self, spec: &MixtureSpec) -> Result<()> {
        spec.check_subset(&self.set_a)?;
        spec.check_subset(&self.set_b)
    }
}

/// Log-odds of branch `A` given `x`:
/// `ln(p_A / (1 − p_A)) + ln p_t(x | A) − ln p_t(x | B)`.
pub fn partition_log_odds(
    cs: &ComponentStats<'_>,
    partition: &Partition,
    x: &[f64],
) -> Result<f64> {
    let la = cs.log_subset_density(x, partition.subset(Branch::A))?;
    let lb = cs.log_subset_density(x, partition.subset(Branch::B))?;
    Ok(log(partition.prior_a) - log(1.0 - partition.prior_a) + la - lb)
}

/// Renormalized binary posterior `γ_A(x, t)`.
pub fn binary_posterior(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    partition: &Partition,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    partition.check_against(spec)?;
    let cs = spec.component_stats(sched, t)?;
    Ok(crate::math::sigmoid(partition_log_odds(&cs, partition, x)?))
}

fn check_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    Ok(())
}

fn nondegenerate<'a>(
    spec: &'a MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
) -> Result<ComponentStats<'a>> {
    let cs = spec.component_stats(sched, t)?;
    if cs.is_degenerate() {
        return Err(Error::DegenerateVariance { t });
    }
    Ok(cs)
}

fn draw_noise<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for e in out.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
}

/// `x = α μ_k + sqrt(v) ε`.
fn place(cs: &ComponentStats<'_>, k: usize, eps: &[f64], out: &mut [f64]) {
    let sd = sqrt(cs.v);
    for ((o, m), e) in out.iter_mut().zip(cs.spec().mean(k)).zip(eps) {
        *o = cs.alpha * m + sd * e;
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn conditional_entropy_reduced<E: Executor>(
    red: &MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<Estimate> {
    let cs = nondegenerate(red, sched, t)?;
    let values = exec.map_indexed(n, |i| {
        let mut rng = seeds.rng(tags::CONDITIONAL_ENTROPY, i as u64);
        let k = red.sample_class(None, &mut rng);
        let mut eps = vec![0.0; red.dim()];
        draw_noise(&mut rng, &mut eps);
        let mut x = vec![0.0; red.dim()];
        place(&cs, k, &eps, &mut x);
        Ok(entropy(&cs.posterior(&x)?))
    });
    Ok(Estimate::from_samples(&collect(values)?))
}

/// Monte Carlo estimate of `H[Z | X_t] = −E[Σ_k γ_k ln γ_k]` over the joint
/// law of `(Z, X_t)`.
pub fn conditional_entropy_mc<E: Executor>(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<Estimate> {
    check_samples(n)?;
    conditional_entropy_reduced(&spec.reduced(), sched, t, n, seeds, exec)
}

fn fisher_reduced<E: Executor>(
    red: &MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<Estimate> {
    let cs = nondegenerate(red, sched, t)?;
    let half_g2 = 0.5 * sched.diffusion_coeff(t)?;
    let values = exec.map_indexed(n, |i| {
        let mut rng = seeds.rng(tags::FISHER, i as u64);
        let k = red.sample_class(None, &mut rng);
        let mut eps = vec![0.0; red.dim()];
        draw_noise(&mut rng, &mut eps);
        let mut x = vec![0.0; red.dim()];
        place(&cs, k, &eps, &mut x);
        Ok(half_g2 * cs.score_mismatch(&x, k)?)
    });
    Ok(Estimate::from_samples(&collect(values)?))
}

/// Entropy production `dH[Z | X_t]/dt = (g_t² / 2) E_i E_{x|i} ‖s_i − s_mix‖²`
/// in the forward-time convention (non-negative).
pub fn entropy_production_fisher<E: Executor>(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<Estimate> {
    check_samples(n)?;
    fisher_reduced(&spec.reduced(), sched, t, n, seeds, exec)
}

/// Per-class Fisher divergences `Δ_i(t) = E_{x|i} ‖s_i − s_mix‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherGap {
    pub delta: Vec<Estimate>,
}

pub fn fisher_gaps<E: Executor>(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<FisherGap> {
    check_samples(n)?;
    let red = spec.reduced();
    let cs = nondegenerate(&red, sched, t)?;
    let mut delta = Vec::with_capacity(red.n_classes());
    for k in 0..red.n_classes() {
        let values = exec.map_indexed(n, |i| {
            let mut rng = seeds.rng(tags::FISHER_GAP + 64 * k as u64, i as u64);
            let mut x = vec![0.0; red.dim()];
            cs.sample_component(k, &mut rng, &mut x);
            cs.score_mismatch(&x, k)
        });
        delta.push(Estimate::from_samples(&collect(values)?));
    }
    Ok(FisherGap { delta })
}

/// Paired central difference `(H(t + dt) − H(t − dt)) / (2 dt)`.
///
/// Each sample keeps its class and standard-normal noise at both times
/// (`x_{t±dt} = α_{t±dt} μ_k + sqrt(v_{t±dt}) ε`), so the standard error is
/// that of the per-sample difference.
pub fn entropy_production_paired_fd<E: Executor>(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    t: f64,
    dt: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<Estimate> {
    check_samples(n)?;
    if !(dt > 0.0) || t - dt < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt <= t, got t = {t}, dt = {dt}"
        )));
    }
    let red = spec.reduced();
    let lo = nondegenerate(&red, sched, t - dt)?;
    let hi = nondegenerate(&red, sched, t + dt)?;
    let values = exec.map_indexed(n, |i| {
        let mut rng = seeds.rng(tags::PAIRED_FD, i as u64);
        let k = red.sample_class(None, &mut rng);
        let mut eps = vec![0.0; red.dim()];
        draw_noise(&mut rng, &mut eps);
        let mut x = vec![0.0; red.dim()];
        place(&hi, k, &eps, &mut x);
        let h_hi = entropy(&hi.posterior(&x)?);
        place(&lo, k, &eps, &mut x);
        let h_lo = entropy(&lo.posterior(&x)?);
        Ok((h_hi - h_lo) / (2.0 * dt))
    });
    Ok(Estimate::from_samples(&collect(values)?))
}

fn partitioned_reduced<E: Executor>(
    red: &MixtureSpec,
    sched: &NoiseSchedule,
    partition: &Partition,
    t: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<Estimate> {
    let cs = nondegenerate(red, sched, t)?;
    let n_a = n / 2;
    let n_b = n - n_a;
    let branch = |b: Branch, count: usize, tag: u64| -> Result<Estimate> {
        let subset = partition.subset(b);
        let values = exec.map_indexed(count, |i| {
            let mut rng = seeds.rng(tag, i as u64);
            let k = red.sample_class(subset, &mut rng);
            let mut eps = vec![0.0; red.dim()];
            draw_noise(&mut rng, &mut eps);
            let mut x = vec![0.0; red.dim()];
            place(&cs, k, &eps, &mut x);
            Ok(binary_entropy_from_logit(partition_log_odds(
                &cs, partition, &x,
            )?))
        });
        Ok(Estimate::from_samples(&collect(values)?))
    };
    let ea = branch(Branch::A, n_a, tags::BRANCH_A)?;
    let eb = branch(Branch::B, n_b, tags::BRANCH_B)?;
    Ok(Estimate::weighted(
        ea,
        partition.prior_a,
        eb,
        1.0 - partition.prior_a,
    ))
}

/// Monte Carlo estimate of the partitioned entropy `H[π(Z) | X_t]`.
///
/// Samples are stratified, `n / 2` from each branch, and weighted by the
/// partition prior. With prior ½ the result equals `ln 2 − JSD(p_A, p_B)`.
pub fn partitioned_entropy_mc<E: Executor>(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    partition: &Partition,
    t: f64,
    n: usize,
    seeds: &SeedStream,
    exec: &E,
) -> Result<Estimate> {
    check_samples(n)?;
    partition.check_against(spec)?;
    partitioned_reduced(&spec.reduced(), sched, partition, t, n, seeds, exec)
}

/// Jensen–Shannon divergence (nats) of two 1D densities by Gauss–Legendre
/// quadrature on `[lo, hi]`.
pub fn jsd_quadrature_1d<A, B>(
    density_a: A,
    density_b: B,
    lo: f64,
    hi: f64,
    nodes: usize,
) -> Result<f64>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    if !(hi > lo) {
        return Err(Error::InvalidArgument("quadrature range is empty".into()));
    }
    let rule = GaussLegendre::new(nodes)?;
    let kl_term = |p: f64, m: f64| {
        if p > 0.0 && m > 0.0 {
            p * log(p / m)
        } else {
            0.0
        }
    };
    let v = rule.integrate(lo, hi, |x| {
        let pa = density_a(x);
        let pb = density_b(x);
        let m = 0.5 * (pa + pb);
        0.5 * kl_term(pa, m) + 0.5 * kl_term(pb, m)
    });
    Ok(v.clamp(0.0, LN_2))
}

/// JSD between the two branch densities of a 1D mixture at time `t`,
/// integrated over ±10 standard deviations around the outermost means.
pub fn partition_jsd_1d(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    partition: &Partition,
    t: f64,
    nodes: usize,
) -> Result<f64> {
    if spec.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "quadrature JSD needs d = 1, got d = {}",
            spec.dim()
        )));
    }
    partition.check_against(spec)?;
    let cs = nondegenerate(spec, sched, t)?;
    let all: Vec<usize> = (0..spec.n_classes()).collect();
    let density = |subset: Option<&[usize]>| {
        let members: Vec<usize> = subset.map(|s| s.to_vec()).unwrap_or_else(|| all.clone());
        let total: f64 = members.iter().map(|&k| spec.prior(k)).sum();
        let comps: Vec<(f64, f64)> = members
            .iter()
            .map(|&k| (spec.prior(k) / total, cs.alpha * spec.mean(k)[0]))
            .collect();
        let v = cs.v;
        move |x: f64| {
            comps
                .iter()
                .map(|(w, m)| w * normal_pdf(x, *m, v))
                .sum::<f64>()
        }
    };
    let means: Vec<f64> = (0..spec.n_classes())
        .map(|k| cs.alpha * spec.mean(k)[0])
        .collect();
    let sd = sqrt(cs.v);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * sd;
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * sd;
    jsd_quadrature_1d(
        density(partition.subset(Branch::A)),
        density(partition.subset(Branch::B)),
        lo,
        hi,
        nodes,
    )
}

/// Entropy (and entropy production) on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProfile {
    pub times: Vec<f64>,
    /// `t / t_s`; NaN when the speciation scale is degenerate.
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    pub h_stderr: Vec<f64>,
    pub hdot: Vec<f64>,
    pub hdot_stderr: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl EntropyProfile {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Replaces `hdot` with finite differences of `h`.
    pub fn fill_hdot_from_fd(&mut self) -> Result<()> {
        let (d, se) = entropy_production_fd_with_stderr(&self.times, &self.h, &self.h_stderr)?;
        self.hdot = d;
        self.hdot_stderr = se;
        Ok(())
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::GridTooShort { needed: 1, got: 0 });
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "time grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Finite-difference weights for a 3-point stencil on a possibly
/// non-uniform grid; exact for quadratics in the interior.
fn fd_weights(times: &[f64], j: usize) -> [(usize, f64); 3] {
    let n = times.len();
    if j == 0 {
        let h = times[1] - times[0];
        [(0, -1.0 / h), (1, 1.0 / h), (1, 0.0)]
    } else if j == n - 1 {
        let h = times[n - 1] - times[n - 2];
        [(n - 2, -1.0 / h), (n - 1, 1.0 / h), (n - 1, 0.0)]
    } else {
        let h1 = times[j] - times[j - 1];
        let h2 = times[j + 1] - times[j];
        [
            (j - 1, -h2 / (h1 * (h1 + h2))),
            (j, (h2 - h1) / (h1 * h2)),
            (j + 1, h1 / (h2 * (h1 + h2))),
        ]
    }
}

/// Centered differences of `h` over `times` (one-sided at the endpoints).
pub fn entropy_production_fd(times: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let se = vec![0.0; h.len()];
    Ok(entropy_production_fd_with_stderr(times, h, &se)?.0)
}

/// As [`entropy_production_fd`], propagating independent per-point
/// standard errors.
pub fn entropy_production_fd_with_stderr(
    times: &[f64],
    h: &[f64],
    h_se: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.len() < 3 {
        return Err(Error::GridTooShort {
            needed: 3,
            got: times.len(),
        });
    }
    if h.len() != times.len() || h_se.len() != times.len() {
        return Err(Error::GridMismatch);
    }
    check_grid(times)?;
    let mut d = Vec::with_capacity(times.len());
    let mut se = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        let w = fd_weights(times, j);
        d.push(w.iter().map(|(i, c)| c * h[*i]).sum());
        se.push(sqrt(
            w.iter().map(|(i, c)| c * c * h_se[*i] * h_se[*i]).sum(),
        ));
    }
    Ok((d, se))
}

/// Maps the entropy estimators over `times`.
///
/// Without a partition, `H` comes from [`conditional_entropy_mc`] and `Ḣ`
/// from [`entropy_production_fisher`]. With a partition, `H` comes from
/// [`partitioned_entropy_mc`] and `Ḣ` from finite differences (NaN when
/// the grid has fewer than three points).
pub fn profile_sweep<E: Executor>(
    spec: &MixtureSpec,
    sched: &NoiseSchedule,
    times: &[f64],
    n: usize,
    seeds: &SeedStream,
    exec: &E,
    partition: Option<&Partition>,
) -> Result<EntropyProfile> {
    check_samples(n)?;
    check_grid(times)?;
    if let Some(p) = partition {
        p.check_against(spec)?;
    }
    let scale = sched.speciation_time(spec.dim())?;
    let red = spec.reduced();
    let mut profile = EntropyProfile {
        times: times.to_vec(),
        u: times
            .iter()
            .map(|&t| scale.rescale(t).unwrap_or(f64::NAN))
            .collect(),
        h: Vec::with_capacity(times.len()),
        h_stderr: Vec::with_capacity(times.len()),
        hdot: Vec::with_capacity(times.len()),
        hdot_stderr: Vec::with_capacity(times.len()),
        n_samples: n,
        seed: seeds.seed(),
    };
    for &t in times {
        let e = match partition {
            None => conditional_entropy_reduced(&red, sched, t, n, seeds, exec)?,
            Some(p) => partitioned_reduced(&red, sched, p, t, n, seeds, exec)?,
        };
        profile.h.push(e.mean);
        profile.h_stderr.push(e.stderr);
        if partition.is_none() {
            let f = fisher_reduced(&red, sched, t, n, seeds, exec)?;
            profile.hdot.push(f.mean);
            profile.hdot_stderr.push(f.stderr);
        }
    }
    if partition.is_some() {
        if times.len() >= 3 {
            profile.fill_hdot_from_fd()?;
        } else {
            profile.hdot = vec![f64::NAN; times.len()];
            profile.hdot_stderr = vec![f64::NAN; times.len()];
        }
    }
    Ok(profile)
}

/// First upward crossing of `level` by the isotonic fit of `h`, located by
/// linear interpolation.
pub fn crossing_time(times: &[f64], h: &[f64], level: f64) -> Result<f64> {
    if times.len() != h.len() {
        return Err(Error::GridMismatch);
    }
    if times.len() < 2 {
        return Err(Error::GridTooShort {
            needed: 2,
            got: times.len(),
        });
    }
    let fit = isotonic_increasing(h);
    for j in 1..fit.len() {
        if fit[j - 1] < level && fit[j] >= level {
            let frac = (level - fit[j - 1]) / (fit[j] - fit[j - 1]);
            return Ok(times[j - 1] + frac * (times[j] - times[j - 1]));
        }
    }
    Err(Error::NotBracketed { level })
}

/// Interval over which the entropy rises from `lo` to `hi` nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    pub width: f64,
}

/// Default thresholds for two-class instances.
pub const WINDOW_LO: f64 = 0.4;
pub const WINDOW_HI: f64 = 0.6;

pub fn transition_window(profile: &EntropyProfile, lo: f64, hi: f64) -> Result<TransitionWindow> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument("window needs lo < hi".into()));
    }
    let t_lo = crossing_time(&profile.times, &profile.h, lo)?;
    let t_hi = crossing_time(&profile.times, &profile.h, hi)?;
    Ok(TransitionWindow {
        t_lo,
        t_hi,
        width: t_hi - t_lo,
    })
}

/// `ln N`, the entropy of the class prior when it is uniform.
pub fn max_entropy(spec: &MixtureSpec) -> f64 {
    log(spec.n_classes() as f64)
}
