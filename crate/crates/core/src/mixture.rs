//! Exact analytics for isotropic Gaussian mixtures under a Gaussian kernel.
//!
//! For a prior `p_0 = Σ_k π_k N(μ_k, σ_0² I)` the noised component `k` at time
//! `t` is `N(m_k, v I)` with `m_k = α_t μ_k` and `v = α_t² σ_0² + σ_t²`, so
//! posteriors, scores and the posterior-mean denoiser are all closed form.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{exp, log, log_sum_exp, sqrt, squared_norm};
use crate::schedule::NoiseSchedule;

/// Largest class count the hierarchical builder accepts by default.
pub const DEFAULT_CLASS_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    dim: usize,
    n_classes: usize,
    /// Row-major `n_classes x dim`.
    means: Vec<f64>,
    sigma0: f64,
    log_priors: Vec<f64>,
}

/// One level of a nested-cluster hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyLevel {
    pub offset: f64,
    pub branching: usize,
}

impl MixtureSpec {
    /// Builds a mixture from explicit means. `log_priors = None` means
    /// equiprobable classes.
    pub fn new(means: Vec<Vec<f64>>, sigma0: f64, log_priors: Option<Vec<f64>>) -> Result<Self> {
        let n_classes = means.len();
        if n_classes == 0 {
            return Err(Error::InvalidMixture(
                "at least one component is required".into(),
            ));
        }
        let dim = means[0].len();
        let mut flat = Vec::with_capacity(n_classes * dim);
        for (k, m) in means.iter().enumerate() {
            if m.len() != dim {
                return Err(Error::InvalidMixture(format!(
                    "mean {k} has length {}, expected {dim}",
                    m.len()
                )));
            }
            flat.extend_from_slice(m);
        }
        Self::from_flat(dim, flat, sigma0, log_priors)
    }

    /// Builds a mixture from row-major means.
    pub fn from_flat(
        dim: usize,
        means: Vec<f64>,
        sigma0: f64,
        log_priors: Option<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if means.is_empty() || !means.len().is_multiple_of(dim) {
            return Err(Error::InvalidMixture(
                "means must be a non-empty multiple of dim".into(),
            ));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidMixture("means must be finite".into()));
        }
        if !(sigma0.is_finite() && sigma0 >= 0.0) {
            return Err(Error::InvalidMixture(format!(
                "sigma0 must be >= 0, got {sigma0}"
            )));
        }
        let n_classes = means.len() / dim;
        let log_priors = match log_priors {
            None => vec![-log(n_classes as f64); n_classes],
            Some(lp) => {
                if lp.len() != n_classes {
                    return Err(Error::InvalidMixture(format!(
                        "{} log-priors for {n_classes} classes",
                        lp.len()
                    )));
                }
                if lp.iter().any(|p| p.is_nan() || *p == f64::INFINITY) {
                    return Err(Error::InvalidMixture(
                        "log-priors must be finite or -inf".into(),
                    ));
                }
                let total: f64 = lp.iter().map(|&p| exp(p)).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidMixture(format!(
                        "priors sum to {total}, not 1"
                    )));
                }
                lp
            }
        };
        Ok(Self {
            dim,
            n_classes,
            means,
            sigma0,
            log_priors,
        })
    }

    /// Two equiprobable classes at `±sqrt(q d) e_1`, so `‖μ_k‖² = q d`.
    pub fn symmetric_two_class(d: usize, q: f64, sigma0: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::InvalidMixture(format!("q must be >= 0, got {q}")));
        }
        let a = sqrt(q * d as f64);
        let mut means = vec![0.0; 2 * d];
        means[0] = a;
        means[d] = -a;
        Self::from_flat(d, means, sigma0, None)
    }

    /// Nested clusters: each level adds an offset along fresh coordinate axes.
    ///
    /// A level with branching factor 2 uses one axis (`±offset`); a level with
    /// factor `b > 2` places its children at `offset · e_j` on `b` fresh axes.
    /// Class indices are mixed-radix with the first level most significant.
    pub fn hierarchical(
        levels: &[HierarchyLevel],
        d: usize,
        sigma0: f64,
        cap: usize,
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidMixture(
                "hierarchy needs at least one level".into(),
            ));
        }
        let mut count: usize = 1;
        let mut axes = 0;
        for (l, level) in levels.iter().enumerate() {
            if level.branching < 2 {
                return Err(Error::InvalidMixture(format!(
                    "level {l}: branching factor must be >= 2"
                )));
            }
            if !(level.offset.is_finite() && level.offset > 0.0) {
                return Err(Error::InvalidMixture(format!(
                    "level {l}: offset must be > 0"
                )));
            }
            count = count.saturating_mul(level.branching);
            if count > cap {
                return Err(Error::TooManyClasses { count, cap });
            }
            axes += if level.branching == 2 {
                1
            } else {
                level.branching
            };
        }
        if axes > d {
            return Err(Error::InvalidMixture(format!(
                "hierarchy needs {axes} axes but d = {d}"
            )));
        }
        let mut means = vec![0.0; count * d];
        for class in 0..count {
            let row = &mut means[class * d..(class + 1) * d];
            let mut rest = class;
            let mut stride = count;
            let mut axis = 0;
            for level in levels {
                stride /= level.branching;
                let child = rest / stride;
                rest %= stride;
                if level.branching == 2 {
                    row[axis] = if child == 0 {
                        level.offset
                    } else {
                        -level.offset
                    };
                    axis += 1;
                } else {
                    row[axis + child] = level.offset;
                    axis += level.branching;
                }
            }
        }
        Self::from_flat(d, means, sigma0, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn log_prior(&self, k: usize) -> f64 {
        self.log_priors[k]
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    pub fn prior(&self, k: usize) -> f64 {
        exp(self.log_priors[k])
    }

    /// `q_k = ‖μ_k‖² / d`.
    pub fn q(&self, k: usize) -> f64 {
        squared_norm(self.mean(k)) / self.dim as f64
    }

    /// `δ_ik² = ‖μ_i − μ_k‖² / d`.
    pub fn delta2(&self, i: usize, k: usize) -> f64 {
        crate::math::squared_distance(self.mean(i), self.mean(k)) / self.dim as f64
    }

    pub fn check_class(&self, k: usize) -> Result<()> {
        if k >= self.n_classes {
            return Err(Error::ClassOutOfRange {
                index: k,
                count: self.n_classes,
            });
        }
        Ok(())
    }

    pub fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        subset.iter().try_for_each(|&k| self.check_class(k))
    }

    /// Marginal statistics of every component at time `t`.
    pub fn component_stats(&self, sched: &NoiseSchedule, t: f64) -> Result<ComponentStats<'_>> {
        let (alpha, sigma2) = sched.alpha_sigma(t)?;
        let v = alpha * alpha * self.sigma0 * self.sigma0 + sigma2;
        Ok(ComponentStats {
            spec: self,
            t,
            alpha,
            sigma2,
            v,
        })
    }

    /// Equivalent mixture expressed in an orthonormal basis of the span of
    /// `{μ_k − μ_0}`, with `μ_0` moved to the origin.
    ///
    /// For isotropic components the coordinates orthogonal to that span are
    /// shared noise: posteriors, log-ratios, and the score mismatch
    /// `s_k − s_mix` only see the projected coordinates. A state sampled in
    /// the reduced space therefore gives exactly the same distribution of
    /// those quantities as a full `d`-dimensional draw.
    pub fn reduced(&self) -> MixtureSpec {
        let origin = self.mean(0);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let scale = (0..self.n_classes)
            .map(|k| crate::math::squared_distance(self.mean(k), origin))
            .fold(0.0, f64::max);
        for k in 1..self.n_classes {
            let mut v: Vec<f64> = self
                .mean(k)
                .iter()
                .zip(origin)
                .map(|(a, b)| a - b)
                .collect();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= dot * y;
                    }
                }
            }
            let norm2 = squared_norm(&v);
            if norm2 > 1e-24 * scale.max(1e-300) && norm2 > 0.0 {
                let inv = 1.0 / sqrt(norm2);
                v.iter_mut().for_each(|x| *x *= inv);
                basis.push(v);
            }
        }
        let r = basis.len().max(1);
        let mut means = vec![0.0; self.n_classes * r];
        for k in 0..self.n_classes {
            for (j, b) in basis.iter().enumerate() {
                means[k * r + j] = self
                    .mean(k)
                    .iter()
                    .zip(origin)
                    .zip(b)
                    .map(|((m, o), e)| (m - o) * e)
                    .sum();
            }
        }
        MixtureSpec {
            dim: r,
            n_classes: self.n_classes,
            means,
            sigma0: self.sigma0,
            log_priors: self.log_priors.clone(),
        }
    }

    /// Draws a class label from the priors, restricted to `subset` when given.
    pub fn sample_class<R: Rng + ?Sized>(&self, subset: Option<&[usize]>, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        match subset {
            None => {
                let mut acc = 0.0;
                for k in 0..self.n_classes {
                    acc += self.prior(k);
                    if u < acc {
                        return k;
                    }
                }
                self.n_classes - 1
            }
            Some(s) => {
                let total: f64 = s.iter().map(|&k| self.prior(k)).sum();
                let mut acc = 0.0;
                for &k in s {
                    acc += self.prior(k) / total;
                    if u < acc {
                        return k;
                    }
                }
                s[s.len() - 1]
            }
        }
    }

    pub fn posterior(&self, sched: &NoiseSchedule, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.component_stats(sched, t)?.posterior(x)
    }

    pub fn log_ratio(
        &self,
        sched: &NoiseSchedule,
        t: f64,
        x: &[f64],
        i: usize,
        k: usize,
    ) -> Result<f64> {
        self.component_stats(sched, t)?.log_ratio(x, i, k)
    }

    pub fn evidence_stats(
        &self,
        sched: &NoiseSchedule,
        t: f64,
        i: usize,
        k: usize,
    ) -> Result<PairwiseEvidence> {
        self.component_stats(sched, t)?.evidence_stats(i, k)
    }

    pub fn component_score(
        &self,
        sched: &NoiseSchedule,
        t: f64,
        x: &[f64],
        k: usize,
    ) -> Result<Vec<f64>> {
        self.component_stats(sched, t)?.component_score(x, k)
    }

    pub fn mixture_score(
        &self,
        sched: &NoiseSchedule,
        t: f64,
        x: &[f64],
        subset: Option<&[usize]>,
    ) -> Result<Vec<f64>> {
        self.component_stats(sched, t)?.mixture_score(x, subset)
    }

    pub fn denoiser(
        &self,
        sched: &NoiseSchedule,
        t: f64,
        x: &[f64],
        subset: Option<&[usize]>,
    ) -> Result<Vec<f64>> {
        self.component_stats(sched, t)?.denoiser(x, subset)
    }
}

/// Component means and shared variance at a fixed time.
#[derive(Debug, Clone, Copy)]
pub struct ComponentStats<'a> {
    spec: &'a MixtureSpec,
    pub t: f64,
    pub alpha: f64,
    pub sigma2: f64,
    /// Total per-coordinate variance `α² σ_0² + σ_t²`.
    pub v: f64,
}

/// Distribution of `Λ_ik(X_t)` given `Z = i`: Gaussian with mean `m_ik` and
/// variance `v_ik`, so `Λ_ik = m_ik + sqrt(v_ik) ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseEvidence {
    pub m_ik: f64,
    pub v_ik: f64,
    pub snr: f64,
}

impl<'a> ComponentStats<'a> {
    pub fn spec(&self) -> &'a MixtureSpec {
        self.spec
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.v > 0.0)
    }

    fn require_variance(&self) -> Result<()> {
        if self.is_degenerate() {
            Err(Error::DegenerateVariance { t: self.t })
        } else {
            Ok(())
        }
    }

    fn require_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(())
    }

    /// `m_k = α μ_k`.
    pub fn mean(&self, k: usize) -> Vec<f64> {
        self.spec.mean(k).iter().map(|m| self.alpha * m).collect()
    }

    /// `‖x − α μ_k‖²`.
    pub fn squared_residual(&self, x: &[f64], k: usize) -> f64 {
        x.iter()
            .zip(self.spec.mean(k))
            .map(|(xi, mi)| {
                let r = xi - self.alpha * mi;
                r * r
            })
            .sum()
    }

    /// `ln π_k − ‖x − m_k‖² / (2v)` for every class.
    pub fn log_weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_variance()?;
        self.require_state(x)?;
        Ok((0..self.spec.n_classes)
            .map(|k| self.spec.log_priors[k] - self.squared_residual(x, k) / (2.0 * self.v))
            .collect())
    }

    /// Posterior `γ_k(x, t)` over all classes, computed in log space.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut w = self.log_weights(x)?;
        crate::math::softmax_in_place(&mut w);
        Ok(w)
    }

    /// Posterior restricted to `subset` and renormalized; zero elsewhere.
    pub fn posterior_subset(&self, x: &[f64], subset: Option<&[usize]>) -> Result<Vec<f64>> {
        match subset {
            None => self.posterior(x),
            Some(s) => {
                self.spec.check_subset(s)?;
                let w = self.log_weights(x)?;
                let sel: Vec<f64> = s.iter().map(|&k| w[k]).collect();
                let lse = log_sum_exp(&sel);
                let mut out = vec![0.0; self.spec.n_classes];
                for &k in s {
                    out[k] = exp(w[k] - lse);
                }
                Ok(out)
            }
        }
    }

    /// `ln p_t(x | Z ∈ subset)` up to the additive constant shared by every
    /// subset at this time (`-(d/2) ln(2π v)`).
    pub fn log_subset_density(&self, x: &[f64], subset: Option<&[usize]>) -> Result<f64> {
        let w = self.log_weights(x)?;
        Ok(match subset {
            None => log_sum_exp(&w),
            Some(s) => {
                self.spec.check_subset(s)?;
                let sel: Vec<f64> = s.iter().map(|&k| w[k]).collect();
                let norm: Vec<f64> = s.iter().map(|&k| self.spec.log_priors[k]).collect();
                log_sum_exp(&sel) - log_sum_exp(&norm)
            }
        })
    }

    /// `Λ_ik = (‖x − m_k‖² − ‖x − m_i‖²) / (2v) + ln π_i − ln π_k`.
    pub fn log_ratio(&self, x: &[f64], i: usize, k: usize) -> Result<f64> {
        self.require_variance()?;
        self.require_state(x)?;
        self.spec.check_class(i)?;
        self.spec.check_class(k)?;
        if i == k {
            return Ok(0.0);
        }
        Ok(
            (self.squared_residual(x, k) - self.squared_residual(x, i)) / (2.0 * self.v)
                + (self.spec.log_priors[i] - self.spec.log_priors[k]),
        )
    }

    pub fn evidence_stats(&self, i: usize, k: usize) -> Result<PairwiseEvidence> {
        self.require_variance()?;
        self.spec.check_class(i)?;
        self.spec.check_class(k)?;
        let sep = self.alpha
            * self.alpha
            * crate::math::squared_distance(self.spec.mean(i), self.spec.mean(k));
        Ok(PairwiseEvidence {
            m_ik: sep / (2.0 * self.v),
            v_ik: sep / self.v,
            snr: sep / (4.0 * self.v),
        })
    }

    /// `s_k(x) = −(x − m_k) / v`.
    pub fn component_score(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        self.require_variance()?;
        self.require_state(x)?;
        self.spec.check_class(k)?;
        Ok(x.iter()
            .zip(self.spec.mean(k))
            .map(|(xi, mi)| -(xi - self.alpha * mi) / self.v)
            .collect())
    }

    /// Posterior-weighted mean of the (scaled) component means over `subset`.
    fn weighted_mean(&self, x: &[f64], subset: Option<&[usize]>) -> Result<(Vec<f64>, Vec<f64>)> {
        let gamma = self.posterior_subset(x, subset)?;
        let mut mean = vec![0.0; self.spec.dim];
        for (k, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (acc, m) in mean.iter_mut().zip(self.spec.mean(k)) {
                *acc += g * m;
            }
        }
        Ok((mean, gamma))
    }

    /// `s(x) = Σ_k γ_k s_k(x) = −(x − Σ_k γ_k m_k) / v`, with `γ` renormalized
    /// over `subset` when given.
    pub fn mixture_score(&self, x: &[f64], subset: Option<&[usize]>) -> Result<Vec<f64>> {
        let (mu_bar, _) = self.weighted_mean(x, subset)?;
        Ok(x.iter()
            .zip(&mu_bar)
            .map(|(xi, m)| -(xi - self.alpha * m) / self.v)
            .collect())
    }

    /// Posterior mean `E[x_0 | x_t]` over `subset`:
    /// `Σ_k γ_k [μ_k + (α σ_0² / v)(x − α μ_k)]`.
    pub fn denoiser(&self, x: &[f64], subset: Option<&[usize]>) -> Result<Vec<f64>> {
        if !(self.alpha > 0.0) {
            return Err(Error::ZeroAlpha);
        }
        let (mu_bar, _) = self.weighted_mean(x, subset)?;
        let shrink = self.alpha * self.spec.sigma0 * self.spec.sigma0 / self.v;
        Ok(x.iter()
            .zip(&mu_bar)
            .map(|(xi, m)| m + shrink * (xi - self.alpha * m))
            .collect())
    }

    /// `‖s_k − s_mix‖² = ‖m_k − Σ_j γ_j m_j‖² / v²`.
    pub fn score_mismatch(&self, x: &[f64], k: usize) -> Result<f64> {
        self.spec.check_class(k)?;
        let (mu_bar, _) = self.weighted_mean(x, None)?;
        let a2 = self.alpha * self.alpha;
        let dist: f64 = self
            .spec
            .mean(k)
            .iter()
            .zip(&mu_bar)
            .map(|(m, b)| (m - b) * (m - b))
            .sum();
        Ok(a2 * dist / (self.v * self.v))
    }

    /// Fills `out` with a draw from `N(m_k, v I)`.
    pub fn sample_component<R: Rng + ?Sized>(&self, k: usize, rng: &mut R, out: &mut [f64]) {
        let sd = sqrt(self.v);
        for (o, m) in out.iter_mut().zip(self.spec.mean(k)) {
            let e: f64 = rng.sample(StandardNormal);
            *o = self.alpha * m + sd * e;
        }
    }
}

/// Right-hand side of `SNR ≍ d e^{−2t} / (e^{−2t} σ_0² + 1 − e^{−2t})` with unit
/// constant (VP only). Diagnostic use.
pub fn snr_asymptotic(sched: &NoiseSchedule, d: usize, sigma0: f64, t: f64) -> Result<f64> {
    if sched.kind() != crate::schedule::ScheduleKind::Vp {
        return Err(Error::InvalidArgument(
            "asymptotic SNR is defined for the VP schedule".into(),
        ));
    }
    let (alpha, sigma2) = sched.alpha_sigma(t)?;
    let a2 = alpha * alpha;
    let denom = a2 * sigma0 * sigma0 + sigma2;
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(d as f64 * a2 / denom)
}
