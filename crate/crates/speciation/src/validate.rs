//! Built-in oracle suite behind the `validate` command.
//!
//! Each check compares an estimator against an independent reference on a
//! small fixed instance and reports the measured error next to its
//! tolerance. `tolerance_scale` multiplies every tolerance, which is how a
//! deliberately broken tolerance can be injected.

use serde::Serialize;
use speciation_core::entropy::{
    conditional_entropy_mc, entropy_production_fisher, entropy_production_paired_fd,
    partition_jsd_1d, partitioned_entropy_mc,
};
use speciation_core::math::LN_2;
use speciation_core::mixture::HierarchyLevel;
use speciation_core::stats::combined_stderr;
use speciation_core::tracker::{estimate_entropy_online, TrackerConfig};
use speciation_core::{
    Executor, GmmDenoiser, MixtureSpec, NoiseSchedule, Partition, ScheduleKind, SeedStream,
};

use crate::commands::RunError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub passed: bool,
    pub seed: u64,
    pub tolerance_scale: f64,
    pub checks: Vec<Check>,
}

fn core_err(context: &'static str) -> impl FnOnce(speciation_core::Error) -> RunError {
    move |source| RunError::Compute {
        context: context.into(),
        source,
    }
}

fn pm(a: f64, sigma0: f64) -> MixtureSpec {
    MixtureSpec::new(vec![vec![a], vec![-a]], sigma0, None).expect("valid mixture")
}

/// `ln 2 − H[π(Z) | X_t]` against quadrature JSD on three 1D instances;
/// the measure is the largest deviation in standard errors.
fn jsd_identity(seeds: &SeedStream, exec: &impl Executor, scale: f64) -> Result<Check, RunError> {
    let sched = NoiseSchedule::vp(10.0).expect("valid schedule");
    let part = Partition::pair(0, 1).expect("valid partition");
    let mut worst: f64 = 0.0;
    for (a, sigma0, t) in [(0.5, 1.0, 0.3), (1.0, 0.5, 0.4), (3.0, 0.3, 0.2)] {
        let spec = pm(a, sigma0);
        let jsd =
            partition_jsd_1d(&spec, &sched, &part, t, 2048).map_err(core_err("quadrature JSD"))?;
        let e = partitioned_entropy_mc(&spec, &sched, &part, t, 20_000, seeds, exec)
            .map_err(core_err("partitioned entropy"))?;
        let dev = (LN_2 - e.mean - jsd).abs();
        worst = worst.max(if e.stderr > 0.0 {
            dev / e.stderr
        } else if dev < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    let tol = 3.0 * scale;
    Ok(Check {
        name: "jsd_identity",
        passed: worst <= tol,
        measured: worst,
        tolerance: tol,
        detail: "max |ln2 - H - JSD| / stderr".into(),
    })
}

fn production_grid() -> Vec<f64> {
    (0..24).map(|i| 0.05 + 0.1 * i as f64).collect()
}

/// Fisher-form `Ḣ` against a paired finite difference of `H`; the measure
/// is the fraction of grid points agreeing within 3 combined stderr.
fn fisher_vs_fd(seeds: &SeedStream, exec: &impl Executor, scale: f64) -> Result<Check, RunError> {
    let spec = pm(1.0, 0.3);
    let sched = NoiseSchedule::vp(10.0).expect("valid schedule");
    let fd_seeds = SeedStream::new(seeds.seed() ^ 0x5eed);
    let grid = production_grid();
    let mut agree = 0usize;
    for &t in &grid {
        let f = entropy_production_fisher(&spec, &sched, t, 20_000, seeds, exec)
            .map_err(core_err("Fisher production"))?;
        let d = entropy_production_paired_fd(&spec, &sched, t, 0.01, 20_000, &fd_seeds, exec)
            .map_err(core_err("paired difference"))?;
        if (f.mean - d.mean).abs() <= 3.0 * scale * combined_stderr(f.stderr, d.stderr) {
            agree += 1;
        }
    }
    let frac = agree as f64 / grid.len() as f64;
    Ok(Check {
        name: "fisher_vs_fd",
        passed: frac >= 0.95,
        measured: frac,
        tolerance: 0.95,
        detail: "fraction of grid points within 3 stderr".into(),
    })
}

/// Trapezoid integral of Fisher `Ḣ` against `H(end) − H(0)`, relative to
/// `ln 2`.
fn conservation(seeds: &SeedStream, exec: &impl Executor, scale: f64) -> Result<Check, RunError> {
    let spec = pm(1.0, 0.3);
    let sched = NoiseSchedule::vp(8.0).expect("valid schedule");
    let n_pts = 321;
    let times: Vec<f64> = (0..n_pts)
        .map(|i| 8.0 * i as f64 / (n_pts - 1) as f64)
        .collect();
    let mut hdot = Vec::with_capacity(n_pts);
    for &t in &times {
        hdot.push(
            entropy_production_fisher(&spec, &sched, t, 10_000, seeds, exec)
                .map_err(core_err("Fisher production"))?
                .mean,
        );
    }
    let integral: f64 = times
        .windows(2)
        .zip(hdot.windows(2))
        .map(|(t, h)| 0.5 * (t[1] - t[0]) * (h[0] + h[1]))
        .sum();
    let h0 = conditional_entropy_mc(&spec, &sched, 0.0, 50_000, seeds, exec)
        .map_err(core_err("entropy"))?
        .mean;
    let h1 = conditional_entropy_mc(&spec, &sched, 8.0, 50_000, seeds, exec)
        .map_err(core_err("entropy"))?
        .mean;
    let rel = (integral - (h1 - h0)).abs() / LN_2;
    let tol = 0.02 * scale;
    Ok(Check {
        name: "conservation",
        passed: rel <= tol,
        measured: rel,
        tolerance: tol,
        detail: "|int Hdot dt - (H(end) - H(0))| / ln2".into(),
    })
}

/// Mean distance between tracked and closed-form branch posteriors.
fn tracker(seeds: &SeedStream, exec: &impl Executor, scale: f64) -> Result<Check, RunError> {
    let d = 16;
    let spec = MixtureSpec::symmetric_two_class(d, 1.0, 1.0).expect("valid mixture");
    let sched = NoiseSchedule::with_default_horizon(ScheduleKind::Vp, d).expect("valid schedule");
    let part = Partition::pair(0, 1).expect("valid partition");
    let den = GmmDenoiser::new(&spec, sched, part.clone()).map_err(core_err("denoiser"))?;
    let oracle = |x: &[f64], t: f64| den.closed_form_gamma(x, t);
    let tc = TrackerConfig {
        steps: 256,
        n_trajectories: 200,
        t_start: None,
        guidance: None,
    };
    let est = estimate_entropy_online(&den, &sched, &part, &tc, seeds, exec, Some(&oracle))
        .map_err(core_err("tracker"))?;
    let err = est.mean_gamma_abs_err().unwrap_or(f64::INFINITY);
    let tol = 0.02 * scale;
    Ok(Check {
        name: "tracker_vs_closed_form",
        passed: err <= tol,
        measured: err,
        tolerance: tol,
        detail: "mean |gamma_tracked - gamma_exact|".into(),
    })
}

/// `H` at `5 t_s` against `ln N` for a four-class hierarchy.
fn mixed_limit(seeds: &SeedStream, exec: &impl Executor, scale: f64) -> Result<Check, RunError> {
    let d = 64;
    let levels = [
        HierarchyLevel {
            offset: 10.0,
            branching: 2,
        },
        HierarchyLevel {
            offset: 5.0,
            branching: 2,
        },
    ];
    let spec = MixtureSpec::hierarchical(&levels, d, 1.0, 16).expect("valid mixture");
    let t = 2.5 * (d as f64).ln();
    let sched = NoiseSchedule::vp(t).expect("valid schedule");
    let e = conditional_entropy_mc(&spec, &sched, t, 20_000, seeds, exec)
        .map_err(core_err("entropy"))?;
    let dev = (e.mean - 4f64.ln()).abs();
    let tol = 0.01 * scale;
    Ok(Check {
        name: "mixed_limit",
        passed: dev <= tol,
        measured: dev,
        tolerance: tol,
        detail: "|H(5 t_s) - ln N|".into(),
    })
}

pub fn run<E: Executor>(seed: u64, tolerance_scale: f64, exec: &E) -> Result<Report, RunError> {
    let seeds = SeedStream::new(seed);
    let checks = vec![
        jsd_identity(&seeds, exec, tolerance_scale)?,
        fisher_vs_fd(&seeds, exec, tolerance_scale)?,
        conservation(&seeds, exec, tolerance_scale)?,
        tracker(&seeds, exec, tolerance_scale)?,
        mixed_limit(&seeds, exec, tolerance_scale)?,
    ];
    Ok(Report {
        passed: checks.iter().all(|c| c.passed),
        seed,
        tolerance_scale,
        checks,
    })
}
