//! The experiment commands. Each one turns a validated config into a
//! [`Table`].

use speciation_core::entropy::{profile_sweep, transition_window, EntropyProfile};
use speciation_core::stats::combined_stderr;
use speciation_core::tracker::{
    distortion_profile, estimate_entropy_online, OnlineEstimate, TrackerConfig,
};
use speciation_core::{Executor, GmmDenoiser, SeedStream};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{Cell, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Compute {
        context: String,
        #[source]
        source: speciation_core::Error,
    },
}

fn compute(context: impl Into<String>) -> impl FnOnce(speciation_core::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Compute { context, source }
}

pub const PROFILE_COLUMNS: [&str; 8] = [
    "t",
    "u",
    "H",
    "H_stderr",
    "Hdot",
    "Hdot_stderr",
    "n",
    "seed",
];

fn profile_rows(table: &mut Table, p: &EntropyProfile, extra: Option<&[f64]>) {
    for j in 0..p.len() {
        let mut row = vec![
            Cell::Float(p.times[j]),
            Cell::Float(p.u[j]),
            Cell::Float(p.h[j]),
            Cell::Float(p.h_stderr[j]),
            Cell::Float(p.hdot[j]),
            Cell::Float(p.hdot_stderr[j]),
            Cell::Int(p.n_samples as u64),
            Cell::Int(p.seed),
        ];
        if let Some(e) = extra {
            row.push(Cell::Float(e[j]));
        }
        table.push(row);
    }
}

/// Entropy profile on the configured grid. Without a `[partition]` block
/// this is `H[Z | X_t]` with the Fisher-form `Ḣ`; with one it is the
/// partitioned entropy with finite-difference `Ḣ`.
pub fn profile<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<Table, RunError> {
    let spec = cfg.mixture_spec(None)?;
    let sched = cfg.schedule_for(spec.dim())?;
    let times = cfg.times_for(spec.dim())?;
    let partition = match cfg.partition {
        Some(_) => Some(cfg.partition_for(&spec)?),
        None => None,
    };
    let seeds = SeedStream::new(cfg.estimator.seed);
    let p = profile_sweep(
        &spec,
        &sched,
        &times,
        cfg.estimator.n_samples,
        &seeds,
        exec,
        partition.as_ref(),
    )
    .map_err(compute("profile"))?;
    let mut table = Table::new(PROFILE_COLUMNS.to_vec());
    profile_rows(&mut table, &p, None);
    Ok(table)
}

/// Transition window (entropy between `sweep.lo` and `sweep.hi`) for each
/// dimension in `sweep.d_list`.
pub fn speciation_sweep<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<Table, RunError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError::new("sweep", "this command needs a [sweep] block"))?;
    let seeds = SeedStream::new(cfg.estimator.seed);
    let mut table = Table::new(vec!["d", "t_s", "t_lo", "t_hi", "width_t", "width_u"]);
    for &d in &sweep.d_list {
        let spec = cfg.mixture_spec(Some(d))?;
        let sched = cfg.schedule_for(d)?;
        let times = cfg.times_for(d)?;
        let partition = match cfg.partition {
            Some(_) => Some(cfg.partition_for(&spec)?),
            None => None,
        };
        let p = profile_sweep(
            &spec,
            &sched,
            &times,
            cfg.estimator.n_samples,
            &seeds,
            exec,
            partition.as_ref(),
        )
        .map_err(compute(format!("profile at d = {d}")))?;
        let w = transition_window(&p, sweep.lo, sweep.hi)
            .map_err(compute(format!("window at d = {d}")))?;
        let t_s = sched
            .speciation_time(d)
            .map_err(compute("speciation time"))?
            .t_s;
        table.push(vec![
            Cell::Int(d as u64),
            Cell::Float(t_s),
            Cell::Float(w.t_lo),
            Cell::Float(w.t_hi),
            Cell::Float(w.width),
            Cell::Float(w.width / t_s),
        ]);
    }
    Ok(table)
}

fn online(
    cfg: &ExperimentConfig,
    exec: &impl Executor,
    guided: bool,
) -> Result<OnlineEstimate, RunError> {
    let spec = cfg.mixture_spec(None)?;
    let sched = cfg.schedule_for(spec.dim())?;
    let partition = cfg.partition_for(&spec)?;
    let den = GmmDenoiser::new(&spec, sched, partition.clone()).map_err(compute("denoiser"))?;
    let tc = TrackerConfig {
        steps: cfg.estimator.steps,
        n_trajectories: cfg.estimator.n_trajectories,
        t_start: None,
        guidance: if guided { cfg.guidance_config()? } else { None },
    };
    let oracle = |x: &[f64], t: f64| den.closed_form_gamma(x, t);
    estimate_entropy_online(
        &den,
        &sched,
        &partition,
        &tc,
        &SeedStream::new(cfg.estimator.seed),
        exec,
        Some(&oracle),
    )
    .map_err(compute("tracker"))
}

/// Online (tracked) partitioned entropy on the reverse grid, plus the mean
/// distance between tracked and closed-form posteriors. Guidance, when
/// configured, shapes the trajectories.
pub fn track<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<Table, RunError> {
    let est = online(cfg, exec, true)?;
    let mut header = PROFILE_COLUMNS.to_vec();
    header.push("gamma_abs_err");
    let mut table = Table::new(header);
    profile_rows(&mut table, &est.profile, est.gamma_abs_err.as_deref());
    Ok(table)
}

/// Entropy production with and without guidance (same seeds) and their
/// difference.
pub fn guidance_distortion<E: Executor>(
    cfg: &ExperimentConfig,
    exec: &E,
) -> Result<Table, RunError> {
    if cfg.guidance.is_none() {
        return Err(ConfigError::new("guidance", "this command needs a [guidance] block").into());
    }
    let base = online(cfg, exec, false)?.profile;
    let guided = online(cfg, exec, true)?.profile;
    let delta = distortion_profile(&base, &guided).map_err(compute("distortion"))?;
    let mut table = Table::new(vec![
        "t",
        "Hdot_base",
        "Hdot_guided",
        "delta",
        "delta_stderr",
    ]);
    for (j, dj) in delta.iter().enumerate() {
        table.push(vec![
            Cell::Float(base.times[j]),
            Cell::Float(base.hdot[j]),
            Cell::Float(guided.hdot[j]),
            Cell::Float(*dj),
            Cell::Float(combined_stderr(base.hdot_stderr[j], guided.hdot_stderr[j])),
        ]);
    }
    Ok(table)
}
