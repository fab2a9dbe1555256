//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use speciation::commands;
use speciation::{ExperimentConfig, RayonExecutor};
use speciation_core::entropy::{
    conditional_entropy_mc, crossing_time, entropy_production_paired_fd, partition_jsd_1d,
    partitioned_entropy_mc, profile_sweep,
};
use speciation_core::mixture::HierarchyLevel;
use speciation_core::stats::combined_stderr;
use speciation_core::tracker::{
    argmax_time, estimate_entropy_online, OnlineEstimate, TrackerConfig,
};
use speciation_core::{
    GmmDenoiser, GuidanceConfig, MixtureSpec, NoiseSchedule, Partition, ScheduleKind, SeedStream,
};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn collapse(exec: &RayonExecutor) -> Outcome {
    let started = Instant::now();
    let us: Vec<f64> = (0..64)
        .map(|i| 0.05 + (3.0 - 0.05) * i as f64 / 63.0)
        .collect();
    let mut crossings = Vec::new();
    for d in [100usize, 1000, 10_000] {
        let spec = MixtureSpec::symmetric_two_class(d, 1.0, 1.0).unwrap();
        let sched = NoiseSchedule::with_default_horizon(ScheduleKind::Vp, d).unwrap();
        let t_s = sched.speciation_time(d).unwrap().t_s;
        let times: Vec<f64> = us.iter().map(|u| u * t_s).collect();
        let p = profile_sweep(
            &spec,
            &sched,
            &times,
            20_000,
            &SeedStream::new(1),
            exec,
            None,
        )
        .unwrap();
        crossings.push(crossing_time(&us, &p.h, 0.5 * LN_2).unwrap());
    }
    let elapsed = started.elapsed();
    let in_band = crossings.iter().all(|u| (0.8..=1.2).contains(u));
    let gaps: Vec<f64> = crossings.iter().map(|u| (u - 1.0).abs()).collect();
    let shrinking = gaps.windows(2).all(|w| w[1] <= w[0]);
    verdict(
        in_band && shrinking && elapsed <= Duration::from_secs(600),
        format!(
            "u_cross = {crossings:.4?} for d = 1e2, 1e3, 1e4; |u-1| = {gaps:.4?}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

const SWEEP: &str = r#"
[schedule]
kind = "KIND"
[mixture]
kind = "symmetric"
d = 16
sigma0 = 1.0
[grid]
axis = "u"
start = 0.25
stop = 3.0
count = 128
[sweep]
d_list = DLIST
[estimator]
n_samples = 20000
seed = 2
"#;

fn widths(kind: &str, d_list: &str, exec: &RayonExecutor) -> Vec<f64> {
    let cfg =
        ExperimentConfig::from_toml_str(&SWEEP.replace("KIND", kind).replace("DLIST", d_list))
            .unwrap();
    let table = commands::speciation_sweep(&cfg.resolve(None).unwrap(), exec).unwrap();
    let j = table.header.iter().position(|h| *h == "width_t").unwrap();
    table
        .rows
        .iter()
        .map(|r| match r[j] {
            speciation::Cell::Float(v) => v,
            speciation::Cell::Int(v) => v as f64,
        })
        .collect()
}

fn width_scaling(exec: &RayonExecutor) -> Outcome {
    let vp = widths("vp", "[16, 256, 4096]", exec);
    let edm = widths("edm", "[64, 256, 1024]", exec);
    let vp_ratio =
        vp.iter().copied().fold(f64::MIN, f64::max) / vp.iter().copied().fold(f64::MAX, f64::min);
    let edm_ratios: Vec<f64> = edm.windows(2).map(|w| w[1] / w[0]).collect();
    verdict(
        vp_ratio <= 1.5 && edm_ratios.iter().all(|r| (1.5..=2.7).contains(r)),
        format!("VP widths {vp:.4?} (max/min {vp_ratio:.3}); EDM widths {edm:.3?} (ratios {edm_ratios:.3?})"),
    )
}

fn limits(exec: &RayonExecutor) -> Outcome {
    let n = 50_000;
    let seeds = SeedStream::new(3);
    let two = MixtureSpec::symmetric_two_class(100, 1.0, 1.0).unwrap();
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
    let four = MixtureSpec::hierarchical(&levels, 64, 1.0, 16).unwrap();
    let mut worst_mixed: f64 = 0.0;
    let mut worst_clean: f64 = 0.0;
    for spec in [&two, &four] {
        let d = spec.dim();
        let t_s = 0.5 * (d as f64).ln();
        let sched = NoiseSchedule::vp(8.0 * t_s).unwrap();
        let ln_n = (spec.n_classes() as f64).ln();
        for k in [5.0, 6.5, 8.0] {
            let e = conditional_entropy_mc(spec, &sched, k * t_s, n, &seeds, exec).unwrap();
            worst_mixed = worst_mixed.max((e.mean - ln_n).abs());
        }
        let min_sep = (0..spec.n_classes())
            .flat_map(|i| (0..i).map(move |k| (i, k)))
            .map(|(i, k)| (spec.delta2(i, k) * d as f64).sqrt())
            .fold(f64::MAX, f64::min);
        assert!(min_sep / spec.sigma0() >= 10.0);
        worst_clean = worst_clean.max(
            conditional_entropy_mc(spec, &sched, 0.0, n, &seeds, exec)
                .unwrap()
                .mean,
        );
    }
    verdict(
        worst_mixed <= 0.01 && worst_clean <= 0.01,
        format!("max |H(t>=5t_s) - ln N| = {worst_mixed:.2e}; max H(0) = {worst_clean:.2e}"),
    )
}

fn production(exec: &RayonExecutor) -> Outcome {
    let spec = MixtureSpec::new(vec![vec![1.0], vec![-1.0]], 0.3, None).unwrap();
    let sched = NoiseSchedule::vp(6.0).unwrap();
    let grid: Vec<f64> = (0..64).map(|i| 0.02 + 0.05 * i as f64).collect();
    let fisher = profile_sweep(
        &spec,
        &sched,
        &grid,
        50_000,
        &SeedStream::new(4),
        exec,
        None,
    )
    .unwrap();
    let fd_seeds = SeedStream::new(40);
    let mut agree = 0;
    for (j, &t) in grid.iter().enumerate() {
        let d =
            entropy_production_paired_fd(&spec, &sched, t, 0.01, 50_000, &fd_seeds, exec).unwrap();
        if (fisher.hdot[j] - d.mean).abs() <= 3.0 * combined_stderr(fisher.hdot_stderr[j], d.stderr)
        {
            agree += 1;
        }
    }
    let frac = agree as f64 / grid.len() as f64;

    let fine: Vec<f64> = (0..=300).map(|i| 6.0 * i as f64 / 300.0).collect();
    let p = profile_sweep(
        &spec,
        &sched,
        &fine,
        20_000,
        &SeedStream::new(5),
        exec,
        None,
    )
    .unwrap();
    let integral: f64 = p
        .times
        .windows(2)
        .zip(p.hdot.windows(2))
        .map(|(t, h)| 0.5 * (t[1] - t[0]) * (h[0] + h[1]))
        .sum();
    let change = p.h[p.len() - 1] - p.h[0];
    let rel = (integral - change).abs() / LN_2;
    verdict(
        frac >= 0.95 && rel <= 0.02,
        format!(
            "Fisher vs FD agree at {agree}/{} points; |int Hdot - dH| / ln2 = {rel:.2e}",
            grid.len()
        ),
    )
}

fn tracker_error(steps: usize, exec: &RayonExecutor) -> f64 {
    let d = 16;
    let spec = MixtureSpec::symmetric_two_class(d, 1.0, 1.0).unwrap();
    let sched = NoiseSchedule::with_default_horizon(ScheduleKind::Vp, d).unwrap();
    let part = Partition::pair(0, 1).unwrap();
    let den = GmmDenoiser::new(&spec, sched, part.clone()).unwrap();
    let oracle = |x: &[f64], t: f64| den.closed_form_gamma(x, t);
    let tc = TrackerConfig {
        steps,
        n_trajectories: 1000,
        t_start: None,
        guidance: None,
    };
    estimate_entropy_online(
        &den,
        &sched,
        &part,
        &tc,
        &SeedStream::new(6),
        exec,
        Some(&oracle),
    )
    .unwrap()
    .mean_gamma_abs_err()
    .unwrap()
}

fn tracker(exec: &RayonExecutor) -> Outcome {
    let e: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&s| tracker_error(s, exec))
        .collect();
    verdict(
        e[1] <= 0.02 && e[2] <= e[0],
        format!(
            "mean |gamma error| at 128/256/512 steps = {:.3e} / {:.3e} / {:.3e}",
            e[0], e[1], e[2]
        ),
    )
}

fn jsd(exec: &RayonExecutor) -> Outcome {
    let sched = NoiseSchedule::vp(10.0).unwrap();
    let part = Partition::pair(0, 1).unwrap();
    let mut z = Vec::new();
    let mut ok = true;
    for (name, a, sigma0, t) in [
        ("overlapping", 0.5, 1.0, 0.3),
        ("intermediate", 1.0, 0.5, 0.4),
        ("separated", 3.0, 0.3, 0.2),
    ] {
        let spec = MixtureSpec::new(vec![vec![a], vec![-a]], sigma0, None).unwrap();
        let reference = partition_jsd_1d(&spec, &sched, &part, t, 2048).unwrap();
        let e = partitioned_entropy_mc(&spec, &sched, &part, t, 50_000, &SeedStream::new(7), exec)
            .unwrap();
        let dev = (LN_2 - e.mean - reference).abs();
        ok &= dev <= 3.0 * e.stderr;
        z.push(format!("{name} {:.2}se", dev / e.stderr));
    }
    verdict(ok, format!("|ln2 - H - JSD|: {}", z.join(", ")))
}

fn online(seed: u64, guidance: Option<GuidanceConfig>, exec: &RayonExecutor) -> OnlineEstimate {
    let d = 16;
    let spec = MixtureSpec::symmetric_two_class(d, 1.0, 1.0).unwrap();
    let sched = NoiseSchedule::with_default_horizon(ScheduleKind::Vp, d).unwrap();
    let part = Partition::pair(0, 1).unwrap();
    let den = GmmDenoiser::new(&spec, sched, part.clone()).unwrap();
    let tc = TrackerConfig {
        steps: 256,
        n_trajectories: 1000,
        t_start: None,
        guidance,
    };
    estimate_entropy_online(&den, &sched, &part, &tc, &SeedStream::new(seed), exec, None).unwrap()
}

fn guidance(exec: &RayonExecutor) -> Outcome {
    let base = online(8, None, exec);
    let unit = online(8, Some(GuidanceConfig::full_interval(1.0).unwrap()), exec);
    let identical = base
        .profile
        .h
        .iter()
        .zip(&unit.profile.h)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let mut shifts = Vec::new();
    for seed in 0..3 {
        let b = online(seed, None, exec).profile;
        let g = online(
            seed,
            Some(GuidanceConfig::new(2.0, 0.9, f64::INFINITY).unwrap()),
            exec,
        )
        .profile;
        shifts.push((
            argmax_time(&b.times, &b.hdot).unwrap(),
            argmax_time(&g.times, &g.hdot).unwrap(),
        ));
    }
    let all_later = shifts.iter().all(|(b, g)| g > b);
    verdict(
        identical && all_later,
        format!("omega=1 bit-identical: {identical}; argmax Hdot (base, guided) = {shifts:.3?}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let profile = common::SMALL_PROFILE.replace("n_samples = 20000", "n_samples = 4000");
    let cases = [
        ("profile", profile.as_str()),
        ("speciation-sweep", common::SMALL_SWEEP),
        ("track", common::SMALL_TRACK),
        ("guidance-distortion", common::SMALL_TRACK),
        ("validate", common::SMALL_PROFILE),
    ];
    let mut mismatched = Vec::new();
    for (cmd, text) in cases {
        let cfg = common::write(dir.path(), &format!("{cmd}.toml"), text);
        let mut outputs = Vec::new();
        for threads in ["1", "1", "4"] {
            let out = common::run(&[
                cmd,
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "11",
                "--threads",
                threads,
            ]);
            assert!(
                out.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            outputs.push(out.stdout);
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            mismatched.push(cmd);
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("5 commands x (threads 1, 1, 4); differing: {mismatched:?}"),
    )
}

fn main() {
    let exec = RayonExecutor::new(None).unwrap();
    let criteria: [Criterion<'_>; 8] = [
        ("1 VP speciation collapse", Box::new(|| collapse(&exec))),
        (
            "2 VP vs EDM width scaling",
            Box::new(|| width_scaling(&exec)),
        ),
        ("3 mixed and separated limits", Box::new(|| limits(&exec))),
        (
            "4 entropy production consistency",
            Box::new(|| production(&exec)),
        ),
        ("5 tracker equivalence", Box::new(|| tracker(&exec))),
        ("6 JSD identity", Box::new(|| jsd(&exec))),
        ("7 guidance sanity", Box::new(|| guidance(&exec))),
        ("8 determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail} ({secs:.1}s)");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
