//! The named experiments.
//!
//! Each experiment writes its data files into the output directory and
//! returns a JSON object of results. [`crate::run`] adds run metadata and
//! writes the summary file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use matchsim::analysis::{ks_distance, moments, uniformization_transient, write_ecdf_csv};
use matchsim::ctmc::{sample_at_times, simulate_path_with, match_count_identity_check, Recording, Snapshot};
use matchsim::diffusion::{
    simulate_double_ended, simulate_limit_k, DoubleEnded, DoubleEndedStepper, GridRecording, LimitStepper,
};
use matchsim::generator::testfn::{standard_library, CoordinateSquare, Difference, Profile, SupportBox};
use matchsim::generator::{apply_an, convergence_sweep, diffusion_matrix, write_sweep_csv, TestFunction};
use matchsim::kernel::build_generator_matrix;
use matchsim::model::{derive_prelimit_rates, scale_state};
use matchsim::rng::{replicate, StreamRng};
use matchsim::QueueState;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Kind, SweepFunction};
use crate::RunError;

/// Stream offset for limit-process replications, keeping them disjoint from
/// the chain replications of the same seed.
const LIMIT_STREAMS: u64 = 1 << 40;

/// Tolerance for oracle agreement in `generator-check`.
pub const GENERATOR_TOL: f64 = 1e-12;

/// Files written by one run, all tagged with the config hash.
pub struct Outputs<'a> {
    pub dir: &'a Path,
    pub kind: Kind,
    pub hash: &'a str,
    pub written: Vec<PathBuf>,
}

impl Outputs<'_> {
    pub fn path(&self, name: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{}_{}_{}.{}", self.kind, name, self.hash, ext))
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        let path = self.path(name, "csv");
        let file = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }
}

pub fn dispatch(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    match cfg.kind {
        Kind::SimulateCtmc => simulate_ctmc(cfg, out),
        Kind::SimulateLimit => simulate_limit(cfg, out),
        Kind::DoubleEnded => double_ended(cfg, out),
        Kind::GeneratorCheck => generator_check(cfg, out),
        Kind::ConvergeSweep => converge_sweep(cfg, out),
        Kind::CompareLaws => compare_laws(cfg, out),
        Kind::OracleValidate => oracle_validate(cfg, out),
    }
}

fn header(prefix: &[&str], groups: &[&str], k: usize, suffix: &[&str]) -> String {
    let mut cols: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    for g in groups {
        cols.extend((1..=k).map(|i| format!("{g}_{i}")));
    }
    cols.extend(suffix.iter().map(|s| s.to_string()));
    cols.join(",")
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (hit, total) = flags.fold((0usize, 0usize), |(h, t), f| (h + usize::from(f), t + 1));
    hit as f64 / total.max(1) as f64
}

fn simulate_ctmc(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    let rates = derive_prelimit_rates(&cfg.params)?;
    let initial = QueueState::within(cfg.initial.clone(), &rates)?;
    let k = cfg.params.k();
    let recording = if cfg.record_every > 1 {
        Recording::Every(cfg.record_every)
    } else {
        Recording::All
    };
    let paths = replicate(cfg.seed, 0, cfg.replications, |i, rng| {
        let rec = if i == 0 { recording } else { Recording::FinalOnly };
        simulate_path_with(&rates, &initial, cfg.horizon, cfg.seed, rec, rng)
    })
    .into_iter()
    .collect::<matchsim::Result<Vec<_>>>()?;

    paths[0].write_csv(out.create("path")?)?;
    let mut w = out.create("final")?;
    writeln!(w, "{}", header(&["replication", "t"], &["Q", "A", "G", "L"], k, &["R", "events"]))?;
    for (i, p) in paths.iter().enumerate() {
        let s = p.snapshot(p.len() - 1);
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{}",
            s.time,
            join(&s.state),
            join(&s.arrivals),
            join(&s.abandons),
            join(&s.blocks),
            s.matches,
            p.event_count()
        )?;
    }
    w.flush()?;

    let identities = paths
        .iter()
        .all(|p| p.flow_conservation_holds() && match_count_identity_check(p));
    let scaled: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| scale_state(&QueueState::new(p.final_state().to_vec()).expect("product-zero"), cfg.params.scale()))
        .collect();
    let mean_scaled: Vec<f64> = (0..k).map(|i| mean(&scaled.iter().map(|s| s[i]).collect::<Vec<_>>())).collect();
    Ok(json!({
        "replications": cfg.replications,
        "path_rows": paths[0].len(),
        "mean_events": mean(&paths.iter().map(|p| p.event_count() as f64).collect::<Vec<_>>()),
        "mean_scaled_final_state": mean_scaled,
        "identities_hold": identities,
    }))
}

fn simulate_limit(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    let k = cfg.params.k();
    let paths = replicate(cfg.seed, 0, cfg.replications, |i, rng| {
        let rec = if i == 0 {
            GridRecording {
                record_every: cfg.record_every,
            }
        } else {
            GridRecording::final_only()
        };
        simulate_limit_k(&cfg.params, &cfg.initial_limit, cfg.horizon, cfg.dt, cfg.seed, rec, rng)
    })
    .into_iter()
    .collect::<matchsim::Result<Vec<_>>>()?;

    paths[0].write_csv(out.create("path")?)?;
    let mut w = out.create("final")?;
    writeln!(w, "{}", header(&["replication"], &["X", "U"], k, &["R"]))?;
    for (i, p) in paths.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{}",
            join(p.final_state()),
            join(p.final_local_time()),
            p.matching[p.len() - 1]
        )?;
    }
    w.flush()?;

    let coupled = paths
        .iter()
        .all(|p| (0..p.len()).all(|idx| p.state(idx).iter().copied().fold(f64::INFINITY, f64::min) == 0.0));
    let mean_final: Vec<f64> = (0..k)
        .map(|i| mean(&paths.iter().map(|p| p.final_state()[i]).collect::<Vec<_>>()))
        .collect();
    Ok(json!({
        "replications": cfg.replications,
        "mean_final_state": mean_final,
        "local_time_positive_fraction": (0..k)
            .map(|i| fraction(paths.iter().map(|p| p.final_local_time()[i] > 0.0)))
            .collect::<Vec<_>>(),
        "coupling_invariant_holds": coupled,
    }))
}

fn double_ended(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    let paths = replicate(cfg.seed, 0, cfg.replications, |i, rng| {
        let rec = if i == 0 {
            GridRecording {
                record_every: cfg.record_every,
            }
        } else {
            GridRecording::final_only()
        };
        simulate_double_ended(&cfg.params, cfg.sigma, cfg.x0, cfg.horizon, cfg.dt, cfg.seed, rec, rng)
    })
    .into_iter()
    .collect::<matchsim::Result<Vec<_>>>()?;

    paths[0].write_csv(out.create("path")?)?;
    let mut w = out.create("final")?;
    writeln!(w, "replication,X,U_1,U_2")?;
    for (i, p) in paths.iter().enumerate() {
        writeln!(w, "{i},{},{}", p.final_state()[0], join(p.final_local_time()))?;
    }
    w.flush()?;

    let finals: Vec<f64> = paths.iter().map(|p| p.final_state()[0]).collect();
    let (m, v) = match moments(&finals) {
        Ok((m, v, _)) => (m, v),
        Err(_) => (finals[0], 0.0),
    };
    Ok(json!({
        "replications": cfg.replications,
        "final_mean": m,
        "final_variance": v,
        "upper_local_time_positive_fraction": fraction(paths.iter().map(|p| p.final_local_time()[0] > 0.0)),
        "lower_local_time_positive_fraction": fraction(paths.iter().map(|p| p.final_local_time()[1] > 0.0)),
    }))
}

fn generator_check(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    let n = cfg.params.scale();
    let rates = derive_prelimit_rates(&cfg.params)?;
    let g = build_generator_matrix(&rates, cfg.entry_cap)?;
    let mut w = out.create("oracle")?;
    writeln!(w, "function,max_abs_diff,states")?;
    let mut overall = 0.0f64;
    for f in standard_library(cfg.params.k()) {
        let values: Vec<f64> = g.states().iter().map(|s| f.value(&scale_state(s, n))).collect();
        let action = g.action(&values);
        let mut worst = 0.0f64;
        for (idx, s) in g.states().iter().enumerate() {
            worst = worst.max((apply_an(&*f, s, &rates, n)? - action[idx]).abs());
        }
        overall = overall.max(worst);
        writeln!(w, "\"{}\",{},{}", f.name(), worst, g.len())?;
    }
    w.flush()?;
    g.write_coo(BufWriter::new(File::create(out.path("matrix", "coo"))?))?;
    out.written.push(out.path("matrix", "coo"));

    // Smallest eigenvalue of a(s) over every zero pattern on the manifold.
    let k = cfg.params.k();
    let mut min_eig = f64::INFINITY;
    for mask in 1u32..(1 << k) {
        let s: Vec<f64> = (0..k).map(|i| if mask & (1 << i) != 0 { 0.0 } else { 1.0 + i as f64 }).collect();
        min_eig = min_eig.min(diffusion_matrix(&s, cfg.params.lambda0(), k)?.min_eigenvalue());
    }
    Ok(json!({
        "states": g.len(),
        "max_abs_diff": overall,
        "pass": overall <= GENERATOR_TOL,
        "diffusion_min_eigenvalue": min_eig,
    }))
}

/// The sweep test function for `kind`.
pub fn sweep_function(kind: SweepFunction, dim: usize) -> Box<dyn TestFunction> {
    match kind {
        SweepFunction::Bump => Box::new(Difference {
            center: 0.5,
            ..Difference::bump(dim, 1.5, Profile::PolyBump)
        }),
        SweepFunction::Gaussian => Box::new(Difference {
            center: 0.5,
            ..Difference::bump(dim, 0.7, Profile::Gaussian)
        }),
        SweepFunction::Square => Box::new(CoordinateSquare { dim, index: 0 }),
    }
}

fn converge_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    let f = sweep_function(cfg.test_function, cfg.params.k());
    let window = SupportBox {
        lower: cfg.window_lower.clone(),
        upper: cfg.window_upper.clone(),
    };
    let rows = convergence_sweep(&*f, &cfg.params, &cfg.n_grid, &window)?;
    let mut w = out.create("sweep")?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    let decreasing = rows.windows(2).all(|r| r[1].sup_error < r[0].sup_error);
    let ratio = rows.last().expect("nonempty grid").sup_error / rows[0].sup_error;
    Ok(json!({
        "function": f.name(),
        "rows": rows.iter().map(|r| json!({"n": r.n, "sup_error": r.sup_error, "argmax_state": r.argmax_state, "states": r.states})).collect::<Vec<_>>(),
        "strictly_decreasing": decreasing,
        "ratio_last_first": ratio,
    }))
}

/// Scaled observations of the chain and of its limit at common times.
pub struct LawSamples {
    pub times: Vec<f64>,
    /// `[time][replication]` statistic of the scaled chain.
    pub chain: Vec<Vec<f64>>,
    /// `[time][replication]` same statistic of the limit.
    pub limit: Vec<Vec<f64>>,
    /// Chain replications with a blocked class-1 arrival by the last time.
    pub chain_blocked: Vec<bool>,
    /// Limit replications with positive class-1 local time by the last time.
    pub limit_reflected: Vec<bool>,
    pub statistic: String,
}

fn steps_to(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Samples the compared statistic: `Q̂_1 − Q̂_2` against the double-ended
/// process for two classes, `Q̂_1` against the coupled limit otherwise.
pub fn sample_laws(cfg: &ExperimentConfig) -> Result<LawSamples, RunError> {
    let p = &cfg.params;
    let k = p.k();
    let rates = derive_prelimit_rates(p)?;
    let initial = QueueState::within(cfg.initial.clone(), &rates)?;
    let root = (p.scale() as f64).sqrt();
    let stat = |s: &Snapshot| {
        if k == 2 {
            (s.state[0] as f64 - s.state[1] as f64) / root
        } else {
            s.state[0] as f64 / root
        }
    };
    let chain = replicate(cfg.seed, 0, cfg.replications, |_, rng| {
        sample_at_times(&rates, &initial, &cfg.times, rng).map(|snaps| {
            let blocked = snaps.last().is_some_and(|s| s.blocks[0] > 0);
            (snaps.iter().map(stat).collect::<Vec<_>>(), blocked)
        })
    })
    .into_iter()
    .collect::<matchsim::Result<Vec<_>>>()?;

    let limit = if k == 2 {
        let model = DoubleEnded::from_params(p, cfg.sigma)?;
        let x0 = cfg.initial_limit[0] - cfg.initial_limit[1];
        DoubleEndedStepper::new(model, x0, cfg.dt)?;
        replicate(cfg.seed, LIMIT_STREAMS, cfg.replications, |_, rng: &mut StreamRng| {
            let mut st = DoubleEndedStepper::new(model, x0, cfg.dt).expect("validated");
            let mut done = 0;
            let obs: Vec<f64> = cfg
                .times
                .iter()
                .map(|&t| {
                    while done < steps_to(t, cfg.dt) {
                        st.step(rng);
                        done += 1;
                    }
                    st.x
                })
                .collect();
            (obs, st.local[0] > 0.0)
        })
    } else {
        LimitStepper::new(p, &cfg.initial_limit, cfg.dt)?;
        replicate(cfg.seed, LIMIT_STREAMS, cfg.replications, |_, rng: &mut StreamRng| {
            let mut st = LimitStepper::new(p, &cfg.initial_limit, cfg.dt).expect("validated");
            let mut done = 0;
            let obs: Vec<f64> = cfg
                .times
                .iter()
                .map(|&t| {
                    while done < steps_to(t, cfg.dt) {
                        st.step(rng);
                        done += 1;
                    }
                    st.q[0]
                })
                .collect();
            (obs, st.local[0] > 0.0)
        })
    };

    let by_time = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..cfg.times.len()).map(|t| rows.iter().map(|r| r[t]).collect()).collect()
    };
    let chain_rows: Vec<Vec<f64>> = chain.iter().map(|c| c.0.clone()).collect();
    let limit_rows: Vec<Vec<f64>> = limit.iter().map(|c| c.0.clone()).collect();
    Ok(LawSamples {
        times: cfg.times.clone(),
        chain: by_time(&chain_rows),
        limit: by_time(&limit_rows),
        chain_blocked: chain.iter().map(|c| c.1).collect(),
        limit_reflected: limit.iter().map(|c| c.1).collect(),
        statistic: if k == 2 { "Q1-Q2".into() } else { "Q1".into() },
    })
}

fn compare_laws(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    let s = sample_laws(cfg)?;
    let mut table = out.create("ks")?;
    writeln!(table, "t,statistic,ks,threshold,pass")?;
    let mut rows = Vec::new();
    for (ti, &t) in s.times.iter().enumerate() {
        let d = ks_distance(&s.chain[ti], &s.limit[ti])?;
        let pass = d <= cfg.ks_threshold;
        writeln!(table, "{t},{},{d},{},{pass}", s.statistic, cfg.ks_threshold)?;
        rows.push(json!({"t": t, "ks": d, "pass": pass}));
    }
    table.flush()?;

    let mut samples = out.create("samples")?;
    writeln!(samples, "replication,t,chain,limit")?;
    for (ti, &t) in s.times.iter().enumerate() {
        for r in 0..cfg.replications {
            writeln!(samples, "{r},{t},{},{}", s.chain[ti][r], s.limit[ti][r])?;
        }
    }
    samples.flush()?;
    let last = s.times.len() - 1;
    let mut ecdf = out.create("ecdf")?;
    write_ecdf_csv(&s.chain[last], &s.limit[last], &mut ecdf)?;
    ecdf.flush()?;

    Ok(json!({
        "statistic": s.statistic,
        "replications": cfg.replications,
        "ks": rows,
        "threshold": cfg.ks_threshold,
        "pass": rows.iter().all(|r| r["pass"] == json!(true)),
        "chain_block_positive_fraction": fraction(s.chain_blocked.iter().copied()),
        "limit_local_time_positive_fraction": fraction(s.limit_reflected.iter().copied()),
    }))
}

fn oracle_validate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value, RunError> {
    let rates = derive_prelimit_rates(&cfg.params)?;
    let g = build_generator_matrix(&rates, cfg.entry_cap)?;
    let initial = QueueState::within(cfg.initial.clone(), &rates)?;
    let start = g.index_of(&initial).expect("initial state is enumerated");
    let mut p0 = vec![0.0; g.len()];
    p0[start] = 1.0;
    let law = uniformization_transient(g.matrix(), &p0, cfg.horizon, cfg.tol)?;
    let exact = (g.matrix().clone() * cfg.horizon).exp();
    let expm_diff = (0..g.len())
        .map(|j| (law[j] - exact[(start, j)]).abs())
        .fold(0.0, f64::max);

    let k = cfg.params.k();
    let finals = replicate(cfg.seed, 0, cfg.replications, |_, rng| {
        sample_at_times(&rates, &initial, &[cfg.horizon], rng).map(|s| s[0].state.clone())
    })
    .into_iter()
    .collect::<matchsim::Result<Vec<_>>>()?;

    let mut w = out.create("oracle")?;
    writeln!(w, "class,exact_mean,mc_mean,standard_error,z")?;
    let mut worst_z = 0.0f64;
    for i in 0..k {
        let exact_mean: f64 = g
            .states()
            .iter()
            .zip(&law)
            .map(|(s, p)| s.counts()[i] as f64 * p)
            .sum();
        let xs: Vec<f64> = finals.iter().map(|s| s[i] as f64).collect();
        let (m, se) = match moments(&xs) {
            Ok((m, _, se)) => (m, se),
            Err(_) => (xs[0], f64::INFINITY),
        };
        let z = if se > 0.0 { (m - exact_mean).abs() / se } else { (m - exact_mean).abs() * f64::INFINITY };
        let z = if z.is_nan() { 0.0 } else { z };
        worst_z = worst_z.max(z);
        writeln!(w, "{},{exact_mean},{m},{se},{z}", i + 1)?;
    }
    w.flush()?;
    Ok(json!({
        "states": g.len(),
        "uniformization_vs_expm": expm_diff,
        "probability_mass": law.iter().sum::<f64>(),
        "max_z": worst_z,
        "pass": expm_diff <= 1e-8 && worst_z <= 3.0,
    }))
}
