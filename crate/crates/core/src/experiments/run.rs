//! Mode runners. Work is split into chunks of trajectories (or scenarios) so an
//! interrupt is noticed between chunks; completed work is kept and the tables are
//! marked partial.

use std::sync::atomic::Ordering;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::RngCore;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, Mode};
use super::table::{Cell, ExperimentOutput, ResultTable};
use super::RunControl;
use crate::dimension::{fit_dimension_with, path_length, FitOptions, PathSource};
use crate::error::{Error, Result};
use crate::gaussian_state::{GaussianState, MeterConfig};
use crate::nonselective::{
    analytic_path_length, analytic_path_length_drifting, moments_of_t, ContinuousLimit,
};
use crate::oracle_grid::validation::{compare, Scenario};
use crate::selective::{
    checkpoints_for_indices, feedback_mean_reference, mean_and_stderr, run_trajectory,
    summarize_checkpoints, trajectory_rng, FeedbackConfig, TrajectoryConfig,
};

/// Trajectories per cancellation check.
pub const CHUNK: usize = 256;

/// Recorded steps at the coarsest resolution when neither `T` nor `n_steps` is given.
pub const DEFAULT_RECORDED_STEPS: usize = 32;
pub const DEFAULT_BURN_IN: usize = 200;
pub const DEFAULT_RESOLUTION_RATIO: f64 = 1.0;

/// Master seed of schedule point `point` in sweep row `row`.
pub fn point_seed(master_seed: u64, row: usize, point: usize) -> u64 {
    trajectory_rng(master_seed, ((row as u64) << 32) | point as u64).next_u64()
}

struct Progress<'a> {
    control: &'a RunControl,
    partial: bool,
}

impl Progress<'_> {
    fn stop(&mut self) -> bool {
        if self.control.cancel.load(Ordering::SeqCst) {
            self.partial = true;
        }
        self.partial
    }
}

pub(super) fn dispatch(
    config: &ExperimentConfig,
    control: &RunControl,
) -> Result<ExperimentOutput> {
    let started = Instant::now();
    let mut progress = Progress {
        control,
        partial: false,
    };
    let mut tables = match config.mode {
        Mode::NonselectiveDimension => nonselective_dimension(config, &mut progress)?,
        Mode::SelectiveDimension => selective_dimension(config, &mut progress)?,
        Mode::FeedbackRelaxation => feedback_relaxation(config, &mut progress)?,
        Mode::OracleValidation => oracle_validation(config, &mut progress)?,
    };
    let echo = serde_json::to_value(config).expect("configuration serializes");
    let wall = started.elapsed().as_secs_f64();
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    for t in &mut tables {
        let extra = std::mem::take(&mut t.metadata);
        t.set_meta("config", echo.clone());
        t.set_meta("mode", json!(config.mode.name()));
        t.set_meta("seed", json!(config.ensemble.master_seed));
        t.set_meta(
            "code_version",
            json!(concat!("qpath ", env!("CARGO_PKG_VERSION"))),
        );
        t.set_meta(
            "units",
            json!(format!(
                "hbar = {}, m = {}",
                config.constants.hbar, config.constants.mass
            )),
        );
        t.set_meta("partial", json!(progress.partial));
        for (k, v) in extra {
            t.set_meta(&k, v);
        }
        t.set_meta("wall_time_s", json!(wall));
        t.set_meta("created_unix", json!(created));
    }
    Ok(ExperimentOutput { tables })
}

fn strength_cell(d: f64) -> Cell {
    Cell::Num(d)
}

fn dimension_tables(name_lengths: &[&str]) -> (ResultTable, ResultTable, ResultTable) {
    let main = ResultTable::new(
        "main",
        &[
            "D",
            "d_fit",
            "residual",
            "n_points",
            "well_defined",
            "slope",
            "intercept",
        ],
    )
    .with_plot("D", "d_fit", None);
    let lengths = ResultTable::new("lengths", name_lengths).with_plot(
        "dx",
        "l",
        name_lengths.contains(&"stderr_l").then_some("stderr_l"),
    );
    let local =
        ResultTable::new("local", &["D", "dx_mid", "local_d"]).with_plot("dx_mid", "local_d", None);
    (main, lengths, local)
}

fn push_fit(
    row_label: Cell,
    points: &[(f64, f64)],
    options: FitOptions,
    main: &mut ResultTable,
    local: &mut ResultTable,
) -> Result<()> {
    if points.len() < 3 {
        // only reachable for interrupted runs
        main.push(vec![
            row_label,
            f64::NAN.into(),
            f64::NAN.into(),
            points.len().into(),
            false.into(),
            f64::NAN.into(),
            f64::NAN.into(),
        ]);
        return Ok(());
    }
    let fit = fit_dimension_with(points, options)?;
    main.push(vec![
        row_label.clone(),
        fit.d.into(),
        fit.residual.into(),
        fit.n_points.into(),
        fit.well_defined.into(),
        fit.slope.into(),
        fit.intercept.into(),
    ]);
    for &(mid, d) in &fit.local_d {
        local.push(vec![row_label.clone(), mid.into(), d.into()]);
    }
    Ok(())
}

fn nonselective_dimension(
    config: &ExperimentConfig,
    progress: &mut Progress,
) -> Result<Vec<ResultTable>> {
    let c = &config.constants;
    let schedule = config.resolution_schedule(None)?;
    let total = schedule.total_time();
    let (eps0, p_av) = (config.state.eps, config.state.b_mom);
    let options = FitOptions {
        residual_threshold: config.fit.residual_threshold,
    };
    let (mut main, mut lengths, mut local) = dimension_tables(&["D", "dx", "t", "l"]);
    for d in config.strengths()? {
        if progress.stop() {
            break;
        }
        let limit = ContinuousLimit::from_value(d)?;
        let mut pts = Vec::new();
        for point in schedule.points(c) {
            let l = if p_av == 0.0 {
                analytic_path_length(point, total, eps0, limit, c)?
            } else {
                analytic_path_length_drifting(point, total, eps0, p_av, limit, c)?
            };
            lengths.push(vec![
                strength_cell(d),
                point.dx.into(),
                point.t.into(),
                l.into(),
            ]);
            pts.push((point.dx, l));
        }
        push_fit(strength_cell(d), &pts, options, &mut main, &mut local)?;
    }
    main.set_meta("T", json!(total));
    main.set_meta("b_scale", json!(schedule.b_scale()));
    main.set_meta("p_av", json!(p_av));
    Ok(vec![main, lengths, local])
}

/// Mean and standard error of the sampled path length over `n_traj` trajectories,
/// recording `recorded` steps after `burn_in`. `None` when interrupted.
pub fn ensemble_path_length(
    config: &TrajectoryConfig,
    burn_in: usize,
    n_traj: usize,
    master_seed: u64,
    source: PathSource,
    cancel: &dyn Fn() -> bool,
) -> Result<Option<(f64, f64)>> {
    let mut lengths = Vec::with_capacity(n_traj);
    let mut start = 0;
    while start < n_traj {
        if cancel() {
            return Ok(None);
        }
        let end = (start + CHUNK).min(n_traj);
        let chunk: Vec<Result<f64>> = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| {
                let mut trace = Vec::with_capacity(config.n_steps - burn_in);
                run_trajectory(config, master_seed, i, |r, s, outcome| {
                    if r >= burn_in {
                        trace.push(match source {
                            PathSource::Outcomes => outcome,
                            PathSource::Means => s.a,
                        });
                    }
                })?;
                path_length(&trace)
            })
            .collect();
        for l in chunk {
            lengths.push(l?);
        }
        start = end;
    }
    Ok(Some(mean_and_stderr(lengths)))
}

fn selective_dimension(
    config: &ExperimentConfig,
    progress: &mut Progress,
) -> Result<Vec<ResultTable>> {
    let c = config.constants;
    let schedule = config.resolution_schedule(None)?;
    let dx_max = schedule.dx_values()[0];
    let total = match config.schedule.as_ref().and_then(|s| s.total_time) {
        Some(t) => t,
        None => {
            config.ensemble.n_steps.unwrap_or(DEFAULT_RECORDED_STEPS) as f64
                * schedule.interval(dx_max, &c)
        }
    };
    let burn_in = config.ensemble.burn_in_steps.unwrap_or(DEFAULT_BURN_IN);
    let source = config.output.path_source;
    let fixed = config.measurement.diffusion.is_some();
    let ratio = config
        .measurement
        .resolution_ratio
        .unwrap_or(DEFAULT_RESOLUTION_RATIO);
    let rows: Vec<Option<f64>> = if fixed {
        config.strengths()?.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let options = FitOptions {
        residual_threshold: config.fit.residual_threshold,
    };
    let (mut main, mut lengths, mut local) =
        dimension_tables(&["D", "dx", "tau", "sigma", "t_c", "n_steps", "l", "stderr_l"]);
    let control = progress.control;
    let cancel = || control.cancel.load(Ordering::SeqCst);
    let mut interrupted = false;
    for (row, d_row) in rows.iter().enumerate() {
        if interrupted || cancel() {
            interrupted = true;
            break;
        }
        if d_row.is_some_and(|d| !d.is_finite()) && source == PathSource::Outcomes {
            return Err(Error::Config(
                "measurement.D = inf leaves no readouts to trace; set output.path_source = \"means\"".into(),
            ));
        }
        let label = match d_row {
            Some(d) => strength_cell(*d),
            None => Cell::Text(format!("resolution-scaled({ratio})")),
        };
        let mut pts = Vec::new();
        for (j, &dx) in schedule.dx_values().iter().enumerate() {
            let tau = schedule.interval(dx, &c);
            let sigma = match d_row {
                Some(d) => d / tau,
                None => 2.0 * ratio * dx * dx,
            };
            let meter = MeterConfig::new(sigma, tau)?;
            let feedback = if config.feedback_enabled() {
                Some(match d_row {
                    Some(d) => config.feedback_for(*d)?,
                    None => FeedbackConfig::matched_to(meter.diffusion(), &c)?,
                })
            } else {
                None
            };
            let recorded = (total / tau).round() as usize;
            if recorded < 2 {
                return Err(Error::Config(format!(
                    "schedule: total time {total} covers fewer than 2 readouts at dx = {dx}; increase T or n_steps"
                )));
            }
            let initial = GaussianState::new(
                config.state.a,
                config.state.b_mom,
                2.0 * dx * dx,
                config.state.eps,
            )?;
            let traj = TrajectoryConfig {
                initial,
                meter,
                feedback,
                n_steps: burn_in + recorded,
                constants: c,
            };
            let seed = point_seed(config.ensemble.master_seed, row, j);
            let Some((l, se)) = ensemble_path_length(
                &traj,
                burn_in,
                config.ensemble.n_traj,
                seed,
                source,
                &cancel,
            )?
            else {
                interrupted = true;
                break;
            };
            lengths.push(vec![
                label.clone(),
                dx.into(),
                tau.into(),
                sigma.into(),
                feedback.map_or(f64::INFINITY, |f| f.t_c).into(),
                recorded.into(),
                l.into(),
                se.into(),
            ]);
            pts.push((dx, l));
        }
        push_fit(label, &pts, options, &mut main, &mut local)?;
    }
    progress.partial |= interrupted;
    main.set_meta("T", json!(total));
    main.set_meta("b_scale", json!(schedule.b_scale()));
    main.set_meta("burn_in_steps", json!(burn_in));
    main.set_meta(
        "path_length",
        json!(match source {
            PathSource::Outcomes => "sum of |readout increments| after burn-in (chosen definition)",
            PathSource::Means => "sum of |conditional mean increments| after burn-in",
        }),
    );
    if !fixed {
        main.set_meta(
            "meter",
            json!(format!(
                "sigma = 2 * {ratio} * dx^2, t_c matched to D = sigma * tau"
            )),
        );
    }
    Ok(vec![main, lengths, local])
}

/// 0-based step indices sampled by feedback-relaxation.
pub fn relaxation_checkpoints(n_steps: usize, every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (1..=n_steps / every).map(|k| k * every - 1).collect();
    if steps.last() != Some(&(n_steps - 1)) {
        steps.push(n_steps - 1);
    }
    steps
}

fn feedback_relaxation(
    config: &ExperimentConfig,
    progress: &mut Progress,
) -> Result<Vec<ResultTable>> {
    let c = config.constants;
    let (diffusion, sigma, tau, feedback) = config.relaxation_meter()?;
    let n_steps = config.ensemble.n_steps.expect("validated");
    let every = config
        .ensemble
        .checkpoint_every
        .unwrap_or((n_steps / 50).max(1));
    let checkpoints = relaxation_checkpoints(n_steps, every);
    let state0 = config.initial_state()?;
    let traj = TrajectoryConfig {
        initial: state0,
        meter: MeterConfig::new(sigma, tau)?,
        feedback,
        n_steps,
        constants: c,
    };
    let n_traj = config.ensemble.n_traj;
    let mut per_traj = Vec::with_capacity(n_traj);
    let mut start = 0;
    while start < n_traj {
        if progress.stop() {
            break;
        }
        let end = (start + CHUNK).min(n_traj);
        per_traj.extend(checkpoints_for_indices(
            &traj,
            start as u64..end as u64,
            config.ensemble.master_seed,
            &checkpoints,
        )?);
        start = end;
    }
    let limit = ContinuousLimit::from_value(diffusion)?;
    let reference = |t: f64| -> Result<(f64, f64, f64)> {
        match &feedback {
            Some(fb) => {
                let (a, b) = feedback_mean_reference(&state0, fb, t, &c);
                Ok((a, b, f64::NAN))
            }
            None => {
                let m = moments_of_t(&state0, t, limit, &c)?;
                Ok((m.mean_x, m.mean_p, m.second_moment_x()))
            }
        }
    };
    let mut table = ResultTable::new(
        "main",
        &[
            "t",
            "mean_a",
            "stderr_a",
            "reference_a",
            "mean_b",
            "stderr_b",
            "reference_b",
            "mean_x2",
            "stderr_x2",
            "reference_x2",
        ],
    )
    .with_plot("t", "mean_a", Some("stderr_a"));
    let m0 = state0.a * state0.a + state0.var_x();
    let (ra, rb, rx) = reference(0.0)?;
    table.push(vec![
        0.0.into(),
        state0.a.into(),
        0.0.into(),
        ra.into(),
        state0.b_mom.into(),
        0.0.into(),
        rb.into(),
        m0.into(),
        0.0.into(),
        rx.into(),
    ]);
    if !per_traj.is_empty() {
        for s in summarize_checkpoints(&traj, &per_traj, &checkpoints) {
            let (ra, rb, rx) = reference(s.time)?;
            table.push(vec![
                s.time.into(),
                s.mean_a.into(),
                s.stderr_a.into(),
                ra.into(),
                s.mean_b.into(),
                s.stderr_b.into(),
                rb.into(),
                s.mean_x2.into(),
                s.stderr_x2.into(),
                rx.into(),
            ]);
        }
    }
    table.set_meta("n_traj_completed", json!(per_traj.len()));
    table.set_meta("D", Value::String(super::table::format_number(diffusion)));
    table.set_meta("sigma", json!(sigma));
    table.set_meta("tau", json!(tau));
    if let Some(fb) = feedback {
        table.set_meta("t_c", json!(fb.t_c));
        table.set_meta("gamma1", json!(fb.gamma1(&c)));
        table.set_meta("gamma2", json!(fb.gamma2()));
        table.set_meta(
            "reference",
            json!("damped oscillator, rate and frequency 1/(2 t_c)"),
        );
    } else {
        table.set_meta(
            "reference",
            json!("outcome-averaged closed form; mean_x2 is E[x^2] = a^2 + Delta/2"),
        );
    }
    Ok(vec![table])
}

fn oracle_validation(
    config: &ExperimentConfig,
    progress: &mut Progress,
) -> Result<Vec<ResultTable>> {
    let c = config.constants;
    let o = config.oracle;
    let mut table = ResultTable::new(
        "main",
        &["scenario", "operation", "rel_error", "tolerance", "pass"],
    );
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < o.scenarios {
        if progress.stop() {
            break;
        }
        let end = (start + 16).min(o.scenarios);
        let chunk: Vec<Result<(u64, _)>> = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| {
                let sc = Scenario::random(config.ensemble.master_seed, i, &c)?;
                Ok((i, compare(&sc, &c, o.grid_points)?))
            })
            .collect();
        for item in chunk {
            let (i, comparisons) = item?;
            for cmp in comparisons {
                worst = worst.max(cmp.rel_error);
                table.push(vec![
                    i.into(),
                    cmp.operation.to_string().into(),
                    cmp.rel_error.into(),
                    o.tolerance.into(),
                    (cmp.rel_error <= o.tolerance).into(),
                ]);
            }
        }
        start = end;
    }
    table.set_meta("max_rel_error", json!(worst));
    table.set_meta("all_pass", json!(worst <= o.tolerance));
    Ok(vec![table])
}
