//! Conditional (selective) evolution: seeded trajectories of recorded meter
//! readouts, wave-function collapse and optional displacement feedback.
//!
//! One step is `free_evolve(tau) -> sample readout -> collapse_update -> feedback`.
//! Feedback applies `exp[-(i/hbar) tau xbar (g1 x - g2 p)]`, which shifts the packet
//! by `-tau xbar g2` in position and `-tau xbar g1` in momentum. Averaged over
//! readouts, the means then follow
//!
//! ```text
//! a' = b/m - a/t_c,    b' = -m a/(2 t_c^2)
//! ```
//!
//! to first order in `tau`, i.e. a damped oscillator with damping ratio `1/sqrt(2)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_state::{
    collapse_update, free_evolve, outcome_pdf, positive_finite, Constants, GaussianState,
    MeterConfig,
};

/// Feedback with control time `t_c`: gains `g1 = m/(2 t_c^2)` and `g2 = 1/t_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    pub t_c: f64,
}

impl FeedbackConfig {
    pub fn new(t_c: f64) -> Result<Self> {
        positive_finite("t_c", t_c)?;
        Ok(FeedbackConfig { t_c })
    }

    /// Control time satisfying `D = 2 hbar t_c^2 / m`.
    pub fn matched_to(diffusion: f64, c: &Constants) -> Result<Self> {
        positive_finite("D", diffusion)?;
        FeedbackConfig::new((c.mass * diffusion / (2.0 * c.hbar)).sqrt())
    }

    /// Momentum-kick gain, `m/(2 t_c^2)` (equal to `hbar/D` for a matched meter).
    pub fn gamma1(&self, c: &Constants) -> f64 {
        c.mass / (2.0 * self.t_c * self.t_c)
    }

    /// Position-kick gain, `1/t_c`.
    pub fn gamma2(&self) -> f64 {
        1.0 / self.t_c
    }

    /// `D = 2 hbar t_c^2 / m`.
    pub fn matched_diffusion(&self, c: &Constants) -> f64 {
        2.0 * c.hbar * self.t_c * self.t_c / c.mass
    }

    pub fn is_matched(&self, diffusion: f64, c: &Constants, rel_tol: f64) -> bool {
        let want = self.matched_diffusion(c);
        (diffusion - want).abs() <= rel_tol * want
    }

    /// Position and momentum shifts produced by the displacement for readout `outcome`.
    pub fn kicks(&self, outcome: f64, tau: f64, c: &Constants) -> (f64, f64) {
        (
            -tau * outcome * self.gamma2(),
            -tau * outcome * self.gamma1(c),
        )
    }
}

/// Largest `tau / t_c` for which the readout-averaged loop is stable.
///
/// Per step the averaged map on `(a, b tau/m)` has determinant `1 - r` and trace
/// `2 - r - r^2/2` with `r = tau/t_c`; both eigenvalues lie inside the unit circle
/// only for `0 < r < 2(sqrt(3) - 1)`.
pub const MAX_STABLE_STEP_RATIO: f64 = 1.4641016151377544;

impl FeedbackConfig {
    /// Whether discrete feedback every `tau` keeps the mean dynamics bounded.
    pub fn is_stable_for(&self, tau: f64) -> bool {
        tau / self.t_c < MAX_STABLE_STEP_RATIO
    }
}

/// Deterministic random stream for trajectory `index` of an ensemble.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn check_step(meter: &MeterConfig, fb: Option<&FeedbackConfig>) -> Result<()> {
    if fb.is_some() && !meter.is_informative() {
        return Err(Error::Config(
            "feedback needs a finite meter variance: with sigma = inf the readout variance and the feedback kicks diverge"
                .into(),
        ));
    }
    Ok(())
}

/// Step with a prescribed readout. Used as the deterministic core of [`step`].
pub fn step_with_outcome(
    state: &GaussianState,
    meter: &MeterConfig,
    fb: Option<&FeedbackConfig>,
    outcome: f64,
    c: &Constants,
) -> Result<GaussianState> {
    check_step(meter, fb)?;
    let prime = free_evolve(state, meter.tau, c)?;
    collapse_and_control(&prime, meter, fb, outcome, c)
}

fn collapse_and_control(
    prime: &GaussianState,
    meter: &MeterConfig,
    fb: Option<&FeedbackConfig>,
    outcome: f64,
    c: &Constants,
) -> Result<GaussianState> {
    let collapsed = collapse_update(prime, outcome, meter.sigma, c)?;
    Ok(match fb {
        Some(fb) => {
            let (dx, dp) = fb.kicks(outcome, meter.tau, c);
            collapsed.displaced(dx, dp)
        }
        None => collapsed,
    })
}

/// One measured step drawing the readout from `rng`.
///
/// With an uninformative meter (`sigma = inf`) and no feedback this is plain free
/// evolution and the returned readout is `NaN`.
pub fn step<R: Rng + ?Sized>(
    state: &GaussianState,
    meter: &MeterConfig,
    fb: Option<&FeedbackConfig>,
    rng: &mut R,
    c: &Constants,
) -> Result<(GaussianState, f64)> {
    check_step(meter, fb)?;
    let prime = free_evolve(state, meter.tau, c)?;
    if !meter.is_informative() {
        return Ok((prime, f64::NAN));
    }
    let outcome = outcome_pdf(&prime, meter.sigma).sample(rng);
    let next = collapse_and_control(&prime, meter, fb, outcome, c)?;
    Ok((next, outcome))
}

/// Everything needed to reproduce a trajectory apart from its seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub initial: GaussianState,
    pub meter: MeterConfig,
    pub feedback: Option<FeedbackConfig>,
    pub n_steps: usize,
    pub constants: Constants,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        self.constants.validate()?;
        MeterConfig::new(self.meter.sigma, self.meter.tau)?;
        if let Some(fb) = &self.feedback {
            FeedbackConfig::new(fb.t_c)?;
        }
        check_step(&self.meter, self.feedback.as_ref())?;
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be >= 1"));
        }
        Ok(())
    }

    pub fn time_of(&self, step: usize) -> f64 {
        (step + 1) as f64 * self.meter.tau
    }
}

/// Readouts and post-step states of one trajectory. Entry `r` belongs to time `(r+1) tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub index: u64,
    pub config: TrajectoryConfig,
    pub times: Vec<f64>,
    pub outcomes: Vec<f64>,
    pub states: Vec<GaussianState>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn means(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.a).collect()
    }
}

/// Runs one trajectory, handing every `(step, state, outcome)` to `observer`.
/// Returns the final state.
pub fn run_trajectory<F>(
    config: &TrajectoryConfig,
    master_seed: u64,
    index: u64,
    mut observer: F,
) -> Result<GaussianState>
where
    F: FnMut(usize, &GaussianState, f64),
{
    config.validate()?;
    let mut rng = trajectory_rng(master_seed, index);
    let mut state = config.initial;
    for r in 0..config.n_steps {
        let (next, outcome) = step(
            &state,
            &config.meter,
            config.feedback.as_ref(),
            &mut rng,
            &config.constants,
        )?;
        state = next;
        observer(r, &state, outcome);
    }
    Ok(state)
}

pub fn simulate_trajectory(
    config: &TrajectoryConfig,
    master_seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    let mut record = TrajectoryRecord {
        seed: master_seed,
        index,
        config: *config,
        times: Vec::with_capacity(config.n_steps),
        outcomes: Vec::with_capacity(config.n_steps),
        states: Vec::with_capacity(config.n_steps),
    };
    run_trajectory(config, master_seed, index, |r, s, x| {
        record.times.push(config.time_of(r));
        record.outcomes.push(x);
        record.states.push(*s);
    })?;
    Ok(record)
}

/// `n_traj` independent trajectories; trajectory `i` uses stream `i` of `master_seed`.
pub fn simulate_ensemble(
    state0: &GaussianState,
    meter: &MeterConfig,
    n_steps: usize,
    n_traj: usize,
    fb: Option<&FeedbackConfig>,
    master_seed: u64,
    c: &Constants,
) -> Result<Vec<TrajectoryRecord>> {
    if n_traj == 0 {
        return Err(Error::invalid("n_traj", "must be >= 1"));
    }
    let config = TrajectoryConfig {
        initial: *state0,
        meter: *meter,
        feedback: fb.copied(),
        n_steps,
        constants: *c,
    };
    config.validate()?;
    (0..n_traj as u64)
        .into_par_iter()
        .map(|i| simulate_trajectory(&config, master_seed, i))
        .collect()
}

/// Ensemble averages at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointStats {
    pub step: usize,
    pub time: f64,
    pub mean_a: f64,
    pub stderr_a: f64,
    pub mean_b: f64,
    pub stderr_b: f64,
    /// `E[x^2]` of the outcome-averaged state, `E[a^2 + Delta/2]`.
    pub mean_x2: f64,
    pub stderr_x2: f64,
}

/// Per-trajectory states at the requested step indices (0-based, after the step).
///
/// Output is ordered `[trajectory][checkpoint]` regardless of scheduling.
pub fn ensemble_checkpoints(
    config: &TrajectoryConfig,
    n_traj: usize,
    master_seed: u64,
    checkpoints: &[usize],
) -> Result<Vec<Vec<GaussianState>>> {
    config.validate()?;
    if n_traj == 0 {
        return Err(Error::invalid("n_traj", "must be >= 1"));
    }
    checkpoints_for_indices(config, 0..n_traj as u64, master_seed, checkpoints)
}

/// As [`ensemble_checkpoints`] for the trajectories with indices in `indices`.
pub fn checkpoints_for_indices(
    config: &TrajectoryConfig,
    indices: std::ops::Range<u64>,
    master_seed: u64,
    checkpoints: &[usize],
) -> Result<Vec<Vec<GaussianState>>> {
    config.validate()?;
    if let Some(&bad) = checkpoints.iter().find(|&&k| k >= config.n_steps) {
        return Err(Error::invalid(
            "checkpoints",
            format!("step {bad} is beyond n_steps = {}", config.n_steps),
        ));
    }
    indices
        .into_par_iter()
        .map(|i| {
            let mut taken = vec![config.initial; checkpoints.len()];
            run_trajectory(config, master_seed, i, |r, s, _| {
                for (slot, &k) in taken.iter_mut().zip(checkpoints) {
                    if k == r {
                        *slot = *s;
                    }
                }
            })?;
            Ok(taken)
        })
        .collect()
}

/// Means and standard errors of `a`, `b_mom` and `x^2` at each checkpoint.
pub fn checkpoint_statistics(
    config: &TrajectoryConfig,
    n_traj: usize,
    master_seed: u64,
    checkpoints: &[usize],
) -> Result<Vec<CheckpointStats>> {
    let per_traj = ensemble_checkpoints(config, n_traj, master_seed, checkpoints)?;
    Ok(summarize_checkpoints(config, &per_traj, checkpoints))
}

/// Reduces `[trajectory][checkpoint]` states to per-checkpoint means in trajectory order.
pub fn summarize_checkpoints(
    config: &TrajectoryConfig,
    per_traj: &[Vec<GaussianState>],
    checkpoints: &[usize],
) -> Vec<CheckpointStats> {
    checkpoints
        .iter()
        .enumerate()
        .map(|(k, &step)| {
            let a = mean_and_stderr(per_traj.iter().map(|row| row[k].a));
            let b = mean_and_stderr(per_traj.iter().map(|row| row[k].b_mom));
            let x2 = mean_and_stderr(
                per_traj
                    .iter()
                    .map(|row| row[k].a * row[k].a + row[k].var_x()),
            );
            CheckpointStats {
                step,
                time: config.time_of(step),
                mean_a: a.0,
                stderr_a: a.1,
                mean_b: b.0,
                stderr_b: b.1,
                mean_x2: x2.0,
                stderr_x2: x2.1,
            }
        })
        .collect()
}

/// Sample mean and its standard error, summed in iteration order.
pub fn mean_and_stderr<I: IntoIterator<Item = f64>>(values: I) -> (f64, f64) {
    let values: Vec<f64> = values.into_iter().collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Analytic solution of `a'' + a'/t_c + a/(2 t_c^2) = 0`.
///
/// Underdamped with decay rate and angular frequency both `1/(2 t_c)`:
/// `a(t) = e^{-t/(2t_c)} [a0 cos(wt) + (adot0 + a0/(2t_c))/w sin(wt)]`, `w = 1/(2t_c)`.
pub fn damped_oscillator_reference(a0: f64, adot0: f64, t_c: f64, t: f64) -> f64 {
    let w = 1.0 / (2.0 * t_c);
    let decay = (-w * t).exp();
    decay * (a0 * (w * t).cos() + (adot0 + w * a0) / w * (w * t).sin())
}

/// Mean position and momentum predicted by the feedback loop in the continuous limit.
///
/// `a` follows [`damped_oscillator_reference`] with `adot0 = b0/m - a0/t_c`;
/// `b = m (a' + a/t_c)`.
pub fn feedback_mean_reference(
    state0: &GaussianState,
    fb: &FeedbackConfig,
    t: f64,
    c: &Constants,
) -> (f64, f64) {
    let t_c = fb.t_c;
    let (a0, b0) = (state0.a, state0.b_mom);
    let adot0 = b0 / c.mass - a0 / t_c;
    let a = damped_oscillator_reference(a0, adot0, t_c, t);
    let w = 1.0 / (2.0 * t_c);
    let k = (adot0 + w * a0) / w;
    let (s, co) = (w * t).sin_cos();
    let adot = (-w * t).exp() * (-w * (a0 * co + k * s) + w * (-a0 * s + k * co));
    (a, c.mass * (adot + a / t_c))
}

/// Fixed point `(Delta, eps)` of the width map `free_evolve(tau)` followed by collapse.
///
/// The width dynamics do not depend on the readouts, so every trajectory relaxes to
/// this measurement-limited packet.
pub fn width_fixed_point(
    start: &GaussianState,
    meter: &MeterConfig,
    c: &Constants,
) -> Result<(f64, f64)> {
    let mut s = GaussianState {
        a: 0.0,
        b_mom: 0.0,
        ..*start
    };
    for _ in 0..1_000_000 {
        let prime = free_evolve(&s, meter.tau, c)?;
        let next = collapse_update(&prime, 0.0, meter.sigma, c)?;
        let done = (next.delta - s.delta).abs() <= 1e-15 * next.delta
            && (next.eps - s.eps).abs() <= 1e-15 * next.eps.abs().max(1.0);
        s = next;
        if done {
            return Ok((s.delta, s.eps));
        }
    }
    Err(Error::NumericRange(
        "width map did not converge within 1e6 iterations".into(),
    ))
}

/// Writes records as comma-separated rows
/// `trajectory,step,time,outcome,a,b_mom,delta,eps`.
pub fn write_records_csv<W: Write>(records: &[TrajectoryRecord], mut out: W) -> Result<()> {
    writeln!(out, "trajectory,step,time,outcome,a,b_mom,delta,eps")?;
    for rec in records {
        for (r, ((t, x), s)) in rec
            .times
            .iter()
            .zip(&rec.outcomes)
            .zip(&rec.states)
            .enumerate()
        {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                rec.index, r, t, x, s.a, s.b_mom, s.delta, s.eps
            )?;
        }
    }
    Ok(())
}
