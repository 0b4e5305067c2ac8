//! Outcome-averaged dynamics under continuous position measurement.
//!
//! In the continuous limit (`tau -> 0`, `sigma -> inf`, `D = sigma*tau` fixed) the
//! density operator obeys
//!
//! ```text
//! d rho/dt = -(i/hbar)[H0, rho] - (1/(4D)) [x, [x, rho]]
//! ```
//!
//! which leaves the mean position and momentum on their free trajectories and adds
//! momentum variance at the constant rate `hbar^2/(2D)`. Everything here is a closed
//! form of those moment equations. The discrete interval `tau` only appears in
//! [`Moments::measured_step`], the per-measurement map whose `tau -> 0` limit the
//! closed forms describe; the interval `tau` and the elapsed time `t` coincide only
//! when no measurement is made.

use crate::error::{ensure_finite, Error, Result};
use crate::gaussian_state::{
    expectation_abs_x, positive_finite, Constants, GaussianState, MeterConfig,
};

/// Measurement strength `D = sigma*tau` of the continuous limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuousLimit {
    Finite(f64),
    /// `D = inf`: no measurement is performed.
    Unmeasured,
}

impl ContinuousLimit {
    pub fn finite(diffusion: f64) -> Result<Self> {
        positive_finite("D", diffusion)?;
        Ok(ContinuousLimit::Finite(diffusion))
    }

    /// Maps `+inf` to [`ContinuousLimit::Unmeasured`].
    pub fn from_value(diffusion: f64) -> Result<Self> {
        if diffusion == f64::INFINITY {
            Ok(ContinuousLimit::Unmeasured)
        } else {
            ContinuousLimit::finite(diffusion)
        }
    }

    /// `1/D`, exactly zero for the unmeasured case.
    pub fn inverse(&self) -> f64 {
        match *self {
            ContinuousLimit::Finite(d) => 1.0 / d,
            ContinuousLimit::Unmeasured => 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            ContinuousLimit::Finite(d) => d,
            ContinuousLimit::Unmeasured => f64::INFINITY,
        }
    }
}

/// First and second moments of a (possibly mixed) Gaussian ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl Moments {
    pub fn of_state(state: &GaussianState, c: &Constants) -> Self {
        Moments {
            mean_x: state.a,
            mean_p: state.b_mom,
            var_x: state.var_x(),
            var_p: state.var_p(c),
            cov_xp: state.cov_xp(c),
        }
    }

    /// `Delta = 2 var_x`, the width parameter of the position density.
    pub fn delta(&self) -> f64 {
        2.0 * self.var_x
    }

    pub fn second_moment_x(&self) -> f64 {
        self.var_x + self.mean_x * self.mean_x
    }

    pub fn free_evolve(&self, tau: f64, c: &Constants) -> Self {
        let s = tau / c.mass;
        Moments {
            mean_x: self.mean_x + self.mean_p * s,
            mean_p: self.mean_p,
            var_x: self.var_x + 2.0 * self.cov_xp * s + self.var_p * s * s,
            var_p: self.var_p,
            cov_xp: self.cov_xp + self.var_p * s,
        }
    }

    /// Outcome-averaged effect of one meter readout: position moments are untouched
    /// and the momentum variance grows by `hbar^2/(2 sigma)`.
    pub fn dephase(&self, sigma: f64, c: &Constants) -> Self {
        Moments {
            var_p: self.var_p + c.hbar * c.hbar / (2.0 * sigma),
            ..*self
        }
    }

    /// Free evolution over `meter.tau` followed by an averaged readout.
    pub fn measured_step(&self, meter: &MeterConfig, c: &Constants) -> Self {
        self.free_evolve(meter.tau, c).dephase(meter.sigma, c)
    }
}

/// Moments after `n_steps` discrete measured steps.
pub fn discrete_moments(
    state0: &GaussianState,
    meter: &MeterConfig,
    n_steps: usize,
    c: &Constants,
) -> Moments {
    (0..n_steps).fold(Moments::of_state(state0, c), |m, _| {
        m.measured_step(meter, c)
    })
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "t",
            format!("must be finite and >= 0, got {t}"),
        ))
    }
}

/// Closed-form moments at time `t` under the continuous-measurement master equation.
pub fn moments_of_t(
    state0: &GaussianState,
    t: f64,
    limit: ContinuousLimit,
    c: &Constants,
) -> Result<Moments> {
    check_time(t)?;
    let m0 = Moments::of_state(state0, c);
    let rate = c.hbar * c.hbar * limit.inverse() / 2.0;
    let m = c.mass;
    let out = Moments {
        mean_x: mean_position(state0, t, c)?,
        mean_p: m0.mean_p,
        var_x: m0.var_x
            + 2.0 * m0.cov_xp * t / m
            + m0.var_p * t * t / (m * m)
            + rate * t * t * t / (3.0 * m * m),
        var_p: m0.var_p + rate * t,
        cov_xp: m0.cov_xp + m0.var_p * t / m + rate * t * t / (2.0 * m),
    };
    ensure_finite(
        "moments_of_t",
        &[out.mean_x, out.var_x, out.var_p, out.cov_xp],
    )?;
    Ok(out)
}

/// Width parameter `Delta(t) = 2 var_x(t)`:
/// `Delta0 + 2 hbar eps0 t/m + hbar^2 (1+eps0^2) t^2/(m^2 Delta0) + hbar^2 t^3/(3 m^2 D)`.
pub fn delta_of_t(
    state0: &GaussianState,
    t: f64,
    limit: ContinuousLimit,
    c: &Constants,
) -> Result<f64> {
    check_time(t)?;
    let (h, m, d0, e0) = (c.hbar, c.mass, state0.delta, state0.eps);
    let value = d0
        + 2.0 * h * e0 * t / m
        + h * h * (1.0 + e0 * e0) * t * t / (m * m * d0)
        + h * h * t * t * t * limit.inverse() / (3.0 * m * m);
    ensure_finite("delta_of_t", &[value])?;
    Ok(value)
}

/// Packet centre `a(t) = a(0) + b(0) t / m`; independent of the measurement strength.
///
/// The mass factor follows from `d<x>/dt = <p>/m`; in natural units it reduces to
/// the often-quoted `a(0) + b(0) t`.
pub fn mean_position(state0: &GaussianState, t: f64, c: &Constants) -> Result<f64> {
    check_time(t)?;
    Ok(state0.a + state0.b_mom * t / c.mass)
}

/// `<|x|>(t)` for a packet with `a(0) = b(0) = 0` and initial uncertainty `dx = sqrt(Delta0/2)`.
pub fn abs_x_of_t(
    dx: f64,
    t: f64,
    eps0: f64,
    limit: ContinuousLimit,
    c: &Constants,
) -> Result<f64> {
    positive_finite("dx", dx)?;
    check_time(t)?;
    let (h, m) = (c.hbar, c.mass);
    let dx2 = dx * dx;
    let bracket = 2.0
        + 2.0 * h * eps0 * t / (m * dx2)
        + h * h * (1.0 + eps0 * eps0) * t * t / (2.0 * m * m * dx2 * dx2)
        + h * h * t * t * t * limit.inverse() / (3.0 * m * m * dx2);
    let value = dx / std::f64::consts::PI.sqrt() * bracket.sqrt();
    ensure_finite("abs_x_of_t", &[value])?;
    Ok(value)
}

/// One entry of a resolution schedule: resolution `dx` and measurement interval `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    pub dx: f64,
    pub t: f64,
}

/// Mean path length `(T/t) <dl>` with `<dl> = <|x|>(t)` for a centred packet.
pub fn analytic_path_length(
    point: SchedulePoint,
    total_time: f64,
    eps0: f64,
    limit: ContinuousLimit,
    c: &Constants,
) -> Result<f64> {
    check_interval(point, total_time)?;
    Ok(total_time / point.t * abs_x_of_t(point.dx, point.t, eps0, limit, c)?)
}

/// Mean path length for a packet moving with mean momentum `p_av`.
///
/// Each interval contributes `<|x|>` of a packet starting at the origin with
/// `Delta0 = 2 dx^2`, drifting to `a(t) = p_av t/m` while spreading as [`delta_of_t`].
pub fn analytic_path_length_drifting(
    point: SchedulePoint,
    total_time: f64,
    eps0: f64,
    p_av: f64,
    limit: ContinuousLimit,
    c: &Constants,
) -> Result<f64> {
    check_interval(point, total_time)?;
    let state0 = GaussianState::new(0.0, p_av, 2.0 * point.dx * point.dx, eps0)?;
    let a = mean_position(&state0, point.t, c)?;
    let delta = delta_of_t(&state0, point.t, limit, c)?;
    let value = total_time / point.t * expectation_abs_x(a, delta);
    ensure_finite("analytic_path_length", &[value])?;
    Ok(value)
}

fn check_interval(point: SchedulePoint, total_time: f64) -> Result<()> {
    positive_finite("t", point.t)?;
    positive_finite("T", total_time)?;
    if point.t > total_time {
        return Err(Error::invalid(
            "t",
            format!("interval {} exceeds total time {}", point.t, total_time),
        ));
    }
    Ok(())
}
