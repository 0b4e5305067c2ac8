//! Randomised closed-form vs grid comparisons.
//!
//! Errors are reported relative to the natural scale of each quantity: positions
//! against `max(|a|, sigma_x)`, momenta against `max(|b|, sigma_p)`, `Delta` against
//! itself, `eps` against `max(|eps|, 1)`, densities against their own value.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{GridSpec, GridWavefunction, Observables, DEFAULT_EXTENT_SIGMAS};
use crate::error::Result;
use crate::gaussian_state::{
    collapse_update, expectation_abs_x, free_evolve, outcome_pdf, Constants, GaussianState,
};
use crate::selective::trajectory_rng;

/// One random test case: a packet, an interval, a meter and a readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub index: u64,
    pub state: GaussianState,
    pub tau: f64,
    pub sigma: f64,
    /// Readout used for the collapse check, drawn from the readout density after `tau`.
    pub outcome: f64,
}

impl Scenario {
    /// Draws `a, b in [-2, 2]`, `Delta in [0.2, 5]`, `eps in [-2, 2]`, `tau in [0.01, 1]`,
    /// `sigma in [0.2, 10]` from stream `index` of `master_seed`.
    pub fn random(master_seed: u64, index: u64, c: &Constants) -> Result<Self> {
        let mut rng = trajectory_rng(master_seed, index);
        let state = GaussianState::new(
            rng.random_range(-2.0..=2.0),
            rng.random_range(-2.0..=2.0),
            rng.random_range(0.2..=5.0),
            rng.random_range(-2.0..=2.0),
        )?;
        let tau = rng.random_range(0.01..=1.0);
        let sigma = rng.random_range(0.2..=10.0);
        let prime = free_evolve(&state, tau, c)?;
        let z: f64 = rng.sample(StandardNormal);
        let outcome = prime.a + z * outcome_pdf(&prime, sigma).std_dev();
        Ok(Scenario {
            index,
            state,
            tau,
            sigma,
            outcome,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    FreeEvolve,
    CollapseUpdate,
    OutcomePdf,
    ExpectationAbsX,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::FreeEvolve => "free_evolve",
            Operation::CollapseUpdate => "collapse_update",
            Operation::OutcomePdf => "outcome_pdf",
            Operation::ExpectationAbsX => "expectation_abs_x",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub operation: Operation,
    pub rel_error: f64,
}

fn scaled(got: f64, want: f64, scale: f64) -> f64 {
    (got - want).abs() / want.abs().max(scale)
}

fn parameter_error(grid: &Observables, want: &GaussianState, c: &Constants) -> f64 {
    let got = grid.gaussian_parameters(c);
    [
        scaled(got.a, want.a, want.var_x().sqrt()),
        scaled(got.b_mom, want.b_mom, want.var_p(c).sqrt()),
        scaled(got.delta, want.delta, 0.0),
        scaled(got.eps, want.eps, 1.0),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Runs every closed-form operation on `scenario` against the grid oracle.
pub fn compare(scenario: &Scenario, c: &Constants, min_points: usize) -> Result<Vec<Comparison>> {
    let s = &scenario.state;
    let prime = free_evolve(s, scenario.tau, c)?;
    let post = collapse_update(&prime, scenario.outcome, scenario.sigma, c)?;
    let spec = GridSpec::covering(&[*s, prime, post], c, min_points, DEFAULT_EXTENT_SIGMAS)?;

    let psi0 = GridWavefunction::init_gaussian(s, spec, c)?;
    let evolved = psi0.propagate_free(scenario.tau, c)?.observables(c);
    let free_err = parameter_error(&evolved, &prime, c);

    let psi_prime = GridWavefunction::init_gaussian(&prime, spec, c)?;
    let (collapsed, likelihood) = psi_prime.apply_meter(scenario.outcome, scenario.sigma)?;
    let dist = outcome_pdf(&prime, scenario.sigma);
    let collapse_err = parameter_error(&collapsed.observables(c), &post, c).max(scaled(
        likelihood,
        dist.pdf(scenario.outcome),
        0.0,
    ));

    let mut pdf_err: f64 = 0.0;
    for k in -4..=4 {
        let x = dist.mean + k as f64 * dist.std_dev();
        pdf_err = pdf_err.max(scaled(
            psi_prime.outcome_density(x, scenario.sigma),
            dist.pdf(x),
            0.0,
        ));
    }
    let n = 160;
    let (lo, hi) = (
        dist.mean - 10.0 * dist.std_dev(),
        dist.mean + 10.0 * dist.std_dev(),
    );
    let h = (hi - lo) / n as f64;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let x = lo + k as f64 * h;
        let w = psi_prime.outcome_density(x, scenario.sigma)
            * h
            * if k == 0 || k == n { 0.5 } else { 1.0 };
        m0 += w;
        m1 += w * x;
        m2 += w * x * x;
    }
    let mean = m1 / m0;
    pdf_err = pdf_err
        .max(scaled(m0, 1.0, 0.0))
        .max(scaled(mean, dist.mean, dist.std_dev()))
        .max(scaled(m2 / m0 - mean * mean, dist.variance, 0.0));

    let abs_err = scaled(
        psi0.observables(c).abs_x,
        expectation_abs_x(s.a, s.delta),
        0.0,
    )
    .max(scaled(
        evolved.abs_x,
        expectation_abs_x(prime.a, prime.delta),
        0.0,
    ));

    Ok(vec![
        Comparison {
            operation: Operation::FreeEvolve,
            rel_error: free_err,
        },
        Comparison {
            operation: Operation::CollapseUpdate,
            rel_error: collapse_err,
        },
        Comparison {
            operation: Operation::OutcomePdf,
            rel_error: pdf_err,
        },
        Comparison {
            operation: Operation::ExpectationAbsX,
            rel_error: abs_err,
        },
    ])
}
