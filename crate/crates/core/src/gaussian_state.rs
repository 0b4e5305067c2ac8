//! Pure Gaussian wave packets and the exact maps acting on them.
//!
//! A state is written (up to a global phase) as
//!
//! ```text
//! psi(x) = (pi*delta)^(-1/4) * exp( -(1 - i*eps)/(2*delta) * (x - a)^2 + i*b_mom*x/hbar )
//! ```
//!
//! so that `var_x = delta/2`, `var_p = hbar^2 (1 + eps^2)/(2 delta)` and
//! `cov_xp = hbar*eps/2`. The global phase is never tracked since no observable
//! computed here depends on it.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Physical constants. Defaults to natural units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub hbar: f64,
    pub mass: f64,
}

impl Constants {
    pub const NATURAL: Constants = Constants {
        hbar: 1.0,
        mass: 1.0,
    };

    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let c = Constants { hbar, mass };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        positive_finite("hbar", self.hbar)?;
        positive_finite("mass", self.mass)
    }
}

impl Default for Constants {
    fn default() -> Self {
        Constants::NATURAL
    }
}

/// Four-parameter pure Gaussian: mean position `a`, mean momentum `b_mom`,
/// squared-width parameter `delta` and chirp `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub a: f64,
    pub b_mom: f64,
    pub delta: f64,
    pub eps: f64,
}

impl GaussianState {
    pub fn new(a: f64, b_mom: f64, delta: f64, eps: f64) -> Result<Self> {
        let s = GaussianState {
            a,
            b_mom,
            delta,
            eps,
        };
        s.validate()?;
        Ok(s)
    }

    /// Zero-mean, unchirped packet with position uncertainty `dx`, i.e. `delta = 2 dx^2`.
    pub fn centered_with_width(dx: f64) -> Result<Self> {
        positive_finite("dx", dx)?;
        GaussianState::new(0.0, 0.0, 2.0 * dx * dx, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            "gaussian state",
            &[self.a, self.b_mom, self.delta, self.eps],
        )?;
        if self.delta <= 0.0 {
            return Err(Error::invalid(
                "delta",
                format!("must be > 0, got {}", self.delta),
            ));
        }
        Ok(())
    }

    pub fn var_x(&self) -> f64 {
        self.delta / 2.0
    }

    pub fn var_p(&self, c: &Constants) -> f64 {
        c.hbar * c.hbar * (1.0 + self.eps * self.eps) / (2.0 * self.delta)
    }

    /// Symmetrised covariance `<xp + px>/2 - <x><p>`.
    pub fn cov_xp(&self, c: &Constants) -> f64 {
        c.hbar * self.eps / 2.0
    }

    /// `var_x * var_p - cov_xp^2`, which equals `hbar^2/4` for every pure Gaussian.
    pub fn uncertainty_product(&self, c: &Constants) -> f64 {
        let cov = self.cov_xp(c);
        self.var_x() * self.var_p(c) - cov * cov
    }

    /// Same packet translated by `shift_x` in position and `shift_p` in momentum.
    pub fn displaced(&self, shift_x: f64, shift_p: f64) -> GaussianState {
        GaussianState {
            a: self.a + shift_x,
            b_mom: self.b_mom + shift_p,
            ..*self
        }
    }
}

/// Meter variance `sigma` and measurement interval `tau`.
///
/// `sigma = +inf` is admitted and describes a meter that extracts no information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeterConfig {
    pub sigma: f64,
    pub tau: f64,
}

impl MeterConfig {
    pub fn new(sigma: f64, tau: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        positive_finite("tau", tau)?;
        Ok(MeterConfig { sigma, tau })
    }

    /// Meter with `sigma = diffusion / tau`, the discretisation of the continuous limit.
    pub fn from_diffusion(diffusion: f64, tau: f64) -> Result<Self> {
        positive_finite("tau", tau)?;
        if !(diffusion > 0.0) {
            return Err(Error::invalid("D", format!("must be > 0, got {diffusion}")));
        }
        MeterConfig::new(diffusion / tau, tau)
    }

    /// `D = sigma * tau`.
    pub fn diffusion(&self) -> f64 {
        self.sigma * self.tau
    }

    pub fn is_informative(&self) -> bool {
        self.sigma.is_finite()
    }
}

/// Exact free evolution over `tau`.
pub fn free_evolve(state: &GaussianState, tau: f64, c: &Constants) -> Result<GaussianState> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(
            "tau",
            format!("must be finite and >= 0, got {tau}"),
        ));
    }
    let s = c.hbar * tau / c.mass;
    let spread = 1.0 + state.eps * state.eps;
    let next = GaussianState {
        a: state.a + state.b_mom * tau / c.mass,
        b_mom: state.b_mom,
        delta: state.delta + spread * s * s / state.delta + 2.0 * state.eps * s,
        eps: state.eps + spread * s / state.delta,
    };
    ensure_finite("free_evolve", &[next.a, next.delta, next.eps])?;
    debug_assert!(next.delta > 0.0);
    Ok(next)
}

/// Normal density of the meter readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDistribution {
    pub mean: f64,
    pub variance: f64,
}

impl OutcomeDistribution {
    pub fn pdf(&self, outcome: f64) -> f64 {
        let z = outcome - self.mean;
        (-z * z / (2.0 * self.variance)).exp() / (2.0 * PI * self.variance).sqrt()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Draws one readout from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean + self.std_dev() * z
    }
}

/// Readout density for a meter of variance `sigma` acting on the pre-measurement state.
///
/// The squared meter profile `|Y(u)|^2` is a normal density of variance `sigma/2`
/// and `|psi|^2` one of variance `delta'/2`; the readout density is their
/// convolution, `N(a', (delta' + sigma)/2)`.
pub fn outcome_pdf(state_prime: &GaussianState, sigma: f64) -> OutcomeDistribution {
    OutcomeDistribution {
        mean: state_prime.a,
        variance: (state_prime.delta + sigma) / 2.0,
    }
}

/// Contraction factor `C = 1 + delta'/sigma`.
pub fn contraction_factor(state_prime: &GaussianState, sigma: f64) -> f64 {
    1.0 + state_prime.delta / sigma
}

/// Conditional state after reading `outcome` on a meter of variance `sigma`.
///
/// The momentum update follows the chirp coupling `hbar (eps'/delta') (C-1)/C (x - a')`.
/// The shortcut `hbar / (C^(1/2) sigma)` sometimes quoted for the same jump holds only for
/// particular `(tau, sigma, delta')` and is not used.
pub fn collapse_update(
    state_prime: &GaussianState,
    outcome: f64,
    sigma: f64,
    c: &Constants,
) -> Result<GaussianState> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("must be > 0, got {sigma}")));
    }
    if !outcome.is_finite() {
        return Err(Error::invalid(
            "outcome",
            format!("must be finite, got {outcome}"),
        ));
    }
    let contraction = contraction_factor(state_prime, sigma);
    let gain = (contraction - 1.0) / contraction;
    let jump = gain * (outcome - state_prime.a);
    let next = GaussianState {
        a: state_prime.a + jump,
        b_mom: state_prime.b_mom + c.hbar * state_prime.eps / state_prime.delta * jump,
        delta: state_prime.delta / contraction,
        eps: state_prime.eps / contraction,
    };
    ensure_finite(
        "collapse_update",
        &[next.a, next.b_mom, next.delta, next.eps],
    )?;
    if next.delta <= 0.0 {
        return Err(Error::NumericRange(format!(
            "collapse underflowed the width: delta = {}",
            next.delta
        )));
    }
    Ok(next)
}

/// `<|x|>` for a position density `N(a, delta/2)`:
/// `|a| erf(|a|/sqrt(delta)) + sqrt(delta/pi) exp(-a^2/delta)`.
pub fn expectation_abs_x(a: f64, delta: f64) -> f64 {
    let abs_a = a.abs();
    abs_a * libm::erf(abs_a / delta.sqrt()) + (delta / PI).sqrt() * (-a * a / delta).exp()
}

pub(crate) fn positive_finite(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const C: Constants = Constants::NATURAL;

    fn state(a: f64, b: f64, d: f64, e: f64) -> GaussianState {
        GaussianState::new(a, b, d, e).unwrap()
    }

    #[test]
    fn free_evolve_zero_time_is_identity() {
        let s = state(0.3, -1.2, 0.7, 0.4);
        assert_eq!(free_evolve(&s, 0.0, &C).unwrap(), s);
    }

    // Values confirmed by grid propagation in oracle_grid tests.
    #[test]
    fn free_evolve_examples() {
        let out = free_evolve(&state(0.0, 0.0, 1.0, 0.0), 1.0, &C).unwrap();
        assert_relative_eq!(out.a, 0.0);
        assert_relative_eq!(out.b_mom, 0.0);
        assert_relative_eq!(out.delta, 2.0, max_relative = 1e-15);
        assert_relative_eq!(out.eps, 1.0, max_relative = 1e-15);

        let out = free_evolve(&state(1.0, 2.0, 2.0, 0.0), 0.5, &C).unwrap();
        assert_relative_eq!(out.a, 2.0, max_relative = 1e-15);
        assert_relative_eq!(out.b_mom, 2.0);
        assert_relative_eq!(out.delta, 2.125, max_relative = 1e-15);
        assert_relative_eq!(out.eps, 0.25, max_relative = 1e-15);
    }

    #[test]
    fn free_evolve_carries_units() {
        let c = Constants::new(2.0, 4.0).unwrap();
        let out = free_evolve(&state(0.0, 4.0, 1.0, 0.0), 1.0, &c).unwrap();
        // hbar*tau/m = 0.5
        assert_relative_eq!(out.a, 1.0);
        assert_relative_eq!(out.delta, 1.25);
        assert_relative_eq!(out.eps, 0.5);
    }

    #[test]
    fn free_evolve_rejects_negative_time() {
        assert!(free_evolve(&state(0.0, 0.0, 1.0, 0.0), -1.0, &C).is_err());
    }

    #[test]
    fn free_evolve_rejects_overflow() {
        let s = state(0.0, 0.0, 1e-300, 0.0);
        assert!(matches!(
            free_evolve(&s, 1e10, &C),
            Err(Error::NumericRange(_))
        ));
    }

    #[test]
    fn outcome_pdf_examples() {
        let d = outcome_pdf(&state(0.0, 0.0, 1.0, 0.0), 1.0);
        assert_eq!(d.mean, 0.0);

        let d = outcome_pdf(&state(2.0, 0.0, 1.0, 0.0), 1.0);
        assert_relative_eq!(d.mean, 2.0);
        assert_relative_eq!(d.variance, 1.0);

        let d = outcome_pdf(&state(0.0, 0.0, 3.0, 0.0), 1e-12);
        assert_relative_eq!(d.variance, 1.5, max_relative = 1e-11);
    }

    #[test]
    fn outcome_sampling_matches_moments() {
        let d = outcome_pdf(&state(1.5, 0.0, 2.0, 0.3), 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (d.variance / n as f64).sqrt();
        assert!((mean - d.mean).abs() < 4.0 * se);
        assert!((var - d.variance).abs() < 4.0 * d.variance * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn collapse_at_center_only_contracts() {
        let s = state(0.4, -0.3, 2.0, 0.5);
        let out = collapse_update(&s, s.a, 1.0, &C).unwrap();
        assert_eq!(out.a, s.a);
        assert_eq!(out.b_mom, s.b_mom);
        assert_relative_eq!(out.delta, 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(out.eps, 0.5 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn collapse_with_uninformative_meter_is_identity() {
        let s = state(0.4, -0.3, 2.0, 0.5);
        assert_eq!(collapse_update(&s, 3.0, f64::INFINITY, &C).unwrap(), s);
        let near = collapse_update(&s, 3.0, 1e12, &C).unwrap();
        assert_relative_eq!(near.delta, s.delta, max_relative = 1e-11);
    }

    #[test]
    fn collapse_example() {
        let out = collapse_update(&state(0.0, 0.0, 1.0, 1.0), 1.0, 1.0, &C).unwrap();
        assert_relative_eq!(contraction_factor(&state(0.0, 0.0, 1.0, 1.0), 1.0), 2.0);
        assert_relative_eq!(out.a, 0.5);
        assert_relative_eq!(out.b_mom, 0.5);
        assert_relative_eq!(out.delta, 0.5);
        assert_relative_eq!(out.eps, 0.5);
    }

    #[test]
    fn collapse_rejects_bad_sigma() {
        let s = state(0.0, 0.0, 1.0, 0.0);
        assert!(collapse_update(&s, 0.0, 0.0, &C).is_err());
        assert!(collapse_update(&s, 0.0, -1.0, &C).is_err());
        assert!(collapse_update(&s, 0.0, f64::NAN, &C).is_err());
    }

    #[test]
    fn abs_x_examples() {
        assert_relative_eq!(
            expectation_abs_x(0.0, 2.0),
            (2.0 / PI).sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            expectation_abs_x(1.0, 1.0),
            1.050_254_5,
            max_relative = 1e-7
        );
        assert_relative_eq!(expectation_abs_x(-50.0, 1.0), 50.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn saturation_and_semigroup(
            a in -3.0..3.0f64, b in -3.0..3.0f64, d in 0.1..5.0f64, e in -2.0..2.0f64,
            t1 in 0.0..1.0f64, t2 in 0.0..1.0f64,
        ) {
            let s = state(a, b, d, e);
            let one = free_evolve(&free_evolve(&s, t1, &C).unwrap(), t2, &C).unwrap();
            let both = free_evolve(&s, t1 + t2, &C).unwrap();
            for (x, y) in [(one.a, both.a), (one.delta, both.delta), (one.eps, both.eps)] {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            prop_assert!((both.uncertainty_product(&C) - 0.25).abs() <= 1e-12 * 0.25 * (1.0 + both.eps * both.eps));
        }

        #[test]
        fn collapse_contracts_exactly(
            a in -3.0..3.0f64, d in 0.1..5.0f64, e in -2.0..2.0f64,
            sigma in 0.1..10.0f64, x in -5.0..5.0f64,
        ) {
            let s = state(a, 0.0, d, e);
            let out = collapse_update(&s, x, sigma, &C).unwrap();
            let cf = contraction_factor(&s, sigma);
            prop_assert!(cf >= 1.0);
            prop_assert!(out.delta <= s.delta);
            prop_assert!((out.delta * cf - s.delta).abs() <= 1e-14 * s.delta);
            prop_assert!((out.uncertainty_product(&C) - 0.25).abs() <= 1e-13);
        }

        #[test]
        fn abs_x_bounded_below(a in -5.0..5.0f64, d in 0.01..10.0f64) {
            let v = expectation_abs_x(a, d);
            let drift = a.abs() * libm::erf(a.abs() / d.sqrt());
            let spread = (d / PI).sqrt() * (-a * a / d).exp();
            prop_assert!(v >= drift.max(spread));
            prop_assert!(v >= a.abs() - 1e-12);
        }
    }
}
