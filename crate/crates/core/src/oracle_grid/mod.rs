//! Brute-force wave functions on a uniform position grid.
//!
//! Used as an independent check on every Gaussian closed form: free propagation is
//! exact in momentum space, the meter acts by pointwise multiplication, and moments
//! come from quadrature (position) and FFT (momentum). Nothing here reads the
//! closed-form maps except [`GridSpec::covering`], which only sizes the grid.

pub mod validation;

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::gaussian_state::{positive_finite, Constants, GaussianState};

/// Default number of grid points.
pub const DEFAULT_POINTS: usize = 4096;
/// Default half-extent in standard deviations of the widest packet.
pub const DEFAULT_EXTENT_SIGMAS: f64 = 12.0;

const BOUNDARY_RATIO: f64 = 1e-8;
const COVERAGE_SIGMAS: f64 = 8.0;

/// Grid nodes `x_j = (first_index + j) * spacing`, `j = 0..n`.
///
/// Nodes sit on integer multiples of the spacing so that `x = 0` is always a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub spacing: f64,
    pub first_index: i64,
}

impl GridSpec {
    pub fn new(n: usize, spacing: f64, first_index: i64) -> Result<Self> {
        if n < 16 {
            return Err(Error::invalid(
                "n",
                format!("need at least 16 points, got {n}"),
            ));
        }
        positive_finite("spacing", spacing)?;
        Ok(GridSpec {
            n,
            spacing,
            first_index,
        })
    }

    /// `n` points spanning `[lo, hi]`, snapped outward to multiples of the spacing.
    pub fn spanning(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::invalid(
                "extent",
                format!("empty interval [{lo}, {hi}]"),
            ));
        }
        let spacing = (hi - lo) / (n as f64 - 1.0);
        let first_index = (lo / spacing).floor() as i64;
        GridSpec::new(n, spacing, first_index)
    }

    /// Grid holding every state in `states` to `extent_sigmas` position standard
    /// deviations, resolving their momentum content to the same number of standard
    /// deviations, with at least `min_points` points (rounded up to a power of two).
    pub fn covering(
        states: &[GaussianState],
        c: &Constants,
        min_points: usize,
        extent_sigmas: f64,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("states", "nothing to cover"));
        }
        let lo = states
            .iter()
            .map(|s| s.a - extent_sigmas * s.var_x().sqrt())
            .fold(f64::INFINITY, f64::min);
        let hi = states
            .iter()
            .map(|s| s.a + extent_sigmas * s.var_x().sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        let p_max = states
            .iter()
            .map(|s| s.b_mom.abs() + extent_sigmas * s.var_p(c).sqrt())
            .fold(0.0, f64::max);
        // Nyquist momentum pi*hbar/spacing must exceed p_max.
        let needed = ((hi - lo) * p_max / (PI * c.hbar)).ceil() as usize + 1;
        let n = needed.max(min_points).next_power_of_two();
        GridSpec::spanning(lo, hi, n)
    }

    pub fn x(&self, j: usize) -> f64 {
        (self.first_index + j as i64) as f64 * self.spacing
    }

    pub fn x_min(&self) -> f64 {
        self.x(0)
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    /// Angular wavenumbers in FFT order.
    fn wavenumbers(&self) -> Vec<f64> {
        let dk = 2.0 * PI / (self.n as f64 * self.spacing);
        (0..self.n)
            .map(|j| {
                if j < self.n.div_ceil(2) {
                    j as f64 * dk
                } else {
                    (j as f64 - self.n as f64) * dk
                }
            })
            .collect()
    }
}

/// Position and momentum expectation values of a grid wave function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
    pub abs_x: f64,
}

impl Observables {
    /// Gaussian parameters with the same first and second moments.
    pub fn gaussian_parameters(&self, c: &Constants) -> GaussianState {
        GaussianState {
            a: self.mean_x,
            b_mom: self.mean_p,
            delta: 2.0 * self.var_x,
            eps: 2.0 * self.cov_xp / c.hbar,
        }
    }

    pub fn uncertainty_product(&self) -> f64 {
        self.var_x * self.var_p - self.cov_xp * self.cov_xp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub spec: GridSpec,
    pub amplitudes: Vec<Complex64>,
}

impl GridWavefunction {
    /// Samples the Gaussian `state` on `spec` and normalises discretely.
    pub fn init_gaussian(state: &GaussianState, spec: GridSpec, c: &Constants) -> Result<Self> {
        state.validate()?;
        let reach = COVERAGE_SIGMAS * state.var_x().sqrt();
        if spec.x_min() > state.a - reach || spec.x_max() < state.a + reach {
            return Err(Error::Grid(format!(
                "grid [{}, {}] does not cover a +/- 8 sigma = [{}, {}]",
                spec.x_min(),
                spec.x_max(),
                state.a - reach,
                state.a + reach
            )));
        }
        let curvature = Complex64::new(-1.0, state.eps) / (2.0 * state.delta);
        let amplitudes = (0..spec.n)
            .map(|j| {
                let x = spec.x(j);
                let u = x - state.a;
                (curvature * u * u + Complex64::new(0.0, state.b_mom * x / c.hbar)).exp()
            })
            .collect();
        let mut psi = GridWavefunction { spec, amplitudes };
        psi.normalize()?;
        psi.check_support()?;
        Ok(psi)
    }

    /// `sum |psi|^2 dx`.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.spec.spacing
    }

    fn normalize(&mut self) -> Result<f64> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NumericRange(format!("wave function norm is {norm}")));
        }
        let scale = 1.0 / norm.sqrt();
        for a in &mut self.amplitudes {
            *a *= scale;
        }
        Ok(norm)
    }

    /// Rejects states whose amplitude at the grid edges, in position or in momentum,
    /// exceeds `1e-8` of the peak.
    pub fn check_support(&self) -> Result<()> {
        edge_check("position", &self.amplitudes)?;
        let phi = self.fft(&self.amplitudes, false);
        // The largest |k| entries sit in the middle of FFT order.
        let mid = self.spec.n / 2;
        let peak = phi.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let edge = phi[mid - 1]
            .norm()
            .max(phi[mid].norm())
            .max(phi[mid + 1].norm());
        if edge > BOUNDARY_RATIO * peak {
            return Err(Error::Grid(format!(
                "momentum content reaches the Nyquist limit (edge/peak = {:.3e})",
                edge / peak
            )));
        }
        Ok(())
    }

    fn fft(&self, data: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let mut planner = FftPlanner::new();
        let plan = if inverse {
            planner.plan_fft_inverse(data.len())
        } else {
            planner.plan_fft_forward(data.len())
        };
        let mut buf = data.to_vec();
        plan.process(&mut buf);
        if inverse {
            let scale = 1.0 / data.len() as f64;
            for v in &mut buf {
                *v *= scale;
            }
        }
        buf
    }

    /// Multiplies the momentum representation by `phase(k)` and transforms back.
    fn in_momentum_space<F: Fn(f64) -> Complex64>(&self, phase: F) -> Vec<Complex64> {
        let mut phi = self.fft(&self.amplitudes, false);
        for (v, k) in phi.iter_mut().zip(self.spec.wavenumbers()) {
            *v *= phase(k);
        }
        self.fft(&phi, true)
    }

    /// Exact free propagation: `phi(k) -> phi(k) exp(-i hbar k^2 t / (2m))`.
    pub fn propagate_free(&self, t: f64, c: &Constants) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(
                "t",
                format!("must be finite and >= 0, got {t}"),
            ));
        }
        let out = GridWavefunction {
            spec: self.spec,
            amplitudes: self.in_momentum_space(|k| {
                Complex64::from_polar(1.0, -c.hbar * k * k * t / (2.0 * c.mass))
            }),
        };
        out.check_support()?;
        Ok(out)
    }

    /// Unnormalised `Y(outcome - x) psi(x)` with `Y(u) = (pi sigma)^(-1/4) exp(-u^2/(2 sigma))`.
    fn metered(&self, outcome: f64, sigma: f64) -> Vec<Complex64> {
        let pref = if sigma.is_finite() {
            (PI * sigma).powf(-0.25)
        } else {
            0.0
        };
        (0..self.spec.n)
            .map(|j| {
                let u = outcome - self.spec.x(j);
                let w = if sigma.is_finite() {
                    pref * (-u * u / (2.0 * sigma)).exp()
                } else {
                    0.0
                };
                self.amplitudes[j] * w
            })
            .collect()
    }

    /// Readout density at `outcome`: `int |Y(outcome - x) psi(x)|^2 dx`.
    pub fn outcome_density(&self, outcome: f64, sigma: f64) -> f64 {
        self.metered(outcome, sigma)
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            * self.spec.spacing
    }

    /// Applies the meter operator for readout `outcome` and renormalises.
    /// Returns the post-measurement state and the readout density at `outcome`.
    pub fn apply_meter(&self, outcome: f64, sigma: f64) -> Result<(Self, f64)> {
        if !(sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be > 0, got {sigma}")));
        }
        if sigma == f64::INFINITY {
            return Ok((self.clone(), 0.0));
        }
        let amplitudes = self.metered(outcome, sigma);
        let mut out = GridWavefunction {
            spec: self.spec,
            amplitudes,
        };
        let likelihood = out.norm();
        if !(likelihood > f64::MIN_POSITIVE) {
            return Err(Error::NumericRange(format!(
                "readout {outcome} has vanishing likelihood"
            )));
        }
        out.normalize()?;
        out.check_support()?;
        Ok((out, likelihood))
    }

    /// Applies `exp[-(i/hbar)(q x - s p)]`: translation by `s` and momentum kick by `-q`,
    /// up to a global phase.
    pub fn displace(&self, shift_x: f64, shift_p: f64, c: &Constants) -> Result<Self> {
        let moved = self.in_momentum_space(|k| Complex64::from_polar(1.0, -k * shift_x));
        let amplitudes = moved
            .into_iter()
            .enumerate()
            .map(|(j, a)| a * Complex64::from_polar(1.0, shift_p * self.spec.x(j) / c.hbar))
            .collect();
        let out = GridWavefunction {
            spec: self.spec,
            amplitudes,
        };
        out.check_support()?;
        Ok(out)
    }

    /// Quadrature moments; momentum moments use the spectral derivative.
    pub fn observables(&self, c: &Constants) -> Observables {
        let h = self.spec.spacing;
        let density: Vec<f64> = self.amplitudes.iter().map(|a| a.norm_sqr()).collect();
        let norm: f64 = density.iter().sum::<f64>() * h;
        let xs: Vec<f64> = (0..self.spec.n).map(|j| self.spec.x(j)).collect();

        let mean_x = xs.iter().zip(&density).map(|(x, r)| x * r).sum::<f64>() * h / norm;
        let var_x = xs
            .iter()
            .zip(&density)
            .map(|(x, r)| (x - mean_x).powi(2) * r)
            .sum::<f64>()
            * h
            / norm;

        let ks = self.spec.wavenumbers();
        let phi = self.fft(&self.amplitudes, false);
        let weight: f64 = phi.iter().map(|v| v.norm_sqr()).sum();
        let mean_p = c.hbar
            * ks.iter()
                .zip(&phi)
                .map(|(k, v)| k * v.norm_sqr())
                .sum::<f64>()
            / weight;
        let var_p = ks
            .iter()
            .zip(&phi)
            .map(|(k, v)| (c.hbar * k - mean_p).powi(2) * v.norm_sqr())
            .sum::<f64>()
            / weight;

        // (1/2)<xp + px> = Re <psi| x p psi>
        let p_psi = self.in_momentum_space(|k| Complex64::new(c.hbar * k, 0.0));
        let sym_xp = xs
            .iter()
            .zip(self.amplitudes.iter().zip(&p_psi))
            .map(|(x, (psi, ppsi))| x * (psi.conj() * ppsi).re)
            .sum::<f64>()
            * h
            / norm;

        Observables {
            mean_x,
            mean_p,
            var_x,
            var_p,
            cov_xp: sym_xp - mean_x * mean_p,
            abs_x: self.abs_x_quadrature(&density) / norm,
        }
    }

    /// `int |x| rho dx`, split at the node `x = 0` with Gregory end corrections so the
    /// kink of `|x|` does not limit the order.
    fn abs_x_quadrature(&self, density: &[f64]) -> f64 {
        let h = self.spec.spacing;
        let zero = -self.spec.first_index;
        let n = self.spec.n as i64;
        let at = |j: i64| self.spec.x(j as usize).abs() * density[j as usize];
        if zero <= 0 || zero >= n - 1 {
            return (0..n).map(at).sum::<f64>() * h;
        }
        let right: Vec<f64> = (zero..n).map(at).collect();
        let left: Vec<f64> = (0..=zero).rev().map(at).collect();
        gregory_half_line(&right, h) + gregory_half_line(&left, h)
    }
}

/// Trapezoid rule with Gregory corrections at the first node; the far end is assumed
/// to have decayed.
fn gregory_half_line(f: &[f64], h: f64) -> f64 {
    const WEIGHTS: [f64; 5] = [
        1.0 / 12.0,
        -1.0 / 24.0,
        19.0 / 720.0,
        -3.0 / 160.0,
        863.0 / 60480.0,
    ];
    let trapezoid = h * (f[0] / 2.0 + f[1..].iter().sum::<f64>());
    if f.len() < WEIGHTS.len() + 1 {
        return trapezoid;
    }
    let mut diffs: Vec<f64> = f[..WEIGHTS.len() + 1].to_vec();
    let mut correction = 0.0;
    for w in WEIGHTS {
        diffs = diffs.windows(2).map(|p| p[1] - p[0]).collect();
        correction += w * diffs[0];
    }
    trapezoid + h * correction
}

fn edge_check(what: &str, amplitudes: &[Complex64]) -> Result<()> {
    let peak = amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let edge = amplitudes[0]
        .norm()
        .max(amplitudes[amplitudes.len() - 1].norm());
    if edge > BOUNDARY_RATIO * peak {
        return Err(Error::Grid(format!(
            "{what} amplitude at the grid edge is {:.3e} of the peak",
            edge / peak
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const C: Constants = Constants::NATURAL;

    fn grid_for(states: &[GaussianState]) -> GridSpec {
        GridSpec::covering(states, &C, DEFAULT_POINTS, DEFAULT_EXTENT_SIGMAS).unwrap()
    }

    fn gauss(a: f64, b: f64, d: f64, e: f64) -> GaussianState {
        GaussianState::new(a, b, d, e).unwrap()
    }

    #[test]
    fn zero_is_a_node() {
        let g = GridSpec::spanning(-3.3, 5.1, 1000).unwrap();
        assert!(g.x_min() <= -3.3);
        let j0 = (-g.first_index) as usize;
        assert_eq!(g.x(j0), 0.0);
    }

    #[test]
    fn init_moments() {
        let s = gauss(0.0, 0.0, 1.0, 0.0);
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s]), &C).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-10);
        let o = psi.observables(&C);
        assert!(o.mean_x.abs() < 1e-12);
        assert_relative_eq!(o.var_x, 0.5, max_relative = 1e-8);
        assert!(o.abs_x > 0.0);

        let s = gauss(0.5, 1.7, 0.8, -1.3);
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s]), &C).unwrap();
        let o = psi.observables(&C);
        assert_relative_eq!(o.mean_p, 1.7, max_relative = 1e-8);
        assert_relative_eq!(o.cov_xp, -0.65, max_relative = 1e-8);
        assert_relative_eq!(o.var_p, s.var_p(&C), max_relative = 1e-8);
        assert_relative_eq!(o.uncertainty_product(), 0.25, max_relative = 1e-8);
    }

    #[test]
    fn init_rejects_narrow_grid() {
        let s = gauss(0.0, 0.0, 1.0, 0.0);
        let g = GridSpec::spanning(-4.0, 4.0, 4096).unwrap();
        assert!(matches!(
            GridWavefunction::init_gaussian(&s, g, &C),
            Err(Error::Grid(_))
        ));
        // Covers 8 sigma but amplitude at the edge is still ~1e-7 of the peak.
        let g = GridSpec::spanning(-5.7, 5.7, 4096).unwrap();
        assert!(GridWavefunction::init_gaussian(&s, g, &C).is_err());
    }

    #[test]
    fn abs_x_matches_closed_form() {
        let s = gauss(1.0, 0.0, 1.0, 0.0);
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s]), &C).unwrap();
        assert_relative_eq!(
            psi.observables(&C).abs_x,
            crate::expectation_abs_x(1.0, 1.0),
            max_relative = 1e-10
        );
        assert_relative_eq!(psi.observables(&C).abs_x, 1.05025, max_relative = 1e-5);
    }

    #[test]
    fn free_propagation() {
        let s = gauss(0.0, 0.0, 1.0, 0.0);
        let target = crate::free_evolve(&s, 1.0, &C).unwrap();
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s, target]), &C).unwrap();
        assert_eq!(
            psi.propagate_free(0.0, &C).unwrap().amplitudes.len(),
            psi.amplitudes.len()
        );
        let out = psi.propagate_free(1.0, &C).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-12);
        let p = out.observables(&C).gaussian_parameters(&C);
        assert!(p.a.abs() < 1e-10 && p.b_mom.abs() < 1e-10);
        assert_relative_eq!(p.delta, 2.0, max_relative = 1e-8);
        assert_relative_eq!(p.eps, 1.0, max_relative = 1e-8);

        let s = gauss(1.0, 2.0, 2.0, 0.0);
        let target = crate::free_evolve(&s, 0.5, &C).unwrap();
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s, target]), &C).unwrap();
        let p = psi
            .propagate_free(0.5, &C)
            .unwrap()
            .observables(&C)
            .gaussian_parameters(&C);
        assert_relative_eq!(p.a, 2.0, max_relative = 1e-8);
        assert_relative_eq!(p.b_mom, 2.0, max_relative = 1e-8);
        assert_relative_eq!(p.delta, 2.125, max_relative = 1e-8);
        assert_relative_eq!(p.eps, 0.25, max_relative = 1e-8);
    }

    #[test]
    fn propagation_off_grid_is_rejected() {
        let s = gauss(0.0, 0.0, 1.0, 0.0);
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s]), &C).unwrap();
        assert!(matches!(psi.propagate_free(50.0, &C), Err(Error::Grid(_))));
    }

    #[test]
    fn meter_examples() {
        let s = gauss(0.0, 0.0, 1.0, 1.0);
        let post = crate::collapse_update(&s, 1.0, 1.0, &C).unwrap();
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s, post]), &C).unwrap();
        let (out, like) = psi.apply_meter(1.0, 1.0).unwrap();
        let p = out.observables(&C).gaussian_parameters(&C);
        assert_relative_eq!(p.a, 0.5, max_relative = 1e-8);
        assert_relative_eq!(p.b_mom, 0.5, max_relative = 1e-8);
        assert_relative_eq!(p.delta, 0.5, max_relative = 1e-8);
        assert_relative_eq!(p.eps, 0.5, max_relative = 1e-8);
        assert_relative_eq!(
            like,
            crate::outcome_pdf(&s, 1.0).pdf(1.0),
            max_relative = 1e-10
        );
    }

    #[test]
    fn weak_meter_leaves_state_and_flattens_likelihood() {
        let s = gauss(0.0, 0.0, 1.0, 0.0);
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s]), &C).unwrap();
        let sigma = 1e10;
        let (out, like) = psi.apply_meter(0.3, sigma).unwrap();
        assert_relative_eq!(like, (PI * sigma).powf(-0.5), max_relative = 1e-9);
        let p = out.observables(&C);
        assert_relative_eq!(p.var_x, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn likelihood_integrates_to_one() {
        let s = gauss(2.0, 0.0, 1.0, 0.0);
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s]), &C).unwrap();
        let sigma = 1.0;
        let (lo, hi, n) = (2.0 - 12.0, 2.0 + 12.0, 600);
        let h = (hi - lo) / n as f64;
        let (mut total, mut first, mut second) = (0.0, 0.0, 0.0);
        for k in 0..=n {
            let x = lo + k as f64 * h;
            let w = psi.outcome_density(x, sigma) * h * if k == 0 || k == n { 0.5 } else { 1.0 };
            total += w;
            first += w * x;
            second += w * x * x;
        }
        assert_relative_eq!(total, 1.0, max_relative = 1e-10);
        assert_relative_eq!(first, 2.0, max_relative = 1e-10);
        assert_relative_eq!(second - first * first, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn far_readout_is_rejected() {
        let s = gauss(0.0, 0.0, 1.0, 0.0);
        let psi = GridWavefunction::init_gaussian(&s, grid_for(&[s]), &C).unwrap();
        assert!(matches!(
            psi.apply_meter(1e6, 0.1),
            Err(Error::NumericRange(_))
        ));
    }

    #[test]
    fn displacement_shifts_means() {
        let s = gauss(0.3, -0.4, 1.2, 0.7);
        let g = grid_for(&[s, s.displaced(-0.2, -0.1)]);
        let psi = GridWavefunction::init_gaussian(&s, g, &C).unwrap();
        // Feedback with xbar = 2, tau = 0.1, t_c = 1: g1 = 1/2, g2 = 1.
        let out = psi.displace(-0.2, -0.1, &C).unwrap();
        let before = psi.observables(&C);
        let after = out.observables(&C);
        assert_relative_eq!(after.mean_x - before.mean_x, -0.2, max_relative = 1e-9);
        assert_relative_eq!(after.mean_p - before.mean_p, -0.1, max_relative = 1e-9);
        assert_relative_eq!(after.var_x, before.var_x, max_relative = 1e-9);
        assert_relative_eq!(after.var_p, before.var_p, max_relative = 1e-9);
        assert_relative_eq!(after.cov_xp, before.cov_xp, max_relative = 1e-9);
    }

    #[test]
    fn gregory_rule_on_half_gaussian() {
        let h = 0.05;
        let f: Vec<f64> = (0..400)
            .map(|j| {
                let x = j as f64 * h;
                x * (-x * x).exp()
            })
            .collect();
        assert_relative_eq!(gregory_half_line(&f, h), 0.5, max_relative = 1e-8);
    }
}
