//! Path lengths at varying resolution and Hausdorff-dimension fits.
//!
//! The Hausdorff length `L = l * dx^(d-1)` is resolution independent exactly when
//! `l ~ dx^(1-d)`, so `d = 1 - slope` of `ln l` against `ln dx`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_state::{positive_finite, Constants};
use crate::nonselective::SchedulePoint;
use crate::selective::TrajectoryRecord;

/// Resolutions swept at fixed `b_scale = hbar t / (2 m dx^2)` over a total time `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionSchedule {
    dx_values: Vec<f64>,
    b_scale: f64,
    total_time: f64,
}

impl ResolutionSchedule {
    /// `dx_values` are sorted into decreasing order. With `total_time = None` the
    /// longest interval of the schedule is used.
    pub fn new(
        mut dx_values: Vec<f64>,
        b_scale: f64,
        total_time: Option<f64>,
        c: &Constants,
    ) -> Result<Self> {
        if dx_values.is_empty() {
            return Err(Error::invalid("dx", "schedule is empty"));
        }
        for &dx in &dx_values {
            positive_finite("dx", dx)?;
        }
        positive_finite("b_scale", b_scale)?;
        dx_values.sort_by(|a, b| b.total_cmp(a));
        if dx_values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(
                "dx",
                "schedule contains repeated resolutions",
            ));
        }
        let longest = interval_for(dx_values[0], b_scale, c);
        let total_time = total_time.unwrap_or(longest);
        positive_finite("T", total_time)?;
        if longest > total_time * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "T",
                format!("total time {total_time} is shorter than the longest interval {longest}"),
            ));
        }
        Ok(ResolutionSchedule {
            dx_values,
            b_scale,
            total_time,
        })
    }

    /// `points` resolutions spaced evenly in `ln dx` between `dx_max` and `dx_min`.
    pub fn log_range(
        dx_max: f64,
        dx_min: f64,
        points: usize,
        b_scale: f64,
        total_time: Option<f64>,
        c: &Constants,
    ) -> Result<Self> {
        ResolutionSchedule::new(log_space(dx_max, dx_min, points)?, b_scale, total_time, c)
    }

    pub fn dx_values(&self) -> &[f64] {
        &self.dx_values
    }

    pub fn b_scale(&self) -> f64 {
        self.b_scale
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn interval(&self, dx: f64, c: &Constants) -> f64 {
        interval_for(dx, self.b_scale, c)
    }

    pub fn points(&self, c: &Constants) -> Vec<SchedulePoint> {
        self.dx_values
            .iter()
            .map(|&dx| SchedulePoint {
                dx,
                t: self.interval(dx, c),
            })
            .collect()
    }
}

/// `t(dx) = 2 m b_scale dx^2 / hbar`.
pub fn interval_for(dx: f64, b_scale: f64, c: &Constants) -> f64 {
    2.0 * c.mass * b_scale * dx * dx / c.hbar
}

/// Geometric sequence from `first` to `last` (inclusive).
pub fn log_space(first: f64, last: f64, points: usize) -> Result<Vec<f64>> {
    positive_finite("dx", first)?;
    positive_finite("dx", last)?;
    if points < 2 {
        return Err(Error::invalid("points", "need at least 2"));
    }
    let (l0, l1) = (first.ln(), last.ln());
    Ok((0..points)
        .map(|i| {
            if i == points - 1 {
                last
            } else if i == 0 {
                first
            } else {
                (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

/// Which trace of a trajectory is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathSource {
    /// Recorded meter readouts (what an experimenter has).
    #[default]
    Outcomes,
    /// Latent conditional packet centres.
    Means,
}

/// Polyline length `sum |x_{r+1} - x_r|`.
pub fn path_length(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid(
            "record",
            format!("need at least 2 samples, got {}", values.len()),
        ));
    }
    let l: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if !l.is_finite() {
        return Err(Error::NumericRange(format!("path length is {l}")));
    }
    Ok(l)
}

/// Length of the path traced by the recorded readouts.
pub fn path_length_sampled(record: &TrajectoryRecord) -> Result<f64> {
    path_length(&record.outcomes)
}

pub fn path_length_from(record: &TrajectoryRecord, source: PathSource) -> Result<f64> {
    match source {
        PathSource::Outcomes => path_length(&record.outcomes),
        PathSource::Means => path_length(&record.means()),
    }
}

/// `L = l * dx^(d-1)`.
pub fn hausdorff_length(l: f64, dx: f64, d: f64) -> f64 {
    l * dx.powf(d - 1.0)
}

/// Residual above which a fit is treated as not describing a single power law.
pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub residual_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            residual_threshold: DEFAULT_RESIDUAL_THRESHOLD,
        }
    }
}

/// Least-squares fit of `ln l = slope * ln dx + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionFit {
    pub d: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in `ln l`.
    pub residual: f64,
    /// Two-point dimensions between neighbouring resolutions, keyed by their geometric mean.
    pub local_d: Vec<(f64, f64)>,
    pub n_points: usize,
    /// `residual <= threshold`; otherwise only `local_d` is meaningful.
    pub well_defined: bool,
}

pub fn fit_dimension(points: &[(f64, f64)]) -> Result<DimensionFit> {
    fit_dimension_with(points, FitOptions::default())
}

pub fn fit_dimension_with(points: &[(f64, f64)], options: FitOptions) -> Result<DimensionFit> {
    if points.len() < 3 {
        return Err(Error::invalid(
            "points",
            format!("need at least 3 (dx, l) pairs, got {}", points.len()),
        ));
    }
    for &(dx, l) in points {
        positive_finite("dx", dx)?;
        positive_finite("l", l)?;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(dx, l)| (dx.ln(), l.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * n {
        return Err(Error::invalid("dx", "all resolutions are equal"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = logs
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let residual = (ss / n).sqrt();

    let local_d = points
        .windows(2)
        .filter(|w| w[0].0 != w[1].0)
        .map(|w| {
            let (dx0, l0) = w[0];
            let (dx1, l1) = w[1];
            let d = 1.0 - (l1.ln() - l0.ln()) / (dx1.ln() - dx0.ln());
            ((dx0 * dx1).sqrt(), d)
        })
        .collect();

    Ok(DimensionFit {
        d: 1.0 - slope,
        slope,
        intercept,
        residual,
        local_d,
        n_points: points.len(),
        well_defined: residual <= options.residual_threshold,
    })
}

/// Writes a `dx,l` table; `#` lines carry free-form metadata.
pub fn write_length_table<W: Write>(
    points: &[(f64, f64)],
    comment: &str,
    mut out: W,
) -> Result<()> {
    for line in comment.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "dx,l")?;
    for (dx, l) in points {
        writeln!(out, "{dx},{l}")?;
    }
    Ok(())
}

/// Reads a table written by [`write_length_table`].
pub fn read_length_table<R: BufRead>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            seen_header = true;
            if line.replace(' ', "") == "dx,l" {
                continue;
            }
        }
        let mut fields = line.split(',').map(str::trim);
        let parse = |f: Option<&str>| -> Result<f64> {
            f.and_then(|v| v.parse().ok()).ok_or_else(|| {
                Error::Config(format!("line {}: expected `dx,l`, got `{line}`", no + 1))
            })
        };
        let dx = parse(fields.next())?;
        let l = parse(fields.next())?;
        rows.push((dx, l));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn power_law(c: f64, exponent: f64, dxs: &[f64]) -> Vec<(f64, f64)> {
        dxs.iter().map(|&dx| (dx, c * dx.powf(exponent))).collect()
    }

    #[test]
    fn path_length_examples() {
        assert_eq!(path_length(&[0.0, 3.0]).unwrap(), 3.0);
        assert_eq!(path_length(&[0.0, 1.0, 2.0, 3.0]).unwrap(), 3.0);
        assert_eq!(path_length(&[0.0, 1.0, -1.0]).unwrap(), 3.0);
        assert!(path_length(&[1.0]).is_err());
        assert!(path_length(&[]).is_err());
    }

    #[test]
    fn gaussian_increment_path_length() {
        let (n, s) = (100_000usize, 0.7);
        let normal = Normal::new(0.0, s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = vec![0.0];
        for _ in 0..n {
            let last = *x.last().unwrap();
            x.push(last + normal.sample(&mut rng));
        }
        let l = path_length(&x).unwrap();
        let mean_abs = s * (2.0 / std::f64::consts::PI).sqrt();
        let sd_abs = s * (1.0 - 2.0 / std::f64::consts::PI).sqrt();
        assert!((l - n as f64 * mean_abs).abs() < 3.0 * sd_abs * (n as f64).sqrt());
    }

    #[test]
    fn hausdorff_length_examples() {
        assert_eq!(hausdorff_length(3.5, 0.2, 1.0), 3.5);
        let koch = 4f64.ln() / 3f64.ln();
        assert_relative_eq!(koch, 1.26186, max_relative = 1e-5);
        let (l, dx) = (2.0, 0.9);
        assert_relative_eq!(
            hausdorff_length(l, dx, koch),
            hausdorff_length(4.0 / 3.0 * l, dx / 3.0, koch),
            max_relative = 1e-14
        );
        for dx in [0.1, 1.0, 10.0] {
            assert_relative_eq!(
                hausdorff_length(5.0 / dx, dx, 2.0),
                5.0,
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn fit_examples() {
        let dxs = log_space(10.0, 0.01, 7).unwrap();
        let fit = fit_dimension(&power_law(3.0, -1.0, &dxs)).unwrap();
        assert_relative_eq!(fit.d, 2.0, epsilon = 1e-12);
        assert!(fit.residual < 1e-12 && fit.well_defined);
        assert_relative_eq!(
            fit_dimension(&power_law(3.0, 0.0, &dxs)).unwrap().d,
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            fit_dimension(&power_law(3.0, 1.0, &dxs)).unwrap().d,
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(fit_dimension(&[(1.0, 1.0), (0.5, 2.0)]).is_err());
        assert!(fit_dimension(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(fit_dimension(&[(1.0, 1.0), (0.5, 0.0), (0.2, 3.0)]).is_err());
    }

    #[test]
    fn broken_power_law_is_flagged() {
        let dxs = log_space(100.0, 0.01, 9).unwrap();
        let pts: Vec<(f64, f64)> = dxs
            .iter()
            .map(|&dx| (dx, if dx > 1.0 { 1.0 } else { 1.0 / dx }))
            .collect();
        let fit = fit_dimension(&pts).unwrap();
        assert!(!fit.well_defined, "residual {}", fit.residual);
        let strict = fit_dimension_with(
            &pts,
            FitOptions {
                residual_threshold: 1.0,
            },
        )
        .unwrap();
        assert!(strict.well_defined);
    }

    #[test]
    fn schedule_orders_and_checks() {
        let c = Constants::NATURAL;
        let s = ResolutionSchedule::new(vec![0.1, 1.0, 0.5], 0.5, None, &c).unwrap();
        assert_eq!(s.dx_values(), &[1.0, 0.5, 0.1]);
        assert_relative_eq!(s.total_time(), 1.0);
        assert_relative_eq!(s.points(&c)[2].t, 0.01, max_relative = 1e-14);
        assert!(ResolutionSchedule::new(vec![1.0, 0.5], 0.5, Some(0.5), &c).is_err());
        assert!(ResolutionSchedule::new(vec![1.0, 1.0], 0.5, None, &c).is_err());
        assert!(ResolutionSchedule::new(vec![1.0, -1.0], 0.5, None, &c).is_err());
        assert!(ResolutionSchedule::new(vec![1.0], 0.0, None, &c).is_err());
    }

    #[test]
    fn length_table_round_trip() {
        let pts = vec![(1.0, 2.5), (0.1, 25.000000000000004)];
        let mut buf = Vec::new();
        write_length_table(&pts, "source: test", &mut buf).unwrap();
        let back = read_length_table(buf.as_slice()).unwrap();
        assert_eq!(back, pts);
        assert!(read_length_table("dx,l\n1.0,abc\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn scaling_l_or_dx_only_moves_intercept(
            exponent in -2.0..2.0f64, c in 0.01..100.0f64, k in 0.01..100.0f64, noise in proptest::collection::vec(-0.05..0.05f64, 6)
        ) {
            let dxs = log_space(5.0, 0.005, 6).unwrap();
            let pts: Vec<(f64, f64)> = dxs.iter().zip(&noise).map(|(&dx, e)| (dx, c * dx.powf(exponent) * e.exp())).collect();
            let base = fit_dimension(&pts).unwrap();
            let scaled_l: Vec<_> = pts.iter().map(|&(dx, l)| (dx, k * l)).collect();
            let scaled_dx: Vec<_> = pts.iter().map(|&(dx, l)| (k * dx, l)).collect();
            prop_assert!((fit_dimension(&scaled_l).unwrap().d - base.d).abs() < 1e-9);
            prop_assert!((fit_dimension(&scaled_dx).unwrap().d - base.d).abs() < 1e-9);
        }

        #[test]
        fn exact_power_law_is_self_consistent(exponent in -2.0..2.0f64, c in 0.01..100.0f64) {
            let dxs = log_space(3.0, 0.003, 8).unwrap();
            let pts = power_law(c, exponent, &dxs);
            let fit = fit_dimension(&pts).unwrap();
            for &(_, d) in &fit.local_d {
                prop_assert!((d - fit.d).abs() < 1e-10);
            }
            let l0 = hausdorff_length(pts[0].1, pts[0].0, fit.d);
            for &(dx, l) in &pts {
                prop_assert!((hausdorff_length(l, dx, fit.d) - l0).abs() <= 1e-10 * l0);
            }
        }
    }
}
