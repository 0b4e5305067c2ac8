//! A full feedback step (free motion, readout collapse, displacement kicks) on the
//! position grid against the closed-form step.

use qpath::gaussian_state::{free_evolve, outcome_pdf, Constants, GaussianState, MeterConfig};
use qpath::oracle_grid::{GridSpec, GridWavefunction, DEFAULT_EXTENT_SIGMAS};
use qpath::selective::{step_with_outcome, trajectory_rng, FeedbackConfig};
use rand::Rng;

#[test]
fn feedback_step_matches_grid() {
    let c = Constants::new(1.3, 0.8).unwrap();
    for i in 0..20 {
        let mut rng = trajectory_rng(77, i);
        let s = GaussianState::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5..3.0),
            rng.random_range(-1.0..1.0),
        )
        .unwrap();
        let meter =
            MeterConfig::new(rng.random_range(0.5..5.0), rng.random_range(0.05..0.5)).unwrap();
        let fb = FeedbackConfig::new(rng.random_range(0.5..2.0)).unwrap();
        let prime = free_evolve(&s, meter.tau, &c).unwrap();
        let outcome = outcome_pdf(&prime, meter.sigma).sample(&mut rng);
        let want = step_with_outcome(&s, &meter, Some(&fb), outcome, &c).unwrap();

        // kicks written out: position -tau xbar / t_c, momentum -tau xbar m / (2 t_c^2)
        let dx = -meter.tau * outcome / fb.t_c;
        let dp = -meter.tau * outcome * c.mass / (2.0 * fb.t_c * fb.t_c);
        let spec = GridSpec::covering(&[s, prime, want], &c, 4096, DEFAULT_EXTENT_SIGMAS).unwrap();
        let psi = GridWavefunction::init_gaussian(&s, spec, &c).unwrap();
        let (collapsed, _) = psi
            .propagate_free(meter.tau, &c)
            .unwrap()
            .apply_meter(outcome, meter.sigma)
            .unwrap();
        let got = collapsed
            .displace(dx, dp, &c)
            .unwrap()
            .observables(&c)
            .gaussian_parameters(&c);

        let scale_x = want.var_x().sqrt();
        let scale_p = want.var_p(&c).sqrt();
        assert!(
            (got.a - want.a).abs() / scale_x < 1e-8,
            "{i}: a {} vs {}",
            got.a,
            want.a
        );
        assert!(
            (got.b_mom - want.b_mom).abs() / scale_p < 1e-8,
            "{i}: b {} vs {}",
            got.b_mom,
            want.b_mom
        );
        assert!((got.delta / want.delta - 1.0).abs() < 1e-8, "{i}: delta");
        assert!((got.eps - want.eps).abs() < 1e-8, "{i}: eps");
    }
}
