use std::f64::consts::PI;

use dualrail::bell::{analytic_correlation, correlation_curve, discriminate, threshold_sweep, BellConfig};
use dualrail::fock::{FockCutoff, ModelSpec};
use dualrail::sampler::{PhaseSchedule, QuadratureSampler};

fn model(eta: f64, eta_det: f64, t2: f64) -> ModelSpec {
    ModelSpec::new(eta, eta_det, t2, FockCutoff::DEFAULT).unwrap()
}

#[test]
fn monte_carlo_matches_analytic_correlation() {
    let combos = [
        (model(0.64, 0.86, 0.5), 0.0, 0.0),
        (model(0.64, 0.86, 0.5), 0.85, 0.0),
        (model(0.64, 0.86, 0.5), 0.85, PI),
        (model(0.64, 0.86, 0.5), 0.5, 1.0),
        (model(0.64, 0.86, 0.5), 1.2, 2.2),
        (model(0.64, 1.0, 0.5), 0.54, 0.0),
        (model(0.64, 1.0, 0.5), 0.85, 0.6),
        (model(0.64, 1.0, 0.5), 0.3, PI / 2.0),
        (model(0.64, 0.86, 0.08), 0.0, 0.0),
        (model(0.64, 0.86, 0.08), 0.85, PI),
        (model(0.64, 0.86, 0.08), 0.4, 4.0),
        (model(1.0, 1.0, 0.5), 0.0, 0.0),
        (model(1.0, 1.0, 0.5), 0.85, 0.3),
        (model(1.0, 1.0, 0.5), 1.5, PI),
        (model(1.0, 1.0, 0.3), 0.7, 5.5),
        (model(0.3, 0.9, 0.7), 0.0, 0.0),
        (model(0.3, 0.9, 0.7), 0.6, PI),
        (model(0.3, 0.9, 0.7), 1.0, 1.7),
        (model(0.8, 0.7, 0.2), 0.2, 0.0),
        (model(0.8, 0.7, 0.2), 0.9, 3.0),
    ];
    for (i, (m, t, dt)) in combos.iter().enumerate() {
        let data = QuadratureSampler::for_model(m).unwrap().sample(200_000, PhaseSchedule::Fixed(*dt), 500 + i as u64);
        let products: Vec<f64> =
            data.iter().filter_map(|s| discriminate(s, *t)).map(|(a, b)| (a * b) as f64).collect();
        let n = products.len() as f64;
        let e = products.iter().sum::<f64>() / n;
        let se = ((1.0 - e * e) / n).sqrt();
        let want = analytic_correlation(m, *t, *dt).unwrap();
        assert!((e - want).abs() < 3.0 * se, "combo {i}: MC {e} ± {se}, analytic {want}");
    }
}

#[test]
fn data_sweep_retention_is_nested() {
    let m = ModelSpec::symmetric_experiment();
    let data = QuadratureSampler::for_model(&m).unwrap().sample(200_000, PhaseSchedule::Sweep, 2);
    let ts: Vec<f64> = (0..=6).map(|i| 0.2 * i as f64).collect();
    let rows = threshold_sweep(&data, 24, &ts).unwrap();
    assert_eq!(rows.len(), ts.len());
    for w in rows.windows(2) {
        assert!(w[1].retained_fraction < w[0].retained_fraction);
    }
}

#[test]
fn fitted_amplitude_tracks_phase_offset_convention() {
    let m = model(1.0, 1.0, 0.5);
    let data = QuadratureSampler::for_model(&m).unwrap().sample(400_000, PhaseSchedule::Sweep, 6);
    let c = correlation_curve(&data, &BellConfig::new(0.0, 24).unwrap()).unwrap();
    assert!((c.amplitude - 2.0 / PI).abs() < 0.01, "{}", c.amplitude);
    // E ∝ −cos δθ, so the fitted offset sits at 0 (mod 2π).
    let off = c.phase_offset.min(2.0 * PI - c.phase_offset);
    assert!(off < 0.05, "{}", c.phase_offset);
}
