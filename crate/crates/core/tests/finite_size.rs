use num_complex::Complex64;

use dtc_core::geometry;
use dtc_core::models::ModelParams;
use dtc_core::scaling::{self, Ensemble, FiniteModel, SweepFixed};
use dtc_core::spectra;

#[test]
fn full_metric_approaches_effective_as_beta_grows() {
    let p = ModelParams::homogeneous(2, 20.0, 0.0, 0.1).unwrap().with_g(0.6).unwrap();
    let rows = geometry::full_effective_residual(&p, &[20.0, 50.0, 100.0, 200.0], 60).unwrap();
    let dev: Vec<f64> = rows.iter().map(|r| r.rel_dev_ll.abs()).collect();
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
    assert!(dev[3] < 0.1, "{dev:?}");
}

#[test]
fn quartic_correction_improves_ground_energy() {
    let p = ModelParams::homogeneous(3, 30.0, 0.0, 0.1).unwrap().with_g(0.6).unwrap();
    let c = spectra::quartic_comparison(&p, 60).unwrap();
    assert!(
        (c.corrected - c.full).abs() < (c.uncorrected - c.full).abs(),
        "{c:?}"
    );
}

#[test]
fn both_small_n_models_are_reported() {
    let xi = Complex64::new(0.0, 1.0);
    let fixed = SweepFixed { g: 0.96, squeezing: 0.1, xi };
    let ens = [Ensemble::identical(1), Ensemble::identical(2)];
    let full = scaling::ratio_vs_beta(FiniteModel::Full, &fixed, &[xi], &ens, &[1e3]).unwrap();
    let corrected = scaling::ratio_vs_beta(FiniteModel::Corrected, &fixed, &[xi], &ens, &[1e3]).unwrap();
    for run in [&full, &corrected] {
        assert_eq!(run.points.len(), 2);
        assert!(run.out_of_band().is_empty(), "{run:?}");
        assert!(run.calibration.rel_error < scaling::CALIBRATION_TOL);
    }
    // More qubits at the same β bring the full model closer to the ideal one.
    assert!(full.points[1].ratio > full.points[0].ratio, "{full:?}");
}

#[test]
fn sweep_results_do_not_depend_on_thread_count() {
    let xi = Complex64::new(0.0, 1.0);
    let fixed = SweepFixed { g: 0.9, squeezing: 0.1, xi };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scaling::ratio_vs_n(&fixed, &[1, 3], &[200.0, 500.0]).unwrap())
    };
    let (a, b) = (run(1), run(3));
    let bits = |r: &scaling::ScalingRun| r.points.iter().map(|p| p.numeric.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}
