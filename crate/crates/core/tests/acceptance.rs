//! Acceptance suite. Each test prints one PASS/FAIL line with the measured
//! quantities, then asserts.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use dtc_core::analytic::{self, EnergyBranch, QuadraticDynamics};
use dtc_core::geometry::{self, MetricEngine, MetricModel, MetricRequest};
use dtc_core::hilbert::{self, SpaceSpec, TruncationPolicy};
use dtc_core::metrology::{self, Engine, HomodyneConfig};
use dtc_core::models::{self, ModelParams};
use dtc_core::scaling::{self, Ensemble, FiniteModel, SweepFixed};
use dtc_core::spectra::{self, Observable};

fn report(criterion: &str, pass: bool, detail: String) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn sci(values: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = values.into_iter().map(|v| format!("{v:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(start: Instant, budget: Duration) -> bool {
    start.elapsed() <= budget
}

fn fig_params(n: usize, k: f64, g: f64) -> ModelParams {
    ModelParams::at_g(g, vec![k / n as f64; n], 20.0, 0.1).unwrap()
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    scaling::loglog_slope(&xs, &ys)
}

fn sixth_order_second_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    let (d1, d2, d3) = (d(h), d(h / 2.0), d(h / 4.0));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

#[test]
fn criterion_1_phase_transition_kink() {
    let start = Instant::now();
    let mut worst_mismatch = 0.0f64;
    let mut worst_jump = 0.0f64;
    let mut worst_fd = 0.0f64;
    let mut shape_ok = true;
    for (n, k) in [(5, 4.5), (20, 17.3)] {
        let p = fig_params(n, k, 0.5);
        let k_omega = p.k_sum() * p.qubit_freq;
        let at = |g: f64| analytic::ground_energy_point(&p.with_g(g).unwrap(), EnergyBranch::Approximate);
        let (below, above) = (at(1.0), at(1.0 + 1e-12));
        worst_mismatch = worst_mismatch.max((below.energy - above.energy).abs() / k_omega);
        let jump = below.d2_energy - above.d2_energy;
        worst_jump = worst_jump.max((jump - 2.0 * k_omega).abs() / k_omega);
        for g in [0.5, 0.9, 0.99, 1.01, 1.1, 1.5] {
            let e = |x: f64| at(x).energy;
            let fd = sixth_order_second_difference(e, g, 0.2 * (g - 1.0).abs().min(0.1));
            worst_fd = worst_fd.max((fd - at(g).d2_energy).abs() / k_omega);
        }
        let curve = analytic::ground_energy_curve(
            &p,
            &(0..=100).map(|i| 0.5 + i as f64 * 0.01).collect::<Vec<_>>(),
            EnergyBranch::Approximate,
        )
        .unwrap();
        shape_ok &= curve.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-12 * k_omega);
        shape_ok &= curve.iter().all(|pt| if pt.g <= 1.0 { pt.d2_energy == 0.0 } else { pt.d2_energy < 0.0 });
    }
    let pass = worst_mismatch < 1e-12 && worst_jump < 1e-8 && worst_fd < 1e-8 && shape_ok
        && within(start, Duration::from_secs(1));
    report(
        "1",
        pass,
        format!(
            "branch mismatch {worst_mismatch:.2e}, jump error {worst_jump:.2e}, fd error {worst_fd:.2e}, \
             shape {shape_ok}, {:?}",
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_2_metric_engine_equivalence() {
    let start = Instant::now();
    let gs: Vec<f64> = (0..10)
        .map(|i| 0.5 + 0.05 * i as f64)
        .chain((0..10).map(|i| 1.05 + 0.05 * i as f64))
        .collect();
    let mut worst = 0.0f64;
    let mut slopes = Vec::new();
    for (n, k) in [(5, 4.5), (20, 17.3)] {
        for &g in &gs {
            let p = fig_params(n, k, g);
            let closed = analytic::metric_components(&p).unwrap();
            let model = if g < 1.0 {
                MetricModel::NormalEffective
            } else {
                MetricModel::SuperradiantEffective
            };
            let req = MetricRequest::new(p, model, MetricEngine::SumOverStates).with_cutoff(200);
            let cmp = geometry::engine_comparison(&req).unwrap();
            for m in [cmp.sum_over_states, cmp.overlap_fd] {
                for (a, b) in [(closed.g_ll, m.g_ll), (closed.g_oo, m.g_oo), (closed.g_lo, m.g_lo)] {
                    worst = worst.max((a - b).abs() / a.abs());
                }
            }
        }
        // Close to g = 1 so the subleading |g − 1|⁻¹ qubit term is negligible.
        let near: Vec<f64> = [1e-4, 2e-4, 3e-4].iter().flat_map(|d| [1.0 - d, 1.0 + d]).collect();
        let rows = geometry::metric_divergence_scan(&fig_params(n, k, 0.5), &near, MetricEngine::SumOverStates).unwrap();
        for side in [-1.0, 1.0] {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| (r.g - 1.0).signum() == side)
                .map(|r| ((r.g - 1.0).abs(), r.g_ll))
                .collect();
            slopes.push(slope(&pts));
        }
    }
    let slopes_ok = slopes.iter().all(|s| (s + 2.0).abs() <= 0.05);
    let pass = worst < 0.01 && slopes_ok && within(start, Duration::from_secs(120));
    report(
        "2",
        pass,
        format!("max relative deviation {worst:.2e}, exponents {slopes:.3?}, {:?}", start.elapsed()),
    );
}

#[test]
fn criterion_3_operator_identities() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for g in [0.5, 0.96] {
        let p = ModelParams::at_g(g, vec![1.0], 20.0, 0.1).unwrap();
        let d = QuadraticDynamics::from_params(&p).unwrap();
        worst = worst.max(metrology::operator_identity_check(&d, 64).unwrap().max_residual());
    }
    let pass = worst < 1e-10 && within(start, Duration::from_secs(5));
    report("3", pass, format!("max interior residual {worst:.2e}, {:?}", start.elapsed()));
}

fn qfi_setup() -> (ModelParams, QuadraticDynamics, Complex64) {
    let p = ModelParams::at_g(0.96, vec![1.0], 20.0, 0.1).unwrap();
    let d = QuadraticDynamics::from_params(&p).unwrap();
    (p, d, Complex64::new(0.0, 3.0))
}

#[test]
fn criterion_4a_state_and_generator_qfi_agree() {
    let start = Instant::now();
    let (_, d, xi) = qfi_setup();
    let cutoff = metrology::protocol_cutoff(&d, xi);
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for t in [d.revival_time(1) / 2.0, d.revival_time(1)] {
        let fd = metrology::qfi_numeric(&d, xi, t, Engine::Fock { cutoff }).unwrap().value;
        let generator = metrology::generator_qfi(&d, xi, t, cutoff).unwrap();
        worst = worst.max((fd - generator).abs() / generator);
        values.push((fd, generator));
    }
    let pass = worst < 0.02 && within(start, Duration::from_secs(60));
    report(
        "4a",
        pass,
        format!("state FD vs 4Var[h] {}, max deviation {worst:.2e}, {:?}", sci(values.iter().flat_map(|&(a, b)| [a, b])), start.elapsed()),
    );
}

#[test]
fn criterion_4b_closed_form_qfi_matches() {
    let start = Instant::now();
    let (_, d, xi) = qfi_setup();
    let cutoff = metrology::protocol_cutoff(&d, xi);
    let var_p2 = analytic::var_p2_coherent(xi, analytic::coherent_cutoff(xi)).unwrap();
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for t in [d.revival_time(1) / 2.0, d.revival_time(1)] {
        let generator = metrology::generator_qfi(&d, xi, t, cutoff).unwrap();
        let closed = d.qfi(t, var_p2);
        worst = worst.max((closed - generator).abs() / generator);
        values.push((closed, generator));
    }
    let pass = worst < 0.02 && within(start, Duration::from_secs(60));
    report(
        "4b",
        pass,
        format!("closed form vs 4Var[h] {}, max deviation {worst:.2e}, {:?}", sci(values.iter().flat_map(|&(a, b)| [a, b])), start.elapsed()),
    );
}

#[test]
fn criterion_4c_cramer_rao_bound_holds() {
    let start = Instant::now();
    let (p, _, xi) = qfi_setup();
    let mut points = 0;
    let mut violations = 0;
    for g in [0.8, 0.85, 0.9, 0.93, 0.96] {
        let d = QuadraticDynamics::from_params(&p.with_g(g).unwrap()).unwrap();
        let times: Vec<f64> = (1..=10).map(|k| d.revival_time(2) * k as f64 / 10.0).collect();
        let run = metrology::run_protocol(&d, xi, &times, Engine::Gaussian).unwrap();
        points += times.len();
        violations += run.cramer_rao_violations(1e-6).len();
    }
    let pass = points == 50 && violations == 0 && within(start, Duration::from_secs(60));
    report(
        "4c",
        pass,
        format!("{violations} violations over {points} (g, t) points, {:?}", start.elapsed()),
    );
}

#[test]
fn criterion_5_inverted_variance() {
    let start = Instant::now();
    let (_, d, xi) = qfi_setup();
    let tau = d.revival_time(1);
    let cutoff = metrology::protocol_cutoff(&d, xi);
    let numeric = metrology::inverted_variance_numeric(&d, xi, tau, Engine::Fock { cutoff }).unwrap().value;
    let closed = d.inverted_variance(xi, 1);
    let match_err = (numeric - closed).abs() / closed;

    let shifted = Complex64::new(1.0, 3.0);
    let cutoff_shifted = metrology::protocol_cutoff(&d, shifted);
    let with_real = metrology::inverted_variance_numeric(&d, shifted, tau, Engine::Fock { cutoff: cutoff_shifted })
        .unwrap()
        .value;
    let real_err = (with_real - numeric).abs() / numeric;

    let pts: Vec<(f64, f64)> = [1e-4, 2e-4, 5e-4, 1e-3]
        .iter()
        .map(|&a| {
            let dd = QuadraticDynamics::new(a, 0.1).unwrap();
            let i = metrology::inverted_variance_numeric(&dd, xi, dd.revival_time(1), Engine::Gaussian)
                .unwrap()
                .value;
            (a, i)
        })
        .collect();
    let s = slope(&pts);
    let pass = match_err < 0.02 && real_err < 1e-4 && (s + 3.0).abs() <= 0.1 && within(start, Duration::from_secs(60));
    report(
        "5",
        pass,
        format!(
            "numeric {numeric:.6e} vs closed {closed:.6e} ({match_err:.2e}), real-part shift {real_err:.2e}, \
             slope {s:.4}, {:?}",
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_6_effective_model_validity() {
    let start = Instant::now();
    let p = ModelParams::homogeneous(2, 10.0, 0.0, 0.1).unwrap().with_g(0.5).unwrap();
    let policy = TruncationPolicy::default();
    let betas = [10.0, 30.0, 100.0];
    let energy = spectra::spectral_agreement(&p, &betas, Observable::GroundEnergy, 128, &policy).unwrap();
    let errors: Vec<f64> = energy.iter().map(|r| r.abs_error).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let gap = spectra::spectral_agreement(&p, &[100.0], Observable::Gap, 128, &policy).unwrap();
    let gap_err = gap[0].rel_error;
    let pass = monotone && gap_err < 0.05 && within(start, Duration::from_secs(120));
    report(
        "6",
        pass,
        format!("energy errors {}, gap error at beta=100 {gap_err:.3e}, {:?}", sci(errors.iter().copied()), start.elapsed()),
    );
}

#[test]
fn criterion_7_scaling_trends() {
    let start = Instant::now();
    let i1 = Complex64::new(0.0, 1.0);
    let fixed = SweepFixed {
        g: 0.96,
        squeezing: 0.1,
        xi: i1,
    };
    let hp = FiniteModel::HolsteinPrimakoff;

    // Regression anchor: one qubit through the collective map is the full model.
    let anchor = |m| scaling::finite_inverted_variance(m, Ensemble::identical(1), &fixed, 1e3).unwrap().numeric;
    let (full1, hp1) = (anchor(FiniteModel::Full), anchor(hp));
    let anchor_err = (full1 - hp1).abs() / full1;

    let large = [1e3, 1e4, 1e5];
    let by_beta = scaling::ratio_vs_beta(hp, &fixed, &[i1], &[Ensemble::identical(4), Ensemble::identical(8)], &large)
        .unwrap();
    let beta_ok = [4, 8].iter().all(|&n| by_beta.series(n, i1).windows(2).all(|w| w[1].1 > w[0].1));

    let by_n = scaling::ratio_vs_n(&fixed, &[4, 8, 16], &[1e3, 1e4]).unwrap();
    let n_ok = [1e3, 1e4].iter().all(|&b| {
        let r: Vec<f64> = by_n.points.iter().filter(|p| p.beta == b).map(|p| p.ratio).collect();
        r.windows(2).all(|w| w[1] > w[0])
    });

    let xis = [Complex64::new(0.0, 0.5), i1, Complex64::new(0.0, 2.0)];
    let by_xi = scaling::ratio_vs_beta(hp, &fixed, &xis, &[Ensemble::identical(4)], &[1e3]).unwrap();
    let xi_ratios: Vec<f64> = by_xi.points.iter().map(|p| p.ratio).collect();
    let xi_ok = xi_ratios.windows(2).all(|w| w[1] < w[0]);

    let band_ok = [&by_beta, &by_n, &by_xi].iter().all(|r| r.out_of_band().is_empty());

    let grid_start = Instant::now();
    let grid = scaling::ratio_vs_n(&fixed, &[1, 2, 4, 8, 12, 16, 20], &[10.0, 20.0, 40.0]).unwrap();
    let grid_time = grid_start.elapsed();
    let grid_band_ok = grid.out_of_band().is_empty();

    let pass = anchor_err < 1e-10 && beta_ok && n_ok && xi_ok && band_ok && grid_band_ok
        && grid_time <= Duration::from_secs(600);
    let series = |run: &scaling::ScalingRun| run.points.iter().map(|p| (p.n_qubits, p.beta, p.ratio)).collect::<Vec<_>>();
    report(
        "7",
        pass,
        format!(
            "anchor {anchor_err:.2e}; ratio vs beta {:.4?} ({beta_ok}); vs N {:.4?} ({n_ok}); \
             vs |xi| {xi_ratios:.4?} ({xi_ok}); band {band_ok}/{grid_band_ok}; \
             grid {:.4?} in {grid_time:?}; total {:?}",
            series(&by_beta),
            series(&by_n),
            series(&grid),
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_8_homodyne_pipeline() {
    let start = Instant::now();
    let (_, d, xi) = qfi_setup();
    let tau = d.revival_time(1);
    let cfg = HomodyneConfig::new(1_000_000, 2024);
    let a = metrology::homodyne_estimate(&d, xi, tau, &cfg).unwrap();
    let b = metrology::homodyne_estimate(&d, xi, tau, &cfg).unwrap();
    let reference = metrology::homodyne_reference(&d, xi, tau, &cfg).unwrap();
    let err = (a.inverted_variance - reference).abs() / reference;
    let bitwise = a.inverted_variance.to_bits() == b.inverted_variance.to_bits()
        && a.mean_x.to_bits() == b.mean_x.to_bits()
        && a.var_x.to_bits() == b.var_x.to_bits();
    let pass = err < 0.05 && bitwise && within(start, Duration::from_secs(60));
    report(
        "8",
        pass,
        format!(
            "sampled {:.6e} vs deterministic {reference:.6e} ({err:.2e}), bitwise repeat {bitwise}, {:?}",
            a.inverted_variance,
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_9_symmetries() {
    let start = Instant::now();
    let s = SpaceSpec::qubits(40, 3).unwrap();
    let parity = hilbert::parity_operator(s);
    let excitations = hilbert::excitation_operator(s);
    let commutator_norm = |p: &ModelParams, op: &hilbert::TruncatedOperator| {
        let h = models::full_hamiltonian(p, s).unwrap();
        h.commutator(op).max_abs_interior(36)
    };
    let squeezed = ModelParams::new(1.0, 5.0, 0.8, 0.1, vec![1.0, 0.7, 1.3]).unwrap();
    let plain = ModelParams::new(1.0, 5.0, 0.8, 0.0, vec![1.0, 0.7, 1.3]).unwrap();
    let parity_res = commutator_norm(&squeezed, &parity).max(commutator_norm(&plain, &parity));
    let u1_squeezed = commutator_norm(&squeezed, &excitations);
    let u1_plain = commutator_norm(&plain, &excitations);
    let u1_ok = u1_plain < 1e-12 && u1_squeezed > 1e-3;

    let mut curvature = 0.0f64;
    for (g, model) in [
        (0.6, MetricModel::NormalEffective),
        (0.9, MetricModel::NormalEffective),
        (1.2, MetricModel::SuperradiantEffective),
        (1.4, MetricModel::SuperradiantEffective),
    ] {
        let req = MetricRequest::new(fig_params(5, 4.5, g), model, MetricEngine::OverlapFd);
        curvature = curvature.max(geometry::berry_curvature_fd(&req).unwrap().abs());
    }
    let full = ModelParams::uniform(2, 2.0, 10.0, 0.0, 0.1).unwrap().with_g(0.8).unwrap();
    let req = MetricRequest::new(full, MetricModel::Full, MetricEngine::OverlapFd).with_cutoff(40);
    curvature = curvature.max(geometry::berry_curvature_fd(&req).unwrap().abs());

    let pass = parity_res < 1e-12 && u1_ok && curvature < 1e-8 && within(start, Duration::from_secs(10));
    report(
        "9",
        pass,
        format!(
            "parity commutator {parity_res:.2e}, U(1) commutator {u1_plain:.2e} (G=0) / {u1_squeezed:.2e} (G>0), \
             max |Berry curvature| {curvature:.2e}, {:?}",
            start.elapsed()
        ),
    );
}
