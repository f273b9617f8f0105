//! Oracle suites run by `dtc verify`.

use clap::ValueEnum;
use num_complex::Complex64;

use dtc_core::analytic::{self, EnergyBranch, QuadraticDynamics};
use dtc_core::geometry::{self, MetricEngine, MetricModel, MetricRequest};
use dtc_core::hilbert::{self, SpaceSpec};
use dtc_core::metrology::{self, Engine};
use dtc_core::models::{self, ModelParams};
use dtc_core::scaling::{self, Ensemble, FiniteModel, QuarticObservable, SweepFixed};
use dtc_core::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Operators,
    Phases,
    Geometry,
    Metrology,
    Scaling,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub limit: f64,
}

impl Check {
    fn below(name: &'static str, measured: f64, limit: f64) -> Self {
        Self { name, measured, limit }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.limit
    }
}

fn fig_params(g: f64) -> ModelParams {
    ModelParams::at_g(g, vec![0.9; 5], 20.0, 0.1).expect("fixed parameters are valid")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn run(suite: Suite) -> Result<Vec<Check>> {
    match suite {
        Suite::Operators => operators(),
        Suite::Phases => phases(),
        Suite::Geometry => geometry_suite(),
        Suite::Metrology => metrology_suite(),
        Suite::Scaling => scaling_suite(),
    }
}

fn operators() -> Result<Vec<Check>> {
    let s = SpaceSpec::boson(64)?;
    let (a, ad) = (hilbert::annihilation(s), hilbert::creation(s));
    let canonical = (&a.commutator(&ad) - &hilbert::TruncatedOperator::identity(s)).max_abs_interior(60);

    let hp = SpaceSpec::holstein_primakoff(32, 4)?;
    let (jp, jm) = (hilbert::collective_jplus(hp)?, hilbert::collective_jminus(hp)?);
    let su2 = (&jp.commutator(&jm) - &hilbert::collective_jz(hp)?.scale(2.0)).max_abs_interior(28);

    let qs = SpaceSpec::qubits(32, 3)?;
    let p = ModelParams::new(1.0, 5.0, 0.8, 0.1, vec![1.0, 0.7, 1.3])?;
    let parity = models::full_hamiltonian(&p, qs)?
        .commutator(&hilbert::parity_operator(qs))
        .max_abs_interior(32);

    let d = QuadraticDynamics::from_params(&fig_params(0.96))?;
    let ids = metrology::operator_identity_check(&d, 64)?;
    Ok(vec![
        Check::below("[a, a+] - 1 (interior)", canonical, 1e-10),
        Check::below("[J+, J-] - 2Jz (interior)", su2, 1e-10),
        Check::below("[H, parity]", parity, 1e-10),
        Check::below("A = -4G(XP+PX)", ids.a_residual, 1e-10),
        Check::below("B closed form", ids.b_residual, 1e-10),
        Check::below("[H,[H,[H0',H1']]] = Delta [H0',H1']", ids.nested_residual, 1e-10),
        Check::below("ladder eigenoperator", ids.ladder_residual, 1e-10),
    ])
}

fn phases() -> Result<Vec<Check>> {
    let p = fig_params(0.5);
    let ko = p.k_sum() * p.qubit_freq;
    let at = |g: f64| -> Result<_> { Ok(analytic::ground_energy_point(&p.with_g(g)?, EnergyBranch::Approximate)) };
    let (below, above) = (at(1.0)?, at(1.0 + 1e-12)?);
    let continuity = (below.energy - above.energy).abs() / ko;
    let jump = ((below.d2_energy - above.d2_energy) - 2.0 * ko).abs() / ko;
    let mut fd = 0.0f64;
    for g in [0.7, 1.3] {
        let h = 1e-3;
        let e = |x: f64| at(x).map(|pt| pt.energy);
        let d2 = (e(g + h)? - 2.0 * e(g)? + e(g - h)?) / (h * h);
        fd = fd.max((d2 - at(g)?.d2_energy).abs() / ko);
    }
    let q = analytic::phase_quantities(&p);
    let expected_eps = 2.0 * (q.alpha * (q.alpha + 0.2)).sqrt();
    Ok(vec![
        Check::below("E_G branch mismatch at g = 1", continuity, 1e-12),
        Check::below("curvature jump - 2K Omega", jump, 1e-8),
        Check::below("closed-form vs FD curvature", fd, 1e-5),
        Check::below("excitation energy", rel(q.epsilon, expected_eps), 1e-12),
    ])
}

fn geometry_suite() -> Result<Vec<Check>> {
    let normal = MetricRequest::new(fig_params(0.8), MetricModel::NormalEffective, MetricEngine::SumOverStates);
    let sr = MetricRequest::new(fig_params(1.3), MetricModel::SuperradiantEffective, MetricEngine::SumOverStates);
    let full_p = ModelParams::uniform(2, 2.0, 10.0, 0.0, 0.1)?.with_g(0.8)?;
    let full = MetricRequest::new(full_p, MetricModel::Full, MetricEngine::SumOverStates).with_cutoff(40);
    let closed = analytic::metric_components(&fig_params(0.8))?;
    let sos = geometry::compute_metric(&normal)?;
    let curvature = geometry::berry_curvature_fd(&normal.clone().with_engine(MetricEngine::OverlapFd))?;
    Ok(vec![
        Check::below("engines, normal effective", geometry::engine_comparison(&normal)?.max_rel_delta, 1e-4),
        Check::below("engines, superradiant effective", geometry::engine_comparison(&sr)?.max_rel_delta, 1e-4),
        Check::below("engines, full model", geometry::engine_comparison(&full)?.max_rel_delta, 1e-4),
        Check::below("closed form vs sum over states", rel(sos.g_ll, closed.g_ll), 1e-4),
        Check::below("|Berry curvature|", curvature.abs(), 1e-8),
    ])
}

fn metrology_suite() -> Result<Vec<Check>> {
    let xi = Complex64::new(0.0, 3.0);
    let mut violations = 0;
    for g in [0.8, 0.85, 0.9, 0.93, 0.96] {
        let d = QuadraticDynamics::from_params(&fig_params(g))?;
        let times: Vec<f64> = (1..=10).map(|k| d.revival_time(2) * k as f64 / 10.0).collect();
        violations += metrology::run_protocol(&d, xi, &times, Engine::Gaussian)?
            .cramer_rao_violations(1e-6)
            .len();
    }
    let d = QuadraticDynamics::from_params(&fig_params(0.96))?;
    let tau = d.revival_time(1);
    let cutoff = metrology::protocol_cutoff(&d, xi);
    let fd = metrology::qfi_numeric(&d, xi, tau, Engine::Fock { cutoff })?.value;
    let generator = metrology::generator_qfi(&d, xi, tau, cutoff)?;
    let inv = metrology::inverted_variance_numeric(&d, xi, tau, Engine::Gaussian)?.value;
    Ok(vec![
        Check::below("Cramer-Rao violations (50 points)", violations as f64, 0.0),
        Check::below("state FD QFI vs 4Var[h]", rel(fd, generator), 0.02),
        Check::below("coherent QFI closed form vs 4Var[h]", rel(d.qfi_coherent(xi, tau), generator), 1e-6),
        Check::below("inverted variance vs closed form", rel(inv, d.inverted_variance(xi, 1)), 0.02),
    ])
}

fn scaling_suite() -> Result<Vec<Check>> {
    let fixed = SweepFixed {
        g: 0.96,
        squeezing: 0.1,
        xi: Complex64::new(0.0, 1.0),
    };
    let cal = scaling::calibrate(&fixed)?;
    let one = Ensemble::identical(1);
    let full = scaling::finite_inverted_variance(FiniteModel::Full, one, &fixed, 1e3)?.numeric;
    let hp = scaling::finite_inverted_variance(FiniteModel::HolsteinPrimakoff, one, &fixed, 1e3)?.numeric;
    let far = scaling::finite_inverted_variance(FiniteModel::HolsteinPrimakoff, Ensemble::identical(4), &fixed, 1e4)?;
    let base = ModelParams::at_g(0.6, vec![1.0; 3], 30.0, 0.1)?;
    let slope = scaling::quartic_correction_effect(
        &base,
        &[2.0, 4.0, 8.0, 16.0, 32.0],
        QuarticObservable::GroundEnergy,
        60,
    )?
    .slope;
    Ok(vec![
        Check::below("calibration gate", cal.rel_error, scaling::CALIBRATION_TOL),
        Check::below("one-qubit collective map vs full model", rel(hp, full), 1e-10),
        Check::below("1 - ratio at beta = 1e4, N = 4", 1.0 - far.ratio, 0.05),
        Check::below("quartic energy shift slope + 1", (slope + 1.0).abs(), 0.05),
    ])
}
