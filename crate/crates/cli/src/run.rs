//! Experiment dispatch: turns a validated config into result panels.

use num_complex::Complex64;
use rayon::prelude::*;

use dtc_core::analytic::{self, QuadraticDynamics};
use dtc_core::geometry::{self, MetricModel, MetricRequest};
use dtc_core::metrology::{self, Engine, HomodyneConfig};
use dtc_core::models::{ModelParams, Phase};
use dtc_core::scaling::{self, Ensemble, FiniteModel, SweepFixed};
use dtc_core::Error;

use crate::config::{Axis, EngineSpec, EnsembleSpec, Experiment, ExperimentConfig, FiniteModelSpec};
use crate::output::{Cell, Outcome, Panel};

type Result<T> = std::result::Result<T, Error>;

const DEFAULT_G: f64 = 0.96;

fn num(x: f64) -> String {
    format!("{x}")
}

fn amp(xi: Complex64) -> String {
    format!("{}{:+}i", xi.re, xi.im)
}

fn ensemble_tag(e: &EnsembleSpec) -> String {
    format!("n{}_k{}", e.n_qubits, num(e.k()))
}

fn model_tag(m: FiniteModelSpec) -> &'static str {
    match m {
        FiniteModelSpec::Full => "full",
        FiniteModelSpec::HolsteinPrimakoff => "hp",
        FiniteModelSpec::Corrected => "corrected",
    }
}

fn params(cfg: &ExperimentConfig, e: &EnsembleSpec, qubit_freq: f64, g: f64) -> Result<ModelParams> {
    let weights = vec![e.k() / e.n_qubits as f64; e.n_qubits];
    ModelParams::new(cfg.model.field_freq, qubit_freq, 0.0, cfg.model.squeezing, weights)?.with_g(g)
}

fn qubit_freq(cfg: &ExperimentConfig) -> f64 {
    cfg.model.qubit_freq.unwrap_or(1.0)
}

/// Points where the effective dynamics or metric is undefined are skipped.
fn skippable(e: &Error) -> bool {
    matches!(e, Error::Critical { .. } | Error::NonPositiveDelta(_))
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::GroundEnergy => ground_energy(cfg),
        Experiment::MetricScan => metric_scan(cfg),
        Experiment::QfiTime => qfi_time(cfg),
        Experiment::InvertedVariance => inverted_variance(cfg),
        Experiment::RatioBeta => ratio_beta(cfg),
        Experiment::RatioN => ratio_n(cfg),
        Experiment::IdentityChecks => identity_checks(cfg),
    }
}

fn ground_energy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let gs = cfg.sweep_values();
    let mut out = Outcome::default();
    for e in &cfg.model.ensembles {
        let p = params(cfg, e, qubit_freq(cfg), gs[0])?;
        let mut panel = Panel::new(ensemble_tag(e), &["g", "E_G", "d2E_G"]);
        for (&g, pt) in gs.iter().zip(analytic::ground_energy_curve(&p, &gs, cfg.model.branch.into())?) {
            panel.push(vec![g.into(), pt.energy.into(), pt.d2_energy.into()]);
        }
        out.panels.push(panel);
    }
    out.note("branch", cfg.model.branch);
    Ok(out)
}

fn metric_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let gs = cfg.sweep_values();
    let engine = cfg.numerics.engine.unwrap_or(EngineSpec::SumOverStates);
    let mut out = Outcome::default();
    let mut skipped = Vec::new();
    for e in &cfg.model.ensembles {
        let rows = gs
            .par_iter()
            .map(|&g| {
                let p = params(cfg, e, qubit_freq(cfg), g)?;
                let closed = match analytic::metric_components(&p) {
                    Ok(c) => c,
                    Err(err) if skippable(&err) => return Ok(None),
                    Err(err) => return Err(err),
                };
                let numeric = match engine.metric() {
                    Some(me) => {
                        let model = match p.phase() {
                            Phase::Normal => MetricModel::NormalEffective,
                            Phase::Superradiant => MetricModel::SuperradiantEffective,
                        };
                        let mut req = MetricRequest::new(p, model, me);
                        if let Some(c) = cfg.numerics.cutoff {
                            req = req.with_cutoff(c);
                        }
                        geometry::compute_metric(&req)?
                    }
                    None => closed,
                };
                Ok(Some((numeric, closed)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut panel = Panel::new(
            ensemble_tag(e),
            &["g", "g_ll", "g_oo", "g_lo", "g_ll_closed", "g_oo_closed", "g_lo_closed"],
        );
        for (&g, row) in gs.iter().zip(rows) {
            match row {
                Some((n, c)) => panel.push(vec![
                    g.into(),
                    n.g_ll.into(),
                    n.g_oo.into(),
                    n.g_lo.into(),
                    c.g_ll.into(),
                    c.g_oo.into(),
                    c.g_lo.into(),
                ]),
                None => skipped.push(g),
            }
        }
        out.panels.push(panel);
    }
    out.note("engine", engine);
    out.note("skipped_critical_g", skipped);
    Ok(out)
}

fn dynamics_engine(cfg: &ExperimentConfig, d: &QuadraticDynamics, xi: Complex64) -> Engine {
    let spec = cfg.numerics.engine.unwrap_or(EngineSpec::Gaussian);
    let cutoff = cfg.numerics.cutoff.unwrap_or_else(|| metrology::protocol_cutoff(d, xi));
    spec.dynamics(cutoff).expect("validated")
}

fn qfi_time(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sweep = cfg.sweep.as_ref().expect("validated");
    let raw = cfg.sweep_values();
    let xis = cfg.xis(Complex64::new(0.0, 3.0));
    let e = &cfg.model.ensembles[0];
    let mut out = Outcome::default();
    let mut violations = Vec::new();
    for &xi in &xis {
        let mut summary = Panel::new(
            format!("revival_xi{}", amp(xi)),
            &["g", "revival_time", "inv_var_g", "inv_var_closed_g", "qfi_g", "ratio"],
        );
        for g in cfg.g_values(DEFAULT_G) {
            let p = params(cfg, e, qubit_freq(cfg), g)?;
            let d = QuadraticDynamics::from_params(&p)?;
            let engine = dynamics_engine(cfg, &d, xi);
            let tau = d.revival_time(1);
            let times: Vec<f64> = match sweep.axis {
                Axis::Revivals => raw.iter().map(|r| r * tau).collect(),
                _ => raw.clone(),
            };
            let scale = p.dalpha_dg().powi(2);
            let run = metrology::run_protocol(&d, xi, &times, engine)?;
            let mut panel = Panel::new(
                format!("qfi_g{}_xi{}", num(g), amp(xi)),
                &["t", "t_over_revival", "mean_x", "var_x", "qfi_g", "qfi_closed_g", "inv_var_g", "ratio"],
            );
            for k in 0..times.len() {
                let (f, i) = (run.qfi[k], run.inv_var[k]);
                panel.push(vec![
                    times[k].into(),
                    (times[k] / tau).into(),
                    run.mean_x[k].into(),
                    run.var_x[k].into(),
                    (scale * f).into(),
                    (scale * run.qfi_closed_form[k]).into(),
                    (scale * i).into(),
                    (if f > 0.0 { i / f } else { 0.0 }).into(),
                ]);
            }
            for k in run.cramer_rao_violations(cfg.numerics.tolerances.cramer_rao_rel) {
                violations.push((g, amp(xi), times[k]));
            }
            out.panels.push(panel);
            let inv = metrology::inverted_variance_numeric(&d, xi, tau, engine)?.value;
            let qfi = metrology::qfi_numeric(&d, xi, tau, engine)?.value;
            summary.push(vec![
                g.into(),
                tau.into(),
                (scale * inv).into(),
                (scale * d.inverted_variance(xi, 1)).into(),
                (scale * qfi).into(),
                (inv / qfi).into(),
            ]);
        }
        out.panels.push(summary);
    }
    out.note("cramer_rao_violations", violations);
    Ok(out)
}

fn inverted_variance(cfg: &ExperimentConfig) -> Result<Outcome> {
    let gs = cfg.sweep_values();
    let xis = cfg.xis(Complex64::new(0.0, 3.0));
    let e = &cfg.model.ensembles[0];
    let shots = cfg.numerics.shots;
    let columns: &[&'static str] = if shots.is_some() {
        &["g", "revival_time", "inv_var_g", "inv_var_closed_g", "rel_error", "homodyne_g"]
    } else {
        &["g", "revival_time", "inv_var_g", "inv_var_closed_g", "rel_error"]
    };
    let mut out = Outcome::default();
    let mut skipped = Vec::new();
    for &xi in &xis {
        let rows = gs
            .par_iter()
            .enumerate()
            .map(|(idx, &g)| {
                let p = params(cfg, e, qubit_freq(cfg), g)?;
                let d = match QuadraticDynamics::from_params(&p) {
                    Ok(d) => d,
                    Err(err) if skippable(&err) => return Ok(None),
                    Err(err) => return Err(err),
                };
                let tau = d.revival_time(1);
                let scale = p.dalpha_dg().powi(2);
                let numeric = scale * metrology::inverted_variance_numeric(&d, xi, tau, dynamics_engine(cfg, &d, xi))?.value;
                let closed = analytic::inverted_variance_g(&p, xi, 1)?;
                let mut row: Vec<Cell> = vec![
                    g.into(),
                    tau.into(),
                    numeric.into(),
                    closed.into(),
                    ((numeric - closed).abs() / closed).into(),
                ];
                if let Some(n) = shots {
                    let hc = HomodyneConfig {
                        point: idx as u64,
                        ..HomodyneConfig::new(n, cfg.numerics.seed)
                    };
                    row.push((scale * metrology::homodyne_estimate(&d, xi, tau, &hc)?.inverted_variance).into());
                }
                Ok(Some(row))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut panel = Panel::new(format!("inverted_variance_xi{}", amp(xi)), columns);
        for (&g, row) in gs.iter().zip(rows) {
            match row {
                Some(r) => panel.push(r),
                None => skipped.push(g),
            }
        }
        out.panels.push(panel);
    }
    out.note("skipped_critical_g", skipped);
    Ok(out)
}

fn fixed(cfg: &ExperimentConfig, xi: Complex64) -> SweepFixed {
    SweepFixed {
        g: cfg.g_values(DEFAULT_G)[0],
        squeezing: cfg.model.squeezing,
        xi,
    }
}

fn ratio_row(p: &scaling::RatioPoint, lead: Vec<Cell>) -> Vec<Cell> {
    let mut row = lead;
    row.extend::<[Cell; 5]>([
        p.ratio.into(),
        p.numeric.into(),
        p.ideal.into(),
        p.fock_cutoff.into(),
        p.fd_spread.into(),
    ]);
    row
}

fn ratio_beta(cfg: &ExperimentConfig) -> Result<Outcome> {
    let betas = cfg.sweep_values();
    let xis = cfg.xis(Complex64::new(0.0, 1.0));
    let models = if cfg.model.finite_models.is_empty() {
        vec![FiniteModelSpec::HolsteinPrimakoff, FiniteModelSpec::Corrected]
    } else {
        cfg.model.finite_models.clone()
    };
    let ensembles: Vec<Ensemble> = cfg
        .model
        .ensembles
        .iter()
        .map(|e| Ensemble {
            n_qubits: e.n_qubits,
            k_sum: e.k(),
        })
        .collect();
    let mut out = Outcome::default();
    let mut calibrations = Vec::new();
    for m in models {
        let model: FiniteModel = m.into();
        let run = scaling::ratio_vs_beta(model, &fixed(cfg, xis[0]), &xis, &ensembles, &betas)?;
        calibrations.push((m, run.calibration));
        for &xi in &xis {
            for (spec, ens) in cfg.model.ensembles.iter().zip(&ensembles) {
                let mut panel = Panel::new(
                    format!("ratio_{}_{}_xi{}", model_tag(m), ensemble_tag(spec), amp(xi)),
                    &["beta", "log10_beta", "ratio", "numeric", "ideal", "fock_cutoff", "fd_spread"],
                );
                for p in run.points.iter().filter(|p| p.xi == xi && p.n_qubits == ens.n_qubits && p.k_sum == ens.k_sum) {
                    panel.push(ratio_row(p, vec![p.beta.into(), p.beta.log10().into()]));
                }
                out.panels.push(panel);
            }
        }
        out.note("out_of_band", run.out_of_band().len());
    }
    out.note("calibration", calibrations);
    Ok(out)
}

fn ratio_n(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ns: Vec<usize> = cfg.sweep_values().iter().map(|&v| v as usize).collect();
    let xi = cfg.xis(Complex64::new(0.0, 1.0))[0];
    let betas = &cfg.model.betas;
    let run = scaling::ratio_vs_n(&fixed(cfg, xi), &ns, betas)?;
    let mut out = Outcome::default();
    for &beta in betas {
        let mut panel = Panel::new(
            format!("ratio_beta{}", num(beta)),
            &["n_qubits", "ratio", "numeric", "ideal", "fock_cutoff", "fd_spread"],
        );
        for p in run.points.iter().filter(|p| p.beta == beta) {
            panel.push(ratio_row(p, vec![p.n_qubits.into()]));
        }
        out.panels.push(panel);
    }
    out.note("calibration", run.calibration);
    out.note("out_of_band", run.out_of_band().len());
    Ok(out)
}

fn identity_checks(cfg: &ExperimentConfig) -> Result<Outcome> {
    let cutoffs: Vec<usize> = match &cfg.sweep {
        Some(_) => cfg.sweep_values().iter().map(|&v| v as usize).collect(),
        None => vec![cfg.numerics.cutoff.unwrap_or(64)],
    };
    let e = &cfg.model.ensembles[0];
    let mut out = Outcome::default();
    for g in cfg.g_values(DEFAULT_G) {
        let d = QuadraticDynamics::from_params(&params(cfg, e, qubit_freq(cfg), g)?)?;
        let mut panel = Panel::new(
            format!("identities_g{}", num(g)),
            &["cutoff", "interior_levels", "a_residual", "b_residual", "nested_residual", "ladder_residual"],
        );
        for r in cutoffs
            .par_iter()
            .map(|&c| metrology::operator_identity_check(&d, c))
            .collect::<Result<Vec<_>>>()?
        {
            panel.push(vec![
                r.cutoff.into(),
                r.interior_levels.into(),
                r.a_residual.into(),
                r.b_residual.into(),
                r.nested_residual.into(),
                r.ladder_residual.into(),
            ]);
        }
        out.panels.push(panel);
    }
    Ok(out)
}

