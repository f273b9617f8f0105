//! Finite-β and finite-N behaviour of the inverted variance, and the size of
//! the quartic correction.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, QuadraticDynamics};
use crate::geometry::{self, MetricEngine, MetricModel, MetricRequest};
use crate::hilbert::{coherent_state, SpaceSpec, TruncatedOperator};
use crate::metrology::{self, Engine, PropagatorOptions, FD_RELATIVE_STEP};
use crate::models::{self, ModelParams, Phase};
use crate::spectra;
use crate::{Error, Result};

/// Relative tolerance of the calibration gate.
pub const CALIBRATION_TOL: f64 = 0.02;

/// Upper edge of the admissible ratio band.
pub const RATIO_CEILING: f64 = 1.05;

const MAX_CUTOFF: usize = 1200;

/// Hamiltonian used for the finite-β dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteModel {
    /// Qubits as individual two-level systems.
    Full,
    /// Collective spin through the Holstein-Primakoff map. Exact for identical
    /// qubits, since the dynamics stays in the symmetric subspace.
    HolsteinPrimakoff,
    /// Boson-only effective model with the quartic correction.
    Corrected,
}

/// Parameters held fixed along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFixed {
    pub g: f64,
    pub squeezing: f64,
    pub xi: Complex64,
}

/// One qubit configuration: N qubits with total weight K.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub n_qubits: usize,
    pub k_sum: f64,
}

impl Ensemble {
    pub fn identical(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            k_sum: n_qubits as f64,
        }
    }

    fn params(&self, fixed: &SweepFixed, beta: f64) -> Result<ModelParams> {
        let weights = vec![self.k_sum / self.n_qubits as f64; self.n_qubits];
        ModelParams::at_g(fixed.g, weights, beta, fixed.squeezing)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Beta,
    Qubits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub n_qubits: usize,
    pub k_sum: f64,
    pub beta: f64,
    pub xi: Complex64,
    /// Inverted variance of the finite model at the ideal first revival.
    pub numeric: f64,
    /// Closed-form value for the ideal effective model.
    pub ideal: f64,
    pub ratio: f64,
    pub fock_cutoff: usize,
    /// Relative change of the finite-difference estimate under step halving.
    pub fd_spread: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub closed: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRun {
    pub axis: Axis,
    pub model: FiniteModel,
    pub fixed: SweepFixed,
    pub calibration: Calibration,
    pub points: Vec<RatioPoint>,
}

impl ScalingRun {
    /// Points whose ratio falls outside (0, 1.05].
    pub fn out_of_band(&self) -> Vec<&RatioPoint> {
        self.points
            .iter()
            .filter(|p| !(p.ratio > 0.0 && p.ratio <= RATIO_CEILING))
            .collect()
    }

    /// Ratios for one (N, ξ) series, ordered as in the sweep.
    pub fn series(&self, n_qubits: usize, xi: Complex64) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.n_qubits == n_qubits && p.xi == xi)
            .map(|p| (p.beta, p.ratio))
            .collect()
    }
}

/// Checks the closed-form inverted variance against the numeric estimate on
/// the ideal effective model. Ratios are only meaningful once this passes.
pub fn calibrate(fixed: &SweepFixed) -> Result<Calibration> {
    let p = ModelParams::at_g(fixed.g, vec![1.0], 1.0, fixed.squeezing)?;
    let closed = analytic::inverted_variance_g(&p, fixed.xi, 1)?;
    let d = QuadraticDynamics::from_params(&p)?;
    let numeric = metrology::inverted_variance_g_numeric(&p, fixed.xi, d.revival_time(1), Engine::Gaussian)?;
    let rel_error = (numeric - closed).abs() / closed.abs();
    if rel_error > CALIBRATION_TOL || !rel_error.is_finite() {
        return Err(Error::CalibrationGate { closed, numeric });
    }
    Ok(Calibration {
        closed,
        numeric,
        rel_error,
    })
}

fn space_for(model: FiniteModel, cutoff: usize, n_qubits: usize) -> Result<SpaceSpec> {
    match model {
        FiniteModel::Full => SpaceSpec::qubits(cutoff, n_qubits),
        FiniteModel::HolsteinPrimakoff => SpaceSpec::holstein_primakoff(cutoff, n_qubits),
        FiniteModel::Corrected => SpaceSpec::boson(cutoff),
    }
}

fn hamiltonian(model: FiniteModel, p: &ModelParams, s: SpaceSpec) -> Result<TruncatedOperator> {
    match model {
        FiniteModel::Full => models::full_hamiltonian(p, s),
        FiniteModel::HolsteinPrimakoff => models::hp_hamiltonian(p, s),
        FiniteModel::Corrected => models::corrected_normal_effective(p, s),
    }
}

fn propagator_options() -> PropagatorOptions {
    PropagatorOptions {
        dense_block_limit: 4096,
        ..PropagatorOptions::default()
    }
}

/// Inverted variance about g of one finite model, read at the first revival
/// of the ideal dynamics. The cutoff grows until the edge guard is satisfied.
pub fn finite_inverted_variance(
    model: FiniteModel,
    ensemble: Ensemble,
    fixed: &SweepFixed,
    beta: f64,
) -> Result<RatioPoint> {
    let p = ensemble.params(fixed, beta)?;
    if p.phase() != Phase::Normal {
        return Err(Error::PhaseDomain {
            quantity: "the finite-size inverted variance",
            required: "normal",
            g: p.g(),
        });
    }
    let d = QuadraticDynamics::from_params(&p)?;
    let tau = d.revival_time(1);
    let ideal = analytic::inverted_variance_g(&p, fixed.xi, 1)?;
    let step = FD_RELATIVE_STEP * fixed.g;
    let opts = propagator_options();
    let mut cutoff = metrology::protocol_cutoff(&d, fixed.xi);
    loop {
        let s = space_for(model, cutoff, ensemble.n_qubits)?;
        let psi0 = coherent_state(s, fixed.xi)?;
        let build = |g: f64| hamiltonian(model, &p.with_g(g)?, s);
        match metrology::inverted_variance_family(build, fixed.g, step, &psi0, tau, &opts) {
            Ok(est) => {
                let numeric = est.value;
                return Ok(RatioPoint {
                    n_qubits: ensemble.n_qubits,
                    k_sum: ensemble.k_sum,
                    beta,
                    xi: fixed.xi,
                    numeric,
                    ideal,
                    ratio: numeric / ideal,
                    fock_cutoff: cutoff,
                    fd_spread: (est.coarse - est.fine).abs() / est.fine.abs(),
                });
            }
            Err(Error::EdgeOccupancy(_)) if cutoff < MAX_CUTOFF => {
                cutoff = (cutoff * 3 / 2).min(MAX_CUTOFF);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Ratio I^β / I^∞ against β for each ensemble and each coherent amplitude.
/// Points are ordered by ξ, then ensemble, then β.
pub fn ratio_vs_beta(
    model: FiniteModel,
    fixed: &SweepFixed,
    xis: &[Complex64],
    ensembles: &[Ensemble],
    betas: &[f64],
) -> Result<ScalingRun> {
    let calibration = xis
        .iter()
        .map(|&xi| calibrate(&SweepFixed { xi, ..*fixed }))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .ok_or_else(|| Error::InvalidParams("no coherent amplitude given".into()))?;
    let grid: Vec<(Complex64, Ensemble, f64)> = xis
        .iter()
        .flat_map(|&xi| {
            ensembles
                .iter()
                .flat_map(move |&e| betas.iter().map(move |&b| (xi, e, b)))
        })
        .collect();
    let points = grid
        .par_iter()
        .map(|&(xi, e, beta)| finite_inverted_variance(model, e, &SweepFixed { xi, ..*fixed }, beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingRun {
        axis: Axis::Beta,
        model,
        fixed: *fixed,
        calibration,
        points,
    })
}

/// Ratio against the number of identical qubits, for each β, through the
/// collective-spin model. Points are ordered by β, then N.
pub fn ratio_vs_n(fixed: &SweepFixed, n_values: &[usize], betas: &[f64]) -> Result<ScalingRun> {
    let calibration = calibrate(fixed)?;
    let grid: Vec<(f64, usize)> = betas
        .iter()
        .flat_map(|&b| n_values.iter().map(move |&n| (b, n)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(beta, n)| finite_inverted_variance(FiniteModel::HolsteinPrimakoff, Ensemble::identical(n), fixed, beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingRun {
        axis: Axis::Qubits,
        model: FiniteModel::HolsteinPrimakoff,
        fixed: *fixed,
        calibration,
        points,
    })
}

/// Quantity compared with and without the quartic correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarticObservable {
    GroundEnergy,
    MetricCoupling,
    /// I_g at the first revival for an initial coherent state.
    InvertedVariance { xi: Complex64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticRow {
    pub k_sum: f64,
    pub uncorrected: f64,
    pub corrected: f64,
    pub difference: f64,
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticEffect {
    pub observable: QuarticObservable,
    pub rows: Vec<QuarticRow>,
    /// Least-squares slope against log K of the log of the absolute energy
    /// shift, or of the relative shift of the other observables (g_λλ itself
    /// grows with K).
    pub slope: f64,
}

/// Effect of the quartic correction as the total weight K grows, with N, g,
/// Ω and G held fixed.
pub fn quartic_correction_effect(
    base: &ModelParams,
    k_values: &[f64],
    observable: QuarticObservable,
    cutoff: usize,
) -> Result<QuarticEffect> {
    let n = base.n_qubits();
    let rows = k_values
        .par_iter()
        .map(|&k| {
            let weights = vec![k / n as f64; n];
            let p = ModelParams::at_g(base.g(), weights, base.qubit_freq, base.squeezing)?;
            let (uncorrected, corrected) = match observable {
                QuarticObservable::GroundEnergy => {
                    let s = SpaceSpec::boson(cutoff)?;
                    let bare = spectra::eig_lowest(&models::normal_effective(&p).to_operator(s), 1)?;
                    let full = spectra::eig_lowest(&models::corrected_normal_effective(&p, s)?, 1)?;
                    (bare.eigenvalues[0], full.eigenvalues[0])
                }
                QuarticObservable::MetricCoupling => {
                    let metric = |model| {
                        geometry::compute_metric(
                            &MetricRequest::new(p.clone(), model, MetricEngine::SumOverStates).with_cutoff(cutoff),
                        )
                    };
                    (
                        metric(MetricModel::NormalEffective)?.g_ll,
                        metric(MetricModel::Corrected)?.g_ll,
                    )
                }
                QuarticObservable::InvertedVariance { xi } => {
                    let fixed = SweepFixed {
                        g: p.g(),
                        squeezing: p.squeezing,
                        xi,
                    };
                    let ensemble = Ensemble { n_qubits: n, k_sum: k };
                    let point = finite_inverted_variance(FiniteModel::Corrected, ensemble, &fixed, p.qubit_freq)?;
                    (point.ideal, point.numeric)
                }
            };
            Ok(QuarticRow {
                k_sum: k,
                uncorrected,
                corrected,
                difference: corrected - uncorrected,
                relative: (corrected - uncorrected) / uncorrected.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .map(|r| {
            let size = match observable {
                QuarticObservable::GroundEnergy => r.difference,
                QuarticObservable::MetricCoupling | QuarticObservable::InvertedVariance { .. } => r.relative,
            };
            (r.k_sum.ln(), size.abs().ln())
        })
        .unzip();
    Ok(QuarticEffect {
        observable,
        slope: loglog_slope(&xs, &ys),
        rows,
    })
}

/// Least-squares slope of y against x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (sxy, sxx) = xs
        .iter()
        .zip(ys)
        .fold((0.0, 0.0), |(sxy, sxx), (x, y)| (sxy + (x - mx) * (y - my), sxx + (x - mx).powi(2)));
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::quadratures;
    use crate::metrology::FockPropagator;

    fn fixed(xi: Complex64) -> SweepFixed {
        SweepFixed {
            g: 0.96,
            squeezing: 0.1,
            xi,
        }
    }

    #[test]
    fn calibration_passes_for_ideal_model() {
        let c = calibrate(&fixed(Complex64::new(0.0, 1.0))).unwrap();
        assert!(c.rel_error < 1e-3, "{c:?}");
    }

    #[test]
    fn collective_map_reproduces_full_model() {
        let f = fixed(Complex64::new(0.5, 1.0));
        let e = Ensemble::identical(2);
        let p = e.params(&f, 30.0).unwrap();
        let t = QuadraticDynamics::from_params(&p).unwrap().revival_time(1);
        let moments = |model| {
            let s = space_for(model, 60, 2).unwrap();
            let h = hamiltonian(model, &p, s).unwrap();
            let psi = FockPropagator::new(&h).unwrap().evolve(&coherent_state(s, f.xi).unwrap(), t).unwrap();
            let (x, _) = quadratures(s);
            (psi.expectation(&x).re, psi.variance(&x))
        };
        let (mf, vf) = moments(FiniteModel::Full);
        let (mh, vh) = moments(FiniteModel::HolsteinPrimakoff);
        assert!((mf - mh).abs() < 1e-8 && (vf - vh).abs() < 1e-8, "{mf} {mh} {vf} {vh}");
    }

    #[test]
    fn ratio_approaches_one_at_large_beta() {
        let run = ratio_vs_beta(
            FiniteModel::HolsteinPrimakoff,
            &fixed(Complex64::new(0.0, 1.0)),
            &[Complex64::new(0.0, 1.0)],
            &[Ensemble::identical(1)],
            &[1e3, 1e4],
        )
        .unwrap();
        let r: Vec<f64> = run.points.iter().map(|p| p.ratio).collect();
        assert!(r[0] < r[1] && r[1] > 0.85 && r[1] <= RATIO_CEILING, "{r:?}");
        assert!(run.out_of_band().is_empty());
    }

    #[test]
    fn corrected_model_ratio_is_near_one_at_large_beta() {
        let p = finite_inverted_variance(
            FiniteModel::Corrected,
            Ensemble::identical(1),
            &fixed(Complex64::new(0.0, 1.0)),
            1e4,
        )
        .unwrap();
        assert!(p.ratio > 0.8 && p.ratio <= RATIO_CEILING, "{p:?}");
    }

    #[test]
    fn superradiant_point_is_rejected() {
        let f = SweepFixed {
            g: 1.2,
            ..fixed(Complex64::new(0.0, 1.0))
        };
        let err = finite_inverted_variance(FiniteModel::HolsteinPrimakoff, Ensemble::identical(1), &f, 100.0);
        assert!(matches!(err, Err(Error::PhaseDomain { .. })));
    }

    #[test]
    fn energy_correction_falls_as_inverse_weight() {
        let base = ModelParams::at_g(0.6, vec![1.0; 3], 30.0, 0.1).unwrap();
        let eff = quartic_correction_effect(&base, &[2.0, 4.0, 8.0, 16.0, 32.0], QuarticObservable::GroundEnergy, 60)
            .unwrap();
        assert!((eff.slope + 1.0).abs() < 0.05, "{eff:?}");
    }

    #[test]
    fn metric_correction_falls_as_inverse_weight() {
        let base = ModelParams::at_g(0.6, vec![1.0; 3], 30.0, 0.1).unwrap();
        let eff = quartic_correction_effect(&base, &[4.0, 8.0, 16.0, 32.0], QuarticObservable::MetricCoupling, 80)
            .unwrap();
        assert!((eff.slope + 1.0).abs() < 0.1, "{eff:?}");
    }

    #[test]
    fn inverted_variance_correction_falls_as_inverse_weight() {
        let base = ModelParams::at_g(0.9, vec![1.0; 2], 200.0, 0.1).unwrap();
        let obs = QuarticObservable::InvertedVariance {
            xi: Complex64::new(0.0, 0.5),
        };
        let eff = quartic_correction_effect(&base, &[4.0, 8.0, 16.0, 32.0], obs, 0).unwrap();
        assert!((eff.slope + 1.0).abs() < 0.1, "{eff:?}");
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = (1..6).map(|k| (k as f64).ln()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 1.5 * x).collect();
        assert!((loglog_slope(&xs, &ys) + 1.5).abs() < 1e-12);
    }
}
