//! Ground-state quantum geometric tensor over the (λ, Ω) parameter plane.
//!
//! Every model is reduced to a list of independent factors, each a small
//! Hermitian matrix with its two parameter derivatives. A factor that appears
//! `multiplicity` times contributes that many copies to the metric and to
//! log-overlaps. Boson factors are restricted to their even sector, which is
//! where the ground state lives.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{phase_quantities, MetricComponents, CRITICAL_WINDOW};
use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation_squared, boson_function, dot, infidelity_amplitude, number, SpaceSpec,
    TruncatedOperator,
};
use crate::models::{self, ModelParams, ModelOrigin, Phase, QuadraticModel};
use crate::sparse::CsrMatrix;
use crate::spectra::{dense_eigh, lowest_eigenpairs, EigenOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricModel {
    /// Qubits and field, even parity sector.
    Full,
    NormalEffective,
    /// Squeezed field plus one rotated two-level factor per qubit.
    SuperradiantEffective,
    /// Normal-phase model with the quartic 1/β correction.
    Corrected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricEngine {
    SumOverStates,
    OverlapFd,
}

/// Absolute stencil widths in λ and Ω.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdSteps {
    pub coupling: f64,
    pub qubit_freq: f64,
}

impl FdSteps {
    pub const DEFAULT_RELATIVE: f64 = 1e-4;

    /// `rel`·λ and `rel`·Ω, with λ replaced by the critical coupling when it
    /// vanishes, shrunk so the stencil spans under a tenth of |g − 1|.
    pub fn auto(p: &ModelParams, rel: f64) -> Self {
        let critical_coupling = (p.qubit_freq * p.detuned_freq() / p.k_sum()).sqrt();
        let lam = if p.coupling > 0.0 { p.coupling } else { critical_coupling };
        let steps = Self {
            coupling: rel * lam,
            qubit_freq: rel * p.qubit_freq,
        };
        let span = steps.g_span(p);
        let room = 0.1 * (p.g() - 1.0).abs();
        if span > room && span > 0.0 {
            steps.scaled(room / span)
        } else {
            steps
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            coupling: self.coupling * factor,
            qubit_freq: self.qubit_freq * factor,
        }
    }

    /// First-order estimate of the total change in g across the stencil.
    fn g_span(&self, p: &ModelParams) -> f64 {
        let g = p.g();
        let lam_c = (p.qubit_freq * p.detuned_freq() / p.k_sum()).sqrt();
        self.coupling / lam_c + g * self.qubit_freq / (2.0 * p.qubit_freq)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRequest {
    pub params: ModelParams,
    pub model: MetricModel,
    pub engine: MetricEngine,
    /// `None` selects [`FdSteps::auto`].
    pub fd_steps: Option<FdSteps>,
    pub cutoff: usize,
    /// Keep only the lowest `M` excited states in the sum over states.
    pub max_states: Option<usize>,
}

impl MetricRequest {
    pub fn new(params: ModelParams, model: MetricModel, engine: MetricEngine) -> Self {
        let cutoff = default_cutoff(&params, model);
        Self {
            params,
            model,
            engine,
            fd_steps: None,
            cutoff,
            max_states: None,
        }
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_steps(mut self, steps: FdSteps) -> Self {
        self.fd_steps = Some(steps);
        self
    }

    pub fn with_engine(mut self, engine: MetricEngine) -> Self {
        self.engine = engine;
        self
    }

    fn steps(&self) -> FdSteps {
        self.fd_steps
            .unwrap_or_else(|| FdSteps::auto(&self.params, FdSteps::DEFAULT_RELATIVE))
    }
}

/// Fock cutoff that holds the squeezed ground state: the even populations
/// fall as tanh(|r|)^(2n), so ask for about 1e-32 at the edge.
pub fn default_cutoff(p: &ModelParams, model: MetricModel) -> usize {
    let base = match model {
        MetricModel::Full => 60,
        _ => 200,
    };
    let r = phase_quantities(p).squeeze.abs();
    let decay = -r.tanh().ln();
    let needed = if decay.is_finite() && decay > 0.0 {
        2 * (37.0 / decay).ceil() as usize
    } else {
        base
    };
    needed.clamp(base, 4000)
}

pub fn compute_metric(req: &MetricRequest) -> Result<MetricComponents> {
    match req.engine {
        MetricEngine::SumOverStates => metric_sum_over_states(req),
        MetricEngine::OverlapFd => metric_overlap_fd(req),
    }
}

struct Factor {
    hamiltonian: CsrMatrix,
    d_coupling: CsrMatrix,
    d_freq: CsrMatrix,
    multiplicity: usize,
}

fn even_boson(cutoff: usize) -> Result<(SpaceSpec, Vec<usize>)> {
    let s = SpaceSpec::boson(cutoff)?;
    Ok((s, s.parity_sector(1)))
}

fn restrict(op: &TruncatedOperator, keep: &[usize]) -> CsrMatrix {
    op.matrix().submatrix(keep)
}

/// X² + P² − 1 = 2a†a, the operator multiplying α in both effective models.
fn alpha_generator(s: SpaceSpec) -> TruncatedOperator {
    QuadraticModel {
        cxx: 1.0,
        cpp: 1.0,
        cxp: 0.0,
        cx: 0.0,
        cp: 0.0,
        c0: -1.0,
        origin: ModelOrigin::Extracted,
    }
    .to_operator(s)
}

/// (∂g/∂λ, ∂g/∂Ω).
fn g_gradient(p: &ModelParams) -> (f64, f64) {
    let g = p.g();
    (g / p.coupling, -g / (2.0 * p.qubit_freq))
}

fn require_phase(p: &ModelParams, phase: Phase, what: &'static str) -> Result<()> {
    let g = p.g();
    if (g - 1.0).abs() < CRITICAL_WINDOW {
        return Err(Error::Critical { g });
    }
    if p.phase() != phase {
        return Err(Error::PhaseDomain {
            quantity: what,
            required: match phase {
                Phase::Normal => "normal",
                Phase::Superradiant => "superradiant",
            },
            g,
        });
    }
    Ok(())
}

fn squeezed_boson_factor(p: &ModelParams, model: QuadraticModel, cutoff: usize) -> Result<Factor> {
    let (s, keep) = even_boson(cutoff)?;
    let gen = alpha_generator(s);
    let (dg_l, dg_o) = g_gradient(p);
    let da = p.dalpha_dg();
    Ok(Factor {
        hamiltonian: restrict(&model.to_operator(s), &keep),
        d_coupling: restrict(&gen.scale(da * dg_l), &keep),
        d_freq: restrict(&gen.scale(da * dg_o), &keep),
        multiplicity: 1,
    })
}

/// One rotated qubit, h = (Ω/2)σ_z + α₀λσ_x, in units of its weight.
fn qubit_factor(p: &ModelParams) -> Result<Factor> {
    let (k, l, w, om) = (p.k_sum(), p.coupling, p.detuned_freq(), p.qubit_freq);
    // s = α₀λ = √(K²λ⁴/(4w²) − Ω²/4).
    let s = p.displacement()? * l;
    let ds_dl = k * k * l.powi(3) / (2.0 * w * w * s);
    let ds_do = -om / (4.0 * s);
    let m = |z: f64, x: f64| models::aux_matrix(&[[z, x], [x, -z]]);
    Ok(Factor {
        hamiltonian: m(om / 2.0, s),
        d_coupling: m(0.0, ds_dl),
        d_freq: m(0.5, ds_do),
        multiplicity: p.n_qubits(),
    })
}

fn factors(p: &ModelParams, model: MetricModel, cutoff: usize) -> Result<Vec<Factor>> {
    match model {
        MetricModel::NormalEffective => {
            require_phase(p, Phase::Normal, "normal effective metric")?;
            Ok(vec![squeezed_boson_factor(p, models::normal_effective(p), cutoff)?])
        }
        MetricModel::SuperradiantEffective => {
            require_phase(p, Phase::Superradiant, "superradiant effective metric")?;
            Ok(vec![
                squeezed_boson_factor(p, models::superradiant_effective(p)?, cutoff)?,
                qubit_factor(p)?,
            ])
        }
        MetricModel::Corrected => {
            require_phase(p, Phase::Normal, "corrected metric")?;
            let mut f = squeezed_boson_factor(p, models::normal_effective(p), cutoff)?;
            let (s, keep) = even_boson(cutoff)?;
            let c = models::quartic_correction(p);
            let a2 = annihilation_squared(s);
            let pair = &a2 + &a2.adjoint();
            let n = number(s);
            let n2 = boson_function(s, |k| (k * k) as f64);
            // Each correction coefficient is a monomial in λ and Ω:
            // a†a and pair terms ∝ λ²/Ω², the quartic term ∝ λ⁴/Ω³.
            let (l, om) = (p.coupling, p.qubit_freq);
            let corr = |cn: f64, cp: f64, cq: f64| {
                &(&n.scale(cn) + &pair.scale(cp)) + &n2.scale(cq)
            };
            let h = corr(c.number, c.pair, c.quartic);
            let dl = corr(2.0 * c.number / l, 2.0 * c.pair / l, 4.0 * c.quartic / l);
            let dom = corr(-2.0 * c.number / om, -2.0 * c.pair / om, -3.0 * c.quartic / om);
            f.hamiltonian = f.hamiltonian.add_scaled(&restrict(&h, &keep), Complex64::new(1.0, 0.0));
            f.d_coupling = f.d_coupling.add_scaled(&restrict(&dl, &keep), Complex64::new(1.0, 0.0));
            f.d_freq = f.d_freq.add_scaled(&restrict(&dom, &keep), Complex64::new(1.0, 0.0));
            Ok(vec![f])
        }
        MetricModel::Full => {
            let g = p.g();
            if (g - 1.0).abs() < CRITICAL_WINDOW {
                return Err(Error::Critical { g });
            }
            let s = SpaceSpec::qubits(cutoff, p.n_qubits())?;
            let keep = s.parity_sector(1);
            let h = models::full_hamiltonian(p, s)?;
            let (dl, dom) = models::full_hamiltonian_derivatives(p, s)?;
            Ok(vec![Factor {
                hamiltonian: restrict(&h, &keep),
                d_coupling: restrict(&dl, &keep),
                d_freq: restrict(&dom, &keep),
                multiplicity: 1,
            }])
        }
    }
}

/// Re Σ_{m≠0} ⟨0|∂_μH|m⟩⟨m|∂_νH|0⟩/(E_m − E_0)² summed over factors.
pub fn metric_sum_over_states(req: &MetricRequest) -> Result<MetricComponents> {
    let factors = factors(&req.params, req.model, req.cutoff)?;
    let mut total = MetricComponents {
        g_ll: 0.0,
        g_oo: 0.0,
        g_lo: 0.0,
    };
    for f in &factors {
        let (values, vectors) = dense_eigh(&f.hamiltonian);
        let gap = values[1] - values[0];
        if gap < 1e-10 {
            return Err(Error::DegenerateGround(gap));
        }
        let ground = &vectors[0];
        let wl = f.d_coupling.apply(ground);
        let wo = f.d_freq.apply(ground);
        let last = req.max_states.map_or(values.len(), |m| (m + 1).min(values.len()));
        let m = f.multiplicity as f64;
        for (e, v) in values[1..last].iter().zip(&vectors[1..last]) {
            let den = (e - values[0]).powi(2);
            let (al, ao) = (dot(v, &wl), dot(v, &wo));
            total.g_ll += m * al.norm_sqr() / den;
            total.g_oo += m * ao.norm_sqr() / den;
            total.g_lo += m * (al.conj() * ao).re / den;
        }
    }
    Ok(total)
}

/// Ground vector of each factor at one parameter point.
fn ground_vectors(p: &ModelParams, model: MetricModel, cutoff: usize) -> Result<Vec<(Vec<Complex64>, usize)>> {
    let opts = EigenOptions::default();
    factors(p, model, cutoff)?
        .into_iter()
        .map(|f| {
            let (_, mut v, _) = lowest_eigenpairs(&f.hamiltonian, 1, &opts)?;
            Ok((v.remove(0), f.multiplicity))
        })
        .collect()
}

/// 1 − |⟨ψ_a|ψ_b⟩| for product states, accumulated through log-overlaps.
fn product_infidelity(a: &[(Vec<Complex64>, usize)], b: &[(Vec<Complex64>, usize)]) -> f64 {
    let log_overlap: f64 = a
        .iter()
        .zip(b)
        .map(|((u, m), (v, _))| *m as f64 * (-infidelity_amplitude(u, v)).ln_1p())
        .sum();
    -log_overlap.exp_m1()
}

fn shifted(p: &ModelParams, dl: f64, dom: f64) -> Result<ModelParams> {
    ModelParams::new(
        p.field_freq,
        p.qubit_freq + dom,
        p.coupling + dl,
        p.squeezing,
        p.weights.clone(),
    )
}

fn stencil_states(
    req: &MetricRequest,
    offsets: &[(f64, f64)],
) -> Result<Vec<Vec<(Vec<Complex64>, usize)>>> {
    let p = &req.params;
    let phase = p.phase();
    let points = offsets
        .iter()
        .map(|&(dl, dom)| shifted(p, dl, dom))
        .collect::<Result<Vec<_>>>()?;
    if points.iter().any(|q| q.phase() != phase || (q.g() - 1.0).abs() < CRITICAL_WINDOW) {
        return Err(Error::StencilCrossesCritical);
    }
    points
        .par_iter()
        .map(|q| ground_vectors(q, req.model, req.cutoff))
        .collect()
}

/// λ offsets of a stencil of width `dl`, centred unless that would make the
/// coupling negative, in which case it starts at λ = 0.
fn coupling_window(p: &ModelParams, dl: f64) -> (f64, f64) {
    let lo = (-dl / 2.0).max(-p.coupling);
    (lo, lo + dl)
}

/// Central overlap estimates: g_μμ = 2(1 − |⟨ψ(k−δ/2)|ψ(k+δ/2)⟩|)/δ², with the
/// cross term from the diagonal direction (δλ, δΩ).
pub fn metric_overlap_fd(req: &MetricRequest) -> Result<MetricComponents> {
    let st = req.steps();
    let (l0, l1) = coupling_window(&req.params, st.coupling);
    let ho = st.qubit_freq / 2.0;
    let s = stencil_states(
        req,
        &[(l0, 0.0), (l1, 0.0), (0.0, -ho), (0.0, ho), (l0, -ho), (l1, ho)],
    )?;
    let inf_l = product_infidelity(&s[0], &s[1]);
    let inf_o = product_infidelity(&s[2], &s[3]);
    let inf_d = product_infidelity(&s[4], &s[5]);
    let (dl, dom) = (st.coupling, st.qubit_freq);
    Ok(MetricComponents {
        g_ll: 2.0 * inf_l / (dl * dl),
        g_oo: 2.0 * inf_o / (dom * dom),
        g_lo: (inf_d - inf_l - inf_o) / (dl * dom),
    })
}

/// Phase of ⟨1|2⟩⟨2|3⟩⟨3|4⟩⟨4|1⟩; independent of the phase of each state.
pub fn plaquette_phase(corners: [&[Complex64]; 4]) -> f64 {
    (0..4)
        .map(|i| dot(corners[i], corners[(i + 1) % 4]))
        .product::<Complex64>()
        .arg()
}

/// Berry curvature F_λΩ from the loop phase around one stencil plaquette.
pub fn berry_curvature_fd(req: &MetricRequest) -> Result<f64> {
    let st = req.steps();
    let (l0, l1) = coupling_window(&req.params, st.coupling);
    let ho = st.qubit_freq / 2.0;
    let s = stencil_states(req, &[(l0, -ho), (l1, -ho), (l1, ho), (l0, ho)])?;
    let phase: f64 = (0..s[0].len())
        .map(|f| {
            let corners = [&s[0][f].0[..], &s[1][f].0[..], &s[2][f].0[..], &s[3][f].0[..]];
            s[0][f].1 as f64 * plaquette_phase(corners)
        })
        .sum();
    Ok(-phase / (st.coupling * st.qubit_freq))
}

/// Both engines on the same request, with the largest relative difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineComparison {
    pub sum_over_states: MetricComponents,
    pub overlap_fd: MetricComponents,
    pub max_rel_delta: f64,
}

pub fn engine_comparison(req: &MetricRequest) -> Result<EngineComparison> {
    let sos = metric_sum_over_states(req)?;
    let fd = metric_overlap_fd(req)?;
    let scale = sos.g_ll.abs().max(sos.g_oo.abs()).max(1e-300);
    let max_rel_delta = [
        (sos.g_ll, fd.g_ll),
        (sos.g_oo, fd.g_oo),
        (sos.g_lo, fd.g_lo),
    ]
    .iter()
    .map(|(a, b)| {
        let d = (a - b).abs();
        // Components that vanish are compared against the tensor's scale.
        d / a.abs().max(b.abs()).max(1e-3 * scale)
    })
    .fold(0.0, f64::max);
    Ok(EngineComparison {
        sum_over_states: sos,
        overlap_fd: fd,
        max_rel_delta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub g: f64,
    pub g_ll: f64,
    pub g_oo: f64,
    pub g_lo: f64,
}

/// Metric of the phase-appropriate effective model at each g, holding the
/// other parameters of `base` fixed. Points run in parallel.
pub fn metric_divergence_scan(
    base: &ModelParams,
    g_values: &[f64],
    engine: MetricEngine,
) -> Result<Vec<ScanRow>> {
    g_values
        .par_iter()
        .map(|&g| {
            let p = base.with_g(g)?;
            let model = match p.phase() {
                Phase::Normal => MetricModel::NormalEffective,
                Phase::Superradiant => MetricModel::SuperradiantEffective,
            };
            let m = compute_metric(&MetricRequest::new(p, model, engine))?;
            Ok(ScanRow {
                g,
                g_ll: m.g_ll,
                g_oo: m.g_oo,
                g_lo: m.g_lo,
            })
        })
        .collect()
}

/// Full-model metric against the normal effective model at fixed g.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub beta: f64,
    pub full: MetricComponents,
    pub effective: MetricComponents,
    /// (full − effective)/effective for g_λλ.
    pub rel_dev_ll: f64,
}

pub fn full_effective_residual(p: &ModelParams, betas: &[f64], cutoff: usize) -> Result<Vec<ResidualRow>> {
    betas
        .par_iter()
        .map(|&beta| {
            let pb = p.with_beta(beta)?;
            let full = metric_sum_over_states(
                &MetricRequest::new(pb.clone(), MetricModel::Full, MetricEngine::SumOverStates)
                    .with_cutoff(cutoff),
            )?;
            let effective = metric_sum_over_states(&MetricRequest::new(
                pb,
                MetricModel::NormalEffective,
                MetricEngine::SumOverStates,
            ))?;
            Ok(ResidualRow {
                beta,
                full,
                effective,
                rel_dev_ll: (full.g_ll - effective.g_ll) / effective.g_ll,
            })
        })
        .collect()
}
