//! Sensing protocol: evolve a coherent state under the quadratic Hamiltonian
//! αX² + (α+2G)P², then read α out through the X quadrature.
//!
//! Two engines are provided. The Gaussian engine propagates first and second
//! moments exactly. The Fock engine evolves state vectors on a truncated
//! space and also handles non-quadratic Hamiltonians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{coherent_cutoff, var_p2_coherent, QuadraticDynamics};
use crate::error::{Error, Result};
use crate::hilbert::{
    coherent_state, dot, norm, parity_operator, quadratic_forms, quadratures, Gauge, QuantumState,
    SpaceSpec, TruncatedOperator,
};
use crate::models::{ModelOrigin, ModelParams, QuadraticModel};
use crate::sparse::CsrMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// First and second moments of a single-mode Gaussian state, r = (X, P).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: [f64; 2],
    /// Symmetrised covariance ½⟨{Δr_i, Δr_j}⟩; the vacuum has ½·I.
    pub cov: [[f64; 2]; 2],
}

impl GaussianState {
    pub fn coherent(xi: Complex64) -> Self {
        let s = std::f64::consts::SQRT_2;
        Self {
            mean: [s * xi.re, s * xi.im],
            cov: [[0.5, 0.0], [0.0, 0.5]],
        }
    }

    pub fn determinant(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    /// Positive-definite covariance obeying det ≥ 1/4.
    pub fn validate(&self) -> Result<()> {
        let c = &self.cov;
        if (c[0][1] - c[1][0]).abs() > 1e-12 * c[0][0].abs().max(c[1][1].abs()) {
            return Err(Error::InvalidParams("covariance is not symmetric".into()));
        }
        if !(c[0][0] > 0.0 && self.determinant() >= 0.25 * (1.0 - 1e-10)) {
            return Err(Error::InvalidParams(format!(
                "covariance violates the uncertainty bound, det = {}",
                self.determinant()
            )));
        }
        Ok(())
    }

    pub fn mean_x(&self) -> f64 {
        self.mean[0]
    }

    pub fn var_x(&self) -> f64 {
        self.cov[0][0]
    }
}

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn mat_vec(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Heisenberg flow r(t) = S r(0) + d of the quadratic model.
///
/// With H = ½rᵀMr + bᵀr the generator is K = JM, J = [[0, 1], [−1, 0]]. K is
/// traceless, so K² = −det(K)·I and the exponential has a closed form.
pub fn symplectic_flow(model: &QuadraticModel, t: f64) -> (Mat2, [f64; 2]) {
    let m = model.hessian();
    let k = [[m[1][0], m[1][1]], [-m[0][0], -m[0][1]]];
    let q = k[0][0] * k[1][1] - k[0][1] * k[1][0];
    // e^{Kt} = c·I + s·K and ∫₀ᵗ e^{Ku}du = s·I + c1·K.
    let (c, s, c1) = if q > 0.0 {
        let w = q.sqrt();
        ((w * t).cos(), (w * t).sin() / w, (1.0 - (w * t).cos()) / q)
    } else if q < 0.0 {
        let w = (-q).sqrt();
        ((w * t).cosh(), (w * t).sinh() / w, ((w * t).cosh() - 1.0) / (-q))
    } else {
        (1.0, t, t * t / 2.0)
    };
    let flow = [
        [c + s * k[0][0], s * k[0][1]],
        [s * k[1][0], c + s * k[1][1]],
    ];
    let drive = [model.cp, -model.cx];
    let integral = [
        [s + c1 * k[0][0], c1 * k[0][1]],
        [c1 * k[1][0], s + c1 * k[1][1]],
    ];
    (flow, mat_vec(&integral, drive))
}

pub fn evolve_gaussian(model: &QuadraticModel, init: &GaussianState, t: f64) -> GaussianState {
    let (flow, shift) = symplectic_flow(model, t);
    let m = mat_vec(&flow, init.mean);
    let cov = mat_mul(&mat_mul(&flow, &init.cov), &transpose(&flow));
    let sym = 0.5 * (cov[0][1] + cov[1][0]);
    GaussianState {
        mean: [m[0] + shift[0], m[1] + shift[1]],
        cov: [[cov[0][0], sym], [sym, cov[1][1]]],
    }
}

/// 1 − |⟨ψ_a|ψ_b⟩| for two pure Gaussian states.
///
/// For pure states det(σ_a + σ_b) = 1 − det(σ_b − σ_a), which keeps the
/// result accurate when the states are close.
pub fn gaussian_infidelity(a: &GaussianState, b: &GaussianState) -> f64 {
    let d = [
        [b.cov[0][0] - a.cov[0][0], b.cov[0][1] - a.cov[0][1]],
        [b.cov[1][0] - a.cov[1][0], b.cov[1][1] - a.cov[1][1]],
    ];
    let det_d = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    let s = [
        [a.cov[0][0] + b.cov[0][0], a.cov[0][1] + b.cov[0][1]],
        [a.cov[1][0] + b.cov[1][0], a.cov[1][1] + b.cov[1][1]],
    ];
    let det_s = 1.0 - det_d;
    let dm = [b.mean[0] - a.mean[0], b.mean[1] - a.mean[1]];
    // δmᵀ S⁻¹ δm with S⁻¹ = adj(S)/det S.
    let quad = (s[1][1] * dm[0] * dm[0] - 2.0 * s[0][1] * dm[0] * dm[1] + s[0][0] * dm[1] * dm[1]) / det_s;
    // |⟨a|b⟩|² = exp(−½ quad)/√det S.
    let log_overlap = -0.25 * quad - 0.25 * (-det_d).ln_1p();
    -log_overlap.exp_m1()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorOptions {
    /// Largest block handled by dense diagonalisation.
    pub dense_block_limit: usize,
    pub norm_tol: f64,
    /// Population allowed in the top `edge_levels` Fock levels.
    pub edge_tol: f64,
    pub edge_levels: usize,
    /// Krylov subspace size and local error target.
    pub krylov_dim: usize,
    pub krylov_tol: f64,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self {
            dense_block_limit: 2048,
            norm_tol: 1e-10,
            edge_tol: 1e-6,
            edge_levels: 4,
            krylov_dim: 40,
            krylov_tol: 1e-12,
        }
    }
}

struct SpectralBlock {
    indices: Vec<usize>,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
}

enum Method {
    Dense(Vec<SpectralBlock>),
    Krylov(CsrMatrix),
}

/// e^{−iHt} for a fixed Hermitian H, diagonalised once per parity block.
pub struct FockPropagator {
    space: SpaceSpec,
    method: Method,
    opts: PropagatorOptions,
}

impl FockPropagator {
    pub fn new(h: &TruncatedOperator) -> Result<Self> {
        Self::with_options(h, PropagatorOptions::default())
    }

    pub fn with_options(h: &TruncatedOperator, opts: PropagatorOptions) -> Result<Self> {
        let dev = h.hermitian_deviation();
        if dev > 1e-12 * h.matrix().max_abs().max(1.0) {
            return Err(Error::NotHermitian(dev));
        }
        let space = h.space();
        let parity = parity_operator(space);
        let commutes = h.commutator(&parity).matrix().max_abs() <= 1e-12 * h.matrix().max_abs().max(1.0);
        let sectors: Vec<Vec<usize>> = if commutes {
            vec![space.parity_sector(1), space.parity_sector(-1)]
        } else {
            vec![(0..space.dim()).collect()]
        };
        let dense = h.matrix().is_real() && sectors.iter().all(|s| s.len() <= opts.dense_block_limit);
        let method = if dense {
            let blocks = sectors
                .into_par_iter()
                .filter(|idx| !idx.is_empty())
                .map(|indices| {
                    let eig = SymmetricEigen::new(h.matrix().submatrix(&indices).to_dense_real());
                    SpectralBlock {
                        indices,
                        energies: eig.eigenvalues.iter().copied().collect(),
                        vectors: eig.eigenvectors,
                    }
                })
                .collect();
            Method::Dense(blocks)
        } else {
            Method::Krylov(h.matrix().clone())
        };
        Ok(Self { space, method, opts })
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.method, Method::Dense(_))
    }

    /// Evolves without the norm and edge checks.
    fn apply(&self, psi: &[Complex64], t: f64) -> Vec<Complex64> {
        match &self.method {
            Method::Dense(blocks) => {
                let mut out = vec![ZERO; psi.len()];
                for b in blocks {
                    let re = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| psi[i].re));
                    let im = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| psi[i].im));
                    let cr = b.vectors.tr_mul(&re);
                    let ci = b.vectors.tr_mul(&im);
                    let (mut pr, mut pi) = (cr.clone(), ci.clone());
                    for (k, &e) in b.energies.iter().enumerate() {
                        let ph = Complex64::from_polar(1.0, -e * t) * Complex64::new(cr[k], ci[k]);
                        pr[k] = ph.re;
                        pi[k] = ph.im;
                    }
                    let yr = &b.vectors * pr;
                    let yi = &b.vectors * pi;
                    for (k, &i) in b.indices.iter().enumerate() {
                        out[i] = Complex64::new(yr[k], yi[k]);
                    }
                }
                out
            }
            Method::Krylov(m) => krylov_expm(m, psi, t, self.opts.krylov_dim, self.opts.krylov_tol),
        }
    }

    pub fn evolve(&self, psi0: &QuantumState, t: f64) -> Result<QuantumState> {
        if psi0.space() != self.space {
            return Err(Error::SpaceMismatch(psi0.space(), self.space));
        }
        let out = self.apply(psi0.amplitudes(), t);
        let drift = (norm(&out) - 1.0).abs();
        if drift > self.opts.norm_tol {
            return Err(Error::NormDrift(drift));
        }
        let state = QuantumState::new(self.space, out, Gauge::Free)?;
        let edge = state.edge_occupancy(self.opts.edge_levels);
        if edge > self.opts.edge_tol {
            return Err(Error::EdgeOccupancy(edge));
        }
        Ok(state)
    }
}

/// Trajectory e^{−iHkt/steps}ψ₀ for k = 0..=steps.
pub fn evolve_fock(h: &TruncatedOperator, psi0: &QuantumState, t: f64, steps: usize) -> Result<Vec<QuantumState>> {
    let prop = FockPropagator::new(h)?;
    let steps = steps.max(1);
    (0..=steps)
        .map(|k| prop.evolve(psi0, t * k as f64 / steps as f64))
        .collect()
}

/// Lanczos approximation of e^{−iHt}ψ with adaptive substeps.
fn krylov_expm(m: &CsrMatrix, psi: &[Complex64], t: f64, dim: usize, tol: f64) -> Vec<Complex64> {
    let (lo, hi) = m.gershgorin();
    let spread = (hi - lo).max(1e-300);
    let mut v: Vec<Complex64> = psi.to_vec();
    let mut remaining = t.abs();
    let sign = t.signum();
    let mut dt = remaining.min(0.5 * dim as f64 / spread);
    while remaining > 0.0 {
        let beta0 = norm(&v);
        if beta0 == 0.0 {
            return v;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![v.iter().map(|x| x / beta0).collect()];
        let mut alphas = Vec::with_capacity(dim);
        let mut betas = Vec::with_capacity(dim);
        let mut tail = 0.0;
        for j in 0..dim {
            let mut w = m.apply(&basis[j]);
            let a = dot(&basis[j], &w).re;
            alphas.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= y * c);
                }
            }
            let bn = norm(&w);
            if bn < 1e-14 * spread || j + 1 == dim {
                tail = if j + 1 == dim { bn } else { 0.0 };
                break;
            }
            betas.push(bn);
            basis.push(w.into_iter().map(|x| x / bn).collect());
        }
        let k = alphas.len();
        let tri = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(tri);
        let coeffs = |step: f64| -> Vec<Complex64> {
            (0..k)
                .map(|i| {
                    (0..k)
                        .map(|l| {
                            let u = &eig.eigenvectors;
                            Complex64::from_polar(1.0, -sign * eig.eigenvalues[l] * step) * (u[(i, l)] * u[(0, l)])
                        })
                        .sum()
                })
                .collect()
        };
        let mut y = coeffs(dt);
        while tail * y[k - 1].norm() > tol * dt / t.abs().max(1e-300) && dt > 1e-300 {
            dt /= 2.0;
            y = coeffs(dt);
        }
        let mut next = vec![ZERO; v.len()];
        for (b, c) in basis.iter().zip(&y) {
            next.iter_mut().zip(b).for_each(|(o, x)| *o += x * c * beta0);
        }
        v = next;
        remaining -= dt;
        dt = (dt * 1.5).min(remaining);
    }
    v
}

/// Residuals of the commutator algebra behind the local generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub cutoff: usize,
    /// Fock levels below this index are compared.
    pub interior_levels: usize,
    /// A = −i[H′₀, H′₁] against −4G(XP+PX).
    pub a_residual: f64,
    /// B = −[H, [H′₀, H′₁]] against −16GαX² + 16G(α+2G)P².
    pub b_residual: f64,
    /// [H, [H, [H′₀, H′₁]]] against Δ[H′₀, H′₁].
    pub nested_residual: f64,
    /// [H, Λ] against √Δ·Λ with Λ = i√Δ·A − B.
    pub ladder_residual: f64,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.a_residual
            .max(self.b_residual)
            .max(self.nested_residual)
            .max(self.ladder_residual)
    }
}

struct GeneratorTerms {
    hamiltonian: TruncatedOperator,
    h0: TruncatedOperator,
    h1: TruncatedOperator,
    a: TruncatedOperator,
    b: TruncatedOperator,
}

/// H = αX² + (α+2G)P², H′₀ = 2GP², H′₁ = X² + P² and the closed forms of A, B.
fn generator_terms(d: &QuadraticDynamics, s: SpaceSpec) -> GeneratorTerms {
    let q = quadratic_forms(s);
    let (alpha, gs) = (d.alpha, d.squeezing);
    GeneratorTerms {
        hamiltonian: &q.x2.scale(alpha) + &q.p2.scale(alpha + 2.0 * gs),
        h0: q.p2.scale(2.0 * gs),
        h1: &q.x2 + &q.p2,
        a: q.xp_px.scale(-4.0 * gs),
        b: &q.x2.scale(-16.0 * gs * alpha) + &q.p2.scale(16.0 * gs * (alpha + 2.0 * gs)),
    }
}

/// Largest interior entry of `lhs − rhs`, relative to the largest interior entry of `rhs`.
fn interior_residual(lhs: &TruncatedOperator, rhs: &TruncatedOperator, levels: usize) -> f64 {
    let scale = rhs.max_abs_interior(levels).max(1e-300);
    (lhs - rhs).max_abs_interior(levels) / scale
}

pub fn operator_identity_check(d: &QuadraticDynamics, cutoff: usize) -> Result<IdentityReport> {
    // Products are formed on a padded space so the compared block is exact.
    let s = SpaceSpec::boson(cutoff + 8)?;
    let levels = cutoff.saturating_sub(4);
    let t = generator_terms(d, s);
    let c = t.h0.commutator(&t.h1);
    let a_num = c.scale_complex(-I);
    let b_num = t.hamiltonian.commutator(&c).scale(-1.0);
    let nested = t.hamiltonian.commutator(&t.hamiltonian.commutator(&c));
    let sd = d.delta().sqrt();
    let ladder = &t.a.scale_complex(I * sd) - &t.b;
    let report = IdentityReport {
        cutoff,
        interior_levels: levels,
        a_residual: interior_residual(&a_num, &t.a, levels),
        b_residual: interior_residual(&b_num, &t.b, levels),
        nested_residual: interior_residual(&nested, &c.scale(d.delta()), levels),
        ladder_residual: interior_residual(&t.hamiltonian.commutator(&ladder), &ladder.scale(sd), levels),
    };
    if report.max_residual() > 1e-8 {
        return Err(Error::IdentityResidual(report.max_residual()));
    }
    Ok(report)
}

/// h(t) = H′₁t + [cos(√Δt) − 1]/Δ·A − [sin(√Δt) − √Δt]/Δ^{3/2}·B.
pub fn local_generator(d: &QuadraticDynamics, s: SpaceSpec, t: f64) -> TruncatedOperator {
    let terms = generator_terms(d, s);
    let (ca, cb) = generator_coefficients(d, t);
    &(&terms.h1.scale(t) + &terms.a.scale(ca)) - &terms.b.scale(cb)
}

/// The B term of the local generator alone.
pub fn local_generator_b_term(d: &QuadraticDynamics, s: SpaceSpec, t: f64) -> TruncatedOperator {
    let (_, cb) = generator_coefficients(d, t);
    generator_terms(d, s).b.scale(-cb)
}

fn generator_coefficients(d: &QuadraticDynamics, t: f64) -> (f64, f64) {
    let delta = d.delta();
    let sd = delta.sqrt();
    (((sd * t).cos() - 1.0) / delta, ((sd * t).sin() - sd * t) / delta.powf(1.5))
}

/// 4·Var[h] in the coherent state |ξ⟩.
pub fn generator_qfi(d: &QuadraticDynamics, xi: Complex64, t: f64, cutoff: usize) -> Result<f64> {
    let s = SpaceSpec::boson(cutoff)?;
    let psi = coherent_state(s, xi)?;
    Ok(4.0 * psi.variance(&local_generator(d, s, t)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Engine {
    Gaussian,
    Fock { cutoff: usize },
}

/// Richardson-combined finite difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub value: f64,
    /// Estimates with step h and h/2.
    pub coarse: f64,
    pub fine: f64,
    pub step: f64,
}

impl FdEstimate {
    fn combine(coarse: f64, fine: f64, step: f64, order: i32) -> Result<Self> {
        let scale = coarse.abs().max(fine.abs());
        if (coarse - fine).abs() > 1e-2 * scale {
            return Err(Error::FdUnstable(format!(
                "halving the step moved the estimate from {coarse} to {fine}"
            )));
        }
        let r = 2f64.powi(order);
        Ok(Self {
            value: (r * fine - coarse) / (r - 1.0),
            coarse,
            fine,
            step,
        })
    }
}

/// Relative finite-difference step in α′.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

fn model_at(alpha: f64, squeezing: f64) -> QuadraticModel {
    QuadraticModel::squeezed_oscillator(alpha, squeezing, 0.0, ModelOrigin::Extracted)
}

/// Moments of X at time t for parameter α′, by either engine.
fn x_moments(d: &QuadraticDynamics, alpha: f64, xi: Complex64, t: f64, engine: Engine) -> Result<(f64, f64)> {
    let model = model_at(alpha, d.squeezing);
    match engine {
        Engine::Gaussian => {
            let g = evolve_gaussian(&model, &GaussianState::coherent(xi), t);
            Ok((g.mean_x(), g.var_x()))
        }
        Engine::Fock { cutoff } => {
            let psi = fock_state(&model, xi, t, cutoff)?;
            let (x, _) = quadratures(psi.space());
            Ok((psi.expectation(&x).re, psi.variance(&x)))
        }
    }
}

fn fock_state(model: &QuadraticModel, xi: Complex64, t: f64, cutoff: usize) -> Result<QuantumState> {
    let s = SpaceSpec::boson(cutoff)?;
    let psi0 = coherent_state(s, xi)?;
    FockPropagator::new(&model.to_operator(s))?.evolve(&psi0, t)
}

/// QFI about α′ from finite differences of the evolved state.
pub fn qfi_numeric(d: &QuadraticDynamics, xi: Complex64, t: f64, engine: Engine) -> Result<FdEstimate> {
    let h = FD_RELATIVE_STEP * d.alpha.abs();
    let estimate = |step: f64| -> Result<f64> {
        match engine {
            Engine::Gaussian => {
                let init = GaussianState::coherent(xi);
                let lo = evolve_gaussian(&model_at(d.alpha - step, d.squeezing), &init, t);
                let hi = evolve_gaussian(&model_at(d.alpha + step, d.squeezing), &init, t);
                // 1 − |⟨ψ(α−h)|ψ(α+h)⟩| ≈ F(2h)²/8.
                Ok(2.0 * gaussian_infidelity(&lo, &hi) / (step * step))
            }
            Engine::Fock { cutoff } => {
                let states = [d.alpha - step, d.alpha, d.alpha + step]
                    .par_iter()
                    .map(|&a| fock_state(&model_at(a, d.squeezing), xi, t, cutoff))
                    .collect::<Result<Vec<_>>>()?;
                let psi = states[1].amplitudes();
                let dpsi: Vec<Complex64> = states[2]
                    .amplitudes()
                    .iter()
                    .zip(states[0].amplitudes())
                    .map(|(p, m)| (p - m) / (2.0 * step))
                    .collect();
                Ok(4.0 * (dot(&dpsi, &dpsi).re - dot(psi, &dpsi).norm_sqr()))
            }
        }
    };
    FdEstimate::combine(estimate(h)?, estimate(h / 2.0)?, h, 2)
}

/// I = (∂⟨X⟩/∂α′)² / Var X from a central difference of the mean.
pub fn inverted_variance_numeric(d: &QuadraticDynamics, xi: Complex64, t: f64, engine: Engine) -> Result<FdEstimate> {
    inverted_variance_with_step(d, xi, t, engine, FD_RELATIVE_STEP * d.alpha.abs())
}

fn inverted_variance_with_step(
    d: &QuadraticDynamics,
    xi: Complex64,
    t: f64,
    engine: Engine,
    h: f64,
) -> Result<FdEstimate> {
    let alphas = [d.alpha - h, d.alpha - h / 2.0, d.alpha, d.alpha + h / 2.0, d.alpha + h];
    let moments = alphas
        .par_iter()
        .map(|&a| x_moments(d, a, xi, t, engine))
        .collect::<Result<Vec<_>>>()?;
    let var = moments[2].1;
    let coarse = ((moments[4].0 - moments[0].0) / (2.0 * h)).powi(2) / var;
    let fine = ((moments[3].0 - moments[1].0) / h).powi(2) / var;
    FdEstimate::combine(coarse, fine, h, 2)
}

/// Inverted variance about g through I_g = (∂α/∂g)²·I_α.
pub fn inverted_variance_g_numeric(p: &ModelParams, xi: Complex64, t: f64, engine: Engine) -> Result<f64> {
    let d = QuadraticDynamics::from_params(p)?;
    Ok(p.dalpha_dg().powi(2) * inverted_variance_numeric(&d, xi, t, engine)?.value)
}

/// Inverted variance about an arbitrary scalar parameter of a Fock-space
/// Hamiltonian family, with X read on the field.
pub fn inverted_variance_family<F>(
    build: F,
    center: f64,
    step: f64,
    psi0: &QuantumState,
    t: f64,
    opts: &PropagatorOptions,
) -> Result<FdEstimate>
where
    F: Fn(f64) -> Result<TruncatedOperator> + Sync,
{
    let points = [center - step, center - step / 2.0, center, center + step / 2.0, center + step];
    let (x, _) = quadratures(psi0.space());
    let moments = points
        .par_iter()
        .map(|&v| {
            let psi = FockPropagator::with_options(&build(v)?, *opts)?.evolve(psi0, t)?;
            Ok((psi.expectation(&x).re, psi.variance(&x)))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let var = moments[2].1;
    let coarse = ((moments[4].0 - moments[0].0) / (2.0 * step)).powi(2) / var;
    let fine = ((moments[3].0 - moments[1].0) / step).powi(2) / var;
    FdEstimate::combine(coarse, fine, step, 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomodyneConfig {
    pub shots: usize,
    pub seed: u64,
    /// Index of the parameter point, so that sweeps draw independent streams.
    pub point: u64,
    /// Step in α′ relative to α′ for the sampled susceptibility.
    pub rel_step: f64,
}

impl HomodyneConfig {
    pub fn new(shots: usize, seed: u64) -> Self {
        Self {
            shots,
            seed,
            point: 0,
            rel_step: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomodyneEstimate {
    pub mean_x: f64,
    pub var_x: f64,
    /// ΔX = √(Σ(x_j − mean)²/shots).
    pub delta_x: f64,
    pub inverted_variance: f64,
    pub shots: usize,
}

const SHOT_BLOCK: usize = 1 << 16;

#[derive(Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(self, other: Self) -> Self {
        let count = self.count + other.count;
        if count == 0.0 {
            return self;
        }
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

/// Samples `shots` homodyne outcomes of N(mean, var); every block of shots has
/// its own ChaCha stream keyed by (point, setting, block), and blocks are
/// merged in index order.
fn sample_moments(mean: f64, var: f64, shots: usize, seed: u64, point: u64, setting: u64) -> Result<Moments> {
    let normal = Normal::new(mean, var.sqrt()).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let blocks = shots.div_ceil(SHOT_BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((point << 40) | (setting << 32) | b as u64);
            let n = SHOT_BLOCK.min(shots - b * SHOT_BLOCK);
            let mut m = Moments {
                count: 0.0,
                mean: 0.0,
                m2: 0.0,
            };
            for _ in 0..n {
                let x = normal.sample(&mut rng);
                m.count += 1.0;
                let delta = x - m.mean;
                m.mean += delta / m.count;
                m.m2 += delta * (x - m.mean);
            }
            m
        })
        .collect();
    Ok(parts.into_iter().fold(
        Moments {
            count: 0.0,
            mean: 0.0,
            m2: 0.0,
        },
        Moments::merge,
    ))
}

/// Simulated homodyne readout at time t, with the susceptibility taken from
/// two independently sampled settings α′ ± h.
pub fn homodyne_estimate(d: &QuadraticDynamics, xi: Complex64, t: f64, cfg: &HomodyneConfig) -> Result<HomodyneEstimate> {
    if cfg.shots < 2 {
        return Err(Error::TooFewShots(cfg.shots));
    }
    let h = cfg.rel_step * d.alpha.abs();
    let settings = [d.alpha, d.alpha - h, d.alpha + h];
    let samples = settings
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let (m, v) = x_moments(d, a, xi, t, Engine::Gaussian)?;
            sample_moments(m, v, cfg.shots, cfg.seed, cfg.point, k as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let var_x = samples[0].m2 / samples[0].count;
    let chi = (samples[2].mean - samples[1].mean) / (2.0 * h);
    Ok(HomodyneEstimate {
        mean_x: samples[0].mean,
        var_x,
        delta_x: var_x.sqrt(),
        inverted_variance: chi * chi / var_x,
        shots: cfg.shots,
    })
}

/// The deterministic counterpart of [`homodyne_estimate`] with the same step.
pub fn homodyne_reference(d: &QuadraticDynamics, xi: Complex64, t: f64, cfg: &HomodyneConfig) -> Result<f64> {
    let h = cfg.rel_step * d.alpha.abs();
    let (lo, _) = x_moments(d, d.alpha - h, xi, t, Engine::Gaussian)?;
    let (hi, _) = x_moments(d, d.alpha + h, xi, t, Engine::Gaussian)?;
    let (_, var) = x_moments(d, d.alpha, xi, t, Engine::Gaussian)?;
    Ok(((hi - lo) / (2.0 * h)).powi(2) / var)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub var_x: Vec<f64>,
    pub qfi: Vec<f64>,
    /// QFI with only the B term of the generator kept.
    pub qfi_closed_form: Vec<f64>,
    pub inv_var: Vec<f64>,
    pub engine: Engine,
    pub dynamics: QuadraticDynamics,
    pub xi: Complex64,
    /// Var[P²] of the initial coherent state used by `qfi_closed_form`.
    pub var_p2: f64,
}

impl ProtocolResult {
    /// Times where I exceeds F by more than the relative tolerance.
    pub fn cramer_rao_violations(&self, rel_tol: f64) -> Vec<usize> {
        self.inv_var
            .iter()
            .zip(&self.qfi)
            .enumerate()
            .filter(|(_, (i, f))| **i > **f * (1.0 + rel_tol) + 1e-300)
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn run_protocol(d: &QuadraticDynamics, xi: Complex64, times: &[f64], engine: Engine) -> Result<ProtocolResult> {
    let var_p2 = var_p2_coherent(xi, coherent_cutoff(xi))?;
    let rows = times
        .par_iter()
        .map(|&t| {
            let (m, v) = x_moments(d, d.alpha, xi, t, engine)?;
            let f = if t == 0.0 { 0.0 } else { qfi_numeric(d, xi, t, engine)?.value };
            let i = if t == 0.0 {
                0.0
            } else {
                inverted_variance_numeric(d, xi, t, engine)?.value
            };
            Ok((m, v, f, d.qfi(t, var_p2), i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProtocolResult {
        times: times.to_vec(),
        mean_x: rows.iter().map(|r| r.0).collect(),
        var_x: rows.iter().map(|r| r.1).collect(),
        qfi: rows.iter().map(|r| r.2).collect(),
        qfi_closed_form: rows.iter().map(|r| r.3).collect(),
        inv_var: rows.iter().map(|r| r.4).collect(),
        engine,
        dynamics: *d,
        xi,
        var_p2,
    })
}

/// Fock cutoff for the protocol: three times the largest mean photon number
/// reached over one period, plus a margin.
pub fn protocol_cutoff(d: &QuadraticDynamics, xi: Complex64) -> usize {
    let model = model_at(d.alpha, d.squeezing);
    let init = GaussianState::coherent(xi);
    let period = d.revival_time(2);
    let n_max = (0..=128)
        .map(|k| {
            let g = evolve_gaussian(&model, &init, period * k as f64 / 128.0);
            let x2 = g.cov[0][0] + g.mean[0] * g.mean[0];
            let p2 = g.cov[1][1] + g.mean[1] * g.mean[1];
            (x2 + p2 - 1.0) / 2.0
        })
        .fold(0.0, f64::max);
    let c = (3.0 * n_max + 60.0).ceil() as usize;
    c + c % 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_amplitudes, number, overlap};

    fn dynamics(g: f64) -> QuadraticDynamics {
        let p = ModelParams::at_g(g, vec![1.0], 20.0, 0.1).unwrap();
        QuadraticDynamics::from_params(&p).unwrap()
    }

    #[test]
    fn isotropic_oscillator_rotates_means() {
        let alpha = 0.3;
        let model = model_at(alpha, 0.0);
        let xi = Complex64::new(1.0, 0.5);
        let init = GaussianState::coherent(xi);
        for t in [0.3, 1.7, 5.0] {
            let g = evolve_gaussian(&model, &init, t);
            let rotated = GaussianState::coherent(xi * Complex64::from_polar(1.0, -2.0 * alpha * t));
            assert!((g.mean[0] - rotated.mean[0]).abs() < 1e-12);
            assert!((g.mean[1] - rotated.mean[1]).abs() < 1e-12);
            assert!((g.cov[0][0] - 0.5).abs() < 1e-14 && g.cov[0][1].abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_moments_match_closed_form() {
        let d = dynamics(0.96);
        let xi = Complex64::new(0.7, 3.0);
        let model = model_at(d.alpha, d.squeezing);
        for k in 0..20 {
            let t = d.revival_time(2) * k as f64 / 19.0;
            let g = evolve_gaussian(&model, &GaussianState::coherent(xi), t);
            let (m, v) = d.quadrature_stats(xi, t);
            assert!((g.mean_x() - m).abs() < 1e-12 * m.abs().max(1.0));
            assert!((g.var_x() - v).abs() < 1e-12 * v.max(1.0));
            assert!((g.determinant() - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn first_revival_restores_variance_and_inverts_means() {
        let d = dynamics(0.9);
        let xi = Complex64::new(0.4, -1.2);
        let init = GaussianState::coherent(xi);
        let model = model_at(d.alpha, d.squeezing);
        let half = evolve_gaussian(&model, &init, d.revival_time(1));
        assert!((half.mean[0] + init.mean[0]).abs() < 1e-10);
        assert!((half.mean[1] + init.mean[1]).abs() < 1e-10);
        let full = evolve_gaussian(&model, &init, d.revival_time(2));
        for i in 0..2 {
            assert!((full.mean[i] - init.mean[i]).abs() < 1e-10);
            for j in 0..2 {
                assert!((half.cov[i][j] - init.cov[i][j]).abs() < 1e-10);
                assert!((full.cov[i][j] - init.cov[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn linear_drive_displaces_the_mean() {
        // ω a†a + f·X has its minimum at X = −f/ω.
        let model = QuadraticModel {
            cxx: 0.5,
            cpp: 0.5,
            cxp: 0.0,
            cx: 0.8,
            cp: 0.0,
            c0: 0.0,
            origin: ModelOrigin::Extracted,
        };
        let vac = GaussianState::coherent(Complex64::new(0.0, 0.0));
        let g = evolve_gaussian(&model, &vac, std::f64::consts::PI);
        assert!((g.mean[0] + 1.6).abs() < 1e-12);
    }

    #[test]
    fn invalid_covariance_is_rejected() {
        let bad = GaussianState {
            mean: [0.0, 0.0],
            cov: [[0.1, 0.0], [0.0, 0.1]],
        };
        assert!(bad.validate().is_err());
        assert!(GaussianState::coherent(Complex64::new(1.0, 1.0)).validate().is_ok());
    }

    #[test]
    fn gaussian_infidelity_of_coherent_states() {
        let a = GaussianState::coherent(Complex64::new(0.3, 0.1));
        let b = GaussianState::coherent(Complex64::new(0.3005, 0.1));
        // |⟨α|β⟩| = e^{−|α−β|²/2}.
        let expected = -(-0.0005f64.powi(2) / 2.0).exp_m1();
        assert!((gaussian_infidelity(&a, &b) - expected).abs() < 1e-18);
    }

    #[test]
    fn number_operator_rotates_coherent_states() {
        let s = SpaceSpec::boson(40).unwrap();
        let xi = Complex64::new(1.2, 0.4);
        let psi0 = coherent_state(s, xi).unwrap();
        let t = 0.9;
        let psi = &evolve_fock(&number(s), &psi0, t, 1).unwrap()[1];
        let target = QuantumState::new(
            s,
            coherent_amplitudes(40, xi * Complex64::from_polar(1.0, -t)),
            Gauge::Free,
        )
        .unwrap();
        assert!(overlap(psi, &target).unwrap().norm() > 1.0 - 1e-10);
    }

    #[test]
    fn krylov_matches_dense_propagation() {
        let d = dynamics(0.9);
        let s = SpaceSpec::boson(120).unwrap();
        let h = model_at(d.alpha, d.squeezing).to_operator(s);
        let psi0 = coherent_state(s, Complex64::new(0.5, 1.5)).unwrap();
        let dense = FockPropagator::new(&h).unwrap();
        let opts = PropagatorOptions {
            dense_block_limit: 0,
            ..Default::default()
        };
        let krylov = FockPropagator::with_options(&h, opts).unwrap();
        assert!(dense.is_dense() && !krylov.is_dense());
        let t = d.revival_time(1) * 0.7;
        let a = dense.evolve(&psi0, t).unwrap();
        let b = krylov.evolve(&psi0, t).unwrap();
        let diff: f64 = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn fock_engine_matches_gaussian_moments() {
        let d = dynamics(0.9);
        let xi = Complex64::new(1.0, 3.0);
        for t in [0.5, 3.0, d.revival_time(1) * 0.6] {
            let (mg, vg) = x_moments(&d, d.alpha, xi, t, Engine::Gaussian).unwrap();
            let (mf, vf) = x_moments(&d, d.alpha, xi, t, Engine::Fock { cutoff: 128 }).unwrap();
            assert!((mg - mf).abs() < 1e-6 && (vg - vf).abs() < 1e-6, "{t}: {mg} {mf} {vg} {vf}");
        }
    }

    #[test]
    fn edge_occupancy_is_reported() {
        let d = dynamics(0.96);
        let err = x_moments(&d, d.alpha, Complex64::new(0.0, 3.0), d.revival_time(1) / 2.0, Engine::Fock {
            cutoff: 40,
        });
        assert!(matches!(err, Err(Error::EdgeOccupancy(_))));
    }

    #[test]
    fn full_model_trajectory_conserves_parity() {
        let p = ModelParams::homogeneous(2, 5.0, 0.6, 0.1).unwrap();
        let s = SpaceSpec::qubits(40, 2).unwrap();
        let h = crate::models::full_hamiltonian(&p, s).unwrap();
        let psi0 = coherent_state(s, Complex64::new(0.8, 0.3)).unwrap();
        let pi = parity_operator(s);
        let start = psi0.expectation(&pi).re;
        for psi in evolve_fock(&h, &psi0, 4.0, 8).unwrap() {
            assert!((psi.expectation(&pi).re - start).abs() < 1e-8);
        }
    }

    #[test]
    fn identities_hold_on_the_interior() {
        let d = dynamics(0.9);
        let r = operator_identity_check(&d, 64).unwrap();
        assert!(r.max_residual() < 1e-10, "{r:?}");
    }

    #[test]
    fn generator_vanishes_at_zero_and_is_hermitian() {
        let d = dynamics(0.96);
        let s = SpaceSpec::boson(30).unwrap();
        assert_eq!(local_generator(&d, s, 0.0).matrix().max_abs(), 0.0);
        assert!(local_generator(&d, s, 3.0).hermitian_deviation() < 1e-12);
    }

    #[test]
    fn generator_variance_matches_exact_coherent_qfi() {
        let d = dynamics(0.96);
        let xi = Complex64::new(0.0, 3.0);
        let t = d.revival_time(1);
        let f = generator_qfi(&d, xi, t, 200).unwrap();
        let exact = d.qfi_coherent(xi, t);
        assert!((f - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn b_term_alone_reproduces_closed_form_near_critical() {
        let d = dynamics(0.98);
        let xi = Complex64::new(0.0, 3.0);
        let var_p2 = var_p2_coherent(xi, 200).unwrap();
        for t in [d.revival_time(1) / 2.0, d.revival_time(1)] {
            let s = SpaceSpec::boson(200).unwrap();
            let psi = coherent_state(s, xi).unwrap();
            let f = 4.0 * psi.variance(&local_generator_b_term(&d, s, t));
            let closed = d.qfi(t, var_p2);
            assert!((f - closed).abs() < 1e-2 * closed, "{f} vs {closed}");
        }
    }

    #[test]
    fn state_and_generator_qfi_agree() {
        let d = dynamics(0.96);
        let xi = Complex64::new(0.0, 3.0);
        for t in [d.revival_time(1) / 2.0, d.revival_time(1)] {
            let exact = d.qfi_coherent(xi, t);
            let g = qfi_numeric(&d, xi, t, Engine::Gaussian).unwrap().value;
            assert!((g - exact).abs() < 1e-3 * exact, "{g} vs {exact}");
        }
        let t = d.revival_time(1) / 2.0;
        let f = qfi_numeric(&d, xi, t, Engine::Fock { cutoff: 260 }).unwrap().value;
        let exact = d.qfi_coherent(xi, t);
        assert!((f - exact).abs() < 1e-2 * exact, "{f} vs {exact}");
    }

    #[test]
    fn qfi_is_zero_at_start_and_grows_with_amplitude() {
        let d = dynamics(0.96);
        let t = d.revival_time(1);
        let small = qfi_numeric(&d, Complex64::new(0.0, 1.0), t, Engine::Gaussian).unwrap().value;
        let large = qfi_numeric(&d, Complex64::new(0.0, 3.0), t, Engine::Gaussian).unwrap().value;
        assert!(large > small);
        let init = GaussianState::coherent(Complex64::new(0.0, 3.0));
        let same = evolve_gaussian(&model_at(d.alpha, d.squeezing), &init, 0.0);
        assert_eq!(gaussian_infidelity(&init, &same), 0.0);
    }

    #[test]
    fn inverted_variance_matches_closed_form_at_revival() {
        let d = dynamics(0.96);
        let xi = Complex64::new(0.0, 3.0);
        let i = inverted_variance_numeric(&d, xi, d.revival_time(1), Engine::Gaussian).unwrap().value;
        let closed = d.inverted_variance(xi, 1);
        assert!((i - closed).abs() < 1e-6 * closed);
        let shifted = inverted_variance_numeric(&d, Complex64::new(1.0, 3.0), d.revival_time(1), Engine::Gaussian)
            .unwrap()
            .value;
        assert!((shifted - i).abs() < 1e-6 * i);
    }

    #[test]
    fn protocol_respects_cramer_rao() {
        let d = dynamics(0.96);
        let xi = Complex64::new(0.3, 2.0);
        let times: Vec<f64> = (0..25).map(|k| d.revival_time(2) * k as f64 / 24.0).collect();
        let r = run_protocol(&d, xi, &times, Engine::Gaussian).unwrap();
        assert!(r.cramer_rao_violations(1e-6).is_empty(), "{:?}", r.inv_var.iter().zip(&r.qfi).collect::<Vec<_>>());
        assert!((r.var_p2 - (0.5 + 4.0 * xi.im * xi.im)).abs() < 1e-9);
    }

    #[test]
    fn homodyne_is_reproducible_and_unbiased() {
        let d = dynamics(0.96);
        let xi = Complex64::new(0.0, 3.0);
        let t = d.revival_time(1) / 3.0;
        let cfg = HomodyneConfig::new(1000, 7);
        let a = homodyne_estimate(&d, xi, t, &cfg).unwrap();
        let b = homodyne_estimate(&d, xi, t, &cfg).unwrap();
        assert_eq!(a.mean_x.to_bits(), b.mean_x.to_bits());
        let (m, v) = d.quadrature_stats(xi, t);
        let within = (0..100)
            .filter(|&seed| {
                let e = homodyne_estimate(&d, xi, t, &HomodyneConfig::new(1000, seed)).unwrap();
                (e.mean_x - m).abs() < 5.0 * v.sqrt() / 1000f64.sqrt()
            })
            .count();
        assert!(within >= 95);
        assert!(matches!(
            homodyne_estimate(&d, xi, t, &HomodyneConfig::new(1, 0)),
            Err(Error::TooFewShots(1))
        ));
    }

    #[test]
    fn protocol_cutoff_holds_the_state() {
        let d = dynamics(0.96);
        let xi = Complex64::new(0.0, 1.0);
        let c = protocol_cutoff(&d, xi);
        assert!(x_moments(&d, d.alpha, xi, d.revival_time(1), Engine::Fock { cutoff: c }).is_ok());
    }
}
