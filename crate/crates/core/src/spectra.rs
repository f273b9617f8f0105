//! Lowest eigenpairs of truncated Hamiltonians.
//!
//! Small problems go through a dense symmetric eigensolver (real arithmetic
//! whenever the matrix is real). Larger ones use a thick-restart Krylov
//! Rayleigh-Ritz iteration with full reorthogonalisation.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::phase_quantities;
use crate::error::{Error, Result};
use crate::hilbert::{
    dot, fix_gauge, norm, parity_operator, Gauge, QuantumState, SpaceSpec, TruncatedOperator,
    TruncationPolicy, TruncationReport,
};
use crate::models::{self, ModelParams, Phase};
use crate::sparse::CsrMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Dense,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Dimensions up to this size are solved densely.
    pub dense_threshold: usize,
    /// Convergence threshold on ‖Hv − Ev‖ relative to ‖H‖.
    pub tol: f64,
    pub max_matvecs: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            dense_threshold: 4096,
            tol: 1e-10,
            max_matvecs: 10_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenstates: Vec<QuantumState>,
    pub solver: SolverKind,
    pub residuals: Vec<f64>,
}

pub fn eig_lowest(h: &TruncatedOperator, k: usize) -> Result<EigenResult> {
    eig_lowest_with(h, k, &EigenOptions::default())
}

pub fn eig_lowest_with(h: &TruncatedOperator, k: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let dim = h.dim();
    if k > dim || k == 0 {
        return Err(Error::TooManyEigenpairs { requested: k, dim });
    }
    let (values, vectors, solver) = lowest_eigenpairs(h.matrix(), k, opts)?;
    package(h, values, vectors, solver)
}

/// Lowest `k` eigenpairs of a Hermitian matrix, ascending and gauge-fixed.
pub fn lowest_eigenpairs(
    m: &CsrMatrix,
    k: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<Complex64>>, SolverKind)> {
    let dim = m.nrows();
    if k > dim || k == 0 {
        return Err(Error::TooManyEigenpairs { requested: k, dim });
    }
    if dim <= opts.dense_threshold {
        let (v, x) = dense_lowest(m, k);
        Ok((v, x, SolverKind::Dense))
    } else {
        let (v, x) = krylov_lowest(m, k, opts)?;
        Ok((v, x, SolverKind::Iterative))
    }
}

fn package(
    h: &TruncatedOperator,
    values: Vec<f64>,
    vectors: Vec<Vec<Complex64>>,
    solver: SolverKind,
) -> Result<EigenResult> {
    let residuals = values
        .iter()
        .zip(&vectors)
        .map(|(&e, v)| residual_norm(h.matrix(), v, e))
        .collect();
    let eigenstates = vectors
        .into_iter()
        .map(|v| QuantumState::new(h.space(), v, Gauge::LargestReal))
        .collect::<Result<_>>()?;
    Ok(EigenResult {
        eigenvalues: values,
        eigenstates,
        solver,
        residuals,
    })
}

pub fn residual_norm(m: &CsrMatrix, v: &[Complex64], e: f64) -> f64 {
    let hv = m.apply(v);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - b * e).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// All eigenpairs of a dense Hermitian matrix, ascending.
pub fn dense_eigh(m: &CsrMatrix) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    dense_lowest(m, m.nrows())
}

fn dense_lowest(m: &CsrMatrix, k: usize) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    if m.is_real() {
        let eig = SymmetricEigen::new(m.to_dense_real());
        let order = ascending(eig.eigenvalues.as_slice());
        let values = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
        let vectors = order
            .iter()
            .take(k)
            .map(|&i| {
                let mut v: Vec<Complex64> =
                    eig.eigenvectors.column(i).iter().map(|&x| Complex64::new(x, 0.0)).collect();
                fix_gauge(&mut v);
                v
            })
            .collect();
        (values, vectors)
    } else {
        let eig = SymmetricEigen::new(m.to_dense());
        let order = ascending(eig.eigenvalues.as_slice());
        let values = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
        let vectors = order
            .iter()
            .take(k)
            .map(|&i| {
                let mut v: Vec<Complex64> = eig.eigenvectors.column(i).iter().copied().collect();
                fix_gauge(&mut v);
                v
            })
            .collect();
        (values, vectors)
    }
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Orthogonalises `w` against `basis` twice (classical Gram-Schmidt with
/// reorthogonalisation) and returns its remaining norm.
fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= y * c);
        }
    }
    norm(w)
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng, basis: &[Vec<Complex64>]) -> Vec<Complex64> {
    loop {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let n = orthogonalize(&mut v, basis);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

fn krylov_lowest(m: &CsrMatrix, k: usize, opts: &EigenOptions) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let dim = m.nrows();
    let hnorm = m.norm_inf().max(f64::MIN_POSITIVE);
    let max_basis = dim.min((2 * k + 40).max(60));
    let keep = (k + 10).min(max_basis / 2).max(k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<Complex64>> = Vec::with_capacity(max_basis);
    let mut matvecs = 0usize;
    let mut next = random_unit(dim, &mut rng, &basis);
    loop {
        // Extend the basis by Krylov steps from `next`.
        while basis.len() < max_basis {
            let image = m.apply(&next);
            matvecs += 1;
            basis.push(next);
            images.push(image.clone());
            if basis.len() == max_basis {
                break;
            }
            let mut w = image;
            let n = orthogonalize(&mut w, &basis);
            next = if n > 1e-12 * hnorm {
                w.iter_mut().for_each(|x| *x /= n);
                w
            } else {
                random_unit(dim, &mut rng, &basis)
            };
        }
        // Rayleigh-Ritz on the current subspace.
        let size = basis.len();
        let t = DMatrix::from_fn(size, size, |i, j| dot(&basis[i], &images[j]));
        let t = (&t + t.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(t);
        let order = ascending(eig.eigenvalues.as_slice());
        let ritz = |idx: usize, src: &[Vec<Complex64>]| -> Vec<Complex64> {
            let y = eig.eigenvectors.column(order[idx]);
            let mut out = vec![ZERO; dim];
            for (b, c) in src.iter().zip(y.iter()) {
                out.iter_mut().zip(b).for_each(|(o, x)| *o += x * c);
            }
            out
        };
        let mut vectors = Vec::with_capacity(keep);
        let mut vec_images = Vec::with_capacity(keep);
        let mut worst = 0.0f64;
        let mut first_bad: Option<Vec<Complex64>> = None;
        for idx in 0..keep.min(size) {
            let u = ritz(idx, &basis);
            let hu = ritz(idx, &images);
            if idx < k {
                let theta = eig.eigenvalues[order[idx]];
                let r: Vec<Complex64> = hu.iter().zip(&u).map(|(a, b)| a - b * theta).collect();
                let rn = norm(&r);
                worst = worst.max(rn);
                if rn > opts.tol * hnorm && first_bad.is_none() {
                    first_bad = Some(r);
                }
            }
            vectors.push(u);
            vec_images.push(hu);
        }
        if first_bad.is_none() {
            let values = (0..k).map(|i| eig.eigenvalues[order[i]]).collect();
            vectors.truncate(k);
            for v in vectors.iter_mut() {
                let n = norm(v);
                v.iter_mut().for_each(|x| *x /= n);
                fix_gauge(v);
            }
            return Ok((values, vectors));
        }
        if matvecs >= opts.max_matvecs || size == dim {
            return Err(Error::NoConvergence {
                iterations: matvecs,
                residual: worst / hnorm,
            });
        }
        // Thick restart: keep the leading Ritz vectors, continue from a residual.
        basis = vectors;
        images = vec_images;
        let mut r = first_bad.unwrap_or_default();
        let n = orthogonalize(&mut r, &basis);
        next = if n > 1e-12 * hnorm {
            r.iter_mut().for_each(|x| *x /= n);
            r
        } else {
            random_unit(dim, &mut rng, &basis)
        };
    }
}

fn commutes_with_parity(h: &TruncatedOperator) -> Result<()> {
    let res = h.commutator(&parity_operator(h.space())).matrix().max_abs();
    if res > 1e-12 * h.matrix().max_abs().max(1.0) {
        return Err(Error::ParityBroken(res));
    }
    Ok(())
}

/// Lowest `k` eigenpairs inside one Z₂ sector, embedded back in the full space.
pub fn sector_eig(h: &TruncatedOperator, sector: i8, k: usize, opts: &EigenOptions) -> Result<EigenResult> {
    commutes_with_parity(h)?;
    let space = h.space();
    let keep = space.parity_sector(sector);
    let sub = h.matrix().submatrix(&keep);
    let (values, vectors, solver) = lowest_eigenpairs(&sub, k, opts)?;
    let embedded = vectors
        .into_iter()
        .map(|v| {
            let mut full = vec![ZERO; space.dim()];
            for (&i, &a) in keep.iter().zip(&v) {
                full[i] = a;
            }
            full
        })
        .collect();
    package(h, values, embedded, solver)
}

pub fn parity_resolved_ground(h: &TruncatedOperator, sector: i8) -> Result<QuantumState> {
    let mut r = sector_eig(h, sector, 1, &EigenOptions::default())?;
    Ok(r.eigenstates.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    GroundEnergy,
    /// Lowest odd-sector level minus the even ground (normal phase).
    Gap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub beta: f64,
    pub full: f64,
    pub effective: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub truncation: TruncationReport,
}

fn full_observable(p: &ModelParams, cutoff: usize, observable: Observable) -> Result<f64> {
    let s = SpaceSpec::qubits(cutoff, p.n_qubits())?;
    let h = models::full_hamiltonian(p, s)?;
    let opts = EigenOptions::default();
    let even = sector_eig(&h, 1, 1, &opts)?.eigenvalues[0];
    Ok(match observable {
        Observable::GroundEnergy => even,
        Observable::Gap => sector_eig(&h, -1, 1, &opts)?.eigenvalues[0] - even,
    })
}

/// Full-model value against the effective-model prediction at each β (g fixed).
pub fn spectral_agreement(
    p: &ModelParams,
    betas: &[f64],
    observable: Observable,
    cutoff: usize,
    policy: &TruncationPolicy,
) -> Result<Vec<AgreementRow>> {
    betas
        .iter()
        .map(|&beta| {
            let pb = p.with_beta(beta)?;
            let q = phase_quantities(&pb);
            if observable == Observable::Gap && q.phase == Phase::Superradiant {
                return Err(Error::PhaseDomain {
                    quantity: "gap comparison",
                    required: "normal",
                    g: pb.g(),
                });
            }
            let effective = match observable {
                Observable::GroundEnergy => q.ground_energy,
                Observable::Gap => q.epsilon,
            };
            let (vals, truncation) = policy.check(cutoff, |c| Ok(vec![full_observable(&pb, c, observable)?]))?;
            let full = vals[0];
            let abs_error = (full - effective).abs();
            Ok(AgreementRow {
                beta,
                full,
                effective,
                abs_error,
                rel_error: abs_error / effective.abs(),
                truncation,
            })
        })
        .collect()
}

/// Three-way ground-energy comparison between the full model, H_np and the
/// quartic-corrected H_np (normal phase).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticComparison {
    pub full: f64,
    pub uncorrected: f64,
    pub corrected: f64,
    /// corrected − full; a value below −1e-6 is flagged.
    pub corrected_minus_full: f64,
    pub below_full: bool,
}

pub fn quartic_comparison(p: &ModelParams, cutoff: usize) -> Result<QuarticComparison> {
    let full = full_observable(p, cutoff, Observable::GroundEnergy)?;
    let s = SpaceSpec::boson(cutoff)?;
    let corrected = eig_lowest(&models::corrected_normal_effective(p, s)?, 1)?.eigenvalues[0];
    let uncorrected = phase_quantities(p).ground_energy;
    Ok(QuarticComparison {
        full,
        uncorrected,
        corrected,
        corrected_minus_full: corrected - full,
        below_full: corrected < full - 1e-6,
    })
}
