//! Truncated boson ⊗ qubit spaces, operators on them and pure states.
//!
//! Tensor order is boson ⊗ qubit_1 ⊗ … ⊗ qubit_N, with qubit_1 the most
//! significant bit of the auxiliary index. Qubit basis: |e⟩ = (1,0) is bit 0,
//! |g⟩ = (0,1) is bit 1, so σ_z|e⟩ = +|e⟩ and the all-ground configuration
//! sits at auxiliary index 2^N − 1. In Holstein-Primakoff mode the auxiliary
//! factor is a second boson b with b†b = J_z + N/2, so all-ground is m = 0.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DEFAULT_DIMENSION_BUDGET: usize = 1 << 22;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub fock_cutoff: usize,
    pub n_qubits: usize,
    pub hp_mode: bool,
    /// Dimension of the HP boson; ignored unless `hp_mode`.
    pub hp_cutoff: usize,
}

impl SpaceSpec {
    pub fn boson(fock_cutoff: usize) -> Result<Self> {
        Self::qubits(fock_cutoff, 0)
    }

    pub fn qubits(fock_cutoff: usize, n_qubits: usize) -> Result<Self> {
        let spec = Self {
            fock_cutoff,
            n_qubits,
            hp_mode: false,
            hp_cutoff: 0,
        };
        spec.validate(DEFAULT_DIMENSION_BUDGET)?;
        Ok(spec)
    }

    /// Collective-spin space with the full HP ladder m = 0..=N.
    pub fn holstein_primakoff(fock_cutoff: usize, n_qubits: usize) -> Result<Self> {
        Self::holstein_primakoff_truncated(fock_cutoff, n_qubits, n_qubits + 1)
    }

    pub fn holstein_primakoff_truncated(
        fock_cutoff: usize,
        n_qubits: usize,
        hp_cutoff: usize,
    ) -> Result<Self> {
        let spec = Self {
            fock_cutoff,
            n_qubits,
            hp_mode: true,
            hp_cutoff,
        };
        spec.validate(DEFAULT_DIMENSION_BUDGET)?;
        Ok(spec)
    }

    pub fn validate(&self, budget: usize) -> Result<()> {
        if self.fock_cutoff < 2 {
            return Err(Error::InvalidSpace(format!(
                "fock_cutoff must be at least 2, got {}",
                self.fock_cutoff
            )));
        }
        if self.hp_mode {
            if self.n_qubits == 0 {
                return Err(Error::InvalidSpace(
                    "Holstein-Primakoff mode needs at least one qubit".into(),
                ));
            }
            if self.hp_cutoff == 0 || self.hp_cutoff > self.n_qubits + 1 {
                return Err(Error::InvalidSpace(format!(
                    "hp_cutoff must lie in 1..={}, got {}",
                    self.n_qubits + 1,
                    self.hp_cutoff
                )));
            }
        } else if self.n_qubits >= usize::BITS as usize - 1 {
            return Err(Error::DimensionBudget {
                dim: usize::MAX,
                budget,
            });
        }
        let dim = self
            .fock_cutoff
            .checked_mul(self.aux_dim())
            .unwrap_or(usize::MAX);
        if dim > budget {
            return Err(Error::DimensionBudget { dim, budget });
        }
        Ok(())
    }

    pub fn aux_dim(&self) -> usize {
        if self.hp_mode {
            self.hp_cutoff
        } else {
            1 << self.n_qubits
        }
    }

    pub fn dim(&self) -> usize {
        self.fock_cutoff * self.aux_dim()
    }

    /// Same layout with a different Fock cutoff.
    pub fn with_cutoff(&self, fock_cutoff: usize) -> Result<Self> {
        let spec = Self {
            fock_cutoff,
            ..*self
        };
        spec.validate(DEFAULT_DIMENSION_BUDGET)?;
        Ok(spec)
    }

    /// Auxiliary index with every qubit in |g⟩.
    pub fn ground_aux_index(&self) -> usize {
        if self.hp_mode {
            0
        } else {
            self.aux_dim() - 1
        }
    }

    /// Number of excited qubits in an auxiliary basis state.
    pub fn excitations(&self, aux: usize) -> usize {
        if self.hp_mode {
            aux
        } else {
            self.n_qubits - aux.count_ones() as usize
        }
    }

    pub fn split_index(&self, index: usize) -> (usize, usize) {
        (index / self.aux_dim(), index % self.aux_dim())
    }

    /// Z₂ parity (−1)^(n + excitations) of a basis state.
    pub fn parity_of(&self, index: usize) -> i8 {
        let (n, aux) = self.split_index(index);
        if (n + self.excitations(aux)).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// Basis indices of the given parity sector, ascending.
    pub fn parity_sector(&self, sector: i8) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.parity_of(i) == sector)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl Pauli {
    fn matrix(self) -> CsrMatrix {
        let i = Complex64::i();
        let entries: Vec<(usize, usize, Complex64)> = match self {
            Pauli::X => vec![(0, 1, ONE), (1, 0, ONE)],
            Pauli::Y => vec![(0, 1, -i), (1, 0, i)],
            Pauli::Z => vec![(0, 0, ONE), (1, 1, -ONE)],
            Pauli::Plus => vec![(0, 1, ONE)],
            Pauli::Minus => vec![(1, 0, ONE)],
        };
        CsrMatrix::from_triplets(2, 2, entries)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperator {
    space: SpaceSpec,
    matrix: CsrMatrix,
    hermitian_hint: bool,
}

impl TruncatedOperator {
    pub fn new(space: SpaceSpec, matrix: CsrMatrix, hermitian_hint: bool) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::InvalidSpace(format!(
                "matrix is {}x{} but the space has dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                space.dim()
            )));
        }
        if cfg!(debug_assertions) && hermitian_hint {
            let dev = matrix.hermitian_deviation();
            if dev >= 1e-12 * matrix.max_abs().max(1.0) {
                return Err(Error::NotHermitian(dev));
            }
        }
        Ok(Self {
            space,
            matrix,
            hermitian_hint,
        })
    }

    fn unchecked(space: SpaceSpec, matrix: CsrMatrix, hermitian_hint: bool) -> Self {
        Self {
            space,
            matrix,
            hermitian_hint,
        }
    }

    pub fn zero(space: SpaceSpec) -> Self {
        Self::unchecked(space, CsrMatrix::zeros(space.dim(), space.dim()), true)
    }

    pub fn identity(space: SpaceSpec) -> Self {
        Self::unchecked(space, CsrMatrix::identity(space.dim()), true)
    }

    /// `boson ⊗ aux`, where the factors are matrices on the two tensor factors.
    pub fn from_factors(space: SpaceSpec, boson: &CsrMatrix, aux: &CsrMatrix, hermitian: bool) -> Self {
        assert_eq!(boson.nrows(), space.fock_cutoff);
        assert_eq!(aux.nrows(), space.aux_dim());
        Self::unchecked(space, boson.kron(aux), hermitian)
    }

    pub fn space(&self) -> SpaceSpec {
        self.space
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn is_hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.matrix.hermitian_deviation()
    }

    pub fn adjoint(&self) -> Self {
        Self::unchecked(self.space, self.matrix.adjoint(), self.hermitian_hint)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::unchecked(self.space, self.matrix.scale(Complex64::new(s, 0.0)), self.hermitian_hint)
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        Self::unchecked(self.space, self.matrix.scale(s), self.hermitian_hint && s.im == 0.0)
    }

    pub fn plus_identity(&self, shift: f64) -> Self {
        self + &Self::identity(self.space).scale(shift)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        assert_same_space(self.space, other.space);
        Self::unchecked(self.space, self.matrix.commutator(&other.matrix), false)
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.matrix.apply(v)
    }

    /// Largest |entry| over rows and columns whose Fock index is below `levels`.
    pub fn max_abs_interior(&self, levels: usize) -> f64 {
        let aux = self.space.aux_dim();
        self.matrix
            .triplets()
            .filter(|&(i, j, _)| i / aux < levels && j / aux < levels)
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Operator-Schmidt split over auxiliary matrix units:
    /// `self = Σ boson_block(p,q) ⊗ |p⟩⟨q|`.
    pub fn aux_blocks(&self) -> Vec<((usize, usize), CsrMatrix)> {
        let aux = self.space.aux_dim();
        let n = self.space.fock_cutoff;
        let mut buckets: std::collections::BTreeMap<(usize, usize), Vec<(usize, usize, Complex64)>> =
            Default::default();
        for (i, j, v) in self.matrix.triplets() {
            buckets
                .entry((i % aux, j % aux))
                .or_default()
                .push((i / aux, j / aux, v));
        }
        buckets
            .into_iter()
            .map(|(k, t)| (k, CsrMatrix::from_triplets(n, n, t)))
            .collect()
    }

    pub fn from_aux_blocks(space: SpaceSpec, blocks: &[((usize, usize), CsrMatrix)], hermitian: bool) -> Self {
        let aux = space.aux_dim();
        let triplets = blocks.iter().flat_map(|((p, q), b)| {
            b.triplets()
                .map(move |(i, j, v)| (i * aux + p, j * aux + q, v))
        });
        Self::unchecked(space, CsrMatrix::from_triplets(space.dim(), space.dim(), triplets), hermitian)
    }
}

fn assert_same_space(a: SpaceSpec, b: SpaceSpec) {
    assert_eq!(a, b, "operators live in different spaces");
}

impl Add for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn add(self, rhs: Self) -> TruncatedOperator {
        assert_same_space(self.space, rhs.space);
        TruncatedOperator::unchecked(
            self.space,
            self.matrix.add_scaled(&rhs.matrix, ONE),
            self.hermitian_hint && rhs.hermitian_hint,
        )
    }
}

impl Sub for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn sub(self, rhs: Self) -> TruncatedOperator {
        assert_same_space(self.space, rhs.space);
        TruncatedOperator::unchecked(
            self.space,
            self.matrix.add_scaled(&rhs.matrix, -ONE),
            self.hermitian_hint && rhs.hermitian_hint,
        )
    }
}

impl Mul for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn mul(self, rhs: Self) -> TruncatedOperator {
        assert_same_space(self.space, rhs.space);
        TruncatedOperator::unchecked(self.space, self.matrix.matmul(&rhs.matrix), false)
    }
}

impl Mul<&TruncatedOperator> for f64 {
    type Output = TruncatedOperator;
    fn mul(self, rhs: &TruncatedOperator) -> TruncatedOperator {
        rhs.scale(self)
    }
}

impl Neg for &TruncatedOperator {
    type Output = TruncatedOperator;
    fn neg(self) -> TruncatedOperator {
        self.scale(-1.0)
    }
}

fn boson_lowering(cutoff: usize) -> CsrMatrix {
    CsrMatrix::from_triplets(
        cutoff,
        cutoff,
        (1..cutoff).map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0))),
    )
}

fn boson_diagonal(cutoff: usize, f: impl Fn(usize) -> f64) -> CsrMatrix {
    CsrMatrix::diagonal(&(0..cutoff).map(|n| Complex64::new(f(n), 0.0)).collect::<Vec<_>>())
}

/// Cavity annihilation operator a ⊗ 1.
pub fn annihilation(space: SpaceSpec) -> TruncatedOperator {
    TruncatedOperator::from_factors(
        space,
        &boson_lowering(space.fock_cutoff),
        &CsrMatrix::identity(space.aux_dim()),
        false,
    )
}

pub fn creation(space: SpaceSpec) -> TruncatedOperator {
    annihilation(space).adjoint()
}

pub fn number(space: SpaceSpec) -> TruncatedOperator {
    boson_function(space, |n| n as f64)
}

/// Diagonal operator f(a†a) ⊗ 1.
pub fn boson_function(space: SpaceSpec, f: impl Fn(usize) -> f64) -> TruncatedOperator {
    TruncatedOperator::from_factors(
        space,
        &boson_diagonal(space.fock_cutoff, f),
        &CsrMatrix::identity(space.aux_dim()),
        true,
    )
}

/// a² ⊗ 1, built from exact matrix elements.
pub fn annihilation_squared(space: SpaceSpec) -> TruncatedOperator {
    let c = space.fock_cutoff;
    let a2 = CsrMatrix::from_triplets(
        c,
        c,
        (2..c).map(|n| (n - 2, n, Complex64::new(((n * (n - 1)) as f64).sqrt(), 0.0))),
    );
    TruncatedOperator::from_factors(space, &a2, &CsrMatrix::identity(space.aux_dim()), false)
}

pub fn qubit_op(space: SpaceSpec, j: usize, which: Pauli) -> Result<TruncatedOperator> {
    if space.hp_mode {
        return Err(Error::HolsteinPrimakoffMode);
    }
    if j >= space.n_qubits {
        return Err(Error::QubitIndex {
            index: j,
            n_qubits: space.n_qubits,
        });
    }
    let before = CsrMatrix::identity(1 << j);
    let after = CsrMatrix::identity(1 << (space.n_qubits - j - 1));
    let aux = before.kron(&which.matrix()).kron(&after);
    let hermitian = matches!(which, Pauli::X | Pauli::Y | Pauli::Z);
    Ok(TruncatedOperator::from_factors(
        space,
        &CsrMatrix::identity(space.fock_cutoff),
        &aux,
        hermitian,
    ))
}

/// Operator acting only on the auxiliary factor: 1 ⊗ aux.
pub fn aux_operator(space: SpaceSpec, aux: &CsrMatrix, hermitian: bool) -> TruncatedOperator {
    TruncatedOperator::from_factors(space, &CsrMatrix::identity(space.fock_cutoff), aux, hermitian)
}

/// Collective J_z = b†b − N/2 in Holstein-Primakoff mode.
pub fn collective_jz(space: SpaceSpec) -> Result<TruncatedOperator> {
    require_hp(space)?;
    let j = space.n_qubits as f64 / 2.0;
    let d = boson_diagonal(space.hp_cutoff, |m| m as f64 - j);
    Ok(aux_operator(space, &d, true))
}

/// Collective J_− = √(2j − b†b)·b, the root clamped at zero.
pub fn collective_jminus(space: SpaceSpec) -> Result<TruncatedOperator> {
    require_hp(space)?;
    Ok(aux_operator(space, &hp_lowering(space), false))
}

pub fn collective_jplus(space: SpaceSpec) -> Result<TruncatedOperator> {
    Ok(collective_jminus(space)?.adjoint())
}

pub(crate) fn hp_lowering(space: SpaceSpec) -> CsrMatrix {
    let two_j = space.n_qubits as f64;
    // Row m of √(2j − b†b)·b carries √(2j − m)·√(m+1).
    CsrMatrix::from_triplets(
        space.hp_cutoff,
        space.hp_cutoff,
        (1..space.hp_cutoff).map(|m| {
            let root = (two_j - (m - 1) as f64).max(0.0).sqrt();
            (m - 1, m, Complex64::new(root * (m as f64).sqrt(), 0.0))
        }),
    )
}

fn require_hp(space: SpaceSpec) -> Result<()> {
    if space.hp_mode {
        Ok(())
    } else {
        Err(Error::InvalidSpace("collective operators need Holstein-Primakoff mode".into()))
    }
}

/// X = (a + a†)/√2 and P = i(a† − a)/√2.
pub fn quadratures(space: SpaceSpec) -> (TruncatedOperator, TruncatedOperator) {
    let a = annihilation(space);
    let ad = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&a + &ad).scale(s);
    let p = (&ad - &a).scale_complex(Complex64::new(0.0, s));
    (
        TruncatedOperator::unchecked(space, x.matrix, true),
        TruncatedOperator::unchecked(space, p.matrix, true),
    )
}

/// X², P² and XP + PX built from their normal-ordered forms, so that they
/// carry no truncation artefact at the top Fock level.
#[derive(Clone, Debug)]
pub struct QuadraticForms {
    pub x2: TruncatedOperator,
    pub p2: TruncatedOperator,
    pub xp_px: TruncatedOperator,
}

pub fn quadratic_forms(space: SpaceSpec) -> QuadraticForms {
    let a2 = annihilation_squared(space);
    let ad2 = a2.adjoint();
    let pair = &a2 + &ad2;
    let n_half = boson_function(space, |n| n as f64 + 0.5);
    let x2 = &pair.scale(0.5) + &n_half;
    let p2 = &pair.scale(-0.5) + &n_half;
    let xp_px = (&ad2 - &a2).scale_complex(Complex64::i());
    QuadraticForms {
        x2: TruncatedOperator::unchecked(space, x2.matrix, true),
        p2: TruncatedOperator::unchecked(space, p2.matrix, true),
        xp_px: TruncatedOperator::unchecked(space, xp_px.matrix, true),
    }
}

/// Z₂ parity exp(iπ(a†a + Σσ₊σ₋)) as a diagonal ±1 operator.
pub fn parity_operator(space: SpaceSpec) -> TruncatedOperator {
    let diag: Vec<Complex64> = (0..space.dim())
        .map(|i| Complex64::new(space.parity_of(i) as f64, 0.0))
        .collect();
    TruncatedOperator::unchecked(space, CsrMatrix::diagonal(&diag), true)
}

/// a†a plus the number of excited qubits (U(1) charge of the G = 0 model).
pub fn excitation_operator(space: SpaceSpec) -> TruncatedOperator {
    let diag: Vec<Complex64> = (0..space.dim())
        .map(|i| {
            let (n, aux) = space.split_index(i);
            Complex64::new((n + space.excitations(aux)) as f64, 0.0)
        })
        .collect();
    TruncatedOperator::unchecked(space, CsrMatrix::diagonal(&diag), true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// Amplitude of largest modulus made real and positive.
    LargestReal,
    /// Phase left as produced (time-evolved states).
    Free,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    space: SpaceSpec,
    amplitudes: Vec<Complex64>,
    gauge: Gauge,
}

impl QuantumState {
    /// Normalises `amplitudes` and applies `gauge`.
    pub fn new(space: SpaceSpec, mut amplitudes: Vec<Complex64>, gauge: Gauge) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::InvalidSpace(format!(
                "state has {} amplitudes but the space has dimension {}",
                amplitudes.len(),
                space.dim()
            )));
        }
        let norm = norm(&amplitudes);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidSpace("state vector has zero or non-finite norm".into()));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        if gauge == Gauge::LargestReal {
            fix_gauge(&mut amplitudes);
        }
        Ok(Self {
            space,
            amplitudes,
            gauge,
        })
    }

    pub fn basis(space: SpaceSpec, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; space.dim()];
        amplitudes[index] = ONE;
        Self {
            space,
            amplitudes,
            gauge: Gauge::LargestReal,
        }
    }

    /// |boson⟩ ⊗ |aux basis state⟩.
    pub fn product(space: SpaceSpec, boson: &[Complex64], aux_index: usize) -> Result<Self> {
        if boson.len() != space.fock_cutoff || aux_index >= space.aux_dim() {
            return Err(Error::InvalidSpace("product factors do not match the space".into()));
        }
        let aux = space.aux_dim();
        let mut amplitudes = vec![ZERO; space.dim()];
        for (n, &b) in boson.iter().enumerate() {
            amplitudes[n * aux + aux_index] = b;
        }
        Self::new(space, amplitudes, Gauge::Free)
    }

    pub fn space(&self) -> SpaceSpec {
        self.space
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn with_gauge(mut self, gauge: Gauge) -> Self {
        if gauge == Gauge::LargestReal {
            fix_gauge(&mut self.amplitudes);
        }
        self.gauge = gauge;
        self
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn expectation(&self, op: &TruncatedOperator) -> Complex64 {
        assert_same_space(self.space, op.space());
        dot(&self.amplitudes, &op.apply(&self.amplitudes))
    }

    /// ⟨O†O⟩ − |⟨O⟩|², i.e. the variance for Hermitian O.
    pub fn variance(&self, op: &TruncatedOperator) -> f64 {
        assert_same_space(self.space, op.space());
        let v = op.apply(&self.amplitudes);
        let mean = dot(&self.amplitudes, &v);
        dot(&v, &v).re - mean.norm_sqr()
    }

    /// Population of each Fock level, traced over the auxiliary factor.
    pub fn boson_populations(&self) -> Vec<f64> {
        let aux = self.space.aux_dim();
        self.amplitudes
            .chunks(aux)
            .map(|c| c.iter().map(|a| a.norm_sqr()).sum())
            .collect()
    }

    /// Probability carried by the top `levels` Fock states.
    pub fn edge_occupancy(&self, levels: usize) -> f64 {
        let pops = self.boson_populations();
        pops[pops.len().saturating_sub(levels)..].iter().sum()
    }
}

/// Coherent state |ξ⟩ ⊗ |g⟩^⊗N, normalised on the truncated space.
pub fn coherent_state(space: SpaceSpec, xi: Complex64) -> Result<QuantumState> {
    let norm_sq = xi.norm_sqr();
    if norm_sq > space.fock_cutoff as f64 / 4.0 {
        return Err(Error::TruncationGuard {
            norm_sq,
            cutoff: space.fock_cutoff,
            suggested: (4.0 * norm_sq).ceil() as usize,
        });
    }
    QuantumState::product(space, &coherent_amplitudes(space.fock_cutoff, xi), space.ground_aux_index())
}

/// Fock amplitudes e^{−|ξ|²/2} ξⁿ/√n!, generated recursively.
pub fn coherent_amplitudes(cutoff: usize, xi: Complex64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(cutoff);
    let mut c = Complex64::new((-xi.norm_sqr() / 2.0).exp(), 0.0);
    out.push(c);
    for n in 1..cutoff {
        c = c * xi / (n as f64).sqrt();
        out.push(c);
    }
    out
}

pub fn overlap(u: &QuantumState, v: &QuantumState) -> Result<Complex64> {
    if u.space != v.space {
        return Err(Error::SpaceMismatch(u.space, v.space));
    }
    Ok(dot(&u.amplitudes, &v.amplitudes))
}

/// 1 − |⟨u|v⟩| for unit vectors, computed without cancellation.
pub fn infidelity_amplitude(u: &[Complex64], v: &[Complex64]) -> f64 {
    let o = dot(u, v);
    let d2: f64 = u
        .iter()
        .zip(v)
        .map(|(a, b)| (b - a * o).norm_sqr())
        .sum();
    d2 / (1.0 + o.norm())
}

pub fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Rotates the phase so the first amplitude of maximal modulus is real positive.
pub fn fix_gauge(v: &mut [Complex64]) {
    let mut best = 0;
    let mut best_mod = -1.0;
    for (i, a) in v.iter().enumerate() {
        let m = a.norm_sqr();
        if m > best_mod {
            best = i;
            best_mod = m;
        }
    }
    if best_mod <= 0.0 {
        return;
    }
    let phase = v[best].conj() / v[best].norm();
    v.iter_mut().for_each(|a| *a *= phase);
    v[best] = Complex64::new(v[best].norm(), 0.0);
}

/// Runs a computation at `cutoff` and at `cutoff + delta`, flagging the
/// result when the two disagree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Δ as a fraction of the cutoff.
    pub delta_fraction: f64,
    pub rel_tol: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            delta_fraction: 0.25,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub cutoff: usize,
    pub extended_cutoff: usize,
    pub max_rel_diff: f64,
    pub warning: bool,
}

impl TruncationPolicy {
    pub fn extended(&self, cutoff: usize) -> usize {
        cutoff + ((cutoff as f64 * self.delta_fraction).ceil() as usize).max(1)
    }

    /// Evaluates `f` at both cutoffs and returns the base-cutoff values
    /// together with the comparison.
    pub fn check<F>(&self, cutoff: usize, f: F) -> Result<(Vec<f64>, TruncationReport)>
    where
        F: Fn(usize) -> Result<Vec<f64>>,
    {
        let extended_cutoff = self.extended(cutoff);
        let base = f(cutoff)?;
        let ext = f(extended_cutoff)?;
        let max_rel_diff = base
            .iter()
            .zip(&ext)
            .map(|(a, b)| relative_diff(*a, *b))
            .fold(0.0, f64::max);
        Ok((
            base,
            TruncationReport {
                cutoff,
                extended_cutoff,
                max_rel_diff,
                warning: max_rel_diff > self.rel_tol,
            },
        ))
    }
}

/// |a − b| / max(|a|, |b|), with an absolute floor so exact zeros compare equal.
pub fn relative_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn annihilation_on_two_levels() {
        let s = SpaceSpec::boson(2).unwrap();
        let d = annihilation(s).matrix().to_dense();
        assert_eq!(d[(0, 1)], ONE);
        assert_eq!(d[(0, 0)] + d[(1, 0)] + d[(1, 1)], ZERO);
    }

    #[test]
    fn number_operator_is_diagonal_counting() {
        let s = SpaceSpec::boson(4).unwrap();
        let a = annihilation(s);
        let n = &a.adjoint() * &a;
        for k in 0..4 {
            assert!(close(n.matrix().get(k, k), Complex64::new(k as f64, 0.0), 1e-15));
        }
        assert_eq!(n.matrix().nnz(), 3);
    }

    #[test]
    fn canonical_commutator_fails_only_on_top_level() {
        let s = SpaceSpec::qubits(12, 1).unwrap();
        let a = annihilation(s);
        let c = a.commutator(&a.adjoint());
        let id = TruncatedOperator::identity(s);
        let diff = &c - &id;
        assert!(diff.max_abs_interior(11) < 1e-14);
        assert!(diff.matrix().max_abs() > 1.0);
    }

    #[test]
    fn quadrature_commutator_is_i_on_interior() {
        let s = SpaceSpec::boson(20).unwrap();
        let (x, p) = quadratures(s);
        let c = x.commutator(&p);
        let target = TruncatedOperator::identity(s).scale_complex(Complex64::i());
        assert!((&c - &target).max_abs_interior(18) < 1e-14);
    }

    #[test]
    fn vacuum_x_variance_is_half() {
        let s = SpaceSpec::boson(8).unwrap();
        let (x, _) = quadratures(s);
        let vac = QuantumState::basis(s, 0);
        assert!((vac.expectation(&(&x * &x)).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_quadratic_forms_match_products_on_interior() {
        let s = SpaceSpec::qubits(16, 1).unwrap();
        let (x, p) = quadratures(s);
        let q = quadratic_forms(s);
        assert!((&q.x2 - &(&x * &x)).max_abs_interior(15) < 1e-13);
        assert!((&q.p2 - &(&p * &p)).max_abs_interior(15) < 1e-13);
        let xp = &(&x * &p) + &(&p * &x);
        assert!((&q.xp_px - &xp).max_abs_interior(15) < 1e-13);
    }

    #[test]
    fn sigma_z_sends_ground_to_minus_ground() {
        let s = SpaceSpec::qubits(2, 1).unwrap();
        let z = qubit_op(s, 0, Pauli::Z).unwrap();
        let g = QuantumState::basis(s, s.ground_aux_index());
        assert!(close(g.expectation(&z), -ONE, 1e-15));
    }

    #[test]
    fn raising_matches_pauli_combination() {
        let s = SpaceSpec::qubits(2, 3).unwrap();
        for j in 0..3 {
            let x = qubit_op(s, j, Pauli::X).unwrap();
            let y = qubit_op(s, j, Pauli::Y).unwrap();
            let plus = qubit_op(s, j, Pauli::Plus).unwrap();
            let combo = (&x + &y.scale_complex(Complex64::i())).scale(0.5);
            assert!(combo.matrix().max_abs_diff(plus.matrix()) < 1e-15);
        }
    }

    #[test]
    fn disjoint_qubits_commute() {
        let s = SpaceSpec::qubits(2, 2).unwrap();
        let z1 = qubit_op(s, 0, Pauli::Z).unwrap();
        let z2 = qubit_op(s, 1, Pauli::Z).unwrap();
        assert_eq!(z1.commutator(&z2).matrix().max_abs(), 0.0);
        let x1 = qubit_op(s, 0, Pauli::X).unwrap();
        assert!(x1.commutator(&z1).matrix().max_abs() > 1.0);
    }

    #[test]
    fn qubit_op_rejects_bad_requests() {
        let s = SpaceSpec::qubits(2, 2).unwrap();
        assert!(matches!(qubit_op(s, 2, Pauli::X), Err(Error::QubitIndex { .. })));
        let hp = SpaceSpec::holstein_primakoff(2, 2).unwrap();
        assert!(matches!(qubit_op(hp, 0, Pauli::X), Err(Error::HolsteinPrimakoffMode)));
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(SpaceSpec::qubits(64, 20), Err(Error::DimensionBudget { .. })));
        assert!(SpaceSpec::qubits(4, 20).is_ok());
    }

    #[test]
    fn collective_algebra_holds_below_the_top_state() {
        let n = 4;
        let s = SpaceSpec::holstein_primakoff(2, n).unwrap();
        let jp = collective_jplus(s).unwrap();
        let jm = collective_jminus(s).unwrap();
        let jz = collective_jz(s).unwrap();
        let lhs = jp.commutator(&jm);
        let diff = &lhs - &jz.scale(2.0);
        assert!(diff.matrix().max_abs() < 1e-13);
    }

    #[test]
    fn coherent_state_moments() {
        let s = SpaceSpec::boson(64).unwrap();
        let xi = Complex64::new(0.0, 3.0);
        let st = coherent_state(s, xi).unwrap();
        assert!(close(st.expectation(&annihilation(s)), xi, 1e-8));
        let xi = Complex64::new(1.0, 1.0);
        let st = coherent_state(s, xi).unwrap();
        assert!((st.expectation(&number(s)).re - 2.0).abs() < 1e-8);
        let (x, _) = quadratures(s);
        assert!((st.expectation(&x).re - 2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn coherent_vacuum_is_ground_product() {
        let s = SpaceSpec::qubits(4, 2).unwrap();
        let st = coherent_state(s, ZERO).unwrap();
        assert_eq!(st, QuantumState::basis(s, s.ground_aux_index()).with_gauge(Gauge::Free));
    }

    #[test]
    fn coherent_guard_advises_cutoff() {
        let s = SpaceSpec::boson(16).unwrap();
        match coherent_state(s, Complex64::new(3.0, 0.0)) {
            Err(Error::TruncationGuard { suggested, .. }) => assert_eq!(suggested, 36),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coherent_overlap_closed_form() {
        let s = SpaceSpec::boson(80).unwrap();
        let (xi, zeta) = (Complex64::new(1.0, -0.5), Complex64::new(-0.3, 1.2));
        let o = overlap(&coherent_state(s, xi).unwrap(), &coherent_state(s, zeta).unwrap()).unwrap();
        assert!((o.norm() - (-(xi - zeta).norm_sqr() / 2.0).exp()).abs() < 1e-8);
    }

    #[test]
    fn overlap_basics() {
        let s = SpaceSpec::boson(4).unwrap();
        let (u, v) = (QuantumState::basis(s, 0), QuantumState::basis(s, 1));
        assert_eq!(overlap(&u, &u).unwrap(), ONE);
        assert_eq!(overlap(&u, &v).unwrap(), ZERO);
        let w = QuantumState::basis(SpaceSpec::boson(5).unwrap(), 0);
        assert!(matches!(overlap(&u, &w), Err(Error::SpaceMismatch(..))));
    }

    #[test]
    fn aux_blocks_round_trip() {
        let s = SpaceSpec::qubits(5, 2).unwrap();
        let a = annihilation(s);
        let op = &(&a * &qubit_op(s, 0, Pauli::Plus).unwrap()) + &qubit_op(s, 1, Pauli::Y).unwrap();
        let rebuilt = TruncatedOperator::from_aux_blocks(s, &op.aux_blocks(), false);
        assert_eq!(rebuilt.matrix(), op.matrix());
    }

    #[test]
    fn parity_labels() {
        let s = SpaceSpec::qubits(3, 1).unwrap();
        // |0, g⟩ is even, |0, e⟩ odd, |1, g⟩ odd.
        assert_eq!(s.parity_of(1), 1);
        assert_eq!(s.parity_of(0), -1);
        assert_eq!(s.parity_of(3), -1);
        let even = s.parity_sector(1);
        let odd = s.parity_sector(-1);
        assert_eq!(even.len() + odd.len(), s.dim());
        assert!(even.iter().all(|i| !odd.contains(i)));
    }

    #[test]
    fn truncation_policy_flags_cutoff_dependence() {
        let p = TruncationPolicy::default();
        let (_, ok) = p.check(40, |_| Ok(vec![1.0])).unwrap();
        assert!(!ok.warning);
        let (_, bad) = p.check(40, |c| Ok(vec![c as f64])).unwrap();
        assert!(bad.warning);
        assert_eq!(bad.extended_cutoff, 50);
    }

    proptest! {
        #[test]
        fn gauge_fixing_is_idempotent_and_phase_blind(
            re in prop::collection::vec(-1.0f64..1.0, 6),
            im in prop::collection::vec(-1.0f64..1.0, 6),
            phase in 0.0f64..std::f64::consts::TAU,
        ) {
            let s = SpaceSpec::boson(6).unwrap();
            let amps: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b + 1e-3)).collect();
            let u = QuantumState::new(s, amps.clone(), Gauge::LargestReal).unwrap();
            let again = u.clone().with_gauge(Gauge::LargestReal);
            for (a, b) in u.amplitudes().iter().zip(again.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-14);
            }
            let rot: Vec<Complex64> = amps.iter().map(|a| a * Complex64::from_polar(1.0, phase)).collect();
            let v = QuantumState::new(s, rot, Gauge::LargestReal).unwrap();
            for (a, b) in u.amplitudes().iter().zip(v.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            let w = QuantumState::basis(s, 2);
            let before = dot(&amps, w.amplitudes()).norm() / norm(&amps);
            prop_assert!((overlap(&u, &w).unwrap().norm() - before).abs() < 1e-12);
        }
    }
}
