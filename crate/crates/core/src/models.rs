//! Hamiltonians of the driven Tavis-Cummings model and its reductions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    self, annihilation, annihilation_squared, boson_function, number, qubit_op, Pauli, SpaceSpec,
    TruncatedOperator,
};
use crate::sparse::CsrMatrix;

/// Physical parameters. Qubit j couples with λ_j = x_j·λ and splits with
/// Ω_j = x_j·Ω, where x_j are the `weights`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Cavity frequency ω (the unit of energy, normally 1).
    pub field_freq: f64,
    /// Qubit frequency scale Ω.
    pub qubit_freq: f64,
    /// Qubit-field coupling scale λ.
    pub coupling: f64,
    /// Two-photon drive amplitude G.
    pub squeezing: f64,
    pub weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Normal,
    Superradiant,
}

impl ModelParams {
    pub fn new(
        field_freq: f64,
        qubit_freq: f64,
        coupling: f64,
        squeezing: f64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            field_freq,
            qubit_freq,
            coupling,
            squeezing,
            weights,
        };
        p.validate()?;
        Ok(p)
    }

    /// N identical qubits with unit weights (K = N), ω = 1.
    pub fn homogeneous(n_qubits: usize, qubit_freq: f64, coupling: f64, squeezing: f64) -> Result<Self> {
        Self::new(1.0, qubit_freq, coupling, squeezing, vec![1.0; n_qubits])
    }

    /// N qubits sharing the total weight K equally, ω = 1.
    pub fn uniform(n_qubits: usize, k_sum: f64, qubit_freq: f64, coupling: f64, squeezing: f64) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidParams("a weight sum needs at least one qubit".into()));
        }
        Self::new(1.0, qubit_freq, coupling, squeezing, vec![k_sum / n_qubits as f64; n_qubits])
    }

    /// Chooses λ so that the control parameter equals `g`.
    pub fn at_g(g: f64, weights: Vec<f64>, qubit_freq: f64, squeezing: f64) -> Result<Self> {
        let mut p = Self::new(1.0, qubit_freq, 0.0, squeezing, weights)?;
        p.coupling = p.coupling_for_g(g)?;
        Ok(p)
    }

    pub fn with_g(&self, g: f64) -> Result<Self> {
        let mut p = self.clone();
        p.coupling = self.coupling_for_g(g)?;
        Ok(p)
    }

    /// Changes Ω while holding g fixed.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let g = self.g();
        let mut p = self.clone();
        p.qubit_freq = beta * self.field_freq;
        p.validate()?;
        p.coupling = p.coupling_for_g(g)?;
        Ok(p)
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }

    pub fn with_qubit_freq(&self, qubit_freq: f64) -> Self {
        Self {
            qubit_freq,
            ..self.clone()
        }
    }

    fn coupling_for_g(&self, g: f64) -> Result<f64> {
        let k = self.k_sum();
        if !(g >= 0.0) || (k == 0.0 && g > 0.0) {
            return Err(Error::InvalidParams(format!("cannot reach g = {g} with K = {k}")));
        }
        if k == 0.0 {
            return Ok(0.0);
        }
        Ok(g * (self.qubit_freq * self.detuned_freq() / k).sqrt())
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.field_freq, self.qubit_freq, self.coupling, self.squeezing]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        if self.field_freq <= 0.0 || self.qubit_freq <= 0.0 {
            return Err(Error::InvalidParams("frequencies must be positive".into()));
        }
        if self.coupling < 0.0 || self.squeezing < 0.0 {
            return Err(Error::InvalidParams("coupling and squeezing must be non-negative".into()));
        }
        if self.detuned_freq() <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "need ω − 2G > 0, got ω = {}, G = {}",
                self.field_freq, self.squeezing
            )));
        }
        if self.weights.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParams("qubit weights must be positive".into()));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.weights.len()
    }

    pub fn k_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn beta(&self) -> f64 {
        self.qubit_freq / self.field_freq
    }

    /// ω − 2G.
    pub fn detuned_freq(&self) -> f64 {
        self.field_freq - 2.0 * self.squeezing
    }

    /// g = √K·λ / √(Ω(ω − 2G)).
    pub fn g(&self) -> f64 {
        self.k_sum().sqrt() * self.coupling / (self.qubit_freq * self.detuned_freq()).sqrt()
    }

    /// g = 1 exactly is assigned to the normal branch.
    pub fn phase(&self) -> Phase {
        if self.g() <= 1.0 {
            Phase::Normal
        } else {
            Phase::Superradiant
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.weights.windows(2).all(|w| w[0] == w[1])
    }

    /// α_n = (ω − 2G)(1 − g²)/2.
    pub fn alpha_normal(&self) -> f64 {
        let g = self.g();
        self.detuned_freq() * (1.0 - g * g) / 2.0
    }

    /// α_s = (ω − 2G)(3g² + 1)(g² − 1)/(8g⁴).
    pub fn alpha_superradiant(&self) -> f64 {
        let g2 = self.g().powi(2);
        self.detuned_freq() * (3.0 * g2 + 1.0) * (g2 - 1.0) / (8.0 * g2 * g2)
    }

    /// α of the phase selected by g.
    pub fn alpha(&self) -> f64 {
        match self.phase() {
            Phase::Normal => self.alpha_normal(),
            Phase::Superradiant => self.alpha_superradiant(),
        }
    }

    /// dα/dg on the branch selected by g.
    pub fn dalpha_dg(&self) -> f64 {
        let g = self.g();
        match self.phase() {
            Phase::Normal => -self.detuned_freq() * g,
            Phase::Superradiant => self.detuned_freq() * (1.0 + g * g) / (2.0 * g.powi(5)),
        }
    }

    /// Field displacement α₀ of the superradiant frame.
    pub fn displacement(&self) -> Result<f64> {
        let g = self.g();
        if g <= 1.0 {
            return Err(Error::PhaseDomain {
                quantity: "displacement",
                required: "superradiant",
                g,
            });
        }
        let (k, l, w) = (self.k_sum(), self.coupling, self.detuned_freq());
        let a2 = k * k * l * l / (4.0 * w * w) - self.qubit_freq.powi(2) / (4.0 * l * l);
        Ok(a2.max(0.0).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrigin {
    NormalEffective,
    SuperradiantEffective,
    /// Quadratic part of the 1/β-corrected normal-phase model.
    Corrected,
    Extracted,
}

/// H = cXX·X² + cPP·P² + cXP·(XP+PX) + cX·X + cP·P + c0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub cxx: f64,
    pub cpp: f64,
    pub cxp: f64,
    pub cx: f64,
    pub cp: f64,
    pub c0: f64,
    pub origin: ModelOrigin,
}

impl QuadraticModel {
    /// αX² + (α + 2G)P² + c0, i.e. 2(α+G)a†a − G(a² + a†²) + c0 − (α+G).
    pub fn squeezed_oscillator(alpha: f64, squeezing: f64, offset: f64, origin: ModelOrigin) -> Self {
        Self {
            cxx: alpha,
            cpp: alpha + 2.0 * squeezing,
            cxp: 0.0,
            cx: 0.0,
            cp: 0.0,
            c0: -(alpha + squeezing) + offset,
            origin,
        }
    }

    pub fn to_operator(&self, space: SpaceSpec) -> TruncatedOperator {
        let q = hilbert::quadratic_forms(space);
        let (x, p) = hilbert::quadratures(space);
        let terms = [
            (self.cxx, &q.x2),
            (self.cpp, &q.p2),
            (self.cxp, &q.xp_px),
            (self.cx, &x),
            (self.cp, &p),
        ];
        terms
            .iter()
            .filter(|(c, _)| *c != 0.0)
            .fold(TruncatedOperator::identity(space).scale(self.c0), |acc, (c, op)| {
                &acc + &op.scale(*c)
            })
    }

    /// Reads the coefficients back from the low Fock-space matrix elements of
    /// a boson-only operator.
    pub fn from_operator(op: &TruncatedOperator) -> Result<Self> {
        let s = op.space();
        if s.aux_dim() != 1 || s.fock_cutoff < 3 {
            return Err(Error::InvalidSpace(
                "coefficient extraction needs a boson-only space with cutoff ≥ 3".into(),
            ));
        }
        let m = op.matrix();
        let h00 = m.get(0, 0).re;
        let h11 = m.get(1, 1).re;
        let h20 = m.get(2, 0);
        let h10 = m.get(1, 0);
        let sum = h11 - h00;
        let diff = 2.0 * h20.re / 2f64.sqrt();
        let cxp = h20.im / 2f64.sqrt();
        let cxx = (sum + diff) / 2.0;
        let cpp = (sum - diff) / 2.0;
        Ok(Self {
            cxx,
            cpp,
            cxp,
            cx: h10.re * 2f64.sqrt(),
            cp: h10.im * 2f64.sqrt(),
            c0: h00 - sum / 2.0,
            origin: ModelOrigin::Extracted,
        })
    }

    /// Matrix M of the quadratic form, H = ½ rᵀM r + bᵀr + c0 with r = (X, P).
    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [
            [2.0 * self.cxx, 2.0 * self.cxp],
            [2.0 * self.cxp, 2.0 * self.cpp],
        ]
    }
}

pub fn normal_effective(p: &ModelParams) -> QuadraticModel {
    QuadraticModel::squeezed_oscillator(
        p.alpha_normal(),
        p.squeezing,
        -p.k_sum() * p.qubit_freq / 2.0,
        ModelOrigin::NormalEffective,
    )
}

pub fn superradiant_effective(p: &ModelParams) -> Result<QuadraticModel> {
    let g = p.g();
    if g <= 1.0 {
        return Err(Error::PhaseDomain {
            quantity: "superradiant effective Hamiltonian",
            required: "superradiant",
            g,
        });
    }
    let g2 = g * g;
    Ok(QuadraticModel::squeezed_oscillator(
        p.alpha_superradiant(),
        p.squeezing,
        -p.k_sum() * p.qubit_freq * (g2 + 1.0 / g2) / 4.0,
        ModelOrigin::SuperradiantEffective,
    ))
}

/// Effective model of the phase selected by g.
pub fn effective(p: &ModelParams) -> Result<QuadraticModel> {
    match p.phase() {
        Phase::Normal => Ok(normal_effective(p)),
        Phase::Superradiant => superradiant_effective(p),
    }
}

fn require_qubit_space(p: &ModelParams, s: SpaceSpec) -> Result<()> {
    if s.hp_mode || s.n_qubits != p.n_qubits() {
        return Err(Error::InvalidSpace(format!(
            "model has {} qubits but the space is {:?}",
            p.n_qubits(),
            s
        )));
    }
    Ok(())
}

/// ωa†a − G(a² + a†²).
fn drive_part(p: &ModelParams, s: SpaceSpec) -> TruncatedOperator {
    let a2 = annihilation_squared(s);
    let pair = &a2 + &a2.adjoint();
    &number(s).scale(p.field_freq) - &pair.scale(p.squeezing)
}

/// H = ωa†a + Σ_j[Ω_j σ_z/2 + λ_j(a†σ₋ + aσ₊)] − G(a² + a†²).
pub fn full_hamiltonian(p: &ModelParams, s: SpaceSpec) -> Result<TruncatedOperator> {
    let (d_coupling, d_freq) = full_hamiltonian_derivatives(p, s)?;
    let h = &drive_part(p, s) + &(&d_coupling.scale(p.coupling) + &d_freq.scale(p.qubit_freq));
    Ok(hermitian(h))
}

/// (∂H/∂λ, ∂H/∂Ω) = (Σ x_j(a†σ₋ + aσ₊), Σ x_j σ_z/2).
pub fn full_hamiltonian_derivatives(
    p: &ModelParams,
    s: SpaceSpec,
) -> Result<(TruncatedOperator, TruncatedOperator)> {
    require_qubit_space(p, s)?;
    let a = annihilation(s);
    let ad = a.adjoint();
    let mut d_coupling = TruncatedOperator::zero(s);
    let mut d_freq = TruncatedOperator::zero(s);
    for (j, &x) in p.weights.iter().enumerate() {
        let minus = qubit_op(s, j, Pauli::Minus)?;
        let exchange = &(&ad * &minus) + &(&a * &minus.adjoint());
        d_coupling = &d_coupling + &exchange.scale(x);
        d_freq = &d_freq + &qubit_op(s, j, Pauli::Z)?.scale(x / 2.0);
    }
    Ok((hermitian(d_coupling), hermitian(d_freq)))
}

fn hermitian(op: TruncatedOperator) -> TruncatedOperator {
    let s = op.space();
    TruncatedOperator::new(s, op.matrix().clone(), true).expect("builder produced a non-Hermitian matrix")
}

/// Displaced-frame Hamiltonian in the rotated qubit basis with the
/// counter-rotating terms dropped:
/// ωa†a + Σ_j[g²Ω_j σ̃_z/2 + λ_j(1+g⁻²)/2·(a†σ̃₋ + aσ̃₊)] − G(a² + a†²) + KΩ(g² − g⁻²)/4.
/// The rotated Paulis are expressed in the lab qubit basis, with the mixing
/// angle taken from displacement `sign`·α₀.
pub fn displaced_rotated_hamiltonian(p: &ModelParams, s: SpaceSpec, sign: f64) -> Result<TruncatedOperator> {
    require_qubit_space(p, s)?;
    let alpha = sign.signum() * p.displacement()?;
    let g2 = p.g().powi(2);
    let a = annihilation(s);
    let ad = a.adjoint();
    let mut h = drive_part(p, s)
        .plus_identity(p.k_sum() * p.qubit_freq * (g2 - 1.0 / g2) / 4.0);
    for (j, &x) in p.weights.iter().enumerate() {
        let (lam, om) = (x * p.coupling, x * p.qubit_freq);
        let theta = 0.5 * (2.0 * lam * alpha).atan2(om);
        let rot = rotated_paulis(s, j, theta)?;
        let exchange = &(&ad * &rot.minus) + &(&a * &rot.minus.adjoint());
        h = &h + &rot.z.scale(g2 * om / 2.0);
        h = &h + &exchange.scale(lam * (1.0 + 1.0 / g2) / 2.0);
    }
    Ok(hermitian(h))
}

struct RotatedPaulis {
    z: TruncatedOperator,
    minus: TruncatedOperator,
}

/// σ̃ = R σ Rᵀ with |ẽ⟩ = cosθ|e⟩ + sinθ|g⟩ and |g̃⟩ = −sinθ|e⟩ + cosθ|g⟩.
fn rotated_paulis(s: SpaceSpec, j: usize, theta: f64) -> Result<RotatedPaulis> {
    let (c, sn) = (theta.cos(), theta.sin());
    let z = qubit_op(s, j, Pauli::Z)?;
    let x = qubit_op(s, j, Pauli::X)?;
    let minus = qubit_op(s, j, Pauli::Minus)?;
    let plus = minus.adjoint();
    // R σ_z Rᵀ = cos2θ σ_z + sin2θ σ_x.
    let z_rot = &z.scale((2.0 * theta).cos()) + &x.scale((2.0 * theta).sin());
    // R σ₋ Rᵀ = |g̃⟩⟨ẽ| expanded in the lab basis.
    let minus_rot = &(&minus.scale(c * c) - &plus.scale(sn * sn)) - &z.scale(sn * c);
    Ok(RotatedPaulis {
        z: z_rot,
        minus: minus_rot,
    })
}

/// Coefficients (a†a, a² + a†², a†a a†a) of the 1/β correction to H_np.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarticCorrection {
    pub number: f64,
    pub pair: f64,
    pub quartic: f64,
}

pub fn quartic_correction(p: &ModelParams) -> QuarticCorrection {
    let (w, wd) = (p.field_freq, p.detuned_freq());
    let g2 = p.g().powi(2);
    let n = p.n_qubits() as f64;
    let ko = p.k_sum() * p.qubit_freq;
    QuarticCorrection {
        number: -w * wd * g2 * n / ko,
        pair: p.squeezing * wd * g2 * n / ko,
        quartic: wd * wd * g2 * g2 / ko,
    }
}

/// H_np plus its quartic correction, on a boson-only space.
pub fn corrected_normal_effective(p: &ModelParams, s: SpaceSpec) -> Result<TruncatedOperator> {
    if s.aux_dim() != 1 {
        return Err(Error::InvalidSpace("the corrected model acts on the boson only".into()));
    }
    let c = quartic_correction(p);
    let a2 = annihilation_squared(s);
    let pair = &a2 + &a2.adjoint();
    let correction = &(&number(s).scale(c.number) + &pair.scale(c.pair))
        + &boson_function(s, |n| c.quartic * (n * n) as f64);
    Ok(hermitian(&normal_effective(p).to_operator(s) + &correction))
}

/// Holstein-Primakoff form of the collective model with equal weights x:
/// ωa†a + xΩ(b†b − N/2) + xλ(a†J₋ + aJ₊) − G(a² + a†²), J₋ = √(N − b†b)·b.
pub fn hp_hamiltonian(p: &ModelParams, s: SpaceSpec) -> Result<TruncatedOperator> {
    if !s.hp_mode || s.n_qubits != p.n_qubits() {
        return Err(Error::InvalidSpace(format!(
            "Holstein-Primakoff model with {} qubits needs a matching HP space, got {:?}",
            p.n_qubits(),
            s
        )));
    }
    if !p.is_homogeneous() {
        return Err(Error::InvalidParams(
            "the collective-spin mapping needs identical qubit weights".into(),
        ));
    }
    let x = p.weights[0];
    let a = annihilation(s);
    let jm = hilbert::collective_jminus(s)?;
    let exchange = &(&a.adjoint() * &jm) + &(&a * &jm.adjoint());
    let h = &(&drive_part(p, s) + &hilbert::collective_jz(s)?.scale(x * p.qubit_freq))
        + &exchange.scale(x * p.coupling);
    Ok(hermitian(h))
}

/// Any matrix on the auxiliary factor, e.g. a single-qubit Hamiltonian block.
pub fn aux_matrix(entries: &[[f64; 2]; 2]) -> CsrMatrix {
    CsrMatrix::from_triplets(
        2,
        2,
        (0..2).flat_map(|i| (0..2).map(move |j| (i, j, Complex64::new(entries[i][j], 0.0)))),
    )
}
