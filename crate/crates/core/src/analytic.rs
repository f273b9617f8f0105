//! Closed-form results for the effective quadratic models.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, coherent_state, SpaceSpec};
use crate::models::{ModelParams, Phase};

/// Half-width of the window around g = 1 treated as critical.
pub const CRITICAL_WINDOW: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseQuantities {
    pub phase: Phase,
    pub critical: bool,
    pub alpha: f64,
    pub epsilon: f64,
    /// Squeezing parameter r = ¼ ln[α/(α+2G)].
    pub squeeze: f64,
    pub ground_energy: f64,
    pub displacement: Option<f64>,
    /// Rotating to counter-rotating coupling ratio (g²+1)/(g²−1).
    pub gamma_ratio: Option<f64>,
    pub c_plus: Option<f64>,
    pub c_minus: Option<f64>,
}

pub fn phase_quantities(p: &ModelParams) -> PhaseQuantities {
    let g = p.g();
    let gs = p.squeezing;
    let critical = (g - 1.0).abs() < CRITICAL_WINDOW;
    let alpha = if critical { 0.0 } else { p.alpha() };
    let epsilon = 2.0 * (alpha * (alpha + 2.0 * gs)).max(0.0).sqrt();
    let squeeze = if critical {
        f64::NEG_INFINITY
    } else {
        0.25 * (alpha / (alpha + 2.0 * gs)).ln()
    };
    let phase = p.phase();
    let ground_energy = epsilon / 2.0 - (alpha + gs) + energy_offset(p, phase);
    let (displacement, gamma_ratio, c_plus, c_minus) = match phase {
        Phase::Superradiant if !critical => {
            let g2 = g * g;
            (
                p.displacement().ok(),
                Some((g2 + 1.0) / (g2 - 1.0)),
                Some(((1.0 + 1.0 / g2) / 2.0).sqrt()),
                Some(((1.0 - 1.0 / g2) / 2.0).sqrt()),
            )
        }
        _ => (None, None, None, None),
    };
    PhaseQuantities {
        phase,
        critical,
        alpha,
        epsilon,
        squeeze,
        ground_energy,
        displacement,
        gamma_ratio,
        c_plus,
        c_minus,
    }
}

/// −KΩ/2 (normal) or −KΩ(g² + g⁻²)/4 (superradiant).
fn energy_offset(p: &ModelParams, phase: Phase) -> f64 {
    let ko = p.k_sum() * p.qubit_freq;
    match phase {
        Phase::Normal => -ko / 2.0,
        Phase::Superradiant => {
            let g2 = p.g().powi(2);
            -ko * (g2 + 1.0 / g2) / 4.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyBranch {
    /// ε/2 − (α+G) plus the qubit offset.
    Full,
    /// Qubit offset only: −KΩ/2 and −KΩ(g² + g⁻²)/4.
    Approximate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub g: f64,
    pub energy: f64,
    pub d2_energy: f64,
}

/// E_G and d²E_G/dg² at fixed K, Ω, G, differentiated in closed form.
pub fn ground_energy_point(p: &ModelParams, branch: EnergyBranch) -> EnergyPoint {
    let g = p.g();
    let phase = p.phase();
    let ko = p.k_sum() * p.qubit_freq;
    let (offset_d2, energy_offset) = match phase {
        Phase::Normal => (0.0, energy_offset(p, phase)),
        Phase::Superradiant => (-ko * (1.0 + 3.0 / g.powi(4)) / 2.0, energy_offset(p, phase)),
    };
    match branch {
        EnergyBranch::Approximate => EnergyPoint {
            g,
            energy: energy_offset,
            d2_energy: offset_d2,
        },
        EnergyBranch::Full => {
            let q = phase_quantities(p);
            let gs = p.squeezing;
            let w = p.detuned_freq();
            let (da, d2a) = match phase {
                Phase::Normal => (-w * g, -w),
                Phase::Superradiant => (
                    w * (g.powi(-5) + g.powi(-3)) / 2.0,
                    -w * (5.0 * g.powi(-6) + 3.0 * g.powi(-4)) / 2.0,
                ),
            };
            let f = q.alpha * (q.alpha + 2.0 * gs);
            // ε(α) = 2√f: ε' = 2(α+G)/√f, ε'' = −2G²/f^{3/2}.
            let de = 2.0 * (q.alpha + gs) / f.sqrt();
            let d2e = -2.0 * gs * gs / f.powf(1.5);
            EnergyPoint {
                g,
                energy: q.ground_energy,
                d2_energy: 0.5 * d2e * da * da + (0.5 * de - 1.0) * d2a + offset_d2,
            }
        }
    }
}

pub fn ground_energy_curve(p: &ModelParams, g_values: &[f64], branch: EnergyBranch) -> Result<Vec<EnergyPoint>> {
    g_values
        .iter()
        .map(|&g| Ok(ground_energy_point(&p.with_g(g)?, branch)))
        .collect()
}

/// Ground-state quantum metric over (λ, Ω).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricComponents {
    pub g_ll: f64,
    pub g_oo: f64,
    pub g_lo: f64,
}

impl MetricComponents {
    pub fn determinant(&self) -> f64 {
        self.g_ll * self.g_oo - self.g_lo * self.g_lo
    }

    /// Positive semidefinite up to a relative tolerance on the determinant.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let scale = self.g_ll * self.g_oo;
        self.g_ll >= 0.0 && self.g_oo >= 0.0 && self.determinant() >= -rel_tol * scale.abs()
    }
}

pub fn metric_components(p: &ModelParams) -> Result<MetricComponents> {
    let g = p.g();
    if (g - 1.0).abs() < CRITICAL_WINDOW {
        return Err(Error::Critical { g });
    }
    let (w, gs, k, om) = (p.detuned_freq(), p.squeezing, p.k_sum(), p.qubit_freq);
    let n = p.n_qubits() as f64;
    let alpha = p.alpha();
    let core = alpha * alpha * (alpha + 2.0 * gs).powi(2);
    let g2 = g * g;
    Ok(match p.phase() {
        Phase::Normal => MetricComponents {
            g_ll: w * gs * gs * g2 * k / (8.0 * om * core),
            g_oo: w * w * gs * gs * g2 * g2 / (32.0 * om * om * core),
            g_lo: -w.powf(1.5) * gs * gs * g.powi(3) * k.sqrt() / (16.0 * om.powf(1.5) * core),
        },
        Phase::Superradiant => {
            let s = (1.0 + g2).powi(2);
            let q = (1.0 + 3.0 * g2) * n / ((1.0 + g2) * alpha);
            MetricComponents {
                g_ll: w * gs * gs * s * k / (32.0 * g.powi(10) * om * core)
                    + q * k / (8.0 * g.powi(6) * om),
                g_oo: w * w * gs * gs * s / (128.0 * g.powi(8) * om * om * core)
                    + w * q / (32.0 * g.powi(4) * om * om),
                g_lo: -w.powf(1.5) * gs * gs * s * k.sqrt() / (64.0 * g.powi(9) * om.powf(1.5) * core)
                    - w.sqrt() * q * k.sqrt() / (16.0 * g.powi(5) * om.powf(1.5)),
            }
        }
    })
}

/// Dynamics generated by αX² + (α+2G)P², the quadrature form of both
/// effective Hamiltonians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticDynamics {
    pub alpha: f64,
    pub squeezing: f64,
}

impl QuadraticDynamics {
    pub fn new(alpha: f64, squeezing: f64) -> Result<Self> {
        let d = Self { alpha, squeezing };
        if !(d.delta() > 0.0) {
            return Err(Error::NonPositiveDelta(d.delta()));
        }
        Ok(d)
    }

    pub fn from_params(p: &ModelParams) -> Result<Self> {
        Self::new(p.alpha(), p.squeezing)
    }

    /// Δ = 16α(α+2G).
    pub fn delta(&self) -> f64 {
        16.0 * self.alpha * (self.alpha + 2.0 * self.squeezing)
    }

    /// τ_n = 2nπ/√Δ.
    pub fn revival_time(&self, n: u32) -> f64 {
        2.0 * n as f64 * std::f64::consts::PI / self.delta().sqrt()
    }

    /// QFI about α keeping only the B term of the local generator:
    /// 1024 G²(α+2G)² [sin(√Δt) − √Δt]² / Δ³ · Var[P²].
    pub fn qfi(&self, t: f64, var_p2: f64) -> f64 {
        let (gs, d) = (self.squeezing, self.delta());
        let sd = d.sqrt();
        let bracket = (sd * t).sin() - sd * t;
        1024.0 * gs * gs * (self.alpha + 2.0 * gs).powi(2) * bracket * bracket / d.powi(3) * var_p2
    }

    /// Weyl-symbol matrix of the local generator h = H′₁t + c_A·A − c_B·B.
    pub fn generator_symbol(&self, t: f64) -> [[f64; 2]; 2] {
        let (a, gs, d) = (self.alpha, self.squeezing, self.delta());
        let sd = d.sqrt();
        let ca = ((sd * t).cos() - 1.0) / d;
        let cb = ((sd * t).sin() - sd * t) / d.powf(1.5);
        [
            [t + cb * 16.0 * gs * a, -4.0 * gs * ca],
            [-4.0 * gs * ca, t - cb * 16.0 * gs * (a + 2.0 * gs)],
        ]
    }

    /// 4·Var[h] for a coherent initial state. For a Weyl-ordered quadratic
    /// form in a coherent state, Var[rᵀQr] = ½tr(Q²) − det Q + 2|Q⟨r⟩|².
    pub fn qfi_coherent(&self, xi: Complex64, t: f64) -> f64 {
        let q = self.generator_symbol(t);
        let m = [2f64.sqrt() * xi.re, 2f64.sqrt() * xi.im];
        let tr = q[0][0].powi(2) + q[1][1].powi(2) + 2.0 * q[0][1].powi(2);
        let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
        let qm = [q[0][0] * m[0] + q[0][1] * m[1], q[1][0] * m[0] + q[1][1] * m[1]];
        4.0 * (0.5 * tr - det + 2.0 * (qm[0] * qm[0] + qm[1] * qm[1]))
    }

    /// (⟨X⟩_t, Var X_t) for a coherent initial state under e^{−iHt}.
    pub fn quadrature_stats(&self, xi: Complex64, t: f64) -> (f64, f64) {
        let (d, b) = (self.delta(), self.alpha + 2.0 * self.squeezing);
        let half = d.sqrt() * t / 2.0;
        let mean = 2f64.sqrt() * xi.re * half.cos()
            + 4.0 * 2f64.sqrt() * xi.im * b / d.sqrt() * half.sin();
        let var = 0.5 * half.cos().powi(2) + 8.0 * b * b / d * half.sin().powi(2);
        (mean, var)
    }

    /// I(τ_n) = 4096 ξ_i² (α+G)² (α+2G)² Δ⁻² τ_n².
    pub fn inverted_variance(&self, xi: Complex64, n: u32) -> f64 {
        let (a, gs, d) = (self.alpha, self.squeezing, self.delta());
        let tau = self.revival_time(n);
        4096.0 * xi.im.powi(2) * (a + gs).powi(2) * (a + 2.0 * gs).powi(2) / (d * d) * tau * tau
    }
}

/// Inverted variance about g at τ_n, I_g = (∂α/∂g)² I_α.
pub fn inverted_variance_g(p: &ModelParams, xi: Complex64, n: u32) -> Result<f64> {
    let dyn_ = QuadraticDynamics::from_params(p)?;
    Ok(p.dalpha_dg().powi(2) * dyn_.inverted_variance(xi, n))
}

/// Var[P²] of the coherent state |ξ⟩, evaluated on a truncated space.
pub fn var_p2_coherent(xi: Complex64, cutoff: usize) -> Result<f64> {
    let s = SpaceSpec::boson(cutoff)?;
    let state = coherent_state(s, xi)?;
    Ok(state.variance(&hilbert::quadratic_forms(s).p2))
}

/// Cutoff that holds |ξ⟩ to better than 1e-16 in the tail.
pub fn coherent_cutoff(xi: Complex64) -> usize {
    let n = xi.norm_sqr();
    (n + 12.0 * n.sqrt() + 40.0).ceil() as usize
}
