//! Abstract rate-independent problem interface and the discrete convex-analysis
//! toolkit built on it: dissipation values, stability checks, the V*-distance
//! of a driving force to the stable set, and the ball-indicator multiplier test.
//!
//! Sign convention: `∂ℛ(0)` for the nonnegative cone is
//! `{ξ : ξ_i ≤ κ m_i}`; for the symmetric (two-sided) variant it is
//! `{ξ : |ξ_i| ≤ κ m_i}`. Both follow from the support-function
//! characterization `ξ ∈ ∂ℛ(0) ⇔ ℛ(w) ≥ ⟨ξ, w⟩ ∀w` applied to the weighted ℓ¹ form.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sparse::{dot, CsrMatrix};

/// Scaled mass-matrix norm `‖v‖_V = sqrt(ϱ vᵀ M v)`.
#[derive(Debug, Clone)]
pub struct VNormSpec {
    scaling: f64,
    mass: CsrMatrix,
    lumped: Vec<f64>,
}

impl VNormSpec {
    pub fn new(scaling: f64, mass: CsrMatrix) -> Result<Self> {
        if !(scaling > 0.0 && scaling.is_finite()) {
            return Err(Error::InvalidInput(format!("V-norm scaling must be positive, got {scaling}")));
        }
        if mass.nrows() != mass.ncols() {
            return Err(Error::InvalidInput("mass matrix must be square".into()));
        }
        if !mass.is_symmetric() {
            return Err(Error::InvalidInput("mass matrix must be symmetric".into()));
        }
        let lumped = mass.row_sums();
        if let Some(i) = lumped.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::InvalidInput(format!("lumped mass {i} is not positive")));
        }
        Ok(Self { scaling, mass, lumped })
    }

    /// Scalar problems: `ϱ = 1`, `M = [1]`.
    pub fn scalar() -> Self {
        Self::new(1.0, CsrMatrix::identity(1)).expect("identity mass is valid")
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn lumped(&self) -> &[f64] {
        &self.lumped
    }

    pub fn dim(&self) -> usize {
        self.lumped.len()
    }

    /// Riesz map `v ↦ ϱ M v`.
    pub fn riesz(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.mass.mul_vec(v);
        out.iter_mut().for_each(|x| *x *= self.scaling);
        out
    }
}

pub fn v_norm(v: &[f64], spec: &VNormSpec) -> Result<f64> {
    check_dim("v_norm", spec.dim(), v.len())?;
    Ok((spec.scaling * spec.mass.quad_form(v)).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    /// Unidirectional evolution: ℛ(v) = κ mᵀv on v ≥ 0, +∞ otherwise.
    Nonnegative,
    /// Two-sided dissipation ℛ(v) = κ Σ m_i |v_i|.
    Symmetric,
}

#[derive(Debug, Clone)]
pub struct DissipationSpec {
    pub kappa: f64,
    pub masses: Vec<f64>,
    pub cone: Cone,
}

impl DissipationSpec {
    pub fn new(kappa: f64, masses: Vec<f64>, cone: Cone) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
        }
        if masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidInput("dissipation masses must be positive".into()));
        }
        Ok(Self { kappa, masses, cone })
    }

    pub fn dim(&self) -> usize {
        self.masses.len()
    }

    /// Per-component threshold `κ m_i`.
    pub fn threshold(&self, i: usize) -> f64 {
        self.kappa * self.masses[i]
    }
}

/// `ℛ_h(dz)`; returns `f64::INFINITY` when `dz` leaves the cone by more than `cone_tol`.
pub fn dissipation_value(dz: &[f64], spec: &DissipationSpec, cone_tol: f64) -> Result<f64> {
    check_dim("dissipation_value", spec.dim(), dz.len())?;
    match spec.cone {
        Cone::Nonnegative => {
            if dz.iter().any(|&v| v < -cone_tol) {
                return Ok(f64::INFINITY);
            }
            Ok(spec.kappa * dot(&spec.masses, dz))
        }
        Cone::Symmetric => Ok(spec.kappa * spec.masses.iter().zip(dz).map(|(m, v)| m * v.abs()).sum::<f64>()),
    }
}

/// Componentwise excess of a driving force `η` over the threshold set `∂ℛ(0)`.
fn excess(eta_i: f64, threshold: f64, cone: Cone) -> f64 {
    match cone {
        Cone::Nonnegative => (eta_i - threshold).max(0.0),
        Cone::Symmetric => (eta_i.abs() - threshold).max(0.0),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DistMethod<'a> {
    /// Closed-form projection in the lumped-mass V*-norm.
    Lumped,
    /// `λ ‖dz‖_V`, exact at a converged stationary point of the ball problem.
    Multiplier { lambda: f64, dz: &'a [f64] },
}

/// `dist_{V*}{η, ∂ℛ(0)}`.
pub fn dist_to_stable(eta: &[f64], spec: &DissipationSpec, vn: &VNormSpec, method: DistMethod<'_>) -> Result<f64> {
    check_dim("dist_to_stable", spec.dim(), eta.len())?;
    check_dim("dist_to_stable (V-norm)", vn.dim(), eta.len())?;
    match method {
        DistMethod::Lumped => {
            let s: f64 = eta
                .iter()
                .enumerate()
                .map(|(i, &e)| {
                    let x = excess(e, spec.threshold(i), spec.cone);
                    x * x / vn.lumped[i]
                })
                .sum();
            Ok((s / vn.scaling).sqrt())
        }
        DistMethod::Multiplier { lambda, dz } => {
            if lambda < 0.0 {
                return Err(Error::InvalidInput(format!("ball multiplier must be nonnegative, got {lambda}")));
            }
            if lambda == 0.0 {
                return Ok(0.0);
            }
            Ok(lambda * v_norm(dz, vn)?)
        }
    }
}

/// Consistent-mass V*-distance, computed from the dual representation
/// `dist = max{⟨η, v⟩ − ℛ(v) : ‖v‖_V ≤ 1}`.
///
/// For the nonnegative cone this reduces to the cone QP
/// `min ½ ϱ vᵀMv − ⟨η − κm, v⟩, v ≥ 0`, whose minimizer `v*` gives
/// `dist = sqrt(⟨η − κm, v*⟩)`. Solved by projected Gauss–Seidel.
pub fn dist_to_stable_exact(eta: &[f64], spec: &DissipationSpec, vn: &VNormSpec, max_sweeps: usize, tol: f64) -> Result<f64> {
    check_dim("dist_to_stable_exact", spec.dim(), eta.len())?;
    if spec.cone != Cone::Nonnegative {
        return Err(Error::InvalidInput("exact distance is only implemented for the nonnegative cone".into()));
    }
    let n = eta.len();
    let c: Vec<f64> = (0..n).map(|i| eta[i] - spec.threshold(i)).collect();
    if c.iter().all(|&ci| ci <= 0.0) {
        return Ok(0.0);
    }
    let q = vn.mass.scaled(vn.scaling);
    let diag: Vec<f64> = (0..n).map(|i| q.get(i, i)).collect();
    let mut v = vec![0.0; n];
    for _ in 0..max_sweeps {
        let mut change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let off: f64 = q.row(i).filter(|&(j, _)| j != i).map(|(j, a)| a * v[j]).sum();
            let new = ((c[i] - off) / diag[i]).max(0.0);
            change = change.max((new - v[i]).abs());
            scale = scale.max(new.abs());
            v[i] = new;
        }
        if change <= tol * scale.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(dot(&c, &v).max(0.0).sqrt())
}

/// `−grad ∈ ∂ℛ(0)` up to `tol` (boundary inclusive).
pub fn check_local_stability(grad: &[f64], spec: &DissipationSpec, tol: f64) -> bool {
    grad.iter().enumerate().all(|(i, &g)| match spec.cone {
        Cone::Nonnegative => -g <= spec.threshold(i) + tol,
        Cone::Symmetric => g.abs() <= spec.threshold(i) + tol,
    })
}

/// Index and amount of the worst stability violation, if any.
pub fn worst_instability(grad: &[f64], spec: &DissipationSpec) -> Option<(usize, f64)> {
    grad.iter()
        .enumerate()
        .map(|(i, &g)| (i, excess(-g, spec.threshold(i), spec.cone)))
        .filter(|&(_, x)| x > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Least-squares fit of `ζ ≈ λ ϱ M dz`.
#[derive(Debug, Clone, Copy)]
pub struct MultiplierFit {
    pub lambda: f64,
    /// `‖ζ − λ ϱ M dz‖ / ‖ζ‖` (zero when `ζ = 0`).
    pub relative_residual: f64,
}

pub fn fit_itau_multiplier(dz: &[f64], zeta: &[f64], vn: &VNormSpec) -> Result<MultiplierFit> {
    check_dim("fit_itau_multiplier", vn.dim(), dz.len())?;
    check_dim("fit_itau_multiplier", vn.dim(), zeta.len())?;
    let w = vn.riesz(dz);
    let ww = dot(&w, &w);
    let zz = dot(zeta, zeta);
    let lambda = if ww > 0.0 { dot(zeta, &w) / ww } else { 0.0 };
    let r: f64 = zeta.iter().zip(&w).map(|(z, w)| (z - lambda * w).powi(2)).sum();
    let relative_residual = if zz > 0.0 { (r / zz).sqrt() } else { 0.0 };
    Ok(MultiplierFit {
        lambda,
        relative_residual,
    })
}

/// Checks `ζ ∈ ∂I_τ(dz)`: `ζ = λ ϱ M dz` with `λ ≥ 0`, `λ (‖dz‖_V − τ) = 0`, `‖dz‖_V ≤ τ`.
pub fn itau_multiplier_check(dz: &[f64], zeta: &[f64], tau: f64, vn: &VNormSpec, tol: f64) -> Result<bool> {
    let norm = v_norm(dz, vn)?;
    if norm > tau + tol {
        return Ok(false);
    }
    let fit = fit_itau_multiplier(dz, zeta, vn)?;
    if zeta.iter().all(|&z| z == 0.0) {
        return Ok(true);
    }
    if norm == 0.0 {
        // ζ ≠ 0 cannot be represented as a multiple of ϱ M 0
        return Ok(false);
    }
    Ok(fit.relative_residual <= tol && fit.lambda >= -tol && (fit.lambda * (norm - tau)).abs() <= tol)
}

/// Second-order blocks of the full energy `Ẽ(t, z, u)` at `u = S(z)`.
///
/// `uu` is empty (`0×0`) for problems without an eliminated variable.
#[derive(Debug, Clone)]
pub struct NewtonBlocks {
    pub zz: CsrMatrix,
    pub zu: CsrMatrix,
    pub uu: CsrMatrix,
}

impl NewtonBlocks {
    pub fn inner_dim(&self) -> usize {
        self.uu.nrows()
    }
}

/// Everything the semismooth Newton iteration needs at one `(t, z)`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub energy: f64,
    pub gradient: Vec<f64>,
    pub blocks: NewtonBlocks,
}

/// A rate-independent system `0 ∈ ∂ℛ(ż) + D_z I(t, z)` in reduced form.
pub trait RisProblem {
    fn dim(&self) -> usize;

    fn energy(&self, t: f64, z: &[f64]) -> Result<f64>;

    fn gradient(&self, t: f64, z: &[f64]) -> Result<Vec<f64>>;

    fn partial_t(&self, t: f64, z: &[f64]) -> Result<f64>;

    fn linearize(&self, t: f64, z: &[f64]) -> Result<Linearization>;

    fn dissipation(&self) -> &DissipationSpec;

    fn v_norm(&self) -> &VNormSpec;

    /// Gram matrix of `‖·‖_Z`.
    fn z_norm(&self) -> &CsrMatrix;
}
