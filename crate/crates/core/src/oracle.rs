//! Scalar reference problems with `Z = V = ℝ`: the convex play operator with a
//! closed-form solution and a double-well system with a spinodal jump.

use crate::error::{check_dim, Error, Result};
use crate::liss::{run, LissOptions, Trajectory};
use crate::ris::{Cone, DissipationSpec, Linearization, NewtonBlocks, RisProblem, VNormSpec};
use crate::sparse::CsrMatrix;
use crate::ssn::Variant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    /// `a/2 z²`.
    Quadratic { a: f64 },
    /// `Φ(z) = (z−1)⁴/4 − (z−1)²/2`, so `Φ′(z) = z(z−1)(z−2)`.
    DoubleWell,
}

impl Potential {
    fn value(&self, z: f64) -> f64 {
        match *self {
            Potential::Quadratic { a } => 0.5 * a * z * z,
            Potential::DoubleWell => {
                let w = z - 1.0;
                0.25 * w.powi(4) - 0.5 * w * w
            }
        }
    }

    fn d1(&self, z: f64) -> f64 {
        match *self {
            Potential::Quadratic { a } => a * z,
            Potential::DoubleWell => z * (z - 1.0) * (z - 2.0),
        }
    }

    fn d2(&self, z: f64) -> f64 {
        match *self {
            Potential::Quadratic { a } => a,
            Potential::DoubleWell => 3.0 * z * z - 6.0 * z + 2.0,
        }
    }
}

/// `I(t, z) = Φ(z) − ℓ(t) z` with `ℓ(t) = load_offset + load_rate·t` and
/// dissipation `κ|v|` (two-sided) or `κv` on `v ≥ 0`.
#[derive(Debug, Clone)]
pub struct ScalarRis {
    pub potential: Potential,
    pub load_offset: f64,
    pub load_rate: f64,
    dissipation: DissipationSpec,
    vnorm: VNormSpec,
    znorm: CsrMatrix,
}

impl ScalarRis {
    pub fn new(potential: Potential, kappa: f64, load_offset: f64, load_rate: f64, cone: Cone) -> Result<Self> {
        if let Potential::Quadratic { a } = potential {
            if !(a > 0.0) {
                return Err(Error::InvalidInput(format!("stiffness must be positive, got {a}")));
            }
        }
        Ok(Self {
            potential,
            load_offset,
            load_rate,
            dissipation: DissipationSpec::new(kappa, vec![1.0], cone)?,
            vnorm: VNormSpec::scalar(),
            znorm: CsrMatrix::identity(1),
        })
    }

    pub fn convex(a: f64, kappa: f64) -> Result<Self> {
        Self::new(Potential::Quadratic { a }, kappa, 0.0, 1.0, Cone::Nonnegative)
    }

    pub fn nonconvex(kappa: f64) -> Result<Self> {
        Self::new(Potential::DoubleWell, kappa, 0.0, 1.0, Cone::Symmetric)
    }

    pub fn kappa(&self) -> f64 {
        self.dissipation.kappa
    }

    pub fn load(&self, t: f64) -> f64 {
        self.load_offset + self.load_rate * t
    }
}

impl RisProblem for ScalarRis {
    fn dim(&self) -> usize {
        1
    }

    fn energy(&self, t: f64, z: &[f64]) -> Result<f64> {
        check_dim("scalar energy", 1, z.len())?;
        Ok(self.potential.value(z[0]) - self.load(t) * z[0])
    }

    fn gradient(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("scalar gradient", 1, z.len())?;
        Ok(vec![self.potential.d1(z[0]) - self.load(t)])
    }

    fn partial_t(&self, _t: f64, z: &[f64]) -> Result<f64> {
        check_dim("scalar partial_t", 1, z.len())?;
        Ok(-self.load_rate * z[0])
    }

    fn linearize(&self, t: f64, z: &[f64]) -> Result<Linearization> {
        Ok(Linearization {
            energy: self.energy(t, z)?,
            gradient: self.gradient(t, z)?,
            blocks: NewtonBlocks {
                zz: CsrMatrix::from_dense(&[vec![self.potential.d2(z[0])]]),
                zu: CsrMatrix::zeros(1, 0),
                uu: CsrMatrix::zeros(0, 0),
            },
        })
    }

    fn dissipation(&self) -> &DissipationSpec {
        &self.dissipation
    }

    fn v_norm(&self) -> &VNormSpec {
        &self.vnorm
    }

    fn z_norm(&self) -> &CsrMatrix {
        &self.znorm
    }
}

/// Closed-form play operator `z(t) = max(z₀, (ℓ(t) − κ)/a)` for nondecreasing
/// load and the one-sided cone.
pub fn play_exact(oracle: &ScalarRis, z0: f64, t: f64) -> Result<f64> {
    let Potential::Quadratic { a } = oracle.potential else {
        return Err(Error::InvalidInput("closed form exists only for the quadratic potential".into()));
    };
    if oracle.dissipation.cone != Cone::Nonnegative || oracle.load_rate < 0.0 {
        return Err(Error::InvalidInput("closed form needs a one-sided cone and nondecreasing load".into()));
    }
    Ok(z0.max((oracle.load(t) - oracle.kappa()) / a))
}

/// Length of the jump of the double-well system under increasing load: from
/// the spinodal point `1 − 1/√3` to the other root of `Φ′(z) = Φ′(z_s)`,
/// which is `3 − 2z_s` since `z_s` is a double root.
pub fn double_well_jump() -> (f64, f64) {
    let zs = 1.0 - 1.0 / 3f64.sqrt();
    (zs, 3.0 - 2.0 * zs)
}

/// Arc-length time `t(s)` of the closed-form play operator: the unique
/// root of `t + (z(t) − z₀) = s`, found by bisection.
pub fn play_time_of_s(oracle: &ScalarRis, z0: f64, s: f64) -> Result<f64> {
    let arc = |t: f64| -> Result<f64> { Ok(t + play_exact(oracle, z0, t)? - z0) };
    let (mut lo, mut hi) = (0.0, s.max(0.0));
    if arc(hi)? <= s {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if arc(mid)? < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The symmetric cone needs the box variant; the one-sided oracle uses `variant`.
pub fn reference_run(oracle: &ScalarRis, z0: f64, t_end: f64, tau: f64, variant: Variant) -> Result<Trajectory> {
    let variant = if oracle.dissipation.cone == Cone::Symmetric { Variant::Box } else { variant };
    run(oracle, &[z0], &LissOptions::new(tau, t_end).with_variant(variant))
}

pub enum Reference<'a> {
    /// Closed-form play operator.
    Exact,
    /// A fine-step trajectory of the same problem.
    Trajectory(&'a Trajectory),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub steps: usize,
    /// `sup_s |t̂_τ(s) − t_ref(s)|`.
    pub err_t: f64,
    /// `sup_s |ẑ_τ(s) − z_ref(s)|`; for the exact reference this is
    /// `sup_s |ẑ_τ(s) − z(t̂_τ(s))|`.
    pub err_z: f64,
    pub final_z: f64,
    pub rate_t: Option<f64>,
    pub rate_z: Option<f64>,
}

fn observed_rate(e_prev: f64, e: f64, tau_prev: f64, tau: f64) -> Option<f64> {
    (e_prev > 0.0 && e > 0.0).then(|| (e_prev / e).ln() / (tau_prev / tau).ln())
}

/// Runs LISS for each `τ` and reports sup-norm errors of the affine
/// interpolants over the artificial time, with observed rates between
/// consecutive entries.
pub fn convergence_study(oracle: &ScalarRis, z0: f64, t_end: f64, taus: &[f64], variant: Variant, reference: Reference<'_>) -> Result<Vec<ConvergenceRow>> {
    const SAMPLES: usize = 4000;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(taus.len());
    for &tau in taus {
        let traj = reference_run(oracle, z0, t_end, tau, variant)?;
        let s_max = match reference {
            Reference::Exact => traj.last().s,
            Reference::Trajectory(r) => traj.last().s.max(r.last().s),
        };
        let ip = traj.interpolants().extended(s_max)?;
        let rp = match reference {
            Reference::Trajectory(r) => Some(r.interpolants().extended(s_max)?),
            Reference::Exact => None,
        };
        let mut grid: Vec<f64> = (0..=SAMPLES).map(|i| s_max * i as f64 / SAMPLES as f64).collect();
        grid.extend(traj.steps.iter().map(|st| st.s));
        let (mut err_t, mut err_z) = (0.0f64, 0.0f64);
        for s in grid {
            let (t, z) = (ip.t_hat(s)?, ip.z_hat(s)?[0]);
            let (t_ref, z_ref) = match &rp {
                Some(r) => (r.t_hat(s)?, r.z_hat(s)?[0]),
                None => (play_time_of_s(oracle, z0, s)?, play_exact(oracle, z0, t)?),
            };
            err_t = err_t.max((t - t_ref).abs());
            err_z = err_z.max((z - z_ref).abs());
        }
        let (rate_t, rate_z) = match rows.last() {
            Some(p) => (observed_rate(p.err_t, err_t, p.tau, tau), observed_rate(p.err_z, err_z, p.tau, tau)),
            None => (None, None),
        };
        rows.push(ConvergenceRow { tau, steps: traj.n(), err_t, err_z, final_z: traj.last().z[0], rate_t, rate_z });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn play_examples() {
        let o = ScalarRis::convex(1.0, 0.5).unwrap();
        assert_eq!(play_exact(&o, 0.0, 0.3).unwrap(), 0.0);
        assert_eq!(play_exact(&o, 0.0, 2.0).unwrap(), 1.5);
        assert_eq!(play_exact(&o, 1.0, 1.2).unwrap(), 1.0);
        assert!((play_exact(&o, 1.0, 1.7).unwrap() - 1.2).abs() < 1e-15);
        let free = ScalarRis::new(Potential::Quadratic { a: 2.0 }, 1e-300, 0.0, 1.0, Cone::Nonnegative).unwrap();
        assert!((play_exact(&free, 0.0, 3.0).unwrap() - 1.5).abs() < 1e-15);
        assert!(play_exact(&ScalarRis::nonconvex(0.05).unwrap(), 0.0, 1.0).is_err());
    }

    #[test]
    fn double_well_derivatives() {
        let p = Potential::DoubleWell;
        for &z in &[-0.3, 0.0, 0.4, 1.0, 2.2] {
            let h = 1e-6;
            let fd1 = (p.value(z + h) - p.value(z - h)) / (2.0 * h);
            let fd2 = (p.d1(z + h) - p.d1(z - h)) / (2.0 * h);
            assert!((fd1 - p.d1(z)).abs() < 1e-8);
            assert!((fd2 - p.d2(z)).abs() < 1e-8);
        }
        let spinodal = 1.0 - 1.0 / 3f64.sqrt();
        assert!(p.d2(spinodal).abs() < 1e-14);
        assert!((p.d1(spinodal) - 0.384_900_179_459_750_5).abs() < 1e-12);
        let (zs, zp) = double_well_jump();
        assert!((p.d1(zp) - p.d1(zs)).abs() < 1e-12);
        assert!((zp - zs - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn arc_length_time() {
        let o = ScalarRis::convex(1.0, 0.5).unwrap();
        assert!((play_time_of_s(&o, 0.0, 0.3).unwrap() - 0.3).abs() < 1e-12);
        // beyond the threshold s = t + (t − κ)
        assert!((play_time_of_s(&o, 0.0, 2.5).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn convex_study_rates() {
        let o = ScalarRis::convex(1.0, 0.5).unwrap();
        let rows = convergence_study(&o, 0.0, 2.0, &[0.1, 0.05, 0.025], Variant::Ball, Reference::Exact).unwrap();
        assert_eq!(rows.len(), 3);
        for w in rows.windows(2) {
            assert!(w[1].err_z <= w[0].err_z + 1e-12);
        }
        for r in &rows {
            assert!((r.final_z - 1.5).abs() <= 2.0 * r.tau);
        }
    }

    #[test]
    fn nonconvex_run_has_plateau() {
        let o = ScalarRis::nonconvex(0.05).unwrap();
        let tr = reference_run(&o, 0.0, 1.0, 0.01, Variant::Ball).unwrap();
        assert_eq!(tr.variant, Variant::Box);
        let p = tr.plateau_length(1e-12);
        assert!((p - 3f64.sqrt()).abs() < 0.05, "plateau {p}");
    }
}
