//! The outer LISS loop and its diagnostics.
//!
//! Each step solves a local stationarity problem at the previous time with a
//! step of length at most `τ`, then advances physical time by whatever part
//! of `τ` the state did not use: `t_k = t_{k−1} + τ − ‖z_k − z_{k−1}‖`.
//! The artificial time is `s_k = kτ`.

use crate::error::{check_dim, Error, Result};
use crate::ris::{check_local_stability, dist_to_stable, dissipation_value, worst_instability, DistMethod, RisProblem};
use crate::ssn::{solve_step, SsnOptions, StepSolution, Variant};

#[derive(Debug, Clone, Copy)]
pub struct LissOptions {
    pub tau: f64,
    pub t_end: f64,
    pub ssn: SsnOptions,
    /// Defaults to `⌈10·T/τ⌉`.
    pub step_cap: Option<usize>,
    /// Tolerance of the initial stability check.
    pub stability_tol: f64,
}

impl LissOptions {
    pub fn new(tau: f64, t_end: f64) -> Self {
        Self {
            tau,
            t_end,
            ssn: SsnOptions::default(),
            step_cap: None,
            stability_tol: 1e-12,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.ssn.variant = variant;
        self
    }

    pub fn cap(&self) -> usize {
        self.step_cap.unwrap_or_else(|| (10.0 * self.t_end / self.tau).ceil() as usize)
    }
}

#[derive(Debug, Clone)]
pub struct LissStep {
    pub k: usize,
    pub t: f64,
    pub s: f64,
    pub z: Vec<f64>,
    /// `‖z_k − z_{k−1}‖_V`.
    pub dz_v: f64,
    /// Norm entering the time update (equals `dz_v` for the ball variant).
    pub step_norm: f64,
    pub lambda: f64,
    pub dist: f64,
    /// Lumped V*-distance of `−D_zĨ(t_{k−1}, z_k)` to `∂ℛ(0)`.
    pub dist_lumped: f64,
    pub diss: f64,
    /// `Ĩ(t_k, z_k)`.
    pub energy: f64,
    pub newton_iters: usize,
    pub residual: f64,
    pub restarts: usize,
    pub active_set_stable: bool,
    pub descent_flagged: bool,
}

impl LissStep {
    pub(crate) fn initial(z0: Vec<f64>, energy: f64) -> Self {
        Self {
            k: 0,
            t: 0.0,
            s: 0.0,
            z: z0,
            dz_v: 0.0,
            step_norm: 0.0,
            lambda: 0.0,
            dist: 0.0,
            dist_lumped: 0.0,
            diss: 0.0,
            energy,
            newton_iters: 0,
            residual: 0.0,
            restarts: 0,
            active_set_stable: true,
            descent_flagged: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    pub t_end: f64,
    pub variant: Variant,
    /// Steps `0..=N`, step 0 being the initial state.
    pub steps: Vec<LissStep>,
    /// Artificial end time with `t̂(S) = T`.
    pub s_end: f64,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn last(&self) -> &LissStep {
        self.steps.last().expect("trajectory holds the initial state")
    }

    pub fn descent_flagged(&self) -> usize {
        self.steps.iter().filter(|s| s.descent_flagged).count()
    }

    pub fn max_newton_iters(&self) -> usize {
        self.steps.iter().map(|s| s.newton_iters).max().unwrap_or(0)
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    /// Total artificial time spent on cells with `t̂′ ≤ rate_tol` and moving
    /// state, i.e. the length of the jump plateaus of `t̂`.
    pub fn plateau_length(&self, rate_tol: f64) -> f64 {
        self.steps
            .windows(2)
            .filter(|w| (w[1].t - w[0].t) / self.tau <= rate_tol && w[1].step_norm > 0.0)
            .count() as f64
            * self.tau
    }

    pub fn interpolants(&self) -> Interpolants<'_> {
        Interpolants {
            traj: self,
            s_max: self.last().s,
        }
    }
}

/// Runs LISS from `z0` until the first `t_N ≥ T`.
pub fn run(problem: &dyn RisProblem, z0: &[f64], opts: &LissOptions) -> Result<Trajectory> {
    run_observed(problem, z0, opts, &mut |_, _| Ok(()))
}

/// As [`run`], calling `observe` after every accepted step with the step
/// record and the raw solver output.
pub fn run_observed(
    problem: &dyn RisProblem,
    z0: &[f64],
    opts: &LissOptions,
    observe: &mut dyn FnMut(&LissStep, &StepSolution) -> Result<()>,
) -> Result<Trajectory> {
    check_dim("initial state", problem.dim(), z0.len())?;
    let (tau, t_end) = (opts.tau, opts.t_end);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) || tau > t_end {
        return Err(Error::InvalidInput(format!("need 0 < tau <= T, got tau = {tau}, T = {t_end}")));
    }
    let grad0 = problem.gradient(0.0, z0)?;
    if !check_local_stability(&grad0, problem.dissipation(), opts.stability_tol) {
        let (index, violation) = worst_instability(&grad0, problem.dissipation()).unwrap_or((0, f64::NAN));
        return Err(Error::InitialInstability { index, violation });
    }
    let cap = opts.cap();
    let mut steps = vec![LissStep::initial(z0.to_vec(), problem.energy(0.0, z0)?)];
    while steps.last().expect("nonempty").t < t_end {
        let prev = steps.last().expect("nonempty");
        if prev.k >= cap {
            return Err(Error::StepCap { cap, t: prev.t });
        }
        let sol = solve_step(problem, prev.t, &prev.z, tau, &opts.ssn)?;
        let k = prev.k + 1;
        // the ball is met to rounding accuracy only; a step norm a few ulps
        // above τ must not move time backwards
        let t = prev.t + (tau - sol.step_norm).max(0.0);
        let diss = dissipation_value(&sol.dz, problem.dissipation(), 0.0)?;
        let eta: Vec<f64> = sol.gradient.iter().map(|g| -g).collect();
        let step = LissStep {
            k,
            t,
            s: k as f64 * tau,
            dz_v: crate::ris::v_norm(&sol.dz, problem.v_norm())?,
            step_norm: sol.step_norm,
            lambda: sol.lambda,
            dist: sol.dist,
            dist_lumped: dist_to_stable(&eta, problem.dissipation(), problem.v_norm(), DistMethod::Lumped)?,
            diss,
            energy: problem.energy(t, &sol.z)?,
            newton_iters: sol.stats.iterations,
            residual: sol.residual,
            restarts: sol.stats.restarts,
            active_set_stable: sol.stats.active_set_stable,
            descent_flagged: !sol.descent_ok,
            z: sol.z.clone(),
        };
        observe(&step, &sol)?;
        steps.push(step);
    }
    let n = steps.len() - 1;
    let (a, b) = (&steps[n - 1], &steps[n]);
    let s_end = a.s + tau * (t_end - a.t) / (b.t - a.t);
    Ok(Trajectory {
        tau,
        t_end,
        variant: opts.ssn.variant,
        steps,
        s_end,
    })
}

/// Piecewise-affine and piecewise-constant interpolants of a trajectory.
pub struct Interpolants<'a> {
    traj: &'a Trajectory,
    s_max: f64,
}

impl<'a> Interpolants<'a> {
    /// Extends the admissible range beyond `s_N` (constant extension).
    pub fn extended(mut self, s_max: f64) -> Result<Self> {
        if s_max < self.traj.last().s {
            return Err(Error::InvalidInput("extension must reach at least s_N".into()));
        }
        self.s_max = s_max;
        Ok(self)
    }

    /// Cell index `k` with `s ∈ [s_{k−1}, s_k]` and local coordinate in `[0, 1]`.
    fn locate(&self, s: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.s_max).contains(&s) {
            return Err(Error::InvalidInput(format!("s = {s} outside [0, {}]", self.s_max)));
        }
        let n = self.traj.n();
        let tau = self.traj.tau;
        if s >= self.traj.last().s {
            return Ok((n, 1.0));
        }
        let k = ((s / tau).floor() as usize + 1).clamp(1, n);
        let xi = ((s - self.traj.steps[k - 1].s) / tau).clamp(0.0, 1.0);
        Ok((k, xi))
    }

    pub fn t_hat(&self, s: f64) -> Result<f64> {
        let (k, xi) = self.locate(s)?;
        let (a, b) = (&self.traj.steps[k - 1], &self.traj.steps[k]);
        Ok(a.t + xi * (b.t - a.t))
    }

    pub fn z_hat(&self, s: f64) -> Result<Vec<f64>> {
        let (k, xi) = self.locate(s)?;
        let (a, b) = (&self.traj.steps[k - 1], &self.traj.steps[k]);
        Ok(a.z.iter().zip(&b.z).map(|(x, y)| x + xi * (y - x)).collect())
    }

    /// Right-continuous piecewise constant value: `t_k` on `(s_{k−1}, s_k]`.
    pub fn t_bar(&self, s: f64) -> Result<f64> {
        let (k, xi) = self.locate(s)?;
        Ok(if xi == 0.0 { self.traj.steps[k - 1].t } else { self.traj.steps[k].t })
    }

    /// Left value: `t_{k−1}` on `[s_{k−1}, s_k)`.
    pub fn t_under(&self, s: f64) -> Result<f64> {
        let (k, xi) = self.locate(s)?;
        Ok(if xi == 1.0 { self.traj.steps[k].t } else { self.traj.steps[k - 1].t })
    }

    pub fn z_bar(&self, s: f64) -> Result<Vec<f64>> {
        let (k, xi) = self.locate(s)?;
        Ok(if xi == 0.0 { self.traj.steps[k - 1].z.clone() } else { self.traj.steps[k].z.clone() })
    }

    pub fn z_under(&self, s: f64) -> Result<Vec<f64>> {
        let (k, xi) = self.locate(s)?;
        Ok(if xi == 1.0 { self.traj.steps[k].z.clone() } else { self.traj.steps[k - 1].z.clone() })
    }

    /// `(t̂′, ‖ẑ′‖)` on cell `k`, in the norm of the time update.
    pub fn derivatives(&self, k: usize) -> Result<(f64, f64)> {
        if k == 0 || k > self.traj.n() {
            return Err(Error::InvalidInput(format!("cell {k} out of range")));
        }
        let tau = self.traj.tau;
        let (a, b) = (&self.traj.steps[k - 1], &self.traj.steps[k]);
        Ok(((b.t - a.t) / tau, b.step_norm / tau))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ComplementarityRow {
    pub k: usize,
    pub time_rate: f64,
    pub state_rate: f64,
    pub product: f64,
    pub dist: f64,
}

#[derive(Debug, Clone)]
pub struct ComplementarityReport {
    pub rows: Vec<ComplementarityRow>,
    /// Most negative `(t_k − t_{k−1})/τ`, clipped at 0.
    pub min_time_rate: f64,
    pub max_sum_defect: f64,
    /// `max_k |product| / max(1, dist_k)`.
    pub max_scaled_product: f64,
}

impl ComplementarityReport {
    pub fn holds(&self, tol_rate: f64, tol_product: f64) -> bool {
        self.min_time_rate >= -tol_rate && self.max_sum_defect <= tol_rate && self.max_scaled_product <= tol_product
    }
}

pub fn complementarity_report(traj: &Trajectory) -> ComplementarityReport {
    let tau = traj.tau;
    let mut rows = Vec::with_capacity(traj.n());
    let (mut min_rate, mut max_sum, mut max_prod) = (f64::INFINITY, 0.0f64, 0.0f64);
    for w in traj.steps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let time_rate = (b.t - a.t) / tau;
        let state_rate = b.step_norm / tau;
        let product = time_rate * b.dist;
        min_rate = min_rate.min(time_rate);
        max_sum = max_sum.max((time_rate + state_rate - 1.0).abs());
        max_prod = max_prod.max(product.abs() / b.dist.max(1.0));
        rows.push(ComplementarityRow {
            k: b.k,
            time_rate,
            state_rate,
            product,
            dist: b.dist,
        });
    }
    ComplementarityReport {
        rows,
        min_time_rate: min_rate.min(0.0),
        max_sum_defect: max_sum,
        max_scaled_product: max_prod,
    }
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[derive(Debug, Clone)]
pub struct EnergyIdentityReport {
    /// Per-cell residual `R_k` of the discrete identity.
    pub per_step: Vec<f64>,
    /// Cumulative `R(s_n)`.
    pub cumulative: Vec<f64>,
    /// Cumulative residual with `‖ẑ′‖·dist` in place of `dist`.
    pub cumulative_continuous: Vec<f64>,
    pub max_abs_cumulative: f64,
}

impl EnergyIdentityReport {
    pub fn final_residual(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

pub fn energy_identity_report(traj: &Trajectory, problem: &dyn RisProblem) -> Result<EnergyIdentityReport> {
    let tau = traj.tau;
    let mut per_step = Vec::with_capacity(traj.n());
    let mut cumulative = Vec::with_capacity(traj.n());
    let mut cumulative_continuous = Vec::with_capacity(traj.n());
    let (mut acc, mut acc_c, mut max_abs) = (0.0, 0.0, 0.0f64);
    for w in traj.steps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        let mut work = 0.0;
        if dt != 0.0 {
            for (xi, wt) in GAUSS3 {
                let t = a.t + xi * dt;
                let z: Vec<f64> = a.z.iter().zip(&b.z).map(|(x, y)| x + xi * (y - x)).collect();
                work += wt * problem.partial_t(t, &z)?;
            }
            // ∫ ∂_tĨ t̂′ dσ over a cell of length τ with t̂′ = dt/τ
            work *= dt;
        }
        let base = b.energy - a.energy + b.diss - work;
        let r = base + tau * b.dist;
        acc += r;
        acc_c += base + b.step_norm * b.dist;
        max_abs = max_abs.max(acc.abs());
        per_step.push(r);
        cumulative.push(acc);
        cumulative_continuous.push(acc_c);
    }
    Ok(EnergyIdentityReport {
        per_step,
        cumulative,
        cumulative_continuous,
        max_abs_cumulative: max_abs,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct AprioriReport {
    pub total_dissipation: f64,
    pub total_variation: f64,
    /// `Σ ‖Δz_k‖²_Z`.
    pub sum_dz_z_sq: f64,
    /// `Σ ‖Δz_k‖²_Z / τ`.
    pub h1_ratio: f64,
    pub max_dist: f64,
    pub max_z_norm: f64,
}

pub fn apriori_report(traj: &Trajectory, problem: &dyn RisProblem) -> AprioriReport {
    let zn = problem.z_norm();
    let mut r = AprioriReport {
        total_dissipation: 0.0,
        total_variation: 0.0,
        sum_dz_z_sq: 0.0,
        h1_ratio: 0.0,
        max_dist: 0.0,
        max_z_norm: zn.quad_form(&traj.steps[0].z).max(0.0).sqrt(),
    };
    for w in traj.steps.windows(2) {
        let dz: Vec<f64> = w[1].z.iter().zip(&w[0].z).map(|(a, b)| a - b).collect();
        r.total_dissipation += w[1].diss;
        r.total_variation += w[1].dz_v;
        r.sum_dz_z_sq += zn.quad_form(&dz);
        r.max_dist = r.max_dist.max(w[1].dist);
        r.max_z_norm = r.max_z_norm.max(zn.quad_form(&w[1].z).max(0.0).sqrt());
    }
    r.h1_ratio = r.sum_dz_z_sq / traj.tau;
    r
}

/// Refinement family check: every quantity stays within `factor` of its
/// value on the first (coarsest) member.
pub fn bounded_across(reports: &[AprioriReport], factor: f64) -> bool {
    let Some(first) = reports.first() else {
        return true;
    };
    let pick = |r: &AprioriReport| [r.total_dissipation, r.total_variation, r.h1_ratio];
    let base = pick(first);
    reports.iter().all(|r| {
        pick(r).iter().zip(&base).all(|(v, b)| {
            if *b == 0.0 {
                *v == 0.0
            } else {
                v / b <= factor && b / v <= factor
            }
        })
    })
}
