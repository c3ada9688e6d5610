//! Semismooth Newton solution of one local stationarity step
//!
//! `0 ∈ ∂ℛ(Δz) + ∂I_τ(Δz) + D_zĨ(t_prev, z_prev + Δz)`.
//!
//! The ball variant constrains `‖Δz‖_V ≤ τ` and uses the max-reformulated
//! complementarity system in `(z, q, λ)`, linearized together with the
//! displacement sensitivity `η` ("blown-up" system). The box variant
//! constrains `lo ≤ Δz_i ≤ τ` and works with a combined multiplier `μ`
//! through a proximal-point equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ris::{dissipation_value, dist_to_stable, v_norm, Cone, DistMethod, RisProblem};
use crate::sparse::{dot, norm_inf, solve_general, LinearSolver, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Ball,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsnOptions {
    pub abs_tol: f64,
    pub max_iters: usize,
    pub variant: Variant,
    pub linear_solver: LinearSolver,
    /// Relative slack of the energy descent check, scaled by `max(|Ĩ|, 1)`.
    pub descent_tol: f64,
    /// Admissible ball violation `G ≤ feas_tol·τ²`, widened by the rounding error of `Δz`.
    pub feas_tol: f64,
    /// Step halvings tried when a full Newton step does not reduce `‖F‖_∞`;
    /// if none does, the full step is taken. `0` gives the undamped method.
    pub max_backtracks: usize,
}

impl Default for SsnOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_iters: 30,
            variant: Variant::Ball,
            linear_solver: LinearSolver::SparseLu,
            descent_tol: 1e-12,
            feas_tol: 1e-14,
            max_backtracks: 0,
        }
    }
}

impl SsnOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("abs_tol", self.abs_tol), ("descent_tol", self.descent_tol), ("feas_tol", self.feas_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Iterate of the ball system with its active-set indicators.
#[derive(Debug, Clone)]
pub struct NewtonState {
    pub z: Vec<f64>,
    pub q: Vec<f64>,
    pub lambda: f64,
    /// `true` where `α_i = −1` (cone constraint active).
    pub active: Vec<bool>,
    /// Ball indicator `χ`.
    pub chi: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SsnStats {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Active sets unchanged over the last two iterations.
    pub active_set_stable: bool,
    /// Number of restarts from perturbed initial guesses.
    pub restarts: usize,
}

/// Converged step, common to both variants.
#[derive(Debug, Clone)]
pub struct StepSolution {
    pub z: Vec<f64>,
    pub dz: Vec<f64>,
    /// Ball: cone multiplier `q ≤ 0`. Box: `min(μ − κm, 0)` (one-sided) or
    /// the lower-bound multiplier (two-sided).
    pub q: Vec<f64>,
    /// Box upper-bound multiplier `q⁺ ≥ 0`; zero for the ball variant.
    pub q_plus: Vec<f64>,
    pub lambda: f64,
    /// Norm used by the time update: `‖Δz‖_V` (ball) or `‖Δz‖_∞` (box).
    pub step_norm: f64,
    /// Dual distance of the driving force to `∂ℛ(0)` at the step, measured in
    /// the norm dual to `step_norm`.
    pub dist: f64,
    /// `Ĩ(t_prev, z)`.
    pub energy: f64,
    /// `D_zĨ(t_prev, z)`.
    pub gradient: Vec<f64>,
    pub residual: f64,
    pub descent_ok: bool,
    pub stats: SsnStats,
}

fn ball_parts(problem: &dyn RisProblem, z_prev: &[f64], tau: f64, z: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let vn = problem.v_norm();
    let dz: Vec<f64> = z.iter().zip(z_prev).map(|(a, b)| a - b).collect();
    let w = vn.riesz(&dz);
    let g = 0.5 * (dot(&dz, &w) - tau * tau);
    (dz, w, g)
}

fn ball_residual_norm(problem: &dyn RisProblem, t_prev: f64, z_prev: &[f64], tau: f64, z: &[f64], q: &[f64], lambda: f64) -> Result<f64> {
    // trial points may leave the range where the energy is defined numerically
    let grad = match problem.gradient(t_prev, z) {
        Ok(g) => g,
        Err(Error::Singular { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    let ds = problem.dissipation();
    let (dz, w, g) = ball_parts(problem, z_prev, tau, z);
    let mut r = (-lambda).max(g).abs();
    for i in 0..z.len() {
        r = r.max((grad[i] + ds.threshold(i) + q[i] + lambda * w[i]).abs()).max(q[i].max(-dz[i]).abs());
    }
    Ok(if r.is_nan() { f64::INFINITY } else { r })
}

/// Stacked residual `(F₁, F₂, F₃, F₄)` of the ball system; `F₂ ≡ 0` has the
/// length of the eliminated displacement block.
pub fn residual_ball(
    problem: &dyn RisProblem,
    t_prev: f64,
    z_prev: &[f64],
    tau: f64,
    z: &[f64],
    q: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let lin = problem.linearize(t_prev, z)?;
    let ds = problem.dissipation();
    let (dz, w, g) = ball_parts(problem, z_prev, tau, z);
    let n = z.len();
    let p = lin.blocks.inner_dim();
    let mut f = Vec::with_capacity(2 * n + p + 1);
    f.extend((0..n).map(|i| lin.gradient[i] + ds.threshold(i) + q[i] + lambda * w[i]));
    f.extend(std::iter::repeat(0.0).take(p));
    f.extend((0..n).map(|i| q[i].max(-dz[i])));
    f.push((-lambda).max(g));
    Ok(f)
}

/// Literal three-block residual of the box system with separate multipliers:
/// `F₁ = D_zĨ + κm + q⁻ + q⁺`, `max{q⁻, −Δz}`, `max{−q⁺, Δz − τ}`.
pub fn residual_box(
    problem: &dyn RisProblem,
    t_prev: f64,
    z_prev: &[f64],
    tau: f64,
    z: &[f64],
    q_minus: &[f64],
    q_plus: &[f64],
) -> Result<Vec<f64>> {
    let grad = problem.gradient(t_prev, z)?;
    let ds = problem.dissipation();
    let n = z.len();
    let mut f = Vec::with_capacity(3 * n);
    f.extend((0..n).map(|i| grad[i] + ds.threshold(i) + q_minus[i] + q_plus[i]));
    f.extend((0..n).map(|i| q_minus[i].max(-(z[i] - z_prev[i]))));
    f.extend((0..n).map(|i| (-q_plus[i]).max(z[i] - z_prev[i] - tau)));
    Ok(f)
}

/// Jacobian of the ball system over `(Δz, η, Δq, Δλ)`.
pub fn newton_matrix_ball(problem: &dyn RisProblem, t_prev: f64, z_prev: &[f64], tau: f64, state: &NewtonState) -> Result<crate::sparse::CsrMatrix> {
    let lin = problem.linearize(t_prev, &state.z)?;
    let (_, w, _) = ball_parts(problem, z_prev, tau, &state.z);
    Ok(assemble_ball(problem, &lin.blocks, &w, state))
}

fn assemble_ball(problem: &dyn RisProblem, blocks: &crate::ris::NewtonBlocks, w: &[f64], state: &NewtonState) -> crate::sparse::CsrMatrix {
    let vn = problem.v_norm();
    let n = state.z.len();
    let p = blocks.inner_dim();
    let dim = 2 * n + p + 1;
    let (oq, ol) = (n + p, 2 * n + p);
    let nnz = blocks.zz.nnz() + vn.mass().nnz() + 2 * blocks.zu.nnz() + blocks.uu.nnz() + 5 * n;
    let mut tb = TripletBuilder::with_capacity(dim, dim, nnz);
    tb.push_block(0, 0, &blocks.zz, 1.0);
    if state.lambda != 0.0 {
        tb.push_block(0, 0, vn.mass(), state.lambda * vn.scaling());
    }
    tb.push_block(0, n, &blocks.zu, 1.0);
    tb.push_block_transposed(n, 0, &blocks.zu);
    tb.push_block(n, n, &blocks.uu, 1.0);
    for i in 0..n {
        tb.push(i, oq + i, 1.0);
        tb.push(i, ol, w[i]);
        if state.active[i] {
            tb.push(oq + i, i, -1.0);
        } else {
            tb.push(oq + i, oq + i, 1.0);
        }
        if state.chi {
            tb.push(ol, i, w[i]);
        }
    }
    if !state.chi {
        tb.push(ol, ol, -1.0);
    }
    tb.build()
}

/// Lumped-metric projected steepest descent direction, normalized to
/// `‖d‖_V = 1`; zero at stable points.
pub fn descent_direction(problem: &dyn RisProblem, gradient: &[f64]) -> Result<Vec<f64>> {
    let ds = problem.dissipation();
    let vn = problem.v_norm();
    let d: Vec<f64> = (0..gradient.len())
        .map(|i| {
            let f = -gradient[i];
            let v = match ds.cone {
                Cone::Nonnegative => (f - ds.threshold(i)).max(0.0),
                Cone::Symmetric => f.signum() * (f.abs() - ds.threshold(i)).max(0.0),
            };
            v / vn.lumped()[i]
        })
        .collect();
    let nrm = v_norm(&d, vn)?;
    Ok(if nrm > 0.0 { d.into_iter().map(|v| v / nrm).collect() } else { d })
}

/// Initial guess of a restart.
struct Start {
    z: Vec<f64>,
    lambda: f64,
}

struct Attempt {
    sol: StepSolution,
    merit: f64,
}

const FALLBACK_BACKTRACKS: usize = 8;

/// Solves one LISS step; on failure of the descent check or of Newton
/// convergence, restarts from `z_prev + s·d` for `s ∈ {τ, τ/2, τ/4}` along the
/// projected steepest-descent direction `d`. If no start converges at all, the
/// starts are repeated with step halving. If no restart yields a descent
/// point, the converged candidate with least `Ĩ + ℛ` is returned with
/// `descent_ok = false`.
pub fn solve_step(problem: &dyn RisProblem, t_prev: f64, z_prev: &[f64], tau: f64, opts: &SsnOptions) -> Result<StepSolution> {
    opts.validate()?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {tau}")));
    }
    if opts.variant == Variant::Ball && problem.dissipation().cone != Cone::Nonnegative {
        return Err(Error::InvalidInput("the ball variant supports the nonnegative cone only".into()));
    }
    let e_prev = problem.energy(t_prev, z_prev)?;
    let slack = opts.descent_tol * e_prev.abs().max(1.0);
    let mut best: Option<Attempt> = None;
    let mut last_err = None;
    let mut restarts = 0;
    let mut starts = vec![None];
    let grad_prev = problem.gradient(t_prev, z_prev)?;
    let d = descent_direction(problem, &grad_prev)?;
    if d.iter().any(|&v| v != 0.0) {
        // first-order model of the step: Δz ≈ τ·d with λ·τ equal to the
        // distance of the driving force to the stable set
        let eta: Vec<f64> = grad_prev.iter().map(|g| -g).collect();
        let lambda = dist_to_stable(&eta, problem.dissipation(), problem.v_norm(), DistMethod::Lumped)? / tau;
        starts.extend([1.0, 0.5, 0.25].map(|s| {
            Some(Start {
                z: z_prev.iter().zip(&d).map(|(z, d)| z + s * tau * d).collect(),
                lambda,
            })
        }));
    }
    // damped attempts only when no undamped start converges
    let damped = SsnOptions {
        max_backtracks: opts.max_backtracks.max(FALLBACK_BACKTRACKS),
        ..*opts
    };
    let n_starts = starts.len();
    let stages: Vec<(&Option<Start>, &SsnOptions)> = starts.iter().map(|s| (s, opts)).chain(starts.iter().map(|s| (s, &damped))).collect();
    for (j, (start, o)) in stages.into_iter().enumerate() {
        if j == n_starts && (best.is_some() || opts.max_backtracks >= FALLBACK_BACKTRACKS) {
            break;
        }
        let result = match o.variant {
            Variant::Ball => solve_ball_from(problem, t_prev, z_prev, tau, o, start.as_ref()),
            Variant::Box => solve_box_from(problem, t_prev, z_prev, tau, o, start.as_ref().map(|s| s.z.as_slice())),
        };
        match result {
            Ok(mut sol) => {
                sol.stats.restarts = restarts;
                let diss = dissipation_value(&sol.dz, problem.dissipation(), 0.0)?;
                let merit = sol.energy + diss;
                sol.descent_ok = merit <= e_prev + slack;
                if sol.descent_ok {
                    return Ok(sol);
                }
                if best.as_ref().is_none_or(|b| merit < b.merit) {
                    best = Some(Attempt { sol, merit });
                }
            }
            Err(e) => last_err = Some(e),
        }
        restarts += 1;
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b.sol),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one attempt is made"),
    }
}

fn solve_ball_from(
    problem: &dyn RisProblem,
    t_prev: f64,
    z_prev: &[f64],
    tau: f64,
    opts: &SsnOptions,
    start: Option<&Start>,
) -> Result<StepSolution> {
    let n = problem.dim();
    let ds = problem.dissipation();
    let (z0, lambda0) = start.map_or_else(|| (z_prev.to_vec(), 0.0), |s| (s.z.clone(), s.lambda));
    let g0 = problem.gradient(t_prev, &z0)?;
    let (_, w0, _) = ball_parts(problem, z_prev, tau, &z0);
    let mut st = NewtonState {
        q: (0..n).map(|i| (-(g0[i] + ds.threshold(i) + lambda0 * w0[i])).min(0.0)).collect(),
        z: z0,
        lambda: lambda0,
        active: vec![false; n],
        chi: false,
    };
    let mut history = Vec::new();
    let mut sets: Vec<(Vec<bool>, bool)> = Vec::new();
    for iter in 0..=opts.max_iters {
        let lin = problem.linearize(t_prev, &st.z)?;
        let (dz, w, g) = ball_parts(problem, z_prev, tau, &st.z);
        let f1: Vec<f64> = (0..n).map(|i| lin.gradient[i] + ds.threshold(i) + st.q[i] + st.lambda * w[i]).collect();
        let f3: Vec<f64> = (0..n).map(|i| st.q[i].max(-dz[i])).collect();
        let f4 = (-st.lambda).max(g);
        let res = norm_inf(&f1).max(norm_inf(&f3)).max(f4.abs());
        history.push(res);
        // an active ball must also be met to rounding accuracy so the time
        // update never runs backwards; Δz itself carries an error of ulp(z)
        let rounding: f64 = (0..n).map(|i| w[i].abs() * st.z[i].abs().max(z_prev[i].abs())).sum::<f64>() * 4.0 * f64::EPSILON;
        let feas = opts.feas_tol * tau * tau + rounding;
        if res <= opts.abs_tol && g <= feas && (st.lambda == 0.0 || g.abs() <= feas) {
            // F₃ only bounds −Δz by the tolerance; round-off below zero would
            // make ℛ infinite
            let snapped = dz.iter().any(|&v| v < 0.0);
            let (dz, lin) = if snapped {
                for (z, zp) in st.z.iter_mut().zip(z_prev) {
                    *z = z.max(*zp);
                }
                let dz: Vec<f64> = st.z.iter().zip(z_prev).map(|(a, b)| a - b).collect();
                (dz, problem.linearize(t_prev, &st.z)?)
            } else {
                (dz, lin)
            };
            let step_norm = v_norm(&dz, problem.v_norm())?;
            let stable = sets.len() >= 2 && sets[sets.len() - 1] == sets[sets.len() - 2];
            return Ok(StepSolution {
                dist: st.lambda * step_norm,
                z: st.z,
                dz,
                q: st.q,
                q_plus: vec![0.0; n],
                lambda: st.lambda,
                step_norm,
                energy: lin.energy,
                gradient: lin.gradient,
                residual: res,
                descent_ok: true,
                stats: SsnStats {
                    iterations: iter,
                    residual_history: history,
                    active_set_stable: stable,
                    restarts: 0,
                },
            });
        }
        if iter == opts.max_iters || !res.is_finite() {
            break;
        }
        // ties go to the multiplier branch
        st.active = (0..n).map(|i| -st.q[i] - dz[i] > 0.0).collect();
        // with Δz = 0 the ball row would vanish identically
        st.chi = g > -st.lambda && w.iter().any(|&v| v != 0.0);
        sets.push((st.active.clone(), st.chi));
        let mat = assemble_ball(problem, &lin.blocks, &w, &st);
        let p = lin.blocks.inner_dim();
        let mut rhs = vec![0.0; 2 * n + p + 1];
        for i in 0..n {
            rhs[i] = -f1[i];
            rhs[n + p + i] = -f3[i];
        }
        rhs[2 * n + p] = -f4;
        let delta = solve_general(&mat, &rhs, opts.linear_solver, "ball Newton system").map_err(|e| match e {
            Error::Singular { context } => Error::Singular {
                context: format!(
                    "{context}; active cone set size {}, ball active {}",
                    st.active.iter().filter(|&&a| a).count(),
                    st.chi
                ),
            },
            other => other,
        })?;
        let trial = |theta: f64| -> (Vec<f64>, Vec<f64>, f64) {
            let z = (0..n).map(|i| st.z[i] + theta * delta[i]).collect();
            let q = (0..n).map(|i| st.q[i] + theta * delta[n + p + i]).collect();
            (z, q, (st.lambda + theta * delta[2 * n + p]).max(0.0))
        };
        let mut next = trial(1.0);
        let mut theta = 1.0;
        for _ in 0..opts.max_backtracks {
            if ball_residual_norm(problem, t_prev, z_prev, tau, &next.0, &next.1, next.2)? < res {
                break;
            }
            theta *= 0.5;
            let cand = trial(theta);
            if ball_residual_norm(problem, t_prev, z_prev, tau, &cand.0, &cand.1, cand.2)? < res {
                next = cand;
                break;
            }
        }
        (st.z, st.q, st.lambda) = next;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        last_residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

/// Componentwise data of the box proximal equation in the metric scaled by
/// the lumped masses: `y = Δz + μ/m`, thresholds `κ` on both sides.
struct BoxGeometry {
    lo: f64,
    hi: f64,
    kappa: f64,
}

impl BoxGeometry {
    /// `(prox(y), slope)`; slope is 1 strictly inside a moving branch.
    fn prox(&self, y: f64) -> (f64, f64) {
        let soft = if y > self.kappa {
            y - self.kappa
        } else if y < -self.kappa {
            y + self.kappa
        } else {
            return (0.0f64.clamp(self.lo, self.hi), 0.0);
        };
        if soft > self.lo && soft < self.hi {
            (soft, 1.0)
        } else {
            (soft.clamp(self.lo, self.hi), 0.0)
        }
    }
}

fn solve_box_from(
    problem: &dyn RisProblem,
    t_prev: f64,
    z_prev: &[f64],
    tau: f64,
    opts: &SsnOptions,
    start: Option<&[f64]>,
) -> Result<StepSolution> {
    let n = problem.dim();
    let ds = problem.dissipation();
    let m = &ds.masses;
    let geo = BoxGeometry {
        lo: if ds.cone == Cone::Nonnegative { 0.0 } else { -tau },
        hi: tau,
        kappa: ds.kappa,
    };
    let mut z = start.map_or_else(|| z_prev.to_vec(), <[f64]>::to_vec);
    let g0 = problem.gradient(t_prev, &z)?;
    // a restart starts on the branch its state implies: μ⁰ = −D_zĨ(z⁰)
    // zeroes F₁, whereas clipping μ⁰ to the threshold can pick the moving
    // branch one ulp below the bound
    let mut mu: Vec<f64> = (0..n)
        .map(|i| match (start.is_some(), ds.cone) {
            (true, _) => -g0[i],
            (false, Cone::Nonnegative) => (-g0[i]).min(ds.threshold(i)),
            (false, Cone::Symmetric) => (-g0[i]).clamp(-ds.threshold(i), ds.threshold(i)),
        })
        .collect();
    let mut history = Vec::new();
    let mut sets: Vec<Vec<bool>> = Vec::new();
    for iter in 0..=opts.max_iters {
        let lin = problem.linearize(t_prev, &z)?;
        let dz: Vec<f64> = z.iter().zip(z_prev).map(|(a, b)| a - b).collect();
        let f1: Vec<f64> = (0..n).map(|i| lin.gradient[i] + mu[i]).collect();
        let prox: Vec<(f64, f64)> = (0..n).map(|i| geo.prox(dz[i] + mu[i] / m[i])).collect();
        let fb: Vec<f64> = (0..n).map(|i| dz[i] - prox[i].0).collect();
        let res = norm_inf(&f1).max(norm_inf(&fb));
        history.push(res);
        if res <= opts.abs_tol {
            // snap onto the bounds reached by the clipped branch
            let dz: Vec<f64> = (0..n).map(|i| if prox[i].1 == 0.0 { prox[i].0 } else { dz[i] }).collect();
            let z: Vec<f64> = z_prev.iter().zip(&dz).map(|(a, b)| a + b).collect();
            let dz: Vec<f64> = z.iter().zip(z_prev).map(|(a, b)| a - b).collect();
            let (q, q_plus): (Vec<f64>, Vec<f64>) = (0..n)
                .map(|i| {
                    let up = (mu[i] - ds.threshold(i)).max(0.0);
                    let down = match ds.cone {
                        Cone::Nonnegative => (mu[i] - ds.threshold(i)).min(0.0),
                        Cone::Symmetric => (mu[i] + ds.threshold(i)).min(0.0),
                    };
                    (down, up)
                })
                .unzip();
            let bound_force: f64 = match ds.cone {
                Cone::Nonnegative => q_plus.iter().sum(),
                Cone::Symmetric => q_plus.iter().zip(&q).map(|(u, d)| u - d).sum(),
            };
            let step_norm = norm_inf(&dz);
            let stable = sets.len() >= 2 && sets[sets.len() - 1] == sets[sets.len() - 2];
            let lin = problem.linearize(t_prev, &z)?;
            return Ok(StepSolution {
                z,
                dz,
                q,
                q_plus,
                lambda: 0.0,
                step_norm,
                dist: bound_force,
                energy: lin.energy,
                gradient: lin.gradient,
                residual: res,
                descent_ok: true,
                stats: SsnStats {
                    iterations: iter,
                    residual_history: history,
                    active_set_stable: stable,
                    restarts: 0,
                },
            });
        }
        if iter == opts.max_iters || !res.is_finite() {
            break;
        }
        sets.push(prox.iter().map(|p| p.1 != 0.0).collect());
        let p = lin.blocks.inner_dim();
        let dim = 2 * n + p;
        let om = n + p;
        let mut tb = TripletBuilder::with_capacity(dim, dim, lin.blocks.zz.nnz() + 2 * lin.blocks.zu.nnz() + lin.blocks.uu.nnz() + 3 * n);
        tb.push_block(0, 0, &lin.blocks.zz, 1.0);
        tb.push_block(0, n, &lin.blocks.zu, 1.0);
        tb.push_block_transposed(n, 0, &lin.blocks.zu);
        tb.push_block(n, n, &lin.blocks.uu, 1.0);
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            tb.push(i, om + i, 1.0);
            rhs[i] = -f1[i];
            // rows scaled by m_i: moving branch pins μ_i, clipped branch pins Δz_i
            let s = prox[i].1;
            if s == 0.0 {
                tb.push(om + i, i, 1.0);
                rhs[om + i] = -fb[i];
            } else {
                tb.push(om + i, om + i, -1.0);
                rhs[om + i] = -fb[i] * m[i];
            }
        }
        let delta = solve_general(&tb.build(), &rhs, opts.linear_solver, "box Newton system")?;
        let trial = |theta: f64| -> (Vec<f64>, Vec<f64>) {
            ((0..n).map(|i| z[i] + theta * delta[i]).collect(), (0..n).map(|i| mu[i] + theta * delta[om + i]).collect())
        };
        let residual_at = |(z, mu): &(Vec<f64>, Vec<f64>)| -> Result<f64> {
            let grad = match problem.gradient(t_prev, z) {
                Ok(g) => g,
                Err(Error::Singular { .. }) => return Ok(f64::INFINITY),
                Err(e) => return Err(e),
            };
            let r = (0..n).fold(0.0f64, |r, i| {
                let y = z[i] - z_prev[i];
                r.max((grad[i] + mu[i]).abs()).max((y - geo.prox(y + mu[i] / m[i]).0).abs())
            });
            Ok(if r.is_nan() { f64::INFINITY } else { r })
        };
        let mut next = trial(1.0);
        let mut theta = 1.0;
        for _ in 0..opts.max_backtracks {
            if residual_at(&next)? < res {
                break;
            }
            theta *= 0.5;
            let cand = trial(theta);
            if residual_at(&cand)? < res {
                next = cand;
                break;
            }
        }
        (z, mu) = next;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        last_residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

/// Residuals of the discrete optimality relations of a converged ball step:
/// complementarity of the ball multiplier, `τ·dist = ⟨ζ, Δz⟩`, the energy
/// balance `ℛ(Δz) + τ·dist = ⟨−D_zĨ, Δz⟩`, and the worst violation of
/// `ℛ(v) ≥ ⟨−ζ − D_zĨ, v⟩` over the given directions. Each is relative to the
/// magnitude of the terms involved.
#[derive(Debug, Clone, Copy)]
pub struct OptimalityResiduals {
    pub ball_complementarity: f64,
    pub dist_pairing: f64,
    pub energy_balance: f64,
    pub subgradient: f64,
}

impl OptimalityResiduals {
    pub fn max(&self) -> f64 {
        self.ball_complementarity.max(self.dist_pairing).max(self.energy_balance).max(self.subgradient)
    }
}

pub fn optimality_residuals(problem: &dyn RisProblem, sol: &StepSolution, tau: f64, directions: &[Vec<f64>]) -> Result<OptimalityResiduals> {
    let vn = problem.v_norm();
    let ds = problem.dissipation();
    let zeta: Vec<f64> = vn.riesz(&sol.dz).into_iter().map(|v| sol.lambda * v).collect();
    let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / scale.max(1e-300);
    let lam_scale = sol.lambda * tau;
    let ball_complementarity = if lam_scale == 0.0 { 0.0 } else { (sol.lambda * (sol.step_norm - tau)).abs() / lam_scale };
    let pair = dot(&zeta, &sol.dz);
    let td = tau * sol.dist;
    let dist_pairing = rel(td, pair, td.abs().max(pair.abs()).max(f64::MIN_POSITIVE));
    let diss = dissipation_value(&sol.dz, ds, 0.0)?;
    let work = -dot(&sol.gradient, &sol.dz);
    let gscale: f64 = sol.gradient.iter().zip(&sol.dz).map(|(g, d)| (g * d).abs()).sum::<f64>() + diss + td;
    let energy_balance = rel(diss + td, work, gscale.max(f64::MIN_POSITIVE));
    let mut subgradient: f64 = 0.0;
    for v in directions {
        let rv = dissipation_value(v, ds, 0.0)?;
        let rhs: f64 = (0..v.len()).map(|i| (-zeta[i] - sol.gradient[i]) * v[i]).sum();
        let scale: f64 = rv + (0..v.len()).map(|i| ((zeta[i] + sol.gradient[i]) * v[i]).abs()).sum::<f64>();
        subgradient = subgradient.max((rhs - rv).max(0.0) / scale.max(f64::MIN_POSITIVE));
    }
    Ok(OptimalityResiduals {
        ball_complementarity,
        dist_pairing,
        energy_balance,
        subgradient,
    })
}
