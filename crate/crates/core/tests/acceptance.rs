//! Acceptance suite: one PASS/FAIL line per criterion. Reference values are
//! computed here from closed forms and finite differences, not taken from the
//! library's own reports.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use liss_core::config::{Problem, RunConfig};
use liss_core::damage::{reduced_hessian_action, DamageProblem};
use liss_core::liss::{run, run_observed, LissOptions, Trajectory};
use liss_core::mesh::Mesh;
use liss_core::oracle::ScalarRis;
use liss_core::ris::RisProblem;
use liss_core::ssn::{StepSolution, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome) {
    println!("{} criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

// ---------------------------------------------------------------- fixtures

fn damage(h: f64) -> DamageProblem {
    let cfg = RunConfig::parse(&format!("example = \"example1\"\n[mesh]\nh = {h}\n")).unwrap();
    match cfg.problem().unwrap() {
        Problem::Damage(p) => *p,
        Problem::Scalar(_) => unreachable!(),
    }
}

/// P1 mass matrix as dense rows of (column, value), lumped masses and area.
struct MassData {
    rows: Vec<Vec<(usize, f64)>>,
    lumped: Vec<f64>,
    area: f64,
}

fn tri_area(mesh: &Mesh, t: &[usize; 3]) -> f64 {
    let [a, b, c] = t.map(|i| mesh.nodes()[i]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
}

fn mass_data(mesh: &Mesh) -> MassData {
    let n = mesh.num_nodes();
    let mut dense: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    let mut area = 0.0;
    for t in mesh.triangles() {
        let a = tri_area(mesh, t);
        area += a;
        for &i in t {
            for &j in t {
                *dense[i].entry(j).or_default() += if i == j { a / 6.0 } else { a / 12.0 };
            }
        }
    }
    let rows: Vec<Vec<(usize, f64)>> = dense.into_iter().map(|r| r.into_iter().collect()).collect();
    let lumped = rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    MassData { rows, lumped, area }
}

impl MassData {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, m)| m * v[j]).sum()).collect()
    }

    fn v_norm(&self, v: &[f64]) -> f64 {
        (dot(v, &self.apply(v)) / self.area).max(0.0).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn sci(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "))
}

/// Relative defect `|a − b| / max(|a|, |b|, floor)`.
fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

// ---------------------------------------------------------------- criterion 1

/// Arc-length solution of the convex play problem `z(t) = max(0, t − κ)`
/// with `a = 1`: unit speed `t′ + |z′| = 1` gives `t = s` on the stick phase
/// and `t = κ + (s − κ)/2`, `z = (s − κ)/2` afterwards.
fn play_exact(kappa: f64, s: f64) -> (f64, f64) {
    if s <= kappa {
        (s, 0.0)
    } else {
        (kappa + 0.5 * (s - kappa), 0.5 * (s - kappa))
    }
}

fn sup_error(traj: &Trajectory, kappa: f64, t_end: f64) -> f64 {
    let s_exact_end = kappa + 2.0 * (t_end - kappa);
    let mut err = 0.0f64;
    for w in traj.steps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut samples = vec![a.s, 0.5 * (a.s + b.s), b.s];
        if a.s < kappa && kappa < b.s {
            samples.push(kappa);
        }
        for s in samples {
            if s > s_exact_end {
                continue;
            }
            let theta = (s - a.s) / (b.s - a.s);
            let t = a.t + theta * (b.t - a.t);
            let z = a.z[0] + theta * (b.z[0] - a.z[0]);
            let (te, ze) = play_exact(kappa, s);
            err = err.max((t - te).abs()).max((z - ze).abs());
        }
    }
    err
}

fn criterion1(trajs: &mut Vec<(String, Trajectory)>) -> Outcome {
    let (kappa, t_end) = (0.5, 2.0);
    let o = ScalarRis::convex(1.0, kappa).unwrap();
    let mut pass = true;
    let mut errs = Vec::new();
    let mut detail = String::new();
    for tau in [0.1, 0.01, 0.001] {
        let (traj, dt) = timed(|| run(&o, &[0.0], &LissOptions::new(tau, t_end)).unwrap());
        let zn = traj.last().z[0];
        let e = sup_error(&traj, kappa, t_end);
        pass &= (zn - 1.5).abs() <= 2.0 * tau && dt < Duration::from_secs(1);
        detail += &format!("tau={tau}: |z_N-1.5|={:.2e} sup_err={e:.3e} time={:.3}s; ", (zn - 1.5).abs(), dt.as_secs_f64());
        errs.push((tau, e));
        trajs.push((format!("scalar_convex tau={tau}"), traj));
    }
    let rates: Vec<f64> = errs.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect();
    pass &= errs.windows(2).all(|w| w[1].1 < w[0].1) && rates.iter().all(|&r| r >= 0.8);
    detail += &format!("rates={rates:.3?}");
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- criterion 2

fn criterion2(trajs: &[(String, Trajectory)]) -> Outcome {
    let start = Instant::now();
    let (mut worst_rate, mut worst_sum, mut worst_prod, mut steps) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for (_, tr) in trajs {
        let tau = tr.tau;
        for w in tr.steps.windows(2) {
            let rate = (w[1].t - w[0].t) / tau;
            // the time update uses the variant's step norm: ‖Δz‖_V or ‖Δz‖_∞
            let speed = w[1].step_norm / tau;
            worst_rate = worst_rate.max(-rate);
            worst_sum = worst_sum.max((rate + speed - 1.0).abs());
            worst_prod = worst_prod.max((rate * w[1].dist).abs() / w[1].dist.max(1.0));
            steps += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst_rate <= 1e-12 && worst_sum <= 1e-12 && worst_prod <= 1e-8 && elapsed < Duration::from_secs(60),
        detail: format!(
            "{} runs, {steps} steps: min rate {:.2e}, unit-speed defect {worst_sum:.2e}, scaled product {worst_prod:.2e}",
            trajs.len(),
            -worst_rate
        ),
    }
}

// ---------------------------------------------------------------- criterion 3

fn double_well(z: f64) -> f64 {
    let w = z - 1.0;
    0.25 * w.powi(4) - 0.5 * w * w
}

fn double_well_d1(z: f64) -> f64 {
    z * (z - 1.0) * (z - 2.0)
}

/// Cumulative remainder of the discrete energy identity for `Φ(z) − t z` with
/// two-sided dissipation `κ|v|` and box steps (dual norm `|·|`).
fn remainder(traj: &Trajectory, kappa: f64) -> f64 {
    let energy = |t: f64, z: f64| double_well(z) - t * z;
    traj.steps
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let (za, zb) = (a.z[0], b.z[0]);
            let dist = ((a.t - double_well_d1(zb)).abs() - kappa).max(0.0);
            // ∫ ∂_t I t̂′ with ∂_t I = −z and ẑ affine on the cell
            let work = -(b.t - a.t) * 0.5 * (za + zb);
            energy(b.t, zb) - energy(a.t, za) + kappa * (zb - za).abs() + traj.tau * dist - work
        })
        .sum()
}

fn criterion3(trajs: &mut Vec<(String, Trajectory)>) -> Outcome {
    let kappa = 0.05;
    let o = ScalarRis::nonconvex(kappa).unwrap();
    let opts = |tau: f64| LissOptions::new(tau, 1.0).with_variant(Variant::Box);
    let taus = [0.02, 0.01, 0.005];
    let mut rs = Vec::new();
    for tau in taus {
        let tr = run(&o, &[0.0], &opts(tau)).unwrap();
        rs.push(remainder(&tr, kappa));
        trajs.push((format!("scalar_nonconvex tau={tau}"), tr));
    }
    let tau_ref = taus[2] / 16.0;
    let r_ref = remainder(&run(&o, &[0.0], &opts(tau_ref)).unwrap(), kappa);
    let ratios: Vec<f64> = rs.windows(2).map(|w| w[0] / w[1]).collect();
    let consts: Vec<f64> = rs.iter().zip(taus).map(|(r, t)| r.abs() / t).collect();
    let c = consts.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: ratios.iter().all(|r| (1.4..=2.6).contains(r)) && r_ref.abs() <= c * tau_ref * 1.5,
        detail: format!("R={} at tau={taus:?}, ratios={ratios:.3?}, |R|/tau={consts:.3?}, reference tau={tau_ref}: R={r_ref:.3e}", sci(&rs)),
    }
}

// ---------------------------------------------------------------- criterion 4

#[derive(Default)]
struct Lemma3 {
    ball: f64,
    pairing: f64,
    balance: f64,
    subgradient: f64,
    active_steps: usize,
}

impl Lemma3 {
    fn observe(&mut self, p: &DamageProblem, md: &MassData, prev: &(f64, Vec<f64>), sol: &StepSolution, tau: f64, rng: &mut ChaCha8Rng) {
        let n = md.lumped.len();
        let kappa = p.params().kappa;
        let dz = diff(&sol.z, &prev.1);
        let grad = p.gradient(prev.0, &sol.z).unwrap();
        let dz_v = md.v_norm(&dz);
        let lambda = sol.lambda;
        // ζ = λ ϱ M Δz
        let zeta: Vec<f64> = md.apply(&dz).iter().map(|v| lambda * v / md.area).collect();
        let diss = |v: &[f64]| kappa * dot(&md.lumped, v);
        let dist = lambda * dz_v;
        if lambda > 0.0 {
            self.active_steps += 1;
        }
        self.ball = self.ball.max(lambda * (dz_v - tau).abs() / (lambda * tau).max(1e-300));
        let pair = dot(&zeta, &dz);
        self.pairing = self.pairing.max(rel(tau * dist, pair, 1e-300));
        let work = -dot(&grad, &dz);
        let lhs = diss(&dz) + tau * dist;
        self.balance = self.balance.max((lhs - work).abs() / lhs.abs().max(work.abs()).max(1e-12 * (1.0 + diss(&dz))).max(f64::MIN_POSITIVE));
        for _ in 0..100 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let r = diss(&v);
            let pairing = -dot(&zeta, &v) - dot(&grad, &v);
            let scale = r.abs() + dot(&zeta, &v).abs() + dot(&grad, &v).abs();
            self.subgradient = self.subgradient.max((pairing - r).max(0.0) / scale);
        }
    }

    fn max(&self) -> f64 {
        self.ball.max(self.pairing).max(self.balance).max(self.subgradient)
    }
}

// ---------------------------------------------------------------- criterion 5

fn criterion5(p: &DamageProblem) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = p.dim();
    let (start, mut eg, mut eh) = (Instant::now(), 0.0f64, 0.0f64);
    for _ in 0..20 {
        let t = rng.gen_range(0.5..16.0);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 1e-4;
        let at = |s: f64| -> Vec<f64> { z.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
        let g = p.gradient(t, &z).unwrap();
        let fd = (p.energy(t, &at(h)).unwrap() - p.energy(t, &at(-h)).unwrap()) / (2.0 * h);
        eg = eg.max(rel(fd, dot(&g, &v), 0.0));
        let lin = p.linearize(t, &z).unwrap();
        let hv = reduced_hessian_action(&lin.blocks, &v).unwrap();
        let fdh: Vec<f64> = diff(&p.gradient(t, &at(h)).unwrap(), &p.gradient(t, &at(-h)).unwrap()).iter().map(|d| d / (2.0 * h)).collect();
        let norm = |x: &[f64]| dot(x, x).sqrt();
        eh = eh.max(norm(&diff(&fdh, &hv)) / norm(&hv));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: eg <= 1e-5 && eh <= 1e-4 && elapsed < Duration::from_secs(60),
        detail: format!("{n} nodes, 20 states: gradient rel err {eg:.2e}, Hessian-action rel err {eh:.2e}, {:.1}s", elapsed.as_secs_f64()),
    }
}

// ---------------------------------------------------------------- criteria 4 and 6

struct CoarseRun {
    traj: Trajectory,
    lemma3: Lemma3,
    elapsed: Duration,
    worst_residual: f64,
    worst_iters: usize,
    restarts: usize,
}

fn coarse_run(p: &DamageProblem, md: &MassData, tau: f64) -> CoarseRun {
    let opts = LissOptions::new(tau, 16.0);
    let mut lemma3 = Lemma3::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // the observer sees the new step only
    let mut prev = (0.0, vec![0.0; p.dim()]);
    let (mut worst_residual, mut worst_iters, mut restarts) = (0.0f64, 0usize, 0usize);
    let (traj, elapsed) = timed(|| {
        run_observed(p, &vec![0.0; p.dim()], &opts, &mut |st, sol| {
            lemma3.observe(p, md, &prev, sol, tau, &mut rng);
            worst_residual = worst_residual.max(sol.residual);
            worst_iters = worst_iters.max(sol.stats.iterations);
            restarts += sol.stats.restarts;
            prev = (st.t, st.z.clone());
            Ok(())
        })
        .unwrap()
    });
    CoarseRun {
        traj,
        lemma3,
        elapsed,
        worst_residual,
        worst_iters,
        restarts,
    }
}

fn criterion4(r: &CoarseRun) -> Outcome {
    let l = &r.lemma3;
    Outcome {
        pass: l.max() <= 1e-8,
        detail: format!(
            "h=10 tau=0.5, {} steps ({} with active ball): ball {:.1e}, pairing {:.1e}, balance {:.1e}, subgradient {:.1e} (100 directions/step)",
            r.traj.n(),
            l.active_steps,
            l.ball,
            l.pairing,
            l.balance,
            l.subgradient
        ),
    }
}

fn criterion6(r: &CoarseRun) -> Outcome {
    let flagged = r.traj.descent_flagged();
    Outcome {
        pass: r.worst_residual <= 1e-10 && r.worst_iters <= 30 && flagged == 0 && r.elapsed < Duration::from_secs(300),
        detail: format!(
            "h=10 tau=0.5: {} steps, max residual {:.1e}, max iterations {} (converged attempt), restarts {}, descent flagged {flagged}, {:.1}s",
            r.traj.n(),
            r.worst_residual,
            r.worst_iters,
            r.restarts,
            r.elapsed.as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------- criterion 7

struct ForceRun {
    forces: Vec<(f64, f64)>,
    z_near_5: (f64, Vec<f64>),
}

fn force_run(p: &DamageProblem, tau: f64) -> ForceRun {
    let mut forces = vec![(0.0, 0.0)];
    let mut z_near_5 = (0.0f64, vec![0.0; p.dim()]);
    run_observed(p, &vec![0.0; p.dim()], &LissOptions::new(tau, 16.0), &mut |st, _| {
        forces.push((st.t, p.reaction_force(st.t, &st.z)?));
        if (st.t - 5.0).abs() < (z_near_5.0 - 5.0).abs() {
            z_near_5 = (st.t, st.z.clone());
        }
        Ok(())
    })
    .unwrap();
    ForceRun { forces, z_near_5 }
}

/// Interior local maxima with their topographic prominence, measured against
/// the higher of the two cols, each being the lowest value between the peak
/// and the nearest higher point on that side (or the end of the curve).
fn prominences(f: &[f64]) -> Vec<(usize, f64)> {
    let col = |range: &mut dyn Iterator<Item = usize>, peak: f64| -> f64 {
        let mut low = peak;
        for j in range {
            if f[j] > peak {
                break;
            }
            low = low.min(f[j]);
        }
        low
    };
    (1..f.len() - 1)
        .filter(|&i| f[i] >= f[i - 1] && f[i] > f[i + 1])
        .map(|i| {
            let left = col(&mut (0..i).rev(), f[i]);
            let right = col(&mut (i + 1..f.len()), f[i]);
            (i, f[i] - left.max(right))
        })
        .collect()
}

fn criterion7(h: f64, coarse: &ForceRun, fine: &ForceRun, mesh: &Mesh) -> Outcome {
    let tip = [0.0, 16.0];
    let (t5, z5) = &coarse.z_near_5;
    let (imax, _) = z5.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let p = mesh.nodes()[imax];
    let tip_dist = ((p[0] - tip[0]).powi(2) + (p[1] - tip[1]).powi(2)).sqrt();
    let mut ok = tip_dist <= 2.0 * h;
    let mut detail = format!("argmax z at t={t5:.3} is {tip_dist:.2} mm from the tip; ");
    let mut peaks_out = Vec::new();
    for (label, run) in [("h", coarse), ("h/2", fine)] {
        let f: Vec<f64> = run.forces.iter().map(|x| x.1).collect();
        let (ip, fp) = f.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        let proms = prominences(&f);
        let peaks: Vec<usize> = proms.iter().filter(|p| p.1 > 0.10 * fp).map(|p| p.0).collect();
        let secondary = proms.iter().filter(|p| p.0 != ip).map(|p| p.1).fold(0.0, f64::max);
        let min_after = f[ip..].iter().copied().fold(f64::INFINITY, f64::min);
        // single prominent peak at the global maximum, followed by a branch that
        // loses at least a quarter of the peak force; the stick-slip serrations
        // of the softening branch stay below a tenth of the peak
        let single = peaks == [ip] && min_after <= 0.75 * fp;
        ok &= single;
        detail += &format!("{label}: peak {fp:.1} at t={:.3}, softens to {min_after:.1}, prominent peaks {}, largest secondary prominence {:.1}% of peak; ", run.forces[ip].0, peaks.len(), 100.0 * secondary / fp);
        peaks_out.push(fp);
    }
    let d = rel(peaks_out[0], peaks_out[1], 0.0);
    ok &= d <= 0.10;
    detail += &format!("peak difference {:.2}%", 100.0 * d);
    Outcome { pass: ok, detail }
}

// ---------------------------------------------------------------- criterion 8

fn criterion8(p: &DamageProblem, md: &MassData, ball: &Trajectory, tau: f64) -> Outcome {
    let (boxed, dt) = timed(|| run(p, &vec![0.0; p.dim()], &LissOptions::new(tau, 16.0).with_variant(Variant::Box)).unwrap());
    let (zb, zx) = (&ball.last().z, &boxed.last().z);
    let l2 = |v: &[f64]| dot(v, &md.apply(v)).max(0.0).sqrt();
    let d = l2(&diff(zb, zx)) / l2(zb);
    Outcome {
        pass: d <= 0.15,
        detail: format!(
            "h=10 tau={tau}: relative L2 difference {d:.4} (ball {} steps to t={:.3}, box {} steps to t={:.3}, {:.1}s)",
            ball.n(),
            ball.last().t,
            boxed.n(),
            boxed.last().t,
            dt.as_secs_f64()
        ),
    }
}

// ---------------------------------------------------------------- criterion 9

fn a_priori(p: &DamageProblem, md: &MassData, tr: &Trajectory) -> [f64; 3] {
    let kappa = p.params().kappa;
    // ‖v‖²_Z = ∫|∇v|² + v², Laplace part from the P1 gradients
    let mesh = p.mesh();
    let z_sq = |v: &[f64]| -> f64 {
        let mut s = dot(v, &md.apply(v));
        for t in mesh.triangles() {
            let [a, b, c] = t.map(|i| mesh.nodes()[i]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let (va, vb, vc) = (v[t[0]], v[t[1]], v[t[2]]);
            let gx = ((vb - va) * (c[1] - a[1]) - (vc - va) * (b[1] - a[1])) / det;
            let gy = ((vc - va) * (b[0] - a[0]) - (vb - va) * (c[0] - a[0])) / det;
            s += 0.5 * det.abs() * (gx * gx + gy * gy);
        }
        s
    };
    let mut out = [0.0; 3];
    for w in tr.steps.windows(2) {
        let dz = diff(&w[1].z, &w[0].z);
        out[0] += kappa * dot(&md.lumped, &dz);
        out[1] += md.v_norm(&dz);
        out[2] += z_sq(&dz) / tr.tau;
    }
    out
}

fn criterion9(p: &DamageProblem, md: &MassData, trajs: &[&Trajectory]) -> Outcome {
    let vals: Vec<[f64; 3]> = trajs.iter().map(|t| a_priori(p, md, t)).collect();
    let base = vals[0];
    let ok = vals.iter().all(|v| v.iter().zip(&base).all(|(x, b)| x / b <= 3.0 && b / x <= 3.0));
    let detail = trajs
        .iter()
        .zip(&vals)
        .map(|(t, v)| format!("tau={}: diss {:.4e}, variation {:.4e}, sum |dz|_Z^2/tau {:.4e}", t.tau, v[0], v[1], v[2]))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { pass: ok, detail }
}

// ---------------------------------------------------------------- criterion 10

/// Longest run of consecutive cells with frozen time and unit speed, in units of s.
fn longest_plateau(tr: &Trajectory) -> f64 {
    let (mut best, mut cur) = (0usize, 0usize);
    for w in tr.steps.windows(2) {
        let frozen = (w[1].t - w[0].t) / tr.tau <= 1e-12 && ((w[1].z[0] - w[0].z[0]).abs() / tr.tau - 1.0).abs() <= 1e-12;
        cur = if frozen { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best as f64 * tr.tau
}

fn criterion10() -> Outcome {
    let o = ScalarRis::nonconvex(0.05).unwrap();
    let taus = [0.02, 0.01, 0.005, 0.0025];
    let lengths: Vec<f64> = taus
        .iter()
        .map(|&tau| longest_plateau(&run(&o, &[0.0], &LissOptions::new(tau, 1.0).with_variant(Variant::Box)).unwrap()))
        .collect();
    let diffs: Vec<f64> = lengths.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    // the jump leaves the spinodal point 1 − 1/√3 for 3 − 2(1 − 1/√3): length √3
    let exact = 3f64.sqrt();
    let shrinking = diffs.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: lengths.iter().all(|&l| l > 0.0) && shrinking,
        detail: format!(
            "plateau lengths {lengths:.4?} at tau={taus:?}, pairwise differences {}, distance to sqrt(3): {:.2e}",
            sci(&diffs),
            (lengths[3] - exact).abs()
        ),
    }
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let mut outcomes = Vec::new();
    let mut benchmark_runs: Vec<(String, Trajectory)> = Vec::new();
    let names = [
        "scalar convex oracle",
        "discrete complementarity",
        "discrete energy identity",
        "optimality relations",
        "derivatives",
        "SSN performance",
        "Example I qualitative",
        "ball vs box",
        "a priori bounds",
        "arc-length plateau",
    ];
    let mut done = |id: usize, o: Outcome| {
        eprintln!("criterion {id} evaluated");
        outcomes.push((id, o));
    };

    done(1, criterion1(&mut benchmark_runs));
    let o3 = criterion3(&mut benchmark_runs);

    let h = 10.0;
    let p = damage(h);
    let md = mass_data(p.mesh());
    done(5, criterion5(&p));
    let coarse = coarse_run(&p, &md, 0.5);
    let o4 = criterion4(&coarse);
    let o6 = criterion6(&coarse);
    let mid = run(&p, &vec![0.0; p.dim()], &LissOptions::new(0.25, 16.0)).unwrap();
    let fine = run(&p, &vec![0.0; p.dim()], &LissOptions::new(0.125, 16.0)).unwrap();
    let o9 = criterion9(&p, &md, &[&coarse.traj, &mid, &fine]);
    let o8 = criterion8(&p, &md, &fine, 0.125);
    benchmark_runs.push(("example1 h=10 tau=0.5".into(), coarse.traj));
    benchmark_runs.push(("example1 h=10 tau=0.25".into(), mid));
    benchmark_runs.push(("example1 h=10 tau=0.125".into(), fine));
    done(2, criterion2(&benchmark_runs));
    done(3, o3);
    done(4, o4);
    done(6, o6);

    let tau7 = 0.05;
    let r_coarse = force_run(&p, tau7);
    let p_fine = damage(h / 2.0);
    let r_fine = force_run(&p_fine, tau7);
    done(7, criterion7(h, &r_coarse, &r_fine, p.mesh()));
    done(8, o8);
    done(9, o9);
    done(10, criterion10());

    outcomes.sort_by_key(|o| o.0);
    for (id, o) in &outcomes {
        report(*id, names[id - 1], o);
    }
    let failed = outcomes.iter().filter(|o| !o.1.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
