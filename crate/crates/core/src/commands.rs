//! The `run`, `study`, `verify` and `mesh` commands.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{Problem, RunConfig};
use crate::damage::DamageProblem;
use crate::error::{Error, Result};
use crate::fem::assemble_mass;
use crate::liss::{apriori_report, energy_identity_report, run_observed, AprioriReport, LissStep, Trajectory};
use crate::mesh::Mesh;
use crate::oracle::{convergence_study, reference_run, Reference, ScalarRis};
use crate::output::{create, fmt_f64, steps_rows, t_of_s_rows, write_csv, write_vtk_file, Cell, STEPS_HEADER};
use crate::verify::{assembly_checks, derivative_errors, run_checks, Check};

/// Summary of a `run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub t_final: f64,
    pub z_final_max: f64,
    pub peak_force: Option<f64>,
    pub descent_flagged: usize,
    pub output_dir: PathBuf,
}

fn step_line(st: &LissStep) -> String {
    format!(
        "k={} s={} t={} dz_v={:.6e} lambda={:.6e} dist={:.6e} newton={} restarts={} residual={:.3e}{}",
        st.k,
        fmt_f64(st.s),
        fmt_f64(st.t),
        st.dz_v,
        st.lambda,
        st.dist,
        st.newton_iters,
        st.restarts,
        st.residual,
        if st.descent_flagged { " descent_flagged" } else { "" }
    )
}

fn apriori_lines(r: &AprioriReport) -> String {
    format!(
        "total_dissipation={}\ntotal_variation={}\nsum_dz_z_sq={}\nh1_ratio={}\nmax_dist={}\nmax_z_norm={}\n",
        fmt_f64(r.total_dissipation),
        fmt_f64(r.total_variation),
        fmt_f64(r.sum_dz_z_sq),
        fmt_f64(r.h1_ratio),
        fmt_f64(r.max_dist),
        fmt_f64(r.max_z_norm)
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn snapshot(dir: &Path, p: &DamageProblem, st: &LissStep) -> Result<()> {
    let total = p.elastic_state(st.t, &st.z)?.total;
    let path = dir.join(format!("fields_{:04}.vtk", st.k));
    write_vtk_file(&path, p.mesh(), &format!("LISS damage k={} s={} t={}", st.k, fmt_f64(st.s), fmt_f64(st.t)), &st.z, &total)
}

/// Runs one configuration and writes `steps.csv`, `t_of_s.csv`,
/// `force_displacement.csv` and VTK snapshots (damage examples), and `run.log`.
pub fn run_command(cfg: &RunConfig) -> Result<RunSummary> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let problem = cfg.problem()?;
    let ris = problem.as_ris();
    let z0 = cfg.initial_state(ris);
    let opts = cfg.liss_options();
    let mut log = String::new();
    writeln!(log, "# configuration\n{}", cfg.echo()).unwrap();
    writeln!(log, "# steps").unwrap();
    let damage = match &problem {
        Problem::Damage(p) => Some(p.as_ref()),
        Problem::Scalar(_) => None,
    };
    let mut forces: Vec<Vec<Cell>> = Vec::new();
    let stride = cfg.vtk_stride;
    let mut record = |st: &LissStep| -> Result<()> {
        writeln!(log, "{}", step_line(st)).unwrap();
        if let Some(p) = damage {
            let f = p.reaction_force(st.t, &st.z)?;
            forces.push(vec![Cell::F(st.t), Cell::F(p.boundary_displacement(st.t)), Cell::F(f)]);
            if stride > 0 && st.k % stride == 0 {
                snapshot(&dir, p, st)?;
            }
        }
        Ok(())
    };
    let first = LissStep::initial(z0.clone(), ris.energy(0.0, &z0)?);
    record(&first)?;
    let traj = run_observed(ris, &z0, &opts, &mut |st, _| record(st));
    let traj = match traj {
        Ok(t) => t,
        Err(e) => {
            writeln!(log, "# failed: {e}").unwrap();
            write_text(&dir.join("run.log"), &log)?;
            return Err(e);
        }
    };
    if let (Some(p), true) = (damage, stride > 0) {
        let last = traj.last();
        if last.k % stride != 0 {
            snapshot(&dir, p, last)?;
        }
    }
    let energy = energy_identity_report(&traj, ris)?;
    write_csv(&dir.join("steps.csv"), &STEPS_HEADER, &steps_rows(&traj, &energy))?;
    write_csv(&dir.join("t_of_s.csv"), &["s", "t_hat"], &t_of_s_rows(&traj))?;
    let peak_force = if damage.is_some() {
        write_csv(&dir.join("force_displacement.csv"), &["t", "displacement", "force"], &forces)?;
        forces.iter().filter_map(|r| if let Cell::F(f) = r[2] { Some(f) } else { None }).reduce(f64::max)
    } else {
        None
    };
    let ap = apriori_report(&traj, ris);
    writeln!(log, "# a priori report\n{}", apriori_lines(&ap)).unwrap();
    writeln!(log, "energy_identity_final={}", fmt_f64(energy.final_residual())).unwrap();
    writeln!(log, "descent_flagged_steps={}", traj.descent_flagged()).unwrap();
    write_text(&dir.join("run.log"), &log)?;
    let last = traj.last();
    Ok(RunSummary {
        steps: traj.n(),
        t_final: last.t,
        z_final_max: last.z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        peak_force,
        descent_flagged: traj.descent_flagged(),
        output_dir: dir,
    })
}

/// Refinement levels of a study.
#[derive(Debug, Clone)]
pub enum Levels {
    Tau(Vec<f64>),
    H(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct StudyTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl StudyTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn opt_cell(v: Option<f64>) -> Cell {
    v.map_or(Cell::S(String::new()), Cell::F)
}

struct PdeLevel {
    mesh: Mesh,
    traj: Trajectory,
    peak_force: f64,
    apriori: AprioriReport,
}

fn pde_level(cfg: &RunConfig) -> Result<PdeLevel> {
    let Problem::Damage(p) = cfg.problem()? else {
        return Err(Error::InvalidInput("expected a damage example".into()));
    };
    let z0 = cfg.initial_state(p.as_ref());
    let mut peak = f64::NEG_INFINITY;
    let traj = run_observed(p.as_ref(), &z0, &cfg.liss_options(), &mut |st, _| {
        peak = peak.max(p.reaction_force(st.t, &st.z)?);
        Ok(())
    })?;
    Ok(PdeLevel {
        apriori: apriori_report(&traj, p.as_ref()),
        mesh: p.mesh().clone(),
        traj,
        peak_force: peak,
    })
}

/// Runs every level in its own thread; results keep the order of `cfgs`.
fn parallel<T: Send>(cfgs: &[RunConfig], f: impl Fn(&RunConfig) -> Result<T> + Sync) -> Result<Vec<T>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(|| f(c))).collect();
        handles.into_iter().map(|h| h.join().expect("study worker panicked")).collect()
    })
}

/// `L²(Ω_c)` norm of `z_c − I_c z_f` where `I_c` samples the fine field at the
/// coarse nodes, and the same norm of `z_c`.
pub fn l2_difference_on_coarse(coarse: &Mesh, z_c: &[f64], fine: &Mesh, z_f: &[f64]) -> Result<(f64, f64)> {
    let m = assemble_mass(coarse)?;
    let d: Vec<f64> = coarse.nodes().iter().zip(z_c).map(|(&p, &zc)| zc - fine.interpolate(z_f, p)).collect();
    Ok((m.quad_form(&d).max(0.0).sqrt(), m.quad_form(z_c).max(0.0).sqrt()))
}

fn scalar_study(cfg: &RunConfig, taus: &[f64]) -> Result<StudyTable> {
    let Problem::Scalar(o) = cfg.problem()? else { unreachable!("scalar example") };
    let variant = cfg.liss_options().ssn.variant;
    let reference = match cfg.example {
        crate::config::Example::ScalarConvex => None,
        _ => {
            let tau_ref = taus.iter().copied().fold(f64::INFINITY, f64::min) / 16.0;
            Some(reference_run(&o, cfg.z0, cfg.t_end, tau_ref, variant)?)
        }
    };
    let rows = convergence_study(&o, cfg.z0, cfg.t_end, taus, variant, reference.as_ref().map_or(Reference::Exact, Reference::Trajectory))?;
    let mut out = Vec::new();
    for r in &rows {
        out.push(vec![
            Cell::F(r.tau),
            Cell::U(r.steps),
            Cell::F(r.err_t),
            Cell::F(r.err_z),
            opt_cell(r.rate_t),
            opt_cell(r.rate_z),
            Cell::F(r.final_z),
            Cell::F(plateau_of(&o, cfg, r.tau)?),
        ]);
    }
    Ok(StudyTable {
        header: ["tau", "steps", "err_t", "err_z", "rate_t", "rate_z", "final_z", "plateau_length"].map(String::from).to_vec(),
        rows: out,
    })
}

fn plateau_of(o: &ScalarRis, cfg: &RunConfig, tau: f64) -> Result<f64> {
    Ok(reference_run(o, cfg.z0, cfg.t_end, tau, cfg.liss_options().ssn.variant)?.plateau_length(1e-12))
}

fn pde_study(cfg: &RunConfig, levels: &Levels) -> Result<StudyTable> {
    let cfgs: Vec<RunConfig> = match levels {
        Levels::Tau(v) => v.iter().map(|&tau| RunConfig { tau, ..cfg.clone() }).collect(),
        Levels::H(v) => v.iter().map(|&h| RunConfig { h, ..cfg.clone() }).collect(),
    };
    for c in &cfgs {
        c.validate()?;
    }
    let res = parallel(&cfgs, pde_level)?;
    let base = &res[0];
    let mut rows = Vec::new();
    for (i, (c, r)) in cfgs.iter().zip(&res).enumerate() {
        let (l2, l2_base) = l2_difference_on_coarse(&base.mesh, &base.traj.last().z, &r.mesh, &r.traj.last().z)?;
        let prev_peak = if i == 0 { None } else { Some(res[i - 1].peak_force) };
        let ratio = |a: f64, b: f64| if b != 0.0 { a / b } else { f64::NAN };
        rows.push(vec![
            Cell::F(c.tau),
            Cell::F(c.h),
            Cell::U(r.mesh.num_nodes()),
            Cell::U(r.traj.n()),
            Cell::F(r.peak_force),
            opt_cell(prev_peak.map(|p| (r.peak_force - p).abs() / p.abs().max(r.peak_force.abs()))),
            Cell::F(l2),
            Cell::F(if l2_base > 0.0 { l2 / l2_base } else { 0.0 }),
            Cell::F(r.apriori.total_dissipation),
            Cell::F(r.apriori.total_variation),
            Cell::F(r.apriori.h1_ratio),
            Cell::F(ratio(r.apriori.total_dissipation, base.apriori.total_dissipation)),
            Cell::F(ratio(r.apriori.total_variation, base.apriori.total_variation)),
            Cell::F(ratio(r.apriori.h1_ratio, base.apriori.h1_ratio)),
            Cell::U(r.traj.max_newton_iters()),
            Cell::U(r.traj.descent_flagged()),
        ]);
    }
    let header = [
        "tau",
        "h",
        "nodes",
        "steps",
        "peak_force",
        "peak_rel_diff_prev",
        "l2_diff_first",
        "l2_rel_diff_first",
        "total_dissipation",
        "total_variation",
        "h1_ratio",
        "dissipation_ratio",
        "variation_ratio",
        "h1_ratio_ratio",
        "max_newton_iters",
        "descent_flagged",
    ];
    Ok(StudyTable {
        header: header.map(String::from).to_vec(),
        rows,
    })
}

/// Refinement study; writes `study.csv` into the output directory.
pub fn study_command(cfg: &RunConfig, levels: &Levels) -> Result<StudyTable> {
    let n = match levels {
        Levels::Tau(v) | Levels::H(v) => v.len(),
    };
    if n < 2 {
        return Err(Error::config("study", "at least two refinement levels are required"));
    }
    let table = match (cfg.example.is_scalar(), levels) {
        (true, Levels::Tau(taus)) => scalar_study(cfg, taus)?,
        (true, Levels::H(_)) => return Err(Error::config("study", "mesh levels need a damage example")),
        (false, l) => pde_study(cfg, l)?,
    };
    let header: Vec<&str> = table.header.iter().map(String::as_str).collect();
    write_csv(&cfg.output_dir.join("study.csv"), &header, &table.rows)?;
    Ok(table)
}

/// Property suite for the configured problem. Every entry is also written as
/// one JSON object per line to `out`.
pub fn verify_command(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<Check>> {
    let problem = cfg.problem()?;
    let ris = problem.as_ris();
    let mut checks = Vec::new();
    if let Problem::Damage(p) = &problem {
        checks.extend(assembly_checks(p.mesh())?);
    }
    let (eg, eh) = derivative_errors(ris, 20, cfg.t_end, 2.0, cfg.seed)?;
    checks.push(Check {
        check: "fd_gradient".into(),
        pass: eg <= 1e-5,
        value: eg,
        tol: 1e-5,
        informational: false,
    });
    checks.push(Check {
        check: "fd_hessian_action".into(),
        pass: eh <= 1e-4,
        value: eh,
        tol: 1e-4,
        informational: false,
    });
    let z0 = cfg.initial_state(ris);
    let run = run_checks(ris, &z0, &cfg.liss_options(), 100, cfg.seed)?;
    checks.extend(run.checks);
    for c in &checks {
        let line = serde_json::to_string(c).map_err(|e| Error::Parse {
            context: "verify summary".into(),
            message: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(checks)
}

/// Writes the configured mesh: VTK with zero fields for a `.vtk` path, the
/// native text format otherwise.
pub fn mesh_command(cfg: &RunConfig, emit: &Path) -> Result<Mesh> {
    let mesh = cfg.mesh()?.ok_or_else(|| Error::config("example", "the scalar examples have no mesh"))?;
    if emit.extension().is_some_and(|e| e == "vtk") {
        let n = mesh.num_nodes();
        write_vtk_file(emit, &mesh, "LISS mesh", &vec![0.0; n], &vec![0.0; 2 * n])?;
    } else {
        mesh.write(emit)?;
    }
    Ok(mesh)
}
