//! File formats: CSV tables with round-trip float formatting and legacy
//! ASCII VTK snapshots of P1 fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::liss::{EnergyIdentityReport, Trajectory};
use crate::mesh::Mesh;

/// 17 significant digits: parsing the text back gives the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(usize),
    B(bool),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => u8::from(*v).to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Parse {
            context: path.display().to_string(),
            message: format!("{other:?}"),
        },
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(io)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidInput(format!("row of {} cells for {} columns in {}", r.len(), header.len(), path.display())));
        }
        w.write_record(r.iter().map(Cell::render)).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const STEPS_HEADER: [&str; 11] = [
    "k",
    "s_k",
    "t_k",
    "dz_v",
    "lambda",
    "dist",
    "diss_inc",
    "energy",
    "energy_residual_cum",
    "newton_iters",
    "descent_flagged",
];

pub fn steps_rows(traj: &Trajectory, energy: &EnergyIdentityReport) -> Vec<Vec<Cell>> {
    traj.steps
        .iter()
        .map(|st| {
            let cum = if st.k == 0 { 0.0 } else { energy.cumulative[st.k - 1] };
            vec![
                Cell::U(st.k),
                Cell::F(st.s),
                Cell::F(st.t),
                Cell::F(st.dz_v),
                Cell::F(st.lambda),
                Cell::F(st.dist),
                Cell::F(st.diss),
                Cell::F(st.energy),
                Cell::F(cum),
                Cell::U(st.newton_iters),
                Cell::B(st.descent_flagged),
            ]
        })
        .collect()
}

pub fn t_of_s_rows(traj: &Trajectory) -> Vec<Vec<Cell>> {
    traj.steps.iter().map(|st| vec![Cell::F(st.s), Cell::F(st.t)]).collect()
}

/// Legacy VTK 3.0 unstructured grid of triangles with point data `damage`
/// and `displacement` (interleaved `[u_x, u_y]` per node).
pub fn write_vtk(w: &mut impl Write, mesh: &Mesh, title: &str, damage: &[f64], displacement: &[f64]) -> std::io::Result<()> {
    let n = mesh.num_nodes();
    let nt = mesh.num_triangles();
    assert_eq!(damage.len(), n, "damage field length");
    assert_eq!(displacement.len(), 2 * n, "displacement field length");
    writeln!(w, "# vtk DataFile Version 3.0")?;
    // the title line is limited to one line of 256 characters
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} 0", fmt_f64(p[0]), fmt_f64(p[1]))?;
    }
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "SCALARS damage double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in damage {
        writeln!(w, "{}", fmt_f64(*v))?;
    }
    writeln!(w, "VECTORS displacement double")?;
    for u in displacement.chunks_exact(2) {
        writeln!(w, "{} {} 0", fmt_f64(u[0]), fmt_f64(u[1]))?;
    }
    Ok(())
}

pub fn write_vtk_file(path: &Path, mesh: &Mesh, title: &str, damage: &[f64], displacement: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    write_vtk(&mut w, mesh, title, damage, displacement).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
