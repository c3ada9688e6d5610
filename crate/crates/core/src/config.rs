//! Run configuration: a TOML file with optional sections. Unset keys take
//! example-dependent defaults; unknown keys are rejected with their path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::damage::{example1_conditions, example2_conditions, DamageParams, DamageProblem, Softening};
use crate::error::{Error, Result};
use crate::fem::{ElasticLaw, PlaneMode};
use crate::mesh::{generate_mesh_example1, generate_mesh_example2, Mesh};
use crate::oracle::ScalarRis;
use crate::ris::RisProblem;
use crate::ssn::SsnOptions;

/// Environment variable that overrides `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "LISS_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Example1,
    Example2,
    ScalarConvex,
    ScalarNonconvex,
    MeshFile,
}

impl Example {
    pub fn is_scalar(self) -> bool {
        matches!(self, Example::ScalarConvex | Example::ScalarNonconvex)
    }
}

/// Boundary-condition table applied to a mesh read from file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Example1,
    Example2,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    example: Option<Example>,
    seed: Option<u64>,
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    material: RawMaterial,
    #[serde(default)]
    scalar: RawScalar,
    #[serde(default)]
    time: RawTime,
    solver: Option<SsnOptions>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    h: Option<f64>,
    file: Option<PathBuf>,
    profile: Option<Profile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    kappa: Option<f64>,
    /// Young's modulus in GPa.
    young: Option<f64>,
    poisson: Option<f64>,
    reg_alpha: Option<f64>,
    eps_g: Option<f64>,
    plane: Option<PlaneMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScalar {
    stiffness: Option<f64>,
    load_offset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    tau: Option<f64>,
    t_end: Option<f64>,
    load_rate: Option<f64>,
    z0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    vtk_stride: Option<usize>,
}

/// Validated configuration. Moduli are stored in MPa.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub example: Example,
    pub h: f64,
    pub mesh_file: Option<PathBuf>,
    pub profile: Profile,
    pub kappa: f64,
    pub young_mpa: f64,
    pub poisson: f64,
    pub reg_alpha: f64,
    pub eps_g: f64,
    pub plane: PlaneMode,
    pub stiffness: f64,
    pub load_offset: f64,
    pub tau: f64,
    pub t_end: f64,
    pub load_rate: f64,
    /// Uniform initial state.
    pub z0: f64,
    pub ssn: SsnOptions,
    pub output_dir: PathBuf,
    /// Write a VTK snapshot every `vtk_stride` steps (and at the last one);
    /// `0` disables snapshots.
    pub vtk_stride: usize,
    pub seed: u64,
}

pub enum Problem {
    Damage(Box<DamageProblem>),
    Scalar(ScalarRis),
}

impl Problem {
    pub fn as_ris(&self) -> &dyn RisProblem {
        match self {
            Problem::Damage(p) => p.as_ref(),
            Problem::Scalar(p) => p,
        }
    }
}

impl RunConfig {
    pub fn defaults(example: Example) -> Self {
        let (kappa, t_end) = match example {
            Example::ScalarConvex => (0.5, 2.0),
            Example::ScalarNonconvex => (0.05, 1.0),
            _ => (0.1, 16.0),
        };
        Self {
            example,
            h: 10.0,
            mesh_file: None,
            profile: Profile::Example1,
            kappa,
            young_mpa: 18.0e3,
            poisson: 0.2,
            reg_alpha: 1.0,
            eps_g: 0.01,
            plane: PlaneMode::Strain,
            stiffness: 1.0,
            load_offset: 0.0,
            tau: 0.1,
            t_end,
            load_rate: 1.0,
            z0: 0.0,
            ssn: SsnOptions::default(),
            output_dir: PathBuf::from("out"),
            vtk_stride: 10,
            seed: 0,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
            context: "config".into(),
            message: e.to_string(),
        })?;
        let raw: RawFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::config(key, e.into_inner().message().trim())
        })?;
        let example = raw.example.ok_or_else(|| Error::config("example", "missing (one of example1, example2, scalar_convex, scalar_nonconvex, mesh_file)"))?;
        let mut c = Self::defaults(example);
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.h, raw.mesh.h);
        c.mesh_file = raw.mesh.file;
        c.profile = raw.mesh.profile.unwrap_or(c.profile);
        set(&mut c.kappa, raw.material.kappa);
        if let Some(e) = raw.material.young {
            c.young_mpa = e * 1e3;
        }
        set(&mut c.poisson, raw.material.poisson);
        set(&mut c.reg_alpha, raw.material.reg_alpha);
        set(&mut c.eps_g, raw.material.eps_g);
        c.plane = raw.material.plane.unwrap_or(c.plane);
        set(&mut c.stiffness, raw.scalar.stiffness);
        set(&mut c.load_offset, raw.scalar.load_offset);
        set(&mut c.tau, raw.time.tau);
        set(&mut c.t_end, raw.time.t_end);
        set(&mut c.load_rate, raw.time.load_rate);
        set(&mut c.z0, raw.time.z0);
        c.ssn = raw.solver.unwrap_or_default();
        if let Some(d) = raw.output.dir {
            c.output_dir = d;
        }
        c.vtk_stride = raw.output.vtk_stride.unwrap_or(c.vtk_stride);
        c.seed = raw.seed.unwrap_or(0);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::parse(&text)?;
        // relative paths inside the file are relative to the file
        if let (Some(f), Some(dir)) = (&c.mesh_file, path.parent()) {
            if f.is_relative() {
                c.mesh_file = Some(dir.join(f));
            }
        }
        Ok(c)
    }

    /// Applies the output directory override from the environment.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(d) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(d);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mesh.h", self.h),
            ("material.kappa", self.kappa),
            ("material.young", self.young_mpa),
            ("material.reg_alpha", self.reg_alpha),
            ("material.eps_g", self.eps_g),
            ("scalar.stiffness", self.stiffness),
            ("time.tau", self.tau),
            ("time.t_end", self.t_end),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [("time.load_rate", self.load_rate), ("time.z0", self.z0), ("scalar.load_offset", self.load_offset)] {
            if !v.is_finite() {
                return Err(Error::config(key, format!("must be finite, got {v}")));
            }
        }
        if self.load_rate < 0.0 {
            return Err(Error::config("time.load_rate", format!("must be nonnegative, got {}", self.load_rate)));
        }
        if self.z0 < 0.0 && !self.example.is_scalar() {
            return Err(Error::config("time.z0", "damage must start nonnegative"));
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return Err(Error::config("material.poisson", format!("must lie in (-1, 0.5), got {}", self.poisson)));
        }
        if self.tau > self.t_end {
            return Err(Error::config("time.tau", format!("step {} exceeds end time {}", self.tau, self.t_end)));
        }
        if self.example == Example::MeshFile && self.mesh_file.is_none() {
            return Err(Error::config("mesh.file", "required for example = \"mesh_file\""));
        }
        self.ssn.validate().map_err(|e| Error::config("solver", e.to_string()))
    }

    /// Mesh of a PDE example; `None` for the scalar oracles.
    pub fn mesh(&self) -> Result<Option<Mesh>> {
        Ok(match self.example {
            Example::Example1 => Some(generate_mesh_example1(self.h)?),
            Example::Example2 => Some(generate_mesh_example2(self.h)?),
            Example::MeshFile => {
                let path = self.mesh_file.as_ref().expect("validated");
                Some(Mesh::read(path)?)
            }
            Example::ScalarConvex | Example::ScalarNonconvex => None,
        })
    }

    pub fn damage_params(&self) -> Result<DamageParams> {
        Ok(DamageParams {
            law: ElasticLaw::new(self.young_mpa, self.poisson, self.plane)?,
            softening: Softening::new(self.eps_g)?,
            alpha: self.reg_alpha,
            kappa: self.kappa,
        })
    }

    /// Builds the problem on `mesh` (PDE examples) or the scalar oracle.
    pub fn problem_on(&self, mesh: Option<Mesh>) -> Result<Problem> {
        use crate::oracle::Potential;
        use crate::ris::Cone;
        match (self.example, mesh) {
            (Example::ScalarConvex, _) => Ok(Problem::Scalar(ScalarRis::new(
                Potential::Quadratic { a: self.stiffness },
                self.kappa,
                self.load_offset,
                self.load_rate,
                Cone::Nonnegative,
            )?)),
            (Example::ScalarNonconvex, _) => Ok(Problem::Scalar(ScalarRis::new(Potential::DoubleWell, self.kappa, self.load_offset, self.load_rate, Cone::Symmetric)?)),
            (_, None) => Err(Error::InvalidInput("a mesh is required for the damage examples".into())),
            (ex, Some(mesh)) => {
                let profile = match ex {
                    Example::Example2 => Profile::Example2,
                    Example::MeshFile => self.profile,
                    _ => Profile::Example1,
                };
                let (conds, load) = match profile {
                    Profile::Example1 => example1_conditions(self.load_rate),
                    Profile::Example2 => example2_conditions(self.load_rate),
                };
                Ok(Problem::Damage(Box::new(DamageProblem::new(mesh, self.damage_params()?, &conds, load)?)))
            }
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        self.problem_on(self.mesh()?)
    }

    pub fn initial_state(&self, problem: &dyn RisProblem) -> Vec<f64> {
        vec![self.z0; problem.dim()]
    }

    pub fn liss_options(&self) -> crate::liss::LissOptions {
        let mut o = crate::liss::LissOptions::new(self.tau, self.t_end);
        o.ssn = self.ssn;
        if self.example == Example::ScalarNonconvex {
            o.ssn.variant = crate::ssn::Variant::Box;
        }
        o
    }

    /// Human-readable echo of the resolved configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_example1_takes_paper_defaults() {
        let c = RunConfig::parse("example = \"example1\"").unwrap();
        assert_eq!(c.kappa, 0.1);
        assert_eq!(c.young_mpa, 18_000.0);
        assert_eq!(c.poisson, 0.2);
        assert_eq!(c.reg_alpha, 1.0);
        assert_eq!(c.eps_g, 0.01);
        assert_eq!(c.tau, 0.1);
        assert_eq!(c.t_end, 16.0);
        assert_eq!(c.ssn, SsnOptions::default());
    }

    #[test]
    fn young_modulus_is_converted() {
        let c = RunConfig::parse("example = \"example2\"\n[material]\nyoung = 18\n").unwrap();
        assert_eq!(c.young_mpa, 18_000.0);
        let law = c.damage_params().unwrap().law;
        assert_eq!(law.e, 18_000.0);
    }

    #[test]
    fn scalar_defaults() {
        let c = RunConfig::parse("example = \"scalar_convex\"").unwrap();
        assert_eq!((c.kappa, c.t_end), (0.5, 2.0));
        let c = RunConfig::parse("example = \"scalar_nonconvex\"").unwrap();
        assert_eq!((c.kappa, c.t_end), (0.05, 1.0));
        assert_eq!(c.liss_options().ssn.variant, crate::ssn::Variant::Box);
    }

    fn config_key(text: &str) -> String {
        match RunConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn validation_errors_carry_key_paths() {
        assert_eq!(config_key("example = \"example1\"\n[time]\ntau = 0.0\n"), "time.tau");
        assert_eq!(config_key("example = \"example1\"\n[material]\nkappa = -0.1\n"), "material.kappa");
        assert_eq!(config_key("example = \"example1\"\n[material]\nkapa = 0.1\n"), "material.kapa");
        assert_eq!(config_key("example = \"example1\"\n[solver]\nmax_iter = 3\n"), "solver.max_iter");
        assert_eq!(config_key("example = \"example1\"\n[time]\ntau = 2.0\nt_end = 1.0\n"), "time.tau");
        assert_eq!(config_key("[time]\ntau = 0.1\n"), "example");
        assert_eq!(config_key("example = \"mesh_file\""), "mesh.file");
        assert_eq!(config_key("example = \"example3\""), "example");
        assert_eq!(config_key("example = \"example1\"\n[time]\ntau = \"fast\"\n"), "time.tau");
    }

    #[test]
    fn syntax_errors_are_parse_errors() {
        assert!(matches!(RunConfig::parse("example = "), Err(Error::Parse { .. })));
    }

    #[test]
    fn builds_problems() {
        let c = RunConfig::parse("example = \"example1\"\n[mesh]\nh = 16\n").unwrap();
        let p = c.problem().unwrap();
        assert!(matches!(p, Problem::Damage(_)));
        assert_eq!(p.as_ris().dim(), c.mesh().unwrap().unwrap().num_nodes());
        let c = RunConfig::parse("example = \"scalar_convex\"").unwrap();
        assert_eq!(c.problem().unwrap().as_ris().dim(), 1);
    }
}
