//! TOML run configuration and the bundled experiment presets.
//!
//! ```toml
//! [mesh]
//! kind = "structured"   # or kind = "file", path = "square.mesh"
//! nx = 40
//! ny = 40
//!
//! [params]
//! kappa1 = 8e-5
//! kappa0 = 8e-5
//! rho = 1.0
//! alpha = 0.8
//! beta1 = 0.8
//! beta2 = 0.8
//! gamma = 0.008
//! delta = 0.8
//! K = 1.0
//!
//! [time]
//! tf = 1.0
//! dt = 0.01            # or steps = 100
//!
//! [scheme]
//! variant = "imex-lumped"   # explicit-lumped, imex-consistent
//!
//! [initial.T]
//! kind = "gaussian"
//! amplitude = 1.0
//! center = [0.5, 0.5]
//! width = 0.25
//!
//! [initial.N]
//! kind = "gaussian"
//! amplitude = 1.0
//! center = [0.5, 0.5]
//! width = 0.1
//! offset = 0.1
//!
//! [initial.Phi]
//! kind = "constant"
//! value = 0.5
//!
//! [solver]
//! tol = 1e-10
//!
//! [output]
//! dir = "out"
//! snapshot_every = 10
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Preconditioner;
use crate::mesh::{build_structured_mesh, Triangulation};
use crate::model::ModelParams;
use crate::scheme::SchemeVariant;

/// Relative tolerance on `tf / dt` being an integer.
pub const STEP_COUNT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    /// `nx * ny` squares of the rectangle `[0, lx] x [0, ly]`, each cut along its diagonal.
    Structured {
        nx: usize,
        ny: usize,
        #[serde(default = "one")]
        lx: f64,
        #[serde(default = "one")]
        ly: f64,
    },
    /// Mesh file in the plain-text format of [`Triangulation::read_from`].
    /// Relative paths are resolved against the config file's directory.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl MeshSpec {
    pub fn unit_square(n: usize) -> Self {
        MeshSpec::Structured { nx: n, ny: n, lx: 1.0, ly: 1.0 }
    }

    pub fn build(&self) -> Result<Triangulation> {
        match self {
            MeshSpec::Structured { nx, ny, lx, ly } => {
                if *nx == 0 || *ny == 0 {
                    return Err(Error::Config("mesh.nx and mesh.ny must be positive (empty mesh)".into()));
                }
                build_structured_mesh(*nx, *ny, *lx, *ly)
            }
            MeshSpec::File { path } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::Config(format!("cannot open mesh file {}: {e}", path.display())))?;
                let mesh = Triangulation::read_from(std::io::BufReader::new(file)).map_err(|e| match e {
                    Error::Io(e) => Error::Io(e),
                    e => Error::Parse { path: path.clone(), msg: e.to_string() },
                })?;
                if mesh.num_triangles() == 0 {
                    return Err(Error::Config(format!("mesh file {} has no triangles", path.display())));
                }
                Ok(mesh)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// Final time in days.
    pub tf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

impl TimeSpec {
    pub fn with_dt(tf: f64, dt: f64) -> Self {
        TimeSpec { tf, dt: Some(dt), steps: None }
    }

    pub fn with_steps(tf: f64, steps: usize) -> Self {
        TimeSpec { tf, dt: None, steps: Some(steps) }
    }

    /// Number of steps `K_f`.
    pub fn steps(&self) -> Result<usize> {
        if !self.tf.is_finite() || self.tf < 0.0 {
            return Err(Error::Config(format!("time.tf must be finite and >= 0, got {}", self.tf)));
        }
        match (self.dt, self.steps) {
            (None, None) => Err(Error::Config("time needs one of dt or steps".into())),
            (Some(_), Some(_)) => Err(Error::Config("time.dt and time.steps are mutually exclusive".into())),
            (None, Some(0)) if self.tf > 0.0 => Err(Error::Config("time.steps must be positive".into())),
            (None, Some(s)) => Ok(s),
            (Some(dt), None) => {
                if !dt.is_finite() || dt <= 0.0 {
                    return Err(Error::Config(format!("time.dt must be positive, got {dt}")));
                }
                let ratio = self.tf / dt;
                let steps = ratio.round();
                if (ratio - steps).abs() > STEP_COUNT_TOL * steps.max(1.0) {
                    return Err(Error::Config(format!(
                        "time.tf / time.dt = {ratio} is not an integer number of steps"
                    )));
                }
                Ok(steps as usize)
            }
        }
    }

    pub fn dt(&self) -> Result<f64> {
        let steps = self.steps()?;
        match self.dt {
            Some(dt) => Ok(dt),
            None if steps == 0 => Err(Error::Config("time.steps = 0 needs an explicit dt".into())),
            None => Ok(self.tf / steps as f64),
        }
    }
}

/// Analytic initial profile, clipped to `[0, K]` when interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * exp(-|x - center|^2 / width^2)`.
    Gaussian {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl Profile {
    pub fn eval(&self, x: &[f64; 2], k: f64) -> f64 {
        let v = match *self {
            Profile::Constant { value } => value,
            Profile::Gaussian { amplitude, center, width, offset } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                offset + amplitude * (-r2 / (width * width)).exp()
            }
        };
        v.clamp(0.0, k)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Profile::Constant { value } => value.is_finite(),
            Profile::Gaussian { amplitude, center, width, offset } => {
                amplitude.is_finite()
                    && center.iter().all(|c| c.is_finite())
                    && width > 0.0
                    && width.is_finite()
                    && offset.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("initial.{name}: values must be finite and width > 0")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    #[serde(rename = "T")]
    pub t: Profile,
    #[serde(rename = "N")]
    pub n: Profile,
    #[serde(rename = "Phi")]
    pub phi: Profile,
}

impl InitialCondition {
    /// Tumor bump at the center of the unit square with a necrotic core over a thin
    /// necrotic background, and uniform vasculature `0.5`.
    pub fn default_bumps() -> Self {
        InitialCondition {
            t: Profile::Gaussian { amplitude: 1.0, center: [0.5, 0.5], width: 0.25, offset: 0.0 },
            n: Profile::Gaussian { amplitude: 1.0, center: [0.5, 0.5], width: 0.1, offset: 0.1 },
            phi: Profile::Constant { value: 0.5 },
        }
    }

    /// [`default_bumps`](Self::default_bumps) with a narrower tumor (width 0.1) whose
    /// edge falls to round-off level inside the domain.
    pub fn steep_bump() -> Self {
        InitialCondition {
            t: Profile::Gaussian { amplitude: 1.0, center: [0.5, 0.5], width: 0.1, offset: 0.0 },
            ..Self::default_bumps()
        }
    }

    pub fn zero() -> Self {
        let z = Profile::Constant { value: 0.0 };
        InitialCondition { t: z, n: z, phi: z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    #[serde(default)]
    pub variant: SchemeVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative residual target of every CG solve.
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
    /// Worker threads within a step; 1 is the deterministic sequential mode.
    pub threads: usize,
    /// Finish each lumped tumor solve with Jacobi sweeps so round-off in CG
    /// cannot produce tiny negative values.
    pub positivity_polish: bool,
    pub max_polish_sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
            threads: 1,
            positivity_polish: true,
            max_polish_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for `diagnostics.csv`, `summary.txt` and snapshots; nothing is written when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write a VTK snapshot every this many steps (0 disables snapshots).
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub params: ModelParams,
    pub time: TimeSpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    pub initial: InitialCondition,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let steps = self.time.steps()?;
        let dt = self.time.dt()?;
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if steps > 0 && ((steps as f64 * dt - self.time.tf).abs() > STEP_COUNT_TOL * self.time.tf) {
            return Err(Error::Config("time.steps * dt does not reach time.tf".into()));
        }
        if let MeshSpec::Structured { nx, ny, lx, ly } = self.mesh {
            if nx == 0 || ny == 0 {
                return Err(Error::Config("mesh.nx and mesh.ny must be positive (empty mesh)".into()));
            }
            if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
                return Err(Error::Config("mesh.lx and mesh.ly must be positive".into()));
            }
        }
        self.initial.t.validate("T")?;
        self.initial.n.validate("N")?;
        self.initial.phi.validate("Phi")?;
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver.tol must be positive".into()));
        }
        if self.solver.threads == 0 {
            return Err(Error::Config("solver.threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads a config file; relative mesh paths become relative to its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
        if let MeshSpec::File { path: mesh } = &mut config.mesh {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn with_variant(mut self, variant: SchemeVariant) -> Self {
        self.scheme.variant = variant;
        self
    }

    /// Whether both configs step the same mesh with the same time grid.
    pub fn same_grid(&self, other: &RunConfig) -> Result<bool> {
        Ok(self.mesh == other.mesh
            && self.time.steps()? == other.time.steps()?
            && self.time.dt()? == other.time.dt()?)
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(s).map_err(|e| Error::Parse { path: PathBuf::from("<string>"), msg: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentPreset {
    /// IMEX vs explicit reactions, 40x40 unit square, dt = 0.01, 100 steps.
    BoundsComparison,
    /// IMEX and explicit runs with 10, 60, ..., 510 steps up to tf = 0.01.
    EnergySweep,
    /// Lumped vs consistent mass, 10x10 unit square, dt = 0.01, 100 steps.
    LumpingComparison,
}

impl fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentPreset::BoundsComparison => "bounds-comparison",
            ExperimentPreset::EnergySweep => "energy-sweep",
            ExperimentPreset::LumpingComparison => "lumping-comparison",
        })
    }
}

/// Step counts of the energy sweep.
pub fn energy_sweep_steps() -> Vec<usize> {
    (0..11).map(|i| 10 + 50 * i).collect()
}

fn base_config(mesh: MeshSpec, params: ModelParams, time: TimeSpec, variant: SchemeVariant) -> RunConfig {
    RunConfig {
        mesh,
        params,
        time,
        scheme: SchemeSpec { variant },
        initial: InitialCondition::default_bumps(),
        solver: SolverSettings::default(),
        output: OutputSpec::default(),
    }
}

impl ExperimentPreset {
    /// Every run of the preset, labelled.
    pub fn configs(self) -> Vec<(String, RunConfig)> {
        match self {
            ExperimentPreset::BoundsComparison => [SchemeVariant::ImexLumped, SchemeVariant::ExplicitLumped]
                .into_iter()
                .map(|v| (v.name().to_string(), bounds_comparison(v)))
                .collect(),
            ExperimentPreset::EnergySweep => energy_sweep_steps()
                .into_iter()
                .flat_map(|steps| {
                    [SchemeVariant::ImexLumped, SchemeVariant::ExplicitLumped]
                        .into_iter()
                        .map(move |v| (format!("{}-{steps}", v.name()), energy_sweep(steps, v)))
                })
                .collect(),
            ExperimentPreset::LumpingComparison => [SchemeVariant::ImexLumped, SchemeVariant::ImexConsistent]
                .into_iter()
                .map(|v| (v.name().to_string(), lumping_comparison(v)))
                .collect(),
        }
    }
}

/// Bounds comparison run: `h = 0.025`, `dt = 0.01`, `tf = 1`.
pub fn bounds_comparison(variant: SchemeVariant) -> RunConfig {
    base_config(MeshSpec::unit_square(40), ModelParams::bounds_comparison(), TimeSpec::with_dt(1.0, 0.01), variant)
}

/// Energy sweep run with `steps` steps up to `tf = 0.01`, `h = 0.025`.
pub fn energy_sweep(steps: usize, variant: SchemeVariant) -> RunConfig {
    base_config(MeshSpec::unit_square(40), ModelParams::energy_sweep(), TimeSpec::with_steps(0.01, steps), variant)
}

/// Lumping comparison run: `h = 0.1`, `dt = 0.01`, 100 steps, [`InitialCondition::steep_bump`].
pub fn lumping_comparison(variant: SchemeVariant) -> RunConfig {
    let mut c = base_config(
        MeshSpec::unit_square(10),
        ModelParams::lumping_comparison(),
        TimeSpec::with_dt(1.0, 0.01),
        variant,
    );
    c.initial = InitialCondition::steep_bump();
    c
}
