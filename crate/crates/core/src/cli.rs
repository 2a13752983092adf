//! Command-line interface.
//!
//! Exit codes: 0 success, 1 numerical failure (or an obtuse mesh for
//! `check-mesh`), 2 configuration or input error.

use std::ffi::OsString;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ExperimentPreset, RunConfig};
use crate::error::{Error, Result};
use crate::mesh::{audit_angles, Triangulation};
use crate::output::write_comparison_csv;
use crate::scheme::{run, RunReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gbm-fem", version, about = "Tumor growth finite-element simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunOptions {
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write a VTK snapshot every N steps (0 disables).
    #[arg(long, value_name = "N")]
    pub snapshot_every: Option<usize>,
    /// Worker threads within a step; 1 is fully deterministic.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub threads: usize,
    /// Reserved; the model has no random components.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a config file or one of the built-in experiments.
    Run {
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<ExperimentPreset>,
        #[command(flatten)]
        opts: RunOptions,
    },
    /// Audit the angles of a mesh file; exit 0 iff it is non-obtuse.
    CheckMesh { mesh: PathBuf },
    /// Run two configs on the same grid and write their per-step data side by side.
    Compare {
        config_a: PathBuf,
        config_b: PathBuf,
        #[command(flatten)]
        opts: RunOptions,
    },
    /// Write the config files of a built-in experiment.
    WritePreset {
        preset: ExperimentPreset,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

const DEFAULT_OUTPUT: &str = "out";

impl RunOptions {
    fn apply(&self, config: &mut RunConfig, default_dir: &Path) {
        if let Some(dir) = &self.output_dir {
            config.output.dir = Some(dir.clone());
        } else if config.output.dir.is_none() {
            config.output.dir = Some(default_dir.to_path_buf());
        }
        if let Some(n) = self.snapshot_every {
            config.output.snapshot_every = n;
        }
        config.solver.threads = self.threads;
    }

    fn root(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config: Some(path), opts, .. } => cmd_run(&path, &opts, out),
        Command::Run { preset: Some(preset), opts, .. } => cmd_run_preset(preset, &opts, out),
        Command::Run { .. } => Err(Error::Config("run needs a config file or --preset".into())),
        Command::CheckMesh { mesh } => cmd_check_mesh(&mesh, out),
        Command::Compare { config_a, config_b, opts } => cmd_compare(&config_a, &config_b, &opts, out),
        Command::WritePreset { preset, output_dir } => cmd_write_preset(preset, &output_dir, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn describe(label: &str, r: &RunReport) -> String {
    let fold = |f: fn(&crate::scheme::StepDiagnostics) -> f64, min: bool| {
        r.diagnostics.iter().map(f).fold(if min { f64::INFINITY } else { f64::NEG_INFINITY }, |a, b| {
            if min {
                a.min(b)
            } else {
                a.max(b)
            }
        })
    };
    format!(
        "{label}: {} steps of dt={:e}, min T {:e}, max T {:e}, min Phi {:e}, max Phi {:e}, energy {:e}, bounds preserved: {}",
        r.steps,
        r.dt,
        fold(|d| d.min_t, true),
        fold(|d| d.max_t, false),
        fold(|d| d.min_phi, true),
        fold(|d| d.max_phi, false),
        r.energy,
        if r.bounds_preserved() { "yes" } else { "no" },
    )
}

pub fn cmd_run(path: &Path, opts: &RunOptions, out: &mut dyn Write) -> Result<i32> {
    let mut config = RunConfig::from_file(path)?;
    opts.apply(&mut config, &opts.root());
    config.validate()?;
    let report = run(&config)?;
    writeln!(out, "{}", describe(config.scheme.variant.name(), &report))?;
    if let Some(dir) = &config.output.dir {
        writeln!(out, "wrote {}", dir.display())?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_run_preset(preset: ExperimentPreset, opts: &RunOptions, out: &mut dyn Write) -> Result<i32> {
    let root = opts.root().join(preset.to_string());
    let mut reports = Vec::new();
    for (label, mut config) in preset.configs() {
        let mut o = opts.clone();
        o.output_dir = Some(root.join(&label));
        o.apply(&mut config, &root.join(&label));
        let report = run(&config)?;
        writeln!(out, "{}", describe(&label, &report))?;
        reports.push((label, report));
    }
    match preset {
        ExperimentPreset::EnergySweep => {
            let mut w = BufWriter::new(std::fs::File::create(root.join("energy.csv"))?);
            writeln!(w, "steps,dt,energy_imex_lumped,energy_explicit_lumped")?;
            for pair in reports.chunks(2) {
                let (a, b) = (&pair[0].1, &pair[1].1);
                writeln!(w, "{},{:.16e},{:.16e},{:.16e}", a.steps, a.dt, a.energy, b.energy)?;
            }
            w.flush()?;
        }
        _ => {
            let (la, a) = &reports[0];
            let (lb, b) = &reports[1];
            let mut w = BufWriter::new(std::fs::File::create(root.join("comparison.csv"))?);
            write_comparison_csv(&mut w, a, la, b, lb)?;
            w.flush()?;
        }
    }
    writeln!(out, "wrote {}", root.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_check_mesh(path: &Path, out: &mut dyn Write) -> Result<i32> {
    let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    let mesh = Triangulation::read_from(std::io::BufReader::new(file))
        .map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
    if mesh.num_triangles() == 0 {
        return Err(Error::Parse { path: path.to_path_buf(), msg: "mesh has no triangles".into() });
    }
    let r = audit_angles(&mesh);
    writeln!(out, "nodes: {}", mesh.num_nodes())?;
    writeln!(out, "triangles: {}", mesh.num_triangles())?;
    writeln!(out, "h: {:e}", mesh.h())?;
    writeln!(out, "max negative cosine: {:e}", r.max_neg_cos)?;
    writeln!(out, "worst element: {}", r.worst_element)?;
    writeln!(out, "strictly acute: {}", r.strictly_acute)?;
    writeln!(out, "non-obtuse: {}", r.non_obtuse)?;
    if r.non_obtuse {
        Ok(EXIT_OK)
    } else {
        writeln!(out, "element {} has an obtuse angle", r.worst_element)?;
        Ok(EXIT_NUMERICAL)
    }
}

pub fn cmd_compare(a: &Path, b: &Path, opts: &RunOptions, out: &mut dyn Write) -> Result<i32> {
    let mut ca = RunConfig::from_file(a)?;
    let mut cb = RunConfig::from_file(b)?;
    if !ca.same_grid(&cb)? {
        return Err(Error::Config(format!("{} and {} do not share the mesh and time grid", a.display(), b.display())));
    }
    let root = opts.root();
    opts.apply(&mut ca, &root.join("a"));
    opts.apply(&mut cb, &root.join("b"));
    ca.output.dir = Some(root.join("a"));
    cb.output.dir = Some(root.join("b"));
    let ra = run(&ca)?;
    let rb = run(&cb)?;
    writeln!(out, "{}", describe("a", &ra))?;
    writeln!(out, "{}", describe("b", &rb))?;
    let path = root.join("comparison.csv");
    let mut w = BufWriter::new(std::fs::File::create(&path)?);
    write_comparison_csv(&mut w, &ra, "a", &rb, "b")?;
    w.flush()?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_write_preset(preset: ExperimentPreset, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    std::fs::create_dir_all(dir)?;
    for (label, config) in preset.configs() {
        let path = dir.join(format!("{preset}-{label}.toml"));
        std::fs::write(&path, config.to_toml()?)?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(EXIT_OK)
}
