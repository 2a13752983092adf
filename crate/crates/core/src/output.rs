//! CSV, VTK and summary files of a run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::diagnostics::summarize;
use crate::error::{Error, Result};
use crate::mesh::Triangulation;
use crate::model::ModelParams;
use crate::scheme::{RunReport, State, StepDiagnostics};

pub const CSV_HEADER: &str = "step,time,minT,maxT,minN,maxN,minPhi,maxPhi,cg_iters,cg_residual,energy_acc";

const STEP_COLUMNS: [&str; 7] = ["minT", "maxT", "minN", "maxN", "minPhi", "maxPhi", "energy_acc"];

/// Float with 17 significant digits, enough to round-trip any `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv_row<W: Write>(w: &mut W, d: &StepDiagnostics) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{}",
        d.step,
        num(d.time),
        num(d.min_t),
        num(d.max_t),
        num(d.min_n),
        num(d.max_n),
        num(d.min_phi),
        num(d.max_phi),
        d.cg_iters,
        num(d.cg_residual),
        num(d.energy_acc)
    )?;
    Ok(())
}

pub fn write_csv<W: Write>(mut w: W, diagnostics: &[StepDiagnostics]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for d in diagnostics {
        write_csv_row(&mut w, d)?;
    }
    Ok(())
}

fn step_values(d: &StepDiagnostics) -> [f64; 7] {
    [d.min_t, d.max_t, d.min_n, d.max_n, d.min_phi, d.max_phi, d.energy_acc]
}

/// Side-by-side per-step columns of two runs on the same time grid, with `b - a` differences.
pub fn write_comparison_csv<W: Write>(
    mut w: W,
    a: &RunReport,
    label_a: &str,
    b: &RunReport,
    label_b: &str,
) -> Result<()> {
    if a.diagnostics.len() != b.diagnostics.len() {
        return Err(Error::Config(format!(
            "runs have {} and {} recorded steps",
            a.diagnostics.len(),
            b.diagnostics.len()
        )));
    }
    let mut header = vec!["step".to_string(), "time".to_string()];
    for label in [label_a, label_b] {
        header.extend(STEP_COLUMNS.iter().map(|c| format!("{c}_{label}")));
    }
    header.extend(STEP_COLUMNS.iter().map(|c| format!("diff_{c}")));
    writeln!(w, "{}", header.join(","))?;
    for (da, db) in a.diagnostics.iter().zip(&b.diagnostics) {
        let (va, vb) = (step_values(da), step_values(db));
        let mut row = vec![da.step.to_string(), num(da.time)];
        row.extend(va.iter().map(|&x| num(x)));
        row.extend(vb.iter().map(|&x| num(x)));
        row.extend(va.iter().zip(&vb).map(|(x, y)| num(y - x)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with point scalars `T`, `N`, `Phi`.
pub fn write_vtk<W: Write>(mut w: W, mesh: &Triangulation, state: &State) -> Result<()> {
    if state.num_nodes() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: state.num_nodes() });
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "step {} time {}", state.step, num(state.time))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_nodes())?;
    for p in mesh.nodes() {
        writeln!(w, "{} {} 0", num(p[0]), num(p[1]))?;
    }
    let nt = mesh.num_triangles();
    writeln!(w, "CELLS {} {}", nt, 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.num_nodes())?;
    for (name, field) in [("T", &state.t), ("N", &state.n), ("Phi", &state.phi)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in field {
            writeln!(w, "{}", num(*v))?;
        }
    }
    Ok(())
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snapshot_{step:06}.vtk"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

/// Streams the outputs of one run into a directory.
pub struct RunWriter {
    dir: PathBuf,
    csv: BufWriter<File>,
    snapshot_every: usize,
    params: ModelParams,
}

impl RunWriter {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        let mut cfg = create(&dir.join("config.toml"))?;
        cfg.write_all(config.to_toml()?.as_bytes())?;
        cfg.flush()?;
        let mut csv = create(&dir.join("diagnostics.csv"))?;
        writeln!(csv, "{CSV_HEADER}")?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            csv,
            snapshot_every: config.output.snapshot_every,
            params: config.params,
        })
    }

    pub fn record(&mut self, mesh: &Triangulation, state: &State, diag: &StepDiagnostics) -> Result<()> {
        write_csv_row(&mut self.csv, diag)?;
        if self.snapshot_every > 0 && state.step.is_multiple_of(self.snapshot_every) {
            let mut w = create(&snapshot_path(&self.dir, state.step))?;
            write_vtk(&mut w, mesh, state)?;
            w.flush()?;
        }
        Ok(())
    }

    /// Flushes the CSV and appends the envelope / equilibrium summary.
    pub fn finish(mut self, report: &RunReport) -> Result<()> {
        self.csv.flush()?;
        let summary = summarize(report, &self.params)?;
        let mut w = create(&self.dir.join("summary.txt"))?;
        summary.write_to(report, &mut w)?;
        w.flush()?;
        Ok(())
    }
}
