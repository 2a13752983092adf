//! Time stepping.
//!
//! Each step solves, in order, the tumor equation (one symmetric linear
//! system), then the vasculature and finally the necrosis, all linear in the
//! unknown of the new time level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{InitialCondition, RunConfig, SolverSettings};
use crate::error::{Error, Result};
use crate::fem::FemContext;
use crate::linalg::{cg_solve, mmatrix_jacobi_polish, CgOptions, CgOutcome, CsrMatrix, DenseVector};
use crate::mesh::{audit_angles, AngleReport, Triangulation};
use crate::model::{
    imex_coefficients_phi, imex_coefficients_t, necrosis_rate, reactions, update_n_node, update_phi_node,
    vascular_fraction, ModelParams, Splitting,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeVariant {
    /// Semi-implicit reactions, lumped mass.
    #[default]
    ImexLumped,
    /// Reactions fully explicit, diffusion implicit, lumped mass.
    ExplicitLumped,
    /// Semi-implicit reactions with the consistent mass matrix.
    ImexConsistent,
}

impl SchemeVariant {
    pub fn is_lumped(self) -> bool {
        !matches!(self, SchemeVariant::ImexConsistent)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeVariant::ImexLumped => "imex-lumped",
            SchemeVariant::ExplicitLumped => "explicit-lumped",
            SchemeVariant::ImexConsistent => "imex-consistent",
        }
    }
}

/// Nodal values of the three fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: DenseVector,
    pub n: DenseVector,
    pub phi: DenseVector,
    pub step: usize,
    pub time: f64,
}

impl State {
    pub fn zeros(num_nodes: usize) -> Self {
        State { t: vec![0.0; num_nodes], n: vec![0.0; num_nodes], phi: vec![0.0; num_nodes], step: 0, time: 0.0 }
    }

    /// Nodal interpolation of the initial profiles.
    pub fn interpolate(mesh: &Triangulation, initial: &InitialCondition, k: f64) -> Self {
        let eval = |f: &dyn Fn(&[f64; 2]) -> f64| mesh.nodes().iter().map(f).collect::<Vec<_>>();
        State {
            t: eval(&|x| initial.t.eval(x, k)),
            n: eval(&|x| initial.n.eval(x, k)),
            phi: eval(&|x| initial.phi.eval(x, k)),
            step: 0,
            time: 0.0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.t.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        for v in [&self.t, &self.n, &self.phi] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in [("T", &self.t), ("N", &self.n), ("Phi", &self.phi)] {
            if let Some(node) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { step: self.step, field: name, node });
            }
        }
        Ok(())
    }
}

/// Per-step summary written to the CSV output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub min_t: f64,
    pub max_t: f64,
    pub min_n: f64,
    pub max_n: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    /// Iterations of the tumor solve (0 for the initial row).
    pub cg_iters: usize,
    pub cg_residual: f64,
    pub polish_sweeps: usize,
    /// `||T||_{H1}^2` of this time level.
    pub h1_sq: f64,
    /// `||grad T||_{L2}^2` of this time level.
    pub grad_sq: f64,
    /// `dt * sum_{j=1..k} ||T^j||_{H1}^2`.
    pub energy_acc: f64,
    /// Some node has `T < 0`, `Phi < 0` or `N < 0`.
    pub lower_violation: bool,
    /// Some node has `T > K` or `Phi > K`.
    pub upper_violation: bool,
    /// `N` did not decrease at any node in this step.
    pub n_monotone: bool,
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

impl StepDiagnostics {
    pub fn of_state(mesh: &Triangulation, fem: &FemContext, state: &State, k: f64) -> Result<Self> {
        let (min_t, max_t) = min_max(&state.t);
        let (min_n, max_n) = min_max(&state.n);
        let (min_phi, max_phi) = min_max(&state.phi);
        let norms = fem.norms(mesh, &state.t)?;
        Ok(StepDiagnostics {
            step: state.step,
            time: state.time,
            min_t,
            max_t,
            min_n,
            max_n,
            min_phi,
            max_phi,
            cg_iters: 0,
            cg_residual: 0.0,
            polish_sweeps: 0,
            h1_sq: norms.h1_squared(),
            grad_sq: norms.h1_seminorm * norms.h1_seminorm,
            energy_acc: 0.0,
            lower_violation: min_t < 0.0 || min_phi < 0.0 || min_n < 0.0,
            upper_violation: max_t > k || max_phi > k,
            n_monotone: true,
        })
    }
}

/// Advances a [`State`] by one step of the selected variant.
pub struct Stepper<'a> {
    mesh: &'a Triangulation,
    fem: &'a FemContext,
    params: ModelParams,
    dt: f64,
    variant: SchemeVariant,
    solver: SolverSettings,
}

#[derive(Debug)]
struct TumorSolve {
    t: DenseVector,
    cg: CgOutcome,
    polish_sweeps: usize,
}

impl<'a> Stepper<'a> {
    /// Lumped variants require a non-obtuse mesh.
    pub fn new(
        mesh: &'a Triangulation,
        fem: &'a FemContext,
        params: ModelParams,
        dt: f64,
        variant: SchemeVariant,
        solver: SolverSettings,
    ) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if fem.num_nodes() != mesh.num_nodes() || fem.num_elements() != mesh.num_triangles() {
            return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: fem.num_nodes() });
        }
        if variant.is_lumped() {
            let audit = audit_angles(mesh);
            if !audit.non_obtuse {
                return Err(Error::ObtuseMesh { element: audit.worst_element, cos: -audit.max_neg_cos });
            }
        }
        Ok(Stepper { mesh, fem, params, dt, variant, solver })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn variant(&self) -> SchemeVariant {
        self.variant
    }

    /// One step; `energy_before` is the accumulated energy up to `state`.
    pub fn step(&self, state: &State, energy_before: f64) -> Result<(State, StepDiagnostics)> {
        let wrap = |e: Error| match e {
            e @ Error::NonFinite { .. } => e,
            e => Error::Step { step: state.step + 1, source: Box::new(e) },
        };
        state.check(self.mesh.num_nodes()).map_err(wrap)?;
        let (next, solve) = match self.variant {
            SchemeVariant::ImexLumped => self.step_imex_lumped(state),
            SchemeVariant::ExplicitLumped => self.step_explicit_lumped(state),
            SchemeVariant::ImexConsistent => self.step_imex_consistent(state),
        }
        .map_err(wrap)?;
        next.check_finite()?;

        let mut diag = StepDiagnostics::of_state(self.mesh, self.fem, &next, self.params.k)?;
        diag.cg_iters = solve.cg.iterations;
        diag.cg_residual = solve.cg.residual;
        diag.polish_sweeps = solve.polish_sweeps;
        diag.energy_acc = energy_before + self.dt * diag.h1_sq;
        diag.n_monotone = next.n.iter().zip(&state.n).all(|(a, b)| a >= b);
        Ok((next, diag))
    }

    fn cg_options(&self) -> CgOptions {
        CgOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            preconditioner: self.solver.preconditioner,
            parallel: self.solver.threads > 1,
        }
    }

    fn par(&self) -> bool {
        self.solver.threads > 1
    }

    fn nodal<F>(&self, n: usize, f: F) -> DenseVector
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        if self.par() {
            (0..n).into_par_iter().map(f).collect()
        } else {
            (0..n).map(f).collect()
        }
    }

    /// `kappa1 * P(mean Phi, mean T) + kappa0` on every element.
    pub fn diffusivity(&self, state: &State) -> DenseVector {
        let p = &self.params;
        let tris = self.mesh.triangles();
        self.nodal(tris.len(), |e| {
            let tri = tris[e];
            let tm = (state.t[tri[0]] + state.t[tri[1]] + state.t[tri[2]]) / 3.0;
            let pm = (state.phi[tri[0]] + state.phi[tri[1]] + state.phi[tri[2]]) / 3.0;
            p.kappa1 * vascular_fraction(pm, tm, p.k) + p.kappa0
        })
    }

    /// Lumped tumor system `(M_L/dt + A + M_L diag(decay)) T = rhs`.
    fn lumped_tumor_system(&self, state: &State, decay: Option<&[f64]>) -> Result<CsrMatrix> {
        let mut a = self.fem.stiffness(&self.diffusivity(state))?;
        let m = self.fem.lumped.as_slice();
        let diag: Vec<f64> = match decay {
            Some(d) => m.iter().zip(d).map(|(m, d)| m / self.dt + m * d).collect(),
            None => m.iter().map(|m| m / self.dt).collect(),
        };
        a.add_diagonal(&diag);
        if cfg!(debug_assertions) {
            debug_assert_mmatrix(&a);
        }
        Ok(a)
    }

    fn solve_tumor(&self, system: &CsrMatrix, rhs: &[f64], guess: &[f64], polish: bool) -> Result<TumorSolve> {
        let cg = cg_solve(system, rhs, Some(guess), &self.cg_options())?;
        let mut t = cg.x.clone();
        let mut polish_sweeps = 0;
        if polish && self.solver.positivity_polish {
            polish_sweeps = mmatrix_jacobi_polish(system, rhs, &mut t, self.solver.tol, self.solver.max_polish_sweeps)?;
        }
        Ok(TumorSolve { t, cg, polish_sweeps })
    }

    pub fn step_imex_lumped(&self, s: &State) -> Result<(State, TumorSolveStats)> {
        let (dt, p) = (self.dt, &self.params);
        let split: Vec<Splitting> =
            (0..s.num_nodes()).map(|a| imex_coefficients_t(s.t[a], s.n[a], s.phi[a], p)).collect();
        let decay: Vec<f64> = split.iter().map(|c| c.decay).collect();
        let system = self.lumped_tumor_system(s, Some(&decay))?;
        let m = self.fem.lumped.as_slice();
        let rhs: Vec<f64> = (0..s.num_nodes()).map(|a| m[a] * (s.t[a] / dt + split[a].source)).collect();
        let solve = self.solve_tumor(&system, &rhs, &s.t, true)?;
        let t1 = &solve.t;

        let phi1 = self.nodal(s.num_nodes(), |a| update_phi_node(s.t[a], t1[a], s.n[a], s.phi[a], dt, p));
        let n1 = self.nodal(s.num_nodes(), |a| update_n_node(s.t[a], t1[a], s.n[a], s.phi[a], phi1[a], dt, p));
        Ok(self.finish(s, solve, n1, phi1))
    }

    pub fn step_explicit_lumped(&self, s: &State) -> Result<(State, TumorSolveStats)> {
        let (dt, p) = (self.dt, &self.params);
        let f: Vec<[f64; 3]> = (0..s.num_nodes()).map(|a| reactions(s.t[a], s.n[a], s.phi[a], p)).collect();
        let system = self.lumped_tumor_system(s, None)?;
        let m = self.fem.lumped.as_slice();
        let rhs: Vec<f64> = (0..s.num_nodes()).map(|a| m[a] * (s.t[a] / dt + f[a][0])).collect();
        let solve = self.solve_tumor(&system, &rhs, &s.t, true)?;

        let phi1 = self.nodal(s.num_nodes(), |a| s.phi[a] + dt * f[a][2]);
        let n1 = self.nodal(s.num_nodes(), |a| s.n[a] + dt * f[a][1]);
        Ok(self.finish(s, solve, n1, phi1))
    }

    /// Same splitting as [`step_imex_lumped`](Self::step_imex_lumped) with every lumped
    /// product replaced by the consistent mass matrix. The implicit decay is weighted
    /// per element by the mean nodal decay so the system stays symmetric.
    pub fn step_imex_consistent(&self, s: &State) -> Result<(State, TumorSolveStats)> {
        let (dt, p) = (self.dt, &self.params);
        let nn = s.num_nodes();
        let mass = &self.fem.consistent_mass;
        let opts = self.cg_options();

        let split: Vec<Splitting> = (0..nn).map(|a| imex_coefficients_t(s.t[a], s.n[a], s.phi[a], p)).collect();
        let decay: Vec<f64> = split.iter().map(|c| c.decay).collect();
        let mut system = self.fem.stiffness(&self.diffusivity(s))?;
        system.axpy_pattern(1.0 / dt, mass);
        system.axpy_pattern(1.0, &self.fem.weighted_consistent_mass(&self.element_mean(&decay))?);
        let nodal_rhs: Vec<f64> = (0..nn).map(|a| s.t[a] / dt + split[a].source).collect();
        let rhs = mass.spmv(&nodal_rhs)?;
        let solve = self.solve_tumor(&system, &rhs, &s.t, false)?;
        let t1 = &solve.t;

        let split_phi: Vec<Splitting> =
            (0..nn).map(|a| imex_coefficients_phi(s.t[a], t1[a], s.n[a], s.phi[a], p)).collect();
        let decay_phi: Vec<f64> = split_phi.iter().map(|c| c.decay).collect();
        let mut system_phi = mass.clone();
        system_phi.values_mut().iter_mut().for_each(|v| *v /= dt);
        system_phi.axpy_pattern(1.0, &self.fem.weighted_consistent_mass(&self.element_mean(&decay_phi))?);
        let nodal_rhs: Vec<f64> = (0..nn).map(|a| s.phi[a] / dt + split_phi[a].source).collect();
        let phi1 = cg_solve(&system_phi, &mass.spmv(&nodal_rhs)?, Some(&s.phi), &opts)?.x;

        // M (N1 - Nk)/dt = M f~2: the reaction needs no implicit part, so the
        // consistent system has the nodal update as its exact solution.
        let nodal_rhs: Vec<f64> =
            (0..nn).map(|a| s.n[a] + dt * necrosis_rate(s.t[a], t1[a], s.n[a], s.phi[a], phi1[a], p)).collect();
        let n1 = cg_solve(mass, &mass.spmv(&nodal_rhs)?, Some(&nodal_rhs), &opts)?.x;
        Ok(self.finish(s, solve, n1, phi1))
    }

    fn element_mean(&self, nodal: &[f64]) -> DenseVector {
        self.mesh.triangles().iter().map(|t| (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0).collect()
    }

    fn finish(&self, s: &State, solve: TumorSolve, n: DenseVector, phi: DenseVector) -> (State, TumorSolveStats) {
        let stats = TumorSolveStats { cg: solve.cg, polish_sweeps: solve.polish_sweeps };
        let state = State { t: solve.t, n, phi, step: s.step + 1, time: (s.step + 1) as f64 * self.dt };
        (state, stats)
    }
}

/// Linear-solver statistics of the tumor equation in one step.
#[derive(Debug, Clone)]
pub struct TumorSolveStats {
    pub cg: CgOutcome,
    pub polish_sweeps: usize,
}

fn debug_assert_mmatrix(a: &CsrMatrix) {
    let tol = 1e-12 * a.max_abs();
    for i in 0..a.dim() {
        let (mut diag, mut off) = (0.0, 0.0);
        for (j, v) in a.row(i) {
            if i == j {
                diag = v;
            } else {
                debug_assert!(v <= tol, "positive off-diagonal ({i}, {j}) = {v}");
                off += v.abs();
            }
            debug_assert!((a.get(j, i) - v).abs() <= tol, "asymmetric entry ({i}, {j})");
        }
        debug_assert!(diag > 0.0 && diag >= off - tol, "row {i} not diagonally dominant");
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub variant: SchemeVariant,
    pub dt: f64,
    pub steps: usize,
    pub mesh_h: f64,
    pub angle_report: AngleReport,
    /// Row 0 describes the initial state.
    pub diagnostics: Vec<StepDiagnostics>,
    pub initial_state: State,
    pub final_state: State,
    /// `dt * sum_{k=1..K_f} ||T^k||_{H1}^2`.
    pub energy: f64,
    /// Upper bound `(||T^0||_h^2 / 2 + Tf rho K^2 |Omega|) / kappa0` on
    /// `dt * sum ||grad T^k||^2`, valid while the fields stay in `[0, K]`.
    pub gradient_energy_bound: f64,
    pub gradient_energy: f64,
    /// `dt * C1 < 1`, the regime of the discrete Gronwall arguments.
    pub small_step_regime: bool,
}

impl RunReport {
    pub fn bounds_preserved(&self) -> bool {
        self.diagnostics.iter().all(|d| !d.lower_violation && !d.upper_violation)
    }

    pub fn first_violation(&self) -> Option<&StepDiagnostics> {
        self.diagnostics.iter().find(|d| d.lower_violation || d.upper_violation)
    }
}

/// Runs `config` to its final time, writing outputs when an output directory is set.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let mut writer = match &config.output.dir {
        Some(dir) => Some(crate::output::RunWriter::create(dir, config)?),
        None => None,
    };
    let report = run_with_observer(config, |mesh, state, diag| match writer.as_mut() {
        Some(w) => w.record(mesh, state, diag),
        None => Ok(()),
    })?;
    if let Some(w) = writer {
        w.finish(&report)?;
    }
    Ok(report)
}

/// Runs `config`, calling `observer` on the initial state and after every step.
pub fn run_with_observer<F>(config: &RunConfig, mut observer: F) -> Result<RunReport>
where
    F: FnMut(&Triangulation, &State, &StepDiagnostics) -> Result<()>,
{
    config.validate()?;
    let mesh = config.mesh.build()?;
    let angle_report = audit_angles(&mesh);
    if config.scheme.variant.is_lumped() && !angle_report.non_obtuse {
        return Err(Error::ObtuseMesh { element: angle_report.worst_element, cos: -angle_report.max_neg_cos });
    }
    let fem = FemContext::new(&mesh)?;
    let steps = config.time.steps()?;
    let dt = config.time.dt()?;
    let params = config.params;
    let stepper = Stepper::new(&mesh, &fem, params, dt, config.scheme.variant, config.solver)?;

    let pool = if config.solver.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.solver.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
        Some(pool)
    } else {
        None
    };

    let initial = State::interpolate(&mesh, &config.initial, params.k);
    let mut diag = StepDiagnostics::of_state(&mesh, &fem, &initial, params.k)?;
    diag.n_monotone = true;
    observer(&mesh, &initial, &diag)?;
    let mut diagnostics = vec![diag];
    let mut state = initial.clone();
    let mut energy = 0.0;
    let mut gradient_energy = 0.0;
    for _ in 0..steps {
        let (next, d) = match &pool {
            Some(pool) => pool.install(|| stepper.step(&state, energy))?,
            None => stepper.step(&state, energy)?,
        };
        energy = d.energy_acc;
        gradient_energy += dt * d.grad_sq;
        observer(&mesh, &next, &d)?;
        diagnostics.push(d);
        state = next;
    }
    let area = mesh.total_area();
    let gradient_energy_bound = (0.5 * fem.lumped.inner(&initial.t, &initial.t)
        + steps as f64 * dt * params.rho * params.k * params.k * area)
        / params.kappa0;
    Ok(RunReport {
        variant: config.scheme.variant,
        dt,
        steps,
        mesh_h: mesh.h(),
        angle_report,
        diagnostics,
        initial_state: initial,
        final_state: state,
        energy,
        gradient_energy_bound,
        gradient_energy,
        small_step_regime: dt * params.gronwall_c1() < 1.0,
    })
}
