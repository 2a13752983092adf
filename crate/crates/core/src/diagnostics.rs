//! Post-processing checks of a finished run against the long-time behaviour of
//! the continuous model: exponential envelopes, equilibrium classification and
//! the scalar comparison ODE behind the envelopes.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{reactions, ModelParams};
use crate::scheme::{RunReport, State};

/// Assert envelopes (built-in experiments) or only report them (user configs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Assert,
    Report,
}

/// `y' = a e^{-b t} - c y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarForcing {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ScalarForcing {
    /// The comparison problem for T when N stays above `n0_min`:
    /// `a = rho ||Phi0||`, `b = beta2 N0min`, `c = beta1 N0min`.
    pub fn far_from_k(p: &ModelParams, phi0_max: f64, n0_min: f64) -> Self {
        ScalarForcing { a: p.rho * phi0_max, b: p.beta2 * n0_min, c: p.beta1 * n0_min }
    }

    /// Closed-form solution at time `t`.
    pub fn solution(&self, y0: f64, t: f64) -> f64 {
        let ScalarForcing { a, b, c } = *self;
        let decay = (-c * t).exp();
        if a == 0.0 {
            return y0 * decay;
        }
        // (e^{-bt} - e^{-ct}) / (c - b), written to stay accurate as b -> c
        let x = (c - b) * t;
        let kernel = if x == 0.0 {
            t * decay
        } else if x.abs() < 1.0 {
            decay * t * x.exp_m1() / x
        } else {
            ((-b * t).exp() - decay) / (c - b)
        };
        y0 * decay + a * kernel
    }

    pub fn rhs(&self, t: f64, y: f64) -> f64 {
        self.a * (-self.b * t).exp() - self.c * y
    }
}

/// Closed-form solution of the comparison ODE sampled at `times`.
pub fn scalar_comparison_oracle(y0: f64, forcing: ScalarForcing, times: &[f64]) -> Result<Vec<f64>> {
    let ScalarForcing { a, b, c } = forcing;
    if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("comparison ODE needs a, b, c >= 0, got {a}, {b}, {c}")));
    }
    Ok(times.iter().map(|&t| forcing.solution(y0, t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    /// N bounded below by `N0min > 0`, `delta >= gamma / K`.
    FarFromK,
    /// `N0 >= K - eps` everywhere.
    NearK,
}

impl fmt::Display for EnvelopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvelopeKind::FarFromK => "far-from-K",
            EnvelopeKind::NearK => "near-K",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSpec {
    pub kind: EnvelopeKind,
    pub t0_max: f64,
    pub phi0_max: f64,
    /// `N0min` for the far case, `K - eps` for the near case.
    pub n_floor: f64,
    pub eps: f64,
    /// Exponential rate of the Phi envelope.
    pub phi_rate: f64,
    /// Exponential rate of the T envelope (near case) or the T comparison problem (far case).
    pub t_forcing: ScalarForcing,
    /// `delta >= gamma / K` (far case only; always true for the near case).
    pub delta_condition: bool,
    /// Both envelope rates positive, which also bounds N (near case).
    pub decaying: bool,
    /// Why the envelope cannot be asserted, if it cannot.
    pub not_applicable: Option<String>,
}

impl EnvelopeSpec {
    pub fn far(p: &ModelParams, initial: &State, n0_min: f64) -> Self {
        let (t0_max, phi0_max, n0_actual) = initial_norms(initial);
        let delta_condition = p.delta >= p.gamma / p.k;
        let not_applicable = if !delta_condition {
            Some(format!("delta = {} < gamma / K = {}", p.delta, p.gamma / p.k))
        } else if !(n0_min > 0.0) {
            Some(format!("N0min = {n0_min} is not positive"))
        } else if n0_min > n0_actual {
            Some(format!("N0min = {n0_min} exceeds the nodal minimum {n0_actual} of N0"))
        } else {
            None
        };
        EnvelopeSpec {
            kind: EnvelopeKind::FarFromK,
            t0_max,
            phi0_max,
            n_floor: n0_min,
            eps: p.k - n0_min,
            phi_rate: p.beta2 * n0_min,
            t_forcing: ScalarForcing::far_from_k(p, phi0_max, n0_min),
            delta_condition,
            decaying: p.beta1 * n0_min > 0.0 && p.beta2 * n0_min > 0.0,
            not_applicable,
        }
    }

    pub fn near_k(p: &ModelParams, initial: &State, eps: f64) -> Self {
        let (t0_max, phi0_max, n0_actual) = initial_norms(initial);
        let t_rate = p.beta1 * (p.k - eps) - p.rho * eps / p.k;
        let phi_rate = p.beta2 * (p.k - eps) - p.gamma * eps / p.k;
        let not_applicable = if !(eps >= 0.0) || eps > p.k {
            Some(format!("eps = {eps} outside [0, K]"))
        } else if n0_actual < p.k - eps {
            Some(format!("min N0 = {n0_actual} < K - eps = {}", p.k - eps))
        } else {
            None
        };
        EnvelopeSpec {
            kind: EnvelopeKind::NearK,
            t0_max,
            phi0_max,
            n_floor: p.k - eps,
            eps,
            phi_rate,
            t_forcing: ScalarForcing { a: 0.0, b: 0.0, c: t_rate },
            delta_condition: true,
            decaying: t_rate > 0.0 && phi_rate > 0.0,
            not_applicable,
        }
    }

    pub fn applicable(&self) -> bool {
        self.not_applicable.is_none()
    }

    pub fn t_bound(&self, t: f64) -> f64 {
        self.t_forcing.solution(self.t0_max, t)
    }

    pub fn phi_bound(&self, t: f64) -> f64 {
        self.phi0_max * (-self.phi_rate * t).exp()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn initial_norms(initial: &State) -> (f64, f64, f64) {
    let n_min = initial.n.iter().copied().fold(f64::INFINITY, f64::min);
    (max_abs(&initial.t), max_abs(&initial.phi), n_min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeStep {
    pub step: usize,
    pub time: f64,
    pub max_t: f64,
    pub t_bound: f64,
    pub max_phi: f64,
    pub phi_bound: f64,
}

impl EnvelopeStep {
    pub fn t_margin(&self) -> f64 {
        self.t_bound - self.max_t
    }

    pub fn phi_margin(&self) -> f64 {
        self.phi_bound - self.max_phi
    }

    pub fn holds(&self) -> bool {
        self.max_t <= self.t_bound && self.max_phi <= self.phi_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub spec: EnvelopeSpec,
    /// One entry per recorded step; empty when not applicable.
    pub steps: Vec<EnvelopeStep>,
}

impl EnvelopeReport {
    pub fn applicable(&self) -> bool {
        self.spec.applicable()
    }

    /// No recorded step exceeds either envelope (vacuously true when not applicable).
    pub fn holds(&self) -> bool {
        self.steps.iter().all(EnvelopeStep::holds)
    }

    pub fn first_violation(&self) -> Option<&EnvelopeStep> {
        self.steps.iter().find(|s| !s.holds())
    }

    pub fn min_t_margin(&self) -> f64 {
        self.steps.iter().map(EnvelopeStep::t_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn min_phi_margin(&self) -> f64 {
        self.steps.iter().map(EnvelopeStep::phi_margin).fold(f64::INFINITY, f64::min)
    }

    /// In assert mode, an applicable envelope that is exceeded is an error.
    pub fn check(&self, mode: CheckMode) -> Result<()> {
        match (mode, self.first_violation()) {
            (CheckMode::Assert, Some(s)) if self.applicable() => Err(Error::EnvelopeViolation {
                kind: self.spec.kind.to_string(),
                step: s.step,
                detail: format!(
                    "max T = {:e} (bound {:e}), max Phi = {:e} (bound {:e})",
                    s.max_t, s.t_bound, s.max_phi, s.phi_bound
                ),
            }),
            _ => Ok(()),
        }
    }

    pub fn status(&self) -> &'static str {
        if !self.applicable() {
            "not applicable"
        } else if self.holds() {
            "holds"
        } else {
            "violated"
        }
    }
}

fn envelope_check(run: &RunReport, spec: EnvelopeSpec) -> EnvelopeReport {
    let steps = if spec.applicable() {
        run.diagnostics
            .iter()
            .map(|d| EnvelopeStep {
                step: d.step,
                time: d.time,
                max_t: d.max_t,
                t_bound: spec.t_bound(d.time),
                max_phi: d.max_phi,
                phi_bound: spec.phi_bound(d.time),
            })
            .collect()
    } else {
        Vec::new()
    };
    EnvelopeReport { spec, steps }
}

/// Envelopes for N bounded away from zero: Phi decays at rate `beta2 N0min` and T
/// stays below the comparison ODE solution.
pub fn envelope_check_far(run: &RunReport, p: &ModelParams, n0_min: f64) -> EnvelopeReport {
    envelope_check(run, EnvelopeSpec::far(p, &run.initial_state, n0_min))
}

/// Envelopes for `N0 >= K - eps`.
pub fn envelope_check_near_k(run: &RunReport, p: &ModelParams, eps: f64) -> EnvelopeReport {
    envelope_check(run, EnvelopeSpec::near_k(p, &run.initial_state, eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equilibrium {
    /// `(0, 0, 0)`.
    P1,
    /// `(0, N, 0)`.
    P2,
    /// `(0, 0, Phi)`.
    P3,
    None,
}

impl fmt::Display for Equilibrium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Equilibrium::P1 => "P1",
            Equilibrium::P2 => "P2",
            Equilibrium::P3 => "P3",
            Equilibrium::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: Equilibrium,
    pub max_t: f64,
    pub max_n: f64,
    pub max_phi: f64,
    /// Largest nodal `|f_1|, |f_2|, |f_3|`.
    pub residual: [f64; 3],
}

impl Classification {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }
}

pub fn classify_equilibrium(state: &State, p: &ModelParams, tol: f64) -> Result<Classification> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("classification tolerance must be positive, got {tol}")));
    }
    let (max_t, max_n, max_phi) = (max_abs(&state.t), max_abs(&state.n), max_abs(&state.phi));
    let small = |x: f64| x <= tol;
    let label = match (small(max_t), small(max_n), small(max_phi)) {
        (true, true, true) => Equilibrium::P1,
        (true, false, true) => Equilibrium::P2,
        (true, true, false) => Equilibrium::P3,
        _ => Equilibrium::None,
    };
    let mut residual = [0.0f64; 3];
    for a in 0..state.num_nodes() {
        let f = reactions(state.t[a], state.n[a], state.phi[a], p);
        for i in 0..3 {
            residual[i] = residual[i].max(f[i].abs());
        }
    }
    Ok(Classification { label, max_t, max_n, max_phi, residual })
}

/// Report-mode checks written next to the CSV output.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub far: EnvelopeReport,
    pub near: EnvelopeReport,
    pub classification: Classification,
    pub classification_tol: f64,
}

pub const SUMMARY_TOL: f64 = 1e-6;

/// Far envelope with `N0min = min N0`, near envelope with `eps = K - min N0`, and the
/// final-state classification at [`SUMMARY_TOL`].
pub fn summarize(run: &RunReport, p: &ModelParams) -> Result<RunSummary> {
    let n0_min = run.initial_state.n.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RunSummary {
        far: envelope_check_far(run, p, n0_min),
        near: envelope_check_near_k(run, p, p.k - n0_min),
        classification: classify_equilibrium(&run.final_state, p, SUMMARY_TOL)?,
        classification_tol: SUMMARY_TOL,
    })
}

impl RunSummary {
    pub fn write_to<W: Write>(&self, run: &RunReport, mut w: W) -> Result<()> {
        writeln!(w, "variant = {}", run.variant.name())?;
        writeln!(w, "steps = {}", run.steps)?;
        writeln!(w, "dt = {:e}", run.dt)?;
        writeln!(w, "mesh_h = {:e}", run.mesh_h)?;
        writeln!(w, "mesh_non_obtuse = {}", run.angle_report.non_obtuse)?;
        writeln!(w, "bounds_preserved = {}", run.bounds_preserved())?;
        if let Some(d) = run.first_violation() {
            writeln!(w, "first_bound_violation_step = {}", d.step)?;
        }
        writeln!(w, "n_monotone = {}", run.diagnostics.iter().all(|d| d.n_monotone))?;
        writeln!(w, "energy = {:.16e}", run.energy)?;
        writeln!(w, "gradient_energy = {:.16e}", run.gradient_energy)?;
        writeln!(w, "gradient_energy_bound = {:.16e}", run.gradient_energy_bound)?;
        writeln!(w, "small_step_regime = {}", run.small_step_regime)?;
        for r in [&self.far, &self.near] {
            writeln!(w, "envelope.{}.status = {}", r.spec.kind, r.status())?;
            match &r.spec.not_applicable {
                Some(why) => writeln!(w, "envelope.{}.reason = {why}", r.spec.kind)?,
                None => {
                    writeln!(w, "envelope.{}.min_t_margin = {:e}", r.spec.kind, r.min_t_margin())?;
                    writeln!(w, "envelope.{}.min_phi_margin = {:e}", r.spec.kind, r.min_phi_margin())?;
                }
            }
        }
        let c = &self.classification;
        writeln!(w, "equilibrium = {} (tol {:e})", c.label, self.classification_tol)?;
        writeln!(w, "final_max = T {:e}, N {:e}, Phi {:e}", c.max_t, c.max_n, c.max_phi)?;
        writeln!(w, "reaction_residual = {:e}, {:e}, {:e}", c.residual[0], c.residual[1], c.residual[2])?;
        Ok(())
    }
}
