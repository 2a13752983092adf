//! Pointwise nonlinearities of the tumor (T), necrosis (N) and vasculature (Phi) model
//! and the semi-implicit splitting used by the discrete scheme.
//!
//! Negative reaction terms are taken implicitly (linear in the new value) and
//! positive ones explicitly, which keeps every nodal update a positive
//! combination of old values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Vasculature-driven diffusion (cm^2/day).
    pub kappa1: f64,
    /// Isotropic diffusion (cm^2/day).
    pub kappa0: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Carrying capacity.
    #[serde(rename = "K")]
    pub k: f64,
}

impl ModelParams {
    /// Bounds comparison parameters (tumor and vasculature decay).
    pub const fn bounds_comparison() -> Self {
        ModelParams {
            kappa1: 8e-5,
            kappa0: 8e-5,
            rho: 1.0,
            alpha: 0.8,
            beta1: 0.8,
            beta2: 0.8,
            gamma: 0.008,
            delta: 0.8,
            k: 1.0,
        }
    }

    /// Energy sweep parameters.
    pub const fn energy_sweep() -> Self {
        ModelParams {
            kappa1: 2.9e-7,
            kappa0: 2.9e-7,
            rho: 1.0,
            alpha: 0.0029,
            beta1: 0.0029,
            beta2: 0.0,
            gamma: 0.0029,
            delta: 0.00029,
            k: 1.0,
        }
    }

    /// Lumping comparison parameters: logistic growth and diffusion only.
    pub const fn lumping_comparison() -> Self {
        ModelParams {
            kappa1: 8e-4,
            kappa0: 8e-4,
            rho: 1.0,
            alpha: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            gamma: 0.0,
            delta: 0.0,
            k: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("kappa1", self.kappa1),
            ("kappa0", self.kappa0),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("K", self.k),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("params.{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.k <= 0.0 {
            return Err(Error::Config("params.K must be > 0".into()));
        }
        if self.kappa0 <= 0.0 {
            return Err(Error::Config("params.kappa0 must be > 0".into()));
        }
        Ok(())
    }

    /// Growth rate `C1` of the discrete Gronwall ceiling on N (fields in `[0, K]`).
    pub fn gronwall_c1(&self) -> f64 {
        (self.beta1 + self.beta2) * self.k
    }

    /// Forcing `C2` of the discrete Gronwall ceiling on N.
    pub fn gronwall_c2(&self) -> f64 {
        self.alpha * self.k + self.delta * self.k * self.k
    }

    /// `N0 e^{C1 t} + C2 (e^{C1 t} - 1) / C1` at `t = k dt`.
    pub fn necrosis_ceiling(&self, n0: f64, t: f64) -> f64 {
        let c1 = self.gronwall_c1();
        let growth = if c1 > 0.0 { (c1 * t).exp_m1() / c1 } else { t };
        n0 * (c1 * t).exp() + self.gronwall_c2() * growth
    }

    /// Bound `L` with `max_i |f_i| <= L * tol` whenever all fields lie in `[0, tol]`, `tol <= K`.
    pub fn equilibrium_residual_bound(&self, tol: f64) -> f64 {
        let k = self.k;
        let l1 = 2.0 * self.rho + self.alpha + self.beta1 * k;
        let l2 = self.alpha + (self.beta1 + self.delta + self.beta2) * k;
        let l3 = 2.0 * self.gamma + (self.delta + self.beta2) * k;
        l1.max(l2).max(l3) * tol
    }
}

/// `[x]_0^K = min(K, max(0, x))`.
pub fn truncate(x: f64, k: f64) -> f64 {
    x.max(0.0).min(k)
}

/// Vascular fraction `P = Phi+ / ((Phi+ + K)/2 + T+)`, with both arguments truncated to `[0, K]`.
pub fn vascular_fraction(phi: f64, t: f64, k: f64) -> f64 {
    let phi = truncate(phi, k);
    let t = truncate(t, k);
    phi / ((phi + k) / 2.0 + t)
}

/// `sqrt(1 - P^2)` with the radicand clamped to `[0, 1]`.
pub fn hypoxia_factor(p: f64) -> f64 {
    (1.0 - p * p).clamp(0.0, 1.0).sqrt()
}

/// Continuous reaction terms `(f1, f2, f3)`.
pub fn reactions(t: f64, n: f64, phi: f64, p: &ModelParams) -> [f64; 3] {
    let pv = vascular_fraction(phi, t, p.k);
    let hyp = hypoxia_factor(pv);
    let logistic = 1.0 - (t + n + phi) / p.k;
    let f1 = p.rho * t * pv * logistic - p.alpha * t * hyp - p.beta1 * n * t;
    let f2 = p.alpha * t * hyp + p.beta1 * n * t + p.delta * t * phi + p.beta2 * n * phi;
    let f3 = p.gamma * t * hyp * phi / p.k * logistic - p.delta * t * phi - p.beta2 * n * phi;
    [f1, f2, f3]
}

/// Explicit source and implicit decay rate of a semi-implicit reaction: `f = source - decay * u_new`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splitting {
    pub source: f64,
    pub decay: f64,
}

/// Tumor splitting from time-k nodal values.
pub fn imex_coefficients_t(tk: f64, nk: f64, phik: f64, p: &ModelParams) -> Splitting {
    let pv = vascular_fraction(phik, tk, p.k);
    Splitting {
        source: p.rho * pv * tk,
        decay: p.rho * pv * (tk + nk + phik) / p.k + p.alpha * hypoxia_factor(pv) + p.beta1 * nk,
    }
}

/// Vasculature splitting; needs the already-computed tumor value `tk1`.
pub fn imex_coefficients_phi(tk: f64, tk1: f64, nk: f64, phik: f64, p: &ModelParams) -> Splitting {
    let g = p.gamma * (tk1 / p.k) * hypoxia_factor(vascular_fraction(phik, tk, p.k));
    Splitting { source: g * phik, decay: g * (phik + tk + nk) / p.k + p.delta * tk1 + p.beta2 * nk }
}

/// Semi-implicit reactions `(f~1, f~2, f~3)` evaluated with all five time levels known.
pub fn imex_reactions(tk: f64, tk1: f64, nk: f64, phik: f64, phik1: f64, p: &ModelParams) -> [f64; 3] {
    let pv = vascular_fraction(phik, tk, p.k);
    let hyp = hypoxia_factor(pv);
    let f1 = p.rho * pv * (tk * (1.0 - tk1 / p.k) - tk1 * (nk + phik) / p.k) - p.alpha * tk1 * hyp - p.beta1 * nk * tk1;
    let f2 = p.alpha * tk1 * hyp + p.beta1 * nk * tk1 + p.delta * tk1 * phik1 + p.beta2 * nk * phik1;
    let f3 = p.gamma * tk1 / p.k * hyp * (phik * (1.0 - phik1 / p.k) - phik1 * (tk + nk) / p.k)
        - p.delta * tk1 * phik1
        - p.beta2 * nk * phik1;
    [f1, f2, f3]
}

/// Closed-form solution of the linear nodal equation `(Phi1 - phik)/dt = f~3`.
pub fn update_phi_node(tk: f64, tk1: f64, nk: f64, phik: f64, dt: f64, p: &ModelParams) -> f64 {
    let s = imex_coefficients_phi(tk, tk1, nk, phik, p);
    (phik + dt * s.source) / (1.0 + dt * s.decay)
}

/// `N1 = nk + dt f~2`; every increment carries `tk1` or `phik1`.
pub fn update_n_node(tk: f64, tk1: f64, nk: f64, phik: f64, phik1: f64, dt: f64, p: &ModelParams) -> f64 {
    nk + dt * necrosis_rate(tk, tk1, nk, phik, phik1, p)
}

/// Right-hand side `f~2` of the necrosis update.
pub fn necrosis_rate(tk: f64, tk1: f64, nk: f64, phik: f64, phik1: f64, p: &ModelParams) -> f64 {
    let hyp = hypoxia_factor(vascular_fraction(phik, tk, p.k));
    p.alpha * tk1 * hyp + p.beta1 * nk * tk1 + p.delta * tk1 * phik1 + p.beta2 * nk * phik1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T2: ModelParams = ModelParams::bounds_comparison();

    fn zero_rates() -> ModelParams {
        ModelParams { rho: 0.0, alpha: 0.0, beta1: 0.0, beta2: 0.0, gamma: 0.0, delta: 0.0, ..T2 }
    }

    #[test]
    fn vascular_fraction_examples() {
        assert_eq!(vascular_fraction(0.0, 0.7, 1.0), 0.0);
        assert_eq!(vascular_fraction(2.0, 0.0, 2.0), 1.0);
        assert!((vascular_fraction(0.5, 0.5, 1.0) - 0.4).abs() < 1e-15);
        assert!((vascular_fraction(1.5, 1.5, 3.0) - 0.4).abs() < 1e-15);
        // negative parts vanish
        assert_eq!(vascular_fraction(-1.0, 0.3, 1.0), 0.0);
        assert_eq!(vascular_fraction(0.5, -4.0, 1.0), vascular_fraction(0.5, 0.0, 1.0));
    }

    #[test]
    fn params_validation() {
        assert!(T2.validate().is_ok());
        assert!(ModelParams { k: 0.0, ..T2 }.validate().is_err());
        assert!(ModelParams { kappa0: 0.0, ..T2 }.validate().is_err());
        assert!(ModelParams { delta: -1.0, ..T2 }.validate().is_err());
        assert!(ModelParams { rho: f64::NAN, ..T2 }.validate().is_err());
    }

    #[test]
    fn reactions_vanish_without_tumor_and_necrosis() {
        for phi in [0.0, 0.3, 1.0] {
            assert_eq!(reactions(0.0, 0.0, phi, &T2), [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn reactions_single_point() {
        // P = 0.5 / (0.75 + 0.5) = 0.4, sqrt(1 - P^2) = sqrt(0.84), logistic bracket 0
        let f = reactions(0.5, 0.0, 0.5, &T2);
        let hyp = 0.84f64.sqrt();
        let want = [-0.8 * 0.5 * hyp, 0.8 * 0.5 * hyp + 0.8 * 0.25, -0.8 * 0.25];
        for i in 0..3 {
            assert!((f[i] - want[i]).abs() < 1e-15, "{i}: {} vs {}", f[i], want[i]);
        }
    }

    #[test]
    fn imex_t_examples() {
        let s = imex_coefficients_t(0.0, 0.0, 0.0, &T2);
        assert_eq!((s.source, s.decay), (0.0, T2.alpha));
        let s = imex_coefficients_t(T2.k, 0.0, 0.0, &T2);
        assert_eq!((s.source, s.decay), (0.0, T2.alpha));
    }

    #[test]
    fn phi_update_examples() {
        let p = ModelParams { gamma: 0.0, delta: 0.0, beta2: 0.0, ..T2 };
        assert_eq!(update_phi_node(0.3, 0.2, 0.1, 0.7, 0.5, &p), 0.7);
        // delta * tk1 = 1
        let p = ModelParams { gamma: 0.0, beta2: 0.0, delta: 2.0, ..T2 };
        let v = update_phi_node(0.1, 0.5, 0.3, 0.5, 0.1, &p);
        assert!((v - 0.5 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn n_update_examples() {
        assert_eq!(update_n_node(0.4, 0.3, 0.2, 0.1, 0.5, 0.1, &zero_rates()), 0.2);
        assert_eq!(update_n_node(0.4, 0.0, 0.2, 0.1, 0.0, 0.1, &T2), 0.2);
        let p = ModelParams { alpha: 1.0, ..zero_rates() };
        let v = update_n_node(0.0, 1.0, 0.0, 0.0, 0.0, 0.01, &p);
        assert!((v - 0.01).abs() < 1e-17);
    }

    #[test]
    fn ceiling_without_growth_is_linear() {
        let p = ModelParams { beta1: 0.0, beta2: 0.0, ..T2 };
        assert!((p.necrosis_ceiling(0.2, 2.0) - (0.2 + 2.0 * p.gronwall_c2())).abs() < 1e-15);
        assert!((T2.gronwall_c1() - 1.6).abs() < 1e-15);
        assert!((T2.gronwall_c2() - 1.6).abs() < 1e-15);
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.0f64..=1.0
    }

    proptest! {
        #[test]
        fn vascular_fraction_in_unit_interval(phi in unit(), t in unit(), k in 0.1f64..10.0) {
            let v = vascular_fraction(phi * k, t * k, k);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn logistic_saturation_cancels(t in unit(), n in unit()) {
            prop_assume!(t + n <= 1.0);
            let phi = 1.0 - t - n;
            let f = reactions(t, n, phi, &T2);
            prop_assert!((f[0] + f[1] + f[2]).abs() <= 1e-14);
        }

        #[test]
        fn continuous_cancellation(t in unit(), n in unit(), phi in unit()) {
            let p = T2;
            let f = reactions(t, n, phi, &p);
            let pv = vascular_fraction(phi, t, p.k);
            let want = (1.0 - (t + n + phi) / p.k)
                * (p.rho * t * pv + p.gamma / p.k * t * hypoxia_factor(pv) * phi);
            prop_assert!((f[0] + f[1] + f[2] - want).abs() <= 1e-14);
        }

        #[test]
        fn discrete_cancellation(tk in unit(), tk1 in unit(), nk in unit(), phik in unit(), phik1 in unit()) {
            let p = ModelParams { rho: 0.0, gamma: 0.0, ..T2 };
            let f = imex_reactions(tk, tk1, nk, phik, phik1, &p);
            prop_assert!((f[0] + f[1] + f[2]).abs() <= 1e-15);

            // with growth switched on only the logistic brackets survive
            let p = T2;
            let f = imex_reactions(tk, tk1, nk, phik, phik1, &p);
            let pv = vascular_fraction(phik, tk, p.k);
            let hyp = hypoxia_factor(pv);
            let logistic = p.rho * pv * (tk * (1.0 - tk1 / p.k) - tk1 * (nk + phik) / p.k)
                + p.gamma * tk1 / p.k * hyp * (phik * (1.0 - phik1 / p.k) - phik1 * (tk + nk) / p.k);
            prop_assert!((f[0] + f[1] + f[2] - logistic).abs() <= 1e-14);
        }

        #[test]
        fn splitting_reproduces_f1(tk in unit(), tk1 in unit(), nk in unit(), phik in unit()) {
            let s = imex_coefficients_t(tk, nk, phik, &T2);
            prop_assert!(s.source >= 0.0 && s.decay >= 0.0);
            let f = imex_reactions(tk, tk1, nk, phik, 0.0, &T2);
            prop_assert!((s.source - s.decay * tk1 - f[0]).abs() <= 1e-14);
        }

        #[test]
        fn nodal_updates_preserve_bounds(
            tk in unit(), tk1 in unit(), nk in 0.0f64..5.0, phik in unit(), dt in 1e-4f64..10.0,
        ) {
            let phi1 = update_phi_node(tk, tk1, nk, phik, dt, &T2);
            prop_assert!((0.0..=T2.k).contains(&phi1));
            let n1 = update_n_node(tk, tk1, nk, phik, phi1, dt, &T2);
            prop_assert!(n1 >= nk);
        }
    }
}
