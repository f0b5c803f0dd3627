//! Constitutive curves for one porous medium and the derived global-pressure
//! transforms, plus the fracture/matrix coupling maps.
//!
//! The built-in curve family is
//!   mobility_w(s) = s^a / mu_w,      mobility_n(s) = (1-s)^b / mu_n,
//!   pc(s)         = pe (1-s)(1 + c s),   0 <= c < 1,
//! which satisfies every structural requirement placed on the curves:
//! pc' < 0 on [0,1], pc(1) = 0, mobilities in [0,1] with a positive total,
//! and a capillary-diffusion coefficient vanishing at both endpoints.

use crate::error::{Error, Result};
use crate::numerics::quad::gauss5;
use crate::numerics::table::MonotoneTable;

/// Number of nodes in the cached transform tables.
const TABLE_NODES: usize = 2049;
/// Endpoint-matching tolerance for the capillary pressure curves of a pair.
const ENDPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediumId {
    Fracture,
    Matrix,
}

impl std::fmt::Display for MediumId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MediumId::Fracture => write!(f, "fracture"),
            MediumId::Matrix => write!(f, "matrix"),
        }
    }
}

/// Parameters of the built-in curve family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub medium: MediumId,
    /// wetting Corey exponent a >= 1
    pub exp_w: f64,
    /// nonwetting Corey exponent b >= 1
    pub exp_n: f64,
    /// wetting viscosity; >= 1 keeps mobilities within [0,1]
    pub mu_w: f64,
    pub mu_n: f64,
    /// entry pressure pe = pc(0), Pa
    pub entry_pressure: f64,
    /// curvature parameter c in [0,1)
    pub shape_c: f64,
}

impl CurveParams {
    pub fn fracture_reference() -> Self {
        CurveParams {
            medium: MediumId::Fracture,
            exp_w: 2.0,
            exp_n: 2.0,
            mu_w: 1.0,
            mu_n: 1.0,
            entry_pressure: 1.0,
            shape_c: 0.0,
        }
    }

    pub fn matrix_reference() -> Self {
        CurveParams {
            medium: MediumId::Matrix,
            exp_w: 2.0,
            exp_n: 2.0,
            mu_w: 1.0,
            mu_n: 1.0,
            entry_pressure: 1.0,
            shape_c: 0.5,
        }
    }

    /// Structural validation; violations are reported with the label of the
    /// assumption they break.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.exp_w >= 1.0 && self.exp_n >= 1.0) {
            v.push(format!(
                "A.5: {} curve exponents must be >= 1 (got a={}, b={})",
                self.medium, self.exp_w, self.exp_n
            ));
        }
        if !(self.mu_w >= 1.0 && self.mu_n >= 1.0) {
            v.push(format!(
                "A.4: {} viscosities must be >= 1 so mobilities stay within [0,1]",
                self.medium
            ));
        }
        if !(self.entry_pressure > 0.0) {
            v.push(format!(
                "A.3: {} entry pressure must be positive",
                self.medium
            ));
        }
        if !(0.0..1.0).contains(&self.shape_c) {
            v.push(format!(
                "A.3: {} shape parameter must lie in [0,1) so pc' < 0 on [0,1]",
                self.medium
            ));
        }
        v
    }
}

/// One medium's curves plus cached transforms. Immutable after construction;
/// shared freely across threads.
#[derive(Debug, Clone)]
pub struct MediumCurves {
    params: CurveParams,
    beta_tab: MonotoneTable,
    gn_tab: MonotoneTable,
    diss_tab: MonotoneTable,
    gn0: f64,
}

impl MediumCurves {
    pub fn new(params: CurveParams) -> Result<Self> {
        let violations = params.validate();
        if !violations.is_empty() {
            return Err(Error::config(violations.join("; ")));
        }
        let alpha = |s: f64| alpha_raw(&params, s);
        let gn_integrand =
            |s: f64| mobility_w_raw(&params, s) / total_raw(&params, s) * pc_prime_raw(&params, s);
        let diss = |s: f64| {
            let lw = mobility_w_raw(&params, s);
            let ln = mobility_n_raw(&params, s);
            (lw * ln / (lw + ln)).sqrt() * pc_prime_raw(&params, s).abs()
        };

        let h = 1.0 / (TABLE_NODES - 1) as f64;
        let mut beta_vals = vec![0.0; TABLE_NODES];
        let mut gn_cum = vec![0.0; TABLE_NODES];
        let mut diss_vals = vec![0.0; TABLE_NODES];
        for k in 1..TABLE_NODES {
            let (a, b) = ((k - 1) as f64 * h, k as f64 * h);
            beta_vals[k] = beta_vals[k - 1] + gauss5(&alpha, a, b);
            gn_cum[k] = gn_cum[k - 1] + gauss5(&gn_integrand, a, b);
            diss_vals[k] = diss_vals[k - 1] + gauss5(&diss, a, b);
        }
        // normalization: G_n(1) = 0, i.e. gn0 = -integral_0^1 of the (negative)
        // integrand, which pins p_w <= P <= p_n with equality at s = 1
        let gn0 = -gn_cum[TABLE_NODES - 1];
        let gn_vals: Vec<f64> = gn_cum.iter().map(|&v| gn0 + v).collect();
        Ok(MediumCurves {
            params,
            beta_tab: MonotoneTable::new(0.0, 1.0, beta_vals),
            gn_tab: MonotoneTable::new(0.0, 1.0, gn_vals),
            diss_tab: MonotoneTable::new(0.0, 1.0, diss_vals),
            gn0,
        })
    }

    pub fn params(&self) -> &CurveParams {
        &self.params
    }

    pub fn medium(&self) -> MediumId {
        self.params.medium
    }

    /// Constant G_n(0) fixed by the normalization G_n(1) = 0.
    pub fn gn0(&self) -> f64 {
        self.gn0
    }

    fn check_saturation(&self, s: f64) -> Result<()> {
        if (0.0..=1.0).contains(&s) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "saturation {s} outside [0,1] for {} curves",
                self.params.medium
            )))
        }
    }

    /// Capillary pressure pc(s), strictly decreasing, pc(1) = 0.
    pub fn pc(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(pc_raw(&self.params, s))
    }

    pub fn pc_prime(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(pc_prime_raw(&self.params, s))
    }

    /// Entry pressure pc(0).
    pub fn pc_max(&self) -> f64 {
        self.params.entry_pressure
    }

    /// Inverse of the capillary pressure curve on [0, pc(0)].
    pub fn pc_inverse(&self, p: f64) -> Result<f64> {
        let p_max = self.pc_max();
        if !(0.0..=p_max + 1e-14 * p_max.max(1.0)).contains(&p) {
            return Err(Error::domain(format!(
                "pressure {p} outside [0, {p_max}] for {} pc inverse",
                self.params.medium
            )));
        }
        let p = p.min(p_max);
        // bisection bracketed on the strictly decreasing curve, Newton polish
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut s = 1.0 - p / p_max;
        for _ in 0..200 {
            let f = pc_raw(&self.params, s) - p;
            if f.abs() <= 1e-14 * p_max.max(1.0) {
                break;
            }
            if f > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let d = pc_prime_raw(&self.params, s);
            let newton = s - f / d;
            s = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(s)
    }

    pub fn mobility_w(&self, s: f64) -> f64 {
        mobility_w_raw(&self.params, s.clamp(0.0, 1.0))
    }

    pub fn mobility_n(&self, s: f64) -> f64 {
        mobility_n_raw(&self.params, s.clamp(0.0, 1.0))
    }

    pub fn mobility_w_prime(&self, s: f64) -> f64 {
        let p = &self.params;
        p.exp_w * s.clamp(0.0, 1.0).powf(p.exp_w - 1.0) / p.mu_w
    }

    pub fn mobility_n_prime(&self, s: f64) -> f64 {
        let p = &self.params;
        -p.exp_n * (1.0 - s.clamp(0.0, 1.0)).powf(p.exp_n - 1.0) / p.mu_n
    }

    pub fn total_mobility(&self, s: f64) -> f64 {
        self.mobility_w(s) + self.mobility_n(s)
    }

    /// Capillary diffusion coefficient alpha(s) = lw ln / (lw+ln) |pc'|.
    pub fn alpha(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(alpha_raw(&self.params, s))
    }

    /// Kirchhoff transform beta(s) = integral of alpha from 0 to s
    /// (table-cached; strictly increasing).
    pub fn beta(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(self.beta_tab.eval(s))
    }

    /// beta(1), the upper end of the Kirchhoff range.
    pub fn beta_end(&self) -> f64 {
        self.beta_tab.last_value()
    }

    /// Table derivative of beta; finite and nonnegative everywhere.
    pub fn beta_deriv(&self, s: f64) -> f64 {
        self.beta_tab.eval_deriv(s.clamp(0.0, 1.0)).max(0.0)
    }

    /// Inverse Kirchhoff transform on [0, beta(1)].
    pub fn beta_inverse(&self, b: f64) -> Result<f64> {
        let end = self.beta_end();
        if !(-1e-14 * end..=end * (1.0 + 1e-14)).contains(&b) {
            return Err(Error::domain(format!(
                "Kirchhoff value {b} outside [0, {end}] for {}",
                self.params.medium
            )));
        }
        self.beta_tab.inverse(b.clamp(0.0, end))
    }

    /// Nonwetting pressure offset G_n(s) = p_n - P; G_n >= 0, G_n(1) = 0.
    pub fn g_n(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(self.gn_tab.eval(s))
    }

    /// Wetting pressure offset G_w(s) = G_n(s) - pc(s); G_w <= 0, G_w(1) = 0.
    pub fn g_w(&self, s: f64) -> Result<f64> {
        Ok(self.g_n(s)? - self.pc(s)?)
    }

    /// Closed-form derivative G_n'(s) = (lw / l) pc'(s).
    pub fn g_n_prime(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(mobility_w_raw(&self.params, s) / total_raw(&self.params, s)
            * pc_prime_raw(&self.params, s))
    }

    /// Closed-form derivative G_w'(s) = -(ln / l) pc'(s).
    pub fn g_w_prime(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(
            -mobility_n_raw(&self.params, s) / total_raw(&self.params, s)
                * pc_prime_raw(&self.params, s),
        )
    }

    /// Integrand of the dissipation transform: sqrt(lw ln / l) |pc'|.
    pub fn dissipation_rate(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        let lw = mobility_w_raw(&self.params, s);
        let ln = mobility_n_raw(&self.params, s);
        Ok((lw * ln / (lw + ln)).sqrt() * pc_prime_raw(&self.params, s).abs())
    }

    /// Dissipation transform (the auxiliary integral entering the energy
    /// identity for the phase-pressure gradients).
    pub fn dissipation_transform(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        Ok(self.diss_tab.eval(s))
    }

    /// Phase pressures from the global pressure: (p_w, p_n) with
    /// p_n - p_w = pc(s) exactly and p_w <= P <= p_n.
    pub fn phase_pressures(&self, p_global: f64, s: f64) -> Result<(f64, f64)> {
        let gn = self.g_n(s)?;
        let pc = pc_raw(&self.params, s);
        Ok((p_global + gn - pc, p_global + gn))
    }

    /// Capillary energy density: integral of pc from 1 to s (nonpositive).
    pub fn energy_density(&self, s: f64) -> Result<f64> {
        self.check_saturation(s)?;
        let p = &self.params;
        // antiderivative of pe (1 + (c-1) u - c u^2)
        let anti = |u: f64| {
            p.entry_pressure * (u + 0.5 * (p.shape_c - 1.0) * u * u - p.shape_c * u * u * u / 3.0)
        };
        Ok(anti(s) - anti(1.0))
    }
}

fn pc_raw(p: &CurveParams, s: f64) -> f64 {
    p.entry_pressure * (1.0 - s) * (1.0 + p.shape_c * s)
}

fn pc_prime_raw(p: &CurveParams, s: f64) -> f64 {
    p.entry_pressure * (p.shape_c - 1.0 - 2.0 * p.shape_c * s)
}

fn mobility_w_raw(p: &CurveParams, s: f64) -> f64 {
    s.powf(p.exp_w) / p.mu_w
}

fn mobility_n_raw(p: &CurveParams, s: f64) -> f64 {
    (1.0 - s).powf(p.exp_n) / p.mu_n
}

fn total_raw(p: &CurveParams, s: f64) -> f64 {
    mobility_w_raw(p, s) + mobility_n_raw(p, s)
}

fn alpha_raw(p: &CurveParams, s: f64) -> f64 {
    let lw = mobility_w_raw(p, s);
    let ln = mobility_n_raw(p, s);
    lw * ln / (lw + ln) * pc_prime_raw(p, s).abs()
}

/// The fracture/matrix curve pair plus the coupling maps between them.
#[derive(Debug, Clone)]
pub struct CurvePair {
    pub fracture: MediumCurves,
    pub matrix: MediumCurves,
    lipschitz_m: f64,
}

impl CurvePair {
    /// Builds the pair, enforcing the shared entry pressure
    /// pc_f(0) = pc_m(0) that the equilibrium map needs.
    pub fn new(fracture: MediumCurves, matrix: MediumCurves) -> Result<Self> {
        let (e_f, e_m) = (fracture.pc_max(), matrix.pc_max());
        if (e_f - e_m).abs() > ENDPOINT_TOL * e_f.max(e_m).max(1.0) {
            return Err(Error::config(format!(
                "A.3: capillary entry pressures differ: pc_f(0) = {e_f}, pc_m(0) = {e_m}"
            )));
        }
        let mut pair = CurvePair {
            fracture,
            matrix,
            lipschitz_m: 0.0,
        };
        pair.lipschitz_m = pair.estimate_lipschitz_m();
        Ok(pair)
    }

    pub fn reference() -> Result<Self> {
        CurvePair::new(
            MediumCurves::new(CurveParams::fracture_reference())?,
            MediumCurves::new(CurveParams::matrix_reference())?,
        )
    }

    pub fn by_id(&self, id: MediumId) -> &MediumCurves {
        match id {
            MediumId::Fracture => &self.fracture,
            MediumId::Matrix => &self.matrix,
        }
    }

    /// True when the two media carry identical constitutive curves, so every
    /// interface between them is transparent.
    pub fn is_transparent(&self) -> bool {
        let (f, m) = (self.fracture.params(), self.matrix.params());
        f.exp_w == m.exp_w
            && f.exp_n == m.exp_n
            && f.mu_w == m.mu_w
            && f.mu_n == m.mu_n
            && f.entry_pressure == m.entry_pressure
            && f.shape_c == m.shape_c
    }

    /// Matrix saturation in capillary equilibrium with fracture saturation S:
    /// the composition pc_m^{-1}(pc_f(S)). Monotone, fixes 0 and 1.
    pub fn equilibrium_saturation(&self, s_fracture: f64) -> Result<f64> {
        let p = self.fracture.pc(s_fracture)?;
        self.matrix.pc_inverse(p)
    }

    /// Derivative of the equilibrium map, pc_f'(S) / pc_m'(P(S)).
    pub fn equilibrium_saturation_prime(&self, s_fracture: f64) -> Result<f64> {
        let sm = self.equilibrium_saturation(s_fracture)?;
        Ok(self.fracture.pc_prime(s_fracture)? / self.matrix.pc_prime(sm)?)
    }

    /// Fracture saturation in equilibrium with matrix saturation s (the
    /// reverse composition).
    pub fn equilibrium_saturation_rev(&self, s_matrix: f64) -> Result<f64> {
        let p = self.matrix.pc(s_matrix)?;
        self.fracture.pc_inverse(p)
    }

    /// Kirchhoff-level coupling map taking fracture beta values to matrix
    /// beta values: beta_m(P(beta_f^{-1}(b))).
    pub fn kirchhoff_coupling(&self, b: f64) -> Result<f64> {
        let end = self.fracture.beta_end();
        if !(-1e-14 * end..=end * (1.0 + 1e-14)).contains(&b) {
            return Err(Error::domain(format!(
                "Kirchhoff coupling input {b} outside [0, {end}]"
            )));
        }
        let s_f = self.fracture.beta_inverse(b.clamp(0.0, end))?;
        let s_m = self.equilibrium_saturation(s_f)?;
        self.matrix.beta(s_m)
    }

    /// Lipschitz bound of the Kirchhoff coupling map, estimated by dense
    /// chord sampling at construction.
    pub fn lipschitz_m(&self) -> f64 {
        self.lipschitz_m
    }

    fn estimate_lipschitz_m(&self) -> f64 {
        let n = 2048;
        let end = self.fracture.beta_end();
        let mut prev = 0.0;
        let mut max_slope: f64 = 0.0;
        for k in 1..=n {
            let b = end * k as f64 / n as f64;
            let m = self.kirchhoff_coupling(b).unwrap_or(prev);
            max_slope = max_slope.max((m - prev) / (end / n as f64));
            prev = m;
        }
        max_slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quad::adaptive_simpson;

    fn fracture() -> MediumCurves {
        MediumCurves::new(CurveParams::fracture_reference()).unwrap()
    }

    fn matrix() -> MediumCurves {
        MediumCurves::new(CurveParams::matrix_reference()).unwrap()
    }

    #[test]
    fn pc_evaluates_the_reference_curves() {
        // pc(1) = 0 for any medium
        assert_eq!(fracture().pc(1.0).unwrap(), 0.0);
        assert_eq!(matrix().pc(1.0).unwrap(), 0.0);
        // linear fracture curve 1 - s
        assert!((fracture().pc(0.25).unwrap() - 0.75).abs() < 1e-15);
        // matrix curve (1-s)(1+s/2) at 0.5: 0.5 * 1.25
        assert!((matrix().pc(0.5).unwrap() - 0.625).abs() < 1e-15);
        assert!(fracture().pc(-0.1).is_err());
        assert!(fracture().pc(1.1).is_err());
    }

    #[test]
    fn pc_is_strictly_decreasing() {
        let m = matrix();
        let mut prev = m.pc(0.0).unwrap();
        for k in 1..=100 {
            let cur = m.pc(k as f64 / 100.0).unwrap();
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn pc_inverse_round_trips() {
        let f = fracture();
        assert!((f.pc_inverse(0.0).unwrap() - 1.0).abs() < 1e-13);
        let m = matrix();
        assert!(m.pc_inverse(1.0).unwrap().abs() < 1e-13);
        // (1-s)(1+s/2) = 0.5 via the bisection oracle below
        let target = 0.5;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if (1.0 - mid) * (1.0 + 0.5 * mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let got = m.pc_inverse(target).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((m.pc(got).unwrap() - target).abs() < 1e-12);
        assert!(m.pc_inverse(1.5).is_err());
        assert!(m.pc_inverse(-0.1).is_err());
    }

    #[test]
    fn alpha_vanishes_at_endpoints_and_beta_starts_at_zero() {
        for curves in [fracture(), matrix()] {
            assert_eq!(curves.alpha(0.0).unwrap(), 0.0);
            assert_eq!(curves.alpha(1.0).unwrap(), 0.0);
            assert_eq!(curves.beta(0.0).unwrap(), 0.0);
            for k in 1..100 {
                assert!(curves.alpha(k as f64 / 100.0).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn beta_end_matches_independent_quadratures() {
        // two independent oracles for integral_0^1 s^2 (1-s)^2 / (s^2 + (1-s)^2) ds
        let integrand = |s: f64| s * s * (1.0 - s) * (1.0 - s) / (s * s + (1.0 - s) * (1.0 - s));
        let oracle_a = adaptive_simpson(&integrand, 0.0, 1.0, 1e-14);
        // composite Gauss on a shifted partition as the second method
        let mut oracle_b = 0.0;
        let panels = 4096;
        for k in 0..panels {
            oracle_b += gauss5(
                &integrand,
                k as f64 / panels as f64,
                (k + 1) as f64 / panels as f64,
            );
        }
        assert!((oracle_a - oracle_b).abs() < 1e-12);
        // frozen regression constant computed from the two agreeing oracles
        let b_f = 0.059_365_748_365_390_82;
        assert!((oracle_a - b_f).abs() < 1e-10);
        assert!((fracture().beta_end() - b_f).abs() < 1e-10);
    }

    #[test]
    fn beta_inverse_round_trips_through_the_table() {
        let f = fracture();
        assert_eq!(f.beta_inverse(0.0).unwrap(), 0.0);
        assert!((f.beta_inverse(f.beta_end()).unwrap() - 1.0).abs() < 1e-12);
        let b = f.beta(0.37).unwrap();
        assert!((f.beta_inverse(b).unwrap() - 0.37).abs() < 1e-8);
        for k in 0..=40 {
            let b = f.beta_end() * k as f64 / 40.0;
            let s = f.beta_inverse(b).unwrap();
            assert!((f.beta(s).unwrap() - b).abs() < 1e-10);
        }
        assert!(f.beta_inverse(f.beta_end() * 1.01).is_err());
    }

    #[test]
    fn pressure_offsets_respect_the_sandwich() {
        for curves in [fracture(), matrix()] {
            assert!(curves.g_n(1.0).unwrap().abs() < 1e-14);
            assert!(curves.g_w(1.0).unwrap().abs() < 1e-14);
            for k in 0..=100 {
                let s = k as f64 / 100.0;
                assert!(curves.g_n(s).unwrap() >= -1e-14);
                assert!(curves.g_w(s).unwrap() <= 1e-14);
            }
        }
    }

    #[test]
    fn g_w_matches_quadrature_oracle() {
        // G_w(s) = -integral_s^1 (ln/l)|pc'|; fracture curves at s = 0.5
        let p = CurveParams::fracture_reference();
        let integrand =
            |s: f64| mobility_n_raw(&p, s) / total_raw(&p, s) * pc_prime_raw(&p, s).abs();
        let oracle = -adaptive_simpson(&integrand, 0.5, 1.0, 1e-14);
        let got = fracture().g_w(0.5).unwrap();
        assert!((got - oracle).abs() < 1e-9);
        assert!(got <= 0.0);
    }

    #[test]
    fn phase_pressures_reproduce_pc_exactly() {
        let f = fracture();
        let (pw, pn) = f.phase_pressures(5.0, 1.0).unwrap();
        assert!((pw - 5.0).abs() < 1e-14 && (pn - 5.0).abs() < 1e-14);
        // gn0 by quadrature oracle: p_n(0) = gn0, p_w(0) = gn0 - pc(0)
        let p = CurveParams::fracture_reference();
        let gn0_oracle = adaptive_simpson(
            &|s: f64| mobility_w_raw(&p, s) / total_raw(&p, s) * pc_prime_raw(&p, s).abs(),
            0.0,
            1.0,
            1e-14,
        );
        let (pw0, pn0) = f.phase_pressures(0.0, 0.0).unwrap();
        assert!((pn0 - gn0_oracle).abs() < 1e-9);
        assert!((pw0 - (gn0_oracle - 1.0)).abs() < 1e-9);
        // identity p_n - p_w = pc(s) under scrambled inputs
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..100 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let s = (state >> 11) as f64 / (1u64 << 53) as f64;
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let pg = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 20.0;
            let (pw, pn) = f.phase_pressures(pg, s).unwrap();
            assert!((pn - pw - f.pc(s).unwrap()).abs() <= 1e-12);
            assert!(pw <= pg + 1e-12 && pg <= pn + 1e-12);
        }
    }

    #[test]
    fn derivative_relations_hold_against_finite_differences() {
        let f = fracture();
        let h = 1e-6;
        for k in 1..50 {
            let s = k as f64 / 50.0 * 0.96 + 0.02;
            let fd_gw = (f.g_w(s + h).unwrap() - f.g_w(s - h).unwrap()) / (2.0 * h);
            let fd_gn = (f.g_n(s + h).unwrap() - f.g_n(s - h).unwrap()) / (2.0 * h);
            let a = f.alpha(s).unwrap();
            assert!((f.mobility_w(s) * fd_gw - a).abs() < 1e-5);
            assert!((f.mobility_n(s) * fd_gn + a).abs() < 1e-5);
        }
    }

    #[test]
    fn dissipation_transform_matches_quadrature() {
        // the transform integrand is sqrt(lw ln / l) |pc'|; cross-check the
        // cached integral against an independent adaptive quadrature
        let p = CurveParams::matrix_reference();
        let integrand = |s: f64| {
            let lw = mobility_w_raw(&p, s);
            let ln = mobility_n_raw(&p, s);
            (lw * ln / (lw + ln)).sqrt() * pc_prime_raw(&p, s).abs()
        };
        let m = matrix();
        for &s in &[0.25, 0.5, 0.9, 1.0] {
            let oracle = adaptive_simpson(&integrand, 0.0, s, 1e-13);
            let got = m.dissipation_transform(s).unwrap();
            assert!((got - oracle).abs() < 1e-8, "s={s}: {got} vs {oracle}");
        }
        assert_eq!(m.dissipation_transform(0.0).unwrap(), 0.0);
        // rate endpoints vanish with the mobilities
        assert_eq!(m.dissipation_rate(0.0).unwrap(), 0.0);
        assert_eq!(m.dissipation_rate(1.0).unwrap(), 0.0);
    }

    #[test]
    fn energy_density_is_nonpositive_and_monotone() {
        let f = fracture();
        assert_eq!(f.energy_density(1.0).unwrap(), 0.0);
        // fracture pc = 1-s: integral_1^0 (1-u) du = -1/2
        assert!((f.energy_density(0.0).unwrap() + 0.5).abs() < 1e-14);
        let mut prev = f.energy_density(0.0).unwrap();
        for k in 1..=50 {
            let cur = f.energy_density(k as f64 / 50.0).unwrap();
            assert!(cur >= prev - 1e-14);
            assert!(cur <= 1e-14);
            prev = cur;
        }
        // cross-check against quadrature
        let oracle = -adaptive_simpson(&|u: f64| (1.0 - u) * (1.0 + 0.0 * u), 0.3, 1.0, 1e-14);
        assert!((f.energy_density(0.3).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_map_has_the_closed_form_for_reference_curves() {
        let pair = CurvePair::reference().unwrap();
        assert!(pair.equilibrium_saturation(0.0).unwrap().abs() < 1e-12);
        assert!((pair.equilibrium_saturation(1.0).unwrap() - 1.0).abs() < 1e-12);
        // inverting (1-s)(1+s/2) = 1-S gives (-1 + sqrt(1+8S))/2
        for k in 0..=100 {
            let s_big = k as f64 / 100.0;
            let closed = 0.5 * (-1.0 + (1.0 + 8.0 * s_big).sqrt());
            let got = pair.equilibrium_saturation(s_big).unwrap();
            assert!((got - closed).abs() < 1e-12, "S={s_big}");
        }
        assert!((pair.equilibrium_saturation(0.5).unwrap() - 0.618_033_988_7).abs() < 1e-9);
    }

    #[test]
    fn equilibrium_map_is_strictly_increasing() {
        let pair = CurvePair::reference().unwrap();
        let mut prev = -1.0;
        for k in 0..=200 {
            let v = pair.equilibrium_saturation(k as f64 / 200.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn kirchhoff_coupling_fixes_endpoints_and_composes() {
        let pair = CurvePair::reference().unwrap();
        assert!(pair.kirchhoff_coupling(0.0).unwrap().abs() < 1e-12);
        let top = pair.kirchhoff_coupling(pair.fracture.beta_end()).unwrap();
        assert!((top - pair.matrix.beta_end()).abs() < 1e-10);
        // composition consistency M(beta_f(s)) = beta_m(P(s))
        for k in 0..50 {
            let s = (k as f64 + 0.5) / 50.0;
            let lhs = pair
                .kirchhoff_coupling(pair.fracture.beta(s).unwrap())
                .unwrap();
            let rhs = pair
                .matrix
                .beta(pair.equilibrium_saturation(s).unwrap())
                .unwrap();
            assert!((lhs - rhs).abs() < 1e-9, "s={s}");
        }
        assert!(pair.kirchhoff_coupling(-0.01).is_err());
        assert!(pair
            .kirchhoff_coupling(pair.fracture.beta_end() + 0.01)
            .is_err());
    }

    #[test]
    fn lipschitz_bound_is_finite_and_positive() {
        let pair = CurvePair::reference().unwrap();
        let l = pair.lipschitz_m();
        assert!(l.is_finite() && l > 0.0);
    }

    #[test]
    fn mismatched_entry_pressures_are_rejected() {
        let f = MediumCurves::new(CurveParams::fracture_reference()).unwrap();
        let mut mp = CurveParams::matrix_reference();
        mp.entry_pressure = 1.5;
        let m = MediumCurves::new(mp).unwrap();
        assert!(matches!(CurvePair::new(f, m), Err(Error::Config(_))));
    }

    #[test]
    fn holder_round_trip_of_beta_inverse() {
        // fit |beta^-1(b1) - beta^-1(b2)| <= C |b1-b2|^gamma on dense samples
        let f = fracture();
        let end = f.beta_end();
        let n = 400;
        let mut worst_c: f64 = 0.0;
        let gamma = 1.0 / 3.0; // alpha vanishes quadratically at the endpoints
        for k in 0..n {
            let b1 = end * k as f64 / n as f64;
            let b2 = end * (k + 1) as f64 / n as f64;
            let ds = (f.beta_inverse(b2).unwrap() - f.beta_inverse(b1).unwrap()).abs();
            worst_c = worst_c.max(ds / (b2 - b1).powf(gamma));
        }
        assert!(worst_c.is_finite() && worst_c < 20.0);
    }
}
