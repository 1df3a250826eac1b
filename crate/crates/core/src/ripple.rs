//! Periodic traveling waves on the optical resonance.
//!
//! A supersonic localized core forces a resonance where the optical branch
//! phase speed matches the wave speed: ξ̃_{c_ε}(εK) = −c_ε²ε²K² + λ̃₊(εK)
//! vanishes at K = K_ε. The system therefore carries an exact family of
//! small periodic waves a·φ^a(ωX), ω = K_ε + t^a, with
//! φ = ν + ψ, ν = (0, sin Y). The unknowns (ψ₁, ψ₂, t) are a fixed point of
//! the three maps
//!
//!   Ψ₁: ψ₁(m) ← −a ϖ̃^ε(ωm) b̂₁(m)
//!   Ψ₂: ψ₂(m) ← −a ε² λ̃₊(εωm) b̂₂(m) / ξ̃_{c_ε}(εωm),  modes ±1 projected out
//!   Ψ₃: t ← −(ε/ξ̃′) R_ε(εt) t² − (2iεa/ξ̃′) λ̃₊(εω) b̂₂(1)
//!
//! where b̂ are the coefficients of the diagonalized bilinear map at the
//! current iterate and R_ε is the second-order remainder of ξ̃ about εK_ε.
//! The maps contract for small |a|; the mode-±1 projection plus the scalar
//! t-equation replace the non-invertible directions of ξ̃.

use num_complex::Complex64;

use crate::field::PeriodicFieldCoeffs;
use crate::params::{zone_edge_distance, DimerParams, KcRoot};
use crate::{defaults, tol, CoreError, Result};

type C64 = Complex64;

/// Spec-level wrapper: the scaled resonance frequency with its root
/// certification.
pub fn find_k_eps(p: &DimerParams) -> Result<KcRoot> {
    p.find_k_eps()
}

/// Solver configuration; the amplitude cap mirrors the smallness constraint
/// of the underlying contraction argument and is deliberately configurable.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RippleConfig {
    pub m_max: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub a_max: f64,
}

impl Default for RippleConfig {
    fn default() -> Self {
        Self {
            m_max: defaults::RIPPLE_M_MAX,
            tol: tol::RIPPLE_FIXED_POINT,
            max_iter: defaults::RIPPLE_MAX_ITER,
            a_max: 1e-2,
        }
    }
}

/// Converged periodic wave at amplitude a.
#[derive(Debug, Clone)]
pub struct RippleSolution {
    pub a: f64,
    /// Base resonance frequency K_ε.
    pub k_eps: f64,
    /// Frequency correction t^a.
    pub t_shift: f64,
    /// Actual wave frequency ω = K_ε + t^a.
    pub k_eps_a: f64,
    /// Corrections ψ = φ − ν, fundamental ω (ψ₁ even, ψ₂ odd).
    pub psi: (PeriodicFieldCoeffs, PeriodicFieldCoeffs),
    /// Full profile φ = ν + ψ.
    pub phi: (PeriodicFieldCoeffs, PeriodicFieldCoeffs),
    pub iterations: usize,
    /// Sup-norm of the periodic traveling-wave equation on the solution.
    pub residual: f64,
    /// Iterate-to-iterate update-norm ratios.
    pub contraction_history: Vec<f64>,
    /// Largest parity/realness defect removed by projection during iteration.
    pub max_parity_defect: f64,
}

/// Flat JSON view of a solution.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RippleReport {
    pub a: f64,
    pub k_eps: f64,
    pub t_shift: f64,
    pub k_eps_a: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl RippleSolution {
    pub fn report(&self) -> RippleReport {
        RippleReport {
            a: self.a,
            k_eps: self.k_eps,
            t_shift: self.t_shift,
            k_eps_a: self.k_eps_a,
            residual: self.residual,
            iterations: self.iterations,
        }
    }
}

/// Shared evaluation context: the resonance root and the measured expansion
/// of ξ̃ about it.
#[derive(Debug, Clone)]
pub struct RippleContext {
    pub p: DimerParams,
    pub k_eps: f64,
    /// Measured ξ̃_{c_ε}(εK_ε) (bisection leftover, ~1e−13).
    pub xi_at_root: f64,
    /// Central-difference ξ̃′_{c_ε}(εK_ε).
    pub xi_prime: f64,
    /// Analytic ξ̃″_{c_ε}(εK_ε).
    pub xi_second: f64,
}

impl RippleContext {
    pub fn new(p: &DimerParams) -> Result<Self> {
        let root = p.find_k_eps()?;
        let k_phys = p.eps * root.kc;
        Ok(Self {
            p: *p,
            k_eps: root.kc,
            xi_at_root: p.xi_c(k_phys, p.c_eps),
            xi_prime: p.xi_prime_central(k_phys, p.c_eps),
            xi_second: p.xi_second_analytic(k_phys, p.c_eps),
        })
    }

    /// Quadratic remainder of ξ̃ about the resonance:
    /// ξ̃(εK_ε + τ) = ξ̃(εK_ε) + ξ̃′τ + R_ε(τ)τ², with the τ → 0 limit ξ̃″/2.
    pub fn r_eps(&self, tau: f64) -> f64 {
        if tau.abs() < tol::R_EPS_TAU_LIMIT {
            return 0.5 * self.xi_second;
        }
        let xi = self.p.xi_c(self.p.eps * self.k_eps + tau, self.p.c_eps);
        (xi - self.xi_at_root - self.xi_prime * tau) / (tau * tau)
    }

    fn guard_edge(&self, k: f64) -> Result<()> {
        let d = zone_edge_distance(k);
        if d < 1e-8 {
            return Err(CoreError::ZoneEdgeResonance { freq: k, dist: d });
        }
        Ok(())
    }

    /// Coefficients of the diagonalized bilinear map of (φ, φ) at frequency ω,
    /// on modes −2M..2M.
    pub fn b_hat(
        &self,
        phi: &(PeriodicFieldCoeffs, PeriodicFieldCoeffs),
        omega: f64,
    ) -> Result<(PeriodicFieldCoeffs, PeriodicFieldCoeffs)> {
        let p = &self.p;
        let m_max = phi.0.m_max;
        let mut pp = PeriodicFieldCoeffs::zeros(omega, m_max);
        let mut mm = PeriodicFieldCoeffs::zeros(omega, m_max);
        for m in -(m_max as i64)..=(m_max as i64) {
            let k = p.eps * omega * m as f64;
            let (sum, diff) = (phi.0.get(m) + phi.1.get(m), phi.0.get(m) - phi.1.get(m));
            pp.set(m, p.gamma(k) * p.beta(k) * sum);
            mm.set(m, p.gamma(k) * C64::new(p.rho(k), 0.0) * diff);
        }
        let pp2 = pp.product(&pp);
        let mm2 = mm.product(&mm);
        let big = pp2.m_max;
        let mut b1 = PeriodicFieldCoeffs::zeros(omega, big);
        let mut b2 = PeriodicFieldCoeffs::zeros(omega, big);
        for m in -(big as i64)..=(big as i64) {
            let k = p.eps * omega * m as f64;
            self.guard_edge(k)?;
            let (sp, sm) = (p.s_plus(k), p.s_minus(k));
            b1.set(m, sp * pp2.get(m) + sm * mm2.get(m));
            b2.set(m, sp * pp2.get(m) - sm * mm2.get(m));
        }
        Ok((b1, b2))
    }

    /// One application of (Ψ₁, Ψ₂, Ψ₃) at amplitude a. Returns the new state
    /// and the parity defect it projected away.
    pub fn psi_map(
        &self,
        psi: &(PeriodicFieldCoeffs, PeriodicFieldCoeffs),
        t: f64,
        a: f64,
    ) -> Result<((PeriodicFieldCoeffs, PeriodicFieldCoeffs), f64, f64)> {
        let p = &self.p;
        let m_max = psi.0.m_max;
        let omega = self.k_eps + t;
        let phi = phi_from_psi(psi, omega);
        let (b1, b2) = self.b_hat(&phi, omega)?;

        let mut psi1 = PeriodicFieldCoeffs::zeros(omega, m_max);
        let mut psi2 = PeriodicFieldCoeffs::zeros(omega, m_max);
        for m in -(m_max as i64)..=(m_max as i64) {
            let k = p.eps * omega * m as f64;
            psi1.set(m, -a * p.varpi_eps(omega * m as f64) * b1.get(m));
            if m.unsigned_abs() != 1 {
                let xi = p.xi_c(k, p.c_eps);
                if xi.abs() < tol::RIPPLE_SMALL_DIVISOR {
                    return Err(CoreError::SmallDivisor {
                        mode: m,
                        value: xi,
                    });
                }
                psi2.set(
                    m,
                    -a * p.eps * p.eps * p.lambda_plus(k) * b2.get(m) / xi,
                );
            }
        }
        let k1 = p.eps * omega;
        let t_update = C64::new(-p.eps / self.xi_prime * self.r_eps(p.eps * t) * t * t, 0.0)
            - C64::new(0.0, 2.0 * p.eps * a / self.xi_prime) * p.lambda_plus(k1) * b2.get(1);
        if t_update.im.abs() > 1e-10 * (1.0 + t_update.re.abs()) {
            return Err(CoreError::Parity(format!(
                "frequency update has imaginary part {:e} (bilinear coefficients \
                 lost realness)",
                t_update.im
            )));
        }
        let defect = project_parity(&mut psi1, &mut psi2);
        Ok(((psi1, psi2), t_update.re, defect))
    }

    /// Sup-norm of the periodic traveling-wave equation on a candidate
    /// (evaluated mode-wise on −2M..2M, then on a fine phase grid).
    pub fn residual(
        &self,
        phi: &(PeriodicFieldCoeffs, PeriodicFieldCoeffs),
        t: f64,
        a: f64,
    ) -> Result<f64> {
        let p = &self.p;
        let omega = self.k_eps + t;
        let (b1, b2) = self.b_hat(phi, omega)?;
        let big = b1.m_max;
        let mut res1 = PeriodicFieldCoeffs::zeros(omega, big);
        let mut res2 = PeriodicFieldCoeffs::zeros(omega, big);
        for m in -(big as i64)..=(big as i64) {
            let k = p.eps * omega * m as f64;
            res1.set(
                m,
                a * phi.0.get(m) + a * a * p.varpi_eps(omega * m as f64) * b1.get(m),
            );
            res2.set(
                m,
                a * p.xi_c(k, p.c_eps) * phi.1.get(m)
                    + a * a * p.eps * p.eps * p.lambda_plus(k) * b2.get(m),
            );
        }
        Ok(res1.sup_norm_sampled(512).max(res2.sup_norm_sampled(512)))
    }
}

/// φ = ν + ψ with ν = (0, sin Y).
pub fn phi_from_psi(
    psi: &(PeriodicFieldCoeffs, PeriodicFieldCoeffs),
    omega: f64,
) -> (PeriodicFieldCoeffs, PeriodicFieldCoeffs) {
    let mut phi1 = psi.0.clone();
    let mut phi2 = psi.1.clone();
    phi1.k_fund = omega;
    phi2.k_fund = omega;
    phi2.set(1, phi2.get(1) + C64::new(0.0, -0.5));
    phi2.set(-1, phi2.get(-1) + C64::new(0.0, 0.5));
    (phi1, phi2)
}

/// Project ψ₁ onto even-real and ψ₂ onto odd-real coefficient symmetry;
/// returns the largest defect removed.
fn project_parity(psi1: &mut PeriodicFieldCoeffs, psi2: &mut PeriodicFieldCoeffs) -> f64 {
    let mut defect: f64 = 0.0;
    let m_max = psi1.m_max as i64;
    for m in 0..=m_max {
        // Even real function: coefficients real and symmetric in m.
        let avg = 0.5 * (psi1.get(m) + psi1.get(-m).conj());
        let proj = C64::new(0.5 * (avg.re + avg.conj().re), 0.0);
        defect = defect.max((psi1.get(m) - proj).norm());
        defect = defect.max((psi1.get(-m) - proj).norm());
        psi1.set(m, proj);
        psi1.set(-m, proj);
        // Odd real function: coefficients purely imaginary, antisymmetric.
        let y = 0.5 * (psi2.get(m).im - psi2.get(-m).im);
        let proj_p = C64::new(0.0, y);
        defect = defect.max((psi2.get(m) - proj_p).norm());
        defect = defect.max((psi2.get(-m) + proj_p).norm());
        psi2.set(m, proj_p);
        psi2.set(-m, -proj_p);
    }
    // Odd functions have no mean.
    psi2.set(0, C64::new(0.0, 0.0));
    defect
}

fn state_distance(
    a: &(PeriodicFieldCoeffs, PeriodicFieldCoeffs),
    ta: f64,
    b: &(PeriodicFieldCoeffs, PeriodicFieldCoeffs),
    tb: f64,
) -> f64 {
    let mut d = (ta - tb).abs();
    for m in -(a.0.m_max as i64)..=(a.0.m_max as i64) {
        d = d.max((a.0.get(m) - b.0.get(m)).norm());
        d = d.max((a.1.get(m) - b.1.get(m)).norm());
    }
    d
}

/// Iterate the three maps from the zero state to the periodic wave at
/// amplitude a.
pub fn solve_ripple(a: f64, p: &DimerParams, cfg: &RippleConfig) -> Result<RippleSolution> {
    if a.abs() > cfg.a_max {
        return Err(CoreError::InvalidParams(format!(
            "ripple amplitude |{a}| exceeds the configured cap {}",
            cfg.a_max
        )));
    }
    let ctx = RippleContext::new(p)?;
    let mut psi = (
        PeriodicFieldCoeffs::zeros(ctx.k_eps, cfg.m_max),
        PeriodicFieldCoeffs::zeros(ctx.k_eps, cfg.m_max),
    );
    let mut t = 0.0;
    let mut history: Vec<f64> = Vec::new();
    let mut updates: Vec<f64> = Vec::new();
    let mut max_defect: f64 = 0.0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (new_psi, new_t, defect) = ctx.psi_map(&psi, t, a)?;
        max_defect = max_defect.max(defect);
        let update = state_distance(&new_psi, new_t, &psi, t);
        if let Some(&prev) = updates.last() {
            if prev > 0.0 {
                history.push(update / prev);
            }
        }
        updates.push(update);
        psi = new_psi;
        t = new_t;
        if update < cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(CoreError::MaxIter {
                max_iter: cfg.max_iter,
                last_update: update,
            });
        }
    }
    let omega = ctx.k_eps + t;
    let phi = phi_from_psi(&psi, omega);
    let residual = ctx.residual(&phi, t, a)?;
    Ok(RippleSolution {
        a,
        k_eps: ctx.k_eps,
        t_shift: t,
        k_eps_a: omega,
        psi,
        phi,
        iterations,
        residual,
        contraction_history: history,
        max_parity_defect: max_defect,
    })
}

/// Internal consistency probe: solve at the configured truncation and at
/// twice it; returns the largest coefficient discrepancy on common modes.
pub fn truncation_gap(a: f64, p: &DimerParams, cfg: &RippleConfig) -> Result<f64> {
    let lo = solve_ripple(a, p, cfg)?;
    let hi_cfg = RippleConfig {
        m_max: 2 * cfg.m_max,
        ..cfg.clone()
    };
    let hi = solve_ripple(a, p, &hi_cfg)?;
    let mut gap = (lo.t_shift - hi.t_shift).abs();
    for m in -(cfg.m_max as i64)..=(cfg.m_max as i64) {
        gap = gap.max((lo.psi.0.get(m) - hi.psi.0.get(m)).norm());
        gap = gap.max((lo.psi.1.get(m) - hi.psi.1.get(m)).norm());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(eps: f64) -> DimerParams {
        DimerParams::new(2.0, eps).unwrap()
    }

    #[test]
    fn k_eps_stays_in_bracket_and_tends_to_sonic_root() {
        let mut prev_gap = f64::INFINITY;
        for &eps in &[0.2, 0.1, 0.05, 0.025] {
            let p = params(eps);
            let root = find_k_eps(&p).unwrap();
            assert!(root.residual < 1e-11);
            let k_phys = eps * root.kc;
            let (lo, hi) = (
                (2.0 * p.w).sqrt() / p.c_eps,
                (2.0 + 2.0 * p.w).sqrt() / p.c_eps,
            );
            assert!(k_phys >= lo && k_phys <= hi, "eps={eps}: {k_phys} outside [{lo},{hi}]");
            // εK_ε approaches the sonic-speed root as ε → 0.
            let sonic = p.find_kc(p.c_w).unwrap().kc;
            let gap = (k_phys - sonic).abs();
            assert!(gap < prev_gap, "eps={eps}: gap {gap} did not shrink");
            prev_gap = gap;
        }
    }

    #[test]
    fn r_eps_limit_and_reconstruction() {
        let p = params(0.1);
        let ctx = RippleContext::new(&p).unwrap();
        let k0 = p.eps * ctx.k_eps;
        // Independent second-derivative oracle by central difference; h is
        // kept large enough that the 1/h² roundoff amplification stays below
        // the comparison tolerance.
        let h = 1e-4;
        let oracle = (p.xi_c(k0 + h, p.c_eps) - 2.0 * p.xi_c(k0, p.c_eps)
            + p.xi_c(k0 - h, p.c_eps))
            / (h * h);
        assert!((ctx.r_eps(0.0) - 0.5 * oracle).abs() < 1e-6);
        // Exact reconstruction away from the series switch.
        for i in 0..20 {
            let tau = -1.0 + 2.0 * (i as f64 + 0.5) / 20.0;
            let lhs = ctx.xi_prime * tau + ctx.r_eps(tau) * tau * tau;
            let rhs = p.xi_c(k0 + tau, p.c_eps) - ctx.xi_at_root;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn r_eps_uniformly_bounded_as_eps_shrinks() {
        let mut sups = Vec::new();
        for &eps in &[0.2, 0.1, 0.05] {
            let ctx = RippleContext::new(&params(eps)).unwrap();
            let mut sup: f64 = 0.0;
            for i in 0..=200 {
                let tau = -1.0 + i as f64 / 100.0;
                sup = sup.max(ctx.r_eps(tau).abs());
            }
            sups.push(sup);
        }
        for &s in &sups {
            assert!(s < 20.0, "remainder bound blew up: {sups:?}");
        }
        assert!(sups[2] < 2.0 * sups[0] + 1.0, "{sups:?}");
    }

    #[test]
    fn psi_map_fixes_zero_at_zero_amplitude() {
        let p = params(0.1);
        let ctx = RippleContext::new(&p).unwrap();
        let zero = (
            PeriodicFieldCoeffs::zeros(ctx.k_eps, 8),
            PeriodicFieldCoeffs::zeros(ctx.k_eps, 8),
        );
        let (psi, t, _) = ctx.psi_map(&zero, 0.0, 0.0).unwrap();
        assert_eq!(t, 0.0);
        assert!(psi.0.sup_coeff() == 0.0 && psi.1.sup_coeff() == 0.0);
    }

    #[test]
    fn trivial_solution_at_zero_amplitude() {
        let p = params(0.1);
        let sol = solve_ripple(0.0, &p, &RippleConfig::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.t_shift, 0.0);
        assert!(sol.psi.0.sup_coeff() == 0.0 && sol.psi.1.sup_coeff() == 0.0);
        assert!(sol.residual < 1e-30);
    }

    #[test]
    fn converged_ripple_certifies_equation_residual() {
        let p = params(0.1);
        for &a in &[1e-3, 1e-2] {
            let sol = solve_ripple(a, &p, &RippleConfig::default()).unwrap();
            assert!(sol.iterations <= 50, "a={a}: {} iterations", sol.iterations);
            assert!(sol.residual < 1e-9, "a={a}: residual {:e}", sol.residual);
            // Orthogonality: mode ±1 of ψ₂ removed exactly.
            assert_eq!(sol.psi.1.get(1), C64::new(0.0, 0.0));
            assert_eq!(sol.psi.1.get(-1), C64::new(0.0, 0.0));
            // Parity: ψ₁ even real, ψ₂ odd imaginary.
            assert!(sol.psi.0.realness_defect() < 1e-14);
            assert!(sol.psi.1.realness_defect() < 1e-14);
            assert!(sol.max_parity_defect < 1e-12 * a.max(1e-6));
            // Contraction.
            for &r in &sol.contraction_history {
                assert!(r < 0.9, "a={a}: contraction ratio {r}");
            }
        }
    }

    #[test]
    fn correction_size_linear_in_amplitude() {
        let p = params(0.1);
        let cfg = RippleConfig::default();
        let mut pts = Vec::new();
        for &a in &[1e-2, 1e-3, 1e-4] {
            let sol = solve_ripple(a, &p, &cfg).unwrap();
            let norm = sol.psi.0.sup_coeff().max(sol.psi.1.sup_coeff());
            pts.push((a.ln(), norm.ln()));
        }
        let slope = (pts[0].1 - pts[2].1) / (pts[0].0 - pts[2].0);
        assert!((slope - 1.0).abs() < 0.1, "fitted slope {slope}");
        // Lipschitz difference quotient stays bounded across scales.
        let s1 = solve_ripple(1e-2, &p, &cfg).unwrap();
        let s2 = solve_ripple(5e-3, &p, &cfg).unwrap();
        let num = {
            let mut d: f64 = 0.0;
            for m in -(cfg.m_max as i64)..=(cfg.m_max as i64) {
                d = d.max((s1.psi.0.get(m) - s2.psi.0.get(m)).norm());
                d = d.max((s1.psi.1.get(m) - s2.psi.1.get(m)).norm());
            }
            d
        };
        assert!(num / 5e-3 < 10.0, "Lipschitz quotient {}", num / 5e-3);
    }

    #[test]
    fn spectral_tail_decays_geometrically() {
        let p = params(0.1);
        let sol = solve_ripple(1e-2, &p, &RippleConfig::default()).unwrap();
        let mag = |m: i64| sol.phi.1.get(m).norm().max(sol.phi.0.get(m).norm());
        // Fit log-magnitude slope on modes 2..6.
        let mut num = 0.0;
        let mut den = 0.0;
        let base = mag(2).ln();
        for m in 3..=6 {
            num += (mag(m).ln() - base) * (m - 2) as f64;
            den += ((m - 2) as f64).powi(2);
        }
        let slope = num / den;
        assert!(slope < -2.0, "tail decay slope {slope}");
    }

    #[test]
    fn truncation_insensitive_at_default_modes() {
        let p = params(0.1);
        let gap = truncation_gap(1e-2, &p, &RippleConfig::default()).unwrap();
        assert!(gap < 1e-12, "truncation gap {gap:e}");
    }

    #[test]
    fn amplitude_cap_enforced() {
        let p = params(0.1);
        assert!(solve_ripple(0.5, &p, &RippleConfig::default()).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let p = params(0.1);
        let sol = solve_ripple(1e-3, &p, &RippleConfig::default()).unwrap();
        let text = serde_json::to_string_pretty(&sol.report()).unwrap();
        let back: RippleReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.a, sol.a);
        assert_eq!(back.k_eps, sol.k_eps);
        assert_eq!(back.t_shift, sol.t_shift);
        assert_eq!(back.residual, sol.residual);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn any_admissible_amplitude_converges(a in -1e-2f64..1e-2) {
            let p = params(0.1);
            let sol = solve_ripple(a, &p, &RippleConfig::default()).unwrap();
            proptest::prop_assert!(sol.residual < 1e-9);
            proptest::prop_assert_eq!(sol.psi.1.get(1), C64::new(0.0, 0.0));
            proptest::prop_assert!(sol.psi.0.realness_defect() < 1e-14);
        }
    }

    #[test]
    fn coefficients_csv_round_trip() {
        let p = params(0.1);
        let sol = solve_ripple(1e-3, &p, &RippleConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi2.csv");
        sol.phi.1.write_csv(&path).unwrap();
        let back = PeriodicFieldCoeffs::read_csv(&path).unwrap();
        assert_eq!(back.k_fund, sol.phi.1.k_fund);
        for m in -(sol.phi.1.m_max as i64)..=(sol.phi.1.m_max as i64) {
            assert_eq!(back.get(m), sol.phi.1.get(m));
        }
    }
}
