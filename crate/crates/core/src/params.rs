//! Lattice parameters and dispersion symbols.
//!
//! The linearized diatomic lattice in relative-displacement coordinates has
//! the block symbol
//!
//! ```text
//! L̃(k) = [ 1+w      −β̃(k) ]        β̃(k) = w e^{ik} + e^{−ik},
//!         [ −β̃(−k)   1+w  ]
//! ```
//!
//! with eigenvalues λ̃±(k) = 1 + w ± ϱ̃(k), ϱ̃(k) = sqrt((1−w)² + 4w cos²k).
//! The acoustic branch λ̃₋ has a double zero at k = 0 with curvature c_w² =
//! 2w/(1+w); the cancellation-free form
//!
//! ```text
//! λ̃₋(k) = 4w sin²k / (1 + w + ϱ̃(k))
//! ```
//!
//! is used everywhere (the naive 1 + w − ϱ̃ loses ~10 digits near k = 0 and
//! breaks every small-k quotient built on top of it).
//!
//! The frames J̃₂ (eigenvector matrix) and J̃₁ = J̃₂⁻¹ are normalized with
//! γ̃(k) = e^{−ik} + e^{ik} ϱ̃(k)/β̃(k), which satisfies the reflection
//! identity γ̃(−k)β̃(−k) = γ̃(k)ϱ̃(k). That identity together with
//! 2π-periodicity forces γ̃ to vanish (simple zero, slope (3+w)/(1+w) in
//! magnitude) at odd multiples of π, so J̃₁ blows up at the zone edge while
//! J̃₂ degenerates to zero there. [`zone_edge_distance`] measures proximity to
//! those points; grid-level code zeroes frame-inverse symbols inside a guard
//! band around them (the acoustic row of any composite through the multiplier
//! ϖ stays continuous because λ̃₋ has a matching double zero, but the optical
//! row keeps a genuine pole).

use num_complex::Complex64;
use serde::Serialize;

use crate::{tol, CoreError, Result};

/// Complex scalar used throughout.
pub type C64 = Complex64;
/// Dense 2×2 complex matrix, row major.
pub type Mat2 = [[C64; 2]; 2];

/// Multiply 2×2 complex matrices.
pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

/// Mass ratio, long-wave parameter, and the constants derived from them.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DimerParams {
    /// Mass ratio w = m₁/m₂ > 1.
    pub w: f64,
    /// Long-wave parameter ε ∈ (0, 1); the wave speed is c_ε = sqrt(c_w² + ε²).
    pub eps: f64,
    /// Speed of sound c_w = sqrt(2w/(1+w)).
    pub c_w: f64,
    /// Wave speed sqrt(c_w² + ε²).
    pub c_eps: f64,
    /// KdV dispersion coefficient (c_w²/3)(1 − w + w²)/(1+w)².
    pub alpha_w: f64,
    /// KdV solitary-wave amplitude 3/(8w).
    pub sigma0: f64,
    /// KdV solitary-wave inverse width 1/(2 sqrt(alpha_w)).
    pub q0: f64,
}

impl DimerParams {
    pub fn new(w: f64, eps: f64) -> Result<Self> {
        if !(w > 1.0) || !w.is_finite() {
            return Err(CoreError::InvalidParams(format!(
                "mass ratio w must satisfy w > 1, got {w}"
            )));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(CoreError::InvalidParams(format!(
                "long-wave parameter must satisfy 0 < eps < 1, got {eps}"
            )));
        }
        let c_w2 = 2.0 * w / (1.0 + w);
        let alpha_w = c_w2 / 3.0 * (1.0 - w + w * w) / ((1.0 + w) * (1.0 + w));
        Ok(Self {
            w,
            eps,
            c_w: c_w2.sqrt(),
            c_eps: (c_w2 + eps * eps).sqrt(),
            alpha_w,
            sigma0: 3.0 / (8.0 * w),
            q0: 0.5 / alpha_w.sqrt(),
        })
    }

    /// ϱ̃(k) = sqrt((1−w)² + 4w cos²k) ∈ [w−1, w+1].
    pub fn rho(&self, k: f64) -> f64 {
        let c = k.cos();
        let d = 1.0 - self.w;
        (d * d + 4.0 * self.w * c * c).sqrt()
    }

    /// ϱ̃′(k) = −2w sin(2k)/ϱ̃(k).
    pub fn rho_prime(&self, k: f64) -> f64 {
        -2.0 * self.w * (2.0 * k).sin() / self.rho(k)
    }

    /// ϱ̃″(k) = −4w cos(2k)/ϱ̃ − (2w sin 2k)²/ϱ̃³.
    pub fn rho_second(&self, k: f64) -> f64 {
        let r = self.rho(k);
        let s = 2.0 * self.w * (2.0 * k).sin();
        -4.0 * self.w * (2.0 * k).cos() / r - s * s / (r * r * r)
    }

    /// Acoustic branch λ̃₋(k) = 4w sin²k/(1 + w + ϱ̃(k)), cancellation free.
    pub fn lambda_minus(&self, k: f64) -> f64 {
        let s = k.sin();
        4.0 * self.w * s * s / (1.0 + self.w + self.rho(k))
    }

    /// Optical branch λ̃₊(k) = 1 + w + ϱ̃(k).
    pub fn lambda_plus(&self, k: f64) -> f64 {
        1.0 + self.w + self.rho(k)
    }

    /// Both branches (λ̃₋, λ̃₊).
    pub fn lambda_pm(&self, k: f64) -> (f64, f64) {
        (self.lambda_minus(k), self.lambda_plus(k))
    }

    /// β̃(k) = w e^{ik} + e^{−ik}; |β̃(k)| = ϱ̃(k), never zero for real k.
    pub fn beta(&self, k: f64) -> C64 {
        let e = C64::new(0.0, k).exp();
        self.w * e + e.conj()
    }

    /// Frame normalizer γ̃(k) = e^{−ik} + e^{ik} ϱ̃(k)/β̃(k).
    ///
    /// Vanishes exactly at odd multiples of π (forced by the reflection
    /// identity and periodicity); elsewhere nonzero.
    pub fn gamma(&self, k: f64) -> C64 {
        let e = C64::new(0.0, k).exp();
        e.conj() + e * self.rho(k) / self.beta(k)
    }

    /// Eigenvector frame J̃₂(k) = [[γ̃β̃, γ̃β̃], [γ̃ϱ̃, −γ̃ϱ̃]].
    pub fn j2(&self, k: f64) -> Mat2 {
        let gb = self.gamma(k) * self.beta(k);
        let gr = self.gamma(k) * self.rho(k);
        [[gb, gb], [gr, -gr]]
    }

    /// Inverse frame J̃₁(k) = J̃₂(k)⁻¹ =
    /// [[1/(2γ̃β̃), 1/(2γ̃ϱ̃)], [1/(2γ̃β̃), −1/(2γ̃ϱ̃)]].
    ///
    /// Unbounded at the zone edge; see [`zone_edge_distance`].
    pub fn j1(&self, k: f64) -> Mat2 {
        let sp = self.s_plus(k);
        let sm = self.s_minus(k);
        [[sp, sm], [sp, -sm]]
    }

    /// First row-column scalar of J̃₁: s₊(k) = 1/(2γ̃(k)β̃(k)).
    pub fn s_plus(&self, k: f64) -> C64 {
        1.0 / (2.0 * self.gamma(k) * self.beta(k))
    }

    /// Second row-column scalar of J̃₁: s₋(k) = 1/(2γ̃(k)ϱ̃(k)).
    pub fn s_minus(&self, k: f64) -> C64 {
        1.0 / (2.0 * self.gamma(k) * self.rho(k))
    }

    /// Lattice symbol L̃(k).
    pub fn l_symbol(&self, k: f64) -> Mat2 {
        let d = C64::new(1.0 + self.w, 0.0);
        [[d, -self.beta(k)], [-self.beta(-k), d]]
    }

    /// λ̃₋(k)/k² continued through k = 0: g(k) = 4w sinc²(k)/(1 + w + ϱ̃(k)),
    /// with g(0) = c_w² and g(k) ≤ c_w² for all k.
    pub fn g_acoustic(&self, k: f64) -> f64 {
        let s = sinc(k);
        4.0 * self.w * s * s / (1.0 + self.w + self.rho(k))
    }

    /// Resonance-free acoustic multiplier ϖ̃_c(k) = −λ̃₋(k)/(c²k² − λ̃₋(k))
    /// for supersonic c. The k → 0 singularity is removable; below the
    /// denominator threshold the quotient is rewritten as −g/(c² − g) with
    /// g = λ̃₋/k², which is exact and regular (g ≤ c_w² < c²).
    pub fn varpi_c(&self, k: f64, c: f64) -> Result<f64> {
        if c * c <= self.c_w * self.c_w {
            return Err(CoreError::InvalidParams(format!(
                "varpi_c requires a supersonic speed: c² = {} ≤ c_w² = {}",
                c * c,
                self.c_w * self.c_w
            )));
        }
        let lm = self.lambda_minus(k);
        let denom = c * c * k * k - lm;
        if denom.abs() < tol::VARPI_SERIES_DENOM {
            let g = self.g_acoustic(k);
            Ok(-g / (c * c - g))
        } else {
            Ok(-lm / denom)
        }
    }

    /// Long-wave acoustic multiplier
    /// ϖ̃^ε(K) = −ε²λ̃₋(εK) / ((c_w² + ε²)ε²K² − λ̃₋(εK)).
    pub fn varpi_eps(&self, kk: f64) -> f64 {
        let k = self.eps * kk;
        let lm = self.lambda_minus(k);
        let denom = self.c_eps * self.c_eps * k * k - lm;
        if denom.abs() < tol::VARPI_SERIES_DENOM {
            let g = self.g_acoustic(k);
            -self.eps * self.eps * g / (self.c_eps * self.c_eps - g)
        } else {
            -self.eps * self.eps * lm / denom
        }
    }

    /// KdV-limit multiplier ϖ̃⁰(K) = −c_w²/(1 + α_w K²).
    pub fn varpi0(&self, kk: f64) -> f64 {
        -self.c_w * self.c_w / (1.0 + self.alpha_w * kk * kk)
    }

    /// Optical resonance function ξ̃_c(k) = −c²k² + λ̃₊(k).
    pub fn xi_c(&self, k: f64, c: f64) -> f64 {
        -c * c * k * k + self.lambda_plus(k)
    }

    /// d/dk ξ̃_c by central difference with the mandated step.
    pub fn xi_prime_central(&self, k: f64, c: f64) -> f64 {
        let h = tol::XI_PRIME_STEP;
        (self.xi_c(k + h, c) - self.xi_c(k - h, c)) / (2.0 * h)
    }

    /// d/dk ξ̃_c analytically: −2c²k + ϱ̃′(k).
    pub fn xi_prime_analytic(&self, k: f64, c: f64) -> f64 {
        -2.0 * c * c * k + self.rho_prime(k)
    }

    /// d²/dk² ξ̃_c analytically: −2c² + ϱ̃″(k).
    pub fn xi_second_analytic(&self, k: f64, c: f64) -> f64 {
        -2.0 * c * c + self.rho_second(k)
    }

    /// Unique root of ξ̃_c in [sqrt(2w)/c, sqrt(2+2w)/c], by bisection.
    ///
    /// ξ̃_c ≥ 0 at the left end (λ̃₊ ≥ 2w) and ≤ 0 at the right (λ̃₊ ≤ 2+2w),
    /// so the bracket always contains a root; bisection is unconditionally
    /// convergent on it.
    pub fn find_kc(&self, c: f64) -> Result<KcRoot> {
        let lo = (2.0 * self.w).sqrt() / c;
        let hi = (2.0 + 2.0 * self.w).sqrt() / c;
        let flo = self.xi_c(lo, c);
        let fhi = self.xi_c(hi, c);
        if flo < 0.0 || fhi > 0.0 {
            return Err(CoreError::NoBracket {
                what: format!("xi_c root at c = {c}, w = {}", self.w),
                lo,
                hi,
            });
        }
        let (mut a, mut b) = (lo, hi);
        while b - a > tol::KC_BISECTION {
            let mid = 0.5 * (a + b);
            if self.xi_c(mid, c) >= 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let kc = 0.5 * (a + b);
        Ok(KcRoot {
            kc,
            residual: self.xi_c(kc, c).abs(),
            derivative_gap: (2.0 * c * c * kc - self.rho_prime(kc)).abs(),
        })
    }

    /// Scaled resonance wavenumber K_ε = k_{c_ε}/ε.
    pub fn find_k_eps(&self) -> Result<KcRoot> {
        let root = self.find_kc(self.c_eps)?;
        Ok(KcRoot {
            kc: root.kc / self.eps,
            residual: root.residual,
            derivative_gap: root.derivative_gap,
        })
    }

    /// Named scalar symbol with declared parity/periodicity metadata.
    pub fn symbol(&self, which: NamedSymbol) -> SymbolFn {
        let p = *self;
        let (parity, period, f): (Parity, Option<f64>, Box<dyn Fn(f64) -> C64 + Send + Sync>) =
            match which {
                NamedSymbol::Rho => (
                    Parity::Even,
                    Some(std::f64::consts::PI),
                    Box::new(move |k| C64::new(p.rho(k), 0.0)),
                ),
                NamedSymbol::LambdaMinus => (
                    Parity::Even,
                    Some(std::f64::consts::PI),
                    Box::new(move |k| C64::new(p.lambda_minus(k), 0.0)),
                ),
                NamedSymbol::LambdaPlus => (
                    Parity::Even,
                    Some(std::f64::consts::PI),
                    Box::new(move |k| C64::new(p.lambda_plus(k), 0.0)),
                ),
                NamedSymbol::Beta => (
                    Parity::Hermitian,
                    Some(2.0 * std::f64::consts::PI),
                    Box::new(move |k| p.beta(k)),
                ),
                NamedSymbol::Gamma => (
                    Parity::Hermitian,
                    Some(2.0 * std::f64::consts::PI),
                    Box::new(move |k| p.gamma(k)),
                ),
            };
        SymbolFn { parity, period, f }
    }
}

/// Root report for ξ̃_c: the root, |ξ̃_c(k_c)|, and |2c²k_c − λ̃₊′(k_c)|
/// (the transversality margin of the resonance).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KcRoot {
    pub kc: f64,
    pub residual: f64,
    pub derivative_gap: f64,
}

/// Symmetry class of a scalar symbol on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// μ(−k) = μ(k), real-valued.
    Even,
    /// μ(−k) = −μ(k), real-valued.
    Odd,
    /// μ(−k) = conj μ(k) (real multiplier on real fields).
    Hermitian,
}

/// Named symbols for metadata-carrying evaluation.
#[derive(Debug, Clone, Copy)]
pub enum NamedSymbol {
    Rho,
    LambdaMinus,
    LambdaPlus,
    Beta,
    Gamma,
}

/// A scalar symbol bundled with its declared symmetry metadata.
pub struct SymbolFn {
    pub parity: Parity,
    pub period: Option<f64>,
    f: Box<dyn Fn(f64) -> C64 + Send + Sync>,
}

impl SymbolFn {
    pub fn eval(&self, k: f64) -> C64 {
        (self.f)(k)
    }

    /// Largest violation of the declared parity rule over the samples.
    pub fn parity_defect(&self, ks: &[f64]) -> f64 {
        ks.iter()
            .map(|&k| {
                let a = self.eval(k);
                let b = self.eval(-k);
                match self.parity {
                    Parity::Even => (a - b).norm(),
                    Parity::Odd => (a + b).norm(),
                    Parity::Hermitian => (a.conj() - b).norm(),
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest violation of the declared period over the samples.
    pub fn period_defect(&self, ks: &[f64]) -> f64 {
        let Some(t) = self.period else { return 0.0 };
        ks.iter()
            .map(|&k| (self.eval(k + t) - self.eval(k)).norm())
            .fold(0.0, f64::max)
    }
}

/// sin(k)/k, by series below the threshold.
pub fn sinc(k: f64) -> f64 {
    if k.abs() < tol::SINC_SERIES {
        let k2 = k * k;
        1.0 - k2 / 6.0 + k2 * k2 / 120.0
    } else {
        k.sin() / k
    }
}

/// Distance from k to the nearest odd multiple of π (the zone edge, where γ̃
/// vanishes and the inverse frame J̃₁ blows up).
pub fn zone_edge_distance(k: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = k.rem_euclid(two_pi);
    (r - std::f64::consts::PI).abs()
}
