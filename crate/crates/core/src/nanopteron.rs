//! Nanopteron assembly: Beale's ansatz θ = σ + η + aφ(ω·) around the KdV
//! core, iterated to a traveling wave of the diatomic lattice.
//!
//! The scaled traveling-wave system splits into an acoustic equation
//! θ₁ = −ϖ^ε b₁(θ,θ) and an optical equation 𝒯_εθ₂ = −ε²λ₊^ε b₂(θ,θ) with
//! 𝒯_ε = ε²c_ε²∂² + λ₊^ε. Subtracting the σ-equation and the exact ripple
//! equation leaves a fixed-point system for (η₁, η₂, a):
//!
//!   𝒜η₁ = j₁+…+j₅          (acoustic, 𝒜 = 1 + 4(1+w)ϖ⁰(σ·))
//!   𝒯_εη₂ = ε²(l₁+…+l₅)     (optical)
//!
//! 𝒯̃_ε has simple real zeros at ±K_ε, so the optical right side is split as
//! Σl = (Σl with l₃₁) − 2aχ where χ captures the resonant part of the σ–ν
//! interaction. Choosing a = ι[Σl]/(2κ), κ = ι[χ], restores solvability and
//! 𝒫_ε inverts 𝒯_ε on the complement with an L'Hôpital band rule at ±K_ε.
//! The ripple amplitude is therefore not free: it is selected by the same
//! functional that makes the optical equation solvable.
//!
//! Everything here works in the long-wave frame: fields depend on X, lattice
//! symbols are evaluated at physical wavenumber k = εK.

use std::sync::Arc;

use num_complex::Complex64;

use crate::field::{
    Carrier, EnvData, FieldParity, Grid, LocalizedField, ModulatedField,
};
use crate::kdv::{b0_pair, AcousticOperator, KdvProfile};
use crate::params::{zone_edge_distance, DimerParams};
use crate::ripple::{solve_ripple, RippleConfig, RippleSolution};
use crate::{defaults, tol, CoreError, Result};

type C64 = Complex64;

/// Component pair of modulated fields (acoustic, optical).
pub type ThetaMod = (ModulatedField, ModulatedField);

/// Exact periodic-frame resonance distance below which a constant carrier
/// sitting on a dispersion zone edge is a hard error rather than negligible.
const EXACT_EDGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, serde::Serialize)]
pub struct NanopteronConfig {
    /// Grid size; None picks the smallest admissible power of two for ε.
    pub grid_n: Option<usize>,
    pub grid_l: f64,
    pub ripple: RippleConfig,
    pub tol: f64,
    pub max_iter: usize,
    /// Blend weight toward the newly selected amplitude.
    pub damping: f64,
}

impl Default for NanopteronConfig {
    fn default() -> Self {
        Self {
            grid_n: None,
            grid_l: defaults::GRID_L,
            ripple: RippleConfig::default(),
            tol: tol::NANOPTERON_UPDATE,
            max_iter: defaults::NANOPTERON_MAX_ITER,
            damping: defaults::AMPLITUDE_DAMPING,
        }
    }
}

/// Smallest power-of-two grid keeping the Nyquist wavenumber at least five
/// times the resonance frequency K_ε.
pub fn grid_size_for(p: &DimerParams, l: f64) -> Result<usize> {
    let k_eps = p.find_k_eps()?.kc;
    let mut n = defaults::GRID_N;
    while std::f64::consts::PI * n as f64 / (2.0 * l) < 5.0 * k_eps {
        n *= 2;
    }
    Ok(n)
}

/// Everything that depends only on (ε, w) and the grid: the KdV core, the
/// acoustic operator, the resonance root, and the solvability pair (χ, κ).
pub struct Workspace {
    pub p: DimerParams,
    pub grid: Arc<Grid>,
    pub sigma: KdvProfile,
    pub acoustic: AcousticOperator,
    pub k_eps: f64,
    pub chi: ModulatedField,
    pub chi_flat: LocalizedField,
    pub kappa: f64,
    pub kappa_star: f64,
    /// Physical-frame zone-edge guard width for the frame-inverse symbols.
    pub edge_guard: f64,
    pub ripple_cfg: RippleConfig,
    pub damping: f64,
}

impl Workspace {
    pub fn new(p: &DimerParams, cfg: &NanopteronConfig) -> Result<Self> {
        let n = match cfg.grid_n {
            Some(n) => n,
            None => grid_size_for(p, cfg.grid_l)?,
        };
        let grid = Grid::new(n, cfg.grid_l)?;
        let sigma = KdvProfile::new(p, &grid);
        let acoustic = AcousticOperator::new(p, &grid);
        let k_eps = p.find_k_eps()?.kc;
        let chi = compute_chi_eps(p, &grid)?;
        let chi_flat = chi.flatten(FieldParity::Odd)?;
        let kappa = chi.iota(k_eps)?;
        let kappa_star =
            2.0 * (1.0 + p.w) * (p.sigma0 / p.q0) * p.lambda_plus(p.eps * k_eps);
        Ok(Self {
            p: *p,
            grid,
            sigma,
            acoustic,
            k_eps,
            chi,
            chi_flat,
            kappa,
            kappa_star,
            edge_guard: defaults::EDGE_GUARD_SPACINGS * p.eps * 0.0,
            ripple_cfg: cfg.ripple.clone(),
            damping: cfg.damping,
        }
        .with_edge_guard())
    }

    fn with_edge_guard(mut self) -> Self {
        self.edge_guard = defaults::EDGE_GUARD_SPACINGS * self.p.eps * self.grid.dk;
        self
    }
}

/// Iterate unknowns: localized corrections and the ripple amplitude, with the
/// ripple solved at (close to) the current amplitude.
#[derive(Debug, Clone)]
pub struct NanopteronState {
    pub eta1: LocalizedField,
    pub eta2: LocalizedField,
    pub a: f64,
    pub ripple: RippleSolution,
}

impl NanopteronState {
    pub fn zero(ws: &Workspace) -> Result<Self> {
        Ok(Self {
            eta1: LocalizedField::zeros(&ws.grid, FieldParity::Even),
            eta2: LocalizedField::zeros(&ws.grid, FieldParity::Odd),
            a: 0.0,
            ripple: solve_ripple(0.0, &ws.p, &ws.ripple_cfg)?,
        })
    }
}

/// ν₂ scaled by s: the carrier pair of s·sin(ωX).
fn nu_second(grid: &Arc<Grid>, omega: f64, s: f64) -> ModulatedField {
    let mut carriers = Vec::new();
    if s != 0.0 {
        carriers.push(Carrier {
            freq: -omega,
            env: EnvData::Constant(C64::new(0.0, 0.5 * s)),
        });
        carriers.push(Carrier {
            freq: omega,
            env: EnvData::Constant(C64::new(0.0, -0.5 * s)),
        });
    }
    ModulatedField {
        grid: grid.clone(),
        carriers,
    }
}

/// Resonant forcing shape χ = λ₊^ε [J₁^ε(J₂⁰σ . J₂^εν)]₂ at the base
/// frequency K_ε. Both carriers hold σ-shaped envelopes, so χ is odd and
/// integrable against sin(K_εX).
pub fn compute_chi_eps(p: &DimerParams, grid: &Arc<Grid>) -> Result<ModulatedField> {
    let k_eps = p.find_k_eps()?.kc;
    let sigma = KdvProfile::new(p, grid);
    let guard = defaults::EDGE_GUARD_SPACINGS * p.eps * grid.dk;
    chi_at_frequency(p, grid, &sigma.sigma, k_eps, 1.0, guard)
}

fn chi_at_frequency(
    p: &DimerParams,
    grid: &Arc<Grid>,
    sigma: &LocalizedField,
    omega: f64,
    scale: f64,
    guard: f64,
) -> Result<ModulatedField> {
    let pc = *p;
    let nu = nu_second(grid, omega, scale);
    let jb = nu.apply_symbol("gamma*beta", 0.0, move |kk| {
        let k = pc.eps * kk;
        pc.gamma(k) * pc.beta(k)
    })?;
    let jr = nu
        .apply_symbol("gamma*rho", 0.0, move |kk| {
            let k = pc.eps * kk;
            pc.gamma(k) * C64::new(pc.rho(k), 0.0)
        })?
        .scale(C64::new(-1.0, 0.0));
    let sig0 = ModulatedField::from_real(&sigma.scaled(2.0 * (1.0 + p.w)));
    let u1 = sig0.product(&jb)?;
    let u2 = sig0.product(&jr)?;
    let row2 = j1_row2(p, guard, &u1, &u2)?;
    row2.apply_symbol("lambda_plus", 0.0, move |kk| {
        C64::new(pc.lambda_plus(pc.eps * kk), 0.0)
    })
}

/// Second row of the frame inverse: s₊u₁ − s₋u₂ with the physical-frame
/// zone-edge guard built into the closures. Constant carriers landing exactly
/// on a zone edge are a hard resonance error.
fn j1_row2(
    p: &DimerParams,
    guard: f64,
    u1: &ModulatedField,
    u2: &ModulatedField,
) -> Result<ModulatedField> {
    for f in [u1, u2] {
        for c in &f.carriers {
            if matches!(c.env, EnvData::Constant(_)) {
                let d = zone_edge_distance(p.eps * c.freq);
                if d < EXACT_EDGE_TOL {
                    return Err(CoreError::ZoneEdgeResonance {
                        freq: c.freq,
                        dist: d,
                    });
                }
            }
        }
    }
    let pc = *p;
    let sp = u1.apply_symbol("s_plus", 0.0, move |kk| {
        let k = pc.eps * kk;
        if zone_edge_distance(k) < guard {
            C64::new(0.0, 0.0)
        } else {
            pc.s_plus(k)
        }
    })?;
    let sm = u2.apply_symbol("s_minus", 0.0, move |kk| {
        let k = pc.eps * kk;
        if zone_edge_distance(k) < guard {
            C64::new(0.0, 0.0)
        } else {
            pc.s_minus(k)
        }
    })?;
    Ok(sp.add(&sm.scale(C64::new(-1.0, 0.0))))
}

/// (ι_ε[χ], closed form 2π(1+w)σ̂(0)λ̃₊(εK_ε)); the two differ by terms that
/// decay exponentially in 1/ε.
pub fn compute_kappa(p: &DimerParams, grid: &Arc<Grid>) -> Result<(f64, f64)> {
    let k_eps = p.find_k_eps()?.kc;
    let chi = compute_chi_eps(p, grid)?;
    let kappa = chi.iota(k_eps)?;
    let kappa_star =
        2.0 * (1.0 + p.w) * (p.sigma0 / p.q0) * p.lambda_plus(p.eps * k_eps);
    Ok((kappa, kappa_star))
}

/// Diagonalized factors P = γβ(u₁+u₂), M = γϱ(u₁−u₂) of one argument.
struct DiagPair {
    plus: ModulatedField,
    minus: ModulatedField,
}

fn diagonalize(ws: &Workspace, u: &ThetaMod) -> Result<DiagPair> {
    let p = ws.p;
    let sum = u.0.add(&u.1);
    let diff = u.0.add(&u.1.scale(C64::new(-1.0, 0.0)));
    let plus = sum.apply_symbol("gamma*beta", 0.0, move |kk| {
        let k = p.eps * kk;
        p.gamma(k) * p.beta(k)
    })?;
    let minus = diff.apply_symbol("gamma*rho", 0.0, move |kk| {
        let k = p.eps * kk;
        p.gamma(k) * C64::new(p.rho(k), 0.0)
    })?;
    Ok(DiagPair { plus, minus })
}

/// Both components of the bilinear map from cached diagonal factors:
/// b₁ = s₊(P·P̀) + s₋(M·M̀), b₂ = s₊(P·P̀) − s₋(M·M̀).
fn b_from_diagonals(
    ws: &Workspace,
    du: &DiagPair,
    dv: &DiagPair,
) -> Result<(ModulatedField, ModulatedField)> {
    let pp = du.plus.product(&dv.plus)?;
    let mm = du.minus.product(&dv.minus)?;
    let p = ws.p;
    let guard = ws.edge_guard;
    for f in [&pp, &mm] {
        for c in &f.carriers {
            if matches!(c.env, EnvData::Constant(_)) {
                let d = zone_edge_distance(p.eps * c.freq);
                if d < EXACT_EDGE_TOL {
                    return Err(CoreError::ZoneEdgeResonance {
                        freq: c.freq,
                        dist: d,
                    });
                }
            }
        }
    }
    let sp = pp.apply_symbol("s_plus", 0.0, move |kk| {
        let k = p.eps * kk;
        if zone_edge_distance(k) < guard {
            C64::new(0.0, 0.0)
        } else {
            p.s_plus(k)
        }
    })?;
    let sm = mm.apply_symbol("s_minus", 0.0, move |kk| {
        let k = p.eps * kk;
        if zone_edge_distance(k) < guard {
            C64::new(0.0, 0.0)
        } else {
            p.s_minus(k)
        }
    })?;
    let b1 = sp.add(&sm);
    let b2 = sp.add(&sm.scale(C64::new(-1.0, 0.0)));
    Ok((b1, b2))
}

fn apply_varpi_eps(ws: &Workspace, f: &ModulatedField) -> Result<ModulatedField> {
    let p = ws.p;
    f.apply_symbol("varpi_eps", 0.0, move |kk| C64::new(p.varpi_eps(kk), 0.0))
}

fn apply_lambda_plus(ws: &Workspace, f: &ModulatedField) -> Result<ModulatedField> {
    let p = ws.p;
    f.apply_symbol("lambda_plus", 0.0, move |kk| {
        C64::new(p.lambda_plus(p.eps * kk), 0.0)
    })
}

/// Verify a term's flattened parity against the state scale (roundoff on a
/// tiny term must not masquerade as a parity violation).
///
/// The frame-inverse symbols s± have guarded poles where the envelope
/// spectrum crosses a dispersion zone edge; the passed-over spectral tail
/// leaves an exponentially small delocalized ripple that cannot vanish at the
/// periodization seam X = −L. The allowance below prices exactly that seam
/// value (the interior pairing stays machine exact), so a genuine interior
/// parity violation is still caught.
fn check_term_parity(
    ws: &Workspace,
    term: &ModulatedField,
    parity: FieldParity,
    name: &str,
) -> Result<()> {
    let flat = term.flatten(parity)?;
    let scale = flat.sup_norm().max(ws.sigma.sigma.sup_norm());
    let seam = flat.boundary_ratio() * flat.sup_norm();
    let allowed = tol::PARITY_DEFECT * scale + 2.5 * seam;
    let defect = flat.parity_defect();
    if defect > allowed {
        return Err(CoreError::Parity(format!(
            "{name}: parity defect {defect:e} exceeds {allowed:e} (scale {scale:e}, seam {seam:e})"
        )));
    }
    Ok(())
}

/// The five acoustic and five optical forcing terms at a state. The optical
/// slot 3 holds l₃₁ (the χ-free part of l₃) assembled from its explicit
/// formula rather than by subtracting 2aχ from l₃.
pub struct ForcingTerms {
    pub j: [ModulatedField; 5],
    pub l: [ModulatedField; 5],
}

pub fn assemble_j_terms(ws: &Workspace, state: &NanopteronState) -> Result<[ModulatedField; 5]> {
    Ok(assemble_forcing(ws, state)?.j)
}

pub fn assemble_l_terms(ws: &Workspace, state: &NanopteronState) -> Result<[ModulatedField; 5]> {
    Ok(assemble_forcing(ws, state)?.l)
}

pub fn assemble_forcing(ws: &Workspace, state: &NanopteronState) -> Result<ForcingTerms> {
    let p = ws.p;
    let grid = &ws.grid;
    let omega = state.ripple.k_eps_a;
    let a = state.a;

    let empty = ModulatedField::new(grid);
    let sigma_arg: ThetaMod = (ModulatedField::from_real(&ws.sigma.sigma), empty.clone());
    let eta_arg: ThetaMod = (
        ModulatedField::from_real(&state.eta1),
        ModulatedField::from_real(&state.eta2),
    );
    let scale_a = C64::new(a, 0.0);
    let mut aphi1 = ModulatedField::from_periodic(grid, &state.ripple.phi.0, scale_a);
    let mut aphi2 = ModulatedField::from_periodic(grid, &state.ripple.phi.1, scale_a);
    aphi1.prune();
    aphi2.prune();
    let aphi_arg: ThetaMod = (aphi1, aphi2);
    let mut apsi1 = ModulatedField::from_periodic(grid, &state.ripple.psi.0, scale_a);
    let mut apsi2 = ModulatedField::from_periodic(grid, &state.ripple.psi.1, scale_a);
    apsi1.prune();
    apsi2.prune();
    let apsi_arg: ThetaMod = (apsi1, apsi2);

    let d_sigma = diagonalize(ws, &sigma_arg)?;
    let d_eta = diagonalize(ws, &eta_arg)?;
    let d_aphi = diagonalize(ws, &aphi_arg)?;
    let d_apsi = diagonalize(ws, &apsi_arg)?;

    let (b1_ss, b2_ss) = b_from_diagonals(ws, &d_sigma, &d_sigma)?;
    let (b1_se, b2_se) = b_from_diagonals(ws, &d_sigma, &d_eta)?;
    // b₂(σ, aφ) never appears: the optical σ–φ coupling enters through the
    // explicit l₃₁ split instead.
    let (b1_sp, _) = b_from_diagonals(ws, &d_sigma, &d_aphi)?;
    let (b1_ep, b2_ep) = b_from_diagonals(ws, &d_eta, &d_aphi)?;
    let (b1_ee, b2_ee) = b_from_diagonals(ws, &d_eta, &d_eta)?;
    let (_, b2_spsi) = b_from_diagonals(ws, &d_sigma, &d_apsi)?;

    let minus = C64::new(-1.0, 0.0);

    // j₁ = −(σ + ϖ^ε b₁(σ,σ)): the KdV-residual analogue at finite ε.
    let j1 = ModulatedField::from_real(&ws.sigma.sigma)
        .add(&apply_varpi_eps(ws, &b1_ss)?)
        .scale(minus);
    // j₂ = −2(ϖ^ε b₁(σ,η) − ϖ⁰ b₁⁰(σ,η)); the ϖ⁰ part cancels the
    // non-identity part of 𝒜 at leading order.
    let zero_odd = LocalizedField::zeros(grid, FieldParity::Odd);
    let b10 = b0_pair(
        &p,
        (&ws.sigma.sigma, &zero_odd),
        (&state.eta1, &state.eta2),
    )?
    .0;
    let pc = p;
    let b10_v = b10.apply_multiplier(
        "varpi0",
        |kk| C64::new(pc.varpi0(kk), 0.0),
        FieldParity::Even,
    )?;
    let j2 = apply_varpi_eps(ws, &b1_se)?
        .scale(C64::new(-2.0, 0.0))
        .add(&ModulatedField::from_real(&b10_v.scaled(2.0)));
    // The a-scale is folded into the aφ/aψ arguments, so the explicit factors
    // below are −2, not −2a.
    let j3 = apply_varpi_eps(ws, &b1_sp)?.scale(C64::new(-2.0, 0.0));
    let j4 = apply_varpi_eps(ws, &b1_ep)?.scale(C64::new(-2.0, 0.0));
    let j5 = apply_varpi_eps(ws, &b1_ee)?.scale(minus);

    let l1 = apply_lambda_plus(ws, &b2_ss)?.scale(minus);
    let l2 = apply_lambda_plus(ws, &b2_se)?.scale(C64::new(-2.0, 0.0));
    // l₃₁ = −2aλ₊[J₁((J₂−J₂⁰)σ . J₂ν_ω)]₂ − 2λ₊ b₂(σ, aψ), with ν at the
    // current ripple frequency.
    let nu_a = nu_second(grid, omega, a);
    let jb = nu_a.apply_symbol("gamma*beta", 0.0, move |kk| {
        let k = pc.eps * kk;
        pc.gamma(k) * pc.beta(k)
    })?;
    let jr = nu_a
        .apply_symbol("gamma*rho", 0.0, move |kk| {
            let k = pc.eps * kk;
            pc.gamma(k) * C64::new(pc.rho(k), 0.0)
        })?
        .scale(minus);
    let gb0 = 2.0 * (1.0 + p.w);
    let a1 = ModulatedField::from_real(&ws.sigma.sigma).apply_symbol(
        "gamma*beta - dc",
        0.0,
        move |kk| pc.gamma(pc.eps * kk) * pc.beta(pc.eps * kk) - C64::new(gb0, 0.0),
    )?;
    let a2 = ModulatedField::from_real(&ws.sigma.sigma).apply_symbol(
        "gamma*rho - dc",
        0.0,
        move |kk| {
            pc.gamma(pc.eps * kk) * C64::new(pc.rho(pc.eps * kk), 0.0)
                - C64::new(gb0, 0.0)
        },
    )?;
    let u1 = a1.product(&jb)?;
    let u2 = a2.product(&jr)?;
    let row2 = j1_row2(&p, ws.edge_guard, &u1, &u2)?;
    let piece_a = apply_lambda_plus(ws, &row2)?.scale(C64::new(-2.0, 0.0));
    let piece_b = apply_lambda_plus(ws, &b2_spsi)?.scale(C64::new(-2.0, 0.0));
    let l31 = piece_a.add(&piece_b);
    let l4 = apply_lambda_plus(ws, &b2_ep)?.scale(C64::new(-2.0, 0.0));
    let l5 = apply_lambda_plus(ws, &b2_ee)?.scale(minus);

    let terms = ForcingTerms {
        j: [j1, j2, j3, j4, j5],
        l: [l1, l2, l31, l4, l5],
    };
    for (i, t) in terms.j.iter().enumerate() {
        check_term_parity(ws, t, FieldParity::Even, &format!("j{}", i + 1))?;
    }
    for (i, t) in terms.l.iter().enumerate() {
        let name = if i == 2 {
            "l31".to_string()
        } else {
            format!("l{}", i + 1)
        };
        check_term_parity(ws, t, FieldParity::Odd, &name)?;
    }
    Ok(terms)
}

/// Diagnostics of one regularized optical inversion.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PEpsDiagnostics {
    /// ι_ε of the incoming right side (before the χ subtraction).
    pub iota_g: f64,
    /// ι_ε of the subtracted right side (should vanish to quadrature noise).
    pub iota_after: f64,
    /// Solvability defect |iota_after| relative to the functional's natural
    /// bound 2L·‖g‖ on the incoming right side.
    pub consistency_rel: f64,
    /// Spectral bins replaced by the L'Hôpital constant.
    pub band_bins: usize,
    /// Largest off-band spectral defect |û𝒯̃ − ĥ| relative to ‖ĥ‖_∞: the
    /// round-trip certificate of the division itself, before any projection.
    pub post_residual_rel: f64,
    /// Largest spectral gap |𝒯̃·const − ĥ| on the replaced bins: the model
    /// error of the band rule, proportional to the resonant content.
    pub band_truncation: f64,
    /// Sup distance between the returned real odd field and the raw complex
    /// inverse. Dominated by the zone-edge regularization tail, so it decays
    /// beyond all orders in ε; reported rather than gated.
    pub projection_defect: f64,
}

/// Invert 𝒯_ε against an odd right side after enforcing solvability:
/// u = 𝒯⁻¹(g − (ι[g]/κ)χ), with grid bins within
/// [`defaults::RESONANT_BAND_SPACINGS`] spacings of ±K_ε replaced by the
/// L'Hôpital value ĥ′(±K_ε)/𝒯̃′(±K_ε).
pub fn p_eps_solve(
    ws: &Workspace,
    g: &ModulatedField,
) -> Result<(LocalizedField, PEpsDiagnostics)> {
    let p = ws.p;
    let grid = &ws.grid;
    let iota_g = g.iota(ws.k_eps)?;
    let g_flat = g.flatten(FieldParity::Odd)?;
    let h = g_flat.combine(1.0, &ws.chi_flat, -iota_g / ws.kappa, FieldParity::Odd);
    let iota_after = h.iota_quadrature(ws.k_eps).value;
    let g_sup = g_flat.sup_norm();
    let consistency_rel = iota_after.abs() / (2.0 * grid.l * g_sup.max(1e-300));

    let spec = h.spectral();
    let tsym = |kk: f64| p.xi_c(p.eps * kk, p.c_eps);
    let tprime = |kk: f64| p.eps * p.xi_prime_analytic(p.eps * kk, p.c_eps);
    let delta = defaults::RESONANT_BAND_SPACINGS * grid.dk;

    // L'Hôpital constants from the nearest out-of-band samples on each side.
    let band_const = |center: f64| -> C64 {
        let mut lo: Option<(f64, C64)> = None;
        let mut hi: Option<(f64, C64)> = None;
        for (m, &kk) in grid.k().iter().enumerate() {
            if kk < center - delta && lo.map_or(true, |(b, _)| kk > b) {
                lo = Some((kk, spec[m]));
            }
            if kk > center + delta && hi.map_or(true, |(b, _)| kk < b) {
                hi = Some((kk, spec[m]));
            }
        }
        let (kl, vl) = lo.expect("band has out-of-band neighbor below");
        let (kh, vh) = hi.expect("band has out-of-band neighbor above");
        (vh - vl) / (kh - kl) / tprime(center)
    };
    let const_pos = band_const(ws.k_eps);
    let const_neg = band_const(-ws.k_eps);

    let mut band_bins = 0;
    let mut band_truncation: f64 = 0.0;
    let mut spec_defect: f64 = 0.0;
    let mut spec_sup: f64 = 0.0;
    let mut dft = vec![C64::new(0.0, 0.0); grid.n];
    let factor = 2.0 * std::f64::consts::PI / grid.dx;
    for (m, &kk) in grid.k().iter().enumerate() {
        let u_hat = if (kk - ws.k_eps).abs() < delta {
            band_bins += 1;
            const_pos
        } else if (kk + ws.k_eps).abs() < delta {
            band_bins += 1;
            const_neg
        } else {
            spec[m] / tsym(kk)
        };
        let gap = (u_hat * tsym(kk) - spec[m]).norm();
        let in_band = (kk - ws.k_eps).abs() < delta || (kk + ws.k_eps).abs() < delta;
        if in_band {
            band_truncation = band_truncation.max(gap);
        } else {
            spec_defect = spec_defect.max(gap);
        }
        spec_sup = spec_sup.max(spec[m].norm());
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        dft[m] = u_hat * factor * sign;
    }

    // Certify the division on the raw spectrum: away from the band, û𝒯̃ must
    // reproduce ĥ to rounding. On the replaced bins the defect against ĥ is
    // the band rule's model error; report it, do not gate on it.
    let post_residual_rel = spec_defect / spec_sup.max(1e-300);
    if spec_sup > 0.0 && spec_defect > tol::P_EPS_POST * spec_sup {
        return Err(CoreError::PostCheck {
            residual: spec_defect,
            bound: tol::P_EPS_POST * spec_sup,
            context: format!(
                "optical inverse band regularization ({band_bins} bins replaced)"
            ),
        });
    }

    grid.inverse_normalized(&mut dft);
    let mut u = LocalizedField {
        grid: grid.clone(),
        values: dft.iter().map(|v| v.re).collect(),
        parity: FieldParity::Odd,
        decay_rate: None,
    };
    u.symmetrize();
    let projection_defect = u
        .values
        .iter()
        .zip(dft.iter())
        .fold(0.0f64, |s, (&uf, &ur)| s.max((uf - ur.re).hypot(ur.im)));

    Ok((
        u,
        PEpsDiagnostics {
            iota_g,
            iota_after,
            consistency_rel,
            band_bins,
            post_residual_rel,
            band_truncation,
            projection_defect,
        },
    ))
}

/// Diagnostics of one full iteration step.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepInfo {
    pub update_norm: f64,
    pub a_raw: f64,
    pub ripple_resolved: bool,
    pub p_eps: PEpsDiagnostics,
    pub inverse_method: String,
    pub iota_terms: [f64; 5],
}

/// One application of the fixed-point map: η₁ ← 𝒜⁻¹(Σj), η₂ ← ε²𝒫(Σl),
/// a ← damped ι[Σl]/(2κ); the ripple is re-solved when the amplitude moves
/// more than [`tol::RIPPLE_RESOLVE`] relative.
pub fn n_step(ws: &Workspace, state: &NanopteronState) -> Result<(NanopteronState, StepInfo)> {
    let terms = assemble_forcing(ws, state)?;
    let sum_j = terms
        .j
        .iter()
        .skip(1)
        .fold(terms.j[0].clone(), |acc, t| acc.add(t));
    let flat_j = sum_j.flatten(FieldParity::Even)?;
    let (mut eta1_new, inv_diag) = ws.acoustic.inverse(&flat_j)?;
    eta1_new.symmetrize();

    let sum_l = terms
        .l
        .iter()
        .skip(1)
        .fold(terms.l[0].clone(), |acc, t| acc.add(t));
    let mut iota_terms = [0.0f64; 5];
    for (slot, t) in iota_terms.iter_mut().zip(terms.l.iter()) {
        *slot = t.iota(ws.k_eps)?;
    }
    let (u, p_eps) = p_eps_solve(ws, &sum_l)?;
    let mut eta2_new = u.scaled(ws.p.eps * ws.p.eps);
    eta2_new.symmetrize();

    let a_raw = p_eps.iota_g / (2.0 * ws.kappa);
    let a_new = (1.0 - ws.damping) * state.a + ws.damping * a_raw;
    let a_scale = a_new.abs().max(state.ripple.a.abs());
    let need_resolve = (a_new - state.ripple.a).abs() > tol::RIPPLE_RESOLVE * a_scale;
    let ripple = if need_resolve {
        solve_ripple(a_new, &ws.p, &ws.ripple_cfg)?
    } else {
        state.ripple.clone()
    };

    let update_norm = eta1_new
        .combine(1.0, &state.eta1, -1.0, FieldParity::Even)
        .sup_norm()
        .max(
            eta2_new
                .combine(1.0, &state.eta2, -1.0, FieldParity::Odd)
                .sup_norm(),
        )
        .max((a_new - state.a).abs());
    Ok((
        NanopteronState {
            eta1: eta1_new,
            eta2: eta2_new,
            a: a_new,
            ripple,
        },
        StepInfo {
            update_norm,
            a_raw,
            ripple_resolved: need_resolve,
            p_eps,
            inverse_method: inv_diag.method,
            iota_terms,
        },
    ))
}

/// Sup-norms of the composite traveling-wave residual, split into the
/// localized (grid) part and the periodic (coefficient) part of each
/// component.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ThetaResidual {
    pub acoustic_localized: f64,
    pub acoustic_periodic: f64,
    pub optical_localized: f64,
    pub optical_periodic: f64,
}

impl ThetaResidual {
    pub fn acoustic(&self) -> f64 {
        self.acoustic_localized.max(self.acoustic_periodic)
    }
    pub fn optical(&self) -> f64 {
        self.optical_localized.max(self.optical_periodic)
    }
}

fn theta_composite(ws: &Workspace, state: &NanopteronState) -> Result<ThetaMod> {
    let grid = &ws.grid;
    let scale_a = C64::new(state.a, 0.0);
    let mut aphi1 = ModulatedField::from_periodic(grid, &state.ripple.phi.0, scale_a);
    let mut aphi2 = ModulatedField::from_periodic(grid, &state.ripple.phi.1, scale_a);
    aphi1.prune();
    aphi2.prune();
    let t1 = ModulatedField::from_real(&ws.sigma.sigma.combine(
        1.0,
        &state.eta1,
        1.0,
        FieldParity::Even,
    ))
    .add(&aphi1);
    let t2 = ModulatedField::from_real(&state.eta2).add(&aphi2);
    Ok((t1, t2))
}

/// Evaluate the full system on the composite ansatz in one sweep, with no
/// reference to the j/l decomposition: R₁ = θ₁ + ϖ^ε b₁(θ,θ) and
/// R₂ = 𝒯_εθ₂ + ε²λ₊^ε b₂(θ,θ).
pub fn theta_residual(ws: &Workspace, state: &NanopteronState) -> Result<ThetaResidual> {
    let p = ws.p;
    let theta = theta_composite(ws, state)?;
    let d = diagonalize(ws, &theta)?;
    let (b1, b2) = b_from_diagonals(ws, &d, &d)?;
    let varpi_b1 = apply_varpi_eps(ws, &b1)?;
    let r1 = theta.0.add(&varpi_b1);
    let t_theta2 = theta.1.apply_symbol("xi_c_eps", 0.0, move |kk| {
        C64::new(p.xi_c(p.eps * kk, p.c_eps), 0.0)
    })?;
    let lam_b2 = apply_lambda_plus(ws, &b2)?.scale(C64::new(p.eps * p.eps, 0.0));
    let r2 = t_theta2.add(&lam_b2);
    // The residuals are near-total cancelations of O(1) terms; their reality
    // defect is priced against the mass of the terms subtracted, measured
    // before the add collapses same-frequency envelopes.
    let mass1 = theta.0.envelope_sup_sum() + varpi_b1.envelope_sup_sum();
    let mass2 = t_theta2.envelope_sup_sum() + lam_b2.envelope_sup_sum();
    let omega = state.ripple.k_eps_a;
    let cap = 2 * ws.ripple_cfg.m_max + 2;
    let (per1, rest1) = r1.split_periodic(omega, cap)?;
    let (per2, rest2) = r2.split_periodic(omega, cap)?;
    Ok(ThetaResidual {
        acoustic_localized: rest1.flatten_scaled(FieldParity::Even, mass1)?.sup_norm(),
        acoustic_periodic: per1.sup_norm_sampled(512),
        optical_localized: rest2.flatten_scaled(FieldParity::Odd, mass2)?.sup_norm(),
        optical_periodic: per2.sup_norm_sampled(512),
    })
}

/// Relative residuals of the unscaled diagonalized traveling-wave system
/// (c²h″ + λ∓h + λ∓b(h,h) = 0 written in the long-wave frame), evaluated on
/// the composite ansatz. Independent of ϖ, 𝒜, 𝒫 and the j/l split.
pub fn h_system_residual(ws: &Workspace, state: &NanopteronState) -> Result<(f64, f64)> {
    let p = ws.p;
    let theta = theta_composite(ws, state)?;
    let d = diagonalize(ws, &theta)?;
    let (b1, b2) = b_from_diagonals(ws, &d, &d)?;
    let eps2 = p.eps * p.eps;
    let omega = state.ripple.k_eps_a;
    let cap = 2 * ws.ripple_cfg.m_max + 2;
    let sup_of = |f: &ModulatedField, parity: FieldParity, mass: f64| -> Result<f64> {
        let (per, rest) = f.split_periodic(omega, cap)?;
        Ok(rest
            .flatten_scaled(parity, mass)?
            .sup_norm()
            .max(per.sup_norm_sampled(512)))
    };

    let t1a = theta.0.apply_symbol("xi_acoustic", 0.0, move |kk| {
        let k = p.eps * kk;
        C64::new(-p.c_eps * p.c_eps * k * k + p.lambda_minus(k), 0.0)
    })?;
    let t1b = b1
        .apply_symbol("lambda_minus", 0.0, move |kk| {
            C64::new(p.lambda_minus(p.eps * kk), 0.0)
        })?
        .scale(C64::new(eps2, 0.0));
    let r1 = t1a.add(&t1b);
    let mass1 = t1a.envelope_sup_sum() + t1b.envelope_sup_sum();
    let scale1 =
        sup_of(&t1a, FieldParity::None, 0.0)?.max(sup_of(&t1b, FieldParity::None, 0.0)?);
    let rel1 = sup_of(&r1, FieldParity::Even, mass1)? / scale1.max(1e-300);

    let t2a = theta.1.apply_symbol("xi_optical", 0.0, move |kk| {
        C64::new(p.xi_c(p.eps * kk, p.c_eps), 0.0)
    })?;
    let t2b = apply_lambda_plus(ws, &b2)?.scale(C64::new(eps2, 0.0));
    let r2 = t2a.add(&t2b);
    let mass2 = t2a.envelope_sup_sum() + t2b.envelope_sup_sum();
    let scale2 =
        sup_of(&t2a, FieldParity::None, 0.0)?.max(sup_of(&t2b, FieldParity::None, 0.0)?);
    let rel2 = sup_of(&r2, FieldParity::Odd, mass2)? / scale2.max(1e-300);
    Ok((rel1, rel2))
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EtaNorms {
    /// Weighted Sobolev-type norms of η₁ for derivative orders 0..=2.
    pub eta1: [f64; 3],
    pub eta2: [f64; 3],
    pub weight_q: f64,
}

/// Converged-run certificate. All residuals are recomputed on the final
/// state, not taken from iteration history.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolveReport {
    pub w: f64,
    pub eps: f64,
    pub grid_n: usize,
    pub grid_l: f64,
    pub iterations: usize,
    pub final_update_norm: f64,
    pub theta_residual: ThetaResidual,
    pub a_value: f64,
    pub ripple_t_shift: f64,
    pub ripple_residual: f64,
    pub eta_norms: EtaNorms,
    pub kappa_eps: f64,
    pub kappa_star: f64,
    /// |ι of the solvability-subtracted optical right side| relative to the
    /// functional bound 2L·‖right side‖ at the converged state.
    pub amplitude_consistency: f64,
    pub h_residual: (f64, f64),
    pub boundary_ratio: (f64, f64),
    pub eta1_decay_rate: f64,
    pub parity_defect: (f64, f64),
    pub update_history: Vec<f64>,
}

pub struct NanopteronSolution {
    pub workspace: Workspace,
    pub state: NanopteronState,
    pub report: SolveReport,
}

fn decay_rate_fit(f: &LocalizedField) -> f64 {
    // Least-squares slope of ln|f| on X ∈ [5, 15], skipping sub-noise points.
    let mut pts = Vec::new();
    for (i, &x) in f.grid.x().iter().enumerate() {
        if (5.0..=15.0).contains(&x) {
            let v = f.values[i].abs();
            if v > 1e-14 * f.sup_norm().max(1e-300) {
                pts.push((x, v.ln()));
            }
        }
    }
    if pts.len() < 8 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    -(n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Iterate the fixed-point map from the zero state to convergence and
/// certify the result.
pub fn iterate_nanopteron(
    p: &DimerParams,
    cfg: &NanopteronConfig,
) -> Result<NanopteronSolution> {
    let ws = Workspace::new(p, cfg)?;
    let mut state = NanopteronState::zero(&ws)?;
    let mut history: Vec<f64> = Vec::new();
    let mut min_update = f64::INFINITY;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (next, info) = n_step(&ws, &state)?;
        history.push(info.update_norm);
        state = next;
        let update = info.update_norm;
        if update < cfg.tol {
            break;
        }
        if update > 5.0 * min_update {
            return Err(CoreError::Diverged {
                iterations,
                history,
            });
        }
        min_update = min_update.min(update);
        if iterations >= cfg.max_iter {
            return Err(CoreError::MaxIter {
                max_iter: cfg.max_iter,
                last_update: update,
            });
        }
    }

    let final_update = *history.last().unwrap_or(&f64::INFINITY);

    // Final certificates on the converged state.
    let theta_res = theta_residual(&ws, &state)?;
    let h_res = h_system_residual(&ws, &state)?;
    let terms = assemble_forcing(&ws, &state)?;
    let sum_l = terms
        .l
        .iter()
        .skip(1)
        .fold(terms.l[0].clone(), |acc, t| acc.add(t));
    let (_, p_diag) = p_eps_solve(&ws, &sum_l)?;
    // Weight rate for the reported norms. The profile decays like e^{−q₀|X|},
    // so any q below q₀ certifies exponential decay; but cosh(qL) also
    // amplifies the zone-edge regularization tail sitting at the box edge by
    // e^{qL}. q₀/8 keeps that amplification (≈700 at L = 40) well under the
    // core/tail ratio across the sweep range, so the norms measure the
    // solution, not the regularization floor.
    let q = ws.p.q0 / 8.0;
    let norms = |f: &LocalizedField| -> Result<[f64; 3]> {
        Ok([
            f.weighted_norm(0, q)?,
            f.weighted_norm(1, q)?,
            f.weighted_norm(2, q)?,
        ])
    };
    let report = SolveReport {
        w: ws.p.w,
        eps: ws.p.eps,
        grid_n: ws.grid.n,
        grid_l: ws.grid.l,
        iterations,
        final_update_norm: final_update,
        theta_residual: theta_res,
        a_value: state.a,
        ripple_t_shift: state.ripple.t_shift,
        ripple_residual: state.ripple.residual,
        eta_norms: EtaNorms {
            eta1: norms(&state.eta1)?,
            eta2: norms(&state.eta2)?,
            weight_q: q,
        },
        kappa_eps: ws.kappa,
        kappa_star: ws.kappa_star,
        amplitude_consistency: p_diag.consistency_rel,
        h_residual: h_res,
        boundary_ratio: (state.eta1.boundary_ratio(), state.eta2.boundary_ratio()),
        eta1_decay_rate: decay_rate_fit(&state.eta1),
        parity_defect: (state.eta1.parity_defect(), state.eta2.parity_defect()),
        update_history: history,
    };
    Ok(NanopteronSolution {
        workspace: ws,
        state,
        report,
    })
}

/// Leading-order lattice profile shared by both sublattices:
/// 2(1+w)ε²σ₀ sech²(q₀εx).
pub fn leading_order_profile(p: &DimerParams, x: f64) -> f64 {
    let s = 1.0 / (p.q0 * p.eps * x).cosh();
    2.0 * (1.0 + p.w) * p.eps * p.eps * p.sigma0 * s * s
}

/// One refined-table representation of a modulated field for fast repeated
/// evaluation at arbitrary points: grid envelopes are spectrally upsampled
/// and read through cubic interpolation; constant carriers stay exact.
pub struct RefinedField {
    l: f64,
    dx_fine: f64,
    tables: Vec<(f64, Vec<C64>)>,
    constants: Vec<(f64, C64)>,
}

const REFINE_FACTOR: usize = 8;

impl RefinedField {
    fn build(f: &ModulatedField) -> Self {
        let grid = &f.grid;
        let nf = grid.n * REFINE_FACTOR;
        let mut tables = Vec::new();
        let mut constants = Vec::new();
        for c in &f.carriers {
            match &c.env {
                EnvData::Constant(v) => constants.push((c.freq, *v)),
                EnvData::Grid(v) => {
                    let mut spec = v.clone();
                    grid.forward(&mut spec);
                    // Repack into the larger transform, preserving signed order.
                    let mut big = vec![C64::new(0.0, 0.0); nf];
                    let half = grid.n / 2;
                    for m in 0..grid.n {
                        let dst = if m <= half { m } else { nf - (grid.n - m) };
                        big[dst] = spec[m] * REFINE_FACTOR as f64;
                    }
                    // Split the Nyquist bin symmetrically to keep realness
                    // conventions intact after upsampling.
                    let nyq = big[half];
                    big[half] = 0.5 * nyq;
                    big[nf - half] += 0.5 * nyq;
                    let plan = rustfft::FftPlanner::new().plan_fft_inverse(nf);
                    plan.process(&mut big);
                    for v in big.iter_mut() {
                        *v /= nf as f64;
                    }
                    tables.push((c.freq, big));
                }
            }
        }
        Self {
            l: grid.l,
            dx_fine: 2.0 * grid.l / nf as f64,
            tables,
            constants,
        }
    }

    /// Complex value at X. Grid envelopes are treated as compactly supported
    /// on [−L, L]: beyond the box their true content sits at the
    /// regularization floor, and wrapping them would paint spurious copies of
    /// the core onto long chains. Carrier constants use the unwrapped X.
    pub fn eval(&self, x: f64) -> C64 {
        let mut out = self.eval_localized(x);
        for (freq, v) in &self.constants {
            out += v * C64::new(0.0, freq * x).exp();
        }
        out
    }

    /// Localized (grid-envelope) part only: the decaying content without the
    /// non-decaying carrier constants.
    pub fn eval_localized(&self, x: f64) -> C64 {
        let mut out = C64::new(0.0, 0.0);
        if !self.tables.is_empty() && x.abs() <= self.l {
            let period = 2.0 * self.l;
            let xw = x - period * ((x + self.l) / period).floor();
            for (freq, table) in &self.tables {
                let n = table.len();
                let t = (xw + self.l) / self.dx_fine;
                let i1 = t.floor() as isize;
                let s = t - i1 as f64;
                let idx = |i: isize| -> C64 { table[i.rem_euclid(n as isize) as usize] };
                let (p0, p1, p2, p3) = (idx(i1 - 1), idx(i1), idx(i1 + 1), idx(i1 + 2));
                // Catmull-Rom in the complex envelope.
                let env = p1
                    + (p2 - p0) * (0.5 * s)
                    + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * (0.5 * s * s)
                    + (p3 - p0 + (p1 - p2) * 3.0) * (0.5 * s * s * s);
                out += env * C64::new(0.0, freq * x).exp();
            }
        }
        out
    }
}

/// Physical lattice profiles: relative displacement on odd/even sites and
/// its derivative, as functions of the traveling variable x = j − ct.
pub struct LatticeWaveProfile {
    pub eps: f64,
    pub c_eps: f64,
    pub a: f64,
    /// Ripple period in lattice units: 2π/(ε·ω_a).
    pub period: f64,
    u: [RefinedField; 2],
    du: [RefinedField; 2],
}

impl LatticeWaveProfile {
    /// (p₁, p₂) at traveling coordinate x (lattice units).
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let big_x = self.eps * x;
        let s = self.eps * self.eps;
        (
            s * self.u[0].eval(big_x).re,
            s * self.u[1].eval(big_x).re,
        )
    }

    /// (p₁′, p₂′) at x; velocities of the traveling wave are −c·p′.
    pub fn eval_derivative(&self, x: f64) -> (f64, f64) {
        let big_x = self.eps * x;
        let s = self.eps * self.eps * self.eps;
        (
            s * self.du[0].eval(big_x).re,
            s * self.du[1].eval(big_x).re,
        )
    }

    /// Decaying core of (p₁, p₂) alone, with the ripple left out; used to
    /// check that a periodic chain is long enough to hold the wave.
    pub fn eval_core(&self, x: f64) -> (f64, f64) {
        let big_x = self.eps * x;
        let s = self.eps * self.eps;
        (
            s * self.u[0].eval_localized(big_x).re,
            s * self.u[1].eval_localized(big_x).re,
        )
    }
}

/// Undo the long-wave scaling: p = J₂h with h = ε²θ(ε·), evaluated through
/// the frame map in the scaled variable.
pub fn descale(ws: &Workspace, state: &NanopteronState) -> Result<LatticeWaveProfile> {
    let p = ws.p;
    let theta = theta_composite(ws, state)?;
    let sum = theta.0.add(&theta.1);
    let diff = theta.0.add(&theta.1.scale(C64::new(-1.0, 0.0)));
    let u1 = sum.apply_symbol("gamma*beta", 0.0, move |kk| {
        let k = p.eps * kk;
        p.gamma(k) * p.beta(k)
    })?;
    let u2 = diff.apply_symbol("gamma*rho", 0.0, move |kk| {
        let k = p.eps * kk;
        p.gamma(k) * C64::new(p.rho(k), 0.0)
    })?;
    let ddx = |f: &ModulatedField| f.apply_symbol("d/dX", 0.0, |kk| C64::new(0.0, kk));
    let du1 = ddx(&u1)?;
    let du2 = ddx(&u2)?;
    Ok(LatticeWaveProfile {
        eps: p.eps,
        c_eps: p.c_eps,
        a: state.a,
        period: 2.0 * std::f64::consts::PI / (p.eps * state.ripple.k_eps_a),
        u: [RefinedField::build(&u1), RefinedField::build(&u2)],
        du: [RefinedField::build(&du1), RefinedField::build(&du2)],
    })
}

/// Write the scaled profile (X, θ₁, θ₂, η₁, η₂) at full precision.
pub fn write_profile_csv(
    ws: &Workspace,
    state: &NanopteronState,
    path: &std::path::Path,
) -> Result<()> {
    let theta = theta_composite(ws, state)?;
    let cap = 2 * ws.ripple_cfg.m_max + 2;
    let omega = state.ripple.k_eps_a;
    let (per1, rest1) = theta.0.split_periodic(omega, cap)?;
    let (per2, rest2) = theta.1.split_periodic(omega, cap)?;
    let t1 = rest1.flatten(FieldParity::Even)?;
    let t2 = rest2.flatten(FieldParity::Odd)?;
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["X", "theta1", "theta2", "eta1", "eta2"])?;
    for (i, &x) in ws.grid.x().iter().enumerate() {
        let ph1: C64 = (-(per1.m_max as i64)..=per1.m_max as i64)
            .map(|m| per1.get(m) * C64::new(0.0, omega * m as f64 * x).exp())
            .sum();
        let ph2: C64 = (-(per2.m_max as i64)..=per2.m_max as i64)
            .map(|m| per2.get(m) * C64::new(0.0, omega * m as f64 * x).exp())
            .sum();
        wtr.write_record([
            format!("{x:.16e}"),
            format!("{:.16e}", t1.values[i] + ph1.re),
            format!("{:.16e}", t2.values[i] + ph2.re),
            format!("{:.16e}", state.eta1.values[i]),
            format!("{:.16e}", state.eta2.values[i]),
        ])?;
    }
    wtr.flush().map_err(std::io::Error::from)?;
    Ok(())
}

/// Write lattice samples (j, r_j, v_j) of the traveling wave at t = 0 with
/// the core at site j0.
pub fn write_lattice_csv(
    profile: &LatticeWaveProfile,
    sites: usize,
    j0: f64,
    path: &std::path::Path,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["j", "r", "v"])?;
    for j in 0..sites {
        let x = j as f64 - j0;
        let (p1, p2) = profile.eval(x);
        let (d1, d2) = profile.eval_derivative(x);
        let (r, d) = if j % 2 == 1 { (p1, d1) } else { (p2, d2) };
        wtr.write_record([
            j.to_string(),
            format!("{r:.16e}"),
            format!("{:.16e}", -profile.c_eps * d),
        ])?;
    }
    wtr.flush().map_err(std::io::Error::from)?;
    Ok(())
}
