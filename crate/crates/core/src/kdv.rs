//! The formal long-wave limit layer.
//!
//! At ε = 0 the traveling-wave system collapses to the KdV profile equation
//! α_w σ″ − σ + 4w σ² = 0, solved by σ(X) = σ₀ sech²(q₀X) with σ₀ = 3/(8w)
//! and q₀ = 1/(2√α_w). Equivalently, σ is a fixed point of the multiplier
//! form σ + ϖ⁰ b₁⁰(σ,σ) = 0, where ϖ̃⁰(K) = −c_w²/(1 + α_wK²) and B⁰ is the
//! k → 0 limit of the diagonalized bilinear map.
//!
//! The linearization about σ in the first (acoustic) component is
//! 𝒜 = 1 + 4(1+w) ϖ⁰(σ·). On even functions 𝒜 is boundedly invertible; on
//! odd functions it has the translation mode σ′ in its (near-)kernel, which
//! is why the whole construction restricts to even data.

use std::sync::{Arc, Mutex};

use crate::field::{FieldParity, Grid, LocalizedField, C64};
use crate::params::DimerParams;
use crate::{tol, CoreError, Result};

/// Leading-order solitary profile σ₀ sech²(q₀X) on a grid.
#[derive(Debug, Clone)]
pub struct KdvProfile {
    pub sigma: LocalizedField,
    pub params: DimerParams,
}

impl KdvProfile {
    pub fn new(p: &DimerParams, grid: &Arc<Grid>) -> Self {
        let (s0, q0) = (p.sigma0, p.q0);
        let mut sigma =
            LocalizedField::from_fn(grid, FieldParity::Even, |x| s0 / (q0 * x).cosh().powi(2));
        sigma.decay_rate = Some(2.0 * q0);
        Self {
            sigma,
            params: *p,
        }
    }
}

/// α_w f″ − f + 4w f² with a spectral second derivative.
pub fn kdv_residual(p: &DimerParams, f: &LocalizedField) -> Result<LocalizedField> {
    let d2 = f.derivative(2)?;
    let mut out = d2.clone();
    for ((o, &v), &dd) in out.values.iter_mut().zip(&f.values).zip(&d2.values) {
        *o = p.alpha_w * dd - v + 4.0 * p.w * v * v;
    }
    Ok(out)
}

/// B⁰(θ, θ̀) = 2(1+w)·(θ₁θ̀₁ + θ₂θ̀₂, θ₁θ̀₂ + θ₂θ̀₁) pointwise.
pub fn b0_pair(
    p: &DimerParams,
    theta: (&LocalizedField, &LocalizedField),
    other: (&LocalizedField, &LocalizedField),
) -> Result<(LocalizedField, LocalizedField)> {
    let n = theta.0.grid.n;
    if other.0.grid.n != n || theta.0.grid.l != other.0.grid.l {
        return Err(CoreError::Grid("bilinear map arguments on different grids".into()));
    }
    let c = 2.0 * (1.0 + p.w);
    let mut first = LocalizedField::zeros(&theta.0.grid, FieldParity::None);
    let mut second = LocalizedField::zeros(&theta.0.grid, FieldParity::None);
    for i in 0..n {
        let (t1, t2) = (theta.0.values[i], theta.1.values[i]);
        let (u1, u2) = (other.0.values[i], other.1.values[i]);
        first.values[i] = c * (t1 * u1 + t2 * u2);
        second.values[i] = c * (t1 * u2 + t2 * u1);
    }
    Ok((first, second))
}

/// Sup-norm of σ + ϖ⁰ b₁⁰(σ,σ), the fixed-point identity the profile solves.
pub fn sigma_identity_residual(p: &DimerParams, grid: &Arc<Grid>) -> Result<f64> {
    let prof = KdvProfile::new(p, grid);
    let s = &prof.sigma;
    let zero = LocalizedField::zeros(grid, FieldParity::Odd);
    let (b1, _) = b0_pair(p, (s, &zero), (s, &zero))?;
    let img = b1.apply_multiplier("varpi0", |k| C64::new(p.varpi0(k), 0.0), FieldParity::Even)?;
    let mut res: f64 = 0.0;
    for (a, b) in s.values.iter().zip(&img.values) {
        res = res.max((a + b).abs());
    }
    Ok(res)
}

/// How an inverse was obtained, with its certification numbers.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InverseDiagnostics {
    pub method: String,
    pub iterations: usize,
    /// ‖𝒜u − g‖_sup / ‖g‖_sup after the solve.
    pub residual_rel: f64,
}

/// The linearized acoustic operator 𝒜 = 1 + 4(1+w)ϖ⁰(σ·) on a fixed grid,
/// with a cached dense even-subspace factorization on small grids.
pub struct AcousticOperator {
    pub params: DimerParams,
    pub grid: Arc<Grid>,
    pub sigma: LocalizedField,
    dense_cache: Mutex<Option<Arc<DenseLu>>>,
}

/// Largest grid for which the even-subspace dense factorization is built;
/// beyond this the matrix-free Krylov path is used alone.
pub const DENSE_FALLBACK_MAX_N: usize = 2048;

impl AcousticOperator {
    pub fn new(p: &DimerParams, grid: &Arc<Grid>) -> Self {
        let prof = KdvProfile::new(p, grid);
        Self {
            params: *p,
            grid: grid.clone(),
            sigma: prof.sigma,
            dense_cache: Mutex::new(None),
        }
    }

    fn check_even(&self, f: &LocalizedField, what: &str) -> Result<()> {
        if f.parity != FieldParity::Even {
            return Err(CoreError::Parity(format!(
                "{what} requires an even field, got {:?}",
                f.parity
            )));
        }
        let d = f.parity_defect();
        if d > tol::PARITY_DEFECT * f.sup_norm().max(1.0) {
            return Err(CoreError::Parity(format!(
                "{what}: declared-even field has parity defect {d:e}"
            )));
        }
        Ok(())
    }

    /// 𝒜f = f + 4(1+w) ϖ⁰(σ·f).
    pub fn apply(&self, f: &LocalizedField) -> Result<LocalizedField> {
        self.check_even(f, "acoustic operator")?;
        Ok(self.apply_raw(&f.values, FieldParity::Even))
    }

    fn apply_raw(&self, values: &[f64], parity: FieldParity) -> LocalizedField {
        let p = &self.params;
        let mut prod = LocalizedField {
            grid: self.grid.clone(),
            values: values
                .iter()
                .zip(&self.sigma.values)
                .map(|(v, s)| v * s)
                .collect(),
            parity,
            decay_rate: None,
        };
        prod = prod
            .apply_multiplier("varpi0", |k| C64::new(p.varpi0(k), 0.0), parity)
            .expect("entire symbol on real data cannot fail");
        let c = 4.0 * (1.0 + p.w);
        LocalizedField {
            grid: self.grid.clone(),
            values: values
                .iter()
                .zip(&prod.values)
                .map(|(v, q)| v + c * q)
                .collect(),
            parity,
            decay_rate: None,
        }
    }

    /// Solve 𝒜u = g on the even subspace. Dense LU when the grid is small
    /// enough, matrix-free GMRES (with even symmetrization per application)
    /// otherwise; either way the result is certified by a residual check.
    pub fn inverse(&self, g: &LocalizedField) -> Result<(LocalizedField, InverseDiagnostics)> {
        self.check_even(g, "acoustic inverse")?;
        let mut rhs = g.clone();
        rhs.symmetrize();
        let (values, method, iterations) = if self.grid.n <= DENSE_FALLBACK_MAX_N {
            let lu = self.dense_even_lu()?;
            (lu.solve_full(&rhs.values, &self.grid), "dense-even-lu".to_string(), 1)
        } else {
            let (v, it) = self.gmres_even(&rhs.values)?;
            (v, "gmres".to_string(), it)
        };
        let mut u = LocalizedField {
            grid: self.grid.clone(),
            values,
            parity: FieldParity::Even,
            decay_rate: None,
        };
        u.symmetrize();
        let back = self.apply_raw(&u.values, FieldParity::Even);
        let g_sup = rhs.sup_norm().max(1e-300);
        let mut res: f64 = 0.0;
        for (b, r) in back.values.iter().zip(&rhs.values) {
            res = res.max((b - r).abs());
        }
        let residual_rel = res / g_sup;
        if residual_rel > tol::A_INVERSE_POST {
            return Err(CoreError::PostCheck {
                residual: residual_rel,
                bound: tol::A_INVERSE_POST,
                context: format!(
                    "acoustic inverse via {method} after {iterations} iterations \
                     (even-subspace conditioning suspect)"
                ),
            });
        }
        Ok((
            u,
            InverseDiagnostics {
                method,
                iterations,
                residual_rel,
            },
        ))
    }

    fn symmetrize_even(&self, v: &mut [f64]) {
        let n = self.grid.n;
        for i in 1..n / 2 {
            let j = n - i;
            let avg = 0.5 * (v[i] + v[j]);
            v[i] = avg;
            v[j] = avg;
        }
    }

    fn gmres_even(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = rhs.len();
        let max_iter = 400.min(n);
        let apply = |v: &[f64]| -> Vec<f64> {
            let mut out = self.apply_raw(v, FieldParity::Even).values;
            self.symmetrize_even(&mut out);
            out
        };
        let norm = |v: &[f64]| -> f64 { v.iter().map(|x| x * x).sum::<f64>().sqrt() };
        let b_norm = norm(rhs);
        if b_norm == 0.0 {
            return Ok((vec![0.0; n], 0));
        }
        // Full GMRES with modified Gram-Schmidt from the zero initial guess.
        let mut basis: Vec<Vec<f64>> = vec![rhs.iter().map(|v| v / b_norm).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut beta = vec![b_norm];
        for j in 0..max_iter {
            let mut wv = apply(&basis[j]);
            let mut hj = vec![0.0; j + 2];
            for (i, q) in basis.iter().enumerate() {
                let dot: f64 = wv.iter().zip(q).map(|(a, b)| a * b).sum();
                hj[i] = dot;
                for (x, y) in wv.iter_mut().zip(q) {
                    *x -= dot * y;
                }
            }
            let wnorm = norm(&wv);
            hj[j + 1] = wnorm;
            // Apply accumulated Givens rotations to the new column.
            for i in 0..j {
                let t = cs[i] * hj[i] + sn[i] * hj[i + 1];
                hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
                hj[i] = t;
            }
            let r = (hj[j] * hj[j] + hj[j + 1] * hj[j + 1]).sqrt();
            let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (hj[j] / r, hj[j + 1] / r) };
            cs.push(c);
            sn.push(s);
            hj[j] = r;
            hj[j + 1] = 0.0;
            h.push(hj);
            beta.push(-s * beta[j]);
            beta[j] *= c;
            let rel = beta[j + 1].abs() / b_norm;
            if rel < tol::LINEAR_SOLVE || j + 1 == max_iter || wnorm < 1e-300 {
                // Back-substitute y from the triangular system, assemble u.
                let m = j + 1;
                let mut y = vec![0.0; m];
                for i in (0..m).rev() {
                    let mut acc = beta[i];
                    for l in i + 1..m {
                        acc -= h[l][i] * y[l];
                    }
                    if h[i][i].abs() < 1e-300 {
                        return Err(CoreError::LinearSolve(
                            "Krylov breakdown: singular Hessenberg pivot".into(),
                        ));
                    }
                    y[i] = acc / h[i][i];
                }
                let mut u = vec![0.0; n];
                for (l, yl) in y.iter().enumerate() {
                    for (x, q) in u.iter_mut().zip(&basis[l]) {
                        *x += yl * q;
                    }
                }
                if rel >= tol::LINEAR_SOLVE && wnorm >= 1e-300 {
                    return Err(CoreError::LinearSolve(format!(
                        "Krylov stalled at relative residual {rel:e} after {m} iterations"
                    )));
                }
                return Ok((u, m));
            }
            for v in wv.iter_mut() {
                *v /= wnorm;
            }
            basis.push(wv);
        }
        unreachable!("loop exits through the convergence branch");
    }

    fn dense_even_lu(&self) -> Result<Arc<DenseLu>> {
        let mut cache = self.dense_cache.lock().unwrap();
        if let Some(lu) = cache.as_ref() {
            return Ok(lu.clone());
        }
        let mat = self.dense_subspace_matrix(FieldParity::Even);
        let lu = Arc::new(DenseLu::factor(mat).map_err(CoreError::LinearSolve)?);
        *cache = Some(lu.clone());
        Ok(lu.clone())
    }

    /// Dense matrix of 𝒜 restricted to the given parity subspace, in the
    /// paired-delta basis (representatives at grid indices 0..=N/2 for even,
    /// 1..N/2 for odd).
    pub fn dense_subspace_matrix(&self, parity: FieldParity) -> Vec<Vec<f64>> {
        let n = self.grid.n;
        let reps: Vec<usize> = match parity {
            FieldParity::Even => (0..=n / 2).collect(),
            FieldParity::Odd => (1..n / 2).collect(),
            FieldParity::None => panic!("subspace matrix needs a definite parity"),
        };
        let sign = if parity == FieldParity::Even { 1.0 } else { -1.0 };
        let dim = reps.len();
        let mut cols = Vec::with_capacity(dim);
        for &j in &reps {
            let mut v = vec![0.0; n];
            v[j] = 1.0;
            let r = self.grid.reflect_index(j);
            if r != j {
                v[r] = sign;
            }
            let img = self.apply_raw(&v, parity);
            cols.push(img.values);
        }
        let mut mat = vec![vec![0.0; dim]; dim];
        for (bj, col) in cols.iter().enumerate() {
            for (ai, &i) in reps.iter().enumerate() {
                mat[ai][bj] = col[i];
            }
        }
        mat
    }

    /// Smallest-singular-value estimate of the subspace matrix by inverse
    /// power iteration on AᵀA (LU solves with A and Aᵀ). Diagnostic; intended
    /// for grids within the dense budget.
    pub fn smallest_singular_estimate(&self, parity: FieldParity) -> Result<f64> {
        let mat = self.dense_subspace_matrix(parity);
        let lu = DenseLu::factor(mat).map_err(CoreError::LinearSolve)?;
        let dim = lu.dim();
        let mut v: Vec<f64> = (0..dim).map(|i| ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5).collect();
        let mut rho = 0.0;
        for _ in 0..60 {
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= nv;
            }
            // u = (AᵀA)⁻¹ v = A⁻¹ (Aᵀ)⁻¹ v.
            let t = lu.solve_transpose(&v);
            let u = lu.solve(&t);
            rho = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            v = u;
        }
        if rho <= 0.0 {
            return Err(CoreError::LinearSolve(
                "inverse power iteration failed to produce a positive Rayleigh quotient".into(),
            ));
        }
        Ok(rho.powf(-0.5))
    }
}

/// Plain dense LU with partial pivoting (row-major, PA = LU).
pub struct DenseLu {
    lu: Vec<Vec<f64>>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(mut a: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let n = a.len();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut imax, mut vmax) = (k, a[k][k].abs());
            for i in k + 1..n {
                if a[i][k].abs() > vmax {
                    imax = i;
                    vmax = a[i][k].abs();
                }
            }
            if vmax < 1e-300 {
                return Err(format!("singular pivot at column {k}"));
            }
            a.swap(k, imax);
            piv.swap(k, imax);
            let pivot = a[k][k];
            for i in k + 1..n {
                let f = a[i][k] / pivot;
                a[i][k] = f;
                if f != 0.0 {
                    let (upper, lower) = a.split_at_mut(i);
                    let row_k = &upper[k];
                    let row_i = &mut lower[0];
                    for j in k + 1..n {
                        row_i[j] -= f * row_k[j];
                    }
                }
            }
        }
        Ok(Self { lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.lu.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i][j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i][j] * x[j];
            }
            x[i] = acc / self.lu[i][i];
        }
        x
    }

    /// Solve Aᵀx = b using the same factorization (Aᵀ = UᵀLᵀPᵀ... applied in
    /// reverse order: forward with Uᵀ, back with Lᵀ, then unpivot).
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[j][i] * x[j];
            }
            x[i] = acc / self.lu[i][i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[j][i] * x[j];
            }
            x[i] = acc;
        }
        let mut out = vec![0.0; n];
        for (i, &p) in self.piv.iter().enumerate() {
            out[p] = x[i];
        }
        out
    }

    /// Solve on the full grid: restrict the (symmetrized, even) right side to
    /// representatives, solve, and unfold by reflection.
    fn solve_full(&self, rhs: &[f64], grid: &Grid) -> Vec<f64> {
        let n = grid.n;
        let b: Vec<f64> = (0..=n / 2).map(|i| rhs[i]).collect();
        let x = self.solve(&b);
        let mut out = vec![0.0; n];
        for (i, &v) in x.iter().enumerate() {
            out[i] = v;
            out[grid.reflect_index(i)] = v;
        }
        out
    }
}
