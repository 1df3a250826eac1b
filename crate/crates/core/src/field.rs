//! Spectral fields on a truncated scaled line.
//!
//! Fourier conventions: on the line, f̂(k) = (1/2π)∫ f(x) e^{−ikx} dx and
//! f(x) = ∫ f̂(k) e^{ikx} dk; a multiplier μ acts by (μf)^(k) = μ̃(k)f̂(k).
//! Discretely, a [`Grid`] samples [−L, L) at N points and the discrete
//! transform realizes multipliers exactly on resolved content.
//!
//! Periodic parts never live on the grid: the ripple frequency K_ε is
//! incommensurate with the grid wavenumbers, so periodic functions stay in
//! their own coefficient space ([`PeriodicFieldCoeffs`]) and interact with
//! localized fields only through [`ModulatedField`] — finite sums of carriers
//! e^{iΩX} with decaying (grid) or constant envelopes. Multipliers act on a
//! carrier through the shift theorem, μ(E e^{iΩ·}) = e^{iΩ·}·(μ(·+Ω)E), which
//! is exact and loses no resolution; products act pairwise on carriers; the
//! resonant functional ι is evaluated carrier by carrier at explicit
//! frequencies, so it never samples a symbol near a pole.

use std::sync::Arc;

use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::params::{zone_edge_distance, SymbolFn};
use crate::{tol, CoreError, Result};

pub type C64 = Complex64;

/// Relative imaginary residue tolerated when a Hermitian-multiplier result is
/// reduced to a real field.
const IMAG_DEFECT_REL: f64 = 1e-8;
/// Fraction of the Nyquist wavenumber a carrier may occupy and still be
/// flattened onto the grid (the rest is budget for its envelope spectrum).
const FLATTEN_FREQ_FRACTION: f64 = 0.5;
/// Fraction of the Nyquist wavenumber allowed for carrier frequencies kept in
/// carrier form (per-carrier operations are exact at any frequency; this only
/// guards against runaway products).
const CARRIER_FREQ_FRACTION: f64 = 0.95;

/// Parity class of a field on [−L, L).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FieldParity {
    Even,
    Odd,
    None,
}

/// Uniform grid on [−L, L) with cached transform plans.
pub struct Grid {
    pub n: usize,
    pub l: f64,
    pub dx: f64,
    pub dk: f64,
    x: Vec<f64>,
    k: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("l", &self.l)
            .finish()
    }
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Result<Arc<Self>> {
        if !n.is_power_of_two() || n < 16 {
            return Err(CoreError::Grid(format!(
                "point count must be a power of two ≥ 16, got {n}"
            )));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(CoreError::Grid(format!("half-length must be positive, got {l}")));
        }
        let dx = 2.0 * l / n as f64;
        let dk = std::f64::consts::PI / l;
        let x = (0..n).map(|i| -l + dx * i as f64).collect();
        // Standard discrete-transform ordering: m, then m − N for m ≥ N/2.
        let k = (0..n)
            .map(|m| {
                let signed = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
                dk * signed
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            n,
            l,
            dx,
            dk,
            x,
            k,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }))
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Wavenumbers in transform ordering.
    pub fn k(&self) -> &[f64] {
        &self.k
    }

    /// Wavenumbers sorted ascending.
    pub fn k_sorted(&self) -> Vec<f64> {
        let mut ks = self.k.clone();
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ks
    }

    /// Nyquist wavenumber π/dx.
    pub fn k_nyquist(&self) -> f64 {
        std::f64::consts::PI / self.dx
    }

    pub fn forward(&self, buf: &mut [C64]) {
        self.fft.process(buf);
    }

    pub fn inverse_normalized(&self, buf: &mut [C64]) {
        self.ifft.process(buf);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Index of the reflected point −x (x = −L maps to itself).
    pub fn reflect_index(&self, i: usize) -> usize {
        (self.n - i) % self.n
    }
}

/// Order-preserving map over 0..n, data-parallel when the `parallel` feature
/// is on. Elements are computed independently, so both paths produce
/// bit-identical output. `grain` is the minimum elements per task: large for
/// cheap per-element work, 1 when each element is itself a heavy kernel.
pub(crate) fn map_indexed<T: Send>(
    n: usize,
    grain: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().with_min_len(grain).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = grain;
        (0..n).map(f).collect()
    }
}

/// Max of f over 0..n (0.0 floor). Max is insensitive to evaluation order, so
/// the parallel reduction matches the sequential fold exactly.
pub(crate) fn sup_indexed(n: usize, grain: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .with_min_len(grain)
            .map(f)
            .reduce(|| 0.0, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = grain;
        (0..n).map(f).fold(0.0, f64::max)
    }
}

fn kahan_sum_c(values: impl Iterator<Item = C64>) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    let mut c = C64::new(0.0, 0.0);
    for v in values {
        let y = v - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

fn kahan_sum_f(values: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

fn check_symbol_finite(name: &str, k: f64, v: C64) -> Result<C64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(CoreError::SymbolNonFinite {
            name: name.to_string(),
            k,
        })
    }
}

/// Real field sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct LocalizedField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
    pub parity: FieldParity,
    /// Nominal exponential decay rate, diagnostic only.
    pub decay_rate: Option<f64>,
}

impl LocalizedField {
    pub fn from_fn(grid: &Arc<Grid>, parity: FieldParity, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.x().iter().map(|&x| f(x)).collect();
        Self {
            grid: grid.clone(),
            values,
            parity,
            decay_rate: None,
        }
    }

    pub fn zeros(grid: &Arc<Grid>, parity: FieldParity) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.n],
            parity,
            decay_rate: None,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// a·self + b·other, with the stated output parity tag.
    pub fn combine(&self, a: f64, other: &Self, b: f64, parity: FieldParity) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(u, v)| a * u + b * v)
                .collect(),
            parity,
            decay_rate: None,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| s * v).collect(),
            parity: self.parity,
            decay_rate: self.decay_rate,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx * kahan_sum_f(self.values.iter().map(|v| v * v))).sqrt()
    }

    /// max |values| on the outer 5% of points (each side) over max |values|.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n;
        let band = (n / 20).max(1);
        let mut edge: f64 = 0.0;
        for i in 0..band {
            edge = edge.max(self.values[i].abs());
            edge = edge.max(self.values[n - 1 - i].abs());
        }
        let m = self.sup_norm();
        if m == 0.0 {
            0.0
        } else {
            edge / m
        }
    }

    /// Largest violation of the declared parity rule.
    pub fn parity_defect(&self) -> f64 {
        let sign = match self.parity {
            FieldParity::Even => 1.0,
            FieldParity::Odd => -1.0,
            FieldParity::None => return 0.0,
        };
        let mut d: f64 = 0.0;
        for i in 0..self.grid.n {
            let j = self.grid.reflect_index(i);
            d = d.max((self.values[i] - sign * self.values[j]).abs());
        }
        d
    }

    /// Project onto the declared parity class (averages reflected samples).
    pub fn symmetrize(&mut self) {
        let sign = match self.parity {
            FieldParity::Even => 1.0,
            FieldParity::Odd => -1.0,
            FieldParity::None => return,
        };
        let n = self.grid.n;
        let old = self.values.clone();
        for i in 0..n {
            let j = self.grid.reflect_index(i);
            self.values[i] = 0.5 * (old[i] + sign * old[j]);
        }
        if self.parity == FieldParity::Odd {
            self.values[0] = 0.0;
        }
    }

    pub fn to_complex(&self) -> Vec<C64> {
        self.values.iter().map(|&v| C64::new(v, 0.0)).collect()
    }

    /// Apply a scalar multiplier by closure. The symbol must be Hermitian
    /// (μ(−k) = conj μ(k)) so the result is real; the imaginary residue is
    /// checked before being dropped.
    pub fn apply_multiplier(
        &self,
        name: &str,
        sym: impl Fn(f64) -> C64,
        out_parity: FieldParity,
    ) -> Result<Self> {
        let mut buf = self.to_complex();
        self.grid.forward(&mut buf);
        for (m, v) in buf.iter_mut().enumerate() {
            let k = self.grid.k()[m];
            *v *= check_symbol_finite(name, k, sym(k))?;
        }
        self.grid.inverse_normalized(&mut buf);
        let scale = buf.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let imag = buf.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        if scale > 0.0 && imag > IMAG_DEFECT_REL * scale {
            return Err(CoreError::PostCheck {
                residual: imag / scale,
                bound: IMAG_DEFECT_REL,
                context: format!("non-Hermitian multiplier '{name}' produced an imaginary part"),
            });
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: buf.into_iter().map(|v| v.re).collect(),
            parity: out_parity,
            decay_rate: self.decay_rate,
        })
    }

    /// Spectral derivative of order r.
    pub fn derivative(&self, r: u32) -> Result<Self> {
        let parity = match (self.parity, r % 2) {
            (p, 0) => p,
            (FieldParity::Even, _) => FieldParity::Odd,
            (FieldParity::Odd, _) => FieldParity::Even,
            (FieldParity::None, _) => FieldParity::None,
        };
        self.apply_multiplier("(ik)^r", |k| C64::new(0.0, k).powu(r), parity)
    }

    /// ι_K[f] = ∫ f(X) sin(KX) dX by the trapezoid rule (spectrally accurate
    /// for smooth decaying integrands). A weak boundary tail attaches a warning.
    pub fn iota_quadrature(&self, k: f64) -> IotaValue {
        let dx = self.grid.dx;
        let value = dx
            * kahan_sum_f(
                self.values
                    .iter()
                    .zip(self.grid.x())
                    .map(|(&v, &x)| v * (k * x).sin()),
            );
        let br = self.boundary_ratio();
        let boundary_warning = if br > 1e-10 {
            Some(format!(
                "integrand boundary ratio {br:e} exceeds 1e-10; truncation may pollute ι"
            ))
        } else {
            None
        };
        IotaValue {
            value,
            boundary_warning,
        }
    }

    /// Discrete H^r norm of cosh(qX)·f with spectral derivatives.
    pub fn weighted_norm(&self, r: u32, q: f64) -> Result<f64> {
        if q < 0.0 || !q.is_finite() {
            return Err(CoreError::InvalidParams(format!("weight rate q = {q}")));
        }
        if q * self.grid.l > 700.0 {
            return Err(CoreError::InvalidParams(format!(
                "cosh({} × {}) overflows; use a smaller q or shorter domain",
                q, self.grid.l
            )));
        }
        let mut total = 0.0;
        let mut d = self.clone();
        for s in 0..=r {
            if s > 0 {
                d = d.derivative(1)?;
            }
            total += self.grid.dx
                * kahan_sum_f(d.values.iter().zip(self.grid.x()).map(|(&v, &x)| {
                    let w = (q * x).cosh();
                    (w * v) * (w * v)
                }));
        }
        Ok(total.sqrt())
    }

    /// True transform samples f̂(K_m) ≈ (dx/2π)·Σ_n f(x_n)e^{−iK_m x_n},
    /// in transform ordering.
    pub fn spectral(&self) -> Vec<C64> {
        let mut buf = self.to_complex();
        self.grid.forward(&mut buf);
        let s = self.grid.dx / (2.0 * std::f64::consts::PI);
        buf.iter_mut().enumerate().for_each(|(m, v)| {
            // x_0 = −L introduces the alternating phase e^{iK_m L} = (−1)^m.
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            *v *= s * sign;
        });
        buf
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["X", "value"])?;
        for (x, v) in self.grid.x().iter().zip(&self.values) {
            w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ι value with an optional truncation warning.
#[derive(Debug, Clone)]
pub struct IotaValue {
    pub value: f64,
    pub boundary_warning: Option<String>,
}

/// Spec-named wrapper: multiplier application to a localized field.
pub fn apply_multiplier_localized(sym: &SymbolFn, f: &LocalizedField) -> Result<LocalizedField> {
    let out_parity = match sym.parity {
        crate::params::Parity::Even => f.parity,
        _ => FieldParity::None,
    };
    f.apply_multiplier("symbol", |k| sym.eval(k), out_parity)
}

/// Periodic function as Fourier coefficients on modes −M..M of frequency
/// `k_fund`: f(X) = Σ_m c_m e^{i m k_fund X}.
#[derive(Debug, Clone)]
pub struct PeriodicFieldCoeffs {
    pub k_fund: f64,
    pub m_max: usize,
    /// Index m + m_max holds mode m.
    pub coeffs: Vec<C64>,
}

impl PeriodicFieldCoeffs {
    pub fn zeros(k_fund: f64, m_max: usize) -> Self {
        Self {
            k_fund,
            m_max,
            coeffs: vec![C64::new(0.0, 0.0); 2 * m_max + 1],
        }
    }

    pub fn get(&self, m: i64) -> C64 {
        if m.unsigned_abs() as usize > self.m_max {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(m + self.m_max as i64) as usize]
        }
    }

    pub fn set(&mut self, m: i64, v: C64) {
        let i = (m + self.m_max as i64) as usize;
        self.coeffs[i] = v;
    }

    /// max_m |c_{−m} − conj c_m| (zero for real-valued functions).
    pub fn realness_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for m in 0..=self.m_max as i64 {
            d = d.max((self.get(-m) - self.get(m).conj()).norm());
        }
        d
    }

    pub fn sup_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Multiply mode m by sym(m·k_fund).
    pub fn apply_symbol(&self, name: &str, sym: impl Fn(f64) -> C64) -> Result<Self> {
        let mut out = self.clone();
        for m in -(self.m_max as i64)..=(self.m_max as i64) {
            let k = self.k_fund * m as f64;
            let s = check_symbol_finite(name, k, sym(k))?;
            out.set(m, self.get(m) * s);
        }
        Ok(out)
    }

    /// Convolution product; the result carries modes up to the sum of inputs.
    pub fn product(&self, other: &Self) -> Self {
        let m_max = self.m_max + other.m_max;
        let mut out = Self::zeros(self.k_fund, m_max);
        for m1 in -(self.m_max as i64)..=(self.m_max as i64) {
            let a = self.get(m1);
            if a.norm() == 0.0 {
                continue;
            }
            for m2 in -(other.m_max as i64)..=(other.m_max as i64) {
                let b = other.get(m2);
                if b.norm() == 0.0 {
                    continue;
                }
                let i = (m1 + m2 + m_max as i64) as usize;
                out.coeffs[i] += a * b;
            }
        }
        out
    }

    pub fn truncated(&self, m_max: usize) -> Self {
        let mut out = Self::zeros(self.k_fund, m_max);
        for m in -(m_max as i64)..=(m_max as i64) {
            out.set(m, self.get(m));
        }
        out
    }

    /// Evaluate at n uniform phase samples Y_j = 2πj/n, Y = k_fund·X.
    pub fn eval_phase_samples(&self, n: usize) -> Vec<C64> {
        (0..n)
            .map(|j| {
                let y = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                kahan_sum_c((-(self.m_max as i64)..=(self.m_max as i64)).map(|m| {
                    self.get(m) * C64::new(0.0, m as f64 * y).exp()
                }))
            })
            .collect()
    }

    /// Sup norm over a phase-sample grid.
    pub fn sup_norm_sampled(&self, n: usize) -> f64 {
        self.eval_phase_samples(n)
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Geometric tail diagnostic: max |c_m| over |m| > m0.
    pub fn tail_sup(&self, m0: usize) -> f64 {
        let mut d: f64 = 0.0;
        for m in (m0 as i64 + 1)..=(self.m_max as i64) {
            d = d.max(self.get(m).norm());
            d = d.max(self.get(-m).norm());
        }
        d
    }

    /// CSV with a `# k_fund = …` header line, then mode,re,im records.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# k_fund = {:.16e}", self.k_fund)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["mode", "re", "im"])?;
        for m in -(self.m_max as i64)..=(self.m_max as i64) {
            let c = self.get(m);
            w.write_record([
                m.to_string(),
                format!("{:.16e}", c.re),
                format!("{:.16e}", c.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut k_fund = None;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# k_fund = ") {
                k_fund = rest.trim().parse::<f64>().ok();
            }
        }
        let k_fund = k_fund.ok_or_else(|| {
            CoreError::InvalidParams("missing '# k_fund =' header in coefficients CSV".into())
        })?;
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows: Vec<(i64, C64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let m: i64 = rec[0].parse().map_err(|e| {
                CoreError::InvalidParams(format!("bad mode index in CSV: {e}"))
            })?;
            let re: f64 = rec[1].parse().map_err(|e| {
                CoreError::InvalidParams(format!("bad coefficient in CSV: {e}"))
            })?;
            let im: f64 = rec[2].parse().map_err(|e| {
                CoreError::InvalidParams(format!("bad coefficient in CSV: {e}"))
            })?;
            rows.push((m, C64::new(re, im)));
        }
        let m_max = rows.iter().map(|(m, _)| m.unsigned_abs() as usize).max().unwrap_or(0);
        let mut out = Self::zeros(k_fund, m_max);
        for (m, c) in rows {
            out.set(m, c);
        }
        Ok(out)
    }
}

/// Spec-named wrapper: multiplier application in coefficient space.
pub fn apply_multiplier_periodic(
    sym: &SymbolFn,
    g: &PeriodicFieldCoeffs,
) -> Result<PeriodicFieldCoeffs> {
    g.apply_symbol("symbol", |k| sym.eval(k))
}

/// Envelope of one carrier.
#[derive(Debug, Clone)]
pub enum EnvData {
    /// Constant envelope: the carrier is c·e^{iΩX} exactly, at any Ω.
    Constant(C64),
    /// Grid-sampled envelope (complex samples on the parent grid).
    Grid(Vec<C64>),
}

impl EnvData {
    fn sup(&self) -> f64 {
        match self {
            EnvData::Constant(c) => c.norm(),
            EnvData::Grid(v) => v.iter().fold(0.0, |m, c| m.max(c.norm())),
        }
    }
}

/// One carrier e^{i freq X} with its envelope.
#[derive(Debug, Clone)]
pub struct Carrier {
    pub freq: f64,
    pub env: EnvData,
}

/// Finite sum of carriers: f(X) = Σ_c env_c(X) e^{i freq_c X}.
///
/// Real-valued fields are represented with conjugate-paired carriers; realness
/// is checked where it matters (flatten, ι) rather than enforced structurally.
#[derive(Debug, Clone)]
pub struct ModulatedField {
    pub grid: Arc<Grid>,
    /// Sorted by frequency; nearby frequencies (< [`tol::CARRIER_MERGE`]) merged.
    pub carriers: Vec<Carrier>,
}

impl ModulatedField {
    pub fn new(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            carriers: Vec::new(),
        }
    }

    /// A real grid field as the single carrier at frequency 0.
    pub fn from_real(f: &LocalizedField) -> Self {
        Self {
            grid: f.grid.clone(),
            carriers: vec![Carrier {
                freq: 0.0,
                env: EnvData::Grid(f.to_complex()),
            }],
        }
    }

    /// Periodic coefficients as constant-envelope carriers at m·k_fund,
    /// optionally scaled.
    pub fn from_periodic(grid: &Arc<Grid>, g: &PeriodicFieldCoeffs, scale: C64) -> Self {
        let mut out = Self::new(grid);
        for m in -(g.m_max as i64)..=(g.m_max as i64) {
            let c = g.get(m) * scale;
            if c.norm() > 0.0 {
                out.push_merge(Carrier {
                    freq: g.k_fund * m as f64,
                    env: EnvData::Constant(c),
                });
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.carriers.is_empty()
    }

    pub fn max_env_sup(&self) -> f64 {
        self.carriers.iter().fold(0.0, |m, c| m.max(c.env.sup()))
    }

    fn push_merge(&mut self, c: Carrier) {
        match self
            .carriers
            .iter_mut()
            .find(|e| (e.freq - c.freq).abs() < tol::CARRIER_MERGE)
        {
            Some(existing) => {
                existing.env = add_env(&existing.env, &c.env, self.grid.n);
            }
            None => {
                let pos = self
                    .carriers
                    .partition_point(|e| e.freq < c.freq);
                self.carriers.insert(pos, c);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for c in &other.carriers {
            out.push_merge(c.clone());
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let carriers = self
            .carriers
            .iter()
            .map(|c| Carrier {
                freq: c.freq,
                env: match &c.env {
                    EnvData::Constant(v) => EnvData::Constant(v * s),
                    EnvData::Grid(v) => EnvData::Grid(v.iter().map(|u| u * s).collect()),
                },
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            carriers,
        }
    }

    /// Drop carriers whose envelope sup is below the relative floor.
    pub fn prune(&mut self) {
        let floor = tol::CARRIER_PRUNE * self.max_env_sup();
        self.carriers.retain(|c| c.env.sup() > floor);
    }

    /// Pairwise carrier product. Frequencies add; envelopes multiply
    /// pointwise; the result is merged, pruned, and guarded against carrier
    /// frequencies that could never be used on this grid.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let pairs: Vec<(&Carrier, &Carrier)> = self
            .carriers
            .iter()
            .flat_map(|a| other.carriers.iter().map(move |b| (a, b)))
            .collect();
        let products = map_indexed(pairs.len(), 1, |i| {
            let (a, b) = pairs[i];
            Carrier {
                freq: a.freq + b.freq,
                env: mul_env(&a.env, &b.env, self.grid.n),
            }
        });
        let mut out = Self::new(&self.grid);
        for c in products {
            out.push_merge(c);
        }
        out.prune();
        let bound = CARRIER_FREQ_FRACTION * self.grid.k_nyquist();
        for c in &out.carriers {
            if c.freq.abs() > bound {
                return Err(CoreError::Resolution {
                    freq: c.freq,
                    bound,
                });
            }
        }
        Ok(out)
    }

    /// Apply a scalar multiplier. Constant envelopes pick up the exact factor
    /// sym(freq); grid envelopes go through the shift theorem with symbol
    /// sym(freq + k). `edge_guard` zeroes the symbol within that distance of a
    /// dispersion zone edge (for frame-inverse symbols with poles there); pass
    /// 0.0 for entire symbols. The guard tests the closure argument itself, so
    /// callers whose symbols rescale the wavenumber internally must build the
    /// guard into the closure instead.
    pub fn apply_symbol(
        &self,
        name: &str,
        edge_guard: f64,
        sym: impl Fn(f64) -> C64 + Sync + Send,
    ) -> Result<Self> {
        let guarded = |k: f64| -> C64 {
            if edge_guard > 0.0 && zone_edge_distance(k) < edge_guard {
                C64::new(0.0, 0.0)
            } else {
                sym(k)
            }
        };
        let mut out = Self::new(&self.grid);
        for c in &self.carriers {
            let env = match &c.env {
                EnvData::Constant(v) => {
                    let s = check_symbol_finite(name, c.freq, guarded(c.freq))?;
                    EnvData::Constant(v * s)
                }
                EnvData::Grid(v) => {
                    let mut buf = v.clone();
                    self.grid.forward(&mut buf);
                    let factors = map_indexed(buf.len(), 1024, |m| {
                        let k = c.freq + self.grid.k()[m];
                        check_symbol_finite(name, k, guarded(k))
                    });
                    for (u, s) in buf.iter_mut().zip(factors) {
                        *u *= s?;
                    }
                    self.grid.inverse_normalized(&mut buf);
                    EnvData::Grid(buf)
                }
            };
            out.push_merge(Carrier { freq: c.freq, env });
        }
        Ok(out)
    }

    /// Spectral mass removed by a zone-edge guard of the given width,
    /// relative to total spectral mass (diagnostic for the guarded symbols).
    pub fn edge_band_mass(&self, edge_guard: f64) -> f64 {
        let mut total = 0.0;
        let mut band = 0.0;
        for c in &self.carriers {
            match &c.env {
                EnvData::Constant(v) => {
                    let m = v.norm_sqr();
                    total += m;
                    if zone_edge_distance(c.freq) < edge_guard {
                        band += m;
                    }
                }
                EnvData::Grid(v) => {
                    let mut buf = v.clone();
                    self.grid.forward(&mut buf);
                    for (m, u) in buf.iter().enumerate() {
                        let k = c.freq + self.grid.k()[m];
                        let w = u.norm_sqr();
                        total += w;
                        if zone_edge_distance(k) < edge_guard {
                            band += w;
                        }
                    }
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            (band / total).sqrt()
        }
    }

    /// Collapse all grid-envelope carriers onto the grid as a real field.
    /// Errors on constant-envelope carriers (they have no decay and belong in
    /// coefficient space) and on carrier frequencies too large to flatten.
    pub fn flatten(&self, parity: FieldParity) -> Result<LocalizedField> {
        self.flatten_scaled(parity, 0.0)
    }

    /// Triangle-inequality bound on the pointwise sup: the sum of carrier
    /// envelope sups. The natural scale of a field assembled by cancelation.
    pub fn envelope_sup_sum(&self) -> f64 {
        self.carriers.iter().map(|c| c.env.sup()).sum()
    }

    /// [`Self::flatten`] with the reality check priced against
    /// `max(own sup, floor)`. Residual differences of large terms are near
    /// zero by design; their rounding-level imaginary part must be measured
    /// against the terms that were subtracted, not the difference.
    pub fn flatten_scaled(&self, parity: FieldParity, floor: f64) -> Result<LocalizedField> {
        let bound = FLATTEN_FREQ_FRACTION * self.grid.k_nyquist();
        for c in &self.carriers {
            match &c.env {
                EnvData::Constant(v) => {
                    if v.norm() > 0.0 {
                        return Err(CoreError::InvalidParams(format!(
                            "flatten: constant-envelope carrier at frequency {} (periodic content \
                             must be split off first)",
                            c.freq
                        )));
                    }
                }
                EnvData::Grid(_) => {
                    if c.freq.abs() > bound {
                        return Err(CoreError::Resolution {
                            freq: c.freq,
                            bound,
                        });
                    }
                }
            }
        }
        let acc = map_indexed(self.grid.n, 512, |i| {
            let x = self.grid.x()[i];
            let mut s = C64::new(0.0, 0.0);
            for c in &self.carriers {
                if let EnvData::Grid(v) = &c.env {
                    s += v[i] * C64::new(0.0, c.freq * x).exp();
                }
            }
            s
        });
        let scale = acc
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()))
            .max(floor);
        let imag = acc.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        if scale > 0.0 && imag > IMAG_DEFECT_REL * scale {
            return Err(CoreError::PostCheck {
                residual: imag / scale,
                bound: IMAG_DEFECT_REL,
                context: "flatten of a non-real carrier sum".into(),
            });
        }
        Ok(LocalizedField {
            grid: self.grid.clone(),
            values: acc.into_iter().map(|v| v.re).collect(),
            parity,
            decay_rate: None,
        })
    }

    /// Split off the purely periodic content: constant-envelope carriers are
    /// folded into coefficient space on frequency `omega` (each carrier must
    /// sit on an integer multiple), grid-envelope carriers remain.
    pub fn split_periodic(&self, omega: f64, m_max: usize) -> Result<(PeriodicFieldCoeffs, Self)> {
        let mut per = PeriodicFieldCoeffs::zeros(omega, m_max);
        let mut rest = Self::new(&self.grid);
        for c in &self.carriers {
            match &c.env {
                EnvData::Constant(v) => {
                    let mf = c.freq / omega;
                    let m = mf.round() as i64;
                    if (mf - m as f64).abs() > 1e-6 {
                        return Err(CoreError::InvalidParams(format!(
                            "periodic split: carrier frequency {} is not a multiple of {}",
                            c.freq, omega
                        )));
                    }
                    if m.unsigned_abs() as usize > m_max {
                        return Err(CoreError::InvalidParams(format!(
                            "periodic split: mode {m} exceeds mode cap {m_max}"
                        )));
                    }
                    per.set(m, per.get(m) + v);
                }
                EnvData::Grid(_) => rest.push_merge(c.clone()),
            }
        }
        Ok((per, rest))
    }

    /// ι_K[f] = ∫ f sin(KX) dX evaluated carrier by carrier:
    /// ι[E e^{iΩ·}] = (1/2i)(G(Ω+K) − G(Ω−K)) with G(κ) = ∫E(X)e^{iκX}dX by
    /// the trapezoid rule. Exact in the carrier frequency, so no symbol or
    /// denominator is ever sampled near a resonance. Errors on constant
    /// envelopes (the integral would not converge).
    pub fn iota(&self, k: f64) -> Result<f64> {
        let half_i_inv = C64::new(0.0, -0.5); // 1/(2i)
        let mut total = C64::new(0.0, 0.0);
        for c in &self.carriers {
            let env = match &c.env {
                EnvData::Constant(v) => {
                    if v.norm() == 0.0 {
                        continue;
                    }
                    return Err(CoreError::InvalidParams(format!(
                        "ι of a non-decaying (constant-envelope) carrier at frequency {}",
                        c.freq
                    )));
                }
                EnvData::Grid(v) => v,
            };
            let g = |kappa: f64| -> C64 {
                self.grid.dx
                    * kahan_sum_c(
                        env.iter()
                            .zip(self.grid.x())
                            .map(|(u, &x)| u * C64::new(0.0, kappa * x).exp()),
                    )
            };
            total += half_i_inv * (g(c.freq + k) - g(c.freq - k));
        }
        let scale = total.norm().max(1e-300);
        if total.im.abs() > 1e-8 * scale && total.im.abs() > 1e-13 * self.max_env_sup().max(1.0) {
            return Err(CoreError::PostCheck {
                residual: total.im.abs(),
                bound: 1e-8 * scale,
                context: "ι of a non-real carrier sum".into(),
            });
        }
        Ok(total.re)
    }

    /// Evaluate the carrier sum at arbitrary points. Grid envelopes are
    /// evaluated through their trigonometric interpolant (slow transform,
    /// exact); constant envelopes exactly. Intended for tests and sampling,
    /// not inner loops.
    pub fn evaluate_many(&self, xs: &[f64]) -> Vec<C64> {
        enum Prepared {
            Constant(f64, C64),
            Spectrum(f64, Vec<C64>),
        }
        let prepared: Vec<Prepared> = self
            .carriers
            .iter()
            .map(|c| match &c.env {
                EnvData::Constant(v) => Prepared::Constant(c.freq, *v),
                EnvData::Grid(env) => {
                    let mut spec = env.clone();
                    self.grid.forward(&mut spec);
                    Prepared::Spectrum(c.freq, spec)
                }
            })
            .collect();
        let n = self.grid.n as f64;
        let out = map_indexed(xs.len(), 1, |ix| {
            let x = xs[ix];
            let mut o = C64::new(0.0, 0.0);
            for p in &prepared {
                match p {
                    Prepared::Constant(freq, v) => {
                        o += v * C64::new(0.0, freq * x).exp();
                    }
                    Prepared::Spectrum(freq, spec) => {
                        let mut acc = C64::new(0.0, 0.0);
                        for (m, s) in spec.iter().enumerate() {
                            let km = self.grid.k()[m];
                            acc += s * C64::new(0.0, km * (x + self.grid.l)).exp();
                        }
                        o += acc / n * C64::new(0.0, freq * x).exp();
                    }
                }
            }
            o
        });
        out
    }
}

fn add_env(a: &EnvData, b: &EnvData, _n: usize) -> EnvData {
    match (a, b) {
        (EnvData::Constant(x), EnvData::Constant(y)) => EnvData::Constant(x + y),
        (EnvData::Grid(x), EnvData::Grid(y)) => {
            EnvData::Grid(x.iter().zip(y).map(|(u, v)| u + v).collect())
        }
        (EnvData::Constant(x), EnvData::Grid(y)) | (EnvData::Grid(y), EnvData::Constant(x)) => {
            EnvData::Grid(y.iter().map(|v| v + x).collect())
        }
    }
}

fn mul_env(a: &EnvData, b: &EnvData, _n: usize) -> EnvData {
    match (a, b) {
        (EnvData::Constant(x), EnvData::Constant(y)) => EnvData::Constant(x * y),
        (EnvData::Grid(x), EnvData::Grid(y)) => {
            EnvData::Grid(x.iter().zip(y).map(|(u, v)| u * v).collect())
        }
        (EnvData::Constant(x), EnvData::Grid(y)) | (EnvData::Grid(y), EnvData::Constant(x)) => {
            EnvData::Grid(y.iter().map(|v| v * x).collect())
        }
    }
}

/// Spec-named wrapper: μ(f·e^{iωX}) through the shift theorem, returned as
/// complex samples on the grid.
pub fn apply_multiplier_modulated(
    sym: &SymbolFn,
    f: &LocalizedField,
    omega: f64,
) -> Result<Vec<C64>> {
    let mut buf = f.to_complex();
    f.grid.forward(&mut buf);
    for (m, v) in buf.iter_mut().enumerate() {
        let k = f.grid.k()[m] + omega;
        *v *= check_symbol_finite("symbol", k, sym.eval(k))?;
    }
    f.grid.inverse_normalized(&mut buf);
    for (v, &x) in buf.iter_mut().zip(f.grid.x()) {
        *v *= C64::new(0.0, omega * x).exp();
    }
    Ok(buf)
}

/// Spec-named wrapper: localized × periodic as one modulated carrier per
/// periodic mode (envelope = coefficient × f).
pub fn product_mixed(f: &LocalizedField, g: &PeriodicFieldCoeffs) -> Result<ModulatedField> {
    let top = (1.0 + g.m_max as f64) * g.k_fund.abs();
    let bound = CARRIER_FREQ_FRACTION * f.grid.k_nyquist();
    if top > bound {
        return Err(CoreError::Resolution { freq: top, bound });
    }
    ModulatedField::from_real(f).product(&ModulatedField::from_periodic(
        &f.grid,
        g,
        C64::new(1.0, 0.0),
    ))
}

/// Localized pair + periodic pair + ripple amplitude: the composite ansatz
/// bundle. Evaluation at a grid point is localized + a·periodic by
/// construction.
#[derive(Debug, Clone)]
pub struct CompositeField {
    pub localized: (LocalizedField, LocalizedField),
    pub periodic: (PeriodicFieldCoeffs, PeriodicFieldCoeffs),
    pub amplitude: f64,
}

impl CompositeField {
    /// Value of both components at grid index i.
    pub fn eval_index(&self, i: usize) -> (f64, f64) {
        let x = self.localized.0.grid.x()[i];
        let p = |g: &PeriodicFieldCoeffs| -> f64 {
            kahan_sum_c(
                (-(g.m_max as i64)..=(g.m_max as i64))
                    .map(|m| g.get(m) * C64::new(0.0, m as f64 * g.k_fund * x).exp()),
            )
            .re
        };
        (
            self.localized.0.values[i] + self.amplitude * p(&self.periodic.0),
            self.localized.1.values[i] + self.amplitude * p(&self.periodic.1),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{DimerParams, NamedSymbol};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, l: f64) -> Arc<Grid> {
        Grid::new(n, l).unwrap()
    }

    fn random_field(g: &Arc<Grid>, seed: u64) -> LocalizedField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = LocalizedField::zeros(g, FieldParity::None);
        // Smooth random decaying field: a few Gaussians.
        for _ in 0..5 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let x0: f64 = rng.gen_range(-3.0..3.0);
            let s: f64 = rng.gen_range(0.5..2.0);
            for (v, &x) in f.values.iter_mut().zip(g.x()) {
                *v += a * (-(x - x0) * (x - x0) / (2.0 * s * s)).exp();
            }
        }
        f
    }

    #[test]
    fn grid_construction_guards() {
        assert!(Grid::new(100, 10.0).is_err());
        assert!(Grid::new(8, 10.0).is_err());
        assert!(Grid::new(64, -1.0).is_err());
        let g = grid(64, 10.0);
        assert_abs_diff_eq!(g.dx * g.n as f64, 2.0 * g.l, epsilon = 1e-12);
        let ks = g.k_sorted();
        assert!(ks.windows(2).all(|w| w[0] < w[1]));
        assert_abs_diff_eq!(ks[0], -g.dk * 32.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_round_trip_and_parseval() {
        let g = grid(512, 15.0);
        let f = random_field(&g, 1);
        let mut buf = f.to_complex();
        g.forward(&mut buf);
        // Parseval: (1/N)·Σ|F_m|² = Σ|f_n|².
        let spec_sum: f64 = buf.iter().map(|v| v.norm_sqr()).sum::<f64>() / g.n as f64;
        let grid_sum: f64 = f.values.iter().map(|v| v * v).sum();
        assert!((spec_sum - grid_sum).abs() / grid_sum < 1e-10);
        g.inverse_normalized(&mut buf);
        let err = buf
            .iter()
            .zip(&f.values)
            .fold(0.0f64, |m, (v, &u)| m.max((v.re - u).abs()));
        assert!(err / f.sup_norm() < 1e-12);
    }

    #[test]
    fn identity_multiplier_is_identity() {
        let g = grid(256, 10.0);
        let f = random_field(&g, 2);
        let out = f
            .apply_multiplier("one", |_| C64::new(1.0, 0.0), f.parity)
            .unwrap();
        let err = out
            .values
            .iter()
            .zip(&f.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12 * f.sup_norm());
    }

    #[test]
    fn gaussian_second_derivative() {
        let g = grid(1024, 20.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x| (-x * x / 2.0).exp());
        let d2 = f.derivative(2).unwrap();
        let mut err: f64 = 0.0;
        for (v, &x) in d2.values.iter().zip(g.x()) {
            let exact = (x * x - 1.0) * (-x * x / 2.0).exp();
            err = err.max((v - exact).abs());
        }
        assert!(err < 1e-8, "max error {err:e}");
        assert_eq!(d2.parity, FieldParity::Even);
    }

    #[test]
    fn nonfinite_symbol_names_wavenumber() {
        let g = grid(64, 10.0);
        let f = random_field(&g, 3);
        let err = f
            .apply_multiplier("bad", |k| C64::new(1.0 / (k - g.k()[3]), 0.0), f.parity)
            .unwrap_err();
        match err {
            CoreError::SymbolNonFinite { name, k } => {
                assert_eq!(name, "bad");
                assert_abs_diff_eq!(k, g.k()[3], epsilon = 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn varpi0_matches_line_quadrature_oracle() {
        // Independent oracle: μf(x) = ∫ ϖ̃⁰(K) f̂(K) e^{iKx} dK with the
        // Gaussian transform in closed form, via Simpson's rule.
        let p = DimerParams::new(2.0, 0.1).unwrap();
        let g = grid(1024, 20.0);
        let s = 1.0;
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x| (-x * x / (2.0 * s * s)).exp());
        let out = f
            .apply_multiplier("varpi0", |k| C64::new(p.varpi0(k), 0.0), f.parity)
            .unwrap();
        let fhat = |k: f64| s / (2.0 * std::f64::consts::PI).sqrt() * (-s * s * k * k / 2.0).exp();
        let n = 40_000;
        let (a, b) = (-30.0, 30.0);
        let h = (b - a) / n as f64;
        let integrand = |k: f64, x: f64| p.varpi0(k) * fhat(k) * (k * x).cos();
        for i in [512usize, 530, 560, 620] {
            let x = g.x()[i];
            let mut acc = integrand(a, x) + integrand(b, x);
            for j in 1..n {
                let k = a + h * j as f64;
                acc += integrand(k, x) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            let oracle = acc * h / 3.0;
            assert!(
                (out.values[i] - oracle).abs() < 1e-8,
                "x={x}: {} vs {}",
                out.values[i],
                oracle
            );
        }
    }

    #[test]
    fn varpi0_kernel_decay_rate() {
        // The kernel of (1 + α_w K²)⁻¹-type multipliers decays like
        // e^{−|X|/√α_w}; fit the log slope on the image of a narrow bump.
        let p = DimerParams::new(2.0, 0.1).unwrap();
        let g = grid(2048, 20.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x| (-x * x / 0.01).exp());
        let out = f
            .apply_multiplier("varpi0", |k| C64::new(p.varpi0(k), 0.0), f.parity)
            .unwrap();
        let idx = |x: f64| ((x + g.l) / g.dx).round() as usize;
        let (i1, i2) = (idx(2.0), idx(6.0));
        let slope =
            (out.values[i2].abs().ln() - out.values[i1].abs().ln()) / (g.x()[i2] - g.x()[i1]);
        assert_abs_diff_eq!(slope, -1.0 / p.alpha_w.sqrt(), epsilon = 2e-3);
    }

    #[test]
    fn modulated_shift_matches_direct_modulation() {
        let p = DimerParams::new(2.0, 0.1).unwrap();
        let g = grid(2048, 20.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x: f64| x.cosh().powi(-2));
        let omega = 3.7;
        let sym = |k: f64| C64::new(p.varpi0(k), 0.0);
        // Direct: modulate on the grid, multiply, no shift.
        let mut direct = f.to_complex();
        for (v, &x) in direct.iter_mut().zip(g.x()) {
            *v *= C64::new(0.0, omega * x).exp();
        }
        g.forward(&mut direct);
        for (m, v) in direct.iter_mut().enumerate() {
            *v *= sym(g.k()[m]);
        }
        g.inverse_normalized(&mut direct);
        // Shift theorem route.
        let modulated = ModulatedField {
            grid: g.clone(),
            carriers: vec![Carrier {
                freq: omega,
                env: EnvData::Grid(f.to_complex()),
            }],
        };
        let shifted = modulated.apply_symbol("varpi0", 0.0, sym).unwrap();
        let EnvData::Grid(env) = &shifted.carriers[0].env else {
            panic!("expected grid envelope")
        };
        let mut err: f64 = 0.0;
        for i in 0..g.n {
            let val = env[i] * C64::new(0.0, omega * g.x()[i]).exp();
            err = err.max((val - direct[i]).norm());
        }
        assert!(err < 1e-8, "max error {err:e}");
    }

    #[test]
    fn modulated_sup_decays_as_carrier_grows() {
        let p = DimerParams::new(2.0, 0.1).unwrap();
        let g = grid(2048, 20.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x: f64| x.cosh().powi(-2));
        let sup_at = |omega: f64| {
            let m = ModulatedField {
                grid: g.clone(),
                carriers: vec![Carrier {
                    freq: omega,
                    env: EnvData::Grid(f.to_complex()),
                }],
            };
            m.apply_symbol("varpi0", 0.0, |k| C64::new(p.varpi0(k), 0.0))
                .unwrap()
                .max_env_sup()
        };
        let (s1, s2, s3) = (sup_at(10.0), sup_at(20.0), sup_at(40.0));
        assert!(s2 < 0.5 * s1, "{s2} vs {s1}");
        assert!(s3 < 0.5 * s2, "{s3} vs {s2}");
    }

    #[test]
    fn product_mixed_examples() {
        let g = grid(1024, 20.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x: f64| x.cosh().powi(-2));
        // Constant 1 reproduces f.
        let one = {
            let mut p = PeriodicFieldCoeffs::zeros(2.3, 0);
            p.set(0, C64::new(1.0, 0.0));
            p
        };
        let prod = product_mixed(&f, &one).unwrap();
        let flat = prod.flatten(FieldParity::Even).unwrap();
        let err = flat
            .values
            .iter()
            .zip(&f.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12);
        // sin(KX) via modes ±1.
        let kf = 2.3;
        let mut sin_p = PeriodicFieldCoeffs::zeros(kf, 1);
        sin_p.set(1, C64::new(0.0, -0.5));
        sin_p.set(-1, C64::new(0.0, 0.5));
        let prod = product_mixed(&f, &sin_p).unwrap();
        let flat = prod.flatten(FieldParity::Odd).unwrap();
        let mut err: f64 = 0.0;
        for (i, &x) in g.x().iter().enumerate() {
            let exact = x.cosh().powi(-2) * (kf * x).sin();
            err = err.max((flat.values[i] - exact).abs());
        }
        assert!(err < 1e-10, "max error {err:e}");
        // Parity algebra: even × odd = odd.
        assert!(flat.parity_defect() < 1e-10);
    }

    #[test]
    fn iota_gaussian_closed_form() {
        let g = grid(1024, 20.0);
        // f = e^{−X²/2}·sin(K₀X): ι_K[f] = (√(2π)/2)(e^{−(K−K₀)²/2} − e^{−(K+K₀)²/2}).
        let k0 = 2.0;
        let f = LocalizedField::from_fn(&g, FieldParity::Odd, |x| {
            (-x * x / 2.0).exp() * (k0 * x).sin()
        });
        for &k in &[0.5, 1.0, 2.0, 3.5] {
            let exact = (2.0 * std::f64::consts::PI).sqrt() / 2.0
                * ((-(k - k0) * (k - k0) / 2.0).exp() - (-(k + k0) * (k + k0) / 2.0).exp());
            let got = f.iota_quadrature(k);
            assert!(got.boundary_warning.is_none());
            assert!((got.value - exact).abs() < 1e-10, "K={k}");
        }
    }

    #[test]
    fn iota_sech_against_adaptive_quadrature() {
        let g = grid(2048, 30.0);
        let k0 = 2.0;
        let k = 1.3;
        let f = LocalizedField::from_fn(&g, FieldParity::Odd, |x: f64| {
            x.cosh().recip() * (k0 * x).sin()
        });
        // Adaptive Simpson oracle.
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, fm: f64, eps: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1)
                    + simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1)
            }
        }
        let integrand = |x: f64| x.cosh().recip() * (k0 * x).sin() * (k * x).sin();
        let oracle = simpson(
            &integrand,
            -30.0,
            30.0,
            integrand(-30.0),
            integrand(30.0),
            integrand(0.0),
            1e-13,
            40,
        );
        let got = f.iota_quadrature(k).value;
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn iota_riemann_lebesgue_decay() {
        let g = grid(2048, 30.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x: f64| x.cosh().powi(-2));
        let i25 = f.iota_quadrature(25.0).value.abs();
        assert!(i25 < 1e-6 * f.sup_norm());
    }

    #[test]
    fn weighted_norm_examples() {
        let g = grid(1024, 20.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x| (-x * x).exp());
        // ‖e^{−X²}‖_{L²} = (π/2)^{1/4}.
        let exact = (std::f64::consts::PI / 2.0).powf(0.25);
        assert!((f.weighted_norm(0, 0.0).unwrap() - exact).abs() < 1e-8);
        // r = 1, q = 0 equals sqrt(‖f‖² + ‖f′‖²).
        let d = f.derivative(1).unwrap();
        let expect = (f.l2_norm().powi(2) + d.l2_norm().powi(2)).sqrt();
        assert!((f.weighted_norm(1, 0.0).unwrap() - expect).abs() < 1e-10);
        // Monotone in r and q.
        let n00 = f.weighted_norm(0, 0.0).unwrap();
        let n10 = f.weighted_norm(1, 0.0).unwrap();
        let n11 = f.weighted_norm(1, 0.5).unwrap();
        let n01 = f.weighted_norm(0, 0.5).unwrap();
        assert!(n10 >= n00 && n11 >= n01 && n01 >= n00);
        // Overflow guard.
        assert!(f.weighted_norm(0, 100.0).is_err());
    }

    #[test]
    fn even_symbols_preserve_parity() {
        let p = DimerParams::new(2.0, 0.1).unwrap();
        let g = grid(512, 15.0);
        let even = LocalizedField::from_fn(&g, FieldParity::Even, |x| (-x * x / 3.0).exp());
        let odd = LocalizedField::from_fn(&g, FieldParity::Odd, |x| x * (-x * x / 3.0).exp());
        for f in [even, odd] {
            let out = apply_multiplier_localized(&p.symbol(NamedSymbol::LambdaPlus), &f).unwrap();
            assert!(out.parity_defect() < 1e-10 * out.sup_norm().max(1.0));
        }
    }

    #[test]
    fn periodic_symbol_and_realness() {
        let p = DimerParams::new(2.0, 0.1).unwrap();
        let kf = 1.75;
        let mut nu = PeriodicFieldCoeffs::zeros(kf, 1);
        nu.set(1, C64::new(0.0, -0.5));
        nu.set(-1, C64::new(0.0, 0.5));
        assert!(nu.realness_defect() < 1e-16);
        let out = nu
            .apply_symbol("lambda_plus", |k| C64::new(p.lambda_plus(k), 0.0))
            .unwrap();
        let expect = p.lambda_plus(kf);
        assert!((out.get(1) - C64::new(0.0, -0.5 * expect)).norm() < 1e-14);
        // Convolution: sin² = 1/2 − cos(2·)/2.
        let sq = nu.product(&nu);
        assert!((sq.get(0) - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((sq.get(2) - C64::new(-0.25, 0.0)).norm() < 1e-15);
        assert!((sq.get(1)).norm() < 1e-16);
    }

    #[test]
    fn periodic_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        let mut g = PeriodicFieldCoeffs::zeros(17.51234567890123, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in -3i64..=3 {
            g.set(m, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
        g.write_csv(&path).unwrap();
        let back = PeriodicFieldCoeffs::read_csv(&path).unwrap();
        assert_eq!(back.m_max, 3);
        assert_eq!(back.k_fund, g.k_fund);
        for m in -3i64..=3 {
            assert_eq!(back.get(m), g.get(m));
        }
    }

    #[test]
    fn localized_csv_written_with_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let g = grid(64, 10.0);
        let f = random_field(&g, 12);
        f.write_csv(&path).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        for (rec, (&x, &v)) in rdr.records().zip(g.x().iter().zip(&f.values)) {
            let rec = rec.unwrap();
            assert_eq!(rec[0].parse::<f64>().unwrap(), x);
            assert_eq!(rec[1].parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn carrier_merge_prune_and_iota() {
        let g = grid(1024, 20.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x: f64| x.cosh().powi(-2));
        let mf = ModulatedField::from_real(&f);
        // Multiply by sin(KX) as carriers and take ι at the same frequency:
        // ι = ∫ f sin² = (1/2)∫f − (1/2)∫f cos(2KX).
        let keps = 4.1;
        let mut sin_p = PeriodicFieldCoeffs::zeros(keps, 1);
        sin_p.set(1, C64::new(0.0, -0.5));
        sin_p.set(-1, C64::new(0.0, 0.5));
        let prod = mf
            .product(&ModulatedField::from_periodic(&g, &sin_p, C64::new(1.0, 0.0)))
            .unwrap();
        assert_eq!(prod.carriers.len(), 2);
        let got = prod.iota(keps).unwrap();
        // ∫sech² = 2; ∫sech²(x)cos(2Kx)dx = π(2K)/sinh(πK) ≈ tiny.
        let cos_part = {
            let y = std::f64::consts::PI * keps;
            2.0 * y / y.sinh() * std::f64::consts::PI / std::f64::consts::PI
        };
        let exact = 1.0 - 0.5 * cos_part;
        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
        // Merging: product with the conjugate carriers cancels frequencies.
        let sum = prod.add(&prod.scale(C64::new(-1.0, 0.0)));
        assert!(sum.max_env_sup() < 1e-16);
        // ι rejects constant carriers.
        let per_only = ModulatedField::from_periodic(&g, &sin_p, C64::new(1.0, 0.0));
        assert!(per_only.iota(keps).is_err());
    }

    #[test]
    fn flatten_guards_and_split() {
        let g = grid(256, 10.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x| (-x * x).exp());
        // Constant carrier cannot be flattened.
        let mut per = PeriodicFieldCoeffs::zeros(3.0, 1);
        per.set(1, C64::new(0.0, -0.5));
        per.set(-1, C64::new(0.0, 0.5));
        let mixed = ModulatedField::from_real(&f)
            .add(&ModulatedField::from_periodic(&g, &per, C64::new(1.0, 0.0)));
        assert!(mixed.flatten(FieldParity::None).is_err());
        let (split_per, rest) = mixed.split_periodic(3.0, 2).unwrap();
        assert!((split_per.get(1) - per.get(1)).norm() < 1e-16);
        assert_eq!(rest.carriers.len(), 1);
        assert!(rest.flatten(FieldParity::Even).is_ok());
        // Frequency beyond the flatten budget errors.
        let high = ModulatedField {
            grid: g.clone(),
            carriers: vec![Carrier {
                freq: 0.9 * g.k_nyquist(),
                env: EnvData::Grid(f.to_complex()),
            }],
        };
        assert!(high.flatten(FieldParity::None).is_err());
    }

    #[test]
    fn evaluate_many_matches_flatten_on_grid_points() {
        let g = grid(512, 15.0);
        let f = LocalizedField::from_fn(&g, FieldParity::Even, |x: f64| x.cosh().powi(-2));
        let mut per = PeriodicFieldCoeffs::zeros(2.0, 1);
        per.set(1, C64::new(0.3, -0.5));
        per.set(-1, C64::new(0.3, 0.5));
        let mf = ModulatedField::from_real(&f)
            .product(&ModulatedField::from_periodic(&g, &per, C64::new(1.0, 0.0)))
            .unwrap();
        let flat = mf.flatten(FieldParity::None).unwrap();
        let vals = mf.evaluate_many(g.x());
        let mut err: f64 = 0.0;
        for (v, u) in vals.iter().zip(&flat.values) {
            err = err.max((v.re - u).abs());
            err = err.max(v.im.abs());
        }
        assert!(err < 1e-10, "max error {err:e}");
    }

    #[test]
    fn composite_field_evaluation() {
        let g = grid(256, 10.0);
        let loc = LocalizedField::from_fn(&g, FieldParity::Even, |x| (-x * x).exp());
        let zero = LocalizedField::zeros(&g, FieldParity::Odd);
        let mut per = PeriodicFieldCoeffs::zeros(3.3, 1);
        per.set(1, C64::new(0.0, -0.5));
        per.set(-1, C64::new(0.0, 0.5));
        let comp = CompositeField {
            localized: (loc.clone(), zero),
            periodic: (PeriodicFieldCoeffs::zeros(3.3, 1), per),
            amplitude: 0.01,
        };
        let i = 100;
        let x = g.x()[i];
        let (c1, c2) = comp.eval_index(i);
        assert_abs_diff_eq!(c1, (-x * x).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(c2, 0.01 * (3.3 * x).sin(), epsilon = 1e-14);
    }
}
