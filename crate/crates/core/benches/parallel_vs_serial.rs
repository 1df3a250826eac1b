//! Rayon hot paths against sequential baselines.
//!
//! Each benchmark pairs a library call (data-parallel when built with the
//! default `parallel` feature) with a local sequential reimplementation of
//! the same kernel, asserting bit-identical output before timing, or with the
//! same call pinned to a one-thread pool. For the true library fallback
//! paths, build with `--no-default-features`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64 as C64;

use nanopteron_core::field::{
    Carrier, EnvData, FieldParity, Grid, LocalizedField, ModulatedField, PeriodicFieldCoeffs,
};
use nanopteron_core::lattice::{rhs, ChainState};
use nanopteron_core::params::DimerParams;

/// Core + two modulated carriers, the carrier layout of the solver states.
fn test_field(n: usize, l: f64) -> ModulatedField {
    let grid = Grid::new(n, l).unwrap();
    let core = LocalizedField::from_fn(&grid, FieldParity::Even, |x| {
        let s = 1.0 / (0.3 * x).cosh();
        s * s
    });
    let mut coeffs = PeriodicFieldCoeffs::zeros(17.5, 1);
    coeffs.set(1, C64::new(0.01, 0.005));
    coeffs.set(-1, C64::new(0.01, -0.005));
    let per = ModulatedField::from_periodic(&grid, &coeffs, C64::new(1.0, 0.0));
    let f = ModulatedField::from_real(&core);
    f.add(&f.product(&per).unwrap())
}

fn symbol(k: f64) -> C64 {
    let rho = (1.0 + 8.0 * k.cos().powi(2)).sqrt();
    C64::new(0.0, k).exp() * (8.0 * k.sin().powi(2) / (3.0 + rho)).sqrt()
}

fn apply_symbol_serial(f: &ModulatedField, sym: impl Fn(f64) -> C64) -> ModulatedField {
    let grid = &f.grid;
    let carriers = f
        .carriers
        .iter()
        .map(|c| {
            let env = match &c.env {
                EnvData::Constant(v) => EnvData::Constant(v * sym(c.freq)),
                EnvData::Grid(v) => {
                    let mut buf = v.clone();
                    grid.forward(&mut buf);
                    for (m, u) in buf.iter_mut().enumerate() {
                        *u *= sym(c.freq + grid.k()[m]);
                    }
                    grid.inverse_normalized(&mut buf);
                    EnvData::Grid(buf)
                }
            };
            Carrier { freq: c.freq, env }
        })
        .collect();
    ModulatedField {
        grid: grid.clone(),
        carriers,
    }
}

fn assert_fields_identical(a: &ModulatedField, b: &ModulatedField) {
    assert_eq!(a.carriers.len(), b.carriers.len());
    for (ca, cb) in a.carriers.iter().zip(&b.carriers) {
        assert_eq!(ca.freq, cb.freq);
        match (&ca.env, &cb.env) {
            (EnvData::Constant(x), EnvData::Constant(y)) => assert_eq!(x, y),
            (EnvData::Grid(x), EnvData::Grid(y)) => assert_eq!(x, y),
            _ => panic!("envelope kinds differ"),
        }
    }
}

fn bench_apply_symbol(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply_symbol");
    for &n in &[4096usize, 16384] {
        let f = test_field(n, 40.0);
        assert_fields_identical(
            &f.apply_symbol("bench", 0.0, symbol).unwrap(),
            &apply_symbol_serial(&f, symbol),
        );
        group.bench_with_input(BenchmarkId::new("rayon", n), &f, |b, f| {
            b.iter(|| f.apply_symbol("bench", 0.0, symbol).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("serial", n), &f, |b, f| {
            b.iter(|| apply_symbol_serial(f, symbol))
        });
    }
    group.finish();
}

fn bench_product(c: &mut Criterion) {
    let mut group = c.benchmark_group("product");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    for &n in &[4096usize, 16384] {
        let f = test_field(n, 40.0);
        group.bench_with_input(BenchmarkId::new("rayon", n), &f, |b, f| {
            b.iter(|| f.product(f).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("one-thread", n), &f, |b, f| {
            b.iter(|| pool.install(|| f.product(f).unwrap()))
        });
    }
    group.finish();
}

fn accelerations_serial(p: &DimerParams, r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let w = p.w;
    let force = |r: f64| r + r * r;
    (0..n)
        .map(|j| {
            let fj = force(r[j]);
            let fp = force(r[(j + 1) % n]);
            let fm = force(r[(j + n - 1) % n]);
            if j % 2 == 1 {
                -(1.0 + w) * fj + w * fp + fm
            } else {
                -(1.0 + w) * fj + fp + w * fm
            }
        })
        .collect()
}

fn bench_accelerations(c: &mut Criterion) {
    let mut group = c.benchmark_group("chain_accelerations");
    let p = DimerParams::new(2.0, 0.1).unwrap();
    for &n in &[2048usize, 16384] {
        let mut state = ChainState::zero(&p, n).unwrap();
        for j in 0..n {
            let x = (j as f64 - n as f64 / 2.0) / 20.0;
            state.r[j] = 0.01 / (x * x + 1.0);
        }
        assert_eq!(rhs(&state), accelerations_serial(&p, &state.r));
        group.bench_with_input(BenchmarkId::new("rayon", n), &state, |b, s| {
            b.iter(|| rhs(s))
        });
        group.bench_with_input(BenchmarkId::new("serial", n), &state, |b, s| {
            b.iter(|| accelerations_serial(&p, &s.r))
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_apply_symbol,
    bench_product,
    bench_accelerations
);
criterion_main!(benches);
