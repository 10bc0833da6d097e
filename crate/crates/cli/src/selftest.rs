//! Oracle-equivalence checks between the per-frequency construction and
//! dense circulant computations, plus the operator-construction benchmark.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redunet::spectral::oracle::{assemble_dense, dense_construct, dense_layer, dense_rate_trace};
use redunet::spectral::{
    construct_spectral_with, spectral_operators, spectral_rate_trace, Dft, MultiChannel, SpectralBatch,
    SpectralConfig, SpectralLayout,
};
use redunet::vector::Membership;
use redunet::{Partition, RateParams};

use crate::{csv, CliResult};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

pub fn random_batch(m: usize, c: usize, h: usize, w: usize, seed: u64) -> Vec<MultiChannel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let data = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            MultiChannel::new(c, h, w, data).expect("non-empty shape")
        })
        .collect()
}

fn max_abs_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Objective, operators and a three-layer construction against the dense
/// circulant oracle on one shape.
pub fn oracle_checks(c: usize, h: usize, w: usize, m: usize, seed: u64) -> CliResult<Vec<Check>> {
    const TOL: f64 = 1e-7;
    let xs: Vec<MultiChannel> =
        random_batch(m, c, h, w, seed).iter().map(MultiChannel::normalized).collect::<redunet::Result<_>>()?;
    let p = Partition::new((0..m).map(|i| i % 2).collect(), 2)?;
    let eps = RateParams::new(0.5)?;
    let (lambda, eta) = (5.0, 0.5);
    let layout = SpectralLayout::new(h, w, true);
    let batch = SpectralBatch::from_samples(&Dft::new(layout), &xs)?;
    let tag = format!("C={c} {h}x{w} m={m}");
    let mut checks = Vec::new();

    let spectral = spectral_rate_trace(&batch, &p, &eps)?;
    let dense = dense_rate_trace(&xs, &p, &eps)?;
    checks.push(Check {
        name: format!("objective {tag}"),
        error: max_abs_diff([spectral.r, spectral.r_c, spectral.delta_r], [dense.r, dense.r_c, dense.delta_r]),
        tolerance: TOL,
    });

    let (layer, _) = spectral_operators(&batch, &p, &eps, lambda, eta)?;
    let reference = dense_layer(&xs, &p, &eps, lambda, eta)?;
    let mut err = max_abs_diff(
        assemble_dense(layout, c, &layer.expansion)?.iter().copied(),
        reference.expansion.iter().copied(),
    );
    for (s, d) in layer.compression.iter().zip(&reference.compression) {
        err = err.max(max_abs_diff(assemble_dense(layout, c, s)?.iter().copied(), d.iter().copied()));
    }
    checks.push(Check { name: format!("operators {tag}"), error: err, tolerance: TOL });

    let cfg = SpectralConfig {
        layers: 3,
        eta,
        epsilon: 0.5,
        lambda: Some(lambda),
        membership: Membership::Estimated,
        retain_layers: true,
        half_spectrum: true,
    };
    let (model, out) = construct_spectral_with(&xs, &p, &cfg, |_, _| Ok(()))?;
    let run = dense_construct(&xs, &p, 3, eta, &eps, lambda, Membership::Estimated)?;
    let feats = out.to_samples(&model.dft())?;
    let last = run.features.last().expect("input features are always present");
    let mut err = 0.0f64;
    for (a, b) in feats.iter().zip(last) {
        err = err.max(max_abs_diff(a.as_slice().iter().copied(), b.as_slice().iter().copied()));
    }
    for (a, b) in model.trace.iter().zip(&run.trace) {
        err = err.max(max_abs_diff([a.r, a.r_c], [b.r, b.r_c]));
    }
    checks.push(Check { name: format!("three-layer construction {tag}"), error: err, tolerance: TOL });
    Ok(checks)
}

#[derive(Debug, Clone, Copy)]
pub struct Benchmark {
    pub spectral_secs: f64,
    pub dense_secs: f64,
}

impl Benchmark {
    pub fn speedup(&self) -> f64 {
        self.dense_secs / self.spectral_secs
    }
}

/// Best-of-`repeats` time to build one layer's operators from `m` random
/// C × T signals, per frequency and as dense (T·C) × (T·C) inverses.
pub fn benchmark(t: usize, c: usize, m: usize, repeats: usize, seed: u64) -> CliResult<Benchmark> {
    let xs: Vec<MultiChannel> =
        random_batch(m, c, 1, t, seed).iter().map(MultiChannel::normalized).collect::<redunet::Result<_>>()?;
    let p = Partition::new((0..m).map(|i| i % 2).collect(), 2)?;
    let eps = RateParams::new(0.1)?;
    let layout = SpectralLayout::new(1, t, true);
    let time = |f: &mut dyn FnMut() -> CliResult<()>| -> CliResult<f64> {
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            f()?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        Ok(best)
    };
    let spectral_secs = time(&mut || {
        let batch = SpectralBatch::from_samples(&Dft::new(layout), &xs)?;
        spectral_operators(&batch, &p, &eps, 20.0, 0.5)?;
        Ok(())
    })?;
    let dense_secs = time(&mut || {
        dense_layer(&xs, &p, &eps, 20.0, 0.5)?;
        Ok(())
    })?;
    Ok(Benchmark { spectral_secs, dense_secs })
}

/// Runs the checks and the benchmark, writes `selftest.csv` into `out` and
/// returns the rows.
pub fn run_selftest(out: &Path) -> CliResult<(Vec<Check>, Benchmark)> {
    let mut checks = oracle_checks(2, 1, 8, 4, 11)?;
    checks.extend(oracle_checks(2, 3, 3, 2, 12)?);
    let bench = benchmark(64, 8, 64, 3, 13)?;
    std::fs::create_dir_all(out)?;
    let mut rows: Vec<(String, f64)> = checks.iter().map(|c| (c.name.clone(), c.error)).collect();
    rows.push(("benchmark_spectral_secs".into(), bench.spectral_secs));
    rows.push(("benchmark_dense_secs".into(), bench.dense_secs));
    rows.push(("benchmark_speedup".into(), bench.speedup()));
    csv::write_metrics(&out.join("selftest.csv"), &rows)?;
    Ok((checks, bench))
}
