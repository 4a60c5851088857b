//! Sampling under the size-biased measure: spine counts, increments and the
//! self-similar sequence Y(−n).

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{map_replicas, replica_rng, Execution};
use crate::pgf::{OffspringLaw, Table, LawKind};
use crate::tails::TailFunction;

/// Depth at which Z_n/a^n stands in for W: 20 when a ≥ 2, else ⌈40/log₂ a⌉.
pub fn default_w_depth(a: f64) -> usize {
    if a >= 2.0 {
        20
    } else {
        (40.0 / a.log2()).ceil() as usize
    }
}

const SATURATION: u64 = 1 << 50;
/// Saturation for laws whose generation step is not constant time.
const SATURATION_CHAIN: u64 = 1 << 20;
/// Population above which the remaining generations of a finite-variance law
/// are drawn as one Gaussian step.
const GAUSSIAN_FROM: u64 = 1 << 16;

/// Depth-truncated sampler of the martingale limit W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WSampler {
    pub depth: usize,
}

impl WSampler {
    pub fn for_law(law: &OffspringLaw) -> Self {
        WSampler {
            depth: default_w_depth(law.mean()),
        }
    }

    pub fn with_depth(depth: usize) -> Self {
        WSampler { depth }
    }

    /// Sum of `m` independent copies of W^{(depth)}.
    ///
    /// Generation totals are drawn in aggregate. Once the population passes 2^50
    /// the remaining generations only rescale it, so Z_k/a^k is returned. Laws
    /// without a constant-time generation step stop at 2^20, and finite-variance
    /// ones switch at 2^16 to a Gaussian with the exact variance of the
    /// remaining generations.
    pub fn sample_sum<R: Rng + ?Sized>(&self, law: &OffspringLaw, m: u64, rng: &mut R) -> Result<f64> {
        let a = law.mean();
        let (var, saturation) = match law.kind() {
            LawKind::GeometricShifted { .. } => (f64::INFINITY, SATURATION),
            _ => (law.variance(), SATURATION_CHAIN),
        };
        let mut z = m;
        for k in 0..self.depth {
            if z == 0 {
                return Ok(0.0);
            }
            if z >= saturation {
                return Ok(z as f64 / a.powi(k as i32));
            }
            if z >= GAUSSIAN_FROM && var.is_finite() {
                // Σ of z copies of Z_j/a^j has variance z·σ²(1 − a^{−j})/(a(a − 1))
                let j = (self.depth - k) as i32;
                let sd = (z as f64 * var * (1.0 - a.powi(-j)) / (a * (a - 1.0))).sqrt();
                let xi: f64 = rng.sample(StandardNormal);
                return Ok((z as f64 + sd * xi).max(0.0) / a.powi(k as i32));
            }
            z = law.offspring_sum(rng, z)?;
        }
        Ok(z as f64 / a.powi(self.depth as i32))
    }

    pub fn sample<R: Rng + ?Sized>(&self, law: &OffspringLaw, rng: &mut R) -> Result<f64> {
        self.sample_sum(law, 1, rng)
    }
}

/// Where the W values inside an increment come from.
#[derive(Debug, Clone)]
pub enum WSource {
    /// Fresh depth-truncated draws for every use.
    Fresh(WSampler),
    /// Resampling from a fixed pool (faster, but reuses draws).
    Pooled(Arc<Vec<f64>>),
}

impl WSource {
    fn sum<R: Rng + ?Sized>(&self, law: &OffspringLaw, m: u64, rng: &mut R) -> Result<f64> {
        match self {
            WSource::Fresh(s) => s.sample_sum(law, m, rng),
            WSource::Pooled(pool) => {
                Ok((0..m).map(|_| pool[rng.random_range(0..pool.len())]).sum())
            }
        }
    }
}

/// The size-biased count N̂ with P(N̂ = n) = n·p_n/a.
#[derive(Debug, Clone)]
pub struct SizeBiasedOffspring {
    table: Table,
}

impl SizeBiasedOffspring {
    pub fn new(law: &OffspringLaw) -> Self {
        SizeBiasedOffspring {
            table: law.size_biased_table(),
        }
    }

    pub fn p(&self, n: u64) -> f64 {
        self.table.p(n)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.table.sample_at_least(rng, 1)
    }
}

pub fn sample_size_biased_count<R: Rng + ?Sized>(sb: &SizeBiasedOffspring, rng: &mut R) -> u64 {
    sb.sample(rng)
}

/// Everything needed to draw increments of Y.
#[derive(Debug, Clone)]
pub struct SpineSampler {
    pub law: OffspringLaw,
    pub biased: SizeBiasedOffspring,
    pub w: WSource,
}

impl SpineSampler {
    pub fn new(law: &OffspringLaw, w: WSource) -> Self {
        SpineSampler {
            law: law.clone(),
            biased: SizeBiasedOffspring::new(law),
            w,
        }
    }

    pub fn fresh(law: &OffspringLaw) -> Self {
        Self::new(law, WSource::Fresh(WSampler::for_law(law)))
    }

    /// V = a^{−1}·Σ_{j=1}^{N̂−1} W_j, the law of Y(0) − Y(−1).
    pub fn increment<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let n = self.biased.sample(rng);
        if n <= 1 {
            return Ok(0.0);
        }
        Ok(self.w.sum(&self.law, n - 1, rng)? / self.law.mean())
    }

    /// Y(0) from its series Σ_{k<terms} a^{−k} V_k.
    pub fn y0<R: Rng + ?Sized>(&self, rng: &mut R, terms: usize) -> Result<f64> {
        let a = self.law.mean();
        let mut acc = 0.0;
        let mut scale = 1.0;
        for _ in 0..terms {
            acc += scale * self.increment(rng)?;
            scale /= a;
        }
        Ok(acc)
    }

    /// X_m = a^m·Y(−m) for m < len, by X_m = V_m + X_{m+1}/a with X_len drawn
    /// independently from the series for Y(0).
    pub fn normalized_path<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Result<Vec<f64>> {
        let a = self.law.mean();
        let v: Vec<f64> = (0..len).map(|_| self.increment(rng)).collect::<Result<_>>()?;
        let mut x = vec![0.0; len];
        let mut next = self.y0(rng, 30)?;
        for m in (0..len).rev() {
            next = v[m] + next / a;
            x[m] = next;
        }
        Ok(x)
    }
}

pub fn sample_rho_y_increment<R: Rng + ?Sized>(sampler: &SpineSampler, rng: &mut R) -> Result<f64> {
    sampler.increment(rng)
}

/// A truncated trajectory of Y(−n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YPath {
    pub depth: usize,
    /// V_0..V_{D−1}
    pub increments: Vec<f64>,
    /// Y(−n) = Σ_{k=n}^{D−1} a^{−k} V_k for n < D
    pub values: Vec<f64>,
    /// Largest n whose value is meant to be reported.
    pub reported_max: usize,
    /// Estimated mean of the discarded tail exceeds 1e-6·Y(−reported_max).
    pub tail_flag: bool,
}

/// Default series truncation for Y paths.
pub const DEFAULT_Y_DEPTH: usize = 60;

pub fn sample_y_path<R: Rng + ?Sized>(sampler: &SpineSampler, depth: usize, rng: &mut R) -> Result<YPath> {
    let depth = depth.max(1);
    let a = sampler.law.mean();
    let increments: Vec<f64> = (0..depth)
        .map(|_| sampler.increment(rng))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; depth];
    let mut acc = 0.0;
    for n in (0..depth).rev() {
        acc += a.powi(-(n as i32)) * increments[n];
        values[n] = acc;
    }
    let reported_max = if depth > 20 { depth - 20 } else { depth - 1 };
    let mean_v = increments.iter().sum::<f64>() / depth as f64;
    let tail_mean = mean_v * a.powi(-(depth as i32)) / (1.0 - 1.0 / a);
    let tail_flag = tail_mean > 1e-6 * values[reported_max];
    Ok(YPath {
        depth,
        increments,
        values,
        reported_max,
        tail_flag,
    })
}

/// Empirical tail of the increment law.
pub fn rho_y_tail(sampler: &SpineSampler, n_samples: usize, seed: u64, exec: Execution) -> Result<TailFunction> {
    let xs = map_replicas(n_samples, exec, |i| {
        sampler.increment(&mut replica_rng(seed, i))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(TailFunction::empirical(xs))
}

/// Y(0) drawn by size-biased resampling of plain W draws.
pub fn size_biased_resample<R: Rng + ?Sized>(w: &[f64], count: usize, rng: &mut R) -> Vec<f64> {
    let mut cum = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &x in w {
        acc += x;
        cum.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let i = cum.partition_point(|&c| c <= u).min(w.len() - 1);
            w[i]
        })
        .collect()
}

/// Paths as CSV rows `replica,n,y`.
pub fn ypaths_csv<W: Write>(paths: &[YPath], mut out: W) -> Result<()> {
    writeln!(out, "replica,n,y")?;
    for (r, p) in paths.iter().enumerate() {
        for n in 0..=p.reported_max {
            writeln!(out, "{r},{n},{}", p.values[n])?;
        }
    }
    Ok(())
}

/// Q(Y(0) − Y(−ℓ) > x) for the geometric family with k = 1, where Y(0) ~ Gamma(2, 1).
pub fn geometric_increment_tail(a: f64, ell: u32, x: f64) -> f64 {
    if x < 0.0 {
        return 1.0;
    }
    let p = 1.0 - a.powi(-(ell as i32));
    let e = (-x).exp();
    p * p * (1.0 + x) * e + 2.0 * p * (1.0 - p) * e
}

/// True when W has a closed-form law (the geometric family): Gamma(1/k, scale k).
pub fn w_gamma_shape_scale(law: &OffspringLaw) -> Option<(f64, f64)> {
    match law.kind() {
        LawKind::GeometricShifted { k, .. } => Some((1.0 / *k as f64, *k as f64)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{correlation, mean_se};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn size_biased_pmf() {
        let l = OffspringLaw::explicit(vec![0.25, 0.25, 0.5]).unwrap();
        let sb = SizeBiasedOffspring::new(&l);
        assert!((sb.p(1) - 0.2).abs() < 1e-15);
        assert!((sb.p(2) - 0.8).abs() < 1e-15);
        assert_eq!(sb.p(0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sb.sample(&mut rng) >= 1));
    }

    #[test]
    fn size_biased_mean_geometric() {
        let l = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        let sb = SizeBiasedOffspring::new(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..100_000).map(|_| sb.sample(&mut rng) as f64).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 9.0).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn increment_mean_geometric() {
        let l = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        let s = SpineSampler::fresh(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000).map(|_| s.increment(&mut rng).unwrap()).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 1.6).abs() < 4.0 * se, "{m} ± {se}");
        assert!((m * 1.25 - 2.0).abs() < 4.0 * 1.25 * se);
    }

    #[test]
    fn y_path_shape() {
        let l = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        let s = SpineSampler::fresh(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = sample_y_path(&s, 25, &mut rng).unwrap();
        assert_eq!(p.values.len(), 25);
        assert_eq!(p.reported_max, 5);
        for n in 0..24 {
            assert!(p.values[n] >= p.values[n + 1]);
            let d = p.values[n] - p.values[n + 1];
            assert!((d - 5f64.powi(-(n as i32)) * p.increments[n]).abs() <= 1e-12 * p.values[n].max(1.0));
        }
    }

    #[test]
    fn increments_uncorrelated() {
        let l = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        let s = SpineSampler::fresh(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(f64, f64)> = (0..4000)
            .map(|_| (s.increment(&mut rng).unwrap(), s.increment(&mut rng).unwrap()))
            .collect();
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = correlation(&a, &b);
        assert!(r.abs() < 4.0 / 4000f64.sqrt());
    }

    #[test]
    fn oracle_tail_limits() {
        assert!((geometric_increment_tail(5.0, 1, 0.0) - (1.0 - 0.04)).abs() < 1e-15);
        let t: Vec<f64> = (0..10).map(|i| geometric_increment_tail(5.0, 2, i as f64)).collect();
        assert!(t.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn pooled_source_runs() {
        let l = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        let pool = Arc::new(vec![1.0; 10]);
        let s = SpineSampler::new(&l, WSource::Pooled(pool));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = s.increment(&mut rng).unwrap();
        assert_eq!(v.fract() * 5.0 % 1.0, 0.0);
    }
}
