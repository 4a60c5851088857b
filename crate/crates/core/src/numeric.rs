//! Small numerical kernels shared by the other modules.

use crate::error::{Error, Result};

const BERNOULLI_2K: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Hurwitz zeta ζ(s, q) = Σ_{j≥0} (q+j)^{-s} for s > 1, q > 0.
///
/// Direct summation up to q+j ≥ 12, then an Euler–Maclaurin remainder.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    debug_assert!(s > 1.0 && q > 0.0);
    let mut sum = 0.0;
    let mut x = q;
    while x < 12.0 {
        sum += x.powf(-s);
        x += 1.0;
    }
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s(s+1)...(s+2i-2) / (2i)!
    let mut fact = s / 2.0;
    let mut xp = x.powf(-s - 1.0);
    for (i, b) in BERNOULLI_2K.iter().enumerate() {
        let term = b * fact * xp;
        tail += term;
        if term.abs() < 1e-18 * tail.abs() {
            break;
        }
        let m = 2.0 * (i as f64 + 1.0);
        fact *= (s + m - 1.0) * (s + m) / ((m + 1.0) * (m + 2.0));
        xp /= x * x;
    }
    sum + tail
}

/// Bisection for an increasing predicate change: finds x in [lo, hi] with
/// `f(x) ≈ 0`, assuming f(lo) ≤ 0 ≤ f(hi).
pub fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi - lo <= tol {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::NonConvergence {
            iterations: max_iter,
            detail: format!("bracket [{lo}, {hi}] still wider than {tol}"),
        })
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// Composite Gauss–Legendre rule with fixed nodes.
#[derive(Debug, Clone)]
pub struct Quadrature {
    xs: Vec<f64>,
    ws: Vec<f64>,
}

impl Quadrature {
    pub fn new(order: usize) -> Self {
        let (xs, ws) = gauss_legendre(order);
        Quadrature { xs, ws }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            let c = lo + 0.5 * h;
            let mut s = 0.0;
            for (x, w) in self.xs.iter().zip(&self.ws) {
                s += w * f(c + 0.5 * h * x);
            }
            total += 0.5 * h * s;
        }
        total
    }
}

/// Aitken Δ² transform of a sequence.
pub fn aitken(seq: &[f64]) -> Vec<f64> {
    seq.windows(3)
        .map(|w| {
            let d1 = w[1] - w[0];
            let d2 = w[2] - w[1];
            let den = d2 - d1;
            if den.abs() <= 1e-300 || !den.is_finite() {
                w[2]
            } else {
                w[2] - d2 * d2 / den
            }
        })
        .collect()
}

/// Binomial coefficient as f64 via log-gamma for large arguments.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Pearson correlation.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Empirical quantile (linear interpolation) of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zeta_matches_riemann_values() {
        assert_relative_eq!(
            hurwitz_zeta(2.0, 1.0),
            std::f64::consts::PI.powi(2) / 6.0,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            hurwitz_zeta(4.0, 1.0),
            std::f64::consts::PI.powi(4) / 90.0,
            max_relative = 1e-13
        );
        // ζ(3, 2) = ζ(3) − 1
        assert_relative_eq!(
            hurwitz_zeta(3.0, 2.0),
            1.202_056_903_159_594_2 - 1.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn zeta_matches_direct_sum_at_large_offset() {
        let direct: f64 = (0..2_000_000).map(|j| (50.5 + j as f64).powf(-2.5)).sum();
        let tail = (50.5f64 + 2_000_000.0).powf(-1.5) / 1.5;
        assert_relative_eq!(hurwitz_zeta(2.5, 50.5), direct + tail, max_relative = 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let q = Quadrature::new(8);
        let v = q.integrate(&|x: f64| x.powi(15) + 3.0 * x * x, 0.0, 1.0, 1);
        assert_relative_eq!(v, 1.0 / 16.0 + 1.0, max_relative = 1e-13);
        let e = q.integrate(&|x: f64| (-x).exp(), 0.0, 30.0, 30);
        assert_relative_eq!(e, 1.0 - (-30f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn aitken_accelerates_geometric_error() {
        let seq: Vec<f64> = (0..6).map(|n| 2.0 + 0.5f64.powi(n)).collect();
        for v in aitken(&seq) {
            assert_relative_eq!(v, 2.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert_relative_eq!(r, std::f64::consts::SQRT_2, max_relative = 1e-13);
    }
}
