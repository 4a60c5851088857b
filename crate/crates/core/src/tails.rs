//! Integrated tail K(x), dominated-variation tests and series classification.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgf::{KTailClass, LawKind, OffspringLaw};

/// Shape information attached to a tail function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum TailForm {
    /// c·x^{−exponent} asymptotically.
    AnalyticPowerTail { coef: f64, exponent: f64 },
    /// x^{−index}·ℓ(x) with ℓ slowly varying.
    RegularlyVarying { index: f64 },
    /// Decays like c·e^{−rate·x} or faster than every power.
    ExponentialType { rate: f64 },
    /// Vanishes from `bound` on.
    BoundedSupport { bound: f64 },
    /// Dominated-variation membership certified externally.
    Certified { in_d: bool },
    /// Fraction of a sample exceeding x.
    Empirical { size: usize },
    Composed,
}

/// A decreasing function on [0, ∞).
#[derive(Clone)]
pub struct TailFunction {
    pub form: TailForm,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for TailFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailFunction").field("form", &self.form).finish()
    }
}

impl TailFunction {
    pub fn new(form: TailForm, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TailFunction {
            form,
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// c·x^{−p}
    pub fn power(coef: f64, exponent: f64) -> Self {
        Self::new(TailForm::AnalyticPowerTail { coef, exponent }, move |x| {
            coef * x.powf(-exponent)
        })
    }

    /// c·e^{−rate·x}
    pub fn exponential(coef: f64, rate: f64) -> Self {
        Self::new(TailForm::ExponentialType { rate }, move |x| coef * (-rate * x).exp())
    }

    pub fn composed(eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(TailForm::Composed, eval)
    }

    /// x ↦ fraction of `samples` strictly above x.
    pub fn empirical(mut samples: Vec<f64>) -> Self {
        samples.sort_by(|a, b| a.total_cmp(b));
        let n = samples.len();
        let sorted = Arc::new(samples);
        Self::new(TailForm::Empirical { size: n }, move |x| {
            let above = n - sorted.partition_point(|&v| v <= x);
            above as f64 / n as f64
        })
    }
}

/// K(x) = ∫_x^∞ P(N > u) du.
pub fn k_eval(law: &OffspringLaw, x: f64) -> f64 {
    let x = x.max(0.0);
    if let Some(m) = law.metadata().max_support {
        if x >= m as f64 {
            return 0.0;
        }
    }
    if x >= 9.0e15 {
        return tail_asymptote(law, x);
    }
    let c = x.ceil();
    let floor = x.floor() as u64;
    // P(N > u) = P(N ≥ ⌊x⌋+1) on [x, ⌈x⌉)
    (c - x) * law.survival_ge(floor + 1) + law.expected_excess(c as u64)
}

fn tail_asymptote(law: &OffspringLaw, x: f64) -> f64 {
    match law.kind() {
        LawKind::PowerTail { theta, .. } => {
            let w = law.p(1 << 20) * ((1u64 << 20) as f64).powf(theta + 1.0);
            w * x.powf(1.0 - theta) / (theta * (theta - 1.0))
        }
        _ => 0.0,
    }
}

/// K packaged as a tail function with its analytic form.
pub fn k_function(law: &OffspringLaw) -> TailFunction {
    let meta = law.metadata();
    let form = match (law.kind(), meta.k_tail) {
        (_, KTailClass::BoundedSupport) => TailForm::BoundedSupport {
            bound: meta.max_support.map(|m| m as f64).unwrap_or(f64::INFINITY),
        },
        (LawKind::GeometricShifted { a, k }, _) => TailForm::ExponentialType {
            rate: -((a - 1.0) / a).ln() / *k as f64,
        },
        (LawKind::PowerTail { theta, .. }, _) => {
            let w = law.p(1 << 20) * ((1u64 << 20) as f64).powf(theta + 1.0);
            TailForm::AnalyticPowerTail {
                coef: w / (theta * (theta - 1.0)),
                exponent: theta - 1.0,
            }
        }
        (_, KTailClass::ExponentialType) => TailForm::ExponentialType { rate: f64::NAN },
        (_, KTailClass::RegularlyVarying { k_exponent, .. }) => {
            TailForm::RegularlyVarying { index: k_exponent }
        }
        (_, KTailClass::NotDominated) => TailForm::Certified { in_d: false },
        (_, KTailClass::DominatedOther) => TailForm::Certified { in_d: true },
        (_, KTailClass::Unknown) => TailForm::Composed,
    };
    let law = law.clone();
    TailFunction::new(form, move |x| k_eval(&law, x))
}

/// Log-spaced evaluation points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl GeometricGrid {
    pub fn new(start: f64, end: f64, points: usize) -> Self {
        GeometricGrid { start, end, points }
    }

    pub fn decades(&self) -> f64 {
        (self.end / self.start).log10()
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.points.max(2);
        let r = (self.end / self.start).ln() / (n - 1) as f64;
        (0..n).map(|i| self.start * (r * i as f64).exp()).collect()
    }
}

impl Default for GeometricGrid {
    fn default() -> Self {
        GeometricGrid::new(1.0, 1e6, 61)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominatedVariation {
    pub in_d: bool,
    pub liminf_ratio: f64,
    pub certificate: CertificateKind,
}

/// Tests liminf h(2x)/h(x) > 0.
pub fn dominated_variation_test(h: &TailFunction, grid: &GeometricGrid) -> Result<DominatedVariation> {
    let analytic = |in_d, liminf_ratio| {
        Ok(DominatedVariation {
            in_d,
            liminf_ratio,
            certificate: CertificateKind::Analytic,
        })
    };
    match h.form {
        TailForm::AnalyticPowerTail { exponent, .. } => return analytic(true, 2f64.powf(-exponent)),
        TailForm::RegularlyVarying { index } => return analytic(true, 2f64.powf(-index)),
        TailForm::ExponentialType { .. } | TailForm::BoundedSupport { .. } => {
            return analytic(false, 0.0)
        }
        TailForm::Certified { in_d } => {
            return analytic(in_d, if in_d { f64::NAN } else { 0.0 })
        }
        TailForm::Empirical { .. } | TailForm::Composed => {}
    }
    if grid.decades() < 4.0 - 1e-9 {
        return Err(Error::InsufficientGrid(format!(
            "grid spans {:.2} decades, at least 4 required",
            grid.decades()
        )));
    }
    let xs = grid.points();
    let ratios: Vec<Option<f64>> = xs
        .iter()
        .map(|&x| {
            let hx = h.eval(x);
            (hx > 0.0).then(|| h.eval(2.0 * x) / hx)
        })
        .collect();
    let defined = ratios.iter().filter(|r| r.is_some()).count();
    if defined * 2 < ratios.len() {
        return Err(Error::InsufficientGrid(format!(
            "h vanishes on {} of {} grid points",
            ratios.len() - defined,
            ratios.len()
        )));
    }
    let vals: Vec<f64> = ratios.iter().flatten().copied().collect();
    let third = (vals.len() / 3).max(1);
    let min_of = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    let early = min_of(&vals[..third]);
    let late = min_of(&vals[vals.len() - third..]);
    let hits_zero = vals.contains(&0.0);
    let decaying = hits_zero || (late < 0.1 * early && late < 1e-3);
    Ok(DominatedVariation {
        in_d: !decaying,
        liminf_ratio: late,
        certificate: CertificateKind::Numeric,
    })
}

/// Terms of a nonnegative, eventually nonincreasing series.
#[derive(Clone)]
pub enum SeriesTerm {
    /// coef·n^{−p}·(ln(e ∨ n))^{−q}
    PowerLog { coef: f64, p: f64, q: f64 },
    /// coef·ratio^n
    Geometric { coef: f64, ratio: f64 },
    /// Arbitrary terms, known for n ≤ `range`.
    Numeric {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        range: f64,
    },
}

impl fmt::Debug for SeriesTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesTerm::PowerLog { coef, p, q } => {
                write!(f, "PowerLog {{ coef: {coef}, p: {p}, q: {q} }}")
            }
            SeriesTerm::Geometric { coef, ratio } => {
                write!(f, "Geometric {{ coef: {coef}, ratio: {ratio} }}")
            }
            SeriesTerm::Numeric { range, .. } => write!(f, "Numeric {{ range: {range} }}"),
        }
    }
}

impl SeriesTerm {
    pub fn numeric(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SeriesTerm::Numeric {
            f: Arc::new(f),
            range: f64::INFINITY,
        }
    }

    pub fn numeric_on(f: impl Fn(f64) -> f64 + Send + Sync + 'static, range: f64) -> Self {
        SeriesTerm::Numeric {
            f: Arc::new(f),
            range,
        }
    }

    pub fn eval(&self, n: f64) -> f64 {
        match self {
            SeriesTerm::PowerLog { coef, p, q } => {
                let x = n.max(1.0);
                coef * x.powf(-p) * x.max(std::f64::consts::E).ln().powf(-q)
            }
            SeriesTerm::Geometric { coef, ratio } => coef * ratio.powf(n),
            SeriesTerm::Numeric { f, .. } => f(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesVerdict {
    Converges,
    Diverges,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub verdict: SeriesVerdict,
    pub certificate: CertificateKind,
    /// (n, Σ_{k<n} term(k)) at decade checkpoints.
    pub partial_sums: Vec<(u64, f64)>,
    pub rationale: String,
}

const CONDENSATION_STEPS: i32 = 1000;

/// Decides convergence of Σ term(n).
///
/// Recognized forms are decided analytically. Numeric terms go through the
/// condensed series b_k = 2^k·term(2^k): its decay exponent in k between k/2
/// and k decides, with a band in between left undecided.
pub fn series_classifier(term: &SeriesTerm, horizon: u64) -> SeriesReport {
    let horizon = horizon.max(100);
    let mut partial_sums = Vec::new();
    let mut acc = 0.0;
    let mut next = 10u64;
    for n in 0..horizon {
        acc += term.eval(n as f64);
        if n + 1 == next || n + 1 == horizon {
            partial_sums.push((n + 1, acc));
            next = next.saturating_mul(10);
        }
    }
    let report = |verdict, certificate, rationale: String| SeriesReport {
        verdict,
        certificate,
        partial_sums: partial_sums.clone(),
        rationale,
    };
    match term {
        SeriesTerm::PowerLog { coef, p, q } => {
            if *coef == 0.0 {
                return report(
                    SeriesVerdict::Converges,
                    CertificateKind::Analytic,
                    "identically zero terms".into(),
                );
            }
            let converges = *p > 1.0 || (*p == 1.0 && *q > 1.0);
            let verdict = if converges {
                SeriesVerdict::Converges
            } else {
                SeriesVerdict::Diverges
            };
            report(
                verdict,
                CertificateKind::Analytic,
                format!("n^-{p} (log n)^-{q}: converges iff p > 1, or p = 1 and q > 1"),
            )
        }
        SeriesTerm::Geometric { coef, ratio } => {
            let verdict = if *coef == 0.0 || *ratio < 1.0 {
                SeriesVerdict::Converges
            } else {
                SeriesVerdict::Diverges
            };
            report(
                verdict,
                CertificateKind::Analytic,
                format!("geometric terms with ratio {ratio}"),
            )
        }
        SeriesTerm::Numeric { range, .. } => {
            let kmax = if range.is_finite() {
                (range.log2().floor() as i32).min(CONDENSATION_STEPS)
            } else {
                CONDENSATION_STEPS
            };
            if kmax < 8 {
                return report(
                    SeriesVerdict::Undecided,
                    CertificateKind::Numeric,
                    format!("terms known only up to n = {range}"),
                );
            }
            let ln_b = |k: i32| {
                let t = term.eval(2f64.powi(k));
                if t > 0.0 {
                    k as f64 * std::f64::consts::LN_2 + t.ln()
                } else {
                    f64::NEG_INFINITY
                }
            };
            let (hi, lo) = (ln_b(kmax), ln_b(kmax / 2));
            let growth = match partial_sums.as_slice() {
                [.., (_, prev), (_, last)] => last - prev,
                _ => acc,
            };
            if hi == f64::NEG_INFINITY {
                return report(
                    SeriesVerdict::Converges,
                    CertificateKind::Numeric,
                    format!("terms vanish at n = 2^{kmax}"),
                );
            }
            // b_k ≈ k^{−s}
            let s = -(hi - lo) / std::f64::consts::LN_2;
            let (verdict, why) = if s > 1.5 {
                (SeriesVerdict::Converges, "decays faster than k^-1.5")
            } else if s < 0.5 && growth >= 1e-6 {
                (SeriesVerdict::Diverges, "decays slower than k^-0.5")
            } else if s < 0.5 {
                (SeriesVerdict::Undecided, "partial sums flat over the last decade")
            } else {
                (SeriesVerdict::Undecided, "decay exponent inside the undecided band [0.5, 1.5]")
            };
            report(
                verdict,
                CertificateKind::Numeric,
                format!(
                    "condensed terms 2^k t(2^k) decay like k^-{s:.3} between k = {} and {kmax}: {why}; last-decade growth {growth:.3e}",
                    kmax / 2
                ),
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub sup_ratio: f64,
    pub inf_ratio: f64,
    pub points: Vec<(f64, f64)>,
}

/// sup and inf of h2/h1 over the grid.
pub fn asymp_equiv_diagnostic(
    h1: &TailFunction,
    h2: &TailFunction,
    grid: &[f64],
) -> Result<EquivalenceReport> {
    let mut points = Vec::with_capacity(grid.len());
    for &x in grid {
        let d = h1.eval(x);
        if d == 0.0 {
            return Err(Error::DivideByZero(x));
        }
        points.push((x, h2.eval(x) / d));
    }
    let sup_ratio = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let inf_ratio = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(EquivalenceReport {
        sup_ratio,
        inf_ratio,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn binary() -> OffspringLaw {
        OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap()
    }

    #[test]
    fn k_of_binary_law() {
        let b = binary();
        assert_relative_eq!(k_eval(&b, 0.0), 1.6, epsilon = 1e-15);
        assert_relative_eq!(k_eval(&b, 1.5), 0.4, epsilon = 1e-15);
        assert_eq!(k_eval(&b, 2.0), 0.0);
        assert_relative_eq!(k_eval(&b, 0.5), 0.8 + 0.5 * 0.8, epsilon = 1e-15);
    }

    #[test]
    fn k_at_zero_is_mean() {
        for l in [
            OffspringLaw::geometric_shifted(5.0, 1).unwrap(),
            OffspringLaw::geometric_shifted(3.0, 3).unwrap(),
            OffspringLaw::power_tail(3.0, vec![0.0, 0.0]).unwrap(),
            OffspringLaw::power_tail(1.5, vec![0.3]).unwrap(),
        ] {
            assert_relative_eq!(k_eval(&l, 0.0), l.mean(), max_relative = 1e-9);
        }
    }

    #[test]
    fn k_finite_differences_match_survival() {
        let l = OffspringLaw::power_tail(3.0, vec![0.0, 0.0]).unwrap();
        for &u in &[0.5, 3.5, 17.5, 250.5] {
            let h = 0.25;
            let d = (k_eval(&l, u - h) - k_eval(&l, u + h)) / (2.0 * h);
            assert_relative_eq!(d, l.survival_ge(u.floor() as u64 + 1), max_relative = 1e-9);
        }
    }

    #[test]
    fn power_tail_k_asymptote() {
        let l = OffspringLaw::power_tail(3.0, vec![0.0, 0.0]).unwrap();
        let k = k_function(&l);
        let TailForm::AnalyticPowerTail { coef, exponent } = k.form else {
            panic!("form")
        };
        assert_relative_eq!(exponent, 2.0);
        let x = 1e5;
        assert_relative_eq!(k.eval(x), coef * x.powf(-2.0), max_relative = 1e-4);
    }

    #[test]
    fn dominated_variation_forms() {
        let g = GeometricGrid::new(1.0, 1e6, 40);
        for p in [0.5, 1.0, 2.0] {
            let r = dominated_variation_test(&TailFunction::power(3.0, p), &g).unwrap();
            assert!(r.in_d);
            assert!((r.liminf_ratio - 2f64.powf(-p)).abs() < 1e-9);
        }
        let e = dominated_variation_test(&TailFunction::exponential(1.0, 1.0), &g).unwrap();
        assert!(!e.in_d);
        let kb = dominated_variation_test(&k_function(&binary()), &g).unwrap();
        assert!(!kb.in_d);
        // numeric routes
        let num = dominated_variation_test(&TailFunction::composed(|x| (1.0 + x).powi(-2)), &g)
            .unwrap();
        assert!(num.in_d && num.certificate == CertificateKind::Numeric);
        let g2 = GeometricGrid::new(0.01, 100.0, 40);
        let numexp =
            dominated_variation_test(&TailFunction::composed(|x| (-x).exp()), &g2).unwrap();
        assert!(!numexp.in_d);
        let short = GeometricGrid::new(1.0, 100.0, 10);
        assert!(matches!(
            dominated_variation_test(&TailFunction::composed(|x| 1.0 / x), &short),
            Err(Error::InsufficientGrid(_))
        ));
        assert!(matches!(
            dominated_variation_test(&TailFunction::composed(|x| (-x).exp()), &g),
            Err(Error::InsufficientGrid(_))
        ));
    }

    #[test]
    fn series_examples() {
        let r = series_classifier(&SeriesTerm::PowerLog { coef: 1.0, p: 2.0, q: 0.0 }, 1000);
        assert_eq!(r.verdict, SeriesVerdict::Converges);
        let h = series_classifier(&SeriesTerm::numeric(|n| 1.0 / (n + 1.0)), 100_000);
        assert_eq!(h.verdict, SeriesVerdict::Diverges);
        let c = series_classifier(&SeriesTerm::numeric(|n| 1.0 / (n + 1.0).powi(2)), 100_000);
        assert_eq!(c.verdict, SeriesVerdict::Converges);
        let flat = series_classifier(&SeriesTerm::numeric(|n| 1e-12 / (n + 1.0)), 100_000);
        assert_eq!(flat.verdict, SeriesVerdict::Undecided);
        // log n / n diverges, log n / n^1.01 converges
        let d = series_classifier(&SeriesTerm::numeric(|n| (n + 2.0).ln() / (n + 2.0)), 10_000);
        assert_eq!(d.verdict, SeriesVerdict::Diverges);
        let e = series_classifier(
            &SeriesTerm::numeric(|n| (n + 2.0).ln() / (n + 2.0).powf(1.01)),
            10_000,
        );
        assert_eq!(e.verdict, SeriesVerdict::Converges);
        let mid = series_classifier(&SeriesTerm::numeric(|n| 1.0 / ((n + 3.0) * (n + 3.0).ln())), 10_000);
        assert_eq!(mid.verdict, SeriesVerdict::Undecided);
    }

    #[test]
    fn equivalence_examples() {
        let h1 = TailFunction::power(1.0, 2.0);
        let h2 = TailFunction::power(3.0, 2.0);
        let grid = GeometricGrid::new(1.0, 1e3, 10).points();
        let same = asymp_equiv_diagnostic(&h1, &h1, &grid).unwrap();
        assert_eq!((same.sup_ratio, same.inf_ratio), (1.0, 1.0));
        let r = asymp_equiv_diagnostic(&h1, &h2, &grid).unwrap();
        assert_relative_eq!(r.sup_ratio, 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.inf_ratio, 3.0, max_relative = 1e-12);
        let zero = TailFunction::composed(|_| 0.0);
        assert!(matches!(
            asymp_equiv_diagnostic(&zero, &h1, &grid),
            Err(Error::DivideByZero(_))
        ));
    }

    #[test]
    fn empirical_tail_counts() {
        let t = TailFunction::empirical(vec![3.0, 1.0, 2.0, 2.0]);
        assert_eq!(t.eval(0.0), 1.0);
        assert_eq!(t.eval(2.0), 0.25);
        assert_eq!(t.eval(3.0), 0.0);
    }
}
