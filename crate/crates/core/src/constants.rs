//! Numerical constants: σ by inverse iteration, moment thresholds, tail slopes
//! and the series threshold of the gauge constant.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numeric::{aitken, quantile_sorted, Quadrature};
use crate::pgf::{Extended, LawKind, OffspringLaw};
use crate::tails::{series_classifier, SeriesTerm, SeriesVerdict, TailFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    InverseIteration,
    ThresholdFunctional,
    TailSlope,
    SeriesThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Certified,
    Extrapolated,
    BestEffort,
}

/// One evaluated grid point of a threshold scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub x: f64,
    pub values: Vec<f64>,
    pub verdict: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub iterates: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub extrapolants: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub scan: Vec<ScanPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub value: Extended,
    pub bracket: Option<(f64, f64)>,
    pub method: Method,
    pub confidence: Confidence,
    pub diagnostics: Diagnostics,
}

impl ConstantEstimate {
    pub fn contains(&self, x: f64) -> bool {
        match self.bracket {
            Some((lo, hi)) => lo <= x && x <= hi,
            None => false,
        }
    }

    /// The reciprocal constant, with the bracket inverted.
    pub fn reciprocal(&self) -> ConstantEstimate {
        let mut out = self.clone();
        out.value = match self.value {
            Extended::Finite(v) if v > 0.0 => Extended::from_f64(1.0 / v),
            Extended::Finite(_) => Extended::Infinite,
            Extended::Infinite => Extended::Finite(0.0),
        };
        out.bracket = self.bracket.map(|(lo, hi)| (1.0 / hi, 1.0 / lo));
        out
    }

    pub fn scaled(&self, c: f64) -> ConstantEstimate {
        let mut out = self.clone();
        out.value = Extended::from_f64(self.value.value() * c);
        out.bracket = self.bracket.map(|(lo, hi)| (lo * c, hi * c));
        out
    }
}

/// σ = lim a^{n+1}((f_n)^{−1}(S₀) − 1).
pub fn sigma_inverse_iteration(law: &OffspringLaw, n_max: usize) -> Result<ConstantEstimate> {
    let meta = law.metadata();
    let s0 = match meta.radius_s0 {
        Extended::Finite(s) if meta.s0_applicable && s > 1.0 => s,
        other => {
            return Err(Error::Regime(format!(
                "σ needs 1 < S0 < ∞, law has S0 = {}",
                match other {
                    Extended::Infinite => "inf".to_string(),
                    Extended::Finite(v) => v.to_string(),
                }
            )))
        }
    };
    let a = meta.mean;
    let mut notes = Vec::new();
    let (us, closed) = match law.kind() {
        LawKind::GeometricShifted { k, .. } => {
            // (f_n)^{-1}(S0)^k = 1/(1 − a^{−n−1})
            let kf = *k as f64;
            let us: Vec<f64> = (0..=n_max)
                .map(|n| (-(-a.powi(-(n as i32) - 1)).ln_1p() / kf).exp_m1())
                .collect();
            notes.push("closed-form inverse of the iterate".into());
            (us, true)
        }
        _ => {
            let mut us = vec![s0 - 1.0];
            us.extend(law.inverse_iterate_shifted(n_max, s0 - 1.0)?);
            (us, false)
        }
    };
    let seq: Vec<f64> = us
        .iter()
        .enumerate()
        .take_while(|(_, u)| **u > 1e-290)
        .map(|(n, u)| a.powi(n as i32 + 1) * u)
        .collect();
    if seq.len() < 3 {
        return Err(Error::PrecisionFloor { usable: seq.len() });
    }
    // usable prefix: stop once successive differences reach the rounding floor
    let mut usable = seq.len();
    for i in 2..seq.len() {
        let d = (seq[i] - seq[i - 1]).abs();
        if d <= 1e-14 * seq[i].abs() {
            usable = i + 1;
            break;
        }
    }
    let prefix = &seq[..usable];
    let diffs: Vec<f64> = prefix.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let shrinking = diffs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) || w[0] < 1e-13);
    notes.push(format!(
        "{} iterates, {} usable; successive differences {}",
        seq.len(),
        usable,
        if shrinking { "shrinking" } else { "not monotone" }
    ));
    let ext = aitken(prefix);
    let mut value = None;
    for w in ext.windows(3) {
        if (w[0] - w[1]).abs() <= 1e-8 && (w[1] - w[2]).abs() <= 1e-8 {
            value = Some(w[2]);
            break;
        }
    }
    let (value, confidence) = match value {
        Some(v) if closed => (v, Confidence::Certified),
        Some(v) => (v, Confidence::Extrapolated),
        None => {
            notes.push("extrapolants did not settle to 1e-8".into());
            (*ext.last().unwrap_or(&prefix[prefix.len() - 1]), Confidence::BestEffort)
        }
    };
    let spread = ext
        .iter()
        .rev()
        .take(3)
        .map(|e| (e - value).abs())
        .fold(0.0, f64::max)
        .max(1e-12 * value.abs());
    Ok(ConstantEstimate {
        value: Extended::Finite(value),
        bracket: Some((value - spread, value + spread)),
        method: Method::InverseIteration,
        confidence,
        diagnostics: Diagnostics {
            iterates: seq,
            extrapolants: ext,
            scan: Vec::new(),
            notes,
        },
    })
}

/// Law of W used by a threshold functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WLaw {
    /// Gamma density with the given shape and scale.
    Gamma { shape: f64, scale: f64 },
    /// Depth-truncated Monte Carlo draws.
    Samples(Vec<f64>),
}

/// Classification of one grid value from three nested estimates.
fn doubling_verdict(v: &[f64; 3]) -> &'static str {
    if v.iter().any(|x| !x.is_finite()) {
        return "diverges";
    }
    let r1 = v[1] / v[0];
    let r2 = v[2] / v[1];
    if r1 > 1.5 && r2 > 1.5 {
        "diverges"
    } else if (r2 - 1.0).abs() < 0.05 {
        "finite"
    } else {
        "unresolved"
    }
}

/// Brackets the θ where E(W·g^{−1}(θW)) turns infinite and returns C = 1/θ*.
/// `ln_g_inverse` is log g^{−1}, so that e^x is passed as the identity.
///
/// Against a density the expectation is integrated up to cutoffs L, 4L, 16L;
/// against samples the mean over n/4, n/2, n draws is used.
pub fn threshold_functional(
    ln_g_inverse: &(dyn Fn(f64) -> f64 + Sync),
    theta_grid: &[f64],
    w: &WLaw,
) -> Result<ConstantEstimate> {
    let mut scan = Vec::new();
    let quad = Quadrature::new(16);
    for &theta in theta_grid {
        let vals: [f64; 3] = match w {
            WLaw::Gamma { shape, scale } => {
                let ln_norm = ln_gamma(*shape) + shape * scale.ln();
                let f = |x: f64| {
                    let lg = ln_g_inverse(theta * x);
                    if lg == f64::NEG_INFINITY {
                        return 0.0;
                    }
                    (shape * x.ln() + lg - x / scale - ln_norm).exp()
                };
                let l0 = 400.0 * scale * shape.max(1.0);
                let mut out = [0.0; 3];
                let mut acc = 0.0;
                let mut lo = 0.0;
                for (i, m) in [1.0, 4.0, 16.0].iter().enumerate() {
                    let hi = l0 * m;
                    acc += quad.integrate(&f, lo, hi, ((hi - lo) / 2.0).ceil().max(16.0) as usize);
                    out[i] = acc;
                    lo = hi;
                }
                out
            }
            WLaw::Samples(xs) => {
                let n = xs.len();
                let mean_of = |m: usize| {
                    xs[..m].iter().map(|&x| x * ln_g_inverse(theta * x).exp()).sum::<f64>() / m as f64
                };
                [mean_of(n / 4), mean_of(n / 2), mean_of(n)]
            }
        };
        scan.push(ScanPoint {
            x: theta,
            values: vals.to_vec(),
            verdict: doubling_verdict(&vals).into(),
        });
    }
    let finite_max = scan
        .iter()
        .filter(|p| p.verdict == "finite")
        .map(|p| p.x)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let div_min = scan
        .iter()
        .filter(|p| p.verdict == "diverges")
        .map(|p| p.x)
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    let confidence = match w {
        WLaw::Gamma { .. } => Confidence::Extrapolated,
        WLaw::Samples(_) => Confidence::BestEffort,
    };
    let Some(div_min) = div_min else {
        return Err(Error::Regime(
            "no finite C: the functional stays finite on the whole grid".into(),
        ));
    };
    let lo = finite_max.unwrap_or(0.0).min(div_min);
    let theta_star = if lo > 0.0 { 0.5 * (lo + div_min) } else { div_min };
    Ok(ConstantEstimate {
        value: Extended::Finite(1.0 / theta_star),
        bracket: Some((1.0 / div_min, if lo > 0.0 { 1.0 / lo } else { f64::INFINITY })),
        method: Method::ThresholdFunctional,
        confidence,
        diagnostics: Diagnostics {
            scan,
            notes: vec![format!("θ* in [{lo}, {div_min}]; value is C = 1/θ*")],
            ..Default::default()
        },
    })
}

/// Least-squares slope and intercept.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Points (x, −log P̂(W > x)) for empirical quantile levels in [q_lo, q_hi].
fn upper_tail_points(sorted: &[f64], q_lo: f64, q_hi: f64) -> Vec<(f64, f64)> {
    let n = sorted.len();
    let i_lo = (q_lo * n as f64).floor() as usize;
    let i_hi = ((q_hi * n as f64).floor() as usize).min(n - 1);
    let mut pts = Vec::new();
    let mut i = i_lo;
    while i < i_hi {
        let x = sorted[i];
        let above = n - sorted.partition_point(|&v| v <= x);
        if above > 0 && x > 0.0 {
            pts.push((x, -(above as f64 / n as f64).ln()));
        }
        i += ((i_hi - i_lo) / 200).max(1);
    }
    pts
}

/// Slope of log(−log P̂(W>x)) against log x over an upper quantile window.
pub fn tail_exponent_fit(samples: &[f64], q_lo: f64, q_hi: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pts = upper_tail_points(&s, q_lo, q_hi);
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    fit_line(&xs, &ys).0
}

/// Slope of log(−log P(W_n>x)) against log x from the exact law of Z_n,
/// over the x where the tail probability lies in `p_window`.
pub fn tail_exponent_exact(law: &OffspringLaw, depth: usize, p_window: (f64, f64)) -> Result<f64> {
    let pmf = law.generation_pmf(depth, 1 << 16)?;
    let scale = law.mean().powi(depth as i32);
    let mut surv = 0.0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in (1..pmf.len()).rev() {
        // P(Z_n ≥ k) = P(W_n > (k − 1/2)/a^n)
        surv += pmf[k];
        if surv >= p_window.0 && surv <= p_window.1 {
            xs.push(((k as f64 - 0.5) / scale).ln());
            ys.push((-surv.ln()).ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::PrecisionFloor { usable: xs.len() });
    }
    Ok(fit_line(&xs, &ys).0)
}

const WINDOWS: [(f64, f64); 2] = [(0.9, 0.99), (0.99, 0.999)];

/// Slope of −log P̂(W>x) against R(x) on two upper quantile windows.
fn tail_slope(samples: &[f64], r: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    WINDOWS
        .iter()
        .map(|&(lo, hi)| {
            let pts = upper_tail_points(&s, lo, hi);
            let xs: Vec<f64> = pts.iter().map(|p| r(p.0)).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            fit_line(&xs, &ys).0
        })
        .collect()
}

/// τ from the upper tail of W, fitting −log P̂(W>x) ≈ τ·x^{γ/(γ−1)}. Always best effort.
pub fn tau_estimate(law: &OffspringLaw, w_samples: &[f64]) -> Result<ConstantEstimate> {
    let meta = law.metadata();
    let gamma = match (meta.max_support, meta.gamma) {
        (Some(m), Some(g)) if m >= 2 && g > 1.0 => g,
        _ => return Err(Error::Regime("τ needs bounded support M with 1 < M < ∞".into())),
    };
    if w_samples.len() < 1000 {
        return Err(Error::domain("w_samples", w_samples.len() as f64, "need at least 1000 draws"));
    }
    let beta = gamma / (gamma - 1.0);
    let slopes = tail_slope(w_samples, &|x: f64| x.powf(beta));
    let half = tail_slope(&w_samples[..w_samples.len() / 2], &|x: f64| x.powf(beta));
    let exponent = tail_exponent_fit(w_samples, 0.9, 0.999);
    let value = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let lo = slopes.iter().chain(&half).copied().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().chain(&half).copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = w_samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    Ok(ConstantEstimate {
        value: Extended::Finite(value),
        bracket: Some((lo, hi)),
        method: Method::TailSlope,
        confidence: Confidence::BestEffort,
        diagnostics: Diagnostics {
            iterates: slopes.iter().chain(&half).copied().collect(),
            notes: vec![
                format!("γ = {gamma}, fitted against x^{beta}"),
                format!("window slopes (full sample) {slopes:?}, half sample {half:?}"),
                format!("log-log tail exponent {exponent} (reference γ/(γ−1) = {beta})"),
                format!("q0.999 = {}", quantile_sorted(&s, 0.999)),
            ],
            ..Default::default()
        },
    })
}

/// ξ_R for E exp(R(δW)), R(x) = x^b ℓ(x), given a declared tail equivalence
/// −log P(W > x) ≍ R(x). The tail slope κ of −log P̂(W>x) against R(x) gives ξ_R = κ^{1/b}.
pub fn xi_r_bracket(
    r: &dyn Fn(f64) -> f64,
    b: f64,
    tail_equivalence_certified: bool,
    w_samples: &[f64],
) -> Result<ConstantEstimate> {
    if !tail_equivalence_certified {
        return Err(Error::Regime(
            "ξ_R requires a declared tail equivalence −log P(W > x) ≍ R(x)".into(),
        ));
    }
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::domain("b", b, "must lie in (0, 1]"));
    }
    let n = w_samples.len();
    let full = tail_slope(w_samples, r);
    let half = tail_slope(&w_samples[..n / 2], r);
    let xi: Vec<f64> = full.iter().chain(&half).map(|k| k.max(0.0).powf(1.0 / b)).collect();
    let value = full.iter().map(|k| k.max(0.0).powf(1.0 / b)).sum::<f64>() / full.len() as f64;
    let lo = xi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut scan = Vec::new();
    for &delta in &[0.1, 0.25, 0.5, 2.0, 4.0] {
        let mean_of = |m: usize| {
            w_samples[..m]
                .iter()
                .map(|&x| r(delta * x).exp())
                .sum::<f64>()
                / m as f64
        };
        let vals = [mean_of(n / 4), mean_of(n / 2), mean_of(n)];
        scan.push(ScanPoint {
            x: delta,
            values: vals.to_vec(),
            verdict: doubling_verdict(&vals).into(),
        });
    }
    Ok(ConstantEstimate {
        value: Extended::Finite(value),
        bracket: Some((lo, hi)),
        method: Method::TailSlope,
        confidence: Confidence::BestEffort,
        diagnostics: Diagnostics {
            iterates: xi,
            scan,
            notes: vec!["tail slope over quantile windows 0.9–0.99 and 0.99–0.999, full and half sample".into()],
            ..Default::default()
        },
    })
}

/// Scans δ for the flip of Σ_n Q(Y(0) − Y(−ℓ) > δ·g(n)): divergent for some ℓ ≤ ell_max
/// below the threshold, convergent for every ℓ above. Returns δ* = C_φ^{−1}.
pub fn c_phi_series_threshold(
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    increment_tail: &dyn Fn(u32) -> TailFunction,
    delta_grid: &[f64],
    ell_max: u32,
    horizon: u64,
) -> Result<ConstantEstimate> {
    let tails: Vec<TailFunction> = (1..=ell_max).map(increment_tail).collect();
    let mut scan = Vec::new();
    for &delta in delta_grid {
        let mut verdicts = Vec::new();
        for t in &tails {
            let t = t.clone();
            let range = match t.form {
                crate::tails::TailForm::Empirical { .. } => horizon as f64,
                _ => f64::INFINITY,
            };
            let gg = Arc::clone(&g);
            let term = SeriesTerm::numeric_on(move |n| t.eval(delta * gg(n)), range);
            verdicts.push(series_classifier(&term, horizon).verdict);
        }
        let verdict = if verdicts.contains(&SeriesVerdict::Diverges) {
            "diverges"
        } else if verdicts.iter().all(|v| *v == SeriesVerdict::Converges) {
            "converges"
        } else {
            "undecided"
        };
        scan.push(ScanPoint {
            x: delta,
            values: verdicts
                .iter()
                .map(|v| match v {
                    SeriesVerdict::Converges => 1.0,
                    SeriesVerdict::Diverges => -1.0,
                    SeriesVerdict::Undecided => 0.0,
                })
                .collect(),
            verdict: verdict.into(),
        });
    }
    let div_max = scan
        .iter()
        .filter(|p| p.verdict == "diverges")
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max);
    let conv_min = scan
        .iter()
        .filter(|p| p.verdict == "converges")
        .map(|p| p.x)
        .fold(f64::INFINITY, f64::min);
    if !div_max.is_finite() || !conv_min.is_finite() || div_max > conv_min {
        return Err(Error::Regime(format!(
            "series verdicts do not flip cleanly on the δ grid (largest divergent {div_max}, smallest convergent {conv_min})"
        )));
    }
    Ok(ConstantEstimate {
        value: Extended::Finite(0.5 * (div_max + conv_min)),
        bracket: Some((div_max, conv_min)),
        method: Method::SeriesThreshold,
        confidence: Confidence::BestEffort,
        diagnostics: Diagnostics {
            scan,
            notes: vec![format!(
                "value is δ* = 1/C_φ; ℓ explored up to {ell_max}; verdict codes −1 diverges, 0 undecided, 1 converges"
            )],
            ..Default::default()
        },
    })
}
