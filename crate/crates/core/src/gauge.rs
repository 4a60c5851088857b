//! Gauge functions φ(t) = t^α·g(|log t|), class checks and the verdict decision tree.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::constants::{
    c_phi_series_threshold, sigma_inverse_iteration, tau_estimate, xi_r_bracket, Confidence,
    ConstantEstimate,
};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_replicas, replica_rng, Execution};
use crate::pgf::{Extended, KTailClass, LawMetadata, OffspringLaw, RealFn, Regime};
use crate::spine::{geometric_increment_tail, SpineSampler, WSampler};
use crate::tails::{TailForm, TailFunction};

/// A user-supplied g with a display name.
#[derive(Clone)]
pub struct CustomG {
    pub name: String,
    pub f: RealFn,
}

impl fmt::Debug for CustomG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomG({})", self.name)
    }
}

impl Serialize for CustomG {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name)
    }
}

/// Shape of g. Logarithms are taken as log(e ∨ x) and powers as (1 ∨ x)^b.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum GForm {
    Const { c: f64 },
    /// (log x)^exponent, the g of t^α(log|log t|)^exponent.
    LogLogPow { exponent: f64 },
    Log,
    PowerB { b: f64 },
    /// R^{−1}(log x) with R(x) = coef·x^b, 0 < b ≤ 1. `tail_equivalence` declares
    /// −log P(W > x) ≍ R(x).
    RInverseLog {
        coef: f64,
        b: f64,
        #[serde(default)]
        tail_equivalence: bool,
    },
    #[serde(skip_deserializing)]
    Custom { g: CustomG },
}

impl GForm {
    pub fn custom(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GForm::Custom {
            g: CustomG {
                name: name.into(),
                f: Arc::new(f),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::InvalidGauge(d.into()));
        match self {
            GForm::Const { c } if !(*c > 0.0 && c.is_finite()) => bad("constant must be positive"),
            GForm::LogLogPow { exponent } if !exponent.is_finite() => bad("exponent must be finite"),
            GForm::PowerB { b } if !b.is_finite() => bad("b must be finite"),
            GForm::RInverseLog { coef, b, .. } if !(*coef > 0.0 && *b > 0.0 && *b <= 1.0) => {
                bad("R needs coef > 0 and 0 < b ≤ 1")
            }
            _ => Ok(()),
        }
    }

    /// ln g(x).
    pub fn ln_eval(&self, x: f64) -> f64 {
        let l = x.max(std::f64::consts::E).ln();
        match self {
            GForm::Const { c } => c.ln(),
            GForm::LogLogPow { exponent } => exponent * l.ln(),
            GForm::Log => l.ln(),
            GForm::PowerB { b } => b * x.max(1.0).ln(),
            GForm::RInverseLog { coef, b, .. } => (l / coef).ln() / b,
            GForm::Custom { g } => (g.f)(x).ln(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GForm::Custom { g } => (g.f)(x),
            _ => self.ln_eval(x).exp(),
        }
    }

    /// (power, log-power) with g(x) ≍ x^power·(log x)^{log-power}; `None` for custom maps.
    pub fn growth_order(&self) -> Option<(f64, f64)> {
        match self {
            GForm::Const { .. } => Some((0.0, 0.0)),
            GForm::LogLogPow { exponent } => Some((0.0, *exponent)),
            GForm::Log => Some((0.0, 1.0)),
            GForm::PowerB { b } => Some((*b, 0.0)),
            GForm::RInverseLog { b, .. } => Some((0.0, 1.0 / b)),
            GForm::Custom { .. } => None,
        }
    }

    /// Leading constant c in g(x) ~ c·x^power·(log x)^{log-power}.
    fn leading_coef(&self) -> f64 {
        match self {
            GForm::Const { c } => *c,
            GForm::RInverseLog { coef, b, .. } => coef.powf(-1.0 / b),
            _ => 1.0,
        }
    }
}

fn cmp_order(x: (f64, f64), y: (f64, f64)) -> Ordering {
    const EPS: f64 = 1e-12;
    for (u, v) in [(x.0, y.0), (x.1, y.1)] {
        if (u - v).abs() > EPS {
            return u.partial_cmp(&v).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

#[derive(Debug, Clone, Serialize)]
pub struct GFunction {
    #[serde(flatten)]
    pub form: GForm,
    /// limsup g(n+1)/g(n).
    pub ratio_limsup: f64,
    /// True when `ratio_limsup` is a numeric estimate.
    pub advisory: bool,
}

const RATIO_HORIZON: u64 = 1 << 16;

impl GFunction {
    pub fn new(form: GForm) -> Result<Self> {
        form.validate()?;
        let (ratio_limsup, advisory) = match &form {
            GForm::Custom { .. } => {
                // scan the finite range only
                let top = (1..=RATIO_HORIZON)
                    .find(|&n| !form.ln_eval(n as f64).is_finite())
                    .map_or(RATIO_HORIZON, |n| n - 1);
                let r = (top / 2..top)
                    .map(|n| form.ln_eval(n as f64 + 1.0) - form.ln_eval(n as f64))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .exp();
                (r, true)
            }
            _ => (1.0, false),
        };
        Ok(GFunction {
            form,
            ratio_limsup,
            advisory,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.form.eval(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GMembership {
    pub in_g: bool,
    pub ratio_limsup: f64,
    pub advisory: bool,
}

/// g ∈ G iff g > 0 and limsup g(n+1)/g(n) < a.
pub fn g_membership(g: &GFunction, a: f64) -> GMembership {
    let positive = (0..64).all(|i| {
        let v = g.eval(i as f64 * 16.0);
        v > 0.0 && v.is_finite()
    });
    GMembership {
        in_g: positive && g.ratio_limsup < a,
        ratio_limsup: g.ratio_limsup,
        advisory: g.advisory,
    }
}

/// φ(t) = t^α·g(|log t|) on (0, δ₁).
#[derive(Debug, Clone, Serialize)]
pub struct GaugeFunction {
    pub alpha: f64,
    pub g: GFunction,
    /// Largest certified monotone window, once checked.
    pub delta1: Option<f64>,
}

impl GaugeFunction {
    pub fn new(alpha: f64, g: GFunction) -> Self {
        GaugeFunction {
            alpha,
            g,
            delta1: None,
        }
    }

    pub fn for_law(law: &OffspringLaw, form: GForm) -> Result<Self> {
        Ok(Self::new(law.mean().ln(), GFunction::new(form)?))
    }

    /// ln φ(t).
    pub fn ln_eval(&self, t: f64) -> f64 {
        self.alpha * t.ln() + self.g.form.ln_eval(-t.ln())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.ln_eval(t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiMembership {
    pub in_phi: bool,
    pub delta1: f64,
}

const PHI_STEPS_PER_OCTAVE: usize = 8;
const PHI_OCTAVES: usize = 1000;

/// Checks φ increasing on a dyadic grid t = 2^{−j/8} down to 2^{−1000} and φ(0+) = 0.
pub fn phi_membership(phi: &GaugeFunction) -> Result<PhiMembership> {
    let n = PHI_STEPS_PER_OCTAVE * PHI_OCTAVES;
    let t = |j: usize| (-(j as f64) / PHI_STEPS_PER_OCTAVE as f64 * std::f64::consts::LN_2).exp();
    let vals: Vec<f64> = (1..=n).map(|j| phi.ln_eval(t(j))).collect();
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::NotMonotone("φ is undefined on the grid".into()));
    }
    // ln φ must decrease as j grows (t shrinks)
    let mut j0 = vals.len() - 1;
    while j0 > 0 && vals[j0 - 1] > vals[j0] {
        j0 -= 1;
    }
    let tail_drop = vals[j0] - vals[n - 1];
    if j0 >= n / 2 || tail_drop < 20.0 {
        return Err(Error::NotMonotone(format!(
            "no increasing window with φ(0+) = 0 found down to t = 2^-{PHI_OCTAVES}"
        )));
    }
    Ok(PhiMembership {
        in_phi: true,
        delta1: t(j0 + 1),
    })
}

/// One δ₀ of the (G_Δ) statistic Σ_{k<n} h(δ₀g(k)) − log g(n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GDeltaTrace {
    pub delta0: f64,
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GDeltaReport {
    pub holds: bool,
    /// False when `holds` rests on the numeric trend only.
    pub certified: bool,
    pub rationale: String,
    pub trace: Vec<GDeltaTrace>,
}

/// Whether Σ_{k<n} h(δ₀g(k)) grows polynomially, decided from the analytic forms.
fn polynomial_growth(form: &TailForm, order: (f64, f64), delta0: f64) -> Option<bool> {
    let (p, q) = order;
    let bounded = p < 0.0 || (p == 0.0 && q <= 0.0);
    match form {
        TailForm::AnalyticPowerTail { exponent: rho, .. } | TailForm::RegularlyVarying { index: rho } => {
            Some(bounded || rho * p < 1.0)
        }
        TailForm::ExponentialType { rate } if rate.is_finite() => Some(if bounded {
            true
        } else if p > 0.0 {
            false
        } else if q < 1.0 {
            true
        } else if q == 1.0 {
            rate * delta0 < 1.0
        } else {
            false
        }),
        TailForm::BoundedSupport { .. } => Some(bounded).filter(|b| *b),
        _ => None,
    }
}

/// The (G_Δ) condition for some δ₀ in the grid, traced at n = 2^j ≤ horizon.
pub fn g_delta_condition(
    g: &GFunction,
    increment_tail: &TailFunction,
    delta0_grid: &[f64],
    horizon: u64,
) -> GDeltaReport {
    let mut trace = Vec::new();
    let mut certified_at = None;
    let mut advisory_at = None;
    for &d in delta0_grid {
        let mut s = 0.0;
        let mut points = Vec::new();
        let mut next = 2u64;
        for k in 0..horizon {
            s += increment_tail.eval(d * g.eval(k as f64));
            if k + 1 == next {
                points.push((next, s - g.form.ln_eval(next as f64)));
                next *= 2;
            }
        }
        let analytic = g
            .form
            .growth_order()
            .and_then(|o| polynomial_growth(&increment_tail.form, o, d));
        if analytic == Some(true) && certified_at.is_none() {
            certified_at = Some(d);
        }
        if points.len() >= 6 && advisory_at.is_none() {
            let m = points.len();
            let rising = points[m - 4..].windows(2).all(|w| w[1].1 > w[0].1);
            let mid = points[m / 2].1;
            if rising && points[m - 1].1 > mid + 1.0 {
                advisory_at = Some(d);
            }
        }
        trace.push(GDeltaTrace { delta0: d, points });
    }
    let (holds, certified, rationale) = match (certified_at, advisory_at) {
        (Some(d), _) => (
            true,
            true,
            format!("partial sums grow polynomially at δ₀ = {d} while log g(n) is logarithmic"),
        ),
        (None, Some(d)) => (true, false, format!("statistic rising at δ₀ = {d} (numeric trend only)")),
        (None, None) => (false, false, "statistic bounded or falling on every δ₀ (advisory)".into()),
    };
    GDeltaReport {
        holds,
        certified,
        rationale,
        trace,
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    /// φ-H(∂T) = C_φ·W. `c_phi` is absent when only the decision logic ran.
    AbsolutelyContinuous { c_phi: Option<ConstantEstimate> },
    Infinite,
    /// φ-H(∂T ∖ Δ) = 0 with μ(Δ) = 0; φ-H(Δ) unresolved.
    ZeroOffExceptional,
    Zero,
    Undecided,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::AbsolutelyContinuous { .. } => "absolutely_continuous",
            Outcome::Infinite => "infinite",
            Outcome::ZeroOffExceptional => "zero_off_exceptional",
            Outcome::Zero => "zero",
            Outcome::Undecided => "undecided",
        }
    }
}

/// Which branch of the decision tree produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremPath {
    /// M < ∞, exact gauge t^α(log|log t|)^{(γ−1)/γ} with constant τ^{(γ−1)/γ}.
    ExactGaugeBoundedSupport,
    /// 1 < S₀ < ∞, exact gauge t^α·log|log t| with constant σ.
    ExactGaugeExponentialMoment,
    /// Declared −log P(W>x) ≍ R(x), exact gauge t^α R^{−1}(log|log t|) with constant ξ_R.
    ExactGaugeTailEquivalence,
    /// K ∉ D: g compared with the exact gauge of the regime.
    NonDominatedGaugeComparison,
    /// K ∉ D without an exact gauge: C_φ from the series threshold.
    NonDominatedSeriesThreshold,
    /// K ∈ D and Σ K(g(n)) < ∞.
    DominatedSeriesConverges,
    /// K ∈ D and Σ K(g(n)) = ∞.
    DominatedSeriesDiverges,
    /// K ∈ D, Σ K(g(n)) = ∞ and the double limsup condition holds.
    DominatedSeriesDivergesStrong,
    /// 1 < θ₀ < ∞, g(n) = n^{b₀}: decided by finiteness of E(N^{θ₀}).
    PowerMomentBoundary,
    Unresolved,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub outcome: Outcome,
    pub theorem_path: TheoremPath,
    /// Certified K ∈ D flag, `None` when uncertified.
    pub k_in_d: Option<bool>,
    pub diagnostics: Vec<String>,
}

/// Exact gauge of a K ∉ D regime and the constant that comes with it.
enum Exact {
    Tau { gamma: f64 },
    Sigma,
    Xi { coef: f64, b: f64 },
}

/// Result of the pure decision logic, before any constant is evaluated.
struct Decision {
    outcome: Outcome,
    path: TheoremPath,
    k_in_d: Option<bool>,
    notes: Vec<String>,
    /// For absolutely continuous verdicts: exact gauge and C_φ = scale·C*.
    exact: Option<(Exact, f64)>,
}

fn k_in_d(class: &KTailClass) -> Option<bool> {
    match class {
        KTailClass::BoundedSupport | KTailClass::ExponentialType | KTailClass::NotDominated => Some(false),
        KTailClass::RegularlyVarying { .. } | KTailClass::DominatedOther => Some(true),
        KTailClass::Unknown => None,
    }
}

const EXCEPTIONAL_NOTE: &str =
    "μ(Δ) = 0 for the exceptional set Δ of rays with W_{i|n}/g(n) → 0; φ-H(Δ) itself is unresolved";

fn decide(meta: &LawMetadata, g: &GForm) -> Decision {
    let mut notes = Vec::new();
    let in_d = k_in_d(&meta.k_tail);
    let mk = |outcome, path, notes| Decision {
        outcome,
        path,
        k_in_d: in_d,
        notes,
        exact: None,
    };
    match in_d {
        None => {
            notes.push("K ∈ D is not certified for this law; numeric evidence alone does not decide".into());
            mk(Outcome::Undecided, TheoremPath::Unresolved, notes)
        }
        Some(false) => decide_non_dominated(meta, g, notes),
        Some(true) => decide_dominated(meta, g, notes),
    }
}

fn decide_non_dominated(meta: &LawMetadata, g: &GForm, mut notes: Vec<String>) -> Decision {
    let (exact_form, exact, path) = match meta.regime {
        Regime::BoundedSupport => {
            let gamma = meta.gamma.unwrap_or(f64::NAN);
            (
                GForm::LogLogPow {
                    exponent: (gamma - 1.0) / gamma,
                },
                Exact::Tau { gamma },
                TheoremPath::ExactGaugeBoundedSupport,
            )
        }
        Regime::ExponentialMoment if meta.s0_applicable => {
            (GForm::Log, Exact::Sigma, TheoremPath::ExactGaugeExponentialMoment)
        }
        _ => match g {
            GForm::RInverseLog {
                coef,
                b,
                tail_equivalence: true,
            } => (
                g.clone(),
                Exact::Xi { coef: *coef, b: *b },
                TheoremPath::ExactGaugeTailEquivalence,
            ),
            _ => {
                notes.push(
                    "K ∉ D, so φ-H(∂T) = C_φ·W for some C_φ ∈ [0, ∞], but no exact gauge is known for this regime".into(),
                );
                return Decision {
                    outcome: Outcome::Undecided,
                    path: TheoremPath::NonDominatedSeriesThreshold,
                    k_in_d: Some(false),
                    notes,
                    exact: None,
                };
            }
        },
    };
    let (Some(ord), Some(ord_star)) = (g.growth_order(), exact_form.growth_order()) else {
        notes.push("custom g cannot be compared with the exact gauge".into());
        return Decision {
            outcome: Outcome::Undecided,
            path: TheoremPath::Unresolved,
            k_in_d: Some(false),
            notes,
            exact: None,
        };
    };
    match cmp_order(ord, ord_star) {
        Ordering::Equal => {
            let scale = g.leading_coef() / exact_form.leading_coef();
            notes.push(format!("g is {scale} times the exact gauge"));
            Decision {
                outcome: Outcome::AbsolutelyContinuous { c_phi: None },
                path,
                k_in_d: Some(false),
                notes,
                exact: Some((exact, scale)),
            }
        }
        o => {
            notes.push(format!(
                "g has order {ord:?} against the exact order {ord_star:?}, so φ/φ* tends to {}",
                if o == Ordering::Greater { "∞" } else { "0" }
            ));
            Decision {
                outcome: if o == Ordering::Greater {
                    Outcome::Infinite
                } else {
                    Outcome::Zero
                },
                path: TheoremPath::NonDominatedGaugeComparison,
                k_in_d: Some(false),
                notes,
                exact: None,
            }
        }
    }
}

fn decide_dominated(meta: &LawMetadata, g: &GForm, mut notes: Vec<String>) -> Decision {
    let mk = |outcome, path, notes| Decision {
        outcome,
        path,
        k_in_d: Some(true),
        notes,
        exact: None,
    };
    let Some((p, q)) = g.growth_order() else {
        notes.push("custom g: Σ K(g(n)) and the double limsup are not decided analytically".into());
        return mk(Outcome::Undecided, TheoremPath::Unresolved, notes);
    };
    if p <= 0.0 {
        // g bounded or polylogarithmic: K(g(n)) decays slower than any power
        notes.push("Σ K(g(n)) = ∞ and Σ_{k≤n} K(δg(k)) grows polynomially against log g(n)".into());
        let _ = q;
        return mk(Outcome::Zero, TheoremPath::DominatedSeriesDivergesStrong, notes);
    }
    let KTailClass::RegularlyVarying { k_exponent: rho, pure_power } = meta.k_tail else {
        notes.push("K ∈ D is not regularly varying; Σ K(n^b) is not decided analytically".into());
        return mk(Outcome::Undecided, TheoremPath::Unresolved, notes);
    };
    let b0 = 1.0 / rho;
    notes.push(format!("K(x) = x^{{−{rho}}}ℓ(x); critical power b₀ = {b0}"));
    let prod = p * rho;
    if (prod - 1.0).abs() <= 1e-12 {
        notes.push(EXCEPTIONAL_NOTE.into());
        return match meta.moment_at_theta0_finite {
            Some(true) => {
                notes.push("E(N^θ₀) < ∞".into());
                mk(Outcome::Infinite, TheoremPath::PowerMomentBoundary, notes)
            }
            Some(false) => {
                notes.push(format!(
                    "E(N^θ₀) = ∞{}",
                    if pure_power { "; pure power K, Σ K(g(n)) diverges harmonically" } else { "" }
                ));
                mk(Outcome::ZeroOffExceptional, TheoremPath::PowerMomentBoundary, notes)
            }
            None => {
                notes.push("finiteness of E(N^θ₀) is not certified".into());
                mk(Outcome::Undecided, TheoremPath::PowerMomentBoundary, notes)
            }
        };
    }
    if prod > 1.0 {
        notes.push(format!("Σ K(n^{p}) converges (bρ = {prod} > 1)"));
        mk(Outcome::Infinite, TheoremPath::DominatedSeriesConverges, notes)
    } else {
        notes.push(format!(
            "Σ K(n^{p}) diverges (bρ = {prod} < 1); Σ_{{k≤n}} K(δk^b) ≍ δ^{{−ρ}}n^{{1−bρ}} against b·log n"
        ));
        mk(Outcome::Zero, TheoremPath::DominatedSeriesDivergesStrong, notes)
    }
}

/// Decision tree from analytic metadata alone. Constants are not evaluated.
pub fn classify_metadata(meta: &LawMetadata, phi: &GaugeFunction) -> Verdict {
    let d = decide(meta, &phi.g.form);
    Verdict {
        outcome: d.outcome,
        theorem_path: d.path,
        k_in_d: d.k_in_d,
        diagnostics: d.notes,
    }
}

/// Monte Carlo settings for the constants attached to a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub seed: u64,
    pub w_samples: usize,
    pub w_depth: Option<usize>,
    /// Estimate C_φ from sampled increments when no exact gauge applies.
    pub numeric_c_phi: bool,
    pub exec: Execution,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            seed: 0,
            w_samples: 20_000,
            w_depth: None,
            numeric_c_phi: false,
            exec: Execution::Parallel,
        }
    }
}

fn w_draws(law: &OffspringLaw, opts: &ClassifyOptions, depth: usize) -> Result<Vec<f64>> {
    let seed = derive_seed(opts.seed, "classify-w");
    let sampler = WSampler::with_depth(depth);
    map_replicas(opts.w_samples, opts.exec, |i| sampler.sample(law, &mut replica_rng(seed, i)))
        .into_iter()
        .collect()
}

fn power_estimate(e: &ConstantEstimate, pow: f64) -> ConstantEstimate {
    let mut out = e.clone();
    out.value = Extended::from_f64(e.value.value().max(0.0).powf(pow));
    out.bracket = e.bracket.map(|(lo, hi)| (lo.max(0.0).powf(pow), hi.max(0.0).powf(pow)));
    out
}

/// Full verdict for a law and gauge, evaluating C_φ where the verdict carries one.
pub fn classify(law: &OffspringLaw, phi: &GaugeFunction, opts: &ClassifyOptions) -> Result<Verdict> {
    let member = g_membership(&phi.g, law.mean());
    if !member.in_g {
        return Err(Error::InvalidGauge(format!(
            "limsup g(n+1)/g(n) = {} is not below a = {}",
            member.ratio_limsup,
            law.mean()
        )));
    }
    phi_membership(phi)?;
    let meta = law.metadata();
    let mut d = decide(meta, &phi.g.form);
    if let Some((exact, scale)) = d.exact.take() {
        let c_star = match exact {
            Exact::Sigma => sigma_inverse_iteration(law, 60)?,
            Exact::Tau { gamma } => {
                let depth = opts.w_depth.unwrap_or(20);
                let w = w_draws(law, opts, depth)?;
                let tau = tau_estimate(law, &w)?;
                d.notes.push(format!("τ ≈ {} (best effort)", tau.value.value()));
                power_estimate(&tau, (gamma - 1.0) / gamma)
            }
            Exact::Xi { coef, b } => {
                let depth = opts.w_depth.unwrap_or_else(|| WSampler::for_law(law).depth);
                let w = w_draws(law, opts, depth)?;
                xi_r_bracket(&|x: f64| coef * x.powf(b), b, true, &w)?
            }
        };
        d.outcome = Outcome::AbsolutelyContinuous {
            c_phi: Some(c_star.scaled(scale)),
        };
    } else if d.path == TheoremPath::NonDominatedSeriesThreshold && opts.numeric_c_phi {
        let sampler = SpineSampler::fresh(law);
        let seed = derive_seed(opts.seed, "classify-increments");
        let tails: Vec<TailFunction> = (1..=3u32)
            .map(|ell| {
                let xs = map_replicas(opts.w_samples, opts.exec, |i| {
                    sampler.y0(&mut replica_rng(seed ^ ell as u64, i), ell as usize)
                })
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
                Ok(TailFunction::empirical(xs))
            })
            .collect::<Result<_>>()?;
        let form = phi.g.form.clone();
        let grid: Vec<f64> = (1..=60).map(|i| i as f64 * 0.05).collect();
        match c_phi_series_threshold(
            Arc::new(move |n| form.eval(n)),
            &|ell| tails[ell as usize - 1].clone(),
            &grid,
            3,
            opts.w_samples as u64,
        ) {
            Ok(delta_star) => {
                let mut c = delta_star.reciprocal();
                c.confidence = Confidence::BestEffort;
                d.outcome = Outcome::AbsolutelyContinuous { c_phi: Some(c) };
                d.notes.push("C_φ estimated from sampled increments".into());
            }
            Err(e) => d.notes.push(format!("series threshold: {e}")),
        }
    }
    Ok(Verdict {
        outcome: d.outcome,
        theorem_path: d.path,
        k_in_d: d.k_in_d,
        diagnostics: d.notes,
    })
}

/// Increment tail of the k = 1 geometric family, for use as a series oracle.
pub fn geometric_family_increment_tail(a: f64, ell: u32) -> TailFunction {
    TailFunction::composed(move |x| geometric_increment_tail(a, ell, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgf::{analytic_metadata, Certificate, CustomLaw};

    fn gauge(law: &OffspringLaw, form: GForm) -> GaugeFunction {
        GaugeFunction::for_law(law, form).unwrap()
    }

    #[test]
    fn g_membership_cases() {
        let g = GFunction::new(GForm::Log).unwrap();
        let m = g_membership(&g, 1.5);
        assert!(m.in_g && m.ratio_limsup == 1.0);
        assert!(g_membership(&GFunction::new(GForm::PowerB { b: 2.0 }).unwrap(), 2.0).in_g);
        let a = 2.0f64;
        let custom = GFunction::new(GForm::custom("a^x(x+1)", move |x| a.powf(x) * (x + 1.0))).unwrap();
        let m = g_membership(&custom, a);
        assert!(!m.in_g && m.advisory);
        assert!((m.ratio_limsup - a).abs() < 1e-2);
    }

    #[test]
    fn phi_membership_cases() {
        let law = OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap();
        let gamma = law.metadata().gamma.unwrap();
        for form in [
            GForm::LogLogPow { exponent: (gamma - 1.0) / gamma },
            GForm::Log,
            GForm::PowerB { b: -0.5 },
            GForm::PowerB { b: 3.0 },
        ] {
            let m = phi_membership(&gauge(&law, form.clone())).unwrap();
            assert!(m.in_phi && m.delta1 > 0.0 && m.delta1 < 1.0, "{form:?}");
        }
        let a = law.mean();
        let bad = GaugeFunction::new(
            a.ln(),
            GFunction::new(GForm::custom("a^x", move |x| a.powf(x) * (x + 1.0))).unwrap(),
        );
        assert!(matches!(phi_membership(&bad), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn g_delta_condition_cases() {
        let power = TailFunction::power(1.0, 2.0);
        let r = g_delta_condition(&GFunction::new(GForm::PowerB { b: 0.4 }).unwrap(), &power, &[1.0], 1 << 14);
        assert!(r.holds && r.certified);
        let exp = TailFunction::exponential(1.0, 1.0);
        let r = g_delta_condition(&GFunction::new(GForm::Log).unwrap(), &exp, &[0.5, 2.0], 1 << 14);
        assert!(r.holds && r.certified);
        let r = g_delta_condition(&GFunction::new(GForm::PowerB { b: 10.0 }).unwrap(), &power, &[1.0], 1 << 14);
        assert!(!r.holds && !r.certified);
    }

    #[test]
    fn power_tail_dichotomy_around_b0() {
        let law = OffspringLaw::power_tail(3.0, vec![]).unwrap();
        let meta = law.metadata();
        let v = |b: f64| classify_metadata(meta, &gauge(&law, GForm::PowerB { b })).outcome.label();
        assert_eq!(v(0.4), "zero");
        assert_eq!(v(0.6), "infinite");
        assert_eq!(v(0.5), "zero_off_exceptional");
        assert_eq!(classify_metadata(meta, &gauge(&law, GForm::Log)).outcome.label(), "zero");
    }

    #[test]
    fn bounded_support_exact_gauge() {
        let law = OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap();
        let gamma = law.metadata().gamma.unwrap();
        let phi0 = gauge(&law, GForm::LogLogPow { exponent: (gamma - 1.0) / gamma });
        let v = classify_metadata(law.metadata(), &phi0);
        assert_eq!(v.theorem_path, TheoremPath::ExactGaugeBoundedSupport);
        assert_eq!(v.k_in_d, Some(false));
        assert!(matches!(v.outcome, Outcome::AbsolutelyContinuous { .. }));
        let opts = ClassifyOptions {
            w_samples: 4000,
            ..Default::default()
        };
        let v = classify(&law, &phi0, &opts).unwrap();
        let Outcome::AbsolutelyContinuous { c_phi: Some(c) } = v.outcome else {
            panic!("{v:?}")
        };
        assert_eq!(c.confidence, Confidence::BestEffort);
        assert!(c.value.value() > 0.0);
        assert_eq!(classify_metadata(law.metadata(), &gauge(&law, GForm::Const { c: 1.0 })).outcome.label(), "zero");
        assert_eq!(classify_metadata(law.metadata(), &gauge(&law, GForm::PowerB { b: 0.1 })).outcome.label(), "infinite");
    }

    #[test]
    fn exponential_moment_exact_gauge() {
        let law = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        let v = classify(&law, &gauge(&law, GForm::Log), &ClassifyOptions::default()).unwrap();
        assert_eq!(v.theorem_path, TheoremPath::ExactGaugeExponentialMoment);
        let Outcome::AbsolutelyContinuous { c_phi: Some(c) } = v.outcome else {
            panic!("{v:?}")
        };
        assert!((c.value.value() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn uncertified_tail_is_undecided() {
        let cert = Certificate {
            mean: 2.0,
            max_support: None,
            radius_s0: Extended::Finite(1.0),
            moment_theta0: Extended::Infinite,
            moment_at_theta0_finite: None,
            n_log_n_finite: true,
            k_tail: KTailClass::Unknown,
        };
        let law = OffspringLaw::custom(CustomLaw {
            name: "two-point".into(),
            pmf: Arc::new(|n| if n == 1 || n == 3 { 0.5 } else { 0.0 }),
            pgf: None,
            pgf_shifted: None,
            certificate: cert,
        });
        if let Ok(law) = law {
            let v = classify_metadata(&analytic_metadata(&law), &gauge(&law, GForm::Log));
            assert_eq!(v.outcome.label(), "undecided");
        }
    }

    #[test]
    fn verdict_serializes() {
        let law = OffspringLaw::power_tail(2.0, vec![]).unwrap();
        let v = classify_metadata(law.metadata(), &gauge(&law, GForm::PowerB { b: 2.0 }));
        let j = serde_json::to_value(&v).unwrap();
        assert_eq!(j["outcome"], "infinite");
        assert_eq!(j["theorem_path"], "dominated_series_converges");
    }
}
