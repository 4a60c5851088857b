//! Offspring laws, generating functions, their iterates and inverses.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::{bisect, hurwitz_zeta, ln_choose, Quadrature};

/// Probability mass below which a materialized table is cut.
pub const TABLE_CUTOFF: f64 = 1e-12;
const MAX_TABLE_LEN: usize = 10_000_000;
const BISECT_BUDGET: usize = 200;
const CHAIN_INDIVIDUAL: u64 = 32;
const CHAIN_MAX_STEPS: u64 = 4096;
const POWER_HEAD: usize = 256;
/// Guard for aggregated population counts.
pub const POPULATION_LIMIT: u64 = 1 << 62;

/// A real number or +∞. Serializes ∞ as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }
    pub fn value(&self) -> f64 {
        match self {
            Extended::Finite(v) => *v,
            Extended::Infinite => f64::INFINITY,
        }
    }
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Extended::Finite(v)
        } else {
            Extended::Infinite
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Extended::Finite(v)),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "Infinity" | "infinity") => {
                Ok(Extended::Infinite)
            }
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Asymptotic class of the integrated tail K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum KTailClass {
    BoundedSupport,
    ExponentialType,
    /// K(x) = x^{-k_exponent}·ℓ(x); `pure_power` when ℓ tends to a positive constant.
    RegularlyVarying { k_exponent: f64, pure_power: bool },
    /// Known to be outside the dominated-variation class for another reason.
    NotDominated,
    /// Known to be dominated-varying but not regularly varying.
    DominatedOther,
    Unknown,
}

/// Certified facts about a law supplied through a pmf accessor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub mean: f64,
    pub max_support: Option<u64>,
    pub radius_s0: Extended,
    pub moment_theta0: Extended,
    /// Whether E(N^θ₀) is finite; `None` if unknown or θ₀ = ∞.
    pub moment_at_theta0_finite: Option<bool>,
    pub n_log_n_finite: bool,
    pub k_tail: KTailClass,
}

pub type PmfFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A law given by a pmf accessor plus certified metadata.
#[derive(Clone)]
pub struct CustomLaw {
    pub name: String,
    pub pmf: PmfFn,
    /// Closed form of f(s), valid on [0, S₀).
    pub pgf: Option<RealFn>,
    /// Closed form of f(1+u) − 1, valid on [−1, S₀−1).
    pub pgf_shifted: Option<RealFn>,
    pub certificate: Certificate,
}

impl fmt::Debug for CustomLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLaw")
            .field("name", &self.name)
            .field("closed_pgf", &self.pgf.is_some())
            .field("certificate", &self.certificate)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum LawKind {
    ExplicitFinite { pmf: Vec<f64> },
    /// f(s) = s/(a − (a−1)s^k)^{1/k}.
    GeometricShifted { a: f64, k: u32 },
    /// Head p_0..p_{H−1}, then p_n ∝ n^{−θ−1}.
    PowerTail { theta: f64, head: Vec<f64> },
    Custom(CustomLaw),
}

/// JSON form of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LawSpec {
    Explicit {
        pmf: Vec<f64>,
    },
    Geomshift {
        a: f64,
        k: u32,
    },
    Powertail {
        theta: f64,
        #[serde(default)]
        head: Vec<f64>,
    },
    /// N = offset + G with P(G = j) = p(1−p)^j.
    Offsetgeom {
        offset: u32,
        p: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BoundedSupport,
    ExponentialMoment,
    PowerMoment,
    Unclassified,
}

/// Analytic constants of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawMetadata {
    pub mean: f64,
    pub extinction: f64,
    pub radius_s0: Extended,
    /// False when S₀ = 1, i.e. no exponential moment exists.
    pub s0_applicable: bool,
    pub moment_theta0: Extended,
    pub moment_at_theta0_finite: Option<bool>,
    pub max_support: Option<u64>,
    pub gamma: Option<f64>,
    pub regime: Regime,
    pub k_tail: KTailClass,
}

#[derive(Debug, Clone)]
enum TailPart {
    None,
    /// p_n = weight·ratio^n
    Geometric { weight: f64, ratio: f64 },
    /// p_n = weight·n^{−exponent}
    Power { weight: f64, exponent: f64 },
}

/// Pmf as an explicit head p_0..p_{L−1} and an analytic tail for n ≥ L.
#[derive(Debug, Clone)]
pub(crate) struct Table {
    head: Vec<f64>,
    /// suffix[n] = P(N ≥ n) for n ≤ L.
    suffix: Vec<f64>,
    tail: TailPart,
}

impl Table {
    fn new(mut head: Vec<f64>, tail: TailPart) -> Self {
        if let TailPart::Power { weight, exponent } = tail {
            // explicit entries keep survival lookups off the zeta function
            for n in head.len()..POWER_HEAD {
                head.push(weight * (n as f64).powf(-exponent));
            }
        }
        let l = head.len();
        let mut suffix = vec![0.0; l + 1];
        suffix[l] = tail_mass_from(&tail, l as u64);
        for n in (0..l).rev() {
            suffix[n] = suffix[n + 1] + head[n];
        }
        Table { head, suffix, tail }
    }

    fn len(&self) -> u64 {
        self.head.len() as u64
    }

    pub(crate) fn p(&self, n: u64) -> f64 {
        if n < self.len() {
            self.head[n as usize]
        } else {
            match self.tail {
                TailPart::None => 0.0,
                TailPart::Geometric { weight, ratio } => weight * ratio.powf(n as f64),
                TailPart::Power { weight, exponent } => weight * (n as f64).powf(-exponent),
            }
        }
    }

    /// P(N ≥ n).
    pub(crate) fn surv(&self, n: u64) -> f64 {
        if n <= self.len() {
            self.suffix[n as usize]
        } else {
            tail_mass_from(&self.tail, n)
        }
    }

    /// E((N − c)^+).
    pub(crate) fn excess(&self, c: u64) -> f64 {
        let mut s = 0.0;
        for n in (c + 1)..self.len() {
            s += (n - c) as f64 * self.head[n as usize];
        }
        let n0 = (c + 1).max(self.len());
        let cf = c as f64;
        let n0f = n0 as f64;
        s + match self.tail {
            TailPart::None => 0.0,
            TailPart::Geometric { weight, ratio } => {
                let om = 1.0 - ratio;
                weight * ratio.powf(n0f) * ((n0f - cf) / om + ratio / (om * om))
            }
            TailPart::Power { weight, exponent } => {
                weight * (hurwitz_zeta(exponent - 1.0, n0f) - cf * hurwitz_zeta(exponent, n0f))
            }
        }
    }

    fn mean(&self) -> f64 {
        self.excess(0)
    }

    /// E(N²), infinite for power tails with exponent ≤ 3.
    fn second_moment(&self) -> f64 {
        let l = self.len();
        let mut s: f64 = (0..l).map(|n| (n * n) as f64 * self.head[n as usize]).sum();
        match self.tail {
            TailPart::None => {}
            TailPart::Geometric { weight, ratio } => {
                let mut n = l as f64;
                loop {
                    let t = weight * n * n * ratio.powf(n);
                    s += t;
                    if t < 1e-18 * s && n > l as f64 + 1.0 / (1.0 - ratio) {
                        break;
                    }
                    n += 1.0;
                }
            }
            TailPart::Power { weight, exponent } => {
                if exponent <= 3.0 {
                    return f64::INFINITY;
                }
                s += weight * hurwitz_zeta(exponent - 2.0, l as f64);
            }
        }
        s
    }

    fn max_support(&self) -> Option<u64> {
        match self.tail {
            TailPart::None => self.head.iter().rposition(|&p| p > 0.0).map(|i| i as u64),
            _ => None,
        }
    }

    /// Draws N conditioned on N ≥ m.
    pub(crate) fn sample_at_least<R: Rng + ?Sized>(&self, rng: &mut R, m: u64) -> u64 {
        let l = self.len();
        if m >= l {
            return self.sample_tail(rng, m);
        }
        let total = self.suffix[m as usize];
        let v = (1.0 - rng.random::<f64>()) * total;
        if v <= self.suffix[l as usize] && !matches!(self.tail, TailPart::None) {
            return self.sample_tail(rng, l);
        }
        // largest n in [m, l) with suffix[n] >= v
        let (mut lo, mut hi) = (m as usize, l as usize);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.suffix[mid] >= v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo as u64
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample_at_least(rng, 0)
    }

    fn sample_tail<R: Rng + ?Sized>(&self, rng: &mut R, start: u64) -> u64 {
        match self.tail {
            TailPart::None => start.min(self.len().saturating_sub(1)),
            TailPart::Geometric { ratio, .. } => {
                let u = 1.0 - rng.random::<f64>();
                let j = (u.ln() / ratio.ln()).floor();
                start.saturating_add(j.min(POPULATION_LIMIT as f64) as u64)
            }
            TailPart::Power { exponent, .. } => {
                let shape = exponent - 1.0;
                let s = start.max(1) as f64;
                let ratio = |n: f64| 1.0 / (n * -(-shape * (1.0 / n).ln_1p()).exp_m1());
                let r0 = ratio(s);
                loop {
                    let u = 1.0 - rng.random::<f64>();
                    let y = (s * u.powf(-1.0 / shape)).min(POPULATION_LIMIT as f64);
                    let n = y.floor();
                    if rng.random::<f64>() * r0 <= ratio(n) {
                        return n as u64;
                    }
                }
            }
        }
    }

    /// Sum of z independent draws, by a chain of conditional binomials.
    fn sum_of_draws<R: Rng + ?Sized>(&self, rng: &mut R, z: u64) -> Result<u64> {
        let mut total: u64 = 0;
        let mut remaining = z;
        let mut n: u64 = 0;
        let mut steps = 0;
        while remaining > 0 {
            if remaining <= CHAIN_INDIVIDUAL || steps >= CHAIN_MAX_STEPS {
                for _ in 0..remaining {
                    total = total.saturating_add(self.sample_at_least(rng, n));
                }
                break;
            }
            let s = self.surv(n);
            let p = self.p(n);
            if p > 0.0 {
                let pc = (p / s).clamp(0.0, 1.0);
                let x = if pc >= 1.0 {
                    remaining
                } else {
                    Binomial::new(remaining, pc)
                        .map_err(|e| Error::domain("binomial", pc, e.to_string()))?
                        .sample(rng)
                };
                total = total.saturating_add(x.saturating_mul(n));
                remaining -= x;
            }
            n += 1;
            steps += 1;
            if n >= self.len() && matches!(self.tail, TailPart::None) && remaining > 0 {
                // numerical leftovers past the last support point
                let last = self.max_support().unwrap_or(0);
                total = total.saturating_add(remaining.saturating_mul(last));
                break;
            }
        }
        if total >= POPULATION_LIMIT {
            return Err(Error::PopulationOverflow { generation: 0 });
        }
        Ok(total)
    }

    /// Σ p_n s^n for s ∈ [0, 1] (any s ≥ 0 when there is no tail).
    fn pgf(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for &p in self.head.iter().rev() {
            acc = acc * s + p;
        }
        acc + self.tail_pgf(s, false)
    }

    /// Σ p_n ((1+u)^n − 1) for u ∈ [−1, 0] (any u when there is no tail).
    fn pgf_shifted(&self, u: f64) -> f64 {
        let lu = u.ln_1p();
        let mut acc = 0.0;
        for (n, &p) in self.head.iter().enumerate().skip(1) {
            if p > 0.0 {
                acc += p * (n as f64 * lu).exp_m1();
            }
        }
        acc + self.tail_pgf(1.0 + u, true)
    }

    fn tail_pgf(&self, s: f64, shifted: bool) -> f64 {
        let l = self.len();
        match self.tail {
            TailPart::None => 0.0,
            TailPart::Geometric { weight, ratio } => {
                let rs = ratio * s;
                let plain = weight * rs.powf(l as f64) / (1.0 - rs);
                if shifted {
                    plain - tail_mass_from(&self.tail, l)
                } else {
                    plain
                }
            }
            TailPart::Power { weight, exponent } => {
                power_tail_pgf(weight, exponent, l.max(1), s, shifted)
            }
        }
    }
}

fn tail_mass_from(tail: &TailPart, n: u64) -> f64 {
    match *tail {
        TailPart::None => 0.0,
        TailPart::Geometric { weight, ratio } => weight * ratio.powf(n as f64) / (1.0 - ratio),
        TailPart::Power { weight, exponent } => weight * hurwitz_zeta(exponent, n.max(1) as f64),
    }
}

/// Σ_{n≥start} w n^{−e} φ(n) with φ(n) = s^n, or s^n − 1 when `shifted`.
fn power_tail_pgf(weight: f64, exponent: f64, start: u64, s: f64, shifted: bool) -> f64 {
    if s >= 1.0 {
        return if shifted {
            0.0
        } else {
            weight * hurwitz_zeta(exponent, start as f64)
        };
    }
    let lambda = -s.ln();
    if !lambda.is_finite() {
        return if shifted {
            -weight * hurwitz_zeta(exponent, start as f64)
        } else {
            0.0
        };
    }
    let phi = |x: f64| {
        if shifted {
            (-lambda * x).exp_m1()
        } else {
            (-lambda * x).exp()
        }
    };
    let span = ((40.0 / lambda).ceil() as u64).clamp(64, 200_000);
    let end = start + span;
    let mut acc = 0.0;
    for n in start..end {
        let nf = n as f64;
        acc += nf.powf(-exponent) * phi(nf);
    }
    // remainder Σ_{n≥end} ≈ ∫_{end−½}^∞ x^{−e} φ(x) dx, with x = X/t
    let x0 = end as f64 - 0.5;
    if lambda * x0 > 60.0 && !shifted {
        return weight * acc;
    }
    let q = Quadrature::new(16);
    let f = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(exponent - 2.0) * phi(x0 / t)
    };
    let mut rem = 0.0;
    let mut hi = 1.0f64;
    for _ in 0..60 {
        let lo = hi * 0.5;
        rem += q.integrate(&f, lo, hi, 1);
        hi = lo;
    }
    rem *= x0.powf(1.0 - exponent);
    weight * (acc + rem)
}

/// Offspring distribution with its analytic metadata.
#[derive(Debug, Clone)]
pub struct OffspringLaw {
    kind: LawKind,
    table: Table,
    meta: LawMetadata,
    variance: f64,
}

impl OffspringLaw {
    pub fn explicit(pmf: Vec<f64>) -> Result<Self> {
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidLaw("pmf entries must be finite and nonnegative".into()));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw(format!("pmf sums to {sum}, not 1")));
        }
        let mut pmf = pmf;
        while pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        if pmf.iter().filter(|&&p| p > 0.0).count() < 2 {
            return Err(Error::InvalidLaw("support is a single point".into()));
        }
        let table = Table::new(pmf.clone(), TailPart::None);
        let mean = table.mean();
        if mean <= 1.0 {
            return Err(Error::InvalidLaw(format!("mean {mean} must exceed 1")));
        }
        let m = (pmf.len() - 1) as u64;
        let meta = LawMetadata {
            mean,
            extinction: 0.0,
            radius_s0: Extended::Infinite,
            s0_applicable: true,
            moment_theta0: Extended::Infinite,
            moment_at_theta0_finite: None,
            max_support: Some(m),
            gamma: Some((m as f64).ln() / mean.ln()),
            regime: Regime::BoundedSupport,
            k_tail: KTailClass::BoundedSupport,
        };
        Self::finish(LawKind::ExplicitFinite { pmf }, table, meta)
    }

    pub fn geometric_shifted(a: f64, k: u32) -> Result<Self> {
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::InvalidLaw(format!("a = {a} must be finite and > 1")));
        }
        if k == 0 {
            return Err(Error::InvalidLaw("k must be a positive integer".into()));
        }
        let c = (a - 1.0) / a;
        let table = if k == 1 {
            Table::new(
                vec![0.0],
                TailPart::Geometric {
                    weight: 1.0 / (a - 1.0),
                    ratio: c,
                },
            )
        } else {
            // p_{1+kj} = a^{-1/k} c_j, c_{j+1} = c_j (j + 1/k)/(j+1) · (a−1)/a
            let kf = k as f64;
            let lead = a.powf(-1.0 / kf);
            let mut head = vec![0.0, lead];
            let mut cj = 1.0;
            let mut mass = lead;
            let mut j = 0.0;
            while 1.0 - mass > 1e-15 && head.len() < MAX_TABLE_LEN {
                cj *= (j + 1.0 / kf) / (j + 1.0) * c;
                j += 1.0;
                head.extend(std::iter::repeat_n(0.0, k as usize - 1));
                head.push(lead * cj);
                mass += lead * cj;
            }
            for p in head.iter_mut() {
                *p /= mass;
            }
            Table::new(head, TailPart::None)
        };
        let s0 = (a / (a - 1.0)).powf(1.0 / k as f64);
        let meta = LawMetadata {
            mean: a,
            extinction: 0.0,
            radius_s0: Extended::Finite(s0),
            s0_applicable: true,
            moment_theta0: Extended::Infinite,
            moment_at_theta0_finite: None,
            max_support: None,
            gamma: None,
            regime: Regime::ExponentialMoment,
            k_tail: KTailClass::ExponentialType,
        };
        Self::finish(LawKind::GeometricShifted { a, k }, table, meta)
    }

    pub fn power_tail(theta: f64, head: Vec<f64>) -> Result<Self> {
        if !(theta.is_finite() && theta > 1.0) {
            return Err(Error::InvalidLaw(format!("theta = {theta} must exceed 1")));
        }
        if head.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidLaw("head entries must be finite and nonnegative".into()));
        }
        let mut padded = head.clone();
        if padded.is_empty() {
            padded.push(0.0);
        }
        let head_mass: f64 = padded.iter().sum();
        if head_mass >= 1.0 {
            return Err(Error::InvalidLaw("head carries all the mass".into()));
        }
        let start = padded.len() as f64;
        let exponent = theta + 1.0;
        let weight = (1.0 - head_mass) / hurwitz_zeta(exponent, start);
        let table = Table::new(padded, TailPart::Power { weight, exponent });
        let mean = table.mean();
        if mean <= 1.0 {
            return Err(Error::InvalidLaw(format!("mean {mean} must exceed 1")));
        }
        let meta = LawMetadata {
            mean,
            extinction: 0.0,
            radius_s0: Extended::Finite(1.0),
            s0_applicable: false,
            moment_theta0: Extended::Finite(theta),
            moment_at_theta0_finite: Some(false),
            max_support: None,
            gamma: None,
            regime: Regime::PowerMoment,
            k_tail: KTailClass::RegularlyVarying {
                k_exponent: theta - 1.0,
                pure_power: true,
            },
        };
        Self::finish(LawKind::PowerTail { theta, head }, table, meta)
    }

    pub fn custom(law: CustomLaw) -> Result<Self> {
        let cert = law.certificate.clone();
        if !cert.n_log_n_finite {
            return Err(Error::InvalidLaw("E(N log N) < ∞ must be certified".into()));
        }
        if !(cert.mean.is_finite() && cert.mean > 1.0) {
            return Err(Error::InvalidLaw(format!("certified mean {} must exceed 1", cert.mean)));
        }
        let mut head = Vec::new();
        let mut mass = 0.0;
        let limit = cert
            .max_support
            .map(|m| m as usize + 1)
            .unwrap_or(MAX_TABLE_LEN);
        while head.len() < limit {
            let p = (law.pmf)(head.len() as u64);
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidLaw(format!("pmf({}) = {p}", head.len())));
            }
            head.push(p);
            mass += p;
            if cert.max_support.is_none() && 1.0 - mass < TABLE_CUTOFF {
                break;
            }
        }
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLaw(format!("pmf mass {mass} does not reach 1")));
        }
        for p in head.iter_mut() {
            *p /= mass;
        }
        while head.last() == Some(&0.0) {
            head.pop();
        }
        if head.iter().filter(|&&p| p > 0.0).count() < 2 {
            return Err(Error::InvalidLaw("support is a single point".into()));
        }
        let table = Table::new(head, TailPart::None);
        let (regime, s0_applicable) = if cert.max_support.is_some() {
            (Regime::BoundedSupport, true)
        } else if matches!(cert.radius_s0, Extended::Finite(s) if s > 1.0) {
            (Regime::ExponentialMoment, true)
        } else if cert.moment_theta0.is_finite() {
            (Regime::PowerMoment, false)
        } else {
            (Regime::Unclassified, !matches!(cert.radius_s0, Extended::Finite(s) if s <= 1.0))
        };
        let gamma = cert
            .max_support
            .map(|m| (m as f64).ln() / cert.mean.ln());
        let meta = LawMetadata {
            mean: cert.mean,
            extinction: 0.0,
            radius_s0: cert.radius_s0,
            s0_applicable,
            moment_theta0: cert.moment_theta0,
            moment_at_theta0_finite: cert.moment_at_theta0_finite,
            max_support: cert.max_support,
            gamma,
            regime,
            k_tail: cert.k_tail,
        };
        Self::finish(LawKind::Custom(law), table, meta)
    }

    /// N = offset + G, G geometric on {0,1,…} with success p; f(s) = s^m p/(1 − (1−p)s).
    pub fn offset_geometric(offset: u32, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidLaw(format!("p = {p} must lie in (0,1)")));
        }
        let m = offset as f64;
        let r = 1.0 - p;
        let mean = m + r / p;
        let pmf: PmfFn = Arc::new(move |n: u64| {
            if n < offset as u64 {
                0.0
            } else {
                p * r.powf((n - offset as u64) as f64)
            }
        });
        let pgf: RealFn = Arc::new(move |s: f64| s.powf(m) * p / (1.0 - r * s));
        let pgf_shifted: RealFn =
            Arc::new(move |u: f64| (m * u.ln_1p() - (-(r / p) * u).ln_1p()).exp_m1());
        Self::custom(CustomLaw {
            name: format!("offsetgeom(offset={offset}, p={p})"),
            pmf,
            pgf: Some(pgf),
            pgf_shifted: Some(pgf_shifted),
            certificate: Certificate {
                mean,
                max_support: None,
                radius_s0: Extended::Finite(1.0 / r),
                moment_theta0: Extended::Infinite,
                moment_at_theta0_finite: None,
                n_log_n_finite: true,
                k_tail: KTailClass::ExponentialType,
            },
        })
    }

    pub fn from_spec(spec: &LawSpec) -> Result<Self> {
        match spec {
            LawSpec::Explicit { pmf } => Self::explicit(pmf.clone()),
            LawSpec::Geomshift { a, k } => Self::geometric_shifted(*a, *k),
            LawSpec::Powertail { theta, head } => Self::power_tail(*theta, head.clone()),
            LawSpec::Offsetgeom { offset, p } => Self::offset_geometric(*offset, *p),
        }
    }

    fn finish(kind: LawKind, table: Table, mut meta: LawMetadata) -> Result<Self> {
        let variance = table.second_moment() - meta.mean * meta.mean;
        let mut law = OffspringLaw {
            kind,
            table,
            meta: meta.clone(),
            variance,
        };
        meta.extinction = law.compute_extinction(1e-14)?;
        law.meta = meta;
        Ok(law)
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn metadata(&self) -> &LawMetadata {
        &self.meta
    }

    pub fn mean(&self) -> f64 {
        self.meta.mean
    }

    pub fn p(&self, n: u64) -> f64 {
        self.table.p(n)
    }

    /// Var(N), infinite when E(N²) is.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// P(N ≥ n).
    pub fn survival_ge(&self, n: u64) -> f64 {
        self.table.surv(n)
    }

    /// E((N − c)^+).
    pub fn expected_excess(&self, c: u64) -> f64 {
        self.table.excess(c)
    }

    /// Exact law of Z_n for a finite-support law, as a pmf on 0..=M^n.
    /// Fails when M^n + 1 would exceed `max_len`.
    pub fn generation_pmf(&self, depth: usize, max_len: usize) -> Result<Vec<f64>> {
        let m = self
            .meta
            .max_support
            .ok_or_else(|| Error::Regime("exact generation law needs finite support".into()))?;
        let top = (m as f64).powi(depth as i32);
        if top + 1.0 > max_len as f64 {
            return Err(Error::Config(format!("support of Z_{depth} has {top} + 1 points, above {max_len}")));
        }
        let mut pmf = vec![0.0, 1.0];
        for _ in 0..depth {
            // f(f_n) by Horner in the offspring coefficients
            let mut acc = vec![self.p(m)];
            for k in (0..m).rev() {
                let mut next = vec![0.0; acc.len() + pmf.len() - 1];
                for (i, &x) in acc.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    for (j, &y) in pmf.iter().enumerate() {
                        next[i + j] += x * y;
                    }
                }
                next[0] += self.p(k);
                acc = next;
            }
            acc.truncate(acc.iter().rposition(|&x| x > 0.0).map_or(1, |i| i + 1));
            pmf = acc;
        }
        Ok(pmf)
    }

    fn s0(&self) -> f64 {
        self.meta.radius_s0.value()
    }

    /// f(s) on [0, S₀).
    pub fn pgf(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::domain("s", s, "must be nonnegative"));
        }
        if s > 1.0 && s >= self.s0() {
            return Err(Error::domain("s", s, format!("must be below S0 = {}", self.s0())));
        }
        Ok(match &self.kind {
            LawKind::GeometricShifted { a, k } => {
                let kf = *k as f64;
                s / (a - (a - 1.0) * s.powi(*k as i32)).powf(1.0 / kf)
            }
            LawKind::Custom(c) if c.pgf.is_some() => (c.pgf.as_ref().expect("checked"))(s),
            LawKind::Custom(_) if s > 1.0 && self.meta.max_support.is_none() => {
                return Err(Error::domain("s", s, "no closed form above 1 for this law"))
            }
            _ => self.table.pgf(s),
        })
    }

    /// g(u) = f(1+u) − 1, evaluated without cancellation near u = 0.
    pub fn pgf_shifted(&self, u: f64) -> Result<f64> {
        if !(u >= -1.0) {
            return Err(Error::domain("u", u, "must be at least -1"));
        }
        if u > 0.0 && 1.0 + u >= self.s0() {
            return Err(Error::domain("u", u, format!("1+u must be below S0 = {}", self.s0())));
        }
        Ok(match &self.kind {
            LawKind::GeometricShifted { a, k } => {
                let kf = *k as f64;
                let lu = u.ln_1p();
                // 1 + u over (1 − (a−1)((1+u)^k − 1))^{1/k}
                (lu - (-(a - 1.0) * (kf * lu).exp_m1()).ln_1p() / kf).exp_m1()
            }
            LawKind::Custom(c) if c.pgf_shifted.is_some() => {
                (c.pgf_shifted.as_ref().expect("checked"))(u)
            }
            LawKind::Custom(c) if c.pgf.is_some() => (c.pgf.as_ref().expect("checked"))(1.0 + u) - 1.0,
            LawKind::Custom(_) if u > 0.0 && self.meta.max_support.is_none() => {
                return Err(Error::domain("u", u, "no closed form above 1 for this law"))
            }
            _ => self.table.pgf_shifted(u),
        })
    }

    /// f_n(s), failing with `Overflow` if an iterate leaves [0, S₀).
    pub fn iterate(&self, n: usize, s: f64) -> Result<f64> {
        let mut x = s;
        for step in 0..n {
            if x > 1.0 && x >= self.s0() {
                return Err(Error::Overflow { step });
            }
            x = self.pgf(x).map_err(|e| match e {
                Error::Domain { .. } if step > 0 => Error::Overflow { step },
                other => other,
            })?;
            if !x.is_finite() || x < 0.0 {
                return Err(Error::Overflow { step });
            }
        }
        Ok(x)
    }

    /// x with |f_n(x) − t| ≤ tol on the increasing branch above q.
    pub fn inverse_iterate(&self, n: usize, t: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::domain("tol", tol, "must be positive"));
        }
        let q = self.meta.extinction;
        if !(t >= q - tol) {
            return Err(Error::Range(t));
        }
        if (t - q).abs() <= tol {
            return Ok(q);
        }
        let eval = |x: f64| -> f64 {
            match self.iterate(n, x) {
                Ok(v) => v - t,
                Err(_) => f64::INFINITY,
            }
        };
        let (mut lo, mut hi) = (q, 1.0);
        if t > 1.0 {
            lo = 1.0;
            hi = if self.s0().is_finite() {
                self.s0()
            } else {
                let mut h = 2.0;
                while eval(h) <= 0.0 {
                    h *= 2.0;
                    if h > 1e300 {
                        return Err(Error::Range(t));
                    }
                }
                h
            };
        }
        let mut best = 0.5 * (lo + hi);
        for _ in 0..BISECT_BUDGET {
            let mid = 0.5 * (lo + hi);
            best = mid;
            let v = eval(mid);
            if v.abs() <= 0.5 * tol || mid <= lo || mid >= hi {
                break;
            }
            if v > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let resid = eval(best);
        if resid.abs() <= tol {
            Ok(best)
        } else if resid < 0.0 || !resid.is_finite() {
            Err(Error::Range(t))
        } else {
            Err(Error::NonConvergence {
                iterations: BISECT_BUDGET,
                detail: format!("residual {resid} at x = {best}"),
            })
        }
    }

    /// u_j = g^{-1}(u_{j−1}) for j = 1..=n with g(u) = f(1+u) − 1 and u_0 given,
    /// each step solved to full relative precision.
    pub fn inverse_iterate_shifted(&self, n: usize, u0: f64) -> Result<Vec<f64>> {
        let a = self.meta.mean;
        let mut out = Vec::with_capacity(n);
        let mut v = u0;
        for _ in 0..n {
            if !(v > 0.0) || v < 1e-300 {
                break;
            }
            let mut hi = (v / a).min(v);
            let mut lo = 0.5 * hi;
            while self.pgf_shifted(lo)? > v {
                lo *= 0.5;
            }
            while self.pgf_shifted(hi)? < v {
                hi = 0.5 * (hi + v);
            }
            for _ in 0..BISECT_BUDGET {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi || hi - lo <= 1e-17 * hi {
                    break;
                }
                if self.pgf_shifted(mid)? > v {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            v = 0.5 * (lo + hi);
            out.push(v);
        }
        Ok(out)
    }

    fn compute_extinction(&self, tol: f64) -> Result<f64> {
        if self.table.p(0) == 0.0 {
            return Ok(0.0);
        }
        // h(s) = f(s) − s, positive on [0, q), negative on (q, 1)
        let h = |u: f64| self.pgf_shifted(u).map(|g| g - u).unwrap_or(f64::NAN);
        let mut eps = 0.5;
        while !(h(-eps) < 0.0) {
            eps *= 0.5;
            if eps < 1e-15 {
                return Err(Error::NonConvergence {
                    iterations: 50,
                    detail: "f(s) − s never turns negative below 1".into(),
                });
            }
        }
        let width = (tol * 1e-3).max(1e-16);
        let u = bisect(|u| -h(u), -1.0, -eps, width, BISECT_BUDGET)?;
        Ok(1.0 + u)
    }

    /// Smallest fixed point of f, to tolerance `tol`.
    pub fn extinction(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::domain("tol", tol, "must be positive"));
        }
        if tol >= 1e-14 {
            Ok(self.meta.extinction)
        } else {
            self.compute_extinction(tol)
        }
    }

    /// Law conditioned on survival: f̃(s) = (f(q + (1−q)s) − q)/(1−q).
    pub fn tilde(&self) -> Result<Self> {
        let q = self.meta.extinction;
        if q == 0.0 {
            return Ok(self.clone());
        }
        let table = self.table.clone();
        let pm = 1.0 - q;
        let tilde_p = move |n: u64, horizon: u64| -> f64 {
            if n == 0 {
                return 0.0;
            }
            let mut s = 0.0;
            for m in n..horizon {
                let p = table.p(m);
                if p > 0.0 {
                    s += p * (ln_choose(m, n) + (m - n) as f64 * q.ln()).exp();
                }
            }
            pm.powi(n as i32 - 1) * s
        };
        match &self.kind {
            LawKind::ExplicitFinite { pmf } => {
                let len = pmf.len() as u64;
                let mut out: Vec<f64> = (0..len).map(|n| tilde_p(n, len)).collect();
                let s: f64 = out.iter().sum();
                for p in out.iter_mut() {
                    *p /= s;
                }
                Self::explicit(out)
            }
            _ => {
                let horizon = self.table.len().max(1) * 4 + 4096;
                let mut cert = Certificate {
                    mean: self.meta.mean,
                    max_support: self.meta.max_support,
                    radius_s0: match self.meta.radius_s0 {
                        Extended::Finite(s0) if self.meta.s0_applicable => {
                            Extended::Finite((s0 - q) / pm)
                        }
                        other => other,
                    },
                    moment_theta0: self.meta.moment_theta0,
                    moment_at_theta0_finite: self.meta.moment_at_theta0_finite,
                    n_log_n_finite: true,
                    k_tail: self.meta.k_tail,
                };
                if !self.meta.s0_applicable {
                    cert.radius_s0 = Extended::Finite(1.0);
                }
                let base = self.clone();
                let pgf: RealFn = Arc::new(move |s: f64| {
                    (base.pgf(q + pm * s).unwrap_or(f64::NAN) - q) / pm
                });
                let base2 = self.clone();
                let pgf_shifted: RealFn = Arc::new(move |u: f64| {
                    base2.pgf_shifted(pm * u).unwrap_or(f64::NAN) / pm
                });
                Self::custom(CustomLaw {
                    name: "conditioned on survival".into(),
                    pmf: Arc::new(move |n| tilde_p(n, horizon)),
                    pgf: Some(pgf),
                    pgf_shifted: Some(pgf_shifted),
                    certificate: cert,
                })
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.table.sample(rng)
    }

    /// Draw conditioned on N ≥ m.
    pub fn sample_at_least<R: Rng + ?Sized>(&self, rng: &mut R, m: u64) -> u64 {
        self.table.sample_at_least(rng, m)
    }

    /// Total offspring of z independent individuals, exact in law.
    pub fn offspring_sum<R: Rng + ?Sized>(&self, rng: &mut R, z: u64) -> Result<u64> {
        if z == 0 {
            return Ok(0);
        }
        if let LawKind::GeometricShifted { a, k } = self.kind {
            // N = 1 + k·J with J negative binomial(1/k, 1/a)
            let kf = k as f64;
            let lambda = Gamma::new(z as f64 / kf, a - 1.0)
                .map_err(|e| Error::domain("gamma shape", z as f64, e.to_string()))?
                .sample(rng);
            let j = if lambda > 0.0 {
                Poisson::new(lambda)
                    .map_err(|_| Error::PopulationOverflow { generation: 0 })?
                    .sample(rng)
            } else {
                0.0
            };
            let total = z as f64 + kf * j;
            if total >= POPULATION_LIMIT as f64 {
                return Err(Error::PopulationOverflow { generation: 0 });
            }
            return Ok(z + k as u64 * j as u64);
        }
        if z <= CHAIN_INDIVIDUAL {
            let mut t: u64 = 0;
            for _ in 0..z {
                t = t.saturating_add(self.table.sample(rng));
            }
            return if t >= POPULATION_LIMIT {
                Err(Error::PopulationOverflow { generation: 0 })
            } else {
                Ok(t)
            };
        }
        self.table.sum_of_draws(rng, z)
    }

    /// Pmf of the size-biased count, n·p_n/a.
    pub(crate) fn size_biased_table(&self) -> Table {
        let a = self.meta.mean;
        let l = self.table.len();
        match self.table.tail {
            TailPart::None => {
                let head = (0..l).map(|n| n as f64 * self.table.p(n) / a).collect();
                Table::new(head, TailPart::None)
            }
            TailPart::Power { weight, exponent } => {
                let head = (0..l).map(|n| n as f64 * self.table.p(n) / a).collect();
                Table::new(
                    head,
                    TailPart::Power {
                        weight: weight / a,
                        exponent: exponent - 1.0,
                    },
                )
            }
            TailPart::Geometric { weight, ratio } => {
                let mut head: Vec<f64> = Vec::new();
                let mut n = 0u64;
                loop {
                    head.push(n as f64 * self.table.p(n) / a);
                    n += 1;
                    let nf = n as f64;
                    let om = 1.0 - ratio;
                    let rest = weight / a * ratio.powf(nf) * (nf * om + ratio) / (om * om);
                    if n >= l && rest < 1e-17 {
                        break;
                    }
                }
                let s: f64 = head.iter().sum();
                for p in head.iter_mut() {
                    *p /= s;
                }
                Table::new(head, TailPart::None)
            }
        }
    }
}

/// f(s).
pub fn pgf_eval(law: &OffspringLaw, s: f64) -> Result<f64> {
    law.pgf(s)
}

/// f_n(s).
pub fn pgf_iterate(law: &OffspringLaw, n: usize, s: f64) -> Result<f64> {
    law.iterate(n, s)
}

/// (f_n)^{-1}(t).
pub fn pgf_inverse_iterate(law: &OffspringLaw, n: usize, t: f64, tol: f64) -> Result<f64> {
    law.inverse_iterate(n, t, tol)
}

pub fn extinction_prob(law: &OffspringLaw, tol: f64) -> Result<f64> {
    law.extinction(tol)
}

pub fn tilde_law(law: &OffspringLaw) -> Result<OffspringLaw> {
    law.tilde()
}

pub fn analytic_metadata(law: &OffspringLaw) -> LawMetadata {
    law.metadata().clone()
}

/// f_n(s) = s/(a^n − (a^n − 1)s^k)^{1/k} for the geometric-shifted family.
pub fn geometric_shifted_iterate(a: f64, k: u32, n: i32, s: f64) -> f64 {
    let an = a.powi(n);
    s / (an - (an - 1.0) * s.powi(k as i32)).powf(1.0 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quarter() -> OffspringLaw {
        OffspringLaw::explicit(vec![0.25, 0.25, 0.5]).unwrap()
    }

    #[test]
    fn explicit_pgf_values() {
        let l = quarter();
        assert_eq!(l.pgf(1.0).unwrap(), 1.0);
        assert_eq!(l.pgf(0.0).unwrap(), 0.25);
        assert_relative_eq!(l.iterate(2, 0.0).unwrap(), 0.34375, max_relative = 1e-15);
        assert_eq!(l.iterate(3, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn geometric_closed_form_values() {
        let l = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        assert_relative_eq!(l.pgf(0.5).unwrap(), 0.5 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(l.iterate(2, 0.5).unwrap(), 0.5 / 13.0, max_relative = 1e-14);
        // s/(25 − 24 s) = 4/3  ⇔  s = 100/99
        let x = l.inverse_iterate(2, 4.0 / 3.0, 1e-12).unwrap();
        assert_relative_eq!(x, 100.0 / 99.0, max_relative = 1e-11);
        let y = l.inverse_iterate(1, l.pgf(0.5).unwrap(), 1e-13).unwrap();
        assert_relative_eq!(y, 0.5, max_relative = 1e-11);
        assert_relative_eq!(l.inverse_iterate(4, 1.0, 1e-12).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn geometric_table_matches_closed_form() {
        for k in 1..=3 {
            let l = OffspringLaw::geometric_shifted(5.0, k).unwrap();
            for &s in &[0.0, 0.3, 0.7, 0.95, 1.0] {
                assert_relative_eq!(l.table.pgf(s), l.pgf(s).unwrap(), epsilon = 1e-12);
            }
            assert_relative_eq!(l.table.mean(), 5.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn extinction_and_tilde() {
        let l = quarter();
        assert_relative_eq!(l.extinction(1e-12).unwrap(), 0.5, epsilon = 1e-12);
        let t = l.tilde().unwrap();
        assert_relative_eq!(t.p(0), 0.0);
        assert_relative_eq!(t.p(1), 0.75, epsilon = 1e-14);
        assert_relative_eq!(t.p(2), 0.25, epsilon = 1e-14);
        assert_relative_eq!(t.mean(), l.mean(), epsilon = 1e-14);
        let g = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        assert_eq!(g.extinction(1e-12).unwrap(), 0.0);
        let b = OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap();
        assert_relative_eq!(b.extinction(1e-12).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn binary_metadata() {
        let b = OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap();
        let m = b.metadata();
        assert_eq!(m.max_support, Some(2));
        assert_relative_eq!(m.mean, 1.6, epsilon = 1e-15);
        assert_relative_eq!(m.gamma.unwrap(), 2f64.ln() / 1.6f64.ln(), epsilon = 1e-15);
        assert!((m.gamma.unwrap() - 1.4748).abs() < 1e-3);
        assert_eq!(m.regime, Regime::BoundedSupport);
    }

    #[test]
    fn geometric_metadata() {
        let g = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
        let m = g.metadata();
        assert_eq!(m.radius_s0, Extended::Finite(1.25));
        assert_eq!(m.moment_theta0, Extended::Infinite);
        assert_eq!(m.max_support, None);
    }

    #[test]
    fn power_tail_law() {
        let p = OffspringLaw::power_tail(3.0, vec![0.0, 0.0]).unwrap();
        let m = p.metadata();
        assert_eq!(m.moment_theta0, Extended::Finite(3.0));
        assert!(!m.s0_applicable);
        let expected = hurwitz_zeta(3.0, 2.0) / hurwitz_zeta(4.0, 2.0);
        assert_relative_eq!(m.mean, expected, max_relative = 1e-12);
        assert_relative_eq!(p.pgf(1.0).unwrap(), 1.0, epsilon = 1e-13);
        let direct: f64 = (2..2_000_000u64).map(|n| p.p(n) * 0.999f64.powf(n as f64)).sum();
        assert_relative_eq!(p.pgf(0.999).unwrap(), direct, max_relative = 1e-10);
        assert!(p.pgf(1.01).is_err());
    }

    #[test]
    fn mean_identity_by_differentiation() {
        let laws = [
            quarter(),
            OffspringLaw::geometric_shifted(5.0, 2).unwrap(),
            OffspringLaw::power_tail(3.0, vec![0.0, 0.0]).unwrap(),
            OffspringLaw::offset_geometric(2, 0.25).unwrap(),
        ];
        for l in &laws {
            let h = 1e-7;
            let d = -l.pgf_shifted(-h).unwrap() / h;
            assert!((d - l.mean()).abs() < 1e-5, "{d} vs {}", l.mean());
        }
    }

    #[test]
    fn offset_geometric_law() {
        let l = OffspringLaw::offset_geometric(2, 0.25).unwrap();
        assert_relative_eq!(l.mean(), 5.0, epsilon = 1e-12);
        assert_relative_eq!(l.metadata().radius_s0.value(), 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(l.pgf(0.5).unwrap(), 0.25 / 2.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(OffspringLaw::explicit(vec![0.0, 1.0]).is_err());
        assert!(OffspringLaw::explicit(vec![0.0, 0.0, 1.0]).is_err());
        assert!(OffspringLaw::explicit(vec![0.5, 0.5]).is_err());
        assert!(OffspringLaw::power_tail(1.0, vec![]).is_err());
        assert!(OffspringLaw::geometric_shifted(1.0, 1).is_err());
    }

    #[test]
    fn samplers_match_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let laws = [
            quarter(),
            OffspringLaw::geometric_shifted(3.0, 1).unwrap(),
            OffspringLaw::power_tail(2.5, vec![0.1, 0.2]).unwrap(),
        ];
        for l in &laws {
            let n = 200_000;
            let mut counts = [0u64; 6];
            for _ in 0..n {
                let x = l.sample(&mut rng) as usize;
                if x < 6 {
                    counts[x] += 1;
                }
            }
            for (i, c) in counts.iter().enumerate() {
                let p = l.p(i as u64);
                let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
                assert!(((*c as f64 / n as f64) - p).abs() < 5.0 * se, "{i}: {c} vs {p}");
            }
        }
    }

    #[test]
    fn aggregated_sum_has_right_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let laws = [
            OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap(),
            OffspringLaw::geometric_shifted(5.0, 2).unwrap(),
            OffspringLaw::power_tail(3.0, vec![0.0, 0.0]).unwrap(),
        ];
        for l in &laws {
            let z = 1000u64;
            let reps = 4000;
            let xs: Vec<f64> = (0..reps)
                .map(|_| l.offspring_sum(&mut rng, z).unwrap() as f64 / z as f64)
                .collect();
            let (m, se) = crate::numeric::mean_se(&xs);
            assert!((m - l.mean()).abs() < 4.0 * se, "{m} vs {}", l.mean());
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let s: LawSpec = serde_json::from_str(r#"{"kind":"geomshift","a":5,"k":1}"#).unwrap();
        assert_eq!(s, LawSpec::Geomshift { a: 5.0, k: 1 });
        let p: LawSpec = serde_json::from_str(r#"{"kind":"powertail","theta":3,"head":[0,0]}"#).unwrap();
        assert!(matches!(p, LawSpec::Powertail { .. }));
        assert!(serde_json::from_str::<LawSpec>(r#"{"kind":"explicit","pmf":[0.5,0.5],"x":1}"#).is_err());
        assert_eq!(serde_json::to_string(&Extended::Infinite).unwrap(), "\"inf\"");
    }
}
