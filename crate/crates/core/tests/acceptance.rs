//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::sync::Arc;
use std::time::Instant;

use gwb_core::constants::{
    c_phi_series_threshold, sigma_inverse_iteration, tail_exponent_exact, tail_exponent_fit, threshold_functional,
    ConstantEstimate, WLaw,
};
use gwb_core::exec::{map_replicas, replica_rng};
use gwb_core::gauge::{
    classify_metadata, geometric_family_increment_tail, GForm, GFunction, GaugeFunction, Outcome,
    TheoremPath, Verdict,
};
use gwb_core::mc::{
    extinction_check, run_conservation, run_independence, run_ks_gamma, run_limsup_track,
    run_sandwich, run_size_bias, ExperimentKind, ExperimentReport, ExperimentSpec, Trend,
};
use gwb_core::pgf::{Extended, KTailClass, LawMetadata, LawSpec, OffspringLaw, Regime};
use gwb_core::spine::WSampler;
use gwb_core::Execution;

const EXEC: Execution = Execution::Parallel;
const SEED: u64 = 20240601;

/// Frozen regression bracket for the median running maximum of a^mY(−m)/log m at
/// m ≤ 1000, geometric law a = 5, k = 1, 2000 replicas. Pilot runs over seeds
/// 1..4 and 20240601 gave 3.16 to 3.20; the bracket is about ±10% around them.
const PILOT_RUNNING_MEDIAN: (f64, f64) = (2.85, 3.50);

struct Line {
    passed: bool,
    detail: String,
}

fn ok(passed: bool, detail: impl Into<String>) -> Line {
    Line {
        passed,
        detail: detail.into(),
    }
}

fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.2e}")
    } else {
        format!("{x:.4}")
    }
}

fn report_line(r: &ExperimentReport, names: &[&str]) -> (bool, String) {
    let mut passed = true;
    let mut parts = Vec::new();
    for n in names {
        match r.check(n) {
            Some(c) => {
                passed &= c.passed;
                parts.push(format!("{n}={} ({} {})", num(c.statistic), c.rule.replace("statistic ", "").replace(" threshold", ""), num(c.threshold)));
            }
            None => {
                passed = false;
                parts.push(format!("{n}=missing"));
            }
        }
    }
    (passed, parts.join("; "))
}

fn geom(a: f64, k: u32) -> LawSpec {
    LawSpec::Geomshift { a, k }
}

fn c1_offset_geometric_sigma() -> Line {
    let t = Instant::now();
    let law = OffspringLaw::offset_geometric(2, 0.25).unwrap();
    let s = sigma_inverse_iteration(&law, 60).unwrap().value.value();
    let secs = t.elapsed().as_secs_f64();
    ok((s - 1.318).abs() <= 0.01 && secs < 5.0, format!("sigma = {s:.10} (target 1.318 ± 0.01), {secs:.3}s (< 5s)"))
}

fn c2_sigma_one_over_k() -> Line {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for a in [2.0, 5.0] {
        for k in 1..=3u32 {
            let law = OffspringLaw::geometric_shifted(a, k).unwrap();
            let s = sigma_inverse_iteration(&law, 40).unwrap().value.value();
            worst = worst.max((s - 1.0 / k as f64).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ok(worst <= 1e-6 && secs < 1.0, format!("max |sigma − 1/k| = {worst:.2e} (≤ 1e-6) over a ∈ {{2,5}}, k ∈ {{1,2,3}}, {secs:.3}s (< 1s)"))
}

fn c3_gamma_oracle() -> Line {
    let t = Instant::now();
    let mut spec = ExperimentSpec::new(geom(5.0, 1), ExperimentKind::KsGamma, 10_000, SEED);
    spec.depth = Some(10);
    let out = run_ks_gamma(&spec, EXEC).unwrap();
    let (p, d) = report_line(&out.report, &["ks_vs_gamma_oracle", "negative_control_wrong_oracle"]);
    let secs = t.elapsed().as_secs_f64();
    ok(p && secs < 60.0, format!("{d}; {secs:.2}s (< 60s)"))
}

fn c4_extinction() -> Line {
    let law = OffspringLaw::explicit(vec![0.25, 0.25, 0.5]).unwrap();
    let q = law.extinction(1e-14).unwrap();
    let c = extinction_check(&law, 30, 10_000, SEED, EXEC).unwrap();
    ok(
        c.passed && (q - 0.5).abs() < 1e-12,
        format!("q = {q}; |freq − q|/se = {:.3} (≤ 3) at {} replicas", c.statistic, c.sample_size),
    )
}

fn c5_conservation() -> Line {
    let mut spec = ExperimentSpec::new(geom(5.0, 1), ExperimentKind::Conservation, 100, SEED);
    spec.depth = Some(6);
    spec.cutsets = Some(100);
    let out = run_conservation(&spec, EXEC).unwrap();
    let (p, d) = report_line(&out.report, &["max_abs_err", "rejected_cutsets"]);
    ok(p, format!("100 trees × 100 ragged cutsets: {d}"))
}

fn c6_size_bias() -> Line {
    let spec = ExperimentSpec::new(geom(5.0, 1), ExperimentKind::SizeBias, 10_000, SEED);
    let out = run_size_bias(&spec, EXEC).unwrap();
    let (p, d) = report_line(&out.report, &["weighted_ecdf_vs_spine"]);
    ok(p, d)
}

fn c7_self_similarity() -> Line {
    let spec = ExperimentSpec::new(geom(5.0, 1), ExperimentKind::Independence, 10_000, SEED);
    let out = run_independence(&spec, EXEC).unwrap();
    let (p, d) = report_line(
        &out.report,
        &[
            "shift_self_similarity_n1",
            "shift_self_similarity_n2",
            "shift_self_similarity_n5",
            "increment_corr_v0_v1_in_se",
        ],
    );
    ok(p, d)
}

fn c8_sandwich() -> Line {
    let spec = ExperimentSpec::new(geom(5.0, 1), ExperimentKind::Sandwich, 10_000, SEED);
    let out = run_sandwich(&spec, EXEC).unwrap();
    let (p, d) = report_line(&out.report, &["lower_bound_max_excess_in_se", "upper_bound_max_excess_in_se"]);
    ok(p, format!("20-point grid: {d}"))
}

fn power_meta(theta0: f64, moment_finite: Option<bool>, pure: bool) -> LawMetadata {
    LawMetadata {
        mean: 2.0,
        extinction: 0.0,
        radius_s0: Extended::Finite(1.0),
        s0_applicable: false,
        moment_theta0: Extended::Finite(theta0),
        moment_at_theta0_finite: moment_finite,
        max_support: None,
        gamma: None,
        regime: Regime::PowerMoment,
        k_tail: KTailClass::RegularlyVarying {
            k_exponent: theta0 - 1.0,
            pure_power: pure,
        },
    }
}

fn phi(meta: &LawMetadata, form: GForm) -> GaugeFunction {
    GaugeFunction::new(meta.mean.ln(), GFunction::new(form).unwrap())
}

fn c9_classification() -> Line {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut expect = |meta: &LawMetadata, form: GForm, label: &str, path: Option<TheoremPath>, tag: &str| {
        cases += 1;
        let v = classify_metadata(meta, &phi(meta, form));
        if v.outcome.label() != label || path.is_some_and(|p| p != v.theorem_path) {
            failures.push(format!("{tag}: got {} via {:?}", v.outcome.label(), v.theorem_path));
        }
    };
    for theta0 in [2.0, 3.0] {
        let b0 = 1.0 / (theta0 - 1.0);
        let pure = power_meta(theta0, Some(false), true);
        for b in [0.5 * b0, 0.9 * b0] {
            expect(&pure, GForm::PowerB { b }, "zero", Some(TheoremPath::DominatedSeriesDivergesStrong), "b<b0");
        }
        for b in [1.1 * b0, 2.0 * b0] {
            expect(&pure, GForm::PowerB { b }, "infinite", Some(TheoremPath::DominatedSeriesConverges), "b>b0");
        }
        expect(&pure, GForm::PowerB { b: b0 }, "zero_off_exceptional", Some(TheoremPath::PowerMomentBoundary), "b=b0, E=inf");
        let finite = power_meta(theta0, Some(true), false);
        expect(&finite, GForm::PowerB { b: b0 }, "infinite", Some(TheoremPath::PowerMomentBoundary), "b=b0, E<inf");
        expect(&power_meta(theta0, None, false), GForm::PowerB { b: b0 }, "undecided", None, "b=b0, E unknown");
        expect(&pure, GForm::Log, "zero", Some(TheoremPath::DominatedSeriesDivergesStrong), "g=log");
        expect(&pure, GForm::Const { c: 1.0 }, "zero", Some(TheoremPath::DominatedSeriesDivergesStrong), "g=const");
    }
    // AbsolutelyContinuous iff K ∉ D, over laws and gauges
    let laws = [
        OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap(),
        OffspringLaw::explicit(vec![0.25, 0.25, 0.5]).unwrap(),
        OffspringLaw::geometric_shifted(5.0, 1).unwrap(),
        OffspringLaw::geometric_shifted(2.0, 3).unwrap(),
        OffspringLaw::offset_geometric(2, 0.25).unwrap(),
        OffspringLaw::power_tail(2.0, vec![]).unwrap(),
        OffspringLaw::power_tail(3.0, vec![0.0, 0.0]).unwrap(),
    ];
    let mut iff_ok = true;
    for law in &laws {
        let meta = law.metadata();
        let mut forms = vec![
            GForm::Const { c: 1.0 },
            GForm::Log,
            GForm::PowerB { b: 0.3 },
            GForm::PowerB { b: 1.0 },
        ];
        if let Some(g) = meta.gamma {
            forms.push(GForm::LogLogPow { exponent: (g - 1.0) / g });
        }
        let verdicts: Vec<Verdict> = forms.into_iter().map(|f| classify_metadata(meta, &phi(meta, f))).collect();
        let any_ac = verdicts.iter().any(|v| matches!(v.outcome, Outcome::AbsolutelyContinuous { .. }));
        let not_in_d = verdicts[0].k_in_d == Some(false);
        iff_ok &= any_ac == not_in_d;
        iff_ok &= verdicts
            .iter()
            .all(|v| !matches!(v.outcome, Outcome::AbsolutelyContinuous { .. }) || v.k_in_d == Some(false));
    }
    // determinism
    let m = power_meta(3.0, Some(false), true);
    let a = serde_json::to_string(&classify_metadata(&m, &phi(&m, GForm::PowerB { b: 0.4 }))).unwrap();
    let b = serde_json::to_string(&classify_metadata(&m, &phi(&m, GForm::PowerB { b: 0.4 }))).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let passed = failures.is_empty() && iff_ok && a == b && secs < 1.0;
    ok(
        passed,
        format!(
            "{cases} dichotomy cases, {} mismatches{}; AC iff K∉D over {} laws: {iff_ok}; deterministic: {}; {secs:.3}s (< 1s)",
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(" [{}]", failures.join(", ")) },
            laws.len(),
            a == b
        ),
    )
}

fn inside(x: f64, e: &ConstantEstimate) -> bool {
    e.contains(x)
}

fn c10_cross_method() -> Line {
    let law = OffspringLaw::geometric_shifted(5.0, 1).unwrap();
    let sigma = sigma_inverse_iteration(&law, 40).unwrap();
    // θ* = C^{-1} = σ; the grid avoids the critical value itself
    let theta_grid: Vec<f64> = (0..150).map(|i| 0.005 + 0.01 * i as f64).collect();
    let thr = threshold_functional(&|x: f64| x, &theta_grid, &WLaw::Gamma { shape: 1.0, scale: 1.0 })
        .unwrap()
        .reciprocal();
    let delta_grid: Vec<f64> = (0..40).map(|i| 0.805 + 0.01 * i as f64).collect();
    let g: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|n: f64| n.max(std::f64::consts::E).ln());
    let series = c_phi_series_threshold(g, &|ell| geometric_family_increment_tail(5.0, ell), &delta_grid, 3, 1 << 20)
        .unwrap()
        .reciprocal();
    let ests = [("sigma", &sigma), ("threshold", &thr), ("series", &series)];
    let mut passed = true;
    for (_, e) in &ests {
        for (_, f) in &ests {
            passed &= inside(e.value.value(), f);
        }
    }
    let fmt = |e: &ConstantEstimate| {
        let (lo, hi) = e.bracket.unwrap_or((f64::NAN, f64::NAN));
        format!("{:.6} [{:.6}, {:.6}]", e.value.value(), lo, hi)
    };
    ok(
        passed,
        format!(
            "C_phi from sigma {}, threshold {}, series {}; every point inside every bracket",
            fmt(&sigma),
            fmt(&thr),
            fmt(&series)
        ),
    )
}

fn c11_properties() -> Line {
    let track = |b: f64, trend: Trend| {
        let mut spec = ExperimentSpec::new(
            LawSpec::Powertail {
                theta: 3.0,
                head: vec![0.0, 0.0],
            },
            ExperimentKind::LimsupTrack,
            1000,
            SEED,
        );
        spec.gauge = Some(GForm::PowerB { b });
        spec.expect_trend = Some(trend);
        run_limsup_track(&spec, EXEC).unwrap().report
    };
    let decay = track(0.7, Trend::Decay);
    let growth = track(0.3, Trend::Growth);
    let (pa1, da1) = report_line(&decay, &["block_median_decay_ratio"]);
    let (pa2, da2) = report_line(&growth, &["block_median_growth_ratio"]);
    // tail exponent of −log P(W > x) for the binary law, from the exact law of W_14
    let law = OffspringLaw::explicit(vec![0.2, 0.0, 0.8]).unwrap();
    let gamma = law.metadata().gamma.unwrap();
    let target = gamma / (gamma - 1.0);
    let exact = tail_exponent_exact(&law, 14, (1e-100, 1e-5)).unwrap();
    let pb = (exact - target).abs() <= 0.2 * target;
    let ws = WSampler::with_depth(20);
    let w: Vec<f64> = map_replicas(100_000, EXEC, |i| ws.sample(&law, &mut replica_rng(SEED, i)).unwrap());
    let sampled = tail_exponent_fit(&w, 0.9, 0.9999);
    // frozen regression bracket on the log-normalized track
    let mut spec = ExperimentSpec::new(geom(5.0, 1), ExperimentKind::LimsupTrack, 2000, SEED);
    spec.gauge = Some(GForm::Log);
    spec.bracket = Some((0.2, 5.0));
    let pilot = run_limsup_track(&spec, EXEC).unwrap().report;
    let (pc1, _) = report_line(&pilot, &["running_median_above_bracket_low", "running_median_below_bracket_high"]);
    let med = pilot.summary["running_median_last"];
    let pc2 = PILOT_RUNNING_MEDIAN.0 <= med && med <= PILOT_RUNNING_MEDIAN.1;
    ok(
        pa1 && pa2 && pb && pc1 && pc2,
        format!(
            "(a) b=0.7 {da1}; b=0.3 {da2}; (b) exponent {exact:.3} vs {target:.3} (±20%), sampled-tail fit {sampled:.3} reported only; (c) running median {med:.4} in [0.2, 5] and frozen [{:.3}, {:.3}]",
            PILOT_RUNNING_MEDIAN.0, PILOT_RUNNING_MEDIAN.1
        ),
    )
}

type Criterion = (&'static str, fn() -> Line);

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 sigma, f(s) = s²/(4 − 3s)", c1_offset_geometric_sigma),
        ("2 sigma = 1/k, geometric family", c2_sigma_one_over_k),
        ("3 gamma oracle KS", c3_gamma_oracle),
        ("4 extinction probability", c4_extinction),
        ("5 cutset conservation", c5_conservation),
        ("6 size-bias identity", c6_size_bias),
        ("7 shift self-similarity", c7_self_similarity),
        ("8 decomposability sandwich", c8_sandwich),
        ("9 classification table", c9_classification),
        ("10 cross-method constants", c10_cross_method),
        ("11 limsup trends, tail exponent, frozen bracket", c11_properties),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.starts_with(p.as_str())) {
            continue;
        }
        let t = Instant::now();
        let r = f();
        println!(
            "criterion {name}: {} | {} [{:.1}s]",
            if r.passed { "PASS" } else { "FAIL" },
            r.detail,
            t.elapsed().as_secs_f64()
        );
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
