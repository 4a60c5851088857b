use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwb_core::constants::{sigma_inverse_iteration, tau_estimate};
use gwb_core::exec::{derive_seed, map_replicas, replica_rng};
use gwb_core::gauge::{classify, ClassifyOptions, GForm, GaugeFunction};
use gwb_core::gwtree::{simulate_population, simulate_tree, z_counts_csv};
use gwb_core::mc::{run_experiment, run_invariant_suite, ExperimentKind, ExperimentOutput, ExperimentSpec, Trend};
use gwb_core::spine::WSampler;
use gwb_core::{Error, Execution, LawSpec, OffspringLaw, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Galton-Watson boundary gauges: constants, classification and Monte Carlo checks.
///
/// Laws and gauges are JSON, given either inline or as a file path. Laws look like
/// {"kind":"geomshift","a":5,"k":1}, {"kind":"explicit","pmf":[0.25,0.25,0.5]},
/// {"kind":"powertail","theta":3} or {"kind":"offsetgeom","offset":2,"p":0.25}.
/// Gauges look like {"form":"log"} or {"form":"power_b","b":0.4}.
///
/// Exit codes: 0 success, 1 a check failed, 2 regime or domain error,
/// 3 configuration error, 4 resource limit.
#[derive(Debug, Parser)]
#[command(name = "gwb", version)]
struct Cli {
    /// Worker threads for replica loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run replica loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Single-line JSON on stdout.
    #[arg(long, global = true)]
    compact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// σ = lim a^{n+1}(f_n^{-1}(S₀) − 1), the constant of the exponential-moment gauge.
    ///
    /// Inverts the iterated generating function beyond s = 1, which needs a finite
    /// radius of convergence above 1. The geometric family uses its closed-form
    /// iterates. Exits 2 when the law has no such radius.
    Sigma {
        #[arg(long)]
        law: String,
        /// Iterates computed before extrapolation.
        #[arg(long, default_value_t = 60)]
        n_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// τ in −log P(W > x) ≈ τ·x^{γ/(γ−1)} for bounded offspring, from sampled W.
    ///
    /// Always a best-effort estimate from the empirical upper tail.
    Tau {
        #[arg(long)]
        law: String,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Truncation depth of W = lim Z_n/a^n.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// φ-Hausdorff measure of the boundary: zero, positive and finite, or infinite.
    ///
    /// The gauge is φ(t) = t^α·g(|log t|) with α = log a. The verdict follows the
    /// offspring tail through K(x) = E(N − x)^+: exact gauges when K is not of
    /// dominated variation, series tests against g otherwise. Exits 2 when g or φ
    /// is not admissible.
    Classify(ClassifyArgs),
    /// Simulates generation sizes Z_0..Z_depth and optionally full trees.
    Simulate {
        #[arg(long)]
        law: String,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        /// Also export the first TREES trees node by node.
        #[arg(long, default_value_t = 0)]
        trees: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs one Monte Carlo experiment and writes its report, tables and plots.
    ///
    /// Kinds:
    ///   ks_gamma: Z_n/a^n against the Gamma limit of the geometric family.
    ///   size_bias: the W-weighted law of W against the spine value Y(0).
    ///   conservation: W_i a^{-|i|} equals the sum over any cutset below i.
    ///   sandwich: the decomposability bounds on P(Y(0) ≤ x).
    ///   independence: a^n Y(−n) against Y(0), and increment correlations.
    ///   limsup_track: a^m Y(−m)/g(m) along spine paths, block and running maxima.
    #[command(verbatim_doc_comment)]
    Experiment(ExperimentArgs),
    /// Runs the invariant suite (conservation, size bias, sandwich, independence,
    /// extinction) for one law.
    Verify {
        #[arg(long)]
        law: String,
        #[arg(long, default_value_t = 2000)]
        replicas: usize,
        /// Tree depth for the conservation battery.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// JSON file with law, gauge and options; flags override its fields.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    gauge: Option<String>,
    /// Estimate C_φ from sampled spine increments when no exact gauge applies.
    #[arg(long)]
    numeric_c_phi: bool,
    /// W draws used by sampled constants.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyConfig {
    law: Option<LawSpec>,
    gauge: Option<GForm>,
    seed: Option<u64>,
    #[serde(default)]
    numeric_c_phi: bool,
    w_samples: Option<usize>,
    w_depth: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrendArg {
    Growth,
    Decay,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment spec as JSON; flags override its fields.
    #[arg(long)]
    config: Option<String>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    w_depth: Option<usize>,
    #[arg(long)]
    cutsets: Option<usize>,
    /// Normalizer g for limsup_track.
    #[arg(long)]
    gauge: Option<String>,
    /// Comma-separated checkpoints for limsup_track.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    trend: Option<TrendArg>,
    /// Bounds LO,HI on the median running maximum at the last checkpoint.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    bracket: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum KindArg {
    KsGamma,
    SizeBias,
    Conservation,
    Sandwich,
    LimsupTrack,
    Independence,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::KsGamma => ExperimentKind::KsGamma,
            KindArg::SizeBias => ExperimentKind::SizeBias,
            KindArg::Conservation => ExperimentKind::Conservation,
            KindArg::Sandwich => ExperimentKind::Sandwich,
            KindArg::LimsupTrack => ExperimentKind::LimsupTrack,
            KindArg::Independence => ExperimentKind::Independence,
        }
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    version: &'static str,
    command: String,
    files: Vec<ManifestEntry>,
}

/// Inline JSON when the argument starts with `{`, a file path otherwise.
fn read_json<T: for<'de> Deserialize<'de>>(arg: &str, what: &str) -> Result<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| Error::Config(format!("cannot read {what} {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{what} {arg}: {e}")))
}

/// GWB_SEED beats the flag, which beats the config file.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Ok(v) = std::env::var("GWB_SEED") {
        return v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("GWB_SEED={v} is not an unsigned integer")));
    }
    flag.or(config)
        .ok_or_else(|| Error::Config("a seed is required (--seed, config or GWB_SEED)".into()))
}

fn to_json<T: Serialize>(v: &T, compact: bool) -> String {
    if compact {
        serde_json::to_string(v)
    } else {
        serde_json::to_string_pretty(v)
    }
    .expect("serializable")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Lists every file in `dir` except the manifest itself, sorted by name.
/// Report files are hashed without their timing block.
fn write_manifest(dir: &Path, command: &str, reports: &[&ExperimentOutput]) -> Result<()> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    let mut files = Vec::new();
    for name in names {
        let bytes = fs::read(dir.join(&name))?;
        let report = reports.iter().find(|o| format!("{}.json", o.report.kind) == name);
        files.push(ManifestEntry {
            sha256: report.map_or_else(|| sha256_hex(&bytes), |o| o.report.hash()),
            bytes: bytes.len() as u64,
            file: name,
        });
    }
    let m = Manifest {
        version: gwb_core::VERSION,
        command: command.into(),
        files,
    };
    fs::write(dir.join("manifest.json"), to_json(&m, false))?;
    Ok(())
}

fn emit<T: Serialize>(value: &T, name: &str, out: Option<&Path>, compact: bool) -> Result<()> {
    let text = to_json(value, compact);
    println!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{name}.json")), &text)?;
        write_manifest(dir, name, &[])?;
    }
    Ok(())
}

fn finish_experiment(out: &ExperimentOutput, dir: &Path, command: &str, compact: bool) -> Result<bool> {
    out.write_to(dir)?;
    write_manifest(dir, command, &[out])?;
    let summary = serde_json::json!({
        "kind": out.report.kind,
        "passed": out.report.passed,
        "report_hash": out.report.hash(),
        "failed_checks": out.report.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect::<Vec<_>>(),
        "out": dir,
    });
    println!("{}", to_json(&summary, compact));
    Ok(out.report.passed)
}

fn experiment_spec(args: &ExperimentArgs) -> Result<ExperimentSpec> {
    let base: Option<serde_json::Value> = args.config.as_deref().map(|c| read_json(c, "config")).transpose()?;
    let mut v = base.unwrap_or_else(|| serde_json::json!({}));
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Config("experiment config must be a JSON object".into()))?;
    if let Some(k) = args.kind {
        obj.insert("kind".into(), serde_json::to_value(ExperimentKind::from(k)).expect("kind"));
    }
    if let Some(l) = &args.law {
        obj.insert("law".into(), serde_json::to_value(read_json::<LawSpec>(l, "law")?).expect("law"));
    }
    if let Some(g) = &args.gauge {
        obj.insert("gauge".into(), serde_json::to_value(read_json::<GForm>(g, "gauge")?).expect("gauge"));
    }
    let set = |obj: &mut serde_json::Map<String, serde_json::Value>, k: &str, v: Option<serde_json::Value>| {
        if let Some(v) = v {
            obj.insert(k.into(), v);
        }
    };
    set(obj, "replicas", args.replicas.map(Into::into));
    set(obj, "depth", args.depth.map(Into::into));
    set(obj, "w_depth", args.w_depth.map(Into::into));
    set(obj, "cutsets", args.cutsets.map(Into::into));
    set(obj, "checkpoints", args.checkpoints.clone().map(Into::into));
    set(obj, "bracket", args.bracket.clone().map(Into::into));
    set(
        obj,
        "expect_trend",
        args.trend.map(|t| {
            serde_json::to_value(match t {
                TrendArg::Growth => Trend::Growth,
                TrendArg::Decay => Trend::Decay,
            })
            .expect("trend")
        }),
    );
    let config_seed = obj.get("seed").and_then(|s| s.as_u64());
    obj.insert("seed".into(), resolve_seed(args.seed, config_seed)?.into());
    serde_json::from_value(v).map_err(|e| Error::Config(format!("experiment spec: {e}")))
}

fn run(cli: Cli) -> Result<bool> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some_and(|n| n > 1) {
        return Err(Error::Config("built without the parallel feature".into()));
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let compact = cli.compact;
    match cli.command {
        Command::Sigma { law, n_max, out } => {
            let law = OffspringLaw::from_spec(&read_json(&law, "law")?)?;
            let est = sigma_inverse_iteration(&law, n_max)?;
            emit(&est, "sigma", out.as_deref(), compact)?;
        }
        Command::Tau {
            law,
            samples,
            depth,
            seed,
            out,
        } => {
            let law = OffspringLaw::from_spec(&read_json(&law, "law")?)?;
            let seed = derive_seed(resolve_seed(seed, None)?, "tau");
            let sampler = depth.map_or_else(|| WSampler::for_law(&law), WSampler::with_depth);
            let w = map_replicas(samples, exec, |i| sampler.sample(&law, &mut replica_rng(seed, i)))
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
            let est = tau_estimate(&law, &w)?;
            emit(&est, "tau", out.as_deref(), compact)?;
        }
        Command::Classify(args) => {
            let cfg: ClassifyConfig = match &args.config {
                Some(c) => read_json(c, "config")?,
                None => ClassifyConfig {
                    law: None,
                    gauge: None,
                    seed: None,
                    numeric_c_phi: false,
                    w_samples: None,
                    w_depth: None,
                },
            };
            let law_spec = match &args.law {
                Some(l) => read_json(l, "law")?,
                None => cfg.law.ok_or_else(|| Error::Config("classify needs a law".into()))?,
            };
            let form = match &args.gauge {
                Some(g) => read_json(g, "gauge")?,
                None => cfg.gauge.ok_or_else(|| Error::Config("classify needs a gauge".into()))?,
            };
            let law = OffspringLaw::from_spec(&law_spec)?;
            let phi = GaugeFunction::for_law(&law, form)?;
            let mut opts = ClassifyOptions {
                numeric_c_phi: args.numeric_c_phi || cfg.numeric_c_phi,
                w_depth: cfg.w_depth,
                exec,
                ..Default::default()
            };
            if let Some(n) = args.samples.or(cfg.w_samples) {
                opts.w_samples = n;
            }
            // sampled constants need a seed; pure logic does not
            opts.seed = resolve_seed(args.seed, cfg.seed).unwrap_or(0);
            let verdict = classify(&law, &phi, &opts)?;
            emit(&verdict, "classify", args.out.as_deref(), compact)?;
        }
        Command::Simulate {
            law,
            depth,
            replicas,
            trees,
            seed,
            out,
        } => {
            let spec: LawSpec = read_json(&law, "law")?;
            let law = OffspringLaw::from_spec(&spec)?;
            let seed = resolve_seed(seed, None)?;
            let pop_seed = derive_seed(seed, "simulate");
            let z = map_replicas(replicas, exec, |i| simulate_population(&law, depth, pop_seed.wrapping_add(i)))
                .into_iter()
                .collect::<Result<Vec<Vec<u64>>>>()?;
            fs::create_dir_all(&out)?;
            let mut csv = String::from("replica,generation,z\n");
            for (r, zs) in z.iter().enumerate() {
                for (n, c) in zs.iter().enumerate() {
                    csv.push_str(&format!("{r},{n},{c}\n"));
                }
            }
            fs::write(out.join("populations.csv"), csv)?;
            for t in 0..trees.min(replicas) {
                let tree = simulate_tree(&law, depth, pop_seed.wrapping_add(t as u64))?;
                let mut buf = Vec::new();
                tree.export_text(&mut buf)?;
                fs::write(out.join(format!("tree_{t}.txt")), buf)?;
                fs::write(out.join(format!("tree_{t}_z.csv")), z_counts_csv(tree.z_counts()))?;
            }
            let a = law.mean();
            let w: Vec<f64> = z.iter().map(|zs| zs[depth] as f64 / a.powi(depth as i32)).collect();
            let summary = serde_json::json!({
                "law": spec,
                "depth": depth,
                "replicas": replicas,
                "seed": seed,
                "extinct_fraction": z.iter().filter(|zs| zs[depth] == 0).count() as f64 / replicas.max(1) as f64,
                "mean_w": w.iter().sum::<f64>() / replicas.max(1) as f64,
                "extinction_probability": law.extinction(1e-14)?,
            });
            fs::write(out.join("simulate.json"), to_json(&summary, false))?;
            write_manifest(&out, "simulate", &[])?;
            println!("{}", to_json(&summary, compact));
        }
        Command::Experiment(args) => {
            let spec = experiment_spec(&args)?;
            let out = run_experiment(&spec, exec)?;
            return finish_experiment(&out, &args.out, "experiment", compact);
        }
        Command::Verify {
            law,
            replicas,
            depth,
            seed,
            out,
        } => {
            let mut spec = ExperimentSpec::new(
                read_json(&law, "law")?,
                ExperimentKind::Conservation,
                replicas,
                resolve_seed(seed, None)?,
            );
            spec.depth = depth;
            let o = run_invariant_suite(&spec, exec)?;
            return finish_experiment(&o, &out, "verify", compact);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
