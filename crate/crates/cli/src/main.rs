use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use manifold_core::bounds::{
    chaining_bound_scaled, covering_bound, fat_bound_maxmin, sample_complexity, BoundParams,
    FatProfile,
};
use manifold_core::geometry::io;
use manifold_core::kplanes::fit_kplanes;
use manifold_core::pipeline::{
    generate_synthetic, run_test, verify_output, write_residual_csv, SyntheticKind, TestConfig,
};
use manifold_core::whitney::SolverKind;

const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "manifold-test",
    version,
    about = "Test whether sampled data lies near a manifold of bounded volume and reach"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hypothesis test on a point cloud. Exit 0 in Case One, 10 in Case Two.
    Run(RunArgs),
    /// Generate a synthetic point cloud.
    Gen(GenArgs),
    /// Print sample-complexity bounds over a parameter grid as CSV.
    Bounds(BoundsArgs),
    /// Fit k affine planes and print the model as JSON.
    Kplanes(KplanesArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Points as CSV (one per row) or `.bin`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Treat the last CSV column as weights.
    #[arg(long)]
    weights: bool,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "V")]
    volume: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    cbar12: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    packet_budget: Option<usize>,
    #[arg(long)]
    perturbations: Option<usize>,
    #[arg(long)]
    eps_bar: Option<f64>,
    /// `cutting-plane` or `projected-gradient`.
    #[arg(long)]
    solver: Option<String>,
    /// Iteration budget of each section solve.
    #[arg(long, alias = "budget")]
    solver_budget: Option<usize>,
    #[arg(long)]
    section_budget_divisor: Option<f64>,
    #[arg(long)]
    out_of_tube_factor: Option<f64>,
    #[arg(long)]
    extra_dim: Option<usize>,
    #[arg(long)]
    reach_constant: Option<f64>,
    #[arg(long)]
    exempt_boundary: bool,
    /// Skip verification of a Case One certificate.
    #[arg(long)]
    no_verify: bool,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-point residual CSV.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// sphere, torus, kplanes or uniform_ball.
    #[arg(long)]
    kind: Option<String>,
    /// Ambient dimension.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sphere dimension.
    #[arg(long)]
    sphere_dim: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    big_r: Option<f64>,
    #[arg(long)]
    small_r: Option<f64>,
    /// Number of planes for `kplanes`.
    #[arg(long)]
    k: Option<usize>,
    /// Plane dimension for `kplanes`.
    #[arg(long)]
    plane_dim: Option<usize>,
    /// CSV or `.bin`; CSV on stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth metadata as JSON.
    #[arg(long)]
    metadata: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Each parameter takes a comma-separated list; the table covers the product.
    #[arg(long)]
    d: Option<String>,
    #[arg(long = "V")]
    volume: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long = "C")]
    c: Option<String>,
    /// Planes per max-min function in the fat bound; `ceil(U_G(1/eps))` when absent.
    #[arg(long)]
    k: Option<usize>,
    /// Minimum count of the max-min class.
    #[arg(long)]
    l: Option<usize>,
}

#[derive(Args)]
struct KplanesArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    weights: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes the input points with their assigned plane index as a last column.
    #[arg(long)]
    assignments: Option<PathBuf>,
}

type CliResult<T> = Result<T, String>;

/// `key = value` settings; keys match flag names with `-` or `_`.
struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>, known: &[&str]) -> CliResult<Self> {
        let mut values = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    format!("{}:{}: expected key = value", path.display(), lineno + 1)
                })?;
                let key = k.trim().replace('_', "-");
                if !known.contains(&key.as_str()) {
                    return Err(format!(
                        "{}:{}: unknown key '{}'",
                        path.display(),
                        lineno + 1,
                        k.trim()
                    ));
                }
                values.insert(key, v.trim().to_string());
            }
        }
        Ok(Self { values })
    }

    fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| format!("config key {key}: {e}")))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key, flag)?
            .ok_or_else(|| format!("missing --{key}"))
    }

    fn flag(&self, key: &str, flag: bool) -> CliResult<bool> {
        if flag {
            return Ok(true);
        }
        Ok(self.get::<bool>(key, None)?.unwrap_or(false))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            use std::io::Write as _;
            let mut out = std::io::stdout().lock();
            // A closed pipe downstream (e.g. `| head`) is not an error.
            let _ = writeln!(out, "{text}");
            Ok(())
        }
    }
}

fn run(a: RunArgs) -> CliResult<u8> {
    let s = Settings::load(
        a.config.as_deref(),
        &[
            "input",
            "weights",
            "d",
            "V",
            "tau",
            "eps",
            "delta",
            "C",
            "cbar12",
            "seed",
            "packet-budget",
            "perturbations",
            "eps-bar",
            "solver",
            "solver-budget",
            "budget",
            "section-budget-divisor",
            "out-of-tube-factor",
            "extra-dim",
            "reach-constant",
            "exempt-boundary",
            "no-verify",
            "out",
            "residuals",
        ],
    )?;
    let input: PathBuf = s.required("input", a.input)?;
    let cloud = io::load(&input, s.flag("weights", a.weights)?)
        .map_err(|e| format!("{}: {e}", input.display()))?;
    let mut cfg = TestConfig::new(
        s.required("d", a.d)?,
        s.required("V", a.volume)?,
        s.required("tau", a.tau)?,
        s.required("eps", a.eps)?,
        s.or("delta", a.delta, 0.1)?,
    )
    .map_err(|e| e.to_string())?;
    cfg.c = s.or("C", a.c, cfg.c)?;
    cfg.cbar12 = s.or("cbar12", a.cbar12, cfg.cbar12)?;
    cfg.seed = s.or("seed", a.seed, cfg.seed)?;
    cfg.packet_budget = s.or("packet-budget", a.packet_budget, cfg.packet_budget)?;
    cfg.perturbations_per_packet = s.or(
        "perturbations",
        a.perturbations,
        cfg.perturbations_per_packet,
    )?;
    cfg.eps_bar = s.or("eps-bar", a.eps_bar, cfg.eps_bar)?;
    if let Some(name) = s.get::<String>("solver", a.solver)? {
        cfg.solver = SolverKind::from_str(&name).map_err(|e| e.to_string())?;
    }
    let budget = s.get("solver-budget", a.solver_budget)?;
    cfg.solver_budget = match budget {
        Some(b) => b,
        None => s.or("budget", None, cfg.solver_budget)?,
    };
    cfg.section_budget_divisor = s.or(
        "section-budget-divisor",
        a.section_budget_divisor,
        cfg.section_budget_divisor,
    )?;
    cfg.out_of_tube_factor = s.or(
        "out-of-tube-factor",
        a.out_of_tube_factor,
        cfg.out_of_tube_factor,
    )?;
    cfg.extra_dim = s.or("extra-dim", a.extra_dim, cfg.extra_dim)?;
    cfg.reach_constant = s.or("reach-constant", a.reach_constant, cfg.reach_constant)?;
    cfg.exempt_boundary = s.flag("exempt-boundary", a.exempt_boundary)?;
    cfg.validate().map_err(|e| e.to_string())?;

    let verdict = run_test(&cloud, &cfg).map_err(|e| e.to_string())?;
    let verification = if verdict.case == manifold_core::pipeline::Case::One
        && !s.flag("no-verify", a.no_verify)?
    {
        let rep = verify_output(&verdict, &cloud, &cfg).map_err(|e| e.to_string())?;
        if !rep.passed {
            eprintln!("verification failed: {}", rep.failures.join("; "));
        }
        Some(rep)
    } else {
        None
    };
    let report = verdict.to_json(&cfg, verification.as_ref());
    let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    let out: Option<PathBuf> = s.get("out", a.out)?;
    write_output(out.as_deref(), &text)?;
    if let Some(p) = s.get::<PathBuf>("residuals", a.residuals)? {
        write_residual_csv(&verdict.residuals, &p).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    eprintln!(
        "case {:?}: loss {:.4e}, thresholds [{:.4e}, {:.4e}]; {}",
        verdict.case,
        verdict.best_loss,
        verdict.threshold_low,
        verdict.threshold_high,
        verdict.budget.statement
    );
    Ok(verdict.exit_code() as u8)
}

fn gen(a: GenArgs) -> CliResult<u8> {
    let s = Settings::load(
        a.config.as_deref(),
        &[
            "kind",
            "n",
            "count",
            "noise",
            "seed",
            "sphere-dim",
            "radius",
            "big-r",
            "small-r",
            "k",
            "plane-dim",
            "out",
            "metadata",
        ],
    )?;
    let name: String = s.required("kind", a.kind)?;
    let mut kind = SyntheticKind::from_name(&name).map_err(|e| e.to_string())?;
    match &mut kind {
        SyntheticKind::Sphere { d, radius } => {
            *d = s.or("sphere-dim", a.sphere_dim, *d)?;
            *radius = s.or("radius", a.radius, *radius)?;
        }
        SyntheticKind::Torus { big_r, small_r } => {
            *big_r = s.or("big-r", a.big_r, *big_r)?;
            *small_r = s.or("small-r", a.small_r, *small_r)?;
        }
        SyntheticKind::Kplanes { k, d } => {
            *k = s.or("k", a.k, *k)?;
            *d = s.or("plane-dim", a.plane_dim, *d)?;
        }
        SyntheticKind::UniformBall => {}
    }
    let data = generate_synthetic(
        &kind,
        s.required("n", a.n)?,
        s.or("noise", a.noise, 0.0)?,
        s.required("count", a.count)?,
        s.or("seed", a.seed, 0)?,
    )
    .map_err(|e| e.to_string())?;
    match s.get::<PathBuf>("out", a.out)? {
        Some(p) => io::save(&data.cloud, &p, false).map_err(|e| format!("{}: {e}", p.display()))?,
        None => {
            let mut buf = Vec::new();
            io::write_csv(&data.cloud, &mut buf, false).map_err(|e| e.to_string())?;
            write_output(None, String::from_utf8_lossy(&buf).trim_end())?;
        }
    }
    if let Some(p) = s.get::<PathBuf>("metadata", a.metadata)? {
        let text = serde_json::to_string_pretty(&data.metadata).map_err(|e| e.to_string())?;
        write_output(Some(&p), &text)?;
    }
    Ok(0)
}

fn parse_list<T: FromStr>(key: &str, text: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| format!("--{key} '{v}': {e}"))
        })
        .collect()
}

fn bounds(a: BoundsArgs) -> CliResult<u8> {
    let s = Settings::load(
        a.config.as_deref(),
        &["d", "V", "tau", "eps", "delta", "C", "k", "l"],
    )?;
    let list = |key: &str, flag: Option<String>| -> CliResult<Vec<f64>> {
        parse_list(key, &s.required(key, flag)?)
    };
    let ds: Vec<usize> = parse_list("d", &s.required::<String>("d", a.d)?)?;
    let vs = list("V", a.volume)?;
    let taus = list("tau", a.tau)?;
    let epss = list("eps", a.eps)?;
    let deltas: Vec<f64> = parse_list("delta", &s.or("delta", a.delta, "0.1".to_string())?)?;
    let cs: Vec<f64> = parse_list("C", &s.or("C", a.c, "1".to_string())?)?;
    let k_flag: Option<usize> = s.get("k", a.k)?;
    let l: usize = s.or("l", a.l, 1)?;
    let mut table = String::from("d,V,tau,eps,delta,C,U_G,s_G,k,l,fat,chaining\n");
    for &d in &ds {
        for &v in &vs {
            for &tau in &taus {
                for &eps in &epss {
                    for &delta in &deltas {
                        for &c in &cs {
                            let p = BoundParams::new(d, v, tau, eps, delta)
                                .and_then(|p| p.with_c(c))
                                .map_err(|e| e.to_string())?;
                            let u = covering_bound(&p, eps).map_err(|e| e.to_string())?;
                            let sg = sample_complexity(&p).map_err(|e| e.to_string())?;
                            let k = k_flag
                                .unwrap_or_else(|| u.ceil().min(usize::MAX as f64) as usize)
                                .max(1);
                            let fat = fat_bound_maxmin(k, l, eps, c);
                            let samples = sg.ceil().clamp(1.0, usize::MAX as f64) as usize;
                            let chain = chaining_bound_scaled(
                                &FatProfile::maxmin(k, l, c),
                                eps,
                                samples,
                                1.0,
                            )
                            .map_err(|e| e.to_string())?;
                            table.push_str(&format!(
                                "{d},{v},{tau},{eps},{delta},{c},{u:.10e},{sg:.10e},{k},{l},{fat:.10e},{chain:.10e}\n"
                            ));
                        }
                    }
                }
            }
        }
    }
    write_output(None, table.trim_end())?;
    Ok(0)
}

fn kplanes(a: KplanesArgs) -> CliResult<u8> {
    let s = Settings::load(
        a.config.as_deref(),
        &[
            "input",
            "weights",
            "k",
            "d",
            "restarts",
            "max-iters",
            "seed",
            "out",
            "assignments",
        ],
    )?;
    let input: PathBuf = s.required("input", a.input)?;
    let cloud = io::load(&input, s.flag("weights", a.weights)?)
        .map_err(|e| format!("{}: {e}", input.display()))?;
    let fit = fit_kplanes(
        &cloud,
        s.required("k", a.k)?,
        s.required("d", a.d)?,
        s.or("restarts", a.restarts, 5)?,
        s.or("max-iters", a.max_iters, 100)?,
        s.or("seed", a.seed, 0)?,
    )
    .map_err(|e| e.to_string())?;
    let mut json = fit.model.to_json();
    json["loss"] = serde_json::json!(fit.loss);
    json["restart"] = serde_json::json!(fit.restart);
    json["loss_trace"] = serde_json::json!(fit.loss_trace);
    let out: Option<PathBuf> = s.get("out", a.out)?;
    write_output(
        out.as_deref(),
        &serde_json::to_string_pretty(&json).map_err(|e| e.to_string())?,
    )?;
    if let Some(p) = s.get::<PathBuf>("assignments", a.assignments)? {
        let mut text = String::new();
        for x in cloud.points() {
            let (_, i) = fit.model.nearest(x);
            let row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            text.push_str(&format!("{},{i}\n", row.join(",")));
        }
        write_output(Some(&p), &text)?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Gen(a) => gen(a),
        Command::Bounds(a) => bounds(a),
        Command::Kplanes(a) => kplanes(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
