use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use gxlab_core::bandit::{self, BanditArms};
use gxlab_core::dynamics::{self, DPConfig, KernelSet, Normalization, PathFunctional};
use gxlab_core::experiments::{self, to_csv, ExperimentConfig, Preset, VolatilitySpec};
use gxlab_core::gheat::{self, Boundary, GHeatError, GNormalParams, PDEConfig};
use gxlab_core::grid::fmt17;
use gxlab_core::variance;
use gxlab_core::{AmbiguitySet, PiecewiseFunction};
use serde::Serialize;
use serde_json::json;

use crate::{read_file, CliError, Report};

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Mean bounds and upper/lower variance of an ambiguity set.
    Variance(VarianceArgs),
    /// Hull member with a prescribed variance.
    Achieve(AchieveArgs),
    /// Worst-case kernel dynamic program.
    Dp(DpArgs),
    /// G-heat solve; prints E_G[φ(ξ)].
    Gheat(GheatArgs),
    /// Upper distribution function of the G-normal law.
    Cdf(CdfArgs),
    /// Interval capacity bracket, optionally against the DP for a set.
    Capacity(CapacityArgs),
    /// Central limit theorem convergence table.
    Clt(CltArgs),
    /// Law of large numbers convergence table.
    Lln(LlnArgs),
    /// Heavy-tailed family where the limit fails.
    Counterexample(CounterexampleArgs),
    /// Monte Carlo under an adapted volatility.
    Mc(McArgs),
    /// Optimal 0/1 strategy for the two-armed bandit.
    Bandit(BanditArgs),
    /// Strategy DP, hull DP and G-heat limit for the bandit.
    BanditClt(BanditCltArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SetArgs {
    /// Ambiguity set JSON file.
    #[arg(long)]
    pub measures: Option<PathBuf>,
    /// Named set: zero-mean-uniforms, mean-uncertain, binary, two-point.
    #[arg(long, conflicts_with = "measures")]
    pub preset: Option<String>,
}

impl SetArgs {
    fn load(&self) -> Result<AmbiguitySet, CliError> {
        match (&self.measures, &self.preset) {
            (Some(path), _) => AmbiguitySet::from_json(&read_file(path)?).map_err(CliError::domain),
            (None, Some(name)) => Preset::parse(name)
                .map(Preset::ambiguity_set)
                .ok_or_else(|| CliError::InvalidConfig(format!("unknown preset `{name}`"))),
            (None, None) => Err(CliError::Usage("one of --measures or --preset is required".into())),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.01)]
    pub state_step: f64,
    /// State grid halfwidth; chosen from the set when omitted.
    #[arg(long)]
    pub halfwidth: Option<f64>,
    #[arg(long, default_value_t = 1.0 / 64.0)]
    pub simplex_resolution: f64,
    /// Fail with GridTooCoarse if halving the grids moves the value more.
    #[arg(long)]
    pub refinement_tol: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub pde_dx: f64,
}

impl GridArgs {
    fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            state_step: self.state_step,
            simplex_resolution: self.simplex_resolution,
            state_halfwidth: self.halfwidth,
            refinement_tolerance: self.refinement_tol,
            pde_dx: self.pde_dx,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct VarianceArgs {
    #[command(flatten)]
    pub set: SetArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AchieveArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub sigma2: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DpArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub phi: String,
    /// Adds ψ(max of the path) to the terminal functional.
    #[arg(long)]
    pub running_max: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// clt_centered, lln_mean or raw.
    #[arg(long, default_value = "clt_centered")]
    pub normalization: String,
    /// auto, hull or extremes.
    #[arg(long, default_value = "auto")]
    pub kernels: String,
    /// Report the lower expectation instead of the upper one.
    #[arg(long)]
    pub lower: bool,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GheatArgs {
    #[arg(long)]
    pub sigma2_low: f64,
    #[arg(long)]
    pub sigma2_high: f64,
    #[arg(long)]
    pub phi: String,
    #[arg(long, default_value_t = 0.01)]
    pub dx: f64,
    /// Time step; the largest stable one when omitted.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub halfwidth: Option<f64>,
    /// linear_extrapolation or clamp.
    #[arg(long, default_value = "linear_extrapolation")]
    pub boundary: String,
}

#[derive(Debug, Args, Serialize)]
pub struct CdfArgs {
    #[arg(long)]
    pub sigma2_low: f64,
    #[arg(long)]
    pub sigma2_high: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub x: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    #[arg(long)]
    pub sigma2_low: Option<f64>,
    #[arg(long)]
    pub sigma2_high: Option<f64>,
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Step counts for the DP side; needs a set.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CltArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub phi: String,
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100")]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct LlnArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub phi: String,
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100,200")]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CounterexampleArgs {
    #[arg(long, default_value_t = 1000)]
    pub k_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = experiments::DEFAULT_STATE_CAP)]
    pub state_cap: usize,
    #[arg(long, default_value_t = 0.01)]
    pub pde_dx: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct McArgs {
    #[command(flatten)]
    pub set: SetArgs,
    /// constant(σ), constant (σ = √V̄), bang_bang(threshold) or bang_bang.
    #[arg(long, default_value = "constant")]
    pub volatility: String,
    #[arg(long)]
    pub phi: String,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct BanditArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// φ applied to the terminal reward sum.
    #[arg(long, default_value = "pwl:0,0;sl=1,sr=1")]
    pub objective: String,
    /// Adds ψ(max of the reward sums).
    #[arg(long)]
    pub running_max: Option<String>,
    #[arg(long, default_value_t = bandit::DEFAULT_STATE_CAP)]
    pub state_cap: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct BanditCltArgs {
    #[command(flatten)]
    pub set: SetArgs,
    #[arg(long)]
    pub phi: String,
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100")]
    pub n: Vec<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

fn phi(spec: &str) -> Result<PiecewiseFunction, CliError> {
    PiecewiseFunction::parse(spec).map_err(CliError::domain)
}

fn functional(terminal: &str, running_max: &Option<String>) -> Result<PathFunctional, CliError> {
    let terminal = phi(terminal)?;
    Ok(match running_max {
        None => PathFunctional::Terminal(terminal),
        Some(spec) => PathFunctional::TerminalAndMax {
            terminal,
            running_max: phi(spec)?,
        },
    })
}

fn g_params(low: f64, high: f64) -> Result<GNormalParams, CliError> {
    GNormalParams::new(low, high).map_err(CliError::domain)
}

/// `name(value)` or bare `name`.
fn call_syntax(spec: &str) -> Option<(&str, Option<f64>)> {
    let spec = spec.trim();
    match spec.split_once('(') {
        None => Some((spec, None)),
        Some((name, rest)) => {
            let inner = rest.strip_suffix(')')?;
            Some((name.trim(), Some(inner.trim().parse().ok()?)))
        }
    }
}

fn volatility(spec: &str, vbar: f64) -> Result<VolatilitySpec, CliError> {
    match call_syntax(spec) {
        Some(("constant", v)) => Ok(VolatilitySpec::Constant(v.unwrap_or(vbar.sqrt()))),
        Some(("bang_bang", t)) => Ok(VolatilitySpec::BangBang(t.unwrap_or(0.0))),
        _ => Err(CliError::InvalidConfig(format!(
            "volatility must be constant(σ) or bang_bang(threshold), got `{spec}`"
        ))),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Variance(_) => "variance",
            Self::Achieve(_) => "achieve",
            Self::Dp(_) => "dp",
            Self::Gheat(_) => "gheat",
            Self::Cdf(_) => "cdf",
            Self::Capacity(_) => "capacity",
            Self::Clt(_) => "clt",
            Self::Lln(_) => "lln",
            Self::Counterexample(_) => "counterexample",
            Self::Mc(_) => "mc",
            Self::Bandit(_) => "bandit",
            Self::BanditClt(_) => "bandit-clt",
        }
    }

    pub fn execute(&self, seed: u64) -> Result<Report, CliError> {
        match self {
            Self::Variance(a) => variance_cmd(a),
            Self::Achieve(a) => achieve_cmd(a),
            Self::Dp(a) => dp_cmd(a),
            Self::Gheat(a) => gheat_cmd(a),
            Self::Cdf(a) => cdf_cmd(a),
            Self::Capacity(a) => capacity_cmd(a),
            Self::Clt(a) => {
                let rows = experiments::run_clt(&a.set.load()?, &phi(&a.phi)?, &a.n, &a.grid.experiment())
                    .map_err(CliError::domain)?;
                Ok(table_report(&rows, to_csv(&rows)))
            }
            Self::Lln(a) => {
                let rows = experiments::run_lln(&a.set.load()?, &phi(&a.phi)?, &a.n, &a.grid.experiment())
                    .map_err(CliError::domain)?;
                Ok(table_report(&rows, to_csv(&rows)))
            }
            Self::Counterexample(a) => {
                let r = experiments::run_counterexample(a.k_max, &a.n, a.state_cap, a.pde_dx)
                    .map_err(CliError::domain)?;
                let csv = to_csv(&r.rows);
                let mut stdout = csv.clone();
                let _ = writeln!(
                    stdout,
                    "upper_second_moment={} lower_second_moment={}",
                    num(r.upper_second_moment),
                    num(r.lower_second_moment)
                );
                Ok(Report {
                    stdout,
                    csv,
                    results: json!(r),
                })
            }
            Self::Mc(a) => mc_cmd(a, seed),
            Self::Bandit(a) => bandit_cmd(a),
            Self::BanditClt(a) => {
                let arms = BanditArms::from_arms(a.set.load()?.extremes().to_vec()).map_err(CliError::domain)?;
                let rows = bandit::bandit_clt(&arms, &phi(&a.phi)?, &a.n, &a.grid.experiment())
                    .map_err(CliError::domain)?;
                let env = bandit::bandit_envelope(&arms);
                let mut report = table_report(&rows, to_csv(&rows));
                report.results = json!({ "rows": rows, "envelope": env });
                Ok(report)
            }
        }
    }
}

fn table_report<R: Serialize>(rows: &[R], csv: String) -> Report {
    Report {
        stdout: csv.clone(),
        results: json!({ "rows": rows }),
        csv,
    }
}

fn variance_cmd(a: &VarianceArgs) -> Result<Report, CliError> {
    let set = a.set.load()?;
    let env = variance::envelope(&set);
    let m = env.means;
    let stdout = format!(
        "mu_low={} mu_high={} var_low={} var_high={}\n",
        num(m.lower),
        num(m.upper),
        num(env.lower),
        num(env.upper)
    );
    let mut csv = String::from("quantity,value\n");
    for (k, v) in [
        ("mu_low", m.lower),
        ("mu_high", m.upper),
        ("var_low", env.lower),
        ("var_high", env.upper),
        ("argmin_mu_upper", env.argmin_mu_upper),
    ] {
        let _ = writeln!(csv, "{k},{}", fmt17(v));
    }
    Ok(Report {
        stdout,
        csv,
        results: json!(env),
    })
}

fn achieve_cmd(a: &AchieveArgs) -> Result<Report, CliError> {
    let set = a.set.load()?;
    let got = variance::achieve_variance(&set, a.sigma2).map_err(CliError::domain)?;
    let lambda: Vec<String> = got.lambda.as_slice().iter().map(|l| num(*l)).collect();
    let stdout = format!(
        "c={} lambda=[{}] variance={}\n",
        num(got.c),
        lambda.join(","),
        num(variance::variance_of(&got.measure))
    );
    let mut csv = String::from("atom,weight\n");
    for (x, w) in got.measure.atoms().iter().zip(got.measure.weights()) {
        let _ = writeln!(csv, "{},{}", fmt17(*x), fmt17(*w));
    }
    Ok(Report {
        stdout,
        csv,
        results: json!(got),
    })
}

fn dp_cmd(a: &DpArgs) -> Result<Report, CliError> {
    let set = a.set.load()?;
    let f = functional(&a.phi, &a.running_max)?;
    let normalization = Normalization::parse(&a.normalization)
        .ok_or_else(|| CliError::InvalidConfig(format!("unknown normalization `{}`", a.normalization)))?;
    let kernels = match a.kernels.as_str() {
        "auto" => KernelSet::Auto,
        "hull" => KernelSet::Hull,
        "extremes" => KernelSet::Extremes,
        other => return Err(CliError::InvalidConfig(format!("unknown kernel set `{other}`"))),
    };
    let mut cfg = DPConfig::new(a.n, normalization)
        .with_state_step(a.grid.state_step)
        .with_simplex_resolution(a.grid.simplex_resolution)
        .with_kernels(kernels);
    cfg.state_halfwidth = a.grid.halfwidth;
    cfg.refinement_tolerance = a.grid.refinement_tol;
    let (value, target) = if a.lower {
        let v = dynamics::dp_lower_expectation(&set, &f, &cfg).map_err(CliError::domain)?;
        (v, f.neg())
    } else {
        (dynamics::dp_upper_expectation(&set, &f, &cfg).map_err(CliError::domain)?, f.clone())
    };
    let vf = dynamics::dp_value_function(&set, &target, &cfg).map_err(CliError::domain)?;
    let halfwidth = cfg.state_halfwidth.unwrap_or_else(|| cfg.default_halfwidth(&set));
    Ok(Report {
        stdout: format!("value={}\n", num(value)),
        csv: vf.to_csv(),
        results: json!({
            "value": value,
            "bound": if a.lower { "lower" } else { "upper" },
            "state_halfwidth": halfwidth,
            "grid_min": vf.grid_min(),
            "grid_max": vf.grid_max(),
        }),
    })
}

fn gheat_cmd(a: &GheatArgs) -> Result<Report, CliError> {
    let p = g_params(a.sigma2_low, a.sigma2_high)?;
    let mut cfg = PDEConfig::for_params(&p, a.dx);
    if let Some(dt) = a.dt {
        cfg.dt = dt;
    }
    if let Some(h) = a.halfwidth {
        cfg.halfwidth = h;
    }
    cfg.boundary = Boundary::parse(&a.boundary)
        .ok_or_else(|| CliError::InvalidConfig(format!("unknown boundary `{}`", a.boundary)))?;
    let slice = gheat::solve_g_heat(&phi(&a.phi)?, &p, &cfg).map_err(CliError::domain)?;
    let value = slice.at_node(0.0);
    Ok(Report {
        stdout: format!("{}\n", num(value)),
        csv: slice.to_csv_xu(),
        results: json!({ "value": value, "pde": cfg, "time_steps": cfg.time_steps() }),
    })
}

fn cdf_cmd(a: &CdfArgs) -> Result<Report, CliError> {
    let p = g_params(a.sigma2_low, a.sigma2_high)?;
    let mut csv = String::from("x,cdf,degenerate\n");
    let mut rows = Vec::new();
    for &x in &a.x {
        let (value, degenerate) = match gheat::g_normal_cdf(&p, x) {
            Ok(v) => (v, false),
            Err(GHeatError::DegenerateSigmaLow { limit, .. }) => (limit, true),
            Err(e) => return Err(CliError::domain(e)),
        };
        let _ = writeln!(csv, "{},{},{degenerate}", fmt17(x), fmt17(value));
        rows.push(json!({ "x": x, "cdf": value, "degenerate": degenerate }));
    }
    Ok(Report {
        stdout: csv.clone(),
        csv,
        results: json!({ "rows": rows }),
    })
}

fn capacity_cmd(a: &CapacityArgs) -> Result<Report, CliError> {
    if a.set.measures.is_some() || a.set.preset.is_some() {
        let set = a.set.load()?;
        if a.n.is_empty() {
            return Err(CliError::Usage("--n is required when a set is given".into()));
        }
        let rows = experiments::run_capacity_clt(&set, a.a, a.b, a.eps, &a.n, &a.grid.experiment())
            .map_err(CliError::domain)?;
        return Ok(table_report(&rows, to_csv(&rows)));
    }
    let (Some(low), Some(high)) = (a.sigma2_low, a.sigma2_high) else {
        return Err(CliError::Usage(
            "give --sigma2-low and --sigma2-high, or a set with --measures/--preset".into(),
        ));
    };
    let p = g_params(low, high)?;
    let (lower, upper) = gheat::interval_capacity(&p, a.a, a.b, a.eps).map_err(CliError::domain)?;
    let closed = if a.a == f64::NEG_INFINITY {
        match gheat::g_normal_cdf(&p, a.b) {
            Ok(v) => Some(v),
            Err(GHeatError::DegenerateSigmaLow { limit, .. }) => Some(limit),
            Err(e) => return Err(CliError::domain(e)),
        }
    } else {
        None
    };
    let closed_txt = closed.map(fmt17).unwrap_or_default();
    let csv = format!(
        "a,b,eps,lower,upper,closed_form\n{},{},{},{},{},{closed_txt}\n",
        fmt17(a.a),
        fmt17(a.b),
        fmt17(a.eps),
        fmt17(lower),
        fmt17(upper)
    );
    let mut stdout = format!("lower={} upper={}", num(lower), num(upper));
    if let Some(c) = closed {
        let _ = write!(stdout, " closed_form={}", num(c));
    }
    stdout.push('\n');
    Ok(Report {
        stdout,
        csv,
        results: json!({ "lower": lower, "upper": upper, "closed_form": closed }),
    })
}

fn mc_cmd(a: &McArgs, seed: u64) -> Result<Report, CliError> {
    let set = a.set.load()?;
    let vbar = variance::envelope(&set).upper;
    let spec = volatility(&a.volatility, vbar)?;
    let r = experiments::run_volatility_mc(&set, spec, &phi(&a.phi)?, a.n, a.paths, seed).map_err(CliError::domain)?;
    let csv = format!(
        "volatility,n,paths,estimate,stderr\n{},{},{},{},{}\n",
        spec.render(),
        a.n,
        a.paths,
        fmt17(r.estimate),
        fmt17(r.stderr)
    );
    Ok(Report {
        stdout: format!("estimate={} stderr={}\n", num(r.estimate), num(r.stderr)),
        csv,
        results: json!({ "estimate": r.estimate, "stderr": r.stderr, "volatility": spec }),
    })
}

fn bandit_cmd(a: &BanditArgs) -> Result<Report, CliError> {
    let set = match (&a.set.measures, &a.set.preset) {
        (None, None) => Preset::TwoPoint.ambiguity_set(),
        _ => a.set.load()?,
    };
    let arms = BanditArms::from_arms(set.extremes().to_vec()).map_err(CliError::domain)?;
    let env = bandit::bandit_envelope(&arms);
    let f = functional(&a.objective, &a.running_max)?;
    let value = bandit::optimal_strategy_value(&arms, a.n, &f, a.state_cap).map_err(CliError::domain)?;
    let mut stdout = format!(
        "value={} mu_low={} mu_high={} var_low={} var_high={}",
        num(value.value),
        num(env.means.lower),
        num(env.means.upper),
        num(env.sigma2_low),
        num(env.sigma2_high)
    );
    if let Some(c) = env.closed_form_sigma2_high {
        let _ = write!(stdout, " closed_form_var_high={} closed_form_applies={}", num(c), env.closed_form_applies);
    }
    stdout.push('\n');
    Ok(Report {
        stdout,
        csv: value.decisions_csv(),
        results: json!({ "value": value.value, "envelope": env }),
    })
}
