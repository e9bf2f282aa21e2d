//! `hhk`: solve, simulate and verify the stationary consumption problem.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 ill-posed model,
//! 3 verification failure.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hhk::gexp::{gexp_eval, Orientation, Payoff};
use hhk::model::{derive, validate, Regime};
use hhk::stationary::{abstention_solve, comparative_statics, present_value, solve, StaticsQuantity};
use hhk::tracking::{girsanov_density, level_path_lk, simulate_brownian, track};
use hhk::verify::abstention::abstention_check;
use hhk::verify::backward::{backward_check, klm_relation};
use hhk::verify::e77::e77_convergence;
use hhk::verify::fixedpoint::fixed_point_check;
use hhk::verify::foc::foc_check;
use hhk::verify::worstcase::worstcase_search;
use hhk::verify::{MCConfig, NestedConfig};
use hhk::{Decay, Driver, Error, Lattice, ModelParams, TimeGrid};

const VERSION: &str = env!("CARGO_PKG_VERSION");

const EXIT_USAGE: u8 = 1;
const EXIT_ILL_POSED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

/// Column order of `simulate`; fixed so plotting scripts can rely on it.
const SIMULATE_COLUMNS: &str = "path,t,B,eps_a,eps_b,L,Y,C,V";

#[derive(Parser, Debug)]
#[command(name = "hhk", version, about = "Optimal HHK consumption under Knightian uncertainty")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// JSON file with `params` and optional `mc` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form solution: K, phi, psi, pi and the regime.
    Solve {
        /// Also estimate the multiplier M by Monte Carlo.
        #[arg(long)]
        multiplier: bool,
    },
    /// Optimal paths as CSV.
    Simulate,
    /// Monte Carlo and lattice checks of the optimality conditions.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
    /// Comparative statics of the portfolio.
    Statics {
        #[arg(value_enum)]
        quantity: Quantity,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// g-expectations on the binomial lattice.
    Gexp {
        #[command(subcommand)]
        op: GexpOp,
    },
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Check {
    Foc {
        /// Multiplies the plan's K; 1 is the optimum, other values are negative controls.
        #[arg(long, default_value_t = 1.0)]
        k_scale: f64,
        #[arg(long)]
        outer_paths: Option<usize>,
        #[arg(long)]
        inner_paths: Option<usize>,
    },
    Worstcase {
        #[arg(long, default_value_t = 50)]
        candidates: usize,
    },
    Backward,
    E77 {
        #[arg(long, default_value_t = 8)]
        coarsest: u32,
        #[arg(long, default_value_t = 12)]
        finest: u32,
    },
    Fixedpoint {
        #[arg(long, default_value_t = 12)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        iterations: usize,
    },
    Abstention {
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Quantity {
    Sigma,
    Riskaversion,
    Spread,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum GexpOp {
    Eval {
        #[arg(long, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        hi: f64,
        #[arg(long, value_enum, default_value = "inf")]
        orientation: OrientationArg,
        #[arg(long, default_value_t = 10)]
        n_steps: usize,
        #[arg(long, value_enum, default_value = "terminal-b")]
        payoff: PayoffArg,
        /// Strike of the ramp payoff.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        strike: f64,
        /// Threshold of the indicator payoff.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        level: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OrientationArg {
    Inf,
    Sup,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PayoffArg {
    TerminalB,
    Ramp,
    Indicator,
}

/// Everything a run depends on; echoed into every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RunConfig {
    #[serde(default = "ModelParams::reference")]
    params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mc: Option<MCConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    format: Option<Format>,
}

enum Failure {
    Usage(String),
    Model(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = Result<bool, Failure>;

fn load_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))?
        }
        None => RunConfig {
            params: ModelParams::reference(),
            mc: None,
            out_path: None,
            format: None,
        },
    };
    if common.out.is_some() {
        cfg.out_path = common.out.clone();
    }
    if common.format.is_some() {
        cfg.format = common.format;
    }
    Ok(cfg)
}

/// Command defaults, then the config file, then flags.
fn mc_config(run: &RunConfig, common: &CommonArgs, default: MCConfig) -> Result<MCConfig, Failure> {
    let mut mc = run.mc.unwrap_or(default);
    if let Some(s) = common.seed {
        mc.seed = s;
    }
    if let Some(n) = common.paths {
        mc.n_paths = n;
    }
    if let Some(dt) = common.dt {
        mc.dt = dt;
    }
    if common.horizon.is_some() {
        mc.horizon = common.horizon;
    }
    mc.validate()?;
    Ok(mc)
}

fn header_lines(config: &Value) -> String {
    format!("# hhk {VERSION}\n# config: {config}\n")
}

fn emit(run: &RunConfig, body: &str) -> io::Result<()> {
    match &run.out_path {
        Some(path) => fs::write(path, body),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()
        }
    }
}

fn emit_json(run: &RunConfig, config: Value, mut report: Value) -> io::Result<()> {
    if let Value::Object(map) = &mut report {
        map.insert("version".into(), json!(VERSION));
        map.insert("config".into(), config);
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    emit(run, &text)
}

fn cmd_solve(run: &RunConfig, common: &CommonArgs, multiplier: bool) -> Outcome {
    let p = &run.params;
    let v = validate(p)?;
    let mut report = match v.regime() {
        Regime::Standard => {
            let d = derive(&v)?;
            let mut sol = solve(&d);
            let mut extra = Value::Null;
            if multiplier {
                let mc = mc_config(run, common, MCConfig::default())?;
                let m = klm_relation(p, d.k, &mc)?;
                sol.m = Some(m.mean);
                extra = json!({ "mSe": m.stderr, "mc": mc });
            }
            let mut r = serde_json::to_value(sol).unwrap();
            if !extra.is_null() {
                r["multiplierEstimate"] = extra;
            }
            r
        }
        Regime::Abstention(_) => {
            let sol = abstention_solve(p)?;
            json!({
                "k": sol.k,
                "m": sol.m,
                "phi": sol.utility_quadrature(),
                "psi": sol.discounted_cost_closed(),
                "pi": 0.0,
                "regime": v.regime(),
                "case": sol.case,
                "initialGulp": sol.initial_gulp(),
            })
        }
    };
    report["regimeName"] = json!(v.regime().label());
    emit_json(run, json!({ "params": p }), report)?;
    Ok(true)
}

fn cmd_simulate(run: &RunConfig, common: &CommonArgs) -> Outcome {
    let p = &run.params;
    let d = derive(&validate(p)?)?;
    let default = MCConfig {
        n_paths: 100,
        dt: 1.0 / 256.0,
        horizon: Some(10.0),
        ..MCConfig::default()
    };
    let mut mc = run.mc.unwrap_or(default);
    if let Some(s) = common.seed {
        mc.seed = s;
    }
    if let Some(n) = common.paths {
        mc.n_paths = n;
    }
    if let Some(dt) = common.dt {
        mc.dt = dt;
    }
    if common.horizon.is_some() {
        mc.horizon = common.horizon;
    }
    if mc.n_paths == 0 {
        return Err(Failure::Usage("--paths must be positive".into()));
    }
    let horizon = mc.horizon.unwrap_or(10.0);
    let grid = TimeGrid::new(horizon, mc.dt)?;
    let config = json!({ "params": p, "nPaths": mc.n_paths, "dt": grid.dt, "horizon": grid.horizon(), "seed": mc.seed });
    let mut text = header_lines(&config);
    text.push_str("# V is the present value of consumption from t on, before the consumption at t\n");
    text.push_str(SIMULATE_COLUMNS);
    text.push('\n');
    let decay = Decay::Constant(p.beta);
    for path in 0..mc.n_paths {
        let b = simulate_brownian(&grid, mc.seed, path as u64);
        let eps_a = girsanov_density(&b, &vec![p.a; grid.n_steps], grid.dt, p.a, p.a)?;
        let eps_b = girsanov_density(&b, &vec![p.b; grid.n_steps], grid.dt, p.b, p.b)?;
        let level = level_path_lk(&b, &grid, d.k, &d)?;
        let (y, c) = track(&level, &grid, p.eta, &decay);
        let mut prev_c = 0.0;
        for k in 0..grid.len() {
            let t = grid.t(k);
            let y_before = y[k] - p.beta * (c[k] - prev_c);
            prev_c = c[k];
            let v = present_value(t, b[k], y_before, &d);
            text.push_str(&format!(
                "{path},{t},{},{},{},{},{},{},{}\n",
                b[k], eps_a[k], eps_b[k], level[k], y[k], c[k], v
            ));
        }
    }
    emit(run, &text)?;
    Ok(true)
}

fn check_report(run: &RunConfig, check: &str, pass: bool, margin: f64, se: f64, config: Value, details: Value) -> Outcome {
    let report = json!({
        "check": check,
        "pass": pass,
        "margin": margin,
        "se": se,
        "details": details,
    });
    emit_json(run, config, report)?;
    Ok(pass)
}

fn cmd_verify(run: &RunConfig, common: &CommonArgs, check: Check) -> Outcome {
    let p = &run.params;
    match check {
        Check::Foc {
            k_scale,
            outer_paths,
            inner_paths,
        } => {
            let d = derive(&validate(p)?)?;
            let mut nested = NestedConfig::default();
            if let Some(n) = outer_paths {
                nested.outer_paths = n;
            }
            if let Some(n) = inner_paths {
                nested.inner_paths = n;
            }
            let default = MCConfig {
                nested: Some(nested),
                ..MCConfig::default()
            };
            let mut mc = mc_config(run, common, default)?;
            if mc.nested.is_none() || outer_paths.is_some() || inner_paths.is_some() {
                mc.nested = Some(nested);
            }
            let r = foc_check(&d, k_scale * d.k, &mc)?;
            let config = json!({ "params": p, "mc": mc, "kScale": k_scale });
            let details = json!({
                "kPlan": r.k_plan,
                "k": r.k,
                "m": r.m,
                "condition1": { "pass": r.condition1_pass(), "margin": r.budget_margin, "cost": r.budget.direct },
                "condition2": {
                    "pass": r.condition2_pass(),
                    "margin": r.condition2.margin,
                    "points": r.condition2.points.len(),
                    "consumptionPoints": r.condition2.consumption_points,
                    "strictPoints": r.condition2.strict_points,
                },
                "condition3": { "pass": r.condition3_pass(), "detail": r.condition3 },
                "verdict": r.verdict().err().map(|e| e.to_string()),
            });
            check_report(run, "foc", r.pass(), r.margin(), r.condition3.joint_se, config, details)
        }
        Check::Worstcase { candidates } => {
            let d = derive(&validate(p)?)?;
            let default = MCConfig {
                n_paths: 2000,
                dt: 1.0 / 64.0,
                ..MCConfig::default()
            };
            let mc = mc_config(run, common, default)?;
            let r = worstcase_search(&d, d.k, candidates, mc.seed, &mc)?;
            let se = r.candidates.iter().map(|c| c.advantage_se).fold(0.0, f64::max);
            let config = json!({ "params": p, "mc": mc, "candidates": candidates });
            let details = json!({
                "horizon": r.horizon,
                "utilityReference": r.utility_reference,
                "costReference": r.cost_reference,
                "violations": r.violations,
                "worst": r.worst(),
                "verdict": r.verdict().err().map(|e| e.to_string()),
            });
            check_report(run, "worstcase", r.pass(), r.min_margin, se, config, details)
        }
        Check::Backward => {
            let d = derive(&validate(p)?)?;
            let default = MCConfig {
                n_paths: 20_000,
                dt: 1.0 / 128.0,
                ..MCConfig::default()
            };
            let mc = mc_config(run, common, default)?;
            let r = backward_check(p, d.k, &mc)?;
            let config = json!({ "params": p, "mc": mc });
            check_report(run, "backward", r.pass(), r.margin(), r.m.stderr, config, serde_json::to_value(&r).unwrap())
        }
        Check::E77 { coarsest, finest } => {
            let d = derive(&validate(p)?)?;
            let seed = common.seed.or(run.mc.map(|m| m.seed)).unwrap_or(MCConfig::default().seed);
            let paths = common.paths.unwrap_or(500);
            let horizon = common.horizon.unwrap_or(2.0);
            let r = e77_convergence(&d, d.k, p.a, horizon, paths, coarsest, finest, seed)?;
            let config = json!({ "params": p, "seed": seed, "nPaths": paths, "horizon": horizon, "coarsest": coarsest, "finest": finest });
            check_report(run, "e77", r.pass(), r.margin(), 0.0, config, serde_json::to_value(&r).unwrap())
        }
        Check::Fixedpoint { steps, iterations } => {
            let d = derive(&validate(p)?)?;
            let horizon = common.horizon.unwrap_or(1.0);
            let r = fixed_point_check(&d, d.k, steps, horizon, iterations)?;
            let config = json!({ "params": p, "steps": steps, "horizon": horizon, "iterations": iterations });
            check_report(run, "fixedpoint", r.pass(), r.margin(), 0.0, config, serde_json::to_value(&r).unwrap())
        }
        Check::Abstention { seeds } => {
            let default = MCConfig {
                n_paths: 4000,
                dt: 1.0 / 128.0,
                ..MCConfig::default()
            };
            let mc = mc_config(run, common, default)?;
            let r = abstention_check(p, seeds, &mc)?;
            let config = json!({ "params": p, "mc": mc, "seeds": seeds });
            check_report(run, "abstention", r.pass(), r.margin(), r.utility.stderr, config, serde_json::to_value(&r).unwrap())
        }
    }
}

fn cmd_statics(run: &RunConfig, quantity: Quantity, points: usize) -> Outcome {
    let q = match quantity {
        Quantity::Sigma => StaticsQuantity::Sigma,
        Quantity::Riskaversion => StaticsQuantity::RiskAversion,
        Quantity::Spread => StaticsQuantity::Spread,
    };
    let r = comparative_statics(&run.params, q, points)?;
    let config = json!({ "params": run.params, "quantity": q, "points": points });
    if run.format == Some(Format::Json) {
        emit_json(run, config, serde_json::to_value(&r).unwrap())?;
    } else {
        let mut text = header_lines(&config);
        text.push_str(&format!("# param is {}\n", q.column()));
        text.push_str("param,pi\n");
        for (x, pi) in &r.points {
            text.push_str(&format!("{x},{pi}\n"));
        }
        emit(run, &text)?;
    }
    Ok(true)
}

fn cmd_gexp(run: &RunConfig, common: &CommonArgs, op: GexpOp) -> Outcome {
    let GexpOp::Eval {
        lo,
        hi,
        orientation,
        n_steps,
        payoff,
        strike,
        level,
    } = op;
    let orientation = match orientation {
        OrientationArg::Inf => Orientation::Inf,
        OrientationArg::Sup => Orientation::Sup,
    };
    let payoff = match payoff {
        PayoffArg::TerminalB => Payoff::TerminalB,
        PayoffArg::Ramp => Payoff::Ramp { strike },
        PayoffArg::Indicator => Payoff::Indicator { level },
    };
    let driver = Driver::new(lo, hi, orientation)?;
    let dt = common.dt.unwrap_or(0.05);
    let lattice = Lattice::new(n_steps, dt)?;
    let value = gexp_eval(&driver, |path: &[f64]| payoff.eval(path), &lattice)?;
    let config = json!({ "driver": driver, "lattice": lattice, "payoff": payoff });
    if run.format == Some(Format::Csv) {
        let text = format!("{}value\n{value}\n", header_lines(&config));
        emit(run, &text)?;
    } else {
        emit_json(run, config, json!({ "value": value }))?;
    }
    Ok(true)
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Solve { multiplier } => cmd_solve(&cfg, &cli.common, multiplier),
        Command::Simulate => cmd_simulate(&cfg, &cli.common),
        Command::Verify { check } => cmd_verify(&cfg, &cli.common, check),
        Command::Statics { quantity, points } => cmd_statics(&cfg, quantity, points),
        Command::Gexp { op } => cmd_gexp(&cfg, &cli.common, op),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::IllPosed { .. } => ExitCode::from(EXIT_ILL_POSED),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}
