//! `sos` — operator entry point for the generalized SOS surface toolkit.
//!
//! Subcommands drive the exact engines, the samplers and the analyses, and
//! persist plot-ready CSV/JSON into a run directory named by the hash of
//! the resolved configuration. Exit codes: 0 success, 1 usage, 2
//! validation, 3 runtime cap, 4 verification failure.

mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sos_core::analysis::{compute_h, estimate_tau, HMethod};
use sos_core::contours::{extract_h_contours, open_contour};
use sos_core::error::Error;
use sos_core::exact::{
    enumerate_partition, transfer_matrix, ConstraintSet, Window,
};
use sos_core::lattice::Region;
use sos_core::model::{
    field_from_text, field_to_text, parse_bc_label, BoundaryCondition, Params,
};
use sos_core::rng::CounterRng;
use sos_core::sampler::{estimate_positivity, Chain, SplittingSchedule};

use config::{parse_exponent, parse_i64_list, parse_window, RunConfig, RunDir};

#[derive(Parser)]
#[command(name = "sos", version, about = "Generalized solid-on-solid surface toolkit")]
struct Cli {
    /// key=value configuration file; command-line flags win over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// root directory for run outputs
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the model-driving subcommands. All values are strings so
/// that a configuration file can supply any of them.
#[derive(Args, Default, Clone)]
struct ModelFlags {
    /// gradient exponent p in [1, inf]; "inf" for the restricted model
    #[arg(long)]
    p: Option<String>,
    /// inverse temperature
    #[arg(long)]
    beta: Option<String>,
    /// height window "lo:hi"
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    /// RNG seed
    #[arg(long)]
    seed: Option<String>,
}

impl ModelFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        cfg.set_override("p", self.p.clone());
        cfg.set_override("beta", self.beta.clone());
        cfg.set_override("window", self.window.clone());
        cfg.set_override("seed", self.seed.clone());
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact log partition function on a rectangle
    Exact {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        l: Option<String>,
        #[arg(long)]
        m: Option<String>,
        /// boundary condition: zero | constant:<c> | staircase:a1,..,an/b1,..,bn
        #[arg(long)]
        bc: Option<String>,
        /// auto | enumerate | transfer
        #[arg(long)]
        method: Option<String>,
    },
    /// Run a heat-bath chain and dump the final field plus a summary
    Simulate {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        l: Option<String>,
        #[arg(long)]
        sweeps: Option<String>,
        /// uniform floor (conditioned dynamics) when set
        #[arg(long, allow_hyphen_values = true)]
        floor: Option<String>,
    },
    /// Entropic-repulsion curves over a list of sizes
    Repulsion {
        #[command(flatten)]
        model: ModelFlags,
        /// comma-separated list of L values
        #[arg(long)]
        l: Option<String>,
        #[arg(long)]
        sweeps: Option<String>,
    },
    /// Surface tension at a tilt from staircase ratios
    Tension {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        l: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        #[arg(long)]
        tol: Option<String>,
    },
    /// Large-deviation rate estimates via multilevel splitting
    Rate {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        l: Option<String>,
        /// splitting depth K (floors -1..-K)
        #[arg(long)]
        levels: Option<String>,
        /// sub-steps per unit floor raise
        #[arg(long)]
        refine: Option<String>,
        /// sweeps per splitting stage
        #[arg(long)]
        sweeps: Option<String>,
    },
    /// Extract contours from a stored height field
    Contours {
        /// field file in the plain-text format
        #[arg(long)]
        load: PathBuf,
        /// contour level
        #[arg(long, allow_hyphen_values = true)]
        h: Option<String>,
    },
    /// Run a verification suite: fkg | bijection | oracle | monotonicity | all
    Verify { suite: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version are not usage errors
            use clap::error::ErrorKind::*;
            let _ = e.print();
            return match e.kind() {
                DisplayHelp | DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::CapExceeded { .. } => 3,
                Error::Validation(_) | Error::Parse(_) => 2,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn base_config(cli: &Cli) -> sos_core::Result<RunConfig> {
    match &cli.config {
        Some(path) => RunConfig::from_file(path),
        None => Ok(RunConfig::default()),
    }
}

fn model_params(cfg: &RunConfig) -> sos_core::Result<Params> {
    let p = parse_exponent(cfg.require("p")?)?;
    let beta: f64 = cfg.parse("beta")?;
    Params::new(p, beta)
}

fn run(cli: Cli) -> sos_core::Result<()> {
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Exact { model, l, m, bc, method } => {
            model.apply(&mut cfg);
            cfg.set_override("command", Some("exact".into()));
            cfg.set_override("l", l.clone());
            cfg.set_override("m", m.clone());
            cfg.set_override("bc", bc.clone());
            cfg.set_override("method", method.clone());
            cmd_exact(&cli, &cfg)
        }
        Command::Simulate { model, l, sweeps, floor } => {
            model.apply(&mut cfg);
            cfg.set_override("command", Some("simulate".into()));
            cfg.set_override("l", l.clone());
            cfg.set_override("sweeps", sweeps.clone());
            cfg.set_override("floor", floor.clone());
            cmd_simulate(&cli, &cfg)
        }
        Command::Repulsion { model, l, sweeps } => {
            model.apply(&mut cfg);
            cfg.set_override("command", Some("repulsion".into()));
            cfg.set_override("l", l.clone());
            cfg.set_override("sweeps", sweeps.clone());
            cmd_repulsion(&cli, &cfg)
        }
        Command::Tension { model, l, theta, tol } => {
            model.apply(&mut cfg);
            cfg.set_override("command", Some("tension".into()));
            cfg.set_override("l", l.clone());
            cfg.set_override("theta", theta.clone());
            cfg.set_override("tol", tol.clone());
            cmd_tension(&cli, &cfg)
        }
        Command::Rate { model, l, levels, refine, sweeps } => {
            model.apply(&mut cfg);
            cfg.set_override("command", Some("rate".into()));
            cfg.set_override("l", l.clone());
            cfg.set_override("levels", levels.clone());
            cfg.set_override("refine", refine.clone());
            cfg.set_override("sweeps", sweeps.clone());
            cmd_rate(&cli, &cfg)
        }
        Command::Contours { load, h } => {
            cfg.set_override("command", Some("contours".into()));
            cfg.set_override("load", Some(load.display().to_string()));
            cfg.set_override("h", h.clone());
            cmd_contours(&cli, &cfg, load)
        }
        Command::Verify { suite } => {
            let failures = verify::run_suite(suite)?;
            if failures > 0 {
                eprintln!("{failures} verification propert(ies) failed");
                std::process::exit(4);
            }
            Ok(())
        }
    }
}

fn csv(run: &RunDir, name: &str, header: &str, rows: &[String]) -> sos_core::Result<()> {
    let mut body = format!("{header},manifest\n");
    for r in rows {
        body.push_str(r);
        body.push(',');
        body.push_str(&run.hash);
        body.push('\n');
    }
    let path = run.write(name, &body)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_exact(cli: &Cli, cfg: &RunConfig) -> sos_core::Result<()> {
    let params = model_params(cfg)?;
    let l: i64 = cfg.parse("l")?;
    let m: i64 = cfg.parse_or("m", l)?;
    let bc = parse_bc_label(cfg.get("bc").unwrap_or("zero"), l, m)?;
    let n_steps = match &bc {
        BoundaryCondition::Staircase(st) => st.n(),
        _ => 0,
    };
    let window = match cfg.get("window") {
        Some(w) => parse_window(w)?,
        None => Window::staircase_default(n_steps),
    };
    let method = cfg.get("method").unwrap_or("auto");
    let region = Region::rectangle(l, m)?;
    let value = match method {
        "enumerate" => enumerate_partition(&region, &bc, &params, window, &ConstraintSet::default())?,
        "transfer" => transfer_matrix(l, m, &bc, &params, window, &ConstraintSet::default())?,
        "auto" => {
            match enumerate_partition(&region, &bc, &params, window, &ConstraintSet::default()) {
                Ok(v) => v,
                Err(Error::CapExceeded { .. }) => {
                    transfer_matrix(l, m, &bc, &params, window, &ConstraintSet::default())?
                }
                Err(e) => return Err(e),
            }
        }
        other => return Err(Error::validation(format!("unknown method `{other}`"))),
    };
    let run = RunDir::create(&cli.out, cfg)?;
    let record = serde_json::json!({
        "logZ": value.log_z,
        "window": [window.lo, window.hi],
        "method": format!("{:?}", value.method),
        "params": {"p": params.p.to_string(), "beta": params.beta, "L": l, "M": m,
                    "bc": bc.kind_label()},
        "convergence": serde_json::Value::Null,
        "mean_energy": value.mean_energy,
        "n_states": value.n_states.to_string(),
        "manifest": run.hash,
    });
    run.write("exact.json", &format!("{record}\n"))?;
    run.finish(None)?;
    println!("logZ = {}", value.log_z);
    Ok(())
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig) -> sos_core::Result<()> {
    let params = model_params(cfg)?;
    let l: i64 = cfg.parse("l")?;
    let window = parse_window(cfg.require("window")?)?;
    let sweeps: u64 = cfg.parse("sweeps")?;
    let seed: u64 = cfg.parse_or("seed", 1)?;
    let region = Region::square(l)?;
    let floor: Option<i64> =
        cfg.get("floor").map(|f| f.parse()).transpose().map_err(|_| {
            Error::validation("bad floor value")
        })?;
    let n = region.len();
    let mut chain = match floor {
        Some(f) => Chain::new(
            region,
            BoundaryCondition::Zero,
            params,
            &sos_core::model::WeightRule::Standard,
            window,
            Some(vec![f; n]),
            sos_core::sampler::Start::Flat(f.max(0)),
            CounterRng::new(seed, 0),
        )?,
        None => Chain::zero_bc(region, params, window, CounterRng::new(seed, 0))?,
    };
    let burn = (sweeps as f64 * sos_core::sampler::BURN_IN_FRACTION) as u64;
    chain.run(burn, |_| {})?;
    let mut sum_center = 0.0;
    let mut min_seen = i64::MAX;
    let center = chain.region().site_index(sos_core::lattice::Site::new(0, 0)).unwrap();
    let kept = sweeps - burn;
    chain.run(kept, |c| {
        sum_center += c.heights()[center] as f64;
        min_seen = min_seen.min(c.min_height());
    })?;
    let field = chain.snapshot(BoundaryCondition::Zero)?;
    let run = RunDir::create(&cli.out, cfg)?;
    run.write("field.txt", &field_to_text(&field, &params)?)?;
    let summary = serde_json::json!({
        "sweeps": sweeps,
        "burn_in": burn,
        "mean_central_height": sum_center / kept as f64,
        "min_height_seen": min_seen,
        "seed": seed,
        "manifest": run.hash,
    });
    run.write("summary.json", &format!("{summary}\n"))?;
    run.finish(Some(seed))?;
    println!("mean central height {}", sum_center / kept as f64);
    Ok(())
}

fn cmd_repulsion(cli: &Cli, cfg: &RunConfig) -> sos_core::Result<()> {
    let params = model_params(cfg)?;
    let l_list = parse_i64_list(cfg.require("l")?)?;
    let window = parse_window(cfg.get("window").unwrap_or("-3:3"))?;
    let sweeps: u64 = cfg.parse_or("sweeps", 3000)?;
    let seed: u64 = cfg.parse_or("seed", 1)?;
    let run = RunDir::create(&cli.out, cfg)?;
    let mut rows = Vec::new();
    let mut records = String::new();
    for &l in &l_list {
        let est = compute_h(l, params, HMethod::Mcmc { sweeps, seed }, window)?;
        for pt in &est.curve {
            rows.push(format!("{},{},{},{}", l, pt.h, pt.p, pt.se));
        }
        println!("L={l}: H = {} (threshold {})", est.h, est.threshold);
        records.push_str(&serde_json::to_string(&est).unwrap());
        records.push('\n');
    }
    csv(&run, "repulsion.csv", "L,h,p_hat,err", &rows)?;
    run.write("repulsion.json", &records)?;
    run.finish(Some(seed))?;
    Ok(())
}

fn cmd_tension(cli: &Cli, cfg: &RunConfig) -> sos_core::Result<()> {
    let params = model_params(cfg)?;
    let l_list = parse_i64_list(cfg.require("l")?)?;
    let theta: f64 = cfg.parse_or("theta", 0.0)?;
    let tol: f64 = cfg.parse_or("tol", 1e-6)?;
    let window = parse_window(cfg.get("window").unwrap_or("-1:2"))?;
    let est = estimate_tau(theta, params, &l_list, window, tol)?;
    let run = RunDir::create(&cli.out, cfg)?;
    let rows: Vec<String> =
        est.per_l.iter().map(|p| format!("{},{},{}", p.l, p.tau_l, est.tau)).collect();
    csv(&run, "tension.csv", "L,tau_L,extrapolant", &rows)?;
    run.write("tension.json", &format!("{}\n", serde_json::to_string(&est).unwrap()))?;
    run.finish(None)?;
    println!("tau({theta}) = {} +- {} (converged: {})", est.tau, est.tau_se, est.all_converged);
    Ok(())
}

fn cmd_rate(cli: &Cli, cfg: &RunConfig) -> sos_core::Result<()> {
    let params = model_params(cfg)?;
    let l_list = parse_i64_list(cfg.require("l")?)?;
    let window = parse_window(cfg.get("window").unwrap_or("-4:4"))?;
    let levels: i64 = cfg.parse_or("levels", 3)?;
    let refine: u32 = cfg.parse_or("refine", 4)?;
    let sweeps: u64 = cfg.parse_or("sweeps", 8000)?;
    let seed: u64 = cfg.parse_or("seed", 1)?;
    let schedule = SplittingSchedule::uniform_refined(levels, refine)?;
    // the zero-tilt comparison constant beta * tau from the exact engine
    let tau = estimate_tau(0.0, params, &[2, 3, 4], Window::new(-2, 3).unwrap(), 1e-4)?;
    let beta_tau = params.beta * tau.tau;
    let run = RunDir::create(&cli.out, cfg)?;
    let mut rows = Vec::new();
    for &l in &l_list {
        let region = Region::square(l)?;
        let rec = estimate_positivity(&region, params, window, &schedule, sweeps, seed + l as u64)?;
        let rep = compute_h(l, params, HMethod::Mcmc { sweeps: 3000, seed: seed ^ 0xa5 }, window)?;
        let rate = if rep.h >= 1 {
            format!("{}", -rec.value / (8.0 * l as f64 * rep.h as f64))
        } else {
            String::new()
        };
        println!("L={l}: log P = {} +- {}, H = {}", rec.value, rec.std_error, rep.h);
        rows.push(format!("{},{},{},{},{}", l, rec.value, rep.h, rate, beta_tau));
    }
    csv(&run, "rate.csv", "L,logP,H,rate,beta_tau", &rows)?;
    run.finish(Some(seed))?;
    Ok(())
}

fn cmd_contours(cli: &Cli, cfg: &RunConfig, load: &std::path::Path) -> sos_core::Result<()> {
    let text = std::fs::read_to_string(load)?;
    let (field, _params) = field_from_text(&text)?;
    let level: i64 = cfg.parse_or("h", 1)?;
    let is_single_step = matches!(&field.bc, BoundaryCondition::Staircase(st) if st.n() == 1);
    let run = RunDir::create(&cli.out, cfg)?;
    let json = if is_single_step {
        let oc = open_contour(&field)?;
        serde_json::json!({
            "open": oc.path.to_json(),
            "delta_plus": oc.plus,
            "delta_minus": oc.minus,
            "manifest": run.hash,
        })
    } else {
        let ex = extract_h_contours(&field, level)?;
        println!("{} contours, {} rejected", ex.accepted.len(), ex.rejected.len());
        serde_json::json!({
            "h": level,
            "contours": ex.accepted.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
            "rejected": ex.rejected.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
            "manifest": run.hash,
        })
    };
    run.write("contours.json", &format!("{json}\n"))?;
    run.finish(None)?;
    Ok(())
}
