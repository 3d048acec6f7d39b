use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scl_core::closure::{solve_f_closure, CdfField, ClosureOptions};
use scl_core::ensemble::{run_ensemble, RandomInitialFamily, XiDistribution};
use scl_core::flux::{format_hierarchy, hierarchy_coefficients, FluxModel, TableFormat};
use scl_core::pipeline::{
    demo_config, demo_configs, evaluate, load_config, parse_checks, run_pipeline, summary_text, RunConfig,
};
use scl_core::solver::{solve_viscous, GridSpec, InitialProfile};
use scl_core::stats::histogram::BinAxis;
use scl_core::stats::report::{to_csv, Verdict};

#[derive(Parser, Debug)]
#[command(name = "scl", version, about = "Viscous scalar conservation laws with random initial data")]
struct Cli {
    /// Output location (a directory, or the report file for `verify`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Base seed overriding the config's `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Flux coefficients `c0,c1,...` of g(u) = sum c_k u^k.
    #[arg(long, default_value = "0,0,0.5", allow_hyphen_values = true)]
    flux: String,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
    length: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one deterministic problem; one CSV per snapshot.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 256)]
        nx: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1")]
        times: Vec<f64>,
        /// sine | tanh | tanh-pair | const:<c> | file:<path>
        #[arg(long, default_value = "sine")]
        u0: String,
        #[arg(long, default_value_t = 2)]
        deriv_order: usize,
    },
    /// Run an ensemble and write its manifest (and optionally raw members).
    Ensemble {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 64)]
        nx: usize,
        /// phase-sine:A | amplitude-sine | constant
        #[arg(long, default_value = "phase-sine:1")]
        family: String,
        /// uniform:a,b | normal:mu,sigma | degenerate:x
        #[arg(long, default_value = "uniform:0,6.283185307179586")]
        dist: String,
        #[arg(long, default_value_t = 1000)]
        members: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.46,0.48,0.5,0.52,0.54")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        deriv_order: usize,
        /// Also write one CSV per member.
        #[arg(long)]
        raw: bool,
    },
    /// Regenerate a run from its directory and apply checks to it.
    Verify {
        #[arg(long)]
        run: PathBuf,
        /// Comma list of check names, or `all`.
        #[arg(long, default_value = "all")]
        checks: String,
    },
    /// Solve the closed CDF equation.
    Closure {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 512)]
        nx: usize,
        #[arg(long, default_value_t = 200)]
        nv: usize,
        #[arg(long, value_delimiter = ',', default_value = "-0.5,1.5", allow_hyphen_values = true)]
        vbox: Vec<f64>,
        /// det:<profile> or from-run:<dir>
        #[arg(long, default_value = "det:tanh-pair")]
        f0: String,
        #[arg(long, default_value_t = 0.5)]
        tend: f64,
        /// Intermediate output times.
        #[arg(long, value_delimiter = ',')]
        store: Vec<f64>,
    },
    /// Print the hierarchy coefficients C_0..C_N of a polynomial flux.
    Hierarchy {
        #[arg(long, default_value = "0,0,0.5", allow_hyphen_values = true)]
        flux: String,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Run shipped demo configurations (all of them when no name is given).
    Demo {
        name: Option<String>,
        #[arg(long)]
        list: bool,
    },
    /// Run the pipeline on a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when a check failed.
fn dispatch(cli: &Cli) -> Result<bool> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match &cli.command {
        Command::Solve { model, nx, times, u0, deriv_order } => {
            solve(model, *nx, times, u0, *deriv_order, &out)?;
            Ok(true)
        }
        Command::Ensemble { model, nx, family, dist, members, times, deriv_order, raw } => {
            let cfg = RunConfig {
                name: "ensemble".into(),
                flux: model.flux.parse()?,
                epsilon: model.epsilon,
                length: model.length,
                n_x: *nx,
                times: times.clone(),
                family: family.parse::<RandomInitialFamily>()?,
                dist: dist.parse::<XiDistribution>()?,
                members: *members,
                base_seed: cli.seed.unwrap_or(RunConfig::default().base_seed),
                deriv_order: *deriv_order,
                probe_t: times.get(times.len() / 2).copied().unwrap_or(0.0),
                ..RunConfig::default()
            };
            ensemble(&cfg, *raw, &out)?;
            Ok(true)
        }
        Command::Verify { run, checks } => {
            let mut cfg = load_config(&run.join("config.txt"))
                .with_context(|| format!("reading {}", run.join("config.txt").display()))?;
            cfg.checks = parse_checks(checks)?;
            if let Some(s) = cli.seed {
                cfg.base_seed = s;
            }
            cfg.validate()?;
            let (_, rows) = evaluate(&cfg)?;
            let report = cli.out.clone().unwrap_or_else(|| run.join("report.csv"));
            write(&report, &to_csv(&rows))?;
            print!("{}", summary_text(&cfg, &rows));
            Ok(!Verdict::all(rows.iter().map(|r| r.verdict)).is_fail())
        }
        Command::Closure { model, nx, nv, vbox, f0, tend, store } => {
            closure(model, *nx, *nv, vbox, f0, *tend, store, &out)?;
            Ok(true)
        }
        Command::Hierarchy { flux, order, format } => {
            let m: FluxModel = flux.parse()?;
            let format: TableFormat = format.parse()?;
            print!("{}", format_hierarchy(&hierarchy_coefficients(&m, *order), format));
            Ok(true)
        }
        Command::Demo { name, list } => {
            if *list {
                for c in demo_configs() {
                    println!("{}", c.name);
                }
                return Ok(true);
            }
            let configs = match name {
                Some(n) => vec![demo_config(n).with_context(|| format!("no demo named {n:?}"))?],
                None => demo_configs(),
            };
            let mut ok = true;
            for mut cfg in configs {
                if let Some(s) = cli.seed {
                    cfg.base_seed = s;
                }
                ok &= pipeline(&cfg, &out)?;
            }
            Ok(ok)
        }
        Command::Run { config } => {
            let mut cfg = load_config(config).with_context(|| format!("reading {}", config.display()))?;
            if let Some(s) = cli.seed {
                cfg.base_seed = s;
                cfg.validate()?;
            }
            pipeline(&cfg, &out)
        }
    }
}

fn pipeline(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let outcome = run_pipeline(cfg, out)?;
    print!("{}", summary_text(cfg, &outcome.rows));
    println!("wrote {}", outcome.dir.display());
    Ok(!outcome.failed())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn solve(model: &ModelArgs, nx: usize, times: &[f64], u0: &str, order: usize, out: &Path) -> Result<()> {
    let m: FluxModel = model.flux.parse()?;
    let grid = GridSpec::new(model.length, nx)?;
    let init = InitialProfile::parse(u0, &grid, model.epsilon)?.sample(&grid)?;
    let tr = solve_viscous(&init, &m, model.epsilon, &grid, times, order)?;
    let mut index = String::from("snapshot,t\n");
    for s in 0..tr.n_snapshots() {
        let mut csv = String::from("x,u");
        for k in 1..=order {
            write!(csv, ",du{k}")?;
        }
        csv.push('\n');
        for i in 0..nx {
            write!(csv, "{}", grid.x(i))?;
            for k in 0..=order {
                write!(csv, ",{}", tr.value(s, k, i))?;
            }
            csv.push('\n');
        }
        write(&out.join(format!("snapshot_{s:03}.csv")), &csv)?;
        writeln!(index, "{s},{}", tr.times()[s])?;
    }
    write(&out.join("times.csv"), &index)?;
    println!("wrote {} snapshots to {}", tr.n_snapshots(), out.display());
    Ok(())
}

fn ensemble(cfg: &RunConfig, raw: bool, out: &Path) -> Result<()> {
    cfg.validate()?;
    let run = run_ensemble(&cfg.ensemble_spec()?)?;
    write(&out.join("config.txt"), &cfg.canonical())?;
    let mut manifest = String::new();
    writeln!(manifest, "config_digest = {}", cfg.digest())?;
    writeln!(manifest, "ensemble_digest = {}", run.config_digest())?;
    writeln!(manifest, "base_seed = {}", run.base_seed())?;
    writeln!(manifest, "members = {}", run.len())?;
    writeln!(manifest, "member_stream = member index")?;
    writeln!(manifest, "times = {}", run.times().iter().map(f64::to_string).collect::<Vec<_>>().join(","))?;
    write(&out.join("manifest.txt"), &manifest)?;
    let mut xi = String::from("member,xi\n");
    for (i, v) in run.xi_values().iter().enumerate() {
        writeln!(xi, "{i},{v}")?;
    }
    write(&out.join("xi.csv"), &xi)?;
    if raw {
        let grid = run.grid();
        for (m, tr) in run.trajectories().iter().enumerate() {
            let mut csv = String::from("t,x,u\n");
            for (s, t) in tr.times().iter().enumerate() {
                for (i, u) in tr.field(s).iter().enumerate() {
                    writeln!(csv, "{t},{},{u}", grid.x(i))?;
                }
            }
            write(&out.join("members").join(format!("member_{m:06}.csv")), &csv)?;
        }
    }
    println!("wrote ensemble of {} members to {}", run.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn closure(
    model: &ModelArgs,
    nx: usize,
    nv: usize,
    vbox: &[f64],
    f0: &str,
    tend: f64,
    store: &[f64],
    out: &Path,
) -> Result<()> {
    let m: FluxModel = model.flux.parse()?;
    let [lo, hi] = vbox else { bail!("--vbox expects two values a,b") };
    let axis = BinAxis::new(*lo, *hi, nv)?;
    let init = if let Some(profile) = f0.strip_prefix("det:") {
        let grid = GridSpec::new(model.length, nx)?;
        let u0 = InitialProfile::parse(profile, &grid, model.epsilon)?.sample(&grid)?;
        CdfField::smoothed_step_default(grid, axis, &u0)?
    } else if let Some(dir) = f0.strip_prefix("from-run:") {
        let cfg = load_config(&Path::new(dir).join("config.txt")).with_context(|| format!("reading run {dir}"))?;
        let run = run_ensemble(&cfg.ensemble_spec()?)?;
        CdfField::from_ensemble(&run, 0, axis)?
    } else {
        bail!("--f0 expects det:<profile> or from-run:<dir>, got {f0:?}");
    };
    let sol = solve_f_closure(&init, &m, model.epsilon, tend, store, ClosureOptions::default())?;
    let grid = *init.grid();
    let mut means = String::from("t,x,m\n");
    for (s, (t, field)) in sol.times.iter().zip(&sol.fields).enumerate() {
        let mut csv = String::from("x,v,F\n");
        for i in 0..grid.n_x() {
            for k in 0..field.n_v() {
                writeln!(csv, "{},{},{}", grid.x(i), axis.edge(k), field.value(i, k))?;
            }
            writeln!(means, "{t},{},{}", grid.x(i), sol.means[s][i])?;
        }
        write(&out.join(format!("F_{s:03}.csv")), &csv)?;
    }
    write(&out.join("means.csv"), &means)?;
    let mut mono = String::from("t,max_monotonicity_violation\n");
    for (t, v) in sol.times.iter().zip(&sol.monotonicity) {
        writeln!(mono, "{t},{v}")?;
    }
    write(&out.join("monotonicity.csv"), &mono)?;
    println!(
        "{} steps, {} stored times, worst monotonicity violation {}; wrote {}",
        sol.steps,
        sol.times.len(),
        sol.max_monotonicity_violation(),
        out.display()
    );
    Ok(())
}
