//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 2 for usage or
//! configuration errors, 3 for numerical failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use phi_ldp::lab::condition2::condition2_experiment;
use phi_ldp::lab::config::LabConfig;
use phi_ldp::lab::curve::{ldp_curve, CurveOptions};
use phi_ldp::lab::io;
use phi_ldp::lab::parallel::Runner;
use phi_ldp::lab::regime::numeric_regime;
use phi_ldp::noise::rng::purpose;
use phi_ldp::noise::scaling::moment_scaling_experiment;
use phi_ldp::{
    classify_regime, minimize_action, solve_stochastic, Error, InstantonResult, RngStream,
    ScalingFamily, SpectralField, StreamId, Trajectory,
};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "phi-ldp", version, about = "Small-noise large deviations lab for polynomial reaction-diffusion SPDEs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `noise.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; otherwise PHI_LDP_THREADS or the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One stochastic trajectory at `experiment.eps` and `noise.delta`.
    Simulate {
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Minimize the action for a terminal target.
    Instanton {
        /// Target field in the binary field format.
        #[arg(long)]
        target_file: Option<PathBuf>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        mu0: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Monte Carlo `-eps log p` along `experiment.eps_grid`.
    LdpCurve {
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Moment scaling of the stochastic convolution in `delta`.
    NoiseScaling {
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Convergence of controlled solutions to the skeleton path.
    Condition2 {
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Classify a scaling family `delta = eps^a`.
    Regime {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        a: f64,
        #[arg(long)]
        gamma: Option<f64>,
    },
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

struct Context {
    config: LabConfig,
    seed: u64,
    out: PathBuf,
    runner: Runner,
}

impl Context {
    fn hash_line(&self) -> String {
        io::csv_header(&self.config.hash(), self.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_csv(&self, name: &str, body: &str) -> phi_ldp::Result<()> {
        io::write_text(&self.path(name), &format!("{}{body}", self.hash_line()))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> phi_ldp::Result<()> {
        io::write_json(&self.path(name), value)
    }
}

fn load_config(path: Option<&Path>) -> phi_ldp::Result<LabConfig> {
    match path {
        Some(p) => LabConfig::from_file(p),
        None => Ok(LabConfig::default()),
    }
}

fn execute(cli: Cli) -> phi_ldp::Result<()> {
    if let Command::Regime { d, alpha, a, gamma } = cli.command {
        return regime(d, alpha, a, gamma, &cli.common.out);
    }
    let mut config = load_config(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        config.noise.seed = seed;
    }
    apply_overrides(&mut config, &cli.command);
    config.validate()?;
    fs::create_dir_all(&cli.common.out)?;
    let runner = match cli.common.threads {
        Some(n) => Runner::with_threads(n),
        None => Runner::from_env(),
    };
    let ctx = Context {
        seed: config.noise.seed,
        config,
        out: cli.common.out,
        runner,
    };
    match cli.command {
        Command::Simulate { .. } => simulate(&ctx),
        Command::Instanton { target_file, .. } => instanton(&ctx, target_file.as_deref()),
        Command::LdpCurve { .. } => curve(&ctx),
        Command::NoiseScaling { .. } => scaling(&ctx),
        Command::Condition2 { .. } => condition2(&ctx),
        Command::Regime { .. } => unreachable!(),
    }
}

fn apply_overrides(c: &mut LabConfig, cmd: &Command) {
    let e = &mut c.experiment;
    match *cmd {
        Command::Simulate { eps } => {
            if let Some(v) = eps {
                e.eps = v;
            }
        }
        Command::Instanton {
            radius,
            mu0,
            tol,
            max_iter,
            ..
        } => {
            let i = &mut e.instanton;
            i.radius = radius.unwrap_or(i.radius);
            i.mu0 = mu0.unwrap_or(i.mu0);
            i.tol = tol.unwrap_or(i.tol);
            i.max_iter = max_iter.unwrap_or(i.max_iter);
        }
        Command::LdpCurve { reps } => e.reps = reps.unwrap_or(e.reps),
        Command::NoiseScaling { reps } => e.scaling.reps = reps.unwrap_or(e.scaling.reps),
        Command::Condition2 { reps } => e.condition2.reps = reps.unwrap_or(e.condition2.reps),
        Command::Regime { .. } => {}
    }
}

#[derive(Serialize)]
struct RegimeSummary {
    d: usize,
    alpha: f64,
    a: f64,
    gamma: Option<f64>,
    rd46: bool,
    rd5050: bool,
    numeric_rd46: bool,
    numeric_rd5050: bool,
}

fn regime(d: usize, alpha: f64, a: f64, gamma: Option<f64>, out: &Path) -> phi_ldp::Result<()> {
    let family = ScalingFamily::new(a, d, alpha)?;
    let r = classify_regime(&family, gamma);
    let n = numeric_regime(&family, gamma);
    let word = |b: bool| if b { "holds" } else { "fails" };
    println!("rd46: {}", word(r.holds_rd46));
    println!("rd5050: {}", word(r.holds_rd5050));
    if out != Path::new(".") {
        fs::create_dir_all(out)?;
        io::write_json(
            &out.join("regime.json"),
            &RegimeSummary {
                d,
                alpha,
                a,
                gamma,
                rd46: r.holds_rd46,
                rd5050: r.holds_rd5050,
                numeric_rd46: n.holds_rd46,
                numeric_rd5050: n.holds_rd5050,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary {
    eps: f64,
    delta: f64,
    seed: u64,
    steps: usize,
    sup_norm_h: f64,
    lp_integral: f64,
    accuracy_warning: bool,
    final_norm_h: f64,
}

fn simulate(ctx: &Context) -> phi_ldp::Result<()> {
    let c = &ctx.config;
    let model = c.model()?;
    let noise = c.noise_model(model.basis())?;
    let eps = c.experiment.eps;
    let mut rng = RngStream::new(ctx.seed, StreamId::new(0, 0, purpose::SIMULATION));
    let u = solve_stochastic(&model.x, eps, &noise, &model.drift, &model.grid, &mut rng)?;
    ctx.write_csv("trajectory.csv", &io::trajectory_csv(&u, c.experiment.s, 1)?)?;
    io::write_binary(&ctx.path("trajectory.bin"), |w| io::write_trajectory(w, &u))?;
    ctx.write_json(
        "summary.json",
        &SimulationSummary {
            eps,
            delta: c.noise.delta,
            seed: ctx.seed,
            steps: u.report.steps,
            sup_norm_h: u.report.sup_norm_h,
            lp_integral: u.report.lp_integral,
            accuracy_warning: u.report.accuracy_warning,
            final_norm_h: u.last().norm_h(),
        },
    )
}

#[derive(Serialize)]
struct InstantonSummary {
    action_value: f64,
    iterations: usize,
    terminal_miss: f64,
    gradient_norm: f64,
    mu: f64,
    converged: bool,
}

fn control_trajectory(r: &InstantonResult) -> phi_ldp::Result<Trajectory> {
    let states: Vec<SpectralField> = (0..r.control.intervals()).map(|j| r.control.value(j)).collect();
    Trajectory::new(r.control.times(), states)
}

fn instanton(ctx: &Context, target_file: Option<&Path>) -> phi_ldp::Result<()> {
    let mut problem = ctx.config.action_problem()?;
    if let Some(path) = target_file {
        let bytes = fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        problem.target = io::read_field(&mut bytes.as_slice(), problem.x.basis())
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    let opts = ctx.config.minimizer_options();
    let (result, failure) = match minimize_action(&problem, &problem.zero_control(), &opts) {
        Ok(r) => (r, None),
        Err(Error::NonConvergence { last }) => {
            let e = Error::NonConvergence { last: last.clone() };
            (*last, Some(e))
        }
        Err(e) => return Err(e),
    };
    ctx.write_json(
        "instanton.json",
        &InstantonSummary {
            action_value: result.action_value,
            iterations: result.iterations,
            terminal_miss: result.terminal_miss,
            gradient_norm: result.gradient_norm,
            mu: result.mu,
            converged: failure.is_none(),
        },
    )?;
    let phi = control_trajectory(&result)?;
    io::write_binary(&ctx.path("phi.bin"), |w| io::write_trajectory(w, &phi))?;
    io::write_binary(&ctx.path("path.bin"), |w| io::write_trajectory(w, &result.path))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn curve(ctx: &Context) -> phi_ldp::Result<()> {
    let c = &ctx.config;
    let opts = CurveOptions {
        minimizer: c.minimizer_options(),
        mu0: c.experiment.instanton.mu0,
        ..CurveOptions::default()
    };
    let table = ldp_curve(
        &c.experiment.event,
        &c.experiment.eps_grid,
        &c.family()?,
        &c.model()?,
        c.experiment.reps,
        ctx.seed,
        &ctx.runner,
        &opts,
    )?;
    ctx.write_csv("ldp_curve.csv", &table.csv())?;
    ctx.write_json("ldp_curve.json", &table)
}

fn scaling(ctx: &Context) -> phi_ldp::Result<()> {
    let table = moment_scaling_experiment(&ctx.config.scaling_config(ctx.seed)?, &ctx.runner)?;
    ctx.write_csv("noise_scaling.csv", &table.csv())?;
    ctx.write_json("noise_scaling.json", &table)
}

fn condition2(ctx: &Context) -> phi_ldp::Result<()> {
    let c = &ctx.config;
    let model = c.model()?;
    let spec = c.condition2_spec(&model)?;
    let table = condition2_experiment(&spec, &c.family()?, &model, ctx.seed, &ctx.runner)?;
    ctx.write_csv("condition2.csv", &table.csv())?;
    ctx.write_json("condition2.json", &table)
}
