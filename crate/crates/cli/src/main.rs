//! `qtm`: train agents, run baselines, evaluate cycles and run self-checks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qtm_core::baselines::{
    evaluate_cycle, optimize_otto, optimize_square_wave, otto_protocol, sweep_trapezoid, CycleEvaluation,
    EvalOptions, TrapezoidSpec, OTTO_MAX_STEPS,
};
use qtm_core::config::RunConfigFile;
use qtm_core::env::{CycleProtocol, EnvConfig, OscillatorMoments};
use qtm_core::error::Error;
use qtm_core::sac::Agent;
use qtm_core::trainer::{extract_cycle, multi_seed, TrainConfig, Trainer};
use qtm_core::verify::{gradient_checks, oracle_check, oracle_error, CheckResult, OracleOptions};

#[derive(Parser)]
#[command(name = "qtm", version, about = "Reinforcement-learning discovery of thermal machine cycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and extract its deterministic cycle.
    Train {
        /// Run file, or the name of a shipped preset.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Total environment steps, overriding the config.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Resume from a trainer checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Optimize a reference cycle.
    Baseline {
        config: String,
        #[arg(long, value_enum)]
        kind: BaselineKind,
        #[arg(long, default_value = "baseline")]
        out: PathBuf,
        /// Trapezoid periods to sweep, in steps, as `first:last:stride`.
        #[arg(long, default_value = "40:200:4")]
        periods: String,
    },
    /// Steady-state power, efficiency and trace of a cycle file or a trained agent.
    Evaluate {
        /// Cycle CSV or agent checkpoint.
        input: PathBuf,
        /// Run file or preset; defaults to the cycle file's provenance
        /// header, or the `config.toml` next to a checkpoint.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 10)]
        periods: usize,
        #[arg(long, default_value = "evaluation")]
        out: PathBuf,
    },
    /// Oracle-equivalence and finite-difference gradient checks.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 200)]
        protocols: usize,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt a closed-form update to confirm the oracle suite notices.
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Independent trainings from consecutive seeds.
    MultiSeed {
        config: String,
        #[arg(long, default_value_t = 6)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "multi_seed")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    SquareWave,
    Trapezoid,
    Otto,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Oracle,
    Gradients,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    JumpSign,
}

enum Failure {
    Usage(String),
    Numerical(String),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            seed,
            steps,
            out,
            resume,
        } => cmd_train(&config, seed, steps, &out, resume.as_deref()),
        Command::Baseline {
            config,
            kind,
            out,
            periods,
        } => cmd_baseline(&config, kind, &out, &periods),
        Command::Evaluate {
            input,
            config,
            periods,
            out,
        } => cmd_evaluate(&input, config.as_deref(), periods, &out),
        Command::Verify {
            suite,
            protocols,
            instances,
            seed,
            inject_fault,
        } => cmd_verify(suite, protocols, instances, seed, inject_fault),
        Command::MultiSeed {
            config,
            runs,
            jobs,
            seed,
            steps,
            out,
        } => cmd_multi_seed(&config, runs, jobs, seed, steps, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Checks) => ExitCode::from(2),
    }
}

fn load_config(spec: &str) -> CliResult<RunConfigFile> {
    let path = Path::new(spec);
    if path.exists() {
        Ok(RunConfigFile::load(path)?)
    } else if qtm_core::config::preset_text(spec).is_ok() {
        Ok(RunConfigFile::preset(spec)?)
    } else {
        Err(Failure::Usage(format!("{spec}: no such file or preset")))
    }
}

/// Seed precedence: command line, then `QTM_SEED`, then the config file.
fn apply_overrides(file: &mut RunConfigFile, seed: Option<u64>, steps: Option<u64>) -> CliResult {
    let env_seed = match std::env::var("QTM_SEED") {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|_| Failure::Usage(format!("QTM_SEED={s} is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    if let Some(s) = seed.or(env_seed) {
        file.train.seed = Some(s);
    }
    if let Some(n) = steps {
        file.train.total_steps = Some(n);
    }
    Ok(())
}

fn provenance(file: &RunConfigFile) -> Vec<String> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    vec![format!("qtm {}", args.join(" ")), file.to_toml()]
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_summary(dir: &Path, prov: &[String], rows: &[(&str, String)]) -> CliResult {
    let mut w = create(dir, "summary.csv")?;
    for block in prov {
        for l in block.lines() {
            writeln!(w, "# {l}")?;
        }
    }
    writeln!(w, "key,value")?;
    for (k, v) in rows {
        writeln!(w, "{k},{v}")?;
        println!("{k:<22} {v}");
    }
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:e}"))
}

fn evaluation_rows(config: &EnvConfig, eval: &CycleEvaluation, rows: &mut Vec<(&'static str, String)>) {
    rows.push(("power", format!("{:e}", eval.power)));
    rows.push(("period_steps", eval.trace.len().to_string()));
    rows.push(("period_time", format!("{}", eval.trace.len() as f64 * config.dt)));
    rows.push(("converged", eval.converged.to_string()));
    rows.push(("drift", format!("{:e}", eval.drift)));
    rows.push(("work_in", format!("{:e}", eval.totals.work_in)));
    rows.push(("heat_hot", format!("{:e}", eval.totals.heat_hot)));
    rows.push(("heat_cold", format!("{:e}", eval.totals.heat_cold)));
    if let Ok(r) = eval.efficiency(config) {
        rows.push(("efficiency", opt(r.efficiency)));
        rows.push(("cop", opt(r.cop)));
        rows.push(("eta_carnot", format!("{:e}", r.eta_carnot)));
        rows.push(("eta_curzon_ahlborn", format!("{:e}", r.eta_curzon_ahlborn)));
        rows.push(("cop_carnot", format!("{:e}", r.cop_carnot)));
    }
    if let Some(c) = eval.coherence {
        rows.push(("coherence", format!("{c:e}")));
    }
}

fn write_cycle(dir: &Path, name: &str, prov: &[String], protocol: &CycleProtocol, rewards: Option<&[f64]>) -> CliResult {
    let mut w = create(dir, name)?;
    protocol.write_csv(&mut w, prov, rewards)?;
    w.flush()?;
    Ok(())
}

fn write_trace(dir: &Path, prov: &[String], eval: &CycleEvaluation) -> CliResult {
    let mut w = create(dir, "trace.csv")?;
    for block in prov {
        for l in block.lines() {
            writeln!(w, "# {l}")?;
        }
    }
    writeln!(w, "step,u,d,reward,work_in,heat_hot,heat_cold,coherence")?;
    for (i, s) in eval.trace.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{}",
            s.action.u,
            s.action.d,
            s.reward,
            s.work_in,
            s.heat.hot,
            s.heat.cold,
            s.coherence.map_or_else(String::new, |c| c.to_string())
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes log, checkpoints, cycle and summary of a finished trainer.
fn finish_training(trainer: &Trainer, file: &RunConfigFile, prov: &[String], out: &Path) -> CliResult {
    let mut w = create(out, "log.csv")?;
    trainer.log.write_csv(&mut w, prov)?;
    w.flush()?;
    let mut w = create(out, "config.toml")?;
    w.write_all(file.to_toml().as_bytes())?;
    w.flush()?;
    let mut w = create(out, "agent.ckpt")?;
    trainer.agent.write_checkpoint(&mut w)?;
    w.flush()?;
    let mut w = create(out, "trainer.ckpt")?;
    trainer.write_checkpoint(&mut w)?;
    w.flush()?;

    let config = &trainer.config;
    let cycle = trainer.extract_cycle()?;
    write_cycle(out, "cycle.csv", prov, &cycle.protocol, Some(&cycle.rewards))?;
    let mut rows = vec![
        ("seed", config.seed.to_string()),
        ("steps", trainer.step_count().to_string()),
        ("updates", trainer.agent.updates().to_string()),
        ("final_running_power", opt(trainer.log.final_power())),
        ("cycle_periodic", cycle.periodic.to_string()),
        ("cycle_rollout_power", format!("{:e}", cycle.mean_power())),
    ];
    let eval = evaluate_cycle(&config.env, &cycle.protocol, &EvalOptions::default())?;
    evaluation_rows(&config.env, &eval, &mut rows);
    write_trace(out, prov, &eval)?;
    write_summary(out, prov, &rows)
}

fn cmd_train(spec: &str, seed: Option<u64>, steps: Option<u64>, out: &Path, resume: Option<&Path>) -> CliResult {
    let mut file = load_config(spec)?;
    apply_overrides(&mut file, seed, steps)?;
    let config = file.resolve()?;
    let prov = provenance(&file);
    let mut trainer = match resume {
        Some(path) => {
            let f = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
            Trainer::resume(config, &mut BufReader::new(f))?
        }
        None => Trainer::new(config)?,
    };
    run_with_progress(&mut trainer)?;
    finish_training(&trainer, &file, &prov, out)
}

fn run_with_progress(trainer: &mut Trainer) -> CliResult {
    let total = trainer.config.total_steps;
    let every = (total / 50).max(1);
    while trainer.step_count() < total {
        let target = (trainer.step_count() + every).min(total);
        trainer.run_until(target)?;
        if let Some(r) = trainer.log.last() {
            eprintln!(
                "step {:>8}/{total}  <P> {:>11.4e}  <L_Q> {:>10.3e}  <L_pi> {:>10.3e}  eps {:.3e}",
                r.step, r.p_avg, r.lq_avg, r.lpi_avg, r.eps
            );
        }
    }
    Ok(())
}

fn parse_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || Failure::Usage(format!("period range '{s}' is not first:last:stride"));
    let parts: Vec<usize> = s.split(':').map(|p| p.trim().parse().map_err(|_| bad())).collect::<CliResult<_>>()?;
    match parts.as_slice() {
        [a, b, c] if *c > 0 && a <= b => Ok((*a..=*b).step_by(*c).collect()),
        [a, b] if a <= b => Ok((*a..=*b).collect()),
        _ => Err(bad()),
    }
}

fn cmd_baseline(spec: &str, kind: BaselineKind, out: &Path, periods: &str) -> CliResult {
    let file = load_config(spec)?;
    let env = file.env_config()?;
    let prov = provenance(&file);
    let options = EvalOptions::default();
    let mut rows = Vec::new();
    let protocol = match kind {
        BaselineKind::SquareWave => {
            let o = optimize_square_wave(&env, &options)?;
            rows.push(("u_hot", o.u_hot.to_string()));
            rows.push(("u_cold", o.u_cold.to_string()));
            o.protocol
        }
        BaselineKind::Trapezoid => {
            let sweep = sweep_trapezoid(&env, &TrapezoidSpec::new(4), parse_range(periods)?, &options)?;
            let mut w = create(out, "sweep.csv")?;
            for block in &prov {
                for l in block.lines() {
                    writeln!(w, "# {l}")?;
                }
            }
            writeln!(w, "period,power")?;
            for (p, power) in &sweep.powers {
                writeln!(w, "{p},{power}")?;
            }
            w.flush()?;
            rows.push(("ramp_fraction", sweep.best.ramp_fraction.to_string()));
            rows.push(("smoothing", sweep.best.smoothing.to_string()));
            qtm_core::baselines::trapezoid_cycle(&env, &sweep.best)?
        }
        BaselineKind::Otto => {
            let (u_cold, u_hot) = (0.5, 1.0);
            let o = optimize_otto(&env, u_cold, u_hot, OTTO_MAX_STEPS)?;
            let names = ["hot_steps", "expansion_steps", "cold_steps", "compression_steps"];
            for (name, n) in names.into_iter().zip(o.steps) {
                rows.push((name, n.to_string()));
            }
            rows.push(("otto_power", format!("{:e}", o.power)));
            rows.push(("grid_power", format!("{:e}", o.grid_power)));
            rows.push(("newton_fallback", o.newton_fallback.to_string()));
            otto_protocol(o.steps, u_cold, u_hot)?
        }
    };
    write_cycle(out, "cycle.csv", &prov, &protocol, None)?;
    let eval = evaluate_cycle(&env, &protocol, &options)?;
    evaluation_rows(&env, &eval, &mut rows);
    write_trace(out, &prov, &eval)?;
    write_summary(out, &prov, &rows)
}

fn is_checkpoint(path: &Path) -> CliResult<bool> {
    let mut f = File::open(path).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))?;
    let mut magic = [0u8; 8];
    Ok(f.read_exact(&mut magic).is_ok() && &magic == b"QTMSAC01")
}

fn cmd_evaluate(input: &Path, spec: Option<&str>, periods: usize, out: &Path) -> CliResult {
    let checkpoint = is_checkpoint(input)?;
    let file = match spec {
        Some(s) => load_config(s)?,
        None if checkpoint => {
            let sibling = input.with_file_name("config.toml");
            if !sibling.exists() {
                return Err(Failure::Usage(format!(
                    "no --config given and {} does not exist",
                    sibling.display()
                )));
            }
            RunConfigFile::load(&sibling)?
        }
        None => RunConfigFile::from_provenance(&std::fs::read_to_string(input)?)?,
    };
    let env = file.env_config()?;
    let prov = provenance(&file);
    let mut rows = Vec::new();
    let protocol = if checkpoint {
        let agent = Agent::read_checkpoint(&mut BufReader::new(File::open(input)?))?;
        let train: TrainConfig = file.resolve()?;
        if agent.actions() != &env.actions {
            return Err(Failure::Usage("checkpoint action space does not match the config".into()));
        }
        let cycle = extract_cycle(&agent, &env, train.cycle_warmup, train.cycle_horizon)?;
        rows.push(("cycle_periodic", cycle.periodic.to_string()));
        rows.push(("cycle_rollout_power", format!("{:e}", cycle.mean_power())));
        write_cycle(out, "cycle.csv", &prov, &cycle.protocol, Some(&cycle.rewards))?;
        cycle.protocol
    } else {
        let f = File::open(input).map_err(|e| Failure::Usage(format!("cannot open {}: {e}", input.display())))?;
        CycleProtocol::read_csv(BufReader::new(f))?.0
    };
    let options = EvalOptions {
        periods,
        ..EvalOptions::default()
    };
    let eval = evaluate_cycle(&env, &protocol, &options)?;
    evaluation_rows(&env, &eval, &mut rows);
    write_trace(out, &prov, &eval)?;
    write_summary(out, &prov, &rows)
}

/// Jump update with the sign of the energy exchange flipped.
fn sign_flipped_jump(m: OscillatorMoments, u_old: f64, u_new: f64) -> OscillatorMoments {
    let r = (u_new / u_old).powi(2);
    OscillatorMoments {
        h: 0.5 * ((1.0 + r) * m.h - (1.0 - r) * m.l),
        l: 0.5 * (-(1.0 - r) * m.h + (1.0 + r) * m.l),
        d: m.d,
    }
}

fn cmd_verify(suite: Suite, protocols: usize, instances: usize, seed: u64, fault: Option<Fault>) -> CliResult {
    let mut checks: Vec<CheckResult> = Vec::new();
    if suite != Suite::Gradients {
        let options = OracleOptions {
            protocols,
            steps: 30,
            seed,
        };
        let two_level = RunConfigFile::preset("two_level")?.env_config()?;
        checks.push(oracle_check("two-level oracle equivalence", &two_level, &options, 1e-6)?);
        let oscillator = RunConfigFile::preset("oscillator_narrow")?.env_config()?;
        let jump = fault.map(|Fault::JumpSign| sign_flipped_jump as qtm_core::env::JumpMap);
        checks.push(CheckResult {
            name: "oscillator oracle equivalence".into(),
            cases: protocols,
            max_error: oracle_error(&oscillator, &options, jump)?,
            tolerance: 1e-3,
        });
    }
    if suite != Suite::Oracle {
        checks.extend(gradient_checks(instances, seed, 1e-4)?);
    }
    for c in &checks {
        println!("{c}");
    }
    if checks.iter().all(CheckResult::passed) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_multi_seed(spec: &str, runs: usize, jobs: usize, seed: Option<u64>, steps: Option<u64>, out: &Path) -> CliResult {
    let mut file = load_config(spec)?;
    apply_overrides(&mut file, seed, steps)?;
    let config = file.resolve()?;
    let prov = provenance(&file);
    let (results, summary) = multi_seed(&config, runs, jobs)?;
    for run in &results {
        let dir = out.join(format!("seed_{}", run.seed));
        let mut run_file = file.clone();
        run_file.train.seed = Some(run.seed);
        let run_prov = provenance(&run_file);
        match &run.outcome {
            Ok(o) => {
                let mut w = create(&dir, "log.csv")?;
                o.log.write_csv(&mut w, &run_prov)?;
                w.flush()?;
                let mut w = create(&dir, "config.toml")?;
                w.write_all(run_file.to_toml().as_bytes())?;
                w.flush()?;
                let mut w = create(&dir, "agent.ckpt")?;
                o.agent.write_checkpoint(&mut w)?;
                w.flush()?;
                write_cycle(&dir, "cycle.csv", &run_prov, &o.cycle.protocol, Some(&o.cycle.rewards))?;
            }
            Err(e) => eprintln!("seed {}: {e}", run.seed),
        }
    }
    let mut rows = vec![
        ("runs", runs.to_string()),
        ("failures", summary.failures.len().to_string()),
        ("min", format!("{:e}", summary.min)),
        ("median", format!("{:e}", summary.median)),
        ("max", format!("{:e}", summary.max)),
        ("spread", format!("{:e}", summary.spread())),
    ];
    let per_seed: Vec<String> = summary.final_powers.iter().map(|(s, p)| format!("{s}:{p:e}")).collect();
    rows.push(("final_powers", per_seed.join(" ")));
    write_summary(out, &prov, &rows)?;
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("{} of {runs} runs failed", summary.failures.len())))
    }
}
