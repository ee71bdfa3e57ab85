use std::path::PathBuf;
use std::process::ExitCode;

use adaptive_lq::attack::AttackMode;
use adaptive_lq::experiment::{run_comparison, run_experiment, ExperimentConfig, ModeKind, RunReport, PRESETS};
use adaptive_lq::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BATCH: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "adaptive-lq", version, about = "Adaptive LQ control under learning-database poisoning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one controller mode.
    Run(RunArgs),
    /// Run naive, self-correcting and oracle-clean on the same seeds.
    Compare(RunArgs),
    /// List bundled presets.
    Presets,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Preset name or path to a TOML config.
    config: String,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    attack: Option<AttackArg>,
    /// Attack budget; also the budget the self-correcting controller assumes.
    #[arg(long = "lambda-budget")]
    lambda_budget: Option<f64>,
    /// Output directory.
    #[arg(long, env = "ADAPTIVE_LQ_OUT")]
    out: Option<PathBuf>,
    /// Dotted override, e.g. `--set ofu.restarts=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Naive,
    SelfCorrecting,
    OracleClean,
}

impl From<ModeArg> for ModeKind {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Naive => ModeKind::Naive,
            ModeArg::SelfCorrecting => ModeKind::SelfCorrecting,
            ModeArg::OracleClean => ModeKind::OracleClean,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AttackArg {
    None,
    Constant,
    Sinusoid,
    Random,
}

impl From<AttackArg> for AttackMode {
    fn from(a: AttackArg) -> Self {
        match a {
            AttackArg::None => AttackMode::None,
            AttackArg::Constant => AttackMode::ConstantBias,
            AttackArg::Sinusoid => AttackMode::Sinusoid,
            AttackArg::Random => AttackMode::RandomBounded,
        }
    }
}

fn attack_name(mode: AttackMode) -> &'static str {
    match mode {
        AttackMode::None => "none",
        AttackMode::ConstantBias => "constant_bias",
        AttackMode::Sinusoid => "sinusoid",
        AttackMode::RandomBounded => "random_bounded",
    }
}

impl RunArgs {
    /// Flags become overrides so they go through the same validation as `--set`.
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(r) = self.runs {
            out.push(format!("runs={r}"));
        }
        if let Some(s) = self.seed {
            out.push(format!("base_seed={s}"));
        }
        if let Some(m) = self.mode {
            out.push(format!("mode=\"{}\"", ModeKind::from(m).as_str()));
        }
        if let Some(a) = self.attack {
            out.push(format!("attack.mode=\"{}\"", attack_name(a.into())));
        }
        if let Some(l) = self.lambda_budget {
            out.push(format!("attack.lambda_budget={l:?}"));
            out.push(format!("self_correcting.lambda_budget={l:?}"));
        }
        out.extend(self.set.iter().cloned());
        out
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| {
                let name = if cfg.name.is_empty() { "experiment" } else { cfg.name.as_str() };
                PathBuf::from("out").join(name)
            })
    }
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::ConfigInvalid { .. } | Error::InvalidConstants(_) | Error::InvalidArgument { .. } => EXIT_CONFIG,
        _ => EXIT_BATCH,
    }
}

fn report(r: &RunReport) {
    println!("output: {}", r.out_dir.display());
    for m in &r.modes {
        let regret = m.terminal_mean_regret.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        let exponent = m.exponent.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<16} runs={} aborted={} terminal_mean_regret={} exponent={}",
            m.mode.as_str(),
            m.runs,
            m.aborted,
            regret,
            exponent
        );
    }
}

fn execute(args: &RunArgs, compare: bool) -> Result<RunReport, Error> {
    let cfg = ExperimentConfig::load(&args.config, &args.overrides())?;
    let out = args.out_dir(&cfg);
    if compare {
        run_comparison(&cfg, &out)
    } else {
        run_experiment(&cfg, &out)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, compare) = match &cli.command {
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Run(a) => (a, false),
        Command::Compare(a) => (a, true),
    };
    match execute(args, compare) {
        Ok(r) => {
            report(&r);
            if r.batch_failed() {
                eprintln!("error: every episode of at least one mode aborted");
                ExitCode::from(EXIT_BATCH)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
