use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use secbeam_core::agent::GreedyPolicy;
use secbeam_core::config::ExperimentConfig;
use secbeam_core::harness::{self, Approach, SweepSpec, SweepVar};
use secbeam_core::nn::Checkpoint;

#[derive(Parser)]
#[command(name = "secbeam", version, about = "IRS-aided secure beamforming with deep PDS-PER learning")]
struct Cli {
    /// Overrides the `seed` key of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output CSV path; overrides the `output` key of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write its learning curve.
    Train {
        config: PathBuf,
        /// Also save the trained network here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a saved network greedily.
    Eval { config: PathBuf, checkpoint: PathBuf },
    /// Train and evaluate every approach over a grid of one variable.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        var: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Comma-separated seeds; defaults to the `seeds` key.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated subset of pds_per,dqn,random_phase,no_irs.
        #[arg(long)]
        approaches: Option<String>,
    },
    /// Evaluate a non-learning baseline.
    Baseline {
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: BaselineKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    #[value(name = "random_phase")]
    RandomPhase,
    #[value(name = "no_irs")]
    NoIrs,
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|_| anyhow::anyhow!("cannot parse `{x}` in {what}")))
        .collect()
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_out(cfg: &ExperimentConfig, out: &Option<PathBuf>, text: &str) -> Result<PathBuf> {
    let path = out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, checkpoint } => {
            let cfg = load(&config, cli.seed)?;
            let (csv, agent) = harness::run_train(&cfg)?;
            let path = write_out(&cfg, &cli.out, &csv)?;
            eprintln!("wrote {}", path.display());
            if let Some(ck) = checkpoint {
                let f = fs::File::create(&ck).with_context(|| format!("creating {}", ck.display()))?;
                agent.checkpoint().write(std::io::BufWriter::new(f))?;
                eprintln!("saved checkpoint {}", ck.display());
            }
        }
        Command::Eval { config, checkpoint } => {
            let cfg = load(&config, cli.seed)?;
            let f = fs::File::open(&checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?;
            let ck = Checkpoint::read(BufReader::new(f))?;
            let params = cfg.env_params()?;
            let n_actions = cfg.codebooks()?.len();
            if ck.net.input_size() != params.state_len() || ck.net.output_size() != n_actions {
                bail!(
                    "checkpoint network is {}->{} but the config needs {}->{}",
                    ck.net.input_size(),
                    ck.net.output_size(),
                    params.state_len(),
                    n_actions
                );
            }
            let mut policy = GreedyPolicy::from_checkpoint(&ck)?;
            let stats = harness::evaluate_policy(&cfg, &mut policy, cfg.seed)?;
            let name = if policy.use_pds { "pds_per" } else { "dqn" };
            let csv = harness::eval_csv(&cfg, cfg.seed, &[(name.to_string(), stats)]);
            let path = write_out(&cfg, &cli.out, &csv)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Sweep {
            config,
            var,
            values,
            seeds,
            approaches,
        } => {
            let cfg = load(&config, cli.seed)?;
            let var: SweepVar = var.parse()?;
            let values = parse_list::<f64>("--values", &values)?;
            let seeds = match seeds {
                Some(s) => parse_list::<u64>("--seeds", &s)?,
                None => cfg.seeds.clone(),
            };
            let mut spec = SweepSpec::new(var, values, seeds);
            if let Some(a) = approaches {
                spec.approaches = parse_list::<Approach>("--approaches", &a)?;
            }
            let rows = harness::run_sweep(&cfg, &spec)?;
            let csv = harness::sweep_csv(&cfg, &spec, &rows);
            let path = write_out(&cfg, &cli.out, &csv)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Baseline { config, kind } => {
            let cfg = load(&config, cli.seed)?;
            let (name, stats) = match kind {
                BaselineKind::RandomPhase => ("random_phase", harness::baseline_random_phase(&cfg, cfg.seed)?),
                BaselineKind::NoIrs => ("no_irs", harness::baseline_no_irs(&cfg, cfg.seed)?),
            };
            let csv = harness::eval_csv(&cfg, cfg.seed, &[(name.to_string(), stats)]);
            let path = write_out(&cfg, &cli.out, &csv)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
