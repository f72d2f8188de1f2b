//! Command-line driver for the keyed NLFSR simulator.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use keyed_nlfsr::attacks::CrpMode;

use config::ExperimentConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "keyed-nlfsr", version, about = "Keyed NLFSR challenge obfuscation experiments")]
struct Cli {
    /// JSON experiment config; `KNL_*` variables override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Device-state file.
    #[arg(long, global = true)]
    device: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Raw,
    Obfuscated,
}

impl From<Mode> for CrpMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Raw => CrpMode::Raw,
            Mode::Obfuscated => CrpMode::Obfuscated,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a maximum-length NLFSR of the given width.
    SearchSpecs {
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Flip-probability matrix of the obfuscation map.
    Avalanche {
        #[arg(long)]
        challenges: Option<usize>,
        #[arg(long)]
        warmup: Option<u32>,
        #[arg(long)]
        flush: Option<u32>,
        /// Also run a linear control register (`lfsr`).
        #[arg(long)]
        control: Option<String>,
    },
    /// Trace collection and CPA over a countermeasure matrix.
    Sca {
        /// Comma-separated: none, clkrnd, masked, masked+clkrnd.
        #[arg(long, value_delimiter = ',')]
        countermeasures: Option<Vec<String>>,
        #[arg(long)]
        traces: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        chunk_bits: Option<u32>,
        #[arg(long)]
        save_traces: bool,
    },
    /// Modeling attack on a CRP set.
    Ml {
        /// CRP CSV; collected from the device when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        countermeasures: Option<String>,
        #[arg(long)]
        min_accuracy: Option<f64>,
        #[arg(long)]
        max_over_bias: Option<f64>,
    },
    /// Collect CRPs to CSV.
    Crps {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noiseless: bool,
        #[arg(long)]
        countermeasures: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the device on one challenge and print the response bits.
    Eval {
        /// 56-bit challenge in hex.
        #[arg(long)]
        challenge: Option<String>,
        #[arg(long)]
        n_bits: Option<usize>,
        /// `bits` or `hex`.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        noiseless: bool,
        #[arg(long)]
        countermeasures: Option<String>,
    },
    /// Enroll a device and write its state file.
    Enroll {
        #[arg(long)]
        countermeasures: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SearchSpecs { .. } => "search-specs",
            Command::Avalanche { .. } => "avalanche",
            Command::Sca { .. } => "sca",
            Command::Ml { .. } => "ml",
            Command::Crps { .. } => "crps",
            Command::Eval { .. } => "eval",
            Command::Enroll { .. } => "enroll",
        }
    }

    /// Command-line flags take precedence over file and environment.
    fn apply(&self, c: &mut ExperimentConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        match self {
            Command::SearchSpecs { width, trials } => {
                set(&mut c.search.width, width);
                set(&mut c.search.trials, trials);
            }
            Command::Avalanche {
                challenges,
                warmup,
                flush,
                control,
            } => {
                set(&mut c.avalanche.challenges, challenges);
                set(&mut c.avalanche.warmup, warmup);
                set(&mut c.avalanche.flush, flush);
                set(&mut c.avalanche.control, control);
            }
            Command::Sca {
                countermeasures,
                traces,
                noise,
                chunk_bits,
                save_traces,
            } => {
                set(&mut c.sca.countermeasures, countermeasures);
                set(&mut c.sca.traces, traces);
                set(&mut c.sca.noise, noise);
                set(&mut c.sca.chunk_bits, chunk_bits);
                c.sca.save_traces |= save_traces;
            }
            Command::Ml {
                input,
                mode,
                n,
                test,
                epochs,
                countermeasures,
                min_accuracy,
                max_over_bias,
            } => {
                if input.is_some() {
                    c.ml.input = input.clone();
                }
                set(&mut c.ml.mode, &mode.map(Into::into));
                set(&mut c.ml.n, n);
                set(&mut c.ml.test, test);
                set(&mut c.ml.epochs, epochs);
                if countermeasures.is_some() {
                    c.countermeasures = countermeasures.clone();
                }
                if min_accuracy.is_some() {
                    c.ml.min_accuracy = *min_accuracy;
                }
                if max_over_bias.is_some() {
                    c.ml.max_over_bias = *max_over_bias;
                }
            }
            Command::Crps {
                mode,
                n,
                noiseless,
                countermeasures,
                output,
            } => {
                set(&mut c.crps.mode, &mode.map(Into::into));
                set(&mut c.crps.n, n);
                c.crps.noiseless |= noiseless;
                if countermeasures.is_some() {
                    c.countermeasures = countermeasures.clone();
                }
                if output.is_some() {
                    c.crps.output = output.clone();
                }
            }
            Command::Eval {
                challenge,
                n_bits,
                format,
                noiseless,
                countermeasures,
            } => {
                set(&mut c.eval.challenge, challenge);
                set(&mut c.eval.n_bits, n_bits);
                set(&mut c.eval.format, format);
                c.eval.noiseless |= noiseless;
                if countermeasures.is_some() {
                    c.countermeasures = countermeasures.clone();
                }
            }
            Command::Enroll {
                countermeasures,
                output,
            } => {
                if countermeasures.is_some() {
                    c.countermeasures = countermeasures.clone();
                }
                if output.is_some() {
                    c.enroll.output = output.clone();
                }
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::resolve(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(d) = cli.device {
        cfg.device = Some(d);
    }
    cli.command.apply(&mut cfg);
    commands::validate(&cfg)?;

    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("field `threads`: {e}")))?;
    }
    let resolved = serde_json::to_string(&cfg).expect("serializable config");
    eprintln!("resolved config: {resolved}");

    let name = cli.command.name();
    if name != "eval" {
        commands::write_text(
            &cfg.out.join(format!("{name}.config.json")),
            &serde_json::to_string_pretty(&cfg).expect("serializable config"),
        )?;
    }
    match cli.command {
        Command::SearchSpecs { .. } => commands::search_specs(&cfg),
        Command::Avalanche { .. } => commands::avalanche(&cfg),
        Command::Sca { .. } => commands::sca(&cfg),
        Command::Ml { .. } => commands::ml(&cfg),
        Command::Crps { .. } => commands::crps(&cfg),
        Command::Eval { .. } => commands::eval(&cfg),
        Command::Enroll { .. } => commands::enroll(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
