//! `qchain`: command-line front end for spatial closure, question chains,
//! constraint compilation, data generation and constraint-regularized training.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Failure;

#[derive(Parser)]
#[command(
    name = "qchain",
    version,
    about = "Spatial question chains and logical consistency constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct KbArg {
    /// Rule file; the built-in rule base when absent.
    #[arg(long, env = "SPATIAL_KB_PATH")]
    pub kb: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct OutArg {
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct TemplateArg {
    /// Comma-separated constraint families to keep.
    #[arg(long, value_delimiter = ',')]
    pub include_templates: Option<Vec<qchain::Template>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Deductive closure of a scene, with derivations.
    Close {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        kb: KbArg,
        #[arg(long, value_enum, default_value = "json")]
        format: DataFormat,
        #[command(flatten)]
        out: OutArg,
    },
    /// Answers yes/no and find-relation questions, one JSON line each.
    Answer {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[command(flatten)]
        kb: KbArg,
        #[arg(long, value_enum, default_value = "json")]
        format: DataFormat,
        #[command(flatten)]
        out: OutArg,
    },
    /// Question chain proving a target fact.
    Chain {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        target: String,
        #[command(flatten)]
        kb: KbArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Constraint set compiled from a chain file or from a scene and target.
    Constraints {
        /// Chain JSON.
        #[arg(long, conflicts_with_all = ["scene", "target"])]
        input: Option<PathBuf>,
        #[arg(long, requires = "target")]
        scene: Option<PathBuf>,
        #[arg(long, requires = "scene")]
        target: Option<String>,
        #[command(flatten)]
        kb: KbArg,
        #[command(flatten)]
        templates: TemplateArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Soft truth values, violations and gradients, one JSON line per constraint.
    Softeval {
        #[arg(long)]
        constraints: PathBuf,
        /// JSON object mapping question ids to probabilities.
        #[arg(long)]
        probs: PathBuf,
        #[arg(long, value_enum, default_value = "one-minus")]
        violation: ViolationArg,
        #[arg(long, value_enum, default_value = "json")]
        format: DataFormat,
        #[command(flatten)]
        out: OutArg,
    },
    /// Generates grounded examples as JSON lines.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        kb: KbArg,
        #[command(flatten)]
        templates: TemplateArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Renders a chain as a rationale, or a scene as a story.
    Render {
        /// Chain JSON.
        #[arg(long, required_unless_present = "scene")]
        input: Option<PathBuf>,
        /// Scene supplying entity descriptions; rendered as a story when no chain is given.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value = "cot")]
        format: qchain::RenderFormat,
        #[command(flatten)]
        out: OutArg,
    },
    /// Trains the hashed linear model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        templates: TemplateArg,
        /// Model file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Accuracy and constraint consistency of a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        templates: TemplateArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Runs the built-in worked example and gradient spot-checks.
    Selftest,
    /// Chain, constraints and rationale in one record, for one target or a dataset.
    Pipeline {
        #[arg(long, requires = "target", conflicts_with = "data")]
        scene: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        /// Generated JSON lines; every yes/no question becomes a target.
        #[arg(long, required_unless_present = "scene")]
        data: Option<PathBuf>,
        #[arg(long, default_value = "cot")]
        format: qchain::RenderFormat,
        #[command(flatten)]
        kb: KbArg,
        #[command(flatten)]
        templates: TemplateArg,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ViolationArg {
    OneMinus,
    NegLog,
}

fn run(cli: Cli) -> Result<(), Failure> {
    use commands::*;
    match cli.command {
        Command::Close { scene, kb, format, out } => close(&scene, &kb, format, &out),
        Command::Answer {
            scene,
            questions,
            kb,
            format,
            out,
        } => answer(&scene, &questions, &kb, format, &out),
        Command::Chain { scene, target, kb, out } => chain(&scene, &target, &kb, &out),
        Command::Constraints {
            input,
            scene,
            target,
            kb,
            templates,
            out,
        } => constraints(
            input.as_deref(),
            scene.as_deref().zip(target.as_deref()),
            &kb,
            &templates,
            &out,
        ),
        Command::Softeval {
            constraints,
            probs,
            violation,
            format,
            out,
        } => softeval(&constraints, &probs, violation, format, &out),
        Command::Gen {
            config,
            seed,
            kb,
            templates,
            out,
        } => gen(config.as_deref(), seed, &kb, &templates, &out),
        Command::Render {
            input,
            scene,
            format,
            out,
        } => render(input.as_deref(), scene.as_deref(), format, &out),
        Command::Train {
            data,
            config,
            seed,
            templates,
            out,
            report,
        } => train(&data, config.as_deref(), seed, &templates, &out, report.as_deref()),
        Command::Eval {
            model,
            data,
            templates,
            out,
        } => eval(&model, &data, &templates, &out),
        Command::Selftest => selftest(),
        Command::Pipeline {
            scene,
            target,
            data,
            format,
            kb,
            templates,
            out,
        } => pipeline(
            scene.as_deref().zip(target.as_deref()),
            data.as_deref(),
            format,
            &kb,
            &templates,
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
