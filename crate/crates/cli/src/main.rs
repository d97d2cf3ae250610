use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rerank_tool::commands::{
    bench_command, configure_threads_from_env, eval_command, format_metrics, gen_command, rerank_command, BenchArgs,
    GenArgs, RerankArgs,
};
use rerank_tool::features::FeatureFormat;
use rerank_tool::CliError;
use rerank_core::eval::DEFAULT_NOISE;

#[derive(Parser)]
#[command(name = "mrerank", version, about = "Manifold re-ranking for instance retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-rank every gallery item for each query and write a run file.
    Rerank {
        #[arg(long)]
        features: PathBuf,
        /// File of query ids, one per line (default: every instance).
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// key=value pipeline settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Emit the plain Euclidean ranking instead.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        settings: ConfigFlags,
    },
    /// Print mAP and R@1 of a run file.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Feature file defining the gallery (default: ids in the truth file).
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset and its ground truth.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        per_cluster: usize,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = DEFAULT_NOISE)]
        noise: f64,
        #[arg(long, value_enum, default_value_t = FeatureFormat::Binary)]
        format: FeatureFormat,
    },
    /// Time the baseline and the full pipeline.
    Bench {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        #[command(flatten)]
        settings: ConfigFlags,
    },
}

macro_rules! config_flags {
    ($($field:ident => $key:literal),* $(,)?) => {
        /// Per-field overrides; each takes the same text as the config file.
        #[derive(Args, Default)]
        struct ConfigFlags {
            $(
                #[arg(long, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn pairs(&self) -> Vec<(&'static str, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key, v.clone()));
                    }
                )*
                out
            }
        }
    };
}

config_flags! {
    k => "k",
    scale_factors => "scale_factors",
    sigma => "sigma",
    mu => "mu",
    lambda => "lambda",
    maxiter => "maxiter",
    inner_iters => "inner_iters",
    inner_solver => "inner_solver",
    delta => "delta",
    outer_tol => "outer_tol",
    regularizer => "regularizer",
    k1 => "k1",
    k2 => "k2",
    kappa => "kappa",
    theta => "theta",
    gamma => "gamma",
    epsilon => "epsilon",
    sinkhorn_tol => "sinkhorn_tol",
    sinkhorn_maxiter => "sinkhorn_maxiter",
    rerank_depth => "rerank_depth",
    hop_region => "hop_region",
    excess_transport => "excess_transport",
    normalize_blend => "normalize_blend",
    l2_normalize => "l2_normalize",
}

fn run(cli: Cli) -> Result<i32, CliError> {
    configure_threads_from_env()?;
    match cli.command {
        Command::Rerank {
            features,
            queries,
            out,
            config,
            baseline,
            settings,
        } => rerank_command(RerankArgs {
            features: &features,
            queries: queries.as_deref(),
            out: &out,
            config: config.as_deref(),
            baseline,
            flags: settings.pairs(),
        }),
        Command::Eval { run, truth, features } => {
            let report = eval_command(&run, &truth, features.as_deref())?;
            print!("{}", format_metrics(&report));
            Ok(0)
        }
        Command::Gen {
            out,
            truth,
            seed,
            per_cluster,
            clusters,
            noise,
            format,
        } => {
            gen_command(GenArgs {
                out: &out,
                truth: &truth,
                seed,
                per_cluster,
                clusters,
                noise,
                format,
            })?;
            Ok(0)
        }
        Command::Bench {
            features,
            queries,
            config,
            repeat,
            settings,
        } => {
            let text = bench_command(BenchArgs {
                features: &features,
                queries: queries.as_deref(),
                config: config.as_deref(),
                repeat,
                flags: settings.pairs(),
            })?;
            print!("{text}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
