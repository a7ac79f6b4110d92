use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_glider::pipeline;
use latent_glider::{Result, RunConfig};

/// Latent-space glider design: learn a shape space from meshes, then search
/// it for designs that clear a gap at a target height.
#[derive(Parser, Debug)]
#[command(name = "latent-glider", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a corpus of parametric glider meshes.
    SynthCorpus {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Convert a directory of OBJ/STL meshes into SDF1 lattices.
    Preprocess {
        input: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Train the shape learner on a directory of lattices.
    Train {
        sdf_dir: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Encode lattices to latent vectors (latents.csv).
    Encode {
        #[arg(long)]
        checkpoint: PathBuf,
        sdf_dir: PathBuf,
    },
    /// Decode latent vectors to lattices and meshes.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        latents: PathBuf,
    },
    /// Fly one design (mesh or lattice) and export its trajectory.
    Simulate {
        input: PathBuf,
    },
    /// Search latent space for designs that reach the target height.
    Optimize {
        #[arg(long)]
        checkpoint: PathBuf,
        sdf_dir: PathBuf,
        /// Target height at the gap (m).
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Mesh → lattice → mesh, with deviation statistics.
    Roundtrip {
        input: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        /// Keep lattice values that lie exactly on the surface.
        #[arg(long)]
        no_perturb: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        config.seed = s;
    }
    if let Some(t) = cli.global.threads {
        config.threads = t;
    }
    match &cli.command {
        Command::SynthCorpus { count: Some(n) } => config.corpus_size = *n,
        Command::Preprocess { resolution: Some(r), .. } | Command::Roundtrip { resolution: Some(r), .. } => {
            config.resolution = *r
        }
        Command::Train { epochs: Some(e), .. } => config.learner.epochs = *e,
        Command::Optimize { target, generations, .. } => {
            if let Some(t) = target {
                config.task.target_height = *t;
            }
            if let Some(g) = generations {
                config.ga.generations = *g;
            }
        }
        _ => {}
    }
    config.resolved()
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    latent_glider::parallel::init_threads(config.threads);
    let out = &cli.global.out;
    match &cli.command {
        Command::SynthCorpus { .. } => {
            let s = pipeline::synth_corpus(&config, out)?;
            println!("{} meshes written to {}", s.meshes.len(), out.display());
        }
        Command::Preprocess { input, .. } => {
            let s = pipeline::preprocess(&config, input, out)?;
            println!("{} lattices written, {} inputs skipped", s.written.len(), s.skipped.len());
        }
        Command::Train { sdf_dir, .. } => {
            let s = pipeline::train(&config, sdf_dir, out)?;
            if let (Some(first), Some(last)) = (s.history.first(), s.history.last()) {
                println!(
                    "reconstruction {:.3} -> {:.3} over {} epochs; checkpoint {}",
                    first.reconstruction,
                    last.reconstruction,
                    s.history.len(),
                    s.checkpoint.display()
                );
            }
        }
        Command::Encode { checkpoint, sdf_dir } => {
            let p = pipeline::encode(&config, checkpoint, sdf_dir, out)?;
            println!("{}", p.display());
        }
        Command::Decode { checkpoint, latents } => {
            let files = pipeline::decode_latents(&config, checkpoint, latents, out)?;
            println!("{} files written to {}", files.len(), out.display());
        }
        Command::Simulate { input } => {
            let r = pipeline::simulate(&config, input, out)?;
            println!("height {:.4} m ({})", r.height, r.outcome);
        }
        Command::Optimize { checkpoint, sdf_dir, .. } => {
            let r = pipeline::optimize(&config, checkpoint, sdf_dir, out)?;
            print!("{}", r.table_markdown());
            println!("best height {:.4} m, corpus max {:.4} m", r.best_height, r.corpus_max_height);
        }
        Command::Roundtrip { input, no_perturb, .. } => {
            let m = pipeline::roundtrip(&config, input, out, !no_perturb)?;
            println!(
                "{} triangles, {} boundary edges, max deviation {:.5} m ({:.3} cell diagonals)",
                m.triangles,
                m.boundary_edges,
                m.max_deviation(),
                m.max_deviation() / m.cell_diagonal
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

