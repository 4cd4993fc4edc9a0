use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use waveformer::core::checkpoint::random_init;
use waveformer::core::metrics::{loss_value, si_snr, si_snri, snr};
use waveformer::core::{AudioBuffer, Model, ModelConfig, NamedTensorSet, QueryVector, StreamSession};
use waveformer::files::{apply_geometry_override, load_config, load_labels, parse_classes};
use waveformer::{bench, compact_config, load_checkpoint, probes, read_wav, save_checkpoint, write_wav};
use waveformer::{BitDepth, Error, Result};

#[derive(Parser)]
#[command(name = "waveformer", version, about = "Streaming target sound extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the selected classes from a mono WAV file.
    Extract {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Comma-separated class indices, or names when --labels is given.
        #[arg(long)]
        classes: String,
        /// Config file; may only change K relative to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Class names, one per line, line number = class index.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Write 16-bit PCM instead of 32-bit float.
        #[arg(long)]
        pcm16: bool,
    },
    /// Run the streaming property probes and exit non-zero on any failure.
    Verify {
        /// Checkpoint to probe. Without it, random weights of the compact
        /// model (or of --config) are generated from --seed.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Time single-chunk processing and report the real-time factor.
    Bench {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = bench::DEFAULT_WARMUP)]
        warmup: usize,
        /// Model config for random weights when --weights is absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the report as JSON instead of key=value lines.
        #[arg(long)]
        json: bool,
    },
    /// Write a deterministic random checkpoint.
    InitWeights {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimate against a reference (and a mixture, for SI-SNRi).
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        mix: Option<PathBuf>,
    },
}

fn load_model(weights: &PathBuf, config: Option<&PathBuf>) -> Result<Arc<Model>> {
    let mut set = load_checkpoint(weights)?;
    if let Some(path) = config {
        let cfg = apply_geometry_override(set.config(), path)?;
        set.set_config(cfg);
    }
    Ok(Arc::new(Model::from_tensors(&set)?))
}

fn random_model(config: Option<&PathBuf>, fallback: ModelConfig, seed: u64) -> Result<Arc<Model>> {
    let cfg = match config {
        Some(path) => load_config(path)?,
        None => fallback,
    };
    Ok(Arc::new(Model::from_tensors(&random_init(&cfg, seed)?)?))
}

fn extract(
    weights: PathBuf,
    input: PathBuf,
    output: PathBuf,
    classes: String,
    config: Option<PathBuf>,
    labels: Option<PathBuf>,
    pcm16: bool,
) -> Result<()> {
    let model = load_model(&weights, config.as_ref())?;
    let cfg = *model.config();
    let labels = labels.map(load_labels).transpose()?;
    let selected = parse_classes(&classes, labels.as_deref(), cfg.num_classes)?;
    let query = QueryVector::multi_hot(cfg.num_classes, &selected)?;
    let audio = read_wav(&input)?;
    if audio.sample_rate() as usize != cfg.sample_rate {
        eprintln!(
            "warning: {} is {} Hz, model expects {} Hz; processing without resampling",
            input.display(),
            audio.sample_rate(),
            cfg.sample_rate
        );
    }

    let start = Instant::now();
    let mut session = StreamSession::new(model, &query)?;
    let mut out = session.push_samples(audio.samples())?;
    out.extend(session.flush()?);
    let elapsed = start.elapsed();

    let depth = if pcm16 { BitDepth::Pcm16 } else { BitDepth::Float32 };
    write_wav(&output, &AudioBuffer::new(out, audio.sample_rate())?, depth)?;
    println!(
        "chunks={} samples={} wall_ms={:.1} audio_ms={:.1}",
        session.chunks_processed(),
        audio.len(),
        elapsed.as_secs_f64() * 1000.0,
        audio.duration_seconds() * 1000.0
    );
    Ok(())
}

fn verify(weights: Option<PathBuf>, seed: u64, seconds: f64, config: Option<PathBuf>) -> Result<()> {
    let model = match &weights {
        Some(w) => load_model(w, config.as_ref())?,
        None => random_model(config.as_ref(), compact_config(), seed)?,
    };
    let results = probes::run_all(&model, seed, seconds)?;
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::PropertyFailed(format!("failed: {}", failed.join(", "))))
    }
}

fn run_bench(
    weights: Option<PathBuf>,
    iters: usize,
    warmup: usize,
    config: Option<PathBuf>,
    seed: u64,
    json: bool,
) -> Result<()> {
    let model = match &weights {
        Some(w) => load_model(w, None)?,
        None => random_model(config.as_ref(), ModelConfig::default(), seed)?,
    };
    let report = bench::bench_rtf(model, iters, warmup)?;
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_kv());
    }
    Ok(())
}

fn init_weights(config: Option<PathBuf>, seed: u64, out: PathBuf) -> Result<()> {
    let cfg = match config {
        Some(path) => load_config(path)?,
        None => ModelConfig::default(),
    };
    let set: NamedTensorSet = random_init(&cfg, seed)?;
    save_checkpoint(&set, &out)?;
    println!("wrote {} tensors to {}", set.len(), out.display());
    Ok(())
}

fn eval(reference: PathBuf, est: PathBuf, mix: Option<PathBuf>) -> Result<()> {
    let r = read_wav(&reference)?;
    let e = read_wav(&est)?;
    println!("snr_db={:.4}", snr(r.samples(), e.samples())?);
    println!("si_snr_db={:.4}", si_snr(r.samples(), e.samples())?);
    if let Some(mix) = mix {
        let m = read_wav(&mix)?;
        println!("si_snri_db={:.4}", si_snri(m.samples(), r.samples(), e.samples())?);
    }
    println!("loss={:.4}", loss_value(r.samples(), e.samples())?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract { weights, input, output, classes, config, labels, pcm16 } => {
            extract(weights, input, output, classes, config, labels, pcm16)
        }
        Command::Verify { weights, seed, seconds, config } => verify(weights, seed, seconds, config),
        Command::Bench { weights, iters, warmup, config, seed, json } => {
            run_bench(weights, iters, warmup, config, seed, json)
        }
        Command::InitWeights { config, seed, out } => init_weights(config, seed, out),
        Command::Eval { reference, est, mix } => eval(reference, est, mix),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
