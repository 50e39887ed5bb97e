use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use songseek_core::corpus::{load_audio, load_corpus, write_corpus};
use songseek_core::engine::{ExecutionMode, SearchResponse};
use songseek_core::eval::synth::synthetic_corpus;
use songseek_core::eval::{
    noise_recall_experiment, sweep, AudioSuite, EvalReport, FixedExperiment, NoiseExperiment, SweepParam,
    TextQuerySuite,
};
use songseek_core::snapshot::{load_snapshot, persist_indexes};
use songseek_core::{decode_wav, EngineConfig, FieldKind, PcmAudio, SearchEngine, SongId};

use crate::request::{parse_weights, QueryRequest};

#[derive(Debug, Parser)]
#[command(name = "songseek", version, about = "Search songs by lyrics, metadata and audio")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build indexes from a JSON Lines corpus.
    Index(IndexArgs),
    /// Run one query against a built index.
    Search(SearchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Run a noise or sweep experiment.
    Eval(EvalArgs),
    /// Write a synthetic corpus (WAV files plus corpus.jsonl).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    /// Largest N-gram indexed for lyrics.
    #[arg(long)]
    pub lyrics_ngram: Option<usize>,
    /// Largest N-gram indexed for titles.
    #[arg(long)]
    pub title_ngram: Option<usize>,
    /// Bit flips tolerated per sub-fingerprint.
    #[arg(long)]
    pub toggle_bits: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub index_dir: PathBuf,
    #[arg(long)]
    pub lyrics: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub artist: Option<String>,
    #[arg(long)]
    pub album: Option<String>,
    #[arg(long)]
    pub genre: Option<String>,
    /// WAV clip to search by.
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// Only songs released strictly before this date.
    #[arg(long)]
    pub before: Option<String>,
    /// Only songs released strictly after this date.
    #[arg(long)]
    pub after: Option<String>,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Weight overrides, e.g. `title=2,lyrics=0.5`.
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<std::collections::BTreeMap<String, f64>>,
    /// Print the full response as JSON.
    #[arg(long)]
    pub json: bool,
    /// Run the field searches one after another.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub index_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Noise,
    Sweep,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub index_dir: PathBuf,
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Directory for the report files.
    #[arg(long)]
    pub out: PathBuf,
    /// SNR levels in dB (`inf` for clean). A sweep uses the first.
    #[arg(long, value_delimiter = ',', value_parser = parse_snr)]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub clip_seconds: f64,
    #[arg(long, default_value_t = 1)]
    pub queries_per_song: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Sweep parameter: ngram_N, toggle_bits, coarse_min_matches or ber_threshold.
    #[arg(long)]
    pub param: Option<SweepParam>,
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Random bits flipped in every query sub-fingerprint (sweeps only).
    #[arg(long, default_value_t = 0)]
    pub bit_flips: u32,
    /// Include mean query latency in the reports.
    #[arg(long)]
    pub with_latency: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub songs: usize,
    #[arg(long, default_value_t = 20.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn parse_snr(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "+inf" | "clean" => Ok(f64::INFINITY),
        v => v.parse().map_err(|_| format!("bad SNR `{v}`")),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Index(args) => index(args, out),
        Command::Search(args) => search(args, out),
        Command::Serve(args) => serve(args),
        Command::Eval(args) => eval(args, out),
        Command::Synth(args) => synth(args, out),
    }
}

fn open(dir: &Path) -> Result<SearchEngine> {
    load_snapshot(dir).with_context(|| format!("loading index from {}", dir.display()))
}

fn index(args: IndexArgs, out: &mut dyn Write) -> Result<()> {
    let records = load_corpus(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    let mut config = EngineConfig::default();
    if let Some(n) = args.lyrics_ngram {
        config = config.with_ngram_max(FieldKind::Lyrics, n);
    }
    if let Some(n) = args.title_ngram {
        config = config.with_ngram_max(FieldKind::Title, n);
    }
    if let Some(n) = args.toggle_bits {
        config.fingerprint.toggle_bits = n;
    }
    let engine = SearchEngine::build_from_records(config, records)?;
    let manifest = persist_indexes(&engine, &args.out_dir)?;
    writeln!(
        out,
        "indexed {} songs ({} with audio) into {} [config {}]",
        manifest.song_count,
        engine.fingerprint_index().song_count(),
        args.out_dir.display(),
        &manifest.index_config_digest[..12]
    )?;
    Ok(())
}

impl SearchArgs {
    pub fn request(&self) -> QueryRequest {
        QueryRequest {
            lyrics: self.lyrics.clone(),
            title: self.title.clone(),
            artist: self.artist.clone(),
            album: self.album.clone(),
            genre: self.genre.clone(),
            before: self.before.clone(),
            after: self.after.clone(),
            limit: self.limit,
            weights: self.weights.clone().unwrap_or_default(),
        }
    }
}

fn search(args: SearchArgs, out: &mut dyn Write) -> Result<()> {
    let audio = args
        .audio
        .as_ref()
        .map(|p| -> Result<PcmAudio> {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(decode_wav(&bytes).with_context(|| format!("decoding {}", p.display()))?)
        })
        .transpose()?;
    let (query, mut options) = args.request().into_query(audio)?;
    if args.sequential {
        options.mode = ExecutionMode::Sequential;
    }
    // Validate before touching the index so usage errors are cheap.
    songseek_core::model::validate_query(&query)?;
    let engine = open(&args.index_dir)?;
    let response = engine.execute(&query, options)?;
    if args.json {
        serde_json::to_writer_pretty(&mut *out, &response)?;
        writeln!(out)?;
    } else {
        print_table(&response, out)?;
    }
    Ok(())
}

fn print_table(response: &SearchResponse, out: &mut dyn Write) -> Result<()> {
    if response.results.is_empty() {
        writeln!(out, "no results")?;
    }
    for (i, row) in response.results.iter().enumerate() {
        let parts: Vec<String> = row
            .breakdown
            .iter()
            .map(|(f, v)| format!("{f} {v:.3}"))
            .collect();
        writeln!(
            out,
            "{:>3}. {:.4}  [{}] {} - {} ({})  {}",
            i + 1,
            row.final_score,
            row.song.id,
            row.song.title,
            row.song.artist,
            row.song.release_date,
            parts.join(", ")
        )?;
    }
    if !response.skipped_fields.is_empty() {
        let names: Vec<&str> = response.skipped_fields.iter().map(|f| f.as_str()).collect();
        writeln!(out, "skipped (no searchable terms): {}", names.join(", "))?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let engine = Arc::new(open(&args.index_dir)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::http::serve(engine, SocketAddr::new(args.host, args.port)))?;
    Ok(())
}

fn corpus_audio(engine: &SearchEngine) -> Result<Vec<(SongId, PcmAudio)>> {
    let mut audio = Vec::new();
    for r in engine.records() {
        if let Some(pcm) = load_audio(r)? {
            audio.push((r.id, pcm));
        }
    }
    if audio.is_empty() {
        bail!("no song in the index has audio");
    }
    Ok(audio)
}

fn eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let engine = open(&args.index_dir)?;
    let report: EvalReport = match args.suite {
        Suite::Noise => {
            let audio = corpus_audio(&engine)?;
            let mut exp = NoiseExperiment {
                clip_seconds: args.clip_seconds,
                queries_per_song: args.queries_per_song,
                seed: args.seed,
                ..Default::default()
            };
            if !args.snr.is_empty() {
                exp.snr_db = args.snr.clone();
            }
            noise_recall_experiment(&engine, &audio, &exp)
        }
        Suite::Sweep => {
            let Some(param) = args.param else {
                bail!("--param is required for a sweep");
            };
            if args.values.is_empty() {
                bail!("--values is required for a sweep");
            }
            if param == SweepParam::NgramN {
                let suite = TextQuerySuite::bigrams_from_lyrics(engine.records(), args.queries_per_song, args.seed);
                sweep(&engine, param, &args.values, &FixedExperiment::Text(&suite))
            } else {
                let audio = corpus_audio(&engine)?;
                let suite = AudioSuite {
                    clip_seconds: args.clip_seconds,
                    queries_per_song: args.queries_per_song,
                    snr_db: args.snr.first().copied().unwrap_or(f64::INFINITY),
                    bit_flips_per_word: args.bit_flips,
                    seed: args.seed,
                };
                sweep(&engine, param, &args.values, &FixedExperiment::Audio { audio: &audio, suite })
            }
        }
    };
    report
        .write(&args.out, args.with_latency)
        .with_context(|| format!("writing reports to {}", args.out.display()))?;
    write!(out, "{}", report.to_csv(args.with_latency))?;
    Ok(())
}

fn synth(args: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let wav_dir = args.out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let (mut records, audio) = synthetic_corpus(args.songs, args.seconds, args.seed);
    for (r, pcm) in records.iter_mut().zip(&audio) {
        let path = wav_dir.join(format!("{:04}.wav", r.id.0));
        std::fs::write(&path, pcm.to_wav_f32())?;
        r.audio = Some(path);
    }
    let corpus = args.out_dir.join("corpus.jsonl");
    write_corpus(&corpus, &records, &args.out_dir)?;
    writeln!(out, "wrote {} songs to {}", records.len(), corpus.display())?;
    Ok(())
}
