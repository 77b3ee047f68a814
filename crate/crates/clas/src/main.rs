use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clas::battery::{
    alphabet_of, decode_set, decode_set_with_context, hypothesis_lines, wer_header, wer_row, BiasSource, Decoded,
    Setup,
};
use clas::checkpoint::{load_model, save_model};
use clas::config::{ConditioningMode, RunConfig};
use clas::data::{read_phrases, Corpus};
use clas::error::{Error, Result};
use clas::manifest::{read_manifest, read_records};
use clas::recipe::{loss_line, train_model, Family};
use clas::sweep::{run_sweep, SweepSpec};
use clas::{context_file, battery};
use clas_core::decoder::{beam_search, DecodeConfig, NoFusion};
use clas_core::fst::{compile_context, GraphemeAlphabet};
use clas_core::model::Vocab;

/// Contextual listen-attend-spell: training, decoding, biasing and the
/// experiment battery.
#[derive(Parser)]
#[command(name = "clas", version)]
struct Cli {
    /// Run config (TOML). Defaults to $CLAS_CONFIG, then built-in values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `section.key=value`; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus (train, dev, biased, tune, trigger sets).
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a manifest.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train plain LAS (no bias phrases ever sampled).
        #[arg(long)]
        las: bool,
    },
    /// Decode a manifest; writes hyps.tsv (`id<TAB>text<TAB>score`).
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Decode with empty bias lists.
        #[arg(long)]
        empty_bias: bool,
        /// Fusion weight; fusion uses each utterance's bias list unless
        /// --context is given.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        bonus: Option<f64>,
        /// Compiled context shared by every utterance.
        #[arg(long)]
        context: Option<PathBuf>,
        /// off, manifest, rule-based or greedy.
        #[arg(long)]
        conditioning: Option<String>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Score a hypothesis file against a manifest; writes wer.tsv.
    Eval {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile a phrase file (one phrase per line) into a context file.
    CompileContext {
        #[arg(long)]
        phrases: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Graphemes of the alphabet; defaults to the configured task's.
        #[arg(long)]
        alphabet: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        bonus: Option<f64>,
    },
    /// Run the experiments listed in a sweep spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bias-attention matrix of each decoded utterance.
    DumpAttention {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn quote(s: &str) -> String {
    format!("{s:?}")
}

/// Turns command flags into config overrides applied after `--set`.
fn flag_overrides(cli: &Cli) -> Vec<String> {
    let mut o = cli.set.clone();
    if let Some(s) = cli.seed {
        o.push(format!("seed={s}"));
    }
    match &cli.command {
        Command::Decode {
            lambda,
            strategy,
            bonus,
            conditioning,
            beam,
            ..
        } => {
            if let Some(l) = lambda {
                o.push(format!("decode.lambda={l:?}"));
            }
            if let Some(s) = strategy {
                o.push(format!("fusion.strategy={}", quote(s)));
            }
            if let Some(b) = bonus {
                o.push(format!("fusion.bonus={b:?}"));
            }
            if let Some(c) = conditioning {
                o.push(format!("conditioning.mode={}", quote(c)));
            }
            if let Some(b) = beam {
                o.push(format!("decode.beam_width={b}"));
            }
        }
        Command::CompileContext { strategy, bonus, .. } => {
            if let Some(s) = strategy {
                o.push(format!("fusion.strategy={}", quote(s)));
            }
            if let Some(b) = bonus {
                o.push(format!("fusion.bonus={b:?}"));
            }
        }
        _ => {}
    }
    o
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(Error::io(path))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &flag_overrides(cli))?;
    match &cli.command {
        Command::Generate { out } => {
            Corpus::generate(&cfg)?.write(out)?;
            cfg.save_into(out)
        }
        Command::Train { data, out, las } => {
            let utts = read_manifest(data)?;
            let first = utts.first().ok_or_else(|| Error::Config(format!("{} is empty", data.display())))?;
            let vocab = Vocab::from_graphemes(&cfg.task.graphemes())?;
            fs::create_dir_all(out).map_err(Error::io(out))?;
            cfg.save_into(out)?;
            let log_path = out.join("loss.tsv");
            let mut log = fs::File::create(&log_path).map_err(Error::io(&log_path))?;
            let mut io_err = None;
            let family = if *las { Family::Las } else { Family::Clas };
            let model = train_model(&cfg, first.features.cols(), vocab, &utts, family, |s| {
                if io_err.is_none() {
                    io_err = log.write_all(loss_line(s).as_bytes()).err();
                }
            })?;
            if let Some(e) = io_err {
                return Err(Error::io(&log_path)(e));
            }
            save_model(out, &model)
        }
        Command::Decode {
            model,
            manifest,
            out,
            empty_bias,
            context,
            ..
        } => {
            let model = load_model(model)?;
            let utts = read_manifest(manifest)?;
            let bias = if *empty_bias {
                BiasSource::Empty
            } else if cfg.conditioning.mode == ConditioningMode::Off {
                BiasSource::List
            } else {
                BiasSource::Conditioned(cfg.conditioning.clone())
            };
            let hyps: Vec<Decoded> = match context {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(Error::io(p))?;
                    let ctx = context_file::decode(&text, &p.display().to_string())?;
                    decode_set_with_context(&model, &utts, &bias, &ctx, &cfg.decode)?
                }
                None => decode_set(
                    &model,
                    &utts,
                    &Setup {
                        bias,
                        fusion: Some(cfg.fusion),
                        decode: cfg.decode,
                    },
                )?,
            };
            fs::create_dir_all(out).map_err(Error::io(out))?;
            cfg.save_into(out)?;
            write_file(&out.join("hyps.tsv"), &hypothesis_lines(&hyps))
        }
        Command::Eval { hyps, manifest, out } => {
            let records = read_records(manifest)?;
            let text = fs::read_to_string(hyps).map_err(Error::io(hyps))?;
            let mut by_id = std::collections::HashMap::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
                let mut f = line.split('\t');
                let (Some(id), Some(t)) = (f.next(), f.next()) else {
                    return Err(Error::format(hyps, format!("line {}: expected id<TAB>text", i + 1)));
                };
                by_id.insert(id.to_string(), t.to_string());
            }
            let mut pairs = Vec::with_capacity(records.len());
            for r in &records {
                let h = by_id
                    .get(&r.id)
                    .ok_or_else(|| Error::format(hyps, format!("no hypothesis for {}", r.id)))?;
                pairs.push((h.as_str(), r.transcript.as_str()));
            }
            let report = clas_core::eval::corpus_wer(pairs)?;
            fs::create_dir_all(out).map_err(Error::io(out))?;
            cfg.save_into(out)?;
            write_file(&out.join("wer.tsv"), &format!("{}\n{}\n", wer_header(), wer_row(&report)))
        }
        Command::CompileContext {
            phrases, out, alphabet, ..
        } => {
            let phrases = read_phrases(phrases)?;
            let alphabet = match alphabet {
                Some(a) => GraphemeAlphabet::new(a),
                None => alphabet_of(&Vocab::from_graphemes(&cfg.task.graphemes())?),
            };
            let ctx = compile_context(&phrases, &alphabet, cfg.fusion.strategy, cfg.fusion.bonus)?;
            write_file(out, &context_file::encode(&ctx))
        }
        Command::Sweep { spec, out } => {
            let s = SweepSpec::load(spec)?;
            let base = spec.parent().map(Path::to_path_buf).unwrap_or_default();
            run_sweep(&s, &base, &cfg, out).map(|_| ())
        }
        Command::DumpAttention { model, manifest, out } => {
            let model = load_model(model)?;
            let utts = read_manifest(manifest)?;
            fs::create_dir_all(out).map_err(Error::io(out))?;
            cfg.save_into(out)?;
            let decode = DecodeConfig {
                record_attention: true,
                lambda: 0.0,
                ..cfg.decode
            };
            for u in &utts {
                let bias = battery::prepare_bias(&model, u, &BiasSource::List)?;
                let hyp = beam_search::<NoFusion>(&model, &u.features, &bias, None, &decode)?;
                let best = hyp.best();
                let mut s = String::from("step\ttoken\t<no-bias>");
                for l in bias.labels() {
                    s.push('\t');
                    s.push_str(l);
                }
                s.push('\n');
                for (t, row) in best.attention.iter().enumerate() {
                    let tok = best.tokens.get(t).copied().unwrap_or(model.vocab().eos());
                    s.push_str(&format!("{t}\t{}", model.vocab().symbol(tok)?.replace(' ', "<space>")));
                    for a in row {
                        s.push_str(&format!("\t{a:.6}"));
                    }
                    s.push('\n');
                }
                write_file(&out.join(format!("{}.tsv", u.id)), &s)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
