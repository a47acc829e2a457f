//! Command-line front end: vocab → train → decode/ensemble-decode →
//! score/reward, with a provenance manifest written beside every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use captionforge::decode::{beam_search, greedy_decode, sample_decode, Decoded, PolicyStepper};
use captionforge::ensemble::{ensemble_beam_search, EnsembleModel, EnsembleWeights, FusionMode};
use captionforge::io::{
    load_checkpoint, load_ensemble_spec, load_weights, read_candidates, read_features,
    read_refs, save_checkpoint, save_vocabulary, Checkpoint, EnsembleSpecWeights, RunManifest,
};
use captionforge::metrics::{score_corpus, CiderVariant, IdfTable, CIDER_MAX_N};
use captionforge::policy::{
    mean_greedy_reward, train_scst, train_xent, PolicyDims, PolicyParams, Schedule, ScstItem,
    TrainConfig, XentExample,
};
use captionforge::reward::{hybrid_reward, HybridWeights};
use captionforge::text_preprocess::{Caption, Language, Vocabulary};
use captionforge::{Error, Result};

#[derive(Parser)]
#[command(name = "captionforge", version, long_version = LONG_VERSION)]
struct Cli {
    /// Worker threads for corpus-level parallelism (falls back to
    /// CAPTIONFORGE_JOBS, then to the number of cores). Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncheckpoint format version: 1"
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LanguageArg {
    English,
    Chinese,
}

impl From<LanguageArg> for Language {
    fn from(arg: LanguageArg) -> Language {
        match arg {
            LanguageArg::English => Language::English,
            LanguageArg::Chinese => Language::Chinese,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CiderArg {
    D,
    Plain,
}

impl From<CiderArg> for CiderVariant {
    fn from(arg: CiderArg) -> CiderVariant {
        match arg {
            CiderArg::D => CiderVariant::D,
            CiderArg::Plain => CiderVariant::Plain,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PhaseArg {
    Xe,
    Scst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FusionArg {
    Probability,
    Log,
}

impl From<FusionArg> for FusionMode {
    fn from(arg: FusionArg) -> FusionMode {
        match arg {
            FusionArg::Probability => FusionMode::Probability,
            FusionArg::Log => FusionMode::Log,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary from a reference corpus.
    Vocab(VocabArgs),
    /// Score a candidate corpus against references.
    Score(ScoreArgs),
    /// Emit the per-candidate hybrid reward.
    Reward(RewardArgs),
    /// Train the toy policy (cross-entropy or self-critical phase).
    Train(TrainArgs),
    /// Decode captions from a checkpoint.
    Decode(DecodeArgs),
    /// Decode captions from a fused ensemble of checkpoints.
    EnsembleDecode(EnsembleDecodeArgs),
}

#[derive(Args)]
struct VocabArgs {
    /// Reference corpus, one {"id", "refs": [...]} object per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep tokens occurring at least this many times.
    #[arg(long, default_value_t = 5)]
    min_count: usize,
    #[arg(long, value_enum, default_value_t = LanguageArg::English)]
    language: LanguageArg,
}

#[derive(Args)]
struct ScoreArgs {
    /// Candidates, one {"id", "caption"} object per line.
    #[arg(long)]
    cands: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = CiderArg::D)]
    cider: CiderArg,
    #[arg(long, value_enum, default_value_t = LanguageArg::English)]
    language: LanguageArg,
}

#[derive(Args)]
struct RewardArgs {
    #[arg(long)]
    cands: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    /// Hybrid weight config JSON; defaults to the mixture
    /// 1.0·CIDEr-D + 0.5·BLEU-4 + 1.0·METEOR + 0.5·ROUGE-L.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = LanguageArg::English)]
    language: LanguageArg,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    phase: PhaseArg,
    /// Reference corpus used as training captions.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Hybrid weight config (scst phase only).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Warm-start checkpoint; required for the scst phase.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Epochs for this phase; defaults to 2 for xe and 5 for scst.
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Constant learning rate; omit to use the warmup-then-decay schedule.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    label_smoothing: f64,
    #[arg(long, default_value_t = 30)]
    max_len: usize,
    /// Vocabulary cutoff when building a fresh model (no --init).
    #[arg(long, default_value_t = 5)]
    min_count: usize,
    /// Epochs already consumed by an earlier xe run, so the schedule keeps
    /// decaying across phases.
    #[arg(long, default_value_t = 2)]
    xe_epochs_done: u32,
    #[arg(long, value_enum, default_value_t = LanguageArg::English)]
    language: LanguageArg,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    beam: usize,
    #[arg(long, default_value_t = 30)]
    max_len: usize,
    /// Rank beam hypotheses by raw log-probability instead of per-step.
    #[arg(long)]
    no_length_norm: bool,
    /// Multinomial sampling instead of beam search.
    #[arg(long)]
    sample: bool,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EnsembleDecodeArgs {
    /// Ensemble spec JSON: {"members": [...], "weights": [...] | "uniform"}.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    beam: usize,
    #[arg(long, default_value_t = 30)]
    max_len: usize,
    #[arg(long, value_enum, default_value_t = FusionArg::Probability)]
    fusion: FusionArg,
    #[arg(long)]
    no_length_norm: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = init_thread_pool(cli.jobs) {
        eprintln!("error: {err}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NonFinite(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn init_thread_pool(jobs: Option<usize>) -> Result<()> {
    let jobs = match jobs {
        Some(n) => Some(n),
        None => match std::env::var("CAPTIONFORGE_JOBS") {
            Ok(raw) => Some(raw.parse().map_err(|_| {
                Error::InvalidInput(format!("CAPTIONFORGE_JOBS must be a number, got {raw:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidInput("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Vocab(args) => cmd_vocab(args),
        Command::Score(args) => cmd_score(args),
        Command::Reward(args) => cmd_reward(args),
        Command::Train(args) => cmd_train(args),
        Command::Decode(args) => cmd_decode(args),
        Command::EnsembleDecode(args) => cmd_ensemble_decode(args),
    }
}

fn write_jsonl(path: &Path, lines: &[serde_json::Value]) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for line in lines {
        serde_json::to_writer(&mut file, line)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn cmd_vocab(args: VocabArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "vocab",
        None,
        json!({"min_count": args.min_count, "language": Language::from(args.language)}),
    );
    manifest.record_input(&args.corpus)?;
    let refs = read_refs(&args.corpus, args.language.into())?;
    let captions: Vec<Caption> = refs
        .iter()
        .flat_map(|(id, entry)| {
            entry.refs.iter().enumerate().map(move |(i, tokens)| Caption {
                id: format!("{id}#{i}"),
                tokens: tokens.clone(),
                language: entry.language,
            })
        })
        .collect();
    let vocab = Vocabulary::build(&captions, args.min_count)?;
    save_vocabulary(&args.out, &vocab)?;
    manifest.write_beside(&args.out)?;
    println!("vocabulary: {} tokens -> {}", vocab.len(), args.out.display());
    Ok(())
}

fn ensure_finite(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{name} is {value}")))
    }
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "score",
        None,
        json!({"cider": format!("{:?}", CiderVariant::from(args.cider)),
               "language": Language::from(args.language)}),
    );
    manifest.record_input(&args.cands)?;
    manifest.record_input(&args.refs)?;
    let cands = read_candidates(&args.cands, args.language.into())?;
    let refs = read_refs(&args.refs, args.language.into())?;
    let ref_sets: BTreeMap<String, Vec<Vec<String>>> = refs
        .iter()
        .map(|(id, entry)| (id.clone(), entry.refs.clone()))
        .collect();
    let all_sets: Vec<Vec<Vec<String>>> = ref_sets.values().cloned().collect();
    let idf = IdfTable::build(&all_sets, CIDER_MAX_N);
    let report = score_corpus(&cands, &ref_sets, &idf, args.cider.into())?;
    let value = serde_json::to_value(&report)?;
    for (key, v) in value["corpus"].as_object().expect("corpus is an object") {
        ensure_finite(key, v.as_f64().unwrap_or(f64::NAN))?;
    }
    write_json(&args.out, &value)?;
    manifest.write_beside(&args.out)?;
    println!("report -> {}", args.out.display());
    Ok(())
}

fn resolve_weights(path: &Option<PathBuf>) -> Result<HybridWeights> {
    match path {
        Some(p) => load_weights(p),
        None => Ok(HybridWeights::default()),
    }
}

fn cmd_reward(args: RewardArgs) -> Result<()> {
    let weights = resolve_weights(&args.weights)?;
    let mut manifest = RunManifest::new(
        "reward",
        None,
        json!({"weights": weights, "language": Language::from(args.language)}),
    );
    manifest.record_input(&args.cands)?;
    manifest.record_input(&args.refs)?;
    if let Some(w) = &args.weights {
        manifest.record_input(w)?;
    }
    let cands = read_candidates(&args.cands, args.language.into())?;
    let refs = read_refs(&args.refs, args.language.into())?;
    let all_sets: Vec<Vec<Vec<String>>> =
        refs.values().map(|entry| entry.refs.clone()).collect();
    let idf = IdfTable::build(&all_sets, CIDER_MAX_N);
    let rewards: Result<Vec<serde_json::Value>> = cands
        .par_iter()
        .map(|cand| {
            let entry = refs.get(&cand.id).ok_or_else(|| {
                Error::MismatchedIds(format!("no references for id {}", cand.id))
            })?;
            let r = hybrid_reward(cand, &entry.refs, &weights, &idf)?;
            ensure_finite(&format!("reward for id {}", cand.id), r)?;
            Ok(json!({"id": cand.id, "reward": r}))
        })
        .collect();
    write_jsonl(&args.out, &rewards?)?;
    manifest.write_beside(&args.out)?;
    println!("rewards -> {}", args.out.display());
    Ok(())
}

struct TrainData {
    examples: Vec<XentExample>,
    items: Vec<ScstItem>,
    idf: IdfTable,
}

fn load_train_data(
    corpus: &Path,
    features: &Path,
    vocab: &Vocabulary,
    language: Language,
) -> Result<TrainData> {
    let refs = read_refs(corpus, language)?;
    let feats = read_features(features)?;
    let mut examples = Vec::new();
    let mut items = Vec::new();
    let mut ref_sets = Vec::new();
    for (id, feature) in feats {
        let entry = refs.get(&id).ok_or_else(|| {
            Error::MismatchedIds(format!("no captions for feature id {id}"))
        })?;
        for tokens in &entry.refs {
            let caption = Caption {
                id: id.clone(),
                tokens: tokens.clone(),
                language: entry.language,
            };
            examples.push(XentExample {
                id: id.clone(),
                feature: feature.clone(),
                encoded: vocab.encode(&caption),
            });
        }
        items.push(ScstItem {
            id: id.clone(),
            feature,
            refs: entry.refs.clone(),
            language: entry.language,
        });
        ref_sets.push(entry.refs.clone());
    }
    Ok(TrainData {
        examples,
        items,
        idf: IdfTable::build(&ref_sets, CIDER_MAX_N),
    })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let schedule = match args.lr {
        Some(lr) => Schedule::Constant(lr),
        None => Schedule::TransformerSchedule,
    };
    let epochs = args.epochs.unwrap_or(match args.phase {
        PhaseArg::Xe => 2,
        PhaseArg::Scst => 5,
    });
    let weights = resolve_weights(&args.weights)?;

    let (params, vocab, language) = match &args.init {
        Some(init) => load_checkpoint(init)?.into_parts()?,
        None => {
            if args.phase == PhaseArg::Scst {
                return Err(Error::InvalidInput(
                    "the scst phase needs --init with the checkpoint from the xe phase".into(),
                ));
            }
            let language: Language = args.language.into();
            let refs = read_refs(&args.corpus, language)?;
            let captions: Vec<Caption> = refs
                .iter()
                .flat_map(|(id, entry)| {
                    entry.refs.iter().enumerate().map(move |(i, tokens)| Caption {
                        id: format!("{id}#{i}"),
                        tokens: tokens.clone(),
                        language: entry.language,
                    })
                })
                .collect();
            let vocab = Vocabulary::build(&captions, args.min_count)?;
            let feats = read_features(&args.features)?;
            let feature_dim = feats
                .first()
                .map(|(_, f)| f.len())
                .ok_or(Error::EmptyCorpus)?;
            let dims = PolicyDims {
                vocab: vocab.len(),
                hidden: args.hidden,
                feature: feature_dim,
            };
            (PolicyParams::init(dims, args.seed), vocab, language)
        }
    };

    let config = TrainConfig {
        batch_size: args.batch_size,
        label_smoothing: args.label_smoothing,
        xe_epochs: if args.phase == PhaseArg::Xe { epochs } else { args.xe_epochs_done },
        rl_epochs: if args.phase == PhaseArg::Scst { epochs } else { 0 },
        seed: args.seed,
        schedule,
        max_len: args.max_len,
    };
    let mut manifest = RunManifest::new(
        "train",
        Some(args.seed),
        json!({
            "phase": format!("{:?}", args.phase),
            "epochs": epochs,
            "config": config,
            "hidden": args.hidden,
            "weights": weights,
            "language": language,
        }),
    );
    manifest.record_input(&args.corpus)?;
    manifest.record_input(&args.features)?;
    if let Some(w) = &args.weights {
        manifest.record_input(w)?;
    }
    if let Some(init) = &args.init {
        manifest.record_input(init)?;
    }

    let data = load_train_data(&args.corpus, &args.features, &vocab, language)?;
    let trained = match args.phase {
        PhaseArg::Xe => {
            let (params, curve) = train_xent(params, &data.examples, &config)?;
            for (i, loss) in curve.iter().enumerate() {
                ensure_finite("training loss", *loss)?;
                println!("epoch {}: xe loss {loss:.6}", i + 1);
            }
            params
        }
        PhaseArg::Scst => {
            let base = mean_greedy_reward(
                &params, &data.items, &weights, &data.idf, &vocab, config.max_len,
            )?;
            println!("initial mean greedy reward {base:.6}");
            let (params, curve) =
                train_scst(params, &data.items, &weights, &data.idf, &vocab, &config)?;
            for (i, r) in curve.iter().enumerate() {
                ensure_finite("mean greedy reward", *r)?;
                println!("epoch {}: mean greedy reward {r:.6}", i + 1);
            }
            params
        }
    };
    for &p in trained.flat() {
        if !p.is_finite() {
            return Err(Error::NonFinite("trained parameters".into()));
        }
    }
    save_checkpoint(&args.out, &Checkpoint::new(&trained, &vocab, language))?;
    manifest.write_beside(&args.out)?;
    println!("checkpoint -> {}", args.out.display());
    Ok(())
}

fn decode_to_line(
    id: &str,
    decoded: &Decoded,
    vocab: &Vocabulary,
) -> Result<serde_json::Value> {
    let tokens = vocab.decode_ids(&decoded.ids)?;
    ensure_finite(&format!("log-probability for id {id}"), decoded.log_prob)?;
    Ok(json!({
        "id": id,
        "caption": tokens.join(" "),
        "logprob": decoded.log_prob,
    }))
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "decode",
        Some(args.seed),
        json!({
            "beam": args.beam,
            "max_len": args.max_len,
            "length_norm": !args.no_length_norm,
            "sample": args.sample,
            "temperature": args.temperature,
        }),
    );
    manifest.record_input(&args.ckpt)?;
    manifest.record_input(&args.features)?;
    let (params, vocab, _) = load_checkpoint(&args.ckpt)?.into_parts()?;
    let feats = read_features(&args.features)?;
    let lines: Result<Vec<serde_json::Value>> = feats
        .par_iter()
        .enumerate()
        .map(|(idx, (id, feature))| {
            let model = PolicyStepper { params: &params, feature: feature.clone() };
            let decoded = if args.sample {
                sample_decode(
                    &model,
                    args.max_len,
                    args.seed.wrapping_add(idx as u64),
                    args.temperature,
                )?
            } else if args.beam == 1 {
                greedy_decode(&model, args.max_len)?
            } else {
                beam_search(&model, args.beam, args.max_len, !args.no_length_norm)?
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::InvalidInput("empty beam".into()))?
            };
            decode_to_line(id, &decoded, &vocab)
        })
        .collect();
    write_jsonl(&args.out, &lines?)?;
    manifest.write_beside(&args.out)?;
    println!("captions -> {}", args.out.display());
    Ok(())
}

fn cmd_ensemble_decode(args: EnsembleDecodeArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "ensemble-decode",
        None,
        json!({
            "beam": args.beam,
            "max_len": args.max_len,
            "fusion": format!("{:?}", args.fusion),
            "length_norm": !args.no_length_norm,
        }),
    );
    manifest.record_input(&args.spec)?;
    manifest.record_input(&args.features)?;
    let spec = load_ensemble_spec(&args.spec)?;
    if spec.members.is_empty() {
        return Err(Error::InvalidInput("ensemble spec lists no members".into()));
    }
    let spec_dir = args.spec.parent().unwrap_or_else(|| Path::new("."));
    let mut members = Vec::new();
    for member in &spec.members {
        let path = spec_dir.join(member);
        manifest.record_input(&path)?;
        members.push(load_checkpoint(&path)?.into_parts()?);
    }
    let vocab = members[0].1.clone();
    for (_, v, _) in &members {
        if *v != vocab {
            return Err(Error::MismatchedVocab(
                "ensemble members must share one vocabulary".into(),
            ));
        }
    }
    let weights = match &spec.weights {
        EnsembleSpecWeights::Missing => EnsembleWeights::uniform(members.len())?,
        EnsembleSpecWeights::Named(name) if name == "uniform" => {
            EnsembleWeights::uniform(members.len())?
        }
        EnsembleSpecWeights::Named(name) => {
            return Err(Error::InvalidInput(format!(
                "unknown ensemble weighting {name:?}; use \"uniform\" or a list"
            )));
        }
        EnsembleSpecWeights::Explicit(w) => EnsembleWeights::new(w.clone())?,
    };

    let feats = read_features(&args.features)?;
    let lines: Result<Vec<serde_json::Value>> = feats
        .par_iter()
        .map(|(id, feature)| {
            let steppers: Vec<PolicyStepper> = members
                .iter()
                .map(|(params, _, _)| PolicyStepper { params, feature: feature.clone() })
                .collect();
            let ensemble = EnsembleModel::new(steppers, weights.clone(), args.fusion.into())?;
            let decoded =
                ensemble_beam_search(&ensemble, args.beam, args.max_len, !args.no_length_norm)?
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::InvalidInput("empty beam".into()))?;
            decode_to_line(id, &decoded, &vocab)
        })
        .collect();
    write_jsonl(&args.out, &lines?)?;
    manifest.write_beside(&args.out)?;
    println!("captions -> {}", args.out.display());
    Ok(())
}
