//! Command-line surface for the aspect/opinion co-extraction model.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rncrf::corpus::{
    build_vocab, corpus_stats, load_embeddings, parse_conll, rewrite_labels, Corpus, Span,
};
use rncrf::error::Error;
use rncrf::eval::{chunk_f1, tag, tag_labels, EvalReport};
use rncrf::features::{
    extract_name_lists, read_name_lists, write_name_lists, FeatureConfig, SentimentLexicon,
};
use rncrf::training::{
    grad_check, init_model, load_checkpoint, randomize_crf_weights, run_training,
    save_checkpoint, EpochStats, FeatureResources, Model, TrainConfig, TrainMode,
};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "rncrf",
    about = "Joint aspect/opinion term extraction over dependency trees",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the tree network only and save the resulting checkpoint.
    Pretrain(TrainArgs),
    /// Pretrain (unless disabled) and jointly train the full model.
    Train(TrainArgs),
    /// Label a corpus file with a trained model.
    Tag(TagArgs),
    /// Chunk-level precision/recall/F1 of predictions against gold labels.
    Eval(EvalArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Corpus summary counts.
    Stats(StatsArgs),
    /// Extract aspect name lists from a labeled corpus.
    ExtractFeatures(ExtractArgs),
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_features(s: &str) -> Result<String, String> {
    let mut probe = FeatureConfig::default();
    probe
        .set_flags(s)
        .map_err(|e| e.to_string())
        .map(|_| s.to_string())
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Training corpus in the tab-separated column format.
    #[arg(long)]
    train: PathBuf,
    /// Development corpus; per-epoch F1 is reported when given.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Output checkpoint path; a `<path>.config` sidecar is written next to it.
    #[arg(long)]
    model: PathBuf,
    /// Config file of key=value lines; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TrainMode>,
    /// Hidden/embedding dimension d.
    #[arg(long)]
    dim: Option<usize>,
    /// Context-window parameter T (each unary clique reads 2T+1 vectors).
    #[arg(long)]
    window: Option<usize>,
    /// Pretraining mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Joint-phase batch size (1 = per-sentence updates).
    #[arg(long)]
    joint_batch_size: Option<usize>,
    #[arg(long)]
    pretrain_lr: Option<f64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Initial joint-phase learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Decay constant κ in lr/(1 + epoch/κ).
    #[arg(long)]
    decay: Option<f64>,
    /// Joint-phase epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pretrained embedding text file; absent columns are seeded uniformly.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Opinion-word lexicon, one word per line.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Name-list file ([A]/[B] sections); extracted from the corpus if
    /// needed and not given.
    #[arg(long)]
    name_lists: Option<PathBuf>,
    /// Comma-separated feature blocks: pos,namelist,lexicon.
    #[arg(long, value_parser = parse_features)]
    features: Option<String>,
    /// Minimum corpus frequency for a full aspect term to enter list A.
    #[arg(long)]
    name_list_min_freq: Option<usize>,
    /// Minimum aspect probability for a word to enter list B.
    #[arg(long)]
    name_list_min_prob: Option<f64>,
    /// Keep the embedding matrix fixed.
    #[arg(long)]
    freeze_embeddings: bool,
    /// Global gradient-norm clip.
    #[arg(long, value_name = "NORM")]
    clip: Option<f64>,
    /// Vocabulary frequency threshold.
    #[arg(long)]
    min_count: Option<usize>,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus file to label; its label column is rewritten, everything else
    /// is preserved.
    #[arg(long)]
    input: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config sidecar; defaults to `<model>.config` when that file exists.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<TrainMode>,
    #[arg(long, value_parser = parse_features)]
    features: Option<String>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    name_lists: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus with gold labels.
    #[arg(long)]
    gold: PathBuf,
    /// Corpus with predicted labels.
    #[arg(long)]
    pred: PathBuf,
    /// Also print machine-readable key=value lines.
    #[arg(long)]
    machine: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Hidden dimension of the random model.
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    window: usize,
    #[arg(long, value_parser = parse_mode, default_value = "rncrf")]
    mode: TrainMode,
    #[arg(long, value_parser = parse_features)]
    features: Option<String>,
    /// Corpus to pull the checked sentence from; a bundled synthetic
    /// sentence is used when omitted.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct StatsArgs {
    /// Corpus file to summarize.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    train: PathBuf,
    /// Output name-list file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    name_list_min_freq: usize,
    #[arg(long, default_value_t = 0.7)]
    name_list_min_prob: f64,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                let _ = err.print();
                std::process::exit(0);
            }
            let _ = err.print();
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        let code = match err {
            Error::NonFinite { .. } => 3,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pretrain(args) => cmd_train(args, false),
        Command::Train(args) => cmd_train(args, true),
        Command::Tag(args) => cmd_tag(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Stats(args) => cmd_stats(args),
        Command::ExtractFeatures(args) => cmd_extract(args),
    }
}

fn read_corpus(path: &Path) -> Result<Corpus, Error> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_conll(file)
}

/// Resolve the training configuration: defaults, then config file, then
/// command-line flags. Returns the config plus resource paths collected
/// from the file and flags.
fn resolve_config(
    args: &TrainArgs,
) -> Result<(TrainConfig, Option<PathBuf>, Option<PathBuf>), Error> {
    let mut config = TrainConfig::default();
    let mut lexicon_path = None;
    let mut name_list_path = None;
    if let Some(path) = &args.config {
        let file = File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        for (key, value) in config.apply_file(file)? {
            match key.as_str() {
                "lexicon" => lexicon_path = Some(PathBuf::from(value)),
                "name_lists" => name_list_path = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Data(format!(
                        "unknown key {other:?} in {}",
                        path.display()
                    )))
                }
            }
        }
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    if let Some(window) = args.window {
        config.window = window;
    }
    if let Some(batch) = args.batch_size {
        config.batch_size = batch;
    }
    if let Some(batch) = args.joint_batch_size {
        config.joint_batch_size = batch;
    }
    if let Some(lr) = args.pretrain_lr {
        config.pretrain_lr = lr;
    }
    if let Some(epochs) = args.pretrain_epochs {
        config.pretrain_epochs = epochs;
    }
    if let Some(lr) = args.lr {
        config.joint_lr = lr;
    }
    if let Some(decay) = args.decay {
        config.decay = decay;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(spec) = &args.features {
        config.features.set_flags(spec)?;
    }
    if let Some(freq) = args.name_list_min_freq {
        config.features.min_term_freq = freq;
    }
    if let Some(prob) = args.name_list_min_prob {
        config.features.min_word_prob = prob;
    }
    if args.freeze_embeddings {
        config.freeze_embeddings = true;
    }
    if let Some(clip) = args.clip {
        config.clip = Some(clip);
    }
    if let Some(min_count) = args.min_count {
        config.min_count = min_count;
    }
    if let Some(path) = &args.lexicon {
        lexicon_path = Some(path.clone());
    }
    if let Some(path) = &args.name_lists {
        name_list_path = Some(path.clone());
    }
    Ok((config, lexicon_path, name_list_path))
}

fn load_resources(
    config: &FeatureConfig,
    lexicon_path: Option<&Path>,
    name_list_path: Option<&Path>,
) -> Result<FeatureResources, Error> {
    let mut resources = FeatureResources::default();
    if config.lexicon {
        let path = lexicon_path.ok_or_else(|| {
            Error::Data("lexicon feature enabled but no --lexicon file given".into())
        })?;
        let file = File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        resources.lexicon = Some(SentimentLexicon::load(file)?);
    }
    if config.namelist {
        if let Some(path) = name_list_path {
            let file = File::open(path)
                .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
            resources.name_lists = Some(read_name_lists(file)?);
        }
        // Otherwise extraction from the training corpus happens at model
        // initialization.
    }
    Ok(resources)
}

fn epoch_line(stats: &EpochStats, dev: Option<(f64, f64)>) {
    let mut line = format!(
        "phase={} epoch={} loss_per_token={:.6} lr={:.6}",
        stats.phase, stats.epoch, stats.loss_per_token, stats.learning_rate
    );
    if let Some((aspect, opinion)) = dev {
        line.push_str(&format!(
            " dev_aspect_f1={aspect:.4} dev_opinion_f1={opinion:.4}"
        ));
    }
    println!("{line}");
}

fn dev_f1(model: &Model, dev: &Corpus) -> Result<(f64, f64), Error> {
    let gold: Vec<Vec<Span>> = dev.sentences.iter().map(|s| s.spans()).collect();
    let pred: Vec<Vec<Span>> = dev
        .sentences
        .iter()
        .map(|s| tag(model, s))
        .collect::<Result<_, _>>()?;
    let report = chunk_f1(&gold, &pred)?;
    Ok((report.aspect.f1, report.opinion.f1))
}

fn cmd_train(args: TrainArgs, joint: bool) -> Result<(), Error> {
    let corpus = read_corpus(&args.train)?;
    let (mut config, lexicon_path, mut name_list_path) = resolve_config(&args)?;
    if !joint {
        config.epochs = 0;
    }
    config.validate()?;
    let dev = args.dev.as_deref().map(read_corpus).transpose()?;

    let vocab = build_vocab(&corpus, config.min_count);
    let embeddings = match &args.embeddings {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
            load_embeddings(file, &vocab, config.dim, config.seed)?
        }
        None => load_embeddings(&b""[..], &vocab, config.dim, config.seed)?,
    };
    let resources = load_resources(
        &config.features,
        lexicon_path.as_deref(),
        name_list_path.as_deref(),
    )?;
    let extracted_here = config.features.namelist && resources.name_lists.is_none();

    let model = run_training(
        &corpus,
        &config,
        vocab,
        embeddings,
        resources,
        |stats| epoch_line(stats, None),
        |stats, model| {
            let scores = dev
                .as_ref()
                .and_then(|dev| dev_f1(model, dev).ok());
            epoch_line(stats, scores);
        },
    )?;

    if extracted_here {
        // Persist the extracted lists so tagging can reuse them.
        let lists = model
            .resources
            .name_lists
            .as_ref()
            .expect("extracted during initialization");
        let path = sibling_path(&args.model, "namelists");
        std::fs::write(&path, write_name_lists(lists))?;
        name_list_path = Some(path);
    }

    let file = File::create(&args.model)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", args.model.display())))?;
    save_checkpoint(&model, file)?;
    write_sidecar(
        &args.model,
        &model.config,
        lexicon_path.as_deref(),
        name_list_path.as_deref(),
    )?;

    if let Some(dev) = &dev {
        let (aspect, opinion) = dev_f1(&model, dev)?;
        println!("final dev_aspect_f1={aspect:.4} dev_opinion_f1={opinion:.4}");
    }
    println!("saved {}", args.model.display());
    Ok(())
}

fn sibling_path(model: &Path, suffix: &str) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    model.with_file_name(name)
}

fn write_sidecar(
    model_path: &Path,
    config: &TrainConfig,
    lexicon: Option<&Path>,
    name_lists: Option<&Path>,
) -> Result<(), Error> {
    let path = sibling_path(model_path, "config");
    let mut out = String::new();
    for (key, value) in config.to_key_values() {
        out.push_str(&format!("{key}={value}\n"));
    }
    if let Some(p) = lexicon {
        out.push_str(&format!("lexicon={}\n", p.display()));
    }
    if let Some(p) = name_lists {
        out.push_str(&format!("name_lists={}\n", p.display()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_tag(args: TagArgs) -> Result<(), Error> {
    let file = File::open(&args.model)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", args.model.display())))?;
    let mut model = load_checkpoint(file)?;

    // Layer the sidecar (explicit or discovered), then the flags.
    let mut sidecar = TrainConfig::default();
    let mut lexicon_path = None;
    let mut name_list_path = None;
    let config_path = args
        .config
        .clone()
        .or_else(|| {
            let default = sibling_path(&args.model, "config");
            default.exists().then_some(default)
        });
    if let Some(path) = config_path {
        let file = File::open(&path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        for (key, value) in sidecar.apply_file(file)? {
            match key.as_str() {
                "lexicon" => lexicon_path = Some(PathBuf::from(value)),
                "name_lists" => name_list_path = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Data(format!(
                        "unknown key {other:?} in {}",
                        path.display()
                    )))
                }
            }
        }
        model.config.mode = sidecar.mode;
        model.config.features = sidecar.features;
    }
    if let Some(mode) = args.mode {
        model.config.mode = mode;
    }
    if let Some(spec) = &args.features {
        model.config.features.set_flags(spec)?;
    }
    if let Some(path) = &args.lexicon {
        lexicon_path = Some(path.clone());
    }
    if let Some(path) = &args.name_lists {
        name_list_path = Some(path.clone());
    }
    model.resources = load_resources(
        &model.config.features,
        lexicon_path.as_deref(),
        name_list_path.as_deref(),
    )?;
    if model.config.features.namelist && model.resources.name_lists.is_none() {
        return Err(Error::Data(
            "name-list feature enabled but no --name-lists file given".into(),
        ));
    }
    model.validate()?;

    let input = std::fs::read_to_string(&args.input)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", args.input.display())))?;
    let corpus = parse_conll(input.as_bytes())?;
    let labels = corpus
        .sentences
        .iter()
        .map(|s| tag_labels(&model, s))
        .collect::<Result<Vec<_>, _>>()?;
    let output = rewrite_labels(&input, &labels)?;
    match &args.out {
        Some(path) => {
            let mut file = File::create(path)
                .map_err(|e| Error::Data(format!("cannot create {}: {e}", path.display())))?;
            file.write_all(output.as_bytes())?;
        }
        None => print!("{output}"),
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let gold = read_corpus(&args.gold)?;
    let pred = read_corpus(&args.pred)?;
    let gold_spans: Vec<Vec<Span>> = gold.sentences.iter().map(|s| s.spans()).collect();
    let pred_spans: Vec<Vec<Span>> = pred.sentences.iter().map(|s| s.spans()).collect();
    let report: EvalReport = chunk_f1(&gold_spans, &pred_spans)?;
    print!("{report}");
    if args.machine {
        for (key, value) in report.to_key_values() {
            println!("{key}={value}");
        }
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), Error> {
    let corpus = match &args.train {
        Some(path) => read_corpus(path)?,
        None => parse_conll(
            "1\twe\tPRON\t2\tnsubj\tO\n\
             2\tlove\tVERB\t0\troot\tBO\n\
             3\tthe\tDET\t5\tdet\tO\n\
             4\tdelivery\tNOUN\t5\tdet\tBA\n\
             5\ttimes\tNOUN\t2\tdobj\tIA\n"
                .as_bytes(),
        )?,
    };
    if corpus.is_empty() {
        return Err(Error::Data("gradcheck corpus has no sentences".into()));
    }
    let mut config = TrainConfig {
        mode: args.mode,
        dim: args.dim,
        window: args.window,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let resources = match &args.features {
        Some(spec) => {
            config.features.set_flags(spec)?;
            let mut resources = FeatureResources::default();
            if config.features.lexicon {
                // A gradient check only needs the feature bits to exist, so
                // every corpus word doubles as an opinion word.
                let mut lexicon = SentimentLexicon::default();
                for sentence in &corpus.sentences {
                    for token in &sentence.tokens {
                        lexicon.words.insert(token.surface.to_lowercase());
                    }
                }
                resources.lexicon = Some(lexicon);
            }
            resources
        }
        None => FeatureResources::default(),
    };
    config.validate()?;
    let vocab = build_vocab(&corpus, 1);
    let embeddings = load_embeddings(&b""[..], &vocab, config.dim, config.seed)?;
    let mut model = init_model(&corpus, &config, vocab, embeddings, resources)?;
    randomize_crf_weights(&mut model, config.seed.wrapping_add(1), 0.4);

    let report = grad_check(&model, &corpus.sentences[0], args.epsilon)?;
    print!("{report}");
    let max = report.max_rel_err();
    if report.passes(args.tolerance) {
        println!("gradcheck max_rel_err={max:.3e} tolerance={:.1e} PASS", args.tolerance);
        Ok(())
    } else {
        println!("gradcheck max_rel_err={max:.3e} tolerance={:.1e} FAIL", args.tolerance);
        std::process::exit(3);
    }
}

fn cmd_stats(args: StatsArgs) -> Result<(), Error> {
    let corpus = read_corpus(&args.input)?;
    let stats = corpus_stats(&corpus);
    println!("sentences={}", stats.sentences);
    println!("tokens={}", stats.tokens);
    println!("aspect_spans={}", stats.aspect_spans);
    println!("opinion_spans={}", stats.opinion_spans);
    println!(
        "label_mode={}",
        match stats.mode {
            rncrf::corpus::LabelMode::Full => "full",
            rncrf::corpus::LabelMode::AspectOnly => "aspect-only",
        }
    );
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<(), Error> {
    let corpus = read_corpus(&args.train)?;
    let lists = extract_name_lists(&corpus, args.name_list_min_freq, args.name_list_min_prob)?;
    std::fs::write(&args.out, write_name_lists(&lists))
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "wrote {} terms and {} words to {}",
        lists.terms.len(),
        lists.words.len(),
        args.out.display()
    );
    Ok(())
}
