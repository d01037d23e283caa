use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kabem::corpus::{
    generate_synthetic, load_dialogues, load_labels, save_dialogues, save_labels, Dialogue, GenConfig, Labels,
    Phenomena,
};
use kabem::decoder::TurnPrediction;
use kabem::knowledge::{load_triples, train_transe, KgEmbeddings, TransEConfig, TripleStore};
use kabem::model::Variant;
use kabem::trainer::{evaluate, predict_corpus, score, train, Checkpoint, TrainConfig};

#[derive(Parser)]
#[command(
    name = "kabem",
    version,
    about = "Knowledge-augmented joint dialogue act detection and slot filling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/test corpus and its knowledge base.
    GenData(GenDataArgs),
    /// Train TransE embeddings for a triple file.
    BuildKb(BuildKbArgs),
    /// Train a model and write its checkpoint and run log.
    Train(TrainArgs),
    /// Score a checkpoint (or a prediction file) against a labeled corpus.
    Eval(EvalArgs),
    /// Write per-turn predictions as JSON lines.
    Predict(PredictArgs),
    /// Train all four variants on one corpus and compare them.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Generator settings as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildKbArgs {
    #[arg(long)]
    triples: PathBuf,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelFlags {
    /// Flat key=value training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
}

impl ModelFlags {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = &self.variant {
            cfg.model.variant = Variant::parse(v)?;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training dialogues (JSON lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Knowledge triples (TSV).
    #[arg(long)]
    triples: PathBuf,
    /// Pretrained TransE embeddings; trained on the fly when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    /// Checkpoint path. The run log goes next to it with a `.runlog.jsonl` suffix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, required_unless_present = "predictions")]
    checkpoint: Option<PathBuf>,
    /// Score an existing prediction file instead of running a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    predictions: Option<PathBuf>,
    /// Phenomena annotations for the restricted scores; defaults to
    /// `phenomena.json` beside the corpus when present.
    #[arg(long)]
    phenomena: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Dump per-token triple weights and gate values.
    #[arg(long)]
    explain: bool,
    /// Prediction file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Directory holding train.jsonl, test.jsonl and triples.tsv; the
    /// default synthetic corpus for `--seed` is generated when absent.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    /// Directory for per-variant checkpoints, logs and the comparison table.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::BuildKb(a) => build_kb(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let causes: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", causes.join(": "));
            ExitCode::FAILURE
        }
    }
}

fn print_config(pairs: &[(impl AsRef<str>, impl AsRef<str>)]) {
    println!("# resolved config");
    for (k, v) in pairs {
        println!("{}={}", k.as_ref(), v.as_ref());
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let cfg: GenConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => GenConfig::default(),
    };
    print_config(&[
        ("seed", a.seed.to_string()),
        ("train_dialogues", cfg.train_dialogues.to_string()),
        ("test_dialogues", cfg.test_dialogues.to_string()),
        ("knowledge_rate", cfg.knowledge_rate.to_string()),
        ("context_rate", cfg.context_rate.to_string()),
        ("turns", format!("{}..={}", cfg.min_turns, cfg.max_turns)),
        ("domains", cfg.domains.join(",")),
        ("out", a.out.display().to_string()),
    ]);
    let corpus = generate_synthetic(&cfg, a.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_dialogues(&corpus.train, &a.out.join("train.jsonl"))?;
    save_dialogues(&corpus.test, &a.out.join("test.jsonl"))?;
    TripleStore::from_triples(corpus.triples.clone()).save(&a.out.join("triples.tsv"))?;
    save_labels(corpus.labels.acts.labels(), &a.out.join("acts.txt"))?;
    save_labels(&corpus.labels.slots, &a.out.join("slots.txt"))?;
    write_json(&a.out.join("phenomena.json"), &serde_json::to_value(&corpus.phenomena)?)?;
    write_json(&a.out.join("gen_config.json"), &serde_json::to_value(&cfg)?)?;
    println!(
        "wrote {} train / {} test dialogues, {} triples, {} context turns, {} knowledge spans to {}",
        corpus.train.len(),
        corpus.test.len(),
        corpus.triples.len(),
        corpus.phenomena.context_turns.len(),
        corpus.phenomena.knowledge_spans.len(),
        a.out.display()
    );
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn build_kb(a: BuildKbArgs) -> Result<()> {
    let cfg = TransEConfig {
        dim: a.dim,
        epochs: a.epochs,
        seed: a.seed,
        ..TransEConfig::default()
    };
    print_config(&[
        ("triples", a.triples.display().to_string()),
        ("dim", cfg.dim.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("margin", cfg.margin.to_string()),
        ("lr", cfg.lr.to_string()),
        ("seed", cfg.seed.to_string()),
        ("out", a.out.display().to_string()),
    ]);
    let store = load_kb(&a.triples)?;
    let emb = train_transe(&store, cfg)?;
    emb.save(&a.out)?;
    println!(
        "wrote {} entity and {} relation vectors to {}",
        emb.entities.len(),
        emb.relations.len(),
        a.out.display()
    );
    Ok(())
}

fn load_kb(path: &Path) -> Result<TripleStore> {
    let (store, report) = load_triples(path)?;
    if !report.malformed.is_empty() {
        eprintln!(
            "warning: skipped {} malformed triple lines in {}",
            report.malformed.len(),
            path.display()
        );
    }
    Ok(store)
}

/// Label inventories from `acts.txt` / `slots.txt` beside the corpus, or
/// from the corpus itself.
fn labels_for(corpus: &Path, dialogues: &[Dialogue]) -> Result<Labels> {
    let dir = corpus.parent().unwrap_or(Path::new("."));
    let (acts, slots) = (dir.join("acts.txt"), dir.join("slots.txt"));
    if acts.exists() && slots.exists() {
        Ok(Labels::new(load_labels(&acts)?, load_labels(&slots)?)?)
    } else {
        Ok(Labels::from_dialogues(dialogues)?)
    }
}

fn embeddings_for(store: &TripleStore, path: Option<&Path>, cfg: &TrainConfig) -> Result<KgEmbeddings> {
    match path {
        Some(p) => Ok(KgEmbeddings::load(p)?),
        None => Ok(train_transe(
            store,
            TransEConfig {
                dim: cfg.model.kg_dim,
                seed: cfg.seed,
                ..TransEConfig::default()
            },
        )?),
    }
}

fn runlog_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".runlog.jsonl");
    PathBuf::from(s)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = a.model.resolve()?;
    cfg.checkpoint = Some(a.out.clone());
    print_config(&cfg.pairs());
    let dialogues = load_dialogues(&a.corpus, None)?;
    let labels = labels_for(&a.corpus, &dialogues)?;
    let store = load_kb(&a.triples)?;
    let emb = embeddings_for(&store, a.embeddings.as_deref(), &cfg)?;
    let (_, log) = train(&dialogues, &labels, &store, &emb, &cfg)?;
    let log_path = runlog_path(&a.out);
    log.save(&log_path)?;
    let best = &log.epochs[log.best_epoch - 1];
    println!(
        "best epoch {} of {}: validation act accuracy {:.4}, slot F1 {:.4}",
        log.best_epoch,
        log.epochs.len(),
        best.val_act_accuracy,
        best.val_slot_f1
    );
    println!("wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

fn load_phenomena(explicit: Option<&Path>, corpus: &Path) -> Result<Option<Phenomena>> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let p = corpus.parent().unwrap_or(Path::new(".")).join("phenomena.json");
            if !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
    ))
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    print_config(&[
        ("corpus", a.corpus.display().to_string()),
        (
            "checkpoint",
            a.checkpoint.as_ref().map_or(String::new(), |p| p.display().to_string()),
        ),
        (
            "predictions",
            a.predictions
                .as_ref()
                .map_or(String::new(), |p| p.display().to_string()),
        ),
        ("threshold", a.threshold.to_string()),
    ]);
    let dialogues = load_dialogues(&a.corpus, None)?;
    let phenomena = load_phenomena(a.phenomena.as_deref(), &a.corpus)?;
    // Restricted scores only make sense for the corpus the annotations describe.
    let phenomena = phenomena.filter(|p| covers(p, &dialogues));
    let report = match (&a.checkpoint, &a.predictions) {
        (Some(c), _) => {
            let ckpt = Checkpoint::load(c)?;
            evaluate(&ckpt, &dialogues, a.threshold, phenomena.as_ref())?
        }
        (None, Some(p)) => {
            let preds = load_predictions(p, &dialogues)?;
            score(&dialogues, &preds, phenomena.as_ref())?
        }
        (None, None) => bail!("either --checkpoint or --predictions is required"),
    };
    print!("{}", report.pretty());
    let json = serde_json::to_string(&report)?;
    println!("{json}");
    if let Some(out) = &a.out {
        fs::write(out, format!("{json}\n")).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn covers(p: &Phenomena, dialogues: &[Dialogue]) -> bool {
    let ids: std::collections::BTreeSet<&str> = dialogues.iter().map(|d| d.id.as_str()).collect();
    p.context_turns.iter().all(|(d, _)| ids.contains(d.as_str()))
        && p.knowledge_spans.iter().all(|k| ids.contains(k.dialogue.as_str()))
}

/// Reads prediction JSON lines and aligns them with `dialogues` by id and turn.
fn load_predictions(path: &Path, dialogues: &[Dialogue]) -> Result<Vec<Vec<TurnPrediction>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_turn: BTreeMap<(String, usize), TurnPrediction> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let field = |k: &str| {
            v.get(k)
                .with_context(|| format!("{}:{}: missing {k:?}", path.display(), i + 1))
        };
        let id = field("dialogue_id")?
            .as_str()
            .context("dialogue_id must be a string")?
            .to_string();
        let turn = field("turn")?.as_u64().context("turn must be an integer")? as usize;
        let acts = serde_json::from_value(field("acts")?.clone())?;
        let tags = serde_json::from_value(field("tags")?.clone())?;
        by_turn.insert(
            (id, turn),
            TurnPrediction {
                acts,
                act_probs: Vec::new(),
                tags,
            },
        );
    }
    dialogues
        .iter()
        .map(|d| {
            (0..d.turns.len())
                .map(|n| {
                    by_turn
                        .remove(&(d.id.clone(), n))
                        .with_context(|| format!("no prediction for dialogue {} turn {n}", d.id))
                })
                .collect()
        })
        .collect()
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    print_config(&[
        ("corpus", a.corpus.display().to_string()),
        ("checkpoint", a.checkpoint.display().to_string()),
        ("threshold", a.threshold.to_string()),
        ("explain", a.explain.to_string()),
    ]);
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let dialogues = load_dialogues(&a.corpus, None)?;
    let preds = predict_corpus(&ckpt, &dialogues, a.threshold)?;
    let mut out = String::new();
    for (d, dp) in dialogues.iter().zip(&preds) {
        for (n, p) in dp.iter().enumerate() {
            let probs: BTreeMap<&str, f64> = ckpt
                .labels
                .acts
                .labels()
                .iter()
                .map(String::as_str)
                .zip(p.act_probs.iter().copied())
                .collect();
            let line = serde_json::json!({
                "dialogue_id": d.id,
                "turn": n,
                "acts": p.acts,
                "act_probs": probs,
                "tags": p.tags,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    match &a.out {
        Some(path) => fs::write(path, &out).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{out}"),
    }
    if a.explain {
        let feat = ckpt.featurizer();
        for d in &dialogues {
            let ex = ckpt.model.explain(&feat, d)?;
            for (n, turn) in ex.iter().enumerate() {
                println!("== {} turn {n}", d.id);
                for t in turn {
                    if t.triples.is_empty() {
                        println!(
                            "{:<14} g={:.4}  no triples, alpha uniform {:.4} over {} padding rows",
                            t.token,
                            t.gate,
                            t.padding_alpha.unwrap_or(0.0),
                            ckpt.model.config.top_m
                        );
                        continue;
                    }
                    let listed: Vec<String> = t
                        .triples
                        .iter()
                        .map(|(tr, a)| format!("({}, {}, {}) {a:.4}", tr.head, tr.relation, tr.tail))
                        .collect();
                    let pad = t
                        .padding_alpha
                        .map_or(String::new(), |p| format!("  padding {p:.4} each"));
                    println!("{:<14} g={:.4}  {}{pad}", t.token, t.gate, listed.join("  "));
                }
            }
        }
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    if a.model.variant.is_some() {
        bail!("ablate trains every variant; drop --variant");
    }
    let base = a.model.resolve()?;
    let (train_set, test_set, store, labels, phenomena) = match &a.corpus {
        Some(dir) => {
            let train_path = dir.join("train.jsonl");
            let train_set = load_dialogues(&train_path, None)?;
            let labels = labels_for(&train_path, &train_set)?;
            let test_set = load_dialogues(&dir.join("test.jsonl"), Some(&labels))?;
            let store = load_kb(&dir.join("triples.tsv"))?;
            let phenomena = load_phenomena(None, &dir.join("test.jsonl"))?;
            (train_set, test_set, store, labels, phenomena)
        }
        None => {
            let c = generate_synthetic(&GenConfig::default(), base.seed)?;
            let store = TripleStore::from_triples(c.triples.clone());
            (c.train, c.test, store, c.labels, Some(c.phenomena))
        }
    };
    print_config(&base.pairs());
    let emb = embeddings_for(&store, None, &base)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let mut cfg = base.clone();
        cfg.model.variant = v;
        cfg.checkpoint = a.out.as_ref().map(|d| d.join(format!("{v}.ckpt")));
        let (ckpt, log) = train(&train_set, &labels, &store, &emb, &cfg)?;
        if let Some(c) = &cfg.checkpoint {
            log.save(&runlog_path(c))?;
        }
        let r = evaluate(&ckpt, &test_set, cfg.threshold, phenomena.as_ref())?;
        eprintln!("{v}: act accuracy {:.4}, slot F1 {:.4}", r.act_accuracy, r.slot_f1);
        rows.push((v, r));
    }
    let mut table = String::new();
    table.push_str(&format!(
        "{:<10} {:>8} {:>8} {:>10} {:>10}\n",
        "variant", "ID Acc", "SL F1", "KB-SL F1", "Ctx Acc"
    ));
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
    for (v, r) in &rows {
        table.push_str(&format!(
            "{:<10} {:>8.2} {:>8.2} {:>10} {:>10}\n",
            v.as_str(),
            100.0 * r.act_accuracy,
            100.0 * r.slot_f1,
            opt(r.knowledge_slot_f1),
            opt(r.context_act_accuracy)
        ));
    }
    print!("{table}");
    if let Some(dir) = &a.out {
        fs::write(dir.join("ablation.txt"), &table).with_context(|| format!("writing {}", dir.display()))?;
    }
    Ok(())
}
