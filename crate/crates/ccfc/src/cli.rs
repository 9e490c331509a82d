//! Subcommands: ingest, train, evaluate, synth, export, report.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ccfc_core::data::{
    generate_synthetic, split_by_item, AttributeSchema, AttributeValue, InteractionDataset,
    SplitBundle, SynthConfig,
};
use ccfc_core::eval::{self, HitRate, RankingMetrics};
use ccfc_core::grad::Tape;
use ccfc_core::model::{Model, ModelParams};
use ccfc_core::objectives::Variant;
use ccfc_core::rng::{self, Stream};
use ccfc_core::train::{EpochRecord, Observer, TrainError, Trainer};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SplitItems};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ids::IdMap;
use crate::io::{self, Interactions};
use crate::parallel::{self, ShardedGradients};

pub const CHECKPOINT_FILE: &str = "checkpoint.ccfc";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Parser)]
#[command(
    name = "ccfc",
    version,
    about = "Cold-start item recommendation with contrastive collaborative filtering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate input files and print dataset statistics.
    Ingest(IngestArgs),
    /// Train a model and write a checkpoint, history and test metrics.
    Train(TrainArgs),
    /// Rank users for cold test items and print HR@k / NDCG@k as JSON.
    Evaluate(EvaluateArgs),
    /// Generate the synthetic genre/star dataset.
    Synth(SynthArgs),
    /// Write content-based item embeddings and user embeddings as TSV.
    Export(ExportArgs),
    /// Write a user's distances to liked and disliked item embeddings as CSV.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Full,
    NoContrastive,
    Pretrain,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::NoContrastive => Variant::NoContrastive,
            VariantArg::Pretrain => Variant::Pretrain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HitRateArg {
    PerK,
    Recall,
}

impl From<HitRateArg> for HitRate {
    fn from(v: HitRateArg) -> Self {
        match v {
            HitRateArg::PerK => HitRate::PerK,
            HitRateArg::Recall => HitRate::Recall,
        }
    }
}

fn parse_dense(s: &str) -> std::result::Result<(String, PathBuf), String> {
    s.split_once('=')
        .map(|(f, p)| (f.to_owned(), PathBuf::from(p)))
        .ok_or_else(|| format!("expected FIELD=PATH, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    #[arg(long, requires = "attributes")]
    pub schema: Option<PathBuf>,
    #[arg(long, requires = "schema")]
    pub attributes: Option<PathBuf>,
    /// Dense sidecar file for a field, as FIELD=PATH.
    #[arg(long, value_parser = parse_dense)]
    pub dense: Vec<(String, PathBuf)>,
    /// Write normalized copies of the inputs here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub n_pos: Option<usize>,
    #[arg(long)]
    pub n_neg: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test interactions to use instead of the checkpoint's test split.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub hit_rate: Option<HitRateArg>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write the metrics to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n_users: usize,
    #[arg(long, default_value_t = 300)]
    pub n_items: usize,
    #[arg(long, default_value_t = 6)]
    pub n_genres: usize,
    #[arg(long, default_value_t = 5)]
    pub n_stars: usize,
    #[arg(long, default_value_t = 0.4)]
    pub confound: f64,
    #[arg(long)]
    pub keep_rate: Option<f64>,
    #[arg(long)]
    pub genre_like_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// External user id.
    #[arg(long)]
    pub user: String,
    /// Explicit pairs as POS:NEG external item ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Vec<String>,
    /// Number of pairs to sample from the test items when no pairs are given.
    #[arg(long, default_value_t = 5)]
    pub sample: usize,
    /// Categorical field grouping sampled negatives; the first one by default.
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|m| println!("{}", to_json(&m))),
        Command::Synth(a) => cmd_synth(&a),
        Command::Export(a) => cmd_export(&a),
        Command::Report(a) => cmd_report(&a).map(|_| ()),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

/// Interactions with attributes attached, plus the schema and id maps.
pub struct Data {
    pub interactions: Interactions,
    pub schema: AttributeSchema,
    pub records: Vec<Vec<AttributeValue>>,
    pub dataset: InteractionDataset,
}

fn load_inputs(
    interactions: &Path,
    schema: &Path,
    attributes: &Path,
    dense: &BTreeMap<String, PathBuf>,
) -> Result<Data> {
    let inter = io::load_interactions(interactions)?;
    let schema = io::load_schema(schema)?;
    let records = io::load_attributes(attributes, &schema, &inter.items, dense)?;
    let dataset = inter
        .dataset
        .clone()
        .with_attributes(&schema, records.clone())?;
    Ok(Data {
        interactions: inter,
        schema,
        records,
        dataset,
    })
}

pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    cfg.validate()?;
    let get = |p: &Option<PathBuf>| p.clone().expect("validated");
    load_inputs(
        &get(&cfg.interactions),
        &get(&cfg.schema),
        &get(&cfg.attributes),
        &cfg.dense,
    )
}

#[derive(Debug, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub attribute_fields: Option<usize>,
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let dense: BTreeMap<String, PathBuf> = a.dense.iter().cloned().collect();
    let (inter, attrs) = match (&a.schema, &a.attributes) {
        (Some(s), Some(at)) => {
            let d = load_inputs(&a.interactions, s, at, &dense)?;
            (d.interactions, Some((d.schema, d.records)))
        }
        _ => (io::load_interactions(&a.interactions)?, None),
    };
    let stats = DatasetStats {
        users: inter.users.len(),
        items: inter.items.len(),
        interactions: inter.dataset.len(),
        attribute_fields: attrs.as_ref().map(|a| a.0.len()),
    };
    if let Some(out) = &a.out {
        create_dir(out)?;
        io::write_interactions(&out.join("interactions.tsv"), &inter)?;
        if let Some((schema, records)) = &attrs {
            io::write_json(&out.join("schema.json"), schema)?;
            io::write_attributes(&out.join("attributes.jsonl"), schema, &inter.items, records)?;
        }
    }
    println!("{}", to_json(&stats));
    Ok(())
}

/// The config with command-line overrides and `CCFC_SEED` applied.
pub fn train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&a.config)?;
    cfg.apply_env()?;
    if let Some(v) = a.variant {
        cfg.variant = v.into();
    }
    if let Some(o) = &a.output {
        cfg.output = o.clone();
    }
    let h = &mut cfg.hyper;
    macro_rules! set {
        ($($flag:ident => $field:expr),*) => {
            $(if let Some(v) = a.$flag { $field = v; })*
        };
    }
    set!(threads => cfg.threads, seed => h.seed, epochs => h.epochs, lr => h.lr, d => h.d, tau => h.tau,
         lambda => h.lambda, batch_size => h.batch_size, n_pos => h.n_pos, n_neg => h.n_neg,
         patience => h.patience);
    Ok(cfg)
}

fn split_items(bundle: &SplitBundle) -> SplitItems {
    SplitItems {
        seed: bundle.seed,
        train: bundle.train.member_items().collect(),
        valid: bundle.valid.member_items().collect(),
        test: bundle.test.member_items().collect(),
    }
}

/// Writes history lines as epochs finish; wall times go to a separate file
/// so the history itself is reproducible.
struct FileObserver {
    start: Instant,
    history: BufWriter<File>,
    timings: BufWriter<File>,
    history_path: PathBuf,
}

impl FileObserver {
    fn new(dir: &Path) -> Result<Self> {
        let history_path = dir.join(HISTORY_FILE);
        let timings_path = dir.join(TIMINGS_FILE);
        Ok(FileObserver {
            start: Instant::now(),
            history: BufWriter::new(File::create(&history_path).map_err(Error::io(&history_path))?),
            timings: BufWriter::new(File::create(&timings_path).map_err(Error::io(&timings_path))?),
            history_path,
        })
    }

    fn line(&mut self, v: serde_json::Value) {
        if let Err(e) = writeln!(self.history, "{v}").and_then(|_| self.history.flush()) {
            warn!("{}: {e}", self.history_path.display());
        }
    }
}

impl Observer for FileObserver {
    fn elapsed_secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn pretrain_epoch(&mut self, epoch: usize, mean_loss: f64) {
        self.line(serde_json::json!({ "pretrain_epoch": epoch, "loss": mean_loss }));
    }

    fn epoch(&mut self, r: &EpochRecord) {
        self.line(
            serde_json::json!({ "epoch": r.epoch, "loss": r.loss, "valid_ndcg10": r.valid_ndcg10 }),
        );
        let _ = writeln!(
            self.timings,
            "{}",
            serde_json::json!({ "epoch": r.epoch, "wall_secs": r.wall_secs })
        )
        .and_then(|_| self.timings.flush());
    }
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub test: RankingMetrics,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let summary = train_with_config(&cfg)?;
    println!("{}", to_json(&summary));
    Ok(())
}

/// Trains per `cfg`, writing checkpoint, history and metrics to its output
/// directory.
pub fn train_with_config(cfg: &RunConfig) -> Result<TrainSummary> {
    let data = load_data(cfg)?;
    let bundle = split_by_item(&data.dataset, cfg.split, cfg.split_seed())?;
    create_dir(&cfg.output)?;
    let ck_path = cfg.output.join(CHECKPOINT_FILE);
    let checkpoint = |params: ModelParams, adam| {
        Checkpoint::new(
            &data.schema,
            &cfg.hyper,
            cfg.variant,
            &data.interactions.users,
            &data.interactions.items,
            split_items(&bundle),
            params,
            adam,
        )
    };

    let mut observer = FileObserver::new(&cfg.output)?;
    let sharded = ShardedGradients {
        threads: cfg.threads,
    };
    let result = Trainer::new(&bundle, &data.schema, &cfg.hyper, cfg.variant)
        .gradients(&sharded)
        .run(&mut observer);
    let trained = match result {
        Ok(t) => t,
        Err(TrainError::Diverged(d)) => {
            save_checkpoint(&ck_path, &checkpoint(d.last_good.clone(), None))?;
            warn!("last good parameters kept in {}", ck_path.display());
            return Err(Error::Train(TrainError::Diverged(d)));
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(
        &ck_path,
        &checkpoint(trained.params.clone(), Some(trained.adam.clone())),
    )?;

    let model = Model::new(&trained.params, &cfg.hyper);
    let test = parallel::evaluate(
        &model,
        &bundle.train,
        &bundle.test,
        &cfg.ks,
        cfg.hit_rate,
        cfg.threads,
    )?;
    io::write_json(&cfg.output.join(METRICS_FILE), &test)?;
    info!("wrote {}", cfg.output.display());
    Ok(TrainSummary {
        variant: cfg.variant,
        epochs: trained.history.epochs.len(),
        best_epoch: trained.history.best_epoch,
        test,
    })
}

/// A checkpoint together with the data it was trained on.
pub struct Restored {
    pub cfg: RunConfig,
    pub data: Data,
    pub checkpoint: Checkpoint,
    pub bundle: SplitBundle,
}

pub fn restore(config: &Path, checkpoint: &Path) -> Result<Restored> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply_env()?;
    let data = load_data(&cfg)?;
    let ck = load_checkpoint(checkpoint, Some(&data.schema))?;
    if ck.meta.users != data.interactions.users || ck.meta.items != data.interactions.items {
        return Err(Error::Incompatible {
            path: checkpoint.to_owned(),
            reason: "user or item ids differ from the configured interactions".into(),
        });
    }
    let s = &ck.meta.split;
    let bundle = SplitBundle::from_items(&data.dataset, &s.train, &s.valid, &s.test, s.seed);
    Ok(Restored {
        cfg,
        data,
        checkpoint: ck,
        bundle,
    })
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<RankingMetrics> {
    let r = restore(&a.config, &a.checkpoint)?;
    let ks = a.ks.clone().unwrap_or_else(|| r.cfg.ks.clone());
    let mode = a.hit_rate.map(HitRate::from).unwrap_or(r.cfg.hit_rate);
    let threads = a.threads.unwrap_or(r.cfg.threads);
    let hyper = &r.checkpoint.meta.hyperparams;
    let model = Model::new(&r.checkpoint.params, hyper);
    let metrics = match &a.test {
        None => parallel::evaluate(&model, &r.bundle.train, &r.bundle.test, &ks, mode, threads)?,
        Some(path) => {
            let ext = io::load_interactions_with(
                path,
                r.data.interactions.users.clone(),
                r.data.interactions.items.clone(),
            )?;
            let attrs_path = r.cfg.attributes.clone().expect("validated");
            let records =
                io::load_attributes(&attrs_path, &r.data.schema, &ext.items, &r.cfg.dense)?;
            let test = ext.dataset.with_attributes(&r.data.schema, records)?;
            parallel::evaluate(&model, &r.bundle.train, &test, &ks, mode, threads)?
        }
    };
    if let Some(out) = &a.out {
        io::write_json(out, &metrics)?;
    }
    Ok(metrics)
}

#[derive(Serialize)]
struct Truth<'a> {
    item_genre: BTreeMap<&'a str, usize>,
    item_star: BTreeMap<&'a str, usize>,
    liked_genres: BTreeMap<&'a str, Vec<usize>>,
    disliked_stars: BTreeMap<&'a str, Vec<usize>>,
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let stats = write_synthetic(a)?;
    println!("{}", to_json(&stats));
    Ok(())
}

/// Writes interactions, attributes, schema, ground truth and a starter
/// run config to `a.out`.
pub fn write_synthetic(a: &SynthArgs) -> Result<DatasetStats> {
    let mut config = SynthConfig::new(a.n_users, a.n_items, a.confound, a.seed);
    config.n_genres = a.n_genres;
    config.n_stars = a.n_stars;
    if let Some(k) = a.keep_rate {
        config.keep_rate = k;
    }
    if let Some(g) = a.genre_like_rate {
        config.genre_like_rate = g;
    }
    let world = generate_synthetic(&config)?;
    create_dir(&a.out)?;

    let users: IdMap = (0..a.n_users)
        .map(|u| format!("u{u}"))
        .collect::<Vec<_>>()
        .into();
    let items: IdMap = (0..a.n_items)
        .map(|v| format!("i{v}"))
        .collect::<Vec<_>>()
        .into();
    let inter = Interactions {
        timestamps: (0..world.dataset.len() as i64).collect(),
        dataset: world.dataset.clone(),
        users: users.clone(),
        items: items.clone(),
    };
    io::write_interactions(&a.out.join("interactions.tsv"), &inter)?;
    io::write_json(&a.out.join("schema.json"), &world.schema)?;
    let records: Vec<Vec<AttributeValue>> = (0..a.n_items)
        .map(|v| world.dataset.item_attributes(v).map(<[_]>::to_vec))
        .collect::<ccfc_core::Result<_>>()?;
    io::write_attributes(
        &a.out.join("attributes.jsonl"),
        &world.schema,
        &items,
        &records,
    )?;

    fn name(m: &IdMap, i: usize) -> &str {
        m.names()[i].as_str()
    }
    let truth = Truth {
        item_genre: (0..a.n_items)
            .map(|v| (name(&items, v), world.item_genre[v]))
            .collect(),
        item_star: (0..a.n_items)
            .map(|v| (name(&items, v), world.item_star[v]))
            .collect(),
        liked_genres: (0..a.n_users)
            .map(|u| (name(&users, u), flags(&world.liked_genres[u])))
            .collect(),
        disliked_stars: (0..a.n_users)
            .map(|u| (name(&users, u), flags(&world.disliked_stars[u])))
            .collect(),
    };
    io::write_json(&a.out.join("truth.json"), &truth)?;

    let run = RunConfig {
        interactions: Some("interactions.tsv".into()),
        attributes: Some("attributes.jsonl".into()),
        schema: Some("schema.json".into()),
        output: "out".into(),
        hyper: ccfc_core::model::Hyperparams {
            seed: a.seed,
            ..Default::default()
        },
        ..Default::default()
    };
    run.save(&a.out.join("run.json"))?;
    Ok(DatasetStats {
        users: a.n_users,
        items: a.n_items,
        interactions: world.dataset.len(),
        attribute_fields: Some(world.schema.len()),
    })
}

fn flags(xs: &[bool]) -> Vec<usize> {
    xs.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect()
}

fn write_rows(path: &Path, rows: impl Iterator<Item = (String, Vec<f64>)>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(Error::io(path))?);
    for (id, x) in rows {
        let vals: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{id}\t{}", vals.join(",")).map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn cmd_export(a: &ExportArgs) -> Result<()> {
    let r = restore(&a.config, &a.checkpoint)?;
    let model = Model::new(&r.checkpoint.params, &r.checkpoint.meta.hyperparams);
    create_dir(&a.out)?;
    let items = &r.data.interactions.items;
    let q = (0..items.len())
        .map(|v| {
            Ok((
                items.names()[v].clone(),
                eval::item_embedding(&model, &r.data.dataset, v)?,
            ))
        })
        .collect::<ccfc_core::Result<Vec<_>>>()?;
    write_rows(&a.out.join("items_cbce.tsv"), q.into_iter())?;
    let users = &r.data.interactions.users;
    let s = (0..users.len())
        .map(|u| {
            let mut tape = Tape::new();
            let n = model.uce(&mut tape, u, &r.bundle.train)?;
            Ok((users.names()[u].clone(), tape.value(n).to_vec()))
        })
        .collect::<ccfc_core::Result<Vec<_>>>()?;
    write_rows(&a.out.join("users_uce.tsv"), s.into_iter())
}

pub fn cmd_report(a: &ReportArgs) -> Result<Vec<eval::DistanceRow>> {
    let r = restore(&a.config, &a.checkpoint)?;
    let model = Model::new(&r.checkpoint.params, &r.checkpoint.meta.hyperparams);
    let items = &r.data.interactions.items;
    let user = r
        .data
        .interactions
        .users
        .get(&a.user)
        .ok_or_else(|| Error::Config(format!("unknown user {:?}", a.user)))?;
    let item = |id: &str| {
        items
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown item {id:?}")))
    };
    let pairs = if a.pairs.is_empty() {
        let field = match &a.field {
            Some(f) => r
                .data
                .schema
                .field(f)
                .filter(|(_, s)| s.is_categorical())
                .map(|(i, _)| i)
                .ok_or_else(|| Error::Config(format!("no categorical field {f:?}")))?,
            None => r
                .data
                .schema
                .fields
                .iter()
                .position(|s| s.is_categorical())
                .ok_or_else(|| {
                    Error::Config("schema has no categorical field to group by".into())
                })?,
        };
        let group = |v: usize| match r.data.records[v][field] {
            AttributeValue::OneHot(j) => j,
            AttributeValue::MultiHot(ref js) => js.first().copied().unwrap_or(usize::MAX),
            AttributeValue::Dense(_) => usize::MAX,
        };
        let mut rng = rng::stream(
            r.checkpoint.meta.hyperparams.seed,
            Stream::Report,
            user as u64,
            0,
        );
        let candidates: Vec<usize> = r.bundle.test.member_items().collect();
        eval::sample_distance_pairs(
            user,
            &candidates,
            &r.data.dataset,
            group,
            a.sample,
            &mut rng,
        )
    } else {
        a.pairs
            .iter()
            .map(|p| {
                let (pos, neg) = p
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("expected POS:NEG, got {p:?}")))?;
                Ok((item(pos)?, item(neg)?))
            })
            .collect::<Result<Vec<_>>>()?
    };
    if pairs.is_empty() {
        warn!("no liked/disliked item pairs found for user {}", a.user);
    }
    let rows = eval::distance_report(&model, &r.bundle.train, &r.data.dataset, user, &pairs)?;
    let mut w = BufWriter::new(File::create(&a.out).map_err(Error::io(&a.out))?);
    let out = |e| Error::io(&a.out)(e);
    writeln!(w, "pair,positive,negative,d_pos,d_neg,diff").map_err(out)?;
    for (i, row) in rows.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            i + 1,
            items.names()[row.positive],
            items.names()[row.negative],
            row.d_pos,
            row.d_neg,
            row.diff
        )
        .map_err(out)?;
    }
    w.flush().map_err(out)?;
    Ok(rows)
}
