use std::fs;
use std::path::Path;
use std::time::Instant;

use masklm::analysis::{
    check_manifest, dump_cls_embeddings, ensemble_models, eval_path, interpolate_linear, mask_set_diff, memory_report,
    train_bezier, BezierCurve, CurveTrainConfig, EnsembleMode, PathPoint, TaskSpec,
};
use masklm::data::{
    gen_classification_task, gen_corpus, gen_tagging_task, Language, SplitSizes, TaskDataset, Variant, Vocab,
};
use masklm::masking::MaskingConfig;
use masklm::model::{weight_name, MaskPlan, Model, TransformerConfig, CLASSIFIER};
use masklm::persist::{
    load_model, run_report, save_model, write_atomic, Checkpoint, MaskFile, Report, Table, CHECKPOINT_MAGIC, MASK_MAGIC,
};
use masklm::training::{
    default_metric, evaluate, grid_search, pretrain, train_task, Metric, Regime, RunResult, TrainConfig, FINETUNE_GRID,
    MASK_GRID,
};
use masklm::{Error, Result};

use crate::args::*;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Train(a) => train(a),
        Command::GridSearch(a) => grid(a),
        Command::Eval(a) => eval(a),
        Command::SweepSparsity(a) => sweep_sparsity(a),
        Command::SweepLayers(a) => sweep_layers(a),
        Command::Analyze {
            what: AnalyzeCommand::Masks(a),
        } => analyze_masks(a),
        Command::Memory(a) => memory(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Connect(a) => connect(a),
        Command::DumpEmbeddings(a) => dump(a),
    }
}

fn emit(report: &Report, arg: &ReportArg) -> Result<()> {
    match &arg.report {
        Some(path) => report.save(path),
        None => {
            print!("{}", report.render());
            Ok(())
        }
    }
}

fn timed(what: &str, start: Instant) {
    eprintln!("{what}: {:.1}s", start.elapsed().as_secs_f64());
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

// ------------------------------------------------------------------ loading

/// Loads a checkpoint, or a mask file applied to `pretrained`.
fn load_artifact(path: &Path, pretrained: Option<&Path>) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    match bytes.get(..4) {
        Some(m) if m == CHECKPOINT_MAGIC => Checkpoint::from_bytes(&bytes)?.into_model(),
        Some(m) if m == MASK_MAGIC => {
            let base = pretrained
                .ok_or_else(|| Error::Config(format!("{} is a mask file; pass --pretrained", path.display())))?;
            MaskFile::from_bytes(&bytes)?.apply(&load_model(base)?)
        }
        _ => Err(Error::Format {
            offset: 0,
            message: format!("{} is neither a checkpoint nor a mask file", path.display()),
        }),
    }
}

fn load_data(dir: &Path, model: &Model) -> Result<TaskDataset> {
    TaskDataset::load_dir(dir, model.config.max_len)
}

fn split_of(data: &TaskDataset, split: SplitArg) -> &[masklm::data::Example] {
    match split {
        SplitArg::Train => &data.train,
        SplitArg::Dev => &data.dev,
        SplitArg::Test => &data.test,
    }
}

fn split_name(split: SplitArg) -> &'static str {
    match split {
        SplitArg::Train => "train",
        SplitArg::Dev => "dev",
        SplitArg::Test => "test",
    }
}

fn metric_for(name: Option<&str>, data: &TaskDataset) -> Result<Metric> {
    match name {
        Some(n) => n.parse(),
        None => default_metric(data.kind),
    }
}

fn regime(r: RegimeArg) -> Regime {
    match r {
        RegimeArg::Finetune => Regime::Finetune,
        RegimeArg::Mask => Regime::Mask,
    }
}

fn train_config(
    regime: Regime,
    lr: f64,
    optim: &OptimArgs,
    mask: &MaskArgs,
    metric: Option<Metric>,
    arch: &TransformerConfig,
) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        regime,
        lr,
        batch_size: optim.batch_size,
        max_epochs: optim.epochs,
        patience: optim.patience,
        seed: optim.seed,
        metric,
        masking: MaskingConfig {
            tau: mask.tau,
            init_sparsity: mask.init_sparsity,
            init_halfwidth: mask.halfwidth,
            seed: mask.mask_seed.unwrap_or(optim.seed),
        },
        plan: Some(MaskPlan::parse(&mask.mask_blocks, arch.num_blocks)?),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn echo_config(r: &mut Report, cfg: &TrainConfig, arch: &TransformerConfig) {
    r.set("batch_size", cfg.batch_size)
        .set("max_epochs", cfg.max_epochs)
        .set("patience", cfg.patience)
        .set(
            "arch",
            format!(
                "blocks={} hidden={} ffn={} heads={} vocab={} max_len={}",
                arch.num_blocks, arch.hidden, arch.ffn, arch.heads, arch.vocab_size, arch.max_len
            ),
        );
    if cfg.regime == Regime::Mask {
        r.set("tau", cfg.masking.tau)
            .set("init_sparsity", cfg.masking.init_sparsity)
            .set("init_halfwidth", cfg.masking.init_halfwidth)
            .set("mask_seed", cfg.masking.seed)
            .set("mask_plan", cfg.plan_for(arch).describe());
    }
}

// ----------------------------------------------------------------- commands

fn gen_data(a: GenDataArgs) -> Result<()> {
    let lang = Language::new(Vocab::new(a.vocab)?, a.language_seed);
    let sizes = SplitSizes {
        train: a.train,
        dev: a.dev,
        test: a.test,
    };
    let data = match a.kind {
        DataKind::Corpus => gen_corpus(&lang, a.seed, sizes, a.len),
        DataKind::Classification => {
            let variant = match a.variant {
                VariantArg::A => Variant::A,
                VariantArg::B => Variant::B,
            };
            gen_classification_task(&lang, a.seed, a.labels, sizes, a.len, variant)?
        }
        DataKind::Tagging => gen_tagging_task(&lang, a.seed, a.labels, sizes, a.len)?,
    };
    data.save_dir(&a.out)?;
    let mut r = Report::new("gen-data");
    r.set("kind", format!("{:?}", a.kind).to_lowercase())
        .set("out", show(&a.out))
        .set("seed", a.seed)
        .set("language_seed", a.language_seed)
        .set("vocab", a.vocab)
        .set("len", a.len)
        .set("train", a.train)
        .set("dev", a.dev)
        .set("test", a.test);
    if let Some(k) = data.kind.num_labels() {
        r.set("labels", k);
    }
    if a.kind == DataKind::Classification {
        r.set("variant", format!("{:?}", a.variant).to_lowercase());
    }
    emit(&r, &a.report)
}

fn pretrain_cmd(a: PretrainArgs) -> Result<()> {
    let corpus = TaskDataset::load_dir(&a.corpus, a.max_len)?;
    let arch = TransformerConfig {
        num_blocks: a.blocks,
        hidden: a.hidden,
        ffn: a.ffn,
        heads: a.heads,
        vocab_size: corpus.vocab_size,
        max_len: a.max_len,
        ..TransformerConfig::default()
    };
    let cfg = TrainConfig {
        regime: Regime::Pretrain,
        lr: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (model, result) = pretrain(&arch, &corpus, &cfg)?;
    timed("pretrain", start);
    save_model(&model, a.seed, "pretrain", &a.out)?;
    let mut r = run_report("pretrain", &result);
    r.set("corpus", show(&a.corpus)).set("out", show(&a.out));
    echo_config(&mut r, &cfg, &arch);
    emit(&r, &a.report)
}

fn train(a: TrainArgs) -> Result<()> {
    let pre = load_model(&a.input.pretrained)?;
    let data = load_data(&a.input.task, &pre)?;
    let metric = metric_for(a.input.metric.as_deref(), &data)?;
    let cfg = train_config(regime(a.regime), a.lr, &a.optim, &a.mask, Some(metric), &pre.config)?;
    let start = Instant::now();
    let (model, result) = train_task(&pre, &data, &cfg)?;
    timed("train", start);
    match cfg.regime {
        Regime::Mask => {
            let file = MaskFile::from_model(&model, &cfg.masking, &cfg.plan_for(&pre.config), cfg.seed)?
                .with_dev_metric(&result.metric, result.best_dev_metric());
            file.save(&a.out)?;
            if let Some(path) = &a.save_scores {
                let mut scores = masklm::params::ParamStore::new();
                for (name, p) in model.params.iter().filter(|(n, _)| n.ends_with(".scores")) {
                    scores.insert(name, p.value.clone(), true);
                }
                let ck = Checkpoint {
                    meta: masklm::persist::CheckpointMeta {
                        arch: model.config.clone(),
                        seed: cfg.seed,
                        regime: "mask-scores".into(),
                        note: String::new(),
                    },
                    params: scores,
                };
                ck.save(path)?;
            }
        }
        _ => save_model(&model, cfg.seed, "finetune", &a.out)?,
    }
    let mut r = run_report("train", &result);
    r.set("pretrained", show(&a.input.pretrained))
        .set("task", show(&a.input.task))
        .set("out", show(&a.out));
    echo_config(&mut r, &cfg, &pre.config);
    emit(&r, &a.report)
}

fn grid(a: GridArgs) -> Result<()> {
    let pre = load_model(&a.input.pretrained)?;
    let data = load_data(&a.input.task, &pre)?;
    let metric = metric_for(a.input.metric.as_deref(), &data)?;
    let reg = regime(a.regime);
    let grid: Vec<f64> = if a.grid.is_empty() {
        match reg {
            Regime::Mask => MASK_GRID.to_vec(),
            _ => FINETUNE_GRID.to_vec(),
        }
    } else {
        a.grid.clone()
    };
    let base = train_config(reg, grid[0], &a.optim, &a.mask, Some(metric), &pre.config)?;
    let start = Instant::now();
    let (result, runs) = grid_search(&pre, &data, &base, &grid, a.max_extensions)?;
    timed("grid-search", start);
    let mut r = Report::new("grid-search");
    r.set("regime", reg)
        .set("pretrained", show(&a.input.pretrained))
        .set("task", show(&a.input.task))
        .set("metric", metric)
        .set("seed", base.seed)
        .set("lr_schedule", "constant")
        .set(
            "initial_grid",
            grid.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        )
        .set("best_lr", result.best_lr)
        .set("best_dev_metric", result.best_metric)
        .set("extensions", result.extensions)
        .set("hit_extension_limit", result.hit_limit);
    echo_config(&mut r, &base, &pre.config);
    let mut t = Table::new("grid", &["lr", "dev_metric", "best_epoch", "epochs_run"]);
    for (lr, run) in &runs {
        t.row(vec![
            lr.to_string(),
            run.best_dev_metric().to_string(),
            run.best_epoch.to_string(),
            run.epochs.len().to_string(),
        ]);
    }
    r.add_table(t);
    emit(&r, &a.report)
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = load_artifact(&a.model.model, a.model.pretrained.as_deref())?;
    let data = load_data(&a.data.data, &model)?;
    let metric = metric_for(a.metric.as_deref(), &data)?;
    let value = evaluate(&model, split_of(&data, a.data.split), data.kind, metric)?;
    let mut r = Report::new("eval");
    r.set("model", show(&a.model.model));
    if let Some(p) = &a.model.pretrained {
        r.set("pretrained", show(p));
    }
    r.set("data", show(&a.data.data))
        .set("split", split_name(a.data.split))
        .set("metric", metric)
        .set("value", value)
        .set("truncated_sequences", data.truncated);
    if let Ok(bytes) = fs::read(&a.model.model) {
        if bytes.starts_with(MASK_MAGIC) {
            let file = MaskFile::from_bytes(&bytes)?;
            if let (Some(name), Some(recorded)) = (file.meta.metric, file.meta.dev_metric) {
                r.set("recorded_metric", &name).set("recorded_dev_metric", recorded);
                if a.data.split == SplitArg::Dev && name == metric.to_string() {
                    r.set("matches_recorded", value == recorded);
                }
            }
        }
    }
    emit(&r, &a.report)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mask_run(pre: &Model, data: &TaskDataset, cfg: &TrainConfig) -> Result<RunResult> {
    Ok(train_task(pre, data, cfg)?.1)
}

fn sweep_sparsity(a: SweepSparsityArgs) -> Result<()> {
    let pre = load_model(&a.input.pretrained)?;
    let data = load_data(&a.input.task, &pre)?;
    let metric = metric_for(a.input.metric.as_deref(), &data)?;
    let plan = MaskPlan::parse(&a.mask_blocks, pre.config.num_blocks)?;
    let mut runs = Table::new(
        "runs",
        &["init_sparsity", "seed", "dev_metric", "best_epoch", "mean_sparsity"],
    );
    let mut summary = Table::new("summary", &["init_sparsity", "mean_dev_metric"]);
    let start = Instant::now();
    for &p in &a.sparsities {
        let mut devs = Vec::new();
        for &seed in &a.seeds {
            let cfg = TrainConfig {
                regime: Regime::Mask,
                lr: a.lr,
                batch_size: a.batch_size,
                max_epochs: a.epochs,
                patience: a.patience,
                seed,
                metric: Some(metric),
                masking: MaskingConfig {
                    init_sparsity: p,
                    seed,
                    ..MaskingConfig::default()
                },
                plan: Some(plan.clone()),
            };
            let r = mask_run(&pre, &data, &cfg)?;
            devs.push(r.best_dev_metric());
            runs.row(vec![
                p.to_string(),
                seed.to_string(),
                r.best_dev_metric().to_string(),
                r.best_epoch.to_string(),
                r.mean_sparsity().unwrap_or(0.0).to_string(),
            ]);
        }
        summary.row(vec![p.to_string(), mean(&devs).to_string()]);
    }
    timed("sweep-sparsity", start);
    let mut r = Report::new("sweep-sparsity");
    r.set("pretrained", show(&a.input.pretrained))
        .set("task", show(&a.input.task))
        .set("metric", metric)
        .set("lr", a.lr)
        .set("lr_schedule", "constant")
        .set("mask_plan", plan.describe())
        .set("seeds", join(&a.seeds));
    r.add_table(runs).add_table(summary);
    emit(&r, &a.report)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn sweep_layers(a: SweepLayersArgs) -> Result<()> {
    let pre = load_model(&a.input.pretrained)?;
    let data = load_data(&a.input.task, &pre)?;
    let metric = metric_for(a.input.metric.as_deref(), &data)?;
    let depth = pre.config.num_blocks;
    let counts: Vec<usize> = if a.counts.is_empty() {
        (1..=depth / 2).map(|i| 2 * i).collect()
    } else {
        a.counts.clone()
    };
    let directions: &[(&str, DirectionArg)] = match a.direction {
        DirectionArg::BottomUp => &[("bottom-up", DirectionArg::BottomUp)],
        DirectionArg::TopDown => &[("top-down", DirectionArg::TopDown)],
        DirectionArg::Both => &[
            ("bottom-up", DirectionArg::BottomUp),
            ("top-down", DirectionArg::TopDown),
        ],
    };
    let mut t = Table::new("runs", &["direction", "count", "blocks", "seed", "dev_metric"]);
    let start = Instant::now();
    for &(name, dir) in directions {
        for &c in &counts {
            let plan = match dir {
                DirectionArg::TopDown => MaskPlan::top_down(c, depth)?,
                _ => MaskPlan::bottom_up(c, depth)?,
            };
            for &seed in &a.seeds {
                let cfg = TrainConfig {
                    regime: Regime::Mask,
                    lr: a.lr,
                    batch_size: a.batch_size,
                    max_epochs: a.epochs,
                    patience: a.patience,
                    seed,
                    metric: Some(metric),
                    masking: MaskingConfig {
                        init_sparsity: a.init_sparsity,
                        seed,
                        ..MaskingConfig::default()
                    },
                    plan: Some(plan.clone()),
                };
                let r = mask_run(&pre, &data, &cfg)?;
                let blocks: Vec<String> = plan.blocks.iter().map(|b| b.to_string()).collect();
                t.row(vec![
                    name.to_string(),
                    c.to_string(),
                    blocks.join(" "),
                    seed.to_string(),
                    r.best_dev_metric().to_string(),
                ]);
            }
        }
    }
    timed("sweep-layers", start);
    let mut r = Report::new("sweep-layers");
    r.set("pretrained", show(&a.input.pretrained))
        .set("task", show(&a.input.task))
        .set("metric", metric)
        .set("lr", a.lr)
        .set("init_sparsity", a.init_sparsity)
        .set("depth", depth)
        .set("counts", join(&counts))
        .set("seeds", join(&a.seeds));
    r.add_table(t);
    emit(&r, &a.report)
}

fn analyze_masks(a: AnalyzeMasksArgs) -> Result<()> {
    let files: Vec<MaskFile> = a.files.iter().map(|p| MaskFile::load(p)).collect::<Result<_>>()?;
    let mut r = Report::new("analyze-masks");
    r.set("files", a.files.iter().map(|p| show(p)).collect::<Vec<_>>().join(","));
    let mut layers = Table::new("sparsity", &["file", "layer", "rows", "cols", "sparsity"]);
    for (path, f) in a.files.iter().zip(&files) {
        for (name, m) in &f.layers {
            layers.row(vec![
                show(path),
                name.clone(),
                m.rows().to_string(),
                m.cols().to_string(),
                m.sparsity().to_string(),
            ]);
        }
    }
    r.add_table(layers);
    let mut pairs = Table::new("dissimilarity", &["file_a", "file_b", "shared_init", "s"]);
    for i in 0..files.len() {
        for j in i + 1..files.len() {
            let (fa, fb) = (&files[i], &files[j]);
            let shared = fa.meta.masking == fb.meta.masking && fa.meta.plan == fb.meta.plan && fa.tau == fb.tau;
            let s = mask_set_diff(&fa.initial_masks()?, &fa.layers, &fb.initial_masks()?, &fb.layers)
                .map(|d| d.overall.to_string())
                .unwrap_or_else(|e| format!("undefined ({e})"));
            pairs.row(vec![show(&a.files[i]), show(&a.files[j]), shared.to_string(), s]);
        }
    }
    r.add_table(pairs);
    emit(&r, &a.report)
}

fn parse_task(spec: &str, index: usize) -> Result<TaskSpec> {
    let (name, k) = match spec.split_once(':') {
        Some((n, k)) => (n.to_string(), k),
        None => (format!("task{}", index + 1), spec),
    };
    let k: usize = k
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad task spec `{spec}`; expected NAME:LABELS")))?;
    Ok(TaskSpec { name, num_labels: k })
}

fn memory(a: MemoryArgs) -> Result<()> {
    let (arch_name, arch) = match a.arch {
        ArchArg::BertBase => ("bert-base", TransformerConfig::bert_base()),
        ArchArg::Toy => ("toy", TransformerConfig::default()),
    };
    let plan = MaskPlan::parse(&a.plan, arch.num_blocks)?;
    let tasks: Vec<TaskSpec> = a
        .tasks
        .iter()
        .enumerate()
        .map(|(i, s)| parse_task(s, i))
        .collect::<Result<_>>()?;
    let mut r = memory_report(&arch, &plan, &tasks).to_report();
    r.set("arch", arch_name).set("plan", plan.describe());
    emit(&r, &a.report)
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    let models: Vec<Model> = a
        .models
        .iter()
        .map(|p| load_artifact(p, a.pretrained.as_deref()))
        .collect::<Result<_>>()?;
    let data = load_data(&a.data.data, &models[0])?;
    let metric = metric_for(a.metric.as_deref(), &data)?;
    let examples = split_of(&data, a.data.split);
    let mode = match a.mode {
        EnsembleModeArg::Labels => EnsembleMode::Labels,
        EnsembleModeArg::Logits => EnsembleMode::Logits,
        EnsembleModeArg::Probs => EnsembleMode::Probs,
    };
    let (pred, gold) = ensemble_models(&models, examples, data.kind, mode)?;
    let k = data.kind.num_labels().unwrap_or(0);
    let mut r = Report::new("ensemble");
    r.set("mode", mode)
        .set("data", show(&a.data.data))
        .set("split", split_name(a.data.split))
        .set("metric", metric)
        .set("ensemble_value", metric.compute(&pred, &gold, k));
    let mut t = Table::new("members", &["model", "value"]);
    for (p, m) in a.models.iter().zip(&models) {
        t.row(vec![show(p), evaluate(m, examples, data.kind, metric)?.to_string()]);
    }
    r.add_table(t);
    emit(&r, &a.report)
}

/// Dense endpoint; a classifier-less endpoint (a pretrained checkpoint)
/// borrows the other endpoint's classifier.
fn endpoint(path: &Path, pretrained: Option<&Path>) -> Result<Model> {
    let m = load_artifact(path, pretrained)?;
    let mut m = if m.is_masked() { m.materialized()? } else { m };
    m.drop_mlm_head();
    Ok(m)
}

fn share_classifier(a: &mut Model, b: &Model) -> Result<()> {
    if !a.has_classifier() && b.has_classifier() {
        let w = b.params.value(&weight_name(CLASSIFIER))?.clone();
        a.config.num_labels = b.config.num_labels;
        a.params.insert(weight_name(CLASSIFIER), w, true);
    }
    Ok(())
}

fn path_table(name: &str, col: &str, points: &[PathPoint]) -> Table {
    let mut t = Table::new(name, &[col, "metric", "loss"]);
    for p in points {
        t.row(vec![p.position.to_string(), p.metric.to_string(), p.loss.to_string()]);
    }
    t
}

fn mean_loss_of(points: &[PathPoint]) -> f64 {
    mean(&points.iter().map(|p| p.loss).collect::<Vec<_>>())
}

fn connect(a: ConnectArgs) -> Result<()> {
    let mut w0 = endpoint(&a.start, a.pretrained.as_deref())?;
    let mut w1 = endpoint(&a.end, a.pretrained.as_deref())?;
    share_classifier(&mut w0, &w1)?;
    share_classifier(&mut w1, &w0)?;
    check_manifest(&w0, &w1)?;
    let data = load_data(&a.data.data, &w0)?;
    let metric = metric_for(a.metric.as_deref(), &data)?;
    let examples = split_of(&data, a.data.split);
    let mut r = Report::new("connect");
    r.set("start", show(&a.start))
        .set("end", show(&a.end))
        .set("data", show(&a.data.data))
        .set("split", split_name(a.data.split))
        .set("metric", metric)
        .set("points", a.points);
    let start = Instant::now();
    if a.linear {
        let line = eval_path(a.points, examples, data.kind, metric, |g| {
            interpolate_linear(&w0, &w1, g)
        })?;
        let min = line.iter().map(|p| p.metric).fold(f64::INFINITY, f64::min);
        r.set("shape", "linear")
            .set("min_path_metric", min)
            .set("mean_path_loss", mean_loss_of(&line));
        r.add_table(path_table("path", "gamma", &line));
    } else {
        let mut curve = BezierCurve::straight(w0, w1, a.bends)?;
        let before = eval_path(a.points, examples, data.kind, metric, |t| curve.point(t))?;
        let cfg = CurveTrainConfig {
            steps: a.steps,
            lr: a.curve_lr,
            batch_size: a.batch_size,
            seed: a.seed,
        };
        train_bezier(&mut curve, &data.train, data.kind, &cfg)?;
        let after = eval_path(a.points, examples, data.kind, metric, |t| curve.point(t))?;
        let min = after.iter().map(|p| p.metric).fold(f64::INFINITY, f64::min);
        r.set("shape", "bezier")
            .set("bends", a.bends)
            .set("degree", curve.degree())
            .set("steps", a.steps)
            .set("curve_lr", a.curve_lr)
            .set("seed", a.seed)
            .set("min_path_metric", min)
            .set("mean_path_loss_initial", mean_loss_of(&before))
            .set("mean_path_loss", mean_loss_of(&after));
        r.add_table(path_table("initial_curve", "t", &before));
        r.add_table(path_table("curve", "t", &after));
    }
    timed("connect", start);
    emit(&r, &a.report)
}

fn dump(a: DumpArgs) -> Result<()> {
    let model = load_artifact(&a.model.model, a.model.pretrained.as_deref())?;
    let data = load_data(&a.data.data, &model)?;
    let examples = split_of(&data, a.data.split);
    let text = dump_cls_embeddings(&model, examples)?;
    write_atomic(&a.out, text.as_bytes())?;
    let mut r = Report::new("dump-embeddings");
    r.set("model", show(&a.model.model))
        .set("data", show(&a.data.data))
        .set("split", split_name(a.data.split))
        .set("out", show(&a.out))
        .set("rows", examples.len())
        .set("dim", model.config.hidden);
    emit(&r, &a.report)
}
