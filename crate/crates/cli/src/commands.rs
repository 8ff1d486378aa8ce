use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use salcap::data_io::{gen_synthetic, Dataset, Sample, SyntheticSpec};
use salcap::decoder::Model;
use salcap::inference::{greedy_decode, trace_attention};
use salcap::optim::{fit, grad_check as run_grad_check, tiny_config, write_log_csv, TrainSet};
use salcap::vocab::{tokenize, Vocabulary};
use salcap_metrics::{difference_pct, evaluate as score, novelty_pct, read_captions, CaptionCorpus, EvalOptions};
use salcap_salstats::{
    class_hit_rates, load_pairs_file, size_saliency_distribution, write_distribution_csv, write_hit_csv,
    write_pixel_csv, HitOptions,
};
use serde_json::json;

use crate::config::{seed_from_env, RunConfig};
use crate::{AnalyzeArgs, CaptionArgs, EvaluateArgs, GenSynthArgs, GradCheckArgs, TraceArgs, TrainArgs};

/// Bad input (exit 1) or a failure during the work itself (exit 2).
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn invalid(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Outcome<T> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn invalid<T>(msg: impl Display) -> Outcome<T> {
    Err(Failure::Invalid(anyhow!("{msg}")))
}

/// Output directories must be missing or empty unless `force` is set.
fn check_out_dir(dir: &Path, force: bool) -> Outcome {
    if force || !dir.exists() {
        return Ok(());
    }
    if !dir.is_dir() {
        return invalid(format!("{} exists and is not a directory", dir.display()));
    }
    let mut entries = std::fs::read_dir(dir)
        .with_context(|| dir.display().to_string())
        .invalid()?;
    if entries.next().is_some() {
        return invalid(format!("{} is not empty (use --force to write into it)", dir.display()));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .runtime()
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

fn jsonl_writer(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .runtime()
}

pub fn gen_synth(args: GenSynthArgs) -> Outcome {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .invalid()?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .with_context(|| format!("parsing {}", p.display()))
                .invalid()?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed.map(Ok).or_else(|| seed_from_env().transpose()) {
        spec.seed = seed.invalid()?;
    }
    spec.validate().invalid()?;
    check_out_dir(&args.out, args.force)?;
    let manifest = gen_synthetic(&spec, &args.out).runtime()?;
    println!(
        "wrote {} images to {} (seed {})",
        manifest.entries.len(),
        args.out.display(),
        spec.seed
    );
    Ok(())
}

fn merged_run_config(args: &TrainArgs) -> Outcome<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).invalid()?,
        None => RunConfig::default(),
    };
    cfg.apply_seed_env().invalid()?;
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = args.$flag.clone() { cfg.$($field).+ = v; })*
        };
    }
    set! {
        variant => variant,
        epochs => train.epochs,
        learning_rate => train.learning_rate,
        batch_size => train.batch_size,
        seed => train.seed,
        optimizer => train.optimizer,
        max_caption_len => train.max_caption_len,
        hidden => model.hidden,
        embed => model.embed,
        feature_dim => model.feature_dim,
        att_dim => model.att_dim,
        min_count => min_count,
    }
    if let Some(c) = args.grad_clip_norm {
        cfg.train.grad_clip_norm = Some(c);
    }
    if let Some(m) = &args.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate().invalid()?;
    Ok(cfg)
}

fn save_checkpoint(dir: &Path, model: &Model, vocab: &Vocabulary, cfg: &RunConfig) -> Outcome {
    model.save(dir).runtime()?;
    vocab.save(&dir.join("vocab.json")).runtime()?;
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_text(&dir.join("run_config.json"), &text)
}

pub fn train(args: TrainArgs) -> Outcome {
    let cfg = merged_run_config(&args)?;
    let Some(manifest) = cfg.manifest.clone() else {
        return invalid("no manifest given (--manifest or `manifest` in the config)");
    };
    let Some(out) = cfg.out.clone() else {
        return invalid("no output directory given (--out or `out` in the config)");
    };
    check_out_dir(&out, args.force)?;
    let data = Dataset::load(&manifest).invalid()?;
    if let Some(g) = cfg.grid {
        if g != data.manifest.grid {
            return invalid(format!(
                "config grid {}x{} does not match manifest grid {}x{}",
                g.rows, g.cols, data.manifest.grid.rows, data.manifest.grid.cols
            ));
        }
    }
    let samples: Vec<&Sample> = data.split(salcap::data_io::Split::Train).collect();
    if samples.is_empty() {
        return invalid(format!("{}: no training images", manifest.display()));
    }
    let tokenized: Vec<Vec<String>> = samples
        .iter()
        .flat_map(|s| s.captions.iter().map(|c| tokenize(c)))
        .collect();
    let vocab = Vocabulary::build(&tokenized, cfg.min_count).invalid()?;
    let model_cfg = cfg.model_config(data.manifest.feature_dim, vocab.len());
    model_cfg.validate().invalid()?;
    let set = TrainSet::new(samples.iter().copied(), &vocab, cfg.train.max_caption_len).invalid()?;
    if set.truncated() > 0 {
        log::warn!(
            "{} captions longer than {} words were truncated",
            set.truncated(),
            cfg.train.max_caption_len
        );
    }
    log::info!(
        "{} images, {} captions, vocabulary {} (min_count {}), variant {}",
        samples.len(),
        set.examples().len(),
        vocab.len(),
        cfg.min_count,
        cfg.variant
    );

    create_dir(&out)?;
    let mut model = Model::init(model_cfg, cfg.train.seed).runtime()?;
    let mut history = Vec::new();
    let every = args.checkpoint_every;
    let stats = fit(&mut model, &set, &cfg.train, |s, m| {
        history.push(*s);
        if every > 0 && s.epoch % every == 0 {
            let dir = out.join(format!("epoch_{:04}", s.epoch));
            m.save(&dir)?;
            vocab.save(&dir.join("vocab.json"))?;
            write_log_csv(&history, &dir.join("train_log.csv"))?;
        }
        Ok(())
    })
    .runtime()?;
    save_checkpoint(&out, &model, &vocab, &cfg)?;
    write_log_csv(&stats, &out.join("train_log.csv")).runtime()?;
    match stats.last() {
        Some(s) => println!(
            "trained {} epochs, final loss {:.6}; checkpoint in {}",
            s.epoch,
            s.mean_loss,
            out.display()
        ),
        None => println!("0 epochs; initial checkpoint in {}", out.display()),
    }
    Ok(())
}

/// Loads a checkpoint and a dataset and checks that they fit together.
fn load_for_inference(ckpt: &Path, manifest: &Path) -> Outcome<(Model, Vocabulary, Dataset)> {
    let model = Model::load(ckpt).invalid()?;
    let vocab = Vocabulary::load(&ckpt.join("vocab.json")).invalid()?;
    let data = Dataset::load(manifest).invalid()?;
    let cfg = model.config();
    if vocab.len() != cfg.vocab_size {
        return invalid(format!(
            "{}: vocabulary has {} entries but the model expects {}",
            ckpt.display(),
            vocab.len(),
            cfg.vocab_size
        ));
    }
    if data.manifest.feature_dim != cfg.raw_feature_dim {
        return invalid(format!(
            "{}: features have {} channels but the model expects {}",
            manifest.display(),
            data.manifest.feature_dim,
            cfg.raw_feature_dim
        ));
    }
    Ok((model, vocab, data))
}

fn check_max_len(max_len: usize) -> Outcome {
    if max_len == 0 {
        return invalid("--max-len must be at least 1");
    }
    Ok(())
}

pub fn caption(args: CaptionArgs) -> Outcome {
    check_max_len(args.max_len)?;
    let (model, vocab, data) = load_for_inference(&args.ckpt, &args.manifest)?;
    let samples: Vec<&Sample> = data.split(args.split).collect();
    if samples.is_empty() {
        return invalid(format!("{}: split `{}` is empty", args.manifest.display(), args.split));
    }
    let mut out = jsonl_writer(&args.out)?;
    let mut truncated = 0;
    for s in &samples {
        let d = greedy_decode(&model, &s.input, args.max_len).runtime()?;
        truncated += d.truncated as usize;
        let line = json!({"image_id": s.id, "caption": d.text(&vocab).runtime()?});
        writeln!(out, "{line}").context("writing captions").runtime()?;
    }
    out.flush().context("writing captions").runtime()?;
    if let Some(path) = &args.refs_out {
        let mut refs = jsonl_writer(path)?;
        for s in &samples {
            writeln!(refs, "{}", json!({"image_id": s.id, "references": s.captions}))
                .context("writing references")
                .runtime()?;
        }
        refs.flush().context("writing references").runtime()?;
    }
    if truncated > 0 {
        log::warn!(
            "{truncated} captions hit --max-len {} without an end token",
            args.max_len
        );
    }
    println!("captioned {} images into {}", samples.len(), args.out.display());
    Ok(())
}

pub fn trace(args: TraceArgs) -> Outcome {
    check_max_len(args.max_len)?;
    let (model, vocab, data) = load_for_inference(&args.ckpt, &args.manifest)?;
    let variant = model.config().variant;
    if !variant.is_two_path() {
        return invalid(format!(
            "traces need a two-path variant (shared_weights or saliency_context), checkpoint is {variant}"
        ));
    }
    let samples: Vec<&Sample> = match args.split {
        Some(split) => data.split(split).collect(),
        None => data.samples.iter().collect(),
    };
    if samples.is_empty() {
        return invalid("no images to trace");
    }
    create_dir(&args.out)?;
    for s in &samples {
        let (_, tr) = trace_attention(&model, &s.input, args.max_len).runtime()?;
        write_text(&args.out.join(format!("{}.csv", s.id)), &tr.to_csv(&vocab).runtime()?)?;
        tr.write_alpha(&args.out.join(format!("{}_alpha.tnsr", s.id)))
            .runtime()?;
    }
    println!("traced {} images into {}", samples.len(), args.out.display());
    Ok(())
}

fn tokenized_captions(path: &Path) -> Outcome<std::collections::BTreeMap<String, Vec<String>>> {
    Ok(read_captions(path)
        .invalid()?
        .into_iter()
        .map(|(k, c)| (k, tokenize(&c)))
        .collect())
}

pub fn evaluate(args: EvaluateArgs) -> Outcome {
    if !(args.cider_multiplier.is_finite() && args.cider_multiplier > 0.0) {
        return invalid("--cider-multiplier must be positive");
    }
    let corpus = CaptionCorpus::join_files(&args.candidates, &args.references).invalid()?;
    let ours: std::collections::BTreeMap<String, Vec<String>> = corpus
        .entries()
        .iter()
        .map(|e| (e.image_id.clone(), e.candidate.clone()))
        .collect();
    let other = args.compare.as_deref().map(tokenized_captions).transpose()?;
    let train = args.train_captions.as_deref().map(tokenized_captions).transpose()?;

    let mut report = score(
        &corpus,
        &EvalOptions {
            cider_multiplier: args.cider_multiplier,
        },
    )
    .invalid()?;
    if let Some(other) = other {
        report.difference_pct = Some(difference_pct(&ours, &other).invalid()?);
    }
    if let Some(train) = train {
        let gen: Vec<&Vec<String>> = ours.values().collect();
        let train: Vec<&Vec<String>> = train.values().collect();
        report.novelty_pct = Some(novelty_pct(&gen, &train).invalid()?);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &args.out {
        write_text(out, &text)?;
    }
    println!("{text}");
    Ok(())
}

pub fn analyze_saliency(args: AnalyzeArgs) -> Outcome {
    if !(0.0..=1.0).contains(&args.min_overlap_frac) {
        return invalid("--min-overlap-frac must be in [0, 1]");
    }
    let (table, pairs) = load_pairs_file(&args.pairs).invalid()?;
    create_dir(&args.out)?;
    for (name, threshold) in [
        ("hits_low.csv", args.threshold_low),
        ("hits_high.csv", args.threshold_high),
    ] {
        let opts = HitOptions {
            threshold,
            min_occurrences: args.min_occ,
            min_overlap_frac: args.min_overlap_frac,
        };
        let rates = class_hit_rates(&pairs, &table, &opts).runtime()?;
        write_hit_csv(&rates, &args.out.join(name)).runtime()?;
    }
    let dist = size_saliency_distribution(&pairs, &table).runtime()?;
    write_distribution_csv(&dist, &args.out.join("size_saliency.csv")).runtime()?;
    if args.per_pixel {
        write_pixel_csv(&pairs, &table, &args.out.join("pixels.csv")).runtime()?;
    }
    println!("analysed {} image pairs into {}", pairs.len(), args.out.display());
    Ok(())
}

pub fn grad_check(args: GradCheckArgs) -> Outcome {
    if !(args.tolerance.is_finite() && args.tolerance > 0.0) {
        return invalid("--tolerance must be positive");
    }
    let cfg = tiny_config(args.variant);
    let report = run_grad_check(&cfg, args.tolerance, args.seed).runtime()?;
    for p in &report.params {
        println!(
            "{:<16} {:>5} scalars  max rel {:.3e}  max abs {:.3e}",
            p.name, p.scalars, p.max_rel_err, p.max_abs_err
        );
    }
    println!(
        "{}: max relative error {:.3e} (tolerance {:.0e}) {}",
        args.variant,
        report.max_rel_err,
        args.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
    if let Some(out) = &args.out {
        write_text(out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow!("gradient check failed")))
    }
}
