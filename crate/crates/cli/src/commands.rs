use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use lesion_core::config::{resolve_seed, SEED_ENV};
use lesion_core::dataset::{parse_ground_truth_with, scan_images, task_labels};
use lesion_core::eval::{predict_label, predict_probs};
use lesion_core::embedding::pretrained_backend;
use lesion_core::mlp::{predict, HIDDEN_UNITS, OUTPUT_UNITS};
use lesion_core::preprocess::{
    apply_transform_with, decode_image, image_seed, select_augmentation_subset, PoolTag, Provenance, INPUT_SIDE,
};
use lesion_core::train::load_checkpoint_expecting;
use lesion_core::{
    embed, evaluation_report, read_feature_cache, resize_bilinear, save_checkpoint, stub_backend,
    train_task, write_feature_cache, DatasetError, EmbeddingBackend, EmbeddingError, FeatureVector,
    GroundTruthRecord, ImageTensor, LabelSchema, MlpParams, PipelineConfig, Task, TaskScores, TransformKind, FEATURE_DIM,
};
use rayon::prelude::*;

use crate::{BackendArgs, BackendKind, CommonArgs, EvalArgs, ExtractArgs, PredictArgs, TrainArgs};

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            PipelineConfig::parse(&text).with_context(|| format!("config {}", p.display()))
        }
    }
}

/// Config with the seed resolved as flag, then `LESION_SEED`, then file.
fn settings(common: &CommonArgs) -> Result<PipelineConfig> {
    let mut cfg = load_config(common.config.as_deref())?;
    let env = std::env::var(SEED_ENV).ok();
    cfg.seed = resolve_seed(common.seed, env.as_deref(), cfg.seed)?;
    Ok(cfg)
}

fn backend(args: &BackendArgs, cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingBackend>> {
    Ok(match args.backend {
        BackendKind::Stub => Box::new(stub_backend(cfg.seed)),
        BackendKind::Pretrained => {
            let model = args.model.as_deref().expect("clap requires --model for the pretrained backend");
            Box::new(pretrained_backend(model, cfg.normalization)?)
        }
    })
}

fn network_input(image_id: &str, path: &Path) -> Result<ImageTensor> {
    let img = decode_image(image_id, path)?;
    resize_bilinear(&img, INPUT_SIDE, INPUT_SIDE).with_context(|| format!("resizing {image_id}"))
}

fn read_labels(path: &Path, schema: LabelSchema) -> Result<Vec<GroundTruthRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading labels {}", path.display()))?;
    parse_ground_truth_with(&text, schema).with_context(|| format!("labels {}", path.display()))
}

fn load_head(path: &Path, cfg: &PipelineConfig) -> Result<MlpParams<f32>> {
    let params = load_checkpoint_expecting(path, (FEATURE_DIM, HIDDEN_UNITS, OUTPUT_UNITS))
        .with_context(|| format!("checkpoint {}", path.display()))?;
    Ok(params.with_activation(cfg.hidden_activation))
}

pub fn extract(args: ExtractArgs) -> Result<()> {
    let cfg = settings(&args.common)?;
    let backend = backend(&args.backend, &cfg)?;
    let files = scan_images(&args.images)?;
    if files.is_empty() {
        return Err(anyhow!(DatasetError::EmptyDataset)).context(format!("no images in {}", args.images.display()));
    }
    let mut workers = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        workers = workers.num_threads(jobs.max(1));
    }
    let workers = workers.build()?;

    let items: Vec<(&String, &std::path::PathBuf)> = files.iter().collect();
    let originals: Vec<(String, FeatureVector)> = workers.install(|| {
        items
            .par_iter()
            .map(|(id, path)| {
                let img = network_input(id, path)?;
                let v = embed(backend.as_ref(), &img).with_context(|| format!("embedding {id}"))?;
                Ok(((*id).clone(), v))
            })
            .collect::<Result<_>>()
    })?;
    write_feature_cache(&args.out, &originals, backend.backend_id())?;

    let mut augmented_count = 0;
    if let Some(aug_out) = &args.augment_out {
        let params = cfg.augment_params();
        params.validate()?;
        let selected = select_augmentation_subset(&items, cfg.augment_fraction, cfg.seed)?;
        if let Some(dir) = &args.dump_augmented {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let nested: Vec<Vec<(String, FeatureVector)>> = workers.install(|| {
            selected
                .par_iter()
                .map(|(id, path)| {
                    let original = network_input(id, path)?;
                    let seed = image_seed(cfg.seed, id);
                    TransformKind::ALL
                        .iter()
                        .map(|&kind| {
                            let img = apply_transform_with(&original, kind, seed, &params);
                            let tag = PoolTag {
                                source_id: (*id).clone(),
                                provenance: Provenance::Augmented(kind),
                            };
                            if let Some(dir) = &args.dump_augmented {
                                let file = dir.join(format!("{id}__{kind}.png"));
                                img.to_rgb8()
                                    .save(&file)
                                    .with_context(|| format!("writing {}", file.display()))?;
                            }
                            let v = embed(backend.as_ref(), &img).with_context(|| format!("embedding {}", tag.pool_id()))?;
                            Ok((tag.pool_id(), v))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()
        })?;
        let entries: Vec<_> = nested.into_iter().flatten().collect();
        augmented_count = entries.len();
        write_feature_cache(aug_out, &entries, backend.backend_id())?;
    }
    println!("images={} augmented={augmented_count}", originals.len());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = settings(&args.common)?;
    let config = cfg.train_config(args.task);
    let cache = read_feature_cache(&args.features)?;
    let records = read_labels(&args.labels, args.label_schema)?;
    let mut labels = task_labels(&records, args.task);

    let present: HashSet<&str> = cache.entries.iter().map(|(id, _)| id.as_str()).collect();
    let absent: Vec<&str> = records
        .iter()
        .map(|r| r.image_id.as_str())
        .filter(|id| !present.contains(id))
        .collect();
    if !absent.is_empty() {
        bail!(
            "{} labelled id(s) missing from {}: {}",
            absent.len(),
            args.features.display(),
            absent.join(", ")
        );
    }

    let mut features = cache.entries;
    if let Some(path) = &args.augmented_features {
        let aug = read_feature_cache(path)?;
        if aug.backend_id != cache.backend_id {
            return Err(EmbeddingError::BackendMismatch {
                expected: cache.backend_id,
                found: aug.backend_id,
            }
            .into());
        }
        for (id, v) in aug.entries {
            let tag = PoolTag::parse_pool_id(&id).ok_or_else(|| anyhow!("malformed augmented id `{id}`"))?;
            let label = *labels
                .get(&tag.source_id)
                .ok_or_else(|| anyhow!("augmented entry `{id}` has no labelled source image"))?;
            labels.insert(id.clone(), label);
            features.push((id, v));
        }
    }

    let (params, log) = train_task(&features, &labels, &config)?;
    save_checkpoint(&params, &args.out)?;
    fs::write(&args.log, log.to_csv()).with_context(|| format!("writing {}", args.log.display()))?;
    let last = log.last().expect("at least one logged iteration");
    println!("final_loss={} train_accuracy={}", last.loss, last.train_accuracy);
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let cache = read_feature_cache(&args.features)?;
    let records = read_labels(&args.labels, args.label_schema)?;
    let by_id: HashMap<&str, &FeatureVector> = cache.entries.iter().map(|(id, v)| (id.as_str(), v)).collect();
    let mut ids = Vec::with_capacity(records.len());
    let mut feats = Vec::with_capacity(records.len());
    let mut absent = Vec::new();
    for r in &records {
        match by_id.get(r.image_id.as_str()) {
            Some(v) => {
                ids.push(r.image_id.clone());
                feats.push((*v).clone());
            }
            None => absent.push(r.image_id.as_str()),
        }
    }
    if !absent.is_empty() {
        bail!(
            "{} labelled id(s) missing from {}: {}",
            absent.len(),
            args.features.display(),
            absent.join(", ")
        );
    }

    let mut scores = Vec::new();
    for (task, path) in Task::ALL.into_iter().zip([&args.model_task1, &args.model_task2]) {
        let head = load_head(path, &cfg)?;
        let probs = predict_probs(&head, &feats)?;
        scores.push(TaskScores {
            ids: ids.clone(),
            scores: probs.iter().map(|p| f64::from(p[1])).collect(),
            labels: records.iter().map(|r| r.label(task)).collect(),
        });
    }
    let report = evaluation_report(&scores[0], &scores[1])?;
    fs::write(&args.report, report.to_json()).with_context(|| format!("writing {}", args.report.display()))?;
    if let Some(dir) = &args.roc_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for t in &report.tasks {
            if let Some(roc) = &t.roc {
                let file = dir.join(format!("{}.csv", t.task));
                fs::write(&file, roc.to_csv()).with_context(|| format!("writing {}", file.display()))?;
            }
        }
    }
    for t in &report.tasks {
        match t.auc {
            Some(auc) => println!("{} accuracy={} auc={auc}", t.task, t.accuracy),
            None => println!("{} accuracy={} auc=undefined", t.task, t.accuracy),
        }
    }
    if let Some(t) = report.tasks.iter().find(|t| t.error.is_some()) {
        bail!("{}: {}", t.task, t.error.as_deref().unwrap_or_default());
    }
    println!("mean_auc={}", report.mean_auc.expect("both AUCs defined"));
    Ok(())
}

pub fn predict_image(args: PredictArgs) -> Result<()> {
    let cfg = settings(&args.common)?;
    let backend = backend(&args.backend, &cfg)?;
    let image_id = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let img = network_input(&image_id, &args.image)?;
    let v = embed(backend.as_ref(), &img)?;
    for (task, path) in Task::ALL.into_iter().zip([&args.model_task1, &args.model_task2]) {
        let head = load_head(path, &cfg)?;
        let p = f64::from(predict(&head, v.as_slice())?[1]);
        println!("{task} p(positive)={p} label={}", predict_label(p));
    }
    Ok(())
}
