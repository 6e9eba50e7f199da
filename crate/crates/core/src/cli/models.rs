use super::{usage, ModelArg, ModelArgs};
use crate::corpus::{Dataset, Task};
use crate::faithfulness::{OfflinePredictor, Predictor, ProbabilityRecord};
use crate::jsonl::read_records_from_path;
use crate::refmodels::{make_rationale_oracle, Checkpoint, ModelKind, RationaleOracle, RefModel};
use anyhow::Context;
use std::collections::BTreeSet;
use std::path::Path;

/// Class names of the head used for MRC attention models, which have no
/// class labels of their own.
const MRC_HEAD_CLASSES: [&str; 2] = ["answerable", "unanswerable"];

// One value per process; boxing the large variant buys nothing.
#[allow(clippy::large_enum_variant)]
pub enum LoadedModel {
    Ref(RefModel),
    Oracle(RationaleOracle),
    Offline(OfflinePredictor),
}

impl LoadedModel {
    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            LoadedModel::Ref(m) => m.predictor(),
            LoadedModel::Oracle(m) => m,
            LoadedModel::Offline(m) => m,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LoadedModel::Ref(m) => m.tag(),
            LoadedModel::Oracle(_) => "oracle",
            LoadedModel::Offline(_) => "offline",
        }
    }
}

/// The single task of a dataset; mixed-task files are rejected.
pub fn dataset_task(ds: &Dataset) -> anyhow::Result<Task> {
    let tasks: BTreeSet<&'static str> = ds.examples().iter().map(|ex| ex.task.as_str()).collect();
    let first = ds.examples().first().context("dataset is empty")?.task;
    if tasks.len() > 1 {
        anyhow::bail!("dataset mixes tasks {tasks:?}; run one task at a time");
    }
    Ok(first)
}

/// Sorted distinct class labels of a classification dataset.
pub fn dataset_classes(ds: &Dataset) -> Vec<String> {
    let names: BTreeSet<&str> = ds
        .examples()
        .iter()
        .filter_map(|ex| ex.label.class_name())
        .collect();
    names.into_iter().map(str::to_string).collect()
}

fn parse_triggers(list: &str) -> anyhow::Result<Vec<(String, String)>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (tok, class) = pair
                .split_once('=')
                .ok_or_else(|| usage(format!("trigger {pair:?} must look like token=class")))?;
            Ok((tok.trim().to_string(), class.trim().to_string()))
        })
        .collect()
}

/// Reject flag combinations before any work is done.
pub fn check_model_args(args: &ModelArgs) -> anyhow::Result<()> {
    match args.model {
        Some(ModelArg::Oracle) => {
            if args.triggers.is_none() {
                return Err(usage("--model oracle needs --triggers token=class,..."));
            }
            if args.checkpoint.is_some() {
                return Err(usage("--checkpoint applies to bow and attn models only"));
            }
        }
        Some(_) if args.triggers.is_some() => {
            return Err(usage("--triggers applies to --model oracle only"))
        }
        None if args.checkpoint.is_some() || args.triggers.is_some() => {
            return Err(usage("--checkpoint and --triggers need --model"))
        }
        _ => {}
    }
    if args.dim == 0 {
        return Err(usage("--dim must be positive"));
    }
    Ok(())
}

/// Build the in-process model named by `args` for `ds`.
pub fn load_model(args: &ModelArgs, ds: &Dataset, seed: u64) -> anyhow::Result<LoadedModel> {
    let kind = args.model.ok_or_else(|| usage("--model is required"))?;
    let task = dataset_task(ds)?;
    let classes = if task.is_classification() {
        dataset_classes(ds)
    } else {
        MRC_HEAD_CLASSES.iter().map(|s| s.to_string()).collect()
    };
    if kind == ModelArg::Oracle {
        let triggers = parse_triggers(args.triggers.as_deref().unwrap_or_default())?;
        let oracle = make_rationale_oracle(classes, triggers).map_err(usage)?;
        return Ok(LoadedModel::Oracle(oracle));
    }
    let ck = match &args.checkpoint {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let ck: Checkpoint = serde_json::from_str(&text)
                .with_context(|| format!("parsing checkpoint {}", path.display()))?;
            let want = if kind == ModelArg::Bow {
                ModelKind::Bow
            } else {
                ModelKind::Attn
            };
            if ck.kind != want {
                return Err(usage(format!(
                    "checkpoint {} is not a {} model",
                    path.display(),
                    kind.as_str()
                )));
            }
            ck
        }
        None => Checkpoint {
            kind: if kind == ModelArg::Bow {
                ModelKind::Bow
            } else {
                ModelKind::Attn
            },
            dim: args.dim,
            classes,
            seed,
            segments: None,
            weights: None,
        },
    };
    let vocab: BTreeSet<&str> = ds.examples().iter().flat_map(|ex| ex.texts()).collect();
    let model = RefModel::from_checkpoint(&ck, vocab, task.segment_count())?;
    Ok(LoadedModel::Ref(model))
}

pub fn load_offline(path: &Path, classes: Option<&str>) -> anyhow::Result<LoadedModel> {
    let records: Vec<ProbabilityRecord> = read_records_from_path(path)?;
    let classes = classes.map(|c| c.split(',').map(|s| s.trim().to_string()).collect());
    Ok(LoadedModel::Offline(OfflinePredictor::from_records(
        records, classes,
    )?))
}
