use super::models::{check_model_args, dataset_task, load_model, load_offline, LoadedModel};
use super::{
    usage, Command, DatasetArgs, ExtractArgs, FaithfulnessArgs, MethodArg, ModelArg, OutputArgs,
    RationaleSource,
};
use crate::corpus::{
    dataset_stats, parse_dataset, AnnotatedExample, Dataset, ParseMode, SetSelector, Task, Variant,
};
use crate::faithfulness::{
    argmax, checked_predict, map_corpus, suf_com_corpus, variant_performance, PredictRequest,
    ScoreMap, VariantKind,
};
use crate::jsonl::{read_records_from_path, to_jsonl, write_atomic};
use crate::plausibility::{plausibility_corpus, PredictedRationale};
use crate::qc::{evaluate_ratings, QcStatus, RatingRecord};
use crate::refmodels::RefModel;
use crate::report::{
    canonical_json, check_consistency, emit_report, merge_reports, summary_line, to_value,
    EvalReport, MEAN_TOLERANCE, ROUNDED_MEAN_TOLERANCE,
};
use crate::saliency::{
    attention_scores_ref, integrated_gradients, lime_explain, mrc_attention_ref,
    select_topk_scoped, selection_ranges, IgConfig, LimeConfig, Rlr, SaliencyError,
};
use anyhow::Context;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

pub fn dispatch(
    cmd: Command,
    seed: u64,
    pool: &rayon::ThreadPool,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    match cmd {
        Command::Validate { dataset } => validate(&dataset, stdout),
        Command::Stats { input, output } => stats(&input, &output, seed, stdout),
        Command::Extract(args) => extract(&args, seed, pool, stdout),
        Command::SelectTopk {
            scores,
            dataset,
            rlr,
            topk_scope,
            out,
            lenient,
        } => {
            let rlr = rlr.map(parse_rlr).transpose()?;
            if rlr.is_none() && dataset.is_none() {
                return Err(usage("select-topk needs --rlr or --dataset to derive it"));
            }
            let ds = dataset
                .map(|path| {
                    load_dataset(&DatasetArgs {
                        dataset: path,
                        lenient,
                    })
                })
                .transpose()?;
            select_topk_cmd(&scores, ds.as_ref(), rlr, topk_scope, &out, stdout)
        }
        Command::EvalPlausibility {
            input,
            predictions,
            output,
        } => eval_plausibility(&input, &predictions, &output, seed, stdout),
        Command::EvalFaithfulness(args) => eval_faithfulness(&args, seed, stdout),
        Command::Qc {
            input,
            ratings,
            output,
        } => qc(&input, &ratings, &output, seed, stdout),
        Command::Report { inputs, output } => report(&inputs, &output, stdout),
    }
}

fn parse_rlr(v: f64) -> anyhow::Result<Rlr> {
    Rlr::new(v).map_err(usage)
}

fn load_dataset(args: &DatasetArgs) -> anyhow::Result<Dataset> {
    let path = &args.dataset;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mode = if args.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let outcome = parse_dataset(BufReader::new(file), mode)
        .with_context(|| format!("reading {}", path.display()))?;
    for issue in &outcome.skipped {
        eprintln!(
            "warning: {}: skipped line {}: {}",
            path.display(),
            issue.line,
            issue.reason
        );
    }
    Ok(outcome.dataset)
}

fn path_text(p: &Path) -> String {
    p.display().to_string()
}

/// Write `text` to `out`, or to stdout when there is no path.
fn write_output(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display())),
        None => stdout.write_all(text.as_bytes()).map_err(Into::into),
    }
}

fn finish_report(
    report: &EvalReport,
    output: &OutputArgs,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let value = report.to_value();
    check_consistency(&value, MEAN_TOLERANCE)?;
    write_output(
        output.out.as_deref(),
        &emit_report(&value, output.format),
        stdout,
    )?;
    if let Some(path) = &output.out {
        writeln!(stdout, "{} -> {}", summary_line(&value), path.display())?;
    }
    Ok(())
}

fn validate(path: &Path, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let outcome = parse_dataset(BufReader::new(file), ParseMode::Lenient)?;
    for issue in &outcome.skipped {
        writeln!(stdout, "line {}: {}", issue.line, issue.reason)?;
    }
    let n = outcome.skipped.len();
    writeln!(stdout, "{n} violations")?;
    if n > 0 {
        anyhow::bail!("{} has {n} invalid records", path.display());
    }
    Ok(())
}

fn stats(
    input: &DatasetArgs,
    output: &OutputArgs,
    seed: u64,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let ds = load_dataset(input)?;
    let mut report = EvalReport::new("stats", seed).config("dataset", path_text(&input.dataset));
    report.stats = Some(to_value(dataset_stats(&ds)?));
    finish_report(&report, output, stdout)
}

fn check_extract_args(args: &ExtractArgs) -> anyhow::Result<()> {
    check_model_args(&args.model)?;
    let model = args
        .model
        .model
        .ok_or_else(|| usage("extract needs --model"))?;
    match (args.method, model) {
        (MethodArg::Att, m) if m != ModelArg::Attn => {
            return Err(usage("--method att needs --model attn"))
        }
        (MethodArg::Ig, ModelArg::Oracle) => {
            return Err(usage(SaliencyError::NonDifferentiableModel.to_string()))
        }
        _ => {}
    }
    if args.save_checkpoint.is_some() && model == ModelArg::Oracle {
        return Err(usage(
            "--save-checkpoint applies to bow and attn models only",
        ));
    }
    IgConfig::new(args.ig_steps).map_err(|e| usage(e.to_string()))?;
    if args.lime_samples == 0 || args.lime_keep == 0 {
        return Err(usage("--lime-samples and --lime-keep must be positive"));
    }
    if let Some(w) = args.lime_width {
        if !(w > 0.0 && w.is_finite()) {
            return Err(usage("--lime-width must be positive"));
        }
    }
    Ok(())
}

fn full_prediction_class(model: &LoadedModel, ex: &AnnotatedExample) -> anyhow::Result<usize> {
    let probs = checked_predict(
        model.predictor(),
        &PredictRequest {
            instance_id: &ex.id,
            variant: VariantKind::Full,
            segments: &ex.segments,
        },
    )?;
    Ok(argmax(&probs))
}

fn extract_one(
    args: &ExtractArgs,
    model: &LoadedModel,
    ex: &AnnotatedExample,
    seed: u64,
) -> anyhow::Result<ScoreMap> {
    let tag = model.tag();
    if ex.task == Task::Mrc && args.method != MethodArg::Att {
        let method = if args.method == MethodArg::Ig {
            "ig"
        } else {
            "lime"
        };
        return Err(SaliencyError::UnsupportedTask {
            method,
            task: ex.task.to_string(),
        }
        .into());
    }
    let map = match (args.method, model) {
        (MethodArg::Ig, LoadedModel::Ref(m)) => {
            let class = full_prediction_class(model, ex)?;
            let cfg = IgConfig::new(args.ig_steps)?;
            integrated_gradients(m.differentiable(), &ex.id, &ex.segments, class, cfg, tag)?
        }
        (MethodArg::Att, LoadedModel::Ref(RefModel::Attn(m))) => {
            if ex.task == Task::Mrc {
                mrc_attention_ref(m, &ex.id, &ex.segments, tag)?
            } else {
                attention_scores_ref(m, &ex.id, &ex.segments, tag)?
            }
        }
        (MethodArg::Lime, _) => {
            let class = full_prediction_class(model, ex)?;
            let cfg = LimeConfig {
                n_samples: args.lime_samples,
                k_keep: args.lime_keep,
                kernel_width: args.lime_width,
                seed,
            };
            lime_explain(model.predictor(), ex, class, &cfg, tag)?
        }
        _ => unreachable!("method/model combinations are checked up front"),
    };
    map.check(ex.len())?;
    Ok(map)
}

fn extract(
    args: &ExtractArgs,
    seed: u64,
    pool: &rayon::ThreadPool,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    check_extract_args(args)?;
    let ds = load_dataset(&args.input)?;
    let model = load_model(&args.model, &ds, seed)?;
    let maps: Vec<ScoreMap> = pool.install(|| {
        ds.examples()
            .par_iter()
            .map(|ex| {
                extract_one(args, &model, ex, seed).with_context(|| format!("instance {:?}", ex.id))
            })
            .collect::<anyhow::Result<_>>()
    })?;
    if let (Some(path), LoadedModel::Ref(m)) = (&args.save_checkpoint, &model) {
        let text = serde_json::to_string(&m.to_checkpoint(seed))? + "\n";
        write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    write_atomic(&args.out, to_jsonl(&maps).as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(
        stdout,
        "wrote {} score maps to {}",
        maps.len(),
        args.out.display()
    )?;
    Ok(())
}

fn read_scores(path: &Path) -> anyhow::Result<HashMap<String, ScoreMap>> {
    let maps: Vec<ScoreMap> =
        read_records_from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_id = HashMap::with_capacity(maps.len());
    for m in maps {
        let id = m.instance_id.clone();
        if by_id.insert(id.clone(), m).is_some() {
            anyhow::bail!("{}: duplicate score map for {id:?}", path.display());
        }
    }
    Ok(by_id)
}

fn dataset_rlr(ds: &Dataset) -> anyhow::Result<Rlr> {
    let rlr = dataset_stats(ds)?.rlr;
    Rlr::new(rlr).map_err(|e| anyhow::anyhow!("dataset rlr unusable: {e}"))
}

#[allow(clippy::single_range_in_vec_init)]
fn select_topk_cmd(
    scores: &Path,
    ds: Option<&Dataset>,
    rlr: Option<Rlr>,
    scope: crate::saliency::TopkScope,
    out: &Path,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let maps: Vec<ScoreMap> =
        read_records_from_path(scores).with_context(|| format!("reading {}", scores.display()))?;
    let rlr = match (rlr, ds) {
        (Some(r), _) => r,
        (None, Some(ds)) => dataset_rlr(ds)?,
        (None, None) => unreachable!("checked by the caller"),
    };
    let mut preds = Vec::with_capacity(maps.len());
    for m in &maps {
        let ranges = match ds {
            Some(ds) => {
                let ex = ds.get(&m.instance_id).with_context(|| {
                    format!("score map for unknown instance {:?}", m.instance_id)
                })?;
                m.check(ex.len())?;
                selection_ranges(ex)
            }
            None => {
                m.check(m.len())?;
                vec![0..m.len()]
            }
        };
        preds.push(select_topk_scoped(m, &ranges, rlr, scope).1);
    }
    write_atomic(out, to_jsonl(&preds).as_bytes())
        .with_context(|| format!("writing {}", out.display()))?;
    writeln!(
        stdout,
        "selected top-k rationales for {} instances at rlr={:.6} -> {}",
        preds.len(),
        rlr.value(),
        out.display()
    )?;
    Ok(())
}

fn eval_plausibility(
    input: &DatasetArgs,
    predictions: &Path,
    output: &OutputArgs,
    seed: u64,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let ds = load_dataset(input)?;
    let preds: Vec<PredictedRationale> = read_records_from_path(predictions)
        .with_context(|| format!("reading {}", predictions.display()))?;
    let mut report = EvalReport::new("eval-plausibility", seed)
        .config("dataset", path_text(&input.dataset))
        .config("predictions", path_text(predictions))
        .meta(
            "iou_match_threshold",
            crate::plausibility::IOU_MATCH_THRESHOLD,
        )
        .meta("token_f1_gold_choice", "best set, smallest index on ties")
        .meta("iou_gold_choice", "best set, independent of token_f1");
    report.plausibility = Some(to_value(plausibility_corpus(&preds, &ds)?));
    finish_report(&report, output, stdout)
}

fn eval_faithfulness(
    args: &FaithfulnessArgs,
    seed: u64,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    check_model_args(&args.model)?;
    let rlr_override = args.rlr.map(parse_rlr).transpose()?;
    let ds = load_dataset(&args.input)?;
    let scores = read_scores(&args.scores)?;
    let rlr = match rlr_override {
        Some(r) => r,
        None => dataset_rlr(&ds)?,
    };
    let model = match (&args.model.model, &args.probs) {
        (Some(_), _) => Some(load_model(&args.model, &ds, seed)?),
        (None, Some(path)) => Some(load_offline(path, args.classes.as_deref())?),
        (None, None) => None,
    };

    let maps = map_corpus(&scores, &ds, rlr, args.map_scope, args.topk_scope)?;
    let mut block = json!({
        "map": if maps.per_pair.is_empty() { Value::Null } else { json!(maps.map) },
        "pairs": maps.per_pair.len(),
        "per_pair": maps.per_pair,
    });

    let task = dataset_task(&ds)?;
    let mut report = EvalReport::new("eval-faithfulness", seed)
        .config("dataset", path_text(&args.input.dataset))
        .config("scores", path_text(&args.scores))
        .config("rlr", rlr.value())
        .config("map_scope", args.map_scope.as_str())
        .config("topk_scope", args.topk_scope.as_str())
        .meta("map_token_matching", "surface string, multiset")
        .meta("rlr_mode", crate::corpus::RLR_MODE);

    if let Some(model) = &model {
        report = report.config("model", model.tag());
        if let Some(p) = &args.probs {
            report = report.config("probs", path_text(p));
        }
    }
    match (&model, task.is_classification()) {
        (Some(model), true) => {
            let rationales = sufcom_rationales(args, &ds, &scores, rlr)?;
            let rows = suf_com_corpus(model.predictor(), &ds, &rationales)?;
            let n = rows.len().max(1) as f64;
            block["suf"] = json!(rows.iter().map(|r| r.scores.suf).sum::<f64>() / n);
            block["com"] = json!(rows.iter().map(|r| r.scores.com).sum::<f64>() / n);
            block["per_instance"] = to_value(&rows);
            report = report
                .config(
                    "rationale",
                    if args.rationale == RationaleSource::Topk {
                        "topk"
                    } else {
                        "gold"
                    },
                )
                .meta("sufcom_class", "argmax on the full input");
            if !matches!(model, LoadedModel::Offline(_)) {
                let union = SetSelector::Union;
                block["accuracy"] = json!({
                    "full": variant_performance(model.predictor(), &ds, Variant::Full)?,
                    "rationale": variant_performance(model.predictor(), &ds, Variant::RationaleOnly(union))?,
                    "nonrationale": variant_performance(model.predictor(), &ds, Variant::NonRationale(union))?,
                });
            }
        }
        (Some(_), false) => {
            report = report.meta("sufcom", format!("not defined for {task}"));
        }
        (None, _) => {}
    }
    report.faithfulness = Some(block);
    finish_report(&report, &args.output, stdout)
}

fn sufcom_rationales(
    args: &FaithfulnessArgs,
    ds: &Dataset,
    scores: &HashMap<String, ScoreMap>,
    rlr: Rlr,
) -> anyhow::Result<BTreeMap<String, BTreeSet<usize>>> {
    ds.examples()
        .iter()
        .map(|ex| {
            let set = match args.rationale {
                RationaleSource::Gold => ex.rationale_union(),
                RationaleSource::Topk => {
                    let m = scores
                        .get(&ex.id)
                        .with_context(|| format!("no score map for instance {:?}", ex.id))?;
                    m.check(ex.len())?;
                    select_topk_scoped(m, &selection_ranges(ex), rlr, args.topk_scope)
                        .1
                        .indices
                }
            };
            Ok((ex.id.clone(), set))
        })
        .collect()
}

fn qc(
    input: &DatasetArgs,
    ratings: &Path,
    output: &OutputArgs,
    seed: u64,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let ds = load_dataset(input)?;
    let records: Vec<RatingRecord> = read_records_from_path(ratings)
        .with_context(|| format!("reading {}", ratings.display()))?;
    let verdicts = evaluate_ratings(&records, &ds)?;
    let count = |status: &str| {
        verdicts
            .iter()
            .filter(|v| v.verdict.status.as_str() == status)
            .count()
    };
    let block = json!({
        "qualified": count(QcStatus::Qualified.as_str()),
        "needs_revision": count("needs_revision"),
        "discarded": count("discarded"),
        "unrated": ds.len() - verdicts.len(),
        "thresholds": {
            "sufficiency": crate::qc::SUFFICIENCY_THRESHOLD,
            "compactness": crate::qc::COMPACTNESS_THRESHOLD,
            "comprehensiveness": crate::qc::COMPREHENSIVENESS_THRESHOLD,
        },
        "examples": verdicts,
    });
    let mut report = EvalReport::new("qc", seed)
        .config("dataset", path_text(&input.dataset))
        .config("ratings", path_text(ratings));
    report.qc = Some(block);
    finish_report(&report, output, stdout)
}

fn report(
    inputs: &[std::path::PathBuf],
    output: &OutputArgs,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let values = inputs
        .iter()
        .map(|p| {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<Value>(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let merged = if values.len() == 1 {
        values.into_iter().next().expect("one report")
    } else {
        merge_reports(&values)?
    };
    check_consistency(&merged, ROUNDED_MEAN_TOLERANCE)?;
    let text = match output.format {
        crate::report::ReportFormat::Json => canonical_json(&merged),
        crate::report::ReportFormat::Csv => emit_report(&merged, output.format),
    };
    write_output(output.out.as_deref(), &text, stdout)
}
