use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::artifacts::{read_embeddings_csv, write_embeddings, EMBEDDINGS_CSV, EMBEDDINGS_JSON};
use super::config::{DataSource, RunConfig};
use super::{CliError, Command, CommonArgs, DataArgs, EvalArgs, ModelArgs};
use crate::bench::fusion_timings;
use crate::data::{write_dataset, Dataset, CHECKINS_FILE, POI_FILE, REGIONS_FILE, TARGETS_FILE, TRIPS_FILE};
use crate::error::DataError;
use crate::evaluation::{evaluate, Evaluation};
use crate::graph::{write_matrix_csv, View};
use crate::math::soft_threshold;
use crate::tensor::Tensor;
use crate::training::{
    forward, train, write_loss_log, AblationVariant, Checkpoint, LossBreakdown, ModelParams, Prepared, TrainConfig,
};

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const LOSS_LOG: &str = "loss_log.csv";

pub(super) fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { common, data } => generate(&common, &data),
        Command::Train { common, data, model, dump_graphs } => train_cmd(&common, &data, &model, dump_graphs),
        Command::Embed { common, data, checkpoint } => embed(&common, &data, &checkpoint),
        Command::Evaluate { common, data, eval, embeddings, assignments } => {
            evaluate_cmd(&common, &data, &eval, &embeddings, assignments.as_deref())
        }
        Command::Benchmark { sizes, runs, dim, memory, seed } => benchmark(&sizes, runs, dim, memory, seed),
        Command::Ablate { common, data, model, eval } => ablate(&common, &data, &model, &eval),
    }
}

fn emit(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    // A closed pipe (`| head`) is not a failure of the command.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(path, text).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

fn base_config(common: &CommonArgs, data: &DataArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_common(common)?;
    cfg.apply_data(data, common.seed)?;
    Ok(cfg)
}

fn generate(common: &CommonArgs, data: &DataArgs) -> Result<(), CliError> {
    let cfg = base_config(common, data)?;
    let city = match cfg.source()? {
        DataSource::Generator(city) => city,
        DataSource::Files { .. } => return Err(CliError::Usage("generate needs generator parameters, not --data".into())),
    };
    let out = cfg.out_dir()?;
    let dataset = crate::data::generate_city(&city)?;
    write_dataset(&dataset, out)?;
    let files = [REGIONS_FILE, TRIPS_FILE, POI_FILE, CHECKINS_FILE, TARGETS_FILE, MANIFEST];
    let manifest = json!({ "seed": city.seed, "city": city, "files": files });
    write_json(&out.join(MANIFEST), &manifest)?;
    eprintln!("wrote {} regions, {} trips to {}", dataset.n_regions(), dataset.trips.len(), out.display());
    emit(&json!({ "command": "generate", "out": out, "seed": city.seed, "city": city, "files": files }))
}

fn dump_graphs(dir: &Path, prep: &Prepared, params: &ModelParams, config: &TrainConfig) -> Result<Vec<String>, CliError> {
    let graphs = dir.join("graphs");
    fs::create_dir_all(&graphs).map_err(|source| DataError::Io { path: graphs.clone(), source })?;
    let mut files = Vec::new();
    for v in View::ALL {
        let raw = &prep.graphs[v.index()];
        let name = format!("graphs/{v}_raw.csv");
        write_matrix_csv(raw, &dir.join(&name))?;
        files.push(name);
        if !config.ablation.no_cleansing {
            let tau = params.get(&format!("tau.{v}")).map_or(0.0, Tensor::item);
            let name = format!("graphs/{v}_cleansed.csv");
            write_matrix_csv(&soft_threshold(raw, tau)?, &dir.join(&name))?;
            files.push(name);
        }
    }
    Ok(files)
}

fn train_cmd(common: &CommonArgs, data: &DataArgs, model: &ModelArgs, graphs: bool) -> Result<(), CliError> {
    let mut cfg = base_config(common, data)?;
    cfg.apply_model(model);
    let out = cfg.out_dir()?.to_path_buf();
    let dataset = cfg.dataset()?;
    let config = &cfg.train;
    let outcome = train(&dataset, config)?;
    let n = dataset.n_regions();
    Checkpoint::new(config.clone(), n, outcome.params.clone()).save(&out.join(CHECKPOINT))?;
    write_loss_log(&outcome.log, &out.join(LOSS_LOG))?;
    write_embeddings(&out, &dataset.regions.ids, &outcome.embeddings, config)?;
    let mut files: Vec<String> =
        [CHECKPOINT, LOSS_LOG, EMBEDDINGS_CSV, EMBEDDINGS_JSON].iter().map(|s| s.to_string()).collect();
    if graphs {
        files.extend(dump_graphs(&out, &Prepared::new(&dataset), &outcome.params, config)?);
    }
    let first = outcome.log.first().map(|e| e.losses);
    if let Some(f) = first {
        eprintln!(
            "trained {} epochs on {n} regions: total {:.4} -> {:.4}",
            config.epochs, f.total, outcome.final_losses.total
        );
    }
    emit(&json!({
        "command": "train",
        "n_regions": n,
        "epochs": config.epochs,
        "first_losses": first,
        "final_losses": outcome.final_losses,
        "config": cfg,
        "files": files,
    }))
}

fn embed(common: &CommonArgs, data: &DataArgs, checkpoint: &Path) -> Result<(), CliError> {
    let cfg = base_config(common, data)?;
    let out = cfg.out_dir()?.to_path_buf();
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = cfg.dataset()?;
    if dataset.n_regions() != ck.n_regions {
        return Err(DataError::InvalidParameter(format!(
            "checkpoint was trained on {} regions, dataset has {}",
            ck.n_regions,
            dataset.n_regions()
        ))
        .into());
    }
    let fwd = forward(&Prepared::new(&dataset), &ck.params, &ck.config)?;
    write_embeddings(&out, &dataset.regions.ids, &fwd.embedding(), &ck.config)?;
    eprintln!("embedded {} regions", dataset.n_regions());
    emit(&json!({
        "command": "embed",
        "n_regions": dataset.n_regions(),
        "losses": fwd.losses,
        "config": ck.config,
        "files": [EMBEDDINGS_CSV, EMBEDDINGS_JSON],
    }))
}

/// Reorders embedding rows to the dataset's region order.
fn align(file: &Path, ids: &[String], matrix: &Tensor, dataset: &Dataset) -> Result<Tensor, CliError> {
    let name = file.display().to_string();
    let index: HashMap<&str, usize> = dataset.regions.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut rows = vec![None; dataset.n_regions()];
    for (row, id) in ids.iter().enumerate() {
        let r = *index
            .get(id.as_str())
            .ok_or_else(|| DataError::UnknownRegion { file: name.clone(), row: row + 2, id: id.clone() })?;
        if rows[r].replace(row).is_some() {
            return Err(DataError::DuplicateRegion { file: name, row: row + 2, id: id.clone() }.into());
        }
    }
    let order: Vec<usize> = rows
        .iter()
        .enumerate()
        .map(|(r, v)| v.ok_or_else(|| DataError::MissingRegionRow { file: name.clone(), id: dataset.regions.ids[r].clone() }))
        .collect::<Result<_, _>>()?;
    Ok(matrix.select_rows(&order))
}

fn evaluate_cmd(
    common: &CommonArgs,
    data: &DataArgs,
    eval: &EvalArgs,
    embeddings: &Path,
    assignments: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = base_config(common, data)?;
    cfg.apply_eval(eval);
    let dataset = cfg.dataset()?;
    let (ids, matrix) = read_embeddings_csv(embeddings)?;
    let x = align(embeddings, &ids, &matrix, &dataset)?;
    let result = evaluate(&x, &dataset.targets, &cfg.eval)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    if let (Some(path), Some(c)) = (assignments, &result.clustering) {
        let mut text = String::from("region_id,cluster\n");
        for (id, a) in dataset.regions.ids.iter().zip(&c.assignments) {
            text.push_str(&format!("{id},{a}\n"));
        }
        fs::write(path, text).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    }
    let doc = json!({ "command": "evaluate", "reports": result.reports, "warnings": result.warnings });
    if let Some(out) = &cfg.out {
        write_json(&out.join("evaluation.json"), &doc)?;
    }
    emit(&doc)
}

fn benchmark(sizes: &[usize], runs: usize, dim: usize, memory: usize, seed: u64) -> Result<(), CliError> {
    if sizes.is_empty() {
        return Err(CliError::Usage("no sizes given".into()));
    }
    let rows = fusion_timings(sizes, dim, memory, runs, seed)?;
    eprintln!("{:>8} {:>14} {:>18}", "N", "memory (ms)", "self-attn (ms)");
    for r in &rows {
        eprintln!("{:>8} {:>14.3} {:>18.3}", r.n, r.memory_ms, r.self_attention_ms);
    }
    let growth: Vec<_> = rows
        .windows(2)
        .map(|w| {
            json!({
                "from": w[0].n,
                "to": w[1].n,
                "memory_ratio": w[1].memory_ms / w[0].memory_ms,
                "self_attention_ratio": w[1].self_attention_ms / w[0].self_attention_ms,
            })
        })
        .collect();
    emit(&json!({ "command": "benchmark", "dim": dim, "memory": memory, "runs": runs, "timings": rows, "growth": growth }))
}

#[derive(Serialize)]
struct AblationRun {
    variant: String,
    final_losses: LossBreakdown,
    evaluation: Evaluation,
}

fn ablate(common: &CommonArgs, data: &DataArgs, model: &ModelArgs, eval: &EvalArgs) -> Result<(), CliError> {
    let mut cfg = base_config(common, data)?;
    cfg.apply_model(model);
    cfg.apply_eval(eval);
    let dataset = cfg.dataset()?;
    let variants: Vec<Option<AblationVariant>> =
        std::iter::once(None).chain(AblationVariant::ALL.into_iter().map(Some)).collect();
    let mut runs = Vec::new();
    for v in variants {
        let mut config = cfg.train.clone();
        if let Some(v) = v {
            v.apply(&mut config.ablation);
        }
        let outcome = train(&dataset, &config)?;
        let evaluation = evaluate(&outcome.embeddings, &dataset.targets, &cfg.eval)?;
        let name = v.map_or("full".to_string(), |v| v.name().to_string());
        eprintln!("{name:>10}  final total {:.5}", outcome.final_losses.total);
        runs.push(AblationRun { variant: name, final_losses: outcome.final_losses, evaluation });
    }
    let doc = json!({ "command": "ablate", "config": cfg, "runs": runs });
    if let Some(out) = &cfg.out {
        write_json(&out.join("ablation.json"), &doc)?;
    }
    emit(&doc)
}
