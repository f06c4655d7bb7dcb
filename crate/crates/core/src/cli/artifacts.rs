use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, Trim, Writer};
use serde::Serialize;

use crate::error::DataError;
use crate::graph::View;
use crate::tensor::Tensor;
use crate::training::TrainConfig;

pub const EMBEDDINGS_CSV: &str = "embeddings.csv";
pub const EMBEDDINGS_JSON: &str = "embeddings.json";

#[derive(Serialize)]
struct EmbeddingsDoc<'a> {
    config: &'a TrainConfig,
    views: [&'static str; 4],
    dim: usize,
    region_ids: &'a [String],
    embeddings: Vec<&'a [f64]>,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Writes `embeddings.csv` (`region_id` then `4d` columns named
/// `O_0 .. S_{d-1}`) and `embeddings.json` with the config echoed.
pub fn write_embeddings(dir: &Path, ids: &[String], embedding: &Tensor, config: &TrainConfig) -> Result<(), DataError> {
    let d = embedding.cols() / 4;
    let path = dir.join(EMBEDDINGS_CSV);
    let file = fs::File::create(&path).map_err(io(&path))?;
    let mut w = Writer::from_writer(file);
    let e = |source| DataError::Csv { file: path.display().to_string(), source };
    let mut header = vec!["region_id".to_string()];
    header.extend(View::ALL.iter().flat_map(|v| (0..d).map(move |j| format!("{v}_{j}"))));
    w.write_record(&header).map_err(e)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(embedding.row(i).iter().map(|x| format!("{x:?}")));
        w.write_record(&rec).map_err(e)?;
    }
    w.flush().map_err(io(&path))?;

    let path = dir.join(EMBEDDINGS_JSON);
    let doc = EmbeddingsDoc {
        config,
        views: View::ALL.map(View::tag),
        dim: d,
        region_ids: ids,
        embeddings: (0..embedding.rows()).map(|i| embedding.row(i)).collect(),
    };
    let text = serde_json::to_string(&doc).map_err(|e| DataError::InvalidParameter(e.to_string()))?;
    fs::write(&path, text).map_err(io(&path))
}

/// Reads an embeddings CSV back as region ids and an `N x C` matrix.
pub fn read_embeddings_csv(path: &Path) -> Result<(Vec<String>, Tensor), DataError> {
    let file = path.display().to_string();
    let handle = fs::File::open(path).map_err(io(path))?;
    let mut reader = ReaderBuilder::new().trim(Trim::All).from_reader(handle);
    let csv_err = |source| DataError::Csv { file: file.clone(), source };
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.get(0) != Some("region_id") {
        return Err(DataError::MissingColumn { file, column: "region_id".into() });
    }
    let cols = headers.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        ids.push(rec[0].to_string());
        for (j, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| DataError::BadValue {
                file: file.clone(),
                row: row + 2,
                column: headers[j].to_string(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
    }
    if ids.is_empty() {
        return Err(DataError::EmptyFile { file });
    }
    let n = ids.len();
    let matrix = Tensor::from_vec(n, cols, values).map_err(|e| DataError::InvalidParameter(format!("{file}: {e}")))?;
    Ok((ids, matrix))
}
