use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim, Writer};

use super::{Dataset, FeatureTable, RegionSet, TaskTargets, TripSet};
use crate::error::DataError;
use crate::tensor::Tensor;

pub const REGIONS_FILE: &str = "regions.csv";
pub const TRIPS_FILE: &str = "trips.csv";
pub const POI_FILE: &str = "poi.csv";
pub const CHECKINS_FILE: &str = "checkins.csv";
pub const TARGETS_FILE: &str = "targets.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    /// Optional sidecar mapping external ids to dense indices.
    pub regions: Option<PathBuf>,
    pub trips: PathBuf,
    pub poi: PathBuf,
    pub checkins: PathBuf,
    pub targets: PathBuf,
}

impl DatasetPaths {
    /// Standard file names inside `dir`; `regions.csv` is used only if it
    /// exists.
    pub fn in_dir(dir: &Path) -> Self {
        let regions = dir.join(REGIONS_FILE);
        Self {
            regions: regions.exists().then_some(regions),
            trips: dir.join(TRIPS_FILE),
            poi: dir.join(POI_FILE),
            checkins: dir.join(CHECKINS_FILE),
            targets: dir.join(TARGETS_FILE),
        }
    }
}

struct Table {
    file: String,
    headers: StringRecord,
    rows: Vec<(usize, StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, DataError> {
        let file = path.display().to_string();
        let handle = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        let mut reader = ReaderBuilder::new().has_headers(true).trim(Trim::All).from_reader(handle);
        let headers = reader.headers().map_err(|source| DataError::Csv { file: file.clone(), source })?.clone();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|source| DataError::Csv { file: file.clone(), source })?;
            let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
            rows.push((line, record));
        }
        Ok(Self { file, headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize, DataError> {
        self.optional_column(name)
            .ok_or_else(|| DataError::MissingColumn { file: self.file.clone(), column: name.into() })
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn number(&self, line: usize, record: &StringRecord, col: usize) -> Result<f64, DataError> {
        let raw = record.get(col).unwrap_or("");
        raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| DataError::BadValue {
            file: self.file.clone(),
            row: line,
            column: self.headers[col].to_string(),
            value: raw.to_string(),
        })
    }
}

enum Resolver {
    Dense(usize),
    Named(HashMap<String, usize>),
}

impl Resolver {
    fn resolve(&self, table: &Table, line: usize, raw: &str) -> Result<usize, DataError> {
        let hit = match self {
            Resolver::Dense(n) => raw.parse::<usize>().ok().filter(|i| i < n),
            Resolver::Named(map) => map.get(raw).copied(),
        };
        hit.ok_or_else(|| DataError::UnknownRegion { file: table.file.clone(), row: line, id: raw.to_string() })
    }
}

fn read_regions(path: &Path) -> Result<RegionSet, DataError> {
    let table = Table::read(path)?;
    let id_col = table.column("id")?;
    let name_col = table.column("name")?;
    let district_col = table.optional_column("district");
    if table.rows.is_empty() {
        return Err(DataError::EmptyFile { file: table.file });
    }

    let mut ids = Vec::new();
    let mut names = Vec::new();
    let mut raw_districts = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in &table.rows {
        let id = rec.get(id_col).unwrap_or("").to_string();
        if seen.insert(id.clone(), ids.len()).is_some() {
            return Err(DataError::DuplicateRegion { file: table.file.clone(), row: *line, id });
        }
        ids.push(id);
        names.push(rec.get(name_col).unwrap_or("").to_string());
        if let Some(c) = district_col {
            raw_districts.push(rec.get(c).unwrap_or("").to_string());
        }
    }

    let districts = district_col.map(|_| {
        // integer labels are kept as-is; anything else is numbered by first appearance
        let numeric: Option<Vec<usize>> = raw_districts.iter().map(|d| d.parse().ok()).collect();
        numeric.unwrap_or_else(|| {
            let mut index = HashMap::new();
            raw_districts
                .iter()
                .map(|d| {
                    let next = index.len();
                    *index.entry(d.clone()).or_insert(next)
                })
                .collect()
        })
    });
    Ok(RegionSet { ids, names, districts })
}

fn read_trips(path: &Path, resolver: &Resolver, n: usize) -> Result<TripSet, DataError> {
    let table = Table::read(path)?;
    let o_col = table.column("origin_id")?;
    let d_col = table.column("dest_id")?;
    if table.rows.is_empty() {
        return Err(DataError::EmptyFile { file: table.file });
    }
    let mut pairs = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let o = resolver.resolve(&table, *line, rec.get(o_col).unwrap_or(""))?;
        let d = resolver.resolve(&table, *line, rec.get(d_col).unwrap_or(""))?;
        pairs.push((o, d));
    }
    TripSet::new(n, pairs)
}

fn read_features(path: &Path, resolver: &Resolver, n: usize) -> Result<FeatureTable, DataError> {
    let table = Table::read(path)?;
    let r_col = table.column("region_id")?;
    let c_col = table.column("category")?;
    let n_col = table.column("count")?;

    let mut categories: Vec<String> = Vec::new();
    let mut cat_index: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let region = resolver.resolve(&table, *line, rec.get(r_col).unwrap_or(""))?;
        let cat = rec.get(c_col).unwrap_or("").to_string();
        let count = table.number(*line, rec, n_col)?;
        if count < 0.0 {
            return Err(DataError::NegativeCount { file: table.file.clone(), row: *line, value: count });
        }
        let next = categories.len();
        let k = *cat_index.entry(cat.clone()).or_insert_with(|| {
            categories.push(cat);
            next
        });
        cells.push((region, k, count));
    }

    let mut counts = Tensor::zeros(n, categories.len());
    for (r, k, v) in cells {
        counts.set(r, k, counts.get(r, k) + v);
    }
    FeatureTable::new(categories, counts)
}

fn read_targets(path: &Path, resolver: &Resolver, regions: &RegionSet) -> Result<TaskTargets, DataError> {
    let table = Table::read(path)?;
    let r_col = table.column("region_id")?;
    let ck_col = table.column("checkin_total")?;
    let cr_col = table.optional_column("crime_count");

    let n = regions.len();
    let mut checkin = vec![None; n];
    let mut crime = vec![None; n];
    for (line, rec) in &table.rows {
        let raw = rec.get(r_col).unwrap_or("");
        let r = resolver.resolve(&table, *line, raw)?;
        if checkin[r].is_some() {
            return Err(DataError::DuplicateRegion { file: table.file.clone(), row: *line, id: raw.into() });
        }
        checkin[r] = Some(table.number(*line, rec, ck_col)?);
        if let Some(c) = cr_col {
            crime[r] = Some(table.number(*line, rec, c)?);
        }
    }
    let missing = |r: usize| DataError::MissingRegionRow { file: table.file.clone(), id: regions.ids[r].clone() };
    let checkin: Vec<f64> = checkin.iter().enumerate().map(|(r, v)| v.ok_or_else(|| missing(r))).collect::<Result<_, _>>()?;
    let crime = match cr_col {
        Some(_) => Some(crime.iter().enumerate().map(|(r, v)| v.ok_or_else(|| missing(r))).collect::<Result<_, _>>()?),
        None => None,
    };
    Ok(TaskTargets { checkin, crime, land_use: regions.districts.clone() })
}

/// Reads and validates a dataset. Region ids in the data files are looked
/// up in `regions.csv` when one is given; otherwise they must be integers
/// below `n_regions`.
pub fn load_dataset(paths: &DatasetPaths, n_regions: Option<usize>) -> Result<Dataset, DataError> {
    let (regions, resolver) = match &paths.regions {
        Some(p) => {
            let regions = read_regions(p)?;
            if let Some(n) = n_regions.filter(|&n| n != regions.len()) {
                return Err(DataError::InvalidParameter(format!(
                    "{} lists {} regions but {n} were requested",
                    p.display(),
                    regions.len()
                )));
            }
            let map = regions.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
            (regions, Resolver::Named(map))
        }
        None => {
            let n = n_regions
                .filter(|&n| n > 0)
                .ok_or_else(|| DataError::InvalidParameter("region count required without regions.csv".into()))?;
            (RegionSet::numbered(n), Resolver::Dense(n))
        }
    };
    let n = regions.len();
    let trips = read_trips(&paths.trips, &resolver, n)?;
    let poi = read_features(&paths.poi, &resolver, n)?;
    let checkins = read_features(&paths.checkins, &resolver, n)?;
    let targets = read_targets(&paths.targets, &resolver, &regions)?;
    Ok(Dataset { regions, trips, poi, checkins, targets })
}

fn writer(path: &Path) -> Result<Writer<File>, DataError> {
    let file = File::create(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    Ok(Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv { file: path.display().to_string(), source }
}

fn write_features(path: &Path, regions: &RegionSet, table: &FeatureTable) -> Result<(), DataError> {
    let mut w = writer(path)?;
    let e = csv_err(path);
    w.write_record(["region_id", "category", "count"]).map_err(&e)?;
    for r in 0..table.n_regions() {
        for (k, cat) in table.categories.iter().enumerate() {
            w.write_record([regions.ids[r].as_str(), cat, &table.counts.get(r, k).to_string()]).map_err(&e)?;
        }
    }
    w.flush().map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Writes the five standard CSV files into an existing directory.
pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<(), DataError> {
    let regions = &data.regions;

    let path = dir.join(REGIONS_FILE);
    let mut w = writer(&path)?;
    let e = csv_err(&path);
    match &regions.districts {
        Some(d) => {
            w.write_record(["id", "name", "district"]).map_err(&e)?;
            for i in 0..regions.len() {
                w.write_record([&regions.ids[i], &regions.names[i], &d[i].to_string()]).map_err(&e)?;
            }
        }
        None => {
            w.write_record(["id", "name"]).map_err(&e)?;
            for i in 0..regions.len() {
                w.write_record([&regions.ids[i], &regions.names[i]]).map_err(&e)?;
            }
        }
    }
    w.flush().map_err(|source| DataError::Io { path: path.clone(), source })?;

    let path = dir.join(TRIPS_FILE);
    let mut w = writer(&path)?;
    let e = csv_err(&path);
    w.write_record(["origin_id", "dest_id"]).map_err(&e)?;
    for &(o, d) in data.trips.pairs() {
        w.write_record([&regions.ids[o], &regions.ids[d]]).map_err(&e)?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.clone(), source })?;

    write_features(&dir.join(POI_FILE), regions, &data.poi)?;
    write_features(&dir.join(CHECKINS_FILE), regions, &data.checkins)?;

    let path = dir.join(TARGETS_FILE);
    let mut w = writer(&path)?;
    let e = csv_err(&path);
    let t = &data.targets;
    if t.crime.is_some() {
        w.write_record(["region_id", "checkin_total", "crime_count"]).map_err(&e)?;
    } else {
        w.write_record(["region_id", "checkin_total"]).map_err(&e)?;
    }
    for i in 0..regions.len() {
        let mut row = vec![regions.ids[i].clone(), t.checkin[i].to_string()];
        if let Some(c) = &t.crime {
            row.push(c[i].to_string());
        }
        w.write_record(&row).map_err(&e)?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.clone(), source })
}
