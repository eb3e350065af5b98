use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::models::{BenchmarkModel, MachineParams, ModelId};
use super::simulate::{FullRecord, ScenarioConfig};
use super::{derivative_name, BenchError};
use crate::engine::SignalCatalog;
use crate::eval::SampleBatch;

/// Central differences inside, second-order one-sided differences at the ends.
pub fn differentiate(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => {
            let d = (x[1] - x[0]) / dt;
            vec![d, d]
        }
        _ => {
            let mut d = vec![0.0; n];
            d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt);
            for i in 1..n - 1 {
                d[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
            }
            d[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * dt);
            d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: ModelId,
    pub params: MachineParams,
    pub scenario: ScenarioConfig,
    pub states: Vec<String>,
    /// Revealed signals in the order they were revealed.
    pub revealed: Vec<String>,
    /// Per-state noise standard deviation actually applied.
    pub noise_sigma: BTreeMap<String, f64>,
}

/// Training or test data: noisy states, their numerical derivatives and any
/// revealed (noiseless) signals, backed by the hidden full record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub meta: DatasetMeta,
    pub time: Vec<f64>,
    columns: BTreeMap<String, Vec<f64>>,
    record: Arc<FullRecord>,
}

/// Adds amplitude-scaled Gaussian noise to the states and differentiates.
pub fn make_dataset(model: &BenchmarkModel, record: FullRecord, scen: &ScenarioConfig) -> TrajectoryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(scen.seed);
    let mut columns = BTreeMap::new();
    let mut noise_sigma = BTreeMap::new();
    let dt = record.dt();
    for s in &record.states {
        let clean = &record.columns[s];
        let amplitude = scen.noise_amplitude.of(clean);
        let sigma = scen.noise * amplitude;
        let noisy: Vec<f64> = if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            clean.iter().map(|v| v + normal.sample(&mut rng)).collect()
        } else {
            clean.clone()
        };
        columns.insert(derivative_name(s), differentiate(&noisy, dt));
        columns.insert(s.clone(), noisy);
        noise_sigma.insert(s.clone(), sigma);
    }
    TrajectoryDataset {
        meta: DatasetMeta {
            model: model.id,
            params: model.params.clone(),
            scenario: scen.clone(),
            states: record.states.clone(),
            revealed: Vec::new(),
            noise_sigma,
        },
        time: record.time.clone(),
        columns,
        record: Arc::new(record),
    }
}

impl TrajectoryDataset {
    pub fn model(&self) -> BenchmarkModel {
        BenchmarkModel {
            id: self.meta.model,
            params: self.meta.params.clone(),
        }
    }

    pub fn catalog(&self) -> SignalCatalog {
        self.model().catalog()
    }

    pub fn states(&self) -> &[String] {
        &self.meta.states
    }

    pub fn derivative_columns(&self) -> Vec<String> {
        self.meta.states.iter().map(|s| derivative_name(s)).collect()
    }

    pub fn revealed(&self) -> &[String] {
        &self.meta.revealed
    }

    pub fn record(&self) -> &FullRecord {
        &self.record
    }

    pub fn n_samples(&self) -> usize {
        self.time.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    /// Column order used by CSV export.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.meta.states.iter().cloned());
        h.extend(self.derivative_columns());
        h.extend(self.meta.revealed.iter().cloned());
        h
    }

    /// Copies catalog signals from the hidden record. Returns the names that
    /// were not already revealed.
    pub fn reveal<S: AsRef<str>>(&mut self, names: &[S]) -> Result<Vec<String>, BenchError> {
        for n in names {
            if self.record.column(n.as_ref()).is_none() || self.meta.states.iter().any(|s| s == n.as_ref()) {
                return Err(BenchError::UnknownSignal(n.as_ref().to_string()));
            }
        }
        let mut added = Vec::new();
        for n in names {
            let n = n.as_ref();
            if self.meta.revealed.iter().any(|r| r == n) {
                continue;
            }
            self.columns.insert(n.to_string(), self.record.columns[n].clone());
            self.meta.revealed.push(n.to_string());
            added.push(n.to_string());
        }
        Ok(added)
    }

    /// All data columns (states, derivatives, revealed signals).
    pub fn batch(&self) -> SampleBatch {
        SampleBatch::new(self.columns.clone()).expect("dataset columns are equal-length and finite")
    }

    fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
        (
            dir.join(format!("{stem}.csv")),
            dir.join(format!("{stem}.meta.json")),
            dir.join(format!("{stem}.record.csv")),
        )
    }

    /// Writes `<stem>.csv`, `<stem>.meta.json` and `<stem>.record.csv`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<(), BenchError> {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
        let (csv_path, meta_path, rec_path) = Self::paths(dir, stem);
        let header = self.header();
        let cols: Vec<&[f64]> = header[1..].iter().map(|h| self.columns[h].as_slice()).collect();
        write_csv(&csv_path, &header, &self.time, &cols)?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        std::fs::write(&meta_path, meta).map_err(|e| BenchError::io(&meta_path, e))?;
        let mut rec_header = vec!["t".to_string()];
        rec_header.extend(self.record.columns.keys().cloned());
        let rec_cols: Vec<&[f64]> = self.record.columns.values().map(Vec::as_slice).collect();
        write_csv(&rec_path, &rec_header, &self.record.time, &rec_cols)
    }

    pub fn import(dir: &Path, stem: &str) -> Result<TrajectoryDataset, BenchError> {
        let (csv_path, meta_path, rec_path) = Self::paths(dir, stem);
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| BenchError::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&meta_text)
            .map_err(|e| BenchError::SchemaMismatch(format!("{}: {e}", meta_path.display())))?;
        let (header, mut data) = read_csv(&csv_path)?;
        let mut expected = vec!["t".to_string()];
        expected.extend(meta.states.iter().cloned());
        expected.extend(meta.states.iter().map(|s| derivative_name(s)));
        expected.extend(meta.revealed.iter().cloned());
        if header != expected {
            return Err(BenchError::SchemaMismatch(format!(
                "{}: header {:?}, expected {:?}",
                csv_path.display(),
                header,
                expected
            )));
        }
        let time = data.remove("t").unwrap_or_default();
        let (rec_header, mut rec) = read_csv(&rec_path)?;
        let model = BenchmarkModel {
            id: meta.model,
            params: meta.params.clone(),
        };
        for name in meta.states.iter().chain(model.catalog().names().iter()) {
            if !rec_header.contains(name) {
                return Err(BenchError::SchemaMismatch(format!(
                    "{}: missing column `{name}`",
                    rec_path.display()
                )));
            }
        }
        let rec_time = rec.remove("t").unwrap_or_default();
        if rec_time.len() != time.len() {
            return Err(BenchError::SchemaMismatch(format!(
                "{}: {} rows, dataset has {}",
                rec_path.display(),
                rec_time.len(),
                time.len()
            )));
        }
        let record = FullRecord {
            model: meta.model,
            time: rec_time,
            states: meta.states.clone(),
            columns: rec,
        };
        Ok(TrajectoryDataset {
            meta,
            time,
            columns: data,
            record: Arc::new(record),
        })
    }
}

fn write_csv(path: &Path, header: &[String], time: &[f64], cols: &[&[f64]]) -> Result<(), BenchError> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| BenchError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(header.len());
    for (i, t) in time.iter().enumerate() {
        row.clear();
        // `{}` prints the shortest string that parses back to the same f64.
        row.push(format!("{t}"));
        row.extend(cols.iter().map(|c| format!("{}", c[i])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

fn read_csv(path: &Path) -> Result<(Vec<String>, BTreeMap<String, Vec<f64>>), BenchError> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| BenchError::SchemaMismatch(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::SchemaMismatch(format!("{}: {e}", path.display())))?;
        if rec.len() != header.len() {
            return Err(BenchError::SchemaMismatch(format!(
                "{}: row {} has {} fields",
                path.display(),
                line + 2,
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                BenchError::SchemaMismatch(format!("{}: row {}: bad number `{field}`", path.display(), line + 2))
            })?;
            cols[j].push(v);
        }
    }
    let map = header.iter().cloned().zip(cols).collect();
    Ok((header, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::simulate;

    fn swing(noise: f64, seed: u64) -> TrajectoryDataset {
        let m = BenchmarkModel::new(ModelId::Swing2);
        let scen = ScenarioConfig {
            noise,
            seed,
            ..Default::default()
        };
        let rec = simulate(&m, &scen).unwrap();
        make_dataset(&m, rec, &scen)
    }

    #[test]
    fn differentiate_polynomials() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.1).powi(2)).collect();
        let d = differentiate(&x, 0.1);
        for (i, v) in d.iter().enumerate() {
            assert!((v - 2.0 * i as f64 * 0.1).abs() < 1e-12, "{i}: {v}");
        }
        let flat = differentiate(&[3.0; 5], 0.01);
        assert!(flat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn same_seed_same_noise() {
        assert_eq!(swing(0.01, 7), swing(0.01, 7));
        assert_ne!(swing(0.01, 7).column("delta"), swing(0.01, 8).column("delta"));
    }

    #[test]
    fn noise_scales_with_amplitude() {
        let d = swing(0.01, 3);
        let w = d.record().column("omega").unwrap();
        let amp = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - w.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((d.meta.noise_sigma["omega"] - 0.01 * amp).abs() < 1e-15);
        assert!(d.meta.noise_sigma["omega"] < 1e-3);
    }

    #[test]
    fn reveal_is_idempotent() {
        let mut d = swing(0.0, 0);
        assert_eq!(d.reveal(&["i_d"]).unwrap(), vec!["i_d"]);
        assert!(d.reveal(&["i_d"]).unwrap().is_empty());
        assert_eq!(d.column("i_d"), d.record().column("i_d"));
        assert!(matches!(d.reveal(&["flux"]), Err(BenchError::UnknownSignal(_))));
        assert_eq!(d.header(), ["t", "delta", "omega", "ddelta_dt", "domega_dt", "i_d"]);
    }

    #[test]
    fn csv_round_trip() {
        let mut d = swing(0.01, 5);
        d.reveal(&["P_e", "P_m"]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.export(dir.path(), "train").unwrap();
        let back = TrajectoryDataset::import(dir.path(), "train").unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_column_is_schema_mismatch() {
        let d = swing(0.0, 0);
        let dir = tempfile::tempdir().unwrap();
        d.export(dir.path(), "x").unwrap();
        let path = dir.path().join("x.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
            .collect();
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(
            TrajectoryDataset::import(dir.path(), "x"),
            Err(BenchError::SchemaMismatch(_))
        ));
    }
}
