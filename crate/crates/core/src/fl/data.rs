//! Client datasets: validation, CSV loading and synthetic Gaussian blobs.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Purpose, SERVER};

/// Row-major feature matrix with integer labels in `[0, n_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub n_features: usize,
    pub n_classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl DatasetShard {
    pub fn new(
        n_features: usize,
        n_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if n_features == 0 || n_classes == 0 {
            return Err(Error::Dataset(
                "need at least one feature and one class".into(),
            ));
        }
        if labels.is_empty() {
            return Err(Error::Dataset(
                "shard must hold at least one example".into(),
            ));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::Dataset(format!(
                "{} feature values for {} rows of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Dataset(format!(
                "label {bad} outside [0, {n_classes})"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        Ok(Self {
            n_features,
            n_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// New shard from a subset of rows.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Self::new(self.n_features, self.n_classes, features, labels)
    }

    /// Concatenation of several shards with a shared schema.
    pub fn concat<'a>(shards: impl IntoIterator<Item = &'a DatasetShard>) -> Result<Self> {
        let mut it = shards.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Dataset("nothing to concatenate".into()))?;
        let mut out = first.clone();
        for s in it {
            if s.n_features != out.n_features || s.n_classes != out.n_classes {
                return Err(Error::Dataset(
                    "schema mismatch while concatenating shards".into(),
                ));
            }
            out.features.extend_from_slice(&s.features);
            out.labels.extend_from_slice(&s.labels);
        }
        Ok(out)
    }

    /// Reads CSV: header row, feature columns, then an integer `label` column.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Dataset(e.to_string()))?
            .clone();
        let n_cols = headers.len();
        if n_cols < 2 || headers.get(n_cols - 1).map(str::trim) != Some("label") {
            return Err(Error::Dataset(
                "last header column must be `label`, preceded by features".into(),
            ));
        }
        let n_features = n_cols - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Dataset(e.to_string()))?;
            for j in 0..n_features {
                let v: f64 = rec[j].trim().parse().map_err(|_| {
                    Error::Dataset(format!("row {}: bad feature `{}`", line + 2, &rec[j]))
                })?;
                features.push(v);
            }
            let l: usize = rec[n_features].trim().parse().map_err(|_| {
                Error::Dataset(format!(
                    "row {}: bad label `{}`",
                    line + 2,
                    &rec[n_features]
                ))
            })?;
            labels.push(l);
        }
        let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
        Self::new(n_features, n_classes, features, labels)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }
}

/// Client shards plus held-out data.
#[derive(Debug, Clone)]
pub struct FederatedData {
    pub clients: Vec<DatasetShard>,
    pub test: DatasetShard,
    /// Optional public shard available to the server (curve training).
    pub public_eval: Option<DatasetShard>,
}

/// Isotropic Gaussian blobs: class centers drawn from `N(0, separation²·I)`,
/// examples from `N(center, I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticBlobs {
    pub n_features: usize,
    pub n_classes: usize,
    pub n_clients: usize,
    pub samples_per_client: usize,
    pub test_samples: usize,
    pub separation: f64,
    /// Public evaluation pool size as a fraction of the client pool.
    pub eval_fraction: f64,
}

impl Default for SyntheticBlobs {
    fn default() -> Self {
        Self {
            n_features: 20,
            n_classes: 10,
            n_clients: 10,
            samples_per_client: 200,
            test_samples: 1000,
            separation: 1.0,
            eval_fraction: 0.05,
        }
    }
}

impl SyntheticBlobs {
    pub fn generate(&self, seed: u64) -> Result<FederatedData> {
        let mut s = NoiseStream::derive(seed, 0, SERVER, Purpose::Data);
        let f = self.n_features;
        let centers: Vec<f64> = (0..self.n_classes * f)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut s);
                self.separation * z
            })
            .collect::<Vec<f64>>();
        let draw = |n: usize, s: &mut NoiseStream| -> Result<DatasetShard> {
            let mut features = Vec::with_capacity(n * f);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                // balanced labels
                let label = i % self.n_classes;
                for j in 0..f {
                    let z: f64 = StandardNormal.sample(s);
                    features.push(centers[label * f + j] + z);
                }
                labels.push(label);
            }
            DatasetShard::new(f, self.n_classes, features, labels)
        };
        let clients = (0..self.n_clients)
            .map(|_| draw(self.samples_per_client, &mut s))
            .collect::<Result<Vec<_>>>()?;
        let test = draw(self.test_samples, &mut s)?;
        let n_eval = (self.eval_fraction * (self.n_clients * self.samples_per_client) as f64)
            .round() as usize;
        let public_eval = if n_eval > 0 {
            Some(draw(n_eval, &mut s)?)
        } else {
            None
        };
        Ok(FederatedData {
            clients,
            test,
            public_eval,
        })
    }
}

/// Shuffles a pooled dataset and splits it IID: `test_fraction` held out,
/// `eval_fraction` kept for the server, the rest dealt round-robin to
/// `n_clients`.
pub fn split_iid(
    pool: &DatasetShard,
    n_clients: usize,
    test_fraction: f64,
    eval_fraction: f64,
    seed: u64,
) -> Result<FederatedData> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut NoiseStream::derive(seed, 0, SERVER, Purpose::Data));
    let n_test = ((test_fraction * pool.len() as f64).round() as usize).max(1);
    let n_eval = (eval_fraction * pool.len() as f64).round() as usize;
    if n_test + n_eval + n_clients > pool.len() {
        return Err(Error::Dataset(format!(
            "{} rows cannot supply {n_test} test rows, {n_eval} eval rows and {n_clients} clients",
            pool.len()
        )));
    }
    let test = pool.select(&order[..n_test])?;
    let public_eval = if n_eval > 0 {
        Some(pool.select(&order[n_test..n_test + n_eval])?)
    } else {
        None
    };
    let rest = &order[n_test + n_eval..];
    let clients = (0..n_clients)
        .map(|c| {
            let rows: Vec<usize> = rest.iter().skip(c).step_by(n_clients).copied().collect();
            pool.select(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FederatedData {
        clients,
        test,
        public_eval,
    })
}
