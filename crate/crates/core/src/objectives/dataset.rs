use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, ZoError};
use crate::rng::chacha;

/// Labelled feature table, features row-major with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 || dim == 0 || classes == 0 {
            return Err(ZoError::Format("dataset must be nonempty".into()));
        }
        if features.len() != n * dim {
            return Err(ZoError::Format(format!(
                "feature table has {} values, expected {}×{}",
                features.len(),
                n,
                dim
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(ZoError::Format(format!("label {l} outside {classes} classes")));
        }
        Ok(Self {
            n,
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// First `k` samples.
    pub fn truncate(mut self, k: usize) -> Self {
        if k < self.n {
            self.n = k;
            self.features.truncate(k * self.dim);
            self.labels.truncate(k);
        }
        self
    }

    /// Text table: first line `n,d,classes`, then `label,f1,...,fd` per sample.
    pub fn to_text(&self) -> String {
        let mut s = format!("{},{},{}\n", self.n, self.dim, self.classes);
        for i in 0..self.n {
            write!(s, "{}", self.labels[i]).unwrap();
            for v in self.row(i) {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ZoError::Format("empty dataset table".into()))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ZoError::Format(format!("bad header {header:?}: {e}")))?;
        let [n, dim, classes] = dims[..] else {
            return Err(ZoError::Format(format!("header must be n,d,classes: {header:?}")));
        };
        let mut features = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for (row, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let label = fields
                .next()
                .and_then(|t| t.trim().parse::<usize>().ok())
                .ok_or_else(|| ZoError::Format(format!("row {row}: bad label")))?;
            labels.push(label);
            let before = features.len();
            for t in fields {
                let v: f64 = t
                    .trim()
                    .parse()
                    .map_err(|e| ZoError::Format(format!("row {row}: {e}")))?;
                features.push(v);
            }
            if features.len() - before != dim {
                return Err(ZoError::Format(format!("row {row}: expected {dim} features")));
            }
        }
        if labels.len() != n {
            return Err(ZoError::Format(format!(
                "header declares {n} rows, found {}",
                labels.len()
            )));
        }
        Self::new(features, labels, dim, classes)
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| ZoError::io(path, e))
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ZoError::io(path, e))?;
        Self::from_text(&text)
    }
}

/// MNIST-shaped stand-in: `classes` random sparse prototypes on a
/// `side×side` grid, each sample a noisy copy quantized to k/255.
pub fn synthetic_digits(n: usize, side: usize, classes: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || side == 0 || classes == 0 {
        return Err(ZoError::Config("synthetic dataset needs n, side, classes >= 1".into()));
    }
    let dim = side * side;
    let mut rng = chacha(seed);
    let prototypes: Vec<f64> = (0..classes * dim)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                rng.random_range(0.6..1.0)
            } else {
                0.0
            }
        })
        .collect();
    let noise = Normal::new(0.0, 0.25).expect("valid normal");
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c);
        for p in &prototypes[c * dim..(c + 1) * dim] {
            let v = (p + noise.sample(&mut rng)).clamp(0.0, 1.0);
            features.push((v * 255.0).round() / 255.0);
        }
    }
    Dataset::new(features, labels, dim, classes)
}
