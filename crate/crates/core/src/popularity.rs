//! Content popularity estimation: ground-truth rating matrices from request
//! counts, uniform train/test splits, and regularized-SVD matrix
//! factorization trained by seeded SGD.
//!
//! Ratings are raw request counts per (cell, content). The factor model
//! predicts `clamp(mean + U[n]·V[f], floor, ceiling)` where the clamp bounds
//! are the min/max training ratings.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::RequestLog;
use crate::{Error, Result};

/// Sparse N×F popularity matrix. Absent entries mean unobserved.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub num_cells: usize,
    pub num_contents: usize,
    /// (cell, content) -> rating; stored ratings are > 0.
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl RatingMatrix {
    pub fn new(num_cells: usize, num_contents: usize) -> Self {
        RatingMatrix {
            num_cells,
            num_contents,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, cell: usize, content: usize) -> Option<f64> {
        self.entries.get(&(cell, content)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fraction of the N×F cells that carry an entry.
    pub fn density(&self) -> f64 {
        let cells = (self.num_cells * self.num_contents) as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.entries.len() as f64 / cells
        }
    }

    /// Rescale each cell's ratings so they sum to 1. Rank-preserving per
    /// cell, so placements are unaffected; exposed for experimentation.
    pub fn normalize_per_cell(&self) -> RatingMatrix {
        let mut cell_sums = vec![0.0f64; self.num_cells];
        for (&(n, _), &v) in &self.entries {
            cell_sums[n] += v;
        }
        let entries = self
            .entries
            .iter()
            .map(|(&(n, f), &v)| ((n, f), v / cell_sums[n]))
            .collect();
        RatingMatrix {
            num_cells: self.num_cells,
            num_contents: self.num_contents,
            entries,
        }
    }

    /// Densify, with 0 for unobserved cells.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut dense = DenseMatrix::zeros(self.num_cells, self.num_contents);
        for (&(n, f), &v) in &self.entries {
            *dense.get_mut(n, f) = v;
        }
        dense
    }

    /// Serialize as CSV triples `cell,content,rating`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (&(n, f), &v) in &self.entries {
            writeln!(out, "{n},{f},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, num_cells: usize, num_contents: usize) -> Result<Self> {
        let mut m = RatingMatrix::new(num_cells, num_contents);
        for line in input.lines() {
            let line = line.map_err(|e| Error::Parse(format!("read failure: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("bad rating row: {line}")));
            }
            let n: usize = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad cell: {line}")))?;
            let f: usize = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad content: {line}")))?;
            let v: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("bad rating: {line}")))?;
            m.entries.insert((n, f), v);
        }
        Ok(m)
    }
}

/// Dense N×F matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub num_cells: usize,
    pub num_contents: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(num_cells: usize, num_contents: usize) -> Self {
        DenseMatrix {
            num_cells,
            num_contents,
            data: vec![0.0; num_cells * num_contents],
        }
    }

    pub fn get(&self, cell: usize, content: usize) -> f64 {
        self.data[cell * self.num_contents + content]
    }

    pub fn get_mut(&mut self, cell: usize, content: usize) -> &mut f64 {
        &mut self.data[cell * self.num_contents + content]
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.num_contents..(cell + 1) * self.num_contents]
    }
}

/// Disjoint train/test partition of a rating matrix's entry set.
#[derive(Debug, Clone)]
pub struct RatingSplit {
    pub train: RatingMatrix,
    pub test: RatingMatrix,
    pub train_fraction: f64,
}

/// Hyperparameters for [`train_reg_svd`].
#[derive(Debug, Clone)]
pub struct CfHyperParams {
    pub rank: usize,
    pub regularization: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for CfHyperParams {
    fn default() -> Self {
        CfHyperParams {
            rank: 16,
            regularization: 0.02,
            learning_rate: 0.005,
            epochs: 100,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

/// Rank-k factor model with a global-mean bias and output clamping.
#[derive(Debug, Clone)]
pub struct FactorModel {
    pub num_cells: usize,
    pub num_contents: usize,
    pub rank: usize,
    /// N×k, row-major.
    pub cell_factors: Vec<f64>,
    /// F×k, row-major.
    pub content_factors: Vec<f64>,
    pub global_mean: f64,
    pub rating_floor: f64,
    pub rating_ceiling: f64,
    /// Mean squared training error after each epoch.
    pub loss_history: Vec<f64>,
}

impl FactorModel {
    fn cell_row(&self, n: usize) -> &[f64] {
        &self.cell_factors[n * self.rank..(n + 1) * self.rank]
    }

    fn content_row(&self, f: usize) -> &[f64] {
        &self.content_factors[f * self.rank..(f + 1) * self.rank]
    }

    /// Text serialization: a dimensions header followed by row-major factors.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "factor-model v1 {} {} {} {} {} {}",
            self.num_cells,
            self.num_contents,
            self.rank,
            self.global_mean,
            self.rating_floor,
            self.rating_ceiling
        )?;
        for n in 0..self.num_cells {
            let row: Vec<String> = self.cell_row(n).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        for f in 0..self.num_contents {
            let row: Vec<String> = self.content_row(f).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty factor model".into()))?
            .map_err(|e| Error::Parse(format!("read failure: {e}")))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 8 || parts[0] != "factor-model" || parts[1] != "v1" {
            return Err(Error::Parse(format!("bad factor-model header: {header}")));
        }
        let bad = |what: &str| Error::Parse(format!("bad factor-model {what}"));
        let num_cells: usize = parts[2].parse().map_err(|_| bad("cells"))?;
        let num_contents: usize = parts[3].parse().map_err(|_| bad("contents"))?;
        let rank: usize = parts[4].parse().map_err(|_| bad("rank"))?;
        let global_mean: f64 = parts[5].parse().map_err(|_| bad("mean"))?;
        let rating_floor: f64 = parts[6].parse().map_err(|_| bad("floor"))?;
        let rating_ceiling: f64 = parts[7].parse().map_err(|_| bad("ceiling"))?;
        let mut read_rows = |count: usize| -> Result<Vec<f64>> {
            let mut data = Vec::with_capacity(count * rank);
            for _ in 0..count {
                let line = lines
                    .next()
                    .ok_or_else(|| bad("row count"))?
                    .map_err(|e| Error::Parse(format!("read failure: {e}")))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("factor value"))?;
                if row.len() != rank {
                    return Err(bad("row width"));
                }
                data.extend(row);
            }
            Ok(data)
        };
        let cell_factors = read_rows(num_cells)?;
        let content_factors = read_rows(num_contents)?;
        Ok(FactorModel {
            num_cells,
            num_contents,
            rank,
            cell_factors,
            content_factors,
            global_mean,
            rating_floor,
            rating_ceiling,
            loss_history: Vec::new(),
        })
    }
}

/// Count requests per (cell, content). Entries present iff the count is > 0.
pub fn build_rating_matrix(
    log: &RequestLog,
    num_cells: usize,
    num_contents: usize,
) -> Result<RatingMatrix> {
    let mut matrix = RatingMatrix::new(num_cells, num_contents);
    for req in &log.requests {
        let cell = req
            .cell
            .ok_or_else(|| Error::InvalidInput("request log is not cell-assigned".into()))?;
        *matrix.entries.entry((cell, req.content)).or_insert(0.0) += 1.0;
    }
    Ok(matrix)
}

/// Pick `round(train_fraction × |entries|)` entries uniformly at random
/// without replacement for training; the rest form the test set.
pub fn split_ratings(matrix: &RatingMatrix, train_fraction: f64, seed: u64) -> Result<RatingSplit> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidInput(
            "train_fraction must be in (0, 1]".into(),
        ));
    }
    let mut keys: Vec<(usize, usize)> = matrix.entries.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);
    let n_train = (train_fraction * keys.len() as f64).round() as usize;

    let mut train = RatingMatrix::new(matrix.num_cells, matrix.num_contents);
    let mut test = RatingMatrix::new(matrix.num_cells, matrix.num_contents);
    for (i, key) in keys.into_iter().enumerate() {
        let value = matrix.entries[&key];
        if i < n_train {
            train.entries.insert(key, value);
        } else {
            test.entries.insert(key, value);
        }
    }
    Ok(RatingSplit {
        train,
        test,
        train_fraction,
    })
}

/// Train a regularized-SVD model by SGD over the observed entries.
///
/// Objective: Σ (r − μ − U[n]·V[f])² + λ(‖U‖² + ‖V‖²). Factors start i.i.d.
/// uniform in ±init_scale. Fails with [`Error::TrainingDiverged`] on
/// non-finite factors or a sustained loss rise.
pub fn train_reg_svd(train: &RatingMatrix, hyper: &CfHyperParams) -> Result<FactorModel> {
    if train.is_empty() {
        return Err(Error::InvalidInput("training matrix is empty".into()));
    }
    if hyper.rank < 1 || hyper.epochs < 1 {
        return Err(Error::InvalidInput("rank and epochs must be >= 1".into()));
    }

    let k = hyper.rank;
    let n_cells = train.num_cells;
    let n_contents = train.num_contents;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut cell_factors: Vec<f64> = (0..n_cells * k)
        .map(|_| rng.random_range(-hyper.init_scale..hyper.init_scale))
        .collect();
    let mut content_factors: Vec<f64> = (0..n_contents * k)
        .map(|_| rng.random_range(-hyper.init_scale..hyper.init_scale))
        .collect();

    let global_mean = train.entries.values().sum::<f64>() / train.len() as f64;
    let rating_floor = train.entries.values().copied().fold(f64::INFINITY, f64::min);
    let rating_ceiling = train
        .entries
        .values()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    // Fixed visiting order, shuffled once from the seed.
    let mut samples: Vec<(usize, usize, f64)> = train
        .entries
        .iter()
        .map(|(&(n, f), &v)| (n, f, v))
        .collect();
    samples.shuffle(&mut rng);

    let lr = hyper.learning_rate;
    let lambda = hyper.regularization;
    let mut loss_history = Vec::with_capacity(hyper.epochs);
    let mut min_loss = f64::INFINITY;
    let mut rising_epochs = 0usize;

    for epoch in 0..hyper.epochs {
        for &(n, f, rating) in &samples {
            let (u, v) = (n * k, f * k);
            let mut dot = 0.0;
            for i in 0..k {
                dot += cell_factors[u + i] * content_factors[v + i];
            }
            let err = rating - global_mean - dot;
            // Weight decay as a multiplicative factor floored at zero, so
            // extreme regularization collapses factors instead of blowing
            // up when lr * lambda > 1.
            let decay = (1.0 - lr * lambda).max(0.0);
            for i in 0..k {
                let uf = cell_factors[u + i];
                let vf = content_factors[v + i];
                cell_factors[u + i] = uf * decay + lr * err * vf;
                content_factors[v + i] = vf * decay + lr * err * uf;
            }
        }

        let mut sq_sum = 0.0;
        for &(n, f, rating) in &samples {
            let (u, v) = (n * k, f * k);
            let mut dot = 0.0;
            for i in 0..k {
                dot += cell_factors[u + i] * content_factors[v + i];
            }
            let err = rating - global_mean - dot;
            sq_sum += err * err;
        }
        let loss = sq_sum / samples.len() as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: "non-finite training loss".into(),
            });
        }
        // Tolerate small SGD wiggle; a sustained rise above the best loss
        // seen so far means the step size is too large.
        if loss > min_loss * 1.05 {
            rising_epochs += 1;
            if rising_epochs >= 10 {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: format!("loss rising: {loss} vs best {min_loss}"),
                });
            }
        } else {
            rising_epochs = 0;
        }
        min_loss = min_loss.min(loss);
        loss_history.push(loss);
    }

    if loss_history.last().unwrap() > loss_history.first().unwrap() {
        return Err(Error::TrainingDiverged {
            epoch: hyper.epochs - 1,
            reason: "final loss above initial loss".into(),
        });
    }
    if !cell_factors.iter().chain(&content_factors).all(|v| v.is_finite()) {
        return Err(Error::TrainingDiverged {
            epoch: hyper.epochs - 1,
            reason: "non-finite factors".into(),
        });
    }

    Ok(FactorModel {
        num_cells: n_cells,
        num_contents: n_contents,
        rank: k,
        cell_factors,
        content_factors,
        global_mean,
        rating_floor,
        rating_ceiling,
        loss_history,
    })
}

/// Clamped model prediction for one (cell, content) pair.
pub fn predict_rating(model: &FactorModel, cell: usize, content: usize) -> Result<f64> {
    if cell >= model.num_cells || content >= model.num_contents {
        return Err(Error::InvalidInput(format!(
            "indices ({cell}, {content}) out of range for {}x{} model",
            model.num_cells, model.num_contents
        )));
    }
    let dot: f64 = model
        .cell_row(cell)
        .iter()
        .zip(model.content_row(content))
        .map(|(u, v)| u * v)
        .sum();
    Ok((model.global_mean + dot).clamp(model.rating_floor, model.rating_ceiling))
}

/// Dense popularity estimate: training entries pass through unchanged, every
/// other (cell, content) pair takes the model prediction.
pub fn estimate_popularity(
    model: &FactorModel,
    ground: &RatingMatrix,
    split: &RatingSplit,
) -> Result<DenseMatrix> {
    if model.num_cells != ground.num_cells || model.num_contents != ground.num_contents {
        return Err(Error::InvalidInput("model/matrix shape mismatch".into()));
    }
    let mut dense = DenseMatrix::zeros(ground.num_cells, ground.num_contents);
    for n in 0..ground.num_cells {
        for f in 0..ground.num_contents {
            *dense.get_mut(n, f) = match split.train.get(n, f) {
                Some(observed) => observed,
                None => predict_rating(model, n, f)?,
            };
        }
    }
    Ok(dense)
}

/// Root-mean-square prediction error over the test entries.
pub fn rating_rmse(model: &FactorModel, test: &RatingMatrix) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidInput("test matrix is empty".into()));
    }
    let mut sq_sum = 0.0;
    for (&(n, f), &rating) in &test.entries {
        let err = predict_rating(model, n, f)? - rating;
        sq_sum += err * err;
    }
    Ok((sq_sum / test.len() as f64).sqrt())
}
