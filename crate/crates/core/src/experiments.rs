//! End-to-end sweep drivers: storage-size sweep, backhaul-capacity-ratio
//! sweep, and the training-density sweep, all seeded for full
//! reproducibility and emitted as two-column CSV.
//!
//! Within a sweep both methods (ground truth, collaborative filtering)
//! consume the identical trace, cell assignment, and simulator
//! configuration; only the popularity matrix differs.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::placement::{greedy_place, CachePlacement, StorageBudget};
use crate::popularity::{
    build_rating_matrix, estimate_popularity, split_ratings, train_reg_svd, CfHyperParams,
    DenseMatrix, RatingMatrix,
};
use crate::simcore::{simulate, BackhaulMode, LinkConfig};
use crate::trace::{
    assign_requests_to_cells, generate_synthetic_trace, parse_final_traces, Catalog, RequestLog,
    SyntheticTraceParams,
};
use crate::{Error, Result};

/// Where the trace comes from.
#[derive(Debug, Clone)]
pub enum TraceSource {
    File(PathBuf),
    Synthetic(SyntheticTraceParams),
}

/// Full experiment configuration. Defaults follow the reference setup:
/// N = 16 cells, 3.8 MByte/s total backhaul, 120 MByte/s total wireless,
/// 4 MByte/s content bitrate, 30% training split.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub trace: TraceSource,
    pub num_cells: usize,
    /// Σ C_n in bytes/s, split evenly across cells.
    pub backhaul_total: f64,
    /// Σ C'_n in bytes/s, split evenly across cells.
    pub wireless_total: f64,
    /// Bitrate assigned to parsed traces (synthetic traces carry their own).
    pub default_bitrate: f64,
    pub storage_grid: Vec<f64>,
    /// Storage fraction held fixed during the backhaul-ratio sweep.
    pub fixed_storage_fraction: f64,
    pub train_fraction: f64,
    pub cf: CfHyperParams,
    pub density_grid: Vec<f64>,
    pub backhaul_ratio_grid: Vec<f64>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub backhaul_mode: BackhaulMode,
    /// Run independent grid points on a worker pool. Output order and
    /// values are identical to serial execution.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trace: TraceSource::Synthetic(SyntheticTraceParams::default()),
            num_cells: 16,
            backhaul_total: 3.8e6,
            wireless_total: 120e6,
            default_bitrate: 4e6,
            storage_grid: (0..=20).map(|i| i as f64 / 20.0).collect(),
            fixed_storage_fraction: 0.4,
            train_fraction: 0.3,
            cf: CfHyperParams::default(),
            density_grid: vec![0.1, 0.3, 0.6, 0.9, 1.0],
            backhaul_ratio_grid: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            master_seed: 1,
            output_dir: PathBuf::from("results"),
            backhaul_mode: BackhaulMode::PerCell,
            parallel: false,
        }
    }
}

/// Child-seed derivation: FNV-1a over the master seed, a stream label, and
/// an index, so each sub-experiment is individually re-runnable.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf29ce484222325;
    const FNV_PRIME: u64 = 0x100000001b3;
    let mut hash = FNV_OFFSET;
    for byte in master
        .to_le_bytes()
        .iter()
        .chain(stream.as_bytes())
        .chain(index.to_le_bytes().iter())
    {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// One x/y curve per method, sharing the x grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub x_label: String,
    pub x: Vec<f64>,
    pub methods: Vec<MethodCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodCurve {
    pub name: String,
    pub y: Vec<f64>,
}

impl SweepCurve {
    pub fn method(&self, name: &str) -> Option<&MethodCurve> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Trace plus the two popularity matrices, ready for placement/simulation.
pub struct Pipeline {
    pub catalog: Catalog,
    pub log: RequestLog,
    pub ground: RatingMatrix,
    pub ground_dense: DenseMatrix,
    pub skipped_rows: u64,
}

impl Pipeline {
    /// Load or synthesize the trace, assign cells, and build the
    /// ground-truth rating matrix.
    pub fn prepare(config: &ExperimentConfig) -> Result<Pipeline> {
        let (catalog, raw_log, skipped_rows) = match &config.trace {
            TraceSource::File(path) => {
                let file = File::open(path).map_err(|e| Error::io(path, e))?;
                let parsed = parse_final_traces(BufReader::new(file), config.default_bitrate)?;
                (parsed.catalog, parsed.log, parsed.skipped_rows)
            }
            TraceSource::Synthetic(params) => {
                let mut params = params.clone();
                params.seed = derive_seed(config.master_seed, "trace", 0);
                let (catalog, log) = generate_synthetic_trace(&params)?;
                (catalog, log, 0)
            }
        };
        let log = assign_requests_to_cells(
            &raw_log,
            config.num_cells,
            derive_seed(config.master_seed, "assign", 0),
        )?;
        let ground = build_rating_matrix(&log, config.num_cells, catalog.len())?;
        let ground_dense = ground.to_dense();
        Ok(Pipeline {
            catalog,
            log,
            ground,
            ground_dense,
            skipped_rows,
        })
    }

    /// CF-estimated dense popularity at the given training fraction.
    ///
    /// A fraction of 1.0 is the pass-through estimator: every rating is
    /// observed, nothing is missing, and the estimate equals the ground
    /// truth; no model is trained.
    pub fn cf_estimate(
        &self,
        train_fraction: f64,
        cf: &CfHyperParams,
        master_seed: u64,
        stream_index: u64,
    ) -> Result<DenseMatrix> {
        if train_fraction >= 1.0 {
            return Ok(self.ground_dense.clone());
        }
        let split = split_ratings(
            &self.ground,
            train_fraction,
            derive_seed(master_seed, "split", stream_index),
        )?;
        let mut hyper = cf.clone();
        hyper.seed = derive_seed(master_seed, "cf", stream_index);
        let model = train_reg_svd(&split.train, &hyper)?;
        estimate_popularity(&model, &self.ground, &split)
    }

    pub fn links(&self, config: &ExperimentConfig) -> Result<LinkConfig> {
        let mut links =
            LinkConfig::from_totals(config.num_cells, config.backhaul_total, config.wireless_total)?;
        links.backhaul_mode = config.backhaul_mode;
        Ok(links)
    }

    fn place(&self, popularity: &DenseMatrix, fraction: f64) -> Result<CachePlacement> {
        let budget = StorageBudget::from_fraction(fraction, &self.catalog)?;
        Ok(greedy_place(popularity, &self.catalog, budget))
    }
}

fn map_grid<T, F>(grid: &[f64], parallel: bool, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, f64) -> Result<T> + Sync,
{
    if parallel {
        grid.par_iter()
            .enumerate()
            .map(|(i, &x)| job(i, x))
            .collect()
    } else {
        grid.iter().enumerate().map(|(i, &x)| job(i, x)).collect()
    }
}

/// Per-method metrics at every storage fraction in the grid.
pub struct StorageSweepOutput {
    pub satisfaction: SweepCurve,
    pub backhaul: SweepCurve,
}

/// Sweep the per-cell storage budget over the configured grid for both
/// popularity methods, collecting satisfaction and backhaul load.
pub fn run_storage_sweep(config: &ExperimentConfig) -> Result<StorageSweepOutput> {
    let pipeline = Pipeline::prepare(config)?;
    let cf_dense = pipeline.cf_estimate(config.train_fraction, &config.cf, config.master_seed, 0)?;
    let links = pipeline.links(config)?;

    let points = map_grid(&config.storage_grid, config.parallel, |_, fraction| {
        let mut sats = [0.0f64; 2];
        let mut loads = [0.0f64; 2];
        for (slot, dense) in [&pipeline.ground_dense, &cf_dense].into_iter().enumerate() {
            let placement = pipeline.place(dense, fraction)?;
            let result = simulate(&pipeline.log, &pipeline.catalog, &placement, &links)?;
            sats[slot] = result.satisfaction_pct;
            loads[slot] = result.backhaul_load_pct;
        }
        Ok((sats, loads))
    })?;

    let x: Vec<f64> = config.storage_grid.iter().map(|f| f * 100.0).collect();
    let curve = |label: &str, pick: fn(&([f64; 2], [f64; 2])) -> [f64; 2]| SweepCurve {
        x_label: label.to_string(),
        x: x.clone(),
        methods: vec![
            MethodCurve {
                name: "ground-truth".into(),
                y: points.iter().map(|p| pick(p)[0]).collect(),
            },
            MethodCurve {
                name: "cf".into(),
                y: points.iter().map(|p| pick(p)[1]).collect(),
            },
        ],
    };
    Ok(StorageSweepOutput {
        satisfaction: curve("storage_pct", |p| p.0),
        backhaul: curve("storage_pct", |p| p.1),
    })
}

/// Sweep the backhaul/wireless capacity ratio at a fixed storage fraction,
/// recording satisfaction per method.
pub fn run_backhaul_ratio_sweep(config: &ExperimentConfig) -> Result<SweepCurve> {
    for &ratio in &config.backhaul_ratio_grid {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "backhaul ratio {ratio} outside (0, 1]"
            )));
        }
    }
    let pipeline = Pipeline::prepare(config)?;
    let cf_dense = pipeline.cf_estimate(config.train_fraction, &config.cf, config.master_seed, 0)?;

    // Placement depends only on popularity and storage, not on the links.
    let gt_placement = pipeline.place(&pipeline.ground_dense, config.fixed_storage_fraction)?;
    let cf_placement = pipeline.place(&cf_dense, config.fixed_storage_fraction)?;

    let points = map_grid(&config.backhaul_ratio_grid, config.parallel, |_, ratio| {
        let mut links = LinkConfig::from_totals(
            config.num_cells,
            ratio * config.wireless_total,
            config.wireless_total,
        )?;
        links.backhaul_mode = config.backhaul_mode;
        let mut sats = [0.0f64; 2];
        for (slot, placement) in [&gt_placement, &cf_placement].into_iter().enumerate() {
            let result = simulate(&pipeline.log, &pipeline.catalog, placement, &links)?;
            sats[slot] = result.satisfaction_pct;
        }
        Ok(sats)
    })?;

    Ok(SweepCurve {
        x_label: "backhaul_ratio_pct".into(),
        x: config
            .backhaul_ratio_grid
            .iter()
            .map(|r| r * 100.0)
            .collect(),
        methods: vec![
            MethodCurve {
                name: "ground-truth".into(),
                y: points.iter().map(|p| p[0]).collect(),
            },
            MethodCurve {
                name: "cf".into(),
                y: points.iter().map(|p| p[1]).collect(),
            },
        ],
    })
}

/// For each training density, compare the satisfaction curves of the two
/// methods across the storage grid and reduce to one RMS gap.
pub fn run_density_sweep(config: &ExperimentConfig) -> Result<SweepCurve> {
    if config.storage_grid.len() < 2 {
        return Err(Error::InvalidInput(
            "density sweep needs a storage grid with >= 2 points".into(),
        ));
    }
    for &d in &config.density_grid {
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "training density {d} outside (0, 1]"
            )));
        }
    }
    let pipeline = Pipeline::prepare(config)?;
    let links = pipeline.links(config)?;

    let satisfaction_curve = |dense: &DenseMatrix| -> Result<Vec<f64>> {
        map_grid(&config.storage_grid, config.parallel, |_, fraction| {
            let placement = pipeline.place(dense, fraction)?;
            let result = simulate(&pipeline.log, &pipeline.catalog, &placement, &links)?;
            Ok(result.satisfaction_pct)
        })
    };
    let gt_curve = satisfaction_curve(&pipeline.ground_dense)?;

    let mut rmse = Vec::with_capacity(config.density_grid.len());
    for (i, &density) in config.density_grid.iter().enumerate() {
        let cf_dense = pipeline.cf_estimate(density, &config.cf, config.master_seed, i as u64)?;
        let cf_curve = satisfaction_curve(&cf_dense)?;
        let mean_sq = gt_curve
            .iter()
            .zip(&cf_curve)
            .map(|(gt, cf)| (gt - cf) * (gt - cf))
            .sum::<f64>()
            / gt_curve.len() as f64;
        rmse.push(mean_sq.sqrt());
    }

    Ok(SweepCurve {
        x_label: "training_density".into(),
        x: config.density_grid.clone(),
        methods: vec![MethodCurve {
            name: "cf".into(),
            y: rmse,
        }],
    })
}

/// Format with 6 significant digits, plain notation.
fn fmt_sig6(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{value:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Write one `{sweep}-{metric}-{method}.csv` per method: two comma-separated
/// columns x,y, 6 significant digits, no header unless requested. Returns
/// the written paths in method order.
pub fn emit_csv(
    curve: &SweepCurve,
    dir: &Path,
    sweep: &str,
    metric: &str,
    header: bool,
) -> Result<Vec<PathBuf>> {
    if curve.x.is_empty() || curve.methods.is_empty() {
        return Err(Error::InvalidInput("refusing to emit an empty curve".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for method in &curve.methods {
        if method.y.len() != curve.x.len() {
            return Err(Error::InvalidInput(format!(
                "method {}: {} y values for {} x values",
                method.name,
                method.y.len(),
                curve.x.len()
            )));
        }
        let path = dir.join(format!("{sweep}-{metric}-{}.csv", method.name));
        let mut out = String::new();
        if header {
            out.push_str(&format!("{},{}\n", curve.x_label, metric));
        }
        for (x, y) in curve.x.iter().zip(&method.y) {
            out.push_str(&format!("{},{}\n", fmt_sig6(*x), fmt_sig6(*y)));
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parse a two-column CSV back into (x, y) pairs.
pub fn parse_xy_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (x, y) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad csv row: {line}")))?;
        // Skip a header row.
        let (Ok(x), Ok(y)) = (x.trim().parse(), y.trim().parse()) else {
            continue;
        };
        rows.push((x, y));
    }
    Ok(rows)
}

/// Parse a byte (or byte/s) quantity with optional KB/MB/GB suffix, powers
/// of 10.
pub fn parse_bytes(text: &str) -> Result<f64> {
    let t = text.trim();
    let (number, scale) = if let Some(n) = t.strip_suffix("GB").or(t.strip_suffix("gb")) {
        (n, 1e9)
    } else if let Some(n) = t.strip_suffix("MB").or(t.strip_suffix("mb")) {
        (n, 1e6)
    } else if let Some(n) = t.strip_suffix("KB").or(t.strip_suffix("kb")) {
        (n, 1e3)
    } else if let Some(n) = t.strip_suffix('B').or(t.strip_suffix('b')) {
        (n, 1.0)
    } else {
        (t, 1.0)
    };
    number
        .trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| Error::Parse(format!("bad byte quantity: {text}")))
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse(format!("bad grid: {text}")))?;
    if grid.is_empty() {
        return Err(Error::Parse("empty grid".into()));
    }
    Ok(grid)
}

impl ExperimentConfig {
    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Parse(format!("bad {what}: {value}"));
        fn synth(cfg: &mut ExperimentConfig) -> &mut SyntheticTraceParams {
            if !matches!(cfg.trace, TraceSource::Synthetic(_)) {
                cfg.trace = TraceSource::Synthetic(SyntheticTraceParams::default());
            }
            match &mut cfg.trace {
                TraceSource::Synthetic(p) => p,
                TraceSource::File(_) => unreachable!(),
            }
        }
        match key {
            "trace_file" => self.trace = TraceSource::File(PathBuf::from(value)),
            "synth_contents" => synth(self).num_contents = value.parse().map_err(|_| bad(key))?,
            "synth_requests" => synth(self).num_requests = value.parse().map_err(|_| bad(key))?,
            "synth_duration" => synth(self).duration = value.parse().map_err(|_| bad(key))?,
            "synth_zipf" => synth(self).zipf_exponent = value.parse().map_err(|_| bad(key))?,
            "synth_size_log_mean" => {
                synth(self).size_log_mean = value.parse().map_err(|_| bad(key))?
            }
            "synth_size_log_sigma" => {
                synth(self).size_log_sigma = value.parse().map_err(|_| bad(key))?
            }
            "synth_size_min" => synth(self).size_min = parse_bytes(value)? as u64,
            "synth_size_max" => synth(self).size_max = parse_bytes(value)? as u64,
            "bitrate" => {
                let rate = parse_bytes(value)?;
                self.default_bitrate = rate;
                if let TraceSource::Synthetic(p) = &mut self.trace {
                    p.bitrate = rate;
                }
            }
            "num_cells" => self.num_cells = value.parse().map_err(|_| bad(key))?,
            "backhaul_total" => self.backhaul_total = parse_bytes(value)?,
            "wireless_total" => self.wireless_total = parse_bytes(value)?,
            "storage_grid" => self.storage_grid = parse_grid(value)?,
            "fixed_storage_fraction" => {
                self.fixed_storage_fraction = value.parse().map_err(|_| bad(key))?
            }
            "train_fraction" => self.train_fraction = value.parse().map_err(|_| bad(key))?,
            "cf_rank" => self.cf.rank = value.parse().map_err(|_| bad(key))?,
            "cf_lambda" => self.cf.regularization = value.parse().map_err(|_| bad(key))?,
            "cf_learning_rate" => self.cf.learning_rate = value.parse().map_err(|_| bad(key))?,
            "cf_epochs" => self.cf.epochs = value.parse().map_err(|_| bad(key))?,
            "cf_init_scale" => self.cf.init_scale = value.parse().map_err(|_| bad(key))?,
            "density_grid" => self.density_grid = parse_grid(value)?,
            "backhaul_ratio_grid" => self.backhaul_ratio_grid = parse_grid(value)?,
            "seed" => self.master_seed = value.parse().map_err(|_| bad(key))?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "backhaul_shared" => {
                self.backhaul_mode = if value.parse().map_err(|_| bad(key))? {
                    BackhaulMode::SharedPool
                } else {
                    BackhaulMode::PerCell
                }
            }
            "parallel" => self.parallel = value.parse().map_err(|_| bad(key))?,
            other => return Err(Error::Parse(format!("unknown config key: {other}"))),
        }
        Ok(())
    }

    /// Load a flat `key=value` config file. `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }
}

/// Run a named sweep and emit its CSVs into the output directory. Returns
/// the written paths.
pub fn run_and_emit(config: &ExperimentConfig, sweep: &str) -> Result<Vec<PathBuf>> {
    let dir = config.output_dir.clone();
    match sweep {
        "storage" => {
            let out = run_storage_sweep(config)?;
            let mut paths = emit_csv(&out.satisfaction, &dir, "storage", "satisfaction", false)?;
            paths.extend(emit_csv(&out.backhaul, &dir, "storage", "backhaul", false)?);
            Ok(paths)
        }
        "backhaul" => {
            let curve = run_backhaul_ratio_sweep(config)?;
            emit_csv(&curve, &dir, "backhaul", "satisfaction", false)
        }
        "density" => {
            let curve = run_density_sweep(config)?;
            emit_csv(&curve, &dir, "density", "rmse", false)
        }
        other => Err(Error::InvalidInput(format!("unknown sweep: {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_derivation_is_stable_and_stream_separated() {
        let a = derive_seed(42, "split", 0);
        assert_eq!(a, derive_seed(42, "split", 0));
        assert_ne!(a, derive_seed(42, "split", 1));
        assert_ne!(a, derive_seed(42, "cf", 0));
        assert_ne!(a, derive_seed(43, "split", 0));
    }

    #[test]
    fn byte_suffixes_are_powers_of_ten() {
        assert_eq!(parse_bytes("3.8MB").unwrap(), 3.8e6);
        assert_eq!(parse_bytes("120 MB").unwrap(), 120e6);
        assert_eq!(parse_bytes("6.024GB").unwrap(), 6.024e9);
        assert_eq!(parse_bytes("4KB").unwrap(), 4000.0);
        assert_eq!(parse_bytes("512").unwrap(), 512.0);
        assert_eq!(parse_bytes("512B").unwrap(), 512.0);
        assert!(parse_bytes("lots").is_err());
    }

    #[test]
    fn fmt_sig6_examples() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(100.0), "100");
        assert_eq!(fmt_sig6(33.684210526), "33.6842");
        assert_eq!(fmt_sig6(0.05), "0.05");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(123456.78), "123457");
    }

    #[test]
    fn config_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(
            &path,
            "# comment\n\
             num_cells = 8\n\
             backhaul_total = 1.9MB\n\
             wireless_total = 60MB\n\
             storage_grid = 0,0.5,1\n\
             train_fraction = 0.4\n\
             cf_rank = 4\n\
             seed = 77\n\
             synth_requests = 1234\n\
             backhaul_shared = true\n",
        )
        .unwrap();
        let config = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(config.num_cells, 8);
        assert_eq!(config.backhaul_total, 1.9e6);
        assert_eq!(config.storage_grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(config.train_fraction, 0.4);
        assert_eq!(config.cf.rank, 4);
        assert_eq!(config.master_seed, 77);
        assert_eq!(config.backhaul_mode, BackhaulMode::SharedPool);
        match config.trace {
            TraceSource::Synthetic(p) => assert_eq!(p.num_requests, 1234),
            _ => panic!("expected synthetic trace"),
        }
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let mut config = ExperimentConfig::default();
        assert!(config.set("no_such_key", "1").is_err());
    }

    #[test]
    fn emit_rejects_empty_curves_and_roundtrips_values() {
        let dir = tempfile::tempdir().unwrap();
        let empty = SweepCurve {
            x_label: "x".into(),
            x: vec![],
            methods: vec![],
        };
        assert!(emit_csv(&empty, dir.path(), "s", "m", false).is_err());

        let curve = SweepCurve {
            x_label: "x".into(),
            x: vec![0.0, 50.0, 100.0],
            methods: vec![MethodCurve {
                name: "cf".into(),
                y: vec![12.3456789, 0.000123456789, 98.7],
            }],
        };
        let paths = emit_csv(&curve, dir.path(), "demo", "metric", false).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].ends_with("demo-metric-cf.csv"));
        let rows = parse_xy_csv(&paths[0]).unwrap();
        assert_eq!(rows.len(), 3);
        for ((x, y), (ex, ey)) in rows.iter().zip(curve.x.iter().zip(&curve.methods[0].y)) {
            assert!((x - ex).abs() <= 1e-5 * ex.abs().max(1.0));
            assert!((y - ey).abs() <= 1e-5 * ey.abs().max(1.0));
        }
    }

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.trace = TraceSource::Synthetic(SyntheticTraceParams {
            num_contents: 50,
            num_requests: 800,
            duration: 4000.0,
            size_log_mean: 11.0,
            size_log_sigma: 1.0,
            ..Default::default()
        });
        config.num_cells = 4;
        config.storage_grid = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        config.cf.epochs = 30;
        config.output_dir = dir.to_path_buf();
        config
    }

    #[test]
    fn storage_sweep_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let out = run_storage_sweep(&config).unwrap();
        for method in &out.backhaul.methods {
            assert_eq!(*method.y.first().unwrap(), 100.0, "{}", method.name);
            assert_eq!(*method.y.last().unwrap(), 0.0, "{}", method.name);
        }
        for method in &out.satisfaction.methods {
            assert!(method.y.iter().all(|&v| (0.0..=100.0).contains(&v)));
        }
    }

    #[test]
    fn backhaul_sweep_rejects_bad_ratios() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.backhaul_ratio_grid = vec![0.0];
        assert!(run_backhaul_ratio_sweep(&config).is_err());
        config.backhaul_ratio_grid = vec![1.5];
        assert!(run_backhaul_ratio_sweep(&config).is_err());
    }

    #[test]
    fn density_one_is_exact_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.density_grid = vec![1.0];
        let curve = run_density_sweep(&config).unwrap();
        assert_eq!(curve.methods[0].y, vec![0.0]);
    }

    #[test]
    fn density_sweep_needs_two_storage_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.storage_grid = vec![0.5];
        assert!(run_density_sweep(&config).is_err());
    }

    #[test]
    fn sweeps_are_deterministic_and_parallel_matches_serial() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let a = run_storage_sweep(&config).unwrap();
        let b = run_storage_sweep(&config).unwrap();
        assert_eq!(a.satisfaction, b.satisfaction);
        assert_eq!(a.backhaul, b.backhaul);

        let mut parallel = config.clone();
        parallel.parallel = true;
        let c = run_storage_sweep(&parallel).unwrap();
        assert_eq!(a.satisfaction, c.satisfaction);
        assert_eq!(a.backhaul, c.backhaul);
    }

    #[test]
    fn run_and_emit_writes_expected_filenames() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let paths = run_and_emit(&config, "storage").unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec![
                "storage-satisfaction-ground-truth.csv",
                "storage-satisfaction-cf.csv",
                "storage-backhaul-ground-truth.csv",
                "storage-backhaul-cf.csv",
            ]
        );
        assert!(run_and_emit(&config, "nope").is_err());
    }
}
