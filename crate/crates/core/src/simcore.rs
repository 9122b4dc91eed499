//! Trace replay under finite link capacities.
//!
//! Delivery follows an event-driven fluid processor-sharing model. At any
//! instant a request at cell `n` receives
//! `min(B(f), C'_n / active_n, C_n / misses_n)` bytes/s, the backhaul term
//! applying only to cache misses. Rates are recomputed at every arrival and
//! completion; between events remaining bytes drain linearly. Simultaneous
//! events are processed in (time, request index) order.

use crate::placement::CachePlacement;
use crate::popularity::RatingMatrix;
use crate::trace::{Catalog, RequestLog};
use crate::{Error, Result};

/// How miss traffic shares backhaul capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackhaulMode {
    /// Independent per-cell links of `backhaul_per_cell` each.
    #[default]
    PerCell,
    /// One pool of `num_cells × backhaul_per_cell` shared by all misses.
    SharedPool,
}

/// Per-cell link capacities in bytes/second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub num_cells: usize,
    pub backhaul_per_cell: f64,
    pub wireless_per_cell: f64,
    pub backhaul_mode: BackhaulMode,
}

impl LinkConfig {
    /// Limited-backhaul regime: both capacities positive, backhaul no larger
    /// than wireless.
    pub fn new(num_cells: usize, backhaul_per_cell: f64, wireless_per_cell: f64) -> Result<Self> {
        if num_cells < 1 {
            return Err(Error::InvalidInput("num_cells must be >= 1".into()));
        }
        if !(backhaul_per_cell > 0.0) || !(wireless_per_cell > 0.0) {
            return Err(Error::InvalidInput("link capacities must be > 0".into()));
        }
        if backhaul_per_cell > wireless_per_cell {
            return Err(Error::InvalidInput(format!(
                "backhaul {backhaul_per_cell} exceeds wireless {wireless_per_cell}"
            )));
        }
        Ok(LinkConfig {
            num_cells,
            backhaul_per_cell,
            wireless_per_cell,
            backhaul_mode: BackhaulMode::PerCell,
        })
    }

    /// Split Table-1-style total capacities evenly across cells.
    pub fn from_totals(num_cells: usize, backhaul_total: f64, wireless_total: f64) -> Result<Self> {
        LinkConfig::new(
            num_cells,
            backhaul_total / num_cells as f64,
            wireless_total / num_cells as f64,
        )
    }
}

/// Per-request delivery ledger entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub index: usize,
    pub cell: usize,
    pub content: usize,
    pub hit: bool,
    pub start: f64,
    pub finish: f64,
    /// Delivery duration accumulated slice by slice. Equals
    /// `finish - start` up to rounding, but does not lose precision when
    /// `start` is large relative to the duration.
    pub elapsed: f64,
    pub bytes_over_backhaul: u64,
}

impl DeliveryRecord {
    pub fn achieved_rate(&self, catalog: &Catalog) -> f64 {
        catalog.contents[self.content].size as f64 / self.elapsed
    }
}

/// Relative tolerance on the satisfaction rate threshold.
pub const RATE_EPSILON: f64 = 1e-9;

/// Replay outcome: the per-request ledger plus the two aggregate metrics.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub records: Vec<DeliveryRecord>,
    pub satisfaction_pct: f64,
    pub backhaul_load_pct: f64,
}

impl SimResult {
    /// Per-request CSV: index, cell, content, hit, start, finish,
    /// achieved_rate, satisfied.
    pub fn write_records_csv<W: std::io::Write>(
        &self,
        catalog: &Catalog,
        mut out: W,
    ) -> std::io::Result<()> {
        writeln!(out, "index,cell,content,hit,start,finish,achieved_rate,satisfied")?;
        for r in &self.records {
            let rate = r.achieved_rate(catalog);
            let satisfied =
                rate >= catalog.contents[r.content].bitrate * (1.0 - RATE_EPSILON);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.index, r.cell, r.content, r.hit as u8, r.start, r.finish, rate, satisfied as u8
            )?;
        }
        Ok(())
    }

    /// One-row summary CSV with header.
    pub fn write_summary_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "satisfaction_pct,backhaul_load_pct")?;
        writeln!(out, "{},{}", self.satisfaction_pct, self.backhaul_load_pct)
    }
}

struct ActiveRequest {
    index: usize,
    cell: usize,
    content: usize,
    hit: bool,
    start: f64,
    elapsed: f64,
    remaining: f64,
    rate: f64,
}

fn recompute_rates(active: &mut [ActiveRequest], catalog: &Catalog, links: &LinkConfig) {
    let mut active_per_cell = vec![0usize; links.num_cells];
    let mut miss_per_cell = vec![0usize; links.num_cells];
    let mut miss_total = 0usize;
    for a in active.iter() {
        active_per_cell[a.cell] += 1;
        if !a.hit {
            miss_per_cell[a.cell] += 1;
            miss_total += 1;
        }
    }
    for a in active.iter_mut() {
        let wireless_share = links.wireless_per_cell / active_per_cell[a.cell] as f64;
        let mut rate = catalog.contents[a.content].bitrate.min(wireless_share);
        if !a.hit {
            let backhaul_share = match links.backhaul_mode {
                BackhaulMode::PerCell => {
                    links.backhaul_per_cell / miss_per_cell[a.cell] as f64
                }
                BackhaulMode::SharedPool => {
                    links.backhaul_per_cell * links.num_cells as f64 / miss_total as f64
                }
            };
            rate = rate.min(backhaul_share);
        }
        a.rate = rate;
    }

    #[cfg(debug_assertions)]
    {
        let mut wireless_sum = vec![0.0f64; links.num_cells];
        let mut backhaul_sum = vec![0.0f64; links.num_cells];
        for a in active.iter() {
            wireless_sum[a.cell] += a.rate;
            if !a.hit {
                backhaul_sum[a.cell] += a.rate;
            }
        }
        for n in 0..links.num_cells {
            debug_assert!(wireless_sum[n] <= links.wireless_per_cell + 1e-9);
            if links.backhaul_mode == BackhaulMode::PerCell {
                debug_assert!(backhaul_sum[n] <= links.backhaul_per_cell + 1e-9);
            }
        }
    }
}

/// Replay an assigned request log against a cache placement.
pub fn simulate(
    log: &RequestLog,
    catalog: &Catalog,
    placement: &CachePlacement,
    links: &LinkConfig,
) -> Result<SimResult> {
    if placement.per_cell.len() != links.num_cells {
        return Err(Error::InvalidInput(
            "placement cell count does not match link config".into(),
        ));
    }
    for (i, req) in log.requests.iter().enumerate() {
        let cell = req
            .cell
            .ok_or_else(|| Error::InvalidInput(format!("request {i} has no cell")))?;
        if cell >= links.num_cells {
            return Err(Error::InvalidInput(format!(
                "request {i}: cell {cell} >= N={}",
                links.num_cells
            )));
        }
        if req.content >= catalog.len() {
            return Err(Error::InvalidInput(format!(
                "request {i}: content {} not in catalog",
                req.content
            )));
        }
    }

    let mut records: Vec<DeliveryRecord> = Vec::with_capacity(log.len());
    let mut active: Vec<ActiveRequest> = Vec::new();
    let mut now = 0.0f64;
    let mut next_arrival = 0usize;

    while next_arrival < log.len() || !active.is_empty() {
        recompute_rates(&mut active, catalog, links);

        // Candidate events as offsets from `now`, so durations are exact
        // for uncontended deliveries. Ties break by request index.
        let completion = active
            .iter()
            .enumerate()
            .map(|(slot, a)| (a.remaining / a.rate, a.index, slot))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let arrival = (next_arrival < log.len()).then(|| {
            let req = &log.requests[next_arrival];
            ((req.arrival - now).max(0.0), next_arrival)
        });

        let take_arrival = match (&arrival, &completion) {
            (Some((at, ai)), Some((ct, ci, _))) => (*at, *ai) < (*ct, *ci),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!(),
        };

        let dt = if take_arrival {
            arrival.unwrap().0
        } else {
            completion.as_ref().unwrap().0
        };
        if dt > 0.0 {
            for a in active.iter_mut() {
                a.remaining = (a.remaining - a.rate * dt).max(0.0);
                a.elapsed += dt;
            }
            now += dt;
        }

        if take_arrival {
            let req = &log.requests[next_arrival];
            let cell = req.cell.unwrap();
            let hit = placement.is_cached(cell, req.content);
            active.push(ActiveRequest {
                index: next_arrival,
                cell,
                content: req.content,
                hit,
                start: req.arrival,
                elapsed: 0.0,
                remaining: catalog.contents[req.content].size as f64,
                rate: 0.0,
            });
            next_arrival += 1;
        } else {
            let slot = completion.unwrap().2;
            let done = active.swap_remove(slot);
            let size = catalog.contents[done.content].size;
            records.push(DeliveryRecord {
                index: done.index,
                cell: done.cell,
                content: done.content,
                hit: done.hit,
                start: done.start,
                finish: now,
                elapsed: done.elapsed,
                bytes_over_backhaul: if done.hit { 0 } else { size },
            });
        }
    }

    records.sort_by_key(|r| r.index);

    let mut satisfied = 0usize;
    let mut backhaul_bytes = 0u64;
    let mut total_bytes = 0u64;
    for r in &records {
        let content = &catalog.contents[r.content];
        total_bytes += content.size;
        backhaul_bytes += r.bytes_over_backhaul;
        if r.achieved_rate(catalog) >= content.bitrate * (1.0 - RATE_EPSILON) {
            satisfied += 1;
        }
    }
    let d = records.len();
    Ok(SimResult {
        satisfaction_pct: if d == 0 {
            0.0
        } else {
            100.0 * satisfied as f64 / d as f64
        },
        backhaul_load_pct: if total_bytes == 0 {
            0.0
        } else {
            100.0 * backhaul_bytes as f64 / total_bytes as f64
        },
        records,
    })
}

/// Request satisfaction in percent.
pub fn satisfaction(result: &SimResult) -> Result<f64> {
    if result.records.is_empty() {
        return Err(Error::InvalidInput("empty simulation result".into()));
    }
    Ok(result.satisfaction_pct)
}

/// Backhaul load in percent of total requested bytes.
pub fn backhaul_load(result: &SimResult) -> Result<f64> {
    if result.records.is_empty() {
        return Err(Error::InvalidInput("empty simulation result".into()));
    }
    Ok(result.backhaul_load_pct)
}

/// Closed-form backhaul load from the popularity × size decomposition:
/// every miss pulls the full content over the backhaul, so the load is the
/// demand-weighted byte share of uncached (cell, content) pairs.
pub fn analytic_backhaul_load(
    popularity: &RatingMatrix,
    placement: &CachePlacement,
    catalog: &Catalog,
) -> Result<f64> {
    if placement.per_cell.len() != popularity.num_cells {
        return Err(Error::InvalidInput("placement/popularity shape mismatch".into()));
    }
    let mut miss_load = 0.0f64;
    let mut total_load = 0.0f64;
    for (&(n, f), &count) in &popularity.entries {
        let load = count * catalog.contents[f].size as f64;
        total_load += load;
        if !placement.is_cached(n, f) {
            miss_load += load;
        }
    }
    if total_load == 0.0 {
        return Err(Error::InvalidInput("zero total demand".into()));
    }
    Ok(100.0 * miss_load / total_load)
}
