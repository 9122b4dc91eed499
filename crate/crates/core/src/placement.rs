//! Cache placement: greedy most-popular-first filling of each cell's storage
//! budget, plus an exhaustive brute-force oracle for small catalogs.

use std::collections::BTreeSet;

use crate::popularity::DenseMatrix;
use crate::trace::Catalog;
use crate::{Error, Result};

/// Per-cell storage budget as a fraction of the library's total bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageBudget {
    pub fraction: f64,
    pub bytes: u64,
}

impl StorageBudget {
    pub fn from_fraction(fraction: f64, catalog: &Catalog) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidInput(format!(
                "storage fraction {fraction} outside [0, 1]"
            )));
        }
        Ok(StorageBudget {
            fraction,
            bytes: (fraction * catalog.total_bytes as f64).floor() as u64,
        })
    }
}

/// Which contents each cell caches.
#[derive(Debug, Clone, PartialEq)]
pub struct CachePlacement {
    pub per_cell: Vec<BTreeSet<usize>>,
    pub bytes_used: Vec<u64>,
}

impl CachePlacement {
    pub fn empty(num_cells: usize) -> Self {
        CachePlacement {
            per_cell: vec![BTreeSet::new(); num_cells],
            bytes_used: vec![0; num_cells],
        }
    }

    pub fn is_cached(&self, cell: usize, content: usize) -> bool {
        self.per_cell[cell].contains(&content)
    }

    /// Serialize as CSV rows `cell,content_id`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for (cell, contents) in self.per_cell.iter().enumerate() {
            for content in contents {
                writeln!(out, "{cell},{content}")?;
            }
        }
        Ok(())
    }
}

/// Greedy placement: per cell, scan contents by (rating desc, id asc) and
/// cache each one that still fits, skipping misfits and continuing to the
/// end of the ranking.
pub fn greedy_place(
    popularity: &DenseMatrix,
    catalog: &Catalog,
    budget: StorageBudget,
) -> CachePlacement {
    assert_eq!(popularity.num_contents, catalog.len());
    let mut placement = CachePlacement::empty(popularity.num_cells);
    let mut order: Vec<usize> = (0..catalog.len()).collect();
    for cell in 0..popularity.num_cells {
        let row = popularity.row(cell);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let mut remaining = budget.bytes;
        for &f in &order {
            let size = catalog.contents[f].size;
            if size <= remaining {
                remaining -= size;
                placement.per_cell[cell].insert(f);
                placement.bytes_used[cell] += size;
            }
        }
    }
    placement
}

/// True iff every cell's cache in `p_small` is contained in `p_large`'s.
pub fn nestedness_check(p_small: &CachePlacement, p_large: &CachePlacement) -> Result<bool> {
    if p_small.per_cell.len() != p_large.per_cell.len() {
        return Err(Error::InvalidInput("placement shape mismatch".into()));
    }
    Ok(p_small
        .per_cell
        .iter()
        .zip(&p_large.per_cell)
        .all(|(small, large)| small.is_subset(large)))
}

/// Objective for the brute-force oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementObjective {
    /// Maximize Σ rating over cached contents.
    HitCount,
    /// Maximize Σ rating × size (the bytes kept off the backhaul).
    OffloadBytes,
}

/// Exhaustive single-cell optimum over all feasible subsets. F must be
/// small; ties break toward the lexicographically smallest id set.
pub fn optimal_place_bruteforce(
    popularity_row: &[f64],
    catalog: &Catalog,
    budget_bytes: u64,
    objective: PlacementObjective,
) -> Result<BTreeSet<usize>> {
    let f = catalog.len();
    if f > 20 {
        return Err(Error::InvalidInput(format!(
            "brute force limited to F <= 20, got {f}"
        )));
    }
    if popularity_row.len() != f {
        return Err(Error::InvalidInput("popularity row length mismatch".into()));
    }

    let mut best_value = f64::NEG_INFINITY;
    let mut best: Vec<usize> = Vec::new();
    for mask in 0u32..(1u32 << f) {
        let mut bytes = 0u64;
        let mut value = 0.0;
        let mut set = Vec::new();
        for id in 0..f {
            if mask & (1 << id) != 0 {
                bytes += catalog.contents[id].size;
                value += match objective {
                    PlacementObjective::HitCount => popularity_row[id],
                    PlacementObjective::OffloadBytes => {
                        popularity_row[id] * catalog.contents[id].size as f64
                    }
                };
                set.push(id);
            }
        }
        if bytes > budget_bytes {
            continue;
        }
        if value > best_value || (value == best_value && set < best) {
            best_value = value;
            best = set;
        }
    }
    Ok(best.into_iter().collect())
}
