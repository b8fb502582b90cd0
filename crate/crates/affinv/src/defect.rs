//! Affine-invariance defects |A symdiff (aA + b)| / p over the shift grid.
//!
//! The grid covers 1 <= |a| <= K, |b| <= K. Each positive a costs one
//! dilation; the 2K+1 translates of the dilated set are then swept by bit
//! rotation, so profiling is K dilations plus O(K^2) rotations and
//! popcounts. For symmetric sets (A = -A) the negative half of the grid
//! is a mirror: aA + b = (-a)A + b as sets, an exact equality that is
//! verified once and then reused.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::ShiftSet;
use crate::indicator::IndicatorSet;

/// One grid cell: the exact mismatch count and its density.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DefectEntry {
    pub a: i64,
    pub b: i64,
    pub count: u64,
    pub defect: f64,
}

/// The measured defect grid of one set.
#[derive(Debug, Clone, Serialize)]
pub struct DefectReport {
    pub p: u64,
    pub k: u64,
    pub cardinality: u64,
    pub density: f64,
    pub is_symmetric: bool,
    /// Largest defect on the grid.
    pub max_defect: f64,
    pub max_count: u64,
    /// Lexicographically first (a, b) attaining the maximum.
    pub max_at: (i64, i64),
    /// Cells sorted by (a, b), a in {-K..-1, 1..K}.
    pub grid: Vec<DefectEntry>,
    /// Wall time of the measurement; excluded from serialized records so
    /// identical inputs keep byte-identical outputs.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// The image {a x + b : x in A}; a must be nonzero mod p.
pub fn transform_set(set: &IndicatorSet, a: i128, b: i128) -> Result<IndicatorSet> {
    Ok(set.dilate(a)?.translate(b))
}

/// |A symdiff B| (convenience re-export of the bitset kernel).
pub fn symdiff_size(a: &IndicatorSet, b: &IndicatorSet) -> Result<u64> {
    a.symdiff_size(b)
}

/// Measure the defect of every map x -> ax + b with 1 <= |a| <= K,
/// |b| <= K against A.
pub fn defect_profile(set: &IndicatorSet, k: u64) -> Result<DefectReport> {
    let start = Instant::now();
    let p = set.modulus().get();
    let shifts = ShiftSet::new(k)?;
    if k >= p {
        return Err(Error::DegenerateParams {
            reason: format!("shift range K = {k} must be smaller than p = {p}"),
        });
    }
    let is_symmetric = set.is_symmetric();

    let mut grid: Vec<DefectEntry> = Vec::with_capacity(shifts.grid_len() as usize);
    for a in 1..=k as i64 {
        let dilated = set.dilate(a as i128)?;
        let mirrored = if is_symmetric {
            None
        } else {
            Some(set.dilate(-(a as i128))?)
        };
        for b in -(k as i64)..=k as i64 {
            let image = dilated.translate(b as i128);
            let count = set.symdiff_size(&image)?;
            grid.push(entry(a, b, count, p));
            let negative_count = match &mirrored {
                // (-a)A + b = aA + b exactly when A = -A.
                None => count,
                Some(dilated_neg) => {
                    let image = dilated_neg.translate(b as i128);
                    set.symdiff_size(&image)?
                }
            };
            grid.push(entry(-a, b, negative_count, p));
        }
    }
    grid.sort_unstable_by_key(|e| (e.a, e.b));

    let best = grid
        .iter()
        .max_by(|x, y| {
            x.count
                .cmp(&y.count)
                .then_with(|| (y.a, y.b).cmp(&(x.a, x.b)))
        })
        .expect("grid is nonempty for K >= 1");
    Ok(DefectReport {
        p,
        k,
        cardinality: set.len(),
        density: set.density(),
        is_symmetric,
        max_defect: best.defect,
        max_count: best.count,
        max_at: (best.a, best.b),
        grid,
        wall_time: start.elapsed(),
    })
}

fn entry(a: i64, b: i64, count: u64, p: u64) -> DefectEntry {
    DefectEntry {
        a,
        b,
        count,
        defect: count as f64 / p as f64,
    }
}

impl DefectReport {
    /// Look up one grid cell.
    pub fn cell(&self, a: i64, b: i64) -> Option<&DefectEntry> {
        self.grid
            .binary_search_by_key(&(a, b), |e| (e.a, e.b))
            .ok()
            .map(|i| &self.grid[i])
    }

    /// CSV export: header `a,b,count,defect`, LF line endings, floats in
    /// round-trippable exponent form.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(b"a,b,count,defect\n")?;
        for e in &self.grid {
            writeln!(out, "{},{},{},{:.16e}", e.a, e.b, e.count, e.defect)?;
        }
        Ok(())
    }
}
