//! Grid scanners for the stabilizing set and cost landscapes.
//!
//! The membership predicate and cost function handed to these scanners must
//! be pure: cells are independent and may be evaluated in any order.

use std::fmt::Write as _;

use super::PolicyVector;
use crate::error::{Error, Result};
use crate::numerics::rank;
use crate::Mat;

pub const MAX_SCAN_DIM: usize = 4;
pub const MIN_SCAN_RESOLUTION: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityReport {
    pub components: usize,
    pub feasible_cells: usize,
    pub total_cells: usize,
    /// Cell count of each component, largest first.
    pub component_sizes: Vec<usize>,
}

/// Grid coordinate `lo + i·(hi − lo)/(res − 1)`.
fn axis_value(lo: f64, hi: f64, i: usize, res: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (res - 1) as f64
}

/// Rasterize the box into `(resolution − 1)^dim` cells, mark a cell feasible
/// when membership holds at any of its corners, and count connected
/// components of feasible cells under face adjacency.
pub fn connectivity_scan(
    membership: impl Fn(&[f64]) -> bool,
    bounds: &[(f64, f64)],
    resolution: usize,
) -> Result<ConnectivityReport> {
    let dim = bounds.len();
    if dim == 0 || dim > MAX_SCAN_DIM {
        return Err(Error::Refused(format!("connectivity scan supports 1..={MAX_SCAN_DIM} axes, got {dim}")));
    }
    if resolution < MIN_SCAN_RESOLUTION {
        return Err(Error::Refused(format!(
            "resolution {resolution} below minimum {MIN_SCAN_RESOLUTION}"
        )));
    }
    // membership at the resolution^dim grid points
    let points = resolution.pow(dim as u32);
    let mut point = vec![0.0; dim];
    let inside: Vec<bool> = (0..points)
        .map(|idx| {
            let mut rem = idx;
            for (axis, &(lo, hi)) in bounds.iter().enumerate() {
                point[axis] = axis_value(lo, hi, rem % resolution, resolution);
                rem /= resolution;
            }
            membership(&point)
        })
        .collect();

    // a cell between neighbouring grid points is feasible when any of its
    // corners is, so thin parts of the set are not broken into specks
    let cells = resolution - 1;
    let total = cells.pow(dim as u32);
    let feasible: Vec<bool> = (0..total)
        .map(|cell| {
            let mut base = 0;
            let (mut rem, mut stride) = (cell, 1);
            for _ in 0..dim {
                base += (rem % cells) * stride;
                rem /= cells;
                stride *= resolution;
            }
            (0..1usize << dim).any(|corner| {
                let mut idx = base;
                let mut stride = 1;
                for axis in 0..dim {
                    if corner >> axis & 1 == 1 {
                        idx += stride;
                    }
                    stride *= resolution;
                }
                inside[idx]
            })
        })
        .collect();

    let mut label = vec![usize::MAX; total];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..total {
        if !feasible[seed] || label[seed] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[seed] = id;
        stack.push(seed);
        while let Some(cell) = stack.pop() {
            size += 1;
            let mut stride = 1;
            for _axis in 0..dim {
                let coord = (cell / stride) % cells;
                if coord > 0 {
                    let nb = cell - stride;
                    if feasible[nb] && label[nb] == usize::MAX {
                        label[nb] = id;
                        stack.push(nb);
                    }
                }
                if coord + 1 < cells {
                    let nb = cell + stride;
                    if feasible[nb] && label[nb] == usize::MAX {
                        label[nb] = id;
                        stack.push(nb);
                    }
                }
                stride *= cells;
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(ConnectivityReport {
        components: sizes.len(),
        feasible_cells: feasible.iter().filter(|&&f| f).count(),
        total_cells: total,
        component_sizes: sizes,
    })
}

/// Cost values on a 2-D affine slice `origin + s·dir1 + t·dir2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    /// Row-major over `(s, t)`; `None` marks an infeasible cell.
    pub values: Vec<Option<f64>>,
}

impl LandscapeGrid {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.t.len() + j]
    }

    /// CSV with header `s,t,value`; infeasible cells print as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,t,value\n");
        for (i, s) in self.s.iter().enumerate() {
            for (j, t) in self.t.iter().enumerate() {
                match self.get(i, j) {
                    Some(v) => writeln!(out, "{s},{t},{v}"),
                    None => writeln!(out, "{s},{t},inf"),
                }
                .expect("writing to a String cannot fail");
            }
        }
        out
    }

    /// Smallest feasible value with its grid location.
    pub fn min_feasible(&self) -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        for (i, s) in self.s.iter().enumerate() {
            for (j, t) in self.t.iter().enumerate() {
                if let Some(v) = self.get(i, j) {
                    if best.is_none_or(|b| v < b.2) {
                        best = Some((*s, *t, v));
                    }
                }
            }
        }
        best
    }
}

pub fn landscape_slice<P: PolicyVector>(
    costfn: impl Fn(&P) -> Option<f64>,
    origin: &P,
    dir1: &P,
    dir2: &P,
    s_range: (f64, f64),
    t_range: (f64, f64),
    resolution: usize,
) -> Result<LandscapeGrid> {
    if resolution < 2 {
        return Err(Error::Refused("landscape resolution must be at least 2".into()));
    }
    let d1 = dir1.to_flat();
    let d2 = dir2.to_flat();
    if d1.len() != d2.len() || d1.len() != origin.to_flat().len() {
        return Err(Error::dim("landscape_slice", "directions shaped like origin", "mismatched lengths"));
    }
    let mut stacked = d1.clone();
    stacked.extend_from_slice(&d2);
    let pair = Mat::from_vec(2, d1.len(), stacked)?;
    if rank(&pair, 1e-12) < 2 {
        return Err(Error::Contract("landscape directions must be linearly independent".into()));
    }
    let s: Vec<f64> = (0..resolution).map(|i| axis_value(s_range.0, s_range.1, i, resolution)).collect();
    let t: Vec<f64> = (0..resolution).map(|i| axis_value(t_range.0, t_range.1, i, resolution)).collect();
    let mut values = Vec::with_capacity(resolution * resolution);
    for &si in &s {
        let row_origin = origin.axpy(si, dir1);
        for &tj in &t {
            values.push(costfn(&row_origin.axpy(tj, dir2)).filter(|v| v.is_finite()));
        }
    }
    Ok(LandscapeGrid { s, t, values })
}
