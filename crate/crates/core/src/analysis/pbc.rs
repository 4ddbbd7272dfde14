//! Periodic distance geometry and cell-list neighbor search.

use crate::error::{Error, Result};
use crate::structure::{AtomicFrame, Lattice};

/// How periodic images are treated when measuring distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMode {
    /// One image per pair, nearest under the minimum-image convention.
    /// Requires the cutoff to be at most half the smallest slab width.
    #[default]
    MinimumImage,
    /// Every periodic image within the cutoff, including an atom's own
    /// images. Valid for any cutoff.
    Enumerate,
}

/// Minimum-image Cartesian separation for fractional difference `df`,
/// checked over the 27 neighboring cell translations of the wrapped
/// difference. Exact for triclinic cells.
pub fn minimum_image(lattice: &Lattice, df: [f64; 3]) -> [f64; 3] {
    let base = df.map(|x| x - x.round());
    let mut best = [0.0; 3];
    let mut best_d2 = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                let f = [base[0] + i as f64, base[1] + j as f64, base[2] + k as f64];
                let c = lattice.to_cartesian(f);
                let d2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = c;
                }
            }
        }
    }
    best
}

pub fn minimum_image_distance(lattice: &Lattice, a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = minimum_image(lattice, [b[0] - a[0], b[1] - a[1], b[2] - a[2]]);
    (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

pub(crate) fn check_cutoff(lattice: &Lattice, cutoff: f64, mode: ImageMode) -> Result<()> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::arg(format!("cutoff must be positive, got {cutoff}")));
    }
    if mode == ImageMode::MinimumImage {
        let half = 0.5 * lattice.min_width();
        if cutoff > half {
            return Err(Error::Geometry(format!(
                "cutoff {cutoff} Å exceeds half the minimum cell width ({half} Å); use image enumeration"
            )));
        }
    }
    Ok(())
}

/// Spatial binning of a frame into fractional sub-cells no thinner than the
/// cutoff, so every pair within the cutoff lies in adjacent sub-cells.
pub struct CellList<'a> {
    frame: &'a AtomicFrame,
    cutoff: f64,
    mode: ImageMode,
    dims: [usize; 3],
    cells: Vec<Vec<usize>>,
    /// Lattice translations to try per candidate pair in enumeration mode.
    shifts: Vec<[f64; 3]>,
}

impl<'a> CellList<'a> {
    pub fn new(frame: &'a AtomicFrame, cutoff: f64, mode: ImageMode) -> Result<Self> {
        let lattice = frame.lattice();
        check_cutoff(lattice, cutoff, mode)?;
        let widths = lattice.slab_widths();
        let (dims, shifts) = match mode {
            ImageMode::MinimumImage => {
                let dims = widths.map(|w| ((w / cutoff).floor() as usize).max(1));
                (dims, Vec::new())
            }
            ImageMode::Enumerate => {
                // one sub-cell; every image within range is enumerated explicitly
                let reach = widths.map(|w| (cutoff / w).ceil() as i64 + 1);
                let mut shifts = Vec::new();
                for i in -reach[0]..=reach[0] {
                    for j in -reach[1]..=reach[1] {
                        for k in -reach[2]..=reach[2] {
                            shifts.push([i as f64, j as f64, k as f64]);
                        }
                    }
                }
                ([1, 1, 1], shifts)
            }
        };
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (i, p) in frame.positions().iter().enumerate() {
            let c = Self::cell_coord(dims, p);
            cells[Self::flat(dims, c)].push(i);
        }
        Ok(CellList {
            frame,
            cutoff,
            mode,
            dims,
            cells,
            shifts,
        })
    }

    fn cell_coord(dims: [usize; 3], p: &[f64; 3]) -> [usize; 3] {
        std::array::from_fn(|d| ((p[d] * dims[d] as f64) as usize).min(dims[d] - 1))
    }

    fn flat(dims: [usize; 3], c: [usize; 3]) -> usize {
        (c[0] * dims[1] + c[1]) * dims[2] + c[2]
    }

    /// Distinct sub-cells adjacent to (and including) `c`.
    fn neighbor_cells(&self, c: [usize; 3]) -> Vec<usize> {
        let mut out = Vec::with_capacity(27);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                for dk in -1i64..=1 {
                    let n = [
                        (c[0] as i64 + di).rem_euclid(self.dims[0] as i64) as usize,
                        (c[1] as i64 + dj).rem_euclid(self.dims[1] as i64) as usize,
                        (c[2] as i64 + dk).rem_euclid(self.dims[2] as i64) as usize,
                    ];
                    out.push(Self::flat(self.dims, n));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Calls `visit(j, r)` for every neighbor `j` of atom `i` (or periodic
    /// image of `j`) at distance `0 < r <= cutoff`, restricted to atoms
    /// accepted by `filter`.
    pub fn for_each_neighbor(&self, i: usize, filter: impl Fn(usize) -> bool, mut visit: impl FnMut(usize, f64)) {
        let positions = self.frame.positions();
        let lattice = self.frame.lattice();
        let pi = positions[i];
        let c = Self::cell_coord(self.dims, &pi);
        let cut2 = self.cutoff * self.cutoff;
        for cell in self.neighbor_cells(c) {
            for &j in &self.cells[cell] {
                if !filter(j) {
                    continue;
                }
                let pj = positions[j];
                let df = [pj[0] - pi[0], pj[1] - pi[1], pj[2] - pi[2]];
                match self.mode {
                    ImageMode::MinimumImage => {
                        if j == i {
                            continue;
                        }
                        let v = minimum_image(lattice, df);
                        let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                        if d2 <= cut2 {
                            visit(j, d2.sqrt());
                        }
                    }
                    ImageMode::Enumerate => {
                        for s in &self.shifts {
                            let v = lattice.to_cartesian([df[0] + s[0], df[1] + s[1], df[2] + s[2]]);
                            let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                            if d2 > 0.0 && d2 <= cut2 {
                                visit(j, d2.sqrt());
                            }
                        }
                    }
                }
            }
        }
    }
}
