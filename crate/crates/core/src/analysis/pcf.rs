//! Partial and total pair correlation functions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pbc::{CellList, ImageMode};
use crate::error::{Error, Result};
use crate::structure::AtomicFrame;

pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

/// Ordered species pair `(a, b)`: `a` is the central species.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpeciesPair {
    pub a: String,
    pub b: String,
}

impl SpeciesPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        SpeciesPair {
            a: a.into(),
            b: b.into(),
        }
    }

    pub fn reversed(&self) -> Self {
        SpeciesPair::new(self.b.clone(), self.a.clone())
    }
}

impl fmt::Display for SpeciesPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

impl FromStr for SpeciesPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split(['-', ',', ':']);
        match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok(SpeciesPair::new(a.trim(), b.trim())),
            _ => Err(Error::arg(format!("expected a species pair like Al-O, got {s:?}"))),
        }
    }
}

/// Binned g_ab(r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairHistogram {
    pair: SpeciesPair,
    bin_width: f64,
    r_max: f64,
    g: Vec<f64>,
    raw_counts: Vec<u64>,
    /// Number density of species a, Å⁻³.
    rho_a: f64,
    /// Number density of species b, Å⁻³.
    rho_b: f64,
    frames_used: usize,
}

pub(crate) fn bin_count(r_max: f64, dr: f64) -> usize {
    // guard against r_max/dr landing a hair above an integer
    let x = r_max / dr;
    let n = x.round();
    if (x - n).abs() < 1e-9 {
        n as usize
    } else {
        x.ceil() as usize
    }
}

impl PairHistogram {
    /// Histogram from precomputed g values (synthetic curves, external
    /// data). Raw counts are left at zero.
    pub fn from_values(pair: SpeciesPair, bin_width: f64, g: Vec<f64>, rho_b: f64) -> Result<Self> {
        if !(bin_width > 0.0) {
            return Err(Error::arg("bin width must be positive"));
        }
        if g.is_empty() {
            return Err(Error::arg("histogram needs at least one bin"));
        }
        if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::arg("g values must be finite and non-negative"));
        }
        let n = g.len();
        Ok(PairHistogram {
            pair,
            bin_width,
            r_max: n as f64 * bin_width,
            raw_counts: vec![0; n],
            g,
            rho_a: rho_b,
            rho_b,
            frames_used: 0,
        })
    }

    pub fn pair(&self) -> &SpeciesPair {
        &self.pair
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn raw_counts(&self) -> &[u64] {
        &self.raw_counts
    }

    pub fn rho_a(&self) -> f64 {
        self.rho_a
    }

    pub fn rho_b(&self) -> f64 {
        self.rho_b
    }

    pub fn frames_used(&self) -> usize {
        self.frames_used
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.g.len()).map(|i| self.bin_center(i))
    }

    /// CSV with `#` metadata lines followed by `r,g` rows.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "# pair={}", self.pair);
        let _ = writeln!(out, "# dr={:?}", self.bin_width);
        let _ = writeln!(out, "# r_max={:?}", self.r_max);
        let _ = writeln!(out, "# frames_used={}", self.frames_used);
        let _ = writeln!(out, "# rho_b={:e}", self.rho_b);
        out.push_str("r,g\n");
        for (r, g) in self.centers().zip(&self.g) {
            let _ = writeln!(out, "{r:.6},{g:.8}");
        }
        out
    }
}

/// Binning options for [`compute_pcf`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcfOptions {
    pub bin_width: f64,
    /// Defaults to half the minimum cell width of the first frame.
    pub r_max: Option<f64>,
    pub mode: ImageMode,
}

impl Default for PcfOptions {
    fn default() -> Self {
        PcfOptions {
            bin_width: DEFAULT_BIN_WIDTH,
            r_max: None,
            mode: ImageMode::MinimumImage,
        }
    }
}

/// Ordered pair counts per shell for one frame: every atom of species `a`
/// is a center, and for `a == b` each unordered pair is seen from both ends.
pub fn pair_counts(
    frame: &AtomicFrame,
    pair: &SpeciesPair,
    bin_width: f64,
    r_max: f64,
    mode: ImageMode,
) -> Result<Vec<u64>> {
    let nbins = bin_count(r_max, bin_width);
    let cells = CellList::new(frame, r_max, mode)?;
    let species = frame.species();
    let mut counts = vec![0u64; nbins];
    for i in frame.indices_of(&pair.a) {
        cells.for_each_neighbor(
            i,
            |j| species[j] == pair.b,
            |_, r| {
                let bin = (r / bin_width) as usize;
                if bin < nbins && r < r_max {
                    counts[bin] += 1;
                }
            },
        );
    }
    Ok(counts)
}

fn require_species(frame: &AtomicFrame, pair: &SpeciesPair) -> Result<()> {
    for s in [&pair.a, &pair.b] {
        if frame.count_of(s) == 0 {
            return Err(Error::arg(format!("species {s} not present in frame")));
        }
    }
    Ok(())
}

/// Frame-averaged g_ab(r) = ⟨n_ab(shell)⟩ / (ρ_b 4π r² Δr), r at bin centers.
///
/// Frames are processed in parallel; integer shell counts are summed before
/// the single floating-point normalization, so the result does not depend on
/// scheduling.
pub fn compute_pcf(frames: &[AtomicFrame], pair: &SpeciesPair, opts: PcfOptions) -> Result<PairHistogram> {
    let first = frames.first().ok_or_else(|| Error::arg("no frames supplied"))?;
    if !(opts.bin_width > 0.0) {
        return Err(Error::arg("bin width must be positive"));
    }
    let r_max = opts.r_max.unwrap_or(0.5 * first.lattice().min_width());
    if !(r_max > 0.0) {
        return Err(Error::arg("r_max must be positive"));
    }
    for f in frames {
        require_species(f, pair)?;
    }

    let per_frame: Vec<Vec<u64>> = frames
        .par_iter()
        .map(|f| pair_counts(f, pair, opts.bin_width, r_max, opts.mode))
        .collect::<Result<_>>()?;
    let nbins = bin_count(r_max, opts.bin_width);
    let raw_counts = per_frame.iter().fold(vec![0u64; nbins], |mut acc, c| {
        for (a, b) in acc.iter_mut().zip(c) {
            *a += b;
        }
        acc
    });

    let nf = frames.len() as f64;
    let n_a = first.count_of(&pair.a) as f64;
    let rho_a = frames
        .iter()
        .map(|f| f.count_of(&pair.a) as f64 / f.lattice().volume())
        .sum::<f64>()
        / nf;
    let rho_b = frames
        .iter()
        .map(|f| f.count_of(&pair.b) as f64 / f.lattice().volume())
        .sum::<f64>()
        / nf;

    let dr = opts.bin_width;
    let g = raw_counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let r = (i as f64 + 0.5) * dr;
            c as f64 / (nf * n_a * rho_b * 4.0 * PI * r * r * dr)
        })
        .collect();

    Ok(PairHistogram {
        pair: pair.clone(),
        bin_width: dr,
        r_max,
        g,
        raw_counts,
        rho_a,
        rho_b,
        frames_used: frames.len(),
    })
}

/// Concentration products c_a·c_b for each pair, from one frame.
pub fn concentration_weights(frame: &AtomicFrame, pairs: &[SpeciesPair]) -> Vec<f64> {
    let n = frame.len() as f64;
    pairs
        .iter()
        .map(|p| frame.count_of(&p.a) as f64 / n * frame.count_of(&p.b) as f64 / n)
        .collect()
}

/// Weighted combination Σ w·g / Σ w of partials sharing one binning.
///
/// With concentration-product weights over all ordered pairs this is the
/// total g(r) about an arbitrary atom, which tends to 1 at large r. The
/// reported `rho_b` is the total number density of the distinct `b` species.
pub fn total_pcf(partials: &[PairHistogram], weights: &[f64]) -> Result<PairHistogram> {
    let first = partials
        .first()
        .ok_or_else(|| Error::arg("no partial histograms supplied"))?;
    if weights.len() != partials.len() {
        return Err(Error::arg(format!(
            "{} weights for {} partials",
            weights.len(),
            partials.len()
        )));
    }
    for p in partials {
        if p.len() != first.len() || p.bin_width != first.bin_width || p.r_max != first.r_max {
            return Err(Error::arg(format!("binning of {} differs from {}", p.pair, first.pair)));
        }
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::arg("weights must be non-negative with a positive sum"));
    }
    let g = (0..first.len())
        .map(|i| partials.iter().zip(weights).map(|(p, w)| w * p.g[i]).sum::<f64>() / wsum)
        .collect();
    let raw_counts = (0..first.len())
        .map(|i| partials.iter().map(|p| p.raw_counts[i]).sum())
        .collect();

    let mut seen = Vec::new();
    let mut rho = 0.0;
    for p in partials {
        if !seen.contains(&&p.pair.b) {
            seen.push(&p.pair.b);
            rho += p.rho_b;
        }
    }
    Ok(PairHistogram {
        pair: SpeciesPair::new("total", "total"),
        bin_width: first.bin_width,
        r_max: first.r_max,
        g,
        raw_counts,
        rho_a: rho,
        rho_b: rho,
        frames_used: first.frames_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Lattice;

    fn two_atoms(d: f64) -> AtomicFrame {
        AtomicFrame::from_cartesian(
            Lattice::cubic(20.0).unwrap(),
            vec!["Al".into(), "O".into()],
            &[[1.0, 1.0, 1.0], [1.0 + d, 1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn pair_parses() {
        let p: SpeciesPair = "Al-O".parse().unwrap();
        assert_eq!(p, SpeciesPair::new("Al", "O"));
        assert!("AlO".parse::<SpeciesPair>().is_err());
        assert_eq!(p.to_string(), "Al-O");
    }

    #[test]
    fn isolated_pair_single_bin() {
        let f = two_atoms(2.01);
        let h = compute_pcf(&[f], &SpeciesPair::new("Al", "O"), PcfOptions::default()).unwrap();
        assert_eq!(h.len(), 200);
        let nonzero: Vec<usize> = (0..h.len()).filter(|&i| h.raw_counts()[i] > 0).collect();
        assert_eq!(nonzero, vec![40]);
        assert_eq!(h.raw_counts()[40], 1);
        assert!((h.bin_center(40) - 2.025).abs() < 1e-12);
    }

    #[test]
    fn wrapped_pair_uses_minimum_image() {
        let f = AtomicFrame::from_cartesian(
            Lattice::cubic(20.0).unwrap(),
            vec!["Al".into(), "O".into()],
            &[[0.5, 10.0, 10.0], [18.49, 10.0, 10.0]],
        )
        .unwrap();
        let h = compute_pcf(&[f], &SpeciesPair::new("Al", "O"), PcfOptions::default()).unwrap();
        assert_eq!(h.raw_counts()[40], 1);
    }

    #[test]
    fn errors() {
        let f = two_atoms(2.0);
        let opts = PcfOptions {
            r_max: Some(11.0),
            ..Default::default()
        };
        assert!(matches!(
            compute_pcf(std::slice::from_ref(&f), &SpeciesPair::new("Al", "O"), opts),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            compute_pcf(&[f], &SpeciesPair::new("Al", "Si"), PcfOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn total_of_single_partial_is_identity() {
        let h = PairHistogram::from_values(SpeciesPair::new("X", "X"), 0.1, vec![0.0, 2.0, 1.0], 0.05).unwrap();
        let t = total_pcf(std::slice::from_ref(&h), &[1.0]).unwrap();
        assert_eq!(t.g(), h.g());
    }

    #[test]
    fn total_of_ones_is_ones() {
        let a = PairHistogram::from_values(SpeciesPair::new("A", "A"), 0.1, vec![1.0; 5], 0.05).unwrap();
        let b = PairHistogram::from_values(SpeciesPair::new("A", "B"), 0.1, vec![1.0; 5], 0.05).unwrap();
        let t = total_pcf(&[a, b], &[0.3, 0.7]).unwrap();
        assert!(t.g().iter().all(|g| (g - 1.0).abs() < 1e-15));
    }

    #[test]
    fn total_rejects_mixed_binning() {
        let a = PairHistogram::from_values(SpeciesPair::new("A", "A"), 0.1, vec![1.0; 5], 0.05).unwrap();
        let b = PairHistogram::from_values(SpeciesPair::new("A", "B"), 0.2, vec![1.0; 5], 0.05).unwrap();
        assert!(matches!(total_pcf(&[a, b], &[0.5, 0.5]), Err(Error::Argument(_))));
    }

    #[test]
    fn csv_layout() {
        let h = PairHistogram::from_values(SpeciesPair::new("Al", "O"), 0.5, vec![0.0, 1.5], 0.05).unwrap();
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# pair=Al-O");
        assert!(lines.contains(&"r,g"));
        assert_eq!(lines.last().unwrap(), &"0.750000,1.50000000");
    }
}
