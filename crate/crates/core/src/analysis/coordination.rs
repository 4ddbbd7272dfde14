//! Coordination numbers from the g(r) integral and from direct counting.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::pbc::{CellList, ImageMode};
use super::pcf::{PairHistogram, SpeciesPair};
use crate::error::{Error, Result};
use crate::structure::AtomicFrame;

/// n_ab(R) = 4π ρ_b ∫₀^R g_ab(r) r² dr by the trapezoid rule over the bin
/// centers, anchored at (0, 0) and closed at R by linear interpolation.
pub fn coordination_by_integral(h: &PairHistogram, cutoff: f64) -> Result<f64> {
    if cutoff > h.r_max() + 1e-12 {
        return Err(Error::arg(format!(
            "cutoff {cutoff} Å exceeds histogram range {} Å",
            h.r_max()
        )));
    }
    if cutoff <= 0.0 {
        return Ok(0.0);
    }
    let integrand: Vec<(f64, f64)> = h
        .centers()
        .zip(h.g())
        .map(|(r, g)| (r, 4.0 * PI * h.rho_b() * g * r * r))
        .collect();

    let mut nodes = vec![(0.0, 0.0)];
    nodes.extend(integrand.iter().copied().take_while(|(r, _)| *r < cutoff));
    let k = nodes.len() - 1;
    let end_value = match integrand.get(k) {
        Some(&(r1, f1)) => {
            let (r0, f0) = nodes[k];
            f0 + (f1 - f0) * (cutoff - r0) / (r1 - r0)
        }
        None => nodes[k].1,
    };
    nodes.push((cutoff, end_value));

    Ok(nodes
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationReport {
    pub pair: SpeciesPair,
    pub cutoff: f64,
    /// Indices (into the frame) of the central atoms, in frame order.
    pub centers: Vec<usize>,
    /// Neighbor count for each entry of `centers`.
    pub per_atom_counts: Vec<usize>,
    pub mean: f64,
    /// count → fraction of central atoms with that count.
    pub histogram: BTreeMap<usize, f64>,
}

impl CoordinationReport {
    pub(crate) fn from_counts(pair: SpeciesPair, cutoff: f64, centers: Vec<usize>, counts: Vec<usize>) -> Self {
        let n = counts.len();
        let mean = if n == 0 {
            0.0
        } else {
            counts.iter().sum::<usize>() as f64 / n as f64
        };
        let mut tally: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in &counts {
            *tally.entry(c).or_default() += 1;
        }
        let histogram = tally.into_iter().map(|(k, v)| (k, v as f64 / n as f64)).collect();
        CoordinationReport {
            pair,
            cutoff,
            centers,
            per_atom_counts: counts,
            mean,
            histogram,
        }
    }

    /// `count,fraction` CSV with `#` metadata lines.
    pub fn histogram_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "# pair={}", self.pair);
        let _ = writeln!(out, "# cutoff={:?}", self.cutoff);
        let _ = writeln!(out, "# centers={}", self.centers.len());
        let _ = writeln!(out, "# mean={:.6}", self.mean);
        out.push_str("count,fraction\n");
        for (k, v) in &self.histogram {
            let _ = writeln!(out, "{k},{v:.8}");
        }
        out
    }
}

/// Neighbor counts of every `pair.a` atom within `cutoff`, via a cell list.
pub fn coordination_by_counting(
    frame: &AtomicFrame,
    pair: &SpeciesPair,
    cutoff: f64,
    mode: ImageMode,
) -> Result<CoordinationReport> {
    for s in [&pair.a, &pair.b] {
        if frame.count_of(s) == 0 {
            return Err(Error::arg(format!("species {s} not present in frame")));
        }
    }
    let (centers, counts) = neighbor_counts(frame, &pair.a, &pair.b, cutoff, mode)?;
    Ok(CoordinationReport::from_counts(pair.clone(), cutoff, centers, counts))
}

/// Per-atom counts of `partner` neighbors around each `species` atom.
/// Unlike [`coordination_by_counting`], an absent partner yields zeros.
pub(crate) fn neighbor_counts(
    frame: &AtomicFrame,
    species: &str,
    partner: &str,
    cutoff: f64,
    mode: ImageMode,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let cells = CellList::new(frame, cutoff, mode)?;
    let labels = frame.species();
    let centers = frame.indices_of(species);
    let counts = centers
        .iter()
        .map(|&i| {
            let mut n = 0;
            cells.for_each_neighbor(i, |j| labels[j] == partner, |_, _| n += 1);
            n
        })
        .collect();
    Ok((centers, counts))
}

/// Mean of [`coordination_by_counting`] over frames.
pub fn mean_coordination(frames: &[AtomicFrame], pair: &SpeciesPair, cutoff: f64, mode: ImageMode) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::arg("no frames supplied"));
    }
    let mut total = 0.0;
    for f in frames {
        total += coordination_by_counting(f, pair, cutoff, mode)?.mean;
    }
    Ok(total / frames.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Lattice;

    #[test]
    fn isolated_pair_counts_both_ways() {
        let f = AtomicFrame::from_cartesian(
            Lattice::cubic(20.0).unwrap(),
            vec!["Al".into(), "O".into()],
            &[[1.0, 1.0, 1.0], [3.0, 1.0, 1.0]],
        )
        .unwrap();
        let ab = coordination_by_counting(&f, &SpeciesPair::new("Al", "O"), 2.5, ImageMode::MinimumImage).unwrap();
        let ba = coordination_by_counting(&f, &SpeciesPair::new("O", "Al"), 2.5, ImageMode::MinimumImage).unwrap();
        assert_eq!(ab.per_atom_counts, vec![1]);
        assert_eq!(ba.per_atom_counts, vec![1]);
        assert_eq!(ab.histogram.get(&1), Some(&1.0));
    }

    #[test]
    fn integral_below_first_bin_is_zero() {
        let mut g = vec![0.0; 60];
        g[40] = 10.0;
        let h = PairHistogram::from_values(SpeciesPair::new("X", "X"), 0.05, g, 0.1).unwrap();
        assert_eq!(coordination_by_integral(&h, 1.5).unwrap(), 0.0);
        assert_eq!(coordination_by_integral(&h, 0.0).unwrap(), 0.0);
        assert!(coordination_by_integral(&h, 3.5).is_err());
    }

    #[test]
    fn integral_of_ideal_gas() {
        // g ≡ 1 → (4/3)π R³ ρ; trapezoid error is O(Δr²)
        let rho = 0.08;
        let dr = 0.05;
        let h = PairHistogram::from_values(SpeciesPair::new("X", "X"), dr, vec![1.0; 100], rho).unwrap();
        for cutoff in [1.0f64, 2.525, 4.9] {
            let exact = 4.0 / 3.0 * PI * cutoff.powi(3) * rho;
            let got = coordination_by_integral(&h, cutoff).unwrap();
            // |error| <= 4πρ (Δr²/12) R · 2 with margin for the r=0 anchor segment
            let bound = 4.0 * PI * rho * dr * dr * cutoff / 6.0 + 4.0 * PI * rho * dr.powi(3);
            assert!((got - exact).abs() <= bound, "R={cutoff} got {got} exact {exact}");
        }
    }

    #[test]
    fn histogram_fractions_sum_to_one() {
        let r = CoordinationReport::from_counts(
            SpeciesPair::new("O", "Al"),
            2.6,
            vec![0, 1, 2, 3, 4, 5, 6],
            vec![2, 3, 3, 4, 2, 2, 0],
        );
        let total: f64 = r.histogram.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((r.mean - 16.0 / 7.0).abs() < 1e-15);
        assert!(r.histogram_csv().contains("count,fraction\n0,0.14285714\n"));
    }
}
