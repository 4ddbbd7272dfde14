//! First-peak location, HWHM and first-minimum detection on g(r).

use serde::{Deserialize, Serialize};

use super::pcf::PairHistogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub r_peak: f64,
    pub hwhm: f64,
    pub r_first_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    /// A local maximum counts as a peak only if it reaches this fraction
    /// of the global maximum of g.
    pub min_height_fraction: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions {
            min_height_fraction: 0.25,
        }
    }
}

/// 3-bin moving average; end bins average over the neighbors they have.
fn smooth3(g: &[f64]) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(g.len() - 1);
            g[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

pub fn find_first_peak(h: &PairHistogram, opts: PeakOptions) -> Result<PeakReport> {
    let g = h.g();
    let n = g.len();
    let dr = h.bin_width();
    let gmax = g.iter().copied().fold(0.0, f64::max);
    if n < 3 || gmax <= 0.0 {
        return Err(Error::Analysis("histogram has no peak".into()));
    }
    let threshold = opts.min_height_fraction * gmax;

    // first bin at or above threshold that does not rise further
    let mut peak = None;
    for i in 1..n - 1 {
        if g[i] >= threshold && g[i] >= g[i - 1] && g[i] >= g[i + 1] {
            let mut j = i;
            while j + 1 < n - 1 && g[j + 1] > g[j] {
                j += 1;
            }
            peak = Some(j);
            break;
        }
    }
    let p = peak.ok_or_else(|| Error::Analysis("histogram is monotone; no interior peak".into()))?;

    let denom = g[p - 1] - 2.0 * g[p] + g[p + 1];
    let offset = if denom < 0.0 {
        (0.5 * (g[p - 1] - g[p + 1]) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let r_peak = h.bin_center(p) + offset * dr;

    let baseline = g[..p].iter().copied().fold(f64::INFINITY, f64::min);
    let half = baseline + 0.5 * (g[p] - baseline);
    let crossing = |a: usize, b: usize| {
        // linear interpolation between bin centers a (below half) and b (above)
        let t = (half - g[a]) / (g[b] - g[a]);
        h.bin_center(a) + t * (h.bin_center(b) - h.bin_center(a))
    };
    let left = (0..p).rev().find(|&i| g[i] < half).map(|i| r_peak - crossing(i, i + 1));
    let right = (p + 1..n).find(|&i| g[i] < half).map(|i| crossing(i, i - 1) - r_peak);
    let hwhm = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (l + r),
        (Some(w), None) | (None, Some(w)) => w,
        (None, None) => return Err(Error::Analysis("peak never falls to half maximum".into())),
    };

    let s = smooth3(g);
    let min_bin = (p + 1..n - 1)
        .find(|&j| s[j] < s[j - 1] && s[j] <= s[j + 1])
        .unwrap_or(n - 1);
    let r_first_min = h.bin_center(min_bin).max(r_peak + 0.5 * dr).min(h.r_max());

    Ok(PeakReport {
        r_peak,
        hwhm,
        r_first_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::pcf::SpeciesPair;

    fn hist(f: impl Fn(f64) -> f64, dr: f64, r_max: f64) -> PairHistogram {
        let n = (r_max / dr).round() as usize;
        let g = (0..n).map(|i| f((i as f64 + 0.5) * dr)).collect();
        PairHistogram::from_values(SpeciesPair::new("Al", "O"), dr, g, 0.07).unwrap()
    }

    fn gauss(r: f64, mu: f64, sigma: f64) -> f64 {
        (-(r - mu).powi(2) / (2.0 * sigma * sigma)).exp()
    }

    #[test]
    fn gaussian_bump_on_baseline() {
        let dr = 0.01;
        let h = hist(|r| 0.2 + 3.0 * gauss(r, 1.81, 0.085), dr, 4.0);
        let rep = find_first_peak(&h, PeakOptions::default()).unwrap();
        assert!((rep.r_peak - 1.81).abs() <= dr, "{rep:?}");
        assert!((rep.hwhm - 0.10).abs() <= dr, "{rep:?}");
        assert!(rep.r_peak < rep.r_first_min && rep.r_first_min <= h.r_max());
    }

    #[test]
    fn single_bin_spike() {
        let mut g = vec![0.0; 40];
        g[17] = 5.0;
        let h = PairHistogram::from_values(SpeciesPair::new("X", "X"), 0.05, g, 0.1).unwrap();
        let rep = find_first_peak(&h, PeakOptions::default()).unwrap();
        assert_eq!(rep.r_peak, h.bin_center(17));
        assert!(rep.hwhm <= 0.05);
    }

    #[test]
    fn two_gaussians_first_is_reported() {
        let h = hist(|r| 2.0 * gauss(r, 2.5, 0.15) + 3.0 * gauss(r, 4.0, 0.2), 0.02, 6.0);
        let rep = find_first_peak(&h, PeakOptions::default()).unwrap();
        assert!((rep.r_peak - 2.5).abs() <= 0.02);
        assert!(rep.r_first_min > 2.5 && rep.r_first_min < 4.0, "{rep:?}");
    }

    #[test]
    fn monotone_is_error() {
        let h = hist(|r| r, 0.1, 3.0);
        assert!(matches!(
            find_first_peak(&h, PeakOptions::default()),
            Err(Error::Analysis(_))
        ));
        let flat = hist(|_| 0.0, 0.1, 3.0);
        assert!(find_first_peak(&flat, PeakOptions::default()).is_err());
    }
}
