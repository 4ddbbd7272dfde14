//! Two-state random telegraph signals, segment-averaged spectra and the
//! 1/f spectrum that emerges from many superposed traps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::junction::effective_correlation_time;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelegraphProcess {
    /// Mean dwell in the high (occupied) state, s.
    pub tau_t: f64,
    /// Mean dwell in the low (unoccupied) state, s.
    pub tau_u: f64,
    /// Step height, μA.
    pub amplitude: f64,
    pub seed: u64,
}

impl TelegraphProcess {
    pub fn tau_eff(&self) -> Result<f64> {
        effective_correlation_time(self.tau_t, self.tau_u)
    }

    /// Stationary probability of the high state.
    pub fn occupancy(&self) -> f64 {
        self.tau_t / (self.tau_t + self.tau_u)
    }

    /// One-sided Lorentzian 4ΔI²p(1−p)τ_eff / (1 + (2πfτ_eff)²) in μA²/Hz.
    pub fn analytic_psd(&self, f: f64) -> f64 {
        let tau = 1.0 / (1.0 / self.tau_t + 1.0 / self.tau_u);
        let p = self.occupancy();
        let w = 2.0 * PI * f * tau;
        4.0 * self.amplitude * self.amplitude * p * (1.0 - p) * tau / (1.0 + w * w)
    }
}

/// Warning text when `dt` is too coarse to resolve the process.
pub fn sampling_warning(p: &TelegraphProcess, dt: f64) -> Option<String> {
    let tau = p.tau_eff().ok()?;
    (dt > tau / 10.0).then(|| format!("dt = {dt} s exceeds tau_eff/10 = {} s", tau / 10.0))
}

fn validate(p: &TelegraphProcess, dt: f64, n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::arg("n_samples must be positive"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    p.tau_eff()?;
    Ok(())
}

/// Visits the state (true = high) at each sample time `k·dt`. Dwell times
/// are exponential and the initial state is drawn from the stationary
/// distribution, so the sampled series is stationary from the first sample.
fn walk_states(p: &TelegraphProcess, dt: f64, n_samples: usize, mut visit: impl FnMut(usize, bool)) {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let high = Exp::new(1.0 / p.tau_t).expect("positive rate");
    let low = Exp::new(1.0 / p.tau_u).expect("positive rate");
    let mut state = rng.random::<f64>() < p.occupancy();
    let mut next_switch = if state {
        high.sample(&mut rng)
    } else {
        low.sample(&mut rng)
    };
    for k in 0..n_samples {
        let t = k as f64 * dt;
        while next_switch <= t {
            state = !state;
            next_switch += if state {
                high.sample(&mut rng)
            } else {
                low.sample(&mut rng)
            };
        }
        visit(k, state);
    }
}

/// Samples a telegraph signal taking values {0, ΔI}.
pub fn simulate_rts(p: &TelegraphProcess, dt: f64, n_samples: usize) -> Result<Vec<f64>> {
    validate(p, dt, n_samples)?;
    let mut out = vec![0.0; n_samples];
    walk_states(p, dt, n_samples, |k, high| {
        if high {
            out[k] = p.amplitude;
        }
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// Hz, from 0 to the Nyquist frequency.
    pub freqs: Vec<f64>,
    /// One-sided PSD, μA²/Hz (units² of the series per Hz).
    pub psd: Vec<f64>,
    pub segments_averaged: usize,
}

impl SpectrumEstimate {
    pub fn df(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// ∫ psd df as a Riemann sum over bins.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.df()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("f_hz,psd\n");
        for (f, s) in self.freqs.iter().zip(&self.psd) {
            out.push_str(&format!("{f:.9e},{s:.9e}\n"));
        }
        out
    }
}

/// Segment-averaged periodogram (Bartlett): the series is cut into
/// non-overlapping, unwindowed segments of `segment_len` samples; trailing
/// samples that do not fill a segment are dropped. With this normalization
/// the integrated PSD equals the mean square of the samples used.
pub fn estimate_psd(series: &[f64], dt: f64, segment_len: usize) -> Result<SpectrumEstimate> {
    if segment_len < 2 {
        return Err(Error::arg("segment length must be at least 2"));
    }
    if segment_len > series.len() {
        return Err(Error::arg(format!(
            "segment length {segment_len} exceeds series length {}",
            series.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::arg("dt must be positive"));
    }
    let n = segment_len;
    let nseg = series.len() / n;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let half = n / 2;
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for seg in series.chunks_exact(n) {
        for (b, x) in buf.iter_mut().zip(seg) {
            *b = Complex::new(*x, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
    }
    let fs = 1.0 / dt;
    let scale = 1.0 / (fs * n as f64 * nseg as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            // interior bins carry their negative-frequency twin
            let twin = if k == 0 || (n.is_multiple_of(2) && k == half) {
                1.0
            } else {
                2.0
            };
            twin * a * scale
        })
        .collect();
    let freqs = (0..=half).map(|k| k as f64 * fs / n as f64).collect();
    Ok(SpectrumEstimate {
        freqs,
        psd,
        segments_averaged: nseg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub tau_fit: f64,
    /// Low-frequency plateau S₀ in μA²/Hz.
    pub s0: f64,
    /// ‖S − fit‖ / ‖S‖ over the fitted bins.
    pub relative_residual: f64,
    pub tau_eff_expected: f64,
    pub f_max: f64,
    pub bins_used: usize,
}

/// Weighted least squares fit of S(f) = S₀ / (1 + (2πfτ)²) over
/// 0 < f < 5/τ_eff, linearized as 1/S = 1/S₀ + (2πτ)²/S₀ · f² with
/// weights S² so residuals are relative.
pub fn rts_lorentzian_check(p: &TelegraphProcess, spectrum: &SpectrumEstimate) -> Result<LorentzianFit> {
    let tau_eff = p.tau_eff()?;
    let f_max = 5.0 / tau_eff;
    let pts: Vec<(f64, f64)> = spectrum
        .freqs
        .iter()
        .zip(&spectrum.psd)
        .filter(|(f, _)| **f > 0.0 && **f < f_max)
        .map(|(f, s)| (*f, *s))
        .collect();
    if pts.iter().all(|(_, s)| *s <= 0.0) {
        return Err(Error::Analysis("spectrum is identically zero in the fit band".into()));
    }
    let (mut sw, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(f, s) in pts.iter().filter(|(_, s)| *s > 0.0) {
        let (x, y, w) = (f * f, 1.0 / s, s * s);
        sw += w;
        swx += w * x;
        swxx += w * x * x;
        swy += w * y;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if !(det.abs() > 1e-12 * sw * swxx) {
        return Err(Error::Analysis("singular normal equations in Lorentzian fit".into()));
    }
    let intercept = (swxx * swy - swx * swxy) / det;
    let slope = (sw * swxy - swx * swy) / det;
    if !(intercept > 0.0 && slope > 0.0) {
        return Err(Error::Analysis(format!(
            "fit is not Lorentzian (intercept {intercept:e}, slope {slope:e})"
        )));
    }
    let s0 = 1.0 / intercept;
    let tau_fit = (slope / intercept).sqrt() / (2.0 * PI);
    let (mut num, mut den) = (0.0, 0.0);
    for &(f, s) in &pts {
        let w = 2.0 * PI * f * tau_fit;
        let model = s0 / (1.0 + w * w);
        num += (s - model).powi(2);
        den += s * s;
    }
    Ok(LorentzianFit {
        tau_fit,
        s0,
        relative_residual: (num / den).sqrt(),
        tau_eff_expected: tau_eff,
        f_max,
        bins_used: pts.len(),
    })
}

/// Averages `values` over logarithmically spaced frequency bins within
/// [f_lo, f_hi]; returns (geometric mean frequency, mean value) per
/// non-empty bin.
pub fn log_bin(freqs: &[f64], values: &[f64], f_lo: f64, f_hi: f64, bins_per_decade: usize) -> Vec<(f64, f64)> {
    let decades = (f_hi / f_lo).log10();
    let nbins = ((decades * bins_per_decade as f64).ceil() as usize).max(1);
    let mut sum_logf = vec![0.0; nbins];
    let mut sum_v = vec![0.0; nbins];
    let mut count = vec![0usize; nbins];
    for (&f, &v) in freqs.iter().zip(values) {
        if f < f_lo || f > f_hi || f <= 0.0 {
            continue;
        }
        let b = (((f / f_lo).log10() / decades * nbins as f64) as usize).min(nbins - 1);
        sum_logf[b] += f.ln();
        sum_v[b] += v;
        count[b] += 1;
    }
    (0..nbins)
        .filter(|&b| count[b] > 0)
        .map(|b| ((sum_logf[b] / count[b] as f64).exp(), sum_v[b] / count[b] as f64))
        .collect()
}

/// Least-squares slope of log10(psd) against log10(f) over [f_lo, f_hi],
/// after averaging into 10 log-spaced bins per decade.
pub fn log_log_slope(spectrum: &SpectrumEstimate, f_lo: f64, f_hi: f64) -> Result<f64> {
    let pts = log_bin(&spectrum.freqs, &spectrum.psd, f_lo, f_hi, 10);
    let pts: Vec<(f64, f64)> = pts
        .into_iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(f, v)| (f.log10(), v.log10()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Analysis(format!(
            "too few spectral points in [{f_lo}, {f_hi}] Hz for a slope"
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Corner frequency 1/(2πτ) of a Lorentzian with correlation time τ.
pub fn corner_frequency(tau: f64) -> f64 {
    1.0 / (2.0 * PI * tau)
}

/// Band lying a decade inside the corners of the slowest and fastest
/// traps, where a log-uniform ensemble is 1/f-like. `None` when the
/// lifetime range is too narrow to leave such a band.
pub fn interior_band(tau_min: f64, tau_max: f64) -> Option<(f64, f64)> {
    let lo = 10.0 * corner_frequency(tau_max);
    let hi = 0.1 * corner_frequency(tau_min);
    (tau_min > 0.0 && hi > lo).then_some((lo, hi))
}

/// RMS of (measured − predicted)/predicted over log-spaced bins (10 per
/// decade) within [f_lo, f_hi].
pub fn relative_rms_deviation(freqs: &[f64], measured: &[f64], predicted: &[f64], f_lo: f64, f_hi: f64) -> Result<f64> {
    let m = log_bin(freqs, measured, f_lo, f_hi, 10);
    let p = log_bin(freqs, predicted, f_lo, f_hi, 10);
    if m.is_empty() || p.iter().any(|(_, v)| *v <= 0.0) {
        return Err(Error::Analysis(format!(
            "no comparable spectral bins in [{f_lo}, {f_hi}] Hz"
        )));
    }
    let ss: f64 = m.iter().zip(&p).map(|(a, b)| ((a.1 - b.1) / b.1).powi(2)).sum();
    Ok((ss / m.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub count: usize,
    /// Bounds of the log-uniform distribution of trap correlation times, s.
    pub tau_min: f64,
    pub tau_max: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub dt: f64,
    pub n_samples: usize,
    pub segment_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub spectrum: SpectrumEstimate,
    /// Member processes (symmetric traps, τ_t = τ_u = 2τ_eff).
    pub traps: Vec<TelegraphProcess>,
    /// Σ of member Lorentzians at `spectrum.freqs`.
    pub analytic: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EnsembleResult {
    /// `f_hz,psd,analytic` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f_hz,psd,analytic\n");
        for ((f, s), a) in self.spectrum.freqs.iter().zip(&self.spectrum.psd).zip(&self.analytic) {
            out.push_str(&format!("{f:.9e},{s:.9e},{a:.9e}\n"));
        }
        out
    }
}

/// Log-uniform correlation times, one per trap. Trap `i` draws its log-τ
/// uniformly within the i-th of `count` equal strata of [ln τ_min, ln τ_max]
/// (stratified sampling: the marginal is still log-uniform, but the sample
/// covers the range evenly).
pub fn sample_lifetimes(count: usize, tau_min: f64, tau_max: f64, master_seed: u64) -> Result<Vec<f64>> {
    if !(tau_min > 0.0) {
        return Err(Error::domain(format!("tau_min must be positive, got {tau_min}")));
    }
    if !(tau_max >= tau_min) || !tau_max.is_finite() {
        return Err(Error::domain("tau_max must be finite and at least tau_min"));
    }
    let (lo, hi) = (tau_min.ln(), tau_max.ln());
    Ok((0..count)
        .map(|i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed::derive(master_seed, seed::stream::RTS_TRAP_LIFETIME, i as u64));
            let u: f64 = rng.random();
            (lo + (hi - lo) * (i as f64 + u) / count as f64).exp()
        })
        .collect())
}

/// Sums independent symmetric telegraph processes with log-uniform
/// correlation times and estimates the spectrum of the sum.
///
/// Per-sample high-state counts are accumulated as integers, so the summed
/// series is independent of the parallel schedule.
pub fn superpose_ensemble(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    if spec.count == 0 {
        return Err(Error::arg("trap count must be positive"));
    }
    let taus = sample_lifetimes(spec.count, spec.tau_min, spec.tau_max, spec.seed)?;
    let traps: Vec<TelegraphProcess> = taus
        .iter()
        .enumerate()
        .map(|(i, &tau)| TelegraphProcess {
            tau_t: 2.0 * tau,
            tau_u: 2.0 * tau,
            amplitude: spec.amplitude,
            seed: seed::derive(spec.seed, seed::stream::RTS_TRAP_SERIES, i as u64),
        })
        .collect();
    for t in &traps {
        validate(t, spec.dt, spec.n_samples)?;
    }
    let mut warnings = Vec::new();
    let too_fast = traps.iter().filter(|t| sampling_warning(t, spec.dt).is_some()).count();
    if too_fast > 0 {
        warnings.push(format!(
            "{too_fast} of {} traps have tau_eff < 10 dt; their spectra are aliased",
            traps.len()
        ));
    }
    if spec.tau_max / spec.tau_min < 1e3 {
        warnings.push("tau_max/tau_min < 1e3: the 1/f band will be narrow".into());
    }
    if spec.count < 50 {
        warnings.push(format!("{} traps is below 50; expect a lumpy spectrum", spec.count));
    }

    let n = spec.n_samples;
    let counts = traps
        .par_iter()
        .fold(
            || vec![0u32; n],
            |mut acc, t| {
                walk_states(t, spec.dt, n, |k, high| acc[k] += high as u32);
                acc
            },
        )
        .reduce(
            || vec![0u32; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    let series: Vec<f64> = counts.iter().map(|&c| c as f64 * spec.amplitude).collect();
    let spectrum = estimate_psd(&series, spec.dt, spec.segment_len)?;
    let analytic = spectrum
        .freqs
        .iter()
        .map(|&f| traps.iter().map(|t| t.analytic_psd(f)).sum())
        .collect();
    Ok(EnsembleResult {
        spectrum,
        traps,
        analytic,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proc(tau_t: f64, tau_u: f64, seed: u64) -> TelegraphProcess {
        TelegraphProcess {
            tau_t,
            tau_u,
            amplitude: 1.0,
            seed,
        }
    }

    #[test]
    fn two_valued_and_deterministic() {
        let p = proc(0.3, 0.1, 9);
        let a = simulate_rts(&p, 0.01, 5000).unwrap();
        assert!(a.iter().all(|&x| x == 0.0 || x == 1.0));
        assert_eq!(a, simulate_rts(&p, 0.01, 5000).unwrap());
        assert_ne!(a, simulate_rts(&proc(0.3, 0.1, 10), 0.01, 5000).unwrap());
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let p = TelegraphProcess {
            amplitude: 0.0,
            ..proc(1.0, 1.0, 1)
        };
        assert!(simulate_rts(&p, 0.01, 1000).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn argument_errors() {
        assert!(simulate_rts(&proc(1.0, 1.0, 1), 0.01, 0).is_err());
        assert!(simulate_rts(&proc(0.0, 1.0, 1), 0.01, 10).is_err());
        assert!(estimate_psd(&[1.0; 8], 1.0, 16).is_err());
        assert!(sample_lifetimes(10, 0.0, 1.0, 1).is_err());
        assert!(sampling_warning(&proc(1.0, 1.0, 1), 0.1).is_some());
        assert!(sampling_warning(&proc(1.0, 1.0, 1), 0.01).is_none());
    }

    #[test]
    fn constant_series_all_dc() {
        let s = estimate_psd(&[3.0; 256], 0.5, 64).unwrap();
        assert_eq!(s.segments_averaged, 4);
        assert!((s.psd[0] * s.df() - 9.0).abs() < 1e-12);
        assert!(s.psd[1..].iter().all(|&p| p < 1e-20));
    }

    #[test]
    fn stratified_lifetimes_cover_range() {
        let taus = sample_lifetimes(100, 0.01, 100.0, 5).unwrap();
        for (i, t) in taus.iter().enumerate() {
            let x = (t.ln() - 0.01f64.ln()) / (100f64.ln() - 0.01f64.ln());
            assert!(x >= i as f64 / 100.0 && x <= (i + 1) as f64 / 100.0);
        }
    }

    #[test]
    fn zero_spectrum_fit_fails() {
        let p = TelegraphProcess {
            amplitude: 0.0,
            ..proc(1.0, 1.0, 1)
        };
        let s = estimate_psd(&simulate_rts(&p, 0.01, 4096).unwrap(), 0.01, 1024).unwrap();
        assert!(matches!(rts_lorentzian_check(&p, &s), Err(Error::Analysis(_))));
    }
}
