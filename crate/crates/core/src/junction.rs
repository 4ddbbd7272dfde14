//! Critical-current 1/f noise model for Josephson junctions.
//!
//! Units are fixed per function (μA, μm², s, eV, Ω, K, GHz); conversions
//! belong at the I/O boundary. `omega_ghz` everywhere is the splitting
//! frequency Ω/2π expressed in GHz.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical 1 Hz noise amplitude for a 1 μA, 1 μm² junction, pA/√Hz.
pub const NOISE_AMPLITUDE_REF_PA: f64 = 144.0;
/// Dephasing-time prefactor in ms at A = 1 μm², Λ = 1, Ω/2π = 1 GHz, T = 4.2 K.
pub const DEPHASING_PREFACTOR_MS: f64 = 15.0;
pub const DEPHASING_REF_TEMPERATURE_K: f64 = 4.2;

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {x}")))
    }
}

/// √S_I0 at 1 Hz in pA/√Hz for critical current `i0_ua` (μA) and junction
/// area `area_um2` (μm²).
pub fn noise_amplitude_at_1hz(i0_ua: f64, area_um2: f64) -> Result<f64> {
    positive("I0", i0_ua)?;
    positive("A", area_um2)?;
    Ok(NOISE_AMPLITUDE_REF_PA * i0_ua / area_um2.sqrt())
}

/// I₀ = πΔ/(2eR_N) in μA for a gap in eV and normal resistance in Ω.
/// A zero gap gives zero current.
pub fn critical_current_from_gap(gap_ev: f64, r_n_ohm: f64) -> Result<f64> {
    if !(gap_ev >= 0.0) || !gap_ev.is_finite() {
        return Err(Error::domain(format!("gap must be non-negative, got {gap_ev}")));
    }
    positive("R_N", r_n_ohm)?;
    // Δ/e in volts equals Δ in eV
    Ok(std::f64::consts::PI * gap_ev / (2.0 * r_n_ohm) * 1e6)
}

/// (1/τ_t + 1/τ_u)⁻¹; both lifetimes must be finite.
pub fn effective_correlation_time(tau_t: f64, tau_u: f64) -> Result<f64> {
    positive("tau_t", tau_t)?;
    positive("tau_u", tau_u)?;
    Ok(1.0 / (1.0 / tau_t + 1.0 / tau_u))
}

/// Critical-current step from one trapped charge blocking area fraction `d`.
pub fn critical_current_step(d: f64, i0_ua: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::domain(format!("blocked fraction must be in [0, 1], got {d}")));
    }
    Ok(d * i0_ua)
}

/// N(ΔI₀)² = nA·D²·I₀² in μA² for trap density `n_per_um2`.
pub fn ensemble_noise_power(n_per_um2: f64, area_um2: f64, d: f64, i0_ua: f64) -> Result<f64> {
    if !(n_per_um2 >= 0.0) {
        return Err(Error::domain(format!(
            "trap density must be non-negative, got {n_per_um2}"
        )));
    }
    positive("A", area_um2)?;
    let step = critical_current_step(d, i0_ua)?;
    Ok(n_per_um2 * area_um2 * step * step)
}

/// Dephasing time in ms: 15·√A/(Λ·Ω)·(T/4.2 K), with A in μm² and Ω/2π in GHz.
pub fn dephasing_time_ms(area_um2: f64, sensitivity: f64, omega_ghz: f64, temperature_k: f64) -> Result<f64> {
    positive("A", area_um2)?;
    positive("Lambda", sensitivity)?;
    positive("Omega", omega_ghz)?;
    positive("T", temperature_k)?;
    Ok(
        DEPHASING_PREFACTOR_MS * area_um2.sqrt() / sensitivity / omega_ghz * temperature_k
            / DEPHASING_REF_TEMPERATURE_K,
    )
}

/// `scale`·I₀/(Ω·Λ·√S_I0): a relative figure of merit for comparing
/// junctions. Only ratios between scores are meaningful.
pub fn relative_coherence_score(
    i0_ua: f64,
    omega_ghz: f64,
    sensitivity: f64,
    amplitude_pa: f64,
    scale: f64,
) -> Result<f64> {
    let denom = omega_ghz * sensitivity * amplitude_pa;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::domain("Omega * Lambda * S^1/2 must be non-zero"));
    }
    Ok(scale * i0_ua / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionParams {
    #[serde(rename = "I0_uA", default, skip_serializing_if = "Option::is_none")]
    pub i0_ua: Option<f64>,
    #[serde(rename = "A_um2")]
    pub area_um2: f64,
    #[serde(rename = "Lambda")]
    pub sensitivity: f64,
    #[serde(rename = "Omega_GHz")]
    pub omega_ghz: f64,
    #[serde(rename = "Delta_eV", default, skip_serializing_if = "Option::is_none")]
    pub gap_ev: Option<f64>,
    #[serde(rename = "R_N_ohm", default, skip_serializing_if = "Option::is_none")]
    pub r_n_ohm: Option<f64>,
    #[serde(rename = "T_K")]
    pub temperature_k: f64,
    /// Proportionality constant for the relative coherence score.
    #[serde(rename = "score_scale", default = "one")]
    pub score_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    pub tau_t_s: f64,
    pub tau_u_s: f64,
    #[serde(rename = "D")]
    pub blocked_fraction: f64,
    pub n_per_um2: f64,
    /// Trap count; derived as round(n·A) when absent.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    #[serde(rename = "I0_uA")]
    pub i0_ua: f64,
    #[serde(rename = "I0_source")]
    pub i0_source: String,
    #[serde(rename = "S_I0_sqrt_1Hz_pA_per_rtHz")]
    pub noise_amplitude_pa: f64,
    #[serde(rename = "t_dephasing_ms")]
    pub dephasing_ms: f64,
    #[serde(rename = "relative_score")]
    pub relative_score: f64,
    #[serde(rename = "tau_eff_s", skip_serializing_if = "Option::is_none")]
    pub tau_eff_s: Option<f64>,
    #[serde(rename = "delta_I0_uA", skip_serializing_if = "Option::is_none")]
    pub delta_i0_ua: Option<f64>,
    #[serde(rename = "N_traps", skip_serializing_if = "Option::is_none")]
    pub trap_count: Option<u64>,
    #[serde(rename = "ensemble_power_uA2", skip_serializing_if = "Option::is_none")]
    pub ensemble_power_ua2: Option<f64>,
    pub warnings: Vec<String>,
}

/// Evaluates the whole noise model for one junction (and optional traps).
/// An explicit `I0_uA` wins over the gap/resistance relation.
pub fn evaluate(junction: &JunctionParams, traps: Option<&TrapParams>) -> Result<NoiseReport> {
    let mut warnings = Vec::new();
    let (i0, source) = match (junction.i0_ua, junction.gap_ev, junction.r_n_ohm) {
        (Some(i0), _, _) => (i0, "given"),
        (None, Some(gap), Some(rn)) => {
            let i0 = critical_current_from_gap(gap, rn)?;
            if i0 == 0.0 {
                warnings.push("zero superconducting gap gives zero critical current".to_string());
            }
            (i0, "gap_relation")
        }
        _ => return Err(Error::arg("need I0_uA or both Delta_eV and R_N_ohm")),
    };
    let amplitude = noise_amplitude_at_1hz(i0, junction.area_um2)?;
    let dephasing = dephasing_time_ms(
        junction.area_um2,
        junction.sensitivity,
        junction.omega_ghz,
        junction.temperature_k,
    )?;
    let score = relative_coherence_score(
        i0,
        junction.omega_ghz,
        junction.sensitivity,
        amplitude,
        junction.score_scale,
    )?;

    let mut report = NoiseReport {
        i0_ua: i0,
        i0_source: source.to_string(),
        noise_amplitude_pa: amplitude,
        dephasing_ms: dephasing,
        relative_score: score,
        tau_eff_s: None,
        delta_i0_ua: None,
        trap_count: None,
        ensemble_power_ua2: None,
        warnings,
    };
    if let Some(t) = traps {
        report.tau_eff_s = Some(effective_correlation_time(t.tau_t_s, t.tau_u_s)?);
        report.delta_i0_ua = Some(critical_current_step(t.blocked_fraction, i0)?);
        let derived = (t.n_per_um2 * junction.area_um2).round() as u64;
        if let Some(n) = t.count.filter(|n| *n != derived) {
            report
                .warnings
                .push(format!("N = {n} differs from round(n*A) = {derived}"));
        }
        report.trap_count = Some(t.count.unwrap_or(derived));
        report.ensemble_power_ua2 = Some(ensemble_noise_power(
            t.n_per_um2,
            junction.area_um2,
            t.blocked_fraction,
            i0,
        )?);
    }
    Ok(report)
}
