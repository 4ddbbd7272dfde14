//! Conductivity fluctuations → relative dephasing times.
//!
//! The relative change of σ/τ against a defect-free reference stands in for
//! ΔI₀/I₀; the relaxation time cancels in the ratio, so σ/τ values are used
//! directly. Dephasing times follow the normalized form
//! T_φ = T_φ,0 / (1 + N·(Δσ/σ₀)²).

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Listed and recomputed fluctuations further apart than this are reported.
pub const LISTED_MISMATCH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductivityRecord {
    pub label: String,
    /// σ/τ in Ω⁻¹ m⁻¹ s⁻¹.
    pub sigma_over_tau: f64,
    #[serde(rename = "N")]
    pub n_vacancies: u64,
    /// Published Δσ/σ₀ for this row, if any; only used for cross-checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listed_rel_fluct: Option<f64>,
}

impl ConductivityRecord {
    pub fn new(label: &str, sigma_over_tau: f64, n_vacancies: u64) -> Self {
        ConductivityRecord {
            label: label.to_string(),
            sigma_over_tau,
            n_vacancies,
            listed_rel_fluct: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluctSource {
    Computed,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceEstimate {
    pub label: String,
    pub sigma_over_tau: f64,
    #[serde(rename = "N")]
    pub n_vacancies: u64,
    pub rel_fluct: f64,
    pub t_phi_ms: f64,
    pub t_phi0_ms: f64,
    pub source: FluctSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FluctMode {
    /// Every Δσ/σ₀ is recomputed from σ/τ.
    FromSigma,
    /// The listed labels take the given Δσ/σ₀; the rest come from σ/τ.
    FromGivenFluct(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceTable {
    pub rows: Vec<DecoherenceEstimate>,
    pub warnings: Vec<String>,
}

/// (σ − σ₀)/σ₀, signed.
pub fn relative_fluctuation(sigma: f64, sigma0: f64) -> Result<f64> {
    if !(sigma0 > 0.0) || !sigma0.is_finite() {
        return Err(Error::domain(format!(
            "reference conductivity must be positive, got {sigma0}"
        )));
    }
    Ok((sigma - sigma0) / sigma0)
}

/// T_φ,0 / (1 + N·(Δσ/σ₀)²).
pub fn dephasing_time(rel_fluct: f64, n_traps: u64, t_phi0_ms: f64) -> Result<f64> {
    if !(t_phi0_ms > 0.0) || !t_phi0_ms.is_finite() {
        return Err(Error::domain(format!(
            "reference dephasing time must be positive, got {t_phi0_ms}"
        )));
    }
    if !rel_fluct.is_finite() {
        return Err(Error::domain("relative fluctuation must be finite"));
    }
    Ok(t_phi0_ms / (1.0 + n_traps as f64 * rel_fluct * rel_fluct))
}

pub fn build_table(
    records: &[ConductivityRecord],
    reference_label: &str,
    t_phi0_ms: f64,
    mode: &FluctMode,
) -> Result<DecoherenceTable> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.label.as_str()) {
            return Err(Error::arg(format!("duplicate label {:?}", r.label)));
        }
        if !(r.sigma_over_tau > 0.0) || !r.sigma_over_tau.is_finite() {
            return Err(Error::arg(format!("{}: sigma_over_tau must be positive", r.label)));
        }
    }
    let reference = records
        .iter()
        .find(|r| r.label == reference_label)
        .ok_or_else(|| Error::arg(format!("reference {reference_label:?} not among records")))?;
    let sigma0 = reference.sigma_over_tau;

    let overrides = match mode {
        FluctMode::FromSigma => None,
        FluctMode::FromGivenFluct(map) => {
            if let Some(unknown) = map.keys().find(|k| !seen.contains(k.as_str())) {
                return Err(Error::arg(format!("override for unknown label {unknown:?}")));
            }
            Some(map)
        }
    };

    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let computed = relative_fluctuation(r.sigma_over_tau, sigma0)?;
        let (rel, source) = match overrides.and_then(|m| m.get(&r.label)) {
            Some(v) => (*v, FluctSource::Override),
            None => (computed, FluctSource::Computed),
        };
        if source == FluctSource::Override && (computed - rel).abs() > LISTED_MISMATCH_TOLERANCE {
            warnings.push(format!(
                "{}: override {rel:+.3} differs from {computed:+.3} implied by sigma_over_tau",
                r.label
            ));
        }
        if let (FluctSource::Computed, Some(listed)) = (source, r.listed_rel_fluct) {
            if (computed - listed).abs() > LISTED_MISMATCH_TOLERANCE {
                warnings.push(format!(
                    "{}: recomputed {computed:+.3} disagrees with listed {listed:+.3}",
                    r.label
                ));
            }
        }
        rows.push(DecoherenceEstimate {
            label: r.label.clone(),
            sigma_over_tau: r.sigma_over_tau,
            n_vacancies: r.n_vacancies,
            rel_fluct: rel,
            t_phi_ms: dephasing_time(rel, r.n_vacancies, t_phi0_ms)?,
            t_phi0_ms,
            source,
        });
    }
    Ok(DecoherenceTable { rows, warnings })
}

/// Reads `label,sigma_over_tau,N[,listed_rel_fluct]` with a header row;
/// lines starting with `#` are skipped.
pub fn read_records_csv(reader: impl Read) -> Result<Vec<ConductivityRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_records_json(text: &str) -> Result<Vec<ConductivityRecord>> {
    Ok(serde_json::from_str(text)?)
}

/// `label,sigma_over_tau,N,rel_fluct,T_phi_ms` rows mirroring the published
/// table columns.
pub fn table_csv(table: &DecoherenceTable) -> String {
    use std::fmt::Write;
    let mut out = String::from("label,sigma_over_tau,N,rel_fluct,T_phi_ms\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{:.2e},{},{:+.3},{:.4}",
            r.label, r.sigma_over_tau, r.n_vacancies, r.rel_fluct, r.t_phi_ms
        );
    }
    out
}
