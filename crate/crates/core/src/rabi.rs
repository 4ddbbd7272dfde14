//! Damped Rabi oscillations and their decay envelopes.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RABI_MHZ: f64 = 2.0;
pub const DEFAULT_WINDOW_US: f64 = 200.0;
pub const DEFAULT_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiParams {
    /// Ω_R/2π in MHz.
    pub rabi_freq_mhz: f64,
    pub t2_ms: f64,
    pub t_max_us: f64,
    pub n_points: usize,
}

impl RabiParams {
    pub fn new(t2_ms: f64) -> Self {
        RabiParams {
            rabi_freq_mhz: DEFAULT_RABI_MHZ,
            t2_ms,
            t_max_us: DEFAULT_WINDOW_US,
            n_points: DEFAULT_POINTS,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rabi frequency", self.rabi_freq_mhz),
            ("T2", self.t2_ms),
            ("t_max", self.t_max_us),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_points < 2 {
            return Err(Error::arg("need at least 2 time points"));
        }
        Ok(())
    }

    /// Uniform grid over [0, t_max] in μs, both ends included.
    pub fn times_us(&self) -> Vec<f64> {
        let step = self.t_max_us / (self.n_points - 1) as f64;
        (0..self.n_points).map(|k| k as f64 * step).collect()
    }
}

fn decay(t_us: f64, t2_ms: f64) -> f64 {
    (-t_us / (t2_ms * 1e3)).exp()
}

/// P_ex(t) = ½[1 − e^{−t/T₂} cos(Ω_R t)].
pub fn excited_probability(t_us: f64, rabi_freq_mhz: f64, t2_ms: f64) -> f64 {
    // MHz × μs is dimensionless
    0.5 * (1.0 - decay(t_us, t2_ms) * (2.0 * PI * rabi_freq_mhz * t_us).cos())
}

/// Upper and lower envelopes ½[1 ± e^{−t/T₂}].
pub fn envelope_at(t_us: f64, t2_ms: f64) -> (f64, f64) {
    let e = decay(t_us, t2_ms);
    (0.5 * (1.0 + e), 0.5 * (1.0 - e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiCurve {
    pub t_us: Vec<f64>,
    pub p_ex: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub t_us: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

pub fn rabi_curve(p: &RabiParams) -> Result<RabiCurve> {
    p.validate()?;
    let t_us = p.times_us();
    let p_ex = t_us
        .iter()
        .map(|&t| excited_probability(t, p.rabi_freq_mhz, p.t2_ms))
        .collect();
    Ok(RabiCurve { t_us, p_ex })
}

pub fn rabi_envelope(p: &RabiParams) -> Result<Envelope> {
    p.validate()?;
    let t_us = p.times_us();
    let (upper, lower) = t_us.iter().map(|&t| envelope_at(t, p.t2_ms)).unzip();
    Ok(Envelope { t_us, upper, lower })
}

impl RabiCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_us,P_ex\n");
        for (t, p) in self.t_us.iter().zip(&self.p_ex) {
            out.push_str(&format!("{t:.6},{p:.12}\n"));
        }
        out
    }
}

impl Envelope {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_us,upper,lower\n");
        for ((t, u), l) in self.t_us.iter().zip(&self.upper).zip(&self.lower) {
            out.push_str(&format!("{t:.6},{u:.12},{l:.12}\n"));
        }
        out
    }
}

/// Envelopes for several labelled T₂ values on one shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub t_us: Vec<f64>,
    pub columns: Vec<(String, f64, Envelope)>,
}

/// One envelope pair per `(label, T₂ in ms)`; `base.t2_ms` is ignored.
pub fn envelope_batch(models: &[(String, f64)], base: &RabiParams) -> Result<EnvelopeTable> {
    let mut seen = HashSet::new();
    for (label, _) in models {
        if !seen.insert(label.as_str()) {
            return Err(Error::arg(format!("duplicate label {label:?}")));
        }
    }
    if models.is_empty() {
        return Ok(EnvelopeTable {
            t_us: Vec::new(),
            columns: Vec::new(),
        });
    }
    let columns = models
        .iter()
        .map(|(label, t2)| {
            let p = RabiParams {
                t2_ms: *t2,
                ..base.clone()
            };
            rabi_envelope(&p).map(|e| (label.clone(), *t2, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvelopeTable {
        t_us: columns[0].2.t_us.clone(),
        columns,
    })
}

impl EnvelopeTable {
    /// `t_us` then `<label>_upper,<label>_lower` for each model.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_us");
        for (label, _, _) in &self.columns {
            out.push_str(&format!(",{label}_upper,{label}_lower"));
        }
        out.push('\n');
        for (k, t) in self.t_us.iter().enumerate() {
            out.push_str(&format!("{t:.6}"));
            for (_, _, e) in &self.columns {
                out.push_str(&format!(",{:.12},{:.12}", e.upper[k], e.lower[k]));
            }
            out.push('\n');
        }
        out
    }
}
