//! Oxygen-vacancy model construction by coordination-targeted or random
//! removal of atoms.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::coordination::neighbor_counts;
use crate::analysis::ImageMode;
use crate::elements;
use crate::error::{Error, Result};
use crate::structure::{AtomicFrame, Lattice};

/// Al–O bond cutoff used to classify oxygen coordination.
pub const DEFAULT_CLASSIFY_CUTOFF: f64 = 2.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacancyMode {
    /// Remove one atom whose partner count equals `coordination`.
    ByCoordination { coordination: usize },
    /// Remove `count` atoms regardless of environment.
    Random { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancySpec {
    pub target_species: String,
    /// Species counted as neighbors when classifying coordination.
    pub partner: String,
    pub cutoff: f64,
    pub mode: VacancyMode,
    pub seed: u64,
}

impl VacancySpec {
    pub fn random(target: &str, count: usize, seed: u64) -> Self {
        VacancySpec {
            target_species: target.into(),
            partner: "Al".into(),
            cutoff: DEFAULT_CLASSIFY_CUTOFF,
            mode: VacancyMode::Random { count },
            seed,
        }
    }

    pub fn by_coordination(target: &str, coordination: usize, seed: u64) -> Self {
        VacancySpec {
            target_species: target.into(),
            partner: "Al".into(),
            cutoff: DEFAULT_CLASSIFY_CUTOFF,
            mode: VacancyMode::ByCoordination { coordination },
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.mode {
            VacancyMode::Random { count: 0 } => Err(Error::arg("vacancy count must be at least 1")),
            VacancyMode::ByCoordination { coordination: 0 } => {
                Err(Error::arg("target coordination must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancyRecord {
    pub removed_indices: Vec<usize>,
    pub removed_coordinations: Vec<usize>,
    pub resulting_frame: AtomicFrame,
    /// removed / original count of the target species
    pub concentration: f64,
    pub original_target_count: usize,
    pub spec: VacancySpec,
}

/// JSON sidecar written next to a vacancy structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacancySidecar {
    pub target_species: String,
    pub partner: String,
    pub cutoff: f64,
    pub mode: VacancyMode,
    pub seed: u64,
    pub removed_indices: Vec<usize>,
    pub removed_coordinations: Vec<usize>,
    pub original_target_count: usize,
    pub concentration: f64,
    /// Always false: the written geometry is the unrelaxed parent with atoms removed.
    pub relaxed: bool,
}

impl VacancyRecord {
    pub fn sidecar(&self) -> VacancySidecar {
        VacancySidecar {
            target_species: self.spec.target_species.clone(),
            partner: self.spec.partner.clone(),
            cutoff: self.spec.cutoff,
            mode: self.spec.mode.clone(),
            seed: self.spec.seed,
            removed_indices: self.removed_indices.clone(),
            removed_coordinations: self.removed_coordinations.clone(),
            original_target_count: self.original_target_count,
            concentration: self.concentration,
            relaxed: false,
        }
    }
}

/// Minimum image when the cutoff allows it, explicit images otherwise.
pub(crate) fn auto_mode(lattice: &Lattice, cutoff: f64) -> ImageMode {
    if cutoff <= 0.5 * lattice.min_width() {
        ImageMode::MinimumImage
    } else {
        ImageMode::Enumerate
    }
}

/// Partner-neighbor count for each atom of `species`, keyed by atom index.
pub fn classify_coordination(
    frame: &AtomicFrame,
    species: &str,
    partner: &str,
    cutoff: f64,
) -> Result<BTreeMap<usize, usize>> {
    if frame.count_of(species) == 0 {
        return Err(Error::arg(format!("species {species} not present in frame")));
    }
    if elements::atomic_number(partner).is_none() && frame.count_of(partner) == 0 {
        return Err(Error::arg(format!("unknown element {partner}")));
    }
    let (centers, counts) = neighbor_counts(frame, species, partner, cutoff, auto_mode(frame.lattice(), cutoff))?;
    Ok(centers.into_iter().zip(counts).collect())
}

pub fn remove_vacancies(frame: &AtomicFrame, spec: &VacancySpec) -> Result<VacancyRecord> {
    spec.validate()?;
    let coordination = classify_coordination(frame, &spec.target_species, &spec.partner, spec.cutoff)?;
    let original = coordination.len();

    let (eligible, amount): (Vec<usize>, usize) = match spec.mode {
        VacancyMode::Random { count } => {
            if count > original {
                return Err(Error::arg(format!(
                    "cannot remove {count} of {original} {} atoms",
                    spec.target_species
                )));
            }
            (coordination.keys().copied().collect(), count)
        }
        VacancyMode::ByCoordination { coordination: c } => {
            let eligible: Vec<usize> = coordination.iter().filter(|(_, n)| **n == c).map(|(i, _)| *i).collect();
            if eligible.is_empty() {
                return Err(Error::arg(format!("no atom with coordination {c}")));
            }
            (eligible, 1)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut removed: Vec<usize> = rand::seq::index::sample(&mut rng, eligible.len(), amount)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    removed.sort_unstable();
    let removed_coordinations = removed.iter().map(|i| coordination[i]).collect();

    Ok(VacancyRecord {
        resulting_frame: frame.without(&removed),
        concentration: removed.len() as f64 / original as f64,
        removed_indices: removed,
        removed_coordinations,
        original_target_count: original,
        spec: spec.clone(),
    })
}
