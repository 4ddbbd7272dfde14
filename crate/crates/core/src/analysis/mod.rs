//! Pair correlation functions, peak analysis and coordination statistics
//! for periodic frames.

pub mod coordination;
pub mod pbc;
pub mod pcf;
pub mod peak;

pub use coordination::{coordination_by_counting, coordination_by_integral, mean_coordination, CoordinationReport};
pub use pbc::{minimum_image, minimum_image_distance, CellList, ImageMode};
pub use pcf::{
    compute_pcf, concentration_weights, pair_counts, total_pcf, PairHistogram, PcfOptions, SpeciesPair,
    DEFAULT_BIN_WIDTH,
};
pub use peak::{find_first_peak, PeakOptions, PeakReport};
