//! Canonical in-memory model for periodic atomic configurations.
//!
//! Positions are stored as fractional coordinates wrapped into `[0, 1)`;
//! Cartesian coordinates are derived on demand from the lattice.

mod extxyz;
mod poscar;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, RowVector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use extxyz::{parse_extxyz, parse_extxyz_multi, write_extxyz, write_extxyz_multi};
pub(crate) use poscar::parse_poscar_prefix;
pub use poscar::{parse_poscar, parse_xdatcar, write_poscar, write_xdatcar};

/// grams per atomic mass unit
pub const AMU_IN_GRAMS: f64 = 1.660_539_066_60e-24;
const CUBIC_ANGSTROM_IN_CM3: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureFormat {
    Poscar,
    Extxyz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryFormat {
    Xdatcar,
    ExtxyzMulti,
}

/// Periodic cell; rows are the cell vectors a, b, c in Å.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    vectors: [[f64; 3]; 3],
}

impl Lattice {
    pub fn new(vectors: [[f64; 3]; 3]) -> Result<Self> {
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Geometry("non-finite lattice component".into()));
        }
        let lat = Lattice { vectors };
        let vol = lat.matrix().determinant();
        if !(vol > 0.0) {
            return Err(Error::Geometry(format!(
                "lattice volume must be positive (determinant {vol})"
            )));
        }
        Ok(lat)
    }

    pub fn cubic(a: f64) -> Result<Self> {
        Self::new([[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]])
    }

    pub fn vectors(&self) -> &[[f64; 3]; 3] {
        &self.vectors
    }

    pub(crate) fn matrix(&self) -> Matrix3<f64> {
        let v = &self.vectors;
        Matrix3::new(
            v[0][0], v[0][1], v[0][2], v[1][0], v[1][1], v[1][2], v[2][0], v[2][1], v[2][2],
        )
    }

    /// Cell volume in Å³.
    pub fn volume(&self) -> f64 {
        self.matrix().determinant()
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.vectors.map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
    }

    /// Perpendicular distances between opposite cell faces.
    pub fn slab_widths(&self) -> [f64; 3] {
        let [a, b, c] = self.vectors.map(RowVector3::from);
        let vol = self.volume();
        [
            vol / b.cross(&c).norm(),
            vol / c.cross(&a).norm(),
            vol / a.cross(&b).norm(),
        ]
    }

    pub fn min_width(&self) -> f64 {
        self.slab_widths().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn to_cartesian(&self, frac: [f64; 3]) -> [f64; 3] {
        let v = &self.vectors;
        std::array::from_fn(|k| frac[0] * v[0][k] + frac[1] * v[1][k] + frac[2] * v[2][k])
    }

    pub fn to_fractional(&self, cart: [f64; 3]) -> [f64; 3] {
        // invertible by construction (positive determinant)
        let inv = self.matrix().try_inverse().expect("lattice is non-singular");
        let f = RowVector3::new(cart[0], cart[1], cart[2]) * inv;
        [f[0], f[1], f[2]]
    }
}

pub(crate) fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// One snapshot of a periodic structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicFrame {
    lattice: Lattice,
    species: Vec<String>,
    positions: Vec<[f64; 3]>,
    pub frame_index: usize,
}

impl AtomicFrame {
    /// Builds a frame from fractional coordinates, wrapping them into `[0, 1)`.
    pub fn new(lattice: Lattice, species: Vec<String>, positions: Vec<[f64; 3]>) -> Result<Self> {
        if species.len() != positions.len() {
            return Err(Error::arg(format!(
                "{} species labels for {} positions",
                species.len(),
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Geometry("non-finite coordinate".into()));
        }
        let positions = positions.into_iter().map(|p| p.map(wrap_unit)).collect();
        Ok(AtomicFrame {
            lattice,
            species,
            positions,
            frame_index: 0,
        })
    }

    pub fn from_cartesian(lattice: Lattice, species: Vec<String>, cartesian: &[[f64; 3]]) -> Result<Self> {
        let frac = cartesian.iter().map(|c| lattice.to_fractional(*c)).collect();
        Self::new(lattice, species, frac)
    }

    pub fn with_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn cartesian(&self, i: usize) -> [f64; 3] {
        self.lattice.to_cartesian(self.positions[i])
    }

    /// Species labels in order of first appearance with their counts.
    pub fn composition(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for s in &self.species {
            match out.iter_mut().find(|(name, _)| name == s) {
                Some((_, n)) => *n += 1,
                None => out.push((s.clone(), 1)),
            }
        }
        out
    }

    pub fn count_of(&self, species: &str) -> usize {
        self.species.iter().filter(|s| *s == species).count()
    }

    pub fn indices_of(&self, species: &str) -> Vec<usize> {
        self.species
            .iter()
            .enumerate()
            .filter(|(_, s)| *s == species)
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy of this frame without the atoms at `indices`. Surviving
    /// coordinates are copied bit-for-bit.
    pub fn without(&self, indices: &[usize]) -> AtomicFrame {
        let mut keep = vec![true; self.len()];
        for &i in indices {
            keep[i] = false;
        }
        let (species, positions) = self
            .species
            .iter()
            .zip(&self.positions)
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|((s, p), _)| (s.clone(), *p))
            .unzip();
        AtomicFrame {
            lattice: self.lattice,
            species,
            positions,
            frame_index: self.frame_index,
        }
    }
}

/// Ordered frames sharing one species list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    frames: Vec<AtomicFrame>,
    pub constant_cell: bool,
}

impl Trajectory {
    /// Validates species consistency and renumbers frames 0..K-1.
    pub fn new(frames: Vec<AtomicFrame>) -> Result<Self> {
        let mut frames = frames;
        if let Some(first) = frames.first() {
            let species = first.species.clone();
            for (k, f) in frames.iter().enumerate().skip(1) {
                if f.len() != species.len() {
                    return Err(Error::Frame {
                        frame: k,
                        msg: "atom count mismatch".into(),
                    });
                }
                if f.species != species {
                    return Err(Error::Frame {
                        frame: k,
                        msg: "species mismatch".into(),
                    });
                }
            }
        }
        for (k, f) in frames.iter_mut().enumerate() {
            f.frame_index = k;
        }
        let constant_cell = frames.windows(2).all(|w| w[0].lattice == w[1].lattice);
        Ok(Trajectory { frames, constant_cell })
    }

    pub fn frames(&self) -> &[AtomicFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The final `k` frames.
    pub fn last(&self, k: usize) -> Result<&[AtomicFrame]> {
        if k == 0 || k > self.frames.len() {
            return Err(Error::arg(format!(
                "last_k must be in 1..={} (got {k})",
                self.frames.len()
            )));
        }
        Ok(&self.frames[self.frames.len() - k..])
    }
}

pub fn parse_structure(text: &str, format: StructureFormat) -> Result<AtomicFrame> {
    match format {
        StructureFormat::Poscar => parse_poscar(text),
        StructureFormat::Extxyz => parse_extxyz(text),
    }
}

pub fn write_structure(frame: &AtomicFrame, format: StructureFormat) -> String {
    match format {
        StructureFormat::Poscar => write_poscar(frame, "written by oxnoise"),
        StructureFormat::Extxyz => write_extxyz(frame),
    }
}

pub fn parse_trajectory(text: &str, format: TrajectoryFormat) -> Result<Trajectory> {
    match format {
        TrajectoryFormat::Xdatcar => parse_xdatcar(text),
        TrajectoryFormat::ExtxyzMulti => parse_extxyz_multi(text),
    }
}

pub fn write_trajectory(traj: &Trajectory, format: TrajectoryFormat) -> String {
    match format {
        TrajectoryFormat::Xdatcar => write_xdatcar(traj, "written by oxnoise"),
        TrajectoryFormat::ExtxyzMulti => write_extxyz_multi(traj),
    }
}

/// Mean positions over the final `last_k` frames.
///
/// Each frame is unwrapped against the last frame with the minimum-image
/// displacement before averaging, so atoms that cross a cell boundary do not
/// average to the middle of the cell.
pub fn average_positions(traj: &Trajectory, last_k: usize) -> Result<AtomicFrame> {
    let frames = traj.last(last_k)?;
    let reference = frames.last().expect("non-empty selection");
    let k = frames.len() as f64;

    let mut shift = vec![[0.0f64; 3]; reference.len()];
    for f in frames {
        for (acc, (p, r)) in shift.iter_mut().zip(f.positions.iter().zip(&reference.positions)) {
            for d in 0..3 {
                let delta = p[d] - r[d];
                acc[d] += delta - delta.round();
            }
        }
    }
    let positions = reference
        .positions
        .iter()
        .zip(&shift)
        .map(|(r, s)| std::array::from_fn(|d| wrap_unit(r[d] + s[d] / k)))
        .collect();

    let lattice = if frames.windows(2).all(|w| w[0].lattice == w[1].lattice) {
        reference.lattice
    } else {
        let mut v = [[0.0; 3]; 3];
        for f in frames {
            for (row, src) in v.iter_mut().zip(f.lattice.vectors()) {
                for (x, y) in row.iter_mut().zip(src) {
                    *x += y / k;
                }
            }
        }
        Lattice::new(v)?
    };

    Ok(AtomicFrame {
        lattice,
        species: reference.species.clone(),
        positions,
        frame_index: reference.frame_index,
    })
}

/// Mass density in g/cm³ using `masses` (amu per element symbol).
pub fn density(frame: &AtomicFrame, masses: &BTreeMap<String, f64>) -> Result<f64> {
    let mut total_amu = 0.0;
    for (el, n) in frame.composition() {
        let m = masses
            .get(&el)
            .ok_or_else(|| Error::arg(format!("no mass for element {el}")))?;
        total_amu += *m * n as f64;
    }
    let volume_cm3 = frame.lattice.volume() * CUBIC_ANGSTROM_IN_CM3;
    Ok(total_amu * AMU_IN_GRAMS / volume_cm3)
}

pub(crate) fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse(line, format!("expected a number, found {tok:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::default_masses;

    fn frame(species: &[&str], pos: Vec<[f64; 3]>, a: f64) -> AtomicFrame {
        AtomicFrame::new(
            Lattice::cubic(a).unwrap(),
            species.iter().map(|s| s.to_string()).collect(),
            pos,
        )
        .unwrap()
    }

    #[test]
    fn singular_and_left_handed_lattices_rejected() {
        assert!(Lattice::new([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(Lattice::new([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(Lattice::new([[f64::NAN, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn wrapping_lands_in_unit_interval() {
        let f = frame(&["X"], vec![[-1e-18, 1.0, 2.25]], 3.0);
        for x in f.positions()[0] {
            assert!((0.0..1.0).contains(&x));
        }
        assert_eq!(f.positions()[0][2], 0.25);
    }

    #[test]
    fn slab_widths_of_triclinic_cell() {
        let lat = Lattice::new([[4.0, 0.0, 0.0], [2.0, 3.0, 0.0], [0.0, 0.0, 5.0]]).unwrap();
        let w = lat.slab_widths();
        assert!((w[0] - 60.0 / 325f64.sqrt()).abs() < 1e-12);
        assert!((w[1] - 3.0).abs() < 1e-12);
        assert!((w[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn average_identical_frames_is_identity() {
        let f = frame(&["Al", "O"], vec![[0.1, 0.2, 0.3], [0.7, 0.8, 0.95]], 5.0);
        let traj = Trajectory::new(vec![f.clone(); 10]).unwrap();
        let avg = average_positions(&traj, 10).unwrap();
        assert_eq!(avg.positions(), f.positions());
        assert_eq!(avg.lattice(), f.lattice());
    }

    #[test]
    fn average_across_boundary_unwraps() {
        let a = frame(&["O"], vec![[0.98, 0.5, 0.5]], 10.0);
        let b = frame(&["O"], vec![[0.02, 0.5, 0.5]], 10.0);
        let traj = Trajectory::new(vec![a.clone(), b.clone(), a, b]).unwrap();
        let avg = average_positions(&traj, 2).unwrap();
        let x = avg.positions()[0][0];
        // 0.00 up to rounding, on either side of the boundary
        assert!(x.min(1.0 - x) < 1e-12, "x = {x}");
    }

    #[test]
    fn average_rejects_bad_k() {
        let f = frame(&["O"], vec![[0.5; 3]], 10.0);
        let traj = Trajectory::new(vec![f; 3]).unwrap();
        assert!(matches!(average_positions(&traj, 0), Err(Error::Argument(_))));
        assert!(matches!(average_positions(&traj, 4), Err(Error::Argument(_))));
    }

    #[test]
    fn average_ignores_earlier_frames() {
        let mk = |x: f64| frame(&["O"], vec![[x, 0.5, 0.5]], 10.0);
        let t1 = Trajectory::new(vec![mk(0.1), mk(0.3), mk(0.5), mk(0.52)]).unwrap();
        let t2 = Trajectory::new(vec![mk(0.3), mk(0.1), mk(0.5), mk(0.52)]).unwrap();
        assert_eq!(
            average_positions(&t1, 2).unwrap().positions(),
            average_positions(&t2, 2).unwrap().positions()
        );
    }

    #[test]
    fn density_of_unit_amu() {
        let f = frame(&["H"], vec![[0.0; 3]], 1.0);
        let mut masses = BTreeMap::new();
        masses.insert("H".to_string(), 1.0);
        let rho = density(&f, &masses).unwrap();
        assert!((rho - 1.6605).abs() < 1e-4, "{rho}");
    }

    #[test]
    fn density_empty_and_unknown() {
        let empty = frame(&[], vec![], 3.0);
        assert_eq!(density(&empty, &default_masses()).unwrap(), 0.0);
        let f = frame(&["Qq"], vec![[0.0; 3]], 3.0);
        let err = density(&f, &default_masses()).unwrap_err();
        assert!(err.to_string().contains("Qq"));
    }

    #[test]
    fn trajectory_rejects_mismatched_species() {
        let a = frame(&["Al", "O"], vec![[0.0; 3], [0.5; 3]], 5.0);
        let b = frame(&["O", "Al"], vec![[0.0; 3], [0.5; 3]], 5.0);
        let err = Trajectory::new(vec![a.clone(), a, b]).unwrap_err();
        assert_eq!(err.to_string(), "frame 2: species mismatch");
    }

    #[test]
    fn without_preserves_survivors_bitwise() {
        let f = frame(
            &["Al", "O", "O"],
            vec![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]],
            5.0,
        );
        let g = f.without(&[1]);
        assert_eq!(g.species(), &["Al".to_string(), "O".to_string()]);
        assert_eq!(g.positions()[0], f.positions()[0]);
        assert_eq!(g.positions()[1], f.positions()[2]);
    }
}
