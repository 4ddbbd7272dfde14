//! Volumetric scalar fields (CHGCAR-like and cube-like text) and planar
//! slices through them.

use serde::{Deserialize, Serialize};

use crate::elements;
use crate::error::{Error, Result};
use crate::structure::{parse_f64, parse_poscar_prefix, write_poscar, AtomicFrame, Lattice};

const BOHR_IN_ANGSTROM: f64 = 0.529_177_210_903;
/// Offsets within this many grid spacings of a plane select that plane exactly.
const PLANE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFormat {
    ChgcarLike,
    CubeLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumetricGrid {
    lattice: Lattice,
    dims: [usize; 3],
    /// Index `i1 + n1 * (i2 + n2 * i3)`: axis 1 varies fastest.
    values: Vec<f64>,
    pub field_label: String,
    pub structure: Option<AtomicFrame>,
    /// Cartesian position of grid point (0, 0, 0) in Å.
    pub origin: [f64; 3],
}

impl VolumetricGrid {
    pub fn new(lattice: Lattice, dims: [usize; 3], values: Vec<f64>, field_label: impl Into<String>) -> Result<Self> {
        let field_label = field_label.into();
        let n: usize = dims.iter().product();
        if n == 0 {
            return Err(Error::arg("grid dimensions must be positive"));
        }
        if values.len() != n {
            return Err(Error::arg(format!("{} values for a {n}-point grid", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("grid value {i} is not finite")));
        }
        if field_label.to_ascii_uppercase().contains("ELF") && values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg("ELF values must lie in [0, 1]"));
        }
        Ok(VolumetricGrid {
            lattice,
            dims,
            values,
            field_label,
            structure: None,
            origin: [0.0; 3],
        })
    }

    /// Samples `f(fractional point)` on a `dims` grid.
    pub fn from_fn(lattice: Lattice, dims: [usize; 3], label: &str, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.iter().product());
        for i3 in 0..dims[2] {
            for i2 in 0..dims[1] {
                for i1 in 0..dims[0] {
                    values.push(f([
                        i1 as f64 / dims[0] as f64,
                        i2 as f64 / dims[1] as f64,
                        i3 as f64 / dims[2] as f64,
                    ]));
                }
            }
        }
        Self::new(lattice, dims, values, label)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: [usize; 3]) -> f64 {
        self.values[i[0] + self.dims[0] * (i[1] + self.dims[1] * i[2])]
    }
}

fn collect_values(lines: &[&str], first_line: usize, n: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(n);
    for (k, line) in lines.iter().enumerate() {
        for tok in line.split_whitespace() {
            if values.len() == n {
                return Ok(values);
            }
            values.push(parse_f64(tok, first_line + k)?);
        }
        if values.len() == n {
            return Ok(values);
        }
    }
    Err(Error::parse(
        first_line + lines.len(),
        format!("expected {n} grid values, found {}", values.len()),
    ))
}

fn parse_dims(line: &str, lineno: usize) -> Result<[usize; 3]> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < 3 {
        return Err(Error::parse(lineno, "expected three grid dimensions"));
    }
    let mut dims = [0usize; 3];
    for (d, t) in dims.iter_mut().zip(&toks) {
        *d = t
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::parse(lineno, format!("invalid grid dimension {t:?}")))?;
    }
    Ok(dims)
}

fn parse_chgcar(text: &str) -> Result<VolumetricGrid> {
    let (frame, used) = parse_poscar_prefix(text)?;
    let lines: Vec<&str> = text.lines().collect();
    let label = lines.first().map(|l| l.trim().to_string()).unwrap_or_default();
    let mut pos = used;
    while pos < lines.len() && lines[pos].trim().is_empty() {
        pos += 1;
    }
    let dims_line = lines
        .get(pos)
        .ok_or_else(|| Error::parse(pos + 1, "expected grid dimensions"))?;
    let dims = parse_dims(dims_line, pos + 1)?;
    let n = dims.iter().product();
    let values = collect_values(&lines[pos + 1..], pos + 2, n)?;
    let mut grid =
        VolumetricGrid::new(*frame.lattice(), dims, values, label).map_err(|e| Error::parse(pos + 1, e.to_string()))?;
    grid.structure = (!frame.is_empty()).then_some(frame);
    Ok(grid)
}

fn cube_numbers(line: Option<&&str>, lineno: usize, n: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::parse(lineno, "unexpected end of cube header"))?;
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < n {
        return Err(Error::parse(lineno, format!("expected {n} fields")));
    }
    toks[..n].iter().map(|t| parse_f64(t, lineno)).collect()
}

fn parse_cube(text: &str) -> Result<VolumetricGrid> {
    let lines: Vec<&str> = text.lines().collect();
    let label = lines.first().map(|l| l.trim().to_string()).unwrap_or_default();
    let head = cube_numbers(lines.get(2), 3, 4)?;
    let natoms = head[0].abs() as usize;
    let origin = [head[1], head[2], head[3]].map(|x| x * BOHR_IN_ANGSTROM);
    let mut dims = [0usize; 3];
    let mut vectors = [[0.0; 3]; 3];
    for ax in 0..3 {
        let ln = 4 + ax;
        let row = cube_numbers(lines.get(3 + ax), ln, 4)?;
        let count = row[0];
        if count == 0.0 || count.fract() != 0.0 {
            return Err(Error::parse(ln, "invalid voxel count"));
        }
        // negative counts mark voxel vectors given in Å rather than Bohr
        let unit = if count < 0.0 { 1.0 } else { BOHR_IN_ANGSTROM };
        dims[ax] = count.abs() as usize;
        for k in 0..3 {
            vectors[ax][k] = row[1 + k] * unit * dims[ax] as f64;
        }
    }
    let lattice = Lattice::new(vectors).map_err(|e| Error::parse(4, e.to_string()))?;
    let mut species = Vec::with_capacity(natoms);
    let mut cart = Vec::with_capacity(natoms);
    for a in 0..natoms {
        let ln = 7 + a;
        let row = cube_numbers(lines.get(6 + a), ln, 5)?;
        let z = row[0] as u32;
        let sym = elements::symbol(z).ok_or_else(|| Error::parse(ln, format!("unknown atomic number {z}")))?;
        species.push(sym.to_string());
        cart.push([row[2], row[3], row[4]].map(|x| x * BOHR_IN_ANGSTROM));
    }
    let start = 6 + natoms;
    let n: usize = dims.iter().product();
    let raw = collect_values(lines.get(start..).unwrap_or(&[]), start + 1, n)?;
    // cube order: axis 3 fastest
    let mut values = vec![0.0; n];
    let mut k = 0;
    for i1 in 0..dims[0] {
        for i2 in 0..dims[1] {
            for i3 in 0..dims[2] {
                values[i1 + dims[0] * (i2 + dims[1] * i3)] = raw[k];
                k += 1;
            }
        }
    }
    let mut grid =
        VolumetricGrid::new(lattice, dims, values, label).map_err(|e| Error::parse(start + 1, e.to_string()))?;
    grid.origin = origin;
    if natoms > 0 {
        grid.structure = Some(AtomicFrame::from_cartesian(lattice, species, &cart)?);
    }
    Ok(grid)
}

pub fn parse_grid(text: &str, format: GridFormat) -> Result<VolumetricGrid> {
    match format {
        GridFormat::ChgcarLike => parse_chgcar(text),
        GridFormat::CubeLike => parse_cube(text),
    }
}

fn push_values(out: &mut String, values: impl Iterator<Item = f64>, per_line: usize) {
    use std::fmt::Write;
    for (k, v) in values.enumerate() {
        let sep = if k % per_line == per_line - 1 { '\n' } else { ' ' };
        let _ = write!(out, "{v:?}{sep}");
    }
    if !out.ends_with('\n') {
        out.push('\n');
    }
}

pub fn write_grid(grid: &VolumetricGrid, format: GridFormat) -> String {
    use std::fmt::Write;
    let label = grid.field_label.replace('\n', " ");
    let mut out = String::new();
    match format {
        GridFormat::ChgcarLike => {
            let frame = match &grid.structure {
                Some(f) => f.clone(),
                None => AtomicFrame::new(grid.lattice, Vec::new(), Vec::new()).expect("empty frame"),
            };
            let poscar = write_poscar(&frame, &label);
            if frame.is_empty() {
                // empty species/count lines would not parse back; use a zero-count placeholder
                let mut lines: Vec<String> = poscar.lines().map(String::from).collect();
                lines[5] = "X".into();
                lines[6] = "0".into();
                out.push_str(&lines.join("\n"));
                out.push('\n');
            } else {
                out.push_str(&poscar);
            }
            out.push('\n');
            let _ = writeln!(out, "  {} {} {}", grid.dims[0], grid.dims[1], grid.dims[2]);
            push_values(&mut out, grid.values.iter().copied(), 5);
        }
        GridFormat::CubeLike => {
            let atoms = grid.structure.as_ref();
            let natoms = atoms.map_or(0, |f| f.len());
            let _ = writeln!(out, "{label}");
            let _ = writeln!(out, "axis 3 varies fastest; voxel vectors in Angstrom");
            let o = grid.origin.map(|x| x / BOHR_IN_ANGSTROM);
            let _ = writeln!(out, "{natoms} {:?} {:?} {:?}", o[0], o[1], o[2]);
            for ax in 0..3 {
                let n = grid.dims[ax];
                let v = grid.lattice.vectors()[ax].map(|x| x / n as f64);
                let _ = writeln!(out, "-{n} {:?} {:?} {:?}", v[0], v[1], v[2]);
            }
            if let Some(f) = atoms {
                for (i, s) in f.species().iter().enumerate() {
                    let z = elements::atomic_number(s).unwrap_or(0);
                    let c = f.cartesian(i).map(|x| x / BOHR_IN_ANGSTROM);
                    let _ = writeln!(out, "{z} {z}.0 {:?} {:?} {:?}", c[0], c[1], c[2]);
                }
            }
            let [n1, n2, n3] = grid.dims;
            let ordered =
                (0..n1).flat_map(|i1| (0..n2).flat_map(move |i2| (0..n3).map(move |i3| grid.get([i1, i2, i3]))));
            push_values(&mut out, ordered, 6);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    A1,
    A2,
    A3,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::A1 => 0,
            Axis::A2 => 1,
            Axis::A3 => 2,
        }
    }

    /// The two remaining axes in ascending order: (rows, columns).
    pub fn others(self) -> (usize, usize) {
        match self {
            Axis::A1 => (1, 2),
            Axis::A2 => (0, 2),
            Axis::A3 => (0, 1),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a1" | "x" | "1" => Ok(Axis::A1),
            "a2" | "y" | "2" => Ok(Axis::A2),
            "a3" | "z" | "3" => Ok(Axis::A3),
            _ => Err(Error::arg(format!("unknown axis {s:?}; expected a1, a2 or a3"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSlice {
    pub axis: Axis,
    pub fractional_offset: f64,
    /// `matrix[r][c]`: rows run along the lower remaining axis, columns
    /// along the higher one.
    pub matrix: Vec<Vec<f64>>,
    pub row_coords: Vec<f64>,
    pub col_coords: Vec<f64>,
    pub field_label: String,
    pub origin_note: String,
}

/// Plane of `grid` perpendicular to `axis` at `offset` (fractional).
///
/// Offsets on a grid plane select it exactly; anything else is linearly
/// interpolated between the bracketing planes, wrapping from plane n−1 to
/// plane 0.
pub fn slice_plane(grid: &VolumetricGrid, axis: Axis, offset: f64) -> Result<PlaneSlice> {
    if !(0.0..1.0).contains(&offset) {
        return Err(Error::arg(format!("offset must be in [0, 1), got {offset}")));
    }
    let k = axis.index();
    let n = grid.dims[k];
    let p = offset * n as f64;
    let j0 = p.floor();
    let t = p - j0;
    let (lo, hi, w) = if t <= PLANE_TOLERANCE {
        (j0 as usize % n, j0 as usize % n, 0.0)
    } else if 1.0 - t <= PLANE_TOLERANCE {
        let j = (j0 as usize + 1) % n;
        (j, j, 0.0)
    } else {
        (j0 as usize % n, (j0 as usize + 1) % n, t)
    };

    let (ra, ca) = axis.others();
    let at = |plane: usize, r: usize, c: usize| {
        let mut idx = [0usize; 3];
        idx[k] = plane;
        idx[ra] = r;
        idx[ca] = c;
        grid.get(idx)
    };
    let matrix = (0..grid.dims[ra])
        .map(|r| {
            (0..grid.dims[ca])
                .map(|c| {
                    if w == 0.0 {
                        at(lo, r, c)
                    } else {
                        (1.0 - w) * at(lo, r, c) + w * at(hi, r, c)
                    }
                })
                .collect()
        })
        .collect();

    let lengths = grid.lattice.lengths();
    let coords = |ax: usize| -> Vec<f64> {
        (0..grid.dims[ax])
            .map(|i| i as f64 * lengths[ax] / grid.dims[ax] as f64)
            .collect()
    };
    let origin_note = if w == 0.0 {
        format!("grid plane {lo} of {n}")
    } else {
        format!("interpolated between planes {lo} and {hi} (weight {w:.6})")
    };
    Ok(PlaneSlice {
        axis,
        fractional_offset: offset,
        matrix,
        row_coords: coords(ra),
        col_coords: coords(ca),
        field_label: grid.field_label.clone(),
        origin_note,
    })
}

fn coord(x: f64) -> String {
    format!("{:?}", (x * 1e6).round() / 1e6)
}

/// CSV for contour tools: one `#` metadata line, a header row of column
/// coordinates (Å), then one row per row coordinate (Å) followed by values.
pub fn emit_slice_csv(slice: &PlaneSlice) -> String {
    use std::fmt::Write;
    let (ra, ca) = slice.axis.others();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# axis={:?} offset={} field={} rows=a{} cols=a{} note={}",
        slice.axis,
        slice.fractional_offset,
        slice.field_label,
        ra + 1,
        ca + 1,
        slice.origin_note
    );
    let header: Vec<String> = slice.col_coords.iter().map(|c| coord(*c)).collect();
    let _ = writeln!(out, "a{}_A\\a{}_A,{}", ra + 1, ca + 1, header.join(","));
    for (r, row) in slice.row_coords.iter().zip(&slice.matrix) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{},{}", coord(*r), vals.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cube(a: f64) -> Lattice {
        Lattice::cubic(a).unwrap()
    }

    #[test]
    fn zeros_chgcar() {
        let text = "pot\n1.0\n2 0 0\n0 2 0\n0 0 2\nO\n1\nDirect\n0 0 0\n\n  2 2 2\n0 0 0 0 0\n0 0 0\n";
        let g = parse_grid(text, GridFormat::ChgcarLike).unwrap();
        assert_eq!(g.values(), &[0.0; 8]);
        assert_eq!(g.dims(), [2, 2, 2]);
        assert_eq!(g.field_label, "pot");
    }

    #[test]
    fn short_value_block() {
        let text = "pot\n1.0\n2 0 0\n0 2 0\n0 0 2\nO\n1\nDirect\n0 0 0\n\n  2 2 2\n0 0 0 0 0\n0 0\n";
        let err = parse_grid(text, GridFormat::ChgcarLike).unwrap_err();
        assert!(err.to_string().contains("expected 8 grid values, found 7"), "{err}");
        let bad = "pot\n1.0\n2 0 0\n0 2 0\n0 0 2\nO\n1\nDirect\n0 0 0\n\n  2 2 2\n0 0 x 0 0\n0 0 0\n";
        assert!(matches!(
            parse_grid(bad, GridFormat::ChgcarLike),
            Err(Error::Parse { line: 12, .. })
        ));
    }

    #[test]
    fn cube_reorders_to_axis1_fastest() {
        // values listed with axis 3 fastest: v = 100 i1 + 10 i2 + i3
        let mut text = String::from("t\nc\n0 0 0 0\n2 1 0 0\n2 0 1 0\n2 0 0 1\n");
        for i1 in 0..2 {
            for i2 in 0..2 {
                for i3 in 0..2 {
                    text.push_str(&format!("{} ", 100 * i1 + 10 * i2 + i3));
                }
            }
        }
        let g = parse_grid(&text, GridFormat::CubeLike).unwrap();
        assert_eq!(g.get([1, 0, 1]), 101.0);
        assert_eq!(g.get([0, 1, 1]), 11.0);
        assert_eq!(g.values()[1], 100.0);
        assert!((g.lattice().lengths()[0] - 2.0 * BOHR_IN_ANGSTROM).abs() < 1e-12);
    }

    #[test]
    fn round_trips_are_value_exact() {
        let lat = Lattice::new([[5.0, 0.0, 0.0], [0.3, 4.0, 0.0], [0.0, 0.2, 6.0]]).unwrap();
        let mut g = VolumetricGrid::from_fn(lat, [3, 4, 5], "potential eV", |f| {
            (2.0 * PI * f[0]).sin() + f[1] * f[2] / 3.0 + 1e-7
        })
        .unwrap();
        for fmt in [GridFormat::ChgcarLike, GridFormat::CubeLike] {
            let back = parse_grid(&write_grid(&g, fmt), fmt).unwrap();
            assert_eq!(back.values(), g.values());
            assert_eq!(back.dims(), g.dims());
        }
        g.structure = Some(
            AtomicFrame::new(
                lat,
                vec!["Al".into(), "O".into()],
                vec![[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]],
            )
            .unwrap(),
        );
        let back = parse_grid(&write_grid(&g, GridFormat::ChgcarLike), GridFormat::ChgcarLike).unwrap();
        assert_eq!(back, g);
        let back = parse_grid(&write_grid(&g, GridFormat::CubeLike), GridFormat::CubeLike).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(
            back.structure.unwrap().species(),
            g.structure.as_ref().unwrap().species()
        );
    }

    #[test]
    fn elf_range_enforced() {
        assert!(VolumetricGrid::new(cube(1.0), [1, 1, 1], vec![1.5], "ELF").is_err());
        assert!(VolumetricGrid::new(cube(1.0), [1, 1, 1], vec![0.5], "ELF").is_ok());
        assert!(VolumetricGrid::new(cube(1.0), [1, 1, 2], vec![0.5], "x").is_err());
    }

    #[test]
    fn linear_field_slice_at_zero() {
        let g = VolumetricGrid::from_fn(cube(10.0), [10, 10, 10], "f", |f| f[0]).unwrap();
        let s = slice_plane(&g, Axis::A1, 0.0).unwrap();
        assert_eq!(s.matrix.len(), 10);
        assert!(s.matrix.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn sine_columns() {
        let g = VolumetricGrid::from_fn(cube(8.0), [16, 16, 16], "f", |f| (2.0 * PI * f[2]).sin()).unwrap();
        let s = slice_plane(&g, Axis::A1, 0.0).unwrap();
        for row in &s.matrix {
            for (k, v) in row.iter().enumerate() {
                assert!((v - (2.0 * PI * k as f64 / 16.0).sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolates_between_planes() {
        // planes along a1 alternate 1, 3
        let g = VolumetricGrid::from_fn(cube(4.0), [4, 2, 2], "f", |f| {
            if ((f[0] * 4.0).round() as usize).is_multiple_of(2) {
                1.0
            } else {
                3.0
            }
        })
        .unwrap();
        let s = slice_plane(&g, Axis::A1, 0.125).unwrap();
        assert!(s.matrix.iter().flatten().all(|v| (*v - 2.0).abs() < 1e-15));
        // wrap between plane 3 (value 3) and plane 0 (value 1)
        let s = slice_plane(&g, Axis::A1, 0.875).unwrap();
        assert!(s.matrix.iter().flatten().all(|v| (*v - 2.0).abs() < 1e-15));
        assert!(slice_plane(&g, Axis::A1, 1.0).is_err());
    }

    #[test]
    fn on_plane_interpolation_is_exact() {
        let g = VolumetricGrid::from_fn(cube(4.0), [8, 3, 5], "f", |f| f[0] * 7.3 + f[1] - f[2] * f[2]).unwrap();
        for j in 0..8 {
            let s = slice_plane(&g, Axis::A1, j as f64 / 8.0).unwrap();
            for r in 0..3 {
                for c in 0..5 {
                    assert_eq!(s.matrix[r][c], g.get([j, r, c]));
                }
            }
        }
    }

    #[test]
    fn csv_for_single_value() {
        let g = VolumetricGrid::new(cube(2.0), [1, 1, 1], vec![7.0], "f").unwrap();
        let csv = emit_slice_csv(&slice_plane(&g, Axis::A1, 0.0).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines[1], "a2_A\\a3_A,0.0");
        assert_eq!(lines[2], "0.0,7");
    }

    #[test]
    fn csv_rows_for_two_by_two() {
        let g = VolumetricGrid::new(cube(2.0), [1, 2, 2], vec![1.0, 0.0, 0.0, 1.0], "f").unwrap();
        let csv = emit_slice_csv(&slice_plane(&g, Axis::A1, 0.0).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(&lines[1..], &["a2_A\\a3_A,0.0,1.0", "0.0,1,0", "1.0,0,1"]);
    }
}
