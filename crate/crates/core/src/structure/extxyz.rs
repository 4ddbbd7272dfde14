//! Extended XYZ: count line, comment line with `Lattice="..."`, then
//! `El x y z` rows in Cartesian Å.

use super::{parse_f64, AtomicFrame, Lattice, Trajectory};
use crate::error::{Error, Result};

/// Splits `key=value key2="quoted value"` pairs. Bare words become flags
/// with an empty value.
fn comment_pairs(line: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        let mut value = String::new();
        if chars.peek() == Some(&'=') {
            chars.next();
            if chars.peek() == Some(&'"') {
                chars.next();
                for c in chars.by_ref() {
                    if c == '"' {
                        break;
                    }
                    value.push(c);
                }
            } else {
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() {
                        break;
                    }
                    value.push(c);
                    chars.next();
                }
            }
        }
        out.push((key, value));
    }
    out
}

/// Column offsets of the species and position fields.
fn property_columns(spec: &str, lineno: usize) -> Result<(usize, usize)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if !parts.len().is_multiple_of(3) {
        return Err(Error::parse(lineno, "malformed Properties specification"));
    }
    let mut col = 0;
    let (mut species, mut pos) = (None, None);
    for chunk in parts.chunks(3) {
        let width: usize = chunk[2]
            .parse()
            .map_err(|_| Error::parse(lineno, "malformed Properties specification"))?;
        match chunk[0].to_ascii_lowercase().as_str() {
            "species" => species = Some(col),
            "pos" if width == 3 => pos = Some(col),
            _ => {}
        }
        col += width;
    }
    match (species, pos) {
        (Some(s), Some(p)) => Ok((s, p)),
        _ => Err(Error::parse(lineno, "Properties lacks species or pos")),
    }
}

/// Parses one frame starting at line index `start`; returns the frame and
/// the index of the line after it.
fn parse_frame(lines: &[&str], start: usize) -> Result<(AtomicFrame, usize)> {
    let ln = start + 1;
    let count_line = lines
        .get(start)
        .ok_or_else(|| Error::parse(ln, "expected atom count"))?;
    let natoms: usize = count_line
        .trim()
        .parse()
        .map_err(|_| Error::parse(ln, format!("invalid atom count {:?}", count_line.trim())))?;
    let comment = lines
        .get(start + 1)
        .ok_or_else(|| Error::parse(ln + 1, "expected comment line"))?;
    let pairs = comment_pairs(comment);
    let lattice_text = pairs
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("lattice"))
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::parse(ln + 1, "comment line lacks Lattice=\"...\""))?;
    let nums: Vec<f64> = lattice_text
        .split_whitespace()
        .map(|t| parse_f64(t, ln + 1))
        .collect::<Result<_>>()?;
    if nums.len() != 9 {
        return Err(Error::parse(ln + 1, "Lattice must hold 9 numbers"));
    }
    let lattice = Lattice::new([
        [nums[0], nums[1], nums[2]],
        [nums[3], nums[4], nums[5]],
        [nums[6], nums[7], nums[8]],
    ])
    .map_err(|e| Error::parse(ln + 1, e.to_string()))?;
    let (scol, pcol) = match pairs.iter().find(|(k, _)| k.eq_ignore_ascii_case("properties")) {
        Some((_, spec)) => property_columns(spec, ln + 1)?,
        None => (0, 1),
    };

    let mut species = Vec::with_capacity(natoms);
    let mut cart = Vec::with_capacity(natoms);
    for i in 0..natoms {
        let idx = start + 2 + i;
        let row = lines
            .get(idx)
            .filter(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::parse(idx + 1, format!("expected {natoms} atom rows, found {i}")))?;
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() < scol.max(pcol + 2) + 1 {
            return Err(Error::parse(idx + 1, "too few columns"));
        }
        species.push(toks[scol].to_string());
        cart.push([
            parse_f64(toks[pcol], idx + 1)?,
            parse_f64(toks[pcol + 1], idx + 1)?,
            parse_f64(toks[pcol + 2], idx + 1)?,
        ]);
    }
    let frame = AtomicFrame::from_cartesian(lattice, species, &cart)?;
    Ok((frame, start + 2 + natoms))
}

pub fn parse_extxyz(text: &str) -> Result<AtomicFrame> {
    let lines: Vec<&str> = text.lines().collect();
    parse_frame(&lines, 0).map(|(f, _)| f)
}

pub fn parse_extxyz_multi(text: &str) -> Result<Trajectory> {
    let lines: Vec<&str> = text.lines().collect();
    let mut pos = 0;
    let mut frames: Vec<AtomicFrame> = Vec::new();
    loop {
        while pos < lines.len() && lines[pos].trim().is_empty() {
            pos += 1;
        }
        if pos >= lines.len() {
            break;
        }
        let k = frames.len();
        if let Some(first) = frames.first() {
            // check the declared count before reading rows
            if lines[pos].trim().parse::<usize>().ok() != Some(first.len()) {
                return Err(Error::Frame {
                    frame: k,
                    msg: "atom count mismatch".into(),
                });
            }
        }
        let (frame, next) = parse_frame(&lines, pos)?;
        frames.push(frame.with_index(k));
        pos = next;
    }
    if frames.is_empty() {
        return Err(Error::parse(1, "no frames found"));
    }
    Trajectory::new(frames)
}

pub fn write_extxyz(frame: &AtomicFrame) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let v = frame.lattice().vectors();
    let _ = writeln!(out, "{}", frame.len());
    let _ = writeln!(
        out,
        "Lattice=\"{:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}\" Properties=species:S:1:pos:R:3 pbc=\"T T T\"",
        v[0][0], v[0][1], v[0][2], v[1][0], v[1][1], v[1][2], v[2][0], v[2][1], v[2][2]
    );
    for (i, s) in frame.species().iter().enumerate() {
        let c = frame.cartesian(i);
        let _ = writeln!(out, "{s} {:?} {:?} {:?}", c[0], c[1], c[2]);
    }
    out
}

pub fn write_extxyz_multi(traj: &Trajectory) -> String {
    traj.frames().iter().map(write_extxyz).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_to_fractional() {
        let text = "1\nLattice=\"3 0 0 0 3 0 0 0 3\"\nAl 1.5 0 0\n";
        let f = parse_extxyz(text).unwrap();
        assert_eq!(f.positions()[0], [0.5, 0.0, 0.0]);
    }

    #[test]
    fn properties_reorder_columns() {
        let text = "1\npbc=\"T T T\" Properties=id:I:1:species:S:1:pos:R:3 Lattice=\"4 0 0 0 4 0 0 0 4\"\n7 O 1 2 3\n";
        let f = parse_extxyz(text).unwrap();
        assert_eq!(f.species()[0], "O");
        assert_eq!(f.positions()[0], [0.25, 0.5, 0.75]);
    }

    #[test]
    fn missing_lattice_is_error() {
        let err = parse_extxyz("1\nno cell here\nO 0 0 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn truncated_rows() {
        let err = parse_extxyz("3\nLattice=\"3 0 0 0 3 0 0 0 3\"\nO 0 0 0\nO 1 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn multi_frame_count_mismatch() {
        let one = "1\nLattice=\"3 0 0 0 3 0 0 0 3\"\nO 0 0 0\n";
        let two = "2\nLattice=\"3 0 0 0 3 0 0 0 3\"\nO 0 0 0\nO 1 1 1\n";
        let err = parse_extxyz_multi(&format!("{one}{one}{two}")).unwrap_err();
        assert_eq!(err.to_string(), "frame 2: atom count mismatch");
        let t = parse_extxyz_multi(&format!("{one}{one}{one}")).unwrap();
        assert_eq!(t.len(), 3);
    }
}
