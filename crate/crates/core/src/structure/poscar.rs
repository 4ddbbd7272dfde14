//! POSCAR and XDATCAR style text.

use super::{parse_f64, AtomicFrame, Lattice, Trajectory};
use crate::error::{Error, Result};

struct Header {
    lattice: Lattice,
    /// Multiplier applied to Cartesian coordinates.
    scale: f64,
    species: Vec<String>,
}

/// Cursor over text lines carrying 1-based line numbers for diagnostics.
struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    fn lineno(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        let line = self
            .peek()
            .ok_or_else(|| Error::parse(self.lineno(), format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(line)
    }

    fn skip_blank(&mut self) {
        while self.peek().is_some_and(|l| l.trim().is_empty()) {
            self.pos += 1;
        }
    }
}

fn floats(line: &str, n: usize, lineno: usize) -> Result<Vec<f64>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < n {
        return Err(Error::parse(
            lineno,
            format!("expected {n} numbers, found {}", toks.len()),
        ));
    }
    toks[..n].iter().map(|t| parse_f64(t, lineno)).collect()
}

fn element_label(tok: &str) -> String {
    // POTCAR-style labels such as "Al_pv" or "O/abc"
    tok.split(['_', '/']).next().unwrap_or(tok).to_string()
}

fn parse_header(cur: &mut Lines) -> Result<Header> {
    cur.next("comment line")?;
    let ln = cur.lineno();
    let scale = floats(cur.next("scale factor")?, 1, ln)?[0];
    if scale == 0.0 {
        return Err(Error::parse(ln, "scale factor must be non-zero"));
    }
    let mut raw = [[0.0; 3]; 3];
    for row in raw.iter_mut() {
        let ln = cur.lineno();
        let v = floats(cur.next("lattice vector")?, 3, ln)?;
        row.copy_from_slice(&v);
    }
    let raw_lattice = Lattice::new(raw).map_err(|e| Error::parse(ln + 1, e.to_string()))?;
    let factor = if scale > 0.0 {
        scale
    } else {
        (-scale / raw_lattice.volume()).cbrt()
    };
    let lattice = Lattice::new(raw.map(|r| r.map(|x| x * factor))).map_err(|e| Error::parse(ln + 1, e.to_string()))?;

    let ln = cur.lineno();
    let names: Vec<String> = cur
        .next("species line")?
        .split_whitespace()
        .map(element_label)
        .collect();
    if names.is_empty() || names.iter().any(|n| n.parse::<f64>().is_ok()) {
        return Err(Error::parse(ln, "expected a line of element symbols"));
    }
    let ln = cur.lineno();
    let counts: Vec<usize> = cur
        .next("atom counts")?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(ln, format!("invalid atom count {t:?}")))
        })
        .collect::<Result<_>>()?;
    if counts.len() != names.len() {
        return Err(Error::parse(
            ln,
            format!("{} counts for {} species", counts.len(), names.len()),
        ));
    }
    let species = names
        .iter()
        .zip(&counts)
        .flat_map(|(n, c)| std::iter::repeat_n(n.clone(), *c))
        .collect();
    Ok(Header {
        lattice,
        scale: factor,
        species,
    })
}

fn is_cartesian_mode(line: &str) -> bool {
    matches!(line.trim_start().chars().next(), Some('c' | 'C' | 'k' | 'K'))
}

fn read_coordinates(cur: &mut Lines, n: usize) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ln = cur.lineno();
        let line = cur
            .peek()
            .filter(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::parse(ln, format!("expected {n} coordinate lines, found {}", out.len())))?;
        cur.pos += 1;
        let v = floats(line, 3, ln)?;
        out.push([v[0], v[1], v[2]]);
    }
    Ok(out)
}

fn build_frame(header: &Header, coords: Vec<[f64; 3]>, cartesian: bool) -> Result<AtomicFrame> {
    if cartesian {
        let scaled: Vec<[f64; 3]> = coords.iter().map(|c| c.map(|x| x * header.scale)).collect();
        AtomicFrame::from_cartesian(header.lattice, header.species.clone(), &scaled)
    } else {
        AtomicFrame::new(header.lattice, header.species.clone(), coords)
    }
}

pub fn parse_poscar(text: &str) -> Result<AtomicFrame> {
    parse_poscar_prefix(text).map(|(f, _)| f)
}

/// Parses a POSCAR block at the start of `text`, returning the frame and
/// the number of lines consumed. The first line is returned as the comment.
pub(crate) fn parse_poscar_prefix(text: &str) -> Result<(AtomicFrame, usize)> {
    let mut cur = Lines::new(text);
    let header = parse_header(&mut cur)?;
    let mut mode = cur.next("coordinate mode line")?;
    if mode.trim_start().starts_with(['s', 'S']) {
        mode = cur.next("coordinate mode line")?;
    }
    let coords = read_coordinates(&mut cur, header.species.len())?;
    Ok((build_frame(&header, coords, is_cartesian_mode(mode))?, cur.pos))
}

fn is_config_line(line: &str) -> bool {
    let t = line.trim_start().to_ascii_lowercase();
    (t.starts_with("direct") || t.starts_with("cartesian")) && t.contains("configuration")
}

pub fn parse_xdatcar(text: &str) -> Result<Trajectory> {
    let mut cur = Lines::new(text);
    let mut header = parse_header(&mut cur)?;
    let natoms = header.species.len();
    let mut frames = Vec::new();
    loop {
        cur.skip_blank();
        let Some(line) = cur.peek() else { break };
        if !is_config_line(line) {
            // variable-cell files repeat the header before each block
            header = parse_header(&mut cur)?;
            if header.species.len() != natoms {
                return Err(Error::Frame {
                    frame: frames.len(),
                    msg: "atom count mismatch".into(),
                });
            }
            continue;
        }
        let cartesian = is_cartesian_mode(line);
        cur.pos += 1;
        let k = frames.len();
        let start = cur.pos;
        let mut end = start;
        while end < cur.lines.len() && !is_config_line(cur.lines[end]) {
            end += 1;
        }
        let block: Vec<&str> = cur.lines[start..end]
            .iter()
            .copied()
            .filter(|l| !l.trim().is_empty())
            .collect();
        // a longer block is fine only if the extra lines are the next header
        let fits = block.len() == natoms || (block.len() > natoms && looks_like_header(&block[natoms..]));
        if !fits {
            return Err(Error::Frame {
                frame: k,
                msg: "atom count mismatch".into(),
            });
        }
        let coords = read_coordinates(&mut cur, natoms).map_err(|e| Error::Frame {
            frame: k,
            msg: e.to_string(),
        })?;
        frames.push(build_frame(&header, coords, cartesian)?.with_index(k));
    }
    if frames.is_empty() {
        return Err(Error::parse(cur.lineno(), "no configurations found"));
    }
    Trajectory::new(frames)
}

fn looks_like_header(lines: &[&str]) -> bool {
    let text = lines.join("\n");
    parse_header(&mut Lines::new(&text)).is_ok()
}

fn species_runs(frame: &AtomicFrame) -> Vec<(&str, usize)> {
    let mut runs: Vec<(&str, usize)> = Vec::new();
    for s in frame.species() {
        match runs.last_mut() {
            Some((name, n)) if *name == s.as_str() => *n += 1,
            _ => runs.push((s.as_str(), 1)),
        }
    }
    runs
}

fn write_header(out: &mut String, frame: &AtomicFrame, comment: &str) {
    use std::fmt::Write;
    let _ = writeln!(out, "{comment}");
    let _ = writeln!(out, "1.0");
    for v in frame.lattice().vectors() {
        let _ = writeln!(out, "  {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    let runs = species_runs(frame);
    let names: Vec<&str> = runs.iter().map(|r| r.0).collect();
    let counts: Vec<String> = runs.iter().map(|r| r.1.to_string()).collect();
    let _ = writeln!(out, "{}", names.join(" "));
    let _ = writeln!(out, "{}", counts.join(" "));
}

fn write_coords(out: &mut String, frame: &AtomicFrame) {
    use std::fmt::Write;
    for p in frame.positions() {
        let _ = writeln!(out, "  {:?} {:?} {:?}", p[0], p[1], p[2]);
    }
}

/// Writes fractional ("Direct") coordinates with scale 1.0. Float fields use
/// shortest round-trip formatting so parsing the output is lossless.
pub fn write_poscar(frame: &AtomicFrame, comment: &str) -> String {
    let mut out = String::new();
    write_header(&mut out, frame, comment);
    out.push_str("Direct\n");
    write_coords(&mut out, frame);
    out
}

pub fn write_xdatcar(traj: &Trajectory, comment: &str) -> String {
    let mut out = String::new();
    for (k, f) in traj.frames().iter().enumerate() {
        if k == 0 || !traj.constant_cell {
            write_header(&mut out, f, comment);
        }
        out.push_str(&format!("Direct configuration= {:>5}\n", k + 1));
        write_coords(&mut out, f);
    }
    out
}
