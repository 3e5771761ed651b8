//! Text instance files and the results CSV.
//!
//! An instance record starts with a header line, `TSP <N>` or
//! `PDP <n_requests>`, followed by one `x y` line per node in index order
//! (for PDP: depot, pickups, deliveries). Coordinates are written with 17
//! significant digits so a write/read cycle is lossless.
//!
//! A PDP record may carry an explicit pairing section, `PAIRS` followed by
//! `n` lines of `pickup_node delivery_node`. The reader validates that the
//! pairing is a bijection and normalizes node order; the writer never emits
//! it because in-memory instances are always in canonical layout.
//!
//! A dataset file is a concatenation of records. Blank lines and lines
//! starting with `#` are ignored.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnyInstance, Instance, PdInstance, Point};
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str = "instance_id,method,obj,opt,gap_percent,steps,seconds";

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: usize,
    pub method: String,
    pub obj: f64,
    pub opt: Option<f64>,
    pub gap_percent: Option<f64>,
    pub steps: u64,
    pub seconds: f64,
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            inner: text.lines().enumerate().peekable(),
        }
    }

    fn skip_blank(&mut self) {
        while let Some((_, l)) = self.inner.peek() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                self.inner.next();
            } else {
                break;
            }
        }
    }

    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        self.skip_blank();
        self.inner.next().map(|(i, l)| (i + 1, l.trim()))
    }

    fn peek_is(&mut self, word: &str) -> bool {
        self.skip_blank();
        matches!(self.inner.peek(), Some((_, l)) if l.trim() == word)
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn expect_line(&mut self, last_line: usize, what: &str) -> Result<(usize, &'a str)> {
        self.next_line()
            .ok_or_else(|| self.err(last_line + 1, format!("unexpected end of file, expected {what}")))
    }

    fn point(&mut self, last_line: usize) -> Result<(usize, Point)> {
        let (ln, l) = self.expect_line(last_line, "an `x y` coordinate line")?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(self.err(ln, format!("expected two coordinates, found {}", parts.len())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| self.err(ln, format!("bad coordinate `{s}`: {e}")))
        };
        Ok((ln, Point::new(parse(parts[0])?, parse(parts[1])?)))
    }
}

fn parse_record(lines: &mut Lines<'_>) -> Result<Option<AnyInstance>> {
    let Some((hl, header)) = lines.next_line() else {
        return Ok(None);
    };
    let mut words = header.split_whitespace();
    let kind = words.next().unwrap_or("");
    let count: usize = words
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or_else(|| lines.err(hl, format!("malformed header `{header}`")))?;
    if words.next().is_some() {
        return Err(lines.err(hl, format!("malformed header `{header}`")));
    }
    let nodes = match kind {
        "TSP" => count,
        "PDP" => 2 * count + 1,
        other => return Err(lines.err(hl, format!("unknown problem kind `{other}`"))),
    };
    let mut coords = Vec::with_capacity(nodes);
    let mut last = hl;
    for _ in 0..nodes {
        let (ln, p) = lines.point(last)?;
        coords.push(p);
        last = ln;
    }
    let inst = if kind == "TSP" {
        AnyInstance::Tsp(Instance::new(coords)?)
    } else {
        if count == 0 {
            return Err(Error::Validation("a PDP instance needs at least one request".into()));
        }
        let (pickups, deliveries) = if lines.peek_is("PAIRS") {
            let (pl, _) = lines.next_line().unwrap();
            read_pairs(lines, pl, count, &coords)?
        } else {
            (coords[1..=count].to_vec(), coords[count + 1..].to_vec())
        };
        AnyInstance::Pdp(PdInstance::new(coords[0], pickups, deliveries)?)
    };
    Ok(Some(inst))
}

fn read_pairs(
    lines: &mut Lines<'_>,
    mut last: usize,
    n: usize,
    coords: &[Point],
) -> Result<(Vec<Point>, Vec<Point>)> {
    let mut used = vec![false; 2 * n + 1];
    let mut pickups = Vec::with_capacity(n);
    let mut deliveries = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.expect_line(last, "a `pickup delivery` pair")?;
        last = ln;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|w| w.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| lines.err(ln, format!("bad node index: {e}")))?;
        let [p, d] = idx[..] else {
            return Err(lines.err(ln, "expected two node indices"));
        };
        for (role, v) in [("pickup", p), ("delivery", d)] {
            if v == 0 || v > 2 * n {
                return Err(Error::Validation(format!("line {ln}: {role} node {v} out of range")));
            }
            if std::mem::replace(&mut used[v], true) {
                return Err(Error::Validation(format!(
                    "line {ln}: node {v} appears twice in the pickup-delivery pairing"
                )));
            }
        }
        pickups.push(coords[p]);
        deliveries.push(coords[d]);
    }
    Ok((pickups, deliveries))
}

fn parse_all(path: &Path, text: &str) -> Result<Vec<AnyInstance>> {
    let mut lines = Lines::new(path, text);
    let mut out = Vec::new();
    while let Some(inst) = parse_record(&mut lines)? {
        out.push(inst);
    }
    Ok(out)
}

/// Reads a file holding exactly one instance.
pub fn read_instance(path: impl AsRef<Path>) -> Result<AnyInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut all = parse_all(path, &text)?;
    match all.len() {
        1 => Ok(all.pop().unwrap()),
        0 => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "file holds no instance".into(),
        }),
        k => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected one instance, found {k}"),
        }),
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<AnyInstance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_all(path, &text)
}

fn format_record(inst: &AnyInstance, out: &mut String) {
    use std::fmt::Write as _;
    let coords = match inst {
        AnyInstance::Tsp(t) => {
            let _ = writeln!(out, "TSP {}", t.n());
            t.coords()
        }
        AnyInstance::Pdp(p) => {
            let _ = writeln!(out, "PDP {}", p.requests());
            p.coords()
        }
    };
    for p in coords {
        let _ = writeln!(out, "{:.16e} {:.16e}", p.x, p.y);
    }
}

pub fn write_instance(inst: &AnyInstance, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(std::slice::from_ref(inst), path)
}

pub fn write_dataset(instances: &[AnyInstance], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for inst in instances {
        format_record(inst, &mut text);
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a results CSV. A missing file reads as empty.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(&path)?;
    let headers = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != RESULTS_HEADER {
        return Err(Error::Parse {
            path,
            line: 1,
            msg: format!("unexpected results header `{headers}`"),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
