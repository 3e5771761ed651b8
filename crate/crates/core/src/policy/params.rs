//! Policy weights, adaptation weights, and their checkpoint file.
//!
//! Checkpoints are UTF-8 text:
//!
//! ```text
//! lrbs-params 1
//! kind tsp
//! temperature 1.0000000000000000e0
//! tensor head0 82
//! <82 whitespace-separated values>
//! ```
//!
//! The first line names the format and version. Attribute lines are
//! `key value`; each `tensor <name> <len>` line is followed by one line of
//! values written with 17 significant digits, so round trips are lossless.
//! Policy files carry `kind` and `temperature` plus one tensor per scoring
//! head (`head0`, ...). Adaptation files carry `kind eas`, `heads`,
//! `enabled` and one tensor per head (`phi0`, ...).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Per-node input features.
pub const NODE_FEATURES: usize = 8;
/// Width of the source/destination node embeddings.
pub const EMBED_DIM: usize = 4;
/// Per-candidate geometric features.
pub const PAIR_FEATURES: usize = 2;
/// Weights in one scoring head.
pub const HEAD_LEN: usize = 2 * NODE_FEATURES + 2 * EMBED_DIM * NODE_FEATURES + PAIR_FEATURES;
/// Inputs of the adaptation layer: the score, the pair features and both
/// node feature vectors.
pub const EAS_FEATURES: usize = 1 + PAIR_FEATURES + 2 * NODE_FEATURES;

pub(crate) const W_SRC: usize = 0;
pub(crate) const W_DST: usize = NODE_FEATURES;
pub(crate) const W_Q: usize = 2 * NODE_FEATURES;
pub(crate) const W_K: usize = W_Q + EMBED_DIM * NODE_FEATURES;
pub(crate) const W_PAIR: usize = W_K + EMBED_DIM * NODE_FEATURES;

const FORMAT: &str = "lrbs-params 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// One head scoring 2-opt moves.
    Tsp,
    /// Three heads: request, pickup slot, delivery slot.
    Pdp,
}

impl PolicyKind {
    pub fn heads(self) -> usize {
        match self {
            PolicyKind::Tsp => 1,
            PolicyKind::Pdp => 3,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Tsp => "tsp",
            PolicyKind::Pdp => "pdp",
        }
    }
}

/// Base policy weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub kind: PolicyKind,
    pub temperature: f64,
    /// `kind.heads()` blocks of [`HEAD_LEN`] weights.
    pub weights: Vec<f64>,
}

impl PolicyParams {
    /// All-zero weights: the uniform distribution over valid moves.
    pub fn zeros(kind: PolicyKind) -> Self {
        Self {
            kind,
            temperature: 1.0,
            weights: vec![0.0; kind.heads() * HEAD_LEN],
        }
    }

    /// Zero linear weights and small random embedding projections, so the
    /// bilinear term is not stuck at its saddle point.
    pub fn init(kind: PolicyKind, seed: u64) -> Self {
        let mut p = Self::zeros(kind);
        let mut rng = rng_from_seed(seed);
        for h in 0..kind.heads() {
            for w in &mut p.weights[h * HEAD_LEN + W_Q..h * HEAD_LEN + W_PAIR] {
                *w = rng.gen_range(-0.1..0.1);
            }
        }
        p
    }

    pub fn head(&self, h: usize) -> &[f64] {
        &self.weights[h * HEAD_LEN..(h + 1) * HEAD_LEN]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Validation(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.weights.len() != self.kind.heads() * HEAD_LEN {
            return Err(Error::Validation(format!(
                "expected {} weights, got {}",
                self.kind.heads() * HEAD_LEN,
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("non-finite policy weight".into()));
        }
        Ok(())
    }

    /// Order-sensitive FNV-1a digest of the exact bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.kind.heads() as u64);
        eat(self.temperature.to_bits());
        for w in &self.weights {
            eat(w.to_bits());
        }
        h
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = ParamFile::default();
        f.attrs.push(("kind".into(), self.kind.as_str().into()));
        f.attrs.push(("temperature".into(), format!("{:.16e}", self.temperature)));
        for h in 0..self.kind.heads() {
            f.tensors.push((format!("head{h}"), self.head(h).to_vec()));
        }
        f.write(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = ParamFile::read(path.as_ref())?;
        let kind = match f.attr("kind")? {
            "tsp" => PolicyKind::Tsp,
            "pdp" => PolicyKind::Pdp,
            other => return Err(f.invalid(format!("not a policy checkpoint (kind `{other}`)"))),
        };
        let temperature = f
            .attr("temperature")?
            .parse::<f64>()
            .map_err(|e| f.invalid(format!("bad temperature: {e}")))?;
        let mut weights = Vec::with_capacity(kind.heads() * HEAD_LEN);
        for h in 0..kind.heads() {
            weights.extend_from_slice(f.tensor(&format!("head{h}"), HEAD_LEN)?);
        }
        let p = Self {
            kind,
            temperature,
            weights,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Adaptation weights: a residual affine layer on the pre-softmax scores.
///
/// For a candidate with score `s`, pair features `g` and node features
/// `f_src`, `f_dst`, head `h` adds `phi_h . [s, g, f_src, f_dst]`. With
/// `phi = 0` the scores, and hence the distribution, are unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct EasParams {
    /// `heads` blocks of [`EAS_FEATURES`] weights.
    pub phi: Vec<f64>,
    pub enabled: bool,
    version: u64,
}

impl EasParams {
    pub fn zeros(kind: PolicyKind) -> Self {
        Self {
            phi: vec![0.0; kind.heads() * EAS_FEATURES],
            enabled: true,
            version: 0,
        }
    }

    pub fn heads(&self) -> usize {
        self.phi.len() / EAS_FEATURES
    }

    pub fn head(&self, h: usize) -> &[f64] {
        &self.phi[h * EAS_FEATURES..(h + 1) * EAS_FEATURES]
    }

    /// Bumped on every update; rollouts remember the version they saw.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Gradient ascent step `phi += lr * grad`.
    pub fn ascend(&mut self, grad: &[f64], learning_rate: f64) -> Result<()> {
        if grad.len() != self.phi.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient has {} entries, phi has {}",
                grad.len(),
                self.phi.len()
            )));
        }
        let next: Vec<f64> = self.phi.iter().zip(grad).map(|(p, g)| p + learning_rate * g).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("adaptation weights overflowed".into()));
        }
        self.phi = next;
        self.version += 1;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.phi.iter_mut().for_each(|p| *p = 0.0);
        self.version += 1;
    }

    pub fn is_zero(&self) -> bool {
        self.phi.iter().all(|&p| p == 0.0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = ParamFile::default();
        f.attrs.push(("kind".into(), "eas".into()));
        f.attrs.push(("heads".into(), self.heads().to_string()));
        f.attrs.push(("enabled".into(), (self.enabled as u8).to_string()));
        for h in 0..self.heads() {
            f.tensors.push((format!("phi{h}"), self.head(h).to_vec()));
        }
        f.write(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = ParamFile::read(path.as_ref())?;
        if f.attr("kind")? != "eas" {
            return Err(f.invalid("not an adaptation checkpoint"));
        }
        let heads: usize = f.attr("heads")?.parse().map_err(|_| f.invalid("bad head count"))?;
        let enabled = match f.attr("enabled")? {
            "1" => true,
            "0" => false,
            _ => return Err(f.invalid("`enabled` must be 0 or 1")),
        };
        let mut phi = Vec::with_capacity(heads * EAS_FEATURES);
        for h in 0..heads {
            phi.extend_from_slice(f.tensor(&format!("phi{h}"), EAS_FEATURES)?);
        }
        Ok(Self {
            phi,
            enabled,
            version: 0,
        })
    }
}

/// Fresh, zero-initialized adaptation weights for `base`.
pub fn eas_wrap(base: &PolicyParams) -> EasParams {
    EasParams::zeros(base.kind)
}

#[derive(Default)]
struct ParamFile {
    path: std::path::PathBuf,
    attrs: Vec<(String, String)>,
    tensors: Vec<(String, Vec<f64>)>,
}

impl ParamFile {
    fn invalid(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: 0,
            msg: msg.into(),
        }
    }

    fn attr(&self, key: &str) -> Result<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| self.invalid(format!("missing `{key}`")))
    }

    fn tensor(&self, name: &str, len: usize) -> Result<&[f64]> {
        let (_, v) = self
            .tensors
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| self.invalid(format!("missing tensor `{name}`")))?;
        if v.len() != len {
            return Err(self.invalid(format!("tensor `{name}` has {} values, expected {len}", v.len())));
        }
        Ok(v)
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT}");
        for (k, v) in &self.attrs {
            let _ = writeln!(s, "{k} {v}");
        }
        for (name, vals) in &self.tensors {
            let _ = writeln!(s, "tensor {name} {}", vals.len());
            let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        fs::write(path, s)?;
        Ok(())
    }

    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, l)) if l == FORMAT => {}
            _ => return Err(err(1, format!("expected `{FORMAT}` header"))),
        }
        let mut f = ParamFile {
            path: path.to_path_buf(),
            ..Default::default()
        };
        while let Some((ln, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let mut w = line.split_whitespace();
            match (w.next(), w.next(), w.next()) {
                (Some("tensor"), Some(name), Some(len)) => {
                    let len: usize = len.parse().map_err(|_| err(ln, "bad tensor length".into()))?;
                    let (vl, vals) = lines
                        .next()
                        .ok_or_else(|| err(ln + 1, format!("missing values for `{name}`")))?;
                    let vals: Vec<f64> = vals
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| err(vl, format!("bad value: {e}")))?;
                    if vals.len() != len {
                        return Err(err(vl, format!("expected {len} values, got {}", vals.len())));
                    }
                    f.tensors.push((name.to_string(), vals));
                }
                (Some(k), Some(v), None) => f.attrs.push((k.to_string(), v.to_string())),
                _ => return Err(err(ln, format!("unrecognized line `{line}`"))),
            }
        }
        Ok(f)
    }
}
