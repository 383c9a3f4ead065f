//! Deletion channel specifications and trace sampling.
//!
//! Two channel families are supported: retention probability varying by
//! position (a fixed input length) and retention varying by letter (any
//! input length). A second-stage thinning channel deletes surviving
//! symbols with per-letter probabilities; composing the two is again a
//! letter-varying channel.

use crate::error::{Error, Result};
use crate::rng::{self, STAGE_CHANNEL};
use crate::util::sha256_hex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Symbols are stored as `u8`, so alphabets are capped at 256 letters.
pub const MAX_ALPHABET: usize = 256;

/// Cap on `count * max(n, 1)` in [`generate_ensemble`], in symbols.
pub const MAX_ENSEMBLE_SYMBOLS: u128 = 1 << 33;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Retention probability depends on the position of the symbol.
    PositionVarying,
    /// Retention probability depends on the letter at the symbol.
    LetterVarying,
}

/// A memoryless deletion channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    kind: ChannelKind,
    retention: Vec<f64>,
    alphabet_size: usize,
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(p.is_finite() && p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!("{what} must lie in (0, 1], got {p}")));
    }
    Ok(())
}

fn check_alphabet_size(m: usize) -> Result<()> {
    if !(2..=MAX_ALPHABET).contains(&m) {
        return Err(Error::domain(format!(
            "alphabet_size must lie in [2, {MAX_ALPHABET}], got {m}"
        )));
    }
    Ok(())
}

impl ChannelSpec {
    /// Channel whose position `k` retains with probability `retention[k]`.
    pub fn position_varying(retention: Vec<f64>, alphabet_size: usize) -> Result<Self> {
        if retention.is_empty() {
            return Err(Error::domain("position-varying spec needs length >= 1"));
        }
        check_alphabet_size(alphabet_size)?;
        for (k, &p) in retention.iter().enumerate() {
            check_probability(p, &format!("retention[{k}]"))?;
        }
        Ok(ChannelSpec { kind: ChannelKind::PositionVarying, retention, alphabet_size })
    }

    /// Channel retaining letter `z` with probability `retention[z]`; applies to any input length.
    pub fn letter_varying(retention: Vec<f64>) -> Result<Self> {
        let alphabet_size = retention.len();
        check_alphabet_size(alphabet_size)?;
        for (z, &p) in retention.iter().enumerate() {
            check_probability(p, &format!("retention[{z}]"))?;
        }
        Ok(ChannelSpec { kind: ChannelKind::LetterVarying, retention, alphabet_size })
    }

    /// Letter-varying channel with one retention probability for every letter.
    pub fn constant(p: f64, alphabet_size: usize) -> Result<Self> {
        check_alphabet_size(alphabet_size)?;
        Self::letter_varying(vec![p; alphabet_size])
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn retention(&self) -> &[f64] {
        &self.retention
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Input length for position-varying specs; `None` for letter-varying.
    pub fn length(&self) -> Option<usize> {
        match self.kind {
            ChannelKind::PositionVarying => Some(self.retention.len()),
            ChannelKind::LetterVarying => None,
        }
    }

    /// Checks that `x` is a legal input for this channel.
    pub fn validate_input(&self, x: &[u8]) -> Result<()> {
        if self.kind == ChannelKind::PositionVarying && x.len() != self.retention.len() {
            return Err(Error::domain(format!(
                "input length {} does not match spec length {}",
                x.len(),
                self.retention.len()
            )));
        }
        for (k, &sym) in x.iter().enumerate() {
            if sym as usize >= self.alphabet_size {
                return Err(Error::domain(format!(
                    "symbol {} at position {k} is outside alphabet of size {}",
                    sym, self.alphabet_size
                )));
            }
        }
        Ok(())
    }

    /// Retention probability seen by `symbol` at `position`.
    pub fn retention_for(&self, position: usize, symbol: u8) -> f64 {
        match self.kind {
            ChannelKind::PositionVarying => self.retention[position],
            ChannelKind::LetterVarying => self.retention[symbol as usize],
        }
    }

    /// Per-position retention sequence experienced by the input `x`.
    pub fn resolved_retention(&self, x: &[u8]) -> Result<Vec<f64>> {
        self.validate_input(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(k, &sym)| self.retention_for(k, sym))
            .collect())
    }

    /// Letter-varying channel equivalent to this channel followed by per-letter thinning.
    pub fn compose_thinning(&self, retain_by_letter: &[f64]) -> Result<ChannelSpec> {
        if self.kind != ChannelKind::LetterVarying {
            return Err(Error::domain("composition with thinning needs a letter-varying spec"));
        }
        if retain_by_letter.len() != self.alphabet_size {
            return Err(Error::domain(format!(
                "thinning vector has {} entries, alphabet has {}",
                retain_by_letter.len(),
                self.alphabet_size
            )));
        }
        for (z, &r) in retain_by_letter.iter().enumerate() {
            check_probability(r, &format!("retain_by_letter[{z}]"))?;
        }
        let composed = self
            .retention
            .iter()
            .zip(retain_by_letter)
            .map(|(&p, &r)| p * r)
            .collect();
        ChannelSpec::letter_varying(composed)
    }

    pub fn to_config(&self, assumption: Option<AssumptionTag>) -> ChannelSpecConfig {
        ChannelSpecConfig {
            kind: self.kind,
            retention: self.retention.clone(),
            alphabet_size: self.alphabet_size,
            length: self.length(),
            assumption,
        }
    }

    /// Hash identifying the channel itself (assumption annotations excluded).
    pub fn stable_hash(&self) -> String {
        let text = toml::to_string(&self.to_config(None)).expect("spec config serializes");
        sha256_hex(text.as_bytes())
    }
}

/// Structural assumption annotation for a retention sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssumptionTag {
    /// Later retentions may rise, but never past twice an earlier one minus the margin.
    WeakMonotone { delta: f64 },
    /// Deletion probabilities alternate `q` (even positions) and `q_tilde` (odd).
    TwoPeriodic { q: f64, q_tilde: f64 },
    None,
}

/// Exact predicate: does `tag`'s structural condition hold for `spec`?
///
/// Tags other than `None` describe position sequences, so any non-`None`
/// tag on a letter-varying spec fails. Malformed tag parameters
/// (`delta` outside (0,1), deletion rates outside [0,1)) also fail.
pub fn validate_assumption(spec: &ChannelSpec, tag: &AssumptionTag) -> bool {
    match *tag {
        AssumptionTag::None => true,
        AssumptionTag::WeakMonotone { delta } => {
            if spec.kind != ChannelKind::PositionVarying {
                return false;
            }
            if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
                return false;
            }
            let p = &spec.retention;
            for k in 1..p.len() {
                if p[k] <= delta {
                    return false;
                }
                for l in 0..k {
                    if p[l] <= p[k] / 2.0 + delta {
                        return false;
                    }
                }
            }
            true
        }
        AssumptionTag::TwoPeriodic { q, q_tilde } => {
            if spec.kind != ChannelKind::PositionVarying {
                return false;
            }
            let ok = |v: f64| v.is_finite() && (0.0..1.0).contains(&v);
            if !ok(q) || !ok(q_tilde) {
                return false;
            }
            // compare in the deletion-rate -> retention direction, the same
            // conversion used when specs are written down
            spec.retention.iter().enumerate().all(|(k, &p)| {
                let want = if k % 2 == 0 { q } else { q_tilde };
                p == 1.0 - want
            })
        }
    }
}

/// Config-file form of a channel spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpecConfig {
    pub kind: ChannelKind,
    pub retention: Vec<f64>,
    pub alphabet_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumption: Option<AssumptionTag>,
}

impl ChannelSpecConfig {
    /// Validates the config and builds the spec. A declared assumption
    /// that does not hold for the retention sequence is an error.
    pub fn build(&self) -> Result<(ChannelSpec, AssumptionTag)> {
        let spec = match self.kind {
            ChannelKind::PositionVarying => {
                let spec = ChannelSpec::position_varying(self.retention.clone(), self.alphabet_size)?;
                if let Some(len) = self.length {
                    if len != self.retention.len() {
                        return Err(Error::domain(format!(
                            "length {} does not match retention list of {} entries",
                            len,
                            self.retention.len()
                        )));
                    }
                }
                spec
            }
            ChannelKind::LetterVarying => {
                if self.alphabet_size != self.retention.len() {
                    return Err(Error::domain(format!(
                        "letter-varying spec needs alphabet_size = retention entries, got {} vs {}",
                        self.alphabet_size,
                        self.retention.len()
                    )));
                }
                ChannelSpec::letter_varying(self.retention.clone())?
            }
        };
        let tag = self.assumption.unwrap_or(AssumptionTag::None);
        if !validate_assumption(&spec, &tag) {
            return Err(Error::domain(format!("declared assumption {tag:?} does not hold")));
        }
        Ok((spec, tag))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(format!("channel config: {e}")))
    }
}

/// Linearly decreasing retention ramp from 0.9 down to 0.6 satisfying the
/// weak-monotone margin `delta`.
pub fn weak_monotone_family(n: usize, delta: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("family length must be >= 1"));
    }
    let (hi, lo) = (0.9, 0.6);
    let retention: Vec<f64> = (0..n)
        .map(|k| {
            if n == 1 {
                hi
            } else {
                hi - (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect();
    let spec = ChannelSpec::position_varying(retention.clone(), 2)?;
    if !validate_assumption(&spec, &AssumptionTag::WeakMonotone { delta }) {
        return Err(Error::domain(format!(
            "ramp 0.9..0.6 does not satisfy weak monotonicity with delta {delta}"
        )));
    }
    Ok(retention)
}

/// One output of a deletion channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    symbols: Vec<u8>,
    source_length: usize,
}

impl Trace {
    pub fn new(symbols: Vec<u8>, source_length: usize) -> Result<Self> {
        if symbols.len() > source_length {
            return Err(Error::domain(format!(
                "trace of {} symbols cannot come from an input of length {}",
                symbols.len(),
                source_length
            )));
        }
        Ok(Trace { symbols, source_length })
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn source_length(&self) -> usize {
        self.source_length
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn letter_count(&self, letter: u8) -> usize {
        self.symbols.iter().filter(|&&s| s == letter).count()
    }

    /// Greedy subsequence matcher.
    pub fn is_subsequence_of(&self, x: &[u8]) -> bool {
        let mut it = x.iter();
        self.symbols.iter().all(|s| it.any(|v| v == s))
    }
}

/// Traces drawn from one input under one spec and master seed.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEnsemble {
    traces: Vec<Trace>,
    seed: u64,
    spec: ChannelSpec,
}

impl TraceEnsemble {
    pub fn new(traces: Vec<Trace>, seed: u64, spec: ChannelSpec) -> Result<Self> {
        let Some(first) = traces.first() else {
            return Err(Error::domain("ensemble must contain at least one trace"));
        };
        let n = first.source_length();
        if let Some(len) = spec.length() {
            if len != n {
                return Err(Error::domain(format!(
                    "trace source length {n} does not match spec length {len}"
                )));
            }
        }
        for t in &traces {
            if t.source_length() != n {
                return Err(Error::domain("traces disagree on source length"));
            }
            if let Some(&sym) = t.symbols().iter().find(|&&s| s as usize >= spec.alphabet_size()) {
                return Err(Error::domain(format!(
                    "trace symbol {sym} outside alphabet of size {}",
                    spec.alphabet_size()
                )));
            }
        }
        Ok(TraceEnsemble { traces, seed, spec })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn count(&self) -> usize {
        self.traces.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn source_length(&self) -> usize {
        self.traces[0].source_length()
    }

    /// Line format: header `n m T seed spec_hash`, then one trace per line
    /// as space-separated symbols (empty line for an empty trace).
    pub fn to_lines(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {}\n",
            self.source_length(),
            self.spec.alphabet_size(),
            self.count(),
            self.seed,
            self.spec.stable_hash()
        );
        for t in &self.traces {
            let line: Vec<String> = t.symbols().iter().map(|s| s.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses [`to_lines`](Self::to_lines) output. The header's spec hash
    /// must match `spec`; the format does not embed the spec itself.
    pub fn from_lines(text: &str, spec: &ChannelSpec) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse("missing ensemble header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(format!(
                "ensemble header needs 5 fields (n m T seed spec_hash), got {}",
                fields.len()
            )));
        }
        let n: usize = fields[0].parse().map_err(|_| Error::parse("bad n in header"))?;
        let m: usize = fields[1].parse().map_err(|_| Error::parse("bad m in header"))?;
        let count: usize = fields[2].parse().map_err(|_| Error::parse("bad T in header"))?;
        let seed: u64 = fields[3].parse().map_err(|_| Error::parse("bad seed in header"))?;
        if m != spec.alphabet_size() {
            return Err(Error::parse(format!(
                "header alphabet {m} does not match spec alphabet {}",
                spec.alphabet_size()
            )));
        }
        if fields[4] != spec.stable_hash() {
            return Err(Error::parse("spec hash in header does not match the supplied spec"));
        }
        let mut traces = Vec::with_capacity(count);
        for i in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(format!("expected {count} traces, found {i}")))?;
            let symbols = line
                .split_whitespace()
                .map(|tok| tok.parse::<u8>().map_err(|_| Error::parse(format!("bad symbol {tok:?} in trace {i}"))))
                .collect::<Result<Vec<u8>>>()?;
            if symbols.len() > n {
                return Err(Error::parse(format!("trace {i} longer than source length {n}")));
            }
            traces.push(Trace { symbols, source_length: n });
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::parse("trailing content after final trace"));
        }
        TraceEnsemble::new(traces, seed, spec.clone()).map_err(|e| match e {
            Error::Domain(msg) => Error::Parse(msg),
            other => other,
        })
    }
}

fn sample_trace<R: Rng + ?Sized>(x: &[u8], spec: &ChannelSpec, rng: &mut R) -> Trace {
    let mut symbols = Vec::with_capacity(x.len());
    for (k, &sym) in x.iter().enumerate() {
        if rng.gen::<f64>() < spec.retention_for(k, sym) {
            symbols.push(sym);
        }
    }
    Trace { symbols, source_length: x.len() }
}

/// Sends `x` through the deletion channel once.
pub fn apply_channel<R: Rng + ?Sized>(x: &[u8], spec: &ChannelSpec, rng: &mut R) -> Result<Trace> {
    spec.validate_input(x)?;
    Ok(sample_trace(x, spec, rng))
}

/// Second-stage channel: deletes each symbol `z` of `t` with probability
/// `1 - retain_by_letter[z]`.
pub fn thin_trace<R: Rng + ?Sized>(
    t: &Trace,
    retain_by_letter: &[f64],
    rng: &mut R,
) -> Result<Trace> {
    for (z, &r) in retain_by_letter.iter().enumerate() {
        check_probability(r, &format!("retain_by_letter[{z}]"))?;
    }
    let mut symbols = Vec::with_capacity(t.len());
    for &sym in t.symbols() {
        let r = *retain_by_letter.get(sym as usize).ok_or_else(|| {
            Error::domain(format!(
                "trace symbol {sym} has no thinning probability (vector has {} entries)",
                retain_by_letter.len()
            ))
        })?;
        if rng.gen::<f64>() < r {
            symbols.push(sym);
        }
    }
    Ok(Trace { symbols, source_length: t.source_length() })
}

/// Draws `count` independent traces of `x`. Trace `i` comes from its own
/// counter-based substream of `seed`, so the result is a pure function of
/// `(x, spec, count, seed)` for any worker count.
pub fn generate_ensemble(
    x: &[u8],
    spec: &ChannelSpec,
    count: usize,
    seed: u64,
) -> Result<TraceEnsemble> {
    spec.validate_input(x)?;
    if count == 0 {
        return Err(Error::domain("ensemble size must be >= 1"));
    }
    let symbols = count as u128 * x.len().max(1) as u128;
    if symbols > MAX_ENSEMBLE_SYMBOLS {
        return Err(Error::capacity(format!(
            "ensemble of {count} traces x length {} exceeds the {MAX_ENSEMBLE_SYMBOLS}-symbol cap",
            x.len()
        )));
    }
    let traces: Vec<Trace> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, STAGE_CHANNEL, i as u64);
            sample_trace(x, spec, &mut rng)
        })
        .collect();
    Ok(TraceEnsemble { traces, seed, spec: spec.clone() })
}
