//! Sampled experimental traces and their long-format CSV encoding.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "x,x_kind,channel,value,n_avg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XKind {
    /// Swept microwave frequency, MHz.
    Frequency,
    /// Swept pulse length, μs.
    PulseLength,
    /// Total echo evolution time, μs.
    EvolutionTime,
}

impl XKind {
    pub fn as_str(self) -> &'static str {
        match self {
            XKind::Frequency => "frequency",
            XKind::PulseLength => "pulse-length",
            XKind::EvolutionTime => "evolution-time",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            XKind::Frequency => "MHz",
            XKind::PulseLength | XKind::EvolutionTime => "us",
        }
    }
}

impl FromStr for XKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(XKind::Frequency),
            "pulse-length" => Ok(XKind::PulseLength),
            "evolution-time" => Ok(XKind::EvolutionTime),
            other => Err(Error::InvalidTrace(format!("unknown x_kind `{other}`"))),
        }
    }
}

/// Which derived signal to extract from a trace's channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalView {
    /// Bright-state population in [0, 1]. For dual-channel traces this is
    /// `(1 − (SIG2 − SIG1)) / 2` of the reference-normalized channels.
    Population,
    /// Reference-normalized `SIG2 − SIG1` for dual-channel traces; the
    /// population for single-channel traces.
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    x: Vec<f64>,
    x_kind: XKind,
    channels: BTreeMap<String, Vec<f64>>,
    n_avg: u64,
}

impl Trace {
    pub fn new(x: Vec<f64>, x_kind: XKind, channels: BTreeMap<String, Vec<f64>>, n_avg: u64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidTrace("empty grid".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace("non-finite grid value".into()));
        }
        if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace(format!("grid not strictly increasing at index {}", i + 1)));
        }
        if n_avg < 1 {
            return Err(Error::InvalidTrace("n_avg must be at least 1".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidTrace("trace has no channels".into()));
        }
        for (name, values) in &channels {
            if values.len() != x.len() {
                return Err(Error::InvalidTrace(format!(
                    "channel {name} has {} samples, grid has {}",
                    values.len(),
                    x.len()
                )));
            }
        }
        Ok(Self { x, x_kind, channels, n_avg })
    }

    /// Single-channel trace holding an already normalized signal.
    pub fn normalized(x: Vec<f64>, x_kind: XKind, y: Vec<f64>, n_avg: u64) -> Result<Self> {
        let mut channels = BTreeMap::new();
        channels.insert("NORM".to_string(), y);
        Self::new(x, x_kind, channels, n_avg)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_kind(&self) -> XKind {
        self.x_kind
    }

    pub fn n_avg(&self) -> u64 {
        self.n_avg
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn channels(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    fn require(&self, name: &str) -> Result<&[f64]> {
        self.channel(name).ok_or_else(|| Error::InvalidTrace(format!("missing channel {name}")))
    }

    /// Grid spacing assuming a uniform grid (mean spacing otherwise).
    pub fn step(&self) -> f64 {
        if self.x.len() < 2 {
            return 0.0;
        }
        self.span() / (self.x.len() - 1) as f64
    }

    pub fn span(&self) -> f64 {
        self.x[self.x.len() - 1] - self.x[0]
    }

    /// Extract the analysis signal.
    ///
    /// Channel layouts understood: `SIG1,SIG2,REF1,REF2` (dual projection),
    /// `SIG,REF1,REF2` (single projection) or a single channel of any name,
    /// which is taken as already normalized.
    pub fn signal(&self, view: SignalView) -> Result<Vec<f64>> {
        if self.channels.len() == 1 {
            return Ok(self.channels.values().next().cloned().unwrap_or_default());
        }
        let ref1 = self.require("REF1")?;
        let ref2 = self.require("REF2")?;
        let floor = crate::synth::reference_noise_floor(ref1, ref2, self.n_avg);
        if let (Some(s1), Some(s2)) = (self.channel("SIG1"), self.channel("SIG2")) {
            let n1 = crate::synth::normalize_channels_with_floor(s1, ref1, ref2, floor)?;
            let n2 = crate::synth::normalize_channels_with_floor(s2, ref1, ref2, floor)?;
            let diff = n2.iter().zip(&n1).map(|(b, a)| b - a);
            return Ok(match view {
                SignalView::Difference => diff.collect(),
                SignalView::Population => diff.map(|d| 0.5 * (1.0 - d)).collect(),
            });
        }
        let sig = self.require("SIG")?;
        crate::synth::normalize_channels_with_floor(sig, ref1, ref2, floor)
    }

    /// Long-format CSV with a unit comment header. Values are written with 17
    /// significant digits so they re-parse bit for bit.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# nvepr trace: x in {}, frequencies in MHz, times in us, angles in degrees",
            self.x_kind.unit()
        );
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (i, x) in self.x.iter().enumerate() {
            for (name, values) in &self.channels {
                let _ = writeln!(out, "{:.16e},{},{},{:.16e},{}", x, self.x_kind.as_str(), name, values[i], self.n_avg);
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut header_seen = false;
        let mut x: Vec<f64> = Vec::new();
        let mut kind: Option<XKind> = None;
        let mut n_avg: Option<u64> = None;
        let mut channels: BTreeMap<String, Vec<f64>> = BTreeMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            if !header_seen {
                if line != CSV_HEADER {
                    return Err(parse_err(format!("expected header `{CSV_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
            }
            let xv: f64 = fields[0].parse().map_err(|_| parse_err(format!("bad x value `{}`", fields[0])))?;
            let k: XKind = fields[1].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let value: f64 = fields[3].parse().map_err(|_| parse_err(format!("bad value `{}`", fields[3])))?;
            let n: u64 = fields[4].parse().map_err(|_| parse_err(format!("bad n_avg `{}`", fields[4])))?;
            if *kind.get_or_insert(k) != k {
                return Err(parse_err("mixed x_kind values".into()));
            }
            if *n_avg.get_or_insert(n) != n {
                return Err(parse_err("mixed n_avg values".into()));
            }
            match x.last() {
                Some(last) if last.to_bits() == xv.to_bits() => {}
                Some(last) if xv <= *last => {
                    return Err(parse_err("x values must be grouped and strictly increasing".into()))
                }
                _ => x.push(xv),
            }
            let column = channels.entry(fields[2].to_string()).or_default();
            if column.len() + 1 != x.len() {
                return Err(parse_err(format!("channel {} has a missing or duplicated sample", fields[2])));
            }
            column.push(value);
        }
        if !header_seen {
            return Err(Error::Parse { line: 0, message: "missing header".into() });
        }
        let kind = kind.ok_or_else(|| Error::Parse { line: 0, message: "no data rows".into() })?;
        Self::new(x, kind, channels, n_avg.unwrap_or(1))
    }
}

/// `key=value` pairs found in `# key=value ...` comment lines of a CSV file.
pub fn csv_comment_fields(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .flat_map(|l| l.trim_start_matches('#').split_whitespace())
        .filter_map(|tok| tok.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
