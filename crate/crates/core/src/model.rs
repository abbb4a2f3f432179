//! Model constants, pre-limit rates and queue states.
//!
//! States are stored as unscaled integer counts. The diffusion-scaled view
//! `Q / sqrt(n)` is derived on demand by [`scale_state`].

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Constants of one pre-limit system together with its heavy-traffic limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct SystemParams {
    k: usize,
    lambda0: f64,
    beta: Vec<f64>,
    delta: Vec<f64>,
    buffer: Vec<f64>,
    scale: u64,
}

impl SystemParams {
    /// Validates and builds a parameter set. `buffer` entries may be
    /// `f64::INFINITY`.
    pub fn new(
        lambda0: f64,
        beta: Vec<f64>,
        delta: Vec<f64>,
        buffer: Vec<f64>,
        scale: u64,
    ) -> Result<Self> {
        let k = beta.len();
        let mut problems = Vec::new();
        if k < 2 {
            problems.push(format!("K must be at least 2, got {k}"));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            problems.push(format!("lambda0 must be positive and finite, got {lambda0}"));
        }
        if delta.len() != k {
            problems.push(format!("delta length {} != K {k}", delta.len()));
        }
        if buffer.len() != k {
            problems.push(format!("buffer length {} != K {k}", buffer.len()));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            problems.push("beta entries must be finite".to_string());
        }
        if delta.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            problems.push("delta entries must be positive and finite".to_string());
        }
        if buffer.iter().any(|b| !(*b > 0.0)) {
            problems.push("buffer entries must be positive (or inf)".to_string());
        }
        if scale == 0 {
            problems.push("n must be at least 1".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::InvalidParams(problems.join("; ")));
        }
        let params = SystemParams {
            k,
            lambda0,
            beta,
            delta,
            buffer,
            scale,
        };
        // Surface negative pre-limit rates at construction time.
        derive_prelimit_rates(&params)?;
        Ok(params)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Limit buffers `b_i`, `f64::INFINITY` for unbounded classes.
    pub fn buffer(&self) -> &[f64] {
        &self.buffer
    }

    /// The scale index `n` of the pre-limit system.
    pub fn scale(&self) -> u64 {
        self.scale
    }

    /// Same limit constants, different pre-limit index.
    pub fn with_scale(&self, scale: u64) -> Result<Self> {
        SystemParams::new(
            self.lambda0,
            self.beta.clone(),
            self.delta.clone(),
            self.buffer.clone(),
            scale,
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters always serialize")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Integer capacity of one pre-limit queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capacity {
    Finite(u32),
    Infinite,
}

impl Capacity {
    /// True if a queue holding `count` items can admit one more.
    #[inline]
    pub fn admits(self, count: u32) -> bool {
        match self {
            Capacity::Finite(b) => count < b,
            Capacity::Infinite => true,
        }
    }

    #[inline]
    pub fn contains(self, count: u32) -> bool {
        match self {
            Capacity::Finite(b) => count <= b,
            Capacity::Infinite => true,
        }
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Capacity::Finite(b) => Some(b),
            Capacity::Infinite => None,
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Finite(b) => write!(f, "{b}"),
            Capacity::Infinite => write!(f, "inf"),
        }
    }
}

/// Rates of the `n`-th pre-limit system in unscaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct PreLimitRates {
    arrival: Vec<f64>,
    abandon: Vec<f64>,
    capacity: Vec<Capacity>,
}

impl PreLimitRates {
    pub fn new(arrival: Vec<f64>, abandon: Vec<f64>, capacity: Vec<Capacity>) -> Result<Self> {
        let k = arrival.len();
        if k < 2 {
            return Err(Error::InvalidParams(format!("K must be at least 2, got {k}")));
        }
        if abandon.len() != k || capacity.len() != k {
            return Err(Error::InvalidParams(
                "arrival, abandonment and capacity vectors must have equal length".into(),
            ));
        }
        if let Some((class, &rate)) = arrival
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r >= 0.0 && r.is_finite()))
        {
            return Err(Error::NegativeRate { class, rate });
        }
        if abandon.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidParams(
                "abandonment rates must be positive and finite".into(),
            ));
        }
        if capacity.contains(&Capacity::Finite(0)) {
            return Err(Error::InvalidParams("buffer counts must be at least 1".into()));
        }
        Ok(PreLimitRates {
            arrival,
            abandon,
            capacity,
        })
    }

    pub fn k(&self) -> usize {
        self.arrival.len()
    }

    /// Arrival rates `λ_i^n` (events per unit time).
    pub fn arrival(&self) -> &[f64] {
        &self.arrival
    }

    /// Abandonment rates `δ_i^n` per waiting item.
    pub fn abandon(&self) -> &[f64] {
        &self.abandon
    }

    /// Buffer counts `b_i^n`.
    pub fn capacity(&self) -> &[Capacity] {
        &self.capacity
    }
}

/// `λ_i^n = λ₀n + β_i√n`, `δ_i^n = δ_i`, `b_i^n = max(1, round(b_i√n))`.
pub fn derive_prelimit_rates(params: &SystemParams) -> Result<PreLimitRates> {
    let n = params.scale as f64;
    let root = n.sqrt();
    let mut arrival = Vec::with_capacity(params.k);
    for (class, beta) in params.beta.iter().enumerate() {
        let rate = params.lambda0 * n + beta * root;
        if rate < 0.0 {
            return Err(Error::NegativeRate { class, rate });
        }
        arrival.push(rate);
    }
    let capacity = params
        .buffer
        .iter()
        .map(|&b| {
            if b.is_infinite() {
                Capacity::Infinite
            } else {
                Capacity::Finite(((b * root).round() as u32).max(1))
            }
        })
        .collect();
    PreLimitRates::new(arrival, params.delta.clone(), capacity)
}

/// Unscaled queue lengths with at least one empty queue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueueState(Vec<u32>);

impl QueueState {
    /// Rejects vectors shorter than two classes or with every queue nonempty.
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidState {
                counts,
                reason: "need at least two classes".into(),
            });
        }
        if counts.iter().all(|&c| c > 0) {
            return Err(Error::InvalidState {
                counts,
                reason: "product-zero violated".into(),
            });
        }
        Ok(QueueState(counts))
    }

    /// Like [`QueueState::new`], additionally checking the buffer bounds.
    pub fn within(counts: Vec<u32>, rates: &PreLimitRates) -> Result<Self> {
        let state = QueueState::new(counts)?;
        state.check_bounds(rates)?;
        Ok(state)
    }

    pub fn zeros(k: usize) -> Self {
        QueueState(vec![0; k])
    }

    pub fn check_bounds(&self, rates: &PreLimitRates) -> Result<()> {
        if self.0.len() != rates.k() {
            return Err(Error::InvalidState {
                counts: self.0.clone(),
                reason: format!("expected {} classes", rates.k()),
            });
        }
        if let Some(i) = (0..self.0.len()).find(|&i| !rates.capacity[i].contains(self.0[i])) {
            return Err(Error::InvalidState {
                counts: self.0.clone(),
                reason: format!("class {i} exceeds its buffer {}", rates.capacity[i]),
            });
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub(crate) fn from_counts_unchecked(counts: Vec<u32>) -> Self {
        debug_assert!(counts.contains(&0));
        QueueState(counts)
    }
}

/// Diffusion-scaled coordinates `Q_i / sqrt(n)`.
pub fn scale_state(state: &QueueState, n: u64) -> Vec<f64> {
    scale_counts(state.counts(), n)
}

pub(crate) fn scale_counts(counts: &[u32], n: u64) -> Vec<f64> {
    let root = (n as f64).sqrt();
    counts.iter().map(|&c| c as f64 / root).collect()
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "K")]
    k: usize,
    lambda0: f64,
    beta: Vec<f64>,
    delta: Vec<f64>,
    buffer: Vec<BufferEntry>,
    n: u64,
}

/// A buffer value in a config file: a number, or the `"inf"` sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferEntry(pub f64);

impl Serialize for BufferEntry {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for BufferEntry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Int(i64),
            Num(f64),
            Text(String),
        }
        match Entry::deserialize(deserializer)? {
            Entry::Int(v) => Ok(BufferEntry(v as f64)),
            Entry::Num(v) => Ok(BufferEntry(v)),
            Entry::Text(s) => parse_buffer_text(&s)
                .map(BufferEntry)
                .ok_or_else(|| serde::de::Error::custom(format!("bad buffer value {s:?}"))),
        }
    }
}

pub fn parse_buffer_text(s: &str) -> Option<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "∞" => Some(f64::INFINITY),
        other => other.parse().ok(),
    }
}

impl TryFrom<RawParams> for SystemParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        if raw.beta.len() != raw.k {
            return Err(Error::InvalidParams(format!(
                "beta length {} != K {}",
                raw.beta.len(),
                raw.k
            )));
        }
        SystemParams::new(
            raw.lambda0,
            raw.beta,
            raw.delta,
            raw.buffer.into_iter().map(|b| b.0).collect(),
            raw.n,
        )
    }
}

impl From<SystemParams> for RawParams {
    fn from(p: SystemParams) -> Self {
        RawParams {
            k: p.k,
            lambda0: p.lambda0,
            beta: p.beta,
            delta: p.delta,
            buffer: p.buffer.into_iter().map(BufferEntry).collect(),
            n: p.scale,
        }
    }
}
