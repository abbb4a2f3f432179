//! Transition structure of the pre-limit chain.
//!
//! One rule covers every state: an arrival of class `i` completes a match
//! when every other queue is nonempty, joins queue `i` when there is room,
//! and is blocked otherwise. Abandonments leave at rate `δ_i Q_i`.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Capacity, PreLimitRates, QueueState};

/// Default cap on dense generator entries (states squared).
pub const DEFAULT_ENTRY_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    ArrivalAdmitted(usize),
    ArrivalMatched(usize),
    ArrivalBlocked(usize),
    Abandonment(usize),
}

impl TransitionKind {
    pub fn class(self) -> usize {
        match self {
            TransitionKind::ArrivalAdmitted(i)
            | TransitionKind::ArrivalMatched(i)
            | TransitionKind::ArrivalBlocked(i)
            | TransitionKind::Abandonment(i) => i,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub target: QueueState,
    pub rate: f64,
    pub kind: TransitionKind,
}

/// Outcome of a class-`class` arrival in the state `counts`.
#[inline]
pub fn arrival_outcome(counts: &[u32], capacity: &[Capacity], class: usize) -> TransitionKind {
    let others_nonempty = counts
        .iter()
        .enumerate()
        .all(|(j, &c)| j == class || c > 0);
    if others_nonempty {
        TransitionKind::ArrivalMatched(class)
    } else if capacity[class].admits(counts[class]) {
        TransitionKind::ArrivalAdmitted(class)
    } else {
        TransitionKind::ArrivalBlocked(class)
    }
}

/// Applies the effect of `kind` to `counts` in place.
#[inline]
pub fn apply_kind(counts: &mut [u32], kind: TransitionKind) {
    match kind {
        TransitionKind::ArrivalAdmitted(i) => counts[i] += 1,
        TransitionKind::ArrivalMatched(i) => {
            for (j, c) in counts.iter_mut().enumerate() {
                if j != i {
                    *c -= 1;
                }
            }
        }
        TransitionKind::ArrivalBlocked(_) => {}
        TransitionKind::Abandonment(i) => counts[i] -= 1,
    }
}

/// All transitions out of `state`, arrivals first (by class) and then
/// abandonments. Blocked arrivals appear as self-loops.
pub fn transitions_from(state: &QueueState, rates: &PreLimitRates) -> Result<Vec<Transition>> {
    state.check_bounds(rates)?;
    let counts = state.counts();
    let k = counts.len();
    let mut out = Vec::with_capacity(2 * k);
    for i in 0..k {
        let rate = rates.arrival()[i];
        if rate <= 0.0 {
            continue;
        }
        let kind = arrival_outcome(counts, rates.capacity(), i);
        let mut target = counts.to_vec();
        apply_kind(&mut target, kind);
        out.push(Transition {
            target: QueueState::from_counts_unchecked(target),
            rate,
            kind,
        });
    }
    for i in 0..k {
        if counts[i] > 0 {
            let mut target = counts.to_vec();
            target[i] -= 1;
            out.push(Transition {
                target: QueueState::from_counts_unchecked(target),
                rate: rates.abandon()[i] * counts[i] as f64,
                kind: TransitionKind::Abandonment(i),
            });
        }
    }
    Ok(out)
}

fn finite_capacities(rates: &PreLimitRates) -> Result<Vec<u32>> {
    rates
        .capacity()
        .iter()
        .enumerate()
        .map(|(i, c)| c.finite().ok_or(Error::Unbounded(i)))
        .collect()
}

/// Number of product-zero states: `∏(b_i+1) − ∏b_i`.
pub fn state_count(rates: &PreLimitRates) -> Result<usize> {
    let caps = finite_capacities(rates)?;
    let grid: usize = caps.iter().map(|&b| b as usize + 1).product();
    let full: usize = caps.iter().map(|&b| b as usize).product();
    Ok(grid - full)
}

/// Every product-zero state within the buffers, in lexicographic order.
pub fn enumerate_states(rates: &PreLimitRates) -> Result<Vec<QueueState>> {
    let caps = finite_capacities(rates)?;
    let k = caps.len();
    let mut out = Vec::with_capacity(state_count(rates)?);
    let mut counts = vec![0u32; k];
    loop {
        if counts.contains(&0) {
            out.push(QueueState::from_counts_unchecked(counts.clone()));
        }
        // Odometer increment, last coordinate fastest.
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if counts[pos] < caps[pos] {
                counts[pos] += 1;
                break;
            }
            counts[pos] = 0;
        }
    }
}

/// Dense generator of a finite instance, indexed by [`enumerate_states`].
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    states: Vec<QueueState>,
    index: HashMap<QueueState, usize>,
    matrix: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn states(&self) -> &[QueueState] {
        &self.states
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &QueueState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// `Σ_j M(i,j) f_j` for every state `i`.
    pub fn action(&self, values: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(values);
        (&self.matrix * v).as_slice().to_vec()
    }

    /// Writes nonzero entries as `row col value` lines (zero-based).
    pub fn write_coo<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# rows={} cols={}", self.len(), self.len())?;
        for i in 0..self.len() {
            for j in 0..self.len() {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{i} {j} {v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Builds `M` with off-diagonal rates aggregated by target and diagonal
/// `−(row sum)`. Blocked self-loops contribute nothing.
pub fn build_generator_matrix(rates: &PreLimitRates, entry_cap: usize) -> Result<GeneratorMatrix> {
    let count = state_count(rates)?;
    let entries = count.saturating_mul(count);
    if entries > entry_cap {
        return Err(Error::TooLarge {
            entries,
            cap: entry_cap,
        });
    }
    let states = enumerate_states(rates)?;
    let index: HashMap<QueueState, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let mut matrix = DMatrix::zeros(count, count);
    for (row, state) in states.iter().enumerate() {
        let mut total = 0.0;
        for tr in transitions_from(state, rates)? {
            if tr.target == *state {
                continue;
            }
            let col = index[&tr.target];
            matrix[(row, col)] += tr.rate;
            total += tr.rate;
        }
        matrix[(row, row)] = -total;
    }
    Ok(GeneratorMatrix {
        states,
        index,
        matrix,
    })
}
