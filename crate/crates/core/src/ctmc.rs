//! Exact event-driven simulation of the pre-limit matching system.
//!
//! Each class carries an arrival clock at rate `λ_i^n` and an abandonment
//! clock at rate `δ_i^n Q_i`. The next event time is drawn at the total
//! rate and the event itself from the categorical over clocks. Abandonment
//! through state-dependent clocks has the same law as the time-changed
//! unit-rate Poisson construction.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::kernel::{apply_kind, arrival_outcome, TransitionKind};
use crate::model::{PreLimitRates, QueueState};
use crate::rng::{stream_rng, StreamRng};

/// Which events are kept in an [`EventPath`]. The initial state and the
/// final state are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    #[default]
    All,
    /// Every `k`-th event.
    Every(usize),
    FinalOnly,
}

impl Recording {
    fn keeps(self, event: u64) -> bool {
        match self {
            Recording::All => true,
            Recording::Every(k) => k > 0 && event.is_multiple_of(k as u64),
            Recording::FinalOnly => false,
        }
    }
}

/// Queue lengths and cumulative counters at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub state: Vec<u32>,
    pub arrivals: Vec<u64>,
    pub abandons: Vec<u64>,
    pub blocks: Vec<u64>,
    pub matches: u64,
}

/// The running chain: state, clock and flow counters.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    rates: &'a PreLimitRates,
    arrival_total: f64,
    counts: Vec<u32>,
    arrivals: Vec<u64>,
    abandons: Vec<u64>,
    blocks: Vec<u64>,
    matches: u64,
    time: f64,
    events: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(rates: &'a PreLimitRates, initial: &QueueState) -> Result<Self> {
        initial.check_bounds(rates)?;
        let k = rates.k();
        Ok(Simulator {
            rates,
            arrival_total: rates.arrival().iter().sum(),
            counts: initial.counts().to_vec(),
            arrivals: vec![0; k],
            abandons: vec![0; k],
            blocks: vec![0; k],
            matches: 0,
            time: 0.0,
            events: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.arrival_total + self.abandon_total()
    }

    fn abandon_total(&self) -> f64 {
        self.counts
            .iter()
            .zip(self.rates.abandon())
            .map(|(&q, d)| d * q as f64)
            .sum()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            state: self.counts.clone(),
            arrivals: self.arrivals.clone(),
            abandons: self.abandons.clone(),
            blocks: self.blocks.clone(),
            matches: self.matches,
        }
    }

    /// Fires the next event if it happens no later than `until`. Otherwise
    /// the clock is moved to `until` and `None` is returned; resuming later
    /// is exact because all clocks are memoryless.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, until: f64) -> Option<TransitionKind> {
        let total = self.total_rate();
        if total <= 0.0 {
            self.time = self.time.max(until);
            return None;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if self.time + wait > until {
            self.time = self.time.max(until);
            return None;
        }
        self.time += wait;
        let kind = self.pick(rng.random::<f64>() * total);
        self.fire(kind);
        Some(kind)
    }

    fn pick(&self, mut u: f64) -> TransitionKind {
        let k = self.counts.len();
        let mut last = None;
        for i in 0..k {
            let rate = self.rates.arrival()[i];
            if rate > 0.0 {
                if u < rate {
                    return arrival_outcome(&self.counts, self.rates.capacity(), i);
                }
                u -= rate;
                last = Some(TransitionKind::ArrivalAdmitted(i));
            }
        }
        for i in 0..k {
            let rate = self.rates.abandon()[i] * self.counts[i] as f64;
            if rate > 0.0 {
                if u < rate {
                    return TransitionKind::Abandonment(i);
                }
                u -= rate;
                last = Some(TransitionKind::Abandonment(i));
            }
        }
        // Rounding pushed u past the last clock; take the last live one.
        match last.expect("positive total rate has a live clock") {
            TransitionKind::Abandonment(i) => TransitionKind::Abandonment(i),
            other => arrival_outcome(&self.counts, self.rates.capacity(), other.class()),
        }
    }

    fn fire(&mut self, kind: TransitionKind) {
        match kind {
            TransitionKind::ArrivalAdmitted(i) => self.arrivals[i] += 1,
            TransitionKind::ArrivalMatched(i) => {
                self.arrivals[i] += 1;
                self.matches += 1;
            }
            TransitionKind::ArrivalBlocked(i) => {
                self.arrivals[i] += 1;
                self.blocks[i] += 1;
            }
            TransitionKind::Abandonment(i) => self.abandons[i] += 1,
        }
        apply_kind(&mut self.counts, kind);
        self.events += 1;
    }

    /// Runs to `until`, discarding intermediate events.
    pub fn run_until<R: Rng + ?Sized>(&mut self, rng: &mut R, until: f64) {
        while self.step(rng, until).is_some() {}
    }
}

/// A recorded trajectory. Sequences are stored flat with stride `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPath {
    k: usize,
    seed: u64,
    horizon: f64,
    events: u64,
    times: Vec<f64>,
    states: Vec<u32>,
    arrivals: Vec<u64>,
    abandons: Vec<u64>,
    blocks: Vec<u64>,
    matches: Vec<u64>,
}

impl EventPath {
    fn start(sim: &Simulator<'_>, seed: u64, horizon: f64) -> Self {
        let mut path = EventPath {
            k: sim.counts.len(),
            seed,
            horizon,
            events: 0,
            times: Vec::new(),
            states: Vec::new(),
            arrivals: Vec::new(),
            abandons: Vec::new(),
            blocks: Vec::new(),
            matches: Vec::new(),
        };
        path.push(sim);
        path
    }

    fn push(&mut self, sim: &Simulator<'_>) {
        self.times.push(sim.time);
        self.states.extend_from_slice(&sim.counts);
        self.arrivals.extend_from_slice(&sim.arrivals);
        self.abandons.extend_from_slice(&sim.abandons);
        self.blocks.extend_from_slice(&sim.blocks);
        self.matches.push(sim.matches);
    }

    /// Assembles a path from raw per-record sequences, e.g. to check the
    /// identities on externally produced data.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        k: usize,
        times: Vec<f64>,
        states: Vec<Vec<u32>>,
        arrivals: Vec<Vec<u64>>,
        abandons: Vec<Vec<u64>>,
        blocks: Vec<Vec<u64>>,
        matches: Vec<u64>,
    ) -> Result<Self> {
        let len = times.len();
        let ok = len > 0
            && [states.len(), arrivals.len(), abandons.len(), blocks.len(), matches.len()]
                .iter()
                .all(|&l| l == len)
            && states.iter().all(|s| s.len() == k)
            && arrivals
                .iter()
                .chain(&abandons)
                .chain(&blocks)
                .all(|c| c.len() == k);
        if !ok {
            return Err(Error::Dimension {
                expected: len,
                got: states.len(),
            });
        }
        let horizon = *times.last().unwrap();
        Ok(EventPath {
            k,
            seed: 0,
            horizon,
            events: (len - 1) as u64,
            times,
            states: states.concat(),
            arrivals: arrivals.concat(),
            abandons: abandons.concat(),
            blocks: blocks.concat(),
            matches,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of events simulated, recorded or not.
    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Number of recorded entries, including the initial one.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, idx: usize) -> &[u32] {
        &self.states[idx * self.k..(idx + 1) * self.k]
    }

    pub fn arrivals(&self, idx: usize) -> &[u64] {
        &self.arrivals[idx * self.k..(idx + 1) * self.k]
    }

    pub fn abandons(&self, idx: usize) -> &[u64] {
        &self.abandons[idx * self.k..(idx + 1) * self.k]
    }

    pub fn blocks(&self, idx: usize) -> &[u64] {
        &self.blocks[idx * self.k..(idx + 1) * self.k]
    }

    pub fn matches(&self, idx: usize) -> u64 {
        self.matches[idx]
    }

    pub fn final_state(&self) -> &[u32] {
        self.state(self.len() - 1)
    }

    pub fn snapshot(&self, idx: usize) -> Snapshot {
        Snapshot {
            time: self.times[idx],
            state: self.state(idx).to_vec(),
            arrivals: self.arrivals(idx).to_vec(),
            abandons: self.abandons(idx).to_vec(),
            blocks: self.blocks(idx).to_vec(),
            matches: self.matches[idx],
        }
    }

    /// `Q_i = Q_i(0) + A_i − L_i − G_i − R` at every record, exactly.
    pub fn flow_conservation_holds(&self) -> bool {
        let init = self.state(0);
        (0..self.len()).all(|idx| {
            let (q, a, g, l, r) = (
                self.state(idx),
                self.arrivals(idx),
                self.abandons(idx),
                self.blocks(idx),
                self.matches[idx] as i64,
            );
            (0..self.k).all(|i| {
                q[i] as i64 == init[i] as i64 + a[i] as i64 - l[i] as i64 - g[i] as i64 - r
            })
        })
    }

    /// Writes `t, Q_1..Q_K, A_1..A_K, G_1..G_K, L_1..L_K, R`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        for prefix in ["Q", "A", "G", "L"] {
            header.extend((1..=self.k).map(|i| format!("{prefix}_{i}")));
        }
        header.push("R".into());
        writeln!(out, "{}", header.join(","))?;
        for idx in 0..self.len() {
            let mut row = vec![self.times[idx].to_string()];
            row.extend(self.state(idx).iter().map(u32::to_string));
            row.extend(self.arrivals(idx).iter().map(u64::to_string));
            row.extend(self.abandons(idx).iter().map(u64::to_string));
            row.extend(self.blocks(idx).iter().map(u64::to_string));
            row.push(self.matches[idx].to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Simulates on `[0, horizon]` with the generator for stream 0 of `seed`.
pub fn simulate_path(
    rates: &PreLimitRates,
    initial: &QueueState,
    horizon: f64,
    seed: u64,
) -> Result<EventPath> {
    let mut rng = stream_rng(seed, 0);
    simulate_path_with(rates, initial, horizon, seed, Recording::All, &mut rng)
}

/// Simulation with an explicit generator and recording mode; `seed` is
/// only stored as metadata.
pub fn simulate_path_with(
    rates: &PreLimitRates,
    initial: &QueueState,
    horizon: f64,
    seed: u64,
    recording: Recording,
    rng: &mut StreamRng,
) -> Result<EventPath> {
    if !(horizon >= 0.0) {
        return Err(Error::BadInit(format!("horizon must be nonnegative, got {horizon}")));
    }
    let mut sim = Simulator::new(rates, initial)?;
    let mut path = EventPath::start(&sim, seed, horizon);
    let mut recorded_last = true;
    let mut last_event = 0.0;
    while sim.step(rng, horizon).is_some() {
        last_event = sim.time;
        recorded_last = recording.keeps(sim.events);
        if recorded_last {
            path.push(&sim);
        }
    }
    if !recorded_last {
        // The final state is stamped with its event time, not the horizon.
        sim.time = last_event;
        path.push(&sim);
    }
    path.events = sim.events;
    Ok(path)
}

/// States and counters observed at each of the increasing `times`.
pub fn sample_at_times<R: Rng + ?Sized>(
    rates: &PreLimitRates,
    initial: &QueueState,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<Snapshot>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::BadInit("observation times must be increasing and nonnegative".into()));
    }
    let mut sim = Simulator::new(rates, initial)?;
    Ok(times
        .iter()
        .map(|&t| {
            sim.run_until(rng, t);
            sim.snapshot()
        })
        .collect())
}

/// True iff `R = min_j (Q_j(0) + A_j − L_j − G_j)` at every record.
pub fn match_count_identity_check(path: &EventPath) -> bool {
    let init = path.state(0);
    (0..path.len()).all(|idx| {
        let (a, g, l) = (path.arrivals(idx), path.abandons(idx), path.blocks(idx));
        let net = (0..path.k())
            .map(|j| init[j] as i64 + a[j] as i64 - l[j] as i64 - g[j] as i64)
            .min()
            .expect("at least two classes");
        net == path.matches(idx) as i64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Capacity::{self, Finite, Infinite};
    use proptest::prelude::*;

    fn rates(arrival: &[f64], abandon: &[f64], caps: &[Capacity]) -> PreLimitRates {
        PreLimitRates::new(arrival.to_vec(), abandon.to_vec(), caps.to_vec()).unwrap()
    }

    #[test]
    fn zero_horizon_keeps_initial_only() {
        let r = rates(&[5.0, 5.0], &[1.0, 1.0], &[Finite(3), Finite(3)]);
        let init = QueueState::new(vec![0, 2]).unwrap();
        let path = simulate_path(&r, &init, 0.0, 1).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path.times(), &[0.0]);
        assert_eq!(path.state(0), &[0, 2]);
        assert_eq!(path.matches(0), 0);
        assert!(match_count_identity_check(&path));
    }

    #[test]
    fn no_rates_no_events() {
        let r = rates(&[0.0, 0.0], &[1.0, 3.0], &[Infinite, Infinite]);
        let path = simulate_path(&r, &QueueState::zeros(2), 100.0, 9).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path.event_count(), 0);
    }

    #[test]
    fn negative_horizon_rejected() {
        let r = rates(&[1.0, 1.0], &[1.0, 1.0], &[Infinite, Infinite]);
        assert!(simulate_path(&r, &QueueState::zeros(2), -1.0, 0).is_err());
    }

    #[test]
    fn same_seed_same_path() {
        let r = rates(&[40.0, 35.0, 30.0], &[1.0, 0.5, 2.0], &[Finite(6), Infinite, Finite(3)]);
        let init = QueueState::zeros(3);
        let a = simulate_path(&r, &init, 3.0, 77).unwrap();
        let b = simulate_path(&r, &init, 3.0, 77).unwrap();
        let c = simulate_path(&r, &init, 3.0, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn thinned_recording_keeps_final_state() {
        let r = rates(&[20.0, 20.0], &[1.0, 1.0], &[Finite(5), Finite(5)]);
        let init = QueueState::zeros(2);
        let full = simulate_path(&r, &init, 5.0, 4).unwrap();
        let mut rng = stream_rng(4, 0);
        let thin =
            simulate_path_with(&r, &init, 5.0, 4, Recording::Every(7), &mut rng).unwrap();
        let mut rng = stream_rng(4, 0);
        let last =
            simulate_path_with(&r, &init, 5.0, 4, Recording::FinalOnly, &mut rng).unwrap();
        assert_eq!(thin.final_state(), full.final_state());
        assert_eq!(last.len(), 2);
        assert_eq!(last.snapshot(1), full.snapshot(full.len() - 1));
        assert_eq!(thin.event_count(), full.event_count());
        assert!(thin.flow_conservation_holds());
        assert!(match_count_identity_check(&thin));
    }

    #[test]
    fn csv_header_and_rows() {
        let r = rates(&[1.0, 1.0], &[1.0, 1.0], &[Finite(2), Finite(2)]);
        let path = simulate_path(&r, &QueueState::zeros(2), 0.0, 0).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,Q_1,Q_2,A_1,A_2,G_1,G_2,L_1,L_2,R\n0,0,0,0,0,0,0,0,0,0\n");
    }

    #[test]
    fn perturbed_counter_breaks_identity() {
        // Four events from (0,0): admit 1, admit 1, match by 2, abandon 1.
        let times = vec![0.0, 0.1, 0.2, 0.3, 0.4];
        let states = vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![1, 0], vec![0, 0]];
        let arrivals = vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![2, 1], vec![2, 1]];
        let abandons = vec![vec![0, 0], vec![0, 0], vec![0, 0], vec![0, 0], vec![1, 0]];
        let blocks = vec![vec![0, 0]; 5];
        let matches = vec![0, 0, 0, 1, 1];
        let good = EventPath::from_parts(
            2,
            times.clone(),
            states.clone(),
            arrivals.clone(),
            abandons.clone(),
            blocks.clone(),
            matches.clone(),
        )
        .unwrap();
        assert!(good.flow_conservation_holds());
        assert!(match_count_identity_check(&good));

        let mut bad_matches = matches;
        bad_matches[3] = 0;
        let bad =
            EventPath::from_parts(2, times, states, arrivals, abandons, blocks, bad_matches).unwrap();
        assert!(!match_count_identity_check(&bad));
    }

    #[test]
    fn arrival_counts_follow_poisson_law() {
        let r = rates(&[50.0, 80.0], &[1.0, 1.0], &[Finite(10), Infinite]);
        let horizon = 200.0;
        let mut rng = stream_rng(5, 0);
        let path =
            simulate_path_with(&r, &QueueState::zeros(2), horizon, 5, Recording::FinalOnly, &mut rng)
                .unwrap();
        let a = path.arrivals(path.len() - 1);
        for (i, lam) in r.arrival().iter().enumerate() {
            let rate = a[i] as f64 / horizon;
            assert!((rate - lam).abs() <= 3.0 * (lam / horizon).sqrt(), "{rate} vs {lam}");
        }
    }

    #[test]
    fn sample_at_times_is_consistent() {
        let r = rates(&[10.0, 12.0], &[1.0, 1.0], &[Finite(4), Finite(4)]);
        let mut rng = stream_rng(2, 3);
        let snaps = sample_at_times(&r, &QueueState::zeros(2), &[0.0, 1.0, 2.5], &mut rng).unwrap();
        assert_eq!(snaps.len(), 3);
        assert_eq!(snaps[0].state, vec![0, 0]);
        assert_eq!(snaps[2].time, 2.5);
        for s in &snaps {
            assert!(s.state.contains(&0));
        }
        assert!(sample_at_times(&r, &QueueState::zeros(2), &[2.0, 1.0], &mut rng).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (PreLimitRates, Vec<u32>, u64)> {
        (2usize..=4)
            .prop_flat_map(|k| {
                (
                    proptest::collection::vec(0.0f64..30.0, k),
                    proptest::collection::vec(0.1f64..3.0, k),
                    proptest::collection::vec(prop_oneof![(1u32..8).prop_map(Some), Just(None)], k),
                    any::<u64>(),
                )
            })
            .prop_map(|(arr, ab, caps, seed)| {
                let caps: Vec<Capacity> =
                    caps.into_iter().map(|c| c.map_or(Infinite, Finite)).collect();
                let mut init: Vec<u32> = caps
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.finite().unwrap_or(5).min(i as u32 + 1))
                    .collect();
                init[(seed % arr.len() as u64) as usize] = 0;
                (PreLimitRates::new(arr, ab, caps).unwrap(), init, seed)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn simulated_paths_respect_invariants((r, init, seed) in arb_instance()) {
            let init = QueueState::within(init, &r).unwrap();
            let path = simulate_path(&r, &init, 2.0, seed).unwrap();
            prop_assert!(path.flow_conservation_holds());
            prop_assert!(match_count_identity_check(&path));
            for idx in 0..path.len() {
                let q = path.state(idx);
                prop_assert!(q.contains(&0));
                for i in 0..r.k() {
                    prop_assert!(r.capacity()[i].contains(q[i]));
                }
                if idx > 0 {
                    prop_assert!(path.times()[idx] > path.times()[idx - 1]);
                    let prev = path.state(idx - 1);
                    for i in 0..r.k() {
                        prop_assert!(path.arrivals(idx)[i] >= path.arrivals(idx - 1)[i]);
                        prop_assert!(path.abandons(idx)[i] >= path.abandons(idx - 1)[i]);
                        if path.blocks(idx)[i] > path.blocks(idx - 1)[i] {
                            prop_assert_eq!(Some(prev[i]), r.capacity()[i].finite());
                        }
                    }
                    prop_assert!(path.matches(idx) >= path.matches(idx - 1));
                }
            }
        }
    }
}
