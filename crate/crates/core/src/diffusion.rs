//! Regulated diffusion limits.
//!
//! Two schemes are provided. [`simulate_double_ended`] integrates the
//! one-dimensional difference process `X = X_1 − X_2` of the two-class
//! system with a two-sided projection onto `[−b_2, b_1]`.
//! [`simulate_limit_k`] integrates the coupled K-class integral equation
//!
//! ```text
//! Q(t) = Q(0) + βt + σW(t) − ∫δ◇Q ds − R(t)·1 − L(t)
//! ```
//!
//! where each step removes the common matching amount `ΔR` that brings the
//! smallest coordinate back to zero, then reflects at the buffers.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::generator::DiffusionMatrix;
use crate::rng::StreamRng;

/// Tolerance below which negative eigenvalues are clamped to zero.
pub const PSD_TOL: f64 = 1e-8;

/// Symmetric PSD square root via the spectral decomposition.
pub fn sqrt_psd(a: &DiffusionMatrix) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.entries().clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL {
        return Err(Error::NotPsd(min));
    }
    let mut vectors = eig.eigenvectors;
    // Largest-magnitude entry of each eigenvector positive.
    for mut col in vectors.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = &vectors * DMatrix::from_diagonal(&roots) * vectors.transpose();
    Ok((&root + root.transpose()) * 0.5)
}

/// Output of the two-sided reflection map.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflected {
    pub path: Vec<f64>,
    pub lower_local_time: Vec<f64>,
    pub upper_local_time: Vec<f64>,
}

/// Confines a piecewise-linear path (given at its nodes) to
/// `[lower, upper]` by minimal pushing. Within one linear segment the input
/// is monotone and can reach at most one barrier, so clamping each
/// increment is exact at the nodes.
pub fn skorokhod_two_sided(input: &[f64], lower: f64, upper: f64) -> Result<Reflected> {
    if !(lower < upper) {
        return Err(Error::BadBand { lower, upper });
    }
    let Some(&first) = input.first() else {
        return Ok(Reflected {
            path: Vec::new(),
            lower_local_time: Vec::new(),
            upper_local_time: Vec::new(),
        });
    };
    if !(lower..=upper).contains(&first) {
        return Err(Error::BadInit(format!("input starts at {first}, outside [{lower}, {upper}]")));
    }
    let mut path = Vec::with_capacity(input.len());
    let mut lo = Vec::with_capacity(input.len());
    let mut up = Vec::with_capacity(input.len());
    let (mut y, mut l, mut u) = (first, 0.0, 0.0);
    path.push(y);
    lo.push(l);
    up.push(u);
    for w in input.windows(2) {
        let cand = y + (w[1] - w[0]);
        if cand > upper {
            u += cand - upper;
            y = upper;
        } else if cand < lower {
            l += lower - cand;
            y = lower;
        } else {
            y = cand;
        }
        path.push(y);
        lo.push(l);
        up.push(u);
    }
    Ok(Reflected {
        path,
        lower_local_time: lo,
        upper_local_time: up,
    })
}

/// A simulated limit trajectory on a uniform grid.
///
/// Per-grid-point sequences are flat with strides `dim` (states, noise and
/// reneging integrals) and `local_dim` (local times). For the K-class
/// scheme `local_dim = K` and `matching` holds `R`. For the double-ended
/// scheme `dim = 1`, the local times are `[U_1 (at b_1), U_2 (at −b_2)]`
/// and `matching` is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPath {
    pub dim: usize,
    pub local_dim: usize,
    pub seed: u64,
    pub dt: f64,
    pub grid: Vec<f64>,
    pub states: Vec<f64>,
    pub local_times: Vec<f64>,
    pub matching: Vec<f64>,
    /// Cumulative `σ_i W_i(t)`.
    pub noise: Vec<f64>,
    /// Cumulative `∫ δ_i Q_i ds` (left-point sums); `∫ h(X) ds` for the
    /// double-ended scheme.
    pub reneging: Vec<f64>,
}

impl DiffusionPath {
    fn new(dim: usize, local_dim: usize, seed: u64, dt: f64) -> Self {
        DiffusionPath {
            dim,
            local_dim,
            seed,
            dt,
            grid: Vec::new(),
            states: Vec::new(),
            local_times: Vec::new(),
            matching: Vec::new(),
            noise: Vec::new(),
            reneging: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn state(&self, idx: usize) -> &[f64] {
        &self.states[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn local_time(&self, idx: usize) -> &[f64] {
        &self.local_times[idx * self.local_dim..(idx + 1) * self.local_dim]
    }

    pub fn noise_at(&self, idx: usize) -> &[f64] {
        &self.noise[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn reneging_at(&self, idx: usize) -> &[f64] {
        &self.reneging[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn final_local_time(&self) -> &[f64] {
        self.local_time(self.len() - 1)
    }

    fn push(&mut self, t: f64, x: &[f64], u: &[f64], r: f64, noise: &[f64], ren: &[f64]) {
        self.grid.push(t);
        self.states.extend_from_slice(x);
        self.local_times.extend_from_slice(u);
        self.matching.push(r);
        self.noise.extend_from_slice(noise);
        self.reneging.extend_from_slice(ren);
    }

    /// Writes `t, X_1..X_K, U_1..U_m, R`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("X_{i}")));
        header.extend((1..=self.local_dim).map(|i| format!("U_{i}")));
        header.push("R".into());
        writeln!(out, "{}", header.join(","))?;
        for idx in 0..self.len() {
            let mut row = vec![self.grid[idx].to_string()];
            row.extend(self.state(idx).iter().map(f64::to_string));
            row.extend(self.local_time(idx).iter().map(f64::to_string));
            row.push(self.matching[idx].to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Grid points kept in a [`DiffusionPath`]: index 0, every `record_every`
/// steps, and the last step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridRecording {
    pub record_every: usize,
}

impl Default for GridRecording {
    fn default() -> Self {
        GridRecording { record_every: 1 }
    }
}

impl GridRecording {
    pub fn final_only() -> Self {
        GridRecording {
            record_every: usize::MAX,
        }
    }
}

/// Number of Euler steps covering `[0, horizon]`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::BadInit(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::BadInit(format!("horizon must be nonnegative, got {horizon}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Constants of the double-ended process `dX = (β − h(X))dt + σ dB − dU`
/// with `h(x) = δ_1 x⁺ − δ_2 x⁻` on the band `[−b_2, b_1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleEnded {
    pub beta: f64,
    pub delta: (f64, f64),
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DoubleEnded {
    /// Reads `β = β_1 − β_2`, `δ` and the band from two-class parameters.
    pub fn from_params(params: &crate::model::SystemParams, sigma: f64) -> Result<Self> {
        if params.k() != 2 {
            return Err(Error::InvalidParams(format!(
                "the double-ended process needs K = 2, got {}",
                params.k()
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma must be nonnegative, got {sigma}")));
        }
        Ok(DoubleEnded {
            beta: params.beta()[0] - params.beta()[1],
            delta: (params.delta()[0], params.delta()[1]),
            sigma,
            lower: -params.buffer()[1],
            upper: params.buffer()[0],
        })
    }

    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        self.delta.0 * x.max(0.0) - self.delta.1 * (-x).max(0.0)
    }

    /// Unnormalised stationary density `exp(2∫₀ˣ(β − h(u))du / σ²)` on the
    /// band.
    pub fn stationary_log_density(&self, x: f64) -> f64 {
        let integral = self.beta * x
            - if x >= 0.0 {
                0.5 * self.delta.0 * x * x
            } else {
                0.5 * self.delta.1 * x * x
            };
        2.0 * integral / (self.sigma * self.sigma)
    }
}

/// Euler–Maruyama state of the double-ended process.
#[derive(Debug, Clone)]
pub struct DoubleEndedStepper {
    pub model: DoubleEnded,
    pub dt: f64,
    pub x: f64,
    /// `[U_1 at b_1, U_2 at −b_2]`.
    pub local: [f64; 2],
    pub noise: f64,
    pub reneging: f64,
}

impl DoubleEndedStepper {
    pub fn new(model: DoubleEnded, x0: f64, dt: f64) -> Result<Self> {
        if !(model.lower..=model.upper).contains(&x0) {
            return Err(Error::BadInit(format!(
                "x0 = {x0} outside [{}, {}]",
                model.lower, model.upper
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::BadInit(format!("dt must be positive, got {dt}")));
        }
        Ok(DoubleEndedStepper {
            model,
            dt,
            x: x0,
            local: [0.0; 2],
            noise: 0.0,
            reneging: 0.0,
        })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let xi: f64 = rng.sample(StandardNormal);
        self.step_with(xi);
    }

    /// One step driven by the standard normal `xi`.
    #[inline]
    pub fn step_with(&mut self, xi: f64) {
        let m = &self.model;
        let h = m.h(self.x);
        let dn = m.sigma * self.dt.sqrt() * xi;
        let cand = self.x + (m.beta - h) * self.dt + dn;
        self.noise += dn;
        self.reneging += h * self.dt;
        if cand > m.upper {
            self.local[0] += cand - m.upper;
            self.x = m.upper;
        } else if cand < m.lower {
            self.local[1] += m.lower - cand;
            self.x = m.lower;
        } else {
            self.x = cand;
        }
    }
}

/// Euler–Maruyama with two-sided projection for the double-ended process.
#[allow(clippy::too_many_arguments)]
pub fn simulate_double_ended(
    params: &crate::model::SystemParams,
    sigma: f64,
    x0: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    recording: GridRecording,
    rng: &mut StreamRng,
) -> Result<DiffusionPath> {
    let model = DoubleEnded::from_params(params, sigma)?;
    let steps = step_count(horizon, dt)?;
    let mut st = DoubleEndedStepper::new(model, x0, dt)?;
    let mut path = DiffusionPath::new(1, 2, seed, dt);
    path.push(0.0, &[st.x], &st.local, 0.0, &[0.0], &[0.0]);
    for k in 1..=steps {
        st.step(rng);
        if k % recording.record_every.max(1) == 0 || k == steps {
            path.push(k as f64 * dt, &[st.x], &st.local, 0.0, &[st.noise], &[st.reneging]);
        }
    }
    Ok(path)
}

/// State of the K-class coupled scheme.
#[derive(Debug, Clone)]
pub struct LimitStepper {
    beta: Vec<f64>,
    delta: Vec<f64>,
    buffer: Vec<f64>,
    sigma: Vec<f64>,
    dt: f64,
    pub q: Vec<f64>,
    pub local: Vec<f64>,
    pub matching: f64,
    pub noise: Vec<f64>,
    pub reneging: Vec<f64>,
    cand: Vec<f64>,
    xi: Vec<f64>,
}

impl LimitStepper {
    /// Per-class noise `σ_i = √λ₀` from independent drivers.
    pub fn new(params: &crate::model::SystemParams, q0: &[f64], dt: f64) -> Result<Self> {
        let k = params.k();
        if q0.len() != k {
            return Err(Error::Dimension {
                expected: k,
                got: q0.len(),
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::BadInit(format!("dt must be positive, got {dt}")));
        }
        if q0.iter().zip(params.buffer()).any(|(q, b)| !(*q >= 0.0 && q <= b)) {
            return Err(Error::BadInit(format!("initial state {q0:?} outside the buffers")));
        }
        if !q0.contains(&0.0) {
            return Err(Error::BadInit(format!("initial state {q0:?} has no empty queue")));
        }
        let sigma = vec![params.lambda0().sqrt(); k];
        for i in 0..k {
            let excursion = (params.beta()[i] * dt).abs() + 4.0 * sigma[i] * dt.sqrt();
            if excursion > params.buffer()[i] {
                return Err(Error::StepTooLarge {
                    class: i,
                    excursion,
                    buffer: params.buffer()[i],
                });
            }
        }
        Ok(LimitStepper {
            beta: params.beta().to_vec(),
            delta: params.delta().to_vec(),
            buffer: params.buffer().to_vec(),
            sigma,
            dt,
            q: q0.to_vec(),
            local: vec![0.0; k],
            matching: 0.0,
            noise: vec![0.0; k],
            reneging: vec![0.0; k],
            cand: vec![0.0; k],
            xi: Vec::with_capacity(k),
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Netflow increment, matching removal, then buffer reflection.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut xi = std::mem::take(&mut self.xi);
        xi.clear();
        xi.extend((0..self.q.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        self.step_with(&xi);
        self.xi = xi;
    }

    /// One step driven by the standard normals `xi`, one per class.
    pub fn step_with(&mut self, xi: &[f64]) {
        let root = self.dt.sqrt();
        let mut low = f64::INFINITY;
        for i in 0..self.q.len() {
            let xi = xi[i];
            let dw = self.sigma[i] * root * xi;
            let ren = self.delta[i] * self.q[i] * self.dt;
            self.noise[i] += dw;
            self.reneging[i] += ren;
            self.cand[i] = self.q[i] + self.beta[i] * self.dt + dw - ren;
            low = low.min(self.cand[i]);
        }
        self.matching += low;
        for i in 0..self.q.len() {
            let v = self.cand[i] - low;
            if v > self.buffer[i] {
                self.local[i] += v - self.buffer[i];
                self.q[i] = self.buffer[i];
            } else {
                self.q[i] = v;
            }
        }
    }
}

/// Simulates the coupled K-class limit from `q0` on `[0, horizon]`.
pub fn simulate_limit_k(
    params: &crate::model::SystemParams,
    q0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
    recording: GridRecording,
    rng: &mut StreamRng,
) -> Result<DiffusionPath> {
    let steps = step_count(horizon, dt)?;
    let mut st = LimitStepper::new(params, q0, dt)?;
    let k = params.k();
    let mut path = DiffusionPath::new(k, k, seed, dt);
    path.push(0.0, &st.q, &st.local, 0.0, &st.noise, &st.reneging);
    for s in 1..=steps {
        st.step(rng);
        if s % recording.record_every.max(1) == 0 || s == steps {
            path.push(s as f64 * dt, &st.q, &st.local, st.matching, &st.noise, &st.reneging);
        }
    }
    Ok(path)
}
