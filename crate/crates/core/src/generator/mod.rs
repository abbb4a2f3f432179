//! Discrete and limiting infinitesimal generators.
//!
//! `A_n f(s) = Σ rate · (f(s') − f(s))` over the kernel transitions of the
//! `n`-th chain, evaluated on scaled states. The limiting operator is
//!
//! ```text
//! A f(s) = ½ Σ_{m,n} a_{mn}(s) ∂²f/∂s_m∂s_n + Σ_m (β_m − δ_m s_m) ∂f/∂s_m
//! ```
//!
//! with the state-dependent diffusion matrix `a` of [`diffusion_matrix`].

pub mod testfn;

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::transitions_from;
use crate::model::{derive_prelimit_rates, scale_counts, PreLimitRates, QueueState, SystemParams};

pub use testfn::{SupportBox, TestFunction};

/// The matrix `a(s)` at one scaled state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix(DMatrix<f64>);

impl DiffusionMatrix {
    /// Wraps a symmetric matrix; asymmetry beyond `1e-12` is rejected.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::InvalidParams(format!("matrix is not symmetric ({asym})")));
        }
        Ok(DiffusionMatrix(m))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone()).eigenvalues.min()
    }
}

/// `A_n f` at `state` for the chain with `rates` and scale `n`.
pub fn apply_an<F: TestFunction + ?Sized>(
    f: &F,
    state: &QueueState,
    rates: &PreLimitRates,
    n: u64,
) -> Result<f64> {
    let here = f.value(&scale_counts(state.counts(), n));
    Ok(transitions_from(state, rates)?
        .iter()
        .filter(|t| t.target != *state)
        .map(|t| t.rate * (f.value(&scale_counts(t.target.counts(), n)) - here))
        .sum())
}

/// `1[∏_{j≠k} s_j = 0]` for each `k`.
fn others_have_zero(s: &[f64]) -> Vec<bool> {
    let zeros = s.iter().filter(|&&x| x == 0.0).count();
    s.iter().map(|&x| zeros > usize::from(x == 0.0)).collect()
}

/// `a_{mm} = λ₀(z_m + K − 1 − Σ_{k≠m} z_k)`,
/// `a_{mn} = 2λ₀(K − 2 − Σ_{k≠m,n} z_k)` with `z_k = 1[∏_{j≠k} s_j = 0]`.
pub fn diffusion_matrix(s: &[f64], lambda0: f64, k: usize) -> Result<DiffusionMatrix> {
    if s.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: s.len(),
        });
    }
    if !s.contains(&0.0) {
        return Err(Error::OffManifold(s.to_vec()));
    }
    let z: Vec<f64> = others_have_zero(s)
        .into_iter()
        .map(|b| if b { 1.0 } else { 0.0 })
        .collect();
    let total: f64 = z.iter().sum();
    let kf = k as f64;
    let a = DMatrix::from_fn(k, k, |m, n| {
        if m == n {
            lambda0 * (z[m] + kf - 1.0 - (total - z[m]))
        } else {
            2.0 * lambda0 * (kf - 2.0 - (total - z[m] - z[n]))
        }
    });
    Ok(DiffusionMatrix(a))
}

/// `A f` at a scaled state on the product-zero manifold.
pub fn apply_a<F: TestFunction + ?Sized>(f: &F, s: &[f64], params: &SystemParams) -> Result<f64> {
    let k = params.k();
    let a = diffusion_matrix(s, params.lambda0(), k)?;
    let h = f.hessian(s);
    let g = f.gradient(s);
    let second: f64 = a.0.component_mul(&h).sum();
    let first: f64 = (0..k)
        .map(|m| (params.beta()[m] - params.delta()[m] * s[m]) * g[m])
        .sum();
    Ok(0.5 * second + first)
}

/// Outcome of the regulated-condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatedReport {
    /// `max |Σ_i ∂f/∂s_i|` over all samples.
    pub max_gradient_sum: f64,
    /// `max_i |∂f/∂s_i|` over samples touching a buffer.
    pub max_boundary_gradient: f64,
    pub boundary_samples: usize,
    pub pass: bool,
}

pub const REGULATED_TOL: f64 = 1e-8;
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Checks `Σ ∂f/∂s_i = 0` everywhere and `∇f = 0` where some coordinate
/// sits at its buffer.
pub fn check_regulated<F: TestFunction + ?Sized>(
    f: &F,
    samples: &[Vec<f64>],
    buffers: &[f64],
) -> RegulatedReport {
    let mut max_sum = 0.0f64;
    let mut max_boundary = 0.0f64;
    let mut boundary_samples = 0;
    for s in samples {
        let g = f.gradient(s);
        max_sum = max_sum.max(g.iter().sum::<f64>().abs());
        let at_buffer = s
            .iter()
            .zip(buffers)
            .any(|(x, b)| b.is_finite() && (x - b).abs() <= BOUNDARY_TOL);
        if at_buffer {
            boundary_samples += 1;
            max_boundary = g.iter().fold(max_boundary, |m, v| m.max(v.abs()));
        }
    }
    RegulatedReport {
        max_gradient_sum: max_sum,
        max_boundary_gradient: max_boundary,
        boundary_samples,
        pass: max_sum <= REGULATED_TOL && max_boundary <= REGULATED_TOL,
    }
}

/// Largest central-difference mismatch of the analytic gradient and Hessian
/// at `points`, relative to `max(1, |analytic|)`.
pub fn derivative_mismatch<F: TestFunction + ?Sized>(f: &F, points: &[Vec<f64>], h: f64) -> f64 {
    let mut worst = 0.0f64;
    for p in points {
        let g = f.gradient(p);
        let hess = f.hessian(p);
        let mut x = p.clone();
        for i in 0..p.len() {
            x[i] = p[i] + h;
            let gp = f.gradient(&x);
            let fp = f.value(&x);
            x[i] = p[i] - h;
            let gm = f.gradient(&x);
            let fm = f.value(&x);
            x[i] = p[i];
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
            for j in 0..p.len() {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                worst = worst.max((fd2 - hess[(j, i)]).abs() / hess[(j, i)].abs().max(1.0));
            }
        }
    }
    worst
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: u64,
    pub sup_error: f64,
    pub argmax_state: Vec<f64>,
    pub states: usize,
}

/// Interior lattice states of the `n`-th system inside `window`: all
/// product-zero count vectors with `k/√n` in the window and every queue
/// strictly below its buffer.
pub fn window_states(
    rates: &PreLimitRates,
    n: u64,
    window: &SupportBox,
) -> Vec<QueueState> {
    let root = (n as f64).sqrt();
    let k = rates.k();
    let mut lo = Vec::with_capacity(k);
    let mut hi = Vec::with_capacity(k);
    for i in 0..k {
        let l = (window.lower[i].max(0.0) * root).ceil().max(0.0) as u64;
        let mut h = (window.upper[i] * root).floor();
        if let Some(b) = rates.capacity()[i].finite() {
            h = h.min(b as f64 - 1.0);
        }
        if h < l as f64 {
            return Vec::new();
        }
        lo.push(l as u32);
        hi.push(h as u32);
    }
    let mut out = Vec::new();
    let mut counts = lo.clone();
    loop {
        if counts.contains(&0) {
            out.push(QueueState::from_counts_unchecked(counts.clone()));
        }
        let mut pos = k;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if counts[pos] < hi[pos] {
                counts[pos] += 1;
                break;
            }
            counts[pos] = lo[pos];
        }
    }
}

/// `sup |A_n f − A f|` over interior lattice states in `window`, for each
/// `n` in `n_grid` (rows sorted by `n`). No compensation term is added, so
/// only interior states are meaningful.
pub fn convergence_sweep<F: TestFunction + ?Sized>(
    f: &F,
    params: &SystemParams,
    n_grid: &[u64],
    window: &SupportBox,
) -> Result<Vec<SweepRow>> {
    if window.lower.len() != params.k() || window.upper.len() != params.k() {
        return Err(Error::Dimension {
            expected: params.k(),
            got: window.lower.len(),
        });
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    grid.into_iter()
        .map(|n| {
            let p = params.with_scale(n)?;
            let rates = derive_prelimit_rates(&p)?;
            let states = window_states(&rates, n, window);
            if states.is_empty() {
                return Err(Error::EmptyWindow);
            }
            let errors: Vec<(f64, usize)> = states
                .par_iter()
                .enumerate()
                .map(|(idx, st)| {
                    let discrete = apply_an(f, st, &rates, n)?;
                    let limit = apply_a(f, &scale_counts(st.counts(), n), &p)?;
                    Ok(((discrete - limit).abs(), idx))
                })
                .collect::<Result<_>>()?;
            let (sup_error, idx) = errors
                .into_iter()
                .fold((f64::NEG_INFINITY, 0), |best, e| if e.0 > best.0 { e } else { best });
            Ok(SweepRow {
                n,
                sup_error,
                argmax_state: scale_counts(states[idx].counts(), n),
                states: states.len(),
            })
        })
        .collect()
}

/// Writes `n,sup_error,argmax_state` with the state as `;`-joined values.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "n,sup_error,argmax_state")?;
    for r in rows {
        let state: Vec<String> = r.argmax_state.iter().map(f64::to_string).collect();
        writeln!(out, "{},{},{}", r.n, r.sup_error, state.join(";"))?;
    }
    Ok(())
}
