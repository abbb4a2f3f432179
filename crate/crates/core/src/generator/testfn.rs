//! Library of test functions with analytic derivatives.
//!
//! Functions of coordinate differences satisfy the gradient-sum condition
//! `Σ_i ∂f/∂s_i = 0` identically; [`CoordinateSquare`] and [`Linear`] with
//! unbalanced coefficients are the usual negative controls.

use std::sync::Arc;

use nalgebra::DMatrix;

/// Axis-aligned box outside which a test function vanishes. Bounds may be
/// infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SupportBox {
    pub fn unbounded(dim: usize) -> Self {
        SupportBox {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        s.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// True if `other` lies inside `self`.
    pub fn covers(&self, other: &SupportBox) -> bool {
        self.lower
            .iter()
            .zip(&other.lower)
            .all(|(a, b)| a <= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a >= b)
    }
}

/// A scalar field on scaled states with analytic gradient and Hessian.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> String;
    fn value(&self, s: &[f64]) -> f64;
    fn gradient(&self, s: &[f64]) -> Vec<f64>;
    fn hessian(&self, s: &[f64]) -> DMatrix<f64>;

    fn support(&self) -> SupportBox {
        SupportBox::unbounded(self.dim())
    }
}

impl<T: TestFunction + ?Sized> TestFunction for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn value(&self, s: &[f64]) -> f64 {
        (**self).value(s)
    }
    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        (**self).gradient(s)
    }
    fn hessian(&self, s: &[f64]) -> DMatrix<f64> {
        (**self).hessian(s)
    }
    fn support(&self) -> SupportBox {
        (**self).support()
    }
}

#[derive(Debug, Clone)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl TestFunction for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("constant({})", self.value)
    }
    fn value(&self, _: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
}

/// `f(s) = c · s`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub coeffs: Vec<f64>,
}

impl TestFunction for Linear {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }
    fn name(&self) -> String {
        format!("linear({:?})", self.coeffs)
    }
    fn value(&self, s: &[f64]) -> f64 {
        self.coeffs.iter().zip(s).map(|(c, x)| c * x).sum()
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        self.coeffs.clone()
    }
    fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }
}

/// `f(s) = s_i²`.
#[derive(Debug, Clone)]
pub struct CoordinateSquare {
    pub dim: usize,
    pub index: usize,
}

impl TestFunction for CoordinateSquare {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("s{}^2", self.index + 1)
    }
    fn value(&self, s: &[f64]) -> f64 {
        s[self.index] * s[self.index]
    }
    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        g[self.index] = 2.0 * s[self.index];
        g
    }
    fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        h[(self.index, self.index)] = 2.0;
        h
    }
}

/// One-dimensional profile `g` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `(s_i − s_j)²`.
    Square,
    /// `(1 − u²)³` on `|u| < 1`: C² with compact support.
    PolyBump,
    /// `exp(−1/(1 − u²))` on `|u| < 1`: C^∞ with compact support.
    SmoothBump,
    /// `exp(−u²/2)`.
    Gaussian,
}

impl Profile {
    /// `(g, g', g'')` at `u`.
    pub fn eval(self, u: f64) -> (f64, f64, f64) {
        match self {
            Profile::Square => (u * u, 2.0 * u, 2.0),
            Profile::PolyBump => {
                if u.abs() >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let w = 1.0 - u * u;
                (
                    w * w * w,
                    -6.0 * u * w * w,
                    -6.0 * w * w + 24.0 * u * u * w,
                )
            }
            Profile::SmoothBump => {
                if u.abs() >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let w = 1.0 - u * u;
                let g = (-1.0 / w).exp();
                // d/du(−1/w) = −2u/w²
                let p = -2.0 * u / (w * w);
                // d/du(−2u/w²) = −2/w² − 8u²/w³
                let dp = -2.0 / (w * w) - 8.0 * u * u / (w * w * w);
                (g, g * p, g * (p * p + dp))
            }
            Profile::Gaussian => {
                let g = (-0.5 * u * u).exp();
                (g, -u * g, (u * u - 1.0) * g)
            }
        }
    }

    pub fn compact(self) -> bool {
        matches!(self, Profile::PolyBump | Profile::SmoothBump)
    }

    fn label(self) -> &'static str {
        match self {
            Profile::Square => "square",
            Profile::PolyBump => "poly-bump",
            Profile::SmoothBump => "smooth-bump",
            Profile::Gaussian => "gaussian",
        }
    }
}

/// `f(s) = amplitude · g((s_i − s_j − center) / width)`.
#[derive(Debug, Clone)]
pub struct Difference {
    pub dim: usize,
    pub i: usize,
    pub j: usize,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    pub profile: Profile,
}

impl Difference {
    /// Unit bump of `s_1 − s_2` centred at 0 with the given half-width.
    pub fn bump(dim: usize, width: f64, profile: Profile) -> Self {
        Difference {
            dim,
            i: 0,
            j: 1,
            center: 0.0,
            width,
            amplitude: 1.0,
            profile,
        }
    }

    fn arg(&self, s: &[f64]) -> f64 {
        (s[self.i] - s[self.j] - self.center) / self.width
    }
}

impl TestFunction for Difference {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!(
            "{}(s{}-s{}; c={}, w={})",
            self.profile.label(),
            self.i + 1,
            self.j + 1,
            self.center,
            self.width
        )
    }
    fn value(&self, s: &[f64]) -> f64 {
        self.amplitude * self.profile.eval(self.arg(s)).0
    }
    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let d = self.amplitude * self.profile.eval(self.arg(s)).1 / self.width;
        let mut g = vec![0.0; self.dim];
        g[self.i] += d;
        g[self.j] -= d;
        g
    }
    fn hessian(&self, s: &[f64]) -> DMatrix<f64> {
        let d2 = self.amplitude * self.profile.eval(self.arg(s)).2 / (self.width * self.width);
        let mut h = DMatrix::zeros(self.dim, self.dim);
        h[(self.i, self.i)] += d2;
        h[(self.j, self.j)] += d2;
        h[(self.i, self.j)] -= d2;
        h[(self.j, self.i)] -= d2;
        h
    }

    /// On the nonnegative orthant a two-class compact bump is confined to a
    /// box; with more classes the other coordinates are free.
    fn support(&self) -> SupportBox {
        let mut b = SupportBox::unbounded(self.dim);
        if self.profile.compact() && self.dim == 2 {
            b.lower = vec![0.0; 2];
            b.upper[self.i] = (self.center + self.width).max(0.0);
            b.upper[self.j] = (self.width - self.center).max(0.0);
        }
        b
    }
}

/// `exp(−Σ_{i<j} (s_i − s_j)² / (2w²))`: smooth, a function of differences
/// only, couples every pair.
#[derive(Debug, Clone)]
pub struct PairwiseGaussian {
    pub dim: usize,
    pub width: f64,
}

impl PairwiseGaussian {
    fn energy(&self, s: &[f64]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                e += (s[i] - s[j]).powi(2);
            }
        }
        e / (2.0 * self.width * self.width)
    }

    /// Gradient of the energy: `(K s_i − Σ_j s_j) / w²`.
    fn energy_grad(&self, s: &[f64]) -> Vec<f64> {
        let total: f64 = s.iter().sum();
        let k = self.dim as f64;
        s.iter()
            .map(|x| (k * x - total) / (self.width * self.width))
            .collect()
    }
}

impl TestFunction for PairwiseGaussian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("pairwise-gaussian(w={})", self.width)
    }
    fn value(&self, s: &[f64]) -> f64 {
        (-self.energy(s)).exp()
    }
    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let v = self.value(s);
        self.energy_grad(s).into_iter().map(|g| -v * g).collect()
    }
    fn hessian(&self, s: &[f64]) -> DMatrix<f64> {
        let v = self.value(s);
        let e = self.energy_grad(s);
        let w2 = self.width * self.width;
        let k = self.dim as f64;
        DMatrix::from_fn(self.dim, self.dim, |a, b| {
            let second = if a == b { (k - 1.0) / w2 } else { -1.0 / w2 };
            v * (e[a] * e[b] - second)
        })
    }
}

/// `Σ_k c_k f_k`.
#[derive(Clone)]
pub struct Combination {
    pub terms: Vec<(f64, Arc<dyn TestFunction>)>,
}

impl TestFunction for Combination {
    fn dim(&self) -> usize {
        self.terms.first().map_or(0, |(_, f)| f.dim())
    }
    fn name(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(c, f)| format!("{c}*{}", f.name()))
            .collect();
        parts.join(" + ")
    }
    fn value(&self, s: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(s)).sum()
    }
    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (c, f) in &self.terms {
            for (acc, v) in g.iter_mut().zip(f.gradient(s)) {
                *acc += c * v;
            }
        }
        g
    }
    fn hessian(&self, s: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for (c, f) in &self.terms {
            h += f.hessian(s) * *c;
        }
        h
    }
}

/// Five functions of coordinate differences used for oracle checks in
/// dimension `dim`.
pub fn standard_library(dim: usize) -> Vec<Arc<dyn TestFunction>> {
    let mut linear = vec![0.0; dim];
    linear[0] = 1.0;
    linear[dim - 1] -= 1.0;
    vec![
        Arc::new(Constant { dim, value: 2.5 }),
        Arc::new(Linear { coeffs: linear }),
        Arc::new(Difference {
            dim,
            i: 0,
            j: dim - 1,
            center: 0.3,
            width: 1.0,
            amplitude: 1.0,
            profile: Profile::Square,
        }),
        Arc::new(Difference {
            dim,
            i: dim - 1,
            j: 0,
            center: -0.2,
            width: 1.5,
            amplitude: 2.0,
            profile: Profile::PolyBump,
        }),
        Arc::new(PairwiseGaussian { dim, width: 0.8 }),
    ]
}
