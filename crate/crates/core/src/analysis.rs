//! Distributional comparison and exact transient laws.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default cap on the number of uniformization terms.
pub const MAX_POISSON_TERMS: usize = 1_000_000;

/// A labelled sample of real observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub label: String,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Sample {
            values,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ks(&self, other: &Sample) -> Result<f64> {
        ks_distance(&self.values, &other.values)
    }

    pub fn moments(&self) -> Result<(f64, f64, f64)> {
        moments(&self.values)
    }
}

/// Two-sample Kolmogorov–Smirnov distance `sup_x |F_a(x) − F_b(x)|`.
///
/// Ties across and within samples are handled by advancing both ECDFs past
/// a shared value before comparing.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample KS distance to a continuous CDF.
pub fn ks_distance_to_cdf<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Empty);
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// Sample mean, unbiased variance and standard error of the mean.
pub fn moments(xs: &[f64]) -> Result<(f64, f64, f64)> {
    match xs.len() {
        0 => Err(Error::Empty),
        1 => Err(Error::TooFew { needed: 2, got: 1 }),
        len => {
            let n = len as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok((mean, var, (var / n).sqrt()))
        }
    }
}

/// Empirical CDF evaluated at the sorted distinct sample values.
pub fn ecdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in s.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = (i + 1) as f64 / n,
            _ => out.push((x, (i + 1) as f64 / n)),
        }
    }
    out
}

/// Writes two ECDFs on the merged grid: `x,F_a,F_b`.
pub fn write_ecdf_csv<W: Write>(a: &[f64], b: &[f64], mut out: W) -> io::Result<()> {
    let mut grid: Vec<f64> = a.iter().chain(b).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    writeln!(out, "x,F_a,F_b")?;
    let (mut i, mut j) = (0, 0);
    for x in grid {
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        let fa = if sa.is_empty() { 0.0 } else { i as f64 / sa.len() as f64 };
        let fb = if sb.is_empty() { 0.0 } else { j as f64 / sb.len() as f64 };
        writeln!(out, "{x},{fa},{fb}")?;
    }
    Ok(())
}

/// Fixed-width histogram counts on `[lo, hi]`. Values outside are dropped.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    if bins == 0 || !(hi > lo) {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        if x < lo || x > hi {
            continue;
        }
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Writes `bin_lo,bin_hi,count_a,count_b` over a shared range.
pub fn write_histogram_csv<W: Write>(a: &[f64], b: &[f64], bins: usize, mut out: W) -> io::Result<()> {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    writeln!(out, "bin_lo,bin_hi,count_a,count_b")?;
    if !(lo.is_finite() && hi.is_finite()) || bins == 0 {
        return Ok(());
    }
    let hi = if hi > lo { hi } else { lo + 1.0 };
    let ha = histogram(a, lo, hi, bins);
    let hb = histogram(b, lo, hi, bins);
    let width = (hi - lo) / bins as f64;
    for k in 0..bins {
        let l = lo + k as f64 * width;
        writeln!(out, "{},{},{},{}", l, l + width, ha[k], hb[k])?;
    }
    Ok(())
}

/// Transient law `p(t) = p0 · exp(tQ)` by uniformization.
///
/// With `Λ ≥ max |Q_ii|` and `P = I + Q/Λ`, `p(t) = Σ_m Pois(Λt; m) p0 Pᵐ`.
/// Poisson weights are formed in log space and the series stops once the
/// accumulated weight reaches `1 − tol`.
pub fn uniformization_transient(q: &DMatrix<f64>, p0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: q.ncols(),
        });
    }
    if p0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: p0.len(),
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams(format!("time must be nonnegative, got {t}")));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParams(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let max_rate = (0..n).map(|i| q[(i, i)].abs()).fold(0.0, f64::max);
    if max_rate == 0.0 || t == 0.0 {
        return Ok(p0.to_vec());
    }
    let uniform = 1.01 * max_rate;
    let p = DMatrix::identity(n, n) + q / uniform;
    let pt = p.transpose();
    let mu = uniform * t;

    let mut v = DVector::from_column_slice(p0);
    let mut acc = DVector::zeros(n);
    let mut mass = 0.0;
    let mut m = 0usize;
    let mut log_fact = 0.0;
    loop {
        if m > 0 {
            log_fact += (m as f64).ln();
        }
        let w = (m as f64 * mu.ln() - mu - log_fact).exp();
        acc.axpy(w, &v, 1.0);
        mass += w;
        // Past the mode the tail is bounded by the remaining mass.
        if mass >= 1.0 - tol && m as f64 >= mu {
            break;
        }
        m += 1;
        if m > MAX_POISSON_TERMS {
            return Err(Error::TooLarge {
                entries: m,
                cap: MAX_POISSON_TERMS,
            });
        }
        v = &pt * v;
    }
    Ok(acc.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        let d = ks_distance(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ks_distance(&[], &[1.0]), Err(Error::Empty)));
    }

    #[test]
    fn ks_ties_within_sample() {
        // F_a jumps straight to 1 at 1, F_b is 1/2 there.
        let d = ks_distance(&[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    /// Brute-force oracle: evaluate both ECDFs at every pooled point.
    fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
        let f = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter().chain(b).map(|&x| (f(a, x) - f(b, x)).abs()).fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_bounded(
            a in prop::collection::vec(-5i32..5, 1..40),
            b in prop::collection::vec(-5i32..5, 1..40),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let d = ks_distance(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_distance(&b, &a).unwrap());
            prop_assert!((d - ks_brute(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn ks_to_uniform_cdf() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance_to_cdf(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn moments_examples() {
        let (m, v, se) = moments(&[0.0, 2.0]).unwrap();
        assert_eq!((m, v, se), (1.0, 2.0, 1.0));
        let (m, v, se) = moments(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((m - 2.5).abs() < 1e-15);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(matches!(moments(&[]), Err(Error::Empty)));
        assert!(matches!(moments(&[1.0]), Err(Error::TooFew { .. })));
    }

    #[test]
    fn constant_sample_moments() {
        let s = Sample::new("c", vec![4.5; 3]);
        assert_eq!(s.moments().unwrap(), (4.5, 0.0, 0.0));
    }

    #[test]
    fn uniformization_output_is_a_distribution() {
        let q = DMatrix::from_row_slice(3, 3, &[-2.0, 1.5, 0.5, 0.2, -0.2, 0.0, 3.0, 1.0, -4.0]);
        for &t in &[0.01, 0.5, 3.0, 40.0] {
            let p = uniformization_transient(&q, &[0.2, 0.3, 0.5], t, 1e-10).unwrap();
            assert!(p.iter().all(|&x| x >= -1e-10));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn ecdf_and_histogram() {
        assert_eq!(ecdf(&[2.0, 1.0, 2.0]), vec![(1.0, 1.0 / 3.0), (2.0, 1.0)]);
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 2.0], 0.0, 1.0, 2), vec![1, 2]);
        let mut buf = Vec::new();
        write_ecdf_csv(&[0.0], &[1.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,F_a,F_b\n0,1,0\n1,1,1\n");
    }

    #[test]
    fn uniformization_two_state_closed_form() {
        let (a, b) = (1.3, 0.4);
        let q = DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]);
        for &t in &[0.0, 0.1, 1.0, 7.5] {
            let p = uniformization_transient(&q, &[1.0, 0.0], t, 1e-12).unwrap();
            let s = a + b;
            let p1 = a / s * (1.0 - (-s * t).exp());
            assert!((p[1] - p1).abs() < 1e-10, "t={t}");
            assert!((p[0] + p[1] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn uniformization_matches_matrix_exponential() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 6, 12] {
            let mut q = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random_bool(0.5) {
                        q[(i, j)] = rng.random_range(0.0..3.0);
                    }
                }
                let row: f64 = q.row(i).sum();
                q[(i, i)] = -row;
            }
            let mut p0 = vec![0.0; n];
            p0[0] = 1.0;
            let t = 1.7;
            let got = uniformization_transient(&q, &p0, t, 1e-12).unwrap();
            let e = (q.clone() * t).exp();
            for j in 0..n {
                assert!((got[j] - e[(0, j)]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn uniformization_rejects_bad_input() {
        let q = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            uniformization_transient(&q, &[1.0], 1.0, 1e-8),
            Err(Error::Dimension { .. })
        ));
        assert_eq!(uniformization_transient(&q, &[0.3, 0.7], 2.0, 1e-8).unwrap(), vec![0.3, 0.7]);
    }
}
