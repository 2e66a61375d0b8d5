//! Second-order correlation of two complex signals.
//!
//! With `A[n] = conj(s1[n]) * s2[n]`, the correlation at lag `k` is
//! `C[k] = sum_{n=0}^{N-1-k} A[n] * A[n+k]` (linear correlation, the record
//! is zero-padded rather than wrapped). [`g2_direct`] evaluates the sum for
//! selected lags; [`G2Fft`] produces every lag with one forward and one
//! inverse transform of length `M >= 2N`.
//!
//! The FFT form follows from `conj(FFT(conj(A)))[f] = X[-f]` where
//! `X = FFT(A)`, so `C = IFFT(X[-f] * X[f])` restricted to `0..N`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum G2Error {
    #[error("signal lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("lag {lag} out of range for length {len}")]
    LagOutOfRange { lag: usize, len: usize },
}

/// `A[n] = conj(s1[n]) * s2[n]`.
pub fn product(s1: &[Complex64], s2: &[Complex64]) -> Result<Vec<Complex64>, G2Error> {
    if s1.len() != s2.len() {
        return Err(G2Error::LengthMismatch(s1.len(), s2.len()));
    }
    Ok(s1.iter().zip(s2).map(|(a, b)| a.conj() * b).collect())
}

/// Correlation of an already formed product sequence at one lag.
pub fn lag_sum(a: &[Complex64], k: usize) -> Complex64 {
    a.iter().zip(&a[k.min(a.len())..]).map(|(x, y)| x * y).sum()
}

/// Per-lag sums for the requested lags.
pub fn g2_direct(
    s1: &[Complex64],
    s2: &[Complex64],
    lags: &[usize],
) -> Result<Vec<Complex64>, G2Error> {
    let a = product(s1, s2)?;
    lags.iter()
        .map(|&k| {
            if k >= a.len() {
                Err(G2Error::LagOutOfRange {
                    lag: k,
                    len: a.len(),
                })
            } else {
                Ok(lag_sum(&a, k))
            }
        })
        .collect()
}

/// All lags `0..N` by direct summation, O(N^2).
pub fn g2_direct_all(s1: &[Complex64], s2: &[Complex64]) -> Result<Vec<Complex64>, G2Error> {
    let a = product(s1, s2)?;
    Ok((0..a.len()).map(|k| lag_sum(&a, k)).collect())
}

/// Transform length used for a record of `n` samples.
pub fn fft_len(n: usize) -> usize {
    (2 * n).next_power_of_two().max(1)
}

/// Radix-2 butterflies of the forward plus inverse transform for `n`
/// samples. Used to price the engine-side routine.
pub fn butterflies(n: usize) -> u64 {
    let m = fft_len(n) as u64;
    if m < 2 {
        return 0;
    }
    2 * (m / 2) * u64::from(m.trailing_zeros())
}

/// Reusable FFT plans and scratch for one record length.
pub struct G2Fft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    spec: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for G2Fft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("G2Fft").field("n", &self.n).finish()
    }
}

impl G2Fft {
    pub fn new(n: usize) -> Self {
        let m = fft_len(n);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            buf: vec![Complex64::default(); m],
            spec: vec![Complex64::default(); m],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Correlation of a product sequence, written to `out[0..N]`.
    pub fn autocorrelate_into(&mut self, a: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(a.len(), self.n, "record length does not match the plan");
        assert!(out.len() >= self.n);
        if self.n == 0 {
            return;
        }
        let m = self.buf.len();
        self.buf[..self.n].copy_from_slice(a);
        self.buf[self.n..].fill(Complex64::default());
        self.forward
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        for f in 0..m {
            self.spec[f] = self.buf[f] * self.buf[(m - f) % m];
        }
        self.inverse
            .process_with_scratch(&mut self.spec, &mut self.scratch);
        let scale = 1.0 / m as f64;
        for (o, v) in out.iter_mut().zip(&self.spec[..self.n]) {
            *o = v * scale;
        }
    }

    /// All-lag correlation of two signals.
    pub fn g2(&mut self, s1: &[Complex64], s2: &[Complex64]) -> Result<Vec<Complex64>, G2Error> {
        let a = product(s1, s2)?;
        if a.len() != self.n {
            return Err(G2Error::LengthMismatch(a.len(), self.n));
        }
        let mut out = vec![Complex64::default(); self.n];
        self.autocorrelate_into(&a, &mut out);
        Ok(out)
    }
}

/// All-lag correlation via FFT with a one-off plan.
pub fn g2_fft(s1: &[Complex64], s2: &[Complex64]) -> Result<Vec<Complex64>, G2Error> {
    G2Fft::new(s1.len()).g2(s1, s2)
}

/// Largest elementwise deviation of `got` from `want`, relative to the
/// largest magnitude in `want`.
pub fn max_relative_error(got: &[Complex64], want: &[Complex64]) -> f64 {
    let scale = want.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let err = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn all_ones_gives_triangle() {
        let s = vec![c(1.0); 16];
        let got = g2_fft(&s, &s).unwrap();
        for (k, v) in got.iter().enumerate() {
            assert!((v.re - (16 - k) as f64).abs() < 1e-9 && v.im.abs() < 1e-9);
        }
        assert_eq!(g2_direct(&s, &s, &[0, 15]).unwrap(), vec![c(16.0), c(1.0)]);
    }

    #[test]
    fn impulse_and_zero() {
        let mut s = vec![c(0.0); 8];
        assert!(g2_fft(&s, &s).unwrap().iter().all(|v| v.norm() == 0.0));
        s[0] = c(1.0);
        let got = g2_direct_all(&s, &s).unwrap();
        assert_eq!(got[0], c(1.0));
        assert!(got[1..].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn errors() {
        let s = vec![c(1.0); 4];
        assert_eq!(
            g2_direct(&s, &s, &[4]),
            Err(G2Error::LagOutOfRange { lag: 4, len: 4 })
        );
        assert_eq!(g2_fft(&s, &s[..3]), Err(G2Error::LengthMismatch(4, 3)));
    }

    #[test]
    fn butterfly_count() {
        // 2048-point transforms, two of them
        assert_eq!(butterflies(1024), 2 * 1024 * 11);
    }
}
