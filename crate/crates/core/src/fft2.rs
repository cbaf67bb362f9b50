use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Square 2D FFT on row-major `n x n` buffers (unnormalised both ways).
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `X[k1,k2] = sum x[i,j] exp(-2 pi i (k1 i + k2 j) / n)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform without the `1/n^2` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Signed integer frequency for FFT index `k` of length `n`.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft() {
        let n = 8;
        let data: Vec<Complex64> = (0..n * n).map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64).cos())).collect();
        let mut fast = data.clone();
        Fft2::new(n).forward(&mut fast);
        for k1 in 0..n {
            for k2 in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let ph = -2.0 * std::f64::consts::PI * ((k1 * i + k2 * j) as f64) / n as f64;
                        s += data[i * n + j] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((s - fast[k1 * n + k2]).norm() < 1e-10);
            }
        }
        let mut back = fast;
        Fft2::new(n).inverse(&mut back);
        for (a, b) in back.iter().zip(&data) {
            assert!((a / (n * n) as f64 - b).norm() < 1e-12);
        }
    }
}
