//! Type-1 non-uniform FFT on the torus by Gaussian gridding.
//!
//! Computes `F(k) = sum_j c_j exp(-2 pi i k . x_j / L)` for all integer
//! `k` in `[-K, K]^2`. Each point is spread onto an oversampled grid with
//! a Gaussian, the grid is transformed, and the Gaussian is divided out
//! mode by mode. Twelve-point spreading on a twofold oversampled grid gives
//! roughly twelve correct digits relative to `sum |c_j|`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::fft2::Fft2;

const SPREAD: i64 = 12;

/// Fourier coefficients on `[-K, K]^2`, stored row-major by `(k1 + K, k2 + K)`.
pub struct ModeArray {
    pub k_max: usize,
    pub values: Vec<Complex64>,
}

impl ModeArray {
    pub fn width(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn get(&self, k1: i64, k2: i64) -> Complex64 {
        let w = self.width() as i64;
        let k = self.k_max as i64;
        self.values[((k1 + k) * w + (k2 + k)) as usize]
    }
}

pub struct Nufft2 {
    k_max: usize,
    grid: usize,
    tau: f64,
    fft: Fft2,
}

impl Nufft2 {
    pub fn new(k_max: usize) -> Self {
        let grid = (2 * (2 * k_max + 1)).next_power_of_two().max(16);
        let m_eff = (grid / 2) as f64;
        let tau = PI * SPREAD as f64 / (3.0 * m_eff * m_eff);
        Self { k_max, grid, tau, fft: Fft2::new(grid) }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `positions` are in `[0, side)^2`.
    pub fn transform(&self, side: f64, positions: &[[f64; 2]], weights: &[f64]) -> ModeArray {
        assert_eq!(positions.len(), weights.len());
        let mr = self.grid;
        let h = 2.0 * PI / mr as f64;
        let four_tau = 4.0 * self.tau;
        let mut buf = vec![Complex64::new(0.0, 0.0); mr * mr];
        let width = (2 * SPREAD) as usize;
        let mut gx = vec![0.0; width];
        let mut gy = vec![0.0; width];
        for (p, &c) in positions.iter().zip(weights) {
            let u = [2.0 * PI * p[0] / side, 2.0 * PI * p[1] / side];
            let m0 = [(u[0] / h).floor() as i64, (u[1] / h).floor() as i64];
            for (dim, g) in [&mut gx, &mut gy].into_iter().enumerate() {
                for (t, l) in (-SPREAD + 1..=SPREAD).enumerate() {
                    let d = u[dim] - h * (m0[dim] + l) as f64;
                    g[t] = (-d * d / four_tau).exp();
                }
            }
            for (a, l1) in (-SPREAD + 1..=SPREAD).enumerate() {
                let row = (m0[0] + l1).rem_euclid(mr as i64) as usize * mr;
                let wa = c * gx[a];
                for (b, l2) in (-SPREAD + 1..=SPREAD).enumerate() {
                    let col = (m0[1] + l2).rem_euclid(mr as i64) as usize;
                    buf[row + col].re += wa * gy[b];
                }
            }
        }
        self.fft.forward(&mut buf);
        let k = self.k_max as i64;
        let w = 2 * self.k_max + 1;
        let pref = PI / self.tau / (mr * mr) as f64;
        let mut values = vec![Complex64::new(0.0, 0.0); w * w];
        for k1 in -k..=k {
            let i = k1.rem_euclid(mr as i64) as usize;
            for k2 in -k..=k {
                let j = k2.rem_euclid(mr as i64) as usize;
                let deconv = pref * (((k1 * k1 + k2 * k2) as f64) * self.tau).exp();
                values[((k1 + k) as usize) * w + (k2 + k) as usize] = buf[i * mr + j] * deconv;
            }
        }
        ModeArray { k_max: self.k_max, values }
    }
}
