//! Fourier-side diagnostics: the structure factor on the torus frequency
//! lattice `(1/L) Z^2`, the Bessel form of `sigma(r)`, the spectral
//! condition, and the intrinsic (pair-correlation) Coulomb energy.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::bessel_j1;
use crate::coulomb::f_eta;
use crate::error::{Error, Result};
use crate::generators::ProcessSpec;
use crate::geometry::{PointConfiguration, TorusBox};
use crate::nufft::Nufft2;
use crate::rng::RngSeed;
use crate::stats::{dyadic_verdict, mean, stderr_of_mean, Verdict};
use crate::variance::{pair_histogram, Cutoff};

pub const MIN_SPECTRAL_REPLICAS: usize = 50;
/// Replicas summed sequentially per parallel task; fixed so results do not
/// depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    pub omega: f64,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Averaged periodogram on the modes `k` with `0 < |k| <= L omega_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub process: String,
    pub side: f64,
    pub omega_max: f64,
    pub replicas: usize,
    /// Half-width of the mode square; `S` at mode `(k1, k2)` sits at
    /// `(k1 + k_max) * (2 k_max + 1) + (k2 + k_max)`.
    pub k_max: usize,
    /// Mean of `(N - L^2)^2 / L^2`, the `omega = 0` term. It is zero for
    /// fixed-count processes and is kept out of the mode map.
    #[serde(default)]
    pub zero_mode: f64,
    /// Per-mode mean, absent when the estimate was read back from radial bins.
    #[serde(skip)]
    pub modes: Option<Vec<f64>>,
    #[serde(skip)]
    pub mode_stderr: Option<Vec<f64>>,
    pub radial_bins: Vec<RadialBin>,
}

impl SpectralEstimate {
    fn width(&self) -> usize {
        2 * self.k_max + 1
    }

    /// `S` at integer mode `k`, if stored.
    pub fn at(&self, k1: i64, k2: i64) -> Option<f64> {
        let k = self.k_max as i64;
        let modes = self.modes.as_ref()?;
        if k1.abs() > k || k2.abs() > k {
            return None;
        }
        Some(modes[((k1 + k) as usize) * self.width() + (k2 + k) as usize])
    }

    pub fn stderr_at(&self, k1: i64, k2: i64) -> Option<f64> {
        let k = self.k_max as i64;
        let se = self.mode_stderr.as_ref()?;
        Some(se[((k1 + k) as usize) * self.width() + (k2 + k) as usize])
    }

    /// Sum of `w(|omega|) S(omega) / L^2` over the stored nonzero modes with
    /// `lo < |omega| <= hi`, using per-mode values when available and radial
    /// bin means otherwise.
    pub fn weighted_sum(&self, lo: f64, hi: f64, w: impl Fn(f64) -> f64) -> f64 {
        let l = self.side;
        let area = l * l;
        let k = self.k_max as i64;
        let kmax2 = (self.omega_max * l).powi(2) + 1e-9;
        let mut total = 0.0;
        for k1 in -k..=k {
            for k2 in -k..=k {
                let kk = (k1 * k1 + k2 * k2) as f64;
                if kk == 0.0 || kk > kmax2 {
                    continue;
                }
                let om = kk.sqrt() / l;
                if om <= lo || om > hi {
                    continue;
                }
                let s = match &self.modes {
                    Some(m) => m[((k1 + k) as usize) * self.width() + (k2 + k) as usize],
                    None => self.radial_bins.get(kk.sqrt() as usize).map_or(0.0, |b| b.mean),
                };
                total += w(om) * s;
            }
        }
        total / area
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "omega_bin,S_mean,S_stderr,count")?;
        for b in &self.radial_bins {
            writeln!(w, "{:.10e},{:.10e},{:.10e},{}", b.omega, b.mean, b.stderr, b.count)?;
        }
        Ok(())
    }

    /// Rebuild an estimate from its radial CSV; bins must be the contiguous
    /// width-`1/L` bins written by [`SpectralEstimate::write_csv`].
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut bins = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns", n + 1)));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)));
            bins.push(RadialBin {
                omega: num(f[0])?,
                mean: num(f[1])?,
                stderr: num(f[2])?,
                count: f[3].trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?,
            });
        }
        if bins.len() < 2 {
            return Err(Error::BadBinning("need at least two radial bins".into()));
        }
        let side = 1.0 / (bins[1].omega - bins[0].omega);
        let side = side.round();
        let k_max = bins.len() - 1;
        Ok(Self {
            process: "csv".into(),
            side,
            omega_max: k_max as f64 / side,
            replicas: 0,
            k_max,
            zero_mode: 0.0,
            modes: None,
            mode_stderr: None,
            radial_bins: bins,
        })
    }
}

/// `|sum_x m_x exp(-2 pi i k.x / L)|^2 / L^2` on the mode square `[-K, K]^2`.
pub fn periodogram(config: &PointConfiguration, nufft: &Nufft2) -> Vec<f64> {
    let pos: Vec<[f64; 2]> = config.points.iter().map(|p| [p.x, p.y]).collect();
    let wts: Vec<f64> = config.multiplicities.iter().map(|&m| f64::from(m)).collect();
    let area = config.torus.area();
    let modes = nufft.transform(config.torus.side(), &pos, &wts);
    let k = nufft.k_max();
    let w = 2 * k + 1;
    let mut s: Vec<f64> = modes.values.iter().map(|c| c.norm_sqr() / area).collect();
    s[k * w + k] = 0.0;
    // enforce exact hermitian symmetry of the squared modulus
    for i in 0..w {
        for j in 0..w {
            let (a, b) = (i * w + j, (w - 1 - i) * w + (w - 1 - j));
            if a < b {
                let m = 0.5 * (s[a] + s[b]);
                s[a] = m;
                s[b] = m;
            }
        }
    }
    s
}

pub fn structure_factor(
    spec: &ProcessSpec,
    torus: &TorusBox,
    replicas: usize,
    omega_max: f64,
    seed: RngSeed,
) -> Result<SpectralEstimate> {
    torus.integer_side()?;
    if replicas < MIN_SPECTRAL_REPLICAS {
        return Err(Error::TooFewReplicas { needed: MIN_SPECTRAL_REPLICAS, got: replicas });
    }
    if !(omega_max > 0.0) {
        return Err(Error::InsufficientFrequencyRange(format!("omega_max must be positive, got {omega_max}")));
    }
    spec.validate(torus)?;
    let configs = |range: std::ops::Range<usize>| -> Result<Vec<PointConfiguration>> {
        range.map(|i| spec.sample(torus, seed.replica(i as u64))).collect()
    };
    let mut est = estimate_from(torus, omega_max, replicas, |chunk| configs(chunk))?;
    est.process = spec.label();
    Ok(est)
}

/// Structure factor of a fixed ensemble of configurations.
pub fn structure_factor_of(ensemble: &[PointConfiguration], omega_max: f64) -> Result<SpectralEstimate> {
    let first = ensemble.first().ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let torus = first.torus;
    estimate_from(&torus, omega_max, ensemble.len(), |range| Ok(ensemble[range].to_vec()))
}

fn estimate_from(
    torus: &TorusBox,
    omega_max: f64,
    replicas: usize,
    fetch: impl Fn(std::ops::Range<usize>) -> Result<Vec<PointConfiguration>> + Sync,
) -> Result<SpectralEstimate> {
    let l = torus.side();
    let k_max = (omega_max * l + 1e-9).floor() as usize;
    if k_max < 1 {
        return Err(Error::InsufficientFrequencyRange(format!("omega_max {omega_max} is below 1/L")));
    }
    let nufft = Nufft2::new(k_max);
    let w = 2 * k_max + 1;
    let nbins = k_max + 1;
    let bin_of: Vec<Option<usize>> = (0..w * w)
        .map(|idx| {
            let k1 = (idx / w) as i64 - k_max as i64;
            let k2 = (idx % w) as i64 - k_max as i64;
            let kk = ((k1 * k1 + k2 * k2) as f64).sqrt();
            (kk > 0.0 && kk <= k_max as f64 + 1e-9).then(|| kk as usize)
        })
        .collect();
    let chunks: Vec<std::ops::Range<usize>> =
        (0..replicas).step_by(CHUNK).map(|s| s..(s + CHUNK).min(replicas)).collect();
    type Acc = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, f64);
    let parts: Vec<Acc> = chunks
        .into_par_iter()
        .map(|range| -> Result<Acc> {
            let mut sum = vec![0.0; w * w];
            let mut sumsq = vec![0.0; w * w];
            let mut radial = Vec::new();
            let mut zero = 0.0;
            for config in fetch(range)? {
                zero += (config.total_count() as f64 - torus.area()).powi(2) / torus.area();
                let s = periodogram(&config, &nufft);
                let mut bsum = vec![0.0; nbins];
                let mut bcnt = vec![0usize; nbins];
                for (idx, &v) in s.iter().enumerate() {
                    if let Some(b) = bin_of[idx] {
                        sum[idx] += v;
                        sumsq[idx] += v * v;
                        bsum[b] += v;
                        bcnt[b] += 1;
                    }
                }
                radial.push(bsum.iter().zip(&bcnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect());
            }
            Ok((sum, sumsq, radial, zero))
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; w * w];
    let mut sumsq = vec![0.0; w * w];
    let mut radial: Vec<Vec<f64>> = Vec::with_capacity(replicas);
    let mut zero = 0.0;
    for (s, q, r, z) in parts {
        zero += z;
        for i in 0..w * w {
            sum[i] += s[i];
            sumsq[i] += q[i];
        }
        radial.extend(r);
    }
    let n = replicas as f64;
    let modes: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mode_stderr: Vec<f64> = sum
        .iter()
        .zip(&sumsq)
        .map(|(s, q)| {
            let m = s / n;
            (((q / n - m * m) * n / (n - 1.0).max(1.0)).max(0.0) / n).sqrt()
        })
        .collect();
    let mut counts = vec![0usize; nbins];
    for b in bin_of.iter().flatten() {
        counts[*b] += 1;
    }
    let radial_bins = (0..nbins)
        .map(|b| {
            let per: Vec<f64> = radial.iter().map(|r| r[b]).collect();
            RadialBin {
                omega: (b as f64 + 0.5) / l,
                mean: if counts[b] > 0 { mean(&per) } else { 0.0 },
                stderr: if counts[b] > 0 && per.len() > 1 { stderr_of_mean(&per) } else { 0.0 },
                count: counts[b],
            }
        })
        .collect();
    Ok(SpectralEstimate {
        process: String::new(),
        side: l,
        omega_max,
        replicas,
        k_max,
        zero_mode: zero / n,
        modes: Some(modes),
        mode_stderr: Some(mode_stderr),
        radial_bins,
    })
}

/// Calibrated Bessel kernel `K_r(w) = J1(2 pi r w)^2 / (pi w^2)`.
///
/// Normalised so that a flat unit spectrum gives `sigma = 1`: the plane
/// integral of `K_r` is 1, and `K_r(0+) = pi r^2`.
pub fn jr_fourier(omega: f64, r: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let w = omega.abs();
    let t = 2.0 * PI * r * w;
    if t < 1e-4 {
        // J1(t)/t = 1/2 - t^2/16 + ...
        let ratio = 0.5 - t * t / 16.0;
        return Ok((2.0 * PI * r).powi(2) * ratio * ratio / PI);
    }
    let j = bessel_j1(t);
    Ok(j * j / (PI * w * w))
}

/// Mass of `K_r` outside `|omega| <= omega_max`, from `J1^2(t) ~ (1 - sin 2t) / (pi t)`.
pub fn jr_tail_mass(r: f64, omega_max: f64) -> f64 {
    1.0 / (PI * PI * r * omega_max)
}

pub const MAX_TAIL_MASS: f64 = 0.01;

pub fn sigma_via_spectrum(est: &SpectralEstimate, r: f64) -> Result<f64> {
    if !(r > 0.0) || r > 0.25 * est.side {
        return Err(Error::RadiusTooLarge { r, side: est.side, limit: 0.25 * est.side });
    }
    let tail = jr_tail_mass(r, est.omega_max);
    if tail > MAX_TAIL_MASS {
        return Err(Error::InsufficientFrequencyRange(format!(
            "kernel mass beyond omega_max = {} is {tail:.4} > {MAX_TAIL_MASS} at r = {r}",
            est.omega_max
        )));
    }
    let zero = est.zero_mode * PI * r * r / (est.side * est.side);
    Ok(zero + est.weighted_sum(0.0, f64::INFINITY, |w| jr_fourier(w, r).expect("nonzero frequency")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScReport {
    pub value: f64,
    pub divergence_flag: bool,
    pub verdict: Verdict,
    /// Contributions of the shells `2^-(m+1) < |omega| <= 2^-m`, `m = 0, 1, ...`.
    pub shells: Vec<f64>,
}

/// Smallest `L * inner radius` of a shell that enters the verdict.
pub const SC_MIN_SHELL_MODES: f64 = 4.0;

/// `sum_{0 < |omega| < 1} S / |omega|^2 / L^2` with a dyadic-shell verdict.
pub fn sc_integral(est: &SpectralEstimate) -> ScReport {
    let inv2 = |w: f64| 1.0 / (w * w);
    // Bragg peaks of the unit lattice sit exactly on |omega| = 1; leave them out
    let top = 1.0 - 1e-9;
    let value = est.weighted_sum(0.0, top, inv2);
    let mut shells = Vec::new();
    let mut m = 0;
    // the innermost shells hold only a handful of modes and their lattice
    // count is far from the annulus area, so they are left to the value only
    while 2f64.powi(-(m + 1)) * est.side >= SC_MIN_SHELL_MODES - 1e-9 {
        let hi = 2f64.powi(-m).min(top);
        shells.push(est.weighted_sum(0.5 * hi, hi, inv2));
        m += 1;
    }
    let (verdict, _) = dyadic_verdict(&shells);
    ScReport { value, divergence_flag: verdict == Verdict::Diverging, verdict, shells }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationBoundCheck {
    pub max_window_mass: f64,
    pub ratio: f64,
    pub constant: f64,
    pub pass: bool,
}

pub const TRANSLATION_BOUND_CONSTANT: f64 = 50.0;

/// Largest spectral mass of a unit frequency ball, over ball centers on a
/// quarter-unit grid, divided by `E[|X ∩ B_1|^2]`.
pub fn translation_bounded_check(est: &SpectralEstimate, count_second_moment: f64) -> Result<TranslationBoundCheck> {
    let modes = est.modes.as_ref().ok_or_else(|| Error::InvalidParameter("per-mode spectrum required".into()))?;
    let l = est.side;
    let k = est.k_max as i64;
    let w = est.width();
    let reach = est.omega_max - 1.0;
    let mut best = 0.0f64;
    let steps = (reach.max(0.0) * 4.0).floor() as i64;
    for a in -steps..=steps {
        for b in -steps..=steps {
            let c = [a as f64 * 0.25, b as f64 * 0.25];
            if c[0].hypot(c[1]) > reach.max(0.0) {
                continue;
            }
            let mut mass = 0.0;
            let (c1, c2) = ((c[0] * l).round() as i64, (c[1] * l).round() as i64);
            let lk = l as i64 + 1;
            for k1 in (c1 - lk).max(-k)..=(c1 + lk).min(k) {
                for k2 in (c2 - lk).max(-k)..=(c2 + lk).min(k) {
                    let om = [k1 as f64 / l - c[0], k2 as f64 / l - c[1]];
                    if om[0].hypot(om[1]) <= 1.0 {
                        mass += modes[((k1 + k) as usize) * w + (k2 + k) as usize];
                    }
                }
            }
            best = best.max(mass / (l * l));
        }
    }
    let ratio = if count_second_moment > 0.0 { best / count_second_moment } else { 0.0 };
    Ok(TranslationBoundCheck {
        max_window_mass: best,
        ratio,
        constant: TRANSLATION_BOUND_CONSTANT,
        pass: ratio < TRANSLATION_BOUND_CONSTANT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIntegral {
    pub value: f64,
    /// Bound on the omitted `|omega| > omega_max` part, assuming `S` stays
    /// below the largest observed radial mean.
    pub truncation_bound: f64,
}

pub fn tail_cubed_integral(est: &SpectralEstimate) -> Result<TailIntegral> {
    if est.omega_max < 4.0 {
        return Err(Error::InsufficientFrequencyRange(format!("need omega_max >= 4, got {}", est.omega_max)));
    }
    let value = est.weighted_sum(1.0 - 1e-12, f64::INFINITY, |w| 1.0 / (w * w * w));
    let s_max = est.radial_bins.iter().map(|b| b.mean).fold(0.0, f64::max);
    Ok(TailIntegral { value, truncation_bound: 2.0 * PI * s_max / est.omega_max })
}

/// Radially binned pair correlation `rho_2` at unit intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialCorrelation {
    pub bin_width: f64,
    pub rho2: Vec<f64>,
}

impl RadialCorrelation {
    pub fn from_ensemble(ensemble: &[PointConfiguration], reach: f64, bin_width: f64) -> Result<Self> {
        let h = pair_histogram(ensemble, reach, bin_width)?;
        let lambda = h.intensity();
        let norm = h.configs as f64 * h.area * lambda * lambda;
        let rho2 = h
            .weight
            .iter()
            .enumerate()
            .map(|(b, w)| {
                let (a, c) = (b as f64 * bin_width, (b as f64 + 1.0) * bin_width);
                w / (norm * PI * (c * c - a * a))
            })
            .collect();
        Ok(Self { bin_width, rho2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicEnergy {
    /// `integral of -log~(v) (rho_2 - 1)(v) dv` over the window.
    pub off_diagonal: f64,
    /// Self energy `-log eta + 1/4` of one charge spread uniformly on `B_eta`.
    pub diagonal: f64,
}

impl IntrinsicEnergy {
    pub fn total(&self) -> f64 {
        self.off_diagonal + self.diagonal
    }
}

/// Intrinsic energy with kernel `log~(v) = log|v| + f_eta(v)` (equal to
/// `log eta` on `B_eta`). With a sharp window the per-bin radial integrals
/// are exact; the smooth window `(1 - s^2/v_max^2)^3` uses Gauss-Legendre.
pub fn coul_intrinsic(corr: &RadialCorrelation, eta: f64, v_max: f64, cutoff: Cutoff) -> Result<IntrinsicEnergy> {
    if !(corr.bin_width > 0.0) || corr.rho2.is_empty() {
        return Err(Error::BadBinning("empty or degenerate radial binning".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
    }
    if v_max > corr.bin_width * corr.rho2.len() as f64 + 1e-9 {
        return Err(Error::BadBinning(format!(
            "v_max {v_max} exceeds binned range {}",
            corr.bin_width * corr.rho2.len() as f64
        )));
    }
    let log_tilde = |s: f64| s.ln() + f_eta([s, 0.0], eta);
    let mut off = 0.0;
    for (b, &rho) in corr.rho2.iter().enumerate() {
        let a = b as f64 * corr.bin_width;
        if a >= v_max {
            break;
        }
        let c = ((b + 1) as f64 * corr.bin_width).min(v_max);
        let radial = match cutoff {
            Cutoff::Sharp => s_log_tilde_integral(a, c, eta),
            Cutoff::Smooth => {
                let window = |s: f64| (1.0 - (s / v_max).powi(2)).powi(3);
                gauss_legendre(a, c, |s| s * log_tilde(s) * window(s))
            }
        };
        off += -2.0 * PI * radial * (rho - 1.0);
    }
    Ok(IntrinsicEnergy { off_diagonal: off, diagonal: -eta.ln() + 0.25 })
}

/// `integral_a^c s log~(s) ds` in closed form.
fn s_log_tilde_integral(a: f64, c: f64, eta: f64) -> f64 {
    let prim = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            0.5 * s * s * s.ln() - 0.25 * s * s
        }
    };
    let inner = |lo: f64, hi: f64| 0.5 * (hi * hi - lo * lo) * eta.ln();
    if c <= eta {
        inner(a, c)
    } else if a >= eta {
        prim(c) - prim(a)
    } else {
        inner(a, eta) + prim(c) - prim(eta)
    }
}

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
    const W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    (0..4).map(|i| W[i] * (f(m + h * X[i]) + f(m - h * X[i]))).sum::<f64>() * h
}
