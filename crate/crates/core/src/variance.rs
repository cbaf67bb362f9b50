//! Real-space number variance: `sigma(r) = Var(count in B_r) / (pi r^2)`,
//! the dyadic HU* series built from it, and the pair-correlation route to
//! the same quantity.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::ProcessSpec;
use crate::geometry::{check_ball_radius, Point, PointConfiguration, TorusBox};
use crate::rng::RngSeed;
use crate::stats::{dyadic_verdict, jackknife_stderr, loglog_fit, Verdict};

pub const MIN_REPLICAS: usize = 30;
pub const MIN_PAIR_ENSEMBLE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceCurve {
    pub process: String,
    pub side: f64,
    pub radii: Vec<f64>,
    pub sigma: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicas: usize,
    pub centers_per_replica: usize,
}

impl VarianceCurve {
    /// `sigma` at radius `r`, if it was measured.
    pub fn at(&self, r: f64) -> Option<f64> {
        self.radii.iter().position(|&q| (q - r).abs() < 1e-9).map(|k| self.sigma[k])
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "r,sigma,stderr,replicas")?;
        for k in 0..self.radii.len() {
            writeln!(w, "{},{:.10e},{:.10e},{}", self.radii[k], self.sigma[k], self.stderr[k], self.replicas)?;
        }
        Ok(())
    }
}

/// Monte Carlo estimate of `sigma(r)` for each radius.
///
/// Each replica draws `centers_per_replica` uniform centers. Since the mean
/// count `lambda pi r^2` is known from the spec, `Var` is estimated by the
/// mean squared deviation from it, which stays unbiased however the counts
/// within a replica are correlated.
pub fn estimate_sigma(
    spec: &ProcessSpec,
    torus: &TorusBox,
    radii: &[f64],
    replicas: usize,
    centers_per_replica: usize,
    seed: RngSeed,
) -> Result<VarianceCurve> {
    if replicas < MIN_REPLICAS {
        return Err(Error::TooFewReplicas { needed: MIN_REPLICAS, got: replicas });
    }
    if centers_per_replica == 0 {
        return Err(Error::InvalidParameter("centers_per_replica must be positive".into()));
    }
    for &r in radii {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
        }
        check_ball_radius(r, torus)?;
    }
    spec.validate(torus)?;
    let lambda = spec.intensity();
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let side = torus.side();
    // per replica, per radius: sum over centers of squared deviations
    let records: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let s = seed.replica(i);
            let config = spec.sample(torus, s)?;
            let index = config.index((r_max / 4.0).max(1.0));
            let mut rng = s.derive(0x63_656e_7465_72).rng();
            let mut dev = vec![0.0; radii.len()];
            for _ in 0..centers_per_replica {
                let c = Point::new(side * rng.gen::<f64>(), side * rng.gen::<f64>());
                for (k, &r) in radii.iter().enumerate() {
                    let n = index.count_within(c, r) as f64;
                    let d = n - lambda * PI * r * r;
                    dev[k] += d * d;
                }
            }
            Ok(dev)
        })
        .collect::<Result<_>>()?;
    let mut sigma = Vec::with_capacity(radii.len());
    let mut stderr = Vec::with_capacity(radii.len());
    let per = centers_per_replica as f64;
    for (k, &r) in radii.iter().enumerate() {
        let area = PI * r * r;
        let stat = |rs: &[&Vec<f64>]| rs.iter().map(|d| d[k]).sum::<f64>() / (rs.len() as f64 * per * area);
        let all: Vec<&Vec<f64>> = records.iter().collect();
        sigma.push(stat(&all));
        stderr.push(jackknife_stderr(&records, |rs| stat(rs)));
    }
    Ok(VarianceCurve {
        process: spec.label(),
        side,
        radii: radii.to_vec(),
        sigma,
        stderr,
        replicas,
        centers_per_replica,
    })
}

/// Summability diagnostic for the dyadic series `sum_n sigma(2^n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuStarReport {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub n_max: u32,
    pub verdict: Verdict,
    /// Fitted per-dyad exponent of the tail terms.
    pub tail_exponent: f64,
    /// Log-log growth rate of the partial sums against `2^n`.
    pub slope: f64,
    pub warnings: Vec<String>,
}

pub fn hustar_series(curve: &VarianceCurve, n_max: u32) -> Result<HuStarReport> {
    let mut warnings = Vec::new();
    let mut terms = Vec::new();
    let mut used = 0;
    for n in 0..=n_max {
        let r = 2f64.powi(n as i32);
        if r >= 0.5 * curve.side {
            let msg = format!("radius {r} is not below L/2 = {}; dyads from here on are dropped", 0.5 * curve.side);
            warn!("{msg}");
            warnings.push(msg);
            break;
        }
        let s = curve.at(r).ok_or(Error::MissingDyadicRadii(r))?;
        let s = if s < 0.0 {
            let msg = format!("sigma({r}) = {s:.3e} is negative; clamped to 0");
            warn!("{msg}");
            warnings.push(msg);
            0.0
        } else {
            s
        };
        terms.push(s);
        used = n;
    }
    Ok(hustar_from_terms(terms, used, warnings))
}

/// HU* report from raw dyadic terms `sigma(2^0), sigma(2^1), ...`.
pub fn hustar_from_terms(terms: Vec<f64>, n_max: u32, warnings: Vec<String>) -> HuStarReport {
    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut acc = 0.0;
    for &t in &terms {
        acc += t;
        partial_sums.push(acc);
    }
    let (verdict, tail_exponent) = dyadic_verdict(&terms);
    let xs: Vec<f64> = (0..terms.len()).map(|n| 2f64.powi(n as i32)).collect();
    let slope = if terms.len() >= 2 { loglog_fit(&xs, &partial_sums).slope } else { f64::NAN };
    HuStarReport { terms, partial_sums, n_max, verdict, tail_exponent, slope, warnings }
}

/// Area of `B_r(0) ∩ B_r(v)` over `pi r^2`, as a function of `|v|`.
pub fn jr_radial(d: f64, r: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    let x = d / (2.0 * r);
    2.0 / PI * (x.acos() - x * (1.0 - x * x).sqrt())
}

pub fn jr_real(v: [f64; 2], r: f64) -> f64 {
    jr_radial(v[0].hypot(v[1]), r)
}

/// Ordered pairs of distinct particles binned by separation.
///
/// Coincident particles (multiplicity above one) contribute `m (m - 1)`
/// pairs at separation zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PairHistogram {
    pub bin_width: f64,
    pub weight: Vec<f64>,
    pub distance_sum: Vec<f64>,
    pub configs: usize,
    pub total_points: f64,
    pub total_points_sq: f64,
    pub area: f64,
    /// Pair sum of `j_r` evaluated at each exact separation, when requested.
    pub exact_jr_sum: Option<f64>,
}

impl PairHistogram {
    pub fn mean_distance(&self, b: usize) -> f64 {
        if self.weight[b] > 0.0 {
            self.distance_sum[b] / self.weight[b]
        } else {
            (b as f64 + 0.5) * self.bin_width
        }
    }

    pub fn intensity(&self) -> f64 {
        self.total_points / (self.configs as f64 * self.area)
    }
}

pub fn pair_histogram(ensemble: &[PointConfiguration], reach: f64, bin_width: f64) -> Result<PairHistogram> {
    pair_scan(ensemble, reach, bin_width, None)
}

fn pair_scan(ensemble: &[PointConfiguration], reach: f64, bin_width: f64, jr: Option<f64>) -> Result<PairHistogram> {
    let first = ensemble.first().ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let torus = first.torus;
    if !(bin_width > 0.0) {
        return Err(Error::BadBinning(format!("bin width must be positive, got {bin_width}")));
    }
    if reach >= 0.5 * torus.side() {
        return Err(Error::RadiusTooLarge { r: reach, side: torus.side(), limit: 0.5 * torus.side() });
    }
    if ensemble.iter().any(|c| c.torus != torus) {
        return Err(Error::InvalidParameter("ensemble mixes boxes".into()));
    }
    let nbins = (reach / bin_width).ceil() as usize;
    let per: Vec<(Vec<f64>, Vec<f64>, f64)> = ensemble
        .par_iter()
        .map(|config| {
            let mut w = vec![0.0; nbins];
            let mut ds = vec![0.0; nbins];
            let mut exact = 0.0;
            let index = config.index((reach / 3.0).max(0.5));
            for (k, (p, m)) in config.iter().enumerate() {
                let m = f64::from(m);
                if nbins > 0 {
                    w[0] += m * (m - 1.0);
                }
                if jr.is_some() {
                    exact += m * (m - 1.0);
                }
                index.for_each_within(p, reach, |q, d| {
                    if q == k {
                        return;
                    }
                    let dist = d[0].hypot(d[1]);
                    let b = ((dist / bin_width) as usize).min(nbins - 1);
                    let mm = m * f64::from(config.multiplicities[q]);
                    w[b] += mm;
                    ds[b] += mm * dist;
                    if let Some(r) = jr {
                        exact += mm * jr_radial(dist, r);
                    }
                });
            }
            (w, ds, exact)
        })
        .collect();
    let mut weight = vec![0.0; nbins];
    let mut distance_sum = vec![0.0; nbins];
    for (w, ds, _) in &per {
        for b in 0..nbins {
            weight[b] += w[b];
            distance_sum[b] += ds[b];
        }
    }
    let counts: Vec<f64> = ensemble.iter().map(|c| c.total_count() as f64).collect();
    Ok(PairHistogram {
        bin_width,
        weight,
        distance_sum,
        configs: ensemble.len(),
        total_points: counts.iter().sum(),
        total_points_sq: counts.iter().map(|n| n * n).sum(),
        area: torus.area(),
        exact_jr_sum: jr.map(|_| per.iter().map(|p| p.2).sum()),
    })
}

/// `sigma(r)` from the pair correlation of an ensemble.
///
/// The correlation measure is binned at `0.05 r`, but the kernel `j_r` is
/// applied at every exact separation: for rigid processes `sigma` is a
/// difference of two terms of size `pi r^2` and the binned version loses it.
/// [`sigma_from_histogram`] gives the purely binned estimate.
pub fn sigma_from_pairs(ensemble: &[PointConfiguration], r: f64) -> Result<f64> {
    if ensemble.len() < MIN_PAIR_ENSEMBLE {
        return Err(Error::TooFewReplicas { needed: MIN_PAIR_ENSEMBLE, got: ensemble.len() });
    }
    let side = ensemble[0].torus.side();
    if !(r > 0.0) || r >= 0.25 * side {
        return Err(Error::RadiusTooLarge { r, side, limit: 0.25 * side });
    }
    let hist = pair_scan(ensemble, 2.0 * r, 0.05 * r, Some(r))?;
    let lambda = hist.intensity();
    let pairs = hist.exact_jr_sum.unwrap_or(0.0);
    Ok(lambda + pairs / (hist.configs as f64 * hist.area) - PI * r * r * lambda * lambda)
}

/// Binned estimate: `j_r` taken at each bin's mean separation.
pub fn sigma_from_histogram(hist: &PairHistogram, r: f64) -> f64 {
    let k = hist.configs as f64;
    let lambda = hist.intensity();
    let pairs: f64 = (0..hist.weight.len()).map(|b| hist.weight[b] * jr_radial(hist.mean_distance(b), r)).sum();
    lambda + pairs / (k * hist.area) - PI * r * r * lambda * lambda
}

/// Radial cutoff used when integrating the correlation measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// Indicator of `|v| <= R`.
    Sharp,
    /// `(1 - |v|^2/R^2)^3` on `|v| <= R`, which suppresses lattice-shell oscillations.
    Smooth,
}

/// `integral of phi(v / R) C(dv)` for the off-diagonal correlation measure
/// `C = rho_2 - lambda^2`, normalised per unit intensity. Tends to `-1` for
/// hyperuniform processes.
pub fn correlation_mass(ensemble: &[PointConfiguration], reach: f64, cutoff: Cutoff) -> Result<f64> {
    let hist = pair_histogram(ensemble, reach, reach / 400.0)?;
    let k = hist.configs as f64;
    let lambda = hist.intensity();
    let phi = |d: f64| {
        let s = d / reach;
        match cutoff {
            Cutoff::Sharp => f64::from(u8::from(s <= 1.0)),
            Cutoff::Smooth => (1.0 - s * s).max(0.0).powi(3),
        }
    };
    // integral of phi(|v|/R) dv over the plane
    let phi_mass = match cutoff {
        Cutoff::Sharp => PI * reach * reach,
        Cutoff::Smooth => PI * reach * reach / 4.0,
    };
    let pairs: f64 = (0..hist.weight.len()).map(|b| hist.weight[b] * phi(hist.mean_distance(b))).sum();
    Ok((pairs / (k * hist.area) - lambda * lambda * phi_mass) / lambda)
}
