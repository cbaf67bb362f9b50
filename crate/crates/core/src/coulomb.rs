//! Truncated electric fields on the torus and their energy.
//!
//! The field `E_eta = grad Phi` with `-Lap Phi = c_d (X_eta - 1)` is built
//! in two pieces. Every charge is first replaced by a narrow Gaussian of
//! width `a` (a few grid spacings), whose periodic field is solved
//! spectrally; since the Gaussian is numerically band-limited on the grid
//! this part carries no discretisation error worth the name. The exact
//! radial field of (uniform `eta`-disk minus Gaussian) is then added around
//! each charge. That correction vanishes identically outside `max(eta, 7a)`,
//! so fields for different `eta` agree exactly outside the spread balls.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::{signed_freq, Fft2};
use crate::generators::ProcessSpec;
use crate::geometry::{count_in_ball, Point, PointConfiguration, TorusBox};
use crate::grid::{check_resolution, ScalarFieldGrid, VectorFieldGrid};
use crate::rng::RngSeed;
use crate::stats::{jackknife_stderr, mean};
use crate::C_D;

/// Gaussian width in grid spacings.
const GAUSS_WIDTH: f64 = 2.5;
/// Gaussian support radius in widths.
const GAUSS_REACH: f64 = 7.0;
pub const TOL_DIV_RELATIVE: f64 = 1e-6;

/// `max(0, log(eta / |x|))`.
pub fn f_eta(x: [f64; 2], eta: f64) -> f64 {
    let r = x[0].hypot(x[1]);
    if r >= eta {
        0.0
    } else {
        (eta / r).ln()
    }
}

/// Density of `X_eta` on the grid, each point spread uniformly on its
/// `eta`-disk. Every point's node weights are rescaled so the grid mass of
/// the point equals its multiplicity exactly.
pub fn spread_charges(config: &PointConfiguration, eta: f64, n: usize) -> Result<ScalarFieldGrid> {
    check_resolution(&config.torus, n, eta)?;
    let mut grid = ScalarFieldGrid::zeros(config.torus, n)?;
    let h = grid.spacing();
    let mut nodes = Vec::new();
    for (p, m) in config.iter() {
        nodes.clear();
        for_nodes_near(p, eta, h, n, |idx, d| {
            if d[0] * d[0] + d[1] * d[1] <= eta * eta {
                nodes.push(idx);
            }
        });
        if nodes.is_empty() {
            continue;
        }
        let w = f64::from(m) / (nodes.len() as f64 * h * h);
        for &idx in &nodes {
            grid.values[idx] += w;
        }
    }
    Ok(grid)
}

/// Visit grid nodes within `reach` of `p` with their displacement `node - p`.
fn for_nodes_near(p: Point, reach: f64, h: f64, n: usize, mut f: impl FnMut(usize, [f64; 2])) {
    let ci = (p.x / h).round() as i64;
    let cj = (p.y / h).round() as i64;
    let span = (reach / h).ceil() as i64 + 1;
    let ni = n as i64;
    for i in ci - span..=ci + span {
        let dx = i as f64 * h - p.x;
        if dx.abs() > reach {
            continue;
        }
        let row = i.rem_euclid(ni) as usize * n;
        for j in cj - span..=cj + span {
            let dy = j as f64 * h - p.y;
            if dx * dx + dy * dy <= reach * reach {
                f(row + j.rem_euclid(ni) as usize, [dx, dy]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedField {
    pub grid: VectorFieldGrid,
    pub eta: f64,
    pub config_hash: u64,
    pub c_d: f64,
    /// `max |div E + c_d (X_eta - 1)|` over nodes.
    pub div_residual: f64,
    /// `max |curl E|` over nodes.
    pub curl_residual: f64,
    pub tol_div: f64,
}

impl TruncatedField {
    pub fn invariants_hold(&self) -> bool {
        self.div_residual <= self.tol_div && self.curl_residual <= self.tol_div
    }
}

/// FNV-1a over the bit patterns of positions and multiplicities.
pub fn config_hash(config: &PointConfiguration) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(config.torus.side().to_bits());
    for (p, m) in config.iter() {
        eat(p.x.to_bits());
        eat(p.y.to_bits());
        eat(u64::from(m));
    }
    h
}

/// Smallest admissible power-of-two grid for `eta`, at least `min_n`.
pub fn default_grid(torus: &TorusBox, eta: f64, min_n: usize) -> usize {
    let need = (4.0 * torus.side() / eta).ceil() as usize;
    need.max(min_n).next_power_of_two()
}

pub fn solve_field(config: &PointConfiguration, eta: f64, n: usize) -> Result<TruncatedField> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
    }
    config.check_neutral()?;
    check_resolution(&config.torus, n, eta)?;
    let torus = config.torus;
    let l = torus.side();
    let h = l / n as f64;
    let a = GAUSS_WIDTH * h;
    let reach = eta.max(GAUSS_REACH * a);
    if reach >= 0.5 * l {
        return Err(Error::GridTooCoarse { spacing: h, limit: l / (2.0 * GAUSS_REACH * GAUSS_WIDTH) });
    }
    let nn = n * n;
    let mut gauss = vec![0.0; nn];
    let mut disk = vec![0.0; nn];
    let mut corr = vec![[0.0; 2]; nn];
    let g_norm = 1.0 / (2.0 * PI * a * a);
    let disk_density = 1.0 / (PI * eta * eta);
    let two_a2 = 2.0 * a * a;
    for (p, m) in config.iter() {
        let m = f64::from(m);
        for_nodes_near(p, reach, h, n, |idx, d| {
            let r2 = d[0] * d[0] + d[1] * d[1];
            let e = (-r2 / two_a2).exp();
            gauss[idx] += m * g_norm * e;
            let q_disk = if r2 <= eta * eta {
                disk[idx] += m * disk_density;
                r2 / (eta * eta)
            } else {
                1.0
            };
            // enclosed-charge difference over r^2, finite as r -> 0
            let over_r2 = if r2 > 1e-24 {
                (q_disk - (1.0 - e)) / r2
            } else {
                1.0 / (eta * eta) - 1.0 / two_a2
            };
            corr[idx][0] -= m * over_r2 * d[0];
            corr[idx][1] -= m * over_r2 * d[1];
        });
    }

    let parts = spectral_solve(&gauss, l, n);
    let mut grid = VectorFieldGrid::zeros(torus, n)?;
    let mut div_residual = 0.0f64;
    let mut curl_residual = 0.0f64;
    for idx in 0..nn {
        grid.values[idx] = [parts.ex[idx] + corr[idx][0], parts.ey[idx] + corr[idx][1]];
        // the radial correction is curl free and has divergence -c_d (disk - gauss)
        let d = parts.div[idx] - C_D * (disk[idx] - gauss[idx]);
        div_residual = div_residual.max((d + C_D * (disk[idx] - 1.0)).abs());
        curl_residual = curl_residual.max(parts.curl[idx].abs());
    }
    let max_density = disk.iter().copied().fold(1.0, f64::max);
    Ok(TruncatedField {
        grid,
        eta,
        config_hash: config_hash(config),
        c_d: C_D,
        div_residual,
        curl_residual,
        tol_div: TOL_DIV_RELATIVE * C_D * max_density,
    })
}

struct SpectralParts {
    ex: Vec<f64>,
    ey: Vec<f64>,
    div: Vec<f64>,
    curl: Vec<f64>,
}

/// Periodic `E = grad Phi`, `-Lap Phi = c_d (rho - mean rho)`, for node
/// samples `rho`, together with the spectral divergence and curl of `E`.
/// Nyquist modes are dropped.
fn spectral_solve(rho: &[f64], l: f64, n: usize) -> SpectralParts {
    let nn = n * n;
    let h = l / n as f64;
    let fft = Fft2::new(n);
    let mut buf: Vec<Complex64> = rho.iter().map(|&g| Complex64::new(g, 0.0)).collect();
    fft.forward(&mut buf);
    let zero = Complex64::new(0.0, 0.0);
    let (mut ex, mut ey, mut div, mut curl) = (vec![zero; nn], vec![zero; nn], vec![zero; nn], vec![zero; nn]);
    let half = n / 2;
    let i_unit = Complex64::new(0.0, 1.0);
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            if (i == 0 && j == 0) || (n % 2 == 0 && (i == half || j == half)) {
                continue;
            }
            let k1 = 2.0 * PI * signed_freq(i, n) as f64 / l;
            let k2 = 2.0 * PI * signed_freq(j, n) as f64 / l;
            // h^2 DFT approximates the continuum Fourier coefficient
            let phi = C_D * buf[idx] * h * h / (k1 * k1 + k2 * k2);
            ex[idx] = i_unit * k1 * phi;
            ey[idx] = i_unit * k2 * phi;
            div[idx] = i_unit * k1 * ex[idx] + i_unit * k2 * ey[idx];
            curl[idx] = i_unit * k1 * ey[idx] - i_unit * k2 * ex[idx];
        }
    }
    let area = l * l;
    let real = |mut b: Vec<Complex64>| -> Vec<f64> {
        fft.inverse(&mut b);
        b.iter().map(|c| c.re / area).collect()
    };
    SpectralParts { ex: real(ex), ey: real(ey), div: real(div), curl: real(curl) }
}

/// Gradient field of a density sampled on the grid; the mean is the neutralising background.
pub fn field_from_density(density: &ScalarFieldGrid) -> Result<VectorFieldGrid> {
    let n = density.n;
    let parts = spectral_solve(&density.values, density.torus.side(), n);
    let mut grid = VectorFieldGrid::zeros(density.torus, n)?;
    for idx in 0..n * n {
        grid.values[idx] = [parts.ex[idx], parts.ey[idx]];
    }
    Ok(grid)
}

/// `(1/L^2) h^2 sum |E|^2` over grid nodes.
pub fn energy_per_volume(field: &TruncatedField) -> f64 {
    field.grid.squared_norm_integral() / field.grid.torus.area()
}

/// Bring a configuration to exactly `target` points: surplus points are
/// removed uniformly at random, a deficit is filled with uniform points.
pub fn condition_point_count(config: &PointConfiguration, target: u64, seed: RngSeed) -> Result<PointConfiguration> {
    let count = config.total_count();
    if (count as f64 - target as f64).abs() > 0.2 * target as f64 {
        return Err(Error::CountTooFar { count, target });
    }
    let mut rng = seed.derive(0x636f_6e64).rng();
    // expand to unit-multiplicity particles so removal is uniform over particles
    let mut particles: Vec<Point> = Vec::with_capacity(count as usize);
    for (p, m) in config.iter() {
        particles.extend(std::iter::repeat(p).take(m as usize));
    }
    if count > target {
        let mut keep: Vec<usize> = sample(&mut rng, count as usize, target as usize).into_vec();
        keep.sort_unstable();
        particles = keep.into_iter().map(|k| particles[k]).collect();
    } else {
        let l = config.torus.side();
        for _ in count..target {
            particles.push(Point::new(l * rng.gen::<f64>(), l * rng.gen::<f64>()));
        }
    }
    if count == target {
        return Ok(config.clone());
    }
    Ok(regroup(config.torus, particles))
}

// collapse identical positions back into multiplicities, keeping first-seen order
fn regroup(torus: TorusBox, particles: Vec<Point>) -> PointConfiguration {
    let mut out = PointConfiguration::empty(torus);
    let mut seen: std::collections::HashMap<(u64, u64), usize> = std::collections::HashMap::new();
    for p in particles {
        let key = (p.x.to_bits(), p.y.to_bits());
        if let Some(&k) = seen.get(&key) {
            out.multiplicities[k] += 1;
        } else {
            seen.insert(key, out.len());
            out.push(p, 1);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoulEstimate {
    pub process: String,
    pub side: f64,
    pub eta: f64,
    pub grid_n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub max_div_residual: f64,
    pub invariants_hold: bool,
}

/// Upper estimate of the regularized energy per unit volume via the torus
/// gradient field; processes without an exact count are conditioned to `L^2`.
pub fn coul_estimate(spec: &ProcessSpec, torus: &TorusBox, eta: f64, replicas: usize, grid_n: usize, seed: RngSeed) -> Result<CoulEstimate> {
    spec.validate(torus)?;
    if replicas == 0 {
        return Err(Error::TooFewReplicas { needed: 1, got: 0 });
    }
    let target = torus.area().round() as u64;
    let runs: Vec<(f64, f64, bool)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, bool)> {
            let s = seed.replica(i);
            let mut config = spec.sample(torus, s)?;
            if config.total_count() != target {
                config = condition_point_count(&config, target, s)?;
            }
            let field = solve_field(&config, eta, grid_n)?;
            Ok((energy_per_volume(&field), field.div_residual, field.invariants_hold()))
        })
        .collect::<Result<_>>()?;
    let energies: Vec<f64> = runs.iter().map(|r| r.0).collect();
    Ok(CoulEstimate {
        process: spec.label(),
        side: torus.side(),
        eta,
        grid_n,
        mean: mean(&energies),
        stderr: if replicas > 1 { jackknife_stderr(&energies, |s| s.iter().map(|x| **x).sum::<f64>() / s.len() as f64) } else { f64::NAN },
        replicas,
        max_div_residual: runs.iter().map(|r| r.1).fold(0.0, f64::max),
        invariants_hold: runs.iter().all(|r| r.2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalEnergyCheck {
    pub lhs: f64,
    pub rhs_shape: f64,
    pub ratio: f64,
}

/// `integral over B_M(z) of |E_eta|^2` against `M^4 log M`, for a point of
/// concentration `|X ∩ B_1(z)| >= M^2`.
pub fn local_energy_lower_bound_check(config: &PointConfiguration, field: &TruncatedField, z: Point, m: f64) -> Result<LocalEnergyCheck> {
    if m < 10.0 {
        return Err(Error::PreconditionNotMet(format!("M must be at least 10, got {m}")));
    }
    let torus = config.torus;
    if m >= 0.5 * torus.side() {
        return Err(Error::RadiusTooLarge { r: m, side: torus.side(), limit: 0.5 * torus.side() });
    }
    let near = count_in_ball(config, z, 1.0)?;
    if (near as f64) < m * m {
        return Err(Error::PreconditionNotMet(format!("|X ∩ B_1(z)| = {near} < M^2 = {}", m * m)));
    }
    let grid = &field.grid;
    let n = grid.n;
    let h = grid.spacing();
    let mut lhs = 0.0;
    for_nodes_near(z, m, h, n, |idx, _| {
        let e = grid.values[idx];
        lhs += (e[0] * e[0] + e[1] * e[1]) * h * h;
    });
    let rhs_shape = m.powi(4) * m.ln();
    Ok(LocalEnergyCheck { lhs, rhs_shape, ratio: lhs / rhs_shape })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyCheck {
    pub process: String,
    pub r: f64,
    /// `E[(|X ∩ B_r| - pi r^2)^2]`.
    pub lhs: f64,
    pub energy: f64,
    /// `(energy + 1) r^2`.
    pub rhs: f64,
    pub ratio: f64,
}

/// Count discrepancy in `B_r` against `(Coul_eta + 1) r^2`, both estimated
/// from the same replicas (conditioned to `L^2` points where needed).
pub fn discrepancy_bound_check(
    spec: &ProcessSpec,
    torus: &TorusBox,
    eta: f64,
    r: f64,
    replicas: usize,
    centers: usize,
    grid_n: usize,
    seed: RngSeed,
) -> Result<DiscrepancyCheck> {
    crate::geometry::check_ball_radius(r, torus)?;
    spec.validate(torus)?;
    let target = torus.area().round() as u64;
    let side = torus.side();
    let runs: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let s = seed.replica(i);
            let mut config = spec.sample(torus, s)?;
            if config.total_count() != target {
                config = condition_point_count(&config, target, s)?;
            }
            let field = solve_field(&config, eta, grid_n)?;
            let index = config.index((r / 4.0).max(1.0));
            let mut rng = s.derive(0x6469_7363).rng();
            let mut sq = 0.0;
            for _ in 0..centers {
                let c = Point::new(side * rng.gen::<f64>(), side * rng.gen::<f64>());
                let d = index.count_within(c, r) as f64 - PI * r * r;
                sq += d * d;
            }
            Ok((sq / centers as f64, energy_per_volume(&field)))
        })
        .collect::<Result<_>>()?;
    let lhs = mean(&runs.iter().map(|x| x.0).collect::<Vec<_>>());
    let energy = mean(&runs.iter().map(|x| x.1).collect::<Vec<_>>());
    let rhs = (energy + 1.0) * r * r;
    Ok(DiscrepancyCheck { process: spec.label(), r, lhs, energy, rhs, ratio: lhs / rhs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaComparison {
    pub etas: Vec<f64>,
    pub energies: Vec<f64>,
    /// Smallest `C` with `energy(1) <= energy(eta) + C eta` for all rows.
    pub fitted_c: f64,
    /// `energy(eta) / (energy(1) + 1)` per row.
    pub c_eta: Vec<f64>,
}

pub fn eta_comparison_check(config: &PointConfiguration, etas: &[f64], grid_n: usize) -> Result<EtaComparison> {
    let mut energies = Vec::with_capacity(etas.len());
    for &eta in etas {
        energies.push(energy_per_volume(&solve_field(config, eta, grid_n)?));
    }
    let e1 = energy_per_volume(&solve_field(config, 1.0, grid_n)?);
    let fitted_c = etas.iter().zip(&energies).map(|(eta, e)| ((e1 - e) / eta).max(0.0)).fold(0.0, f64::max);
    let c_eta = energies.iter().map(|e| e / (e1 + 1.0)).collect();
    Ok(EtaComparison { etas: etas.to_vec(), energies, fitted_c, c_eta })
}

/// Largest node-wise `|E_a - E_b|`, relative to `max |E_b|`, over nodes at
/// distance more than `max(eta_a, eta_b)` from every point.
pub fn newton_deviation(config: &PointConfiguration, eta_a: f64, eta_b: f64, grid_n: usize) -> Result<f64> {
    let fa = solve_field(config, eta_a, grid_n)?;
    let fb = solve_field(config, eta_b, grid_n)?;
    let h = fa.grid.spacing();
    let reach = eta_a.max(eta_b);
    let mut inside = vec![false; grid_n * grid_n];
    for p in &config.points {
        for_nodes_near(*p, reach, h, grid_n, |idx, d| {
            if d[0].hypot(d[1]) <= reach * (1.0 + 1e-12) {
                inside[idx] = true;
            }
        });
    }
    let scale = (0..grid_n * grid_n)
        .map(|k| fb.grid.values[k][0].hypot(fb.grid.values[k][1]))
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut worst = 0.0f64;
    for k in 0..grid_n * grid_n {
        if inside[k] {
            continue;
        }
        let (a, b) = (fa.grid.values[k], fb.grid.values[k]);
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        worst = worst.max(d / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_collapse_blocks, gen_stationary_lattice};

    #[test]
    fn f_eta_examples() {
        assert_eq!(f_eta([0.5, 0.0], 0.5), 0.0);
        assert!((f_eta([0.0, 0.25], 0.5) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(f_eta([3.0, 0.0], 1.0), 0.0);
    }

    #[test]
    fn spread_single_point() {
        let t = TorusBox::new(8.0).unwrap();
        let c = PointConfiguration::from_points(t, [Point::new(4.0, 4.0)]);
        let g = spread_charges(&c, 1.0, 128).unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-12);
        let centre = g.at(64, 64);
        assert!((centre - 1.0 / PI).abs() < 0.02 / PI);
        assert_eq!(g.at(0, 0), 0.0);
        assert!(matches!(spread_charges(&c, 1.0, 16), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn spread_collapse_peak() {
        let t = TorusBox::integer(16).unwrap();
        let c = gen_collapse_blocks(&t, 4, RngSeed::new(2)).unwrap();
        let g = spread_charges(&c, 1.0, 256).unwrap();
        assert!((g.integral() - 256.0).abs() < 1e-9);
        assert!((g.max() - 16.0 / PI).abs() < 0.02 * 16.0 / PI);
    }

    #[test]
    fn uniform_source_has_no_field() {
        let t = TorusBox::integer(8).unwrap();
        let mut g = ScalarFieldGrid::zeros(t, 32).unwrap();
        g.values.iter_mut().for_each(|v| *v = 1.0);
        let e = field_from_density(&g).unwrap();
        assert!(e.values.iter().all(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14));
    }

    #[test]
    fn lattice_field_invariants() {
        let t = TorusBox::integer(8).unwrap();
        let c = gen_stationary_lattice(&t, RngSeed::new(1)).unwrap();
        let f = solve_field(&c, 1.0, 64).unwrap();
        assert!(f.invariants_hold(), "div {} curl {}", f.div_residual, f.curl_residual);
        assert!(energy_per_volume(&f) > 0.0);
        let g = f.grid.scaled(3.0);
        assert!((g.squared_norm_integral() - 9.0 * f.grid.squared_norm_integral()).abs() < 1e-9 * g.squared_norm_integral());
    }

    #[test]
    fn neutrality_required() {
        let t = TorusBox::integer(8).unwrap();
        let c = PointConfiguration::from_points(t, [Point::new(1.0, 1.0)]);
        assert!(matches!(solve_field(&c, 1.0, 64), Err(Error::NonNeutral { .. })));
    }

    #[test]
    fn conditioning() {
        let t = TorusBox::integer(8).unwrap();
        let c = gen_stationary_lattice(&t, RngSeed::new(1)).unwrap();
        assert_eq!(condition_point_count(&c, 64, RngSeed::new(2)).unwrap(), c);
        let mut big = c.clone();
        for k in 0..3 {
            big.push(Point::new(0.1 + k as f64, 0.3), 1);
        }
        let fixed = condition_point_count(&big, 64, RngSeed::new(3)).unwrap();
        assert_eq!(fixed.total_count(), 64);
        assert!(fixed.points.iter().all(|p| big.points.contains(p)));
        let small = PointConfiguration::from_points(t, c.points[..60].to_vec());
        assert_eq!(condition_point_count(&small, 64, RngSeed::new(3)).unwrap().total_count(), 64);
        let tiny = PointConfiguration::from_points(t, c.points[..10].to_vec());
        assert!(matches!(condition_point_count(&tiny, 64, RngSeed::new(3)), Err(Error::CountTooFar { .. })));
    }
}
