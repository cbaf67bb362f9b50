use rayon::prelude::*;

use super::chain::slope_stderr;
use super::{CostRow, EnergyRow, ExperimentConfig, ExperimentReport, FittedConstant, Quantity, VarianceRow};
use crate::coulomb::{coul_estimate, default_grid, local_energy_lower_bound_check, solve_field};
use crate::error::Result;
use crate::generators::{gen_collapse_blocks, ProcessSpec};
use crate::geometry::TorusBox;
use crate::rng::RngSeed;
use crate::stats::{linear_fit, mean, stderr_of_mean};
use crate::transport::{w1_to_lebesgue, w2_to_lebesgue, Method};
use crate::variance::estimate_sigma;

/// Collapse-block and binomial-block scalings.
pub fn run_counterexample_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate_counter()?;
    let mut rep = ExperimentReport::new(config, "counterexamples");
    let seed = RngSeed::new(config.seed);
    let r = collapse_scalings(config, &mut rep, seed.derive(1));
    rep.step("collapse scalings", r);
    let r = local_energy(config, &mut rep, seed.derive(2));
    rep.step("local energy", r);
    let r = binomial_variance(config, &mut rep, seed.derive(3));
    rep.step("binomial variance", r);
    let r = binomial_w1(config, &mut rep, seed.derive(4));
    rep.step("binomial w1", r);
    let r = akt(config, &mut rep, seed.derive(5));
    rep.step("binomial W2 growth", r);
    Ok(rep)
}

fn band(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn geometric_mean(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

/// `W_2^2` per volume against `2N^2`, and energy per volume against `N^2 log N`, at `L = 4N`.
fn collapse_scalings(config: &ExperimentConfig, rep: &mut ExperimentReport, seed: RngSeed) -> Result<()> {
    let blocks = &config.counter.collapse_blocks;
    let factor = config.thresholds.collapse_cost_factor;
    let mut ratios = Vec::new();
    let mut ns = Vec::new();
    for &n in blocks {
        let l = 4 * n;
        let t = TorusBox::integer(l)?;
        let spec = ProcessSpec::Collapse { n, jitter: 0.0 };
        let c = spec.sample(&t, seed.derive(u64::from(n)))?;
        let w = w2_to_lebesgue(&c, config.grid.transport_factor * l as usize, Method::ExactAssignment, 0.0)?;
        rep.costs.push(CostRow { family: "collapse".into(), n: Some(n), side: f64::from(l), p: 2.0, cost: Quantity::exact(w.cost_per_volume) });
        let bound = factor * f64::from(n * n);
        rep.check(format!("collapse N={n}: W2 per volume <= {factor}N^2"), w.cost_per_volume <= bound, format!("{:.4} <= {bound}", w.cost_per_volume));
        let grid = default_grid(&t, config.eta, config.grid.field_min_n);
        let e = coul_estimate(&spec, &t, config.eta, 2, grid, seed.derive(100 + u64::from(n)))?;
        rep.energies.push(EnergyRow { family: "collapse".into(), n: Some(n), side: f64::from(l), energy: Quantity::estimate(e.mean, e.stderr) });
        ratios.push(e.mean / (f64::from(n * n) * f64::from(n).ln()));
        ns.push(f64::from(n));
    }
    let b = band(&ratios);
    let c = geometric_mean(&ratios);
    rep.fits.push(FittedConstant {
        name: "collapse energy / (N^2 log N)".into(),
        value: c,
        interval: Some([ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(0.0, f64::max)]),
        residual: b,
        xs: ns,
        ys: ratios,
    });
    let thr = config.thresholds.collapse_ratio_band;
    rep.check("collapse: energy / (N^2 log N) stable", c > 0.0 && b <= thr, format!("c = {c:.4}, max/min = {b:.3} <= {thr}"));
    Ok(())
}

/// Energy in `B_M` around a collapsed atom of `M^2` points, for `N = M`.
fn local_energy(config: &ExperimentConfig, rep: &mut ExperimentReport, seed: RngSeed) -> Result<()> {
    let mut ratios = Vec::new();
    let mut ms = Vec::new();
    for &m in &config.counter.local_energy_blocks {
        let l = 4 * m;
        let t = TorusBox::integer(l)?;
        let c = gen_collapse_blocks(&t, m, seed.derive(u64::from(m)))?;
        let f = solve_field(&c, config.eta, default_grid(&t, config.eta, config.grid.field_min_n))?;
        let chk = local_energy_lower_bound_check(&c, &f, c.points[0], f64::from(m))?;
        ratios.push(chk.ratio);
        ms.push(f64::from(m));
    }
    let b = band(&ratios);
    let c = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    rep.fits.push(FittedConstant {
        name: "local energy / (M^4 log M)".into(),
        value: c,
        interval: Some([c, ratios.iter().copied().fold(0.0, f64::max)]),
        residual: b,
        xs: ms,
        ys: ratios,
    });
    let thr = config.thresholds.local_energy_band;
    rep.check("collapse: local energy >= c M^4 log M", c > 0.0 && b <= thr, format!("c = {c:.4}, max/min = {b:.3} <= {thr}"));
    Ok(())
}

/// Count variance of binomial blocks on both sides of `r = N`, at `L = 8N`.
fn binomial_variance(config: &ExperimentConfig, rep: &mut ExperimentReport, seed: RngSeed) -> Result<()> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    for &n in &config.counter.binomial_variance_blocks {
        let l = 8 * n;
        let t = TorusBox::integer(l)?;
        let nf = f64::from(n);
        let radii = [nf / 4.0, nf / 2.0, nf, 2.0 * nf, 3.0 * nf];
        let curve = estimate_sigma(&ProcessSpec::Binomial { n }, &t, &radii, config.replicas.variance, config.replicas.centers, seed.derive(u64::from(n)))?;
        for (k, &r) in radii.iter().enumerate() {
            let area = std::f64::consts::PI * r * r;
            let var = curve.sigma[k] * area;
            rep.variances.push(VarianceRow { family: "binomial".into(), n, r, variance: Quantity::estimate(var, curve.stderr[k] * area) });
            if r <= nf {
                small.push(var / (r * r));
            }
            if r >= nf {
                large.push(var / (r * nf));
            }
        }
    }
    let thr = config.thresholds.binomial_band;
    let (bs, bl) = (band(&small), band(&large));
    rep.check("binomial: Var/r^2 band for r <= N", bs <= thr, format!("max/min = {bs:.3} <= {thr}"));
    rep.check("binomial: Var/(rN) band for r >= N", bl <= thr, format!("max/min = {bl:.3} <= {thr}"));
    Ok(())
}

fn replicated_cost(n: u32, p: f64, replicas: usize, factor: usize, seed: RngSeed) -> Result<(f64, f64)> {
    let t = TorusBox::integer(n)?;
    let spec = ProcessSpec::Binomial { n };
    let costs: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|k| {
            let c = spec.sample(&t, seed.replica(k))?;
            let m = factor * n as usize;
            let r = if p == 1.0 { w1_to_lebesgue(&c, m, Method::ExactAssignment)? } else { w2_to_lebesgue(&c, m, Method::ExactAssignment, 0.0)? };
            Ok(r.cost_per_volume)
        })
        .collect::<Result<_>>()?;
    Ok((mean(&costs), stderr_of_mean(&costs)))
}

/// `w_1` per volume of a single binomial block (`L = N`) against `sqrt(log N)`.
fn binomial_w1(config: &ExperimentConfig, rep: &mut ExperimentReport, seed: RngSeed) -> Result<()> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &n in &config.counter.w1_blocks {
        let (m, se) = replicated_cost(n, 1.0, config.replicas.transport, config.grid.transport_factor, seed.derive(u64::from(n)))?;
        rep.costs.push(CostRow { family: "binomial".into(), n: Some(n), side: f64::from(n), p: 1.0, cost: Quantity::estimate(m, se) });
        xs.push(f64::from(n).ln().sqrt());
        ys.push(m);
    }
    let increasing = ys.windows(2).all(|w| w[1] > w[0]);
    // least squares through the origin
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let c = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c * x).powi(2)).sum();
    let se = (xs.len() > 1).then(|| (ss / (xs.len() - 1) as f64 / sxx).sqrt());
    rep.fits.push(FittedConstant {
        name: "binomial w1 / sqrt(log N)".into(),
        value: c,
        interval: se.map(|se| [c - 2.0 * se, c + 2.0 * se]),
        residual: (ss / xs.len() as f64).sqrt(),
        xs,
        ys,
    });
    rep.check("binomial: w1 increasing in N", increasing, "strictly increasing over the block sizes");
    rep.check("binomial: w1 fit against sqrt(log N) positive", c > 0.0, format!("c = {c:.4}"));
    Ok(())
}

/// `W_2^2` per point of one binomial block against `log N`.
fn akt(config: &ExperimentConfig, rep: &mut ExperimentReport, seed: RngSeed) -> Result<()> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &n in &config.counter.akt_blocks {
        let (m, se) = replicated_cost(n, 2.0, config.replicas.transport, config.grid.transport_factor, seed.derive(u64::from(n)))?;
        rep.costs.push(CostRow { family: "binomial".into(), n: Some(n), side: f64::from(n), p: 2.0, cost: Quantity::estimate(m, se) });
        xs.push(f64::from(n).ln());
        ys.push(m);
    }
    let fit = linear_fit(&xs, &ys);
    let se = slope_stderr(&xs, &ys);
    rep.fits.push(FittedConstant {
        name: "binomial W2^2 per point, slope in log N".into(),
        value: fit.slope,
        interval: se.map(|se| [fit.slope - 2.0 * se, fit.slope + 2.0 * se]),
        residual: fit.residual,
        xs,
        ys,
    });
    let thr = config.thresholds.akt_min_r_squared;
    rep.check(
        "binomial: W2^2 linear in log N",
        fit.slope > 0.0 && fit.r_squared >= thr,
        format!("slope {:.4}, R^2 {:.4} >= {thr}", fit.slope, fit.r_squared),
    );
    Ok(())
}
