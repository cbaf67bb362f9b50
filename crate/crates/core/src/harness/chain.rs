use super::{
    last_change, ChainRow, CostRow, EnergyRow, ExperimentConfig, ExperimentReport, FittedConstant, Quantity, ScRow, SigmaRow,
    SpectrumRow, Trend,
};
use crate::coulomb::{coul_estimate, default_grid};
use crate::error::Result;
use crate::generators::ProcessSpec;
use crate::geometry::TorusBox;
use crate::rng::RngSeed;
use crate::spectral::{sc_integral, structure_factor};
use crate::stats::{linear_fit, loglog_fit, Verdict};
use crate::transport::{w2_to_lebesgue, wp_per_unit_volume, Method, Stability};
use crate::variance::{estimate_sigma, hustar_series};

/// Per-generator columns of the implication chain, cross-tabulated.
pub fn run_chain_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut rep = ExperimentReport::new(config, "chain");
    let seed = RngSeed::new(config.seed);
    let largest = *config.boxes.last().unwrap();
    for (g, spec) in config.suite.iter().enumerate() {
        let label = spec.label();
        let gseed = seed.derive(g as u64);
        if let Some(row) = chain_row(config, &mut rep, spec, gseed, largest) {
            rep.chain.push(row);
        } else {
            log::warn!("{label}: chain row incomplete");
        }
    }
    cross_tabulate(config, &mut rep);
    if !config.mixture_truncations.is_empty() {
        let r = collapse_mixture(config, &mut rep, seed.derive(0x6d6978));
        rep.step("collapse mixture", r);
    }
    Ok(rep)
}

fn chain_row(config: &ExperimentConfig, rep: &mut ExperimentReport, spec: &ProcessSpec, seed: RngSeed, largest: u32) -> Option<ChainRow> {
    let label = spec.label();
    let big = TorusBox::integer(largest).ok()?;
    let rp = &config.replicas;

    let curve = estimate_sigma(spec, &big, &config.radii, rp.variance, rp.centers, seed.derive(1));
    let curve = rep.step(&format!("{label}: sigma"), curve)?;
    for (k, &r) in curve.radii.iter().enumerate() {
        rep.sigma.push(SigmaRow { generator: label.clone(), side: curve.side, r, sigma: Quantity::estimate(curve.sigma[k], curve.stderr[k]) });
    }
    let n_max = config.radii.iter().filter(|r| r.log2().fract() == 0.0).map(|r| r.log2() as u32).max().unwrap_or(0);
    let hu = rep.step(&format!("{label}: dyadic series"), hustar_series(&curve, n_max))?;
    let positive: Vec<(f64, f64)> = curve.radii.iter().zip(&curve.sigma).filter(|(_, s)| **s > 0.0).map(|(r, s)| (*r, *s)).collect();
    let sigma_trend = if positive.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        if loglog_fit(&xs, &ys).slope < config.thresholds.sigma_decay_slope { Trend::Decaying } else { Trend::Flat }
    } else {
        Trend::Decaying
    };

    let mut energies = Vec::new();
    for (b, &l) in config.boxes.iter().enumerate() {
        let t = TorusBox::integer(l).ok()?;
        let bs = seed.derive(10 + b as u64);
        if l != config.sc_side {
            sc_entry(config, rep, spec, l, bs)?;
        }
        let grid = default_grid(&t, config.eta, config.grid.field_min_n);
        let e = rep.step(&format!("{label}: energy L={l}"), coul_estimate(spec, &t, config.eta, rp.coulomb, grid, bs.derive(2)))?;
        rep.energies.push(EnergyRow { family: label.clone(), n: None, side: f64::from(l), energy: Quantity::estimate(e.mean, e.stderr) });
        energies.push(e.mean);
    }
    let sc_flag = sc_entry(config, rep, spec, config.sc_side, seed.derive(4))?;
    let energy_trend = if last_change(&energies) < config.thresholds.stable_change { Trend::Stable } else { Trend::Growing };

    let costs = wp_per_unit_volume(spec, &config.boxes, 2.0, rp.transport, config.grid.transport_factor, seed.derive(3));
    let costs = rep.step(&format!("{label}: transport"), costs)?;
    for k in 0..costs.sides.len() {
        rep.costs.push(CostRow {
            family: label.clone(),
            n: None,
            side: costs.sides[k],
            p: 2.0,
            cost: Quantity::estimate(costs.mean[k], costs.stderr[k]),
        });
    }
    let w2_trend = if costs.verdict == Stability::Finite { Trend::Stable } else { Trend::Growing };
    Some(ChainRow { generator: label, hustar: hu.verdict, sc_flag, energy: energy_trend, w2: w2_trend, sigma: sigma_trend })
}

/// SC row for one box; the SC box also contributes the spectrum rows.
fn sc_entry(config: &ExperimentConfig, rep: &mut ExperimentReport, spec: &ProcessSpec, l: u32, seed: RngSeed) -> Option<bool> {
    let label = spec.label();
    let t = TorusBox::integer(l).ok()?;
    let est = rep.step(&format!("{label}: spectrum L={l}"), structure_factor(spec, &t, config.replicas.spectrum, config.grid.omega_max, seed))?;
    let sc = sc_integral(&est);
    rep.sc.push(ScRow { generator: label.clone(), side: f64::from(l), value: Quantity::estimate(sc.value, sc_stderr(&est)), divergence_flag: sc.divergence_flag });
    if l == config.sc_side {
        for bin in &est.radial_bins {
            rep.spectra.push(SpectrumRow { generator: label.clone(), side: est.side, omega: bin.omega, s: Quantity::estimate(bin.mean, bin.stderr), count: bin.count });
        }
    }
    Some(sc.divergence_flag)
}

/// Standard error of the SC sum from the per-bin errors, taking bins as independent.
fn sc_stderr(est: &crate::spectral::SpectralEstimate) -> f64 {
    let l2 = est.side * est.side;
    est.radial_bins
        .iter()
        .filter(|b| b.omega > 0.0 && b.omega < 1.0)
        .map(|b| (b.stderr * b.count as f64 / (b.omega * b.omega * l2)).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn cross_tabulate(config: &ExperimentConfig, rep: &mut ExperimentReport) {
    let rows = rep.chain.clone();
    for r in &rows {
        if r.hustar == Verdict::Converging {
            let ok = r.energy == Trend::Stable && r.w2 == Trend::Stable;
            rep.check(format!("chain: {}", r.generator), ok, format!("converging dyadic series with energy {:?}, W2 {:?}", r.energy, r.w2));
        }
        if r.hustar != Verdict::Inconclusive {
            let ok = (r.hustar == Verdict::Diverging) == r.sc_flag;
            rep.check(format!("sc coherence: {}", r.generator), ok, format!("dyadic series {}, SC flag {}", r.hustar, r.sc_flag));
        }
    }
    for (spec, r) in config.suite.iter().zip(&rows) {
        if matches!(spec, ProcessSpec::Poisson { .. }) {
            let ok = r.hustar == Verdict::Diverging && r.sc_flag && r.energy == Trend::Growing && r.w2 == Trend::Growing;
            rep.check(format!("chain baseline: {}", r.generator), ok, format!("{:?}", r));
        }
    }
}

/// Weight of collapse blocks of side `2^j`; the lattice takes the rest.
pub(crate) fn mixture_weight(j: u32) -> f64 {
    let raw = |j: u32| 4f64.powi(-(j as i32)) / f64::from(j * j);
    let total: f64 = (1..64).map(raw).sum();
    raw(j) / total
}

/// Collapse-block mixture with weights `4^-j / j^2` at `N = 2^j`. Per-volume
/// energy and cost are linear in the mixture weights, so each truncation
/// is assembled from per-component values measured on boxes of side
/// `max(2N, 8)`, where the periodic arrangement is exact.
fn collapse_mixture(config: &ExperimentConfig, rep: &mut ExperimentReport, seed: RngSeed) -> Result<()> {
    let depth = *config.mixture_truncations.iter().max().unwrap();
    let component = |j: u32| -> Result<(f64, f64)> {
        let n = 1u32 << j;
        let l = (2 * n).max(8);
        let t = TorusBox::integer(l)?;
        let spec = if j == 0 { ProcessSpec::Lattice } else { ProcessSpec::Collapse { n, jitter: 0.0 } };
        let grid = default_grid(&t, config.eta, config.grid.field_min_n);
        let e = coul_estimate(&spec, &t, config.eta, 2, grid, seed.derive(u64::from(j)))?;
        let c = spec.sample(&t, seed.derive(100 + u64::from(j)))?;
        let w = w2_to_lebesgue(&c, 2 * l as usize, Method::ExactAssignment, 0.0)?;
        Ok((e.mean, w.cost_per_volume))
    };
    let parts: Vec<(f64, f64)> = (0..=depth).map(component).collect::<Result<_>>()?;
    let (e0, w0) = parts[0];
    let mut e_incr = Vec::new();
    let mut w_incr = Vec::new();
    let mut js = Vec::new();
    for &jj in &config.mixture_truncations {
        let mut energy = e0;
        let mut cost = w0;
        for j in 1..=jj {
            let a = mixture_weight(j);
            energy += a * (parts[j as usize].0 - e0);
            cost += a * (parts[j as usize].1 - w0);
        }
        let a = mixture_weight(jj);
        e_incr.push(a * (parts[jj as usize].0 - e0));
        w_incr.push(a * (parts[jj as usize].1 - w0));
        js.push(f64::from(jj));
        rep.energies.push(EnergyRow { family: "collapse mixture".into(), n: Some(1 << jj), side: 0.0, energy: Quantity::exact(energy) });
        rep.costs.push(CostRow { family: "collapse mixture".into(), n: Some(1 << jj), side: 0.0, p: 2.0, cost: Quantity::exact(cost) });
    }
    let thr = config.thresholds.mixture_stable_exponent;
    let mut exponent = |name: &str, incr: &[f64]| -> f64 {
        let ys: Vec<f64> = incr.iter().map(|x| x.abs().max(1e-300)).collect();
        let fit = loglog_fit(&js, &ys);
        let se = slope_stderr(&js.iter().map(|x| x.ln()).collect::<Vec<_>>(), &ys.iter().map(|y| y.ln()).collect::<Vec<_>>());
        rep.fits.push(FittedConstant {
            name: name.into(),
            value: fit.slope,
            interval: se.map(|se| [fit.slope - 2.0 * se, fit.slope + 2.0 * se]),
            residual: fit.residual,
            xs: js.clone(),
            ys: incr.to_vec(),
        });
        fit.slope
    };
    let we = exponent("mixture W2 increment exponent in J", &w_incr);
    let ee = exponent("mixture energy increment exponent in J", &e_incr);
    rep.check("collapse mixture: W2 stable", we < thr, format!("increment exponent {we:.3} < {thr}"));
    rep.check("collapse mixture: energy growing", ee >= thr, format!("increment exponent {ee:.3} >= {thr}"));
    Ok(())
}

/// Standard error of an OLS slope, when there are at least three points.
pub(crate) fn slope_stderr(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let fit = linear_fit(xs, ys);
    let mx = xs.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - fit.intercept - fit.slope * x).powi(2)).sum();
    Some((ss / (n - 2) as f64 / sxx).sqrt())
}
