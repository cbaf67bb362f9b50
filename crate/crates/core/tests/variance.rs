use std::f64::consts::PI;

use hyperlab::generators::{gen_poisson, MixtureComponent};
use hyperlab::geometry::count_in_ball;
use hyperlab::stats::{ks_two_sample, mean, sample_variance, stderr_of_mean, Verdict};
use hyperlab::variance::{
    correlation_mass, estimate_sigma, hustar_series, sigma_from_pairs, Cutoff,
};
use hyperlab::{DisplacementLaw, Point, PointConfiguration, ProcessSpec, RngSeed, TorusBox};
use rayon::prelude::*;

fn torus(l: u32) -> TorusBox {
    TorusBox::integer(l).unwrap()
}

fn ensemble(spec: &ProcessSpec, t: &TorusBox, n: u64, seed: u64) -> Vec<PointConfiguration> {
    (0..n).into_par_iter().map(|i| spec.sample(t, RngSeed::new(seed).replica(i)).unwrap()).collect()
}

fn suite() -> Vec<ProcessSpec> {
    vec![
        ProcessSpec::Poisson { intensity: 1.0 },
        ProcessSpec::Lattice,
        ProcessSpec::Perturbed { law: DisplacementLaw::IsotropicGaussian { std: 0.3 } },
        ProcessSpec::Collapse { n: 4, jitter: 0.0 },
        ProcessSpec::Binomial { n: 4 },
    ]
}

#[test]
fn poisson_count_moments() {
    let t = torus(64);
    let counts: Vec<f64> = (0..500)
        .map(|i| gen_poisson(&t, 1.0, RngSeed::new(21).replica(i)).unwrap().total_count() as f64)
        .collect();
    let m = mean(&counts);
    assert!((m - 4096.0).abs() <= 3.0 * stderr_of_mean(&counts));
    // Var of the sample variance for Poisson is about 2 mu^2 / (n - 1)
    let v = sample_variance(&counts);
    assert!((v - 4096.0).abs() <= 3.0 * 4096.0 * (2.0f64 / 499.0).sqrt());
}

#[test]
fn every_generator_has_unit_mean_count() {
    let t = torus(16);
    for spec in suite() {
        let counts: Vec<f64> = ensemble(&spec, &t, 200, 5).iter().map(|c| c.total_count() as f64).collect();
        let se = stderr_of_mean(&counts);
        let m = mean(&counts);
        assert!((m - 256.0).abs() <= 3.0 * se + 1e-9, "{}: mean {m}", spec.label());
    }
}

#[test]
fn generators_are_stationary_in_law() {
    let t = torus(16);
    for spec in suite() {
        let configs = ensemble(&spec, &t, 500, 17);
        let c = Point::new(3.3, 7.1);
        let shifted = Point::new(3.3 + 5.45, 7.1 + 2.2);
        let a: Vec<f64> = configs.iter().map(|x| count_in_ball(x, c, 2.5).unwrap() as f64).collect();
        let b: Vec<f64> = configs.iter().map(|x| count_in_ball(x, shifted, 2.5).unwrap() as f64).collect();
        let (_, p) = ks_two_sample(&a, &b);
        assert!(p > 0.01, "{}: KS p = {p}", spec.label());
    }
}

#[test]
fn poisson_sigma_is_one() {
    let curve = estimate_sigma(&ProcessSpec::Poisson { intensity: 1.0 }, &torus(64), &[8.0], 500, 16, RngSeed::new(3)).unwrap();
    assert!((curve.sigma[0] - 1.0).abs() < 0.05, "{:?}", curve);
}

#[test]
fn lattice_sigma_halves_per_dyad() {
    let curve = estimate_sigma(&ProcessSpec::Lattice, &torus(128), &[8.0, 16.0], 500, 16, RngSeed::new(4)).unwrap();
    let ratio = curve.sigma[1] / curve.sigma[0];
    assert!((0.35..=0.7).contains(&ratio), "ratio {ratio}");
}

#[test]
fn lattice_hustar_converges() {
    let radii = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
    let curve = estimate_sigma(&ProcessSpec::Lattice, &torus(128), &radii, 500, 16, RngSeed::new(6)).unwrap();
    let rep = hustar_series(&curve, 5).unwrap();
    assert_eq!(rep.verdict, Verdict::Converging, "{rep:?}");
}

#[test]
fn collapse_sigma_is_large_at_small_radius() {
    let spec = ProcessSpec::Collapse { n: 8, jitter: 0.0 };
    let curve = estimate_sigma(&spec, &torus(128), &[4.0], 200, 16, RngSeed::new(8)).unwrap();
    // a radius-4 ball holds one 64-atom with probability pi 16 / 64, else nothing
    let p = PI * 16.0 / 64.0;
    let exact = 64.0 * 64.0 * p * (1.0 - p) / (PI * 16.0);
    assert!(curve.sigma[0] > 10.0);
    assert!((curve.sigma[0] - exact).abs() < 0.1 * exact, "{} vs {exact}", curve.sigma[0]);
}

#[test]
fn binomial_variance_grows_like_r_n() {
    let spec = ProcessSpec::Binomial { n: 8 };
    let curve = estimate_sigma(&spec, &torus(64), &[31.0], 300, 16, RngSeed::new(9)).unwrap();
    let var = curve.sigma[0] * PI * 31.0 * 31.0;
    assert!(var <= 10.0 * 31.0 * 8.0, "Var = {var}");
}

#[test]
fn replica_relabeling_is_harmless() {
    let spec = ProcessSpec::Perturbed { law: DisplacementLaw::IsotropicGaussian { std: 0.3 } };
    let a = estimate_sigma(&spec, &torus(32), &[4.0], 200, 8, RngSeed::new(1)).unwrap();
    let b = estimate_sigma(&spec, &torus(32), &[4.0], 200, 8, RngSeed::with_stream(1, 10_000)).unwrap();
    let se = a.stderr[0].hypot(b.stderr[0]);
    assert!((a.sigma[0] - b.sigma[0]).abs() < 3.0 * se);
}

#[test]
fn mixture_sigma_is_weighted_average() {
    let t = torus(32);
    let comps = vec![
        MixtureComponent { weight: 0.3, spec: ProcessSpec::Lattice },
        MixtureComponent { weight: 0.7, spec: ProcessSpec::Binomial { n: 8 } },
    ];
    let mix = ProcessSpec::Mixture { components: comps.clone() };
    let r = [6.0];
    let m = estimate_sigma(&mix, &t, &r, 2000, 8, RngSeed::new(30)).unwrap();
    let a = estimate_sigma(&comps[0].spec, &t, &r, 1000, 8, RngSeed::new(31)).unwrap();
    let b = estimate_sigma(&comps[1].spec, &t, &r, 1000, 8, RngSeed::new(32)).unwrap();
    let want = 0.3 * a.sigma[0] + 0.7 * b.sigma[0];
    let se = (m.stderr[0].powi(2) + 0.09 * a.stderr[0].powi(2) + 0.49 * b.stderr[0].powi(2)).sqrt();
    assert!((m.sigma[0] - want).abs() < 3.0 * se, "{} vs {want} (se {se})", m.sigma[0]);
}

#[test]
fn pair_route_matches_counting() {
    let t = torus(64);
    let poisson = ensemble(&ProcessSpec::Poisson { intensity: 1.0 }, &t, 200, 40);
    let s = sigma_from_pairs(&poisson, 4.0).unwrap();
    assert!((s - 1.0).abs() < 0.05, "poisson {s}");

    let lattice = ensemble(&ProcessSpec::Lattice, &t, 100, 41);
    let s = sigma_from_pairs(&lattice, 8.0).unwrap();
    let direct = estimate_sigma(&ProcessSpec::Lattice, &t, &[8.0], 500, 16, RngSeed::new(42)).unwrap();
    assert!((s - direct.sigma[0]).abs() < 0.1 * direct.sigma[0], "pairs {s} direct {}", direct.sigma[0]);
    assert!(sigma_from_pairs(&lattice, 16.0).is_err());
}

#[test]
fn lattice_sum_rule() {
    let t = torus(64);
    let lattice = ensemble(&ProcessSpec::Lattice, &t, 100, 43);
    let smooth = correlation_mass(&lattice, 16.0, Cutoff::Smooth).unwrap();
    assert!((-1.2..=-0.8).contains(&smooth), "smooth cutoff {smooth}");
    let poisson = ensemble(&ProcessSpec::Poisson { intensity: 1.0 }, &t, 100, 44);
    let flat = correlation_mass(&poisson, 16.0, Cutoff::Smooth).unwrap();
    assert!(flat.abs() < 0.3, "poisson {flat}");
}

// Independent displacements make each count a sum of independent
// Bernoullis, so sigma never exceeds one however heavy the tail.
#[test]
fn heavy_tail_sigma_is_capped_by_independence() {
    let spec = ProcessSpec::Perturbed { law: DisplacementLaw::RadialPowerTail { alpha: 1.5, scale: 1.0 } };
    let c = estimate_sigma(&spec, &torus(64), &[8.0], 200, 16, RngSeed::new(21)).unwrap();
    assert!(c.sigma[0] <= 1.0 + 3.0 * c.stderr[0], "{} ± {}", c.sigma[0], c.stderr[0]);
    assert!(c.sigma[0] > 0.3, "{}", c.sigma[0]);
}
