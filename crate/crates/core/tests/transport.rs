use std::f64::consts::PI;

use hyperlab::coulomb::{default_grid, solve_field};
use hyperlab::generators::{gen_binomial_blocks, gen_collapse_blocks, gen_perturbed_lattice, gen_stationary_lattice};
use hyperlab::transport::{
    field_from_coupling, transport_bound_from_field, w1_to_lebesgue, w2_spread_to_lebesgue, w2_to_lebesgue,
    wp_per_unit_volume, Method, Stability,
};
use hyperlab::{DisplacementLaw, Error, Point, PointConfiguration, ProcessSpec, RngSeed, TorusBox};

fn torus(l: u32) -> TorusBox {
    TorusBox::integer(l).unwrap()
}

fn centered_lattice(l: u32) -> PointConfiguration {
    let pts = (0..l).flat_map(|i| (0..l).map(move |j| Point::new(i as f64 + 0.5, j as f64 + 0.5)));
    PointConfiguration::from_points(torus(l), pts)
}

#[test]
fn lattice_cost_is_one_sixth() {
    let r = w2_to_lebesgue(&centered_lattice(4), 32, Method::ExactAssignment, 0.0).unwrap();
    assert!((r.cost_per_volume * 6.0 - 1.0).abs() < 0.02, "{}", r.cost_per_volume);
    assert!(r.marginal_error().unwrap() < 1e-9);
    assert!(r.relative_gap <= 1e-6);
}

#[test]
fn single_point_cost_is_one_sixth() {
    let c = PointConfiguration::from_points(torus(1), [Point::new(0.3, 0.7)]);
    let r = w2_to_lebesgue(&c, 64, Method::ExactAssignment, 0.0).unwrap();
    assert!((r.cost_per_volume * 6.0 - 1.0).abs() < 0.02, "{}", r.cost_per_volume);
}

#[test]
fn w1_lattice_mean_distance() {
    let r = w1_to_lebesgue(&centered_lattice(4), 32, Method::ExactAssignment).unwrap();
    assert!((r.cost_per_volume / 0.3826 - 1.0).abs() < 0.02, "{}", r.cost_per_volume);
}

#[test]
fn collapse_cost_within_displacement_bound() {
    let c = gen_collapse_blocks(&torus(16), 4, RngSeed::new(1)).unwrap();
    let r = w2_to_lebesgue(&c, 32, Method::ExactAssignment, 0.0).unwrap();
    assert!(r.cost_per_volume <= 32.0);
    // each block spreads to its own square: N^2/6 per volume
    assert!((r.cost_per_volume / (16.0 / 6.0) - 1.0).abs() < 0.05, "{}", r.cost_per_volume);
    assert!(r.marginal_error().unwrap() < 1e-9);
}

#[test]
fn unbalanced_and_guards() {
    let c = PointConfiguration::from_points(torus(2), [Point::new(0.5, 0.5)]);
    assert!(matches!(w2_to_lebesgue(&c, 8, Method::ExactAssignment, 0.0), Err(Error::Unbalanced { .. })));
    assert!(w2_to_lebesgue(&centered_lattice(4), 4, Method::ExactAssignment, 0.0).is_err());
    let big = centered_lattice(128);
    assert!(matches!(w2_to_lebesgue(&big, 1024, Method::ExactAssignment, 0.0), Err(Error::InstanceTooLarge { .. })));
}

#[test]
fn entropic_is_close_to_exact() {
    let c = gen_perturbed_lattice(&torus(8), &DisplacementLaw::IsotropicGaussian { std: 0.4 }, RngSeed::new(2)).unwrap();
    let ex = w2_to_lebesgue(&c, 16, Method::ExactAssignment, 0.0).unwrap();
    let en = w2_to_lebesgue(&c, 16, Method::Entropic, 0.01).unwrap();
    assert!(en.marginal_error().unwrap() < 1e-9);
    assert!(en.cost_per_volume >= ex.cost_per_volume * (1.0 - 1e-6));
    assert!(en.cost_per_volume <= 1.05 * ex.cost_per_volume, "{} vs {}", en.cost_per_volume, ex.cost_per_volume);
}

#[test]
fn per_volume_cost_ignores_box_size() {
    let a = w2_to_lebesgue(&centered_lattice(4), 16, Method::ExactAssignment, 0.0).unwrap().cost_per_volume;
    let c8 = centered_lattice(8);
    let b = w2_to_lebesgue(&c8, 32, Method::ExactAssignment, 0.0).unwrap().cost_per_volume;
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn lattice_cost_is_box_stable() {
    let s = wp_per_unit_volume(&ProcessSpec::Lattice, &[4, 8, 16], 2.0, 4, 4, RngSeed::new(3)).unwrap();
    assert_eq!(s.verdict, Stability::Finite, "{s:?}");
    for m in &s.mean {
        assert!((m * 6.0 - 1.0).abs() < 0.05, "{s:?}");
    }
}

#[test]
fn poisson_cost_grows() {
    let s = wp_per_unit_volume(&ProcessSpec::Poisson { intensity: 1.0 }, &[8, 16, 32], 2.0, 8, 2, RngSeed::new(4)).unwrap();
    assert!(s.log_slope > 0.0, "{s:?}");
}

#[test]
fn forward_bridge_on_perturbed_lattice() {
    let t = torus(16);
    for k in 0..5 {
        let c = gen_perturbed_lattice(&t, &DisplacementLaw::IsotropicGaussian { std: 0.5 }, RngSeed::new(10).replica(k)).unwrap();
        let f = solve_field(&c, 1.0, default_grid(&t, 1.0, 64)).unwrap();
        let b = transport_bound_from_field(&f, &c).unwrap();
        assert!(b.holds, "{b:?}");
    }
}

#[test]
fn reverse_bridge_on_lattice() {
    let t = torus(8);
    let c = gen_stationary_lattice(&t, RngSeed::new(5)).unwrap();
    let r = w2_spread_to_lebesgue(&c, 1.0, 32).unwrap();
    assert!(r.marginal_error().unwrap() < 1e-9);
    let f = field_from_coupling(&r, 32).unwrap();
    assert!(f.div_residual <= f.tol_div, "{} > {}", f.div_residual, f.tol_div);
    assert!(f.holds, "energy {} rhs {} rho {}", f.energy, f.rhs, f.rho_bar);
}

#[test]
fn reverse_bridge_guards() {
    let r = w2_to_lebesgue(&centered_lattice(4), 16, Method::ExactAssignment, 0.0).unwrap();
    assert!(matches!(field_from_coupling(&r, 16), Err(Error::DensityUnbounded { .. })));
    let mut bare = r.clone();
    bare.coupling = None;
    assert!(matches!(field_from_coupling(&bare, 16), Err(Error::MissingCoupling)));
}

#[test]
fn single_spread_charge_divergence() {
    let c = PointConfiguration::from_points(torus(1), [Point::new(0.5, 0.5)]);
    let r = w2_spread_to_lebesgue(&c, 0.25, 16).unwrap();
    let f = field_from_coupling(&r, 16).unwrap();
    assert!(f.div_residual <= f.tol_div);
    assert!(f.energy > 0.0 && f.rho_bar >= 1.0 / PI);
}

#[test]
fn binomial_w1_increases_with_block() {
    let mut last = 0.0;
    for n in [8u32, 16] {
        let t = torus(n);
        let costs: Vec<f64> = (0..4)
            .map(|k| {
                let c = gen_binomial_blocks(&t, n, RngSeed::new(6).replica(k)).unwrap();
                w1_to_lebesgue(&c, 2 * n as usize, Method::ExactAssignment).unwrap().cost_per_volume
            })
            .collect();
        let m = costs.iter().sum::<f64>() / costs.len() as f64;
        assert!(m > last, "{n}: {m} <= {last}");
        last = m;
    }
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn coupling_marginals_are_exact(seed in 0u64..10_000, std in 0.0..1.5f64, entropic in any::<bool>()) {
            let c = gen_perturbed_lattice(&torus(4), &DisplacementLaw::IsotropicGaussian { std }, RngSeed::new(seed)).unwrap();
            let method = if entropic { Method::Entropic } else { Method::ExactAssignment };
            let r = w2_to_lebesgue(&c, 8, method, 0.05).unwrap();
            prop_assert!(r.marginal_error().unwrap() < 1e-9);
        }
    }
}
