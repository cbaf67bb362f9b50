use hyperlab::coulomb::{
    coul_estimate, default_grid, discrepancy_bound_check, energy_per_volume, eta_comparison_check,
    local_energy_lower_bound_check, newton_deviation, solve_field,
};
use hyperlab::generators::{gen_collapse_blocks, gen_perturbed_lattice, gen_stationary_lattice};
use hyperlab::{DisplacementLaw, Error, Point, PointConfiguration, ProcessSpec, RngSeed, TorusBox};

fn torus(l: u32) -> TorusBox {
    TorusBox::integer(l).unwrap()
}

#[test]
fn newton_check_outside_spread_balls() {
    let t = torus(8);
    let c = gen_perturbed_lattice(&t, &DisplacementLaw::IsotropicGaussian { std: 0.3 }, RngSeed::new(5)).unwrap();
    let dev = newton_deviation(&c, 0.5, 1.0, 128).unwrap();
    assert!(dev <= 1e-6, "deviation {dev}");
}

#[test]
fn every_solve_meets_residual_tolerance() {
    let t = torus(16);
    for (k, spec) in [
        ProcessSpec::Lattice,
        ProcessSpec::Perturbed { law: DisplacementLaw::IsotropicGaussian { std: 0.5 } },
        ProcessSpec::Collapse { n: 4, jitter: 0.0 },
        ProcessSpec::Binomial { n: 8 },
    ]
    .iter()
    .enumerate()
    {
        let c = spec.sample(&t, RngSeed::new(k as u64)).unwrap();
        for eta in [0.25, 0.5, 1.0] {
            let f = solve_field(&c, eta, default_grid(&t, eta, 64)).unwrap();
            assert!(f.invariants_hold(), "{} eta {eta}: div {} curl {} tol {}", spec.label(), f.div_residual, f.curl_residual, f.tol_div);
        }
    }
}

#[test]
fn translation_equivariance() {
    let t = torus(8);
    let c = gen_perturbed_lattice(&t, &DisplacementLaw::IsotropicGaussian { std: 0.3 }, RngSeed::new(2)).unwrap();
    let n = 64;
    let h = 8.0 / n as f64;
    // shift by a whole number of grid cells so nodes map onto nodes
    let shifted = c.shifted([5.0 * h, 11.0 * h]);
    let a = solve_field(&c, 1.0, n).unwrap();
    let b = solve_field(&shifted, 1.0, n).unwrap();
    let scale = a.grid.values.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let u = a.grid.at(i, j);
            let v = b.grid.at((i + 5) % n, (j + 11) % n);
            worst = worst.max((u[0] - v[0]).hypot(u[1] - v[1]));
        }
    }
    assert!(worst <= 1e-8 * scale, "{worst}");
}

#[test]
fn lattice_energy_converges_under_refinement() {
    let t = torus(8);
    let c = gen_stationary_lattice(&t, RngSeed::new(3)).unwrap();
    let e256 = energy_per_volume(&solve_field(&c, 1.0, 256).unwrap());
    let e512 = energy_per_volume(&solve_field(&c, 1.0, 512).unwrap());
    assert!(((e256 - e512) / e512).abs() < 0.02, "{e256} vs {e512}");
}

#[test]
fn local_energy_guard_and_equivariance() {
    let t = torus(40);
    let c = gen_collapse_blocks(&t, 10, RngSeed::new(4)).unwrap();
    let n = default_grid(&t, 1.0, 64);
    let f = solve_field(&c, 1.0, n).unwrap();
    let z = c.points[0];
    let chk = local_energy_lower_bound_check(&c, &f, z, 10.0).unwrap();
    assert!(chk.ratio > 0.001, "{chk:?}");

    let h = t.side() / n as f64;
    let s = [7.0 * h, 3.0 * h];
    let c2 = c.shifted(s);
    let f2 = solve_field(&c2, 1.0, n).unwrap();
    let chk2 = local_energy_lower_bound_check(&c2, &f2, Point::new(z.x + s[0], z.y + s[1]), 10.0).unwrap();
    assert!((chk.ratio - chk2.ratio).abs() < 1e-8 * chk.ratio);

    let lattice = gen_stationary_lattice(&t, RngSeed::new(4)).unwrap();
    let fl = solve_field(&lattice, 1.0, n).unwrap();
    assert!(matches!(
        local_energy_lower_bound_check(&lattice, &fl, lattice.points[0], 10.0),
        Err(Error::PreconditionNotMet(_))
    ));
}

#[test]
fn eta_table_for_lattice() {
    let t = torus(8);
    let c = gen_stationary_lattice(&t, RngSeed::new(8)).unwrap();
    let table = eta_comparison_check(&c, &[0.25, 0.5, 1.0], 128).unwrap();
    assert!(table.energies.windows(2).all(|w| w[1] <= w[0]), "{table:?}");
    assert!(table.fitted_c <= 20.0);
}

#[test]
fn poisson_energy_grows_with_box() {
    let spec = ProcessSpec::Poisson { intensity: 1.0 };
    let small = coul_estimate(&spec, &torus(16), 1.0, 8, 64, RngSeed::new(1)).unwrap();
    let large = coul_estimate(&spec, &torus(64), 1.0, 8, 256, RngSeed::new(1)).unwrap();
    assert!(large.mean > small.mean + 2.0 * (small.stderr + large.stderr), "{small:?} {large:?}");
    let lat_small = coul_estimate(&ProcessSpec::Lattice, &torus(16), 1.0, 8, 64, RngSeed::new(1)).unwrap();
    let lat_large = coul_estimate(&ProcessSpec::Lattice, &torus(64), 1.0, 8, 256, RngSeed::new(1)).unwrap();
    assert!((lat_small.mean - lat_large.mean).abs() < 0.02 * lat_large.mean);
}

#[test]
fn deterministic_counts_satisfy_discrepancy_bound() {
    let chk = discrepancy_bound_check(&ProcessSpec::Lattice, &torus(16), 1.0, 4.0, 8, 16, 64, RngSeed::new(2)).unwrap();
    assert!(chk.ratio <= 10.0, "{chk:?}");
}

#[test]
fn single_point_neutrality_guard() {
    let c = PointConfiguration::from_points(torus(4), [Point::new(1.0, 1.0)]);
    assert!(matches!(solve_field(&c, 1.0, 32), Err(Error::NonNeutral { .. })));
}
