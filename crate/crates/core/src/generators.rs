//! Samplers for the stationary point processes used throughout the lab.
//!
//! Every sampler is a pure function of `(spec, box, seed)`. The block
//! families draw one uniform shift of the whole block tiling per sample,
//! which makes them stationary under torus translations.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointConfiguration, TorusBox};
use crate::rng::RngSeed;

/// Law of the i.i.d. displacements in a perturbed lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisplacementLaw {
    Zero,
    IsotropicGaussian {
        std: f64,
    },
    /// Isotropic with density proportional to `(1 + |v|/scale)^-(2 + alpha)`.
    RadialPowerTail {
        alpha: f64,
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl DisplacementLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DisplacementLaw::Zero => true,
            DisplacementLaw::IsotropicGaussian { std } => std > 0.0 && std.is_finite(),
            DisplacementLaw::RadialPowerTail { alpha, scale } => {
                alpha > 0.0 && scale > 0.0 && alpha.is_finite() && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("displacement parameters must be positive: {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        match *self {
            DisplacementLaw::Zero => [0.0, 0.0],
            DisplacementLaw::IsotropicGaussian { std } => {
                let n = Normal::new(0.0, std).expect("validated std");
                [n.sample(rng), n.sample(rng)]
            }
            DisplacementLaw::RadialPowerTail { alpha, scale } => {
                // |v|/scale = u - 1 where u is Pareto(alpha) thinned by (u - 1)/u,
                // giving radial density s (1 + s)^-(2 + alpha)
                let u = loop {
                    let u: f64 = (1.0 - rng.gen::<f64>()).powf(-1.0 / alpha);
                    if rng.gen::<f64>() < 1.0 - 1.0 / u {
                        break u;
                    }
                };
                let s = scale * (u - 1.0);
                let theta = 2.0 * PI * rng.gen::<f64>();
                [s * theta.cos(), s * theta.sin()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub spec: ProcessSpec,
}

/// A point process that can be sampled on a torus.
///
/// JSON form is internally tagged by `kind`, for example
/// `{"kind":"collapse","N":4}` or
/// `{"kind":"perturbed","law":{"kind":"isotropic_gaussian","std":0.3}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    Poisson {
        #[serde(default = "unit")]
        intensity: f64,
    },
    Lattice,
    Perturbed {
        law: DisplacementLaw,
    },
    Collapse {
        #[serde(rename = "N")]
        n: u32,
        /// Radius of the ball the block's points are spread over; 0 keeps them coincident.
        #[serde(default)]
        jitter: f64,
    },
    Binomial {
        #[serde(rename = "N")]
        n: u32,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

impl ProcessSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Short human-readable label, used as a row key in reports.
    pub fn label(&self) -> String {
        match self {
            ProcessSpec::Poisson { intensity } => format!("poisson(intensity={intensity})"),
            ProcessSpec::Lattice => "lattice".into(),
            ProcessSpec::Perturbed { law } => match law {
                DisplacementLaw::Zero => "perturbed(zero)".into(),
                DisplacementLaw::IsotropicGaussian { std } => format!("perturbed(gaussian std={std})"),
                DisplacementLaw::RadialPowerTail { alpha, scale } => {
                    format!("perturbed(power tail alpha={alpha} scale={scale})")
                }
            },
            ProcessSpec::Collapse { n, jitter } if *jitter > 0.0 => format!("collapse(N={n}, jitter={jitter})"),
            ProcessSpec::Collapse { n, .. } => format!("collapse(N={n})"),
            ProcessSpec::Binomial { n } => format!("binomial(N={n})"),
            ProcessSpec::Mixture { components } => format!("mixture({} components)", components.len()),
        }
    }

    /// Mean number of points per unit area.
    pub fn intensity(&self) -> f64 {
        match self {
            ProcessSpec::Poisson { intensity } => *intensity,
            ProcessSpec::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                components.iter().map(|c| c.weight / total * c.spec.intensity()).sum()
            }
            _ => 1.0,
        }
    }

    /// Whether every sample has exactly `L^2` points.
    pub fn exact_count(&self) -> bool {
        match self {
            ProcessSpec::Poisson { .. } => false,
            ProcessSpec::Mixture { components } => components.iter().all(|c| c.spec.exact_count()),
            _ => true,
        }
    }

    pub fn validate(&self, torus: &TorusBox) -> Result<()> {
        match self {
            ProcessSpec::Poisson { intensity } => {
                if !(*intensity > 0.0 && intensity.is_finite()) {
                    return Err(Error::InvalidParameter(format!("intensity must be positive, got {intensity}")));
                }
                let mean = intensity * torus.area();
                if mean >= 2f64.powi(31) {
                    return Err(Error::Overflow(mean));
                }
                Ok(())
            }
            ProcessSpec::Lattice => torus.integer_side().map(|_| ()),
            ProcessSpec::Perturbed { law } => {
                law.validate()?;
                torus.integer_side().map(|_| ())
            }
            ProcessSpec::Collapse { n, jitter } => {
                if *n < 2 {
                    return Err(Error::InvalidParameter(format!("collapse blocks need N >= 2, got {n}")));
                }
                if !(*jitter >= 0.0 && jitter.is_finite()) {
                    return Err(Error::InvalidParameter(format!("jitter must be nonnegative, got {jitter}")));
                }
                check_blocks(*n, torus).map(|_| ())
            }
            ProcessSpec::Binomial { n } => {
                if *n == 0 {
                    return Err(Error::InvalidParameter("block side must be positive".into()));
                }
                check_blocks(*n, torus).map(|_| ())
            }
            ProcessSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(Error::EmptyMixture);
                }
                for c in components {
                    if !(c.weight > 0.0 && c.weight.is_finite()) {
                        return Err(Error::InvalidParameter(format!("mixture weight must be positive, got {}", c.weight)));
                    }
                    c.spec.validate(torus)?;
                }
                Ok(())
            }
        }
    }

    /// Draw one configuration.
    pub fn sample(&self, torus: &TorusBox, seed: RngSeed) -> Result<PointConfiguration> {
        match self {
            ProcessSpec::Poisson { intensity } => gen_poisson(torus, *intensity, seed),
            ProcessSpec::Lattice => gen_stationary_lattice(torus, seed),
            ProcessSpec::Perturbed { law } => gen_perturbed_lattice(torus, law, seed),
            ProcessSpec::Collapse { n, jitter } => gen_collapse_blocks_jittered(torus, *n, *jitter, seed),
            ProcessSpec::Binomial { n } => gen_binomial_blocks(torus, *n, seed),
            ProcessSpec::Mixture { components } => gen_mixture(components, torus, seed),
        }
    }
}

fn check_blocks(n: u32, torus: &TorusBox) -> Result<u32> {
    let l = torus.integer_side().map_err(|_| Error::BlockMismatch { block: n, side: torus.side() })?;
    if n == 0 || l % n != 0 {
        return Err(Error::BlockMismatch { block: n, side: torus.side() });
    }
    Ok(l)
}

pub fn gen_poisson(torus: &TorusBox, intensity: f64, seed: RngSeed) -> Result<PointConfiguration> {
    ProcessSpec::Poisson { intensity }.validate(torus)?;
    let mut rng = seed.rng();
    let mean = intensity * torus.area();
    let count = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(&mut rng) as usize;
    let l = torus.side();
    let pts = (0..count).map(|_| Point::new(l * rng.gen::<f64>(), l * rng.gen::<f64>()));
    Ok(PointConfiguration::from_points(*torus, pts.collect::<Vec<_>>()))
}

pub fn gen_stationary_lattice(torus: &TorusBox, seed: RngSeed) -> Result<PointConfiguration> {
    gen_perturbed_lattice(torus, &DisplacementLaw::Zero, seed)
}

pub fn gen_perturbed_lattice(torus: &TorusBox, law: &DisplacementLaw, seed: RngSeed) -> Result<PointConfiguration> {
    law.validate()?;
    let l = torus.integer_side()?;
    let mut rng = seed.rng();
    let tau: [f64; 2] = [rng.gen(), rng.gen()];
    let mut pts = Vec::with_capacity((l as usize).pow(2));
    for i in 0..l {
        for j in 0..l {
            let v = law.sample(&mut rng);
            pts.push(Point::new(f64::from(i) + tau[0] + v[0], f64::from(j) + tau[1] + v[1]));
        }
    }
    Ok(PointConfiguration::from_points(*torus, pts))
}

pub fn gen_collapse_blocks(torus: &TorusBox, n: u32, seed: RngSeed) -> Result<PointConfiguration> {
    gen_collapse_blocks_jittered(torus, n, 0.0, seed)
}

/// Collapse blocks; with `jitter > 0` each point lands uniformly in the
/// jitter ball around its block center instead of on it.
pub fn gen_collapse_blocks_jittered(torus: &TorusBox, n: u32, jitter: f64, seed: RngSeed) -> Result<PointConfiguration> {
    ProcessSpec::Collapse { n, jitter }.validate(torus)?;
    let l = check_blocks(n, torus)?;
    let mut rng = seed.rng();
    // Z^2 + 1/2 tiled by aligned N-blocks holds exactly N^2 points per block;
    // shifting the tiling by a uniform vector in [0, N)^2 gives the stationary law
    let nf = f64::from(n);
    let shift = [nf * rng.gen::<f64>(), nf * rng.gen::<f64>()];
    let blocks = l / n;
    let mut config = PointConfiguration::empty(*torus);
    let per_block = n * n;
    for bi in 0..blocks {
        for bj in 0..blocks {
            let c = Point::new(nf * (f64::from(bi) + 0.5) + shift[0], nf * (f64::from(bj) + 0.5) + shift[1]);
            if jitter == 0.0 {
                config.push(c, per_block);
            } else {
                for _ in 0..per_block {
                    let rad = jitter * rng.gen::<f64>().sqrt();
                    let th = 2.0 * PI * rng.gen::<f64>();
                    config.push(Point::new(c.x + rad * th.cos(), c.y + rad * th.sin()), 1);
                }
            }
        }
    }
    Ok(config)
}

pub fn gen_binomial_blocks(torus: &TorusBox, n: u32, seed: RngSeed) -> Result<PointConfiguration> {
    ProcessSpec::Binomial { n }.validate(torus)?;
    let l = check_blocks(n, torus)?;
    let mut rng = seed.rng();
    let nf = f64::from(n);
    let shift = [nf * rng.gen::<f64>(), nf * rng.gen::<f64>()];
    let blocks = l / n;
    let mut pts = Vec::with_capacity((l as usize).pow(2));
    for bi in 0..blocks {
        for bj in 0..blocks {
            let o = [nf * f64::from(bi) + shift[0], nf * f64::from(bj) + shift[1]];
            for _ in 0..n * n {
                pts.push(Point::new(o[0] + nf * rng.gen::<f64>(), o[1] + nf * rng.gen::<f64>()));
            }
        }
    }
    Ok(PointConfiguration::from_points(*torus, pts))
}

/// Pick a component with probability proportional to its weight, then sample it.
pub fn gen_mixture(components: &[MixtureComponent], torus: &TorusBox, seed: RngSeed) -> Result<PointConfiguration> {
    let spec = ProcessSpec::Mixture { components: components.to_vec() };
    spec.validate(torus)?;
    let total: f64 = components.iter().map(|c| c.weight).sum();
    let mut rng = seed.derive(0x6d69_7874).rng();
    let mut u = total * rng.gen::<f64>();
    let mut pick = components.len() - 1;
    for (k, c) in components.iter().enumerate() {
        if u < c.weight {
            pick = k;
            break;
        }
        u -= c.weight;
    }
    components[pick].spec.sample(torus, seed)
}

/// Normalised weights of a mixture.
pub fn normalized_weights(components: &[MixtureComponent]) -> Result<Vec<f64>> {
    if components.is_empty() {
        return Err(Error::EmptyMixture);
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    Ok(components.iter().map(|c| c.weight / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::count_in_ball;

    fn torus(l: u32) -> TorusBox {
        TorusBox::integer(l).unwrap()
    }

    #[test]
    fn json_schema() {
        let s = ProcessSpec::from_json(r#"{"kind":"collapse","N":4}"#).unwrap();
        assert_eq!(s, ProcessSpec::Collapse { n: 4, jitter: 0.0 });
        let s = ProcessSpec::from_json(r#"{"kind":"perturbed","law":{"kind":"radial_power_tail","alpha":1.5}}"#).unwrap();
        assert_eq!(s, ProcessSpec::Perturbed { law: DisplacementLaw::RadialPowerTail { alpha: 1.5, scale: 1.0 } });
        assert_eq!(ProcessSpec::from_json(r#"{"kind":"lattice"}"#).unwrap(), ProcessSpec::Lattice);
        let back: ProcessSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn lattice_is_exact() {
        let c = gen_stationary_lattice(&torus(8), RngSeed::new(1)).unwrap();
        assert_eq!(c.total_count(), 64);
        for p in &c.points {
            let mut nearest = f64::INFINITY;
            for q in &c.points {
                let d = crate::periodic_distance(*p, *q, &c.torus);
                if d > 0.0 {
                    nearest = nearest.min(d);
                }
            }
            assert!((nearest - 1.0).abs() < 1e-12);
        }
        assert!(matches!(gen_stationary_lattice(&TorusBox::new(8.5).unwrap(), RngSeed::new(1)), Err(Error::NonIntegerSide(_))));
    }

    #[test]
    fn zero_perturbation_is_the_lattice() {
        let t = torus(16);
        let a = gen_stationary_lattice(&t, RngSeed::new(9)).unwrap();
        let b = gen_perturbed_lattice(&t, &DisplacementLaw::Zero, RngSeed::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collapse_counts() {
        let c = gen_collapse_blocks(&torus(16), 4, RngSeed::new(3)).unwrap();
        assert_eq!(c.len(), 16);
        assert!(c.multiplicities.iter().all(|&m| m == 16));
        assert_eq!(c.total_count(), 256);
        for p in &c.points {
            assert_eq!(count_in_ball(&c, *p, 0.5).unwrap(), 16);
        }
        assert!(matches!(gen_collapse_blocks(&torus(18), 4, RngSeed::new(3)), Err(Error::BlockMismatch { .. })));
        let j = gen_collapse_blocks_jittered(&torus(16), 4, 0.25, RngSeed::new(3)).unwrap();
        assert_eq!(j.len(), 256);
        assert_eq!(j.max_multiplicity(), 1);
    }

    #[test]
    fn binomial_counts() {
        let t = torus(32);
        let c = gen_binomial_blocks(&t, 8, RngSeed::new(5)).unwrap();
        assert_eq!(c.total_count(), 1024);
        // recover the shift from the sampler's first two draws
        let mut rng = RngSeed::new(5).rng();
        let shift = [8.0 * rng.gen::<f64>(), 8.0 * rng.gen::<f64>()];
        let inside = c
            .points
            .iter()
            .filter(|p| {
                let dx = t.wrap_coord(p.x - shift[0]);
                let dy = t.wrap_coord(p.y - shift[1]);
                dx < 8.0 && dy < 8.0
            })
            .count();
        assert_eq!(inside, 64);
    }

    #[test]
    fn mixture_errors_and_degenerate_case() {
        let t = torus(16);
        assert!(matches!(gen_mixture(&[], &t, RngSeed::new(1)), Err(Error::EmptyMixture)));
        let one = [MixtureComponent { weight: 2.0, spec: ProcessSpec::Binomial { n: 4 } }];
        let a = gen_mixture(&one, &t, RngSeed::new(1)).unwrap();
        let b = gen_binomial_blocks(&t, 4, RngSeed::new(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_tail_radial_law() {
        // empirical tail probability at |v| = 2 against quadrature of the radial density
        let law = DisplacementLaw::RadialPowerTail { alpha: 1.5, scale: 1.0 };
        let mut rng = RngSeed::new(11).rng();
        let n = 40_000;
        let mut over = 0usize;
        for _ in 0..n {
            let v = law.sample(&mut rng);
            if v[0].hypot(v[1]) > 2.0 {
                over += 1;
            }
        }
        let exact = tail_survival(1.5, 2.0);
        let got = over as f64 / n as f64;
        assert!((got - exact).abs() < 4.0 * (exact * (1.0 - exact) / n as f64).sqrt(), "{got} vs {exact}");
    }

    // P(S > s) for radial density proportional to s (1+s)^-(2+a), by quadrature
    fn tail_survival(a: f64, s0: f64) -> f64 {
        let f = |s: f64| s * (1.0 + s).powf(-(2.0 + a));
        // substitute s = t/(1-t) to map [0, inf) onto [0, 1)
        let integrate = |lo: f64| {
            let tlo = lo / (1.0 + lo);
            let m = 200_000;
            let h = (1.0 - tlo) / m as f64;
            (0..m)
                .map(|k| {
                    let t = tlo + (k as f64 + 0.5) * h;
                    let s = t / (1.0 - t);
                    f(s) / (1.0 - t).powi(2) * h
                })
                .sum::<f64>()
        };
        integrate(s0) / integrate(0.0)
    }
}
