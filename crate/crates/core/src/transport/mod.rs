//! Semi-discrete transport from point configurations to Lebesgue measure on
//! the torus, discretized as a grid of equal-mass cells.

mod auction;
mod bridge;
mod flow;
mod sinkhorn;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coulomb::condition_point_count;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointConfiguration, TorusBox};
use crate::rng::RngSeed;
use crate::stats::{linear_fit, mean, stderr_of_mean};
use crate::ProcessSpec;

pub use bridge::{
    field_from_coupling, transport_bound_from_field, w2_spread_to_lebesgue, FieldBound, FluxField, BRIDGE_SLACK,
    FORWARD_GRID_FACTOR, SPREAD_SUBATOMS,
};

/// Exact-solver size limit on `total_count * grid_m^2`.
pub const EXACT_PAIR_LIMIT: u64 = 100_000_000;
/// Target relative optimality gap of the exact solver.
pub const REL_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactAssignment,
    Entropic,
}

/// Sparse coupling entry: cell `(i, j)` receives `mass` from an atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMass {
    pub cell: [u32; 2],
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub cost_per_volume: f64,
    pub p: f64,
    pub method: Method,
    pub epsilon: f64,
    pub side: f64,
    pub grid_m: usize,
    /// Source atoms: the configuration's points, or sub-atoms of a spread configuration.
    pub atoms: Vec<[f64; 2]>,
    pub atom_mass: Vec<f64>,
    /// Upper bound on the optimality gap divided by the cost (exact method).
    pub relative_gap: f64,
    /// Half the cell diagonal; bounds how far the discretized target sits from Lebesgue.
    pub discretization_bound: f64,
    pub coupling: Option<Vec<Vec<CellMass>>>,
    /// Set when the atoms discretize an eta-spread configuration.
    pub spread: Option<SpreadInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadInfo {
    pub eta: f64,
    /// Largest density of the spread configuration.
    pub max_density: f64,
}

impl TransportResult {
    pub fn cell_mass(&self) -> f64 {
        let h = self.side / self.grid_m as f64;
        h * h
    }

    /// Largest relative violation of either marginal.
    pub fn marginal_error(&self) -> Result<f64> {
        let coupling = self.coupling.as_ref().ok_or(Error::MissingCoupling)?;
        let b = self.cell_mass();
        let mut cells = vec![0.0; self.grid_m * self.grid_m];
        let mut worst = 0.0f64;
        for (row, &m) in coupling.iter().zip(&self.atom_mass) {
            let s: f64 = row.iter().map(|c| c.mass).sum();
            worst = worst.max((s - m).abs() / m);
            for c in row {
                cells[c.cell[0] as usize * self.grid_m + c.cell[1] as usize] += c.mass;
            }
        }
        for s in cells {
            worst = worst.max((s - b).abs() / b);
        }
        Ok(worst)
    }

    /// Sparse triplets `point_id,cell_i,cell_j,mass`.
    pub fn write_coupling_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let coupling = self.coupling.as_ref().ok_or(Error::MissingCoupling)?;
        writeln!(w, "point_id,cell_i,cell_j,mass")?;
        for (k, row) in coupling.iter().enumerate() {
            for c in row {
                writeln!(w, "{k},{},{},{:e}", c.cell[0], c.cell[1], c.mass)?;
            }
        }
        Ok(())
    }
}

/// Atoms with integer capacities measured in grid cells.
pub(crate) struct Instance {
    pub torus: TorusBox,
    pub grid_m: usize,
    pub atoms: Vec<[f64; 2]>,
    pub caps: Vec<u32>,
    pub p: f64,
}

impl Instance {
    fn from_config(config: &PointConfiguration, grid_m: usize, p: f64) -> Result<Self> {
        let l = config.torus.integer_side()? as usize;
        let area = config.torus.area();
        let count = config.total_count();
        if count as f64 != area {
            return Err(Error::Unbalanced { source_mass: count as f64, target_mass: area });
        }
        if grid_m < 2 * l || grid_m % l != 0 {
            return Err(Error::InvalidParameter(format!("grid_m = {grid_m} must be a multiple of L = {l} and at least 2L")));
        }
        let per = ((grid_m / l) * (grid_m / l)) as u32;
        Ok(Self {
            torus: config.torus,
            grid_m,
            atoms: config.points.iter().map(|p| [p.x, p.y]).collect(),
            caps: config.multiplicities.iter().map(|&m| m * per).collect(),
            p,
        })
    }

    fn h(&self) -> f64 {
        self.torus.side() / self.grid_m as f64
    }

    fn cell_center(&self, j: usize) -> Point {
        let h = self.h();
        Point::new((j / self.grid_m) as f64 * h + 0.5 * h, (j % self.grid_m) as f64 * h + 0.5 * h)
    }

    fn cost(&self, d: [f64; 2]) -> f64 {
        let r2 = d[0] * d[0] + d[1] * d[1];
        if self.p == 2.0 {
            r2
        } else {
            r2.sqrt().powf(self.p)
        }
    }

    /// Candidate atoms of every cell within distance `r`.
    fn candidates(&self, r: f64) -> Vec<Vec<(u32, f64)>> {
        let cfg = PointConfiguration::from_points(self.torus, self.atoms.iter().map(|&a| Point::from(a)));
        let spacing = self.torus.side() / (self.atoms.len() as f64).sqrt();
        let index = cfg.index(spacing.max(r / 4.0));
        (0..self.grid_m * self.grid_m)
            .into_par_iter()
            .map(|j| {
                let mut c = Vec::new();
                // the index reports point - center; cost is symmetric
                index.for_each_within(self.cell_center(j), r, |k, d| c.push((k as u32, self.cost(d))));
                c
            })
            .collect()
    }

    /// Smallest radius at which every pair is a candidate.
    fn full_radius(&self) -> f64 {
        self.torus.side() / std::f64::consts::SQRT_2 * (1.0 + 1e-12)
    }

    fn initial_radius(&self) -> f64 {
        let spacing = self.torus.side() / (self.atoms.len() as f64).sqrt();
        (2.5 * spacing + self.h()).min(self.full_radius())
    }

    /// Candidates at the smallest tried radius that admits a full assignment.
    fn feasible_candidates(&self, mut r: f64) -> (f64, Vec<Vec<(u32, f64)>>) {
        loop {
            let cand = self.candidates(r);
            if r >= self.full_radius() || (cand.iter().all(|c| !c.is_empty()) && flow::feasible(&cand, &self.caps)) {
                return (r, cand);
            }
            r = (r * 1.5).min(self.full_radius());
        }
    }

    fn result(&self, method: Method, epsilon: f64, relative_gap: f64, plan: Vec<Vec<CellMass>>) -> TransportResult {
        let b = self.h() * self.h();
        let l = self.torus.side();
        let mut total = 0.0;
        for (row, a) in plan.iter().zip(&self.atoms) {
            for c in row {
                let j = c.cell[0] as usize * self.grid_m + c.cell[1] as usize;
                total += c.mass * self.cost(self.torus.delta(Point::from(*a), self.cell_center(j)));
            }
        }
        TransportResult {
            cost_per_volume: total / (l * l),
            p: self.p,
            method,
            epsilon,
            side: l,
            grid_m: self.grid_m,
            atoms: self.atoms.clone(),
            atom_mass: self.caps.iter().map(|&k| f64::from(k) * b).collect(),
            relative_gap,
            discretization_bound: self.h() / std::f64::consts::SQRT_2,
            coupling: Some(plan),
            spread: None,
        }
    }

    fn plan_from_assignment(&self, cand: &[Vec<(u32, f64)>], choice: &[u32]) -> Vec<Vec<CellMass>> {
        let b = self.h() * self.h();
        let mut plan: Vec<Vec<CellMass>> = vec![Vec::new(); self.atoms.len()];
        for (j, (&k, c)) in choice.iter().zip(cand).enumerate() {
            let i = c[k as usize].0 as usize;
            plan[i].push(CellMass { cell: [(j / self.grid_m) as u32, (j % self.grid_m) as u32], mass: b });
        }
        plan
    }

    pub(crate) fn solve_exact(&self) -> Result<TransportResult> {
        let pairs = self.atoms.len() as u64 * (self.grid_m * self.grid_m) as u64;
        if pairs > EXACT_PAIR_LIMIT {
            return Err(Error::InstanceTooLarge { pairs, limit: EXACT_PAIR_LIMIT });
        }
        let n = self.grid_m * self.grid_m;
        let (mut r, mut cand) = self.feasible_candidates(self.initial_radius());
        let mut auction = auction::Auction::new(&self.caps);
        let mut eps_start = cand.iter().flat_map(|c| c.iter().map(|x| x.1)).fold(0.0f64, f64::max) / 5.0;
        loop {
            let cmax = cand.iter().flat_map(|c| c.iter().map(|x| x.1)).fold(0.0f64, f64::max);
            let floor = 1e-13 * cmax.max(self.h() * self.h());
            let sol = auction.run(&cand, eps_start.max(floor), floor, |cost, eps| n as f64 * eps <= REL_GAP * cost);
            let cost: f64 = sol.choice.iter().zip(&cand).map(|(&k, c)| c[k as usize].1).sum();
            // excluded pairs cost at least r^p; every bidder must already do
            // at least as well as such a pair at the cheapest copy price
            let complete = r >= self.full_radius();
            let bar = -self.cost([r, 0.0]) - auction.min_price() - sol.epsilon;
            let certified = complete
                || sol.choice.iter().zip(&cand).zip(&sol.paid).all(|((&k, c), &p)| -c[k as usize].1 - p >= bar);
            if certified {
                let gap = if cost > 0.0 { n as f64 * sol.epsilon / cost } else { 0.0 };
                let plan = self.plan_from_assignment(&cand, &sol.choice);
                return Ok(self.result(Method::ExactAssignment, 0.0, gap, plan));
            }
            log::debug!("pruning certificate failed at radius {r}; enlarging");
            r = (r * 1.5).min(self.full_radius());
            cand = self.candidates(r);
            eps_start = sol.epsilon * 25.0;
        }
    }

    pub(crate) fn solve_entropic(&self, epsilon: f64) -> Result<TransportResult> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter("entropic epsilon must be positive".into()));
        }
        // a wider support than the exact solver needs, so the entropic
        // blur is not clipped
        let (r, _) = self.feasible_candidates(self.initial_radius());
        let r = (r * 1.5 + 6.0 * epsilon.sqrt()).min(self.full_radius());
        let mut cand = self.candidates(r);
        let mut plan = sinkhorn::sinkhorn(&cand, &self.caps, epsilon);
        log::debug!("sinkhorn finished after {} sweeps", plan.iterations);
        sinkhorn::round_plan(&mut cand, &mut plan.mass, &self.caps);
        let b = self.h() * self.h();
        let mut rows: Vec<Vec<CellMass>> = vec![Vec::new(); self.atoms.len()];
        for (j, (c, m)) in cand.iter().zip(&plan.mass).enumerate() {
            for (&(i, _), &x) in c.iter().zip(m) {
                if x > 0.0 {
                    rows[i as usize].push(CellMass { cell: [(j / self.grid_m) as u32, (j % self.grid_m) as u32], mass: x * b });
                }
            }
        }
        Ok(self.result(Method::Entropic, epsilon, f64::NAN, rows))
    }

    pub(crate) fn solve(&self, method: Method, epsilon: f64) -> Result<TransportResult> {
        match method {
            Method::ExactAssignment => self.solve_exact(),
            Method::Entropic => self.solve_entropic(epsilon),
        }
    }
}

/// `W_p^p / L^2` between a configuration with `total_count = L^2` and
/// Lebesgue measure discretized into `grid_m^2` cells.
pub fn wp_to_lebesgue(config: &PointConfiguration, grid_m: usize, p: f64, method: Method, epsilon: f64) -> Result<TransportResult> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
    }
    Instance::from_config(config, grid_m, p)?.solve(method, epsilon)
}

pub fn w2_to_lebesgue(config: &PointConfiguration, grid_m: usize, method: Method, epsilon: f64) -> Result<TransportResult> {
    wp_to_lebesgue(config, grid_m, 2.0, method, epsilon)
}

pub fn w1_to_lebesgue(config: &PointConfiguration, grid_m: usize, method: Method) -> Result<TransportResult> {
    wp_to_lebesgue(config, grid_m, 1.0, method, 0.01)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Finite,
    Growing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSeries {
    pub process: String,
    pub p: f64,
    pub sides: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub verdict: Stability,
    /// Fit of the mean cost against `log L`.
    pub log_slope: f64,
    pub log_intercept: f64,
}

/// Relative change over the last two sizes below which costs count as stable.
pub const STABLE_CHANGE: f64 = 0.10;

/// Per-volume costs over a growing sequence of boxes. Processes without a
/// deterministic count are conditioned to `L^2` points first.
pub fn wp_per_unit_volume(
    spec: &ProcessSpec,
    sides: &[u32],
    p: f64,
    replicas: usize,
    grid_factor: usize,
    seed: RngSeed,
) -> Result<CostSeries> {
    if sides.len() < 2 || sides.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("box sides must be increasing, at least two".into()));
    }
    if replicas < 2 {
        return Err(Error::TooFewReplicas { needed: 2, got: replicas });
    }
    let mut means = Vec::new();
    let mut errs = Vec::new();
    for (s, &l) in sides.iter().enumerate() {
        let torus = TorusBox::integer(l)?;
        spec.validate(&torus)?;
        let costs: Vec<f64> = (0..replicas as u64)
            .into_par_iter()
            .map(|k| {
                let rs = seed.derive(s as u64).replica(k);
                let c = balanced_sample(spec, &torus, rs)?;
                Ok(wp_to_lebesgue(&c, grid_factor * l as usize, p, Method::ExactAssignment, 0.0)?.cost_per_volume)
            })
            .collect::<Result<_>>()?;
        means.push(mean(&costs));
        errs.push(stderr_of_mean(&costs));
    }
    let k = means.len();
    let change = (means[k - 1] - means[k - 2]).abs() / means[k - 2].abs().max(1e-300);
    let logs: Vec<f64> = sides.iter().map(|&l| f64::from(l).ln()).collect();
    let fit = linear_fit(&logs, &means);
    Ok(CostSeries {
        process: spec.label(),
        p,
        sides: sides.iter().map(|&l| f64::from(l)).collect(),
        mean: means,
        stderr: errs,
        verdict: if change < STABLE_CHANGE { Stability::Finite } else { Stability::Growing },
        log_slope: fit.slope,
        log_intercept: fit.intercept,
    })
}

/// A sample with exactly `L^2` points: fixed-count processes as drawn,
/// others redrawn until the count is close enough to condition onto `L^2`.
pub fn balanced_sample(spec: &ProcessSpec, torus: &TorusBox, seed: RngSeed) -> Result<PointConfiguration> {
    if spec.exact_count() {
        return spec.sample(torus, seed);
    }
    let target = torus.area() as u64;
    let mut last = None;
    for attempt in 0..64 {
        let s = seed.derive(0x7265_6472 + attempt);
        match condition_point_count(&spec.sample(torus, s)?, target, s) {
            Ok(c) => return Ok(c),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

impl CostSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "L,cost_per_volume,stderr")?;
        for k in 0..self.sides.len() {
            writeln!(w, "{},{:e},{:e}", self.sides[k], self.mean[k], self.stderr[k])?;
        }
        Ok(())
    }
}
