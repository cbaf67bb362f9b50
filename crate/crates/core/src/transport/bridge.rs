//! Both directions between transport costs and field energies.

use serde::{Deserialize, Serialize};

use super::{Instance, Method, SpreadInfo, TransportResult};
use crate::coulomb::{energy_per_volume, spread_charges, TruncatedField};
use crate::error::{Error, Result};
use crate::geometry::{Point, PointConfiguration};
use crate::grid::VectorFieldGrid;

/// Sub-atoms per point when a spread configuration is discretized.
pub const SPREAD_SUBATOMS: u32 = 16;
/// Multiplicative slack on both bridge inequalities.
pub const BRIDGE_SLACK: f64 = 1.05;
/// Cells per unit length for the transport measured by the forward bridge.
pub const FORWARD_GRID_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBound {
    pub energy: f64,
    pub eta: f64,
    pub bound: f64,
    pub measured: f64,
    pub holds: bool,
}

/// Transport bound implied by a compatible field: `(4/c_d^2) * energy + eta^2`,
/// compared with the measured `W_2^2` per volume.
pub fn transport_bound_from_field(field: &TruncatedField, config: &PointConfiguration) -> Result<FieldBound> {
    config.check_neutral()?;
    if crate::coulomb::config_hash(config) != field.config_hash {
        return Err(Error::InvalidParameter("field was solved for a different configuration".into()));
    }
    let energy = energy_per_volume(field);
    let bound = 4.0 / (field.c_d * field.c_d) * energy + field.eta * field.eta;
    let l = config.torus.integer_side()? as usize;
    let measured = super::w2_to_lebesgue(config, FORWARD_GRID_FACTOR * l, Method::ExactAssignment, 0.0)?.cost_per_volume;
    Ok(FieldBound { energy, eta: field.eta, bound, measured, holds: measured <= bound * BRIDGE_SLACK })
}

/// Sunflower points filling the unit disk with equal area per point.
fn sunflower(k: u32) -> Vec<[f64; 2]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..k)
        .map(|i| {
            let r = ((f64::from(i) + 0.5) / f64::from(k)).sqrt();
            let t = golden * f64::from(i);
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

/// Optimal `W_2` transport of the eta-spread configuration to Lebesgue, with
/// each disk replaced by equal-mass sub-atoms. `grid_m / L` must be a
/// multiple of 4 so every sub-atom owns a whole number of cells.
pub fn w2_spread_to_lebesgue(config: &PointConfiguration, eta: f64, grid_m: usize) -> Result<TransportResult> {
    if !(eta > 0.0) || 2.0 * eta >= config.torus.side() {
        return Err(Error::InvalidParameter(format!("eta = {eta} out of range")));
    }
    let mut inst = Instance::from_config(config, grid_m, 2.0)?;
    let l = config.torus.integer_side()? as usize;
    let per = ((grid_m / l) * (grid_m / l)) as u32;
    if per % SPREAD_SUBATOMS != 0 {
        return Err(Error::InvalidParameter(format!("(grid_m / L)^2 = {per} is not a multiple of {SPREAD_SUBATOMS}")));
    }
    let disk = sunflower(SPREAD_SUBATOMS);
    let mut atoms = Vec::new();
    let mut caps = Vec::new();
    for (p, m) in config.iter() {
        for u in &disk {
            let q = config.torus.wrap(Point::new(p.x + eta * u[0], p.y + eta * u[1]));
            atoms.push([q.x, q.y]);
            caps.push(m * per / SPREAD_SUBATOMS);
        }
    }
    inst.atoms = atoms;
    inst.caps = caps;
    let mut res = inst.solve_exact()?;
    let n = (8.0 * config.torus.side() / eta).ceil().max(64.0) as usize;
    let density = spread_charges(config, eta, n.next_power_of_two())?;
    res.spread = Some(SpreadInfo { eta, max_density: density.max() });
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    /// Cell-centered, time-integrated momentum with the sign of a field:
    /// `-div(flux) = m - Leb`.
    pub flux: VectorFieldGrid,
    /// `∫|flux|^2 / L^2`.
    pub energy: f64,
    pub rho_bar: f64,
    /// `rho_bar * W_2^2` per volume.
    pub rhs: f64,
    pub div_residual: f64,
    pub tol_div: f64,
    pub holds: bool,
}

/// Momentum of the displacement interpolation of a spread coupling. Each
/// parcel moves in a straight line along its periodic geodesic; cell
/// momentum uses the exact time spent per cell and face fluxes count exact
/// crossings, so the discrete divergence matches source minus target.
pub fn field_from_coupling(result: &TransportResult, grid_n: usize) -> Result<FluxField> {
    let coupling = result.coupling.as_ref().ok_or(Error::MissingCoupling)?;
    if result.p != 2.0 {
        return Err(Error::InvalidParameter("the reverse bridge needs a quadratic-cost coupling".into()));
    }
    let spread = result.spread.ok_or(Error::DensityUnbounded { density: f64::INFINITY, bound: f64::INFINITY })?;
    let rho_bar = spread.max_density.max(1.0);
    let l = result.side;
    let torus = crate::geometry::TorusBox::new(l)?;
    let mut out = VectorFieldGrid::zeros(torus, grid_n)?;
    let n = grid_n;
    let hh = l / n as f64;
    let hm = l / result.grid_m as f64;
    let mut fx = vec![0.0; n * n];
    let mut fy = vec![0.0; n * n];
    let mut net = vec![0.0; n * n];
    let idx = |i: i64, j: i64| (i.rem_euclid(n as i64) * n as i64 + j.rem_euclid(n as i64)) as usize;
    for (row, a) in coupling.iter().zip(&result.atoms) {
        let x = Point::from(*a);
        for c in row {
            let y = Point::new((c.cell[0] as f64 + 0.5) * hm, (c.cell[1] as f64 + 0.5) * hm);
            let d = torus.delta(x, y);
            let w = c.mass;
            let (mut i, mut j) = ((x.x / hh).floor() as i64, (x.y / hh).floor() as i64);
            net[idx(i, j)] += w;
            let step = |dv: f64, pos: f64, k: i64| -> (f64, f64) {
                if dv > 0.0 {
                    (((k + 1) as f64 * hh - pos) / dv, hh / dv)
                } else if dv < 0.0 {
                    ((k as f64 * hh - pos) / dv, -hh / dv)
                } else {
                    (f64::INFINITY, f64::INFINITY)
                }
            };
            let (mut tx, dtx) = step(d[0], x.x, i);
            let (mut ty, dty) = step(d[1], x.y, j);
            let mut t = 0.0;
            loop {
                let next = tx.min(ty).min(1.0);
                let cell = idx(i, j);
                out.values[cell][0] += w * d[0] * (next - t);
                out.values[cell][1] += w * d[1] * (next - t);
                t = next;
                if t >= 1.0 {
                    break;
                }
                if tx <= ty {
                    if d[0] > 0.0 {
                        fx[idx(i + 1, j)] += w;
                        i += 1;
                    } else {
                        fx[idx(i, j)] -= w;
                        i -= 1;
                    }
                    tx += dtx;
                } else {
                    if d[1] > 0.0 {
                        fy[idx(i, j + 1)] += w;
                        j += 1;
                    } else {
                        fy[idx(i, j)] -= w;
                        j -= 1;
                    }
                    ty += dty;
                }
            }
            net[idx(i, j)] -= w;
        }
    }
    // net outflow of face fluxes against source minus target, as densities
    let mut div_residual = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            let c = idx(i, j);
            let div = fx[idx(i + 1, j)] - fx[c] + fy[idx(i, j + 1)] - fy[c];
            div_residual = div_residual.max((div - net[c]).abs() / (hh * hh));
            scale = scale.max(net[c].abs() / (hh * hh));
        }
    }
    let mut energy = 0.0;
    for v in &mut out.values {
        v[0] /= -hh * hh;
        v[1] /= -hh * hh;
        energy += (v[0] * v[0] + v[1] * v[1]) * hh * hh;
    }
    energy /= l * l;
    let rhs = rho_bar * result.cost_per_volume;
    let tol_div = 1e-6 * scale.max(1.0);
    Ok(FluxField { flux: out, energy, rho_bar, rhs, div_residual, tol_div, holds: energy <= rhs * BRIDGE_SLACK && div_residual <= tol_div })
}
