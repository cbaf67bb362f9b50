use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic square box `[0, L)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusBox {
    side: f64,
}

impl TorusBox {
    pub fn new(side: f64) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidParameter(format!("box side must be positive, got {side}")));
        }
        Ok(Self { side })
    }

    /// Box whose side is a positive integer, as required by exact-count operations.
    pub fn integer(side: u32) -> Result<Self> {
        if side == 0 {
            return Err(Error::NonIntegerSide(0.0));
        }
        Self::new(f64::from(side))
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    /// Integer side length, if the side is integral.
    pub fn integer_side(&self) -> Result<u32> {
        let r = self.side.round();
        if (self.side - r).abs() > 1e-12 || r < 1.0 || r > f64::from(u32::MAX) {
            return Err(Error::NonIntegerSide(self.side));
        }
        Ok(r as u32)
    }

    pub fn wrap_coord(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.side);
        // rem_euclid can round up to exactly `side` for tiny negative inputs
        if w >= self.side {
            0.0
        } else {
            w
        }
    }

    pub fn wrap(&self, p: Point) -> Point {
        Point::new(self.wrap_coord(p.x), self.wrap_coord(p.y))
    }

    /// Minimal-image displacement `y - x`, each component in `[-L/2, L/2)`.
    pub fn delta(&self, x: Point, y: Point) -> [f64; 2] {
        [self.min_image(y.x - x.x), self.min_image(y.y - x.y)]
    }

    pub fn min_image(&self, d: f64) -> f64 {
        let l = self.side;
        let mut d = d - l * (d / l).round();
        if d >= 0.5 * l {
            d -= l;
        } else if d < -0.5 * l {
            d += l;
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

/// Distance on the torus: `min_k |x - y + L k|` over `k` in `Z^2`.
pub fn periodic_distance(x: Point, y: Point, b: &TorusBox) -> f64 {
    let d = b.delta(x, y);
    d[0].hypot(d[1])
}

/// A finite multiset of points on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub torus: TorusBox,
    pub points: Vec<Point>,
    pub multiplicities: Vec<u32>,
}

impl PointConfiguration {
    pub fn empty(torus: TorusBox) -> Self {
        Self { torus, points: Vec::new(), multiplicities: Vec::new() }
    }

    /// Simple configuration (all multiplicities 1); positions are wrapped into the box.
    pub fn from_points(torus: TorusBox, points: impl IntoIterator<Item = Point>) -> Self {
        let points: Vec<Point> = points.into_iter().map(|p| torus.wrap(p)).collect();
        let multiplicities = vec![1; points.len()];
        Self { torus, points, multiplicities }
    }

    pub fn with_multiplicities(torus: TorusBox, points: Vec<Point>, multiplicities: Vec<u32>) -> Result<Self> {
        if points.len() != multiplicities.len() {
            return Err(Error::InvalidParameter("points and multiplicities differ in length".into()));
        }
        if multiplicities.iter().any(|&m| m == 0) {
            return Err(Error::InvalidParameter("multiplicities must be positive".into()));
        }
        let points = points.into_iter().map(|p| torus.wrap(p)).collect();
        Ok(Self { torus, points, multiplicities })
    }

    pub fn push(&mut self, p: Point, multiplicity: u32) {
        debug_assert!(multiplicity > 0);
        self.points.push(self.torus.wrap(p));
        self.multiplicities.push(multiplicity);
    }

    /// Number of distinct locations.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.multiplicities.iter().map(|&m| u64::from(m)).sum()
    }

    pub fn max_multiplicity(&self) -> u32 {
        self.multiplicities.iter().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, u32)> + '_ {
        self.points.iter().copied().zip(self.multiplicities.iter().copied())
    }

    /// Torus translation by `t`.
    pub fn shifted(&self, t: [f64; 2]) -> Self {
        let points = self.points.iter().map(|p| self.torus.wrap(Point::new(p.x + t[0], p.y + t[1]))).collect();
        Self { torus: self.torus, points, multiplicities: self.multiplicities.clone() }
    }

    /// Same positions rescaled by `a` in a box of side `a L`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        let torus = TorusBox::new(self.torus.side() * a)?;
        let points = self.points.iter().map(|p| torus.wrap(Point::new(p.x * a, p.y * a))).collect();
        Ok(Self { torus, points, multiplicities: self.multiplicities.clone() })
    }

    /// Require `total_count == L^2`.
    pub fn check_neutral(&self) -> Result<()> {
        let area = self.torus.area();
        if (self.total_count() as f64 - area).abs() > 1e-9 {
            return Err(Error::NonNeutral { count: self.total_count(), area });
        }
        Ok(())
    }

    pub fn index(&self, cell: f64) -> CellIndex<'_> {
        CellIndex::new(self, cell)
    }
}

/// Largest radius for which a ball embeds in the torus without self-overlap.
pub fn check_ball_radius(r: f64, torus: &TorusBox) -> Result<()> {
    let limit = 0.5 * torus.side();
    if !(r >= 0.0) || r >= limit {
        return Err(Error::RadiusTooLarge { r, side: torus.side(), limit });
    }
    Ok(())
}

/// Number of points (with multiplicity) within periodic distance `r` of `center`.
pub fn count_in_ball(config: &PointConfiguration, center: Point, r: f64) -> Result<u64> {
    check_ball_radius(r, &config.torus)?;
    let r2 = r * r;
    Ok(config
        .iter()
        .filter(|(p, _)| {
            let d = config.torus.delta(center, *p);
            d[0] * d[0] + d[1] * d[1] <= r2
        })
        .map(|(_, m)| u64::from(m))
        .sum())
}

/// Uniform bucket grid over the torus for neighbourhood queries.
pub struct CellIndex<'a> {
    config: &'a PointConfiguration,
    cells_per_side: usize,
    cell_size: f64,
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> CellIndex<'a> {
    pub fn new(config: &'a PointConfiguration, cell: f64) -> Self {
        let side = config.torus.side();
        let cells_per_side = ((side / cell.max(1e-9)).floor() as usize).clamp(1, 1024);
        let cell_size = side / cells_per_side as f64;
        let ncell = cells_per_side * cells_per_side;
        let cell_of = |p: &Point| {
            let i = ((p.x / cell_size) as usize).min(cells_per_side - 1);
            let j = ((p.y / cell_size) as usize).min(cells_per_side - 1);
            i * cells_per_side + j
        };
        let mut counts = vec![0usize; ncell + 1];
        for p in &config.points {
            counts[cell_of(p) + 1] += 1;
        }
        for c in 0..ncell {
            counts[c + 1] += counts[c];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0usize; config.points.len()];
        for (k, p) in config.points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c]] = k;
            fill[c] += 1;
        }
        Self { config, cells_per_side, cell_size, starts, items }
    }

    /// Calls `f(index, displacement from center)` for every stored location within `r` of `center`.
    pub fn for_each_within(&self, center: Point, r: f64, mut f: impl FnMut(usize, [f64; 2])) {
        let n = self.cells_per_side as i64;
        let reach = (r / self.cell_size).ceil() as i64;
        let ci = (center.x / self.cell_size).floor() as i64;
        let cj = (center.y / self.cell_size).floor() as i64;
        let r2 = r * r;
        let torus = &self.config.torus;
        let visit = |i: i64, j: i64, f: &mut dyn FnMut(usize, [f64; 2])| {
            let c = (i.rem_euclid(n) * n + j.rem_euclid(n)) as usize;
            for &k in &self.items[self.starts[c]..self.starts[c + 1]] {
                let d = torus.delta(center, self.config.points[k]);
                if d[0] * d[0] + d[1] * d[1] <= r2 {
                    f(k, d);
                }
            }
        };
        if 2 * reach + 1 >= n {
            for i in 0..n {
                for j in 0..n {
                    visit(i, j, &mut f);
                }
            }
        } else {
            for i in ci - reach..=ci + reach {
                for j in cj - reach..=cj + reach {
                    visit(i, j, &mut f);
                }
            }
        }
    }

    pub fn count_within(&self, center: Point, r: f64) -> u64 {
        let mut total = 0u64;
        self.for_each_within(center, r, |k, _| total += u64::from(self.config.multiplicities[k]));
        total
    }
}
