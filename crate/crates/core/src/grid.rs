//! Uniform periodic sample grids and their binary on-disk layout.
//!
//! Node `(i, j)` sits at `(i h, j h)` with `h = L / n`; values are stored
//! row-major with `i` the slow index. Integrals use the equal-weight rule
//! `int f ~ h^2 sum f`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::TorusBox;

pub const GRID_MAGIC: &[u8; 8] = b"HLGRID1\0";
pub const MIN_GRID: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldGrid {
    pub torus: TorusBox,
    pub n: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldGrid {
    pub torus: TorusBox,
    pub n: usize,
    pub values: Vec<[f64; 2]>,
}

fn check_n(n: usize) -> Result<()> {
    if n < MIN_GRID {
        return Err(Error::InvalidParameter(format!("grid needs at least {MIN_GRID} points per side, got {n}")));
    }
    Ok(())
}

/// Enforce `h <= eta / 4` for grids carrying an eta-truncated object.
pub fn check_resolution(torus: &TorusBox, n: usize, eta: f64) -> Result<()> {
    check_n(n)?;
    let spacing = torus.side() / n as f64;
    let limit = eta / 4.0;
    if spacing > limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse { spacing, limit });
    }
    Ok(())
}

impl ScalarFieldGrid {
    pub fn zeros(torus: TorusBox, n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Self { torus, n, values: vec![0.0; n * n] })
    }

    pub fn spacing(&self) -> f64 {
        self.torus.side() / self.n as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn integral(&self) -> f64 {
        let h = self.spacing();
        h * h * self.values.iter().sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        write_grid(w, self.n, self.torus.side(), self.values.iter().copied())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let (n, side, values) = read_grid(r, 1)?;
        Ok(Self { torus: TorusBox::new(side)?, n, values })
    }
}

impl VectorFieldGrid {
    pub fn zeros(torus: TorusBox, n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Self { torus, n, values: vec![[0.0; 2]; n * n] })
    }

    pub fn spacing(&self) -> f64 {
        self.torus.side() / self.n as f64
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.values[i * self.n + j]
    }

    /// `h^2 sum |v|^2`.
    pub fn squared_norm_integral(&self) -> f64 {
        let h = self.spacing();
        h * h * self.values.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { torus: self.torus, n: self.n, values: self.values.iter().map(|v| [a * v[0], a * v[1]]).collect() }
    }

    /// Interleaved `(x, y)` components per node.
    pub fn write_to(&self, w: impl Write) -> Result<()> {
        write_grid(w, self.n, self.torus.side(), self.values.iter().flat_map(|v| [v[0], v[1]]))
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let (n, side, flat) = read_grid(r, 2)?;
        let values = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Ok(Self { torus: TorusBox::new(side)?, n, values })
    }
}

fn write_grid(mut w: impl Write, n: usize, side: f64, values: impl Iterator<Item = f64>) -> Result<()> {
    let n32 = u32::try_from(n).map_err(|_| Error::InvalidParameter("grid too large".into()))?;
    w.write_all(GRID_MAGIC)?;
    w.write_all(&n32.to_le_bytes())?;
    w.write_all(&side.to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_grid(mut r: impl Read, components: usize) -> Result<(usize, f64, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != GRID_MAGIC {
        return Err(Error::Parse("bad grid magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let side = f64::from_le_bytes(b8);
    let mut values = Vec::with_capacity(n * n * components);
    for _ in 0..n * n * components {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok((n, side, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_layout() {
        let torus = TorusBox::new(2.5).unwrap();
        let mut g = ScalarFieldGrid::zeros(torus, 8).unwrap();
        g.values[9] = -1.25;
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"HLGRID1\0");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(buf[12..20].try_into().unwrap()), 2.5);
        assert_eq!(buf.len(), 20 + 64 * 8);
        assert_eq!(ScalarFieldGrid::read_from(&buf[..]).unwrap(), g);

        let mut v = VectorFieldGrid::zeros(torus, 8).unwrap();
        v.values[3] = [1.0, -2.0];
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert_eq!(VectorFieldGrid::read_from(&buf[..]).unwrap(), v);
    }

    #[test]
    fn resolution_rule() {
        let torus = TorusBox::new(8.0).unwrap();
        assert!(check_resolution(&torus, 32, 1.0).is_ok());
        assert!(matches!(check_resolution(&torus, 16, 1.0), Err(Error::GridTooCoarse { .. })));
        assert!(ScalarFieldGrid::zeros(torus, 4).is_err());
    }
}
