//! Line-oriented text format for point configurations.
//!
//! ```text
//! L=<side> count=<total count with multiplicity>
//! <x> <y> <multiplicity>
//! ...
//! ```
//! Coordinates are written with 17 significant digits so they round-trip exactly.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointConfiguration, TorusBox};

pub fn write_config(config: &PointConfiguration, mut w: impl Write) -> Result<()> {
    writeln!(w, "L={} count={}", fmt17(config.torus.side()), config.total_count())?;
    for (p, m) in config.iter() {
        writeln!(w, "{} {} {}", fmt17(p.x), fmt17(p.y), m)?;
    }
    Ok(())
}

pub fn config_to_string(config: &PointConfiguration) -> String {
    let mut buf = Vec::new();
    write_config(config, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

pub fn read_config(r: impl BufRead) -> Result<PointConfiguration> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))??;
    let mut side = None;
    let mut count = None;
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("L=") {
            side = Some(v.parse::<f64>().map_err(|e| Error::Parse(format!("L: {e}")))?);
        } else if let Some(v) = tok.strip_prefix("count=") {
            count = Some(v.parse::<u64>().map_err(|e| Error::Parse(format!("count: {e}")))?);
        }
    }
    let side = side.ok_or_else(|| Error::Parse("missing L= in header".into()))?;
    let count = count.ok_or_else(|| Error::Parse("missing count= in header".into()))?;
    let torus = TorusBox::new(side)?;
    let mut points = Vec::new();
    let mut mult = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected `x y multiplicity`", lineno + 2)));
        }
        let x: f64 = f[0].parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        let y: f64 = f[1].parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        let m: u32 = f[2].parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        if !(0.0..side).contains(&x) || !(0.0..side).contains(&y) {
            return Err(Error::Parse(format!("line {}: position outside [0, L)", lineno + 2)));
        }
        points.push(Point::new(x, y));
        mult.push(m);
    }
    let config = PointConfiguration::with_multiplicities(torus, points, mult)?;
    if config.total_count() != count {
        return Err(Error::Parse(format!("header count {count} but body holds {}", config.total_count())));
    }
    Ok(config)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
