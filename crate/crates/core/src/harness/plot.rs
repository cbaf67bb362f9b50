use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentReport, Quantity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    SigmaVsR,
    EnergyVsN,
    CostVsLogN,
    Spectrum,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [PlotKind::SigmaVsR, PlotKind::EnergyVsN, PlotKind::CostVsLogN, PlotKind::Spectrum];

    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::SigmaVsR => "sigma_vs_r.csv",
            PlotKind::EnergyVsN => "energy_vs_N.csv",
            PlotKind::CostVsLogN => "cost_vs_logN.csv",
            PlotKind::Spectrum => "spectrum.csv",
        }
    }
}

fn se(q: &Quantity) -> String {
    q.stderr.map_or_else(String::new, |s| format!("{s:e}"))
}

/// Tidy CSV for one figure kind, in report order. Columns:
/// - sigma_vs_r: generator,L,r,sigma,stderr
/// - energy_vs_N: family,N,L,energy,stderr
/// - cost_vs_logN: family,p,N,logN,L,cost,stderr
/// - spectrum: generator,L,omega,S_mean,S_stderr,count
///
/// An empty stderr field marks a deterministic value.
pub fn render_plot_data(report: &ExperimentReport, kind: PlotKind) -> Result<String> {
    let mut s = String::new();
    let empty = |what: &str| Error::IncompleteReport(what.into());
    match kind {
        PlotKind::SigmaVsR => {
            if report.sigma.is_empty() {
                return Err(empty("sigma"));
            }
            s.push_str("generator,L,r,sigma,stderr\n");
            for r in &report.sigma {
                let _ = writeln!(s, "{},{},{},{:e},{}", r.generator, r.side, r.r, r.sigma.value, se(&r.sigma));
            }
        }
        PlotKind::EnergyVsN => {
            let rows: Vec<_> = report.energies.iter().filter(|r| r.n.is_some()).collect();
            if rows.is_empty() {
                return Err(empty("energies"));
            }
            s.push_str("family,N,L,energy,stderr\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{},{:e},{}", r.family, r.n.unwrap(), r.side, r.energy.value, se(&r.energy));
            }
        }
        PlotKind::CostVsLogN => {
            let rows: Vec<_> = report.costs.iter().filter(|r| r.n.is_some()).collect();
            if rows.is_empty() {
                return Err(empty("costs"));
            }
            s.push_str("family,p,N,logN,L,cost,stderr\n");
            for r in rows {
                let n = r.n.unwrap();
                let _ = writeln!(s, "{},{},{},{:e},{},{:e},{}", r.family, r.p, n, f64::from(n).ln(), r.side, r.cost.value, se(&r.cost));
            }
        }
        PlotKind::Spectrum => {
            if report.spectra.is_empty() {
                return Err(empty("spectra"));
            }
            s.push_str("generator,L,omega,S_mean,S_stderr,count\n");
            for r in &report.spectra {
                let _ = writeln!(s, "{},{},{:e},{:e},{},{}", r.generator, r.side, r.omega, r.s.value, se(&r.s), r.count);
            }
        }
    }
    Ok(s)
}

/// Write the CSV for `kind` into `dir`; nothing is written when the section is empty.
pub fn emit_plot_data(report: &ExperimentReport, kind: PlotKind, dir: &Path) -> Result<PathBuf> {
    let text = render_plot_data(report, kind)?;
    std::fs::create_dir_all(dir)?;
    let path = dir.join(kind.file_name());
    std::fs::write(&path, text)?;
    Ok(path)
}
