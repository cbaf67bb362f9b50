//! Experiment configuration, reports, and the two reproduction suites.

mod chain;
mod counter;
mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::ProcessSpec;
use crate::geometry::TorusBox;
use crate::stats::Verdict;
use crate::DisplacementLaw;

pub use chain::run_chain_experiment;
pub use counter::run_counterexample_experiment;
pub use plot::{emit_plot_data, render_plot_data, PlotKind};

const DEFAULT_THRESHOLDS: &str = include_str!("../../defaults/thresholds.json");

/// Pass/fail thresholds. Defaults come from the versioned file shipped with
/// the crate; a config may override any of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub version: u32,
    pub stable_change: f64,
    pub sigma_decay_slope: f64,
    pub collapse_ratio_band: f64,
    pub collapse_cost_factor: f64,
    pub binomial_band: f64,
    pub akt_min_r_squared: f64,
    pub mixture_stable_exponent: f64,
    pub local_energy_band: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        // the field-level default would recurse, so parse without it
        #[derive(Deserialize)]
        struct Raw {
            version: u32,
            stable_change: f64,
            sigma_decay_slope: f64,
            collapse_ratio_band: f64,
            collapse_cost_factor: f64,
            binomial_band: f64,
            akt_min_r_squared: f64,
            mixture_stable_exponent: f64,
            local_energy_band: f64,
        }
        let r: Raw = serde_json::from_str(DEFAULT_THRESHOLDS).expect("bundled thresholds parse");
        Self {
            version: r.version,
            stable_change: r.stable_change,
            sigma_decay_slope: r.sigma_decay_slope,
            collapse_ratio_band: r.collapse_ratio_band,
            collapse_cost_factor: r.collapse_cost_factor,
            binomial_band: r.binomial_band,
            akt_min_r_squared: r.akt_min_r_squared,
            mixture_stable_exponent: r.mixture_stable_exponent,
            local_energy_band: r.local_energy_band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    /// Smallest field grid; the solver refines to `4L/eta` when finer.
    pub field_min_n: usize,
    /// Transport cells per unit length.
    pub transport_factor: usize,
    /// Largest frequency of the spectral estimates.
    pub omega_max: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { field_min_n: 64, transport_factor: 2, omega_max: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Replicas {
    pub variance: usize,
    pub centers: usize,
    pub spectrum: usize,
    pub coulomb: usize,
    pub transport: usize,
}

impl Default for Replicas {
    fn default() -> Self {
        Self { variance: 200, centers: 16, spectrum: 50, coulomb: 8, transport: 8 }
    }
}

/// Block sizes of the counter-example suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterParams {
    pub collapse_blocks: Vec<u32>,
    pub local_energy_blocks: Vec<u32>,
    pub binomial_variance_blocks: Vec<u32>,
    pub w1_blocks: Vec<u32>,
    pub akt_blocks: Vec<u32>,
}

impl Default for CounterParams {
    fn default() -> Self {
        Self {
            collapse_blocks: vec![4, 8, 16],
            local_energy_blocks: vec![10, 20],
            binomial_variance_blocks: vec![8, 16],
            w1_blocks: vec![8, 16, 32],
            akt_blocks: vec![8, 16, 32, 64],
        }
    }
}

pub fn default_suite() -> Vec<ProcessSpec> {
    vec![
        ProcessSpec::Poisson { intensity: 1.0 },
        ProcessSpec::Lattice,
        ProcessSpec::Perturbed { law: DisplacementLaw::IsotropicGaussian { std: 0.3 } },
        ProcessSpec::Collapse { n: 8, jitter: 0.0 },
        ProcessSpec::Binomial { n: 8 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub suite: Vec<ProcessSpec>,
    /// Increasing box sides for the stability columns.
    pub boxes: Vec<u32>,
    /// Radii of the variance curves, measured on the largest box; the
    /// powers of two among them feed the dyadic series.
    pub radii: Vec<f64>,
    /// Box for the SC flag. Dyadic shells only resolve structure below
    /// `|omega| = 1/N` when the box is many block sizes wide.
    pub sc_side: u32,
    pub eta: f64,
    pub grid: GridParams,
    pub replicas: Replicas,
    pub seed: u64,
    pub outputs: Option<PathBuf>,
    pub thresholds: Thresholds,
    /// Truncation depths `J` of the collapse-block mixture; empty skips it.
    pub mixture_truncations: Vec<u32>,
    pub counter: CounterParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "hyperlab".into(),
            suite: default_suite(),
            boxes: vec![16, 32, 64],
            radii: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            sc_side: 256,
            eta: 1.0,
            grid: GridParams::default(),
            replicas: Replicas::default(),
            seed: 1,
            outputs: None,
            thresholds: Thresholds::default(),
            mixture_truncations: vec![1, 2, 3, 4, 5],
            counter: CounterParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Check every precondition the chain suite will hit, before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.suite.is_empty() {
            return Err(Error::InvalidParameter("suite is empty".into()));
        }
        if self.boxes.len() < 2 || self.boxes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("boxes must be increasing, at least two".into()));
        }
        if !(self.eta > 0.0) || 2.0 * self.eta >= f64::from(self.boxes[0]) {
            return Err(Error::InvalidParameter(format!("eta = {} out of range", self.eta)));
        }
        let largest = f64::from(*self.boxes.last().unwrap());
        for &r in &self.radii {
            crate::geometry::check_ball_radius(r, &TorusBox::new(largest)?)?;
        }
        if !self.radii.iter().any(|&r| r == 1.0) {
            return Err(Error::MissingDyadicRadii(1.0));
        }
        let rep = &self.replicas;
        if rep.variance < crate::variance::MIN_REPLICAS {
            return Err(Error::TooFewReplicas { needed: crate::variance::MIN_REPLICAS, got: rep.variance });
        }
        if rep.spectrum < crate::spectral::MIN_SPECTRAL_REPLICAS {
            return Err(Error::TooFewReplicas { needed: crate::spectral::MIN_SPECTRAL_REPLICAS, got: rep.spectrum });
        }
        if rep.coulomb == 0 || rep.transport < 2 || rep.centers == 0 {
            return Err(Error::InvalidParameter("coulomb, transport and center counts must be positive (transport at least 2)".into()));
        }
        if self.grid.transport_factor < 2 {
            return Err(Error::InvalidParameter("transport_factor must be at least 2".into()));
        }
        if self.sc_side < *self.boxes.last().unwrap() {
            return Err(Error::InvalidParameter("sc_side must be at least the largest box".into()));
        }
        for &l in self.boxes.iter().chain([&self.sc_side]) {
            let t = TorusBox::integer(l)?;
            for s in &self.suite {
                s.validate(&t)?;
            }
        }
        for &j in &self.mixture_truncations {
            if j == 0 || j > 8 {
                return Err(Error::InvalidParameter(format!("mixture truncation {j} outside 1..=8")));
            }
        }
        Ok(())
    }

    /// Preconditions of the counter-example suite.
    pub fn validate_counter(&self) -> Result<()> {
        let c = &self.counter;
        for (name, v) in [
            ("collapse_blocks", &c.collapse_blocks),
            ("local_energy_blocks", &c.local_energy_blocks),
            ("binomial_variance_blocks", &c.binomial_variance_blocks),
            ("w1_blocks", &c.w1_blocks),
            ("akt_blocks", &c.akt_blocks),
        ] {
            if v.len() < 2 || v.windows(2).any(|w| w[0] >= w[1]) || v[0] < 2 {
                return Err(Error::InvalidParameter(format!("{name} must be increasing block sizes >= 2, at least two")));
            }
        }
        if c.local_energy_blocks[0] < 10 {
            return Err(Error::PreconditionNotMet("local energy radii must be at least 10".into()));
        }
        if !(self.eta > 0.0) || 2.0 * self.eta >= 8.0 {
            return Err(Error::InvalidParameter(format!("eta = {} out of range", self.eta)));
        }
        if self.replicas.variance < crate::variance::MIN_REPLICAS || self.replicas.transport < 2 {
            return Err(Error::TooFewReplicas { needed: crate::variance::MIN_REPLICAS, got: self.replicas.variance });
        }
        Ok(())
    }
}

/// A number with its standard error, or tagged deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stderr: Option<f64>,
    pub deterministic: bool,
}

impl Quantity {
    pub fn estimate(value: f64, stderr: f64) -> Self {
        Self { value, stderr: Some(stderr), deterministic: false }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, stderr: None, deterministic: true }
    }
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.stderr {
            Some(se) => write!(f, "{:.4} ± {:.2e}", self.value, se),
            None => write!(f, "{:.4} (det)", self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub generator: String,
    pub side: f64,
    pub r: f64,
    pub sigma: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScRow {
    pub generator: String,
    pub side: f64,
    pub value: Quantity,
    pub divergence_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub generator: String,
    pub side: f64,
    pub omega: f64,
    pub s: Quantity,
    pub count: usize,
}

/// Energy per volume of one family member; `n` is the block size when the
/// family is indexed by one, and `side` is 0 for values assembled from
/// several boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub family: String,
    pub n: Option<u32>,
    pub side: f64,
    pub energy: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub family: String,
    pub n: Option<u32>,
    pub side: f64,
    pub p: f64,
    pub cost: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub family: String,
    pub n: u32,
    pub r: f64,
    pub variance: Quantity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Stable,
    Growing,
    Decaying,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub generator: String,
    pub hustar: Verdict,
    pub sc_flag: bool,
    pub energy: Trend,
    pub w2: Trend,
    pub sigma: Trend,
}

/// A fitted constant with an interval, the fit residual, and the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedConstant {
    pub name: String,
    pub value: f64,
    /// About two standard errors; `None` when there are too few points.
    pub interval: Option<[f64; 2]>,
    pub residual: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything a run produces except timing, which lives in `RunMetadata`
/// so that repeated runs give byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub thresholds_version: u32,
    pub sigma: Vec<SigmaRow>,
    pub variances: Vec<VarianceRow>,
    pub sc: Vec<ScRow>,
    pub spectra: Vec<SpectrumRow>,
    pub energies: Vec<EnergyRow>,
    pub costs: Vec<CostRow>,
    pub chain: Vec<ChainRow>,
    pub fits: Vec<FittedConstant>,
    pub checks: Vec<Check>,
    /// Steps that failed; the rest of the report is still filled in.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub seed: u64,
    pub version: String,
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig, kind: &str) -> Self {
        Self {
            name: config.name.clone(),
            kind: kind.into(),
            seed: config.seed,
            thresholds_version: config.thresholds.version,
            ..Default::default()
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    /// Run a step, recording its error instead of aborting the report.
    fn step<T>(&mut self, what: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                log::error!("{what}: {e}");
                self.errors.push(format!("{what}: {e}"));
                None
            }
        }
    }

    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} ({})\n\nseed {}, thresholds v{}\n", self.name, self.kind, self.seed, self.thresholds_version);
        if !self.chain.is_empty() {
            let _ = writeln!(s, "## Chain\n\n| generator | HU★ | SC flag | energy | W₂ | σ(r) |\n|---|---|---|---|---|---|");
            for r in &self.chain {
                let _ = writeln!(s, "| {} | {} | {} | {:?} | {:?} | {:?} |", r.generator, r.hustar, r.sc_flag, r.energy, r.w2, r.sigma);
            }
            s.push('\n');
        }
        if !self.energies.is_empty() {
            let _ = writeln!(s, "## Energies per volume\n\n| family | N | L | energy |\n|---|---|---|---|");
            for r in &self.energies {
                let _ = writeln!(s, "| {} | {} | {} | {} |", r.family, fmt_n(r.n), r.side, r.energy);
            }
            s.push('\n');
        }
        if !self.costs.is_empty() {
            let _ = writeln!(s, "## Transport costs per volume\n\n| family | N | L | p | cost |\n|---|---|---|---|---|");
            for r in &self.costs {
                let _ = writeln!(s, "| {} | {} | {} | {} | {} |", r.family, fmt_n(r.n), r.side, r.p, r.cost);
            }
            s.push('\n');
        }
        if !self.sc.is_empty() {
            let _ = writeln!(s, "## SC integrals\n\n| generator | L | value | flag |\n|---|---|---|---|");
            for r in &self.sc {
                let _ = writeln!(s, "| {} | {} | {} | {} |", r.generator, r.side, r.value, r.divergence_flag);
            }
            s.push('\n');
        }
        if !self.fits.is_empty() {
            let _ = writeln!(s, "## Fits\n\n| constant | value | interval | residual |\n|---|---|---|---|");
            for f in &self.fits {
                let iv = f.interval.map_or_else(|| "-".into(), |[a, b]| format!("[{a:.4}, {b:.4}]"));
                let _ = writeln!(s, "| {} | {:.4} | {iv} | {:.3e} |", f.name, f.value, f.residual);
            }
            s.push('\n');
        }
        let _ = writeln!(s, "## Checks\n");
        for c in &self.checks {
            let _ = writeln!(s, "- [{}] {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
        }
        for e in &self.errors {
            let _ = writeln!(s, "- [ERROR] {e}");
        }
        s
    }

    /// Write `<kind>.json` and `<kind>.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.json", self.kind)), self.to_json()?)?;
        std::fs::write(dir.join(format!("{}.md", self.kind)), self.to_markdown())?;
        Ok(())
    }
}

fn fmt_n(n: Option<u32>) -> String {
    n.map_or_else(|| "-".into(), |n| n.to_string())
}

/// Relative change over the last two entries.
fn last_change(xs: &[f64]) -> f64 {
    let k = xs.len();
    (xs[k - 1] - xs[k - 2]).abs() / xs[k - 2].abs().max(1e-300)
}
