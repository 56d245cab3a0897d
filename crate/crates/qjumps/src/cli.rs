//! Run configuration, dispatch of the computations and their CSV/JSON
//! artifacts.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! units = "trap_frequency"
//!
//! [params]            # all required, rates and frequencies in units of nu
//! gamma1 = 12.0
//! gamma2 = 0.015
//! omega1 = 2.5
//! omega2 = 0.5
//! delta1 = 6.0
//! delta2 = 0.87
//! eta1 = 0.05
//! eta2 = 0.05
//! phi1 = 0.349
//! phi2 = 0.0
//! psi = 2.513
//! n_fock = 15
//!
//! [waiting_time]      # optional sections, defaults shown
//! t_min = 0.001
//! t_max = 2666.7      # default 40 / gamma2
//! points = 800
//! split_rule = "crossover"   # or "geometric_mean"
//!
//! [spectrum]
//! transition = 1
//! min = -1.5
//! max = 1.5
//! points = 3001
//! pole_order = "lowest"      # or "second_order"
//! n_bar = 0.29               # default: from the cooling rates
//!
//! [cooling_scan]
//! parameter = "delta2"
//! start = 0.5
//! stop = 1.3
//! points = 81
//!
//! [trajectory]
//! duration = 750000.0
//! seed = 1
//!
//! [tolerances]
//! trace = 1e-10
//! eigenvalue = 1e-10
//! biorthonormality = 1e-10
//! quadrature = 1e-12
//! detailed_balance = 1e-12
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cooling::{cooling_rates, rate_equation_distribution, scan_mean_phonon};
use crate::error::{Error, Result};
use crate::internal::{internal_eigensystem, internal_liouvillian, saturation, InternalMode};
use crate::jumps::{
    fit_biexponential, ks_distance, log_grid, perturbative_waiting_time, post_detection_state, simulate_trajectory,
    waiting_time_with, EffectiveHamiltonian, PeriodKind, SplitRule,
};
use crate::lamb_dicke::MotionalState;
use crate::liouville::{build_liouvillian, second_moment, SystemParams, DEFAULT_QUAD_ORDER};
use crate::spectrum::{
    central_peak_transition1, transition2_signals, zero_order_spectrum, Component, DipoleOperator, PoleOrder,
    SpectralEngine,
};

pub const UNITS: &str = "trap_frequency";

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "QJUMPS_THREADS";

const PARAM_FIELDS: [&str; 12] = [
    "gamma1", "gamma2", "omega1", "omega2", "delta1", "delta2", "eta1", "eta2", "phi1", "phi2", "psi", "n_fock",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaitingTimeOptions {
    pub t_min: f64,
    pub t_max: Option<f64>,
    pub points: usize,
    pub split_rule: SplitRule,
}

impl Default for WaitingTimeOptions {
    fn default() -> Self {
        Self { t_min: 1e-3, t_max: None, points: 800, split_rule: SplitRule::Crossover }
    }
}

impl WaitingTimeOptions {
    pub fn grid(&self, p: &SystemParams) -> Vec<f64> {
        log_grid(self.t_min, self.t_max.unwrap_or(40.0 / p.gamma2), self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumOptions {
    pub transition: usize,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub pole_order: PoleOrder,
    pub n_bar: Option<f64>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { transition: 1, min: -1.5, max: 1.5, points: 3001, pole_order: PoleOrder::Lowest, n_bar: None }
    }
}

impl SpectrumOptions {
    pub fn grid(&self) -> Vec<f64> {
        linear_grid(self.min, self.max, self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanOptions {
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { parameter: "delta2".into(), start: 0.5, stop: 1.3, points: 81 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryOptions {
    pub duration: f64,
    pub seed: u64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { duration: 7.5e5, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub trace: f64,
    pub eigenvalue: f64,
    pub biorthonormality: f64,
    pub quadrature: f64,
    pub detailed_balance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { trace: 1e-10, eigenvalue: 1e-10, biorthonormality: 1e-10, quadrature: 1e-12, detailed_balance: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub units: String,
    pub params: SystemParams,
    #[serde(default)]
    pub waiting_time: WaitingTimeOptions,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub cooling_scan: ScanOptions,
    #[serde(default)]
    pub trajectory: TrajectoryOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn new(params: SystemParams) -> Self {
        Self {
            units: UNITS.into(),
            params,
            waiting_time: WaitingTimeOptions::default(),
            spectrum: SpectrumOptions::default(),
            cooling_scan: ScanOptions::default(),
            trajectory: TrajectoryOptions::default(),
            tolerances: Tolerances::default(),
        }
    }

    /// Parses and validates a TOML configuration; every missing required
    /// field is listed in the error.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut missing = Vec::new();
        if !table.contains_key("units") {
            missing.push("units".to_string());
        }
        match table.get("params").and_then(|v| v.as_table()) {
            Some(params) => {
                missing.extend(PARAM_FIELDS.iter().filter(|f| !params.contains_key(**f)).map(|f| format!("params.{f}")));
            }
            None => missing.extend(PARAM_FIELDS.iter().map(|f| format!("params.{f}"))),
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing fields: {}", missing.join(", "))));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.units != UNITS {
            return Err(Error::Config(format!("units must be \"{UNITS}\", got \"{}\"", self.units)));
        }
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        let w = &self.waiting_time;
        if !(w.t_min > 0.0 && w.points >= 2 && w.t_max.is_none_or(|t| t > w.t_min)) {
            return Err(Error::Config("waiting_time needs 0 < t_min < t_max and points >= 2".into()));
        }
        let s = &self.spectrum;
        if !(s.transition == 1 || s.transition == 2) {
            return Err(Error::Config(format!("spectrum.transition must be 1 or 2, got {}", s.transition)));
        }
        if !(s.min < s.max && s.points >= 2) || s.n_bar.is_some_and(|n| n.is_nan() || n < 0.0) {
            return Err(Error::Config("spectrum needs min < max, points >= 2 and n_bar >= 0".into()));
        }
        let c = &self.cooling_scan;
        self.params.with_param(&c.parameter, self.params.gamma1).map_err(|e| Error::Config(e.to_string()))?;
        if c.points < 2 || !c.start.is_finite() || !c.stop.is_finite() {
            return Err(Error::Config("cooling_scan needs finite start/stop and points >= 2".into()));
        }
        if self.trajectory.duration.is_nan() || self.trajectory.duration <= 0.0 {
            return Err(Error::Config("trajectory.duration must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

const PRESETS: [(&str, &str); 4] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5-scan", include_str!("../presets/fig5-scan.toml")),
];

pub fn bundled_presets() -> Vec<(&'static str, RunConfig)> {
    PRESETS
        .iter()
        .map(|(name, text)| (*name, RunConfig::from_toml(text).unwrap_or_else(|e| panic!("preset {name}: {e}"))))
        .collect()
}

pub fn preset(name: &str) -> Result<RunConfig> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| RunConfig::from_toml(text))
        .unwrap_or_else(|| Err(Error::Config(format!("unknown preset {name:?}"))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    WaitingTime,
    Spectrum,
    CoolingScan,
    Trajectory,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::WaitingTime => "waiting-time",
            Command::Spectrum => "spectrum",
            Command::CoolingScan => "cooling-scan",
            Command::Trajectory => "trajectory",
            Command::Validate => "validate",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value <= tolerance }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub wall_time_s: f64,
    pub scalars: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub config_hash: String,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Process exit status for a failed run: 2 for configuration errors, 3 for
/// computational failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => 2,
        _ => 3,
    }
}

/// Exit status when `validate` finds a failed check.
pub const VALIDATION_FAILED: i32 = 4;

pub fn linear_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| min + (max - min) * k as f64 / (points - 1) as f64).collect()
}

/// Writes through a temporary file in the target directory and renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// A CSV field: numbers in scientific notation with ten significant digits.
pub enum Field {
    Num(f64),
    Text(String),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(x) => format!("{x:.9e}"),
            Field::Text(s) => s.clone(),
        }
    }
}

pub fn render_csv(hash: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Field>>) -> Result<Vec<u8>> {
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| Error::Io(e.into()))?;
        for row in rows {
            w.write_record(row.iter().map(Field::render)).map_err(|e| Error::Io(e.into()))?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn nums(values: &[f64]) -> Vec<Field> {
    values.iter().map(|&x| Field::Num(x)).collect()
}

struct Outputs<'a> {
    dir: &'a Path,
    hash: String,
    written: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Field>>) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, &render_csv(&self.hash, header, rows)?)?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
        write_atomic(&path, text.as_bytes())?;
        self.written.push(path);
        Ok(())
    }
}

/// Runs one command and writes its artifacts and `summary.json` into `out_dir`.
pub fn run(cfg: &RunConfig, command: Command, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Outputs { dir: out_dir, hash: cfg.hash(), written: Vec::new() };
    let mut scalars = BTreeMap::new();
    let mut checks = Vec::new();
    match command {
        Command::WaitingTime => waiting_time_cmd(cfg, &mut out, &mut scalars)?,
        Command::Spectrum => spectrum_cmd(cfg, &mut out, &mut scalars)?,
        Command::CoolingScan => cooling_scan_cmd(cfg, &mut out, &mut scalars)?,
        Command::Trajectory => trajectory_cmd(cfg, &mut out, &mut scalars)?,
        Command::Validate => checks = validate_cmd(cfg, &mut scalars)?,
    }
    let mut summary = RunSummary {
        command: command.name().into(),
        wall_time_s: 0.0,
        scalars,
        checks,
        outputs: out.written.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: out.hash.clone(),
    };
    summary.outputs.push(out_dir.join("summary.json"));
    summary.wall_time_s = start.elapsed().as_secs_f64();
    out.json("summary.json", &summary)?;
    Ok(summary)
}

fn waiting_time_cmd(cfg: &RunConfig, out: &mut Outputs, scalars: &mut BTreeMap<String, f64>) -> Result<()> {
    let p = &cfg.params;
    let grid = cfg.waiting_time.grid(p);
    let n_bar = cooling_rates(p)?.n_bar;
    let wt = waiting_time_with(p, n_bar, &grid, cfg.waiting_time.split_rule)?;
    let pert = perturbative_waiting_time(p, n_bar, &grid);
    let fit = match wt.fit {
        Some(f) => f,
        None => fit_biexponential(&grid, &wt.p)?,
    };
    out.csv(
        "waiting_time.csv",
        &["t", "p_exact", "p_perturbative", "p_fit"],
        grid.iter().enumerate().map(|(i, &t)| nums(&[t, wt.p[i], pert.p[i], fit.eval(t)])),
    )?;
    scalars.insert("n_bar".into(), n_bar);
    scalars.insert("saturation".into(), saturation(p));
    scalars.insert("t_fast".into(), fit.t_fast);
    scalars.insert("t_slow".into(), fit.t_slow);
    scalars.insert("amp_fast".into(), fit.amp_fast);
    scalars.insert("amp_slow".into(), fit.amp_slow);
    scalars.insert("slow_weight_perturbative".into(), pert.slow_weight);
    for (k, v) in [("tau", wt.tau), ("t_b", wt.t_b), ("t_d", wt.t_d)] {
        if let Some(v) = v {
            scalars.insert(k.into(), v);
        }
    }
    scalars.insert("inv_gamma2".into(), 1.0 / p.gamma2);
    if let Some(a) = &wt.analytic {
        scalars.insert("t_b_analytic".into(), a.t_b);
        scalars.insert("t_b_small_s".into(), a.t_b_small_s);
        scalars.insert("t0".into(), a.t0);
        scalars.insert("gamma_sq".into(), a.gamma_sq);
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumSidecar {
    transition: usize,
    n_bar: f64,
    elastic_weight: f64,
    elastic_weight_zero_order: f64,
    component_weights: BTreeMap<&'static str, f64>,
    component_integrals: BTreeMap<&'static str, f64>,
    gamma_sb: f64,
    central_peak: Option<serde_json::Value>,
    central_peak_subdominant_ratio: Option<f64>,
    transition2: Option<serde_json::Value>,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

fn spectrum_cmd(cfg: &RunConfig, out: &mut Outputs, scalars: &mut BTreeMap<String, f64>) -> Result<()> {
    let p = &cfg.params;
    let opts = &cfg.spectrum;
    let j = opts.transition;
    let grid = opts.grid();
    let rates = cooling_rates(p)?;
    let n_bar = opts.n_bar.unwrap_or(rates.n_bar);
    let transition2 = if j == 2 { Some(transition2_signals(p, n_bar, &grid)?) } else { None };
    let engine = SpectralEngine::new(p, MotionalState::Thermal(n_bar))?;
    let dipole = DipoleOperator::new(p, j);
    let s = engine.spectrum(&dipole, &grid, opts.pole_order)?;
    let s0 = zero_order_spectrum(p, j, &grid)?;
    let c = &s.components;
    out.csv(
        &format!("spectrum_j{j}.csv"),
        &["delta_omega", "total", "elastic_correction", "sb_red", "sb_blue", "inel_0", "inel_2"],
        grid.iter().enumerate().map(|(i, &dw)| {
            nums(&[
                dw,
                s.total[i],
                c.elastic_correction[i],
                c.sideband_red[i],
                c.sideband_blue[i],
                c.inelastic_zero[i],
                c.inelastic_second[i],
            ])
        }),
    )?;
    let mut weights = BTreeMap::new();
    let mut integrals = BTreeMap::new();
    for comp in Component::PLOTTED {
        weights.insert(comp.name(), s.weight(comp));
        integrals.insert(comp.name(), trapezoid(&grid, c.get(comp).unwrap_or(&[])));
    }
    let (central_peak, subdominant) = if j == 1 {
        let cp = central_peak_transition1(p, n_bar, &grid);
        let terms = engine.trace_terms(&dipole, (InternalMode::Decay.index(), 0))?;
        let dominant = terms.get(&[0, 2, 0, 0]).copied().unwrap_or_default();
        let sub = terms.get(&[0, 1, 0, 1]).copied().unwrap_or_default();
        let numeric = s.group_weight((InternalMode::Decay.index(), 0));
        scalars.insert("central_peak_weight".into(), numeric);
        scalars.insert("central_peak_weight_analytic".into(), cp.weight);
        scalars.insert("central_peak_weight_small_s".into(), cp.weight_small_s);
        let value = serde_json::json!({
            "half_width": cp.half_width,
            "weight_numeric": numeric,
            "weight": cp.weight,
            "weight_small_s": cp.weight_small_s,
            "weight_jumps": cp.weight_jumps,
            "p_n": cp.p_n,
        });
        (Some(value), Some(sub.norm() / dominant.norm()))
    } else {
        (None, None)
    };
    let transition2 = transition2.map(|t2| {
        scalars.insert("sideband_ratio_analytic".into(), t2.weight_blue / t2.weight_red);
        serde_json::json!({
            "gamma_sb": t2.gamma_sb,
            "weight_red": t2.weight_red,
            "weight_blue": t2.weight_blue,
            "weight_red_small_s": t2.weight_red_small_s,
            "weight_blue_small_s": t2.weight_blue_small_s,
            "weight_inel": [t2.weight_inel.re, t2.weight_inel.im],
            "weight_inel_small_s": [t2.weight_inel_small_s.re, t2.weight_inel_small_s.im],
            "lambda_1minus": [t2.lambda_1minus.re, t2.lambda_1minus.im],
            "pedestal_height_jumps": t2.pedestal_height_jumps,
        })
    });
    let (red, blue) = (s.weight(Component::SidebandRed), s.weight(Component::SidebandBlue));
    scalars.insert("n_bar".into(), n_bar);
    scalars.insert("elastic_weight".into(), s.elastic_weight);
    scalars.insert("sideband_red".into(), red);
    scalars.insert("sideband_blue".into(), blue);
    scalars.insert("gamma_sb".into(), rates.w_total / 2.0);
    let sidecar = SpectrumSidecar {
        transition: j,
        n_bar,
        elastic_weight: s.elastic_weight,
        elastic_weight_zero_order: s0.elastic_weight,
        component_weights: weights,
        component_integrals: integrals,
        gamma_sb: rates.w_total / 2.0,
        central_peak,
        central_peak_subdominant_ratio: subdominant,
        transition2,
    };
    out.json(&format!("spectrum_j{j}.json"), &sidecar)
}

fn cooling_scan_cmd(cfg: &RunConfig, out: &mut Outputs, scalars: &mut BTreeMap<String, f64>) -> Result<()> {
    let c = &cfg.cooling_scan;
    let values = linear_grid(c.start, c.stop, c.points);
    let rows = scan_mean_phonon(&cfg.params, &c.parameter, &values)?;
    let best = rows.iter().filter(|r| r.error.is_none()).min_by(|a, b| a.n_bar.total_cmp(&b.n_bar));
    if let Some(b) = best {
        scalars.insert("best_value".into(), b.value);
        scalars.insert("best_n_bar".into(), b.n_bar);
    }
    scalars.insert("failed_points".into(), rows.iter().filter(|r| r.error.is_some()).count() as f64);
    out.csv(
        "cooling_scan.csv",
        &[c.parameter.as_str(), "n1", "n2", "n_bar", "error"],
        rows.iter().map(|r| {
            let mut row = nums(&[r.value, r.n1, r.n2, r.n_bar]);
            row.push(Field::Text(r.error.clone().unwrap_or_default()));
            row
        }),
    )
}

fn trajectory_cmd(cfg: &RunConfig, out: &mut Outputs, scalars: &mut BTreeMap<String, f64>) -> Result<()> {
    let p = &cfg.params;
    let grid = cfg.waiting_time.grid(p);
    let n_bar = cooling_rates(p)?.n_bar;
    let wt = waiting_time_with(p, n_bar, &grid, cfg.waiting_time.split_rule)?;
    let tau = match wt.tau {
        Some(t) => t,
        None => return Err(fit_biexponential(&grid, &wt.p).err().unwrap_or(Error::Fit("no split time".into()))),
    };
    let t = &cfg.trajectory;
    let rec = simulate_trajectory(p, n_bar, t.duration, tau, t.seed)?;
    out.csv(
        "events.csv",
        &["time", "transition", "u"],
        rec.events.iter().map(|e| nums(&[e.time, e.transition as f64, e.u])),
    )?;
    out.csv(
        "periods.csv",
        &["start", "end", "kind"],
        rec.periods.iter().map(|q| {
            let mut row = nums(&[q.start, q.end]);
            row.push(Field::Text(if q.kind == PeriodKind::Dark { "dark" } else { "bright" }.into()));
            row
        }),
    )?;
    let heff = EffectiveHamiltonian::new(p)?;
    let rho0 = post_detection_state(n_bar, p.n_fock);
    let ks = ks_distance(&rec.gaps(), |x| heff.survival_curve(&rho0, x));
    let dark = rec.durations(PeriodKind::Dark);
    let bright = rec.durations(PeriodKind::Bright);
    let (mean_dark, se_dark) = mean_and_error(&dark);
    scalars.insert("tau".into(), tau);
    scalars.insert("events".into(), rec.events.len() as f64);
    scalars.insert("dark_periods".into(), dark.len() as f64);
    scalars.insert("mean_dark".into(), mean_dark);
    scalars.insert("se_dark".into(), se_dark);
    scalars.insert("mean_bright".into(), mean_and_error(&bright).0);
    scalars.insert("inv_gamma2".into(), 1.0 / p.gamma2);
    scalars.insert("ks_distance".into(), ks);
    Ok(())
}

/// Sample mean and its standard error.
pub fn mean_and_error(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

fn validate_cmd(cfg: &RunConfig, scalars: &mut BTreeMap<String, f64>) -> Result<Vec<Check>> {
    let p = &cfg.params;
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();

    let l = build_liouvillian(p)?;
    checks.push(Check::at_most("liouvillian trace defect", l.trace_defect(), tol.trace));

    let li = internal_liouvillian(p);
    let pairs = crate::linalg::EigenPairs::new(&li.data)?;
    let max_re = pairs.values.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    checks.push(Check::at_most("internal max Re lambda", max_re, tol.eigenvalue));
    let heff = EffectiveHamiltonian::new(p)?;
    let max_im = heff.pairs.values.iter().map(|z| z.im).fold(f64::MIN, f64::max);
    checks.push(Check::at_most("effective hamiltonian max Im", max_im, tol.eigenvalue));

    let es = internal_eigensystem(p)?;
    let mut defect: f64 = 0.0;
    for k in 0..9 {
        for m in 0..9 {
            let target = if k == m { 1.0 } else { 0.0 };
            defect = defect.max((es.pairing(k, m) - target).norm());
        }
    }
    checks.push(Check::at_most("internal biorthonormality", defect, tol.biorthonormality));

    let w2 = second_moment(DEFAULT_QUAD_ORDER)?;
    checks.push(Check::at_most("quadrature second moment", (w2 - 0.4).abs(), tol.quadrature));

    let rates = cooling_rates(p)?;
    let dist = rate_equation_distribution(&rates, p.n_fock);
    let balance = (0..p.n_fock - 1)
        .map(|n| {
            let up = rates.heating() * (n as f64 + 1.0) * dist[n];
            let down = rates.cooling() * (n as f64 + 1.0) * dist[n + 1];
            (up - down).abs() / up.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("rate equation detailed balance", balance, tol.detailed_balance));

    let grid = cfg.waiting_time.grid(p);
    let wt = waiting_time_with(p, rates.n_bar, &grid, cfg.waiting_time.split_rule)?;
    let separation = wt.fit.map_or(0.0, |f| f.separation());
    checks.push(Check {
        name: "time-scale separation".into(),
        value: separation,
        tolerance: crate::jumps::MIN_SEPARATION,
        passed: separation >= crate::jumps::MIN_SEPARATION,
    });

    scalars.insert("n_bar".into(), rates.n_bar);
    scalars.insert("cooling_rate".into(), rates.w_total);
    scalars.insert("saturation".into(), saturation(p));
    scalars.insert("inv_gamma2".into(), 1.0 / p.gamma2);
    for (k, v) in [("t_b", wt.t_b), ("t_d", wt.t_d), ("tau", wt.tau)] {
        if let Some(v) = v {
            scalars.insert(k.into(), v);
        }
    }
    if let Some(a) = &wt.analytic {
        scalars.insert("t_b_analytic".into(), a.t_b);
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_presets_parse() {
        let presets = bundled_presets();
        assert_eq!(presets.len(), 4);
        let fig2 = &presets[0].1;
        assert_eq!(fig2.params, SystemParams::reference());
    }

    #[test]
    fn preset_round_trip() {
        for (_, cfg) in bundled_presets() {
            let text = cfg.to_toml().unwrap();
            assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn scan_preset_brackets_reference_detuning() {
        let cfg = preset("fig5-scan").unwrap();
        assert_eq!(cfg.cooling_scan.parameter, "delta2");
        assert!(cfg.cooling_scan.start < 0.87 && cfg.cooling_scan.stop > 0.87);
    }

    #[test]
    fn empty_config_lists_missing_fields() {
        let Err(Error::Config(msg)) = RunConfig::from_toml("") else { panic!() };
        for f in ["units", "params.gamma1", "params.psi", "params.n_fock"] {
            assert!(msg.contains(f), "{msg}");
        }
    }

    #[test]
    fn wrong_units_rejected() {
        let text = preset("fig2").unwrap().to_toml().unwrap().replace("trap_frequency", "hertz");
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("fig9"), Err(Error::Config(_))));
    }

    #[test]
    fn hash_depends_on_content() {
        let a = preset("fig2").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.params.delta2 = 0.9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn csv_layout() {
        let bytes = render_csv("abc", &["x", "y"], vec![nums(&[1.0, 0.000123456789])]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc");
        assert_eq!(lines[1], "x,y");
        assert_eq!(lines[2], "1.000000000e0,1.234567890e-4");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_and_error(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt() / 1.0).abs() < 1e-12);
    }
}
