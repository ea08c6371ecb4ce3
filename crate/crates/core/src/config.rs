//! Simulation configuration and its `key = value` text format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{ConfigError, IoError};
use crate::grid::SpatialGrid;
use crate::params::PhysicalParams;
use crate::schedule::DriveSchedule;

/// Largest allowed `dt * max|phi_dot| / 2` (spin phase advance per step, rad).
pub const MAX_PHASE_PER_STEP: f64 = 0.25;

pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.1;
pub const DEFAULT_MERGE_WIDTH: f64 = 2.0;

const REQUIRED: [&str; 11] = [
    "eta",
    "alpha_re",
    "alpha_im",
    "z_min",
    "z_max",
    "n_points",
    "dt",
    "t_final",
    "schedule",
    "observable_stride",
    "output_dir",
];
const OPTIONAL: [&str; 3] = ["snapshot_times", "peak_threshold", "merge_width"];
const SCHEDULE_PREFIX: &str = "schedule.";

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub physical: PhysicalParams,
    pub grid: Arc<SpatialGrid>,
    pub dt: f64,
    pub t_final: f64,
    pub schedule: DriveSchedule,
    pub snapshot_times: Vec<f64>,
    pub observable_stride: usize,
    pub output_dir: PathBuf,
    pub peak_threshold: f64,
    pub merge_width: f64,
}

impl SimConfig {
    /// Reference parameters: `eta = 0.3`, `alpha = -10 sqrt(2)`, the
    /// `paper-eq6` schedule, run to `tau = 216`.
    pub fn paper() -> Self {
        Self {
            physical: PhysicalParams::paper(),
            grid: Arc::new(SpatialGrid::new(-80.0, 80.0, 4096).expect("valid preset grid")),
            dt: 2e-4,
            t_final: 216.0,
            schedule: DriveSchedule::paper(),
            snapshot_times: vec![0.0, 216.0],
            observable_stride: 250,
            output_dir: PathBuf::from("paper-run"),
            peak_threshold: DEFAULT_PEAK_THRESHOLD,
            merge_width: DEFAULT_MERGE_WIDTH,
        }
    }

    /// Small instance for oracle checks: 64 points on `[-8, 8]`, `eta = 0.3`,
    /// `eps = 5`, `phi_dot = 2 sin(tau)`, `tau_end = 1`, `dt = 1e-4`.
    pub fn toy() -> Self {
        Self {
            physical: PhysicalParams::new(0.3, Complex64::new(-std::f64::consts::SQRT_2, 0.0))
                .expect("valid toy params"),
            grid: Arc::new(SpatialGrid::new(-8.0, 8.0, 64).expect("valid toy grid")),
            dt: 1e-4,
            t_final: 1.0,
            schedule: DriveSchedule::toy(),
            snapshot_times: vec![1.0],
            observable_stride: 1000,
            output_dir: PathBuf::from("toy-run"),
            peak_threshold: DEFAULT_PEAK_THRESHOLD,
            merge_width: DEFAULT_MERGE_WIDTH,
        }
    }

    /// Total number of integration steps, `round(t_final / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |msg: String| Err(ConfigError::Invariant(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return inv(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return inv(format!("t_final must be >= 0, got {}", self.t_final));
        }
        if self.physical.eta.is_nan() || self.physical.eta < 0.0 {
            return inv(format!("eta must be >= 0, got {}", self.physical.eta));
        }
        if self.observable_stride == 0 {
            return inv("observable_stride must be >= 1".into());
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|&&t| !(0.0..=self.t_final).contains(&t))
        {
            return inv(format!("snapshot time {t} outside [0, {}]", self.t_final));
        }
        let phase = self.dt * self.schedule.max_abs_phi_dot(self.t_final) / 2.0;
        if phase > MAX_PHASE_PER_STEP {
            return inv(format!("dt * max|phi_dot| / 2 = {phase} exceeds {MAX_PHASE_PER_STEP}"));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold < 1.0) {
            return inv(format!("peak_threshold must be in (0, 1), got {}", self.peak_threshold));
        }
        if self.merge_width.is_nan() || self.merge_width < 0.0 {
            return inv(format!("merge_width must be >= 0, got {}", self.merge_width));
        }
        Ok(())
    }

    /// Serializes to the config file format; `parse_config_str` of the result
    /// reproduces `self` exactly.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let _ = writeln!(s, "eta = {:?}", self.physical.eta);
        let _ = writeln!(s, "alpha_re = {:?}", self.physical.alpha.re);
        let _ = writeln!(s, "alpha_im = {:?}", self.physical.alpha.im);
        let _ = writeln!(s, "z_min = {:?}", g.z_min());
        let _ = writeln!(s, "z_max = {:?}", g.z_max());
        let _ = writeln!(s, "n_points = {}", g.len());
        let _ = writeln!(s, "dt = {:?}", self.dt);
        let _ = writeln!(s, "t_final = {:?}", self.t_final);
        let _ = writeln!(s, "schedule = {}", self.schedule.id());
        for (k, v) in self.schedule.params() {
            let _ = writeln!(s, "{SCHEDULE_PREFIX}{k} = {v:?}");
        }
        let _ = writeln!(s, "observable_stride = {}", self.observable_stride);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        if !self.snapshot_times.is_empty() {
            let times: Vec<String> = self.snapshot_times.iter().map(|t| format!("{t:?}")).collect();
            let _ = writeln!(s, "snapshot_times = {}", times.join(", "));
        }
        let _ = writeln!(s, "peak_threshold = {:?}", self.peak_threshold);
        let _ = writeln!(s, "merge_width = {:?}", self.merge_width);
        s
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<SimConfig, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    Ok(parse_config_str(&text)?)
}

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are
/// rejected; schedule parameters use `schedule.<name>` keys.
pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: lineno + 1 })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: lineno + 1 });
        }
        let known = REQUIRED.contains(&key) || OPTIONAL.contains(&key) || key.starts_with(SCHEDULE_PREFIX);
        if !known {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if entries.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::DuplicateKey(key.to_string()));
        }
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(ConfigError::MissingKey(key));
        }
    }

    let eta = float(&entries, "eta")?;
    let alpha = Complex64::new(float(&entries, "alpha_re")?, float(&entries, "alpha_im")?);
    let physical = PhysicalParams { eta, alpha };
    let n_points = integer(&entries, "n_points")?;
    let grid = SpatialGrid::new(float(&entries, "z_min")?, float(&entries, "z_max")?, n_points)?;

    let mut schedule = DriveSchedule::from_id(&entries["schedule"])?;
    for (key, value) in entries.iter().filter(|(k, _)| k.starts_with(SCHEDULE_PREFIX)) {
        let v = parse_f64(key, value)?;
        schedule.set_param(&key[SCHEDULE_PREFIX.len()..], v)?;
    }

    let snapshot_times = match entries.get("snapshot_times") {
        Some(list) if !list.is_empty() => list
            .split(',')
            .map(|t| parse_f64("snapshot_times", t.trim()))
            .collect::<Result<Vec<_>, _>>()?,
        _ => Vec::new(),
    };

    let cfg = SimConfig {
        physical,
        grid: Arc::new(grid),
        dt: float(&entries, "dt")?,
        t_final: float(&entries, "t_final")?,
        schedule,
        snapshot_times,
        observable_stride: integer(&entries, "observable_stride")?,
        output_dir: PathBuf::from(&entries["output_dir"]),
        peak_threshold: optional_float(&entries, "peak_threshold", DEFAULT_PEAK_THRESHOLD)?,
        merge_width: optional_float(&entries, "merge_width", DEFAULT_MERGE_WIDTH)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        })
}

fn float(entries: &BTreeMap<String, String>, key: &str) -> Result<f64, ConfigError> {
    parse_f64(key, &entries[key])
}

fn optional_float(entries: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, ConfigError> {
    entries.get(key).map_or(Ok(default), |v| parse_f64(key, v))
}

fn integer(entries: &BTreeMap<String, String>, key: &str) -> Result<usize, ConfigError> {
    let value = &entries[key];
    value.parse::<usize>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_FILE: &str = "\
# paper preset
eta = 0.3
alpha_re = -14.142135623730951
alpha_im = 0
z_min = -80
z_max = 80
n_points = 4096
dt = 2e-4
t_final = 216
schedule = paper-eq6
observable_stride = 250
output_dir = out/paper   # trailing comment
snapshot_times = 0, 216
";

    #[test]
    fn parses_paper_preset() {
        let cfg = parse_config_str(PAPER_FILE).unwrap();
        assert_eq!(cfg.physical.eta, 0.3);
        assert!((cfg.physical.alpha.re + 10.0 * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(cfg.schedule, DriveSchedule::paper());
        assert_eq!(cfg.t_final, 216.0);
        assert_eq!(cfg.snapshot_times, vec![0.0, 216.0]);
        assert_eq!(cfg.output_dir, PathBuf::from("out/paper"));
        assert_eq!(cfg.n_steps(), 1_080_000);
    }

    #[test]
    fn zero_dt_is_invariant_violation() {
        let text = PAPER_FILE.replace("dt = 2e-4", "dt = 0");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Invariant(_))));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = PAPER_FILE.replace("eta = 0.3", "etaa = 0.3");
        let err = parse_config_str(&text).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("etaa".into()));
        assert!(err.to_string().contains("etaa"));
    }

    #[test]
    fn duplicate_missing_and_bad_values() {
        let dup = format!("{PAPER_FILE}eta = 0.2\n");
        assert_eq!(
            parse_config_str(&dup).unwrap_err(),
            ConfigError::DuplicateKey("eta".into())
        );
        let missing = PAPER_FILE.replace("t_final = 216\n", "");
        assert_eq!(
            parse_config_str(&missing).unwrap_err(),
            ConfigError::MissingKey("t_final")
        );
        let bad = PAPER_FILE.replace("eta = 0.3", "eta = zero");
        assert!(matches!(parse_config_str(&bad), Err(ConfigError::BadValue { .. })));
        let syntax = format!("{PAPER_FILE}just words\n");
        assert!(matches!(parse_config_str(&syntax), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn phase_bound_enforced() {
        let text = PAPER_FILE.replace("dt = 2e-4", "dt = 1e-3");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Invariant(_))));
    }

    #[test]
    fn snapshot_outside_run_rejected() {
        let text = PAPER_FILE.replace("0, 216", "0, 300");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Invariant(_))));
    }

    #[test]
    fn schedule_parameters_settable() {
        let text = format!("{PAPER_FILE}schedule.modulation = 800\n");
        let cfg = parse_config_str(&text).unwrap();
        assert_eq!(
            cfg.schedule
                .phi_dot(20.0 + std::f64::consts::FRAC_PI_2)
                .unwrap()
                .round(),
            800.0
        );
        let bad = format!("{PAPER_FILE}schedule.omega = 2\n");
        assert!(matches!(parse_config_str(&bad), Err(ConfigError::Schedule(_))));
    }

    #[test]
    fn echo_round_trips() {
        for cfg in [
            SimConfig::paper(),
            SimConfig::toy(),
            parse_config_str(PAPER_FILE).unwrap(),
        ] {
            let again = parse_config_str(&cfg.to_config_string()).unwrap();
            assert_eq!(again, cfg);
        }
    }
}
