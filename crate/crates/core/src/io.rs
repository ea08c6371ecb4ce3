//! Run orchestration and the plain-text output formats.
//!
//! A run directory holds:
//! * `config.cfg`: the configuration echo;
//! * `timeseries.csv`: one row per observable sample;
//! * `snapshot_<tau>.csv`: `z` and real/imaginary parts of the four amplitudes;
//! * `snapshots.csv`: index of the snapshot files with requested and snapped times;
//! * `summary.txt`: final peaks, branch data, component ratios, phase difference;
//! * `run_info.txt`: provenance (version, wall time, grid, step).
//!
//! Floats are written with 17 significant digits so every `f64` round-trips.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;

use crate::config::{parse_config, SimConfig};
use crate::error::{EvolveError, IoError};
use crate::evolve::{evolve_observed, Observer};
use crate::field::{Component, SpinPair, SpinorField};
use crate::grid::SpatialGrid;
use crate::observables::{
    component_ratio, decompose_cat, find_peaks, label_peaks, position_distribution, track_branch_phases, Branch, Peak,
    PeakSettings,
};
use crate::oracle::oracle_evolve;
use crate::record::{RunRecord, Sample, Snapshot};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CONFIG_FILE: &str = "config.cfg";
pub const SNAPSHOT_INDEX_FILE: &str = "snapshots.csv";
pub const RUN_INFO_FILE: &str = "run_info.txt";
const LOCK_FILE: &str = ".lock";

pub const TIMESERIES_COLUMNS: [&str; 36] = [
    "tau",
    "norm2",
    "m_up",
    "m_down",
    "mean_z",
    "sx1",
    "sy1",
    "sz1",
    "sz2",
    "n_peaks",
    "peak1_z",
    "peak1_height",
    "peak1_mass",
    "peak1_centroid",
    "peak1_remote_up",
    "peak2_z",
    "peak2_height",
    "peak2_mass",
    "peak2_centroid",
    "peak2_remote_up",
    "split_z",
    "a_mass",
    "a_centroid",
    "a_remote_up",
    "a_residual",
    "a_sx1",
    "a_sy1",
    "a_sz1",
    "b_mass",
    "b_centroid",
    "b_remote_up",
    "b_residual",
    "b_sx1",
    "b_sy1",
    "b_sz1",
    "step",
];

const SNAPSHOT_HEADER: &str = "z,uu_re,uu_im,ud_re,ud_im,du_re,du_im,dd_re,dd_im";

/// Decimal with 17 significant digits; `nan` for missing values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// One `timeseries.csv` row (without newline).
pub fn timeseries_row(s: &Sample) -> String {
    let mut out: Vec<String> = [
        s.tau, s.norm2, s.m_up, s.m_down, s.mean_z, s.s1[0], s.s1[1], s.s1[2], s.s2z,
    ]
    .into_iter()
    .map(fmt_f64)
    .collect();
    out.push(s.peaks.len().to_string());
    for k in 0..2 {
        match s.peaks.get(k) {
            Some(p) => {
                for v in [
                    p.position,
                    p.height,
                    p.mass,
                    p.centroid,
                    p.remote_up.unwrap_or(f64::NAN),
                ] {
                    out.push(fmt_f64(v));
                }
            }
            None => out.extend(std::iter::repeat_n("nan".to_string(), 5)),
        }
    }
    match &s.cat {
        Some(cat) => {
            out.push(fmt_f64(cat.split_point));
            for b in [&cat.a, &cat.b] {
                for v in branch_columns(b) {
                    out.push(fmt_f64(v));
                }
            }
        }
        None => out.extend(std::iter::repeat_n("nan".to_string(), 15)),
    }
    out.push(s.step.to_string());
    out.join(",")
}

fn branch_columns(b: &Branch) -> [f64; 7] {
    [
        b.mass,
        b.centroid,
        b.remote_up,
        b.product_residual,
        b.spin1[0],
        b.spin1[1],
        b.spin1[2],
    ]
}

/// One parsed `timeseries.csv` row: time, sample step and the exported peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesRow {
    pub tau: f64,
    pub step: usize,
    pub values: Vec<f64>,
    /// Exported peaks; when more than two were detected only the first two
    /// carry data and the rest are `NaN` placeholders, so `len()` is still the
    /// detected count.
    pub peaks: Vec<Peak>,
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::malformed(path, "empty file"))?
        .map_err(|e| IoError::io(path, e))?;
    if header != TIMESERIES_COLUMNS.join(",") {
        return Err(IoError::malformed(path, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TIMESERIES_COLUMNS.len() {
            return Err(IoError::malformed(
                path,
                format!("row {}: expected {} columns", i + 1, TIMESERIES_COLUMNS.len()),
            ));
        }
        let bad = |what: &str| IoError::malformed(path, format!("row {}: bad {what}", i + 1));
        let values: Vec<f64> = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("number"))?;
        let n_peaks: usize = fields[9].parse().map_err(|_| bad("peak count"))?;
        let step: usize = fields[35].parse().map_err(|_| bad("step"))?;
        let peaks = (0..n_peaks)
            .map(|k| {
                let v = if k < 2 {
                    &values[10 + 5 * k..15 + 5 * k]
                } else {
                    &[f64::NAN; 5][..]
                };
                Peak {
                    position: v[0],
                    height: v[1],
                    mass: v[2],
                    centroid: v[3],
                    region: (0, 0),
                    remote_up: (!v[4].is_nan()).then_some(v[4]),
                }
            })
            .collect();
        rows.push(TimeseriesRow {
            tau: values[0],
            step,
            values,
            peaks,
        });
    }
    Ok(rows)
}

/// `snapshot_<tau>.csv` with `tau` printed to 6 decimals, trailing zeros
/// trimmed.
pub fn snapshot_file_name(tau: f64) -> String {
    let mut s = format!("{tau:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    format!("snapshot_{s}.csv")
}

pub fn write_snapshot(path: &Path, field: &SpinorField) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| IoError::io(path, e);
    writeln!(w, "{SNAPSHOT_HEADER}").map_err(io)?;
    let mut line = String::with_capacity(256);
    for (j, z) in field.grid().positions().iter().enumerate() {
        line.clear();
        line.push_str(&fmt_f64(*z));
        for c in Component::ALL {
            let v = field[c][j];
            let _ = write!(line, ",{},{}", fmt_f64(v.re), fmt_f64(v.im));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a snapshot. Without a grid, one is reconstructed from the `z`
/// column (uniform spacing assumed).
pub fn read_snapshot(path: &Path, grid: Option<Arc<SpatialGrid>>) -> Result<SpinorField, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err(IoError::malformed(path, "unexpected header"));
    }
    let mut zs = Vec::new();
    let mut comps: [Vec<Complex64>; 4] = Default::default();
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|_| IoError::malformed(path, format!("row {}: bad number", i + 1)))?;
        if v.len() != 9 {
            return Err(IoError::malformed(path, format!("row {}: expected 9 columns", i + 1)));
        }
        zs.push(v[0]);
        for (k, c) in comps.iter_mut().enumerate() {
            c.push(Complex64::new(v[1 + 2 * k], v[2 + 2 * k]));
        }
    }
    let grid = match grid {
        Some(g) => g,
        None => {
            let n = zs.len();
            if n < 2 {
                return Err(IoError::malformed(path, "too few rows"));
            }
            let dz = (zs[n - 1] - zs[0]) / (n - 1) as f64;
            let g = SpatialGrid::new(zs[0], zs[0] + dz * n as f64, n)
                .map_err(|e| IoError::malformed(path, e.to_string()))?;
            Arc::new(g)
        }
    };
    if zs.len() != grid.len() {
        return Err(IoError::malformed(
            path,
            format!("{} rows, grid has {} points", zs.len(), grid.len()),
        ));
    }
    SpinorField::from_components(grid, comps).ok_or_else(|| IoError::malformed(path, "component length mismatch"))
}

/// Text summary of the state at `tau`; `series` feeds the phase-difference
/// line and may be empty.
pub fn summarize(field: &SpinorField, tau: f64, series: &[(f64, Vec<Peak>)], settings: PeakSettings) -> String {
    let mut s = String::new();
    let p = position_distribution(field);
    let mut peaks = find_peaks(&p, settings);
    label_peaks(field, &mut peaks);
    let _ = writeln!(s, "tau = {}", fmt_f64(tau));
    let _ = writeln!(s, "norm2 = {}", fmt_f64(field.norm2()));
    let _ = writeln!(s, "peaks = {}", peaks.len());
    let _ = writeln!(s, "# position height mass centroid remote_up");
    for pk in &peaks {
        let _ = writeln!(
            s,
            "peak {} {} {} {} {}",
            fmt_f64(pk.position),
            fmt_f64(pk.height),
            fmt_f64(pk.mass),
            fmt_f64(pk.centroid),
            fmt_f64(pk.remote_up.unwrap_or(f64::NAN))
        );
    }
    match decompose_cat(field, &peaks) {
        Ok(cat) => {
            let _ = writeln!(s, "split_z = {}", fmt_f64(cat.split_point));
            let _ = writeln!(s, "# mass centroid P(remote up) product_residual <Sx1> <Sy1> <Sz1>");
            for (name, b) in [("a", &cat.a), ("b", &cat.b)] {
                let cols: Vec<String> = branch_columns(b).iter().map(|v| fmt_f64(*v)).collect();
                let _ = writeln!(s, "branch {name} {}", cols.join(" "));
            }
        }
        Err(e) => {
            let _ = writeln!(s, "branches unavailable: {e}");
        }
    }
    for (name, pair) in [("remote_up", SpinPair::RemoteUp), ("remote_down", SpinPair::RemoteDown)] {
        match component_ratio(field, &peaks, pair) {
            Ok((c, res)) => {
                let _ = writeln!(
                    s,
                    "ratio {name} re {} im {} abs {} residual {}",
                    fmt_f64(c.re),
                    fmt_f64(c.im),
                    fmt_f64(c.norm()),
                    fmt_f64(res)
                );
            }
            Err(e) => {
                let _ = writeln!(s, "ratio {name} undefined: {e}");
            }
        }
    }
    if series.is_empty() {
        let _ = writeln!(s, "phase difference: no time series");
    } else {
        match track_branch_phases(series) {
            Ok(ph) => {
                let last = ph.delta.len() - 1;
                let _ = writeln!(
                    s,
                    "phase difference first window tau {} delta {} separation {}",
                    fmt_f64(ph.window_times[0]),
                    fmt_f64(ph.delta[0]),
                    fmt_f64(ph.separation()[0])
                );
                let _ = writeln!(
                    s,
                    "phase difference final window tau {} delta {} separation {}",
                    fmt_f64(ph.window_times[last]),
                    fmt_f64(ph.delta[last]),
                    fmt_f64(ph.separation()[last])
                );
            }
            Err(e) => {
                let _ = writeln!(s, "phase difference unavailable: {e}");
            }
        }
    }
    s
}

/// Summary of a finished run, as written to `summary.txt`.
pub fn run_summary(record: &RunRecord) -> String {
    let settings = PeakSettings {
        threshold: record.config.peak_threshold,
        merge_width: record.config.merge_width,
    };
    summarize(&record.final_field, record.final_tau(), &record.peak_series(), settings)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dry_run: bool,
    pub check_oracle: bool,
    pub threads: usize,
}

#[derive(Debug)]
pub struct RunOutcome {
    /// `None` for a dry run.
    pub record: Option<RunRecord>,
    pub summary: String,
    /// L2 gap between the fast propagator and the dense oracle, when requested.
    pub oracle_gap: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Oracle(#[from] crate::error::OracleError),
}

impl RunError {
    /// Process exit status: 2 for a leak abort, 3 for the NaN guard, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Evolve(EvolveError::EdgeLeak { .. } | EvolveError::MomentumLeak { .. }) => 2,
            RunError::Evolve(EvolveError::NonFinite { .. }) => 3,
            _ => 1,
        }
    }
}

/// Streams samples and snapshots to disk while the run proceeds.
struct DiskObserver {
    dir: PathBuf,
    timeseries: BufWriter<File>,
    index: BufWriter<File>,
    error: Option<IoError>,
}

impl DiskObserver {
    fn create(dir: &Path) -> Result<Self, IoError> {
        let open = |name: &str| {
            let path = dir.join(name);
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| IoError::io(path, e))
        };
        let mut timeseries = open(TIMESERIES_FILE)?;
        let mut index = open(SNAPSHOT_INDEX_FILE)?;
        writeln!(timeseries, "{}", TIMESERIES_COLUMNS.join(","))
            .map_err(|e| IoError::io(dir.join(TIMESERIES_FILE), e))?;
        writeln!(index, "requested_tau,tau,step,file").map_err(|e| IoError::io(dir.join(SNAPSHOT_INDEX_FILE), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            timeseries,
            index,
            error: None,
        })
    }

    fn record(&mut self, r: Result<(), IoError>) {
        if self.error.is_none() {
            if let Err(e) = r {
                self.error = Some(e);
            }
        }
    }

    fn finish(mut self) -> Result<(), IoError> {
        let ts = self
            .timeseries
            .flush()
            .map_err(|e| IoError::io(self.dir.join(TIMESERIES_FILE), e));
        self.record(ts);
        let ix = self
            .index
            .flush()
            .map_err(|e| IoError::io(self.dir.join(SNAPSHOT_INDEX_FILE), e));
        self.record(ix);
        self.error.map_or(Ok(()), Err)
    }
}

impl Observer for DiskObserver {
    fn on_sample(&mut self, sample: &Sample) {
        let r = writeln!(self.timeseries, "{}", timeseries_row(sample))
            .map_err(|e| IoError::io(self.dir.join(TIMESERIES_FILE), e));
        self.record(r);
    }

    fn on_snapshot(&mut self, snap: &Snapshot) {
        let name = snapshot_file_name(snap.tau);
        let r = write_snapshot(&self.dir.join(&name), &snap.field).and_then(|_| {
            writeln!(
                self.index,
                "{},{},{},{}",
                fmt_f64(snap.requested_tau),
                fmt_f64(snap.tau),
                snap.step,
                name
            )
            .map_err(|e| IoError::io(self.dir.join(SNAPSHOT_INDEX_FILE), e))
        });
        self.record(r);
    }
}

/// Exclusive claim on an output directory; released on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, IoError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(IoError::Locked(dir.to_path_buf())),
            Err(e) => Err(IoError::io(path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Runs one configuration and writes its output directory.
pub fn run(cfg: &SimConfig, opts: RunOptions) -> Result<RunOutcome, RunError> {
    cfg.validate().map_err(IoError::from)?;
    if opts.dry_run {
        return Ok(RunOutcome {
            record: None,
            summary: String::new(),
            oracle_gap: None,
        });
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let _lock = DirLock::acquire(dir)?;
    let write = |name: &str, text: &str| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| IoError::io(path, e))
    };
    write(CONFIG_FILE, &cfg.to_config_string())?;

    let f0 = SpinorField::entangled_initial(cfg.grid.clone(), &cfg.physical);
    let mut observer = DiskObserver::create(dir)?;
    let result = evolve_observed(&f0, cfg, &cfg.schedule, opts.threads.max(1), &mut observer);
    observer.finish()?;
    let record = result?;

    if !record.snapshots.iter().any(|s| s.step == record.provenance.n_steps) {
        let name = snapshot_file_name(record.final_tau());
        write_snapshot(&dir.join(&name), &record.final_field)?;
        let index = dir.join(SNAPSHOT_INDEX_FILE);
        let mut f = OpenOptions::new()
            .append(true)
            .open(&index)
            .map_err(|e| IoError::io(&index, e))?;
        writeln!(
            f,
            "{},{},{},{}",
            fmt_f64(f64::NAN),
            fmt_f64(record.final_tau()),
            record.provenance.n_steps,
            name
        )
        .map_err(|e| IoError::io(&index, e))?;
    }

    let summary = run_summary(&record);
    write(SUMMARY_FILE, &summary)?;

    let oracle_gap = if opts.check_oracle {
        let reference = oracle_evolve(&f0, cfg, &cfg.schedule, cfg.dt / 4.0)?;
        Some(record.final_field.l2_distance(&reference))
    } else {
        None
    };

    let p = &record.provenance;
    let mut info = String::new();
    let _ = writeln!(info, "code_version = {}", p.code_version);
    let _ = writeln!(info, "wall_seconds = {:.3}", p.wall_seconds);
    let _ = writeln!(info, "dt = {}", fmt_f64(p.dt));
    let _ = writeln!(info, "n_steps = {}", p.n_steps);
    let _ = writeln!(info, "grid = [{}, {}) x {}", p.z_min, p.z_max, p.n_points);
    let _ = writeln!(info, "threads = {}", p.threads);
    if let Some(gap) = oracle_gap {
        let _ = writeln!(info, "oracle_l2_gap = {}", fmt_f64(gap));
    }
    write(RUN_INFO_FILE, &info)?;

    Ok(RunOutcome {
        record: Some(record),
        summary,
        oracle_gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
struct IndexEntry {
    tau: f64,
    step: usize,
    file: String,
}

fn read_index(path: &Path) -> Result<Vec<IndexEntry>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("requested_tau,tau,step,file") {
        return Err(IoError::malformed(path, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || IoError::malformed(path, format!("row {}", i + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(IndexEntry {
                tau: f[1].parse().map_err(|_| bad())?,
                step: f[2].parse().map_err(|_| bad())?,
                file: f[3].to_string(),
            })
        })
        .collect()
}

/// Recomputes the summary offline from a run directory (identical to the
/// run's own `summary.txt`) or from a single snapshot file.
pub fn analyze(path: &Path) -> Result<String, IoError> {
    if path.is_dir() {
        let cfg = parse_config(path.join(CONFIG_FILE))?;
        let settings = PeakSettings {
            threshold: cfg.peak_threshold,
            merge_width: cfg.merge_width,
        };
        let rows = read_timeseries(&path.join(TIMESERIES_FILE))?;
        let last = rows
            .last()
            .ok_or_else(|| IoError::malformed(path.join(TIMESERIES_FILE), "no samples"))?;
        let index = read_index(&path.join(SNAPSHOT_INDEX_FILE))?;
        let entry = index
            .iter()
            .find(|e| e.step == last.step)
            .ok_or_else(|| IoError::malformed(path.join(SNAPSHOT_INDEX_FILE), "no snapshot at the final sample"))?;
        let field = read_snapshot(&path.join(&entry.file), Some(cfg.grid.clone()))?;
        let series: Vec<(f64, Vec<Peak>)> = rows.into_iter().map(|r| (r.tau, r.peaks)).collect();
        Ok(summarize(&field, entry.tau, &series, settings))
    } else {
        let dir = path.parent().unwrap_or(Path::new("."));
        let cfg = dir
            .join(CONFIG_FILE)
            .is_file()
            .then(|| parse_config(dir.join(CONFIG_FILE)))
            .transpose()?;
        let settings = cfg.as_ref().map_or_else(PeakSettings::default, |c| PeakSettings {
            threshold: c.peak_threshold,
            merge_width: c.merge_width,
        });
        let field = read_snapshot(path, cfg.map(|c| c.grid))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let tau = match read_index(&dir.join(SNAPSHOT_INDEX_FILE)) {
            Ok(index) => index.iter().find(|e| e.file == name).map(|e| e.tau),
            Err(_) => None,
        }
        .or_else(|| {
            name.strip_prefix("snapshot_")
                .and_then(|s| s.strip_suffix(".csv"))
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(f64::NAN);
        Ok(summarize(&field, tau, &[], settings))
    }
}
