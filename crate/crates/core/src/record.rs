use crate::config::SimConfig;
use crate::field::SpinorField;
use crate::observables::{
    decompose_cat, find_peaks, label_peaks, position_distribution, spin_expectations, CatDecomposition, Peak,
    PeakSettings,
};

/// Observables sampled at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: usize,
    pub tau: f64,
    pub norm2: f64,
    pub m_up: f64,
    pub m_down: f64,
    pub mean_z: f64,
    pub s1: [f64; 3],
    pub s2z: f64,
    pub peaks: Vec<Peak>,
    pub cat: Option<CatDecomposition>,
}

impl Sample {
    pub fn measure(f: &SpinorField, step: usize, tau: f64, settings: PeakSettings) -> Self {
        let p = position_distribution(f);
        let mut peaks = find_peaks(&p, settings);
        label_peaks(f, &mut peaks);
        let cat = decompose_cat(f, &peaks).ok();
        let (m_up, m_down) = f.pair_masses();
        let spins = spin_expectations(f);
        Self {
            step,
            tau,
            norm2: f.norm2(),
            m_up,
            m_down,
            mean_z: p.mean(),
            s1: spins.s1,
            s2z: spins.s2z,
            peaks,
            cat,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub requested_tau: f64,
    /// Requested time snapped to the nearest integration step.
    pub tau: f64,
    pub step: usize,
    pub field: SpinorField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub code_version: &'static str,
    pub wall_seconds: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_points: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub threads: usize,
}

/// Everything one simulation produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: SimConfig,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub final_field: SpinorField,
    pub provenance: Provenance,
}

impl RunRecord {
    /// `(tau, peaks)` pairs for branch phase tracking.
    pub fn peak_series(&self) -> Vec<(f64, Vec<Peak>)> {
        self.samples.iter().map(|s| (s.tau, s.peaks.clone())).collect()
    }

    pub fn final_tau(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.tau)
    }
}
