use std::time::Instant;

use crate::config::SimConfig;
use crate::error::EvolveError;
use crate::field::{Representation, SpinorField};
use crate::observables::PeakSettings;
use crate::propagator::{check_field, check_momentum, StepPlan};
use crate::record::{Provenance, RunRecord, Sample, Snapshot};
use crate::schedule::Drive;

/// NaN and edge-leak checks happen at least this often.
pub const GUARD_INTERVAL: usize = 1000;

/// Receives observables as they are produced.
pub trait Observer {
    fn on_sample(&mut self, _sample: &Sample) {}
    fn on_snapshot(&mut self, _snapshot: &Snapshot) {}
}

impl Observer for () {}

impl<F: FnMut(&Sample)> Observer for F {
    fn on_sample(&mut self, sample: &Sample) {
        self(sample)
    }
}

pub fn evolve<D: Drive + ?Sized>(f0: &SpinorField, cfg: &SimConfig, drive: &D) -> Result<RunRecord, EvolveError> {
    evolve_observed(f0, cfg, drive, 1, &mut ())
}

/// Integrates from `tau = 0` to `t_final`, sampling observables every
/// `observable_stride` steps (and at the last step) and recording snapshots at
/// the configured times snapped to the nearest step.
pub fn evolve_observed<D: Drive + ?Sized>(
    f0: &SpinorField,
    cfg: &SimConfig,
    drive: &D,
    threads: usize,
    observer: &mut dyn Observer,
) -> Result<RunRecord, EvolveError> {
    let started = Instant::now();
    if f0.grid() != &*cfg.grid || f0.representation() != Representation::Position {
        return Err(EvolveError::GridMismatch);
    }
    let n0 = f0.norm2();
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(EvolveError::NotNormalized(n0));
    }
    let dt = cfg.dt;
    let n_steps = cfg.n_steps();
    let stride = cfg.observable_stride;
    let settings = PeakSettings {
        threshold: cfg.peak_threshold,
        merge_width: cfg.merge_width,
    };
    let mut snap_steps: Vec<(usize, f64)> = cfg
        .snapshot_times
        .iter()
        .map(|&t| (((t / dt).round() as usize).min(n_steps), t))
        .collect();
    snap_steps.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut plan = StepPlan::with_threads(cfg.grid.clone(), dt, cfg.physical.eta, threads);
    let mut field = f0.clone();
    let mut samples = Vec::with_capacity(n_steps / stride + 2);
    let mut snapshots = Vec::with_capacity(snap_steps.len());
    let mut next_snap = 0;

    let mut step = 0usize;
    loop {
        let tau = step as f64 * dt;
        check_field(&field, tau)?;
        if step.is_multiple_of(GUARD_INTERVAL) || step == n_steps {
            check_momentum(&mut plan, &field, tau)?;
        }
        if step.is_multiple_of(stride) || step == n_steps {
            let s = Sample::measure(&field, step, tau, settings);
            observer.on_sample(&s);
            samples.push(s);
        }
        while next_snap < snap_steps.len() && snap_steps[next_snap].0 == step {
            let snap = Snapshot {
                requested_tau: snap_steps[next_snap].1,
                tau,
                step,
                field: field.clone(),
            };
            observer.on_snapshot(&snap);
            snapshots.push(snap);
            next_snap += 1;
        }
        if step == n_steps {
            break;
        }
        let mut next = n_steps
            .min(next_multiple(step, stride))
            .min(next_multiple(step, GUARD_INTERVAL));
        if let Some(&(s, _)) = snap_steps.get(next_snap) {
            next = next.min(s);
        }
        plan.advance(&mut field, drive, tau, next - step);
        step = next;
    }

    let provenance = Provenance {
        code_version: env!("CARGO_PKG_VERSION"),
        wall_seconds: started.elapsed().as_secs_f64(),
        dt,
        n_steps,
        n_points: cfg.grid.len(),
        z_min: cfg.grid.z_min(),
        z_max: cfg.grid.z_max(),
        threads: plan.threads(),
    };
    Ok(RunRecord {
        config: cfg.clone(),
        samples,
        snapshots,
        final_field: field,
        provenance,
    })
}

fn next_multiple(step: usize, k: usize) -> usize {
    (step / k + 1) * k
}
