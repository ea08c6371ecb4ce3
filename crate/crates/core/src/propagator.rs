//! Second-order split-operator stepping of the four coupled amplitudes.
//!
//! One step is `K(dt/2) V(dt) K(dt/2)` with
//! * `K`: kinetic phase `exp(-i p^2 dt / 4)` per half step, applied in
//!   momentum space;
//! * `V`: harmonic phase `exp(-i z^2 dt / 2)` on all four components times the
//!   exact exponential of the 2x2 spin block
//!   `[[phi_dot/2 - eta z, -eps/2], [-eps/2, -(phi_dot/2 - eta z)]]`,
//!   applied point by point to each remote-spin pair, with the drive evaluated
//!   at the step midpoint.
//!
//! Consecutive half kinetic factors are fused when no observation is needed
//! between steps, so an uninterrupted run costs one forward and one inverse
//! transform per component per step.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::EvolveError;
use crate::field::{Representation, SpinorField};
use crate::grid::SpatialGrid;
use crate::schedule::Drive;

/// Below this value of `Omega * dt` the spin block uses its Taylor series.
const SMALL_ANGLE: f64 = 1e-6;

/// Grid points per parallel work item in the potential step.
const CHUNK: usize = 512;

/// Exact `exp(-i dt M)` for `M = [[d, -eps/2], [-eps/2, -d]]`.
///
/// Stored as the three distinct entries; the matrix is symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinRotation {
    pub u11: Complex64,
    pub u12: Complex64,
    pub u22: Complex64,
}

impl SpinRotation {
    #[inline]
    pub fn new(d: f64, eps: f64, dt: f64) -> Self {
        let half_eps = 0.5 * eps;
        let omega = (d * d + half_eps * half_eps).sqrt();
        let x = omega * dt;
        // cos(x) and sin(x)/omega
        let (c, s_over) = if x < SMALL_ANGLE {
            let x2 = x * x;
            (1.0 - x2 / 2.0 + x2 * x2 / 24.0, dt * (1.0 - x2 / 6.0 + x2 * x2 / 120.0))
        } else {
            let (s, c) = x.sin_cos();
            (c, s / omega)
        };
        Self {
            u11: Complex64::new(c, -s_over * d),
            u12: Complex64::new(0.0, s_over * half_eps),
            u22: Complex64::new(c, s_over * d),
        }
    }

    #[inline]
    pub fn apply(&self, a: Complex64, b: Complex64) -> (Complex64, Complex64) {
        (self.u11 * a + self.u12 * b, self.u12 * a + self.u22 * b)
    }
}

/// Applies the exact 2x2 spin-block exponential to one amplitude pair.
pub fn spin_block_step(d: f64, eps: f64, dt: f64, pair: (Complex64, Complex64)) -> (Complex64, Complex64) {
    SpinRotation::new(d, eps, dt).apply(pair.0, pair.1)
}

/// Precomputed phases, transform plans and scratch space for stepping one
/// field on one grid with one time step.
pub struct StepPlan {
    grid: Arc<SpatialGrid>,
    dt: f64,
    eta: f64,
    kinetic_half: Vec<Complex64>,
    // Momentum-space factors with the 1/n of the inverse transform folded in.
    kinetic_half_scaled: Vec<Complex64>,
    kinetic_full_scaled: Vec<Complex64>,
    harmonic: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: [Vec<Complex64>; 4],
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for StepPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StepPlan")
            .field("n_points", &self.grid.len())
            .field("dt", &self.dt)
            .field("eta", &self.eta)
            .field("threads", &self.threads())
            .finish()
    }
}

impl StepPlan {
    pub fn new(grid: Arc<SpatialGrid>, dt: f64, eta: f64) -> Self {
        Self::with_threads(grid, dt, eta, 1)
    }

    /// As [`StepPlan::new`], using up to `threads` worker threads inside each
    /// step. Results are bit-identical for any thread count.
    pub fn with_threads(grid: Arc<SpatialGrid>, dt: f64, eta: f64, threads: usize) -> Self {
        let n = grid.len();
        let inv_n = 1.0 / n as f64;
        let kinetic_half: Vec<Complex64> = grid
            .momenta()
            .iter()
            .map(|&p| Complex64::from_polar(1.0, -p * p * dt / 4.0))
            .collect();
        let kinetic_half_scaled = kinetic_half.iter().map(|k| k * inv_n).collect();
        let kinetic_full_scaled = grid
            .momenta()
            .iter()
            .map(|&p| Complex64::from_polar(inv_n, -p * p * dt / 2.0))
            .collect();
        let harmonic = grid
            .positions()
            .iter()
            .map(|&z| Complex64::from_polar(1.0, -z * z * dt / 2.0))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        let pool = (threads > 1).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool")
        });
        Self {
            grid,
            dt,
            eta,
            kinetic_half,
            kinetic_half_scaled,
            kinetic_full_scaled,
            harmonic,
            forward,
            inverse,
            scratch: std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); scratch_len]),
            pool,
        }
    }

    /// Probability carried by the highest-|p| 5% of the momentum grid,
    /// summed over both signs. A growing value means the field is
    /// approaching the aliasing limit `pi / dz`.
    pub fn momentum_edge_mass(&mut self, field: &SpinorField) -> f64 {
        let n = self.grid.len();
        let band = self.grid.edge_band();
        let lo = (n / 2).saturating_sub(band);
        let hi = (n / 2 + band).min(n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut total = 0.0;
        for c in field.components() {
            buf.copy_from_slice(c);
            self.forward.process_with_scratch(&mut buf, &mut self.scratch[0]);
            total += buf[lo..hi].iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        // |FFT|^2 dz / n is the momentum density times dp
        total * self.grid.dz() / n as f64
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    /// Unit-modulus half-step kinetic phases `exp(-i p^2 dt / 4)` in FFT order.
    pub fn kinetic_half_phases(&self) -> &[Complex64] {
        &self.kinetic_half
    }

    /// Advances `field` by `n_steps` steps starting at `tau0`.
    ///
    /// The field must be in position space and on this plan's grid.
    pub fn advance<D: Drive + ?Sized>(&mut self, field: &mut SpinorField, drive: &D, tau0: f64, n_steps: usize) {
        debug_assert_eq!(field.representation(), Representation::Position);
        debug_assert_eq!(field.grid(), &*self.grid);
        if n_steps == 0 {
            return;
        }
        for k in 0..n_steps {
            let kinetic = if k == 0 {
                KineticFactor::Half
            } else {
                KineticFactor::Full
            };
            self.kinetic(field, kinetic);
            let tau_mid = tau0 + (k as f64 + 0.5) * self.dt;
            self.potential(field, drive.eps(tau_mid), drive.phi_dot(tau_mid));
        }
        self.kinetic(field, KineticFactor::Half);
    }

    /// One Strang step from `tau` to `tau + dt`.
    pub fn step<D: Drive + ?Sized>(&mut self, field: &mut SpinorField, drive: &D, tau: f64) {
        self.advance(field, drive, tau, 1);
    }

    fn kinetic(&mut self, field: &mut SpinorField, which: KineticFactor) {
        let factor = match which {
            KineticFactor::Half => &self.kinetic_half_scaled,
            KineticFactor::Full => &self.kinetic_full_scaled,
        };
        let forward = &self.forward;
        let inverse = &self.inverse;
        let one = |c: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>| {
            forward.process_with_scratch(c, scratch);
            for (v, k) in c.iter_mut().zip(factor) {
                *v *= k;
            }
            inverse.process_with_scratch(c, scratch);
        };
        let comps = field.components_mut();
        match &self.pool {
            None => {
                for (c, s) in comps.iter_mut().zip(self.scratch.iter_mut()) {
                    one(c, s);
                }
            }
            Some(pool) => pool.install(|| {
                comps
                    .par_iter_mut()
                    .zip(self.scratch.par_iter_mut())
                    .for_each(|(c, s)| one(c, s));
            }),
        }
    }

    fn potential(&mut self, field: &mut SpinorField, eps: f64, phi_dot: f64) {
        let dt = self.dt;
        let eta = self.eta;
        let half_phi = 0.5 * phi_dot;
        let positions = self.grid.positions();
        let harmonic = &self.harmonic;
        let [uu, ud, du, dd] = field.components_mut();
        let kernel =
            |offset: usize, uu: &mut [Complex64], ud: &mut [Complex64], du: &mut [Complex64], dd: &mut [Complex64]| {
                for i in 0..uu.len() {
                    let j = offset + i;
                    let rot = SpinRotation::new(half_phi - eta * positions[j], eps, dt);
                    let h = harmonic[j];
                    let u11 = rot.u11 * h;
                    let u12 = rot.u12 * h;
                    let u22 = rot.u22 * h;
                    let (a, b) = (uu[i], du[i]);
                    uu[i] = u11 * a + u12 * b;
                    du[i] = u12 * a + u22 * b;
                    let (a, b) = (ud[i], dd[i]);
                    ud[i] = u11 * a + u12 * b;
                    dd[i] = u12 * a + u22 * b;
                }
            };
        match &self.pool {
            None => kernel(0, uu, ud, du, dd),
            Some(pool) => pool.install(|| {
                uu.par_chunks_mut(CHUNK)
                    .zip(ud.par_chunks_mut(CHUNK))
                    .zip(du.par_chunks_mut(CHUNK))
                    .zip(dd.par_chunks_mut(CHUNK))
                    .enumerate()
                    .for_each(|(ci, (((a, b), c), d))| kernel(ci * CHUNK, a, b, c, d));
            }),
        }
    }
}

#[derive(Clone, Copy)]
enum KineticFactor {
    Half,
    Full,
}

/// Probability in the outer 5% of the grid on the (left, right) side.
pub fn edge_masses(field: &SpinorField) -> (f64, f64) {
    let n = field.grid().len();
    let band = field.grid().edge_band();
    let dz = field.grid().dz();
    let mut left = 0.0;
    let mut right = 0.0;
    for c in field.components() {
        left += c[..band].iter().map(|v| v.norm_sqr()).sum::<f64>();
        right += c[n - band..].iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    (left * dz, right * dz)
}

pub const EDGE_LEAK_LIMIT: f64 = 1e-6;

/// Same bound for the momentum edge band.
pub fn check_momentum(plan: &mut StepPlan, field: &SpinorField, tau: f64) -> Result<(), EvolveError> {
    let mass = plan.momentum_edge_mass(field);
    if mass > EDGE_LEAK_LIMIT {
        return Err(EvolveError::MomentumLeak { tau, mass });
    }
    Ok(())
}

/// Aborts with a diagnostic if the field is non-finite or has leaked into the
/// edge bands.
pub fn check_field(field: &SpinorField, tau: f64) -> Result<(), EvolveError> {
    if !field.is_finite() {
        return Err(EvolveError::NonFinite { tau });
    }
    let (left, right) = edge_masses(field);
    if left > EDGE_LEAK_LIMIT || right > EDGE_LEAK_LIMIT {
        return Err(EvolveError::EdgeLeak { tau, left, right });
    }
    Ok(())
}

/// Number of worker threads requested through `SPINOR_THREADS`; 1 if unset
/// or unparsable.
pub fn threads_from_env() -> usize {
    std::env::var("SPINOR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}
