//! Dense reference propagator for small grids.
//!
//! Each remote-spin pair evolves under a `2n x 2n` Hamiltonian
//! `[[K + V + D, -eps/2], [-eps/2, K + V - D]]` with the spectral kinetic
//! matrix `K`, harmonic potential `V = z^2/2` and `D = phi_dot/2 - eta z`.
//! Time is cut into intervals on which `H` is frozen at the interval midpoint
//! and its exponential applied to machine precision.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::config::SimConfig;
use crate::error::OracleError;
use crate::field::{SpinPair, SpinorField};
use crate::grid::SpatialGrid;
use crate::params::PhysicalParams;
use crate::schedule::Drive;

pub const MAX_ORACLE_POINTS: usize = 256;

/// Real symmetric Hamiltonian of one remote-spin pair at a fixed time, in the
/// basis `(first spin, grid point)` with index `s1 * n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHamiltonian {
    matrix: DMatrix<f64>,
    n_points: usize,
}

impl DenseHamiltonian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        2 * self.n_points
    }

    /// `max |H - H^T|` entrywise.
    pub fn hermiticity_residual(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

/// Spectral kinetic matrix `F^-1 diag(p^2/2) F`. With `z_j - z_k = (j-k) dz`
/// the sine parts cancel pairwise (and vanish at the Nyquist bin), leaving a
/// real symmetric matrix.
pub fn kinetic_matrix(grid: &SpatialGrid) -> DMatrix<f64> {
    let n = grid.len();
    let p = grid.momenta();
    let dz = grid.dz();
    // K_jk depends only on (j - k) mod n
    let row: Vec<f64> = (0..n)
        .map(|d| {
            p.iter()
                .map(|&pm| 0.5 * pm * pm * (pm * d as f64 * dz).cos())
                .sum::<f64>()
                / n as f64
        })
        .collect();
    DMatrix::from_fn(n, n, |j, k| row[(j + n - k) % n])
}

fn check_size(grid: &SpatialGrid) -> Result<(), OracleError> {
    if grid.len() > MAX_ORACLE_POINTS {
        Err(OracleError::GridTooLarge(grid.len()))
    } else {
        Ok(())
    }
}

pub fn assemble<D: Drive + ?Sized>(
    grid: &SpatialGrid,
    params: &PhysicalParams,
    drive: &D,
    tau: f64,
) -> Result<DenseHamiltonian, OracleError> {
    check_size(grid)?;
    Ok(assemble_with(
        &kinetic_matrix(grid),
        grid,
        params.eta,
        drive.eps(tau),
        drive.phi_dot(tau),
    ))
}

fn assemble_with(kinetic: &DMatrix<f64>, grid: &SpatialGrid, eta: f64, eps: f64, phi_dot: f64) -> DenseHamiltonian {
    let n = grid.len();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(kinetic);
    h.view_mut((n, n), (n, n)).copy_from(kinetic);
    for (j, &z) in grid.positions().iter().enumerate() {
        let v = 0.5 * z * z;
        let d = 0.5 * phi_dot - eta * z;
        h[(j, j)] += v + d;
        h[(n + j, n + j)] += v - d;
        h[(j, n + j)] = -0.5 * eps;
        h[(n + j, j)] = -0.5 * eps;
    }
    DenseHamiltonian { matrix: h, n_points: n }
}

/// Evolves `f0` from 0 to `cfg.t_final` with midpoint-frozen exact
/// exponentials on intervals of length at most `dt_oracle`.
pub fn oracle_evolve<D: Drive + ?Sized>(
    f0: &SpinorField,
    cfg: &SimConfig,
    drive: &D,
    dt_oracle: f64,
) -> Result<SpinorField, OracleError> {
    check_size(&cfg.grid)?;
    let limit = cfg.dt / 4.0;
    if dt_oracle > limit * (1.0 + 1e-12) {
        return Err(OracleError::IntervalTooCoarse { dt_oracle, limit });
    }
    Ok(evolve_dense(
        f0,
        &cfg.grid,
        cfg.physical.eta,
        drive,
        cfg.t_final,
        dt_oracle,
    ))
}

/// Same as [`oracle_evolve`] without the interval guard; used for
/// self-convergence checks.
pub fn evolve_dense<D: Drive + ?Sized>(
    f0: &SpinorField,
    grid: &Arc<SpatialGrid>,
    eta: f64,
    drive: &D,
    t_final: f64,
    dt_oracle: f64,
) -> SpinorField {
    let n = grid.len();
    let kinetic = kinetic_matrix(grid);
    let intervals = ((t_final / dt_oracle).ceil() as usize).max(1);
    let h = t_final / intervals as f64;

    // (re, im) parts per pair; H is real so they never mix inside a product
    let mut states: Vec<(DVector<f64>, DVector<f64>)> = SpinPair::BOTH
        .iter()
        .map(|pair| {
            let (a, b) = pair.components();
            let both = || f0[a].iter().chain(&f0[b]);
            (
                DVector::from_iterator(2 * n, both().map(|x| x.re)),
                DVector::from_iterator(2 * n, both().map(|x| x.im)),
            )
        })
        .collect();
    if t_final > 0.0 {
        for k in 0..intervals {
            let tau = (k as f64 + 0.5) * h;
            let ham = assemble_with(&kinetic, grid, eta, drive.eps(tau), drive.phi_dot(tau));
            for (re, im) in &mut states {
                if re.amax() == 0.0 && im.amax() == 0.0 {
                    continue;
                }
                apply_exponential(&ham.matrix, h, re, im);
            }
        }
    }

    let mut out = SpinorField::zeros(grid.clone());
    for (pair, (re, im)) in SpinPair::BOTH.iter().zip(&states) {
        let (a, b) = pair.components();
        let joined: Vec<Complex64> = re.iter().zip(im.iter()).map(|(&r, &i)| Complex64::new(r, i)).collect();
        out[a].copy_from_slice(&joined[..n]);
        out[b].copy_from_slice(&joined[n..]);
    }
    out
}

/// `psi <- exp(-i H t) psi` for real symmetric `H`, by Taylor series summed
/// until the terms drop below machine precision. The interval is cut so each
/// piece has `|H| t <= 1/2`, which keeps the series free of cancellation.
pub fn apply_exponential(h: &DMatrix<f64>, t: f64, re: &mut DVector<f64>, im: &mut DVector<f64>) {
    // induced infinity norm bounds the spectral radius
    let bound = h
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let pieces = ((bound * t.abs() / 0.5).ceil() as usize).max(1);
    let s = t / pieces as f64;
    for _ in 0..pieces {
        let scale = re.norm().hypot(im.norm());
        let (mut tr, mut ti) = (re.clone(), im.clone());
        for k in 1..=60 {
            // term_k = (-i s / k) H term_{k-1}
            let c = s / k as f64;
            let hr = h * &tr;
            let hi = h * &ti;
            tr = hi * c;
            ti = hr * -c;
            *re += &tr;
            *im += &ti;
            if tr.norm().hypot(ti.norm()) <= f64::EPSILON * 1e-2 * scale {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{oscillator_eigenstate, Component};
    use crate::grid::make_grid;
    use crate::schedule::DriveSchedule;

    fn toy_grid() -> Arc<SpatialGrid> {
        Arc::new(make_grid(-8.0, 8.0, 64).unwrap())
    }

    #[test]
    fn free_hamiltonian_has_identical_blocks() {
        let g = toy_grid();
        let params = PhysicalParams::new(0.0, Complex64::new(0.0, 0.0)).unwrap();
        let h = assemble(&g, &params, &DriveSchedule::Off, 0.0).unwrap();
        let m = h.matrix();
        assert_eq!(m.view((0, 0), (64, 64)), m.view((64, 64), (64, 64)));
        assert_eq!(m.view((0, 64), (64, 64)).amax(), 0.0);
        assert!(h.hermiticity_residual() <= 1e-12);
    }

    #[test]
    fn drive_couples_with_scaled_identity() {
        let g = toy_grid();
        let s = DriveSchedule::toy();
        let h = assemble(&g, &PhysicalParams::paper(), &s, 0.7).unwrap();
        let off = h.matrix().view((0, 64), (64, 64)).into_owned();
        assert_eq!(off, DMatrix::<f64>::identity(64, 64) * -2.5);
        assert!(h.hermiticity_residual() <= 1e-12);
    }

    #[test]
    fn kinetic_matrix_matches_fft_route() {
        // K applied to a vector equals ifft(p^2/2 * fft(v))
        let g = toy_grid();
        let k = kinetic_matrix(&g);
        let v: Vec<Complex64> = (0..64)
            .map(|j| Complex64::new((j as f64 * 0.3).sin(), (j as f64 * 0.11).cos()))
            .collect();
        let dense = k.map(|x| Complex64::new(x, 0.0)) * DVector::from_vec(v.clone());
        let mut planner = rustfft::FftPlanner::new();
        let mut buf = v;
        planner.plan_fft_forward(64).process(&mut buf);
        for (b, p) in buf.iter_mut().zip(g.momenta()) {
            *b *= 0.5 * p * p / 64.0;
        }
        planner.plan_fft_inverse(64).process(&mut buf);
        for (a, b) in dense.iter().zip(&buf) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn too_large_grid_rejected() {
        let g = make_grid(-8.0, 8.0, 512).unwrap();
        assert_eq!(
            assemble(&g, &PhysicalParams::paper(), &DriveSchedule::Off, 0.0),
            Err(OracleError::GridTooLarge(512))
        );
    }

    #[test]
    fn coarse_interval_rejected() {
        let cfg = SimConfig::toy();
        let f0 = SpinorField::entangled_initial(cfg.grid.clone(), &cfg.physical);
        assert!(matches!(
            oracle_evolve(&f0, &cfg, &cfg.schedule, cfg.dt),
            Err(OracleError::IntervalTooCoarse { .. })
        ));
    }

    #[test]
    fn taylor_exponential_matches_eigendecomposition() {
        let g = Arc::new(make_grid(-6.0, 6.0, 32).unwrap());
        let ham = assemble(&g, &PhysicalParams::paper(), &DriveSchedule::toy(), 0.4).unwrap();
        let m = ham.matrix();
        let re0 = DVector::from_fn(64, |j, _| (j as f64 * 0.37).sin());
        let im0 = DVector::from_fn(64, |j, _| (j as f64 * 0.21).cos());
        for t in [1e-5, 0.01, 0.7] {
            let (mut re, mut im) = (re0.clone(), im0.clone());
            apply_exponential(m, t, &mut re, &mut im);
            let eig = m.clone().symmetric_eigen();
            let v = &eig.eigenvectors;
            let (cr, ci) = (v.tr_mul(&re0), v.tr_mul(&im0));
            let (mut er, mut ei) = (cr.clone(), ci.clone());
            for (j, e) in eig.eigenvalues.iter().enumerate() {
                let (cs, sn) = ((e * t).cos(), (e * t).sin());
                // (cr + i ci)(cos - i sin)
                er[j] = cr[j] * cs + ci[j] * sn;
                ei[j] = ci[j] * cs - cr[j] * sn;
            }
            let (er, ei) = (v * er, v * ei);
            let err = (&re - er).norm().hypot((&im - ei).norm());
            assert!(err < 1e-11 * re0.norm().hypot(im0.norm()), "t = {t}: {err:e}");
        }
    }

    #[test]
    fn ground_state_is_stationary() {
        let g = Arc::new(make_grid(-10.0, 10.0, 128).unwrap());
        let mut f0 = SpinorField::zeros(g.clone());
        f0[Component::UpUp] = oscillator_eigenstate(&g, 0);
        f0.normalize();
        let out = evolve_dense(&f0, &g, 0.0, &DriveSchedule::Off, 1.3, 0.1);
        for (a, b) in out[Component::UpUp].iter().zip(&f0[Component::UpUp]) {
            assert!((a.norm() - b.norm()).abs() < 1e-8);
        }
        // global phase e^{-i tau/2}
        let j = 64;
        let phase = (out[Component::UpUp][j] / f0[Component::UpUp][j]).arg();
        assert!((phase + 0.65).abs() < 1e-6);
        assert!((out.norm2() - 1.0).abs() < 1e-10);
    }
}
