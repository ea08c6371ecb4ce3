use std::f64::consts::PI;

use crate::error::GridError;

/// Uniform periodic grid in the cantilever coordinate with its conjugate
/// momentum grid.
///
/// Points are `z_j = z_min + j * dz` for `j = 0..n_points`; `z_max` itself is
/// identified with `z_min`. Momenta are stored in transform order: first the
/// non-negative frequencies, then the negative ones, so that index `m` of the
/// momentum array matches bin `m` of a forward FFT.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    z_min: f64,
    z_max: f64,
    n_points: usize,
    dz: f64,
    positions: Vec<f64>,
    momenta: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(z_min: f64, z_max: f64, n_points: usize) -> Result<Self, GridError> {
        if !z_min.is_finite() || !z_max.is_finite() {
            return Err(GridError::NonFinite);
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(GridError::BadPointCount(n_points));
        }
        if z_max <= z_min {
            return Err(GridError::DegenerateInterval { z_min, z_max });
        }
        let length = z_max - z_min;
        let dz = length / n_points as f64;
        let positions = (0..n_points).map(|j| z_min + j as f64 * dz).collect();
        let dp = 2.0 * PI / length;
        let half = n_points / 2;
        let momenta = (0..n_points)
            .map(|m| {
                let k = if m < half { m as f64 } else { m as f64 - n_points as f64 };
                k * dp
            })
            .collect();
        Ok(Self {
            z_min,
            z_max,
            n_points,
            dz,
            positions,
            momenta,
        })
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Momenta in FFT bin order.
    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    pub fn max_momentum(&self) -> f64 {
        PI / self.dz
    }

    /// Number of points in the outer 5% band on each side, used by the edge
    /// leak monitor.
    pub fn edge_band(&self) -> usize {
        (self.n_points / 20).max(1)
    }

    pub fn index_of(&self, z: f64) -> usize {
        let j = ((z - self.z_min) / self.dz).round();
        (j.max(0.0) as usize).min(self.n_points - 1)
    }
}

pub fn make_grid(z_min: f64, z_max: f64, n_points: usize) -> Result<SpatialGrid, GridError> {
    SpatialGrid::new(z_min, z_max, n_points)
}
