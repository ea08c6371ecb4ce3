use std::f64::consts::PI;
use std::ops::{Index, IndexMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::SpatialGrid;
use crate::params::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

/// One of the four spin basis states `|s1 s2>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    UpUp,
    UpDown,
    DownUp,
    DownDown,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::UpUp,
        Component::UpDown,
        Component::DownUp,
        Component::DownDown,
    ];

    pub fn new(s1: Spin, s2: Spin) -> Self {
        match (s1, s2) {
            (Spin::Up, Spin::Up) => Component::UpUp,
            (Spin::Up, Spin::Down) => Component::UpDown,
            (Spin::Down, Spin::Up) => Component::DownUp,
            (Spin::Down, Spin::Down) => Component::DownDown,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn first(self) -> Spin {
        match self {
            Component::UpUp | Component::UpDown => Spin::Up,
            _ => Spin::Down,
        }
    }

    pub fn second(self) -> Spin {
        match self {
            Component::UpUp | Component::DownUp => Spin::Up,
            _ => Spin::Down,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Component::UpUp => "uu",
            Component::UpDown => "ud",
            Component::DownUp => "du",
            Component::DownDown => "dd",
        }
    }
}

/// The two components sharing a fixed state of the remote spin. The drive
/// only mixes components within a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinPair {
    /// `(u_uu, u_du)`: remote spin up.
    RemoteUp,
    /// `(u_ud, u_dd)`: remote spin down.
    RemoteDown,
}

impl SpinPair {
    pub const BOTH: [SpinPair; 2] = [SpinPair::RemoteUp, SpinPair::RemoteDown];

    /// `(first spin up, first spin down)` components of the pair.
    pub fn components(self) -> (Component, Component) {
        match self {
            SpinPair::RemoteUp => (Component::UpUp, Component::DownUp),
            SpinPair::RemoteDown => (Component::UpDown, Component::DownDown),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Position,
    Momentum,
}

/// Four complex amplitudes `u_{s1 s2}` sampled on one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: Arc<SpatialGrid>,
    components: [Vec<Complex64>; 4],
    representation: Representation,
}

impl SpinorField {
    pub fn zeros(grid: Arc<SpatialGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            components: std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); n]),
            representation: Representation::Position,
        }
    }

    /// Builds a position-space field from four arrays. Returns `None` if any
    /// array length differs from the grid size.
    pub fn from_components(grid: Arc<SpatialGrid>, components: [Vec<Complex64>; 4]) -> Option<Self> {
        components.iter().all(|c| c.len() == grid.len()).then_some(Self {
            grid,
            components,
            representation: Representation::Position,
        })
    }

    /// Product of a coherent cantilever state with `(|uu> + |dd>)/sqrt(2)`.
    ///
    /// The discrete field is renormalized so that `norm2() == 1` to round-off.
    pub fn entangled_initial(grid: Arc<SpatialGrid>, params: &PhysicalParams) -> Self {
        let packet = coherent_state(&grid, params.alpha);
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let mut f = Self::zeros(grid);
        for (dst, src) in f[Component::UpUp].iter_mut().zip(&packet) {
            *dst = src * amp;
        }
        for (dst, src) in f[Component::DownDown].iter_mut().zip(&packet) {
            *dst = src * amp;
        }
        f.normalize();
        f
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn components(&self) -> &[Vec<Complex64>; 4] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Vec<Complex64>; 4] {
        &mut self.components
    }

    /// `sum_{s1,s2} sum_j |u(z_j)|^2 * measure`, where the measure is `dz` in
    /// position space and `dp` in momentum space.
    pub fn norm2(&self) -> f64 {
        self.components.iter().map(|c| sum_sq(c)).sum::<f64>() * self.measure()
    }

    /// Probability carried by the remote-up and remote-down pairs.
    pub fn pair_masses(&self) -> (f64, f64) {
        let m = self.measure();
        let mass = |p: SpinPair| {
            let (a, b) = p.components();
            (sum_sq(&self[a]) + sum_sq(&self[b])) * m
        };
        (mass(SpinPair::RemoteUp), mass(SpinPair::RemoteDown))
    }

    pub fn scale(&mut self, k: f64) {
        for c in &mut self.components {
            for v in c.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn normalize(&mut self) {
        let n = self.norm2();
        if n > 0.0 {
            self.scale(1.0 / n.sqrt());
        }
    }

    /// True if every amplitude is finite.
    pub fn is_finite(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    /// `sqrt(sum |a - b|^2 * dz)` over all four components.
    pub fn l2_distance(&self, other: &SpinorField) -> f64 {
        let d: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>())
            .sum();
        (d * self.measure()).sqrt()
    }

    /// Continuous-normalized momentum amplitudes
    /// `u(p_m) = dz / sqrt(2 pi) * sum_j u(z_j) exp(-i p_m z_j)`.
    pub fn to_momentum(&self) -> SpinorField {
        match self.representation {
            Representation::Momentum => self.clone(),
            Representation::Position => {
                let n = self.grid.len();
                let fft = FftPlanner::new().plan_fft_forward(n);
                let pref = self.grid.dz() / (2.0 * PI).sqrt();
                let z_min = self.grid.z_min();
                let mut out = self.clone();
                for c in &mut out.components {
                    fft.process(c);
                    for (v, &p) in c.iter_mut().zip(self.grid.momenta()) {
                        *v *= Complex64::from_polar(pref, -p * z_min);
                    }
                }
                out.representation = Representation::Momentum;
                out
            }
        }
    }

    pub fn to_position(&self) -> SpinorField {
        match self.representation {
            Representation::Position => self.clone(),
            Representation::Momentum => {
                let n = self.grid.len();
                let ifft = FftPlanner::new().plan_fft_inverse(n);
                let pref = (2.0 * PI).sqrt() / (self.grid.dz() * n as f64);
                let z_min = self.grid.z_min();
                let mut out = self.clone();
                for c in &mut out.components {
                    for (v, &p) in c.iter_mut().zip(self.grid.momenta()) {
                        *v *= Complex64::from_polar(pref, p * z_min);
                    }
                    ifft.process(c);
                }
                out.representation = Representation::Position;
                out
            }
        }
    }

    fn measure(&self) -> f64 {
        match self.representation {
            Representation::Position => self.grid.dz(),
            Representation::Momentum => 2.0 * PI / (self.grid.dz() * self.grid.len() as f64),
        }
    }
}

impl Index<Component> for SpinorField {
    type Output = Vec<Complex64>;

    fn index(&self, c: Component) -> &Vec<Complex64> {
        &self.components[c.index()]
    }
}

impl IndexMut<Component> for SpinorField {
    fn index_mut(&mut self, c: Component) -> &mut Vec<Complex64> {
        &mut self.components[c.index()]
    }
}

/// Oscillator coherent state `pi^(-1/4) exp(-z^2/2 + sqrt2 alpha z - alpha^2/2 - |alpha|^2/2)`
/// on the grid; for real `alpha` this is a Gaussian centred at `sqrt2 alpha`.
pub fn coherent_state(grid: &SpatialGrid, alpha: Complex64) -> Vec<Complex64> {
    let norm = PI.powf(-0.25);
    let z0 = std::f64::consts::SQRT_2 * alpha.re;
    let p0 = std::f64::consts::SQRT_2 * alpha.im;
    grid.positions()
        .iter()
        .map(|&z| {
            let amp = norm * (-(z - z0).powi(2) / 2.0).exp();
            Complex64::from_polar(amp, p0 * z - alpha.re * alpha.im)
        })
        .collect()
}

/// Oscillator eigenfunction with `n` quanta, via the Hermite recurrence.
pub fn oscillator_eigenstate(grid: &SpatialGrid, n: usize) -> Vec<Complex64> {
    grid.positions()
        .iter()
        .map(|&z| {
            // normalized Hermite functions: psi_{k+1} = sqrt(2/(k+1)) z psi_k - sqrt(k/(k+1)) psi_{k-1}
            let mut prev = 0.0;
            let mut cur = PI.powf(-0.25) * (-z * z / 2.0).exp();
            for k in 0..n {
                let kf = k as f64;
                let next = (2.0 / (kf + 1.0)).sqrt() * z * cur - (kf / (kf + 1.0)).sqrt() * prev;
                prev = cur;
                cur = next;
            }
            Complex64::new(cur, 0.0)
        })
        .collect()
}

pub(crate) fn sum_sq(c: &[Complex64]) -> f64 {
    c.iter().map(|v| v.norm_sqr()).sum()
}
