use std::f64::consts::SQRT_2;

use num_complex::Complex64;

/// Physical constants of the dimensionless spin-cantilever model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Spin-cantilever coupling strength.
    pub eta: f64,
    /// Coherent-state amplitude of the initial cantilever wave packet.
    pub alpha: Complex64,
}

impl PhysicalParams {
    pub fn new(eta: f64, alpha: Complex64) -> Option<Self> {
        (eta >= 0.0 && eta.is_finite() && alpha.re.is_finite() && alpha.im.is_finite()).then_some(Self { eta, alpha })
    }

    /// `eta = 0.3`, `alpha = -10 sqrt(2)`.
    pub fn paper() -> Self {
        Self {
            eta: 0.3,
            alpha: Complex64::new(-10.0 * SQRT_2, 0.0),
        }
    }

    /// The rf carrier sits on the Larmor resonance.
    pub fn larmor_detuning(&self) -> f64 {
        0.0
    }

    /// Mean initial cantilever coordinate.
    pub fn z0(&self) -> f64 {
        SQRT_2 * self.alpha.re
    }

    /// Mean initial cantilever momentum.
    pub fn p0(&self) -> f64 {
        SQRT_2 * self.alpha.im
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_values() {
        let p = PhysicalParams::paper();
        assert!((p.z0() + 20.0).abs() < 1e-12);
        assert!((p.alpha.norm_sqr() - 200.0).abs() < 1e-9);
        assert_eq!(p.larmor_detuning(), 0.0);
    }

    #[test]
    fn negative_eta_rejected() {
        assert!(PhysicalParams::new(-0.1, Complex64::new(0.0, 0.0)).is_none());
        assert!(PhysicalParams::new(0.0, Complex64::new(1.0, 0.0)).is_some());
    }
}
