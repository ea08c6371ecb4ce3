//! Drive schedules: the rf amplitude `eps(tau)` and the rf phase derivative
//! `phi_dot(tau)` in the rotating frame.

use std::fmt;

use crate::error::ScheduleError;

/// Anything that can supply `(eps, phi_dot)` at a time `tau >= 0`.
///
/// The propagator and oracle are generic over this trait so custom schedules
/// can be plugged in without registering them.
pub trait Drive {
    fn eps(&self, tau: f64) -> f64;
    fn phi_dot(&self, tau: f64) -> f64;
}

/// Registered schedules, selected by identifier from a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum DriveSchedule {
    /// Linear ramp of `eps` with a linear sweep of `phi_dot` up to the switch
    /// time, then constant `eps` and sinusoidal `phi_dot` at the cantilever
    /// frequency (cyclic adiabatic inversion).
    PaperEq6 {
        eps_slope: f64,
        eps_plateau: f64,
        switch_time: f64,
        phi_dot_start: f64,
        phi_dot_slope: f64,
        modulation: f64,
    },
    /// Constant `eps` with `phi_dot = amplitude * sin(omega * tau)`.
    Sine { eps: f64, amplitude: f64, omega: f64 },
    /// No drive at all.
    Off,
}

impl DriveSchedule {
    pub const IDS: [&'static str; 3] = ["paper-eq6", "sine", "off"];

    pub fn paper() -> Self {
        DriveSchedule::PaperEq6 {
            eps_slope: 20.0,
            eps_plateau: 400.0,
            switch_time: 20.0,
            phi_dot_start: -600.0,
            phi_dot_slope: 30.0,
            modulation: 1000.0,
        }
    }

    /// Small-instance schedule used for oracle comparisons: `eps = 5`,
    /// `phi_dot = 2 sin(tau)`.
    pub fn toy() -> Self {
        DriveSchedule::Sine {
            eps: 5.0,
            amplitude: 2.0,
            omega: 1.0,
        }
    }

    /// Default-parameter schedule for a registered identifier.
    pub fn from_id(id: &str) -> Result<Self, ScheduleError> {
        match id {
            "paper-eq6" => Ok(Self::paper()),
            "sine" => Ok(Self::toy()),
            "off" => Ok(DriveSchedule::Off),
            other => Err(ScheduleError::UnknownSchedule(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            DriveSchedule::PaperEq6 { .. } => "paper-eq6",
            DriveSchedule::Sine { .. } => "sine",
            DriveSchedule::Off => "off",
        }
    }

    /// Named parameters in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            DriveSchedule::PaperEq6 {
                eps_slope,
                eps_plateau,
                switch_time,
                phi_dot_start,
                phi_dot_slope,
                modulation,
            } => vec![
                ("eps_slope", eps_slope),
                ("eps_plateau", eps_plateau),
                ("switch_time", switch_time),
                ("phi_dot_start", phi_dot_start),
                ("phi_dot_slope", phi_dot_slope),
                ("modulation", modulation),
            ],
            DriveSchedule::Sine { eps, amplitude, omega } => {
                vec![("eps", eps), ("amplitude", amplitude), ("omega", omega)]
            }
            DriveSchedule::Off => Vec::new(),
        }
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), ScheduleError> {
        if !value.is_finite() {
            return Err(ScheduleError::NonFiniteParameter(name.to_string()));
        }
        let id = self.id();
        let slot = match (self, name) {
            (DriveSchedule::PaperEq6 { eps_slope, .. }, "eps_slope") => eps_slope,
            (DriveSchedule::PaperEq6 { eps_plateau, .. }, "eps_plateau") => eps_plateau,
            (DriveSchedule::PaperEq6 { switch_time, .. }, "switch_time") => switch_time,
            (DriveSchedule::PaperEq6 { phi_dot_start, .. }, "phi_dot_start") => phi_dot_start,
            (DriveSchedule::PaperEq6 { phi_dot_slope, .. }, "phi_dot_slope") => phi_dot_slope,
            (DriveSchedule::PaperEq6 { modulation, .. }, "modulation") => modulation,
            (DriveSchedule::Sine { eps, .. }, "eps") => eps,
            (DriveSchedule::Sine { amplitude, .. }, "amplitude") => amplitude,
            (DriveSchedule::Sine { omega, .. }, "omega") => omega,
            _ => {
                return Err(ScheduleError::UnknownParameter {
                    schedule: id.to_string(),
                    param: name.to_string(),
                })
            }
        };
        *slot = value;
        Ok(())
    }

    pub fn epsilon(&self, tau: f64) -> Result<f64, ScheduleError> {
        check_tau(tau)?;
        Ok(Drive::eps(self, tau))
    }

    pub fn phi_dot(&self, tau: f64) -> Result<f64, ScheduleError> {
        check_tau(tau)?;
        Ok(Drive::phi_dot(self, tau))
    }

    /// Rotating-frame effective field `(eps, 0, -phi_dot)`, without the
    /// position-dependent coupling term.
    pub fn effective_field(&self, tau: f64) -> Result<[f64; 3], ScheduleError> {
        check_tau(tau)?;
        Ok(effective_field(self, tau))
    }

    /// Upper bound on `|phi_dot|` over `[0, t_final]`, used for the step-size
    /// bound. Exact for the registered schedules.
    pub fn max_abs_phi_dot(&self, t_final: f64) -> f64 {
        match *self {
            DriveSchedule::PaperEq6 {
                switch_time,
                phi_dot_start,
                phi_dot_slope,
                modulation,
                ..
            } => {
                let ramp_end = t_final.min(switch_time);
                let ramp = phi_dot_start
                    .abs()
                    .max((phi_dot_start + phi_dot_slope * ramp_end).abs());
                let osc = if t_final > switch_time {
                    let span = t_final - switch_time;
                    if span >= std::f64::consts::FRAC_PI_2 {
                        modulation.abs()
                    } else {
                        (modulation * span.sin()).abs()
                    }
                } else {
                    0.0
                };
                ramp.max(osc)
            }
            DriveSchedule::Sine { amplitude, omega, .. } => {
                if (omega * t_final).abs() >= std::f64::consts::FRAC_PI_2 {
                    amplitude.abs()
                } else {
                    (amplitude * (omega * t_final).sin()).abs()
                }
            }
            DriveSchedule::Off => 0.0,
        }
    }
}

impl Drive for DriveSchedule {
    fn eps(&self, tau: f64) -> f64 {
        match *self {
            DriveSchedule::PaperEq6 {
                eps_slope,
                eps_plateau,
                switch_time,
                ..
            } => {
                if tau <= switch_time {
                    eps_slope * tau
                } else {
                    eps_plateau
                }
            }
            DriveSchedule::Sine { eps, .. } => eps,
            DriveSchedule::Off => 0.0,
        }
    }

    fn phi_dot(&self, tau: f64) -> f64 {
        match *self {
            DriveSchedule::PaperEq6 {
                switch_time,
                phi_dot_start,
                phi_dot_slope,
                modulation,
                ..
            } => {
                if tau <= switch_time {
                    phi_dot_start + phi_dot_slope * tau
                } else {
                    modulation * (tau - switch_time).sin()
                }
            }
            DriveSchedule::Sine { amplitude, omega, .. } => amplitude * (omega * tau).sin(),
            DriveSchedule::Off => 0.0,
        }
    }
}

impl fmt::Display for DriveSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())?;
        for (k, v) in self.params() {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

pub fn effective_field<D: Drive + ?Sized>(drive: &D, tau: f64) -> [f64; 3] {
    [drive.eps(tau), 0.0, -drive.phi_dot(tau)]
}

fn check_tau(tau: f64) -> Result<(), ScheduleError> {
    if tau < 0.0 || tau.is_nan() {
        Err(ScheduleError::NegativeTime(tau))
    } else {
        Ok(())
    }
}
