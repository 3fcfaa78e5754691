//! Drone power-consumption model.
//!
//! Forward flight, hover and execution power rates follow the momentum-theory
//! model for multirotors. The forward rate depends on the rotor induced
//! velocity, which is defined implicitly and solved by damped fixed-point
//! iteration.
//!
//! The simulator itself runs on a proportionally scaled set of rates
//! ([`PowerRates::simulation`]); the physical rates are kept as a separate
//! code path for reference and configuration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 10_000;
const RESIDUAL_TOLERANCE: f64 = 1e-12;

/// Physical constants describing one drone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Rotor diameter in meters.
    pub rotor_diameter: f64,
    pub rotor_count: u32,
    /// Total mass including battery and payload, kilograms.
    pub mass: f64,
    pub gravity: f64,
    /// Ground speed, m/s.
    pub speed: f64,
    /// Pitch angle for steady flight, radians.
    pub pitch_angle: f64,
    pub battery_efficiency: f64,
    /// Air density, kg/m³.
    pub air_density: f64,
    /// Drag force, newtons. Zero means calm air.
    pub drag_force: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::base_case()
    }
}

impl PhysicalParams {
    /// The base-case quadcopter: D = 0.254 m, 2.07 kg, 10 m/s, α = 0.0139 rad,
    /// η = 0.7, ρ = 1.2193, with g = 9.81, c = 4 and no drag.
    pub fn base_case() -> Self {
        Self {
            rotor_diameter: 0.254,
            rotor_count: 4,
            mass: 2.07,
            gravity: 9.81,
            speed: 10.0,
            pitch_angle: 0.0139,
            battery_efficiency: 0.7,
            air_density: 1.2193,
            drag_force: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, name: &'static str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: reason.to_string(),
                })
            }
        }
        let finite = [
            self.rotor_diameter,
            self.mass,
            self.gravity,
            self.speed,
            self.pitch_angle,
            self.battery_efficiency,
            self.air_density,
            self.drag_force,
        ]
        .iter()
        .all(|v| v.is_finite());
        check(finite, "energy", "all physical parameters must be finite")?;
        check(self.rotor_diameter > 0.0, "rotor_diameter", "must be > 0")?;
        check(self.rotor_count >= 1, "rotor_count", "must be >= 1")?;
        check(self.mass > 0.0, "mass", "must be > 0")?;
        check(self.gravity > 0.0, "gravity", "must be > 0")?;
        check(self.speed > 0.0, "speed", "must be > 0")?;
        check(
            self.battery_efficiency > 0.0 && self.battery_efficiency <= 1.0,
            "battery_efficiency",
            "must lie in (0, 1]",
        )?;
        check(self.air_density > 0.0, "air_density", "must be > 0")?;
        check(self.drag_force >= 0.0, "drag_force", "must be >= 0")?;
        Ok(())
    }

    /// Weight plus drag, the force the rotors must balance.
    pub fn thrust(&self) -> f64 {
        self.mass * self.gravity + self.drag_force
    }

    /// π·c·D²·ρ, the rotor disk term shared by the induced-velocity and hover equations.
    fn disk_term(&self) -> f64 {
        PI * f64::from(self.rotor_count) * self.rotor_diameter.powi(2) * self.air_density
    }

    /// Right-hand side of the induced-velocity equation evaluated at `v_s`.
    pub fn induced_velocity_rhs(&self, v_s: f64) -> f64 {
        let horizontal = self.speed * self.pitch_angle.cos();
        let vertical = self.speed * self.pitch_angle.sin() + v_s;
        2.0 * self.thrust() / (self.disk_term() * horizontal.hypot(vertical))
    }
}

/// Per-time-step energy rates used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerRates {
    pub p_forward: f64,
    pub p_hover: f64,
    /// Payload consumption while executing; hovering is charged separately.
    pub p_execute: f64,
}

impl Default for PowerRates {
    fn default() -> Self {
        Self::simulation()
    }
}

impl PowerRates {
    /// Scaled rates the experiments run on: forward 2.5, hover 4, execute 3.
    pub fn simulation() -> Self {
        Self {
            p_forward: 2.5,
            p_hover: 4.0,
            p_execute: 3.0,
        }
    }

    /// Caller-supplied rates, checked for strict positivity.
    pub fn custom(p_forward: f64, p_hover: f64, p_execute: f64) -> Result<Self> {
        let rates = Self {
            p_forward,
            p_hover,
            p_execute,
        };
        rates.validate()?;
        Ok(rates)
    }

    /// Physical rates for `params`, with `p_execute` supplied by the payload.
    pub fn from_physical(params: &PhysicalParams, p_execute: f64) -> Result<Self> {
        let v_s = solve_induced_velocity(params)?;
        Self::custom(forward_power(params, v_s), hover_power(params), p_execute)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("p_forward", self.p_forward),
            ("p_hover", self.p_hover),
            ("p_execute", self.p_execute),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("power rate must be finite and > 0, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Solves `v_s = RHS(v_s)` with the damped iterate `v ← (v + RHS(v)) / 2`
/// starting from 1 m/s.
pub fn solve_induced_velocity(params: &PhysicalParams) -> Result<f64> {
    params.validate()?;
    let mut v_s = 1.0;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let rhs = params.induced_velocity_rhs(v_s);
        residual = (v_s - rhs).abs();
        if residual < RESIDUAL_TOLERANCE * rhs.max(1.0) {
            return Ok(rhs);
        }
        v_s = 0.5 * (v_s + rhs);
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// Minimum power in forward flight: `(m·g + F_drag)(v·sin α + v_s) / η`.
pub fn forward_power(params: &PhysicalParams, v_s: f64) -> f64 {
    params.thrust() * (params.speed * params.pitch_angle.sin() + v_s) / params.battery_efficiency
}

/// Hover power: `(m·g + F_drag)^{3/2} / (η·√(½·π·c·D²·ρ))`.
pub fn hover_power(params: &PhysicalParams) -> f64 {
    params.thrust().powf(1.5) / (params.battery_efficiency * (0.5 * params.disk_term()).sqrt())
}
