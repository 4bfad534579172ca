use serde::{Deserialize, Serialize};

use super::FemError;

/// Linear elastic solid under plane strain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// Young's modulus, MPa (N/mm^2).
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m^3
    pub density: f64,
    /// Out-of-plane depth, mm.
    pub thickness: f64,
}

impl MaterialModel {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, density: f64, thickness: f64) -> Result<Self, FemError> {
        let m = MaterialModel {
            youngs_modulus,
            poisson_ratio,
            density,
            thickness,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        let ok = self.youngs_modulus > 0.0
            && (0.0..0.5).contains(&self.poisson_ratio)
            && self.density > 0.0
            && self.thickness > 0.0
            && self.youngs_modulus.is_finite()
            && self.density.is_finite()
            && self.thickness.is_finite();
        if ok {
            Ok(())
        } else {
            Err(FemError::InvalidMaterial(format!("{self:?}")))
        }
    }

    /// Plane-strain Lame parameters (lambda, mu) in MPa.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs_modulus, self.poisson_ratio);
        let mu = e / (2.0 * (1.0 + nu));
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        (lambda, mu)
    }

    /// Density in tonne/mm^3, the mass unit consistent with N, mm and s.
    pub fn density_model_units(&self) -> f64 {
        self.density * 1e-12
    }
}

/// Simulation and meshing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Time step, s.
    pub dt: f64,
    pub cg_tol: f64,
    pub cg_maxiter: usize,
    /// Mass-proportional damping, 1/s.
    pub rayleigh_alpha: f64,
    /// Stiffness-proportional damping, s.
    pub rayleigh_beta: f64,
    /// Contact penalty, N/mm.
    pub penalty_stiffness: f64,
    pub friction_mu: f64,
    /// Tangential speed at which friction saturates, mm/s.
    pub friction_velocity: f64,
    /// Element size range, mm.
    pub h_min: f64,
    pub h_max: f64,
    /// Duration of the closing ramp, s.
    pub t_grip: f64,
    /// Kinetic energy below which the grip counts as settled, J.
    pub settle_energy: f64,
    /// Longest hold after the ramp before giving up on settling, s.
    pub settle_time_max: f64,
    /// Self-contact activation distance, mm.
    pub self_contact_distance: f64,
    /// Self-contact penalty, N/mm.
    pub self_contact_stiffness: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m^3
    pub density: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.005,
            cg_tol: 1e-6,
            cg_maxiter: 1000,
            rayleigh_alpha: 1.0,
            rayleigh_beta: 0.01,
            penalty_stiffness: 10.0,
            friction_mu: 0.8,
            friction_velocity: 1.0,
            h_min: 1.0,
            h_max: 3.0,
            t_grip: 1.0,
            settle_energy: 1e-8,
            settle_time_max: 1.0,
            self_contact_distance: 0.3,
            self_contact_stiffness: 10.0,
            youngs_modulus: 11.6,
            poisson_ratio: 0.49,
            density: 1150.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            (self.dt > 0.0, "dt must be positive"),
            (self.cg_tol > 0.0, "cg_tol must be positive"),
            (self.cg_maxiter >= 1, "cg_maxiter must be at least 1"),
            (self.rayleigh_alpha >= 0.0, "rayleigh_alpha must be non-negative"),
            (self.rayleigh_beta >= 0.0, "rayleigh_beta must be non-negative"),
            (self.penalty_stiffness > 0.0, "penalty_stiffness must be positive"),
            (self.friction_mu >= 0.0, "friction_mu must be non-negative"),
            (self.friction_velocity > 0.0, "friction_velocity must be positive"),
            (self.h_min > 0.0 && self.h_min <= self.h_max, "need 0 < h_min <= h_max"),
            (self.t_grip > 0.0, "t_grip must be positive"),
            (self.settle_energy > 0.0, "settle_energy must be positive"),
            (self.settle_time_max >= 0.0, "settle_time_max must be non-negative"),
            (self.self_contact_distance > 0.0, "self_contact_distance must be positive"),
            (self.self_contact_stiffness > 0.0, "self_contact_stiffness must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(msg.to_string());
            }
        }
        MaterialModel::new(self.youngs_modulus, self.poisson_ratio, self.density, 1.0)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    pub fn material(&self, thickness: f64) -> Result<MaterialModel, FemError> {
        MaterialModel::new(self.youngs_modulus, self.poisson_ratio, self.density, thickness)
    }

    /// Settle threshold in N*mm.
    pub fn settle_energy_model_units(&self) -> f64 {
        self.settle_energy * 1e3
    }
}
