//! Physics of the damped phase field crystal model: the quartic
//! nonlinearity, the discrete nonlinear energy, the auxiliary-variable
//! field `b`, and the discrete energies tracked by the stability argument.
//!
//! Everything here is a pure function of fields and parameters. The only
//! failure modes are a nonlinear energy too close to zero (the auxiliary
//! quotient becomes singular) and a velocity with nonzero mean (the
//! H^-1 norm is undefined there).

use thiserror::Error;

use crate::grid::{self, Field};
use crate::spectral::{SolveError, SpectralPlan};

/// Values of the (shifted) nonlinear energy below this are treated as
/// singular: dividing by their square root would amplify round-off past
/// any useful bound.
pub const E1H_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("nonlinear energy {e1h:.3e} is below the floor {floor:.3e}; the auxiliary quotient is singular this close to z = 0")]
    DegenerateEnergy { e1h: f64, floor: f64 },
}

/// Model constants. `alpha` is tied to the undercooling, alpha = 1 - epsilon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Undercooling, in (0,1).
    pub epsilon: f64,
    /// Damping coefficient, >= 0. Strict dissipation needs beta > 0.
    pub beta: f64,
    /// Mobility, > 0.
    pub m: f64,
    /// Constant added under the square root of the auxiliary variable.
    /// Zero keeps the plain quotient; positive values keep it regular for
    /// fields near zero at the cost of shifting the pseudo energy by a
    /// constant (differences are unaffected).
    pub c0: f64,
}

impl ModelParams {
    pub fn new(epsilon: f64, beta: f64, m: f64, c0: f64) -> Result<Self, ModelError> {
        let bad = |name, value| Err(ModelError::BadParam { name, value });
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
            return bad("epsilon", epsilon);
        }
        if !beta.is_finite() || beta < 0.0 {
            return bad("beta", beta);
        }
        if !m.is_finite() || m <= 0.0 {
            return bad("m", m);
        }
        if !c0.is_finite() || c0 < 0.0 {
            return bad("c0", c0);
        }
        Ok(Self {
            epsilon,
            beta,
            m,
            c0,
        })
    }

    pub fn alpha(&self) -> f64 {
        1.0 - self.epsilon
    }
}

/// F'(z) = z^3, pointwise.
pub fn f_prime(z: &Field) -> Field {
    Field {
        grid: z.grid,
        data: z.data.mapv(|v| v * v * v),
    }
}

/// Quadrature of F(z) = z^4/4 over the cells: `sum_ij hx hy z_ij^4 / 4`.
pub fn e1h(z: &Field) -> f64 {
    let s: f64 = z
        .data
        .iter()
        .map(|v| {
            let v2 = v * v;
            v2 * v2
        })
        .sum();
    0.25 * z.grid.cell_area() * s
}

/// `E1h(z) + c0`, checked against [`E1H_FLOOR`]. The quantity whose square
/// root seeds the auxiliary variable and divides its quotient.
pub fn shifted_e1h(z: &Field, params: &ModelParams) -> Result<f64, ModelError> {
    let e = e1h(z) + params.c0;
    if e < E1H_FLOOR {
        return Err(ModelError::DegenerateEnergy {
            e1h: e,
            floor: E1H_FLOOR,
        });
    }
    Ok(e)
}

/// The auxiliary-variable field `b = F'(z) / sqrt(E1h(z) + c0)`.
///
/// Errors when the shifted energy sits below [`E1H_FLOOR`].
pub fn b_field(z_tilde: &Field, params: &ModelParams) -> Result<Field, ModelError> {
    let inv_root = 1.0 / shifted_e1h(z_tilde, params)?.sqrt();
    Ok(Field {
        grid: z_tilde.grid,
        data: z_tilde.data.mapv(|v| v * v * v * inv_root),
    })
}

/// Direct discretization of the free energy:
/// `1/2 ||lap z||_m^2 - ||grad z||^2 + (alpha/2) ||z||_m^2 + E1h(z)`.
pub fn original_energy(z: &Field, params: &ModelParams) -> f64 {
    let lap = grid::laplacian(z);
    let gn = grid::grad_norm(z);
    0.5 * grid::inner_m(&lap, &lap) - gn * gn + 0.5 * params.alpha() * grid::inner_m(z, z) + e1h(z)
}

/// The pseudo energy of the time-discrete system:
/// `1/2 ||lap z||_m^2 - ||grad z||^2 + (alpha/2) ||z||_m^2 + r^2
///  + 1/(2M) ||psi||_{H^-1}^2`.
///
/// At a spatially uniform state with psi = 0 and r = sqrt(E1h) this
/// coincides with [`original_energy`] (up to the c0 shift).
pub fn pseudo_energy(
    z: &Field,
    r: f64,
    psi: &Field,
    params: &ModelParams,
    plan: &SpectralPlan,
) -> Result<f64, SolveError> {
    let hm1 = plan.hminus1_norm(psi)?;
    let lap = grid::laplacian(z);
    let gn = grid::grad_norm(z);
    Ok(0.5 * grid::inner_m(&lap, &lap) - gn * gn
        + 0.5 * params.alpha() * grid::inner_m(z, z)
        + r * r
        + hm1 * hm1 / (2.0 * params.m))
}

/// [`pseudo_energy`] plus `1/2 ||grad(z - z_prev)||^2`, the quantity that
/// decreases monotonically from one step to the next.
pub fn pseudo_energy_tilde(
    z: &Field,
    z_prev: &Field,
    r: f64,
    psi: &Field,
    params: &ModelParams,
    plan: &SpectralPlan,
) -> Result<f64, SolveError> {
    debug_assert_eq!(z.grid, z_prev.grid);
    let base = pseudo_energy(z, r, psi, params, plan)?;
    let diff = Field {
        grid: z.grid,
        data: &z.data - &z_prev.data,
    };
    let gn = grid::grad_norm(&diff);
    Ok(base + 0.5 * gn * gn)
}
