//! Time integration of the auxiliary-variable system.
//!
//! Two schemes share one skeleton: eliminate the velocity and the chemical
//! potential, solve a constant-coefficient sixth-order implicit equation
//! plus a rank-one correction for the scalar coupling, then back out the
//! velocity and the auxiliary scalar. The two-level averaged scheme is
//! second order and driven by the extrapolant (3 Z^n - Z^{n-1})/2; the
//! one-level scheme is first order and exists mainly to bootstrap the
//! first step and for steady-state runs.
//!
//! Every step conserves mass to round-off and keeps the velocity mean at
//! zero; the pseudo energy with the gradient-increment term decreases
//! monotonically for the averaged scheme at any step size.

use thiserror::Error;

use crate::grid::{self, Field};
use crate::model::{self, ModelError, ModelParams};
use crate::spectral::{ASymbol, SolveError, SpectralPlan};

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(
        "rank-one denominator {denom:.3e} is not positive; the implicit operator lost definiteness"
    )]
    SolvabilityViolation { denom: f64 },
    #[error("step {n} needs the previous field; take the bootstrap step first")]
    MissingHistory { n: usize },
    #[error("invalid {name} = {value}")]
    BadTime { name: &'static str, value: f64 },
    #[error("{n_steps} steps of dt = {dt:.17e} give {got:.17e}, not t_final = {want:.17e}")]
    InconsistentTime {
        n_steps: usize,
        dt: f64,
        got: f64,
        want: f64,
    },
}

/// A uniform step schedule: `n_steps` steps of `dt` land exactly on
/// `t_final`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeSpec {
    pub fn new(dt: f64, t_final: f64) -> Result<Self, StepError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(StepError::BadTime {
                name: "dt",
                value: dt,
            });
        }
        if !t_final.is_finite() || t_final <= 0.0 {
            return Err(StepError::BadTime {
                name: "t_final",
                value: t_final,
            });
        }
        let n_steps = (t_final / dt).round() as usize;
        let got = n_steps as f64 * dt;
        if n_steps == 0 || (got - t_final).abs() > 1e-12 * t_final {
            return Err(StepError::InconsistentTime {
                n_steps,
                dt,
                got,
                want: t_final,
            });
        }
        Ok(Self {
            dt,
            t_final,
            n_steps,
        })
    }

    pub fn from_steps(n_steps: usize, dt: f64) -> Result<Self, StepError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(StepError::BadTime {
                name: "dt",
                value: dt,
            });
        }
        if n_steps == 0 {
            return Err(StepError::BadTime {
                name: "n_steps",
                value: 0.0,
            });
        }
        Ok(Self {
            dt,
            t_final: n_steps as f64 * dt,
            n_steps,
        })
    }
}

/// The discrete state after n steps: the field, its predecessor (absent
/// only at n = 0), the velocity, and the auxiliary scalar.
#[derive(Debug, Clone)]
pub struct SavState {
    pub z: Field,
    pub z_prev: Option<Field>,
    pub psi: Field,
    pub r: f64,
    pub n: usize,
    pub t: f64,
}

/// Transform plan plus the intermediates of the latest step, kept around
/// for inspection. The step functions own their working copies, so nothing
/// here aliases a live state field.
pub struct StepperWorkspace {
    pub plan: SpectralPlan,
    pub b: Field,
    pub f: Field,
    pub ainv_f: Field,
    pub ainv_lap_b: Field,
}

impl StepperWorkspace {
    pub fn new(grid: grid::GridSpec) -> Self {
        Self {
            plan: SpectralPlan::new(grid),
            b: Field::zeros(grid),
            f: Field::zeros(grid),
            ainv_f: Field::zeros(grid),
            ainv_lap_b: Field::zeros(grid),
        }
    }
}

/// State at t = 0: zero velocity, r seeded from the nonlinear energy.
pub fn init_state(phi0: &Field, params: &ModelParams) -> Result<SavState, ModelError> {
    let r = model::shifted_e1h(phi0, params)?.sqrt();
    Ok(SavState {
        z: phi0.clone(),
        z_prev: None,
        psi: Field::zeros(phi0.grid),
        r,
        n: 0,
        t: 0.0,
    })
}

/// Pieces of a rank-one corrected implicit solve.
pub struct RankOneSolve {
    pub z: Field,
    /// The scalar coupling (b, z)_m, from the closed form.
    pub s: f64,
    /// 1 - k (A^{-1} lap b, b)_m; at least 1 in exact arithmetic.
    pub denom: f64,
    pub ainv_f: Field,
    pub ainv_lap_b: Field,
}

/// Solve `A z - k (b, z)_m lap_b = f` with two constant-coefficient
/// solves: z0 = A^{-1} f, y = A^{-1} lap_b, s = (b, z0)_m / denom with
/// denom = 1 - k (y, b)_m, then z = k s y + z0. denom >= 1 because
/// A^{-1} lap is negative semidefinite, so solvability can only fail if
/// the inputs are broken.
pub fn solve_rank_one(
    plan: &SpectralPlan,
    sym: &ASymbol,
    k: f64,
    b: &Field,
    lap_b: &Field,
    f: &Field,
) -> Result<RankOneSolve, StepError> {
    let ainv_f = plan.solve_implicit(sym, f);
    let ainv_lap_b = plan.solve_implicit(sym, lap_b);
    let denom = 1.0 - k * grid::inner_m(&ainv_lap_b, b);
    if denom <= 0.0 || denom.is_nan() {
        return Err(StepError::SolvabilityViolation { denom });
    }
    let s = grid::inner_m(b, &ainv_f) / denom;
    let z = Field {
        grid: f.grid,
        data: k * s * &ainv_lap_b.data + &ainv_f.data,
    };
    Ok(RankOneSolve {
        z,
        s,
        denom,
        ainv_f,
        ainv_lap_b,
    })
}

/// One step of the averaged two-level scheme. Needs n >= 1; the first
/// step goes through [`bootstrap_first_step`].
pub fn step_cn(
    state: &SavState,
    ws: &mut StepperWorkspace,
    params: &ModelParams,
    dt: f64,
) -> Result<SavState, StepError> {
    let zp = state
        .z_prev
        .as_ref()
        .ok_or(StepError::MissingHistory { n: state.n })?;
    let zt = Field {
        grid: state.z.grid,
        data: 1.5 * &state.z.data - 0.5 * &zp.data,
    };
    step_cn_about(state, &zt, ws, params, dt)
}

// (Psi, 1)_m = 0 propagates exactly from the zero start, but the 1/dt in
// the velocity update turns solve round-off into a slow drift of the mean
// over long runs. Subtract it so downstream mean-zero solves stay valid.
fn strip_mean(f: &mut Field) {
    let mean = grid::mass(f) / (f.grid.lx * f.grid.ly);
    f.data.mapv_inplace(|v| v - mean);
}

/// The averaged step linearized about an explicit `z_tilde`. The regular
/// step extrapolates from history; the bootstrap passes an endpoint
/// average instead.
pub fn step_cn_about(
    state: &SavState,
    z_tilde: &Field,
    ws: &mut StepperWorkspace,
    params: &ModelParams,
    dt: f64,
) -> Result<SavState, StepError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(StepError::BadTime {
            name: "dt",
            value: dt,
        });
    }
    let g = state.z.grid;
    let m = params.m;
    let sym = ASymbol::crank_nicolson(m, params.alpha(), params.beta, dt);
    let b = model::b_field(z_tilde, params)?;
    let lap_b = grid::laplacian(&b);
    let lz1 = grid::laplacian(&state.z);
    let lz2 = grid::laplacian(&lz1);
    let lz3 = grid::laplacian(&lz2);
    let lt1 = grid::laplacian(z_tilde);
    let lt2 = grid::laplacian(&lt1);
    let bz = grid::inner_m(&b, &state.z);
    // f = (2/dt) Psi + (c0 I + (M/2) lap^3 + (M/2) alpha lap) Z
    //     + 2 M lap^2 z_tilde + M (R - (b, Z)_m / 4) lap b
    let f = Field {
        grid: g,
        data: (2.0 / dt) * &state.psi.data
            + sym.c0 * &state.z.data
            + 0.5 * m * &lz3.data
            + (0.5 * m * params.alpha()) * &lz1.data
            + 2.0 * m * &lt2.data
            + (m * (state.r - 0.25 * bz)) * &lap_b.data,
    };
    let sol = solve_rank_one(&ws.plan, &sym, 0.25 * m, &b, &lap_b, &f)?;
    let mut psi = Field {
        grid: g,
        data: (2.0 / dt) * (&sol.z.data - &state.z.data) - &state.psi.data,
    };
    strip_mean(&mut psi);
    let r = state.r + 0.5 * (sol.s - bz);
    ws.b = b;
    ws.f = f;
    ws.ainv_f = sol.ainv_f;
    ws.ainv_lap_b = sol.ainv_lap_b;
    Ok(SavState {
        z: sol.z,
        z_prev: Some(state.z.clone()),
        psi,
        r,
        n: state.n + 1,
        t: (state.n + 1) as f64 * dt,
    })
}

/// One step of the one-level scheme; `b` is evaluated at the current
/// field, no history needed.
pub fn step_first_order(
    state: &SavState,
    ws: &mut StepperWorkspace,
    params: &ModelParams,
    dt: f64,
) -> Result<SavState, StepError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(StepError::BadTime {
            name: "dt",
            value: dt,
        });
    }
    let g = state.z.grid;
    let m = params.m;
    let sym = ASymbol::first_order(m, params.alpha(), params.beta, dt);
    let b = model::b_field(&state.z, params)?;
    let lap_b = grid::laplacian(&b);
    let lz1 = grid::laplacian(&state.z);
    let lz2 = grid::laplacian(&lz1);
    let bz = grid::inner_m(&b, &state.z);
    // f = Psi/dt + c0 Z + 2 M lap^2 Z + M (R - (b, Z)_m / 2) lap b;
    // the implicit operator keeps every other occurrence of Z^{n+1}.
    let f = Field {
        grid: g,
        data: (1.0 / dt) * &state.psi.data
            + sym.c0 * &state.z.data
            + 2.0 * m * &lz2.data
            + (m * (state.r - 0.5 * bz)) * &lap_b.data,
    };
    let sol = solve_rank_one(&ws.plan, &sym, 0.5 * m, &b, &lap_b, &f)?;
    let mut psi = Field {
        grid: g,
        data: (1.0 / dt) * (&sol.z.data - &state.z.data),
    };
    strip_mean(&mut psi);
    let r = state.r + 0.5 * (sol.s - bz);
    ws.b = b;
    ws.f = f;
    ws.ainv_f = sol.ainv_f;
    ws.ainv_lap_b = sol.ainv_lap_b;
    Ok(SavState {
        z: sol.z,
        z_prev: Some(state.z.clone()),
        psi,
        r,
        n: state.n + 1,
        t: (state.n + 1) as f64 * dt,
    })
}

/// The n = 0 step of the averaged scheme: a provisional one-level step
/// supplies the endpoint average (Z^0 + Z_hat^1)/2 as the extrapolant,
/// then the averaged step runs from the initial state. The output keeps
/// Z^0 as the predecessor, so regular stepping can continue from n = 1.
pub fn bootstrap_first_step(
    state0: &SavState,
    ws: &mut StepperWorkspace,
    params: &ModelParams,
    dt: f64,
) -> Result<SavState, StepError> {
    let provisional = step_first_order(state0, ws, params, dt)?;
    let zt = Field {
        grid: state0.z.grid,
        data: 0.5 * (&state0.z.data + &provisional.z.data),
    };
    step_cn_about(state0, &zt, ws, params, dt)
}

/// Max-norm residuals of the four defining equations of one step, each
/// normalized by the largest term entering it.
#[derive(Debug, Clone, Copy)]
pub struct StepResiduals {
    /// Damped velocity update driven by lap W.
    pub velocity: f64,
    /// dt times the velocity average equals the field increment.
    pub kinematic: f64,
    /// Definition of W. The checker reconstructs W from this equation, so
    /// the slot is zero by construction and kept for completeness.
    pub potential: f64,
    /// The auxiliary scalar update.
    pub auxiliary: f64,
}

impl StepResiduals {
    pub fn max(&self) -> f64 {
        self.velocity
            .max(self.kinematic)
            .max(self.potential)
            .max(self.auxiliary)
    }
}

fn rel(residual: &Field, terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(1e-30_f64, |m, t| m.max(t.abs()));
    grid::max_norm(residual) / scale
}

// Max row sum of the stencil Laplacian: |lap w| <= amp * |w| pointwise.
// Powers of it bound what the nested stencils can produce from a given
// field, which is the right scale for residual terms whose exact value
// cancels to round-off (fixed points) while their computation does not.
fn lap_amp(g: &grid::GridSpec) -> f64 {
    4.0 * (1.0 / (g.hx() * g.hx()) + 1.0 / (g.hy() * g.hy()))
}

/// Back-substitute a consecutive pair produced by the averaged scheme
/// into its four equations. `z_tilde` must match what the step used, so
/// the regular extrapolant needs `prev.z_prev`.
pub fn residual_check_about(
    prev: &SavState,
    z_tilde: &Field,
    next: &SavState,
    params: &ModelParams,
    dt: f64,
) -> Result<StepResiduals, StepError> {
    let g = prev.z.grid;
    let m = params.m;
    let b = model::b_field(z_tilde, params)?;
    let psi_half = Field {
        grid: g,
        data: 0.5 * (&next.psi.data + &prev.psi.data),
    };
    let z_half = Field {
        grid: g,
        data: 0.5 * (&next.z.data + &prev.z.data),
    };
    let r_half = 0.5 * (next.r + prev.r);

    // W^{n+1/2} from its defining equation.
    let lap_zh = grid::laplacian(&z_half);
    let lap2_zh = grid::laplacian(&lap_zh);
    let lap_zt = grid::laplacian(z_tilde);
    let w = Field {
        grid: g,
        data: &lap2_zh.data + 2.0 * &lap_zt.data + params.alpha() * &z_half.data + r_half * &b.data,
    };
    let lap_w = grid::laplacian(&w);

    let velocity = {
        let res = Field {
            grid: g,
            data: &next.psi.data - &prev.psi.data + (params.beta * dt) * &psi_half.data
                - (m * dt) * &lap_w.data,
        };
        rel(
            &res,
            &[
                grid::max_norm(&next.psi),
                grid::max_norm(&prev.psi),
                params.beta * dt * grid::max_norm(&psi_half),
                m * dt * grid::max_norm(&lap_w),
                m * dt * lap_amp(&g) * grid::max_norm(&w),
                m * dt * lap_amp(&g).powi(3) * grid::max_norm(&z_half),
            ],
        )
    };
    let kinematic = {
        let res = Field {
            grid: g,
            data: dt * &psi_half.data - (&next.z.data - &prev.z.data),
        };
        rel(
            &res,
            &[
                dt * grid::max_norm(&psi_half),
                grid::max_norm(&next.z),
                grid::max_norm(&prev.z),
            ],
        )
    };
    let auxiliary = {
        let dz = Field {
            grid: g,
            data: &next.z.data - &prev.z.data,
        };
        let inc = 0.5 * grid::inner_m(&b, &dz);
        let res = next.r - prev.r - inc;
        res.abs()
            / [next.r.abs(), prev.r.abs(), inc.abs(), 1e-30]
                .into_iter()
                .fold(0.0_f64, f64::max)
    };
    Ok(StepResiduals {
        velocity,
        kinematic,
        potential: 0.0,
        auxiliary,
    })
}

/// [`residual_check_about`] with the regular extrapolant from history.
pub fn residual_check(
    prev: &SavState,
    next: &SavState,
    params: &ModelParams,
    dt: f64,
) -> Result<StepResiduals, StepError> {
    let zp = prev
        .z_prev
        .as_ref()
        .ok_or(StepError::MissingHistory { n: prev.n })?;
    let zt = Field {
        grid: prev.z.grid,
        data: 1.5 * &prev.z.data - 0.5 * &zp.data,
    };
    residual_check_about(prev, &zt, next, params, dt)
}

/// Back-substitution for the one-level scheme.
pub fn residual_check_first_order(
    prev: &SavState,
    next: &SavState,
    params: &ModelParams,
    dt: f64,
) -> Result<StepResiduals, StepError> {
    let g = prev.z.grid;
    let m = params.m;
    let b = model::b_field(&prev.z, params)?;

    let lap_zn = grid::laplacian(&next.z);
    let lap2_zn = grid::laplacian(&lap_zn);
    let lap_zp = grid::laplacian(&prev.z);
    let w = Field {
        grid: g,
        data: &lap2_zn.data + 2.0 * &lap_zp.data + params.alpha() * &next.z.data + next.r * &b.data,
    };
    let lap_w = grid::laplacian(&w);

    let velocity = {
        let res = Field {
            grid: g,
            data: (1.0 + params.beta * dt) * &next.psi.data
                - &prev.psi.data
                - (m * dt) * &lap_w.data,
        };
        rel(
            &res,
            &[
                (1.0 + params.beta * dt) * grid::max_norm(&next.psi),
                grid::max_norm(&prev.psi),
                m * dt * grid::max_norm(&lap_w),
                m * dt * lap_amp(&g) * grid::max_norm(&w),
                m * dt * lap_amp(&g).powi(3) * grid::max_norm(&next.z),
            ],
        )
    };
    let kinematic = {
        let res = Field {
            grid: g,
            data: dt * &next.psi.data - (&next.z.data - &prev.z.data),
        };
        rel(
            &res,
            &[
                dt * grid::max_norm(&next.psi),
                grid::max_norm(&next.z),
                grid::max_norm(&prev.z),
            ],
        )
    };
    let auxiliary = {
        let dz = Field {
            grid: g,
            data: &next.z.data - &prev.z.data,
        };
        let inc = 0.5 * grid::inner_m(&b, &dz);
        let res = next.r - prev.r - inc;
        res.abs()
            / [next.r.abs(), prev.r.abs(), inc.abs(), 1e-30]
                .into_iter()
                .fold(0.0_f64, f64::max)
    };
    Ok(StepResiduals {
        velocity,
        kinematic,
        potential: 0.0,
        auxiliary,
    })
}
