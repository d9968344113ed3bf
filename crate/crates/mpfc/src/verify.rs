//! Independent dense-matrix oracles and the randomized check suites behind
//! `mpfc check`.
//!
//! Everything here deliberately avoids the solver path it validates: the
//! Laplacian matrix is assembled from neighbor bookkeeping rather than the
//! edge-difference composition, and linear systems are solved by dense LU
//! or eigendecomposition. Dense work is restricted to tiny grids; callers
//! must keep nx * ny small (the suites stay at or below 10 x 10).

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::grid::{
    div_x, div_y, dx_edge, dy_edge, inner_m, inner_x, inner_y, laplacian, mass, max_norm, norm_m,
    BoundaryKind, EdgeFieldX, EdgeFieldY, Field, GridSpec,
};
use crate::model::{b_field, ModelError, ModelParams};

/// Flatten to the j-outer vector ordering used on disk (index p = j*nx + i).
pub fn flatten(f: &Field) -> DVector<f64> {
    DVector::from_iterator(f.grid.nx * f.grid.ny, f.data.iter().copied())
}

pub fn unflatten(g: GridSpec, v: &DVector<f64>) -> Field {
    let mut f = Field::zeros(g);
    for (dst, src) in f.data.iter_mut().zip(v.iter()) {
        *dst = *src;
    }
    f
}

/// Dense five-point Laplacian, assembled cell by cell from neighbor logic:
/// each existing neighbor couples with 1/h^2 and subtracts 1/h^2 from the
/// diagonal; mirrored neighbors contribute nothing, wrapped neighbors fold
/// onto their target (doubling when nx = 2).
pub fn dense_laplacian(g: &GridSpec) -> DMatrix<f64> {
    let (nx, ny) = (g.nx, g.ny);
    let n = nx * ny;
    let (cx, cy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut m = DMatrix::zeros(n, n);
    let idx = |i: usize, j: usize| j * nx + i;
    for j in 0..ny {
        for i in 0..nx {
            let p = idx(i, j);
            let mut couple = |q: Option<usize>, c: f64| {
                if let Some(q) = q {
                    m[(p, q)] += c;
                    m[(p, p)] -= c;
                }
            };
            match g.bc {
                BoundaryKind::Neumann => {
                    couple((i > 0).then(|| idx(i - 1, j)), cx);
                    couple((i + 1 < nx).then(|| idx(i + 1, j)), cx);
                    couple((j > 0).then(|| idx(i, j - 1)), cy);
                    couple((j + 1 < ny).then(|| idx(i, j + 1)), cy);
                }
                BoundaryKind::Periodic => {
                    couple(Some(idx((i + nx - 1) % nx, j)), cx);
                    couple(Some(idx((i + 1) % nx, j)), cx);
                    couple(Some(idx(i, (j + ny - 1) % ny)), cy);
                    couple(Some(idx(i, (j + 1) % ny)), cy);
                }
            }
        }
    }
    m
}

/// Matrix power by repeated multiplication; fine at oracle sizes.
pub fn matrix_power(m: &DMatrix<f64>, k: u32) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// Solve -lap eta = f on the mean-zero subspace by symmetric
/// eigendecomposition, dropping the kernel mode.
pub fn dense_inv_neg_laplacian(g: &GridSpec, f: &Field) -> Field {
    let lap = dense_laplacian(g);
    let eig = nalgebra::SymmetricEigen::new(-lap);
    let rhs = flatten(f);
    let coeffs = eig.eigenvectors.transpose() * rhs;
    let n = coeffs.len();
    let mut sol = DVector::zeros(n);
    // One eigenvalue is zero (the constant mode); invert the rest.
    let max_ev = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        if ev.abs() > 1e-10 * max_ev {
            sol += eig.eigenvectors.column(k) * (coeffs[k] / ev);
        }
    }
    unflatten(*g, &sol)
}

pub fn random_field(g: GridSpec, rng: &mut StdRng) -> Field {
    let mut f = Field::zeros(g);
    for v in f.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    f
}

pub fn random_edge_x(g: GridSpec, rng: &mut StdRng) -> EdgeFieldX {
    let mut w = EdgeFieldX::zeros(g);
    for v in w.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    w
}

pub fn random_edge_y(g: GridSpec, rng: &mut StdRng) -> EdgeFieldY {
    let mut w = EdgeFieldY::zeros(g);
    for v in w.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    w
}

pub fn random_grid(rng: &mut StdRng) -> GridSpec {
    let bc = if rng.gen_bool(0.5) {
        BoundaryKind::Neumann
    } else {
        BoundaryKind::Periodic
    };
    GridSpec::new(
        rng.gen_range(2..=10),
        rng.gen_range(2..=10),
        rng.gen_range(0.5..3.0),
        rng.gen_range(0.5..3.0),
        bc,
    )
    .unwrap()
}

/// Result of a dense monolithic time step: the next (Z, Psi, R).
pub struct DenseStep {
    pub z: Field,
    pub psi: Field,
    pub r: f64,
}

/// One Crank-Nicolson step solved monolithically: the four defining
/// equations are assembled as a dense (3N+1) x (3N+1) system in the
/// unknowns [Z; W; Psi; R] and solved by LU. No elimination, no rank-one
/// update, no transform; this is the brute-force reference the fast
/// stepper is measured against. `z_tilde` is the extrapolant the caller
/// wants linearized about, so the same oracle serves the regular step
/// ((3 Z^n - Z^{n-1})/2) and the bootstrap average.
pub fn dense_step_cn(
    z: &Field,
    z_tilde: &Field,
    psi: &Field,
    r: f64,
    params: &ModelParams,
    dt: f64,
) -> Result<DenseStep, ModelError> {
    let g = z.grid;
    let n = g.nx * g.ny;
    let lap = dense_laplacian(&g);
    let lap2 = &lap * &lap;
    let b = flatten(&b_field(z_tilde, params)?);
    let zv = flatten(z);
    let ztv = flatten(z_tilde);
    let psiv = flatten(psi);
    let area = g.cell_area();
    let (m, alpha, beta) = (params.m, params.alpha(), params.beta);

    let dim = 3 * n + 1;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let (zc, wc, pc, rc) = (0, n, 2 * n, 3 * n);

    // (1 + beta dt/2) Psi - M dt lap W = (1 - beta dt/2) psi^n
    for i in 0..n {
        a[(i, pc + i)] = 1.0 + 0.5 * beta * dt;
        for j in 0..n {
            a[(i, wc + j)] -= m * dt * lap[(i, j)];
        }
        rhs[i] = (1.0 - 0.5 * beta * dt) * psiv[i];
    }
    // (dt/2) Psi - Z = -z^n - (dt/2) psi^n
    for i in 0..n {
        a[(n + i, pc + i)] = 0.5 * dt;
        a[(n + i, zc + i)] = -1.0;
        rhs[n + i] = -zv[i] - 0.5 * dt * psiv[i];
    }
    // W - 1/2 (lap^2 + alpha I) Z - (b/2) R
    //   = 1/2 (lap^2 + alpha I) z^n + 2 lap z_tilde + (r^n/2) b
    let cz = 0.5 * (&lap2 * &zv) + 0.5 * alpha * &zv;
    let lzt = &lap * &ztv;
    for i in 0..n {
        a[(2 * n + i, wc + i)] = 1.0;
        for j in 0..n {
            a[(2 * n + i, zc + j)] -= 0.5 * lap2[(i, j)];
        }
        a[(2 * n + i, zc + i)] -= 0.5 * alpha;
        a[(2 * n + i, rc)] = -0.5 * b[i];
        rhs[2 * n + i] = cz[i] + 2.0 * lzt[i] + 0.5 * r * b[i];
    }
    // R - 1/2 (b, Z)_m = r^n - 1/2 (b, z^n)_m
    a[(rc, rc)] = 1.0;
    for j in 0..n {
        a[(rc, zc + j)] = -0.5 * area * b[j];
    }
    rhs[rc] = r - 0.5 * area * b.dot(&zv);

    let sol = a
        .lu()
        .solve(&rhs)
        .expect("monolithic step system is singular");
    Ok(DenseStep {
        z: unflatten(g, &DVector::from(sol.rows(zc, n))),
        psi: unflatten(g, &DVector::from(sol.rows(pc, n))),
        r: sol[rc],
    })
}

/// First-order analogue of [`dense_step_cn`]; `b` is evaluated at `z`.
pub fn dense_step_first_order(
    z: &Field,
    psi: &Field,
    r: f64,
    params: &ModelParams,
    dt: f64,
) -> Result<DenseStep, ModelError> {
    let g = z.grid;
    let n = g.nx * g.ny;
    let lap = dense_laplacian(&g);
    let lap2 = &lap * &lap;
    let b = flatten(&b_field(z, params)?);
    let zv = flatten(z);
    let psiv = flatten(psi);
    let area = g.cell_area();
    let (m, alpha, beta) = (params.m, params.alpha(), params.beta);

    let dim = 3 * n + 1;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let (zc, wc, pc, rc) = (0, n, 2 * n, 3 * n);

    // (1 + beta dt) Psi - M dt lap W = psi^n
    for i in 0..n {
        a[(i, pc + i)] = 1.0 + beta * dt;
        for j in 0..n {
            a[(i, wc + j)] -= m * dt * lap[(i, j)];
        }
        rhs[i] = psiv[i];
    }
    // dt Psi - Z = -z^n
    for i in 0..n {
        a[(n + i, pc + i)] = dt;
        a[(n + i, zc + i)] = -1.0;
        rhs[n + i] = -zv[i];
    }
    // W - (lap^2 + alpha I) Z - b R = 2 lap z^n
    let lz = &lap * &zv;
    for i in 0..n {
        a[(2 * n + i, wc + i)] = 1.0;
        for j in 0..n {
            a[(2 * n + i, zc + j)] -= lap2[(i, j)];
        }
        a[(2 * n + i, zc + i)] -= alpha;
        a[(2 * n + i, rc)] = -b[i];
        rhs[2 * n + i] = 2.0 * lz[i];
    }
    // R - 1/2 (b, Z)_m = r^n - 1/2 (b, z^n)_m
    a[(rc, rc)] = 1.0;
    for j in 0..n {
        a[(rc, zc + j)] = -0.5 * area * b[j];
    }
    rhs[rc] = r - 0.5 * area * b.dot(&zv);

    let sol = a
        .lu()
        .solve(&rhs)
        .expect("monolithic step system is singular");
    Ok(DenseStep {
        z: unflatten(g, &DVector::from(sol.rows(zc, n))),
        psi: unflatten(g, &DVector::from(sol.rows(pc, n))),
        r: sol[rc],
    })
}

/// A single failed check with enough context to act on.
#[derive(Debug, Clone)]
pub struct Violation {
    pub what: String,
    pub magnitude: f64,
    pub tol: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: |residual| = {:.3e} exceeds {:.3e}",
            self.what, self.magnitude, self.tol
        )
    }
}

fn ensure(what: &str, magnitude: f64, tol: f64) -> Result<(), Violation> {
    if magnitude.is_finite() && magnitude <= tol {
        Ok(())
    } else {
        Err(Violation {
            what: what.to_string(),
            magnitude,
            tol,
        })
    }
}

/// Summation by parts, adjointness, kernel, sign, and the dense-matrix match
/// for the difference operators, over `trials` random (grid, field) draws.
pub fn check_operator_identities(trials: usize, seed: u64) -> Result<(), Violation> {
    let mut rng = StdRng::seed_from_u64(seed);
    for t in 0..trials {
        let g = random_grid(&mut rng);
        let f = random_field(g, &mut rng);
        let q = random_field(g, &mut rng);
        let wx = random_edge_x(g, &mut rng);
        let wy = random_edge_y(g, &mut rng);

        // (q, Dx w)_m = -(dx q, w)_x and the y analogue. Both sides can
        // nearly cancel, so the relative scale is the norm product that
        // bounds the rounding of the sums, not the results themselves.
        let dv = div_x(&wx);
        let dq = dx_edge(&q);
        let lhs = inner_m(&q, &dv);
        let rhs = -inner_x(&dq, &wx);
        let scale =
            norm_m(&q) * norm_m(&dv) + inner_x(&dq, &dq).sqrt() * inner_x(&wx, &wx).sqrt() + 1e-30;
        ensure(
            &format!("summation by parts in x (trial {t}, {:?})", g.bc),
            (lhs - rhs).abs(),
            1e-13 * scale,
        )?;
        let dv = div_y(&wy);
        let dq = dy_edge(&q);
        let lhs = inner_m(&q, &dv);
        let rhs = -inner_y(&dq, &wy);
        let scale =
            norm_m(&q) * norm_m(&dv) + inner_y(&dq, &dq).sqrt() * inner_y(&wy, &wy).sqrt() + 1e-30;
        ensure(
            &format!("summation by parts in y (trial {t}, {:?})", g.bc),
            (lhs - rhs).abs(),
            1e-13 * scale,
        )?;

        // Laplacian is self-adjoint in (.,.)_m.
        let lf = laplacian(&f);
        let lq = laplacian(&q);
        let a = inner_m(&lf, &q);
        let b = inner_m(&f, &lq);
        ensure(
            &format!("laplacian self-adjointness (trial {t}, {:?})", g.bc),
            (a - b).abs(),
            1e-13 * (norm_m(&lf) * norm_m(&q) + norm_m(&f) * norm_m(&lq) + 1e-30),
        )?;

        // Kernel contains constants, exactly: differences of equal values.
        let c = Field::constant(g, 7.5);
        ensure(
            &format!("laplacian annihilates constants (trial {t})"),
            max_norm(&laplacian(&c)),
            0.0,
        )?;

        // Negative semidefinite: (lap f, f)_m = -|grad f|^2 <= 0.
        let quad = inner_m(&lf, &f);
        ensure(
            &format!("laplacian sign (trial {t}, {:?})", g.bc),
            quad.max(0.0),
            1e-13 * (norm_m(&lf) * norm_m(&f) + 1e-30),
        )?;

        // The weak-norm pairing is symmetric and positive definite on
        // mean-zero data.
        let plan = crate::spectral::SpectralPlan::new(g);
        let solve_failed = |e: crate::spectral::SolveError| Violation {
            what: format!("weak-norm solve failed (trial {t}): {e}"),
            magnitude: f64::INFINITY,
            tol: 0.0,
        };
        let strip = |mut a: Field| {
            let mean = mass(&a) / (g.lx * g.ly);
            a.data.mapv_inplace(|v| v - mean);
            a
        };
        let fz = strip(random_field(g, &mut rng));
        let gz = strip(random_field(g, &mut rng));
        let ab = plan.hminus1_inner(&fz, &gz).map_err(solve_failed)?;
        let ba = plan.hminus1_inner(&gz, &fz).map_err(solve_failed)?;
        let nf = plan.hminus1_norm(&fz).map_err(solve_failed)?;
        let ng = plan.hminus1_norm(&gz).map_err(solve_failed)?;
        ensure(
            &format!("weak-norm pairing symmetry (trial {t}, {:?})", g.bc),
            (ab - ba).abs(),
            1e-13 * (nf * ng + 1e-30),
        )?;
        let quad = plan.hminus1_inner(&fz, &fz).map_err(solve_failed)?;
        if quad <= 0.0 || quad.is_nan() {
            return Err(Violation {
                what: format!("weak-norm positivity (trial {t}, {:?})", g.bc),
                magnitude: quad,
                tol: 0.0,
            });
        }

        // Stencil equals the independently assembled dense matrix.
        let dense = dense_laplacian(&g) * flatten(&f);
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 1e-30;
        for (a, b) in lf.data.iter().zip(dense.iter()) {
            diff = diff.max((a - b).abs());
            scale = scale.max(b.abs());
        }
        ensure(
            &format!("laplacian matches dense assembly (trial {t}, {:?})", g.bc),
            diff,
            1e-12 * scale,
        )?;
    }
    Ok(())
}

fn max_gap(a: &Field, b: &Field) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        worst = worst.max((x - y).abs());
    }
    worst
}

/// The fast solution path against dense linear algebra on small grids:
/// both steppers against monolithic solves of the coupled updates, the
/// implicit solve against an LU of the assembled operator, and the
/// negated-Laplacian inverse against its eigendecomposition. `states`
/// random admissible states per grid / boundary / parameter combination.
pub fn check_dense_oracles(states: usize, seed: u64) -> Result<(), Violation> {
    use crate::model;
    use crate::spectral::{ASymbol, SpectralPlan};
    use crate::stepper::{self, SavState, StepperWorkspace};

    let mut rng = StdRng::seed_from_u64(seed);
    let step_failed = |e: &dyn std::fmt::Display| Violation {
        what: format!("step solve failed: {e}"),
        magnitude: f64::INFINITY,
        tol: 0.0,
    };
    // weak-mobility unit square and unit-spacing strong-mobility cases.
    let cases = [
        (
            ModelParams::new(0.25, 0.9, 0.001, 0.0).unwrap(),
            false,
            0.05,
        ),
        (ModelParams::new(0.025, 0.1, 1.0, 0.0).unwrap(), true, 1.0),
    ];
    for n in [6usize, 8] {
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            for (p, unit_spacing, dt) in &cases {
                let lx = if *unit_spacing { n as f64 } else { 1.0 };
                let g = GridSpec::new(n, n, lx, lx, bc).unwrap();
                let tag = format!("{n}x{n} {bc:?} m={}", p.m);
                let plan = SpectralPlan::new(g);
                let mut ws = StepperWorkspace::new(g);
                let lap = dense_laplacian(&g);
                let lap3 = matrix_power(&lap, 3);
                let nn = n * n;
                let syms = [
                    ASymbol::crank_nicolson(p.m, p.alpha(), p.beta, *dt),
                    ASymbol::first_order(p.m, p.alpha(), p.beta, *dt),
                ];
                for k in 0..states {
                    let mut z = random_field(g, &mut rng);
                    z.data += 0.3;
                    let mut psi = random_field(g, &mut rng);
                    psi.data -= mass(&psi) / (g.lx * g.ly);
                    let z_prev = random_field(g, &mut rng);
                    let r = model::e1h(&z).sqrt() + 0.1 * rng.gen_range(-1.0..1.0);
                    let zt = Field {
                        grid: g,
                        data: 1.5 * &z.data - 0.5 * &z_prev.data,
                    };
                    let state = SavState {
                        z,
                        z_prev: Some(z_prev),
                        psi,
                        r,
                        n: 1,
                        t: 0.0,
                    };

                    let fast =
                        stepper::step_cn(&state, &mut ws, p, *dt).map_err(|e| step_failed(&e))?;
                    let dense = dense_step_cn(&state.z, &zt, &state.psi, state.r, p, *dt)
                        .map_err(|e| step_failed(&e))?;
                    let scale = norm_m(&dense.z).max(1.0);
                    ensure(
                        &format!("averaged step vs dense, field ({tag}, state {k})"),
                        max_gap(&fast.z, &dense.z),
                        1e-9 * scale,
                    )?;
                    ensure(
                        &format!("averaged step vs dense, velocity ({tag}, state {k})"),
                        max_gap(&fast.psi, &dense.psi),
                        1e-9 * scale.max(norm_m(&dense.psi)),
                    )?;
                    ensure(
                        &format!("averaged step vs dense, scalar ({tag}, state {k})"),
                        (fast.r - dense.r).abs(),
                        1e-9 * dense.r.abs().max(1.0),
                    )?;

                    let fast = stepper::step_first_order(&state, &mut ws, p, *dt)
                        .map_err(|e| step_failed(&e))?;
                    let dense = dense_step_first_order(&state.z, &state.psi, state.r, p, *dt)
                        .map_err(|e| step_failed(&e))?;
                    ensure(
                        &format!("one-level step vs dense, field ({tag}, state {k})"),
                        max_gap(&fast.z, &dense.z),
                        1e-9 * scale,
                    )?;
                    ensure(
                        &format!("one-level step vs dense, velocity ({tag}, state {k})"),
                        max_gap(&fast.psi, &dense.psi),
                        1e-9 * scale.max(norm_m(&dense.psi)),
                    )?;
                    ensure(
                        &format!("one-level step vs dense, scalar ({tag}, state {k})"),
                        (fast.r - dense.r).abs(),
                        1e-9 * dense.r.abs().max(1.0),
                    )?;

                    for (which, sym) in syms.iter().enumerate() {
                        let rhs = random_field(g, &mut rng);
                        let fast = plan.solve_implicit(sym, &rhs);
                        let a = sym.c0 * DMatrix::identity(nn, nn)
                            - sym.c_lap3 * &lap3
                            - sym.c_lap1 * &lap;
                        let sol = a
                            .lu()
                            .solve(&flatten(&rhs))
                            .expect("implicit operator is positive definite");
                        let dense = unflatten(g, &sol);
                        ensure(
                            &format!(
                                "implicit solve vs dense LU ({tag}, symbol {which}, state {k})"
                            ),
                            max_gap(&fast, &dense),
                            1e-10 * norm_m(&dense).max(1.0),
                        )?;
                    }

                    let mut f = random_field(g, &mut rng);
                    f.data -= mass(&f) / (g.lx * g.ly);
                    let fast = plan.inv_neg_laplacian(&f).map_err(|e| step_failed(&e))?;
                    let dense = dense_inv_neg_laplacian(&g, &f);
                    ensure(
                        &format!("negated-laplacian inverse vs dense ({tag}, state {k})"),
                        max_gap(&fast, &dense),
                        1e-10 * norm_m(&dense).max(1.0),
                    )?;
                }
            }
        }
    }
    Ok(())
}
