//! Tensor-product eigenbasis of the grid Laplacian and the solvers built
//! on it.
//!
//! The five-point stencil with mirror ghosts is diagonalized exactly by
//! sampled cosines, and the wrapped stencil by the real Fourier basis, so
//! both boundary kinds reduce to one machinery: an orthonormal basis matrix
//! per direction plus the eigenvalue list
//!
//! ```text
//!   Neumann:  lambda_k = -(4/h^2) sin^2(k pi / (2n)),   k = 0..n-1
//!   Periodic: lambda_k = -(4/h^2) sin^2(k pi / n)       (cos/sin pair per k)
//! ```
//!
//! All eigenvalues are nonpositive and only the constant mode sits at zero.
//! A 2D transform is two small GEMMs; for the grid sizes this crate targets
//! (up to a few hundred per side) that comfortably beats setting up an FFT
//! and keeps the basis exactly the eigenbasis of the stencil.

use ndarray::Array2;
use thiserror::Error;

use crate::grid::{BoundaryKind, Field, GridSpec};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "right-hand side must have zero mean: (f,1)_m = {mean:.3e} exceeds {tol:.3e}; \
         subtract the mean or fix the source"
    )]
    NotMeanZero { mean: f64, tol: f64 },
}

/// Symbol of the implicit operator `c0 I - c_lap3 lap^3 - c_lap1 lap`.
///
/// With c0 > 0, c_lap1 >= 0, c_lap3 >= 0 and lap's eigenvalues nonpositive,
/// the symbol is bounded below by c0, so the operator is always invertible.
#[derive(Debug, Clone, Copy)]
pub struct ASymbol {
    pub c0: f64,
    pub c_lap1: f64,
    pub c_lap3: f64,
}

impl ASymbol {
    /// Implicit operator of the averaged two-level scheme.
    pub fn crank_nicolson(mobility: f64, alpha: f64, beta: f64, dt: f64) -> Self {
        Self {
            c0: 2.0 / (dt * dt) + beta / dt,
            c_lap1: 0.5 * mobility * alpha,
            c_lap3: 0.5 * mobility,
        }
    }

    /// Implicit operator of the fully implicit one-level scheme.
    pub fn first_order(mobility: f64, alpha: f64, beta: f64, dt: f64) -> Self {
        Self {
            c0: (1.0 + beta * dt) / (dt * dt),
            c_lap1: mobility * alpha,
            c_lap3: mobility,
        }
    }

    pub fn sigma(&self, lambda: f64) -> f64 {
        self.c0 - self.c_lap3 * lambda * lambda * lambda - self.c_lap1 * lambda
    }
}

/// One direction's orthonormal eigenbasis: columns of `q` are eigenvectors
/// of the 1D second-difference matrix, `eig[k]` the matching eigenvalues.
fn basis_1d(n: usize, h: f64, bc: BoundaryKind) -> (Array2<f64>, Vec<f64>) {
    let mut q = Array2::zeros((n, n));
    let mut eig = vec![0.0; n];
    let nf = n as f64;
    match bc {
        BoundaryKind::Neumann => {
            for k in 0..n {
                let norm = if k == 0 {
                    (1.0 / nf).sqrt()
                } else {
                    (2.0 / nf).sqrt()
                };
                for i in 0..n {
                    let theta = k as f64 * std::f64::consts::PI * (i as f64 + 0.5) / nf;
                    q[[i, k]] = norm * theta.cos();
                }
                let s = (k as f64 * std::f64::consts::PI / (2.0 * nf)).sin();
                eig[k] = -4.0 / (h * h) * s * s;
            }
        }
        BoundaryKind::Periodic => {
            let mut col = 0;
            for i in 0..n {
                q[[i, col]] = (1.0 / nf).sqrt();
            }
            col += 1;
            let mut k = 1;
            while 2 * k < n {
                let s = (k as f64 * std::f64::consts::PI / nf).sin();
                let lam = -4.0 / (h * h) * s * s;
                let norm = (2.0 / nf).sqrt();
                for i in 0..n {
                    let theta = 2.0 * std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / nf;
                    q[[i, col]] = norm * theta.cos();
                    q[[i, col + 1]] = norm * theta.sin();
                }
                eig[col] = lam;
                eig[col + 1] = lam;
                col += 2;
                k += 1;
            }
            if n.is_multiple_of(2) {
                // Nyquist mode: alternating signs, eigenvalue -4/h^2.
                let norm = (1.0 / nf).sqrt();
                for i in 0..n {
                    q[[i, col]] = if i % 2 == 0 { norm } else { -norm };
                }
                eig[col] = -4.0 / (h * h);
                col += 1;
            }
            debug_assert_eq!(col, n);
        }
    }
    (q, eig)
}

/// Precomputed transform pair for one grid. Construction is O(n^2) per
/// direction; applying a transform is two GEMMs.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    grid: GridSpec,
    qx: Array2<f64>,
    qy: Array2<f64>,
    eig_x: Vec<f64>,
    eig_y: Vec<f64>,
}

impl SpectralPlan {
    pub fn new(grid: GridSpec) -> Self {
        let (qx, eig_x) = basis_1d(grid.nx, grid.hx(), grid.bc);
        let (qy, eig_y) = basis_1d(grid.ny, grid.hy(), grid.bc);
        Self {
            grid,
            qx,
            qy,
            eig_x,
            eig_y,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn eig_x(&self) -> &[f64] {
        &self.eig_x
    }

    pub fn eig_y(&self) -> &[f64] {
        &self.eig_y
    }

    /// Coefficients of `f` in the tensor basis; entry [l, k] pairs y-mode l
    /// with x-mode k.
    pub fn forward(&self, f: &Array2<f64>) -> Array2<f64> {
        self.qy.t().dot(f).dot(&self.qx)
    }

    pub fn inverse(&self, hat: &Array2<f64>) -> Array2<f64> {
        self.qy.dot(hat).dot(&self.qx.t())
    }

    fn check_grid(&self, f: &Field) {
        assert!(
            f.grid == self.grid,
            "field grid {:?} does not match plan grid {:?}",
            f.grid,
            self.grid
        );
    }

    /// Solve `(c0 I - c_lap3 lap^3 - c_lap1 lap) z = rhs` by dividing each
    /// coefficient by the symbol.
    pub fn solve_implicit(&self, sym: &ASymbol, rhs: &Field) -> Field {
        self.check_grid(rhs);
        let mut hat = self.forward(&rhs.data);
        for (l, row) in hat.outer_iter_mut().enumerate() {
            let ey = self.eig_y[l];
            for (k, v) in row.into_iter().enumerate() {
                let s = sym.sigma(self.eig_x[k] + ey);
                debug_assert!(s > 0.0);
                *v /= s;
            }
        }
        Field {
            grid: self.grid,
            data: self.inverse(&hat),
        }
    }

    /// Solve `-lap eta = f` for mean-zero `f`, returning the mean-zero
    /// solution (the constant mode is removed, not inverted).
    pub fn inv_neg_laplacian(&self, f: &Field) -> Result<Field, SolveError> {
        self.check_grid(f);
        let mean = crate::grid::mass(f);
        let tol = 1e-10 * crate::grid::norm_m(f);
        if mean.abs() > tol {
            return Err(SolveError::NotMeanZero { mean, tol });
        }
        let mut hat = self.forward(&f.data);
        for (l, row) in hat.outer_iter_mut().enumerate() {
            let ey = self.eig_y[l];
            for (k, v) in row.into_iter().enumerate() {
                let lam = self.eig_x[k] + ey;
                if k == 0 && l == 0 {
                    *v = 0.0;
                } else {
                    *v /= -lam;
                }
            }
        }
        Ok(Field {
            grid: self.grid,
            data: self.inverse(&hat),
        })
    }

    /// `(f, g)_{-1} = (f, (-lap)^{-1} g)_m`, evaluated as a coefficient sum:
    /// the basis is orthonormal in the plain dot product, so
    /// `(u, v)_m = hx hy sum_modes u_hat v_hat`.
    pub fn hminus1_inner(&self, f: &Field, g: &Field) -> Result<f64, SolveError> {
        self.check_grid(f);
        self.check_grid(g);
        for side in [f, g] {
            let mean = crate::grid::mass(side);
            let tol = 1e-10 * crate::grid::norm_m(side);
            if mean.abs() > tol {
                return Err(SolveError::NotMeanZero { mean, tol });
            }
        }
        let fh = self.forward(&f.data);
        let gh = self.forward(&g.data);
        let mut s = 0.0;
        for l in 0..self.grid.ny {
            for k in 0..self.grid.nx {
                if k == 0 && l == 0 {
                    continue;
                }
                let lam = self.eig_x[k] + self.eig_y[l];
                s += fh[[l, k]] * gh[[l, k]] / (-lam);
            }
        }
        Ok(s * self.grid.cell_area())
    }

    /// `||f||_{-1}`; the coefficient form is nonnegative term by term.
    pub fn hminus1_norm(&self, f: &Field) -> Result<f64, SolveError> {
        self.check_grid(f);
        let mean = crate::grid::mass(f);
        let tol = 1e-10 * crate::grid::norm_m(f);
        if mean.abs() > tol {
            return Err(SolveError::NotMeanZero { mean, tol });
        }
        let fh = self.forward(&f.data);
        let mut s = 0.0;
        for l in 0..self.grid.ny {
            for k in 0..self.grid.nx {
                if k == 0 && l == 0 {
                    continue;
                }
                let lam = self.eig_x[k] + self.eig_y[l];
                s += fh[[l, k]] * fh[[l, k]] / (-lam);
            }
        }
        Ok((s * self.grid.cell_area()).sqrt())
    }

    /// Apply the Laplacian spectrally; used to cross-check that the basis
    /// diagonalizes the stencil.
    pub fn apply_laplacian(&self, f: &Field) -> Field {
        self.check_grid(f);
        let mut hat = self.forward(&f.data);
        for (l, row) in hat.outer_iter_mut().enumerate() {
            let ey = self.eig_y[l];
            for (k, v) in row.into_iter().enumerate() {
                *v *= self.eig_x[k] + ey;
            }
        }
        Field {
            grid: self.grid,
            data: self.inverse(&hat),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_m, laplacian, mass, max_norm, norm_m};
    use crate::verify::{self, flatten, random_field, unflatten};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn neumann_eigenvalues_small_grids() {
        let g = GridSpec::new(2, 2, 1.0, 1.0, BoundaryKind::Neumann).unwrap();
        let p = SpectralPlan::new(g);
        let e = sorted(p.eig_x().to_vec());
        assert_relative_eq!(e[0], -8.0, max_relative = 1e-13);
        assert_eq!(e[1], 0.0);

        let g = GridSpec::new(3, 2, 1.0, 1.0, BoundaryKind::Neumann).unwrap();
        let p = SpectralPlan::new(g);
        let e = sorted(p.eig_x().to_vec());
        assert_relative_eq!(e[0], -27.0, max_relative = 1e-13);
        assert_relative_eq!(e[1], -9.0, max_relative = 1e-13);
        assert_eq!(e[2], 0.0);
    }

    #[test]
    fn periodic_eigenvalues_small_grid() {
        let g = GridSpec::new(4, 2, 1.0, 1.0, BoundaryKind::Periodic).unwrap();
        let p = SpectralPlan::new(g);
        let e = sorted(p.eig_x().to_vec());
        assert_relative_eq!(e[0], -64.0, max_relative = 1e-13);
        assert_relative_eq!(e[1], -32.0, max_relative = 1e-13);
        assert_relative_eq!(e[2], -32.0, max_relative = 1e-13);
        assert_eq!(e[3], 0.0);
    }

    #[test]
    fn only_one_zero_eigenvalue() {
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            for (nx, ny) in [(2, 2), (5, 7), (8, 6), (9, 9)] {
                let g = GridSpec::new(nx, ny, 1.7, 0.9, bc).unwrap();
                let p = SpectralPlan::new(g);
                let mut zeros = 0;
                for &ey in p.eig_y() {
                    for &ex in p.eig_x() {
                        let lam = ex + ey;
                        assert!(lam <= 0.0);
                        if lam == 0.0 {
                            zeros += 1;
                        }
                    }
                }
                assert_eq!(zeros, 1, "{bc:?} {nx}x{ny}");
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = StdRng::seed_from_u64(7);
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            for (nx, ny) in [(2, 3), (16, 16), (33, 17), (64, 48)] {
                let g = GridSpec::new(nx, ny, 2.0, 1.0, bc).unwrap();
                let p = SpectralPlan::new(g);
                let f = random_field(g, &mut rng);
                let back = p.inverse(&p.forward(&f.data));
                let mut worst: f64 = 0.0;
                for (a, b) in back.iter().zip(f.data.iter()) {
                    worst = worst.max((a - b).abs());
                }
                assert!(
                    worst <= 1e-13 * max_norm(&f).max(1e-30),
                    "{bc:?} {nx}x{ny}: {worst:.3e}"
                );
            }
        }
    }

    // The plan must diagonalize the actual stencil, not an idealized one.
    #[test]
    fn spectral_laplacian_matches_stencil() {
        let mut rng = StdRng::seed_from_u64(11);
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            for (nx, ny) in [(2, 2), (5, 4), (12, 9), (32, 32)] {
                let g = GridSpec::new(nx, ny, 1.3, 2.2, bc).unwrap();
                let p = SpectralPlan::new(g);
                let f = random_field(g, &mut rng);
                let a = p.apply_laplacian(&f);
                let b = laplacian(&f);
                let scale = max_norm(&b).max(1e-30);
                let mut worst: f64 = 0.0;
                for (x, y) in a.data.iter().zip(b.data.iter()) {
                    worst = worst.max((x - y).abs());
                }
                assert!(worst <= 1e-11 * scale, "{bc:?} {nx}x{ny}: {worst:.3e}");
            }
        }
    }

    #[test]
    fn solve_implicit_matches_dense_lu() {
        let mut rng = StdRng::seed_from_u64(23);
        let sym = ASymbol::crank_nicolson(0.7, 0.75, 0.9, 0.01);
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            for (nx, ny) in [(4, 4), (8, 8), (8, 6)] {
                let g = GridSpec::new(nx, ny, 1.0, 1.4, bc).unwrap();
                let p = SpectralPlan::new(g);
                let rhs = random_field(g, &mut rng);
                let z = p.solve_implicit(&sym, &rhs);

                let lap = verify::dense_laplacian(&g);
                let n = nx * ny;
                let a = nalgebra::DMatrix::identity(n, n) * sym.c0
                    - verify::matrix_power(&lap, 3) * sym.c_lap3
                    - &lap * sym.c_lap1;
                let zd = a.lu().solve(&flatten(&rhs)).unwrap();
                let zd = unflatten(g, &zd);

                let scale = norm_m(&zd).max(1e-30);
                let mut worst: f64 = 0.0;
                for (x, y) in z.data.iter().zip(zd.data.iter()) {
                    worst = worst.max((x - y).abs());
                }
                assert!(worst <= 1e-10 * scale, "{bc:?} {nx}x{ny}: {worst:.3e}");
            }
        }
    }

    fn apply_a_by_stencils(sym: &ASymbol, z: &Field) -> Field {
        let l1 = laplacian(z);
        let l3 = laplacian(&laplacian(&l1));
        let mut out = z.clone();
        for ((o, l1v), l3v) in out.data.iter_mut().zip(l1.data.iter()).zip(l3.data.iter()) {
            *o = sym.c0 * *o - sym.c_lap3 * l3v - sym.c_lap1 * l1v;
        }
        out
    }

    #[test]
    fn solve_implicit_constant_rhs() {
        let g = GridSpec::new(6, 5, 2.0, 1.0, BoundaryKind::Periodic).unwrap();
        let p = SpectralPlan::new(g);
        let sym = ASymbol::crank_nicolson(1.0, 0.975, 0.1, 0.05);
        let z = p.solve_implicit(&sym, &Field::constant(g, 3.0));
        for v in z.data.iter() {
            assert_relative_eq!(*v, 3.0 / sym.c0, max_relative = 1e-13);
        }
    }

    // Single cosine modes: z = rhs/sigma(lambda), and the residual of the
    // solve survives re-applying the operator through three nested stencil
    // Laplacians. Measured that way the residual floor is
    // eps * c_lap3 * (8/h^2)^3 / sigma regardless of solver, so this runs in
    // the moderate-amplification regime; stiff symbols are covered in
    // solution space by the dense LU comparison below.
    #[test]
    fn solve_implicit_cosine_modes_nested_stencil_residual() {
        let g = GridSpec::new(16, 16, 1.0, 1.0, BoundaryKind::Neumann).unwrap();
        let p = SpectralPlan::new(g);
        let sym = ASymbol::crank_nicolson(0.001, 0.75, 0.9, 0.03125);
        let pi = std::f64::consts::PI;
        for (k, l) in [(1, 0), (0, 1), (3, 2), (8, 5), (15, 15)] {
            let rhs = Field::from_fn(g, |x, y| {
                (k as f64 * pi * x / g.lx).cos() * (l as f64 * pi * y / g.ly).cos()
            });
            let sx = (k as f64 * pi / (2.0 * g.nx as f64)).sin();
            let sy = (l as f64 * pi / (2.0 * g.ny as f64)).sin();
            let lam = -4.0 / (g.hx() * g.hx()) * sx * sx - 4.0 / (g.hy() * g.hy()) * sy * sy;
            let z = p.solve_implicit(&sym, &rhs);
            let sig = sym.sigma(lam);
            let mut worst: f64 = 0.0;
            for (zv, rv) in z.data.iter().zip(rhs.data.iter()) {
                worst = worst.max((zv - rv / sig).abs());
            }
            assert!(worst <= 1e-12, "mode ({k},{l}): z mismatch {worst:.3e}");

            let back = apply_a_by_stencils(&sym, &z);
            let mut res: f64 = 0.0;
            for (a, b) in back.data.iter().zip(rhs.data.iter()) {
                res = res.max((a - b).abs());
            }
            assert!(
                res <= 1e-11 * norm_m(&rhs),
                "mode ({k},{l}): residual {res:.3e}"
            );
        }
    }

    // A(f) assembled with stencils, then solved: recovers f. Same
    // moderate-amplification regime as the cosine-mode test; the forward
    // stencil application already carries the round-off floor.
    #[test]
    fn solve_implicit_round_trip_recovers_field() {
        let mut rng = StdRng::seed_from_u64(31);
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            let g = GridSpec::new(16, 16, 1.0, 1.0, bc).unwrap();
            let p = SpectralPlan::new(g);
            let sym = ASymbol::crank_nicolson(0.001, 0.75, 0.9, 0.03125);
            let f = random_field(g, &mut rng);
            let rhs = apply_a_by_stencils(&sym, &f);
            let z = p.solve_implicit(&sym, &rhs);
            let mut diff2 = 0.0;
            for (a, b) in z.data.iter().zip(f.data.iter()) {
                diff2 += (a - b) * (a - b);
            }
            let rel = (diff2 * g.cell_area()).sqrt() / norm_m(&f);
            assert!(rel <= 1e-11, "{bc:?}: recovery error {rel:.3e}");
        }
    }

    #[test]
    fn inv_neg_laplacian_matches_dense_and_demeans() {
        let mut rng = StdRng::seed_from_u64(37);
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            for (nx, ny) in [(5, 4), (8, 8)] {
                let g = GridSpec::new(nx, ny, 1.0, 2.0, bc).unwrap();
                let p = SpectralPlan::new(g);
                let mut f = random_field(g, &mut rng);
                let m = mass(&f) / (g.lx * g.ly);
                f.data -= m;
                let eta = p.inv_neg_laplacian(&f).unwrap();
                let etad = verify::dense_inv_neg_laplacian(&g, &f);
                let scale = norm_m(&etad).max(1e-30);
                let mut worst: f64 = 0.0;
                for (x, y) in eta.data.iter().zip(etad.data.iter()) {
                    worst = worst.max((x - y).abs());
                }
                assert!(worst <= 1e-10 * scale, "{bc:?} {nx}x{ny}: {worst:.3e}");
                assert!(mass(&eta).abs() <= 1e-12 * norm_m(&eta).max(1e-30));
            }
        }
    }

    #[test]
    fn inv_neg_laplacian_rejects_nonzero_mean() {
        let g = GridSpec::new(6, 6, 1.0, 1.0, BoundaryKind::Neumann).unwrap();
        let p = SpectralPlan::new(g);
        let f = Field::constant(g, 1.0);
        match p.inv_neg_laplacian(&f) {
            Err(SolveError::NotMeanZero { mean, .. }) => {
                assert_relative_eq!(mean, 1.0, max_relative = 1e-12)
            }
            other => panic!("expected mean rejection, got {other:?}"),
        }
    }

    #[test]
    fn hminus1_inner_symmetric_positive_and_consistent() {
        let mut rng = StdRng::seed_from_u64(41);
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            let g = GridSpec::new(9, 7, 1.5, 1.0, bc).unwrap();
            let p = SpectralPlan::new(g);
            let mut f = random_field(g, &mut rng);
            let mut h = random_field(g, &mut rng);
            f.data -= mass(&f) / (g.lx * g.ly);
            h.data -= mass(&h) / (g.lx * g.ly);

            let fg = p.hminus1_inner(&f, &h).unwrap();
            let gf = p.hminus1_inner(&h, &f).unwrap();
            assert_relative_eq!(fg, gf, max_relative = 1e-12);

            // Same number via the defining solve.
            let eta = p.inv_neg_laplacian(&h).unwrap();
            assert_relative_eq!(fg, inner_m(&f, &eta), max_relative = 1e-10);

            let ff = p.hminus1_inner(&f, &f).unwrap();
            assert!(ff >= 0.0);
            assert_relative_eq!(p.hminus1_norm(&f).unwrap(), ff.sqrt(), max_relative = 1e-12);
        }
    }
}
