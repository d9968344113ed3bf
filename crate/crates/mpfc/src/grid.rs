//! Block-centered grid, fields, and difference operators.
//!
//! Unknowns live at cell centers x_i = (i + 1/2) hx, y_j = (j + 1/2) hy
//! (0-based here; the usual 1-based convention has centers at (i - 1/2) h).
//! Edge differences of a cell field live at half-integer faces:
//!
//! ```text
//!   [dx g]_{i+1/2,j} = (g_{i+1,j} - g_{i,j}) / hx
//!   [Dx w]_{i,j}     = (w_{i+1/2,j} - w_{i-1/2,j}) / hx
//! ```
//!
//! and `laplacian = Dx(dx .) + Dy(dy .)`. Ghost cells mirror across the
//! boundary under `Neumann` (so boundary edge differences vanish) and wrap
//! under `Periodic`. The same ghost rule is applied on every call, so
//! repeated application yields the consistent powers of the operator.
//!
//! Weighted inner products: `(f,g)_m` sums over cells with weight hx*hy;
//! `(f,g)_x` and `(f,g)_y` sum over the stored edge set with the same
//! weight. Under Neumann only interior edges are stored, which is exactly
//! the edge set for which summation by parts holds:
//! `(q, Dx w)_m = -(dx q, w)_x` whenever boundary edges of `w` vanish.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have nx >= 2 and ny >= 2, got {nx} x {ny}")]
    TooFew { nx: usize, ny: usize },
    #[error("domain extents must be positive and finite, got lx = {lx}, ly = {ly}")]
    BadExtent { lx: f64, ly: f64 },
    #[error("data shape {got_rows} x {got_cols} does not match grid {ny} x {nx} (rows = y)")]
    ShapeMismatch {
        nx: usize,
        ny: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("field contains a non-finite value at cell (i = {i}, j = {j})")]
    NonFinite { i: usize, j: usize },
    #[error("grids do not nest: {cnx} x {cny} must be exactly half of {fnx} x {fny} with the same domain and boundary")]
    NotNested {
        cnx: usize,
        cny: usize,
        fnx: usize,
        fny: usize,
    },
}

/// Boundary closure used by every difference operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Mirror reflection: ghost value equals the adjacent interior value.
    Neumann,
    /// Wrap-around in both directions.
    Periodic,
}

/// Uniform cell-centered grid on (0, lx) x (0, ly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub bc: BoundaryKind,
}

impl GridSpec {
    pub fn new(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        bc: BoundaryKind,
    ) -> Result<Self, GridError> {
        if nx < 2 || ny < 2 {
            return Err(GridError::TooFew { nx, ny });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(GridError::BadExtent { lx, ly });
        }
        Ok(Self { nx, ny, lx, ly, bc })
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// hx * hy, the quadrature weight of every cell.
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// Center abscissa of cell column `i` (0-based).
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    /// Center ordinate of cell row `j` (0-based).
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }
}

/// Cell-centered scalar field. `data[[j, i]]` is the value in cell (i, j),
/// row-major with j outer, which is also the on-disk layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub data: Array2<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: Array2::zeros((grid.ny, grid.nx)),
        }
    }

    pub fn constant(grid: GridSpec, v: f64) -> Self {
        Self {
            grid,
            data: Array2::from_elem((grid.ny, grid.nx), v),
        }
    }

    /// Evaluate `f(x, y)` at every cell center.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = Array2::from_shape_fn((grid.ny, grid.nx), |(j, i)| f(grid.x(i), grid.y(j)));
        Self { grid, data }
    }

    /// Wrap existing data, checking shape and finiteness.
    pub fn from_data(grid: GridSpec, data: Array2<f64>) -> Result<Self, GridError> {
        if data.nrows() != grid.ny || data.ncols() != grid.nx {
            return Err(GridError::ShapeMismatch {
                nx: grid.nx,
                ny: grid.ny,
                got_rows: data.nrows(),
                got_cols: data.ncols(),
            });
        }
        for ((j, i), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(GridError::NonFinite { i, j });
            }
        }
        Ok(Self { grid, data })
    }
}

/// Values on x-normal edges. Under Neumann only the nx-1 interior edges are
/// stored (boundary edges are structurally zero); under Periodic all nx
/// wrapped edges, with column e holding the edge between cells e and e+1
/// mod nx.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFieldX {
    pub grid: GridSpec,
    pub data: Array2<f64>,
}

/// Values on y-normal edges; layout mirrors [`EdgeFieldX`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFieldY {
    pub grid: GridSpec,
    pub data: Array2<f64>,
}

fn edge_cols(grid: &GridSpec) -> usize {
    match grid.bc {
        BoundaryKind::Neumann => grid.nx - 1,
        BoundaryKind::Periodic => grid.nx,
    }
}

fn edge_rows(grid: &GridSpec) -> usize {
    match grid.bc {
        BoundaryKind::Neumann => grid.ny - 1,
        BoundaryKind::Periodic => grid.ny,
    }
}

impl EdgeFieldX {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: Array2::zeros((grid.ny, edge_cols(&grid))),
        }
    }
}

impl EdgeFieldY {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: Array2::zeros((edge_rows(&grid), grid.nx)),
        }
    }
}

/// Edge difference in x: `w_{i+1/2,j} = (g_{i+1,j} - g_{i,j}) / hx`.
pub fn dx_edge(f: &Field) -> EdgeFieldX {
    let g = f.grid;
    let hx = g.hx();
    let mut w = EdgeFieldX::zeros(g);
    match g.bc {
        BoundaryKind::Neumann => {
            for j in 0..g.ny {
                for i in 0..g.nx - 1 {
                    w.data[[j, i]] = (f.data[[j, i + 1]] - f.data[[j, i]]) / hx;
                }
            }
        }
        BoundaryKind::Periodic => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let ip = if i + 1 == g.nx { 0 } else { i + 1 };
                    w.data[[j, i]] = (f.data[[j, ip]] - f.data[[j, i]]) / hx;
                }
            }
        }
    }
    w
}

/// Edge difference in y: `w_{i,j+1/2} = (g_{i,j+1} - g_{i,j}) / hy`.
pub fn dy_edge(f: &Field) -> EdgeFieldY {
    let g = f.grid;
    let hy = g.hy();
    let mut w = EdgeFieldY::zeros(g);
    match g.bc {
        BoundaryKind::Neumann => {
            for j in 0..g.ny - 1 {
                for i in 0..g.nx {
                    w.data[[j, i]] = (f.data[[j + 1, i]] - f.data[[j, i]]) / hy;
                }
            }
        }
        BoundaryKind::Periodic => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let jp = if j + 1 == g.ny { 0 } else { j + 1 };
                    w.data[[j, i]] = (f.data[[jp, i]] - f.data[[j, i]]) / hy;
                }
            }
        }
    }
    w
}

/// Cell difference of an x-edge field: `(w_{i+1/2,j} - w_{i-1/2,j}) / hx`.
/// Missing boundary edges under Neumann enter as zero.
pub fn div_x(w: &EdgeFieldX) -> Field {
    let g = w.grid;
    let hx = g.hx();
    let mut out = Field::zeros(g);
    match g.bc {
        BoundaryKind::Neumann => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let right = if i < g.nx - 1 { w.data[[j, i]] } else { 0.0 };
                    let left = if i > 0 { w.data[[j, i - 1]] } else { 0.0 };
                    out.data[[j, i]] = (right - left) / hx;
                }
            }
        }
        BoundaryKind::Periodic => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let left = if i == 0 { g.nx - 1 } else { i - 1 };
                    out.data[[j, i]] = (w.data[[j, i]] - w.data[[j, left]]) / hx;
                }
            }
        }
    }
    out
}

/// Cell difference of a y-edge field, the y analogue of [`div_x`].
pub fn div_y(w: &EdgeFieldY) -> Field {
    let g = w.grid;
    let hy = g.hy();
    let mut out = Field::zeros(g);
    match g.bc {
        BoundaryKind::Neumann => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let up = if j < g.ny - 1 { w.data[[j, i]] } else { 0.0 };
                    let down = if j > 0 { w.data[[j - 1, i]] } else { 0.0 };
                    out.data[[j, i]] = (up - down) / hy;
                }
            }
        }
        BoundaryKind::Periodic => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let below = if j == 0 { g.ny - 1 } else { j - 1 };
                    out.data[[j, i]] = (w.data[[j, i]] - w.data[[below, i]]) / hy;
                }
            }
        }
    }
    out
}

/// Five-point Laplacian as the literal composition `Dx dx + Dy dy`, so the
/// ghost rule is exactly the one used by the edge operators.
pub fn laplacian(f: &Field) -> Field {
    let mut out = div_x(&dx_edge(f));
    out.data += &div_y(&dy_edge(f)).data;
    out
}

fn assert_same_grid(a: &GridSpec, b: &GridSpec) {
    assert!(a == b, "fields live on different grids: {a:?} vs {b:?}");
}

/// `(f, g)_m = hx hy sum_ij f_ij g_ij`.
pub fn inner_m(f: &Field, g: &Field) -> f64 {
    assert_same_grid(&f.grid, &g.grid);
    let mut s = 0.0;
    for (a, b) in f.data.iter().zip(g.data.iter()) {
        s += a * b;
    }
    s * f.grid.cell_area()
}

/// Inner product over the stored x-edge set, weight hx hy.
pub fn inner_x(a: &EdgeFieldX, b: &EdgeFieldX) -> f64 {
    assert_same_grid(&a.grid, &b.grid);
    let mut s = 0.0;
    for (p, q) in a.data.iter().zip(b.data.iter()) {
        s += p * q;
    }
    s * a.grid.cell_area()
}

/// Inner product over the stored y-edge set, weight hx hy.
pub fn inner_y(a: &EdgeFieldY, b: &EdgeFieldY) -> f64 {
    assert_same_grid(&a.grid, &b.grid);
    let mut s = 0.0;
    for (p, q) in a.data.iter().zip(b.data.iter()) {
        s += p * q;
    }
    s * a.grid.cell_area()
}

pub fn norm_m(f: &Field) -> f64 {
    inner_m(f, f).sqrt()
}

/// `(f, 1)_m`, the discrete mass.
pub fn mass(f: &Field) -> f64 {
    f.data.iter().sum::<f64>() * f.grid.cell_area()
}

pub fn max_norm(f: &Field) -> f64 {
    f.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Discrete H1 seminorm: `sqrt((dx f, dx f)_x + (dy f, dy f)_y)`.
pub fn grad_norm(f: &Field) -> f64 {
    let wx = dx_edge(f);
    let wy = dy_edge(f);
    (inner_x(&wx, &wx) + inner_y(&wy, &wy)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(nx: usize, ny: usize, bc: BoundaryKind) -> GridSpec {
        GridSpec::new(nx, ny, 1.0, 1.0, bc).unwrap()
    }

    fn field_2x2(bc: BoundaryKind) -> Field {
        let g = grid(2, 2, bc);
        Field::from_data(g, ndarray::array![[1.0, 2.0], [3.0, 4.0]]).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(1, 4, 1.0, 1.0, BoundaryKind::Neumann).is_err());
        assert!(GridSpec::new(4, 0, 1.0, 1.0, BoundaryKind::Neumann).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0, BoundaryKind::Neumann).is_err());
        assert!(GridSpec::new(4, 4, 1.0, -2.0, BoundaryKind::Periodic).is_err());
        assert!(GridSpec::new(4, 4, f64::INFINITY, 1.0, BoundaryKind::Periodic).is_err());
    }

    #[test]
    fn from_data_validates() {
        let g = grid(2, 2, BoundaryKind::Neumann);
        assert!(Field::from_data(g, Array2::zeros((3, 2))).is_err());
        let mut bad = Array2::zeros((2, 2));
        bad[[1, 0]] = f64::NAN;
        assert!(matches!(
            Field::from_data(g, bad),
            Err(GridError::NonFinite { i: 0, j: 1 })
        ));
    }

    #[test]
    fn cell_centers() {
        let g = GridSpec::new(4, 2, 2.0, 1.0, BoundaryKind::Neumann).unwrap();
        assert_relative_eq!(g.hx(), 0.5);
        assert_relative_eq!(g.hy(), 0.5);
        assert_relative_eq!(g.x(0), 0.25);
        assert_relative_eq!(g.x(3), 1.75);
        assert_relative_eq!(g.y(1), 0.75);
    }

    // Hand-applied stencil on a 2x2 unit square, h = 1/2. Mirror ghosts kill
    // the boundary edges, so e.g. cell (0,0) sees (f01-f00)/h^2 + (f10-f00)/h^2.
    #[test]
    fn laplacian_neumann_2x2_hand_values() {
        let lap = laplacian(&field_2x2(BoundaryKind::Neumann));
        let want = ndarray::array![[12.0, 4.0], [-4.0, -12.0]];
        for (a, b) in lap.data.iter().zip(want.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    // Periodic 2x2: both neighbors in each direction are the same cell, so the
    // off-diagonal coupling doubles.
    #[test]
    fn laplacian_periodic_2x2_hand_values() {
        let lap = laplacian(&field_2x2(BoundaryKind::Periodic));
        let want = ndarray::array![[24.0, 8.0], [-8.0, -24.0]];
        for (a, b) in lap.data.iter().zip(want.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn inner_m_hand_value() {
        let g = grid(2, 2, BoundaryKind::Neumann);
        let f = Field::from_data(g, ndarray::array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let w = Field::from_data(g, ndarray::array![[2.0, -1.0], [0.5, 3.0]]).unwrap();
        assert_relative_eq!(inner_m(&f, &w), 3.375, max_relative = 1e-15);
    }

    #[test]
    fn edge_shapes() {
        let gn = grid(5, 3, BoundaryKind::Neumann);
        let gp = grid(5, 3, BoundaryKind::Periodic);
        let fn_ = Field::from_fn(gn, |x, y| x * y);
        let fp = Field::from_fn(gp, |x, y| x * y);
        assert_eq!(dx_edge(&fn_).data.dim(), (3, 4));
        assert_eq!(dy_edge(&fn_).data.dim(), (2, 5));
        assert_eq!(dx_edge(&fp).data.dim(), (3, 5));
        assert_eq!(dy_edge(&fp).data.dim(), (3, 5));
    }

    #[test]
    fn laplacian_annihilates_constants() {
        for bc in [BoundaryKind::Neumann, BoundaryKind::Periodic] {
            let g = grid(7, 5, bc);
            let c = Field::constant(g, 3.25);
            assert_eq!(max_norm(&laplacian(&c)), 0.0);
        }
    }

    #[test]
    fn mass_of_constant() {
        let g = GridSpec::new(8, 4, 2.0, 3.0, BoundaryKind::Periodic).unwrap();
        let c = Field::constant(g, 0.5);
        assert_relative_eq!(mass(&c), 0.5 * 6.0, max_relative = 1e-15);
    }

    #[test]
    fn grad_norm_of_linear_profile_periodic_vs_neumann() {
        // f = x on a Neumann grid: interior edge differences are exactly 1.
        let g = GridSpec::new(6, 4, 3.0, 2.0, BoundaryKind::Neumann).unwrap();
        let f = Field::from_fn(g, |x, _| x);
        // 5 interior x-edges per row, 4 rows, weight 0.25; dy edges vanish.
        let expect = (5.0 * 4.0 * 0.25_f64).sqrt();
        assert_relative_eq!(grad_norm(&f), expect, max_relative = 1e-13);
    }
}
