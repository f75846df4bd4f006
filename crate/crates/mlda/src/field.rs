//! Gaussian random fields via truncated Karhunen–Loève expansions.
//!
//! A zero-mean field with covariance kernel `C` is represented as
//! `f(x) = sum_i sqrt(mu_i) phi_i(x) theta_i` with `(mu_i, phi_i)` the
//! leading eigenpairs of the covariance operator and independent standard
//! normal coefficients `theta_i`. The operator eigenproblem is discretized
//! by the Nyström method on a grid with quadrature weights equal to cell
//! areas: the symmetric scaled problem `W^1/2 C W^1/2 v = mu v` is solved
//! densely and eigenfunctions recovered as `phi = W^-1/2 v`, which makes
//! them orthonormal under the grid quadrature.
//!
//! Coarser levels reuse the same coefficients: eigenfunctions are carried
//! to any target point set by bilinear interpolation, eigenvalues
//! unchanged, so one `theta` realizes the field at every resolution.

use nalgebra::{DMatrix, DVector};

use crate::error::BuildError;

/// Stationary covariance kernels used by the benchmark problems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CovarianceKernel {
    /// `sigma^2 (1 + sqrt(3) r / lambda) exp(-sqrt(3) r / lambda)`.
    Matern32 { variance: f64, length_scale: f64 },
    /// `sigma^2 exp(-r^2 / (2 lambda^2))`.
    SquaredExponential { variance: f64, length_scale: f64 },
}

impl CovarianceKernel {
    pub fn eval(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        match self {
            CovarianceKernel::Matern32 { variance, length_scale } => {
                let s = 3f64.sqrt() * r / length_scale;
                variance * (1.0 + s) * (-s).exp()
            }
            CovarianceKernel::SquaredExponential { variance, length_scale } => {
                variance * (-r * r / (2.0 * length_scale * length_scale)).exp()
            }
        }
    }
}

/// A structured set of points in `[0,1]^2` with quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2 {
    /// Points per direction.
    pub m: usize,
    /// Midpoint grids place points at cell centers; nodal grids include
    /// the domain boundary.
    pub kind: GridKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Midpoint,
    Nodal,
}

impl Grid2 {
    pub fn midpoints(m: usize) -> Self {
        assert!(m >= 1);
        Grid2 { m, kind: GridKind::Midpoint }
    }

    pub fn nodes(m: usize) -> Self {
        assert!(m >= 2);
        Grid2 { m, kind: GridKind::Nodal }
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::Midpoint => (i as f64 + 0.5) / self.m as f64,
            GridKind::Nodal => i as f64 / (self.m - 1) as f64,
        }
    }

    /// Point `j` in row-major order (x fastest).
    pub fn point(&self, j: usize) -> [f64; 2] {
        let (ix, iy) = (j % self.m, j / self.m);
        [self.coord(ix), self.coord(iy)]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    /// Cell-area quadrature weight of point `j` (the Voronoi cell for
    /// nodal grids: half cells on edges, quarter cells at corners).
    pub fn weight(&self, j: usize) -> f64 {
        match self.kind {
            GridKind::Midpoint => {
                let h = 1.0 / self.m as f64;
                h * h
            }
            GridKind::Nodal => {
                let h = 1.0 / (self.m - 1) as f64;
                let (ix, iy) = (j % self.m, j / self.m);
                let wx = if ix == 0 || ix == self.m - 1 { 0.5 * h } else { h };
                let wy = if iy == 0 || iy == self.m - 1 { 0.5 * h } else { h };
                wx * wy
            }
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.weight(j)).collect()
    }

    /// Bilinear interpolation of nodal values at an arbitrary point of
    /// the domain. Coordinates are clamped to the grid hull, so the
    /// interpolant extends constantly past the outermost points of a
    /// midpoint grid.
    pub fn interpolate(&self, values: &DVector<f64>, point: [f64; 2]) -> f64 {
        assert_eq!(values.len(), self.len());
        let (first, h, cells) = match self.kind {
            GridKind::Midpoint => (0.5 / self.m as f64, 1.0 / self.m as f64, self.m - 1),
            GridKind::Nodal => (0.0, 1.0 / (self.m - 1) as f64, self.m - 1),
        };
        let locate = |c: f64| -> (usize, f64) {
            if cells == 0 {
                return (0, 0.0);
            }
            let t = ((c - first) / h).clamp(0.0, cells as f64);
            let cell = (t.floor() as usize).min(cells - 1);
            (cell, t - cell as f64)
        };
        let (cx, tx) = locate(point[0]);
        let (cy, ty) = locate(point[1]);
        let idx = |ix: usize, iy: usize| iy * self.m + ix;
        if cells == 0 {
            return values[0];
        }
        let v00 = values[idx(cx, cy)];
        let v10 = values[idx(cx + 1, cy)];
        let v01 = values[idx(cx, cy + 1)];
        let v11 = values[idx(cx + 1, cy + 1)];
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
    }
}

/// Dense covariance matrix of a kernel on a point set.
pub fn covariance_matrix(kernel: &CovarianceKernel, points: &[[f64; 2]]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |p, q| kernel.eval(points[p], points[q]))
}

/// A truncated expansion: leading eigenpairs of a covariance operator,
/// eigenfunctions tabulated on a point set.
#[derive(Clone, Debug)]
pub struct KlExpansion {
    /// Strictly positive, sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` holds eigenfunction `i` at the points.
    pub eigenfunctions: DMatrix<f64>,
    /// The structured grid the expansion was built on, when it was built
    /// on one (projected expansions live on bare point sets).
    pub grid: Option<Grid2>,
    pub points: Vec<[f64; 2]>,
}

impl KlExpansion {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_points(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    /// Realize the field for a coefficient vector: `sum_i sqrt(mu_i)
    /// phi_i theta_i`.
    pub fn realize(&self, theta: &DVector<f64>) -> DVector<f64> {
        assert_eq!(theta.len(), self.order(), "coefficient count must match truncation order");
        let scaled = DVector::from_iterator(
            self.order(),
            self.eigenvalues.iter().zip(theta.iter()).map(|(mu, t)| mu.sqrt() * t),
        );
        &self.eigenfunctions * scaled
    }

    /// Carry the expansion to another point set by bilinear interpolation
    /// of each eigenfunction. Eigenvalues are unchanged, so the same
    /// coefficients parametrize the field at both resolutions.
    pub fn project_to(&self, target: &[[f64; 2]]) -> KlExpansion {
        let grid = self.grid.as_ref().expect("projection needs the source expansion on a structured grid");
        for p in target {
            assert!(
                (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]),
                "target point {p:?} outside the unit square"
            );
        }
        let mut funcs = DMatrix::zeros(target.len(), self.order());
        for i in 0..self.order() {
            let col = DVector::from(self.eigenfunctions.column(i).clone_owned());
            for (row, p) in target.iter().enumerate() {
                funcs[(row, i)] = grid.interpolate(&col, *p);
            }
        }
        KlExpansion {
            eigenvalues: self.eigenvalues.clone(),
            eigenfunctions: funcs,
            grid: None,
            points: target.to_vec(),
        }
    }

    pub fn project_to_grid(&self, target: &Grid2) -> KlExpansion {
        let mut projected = self.project_to(&target.points());
        projected.grid = Some(target.clone());
        projected
    }
}

/// Solve the weighted eigenproblem `C W phi = mu phi` for the leading `r`
/// pairs via the symmetric scaled form, with eigenfunctions orthonormal
/// under the weights and signs fixed by making each function's
/// largest-magnitude entry positive.
pub fn kl_decompose(
    covariance: &DMatrix<f64>,
    weights: &[f64],
    r: usize,
) -> Result<KlExpansion, BuildError> {
    let n = covariance.nrows();
    assert_eq!(covariance.ncols(), n, "covariance must be square");
    assert_eq!(weights.len(), n, "one weight per point");
    assert!(weights.iter().all(|&w| w > 0.0), "weights must be positive");

    let sqrt_w = DVector::from_iterator(n, weights.iter().map(|w| w.sqrt()));
    let mut scaled = covariance.clone();
    for p in 0..n {
        for q in 0..n {
            scaled[(p, q)] *= sqrt_w[p] * sqrt_w[q];
        }
    }
    // Exact symmetry guards the eigensolver against roundoff in the kernel.
    for p in 0..n {
        for q in 0..p {
            let avg = 0.5 * (scaled[(p, q)] + scaled[(q, p)]);
            scaled[(p, q)] = avg;
            scaled[(q, p)] = avg;
        }
    }

    let eigen = scaled.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).unwrap());

    let max_eig = eigen.eigenvalues[order[0]].max(0.0);
    let tol = max_eig * 1e-12;
    let available = order.iter().take_while(|&&i| eigen.eigenvalues[i] > tol).count();
    if r > available {
        return Err(BuildError::InsufficientRank { requested: r, available });
    }

    let mut eigenvalues = Vec::with_capacity(r);
    let mut funcs = DMatrix::zeros(n, r);
    for (col, &i) in order.iter().take(r).enumerate() {
        eigenvalues.push(eigen.eigenvalues[i]);
        // phi = W^-1/2 v
        let mut phi = DVector::from(eigen.eigenvectors.column(i).clone_owned());
        for p in 0..n {
            phi[p] /= sqrt_w[p];
        }
        // Sign convention: largest-magnitude entry positive.
        let mut lead = 0;
        for p in 1..n {
            if phi[p].abs() > phi[lead].abs() {
                lead = p;
            }
        }
        if phi[lead] < 0.0 {
            phi.neg_mut();
        }
        funcs.set_column(col, &phi);
    }

    Ok(KlExpansion { eigenvalues, eigenfunctions: funcs, grid: None, points: Vec::new() })
}

/// Decompose a kernel directly on a structured grid.
pub fn kl_decompose_on_grid(
    kernel: &CovarianceKernel,
    grid: &Grid2,
    r: usize,
) -> Result<KlExpansion, BuildError> {
    let points = grid.points();
    let cov = covariance_matrix(kernel, &points);
    let mut kl = kl_decompose(&cov, &grid.weights(), r)?;
    kl.grid = Some(grid.clone());
    kl.points = points;
    Ok(kl)
}
