//! Piecewise-linear finite elements for the steady Darcy pressure
//! equation `-div(k grad p) = 0` on the unit square.
//!
//! The mesh is a uniform right-angled triangulation: each grid cell is cut
//! along its lower-left to upper-right diagonal. The permeability is
//! constant per triangle (evaluated at the centroid by the caller).
//! Boundary conditions are fixed head p = 0 at x = 0 and p = 1 at x = 1,
//! with no-flow boundaries at y = 0 and y = 1. The reduced system is
//! symmetric positive-definite with bandwidth about one grid row, so a
//! banded Cholesky factorization solves it exactly.

use nalgebra::DVector;

use crate::field::Grid2;

/// Uniform triangulation of `[0,1]^2` with `m` nodes per direction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuredMesh {
    pub m: usize,
}

impl StructuredMesh {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2, "need at least two nodes per direction");
        StructuredMesh { m }
    }

    pub fn num_nodes(&self) -> usize {
        self.m * self.m
    }

    pub fn num_triangles(&self) -> usize {
        2 * (self.m - 1) * (self.m - 1)
    }

    pub fn node_grid(&self) -> Grid2 {
        Grid2::nodes(self.m)
    }

    fn node(&self, ix: usize, iy: usize) -> usize {
        iy * self.m + ix
    }

    pub fn node_coords(&self, idx: usize) -> [f64; 2] {
        let h = 1.0 / (self.m - 1) as f64;
        [(idx % self.m) as f64 * h, (idx / self.m) as f64 * h]
    }

    /// Vertex indices of triangle `t`, counterclockwise. Triangles come in
    /// pairs per cell: lower-right then upper-left.
    pub fn triangle(&self, t: usize) -> [usize; 3] {
        let cell = t / 2;
        let cells = self.m - 1;
        let (cx, cy) = (cell % cells, cell / cells);
        if t % 2 == 0 {
            [self.node(cx, cy), self.node(cx + 1, cy), self.node(cx + 1, cy + 1)]
        } else {
            [self.node(cx, cy), self.node(cx + 1, cy + 1), self.node(cx, cy + 1)]
        }
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let tri = self.triangle(t);
        let mut c = [0.0, 0.0];
        for v in tri {
            let p = self.node_coords(v);
            c[0] += p[0] / 3.0;
            c[1] += p[1] / 3.0;
        }
        c
    }

    pub fn centroids(&self) -> Vec<[f64; 2]> {
        (0..self.num_triangles()).map(|t| self.centroid(t)).collect()
    }
}

/// Local P1 stiffness of one triangle with conductivity `k`.
fn local_stiffness(coords: [[f64; 2]; 3], k: f64) -> [[f64; 3]; 3] {
    let [a, b, c] = coords;
    let two_area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let area = 0.5 * two_area;
    // Barycentric gradients.
    let g = [
        [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
        [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
        [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
    ];
    let mut ke = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = k * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    ke
}

/// Symmetric banded matrix in lower-band storage with Cholesky solve.
struct BandedSpd {
    n: usize,
    bw: usize,
    /// `band[i * (bw + 1) + d] = A[i, i - d]` for `d <= min(i, bw)`.
    band: Vec<f64>,
}

impl BandedSpd {
    fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        // Symmetric: store lower triangle only.
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        debug_assert!(d <= self.bw);
        self.band[hi * (self.bw + 1) + d] += v;
    }

    /// In-place Cholesky; returns false if a pivot is not positive.
    fn factorize(&mut self) -> bool {
        let w = self.bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..=i {
                let mut sum = self.band[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(self.bw));
                for k in k0..j {
                    sum -= self.band[i * w + (i - k)] * self.band[j * w + (j - k)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return false;
                    }
                    self.band[i * w] = sum.sqrt();
                } else {
                    self.band[i * w + (i - j)] = sum / self.band[j * w];
                }
            }
        }
        true
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let w = self.bw + 1;
        let mut x = rhs.clone();
        // L y = rhs
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let mut sum = x[i];
            for j in j0..i {
                sum -= self.band[i * w + (i - j)] * x[j];
            }
            x[i] = sum / self.band[i * w];
        }
        // L^T x = y
        for i in (0..self.n).rev() {
            let mut sum = x[i];
            let j1 = (i + self.bw).min(self.n - 1);
            for j in (i + 1)..=j1 {
                sum -= self.band[j * w + (j - i)] * x[j];
            }
            x[i] = sum / self.band[i * w];
        }
        x
    }
}

/// Solve the pressure equation for one conductivity per triangle and
/// return the head at every node.
pub fn solve_darcy(mesh: &StructuredMesh, k_per_triangle: &[f64]) -> DVector<f64> {
    assert_eq!(k_per_triangle.len(), mesh.num_triangles(), "one conductivity per triangle");
    assert!(k_per_triangle.iter().all(|&k| k > 0.0), "conductivity must be positive");
    let m = mesh.m;
    let n_nodes = mesh.num_nodes();

    // Dirichlet values at x = 0 and x = 1; everything else is free.
    let dirichlet = |idx: usize| -> Option<f64> {
        match idx % m {
            0 => Some(0.0),
            ix if ix == m - 1 => Some(1.0),
            _ => None,
        }
    };
    let mut free_index = vec![usize::MAX; n_nodes];
    let mut n_free = 0;
    for idx in 0..n_nodes {
        if dirichlet(idx).is_none() {
            free_index[idx] = n_free;
            n_free += 1;
        }
    }

    // Free-node indices in one coupled pair differ by at most one grid row.
    let mut matrix = BandedSpd::zeros(n_free, m);
    let mut rhs = DVector::zeros(n_free);

    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let coords = [mesh.node_coords(tri[0]), mesh.node_coords(tri[1]), mesh.node_coords(tri[2])];
        let ke = local_stiffness(coords, k_per_triangle[t]);
        for (a, &na) in tri.iter().enumerate() {
            let Some(ia) = (free_index[na] != usize::MAX).then_some(free_index[na]) else { continue };
            for (b, &nb) in tri.iter().enumerate() {
                match dirichlet(nb) {
                    None => {
                        let ib = free_index[nb];
                        if ib <= ia {
                            matrix.add(ia, ib, ke[a][b]);
                        }
                    }
                    Some(value) => rhs[ia] -= ke[a][b] * value,
                }
            }
        }
    }

    assert!(matrix.factorize(), "stiffness matrix must be positive-definite for positive conductivity");
    let solution = matrix.solve(&rhs);

    let mut heads = DVector::zeros(n_nodes);
    for idx in 0..n_nodes {
        heads[idx] = match dirichlet(idx) {
            Some(v) => v,
            None => solution[free_index[idx]],
        };
    }
    heads
}

/// Residual of the unconstrained (all-Neumann) stiffness system at a given
/// head field: zero at interior nodes of a solution, and the discrete
/// boundary fluxes at Dirichlet nodes. Fluxes over the whole boundary sum
/// to zero by conservation.
pub fn flux_residual(mesh: &StructuredMesh, k_per_triangle: &[f64], heads: &DVector<f64>) -> DVector<f64> {
    assert_eq!(heads.len(), mesh.num_nodes());
    let mut residual = DVector::zeros(mesh.num_nodes());
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        let coords = [mesh.node_coords(tri[0]), mesh.node_coords(tri[1]), mesh.node_coords(tri[2])];
        let ke = local_stiffness(coords, k_per_triangle[t]);
        for (a, &na) in tri.iter().enumerate() {
            for (b, &nb) in tri.iter().enumerate() {
                residual[na] += ke[a][b] * heads[nb];
            }
        }
    }
    residual
}
