//! Continuous `Q^r` finite element space on a [`StructuredMesh`].

use crate::elements::ReferenceBasis;
use crate::error::Result;
use crate::geometry::Point;
use crate::mesh::{BoundaryKind, StructuredMesh};

/// Degrees of freedom sit on the tensor grid of spacing `h / r`; DOF
/// `(ix, iy)` has global index `iy * nodes_per_side + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeSpace {
    mesh: StructuredMesh,
    basis: ReferenceBasis,
    nodes_per_side: usize,
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
    dirichlet_dofs: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: &StructuredMesh, degree: usize) -> Result<Self> {
        let basis = ReferenceBasis::new(degree)?;
        let nodes_per_side = degree * mesh.n_side() + 1;
        let n_dofs = nodes_per_side * nodes_per_side;
        let mut free_index = vec![None; n_dofs];
        let mut free_dofs = Vec::new();
        let mut dirichlet_dofs = Vec::new();
        let last = nodes_per_side - 1;
        for dof in 0..n_dofs {
            let (ix, iy) = (dof % nodes_per_side, dof / nodes_per_side);
            let on_boundary = ix == 0 || iy == 0 || ix == last || iy == last;
            if on_boundary && mesh.bc() == BoundaryKind::AllDirichlet {
                dirichlet_dofs.push(dof);
            } else {
                free_index[dof] = Some(free_dofs.len());
                free_dofs.push(dof);
            }
        }
        Ok(Self {
            mesh: mesh.clone(),
            basis,
            nodes_per_side,
            free_index,
            free_dofs,
            dirichlet_dofs,
        })
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn n_dofs(&self) -> usize {
        self.nodes_per_side * self.nodes_per_side
    }

    pub fn nodes_per_side(&self) -> usize {
        self.nodes_per_side
    }

    pub fn dof_coords(&self, dof: usize) -> Point {
        let spacing = self.mesh.h() / self.degree() as f64;
        Point::new(
            (dof % self.nodes_per_side) as f64 * spacing,
            (dof / self.nodes_per_side) as f64 * spacing,
        )
    }

    /// Global DOFs of element `e` in local (lexicographic `(y, x)`) order.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let r = self.degree();
        let (i, j) = self.mesh.element_coords(e);
        let mut dofs = Vec::with_capacity((r + 1) * (r + 1));
        for b in 0..=r {
            for a in 0..=r {
                dofs.push((j * r + b) * self.nodes_per_side + i * r + a);
            }
        }
        dofs
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn free_map(&self) -> &[Option<usize>] {
        &self.free_index
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet_dofs
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    /// Free entries of a full-DOF vector.
    pub fn restrict_free(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Nodal interpolant of `f` over all DOFs.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.n_dofs()).map(|d| f(self.dof_coords(d))).collect()
    }

    /// Value, gradient and `(xx, yy)` second derivatives of the field with
    /// coefficients `coeffs` at `p`, evaluated in element `e`.
    pub fn evaluate_in(&self, coeffs: &[f64], e: usize, p: Point) -> (f64, Point, (f64, f64)) {
        let h = self.mesh.h();
        let xi = self.mesh.to_reference(e, p);
        let dofs = self.element_dofs(e);
        let values = self.basis.values(xi);
        let grads = self.basis.gradients(xi);
        let hess = self.basis.hessians(xi);
        let mut v = 0.0;
        let mut g = Point::default();
        let (mut xx, mut yy) = (0.0, 0.0);
        for (a, &d) in dofs.iter().enumerate() {
            let c = coeffs[d];
            v += c * values[a];
            g = g + c * grads[a];
            xx += c * hess[a][0];
            yy += c * hess[a][2];
        }
        (v, (1.0 / h) * g, (xx / (h * h), yy / (h * h)))
    }

    /// Evaluates in the lowest-index element containing `p`.
    pub fn evaluate(&self, coeffs: &[f64], p: Point) -> Result<(f64, Point, (f64, f64))> {
        let e = self.mesh.element_containing(p)?;
        Ok(self.evaluate_in(coeffs, e, p))
    }
}
