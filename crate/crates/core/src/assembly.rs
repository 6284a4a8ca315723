//! Global matrices and right-hand sides of the constrained system
//!
//! ```text
//! [ A  Āᵀ ] [p]   [f]
//! [ Ā  0  ] [λ] = [f̄]
//! ```
//!
//! with `A` the stiffness matrix, `Ā` the control-volume flux functionals
//! `ā_kj = ∫_{∂V_k} -Λ∇φ_j·n`, `f_i = ∫ q φ_i` and `f̄_k = ∫_{V_k} q`.

use crate::elements::{gauss_1d, gauss_2d, local_stiffness, QuadratureRule};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecutionMode};
use crate::geometry::{Point, SymTensor2};
use crate::mesh::{BoundaryKind, DualMesh, Segment};
use crate::problem::{Conductivity, Forcing, ProblemSpec, ScalarField};
use crate::space::FeSpace;
use crate::sparse::{CsrMatrix, TripletList};

/// Compatibility tolerance on `∫q + Σ strengths` for pure-Neumann problems.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Reduced blocks over free DOFs, ready for the solver.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub a: CsrMatrix,
    /// Rows are control volumes, columns free DOFs.
    pub abar: CsrMatrix,
    pub f: Vec<f64>,
    pub fbar: Vec<f64>,
    /// Full-DOF vector with the Dirichlet values, zero on free DOFs.
    pub lift: Vec<f64>,
    pub free_dofs: Vec<usize>,
    pub bc: BoundaryKind,
    /// `∫ φ_i` over free DOFs; fixes the constant mode of Neumann problems.
    pub mean_weights: Vec<f64>,
    pub volume_areas: Vec<f64>,
    pub level: u32,
    pub degree: usize,
}

impl SparseSystem {
    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.abar.nrows()
    }

    /// Full coefficient vector from free values plus the lift.
    pub fn expand(&self, p_free: &[f64]) -> Vec<f64> {
        let mut p = self.lift.clone();
        for (&d, &v) in self.free_dofs.iter().zip(p_free) {
            p[d] = v;
        }
        p
    }

    pub fn restrict(&self, p: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| p[d]).collect()
    }
}

/// Maps the reference square onto the rectangle `[lo, hi]`.
fn rect_points(
    rule: &QuadratureRule<2>,
    lo: Point,
    hi: Point,
) -> impl Iterator<Item = (Point, f64)> + '_ {
    let (dx, dy) = (hi.x - lo.x, hi.y - lo.y);
    rule.iter()
        .map(move |(p, w)| (Point::new(lo.x + p[0] * dx, lo.y + p[1] * dy), w * dx * dy))
}

/// Stiffness matrix over all DOFs.
pub fn assemble_stiffness(
    space: &FeSpace,
    conductivity: &Conductivity,
    mode: ExecutionMode,
) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    let locals = map_indexed(mode, mesh.n_elements(), |e| {
        local_stiffness(space.basis(), conductivity.on_element(mesh, e), mesh.h())
    });
    let nl = space.basis().len();
    let mut t =
        TripletList::with_capacity(space.n_dofs(), space.n_dofs(), mesh.n_elements() * nl * nl);
    for (e, k) in locals.into_iter().enumerate() {
        let k = k?;
        let dofs = space.element_dofs(e);
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                t.push(i, j, k[(a, b)]);
            }
        }
    }
    Ok(t.into_csr())
}

/// `∫_seg -Λ∇φ_j·n` for every basis function of the owner element, using
/// `r + 1` Gauss points along the segment.
pub fn segment_flux(
    space: &FeSpace,
    lambda: SymTensor2,
    seg: &Segment,
) -> Result<Vec<(usize, f64)>> {
    let mesh = space.mesh();
    let e = seg.owner_element;
    let rule = gauss_1d(space.degree() + 1)?;
    let dofs = space.element_dofs(e);
    let mut out: Vec<(usize, f64)> = dofs.iter().map(|&d| (d, 0.0)).collect();
    let ln = lambda.apply(seg.outward_normal);
    let scale = seg.length() / mesh.h();
    for (t, w) in rule.iter() {
        let x = seg.a.lerp(seg.b, t[0]);
        let grads = space.basis().gradients(mesh.to_reference(e, x));
        for (slot, g) in out.iter_mut().zip(grads) {
            slot.1 -= w * scale * g.dot(ln);
        }
    }
    Ok(out)
}

/// Constraint matrix over all DOFs, one row per control volume.
///
/// Segments on the domain boundary carry the homogeneous Neumann flux and
/// contribute nothing.
pub fn assemble_constraints(
    dual: &DualMesh,
    space: &FeSpace,
    conductivity: &Conductivity,
    mode: ExecutionMode,
) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    let rows = map_indexed(mode, dual.len(), |k| -> Result<Vec<(usize, f64)>> {
        let mut row = Vec::new();
        for seg in dual.volumes()[k]
            .segments
            .iter()
            .filter(|s| !s.on_domain_boundary)
        {
            let lambda = conductivity.on_element(mesh, seg.owner_element);
            row.extend(segment_flux(space, lambda, seg)?);
        }
        Ok(row)
    });
    let mut t = TripletList::new(dual.len(), space.n_dofs());
    for (k, row) in rows.into_iter().enumerate() {
        for (j, v) in row? {
            t.push(k, j, v);
        }
    }
    Ok(t.into_csr())
}

fn check_sources(forcing: &Forcing) -> Result<()> {
    for s in &forcing.point_sources {
        let p = s.location;
        if !crate::mesh::in_unit_square(p) {
            return Err(Error::PointOutsideDomain { x: p.x, y: p.y });
        }
    }
    Ok(())
}

/// Load vector `∫ q φ_i` over all DOFs, point sources included.
pub fn assemble_load(space: &FeSpace, forcing: &Forcing, mode: ExecutionMode) -> Result<Vec<f64>> {
    check_sources(forcing)?;
    let mesh = space.mesh();
    let mut f = vec![0.0; space.n_dofs()];
    if let Some(q) = &forcing.density {
        let rule = gauss_2d(space.degree() + 4)?;
        let table = space.basis().tabulate(&rule);
        let h = mesh.h();
        let locals = map_indexed(mode, mesh.n_elements(), |e| {
            let o = mesh.element_origin(e);
            let mut local = vec![0.0; table.values(0).len()];
            for (qi, (xi, w)) in table.points.iter().zip(&table.weights).enumerate() {
                let qw = w * h * h * q(Point::new(o.x + xi.x * h, o.y + xi.y * h));
                for (l, v) in local.iter_mut().zip(table.values(qi)) {
                    *l += qw * v;
                }
            }
            local
        });
        for (e, local) in locals.into_iter().enumerate() {
            for (d, v) in space.element_dofs(e).into_iter().zip(local) {
                f[d] += v;
            }
        }
    }
    for s in &forcing.point_sources {
        let e = mesh.element_containing(s.location)?;
        let values = space.basis().values(mesh.to_reference(e, s.location));
        for (d, v) in space.element_dofs(e).into_iter().zip(values) {
            f[d] += s.strength * v;
        }
    }
    Ok(f)
}

/// `∫_{V_k} q` per control volume. A point source counts fully towards the
/// lowest-index volume whose closure holds it, and not at all when it lies
/// outside every volume.
pub fn assemble_constraint_rhs(
    dual: &DualMesh,
    forcing: &Forcing,
    degree: usize,
    mode: ExecutionMode,
) -> Result<Vec<f64>> {
    check_sources(forcing)?;
    let mut fbar = vec![0.0; dual.len()];
    if let Some(q) = &forcing.density {
        let rule = gauss_2d(degree + 4)?;
        fbar = map_indexed(mode, dual.len(), |k| {
            dual.volumes()[k]
                .pieces
                .iter()
                .map(|piece| {
                    rect_points(&rule, piece.lo, piece.hi)
                        .map(|(x, w)| w * q(x))
                        .sum::<f64>()
                })
                .sum()
        });
    }
    for s in &forcing.point_sources {
        if let Some(k) = dual.volume_containing(s.location) {
            fbar[k] += s.strength;
        }
    }
    Ok(fbar)
}

/// `∫ φ_i` for every DOF.
pub fn basis_integrals(space: &FeSpace) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let rule = gauss_2d(space.degree() + 1)?;
    let table = space.basis().tabulate(&rule);
    let h2 = mesh.h() * mesh.h();
    let mut local = vec![0.0; space.basis().len()];
    for (qi, w) in table.weights.iter().enumerate() {
        for (l, v) in local.iter_mut().zip(table.values(qi)) {
            *l += w * h2 * v;
        }
    }
    let mut out = vec![0.0; space.n_dofs()];
    for e in 0..mesh.n_elements() {
        for (d, v) in space.element_dofs(e).into_iter().zip(&local) {
            out[d] += v;
        }
    }
    Ok(out)
}

/// Moves the Dirichlet values `g = I_h u_D` to both right-hand sides and
/// restricts `A`, `Ā` to free columns.
#[allow(clippy::too_many_arguments)]
pub fn apply_dirichlet_lift(
    a_full: &CsrMatrix,
    abar_full: &CsrMatrix,
    f: &[f64],
    fbar: &[f64],
    u_d: Option<&ScalarField>,
    space: &FeSpace,
    dual: &DualMesh,
) -> Result<SparseSystem> {
    let u_d = u_d.ok_or(Error::MissingDirichletData)?;
    if space.mesh().bc() != BoundaryKind::AllDirichlet {
        return Err(Error::Precondition(
            "Dirichlet lift on a Neumann mesh".into(),
        ));
    }
    let mut lift = vec![0.0; space.n_dofs()];
    for &d in space.dirichlet_dofs() {
        lift[d] = u_d(space.dof_coords(d));
    }
    let a_g = a_full.mul_vec(&lift);
    let abar_g = abar_full.mul_vec(&lift);
    let f_red = space.free_dofs().iter().map(|&d| f[d] - a_g[d]).collect();
    let fbar_red = fbar.iter().zip(&abar_g).map(|(b, c)| b - c).collect();
    let weights = basis_integrals(space)?;
    Ok(restricted(
        space, dual, a_full, abar_full, f_red, fbar_red, lift, &weights,
    ))
}

#[allow(clippy::too_many_arguments)]
fn restricted(
    space: &FeSpace,
    dual: &DualMesh,
    a_full: &CsrMatrix,
    abar_full: &CsrMatrix,
    f: Vec<f64>,
    fbar: Vec<f64>,
    lift: Vec<f64>,
    weights: &[f64],
) -> SparseSystem {
    let free = space.free_map();
    let n_free = space.n_free();
    let rows: Vec<Option<usize>> = (0..dual.len()).map(Some).collect();
    SparseSystem {
        a: a_full.select(free, n_free, free, n_free),
        abar: abar_full.select(&rows, dual.len(), free, n_free),
        f,
        fbar,
        lift,
        free_dofs: space.free_dofs().to_vec(),
        bc: space.mesh().bc(),
        mean_weights: space.free_dofs().iter().map(|&d| weights[d]).collect(),
        volume_areas: dual.volumes().iter().map(|v| v.area()).collect(),
        level: space.mesh().level(),
        degree: space.degree(),
    }
}

/// Assembles the full reduced system of `problem` on `space` and `dual`.
pub fn assemble_system(
    problem: &ProblemSpec,
    space: &FeSpace,
    dual: &DualMesh,
    mode: ExecutionMode,
) -> Result<SparseSystem> {
    if problem.bc != space.mesh().bc() {
        return Err(Error::Precondition(format!(
            "problem '{}' expects {:?} but the mesh is tagged {:?}",
            problem.id,
            problem.bc,
            space.mesh().bc()
        )));
    }
    let a = assemble_stiffness(space, &problem.conductivity, mode)?;
    let abar = assemble_constraints(dual, space, &problem.conductivity, mode)?;
    let f = assemble_load(space, &problem.forcing, mode)?;
    let fbar = assemble_constraint_rhs(dual, &problem.forcing, space.degree(), mode)?;
    match problem.bc {
        BoundaryKind::AllDirichlet => apply_dirichlet_lift(
            &a,
            &abar,
            &f,
            &fbar,
            problem.dirichlet.as_ref(),
            space,
            dual,
        ),
        BoundaryKind::AllNeumann => {
            // partition of unity: Σ f_i = ∫q + Σ strengths
            let total: f64 = f.iter().sum();
            if total.abs() > COMPATIBILITY_TOL {
                return Err(Error::IncompatibleNeumannData { total });
            }
            let weights = basis_integrals(space)?;
            let lift = vec![0.0; space.n_dofs()];
            Ok(restricted(space, dual, &a, &abar, f, fbar, lift, &weights))
        }
    }
}
