//! Error norms, multiplier norm, energy, conservation indicators, observed
//! convergence rates and the discrete inf-sup constant.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;

use crate::assembly::{assemble_constraint_rhs, assemble_constraints, SparseSystem};
use crate::elements::{gauss_1d, gauss_2d};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecutionMode};
use crate::geometry::Point;
use crate::mesh::{dual_interfaces, BoundaryKind, DualMesh};
use crate::problem::{ExactSolution, ProblemSpec};
use crate::space::FeSpace;

/// Anything the discrete solution can be compared against: value,
/// gradient and pure second derivatives `(xx, yy)` at a point.
pub trait ReferenceField: Sync {
    fn eval(&self, p: Point) -> (f64, Point, (f64, f64));
}

impl ReferenceField for ExactSolution {
    fn eval(&self, p: Point) -> (f64, Point, (f64, f64)) {
        (
            (self.value)(p),
            (self.gradient)(p),
            (self.second_derivatives)(p),
        )
    }
}

/// A finite element field, optionally with piecewise-constant multipliers
/// added on the control volumes (zero outside every volume).
pub struct DiscreteField<'a> {
    pub space: &'a FeSpace,
    pub coeffs: &'a [f64],
    pub multipliers: Option<(&'a DualMesh, &'a [f64])>,
}

impl DiscreteField<'_> {
    pub fn multiplier_at(&self, p: Point) -> f64 {
        match self.multipliers {
            Some((dual, lambda)) => dual.volume_containing(p).map_or(0.0, |k| lambda[k]),
            None => 0.0,
        }
    }
}

impl ReferenceField for DiscreteField<'_> {
    /// Evaluated in the lowest-index element containing `p`.
    fn eval(&self, p: Point) -> (f64, Point, (f64, f64)) {
        let e = self
            .space
            .mesh()
            .element_containing(p)
            .expect("quadrature points lie inside the unit square");
        let (v, g, d2) = self.space.evaluate_in(self.coeffs, e, p);
        (v + self.multiplier_at(p), g, d2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormErrors {
    pub l1: f64,
    pub l2: f64,
    /// `‖p - (p_h + λ_h)‖_{L²}`, present when multipliers were supplied.
    pub l2_corrected: Option<f64>,
    pub l1_corrected: Option<f64>,
    /// `H¹` seminorm of the error.
    pub h1: f64,
    /// `∫ |e_x| + |e_y|`
    pub w11: f64,
    /// `(|e|²_{H¹} + h² |e|²_{V^h})^{1/2}`
    pub vh: f64,
    /// Elementwise `(Σ ‖e_xx‖² + ‖e_yy‖²)^{1/2}`, unscaled.
    pub vh_semi: f64,
}

/// Errors of the field `coeffs` (plus `lambda` on the control volumes for
/// the corrected L² error) against `reference`, integrated with `r + 4`
/// Gauss points per direction on each element.
pub fn norm_errors(
    space: &FeSpace,
    coeffs: &[f64],
    lambda: Option<(&DualMesh, &[f64])>,
    reference: &dyn ReferenceField,
    mode: ExecutionMode,
) -> Result<NormErrors> {
    let mesh = space.mesh();
    let h = mesh.h();
    let rule = gauss_2d(space.degree() + 4)?;
    let table = space.basis().tabulate(&rule);
    let corrected = DiscreteField {
        space,
        coeffs,
        multipliers: lambda,
    };
    // [l1, l2², l2c², h1², w11, semi², l1c]
    let parts = map_indexed(mode, mesh.n_elements(), |e| {
        let o = mesh.element_origin(e);
        let dofs = space.element_dofs(e);
        let mut s = [0.0; 7];
        for (qi, (xi, w)) in table.points.iter().zip(&table.weights).enumerate() {
            let x = Point::new(o.x + xi.x * h, o.y + xi.y * h);
            let w = w * h * h;
            let (mut v, mut g, mut xx, mut yy) = (0.0, Point::default(), 0.0, 0.0);
            for (a, &d) in dofs.iter().enumerate() {
                let c = coeffs[d];
                v += c * table.values(qi)[a];
                g = g + c * table.gradients(qi)[a];
                xx += c * table.hessians(qi)[a][0];
                yy += c * table.hessians(qi)[a][2];
            }
            let (rv, rg, (rxx, ryy)) = reference.eval(x);
            let e0 = rv - v;
            let (ex, ey) = (rg.x - g.x / h, rg.y - g.y / h);
            let (exx, eyy) = (rxx - xx / (h * h), ryy - yy / (h * h));
            s[0] += w * e0.abs();
            s[1] += w * e0 * e0;
            if lambda.is_some() {
                let ec = e0 - corrected.multiplier_at(x);
                s[2] += w * ec * ec;
                s[6] += w * ec.abs();
            }
            s[3] += w * (ex * ex + ey * ey);
            s[4] += w * (ex.abs() + ey.abs());
            s[5] += w * (exx * exx + eyy * eyy);
        }
        s
    });
    let mut t = [0.0; 7];
    for s in parts {
        for (a, b) in t.iter_mut().zip(s) {
            *a += b;
        }
    }
    Ok(NormErrors {
        l1: t[0],
        l2: t[1].sqrt(),
        l2_corrected: lambda.map(|_| t[2].sqrt()),
        l1_corrected: lambda.map(|_| t[6]),
        h1: t[3].sqrt(),
        w11: t[4],
        vh: (t[3] + h * h * t[5]).sqrt(),
        vh_semi: t[5].sqrt(),
    })
}

/// Unscaled `|p - p_h|_{V^h}`.
pub fn vh_seminorm(
    space: &FeSpace,
    coeffs: &[f64],
    reference: &dyn ReferenceField,
    mode: ExecutionMode,
) -> Result<f64> {
    Ok(norm_errors(space, coeffs, None, reference, mode)?.vh_semi)
}

/// Dual edges carrying a multiplier jump: interior interfaces, plus the
/// edges facing the uncovered strip along a Dirichlet boundary, where the
/// multiplier is taken as zero. Edges on a Neumann boundary carry none.
fn jump_edges(dual: &DualMesh) -> Vec<(usize, Option<usize>, f64)> {
    dual_interfaces(dual)
        .into_iter()
        .filter(|i| i.is_interior() || !i.on_domain_boundary)
        .map(|i| (i.volumes.0, i.volumes.1, i.length()))
        .collect()
}

/// `‖μ‖_{M^h} = ((1/h) Σ_edges |edge| [μ]²)^{1/2}`.
pub fn multiplier_norm(dual: &DualMesh, mu: &[f64]) -> f64 {
    let s: f64 = jump_edges(dual)
        .into_iter()
        .map(|(a, b, len)| {
            let jump = mu[a] - b.map_or(0.0, |b| mu[b]);
            len * jump * jump
        })
        .sum();
    (s / dual.h()).sqrt()
}

/// Gram matrix of the `M^h` norm.
pub fn multiplier_gram(dual: &DualMesh) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dual.len(), dual.len());
    let inv_h = 1.0 / dual.h();
    for (a, b, len) in jump_edges(dual) {
        g[(a, a)] += len * inv_h;
        if let Some(b) = b {
            g[(b, b)] += len * inv_h;
            g[(a, b)] -= len * inv_h;
            g[(b, a)] -= len * inv_h;
        }
    }
    g
}

/// `E(v) = ½∫Λ∇v·∇v - ∫ q v` for `v = p_h - I_h u_D`, the field with the
/// Dirichlet data removed (the nodal interpolant of `u_D` over all DOFs).
/// Neumann problems use `v = p_h`.
pub fn energy(
    space: &FeSpace,
    coeffs: &[f64],
    problem: &ProblemSpec,
    mode: ExecutionMode,
) -> Result<f64> {
    let v: Vec<f64> = match (&problem.bc, &problem.dirichlet) {
        (BoundaryKind::AllDirichlet, Some(g)) => {
            let lift = space.interpolate(|p| g(p));
            coeffs.iter().zip(lift).map(|(c, l)| c - l).collect()
        }
        (BoundaryKind::AllDirichlet, None) => return Err(Error::MissingDirichletData),
        _ => coeffs.to_vec(),
    };
    let mesh = space.mesh();
    let h = mesh.h();
    let rule = gauss_2d(space.degree() + 4)?;
    let table = space.basis().tabulate(&rule);
    let parts = map_indexed(mode, mesh.n_elements(), |e| {
        let o = mesh.element_origin(e);
        let lambda = problem.conductivity.on_element(mesh, e);
        let dofs = space.element_dofs(e);
        let mut s = 0.0;
        for (qi, (xi, w)) in table.points.iter().zip(&table.weights).enumerate() {
            let x = Point::new(o.x + xi.x * h, o.y + xi.y * h);
            let (mut val, mut g) = (0.0, Point::default());
            for (a, &d) in dofs.iter().enumerate() {
                val += v[d] * table.values(qi)[a];
                g = g + v[d] * table.gradients(qi)[a];
            }
            let g = (1.0 / h) * g;
            s += w * h * h * (0.5 * lambda.apply(g).dot(g) - problem.forcing.density_at(x) * val);
        }
        s
    });
    let mut total: f64 = parts.into_iter().sum();
    for src in &problem.forcing.point_sources {
        total -= src.strength * space.evaluate(&v, src.location)?.0;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regions {
    ControlVolumes,
    Elements,
}

/// Per-region mass defects `∫_{∂R} -Λ∇p_h·n - ∫_R q`.
///
/// Boundary fluxes on a Neumann boundary are the prescribed zero. Point
/// sources count towards the lowest-index region whose closure holds them.
pub fn mass_defects(
    space: &FeSpace,
    dual: &DualMesh,
    coeffs: &[f64],
    problem: &ProblemSpec,
    regions: Regions,
    mode: ExecutionMode,
) -> Result<Vec<f64>> {
    match regions {
        Regions::ControlVolumes => {
            let abar = assemble_constraints(dual, space, &problem.conductivity, mode)?;
            let fbar = assemble_constraint_rhs(dual, &problem.forcing, space.degree(), mode)?;
            Ok(abar
                .mul_vec(coeffs)
                .iter()
                .zip(&fbar)
                .map(|(a, b)| a - b)
                .collect())
        }
        Regions::Elements => element_defects(space, coeffs, problem, mode),
    }
}

fn element_defects(
    space: &FeSpace,
    coeffs: &[f64],
    problem: &ProblemSpec,
    mode: ExecutionMode,
) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let h = mesh.h();
    let n = mesh.n_side();
    let edge_rule = gauss_1d(space.degree() + 1)?;
    let area_rule = gauss_2d(space.degree() + 4)?;
    let neumann = mesh.bc() == BoundaryKind::AllNeumann;
    let mut defects = map_indexed(mode, mesh.n_elements(), |e| {
        let (i, j) = mesh.element_coords(e);
        let o = mesh.element_origin(e);
        let lambda = problem.conductivity.on_element(mesh, e);
        let dofs = space.element_dofs(e);
        // (start, end in reference coords, outward normal, on ∂Ω)
        let edges = [
            (
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, -1.0),
                j == 0,
            ),
            (
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 0.0),
                i + 1 == n,
            ),
            (
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
                Point::new(0.0, 1.0),
                j + 1 == n,
            ),
            (
                Point::new(0.0, 1.0),
                Point::new(0.0, 0.0),
                Point::new(-1.0, 0.0),
                i == 0,
            ),
        ];
        let mut flux = 0.0;
        for (a, b, normal, boundary) in edges {
            if boundary && neumann {
                continue;
            }
            let ln = lambda.apply(normal);
            for (t, w) in edge_rule.iter() {
                let grads = space.basis().gradients(a.lerp(b, t[0]));
                let g: f64 = dofs
                    .iter()
                    .zip(grads)
                    .map(|(&d, g)| coeffs[d] * g.dot(ln))
                    .sum();
                // physical gradient g/h times edge length h
                flux -= w * g;
            }
        }
        let source: f64 = area_rule
            .iter()
            .map(|(p, w)| {
                w * h
                    * h
                    * problem
                        .forcing
                        .density_at(Point::new(o.x + p[0] * h, o.y + p[1] * h))
            })
            .sum();
        flux - source
    });
    for src in &problem.forcing.point_sources {
        defects[mesh.element_containing(src.location)?] -= src.strength;
    }
    Ok(defects)
}

/// `J(p_h) = (Σ_R defect_R²)^{1/2}` over the chosen regions.
pub fn conservation_indicator(
    space: &FeSpace,
    dual: &DualMesh,
    coeffs: &[f64],
    problem: &ProblemSpec,
    regions: Regions,
    mode: ExecutionMode,
) -> Result<f64> {
    let d = mass_defects(space, dual, coeffs, problem, regions, mode)?;
    Ok(d.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// `log₂(e_i / e_{i+1})` between consecutive levels; `None` when either
/// error is missing or not positive.
pub fn convergence_rates(errors: &[Option<f64>]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
            _ => None,
        })
        .collect()
}

/// Discrete inf-sup constant `α_h = λ_min^{1/2}` of `(Ā A⁻¹ Āᵀ) μ = λ G μ`
/// with `G` the `M^h` Gram matrix. `None` when the dual mesh has no
/// interior interface.
pub fn inf_sup_estimate(system: &SparseSystem, dual: &DualMesh) -> Result<Option<f64>> {
    if system.bc != BoundaryKind::AllDirichlet {
        return Err(Error::Precondition(
            "the multiplier Gram matrix is singular without Dirichlet boundary".into(),
        ));
    }
    if !dual_interfaces(dual).iter().any(|i| i.is_interior()) {
        return Ok(None);
    }
    let nf = system.n_free();
    let nv = system.n_constraints();
    let triplets: Vec<_> = system
        .a
        .triplets()
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(nf, nf, &triplets)
        .map_err(|e| Error::Internal(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|_| Error::SingularSystem {
        dimension: nf,
        rank_estimate: None,
    })?;
    let mut bt = Mat::<f64>::zeros(nf, nv);
    for (k, j, v) in system.abar.triplets() {
        bt[(j, k)] += v;
    }
    let x = lu.solve(&bt);
    let mut s = DMatrix::zeros(nv, nv);
    for (k, j, v) in system.abar.triplets() {
        for c in 0..nv {
            s[(k, c)] += v * x[(j, c)];
        }
    }
    generalized_min_eigenvalue(&s, &multiplier_gram(dual)).map(|l| Some(l.max(0.0).sqrt()))
}

/// Smallest `λ` with `S μ = λ G μ`, `G` SPD, via `L⁻¹ S L⁻ᵀ`.
fn generalized_min_eigenvalue(s: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let chol = g.clone().cholesky().ok_or_else(|| {
        Error::Precondition("multiplier Gram matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(s)
        .ok_or_else(|| Error::Internal("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Internal("triangular solve failed".into()))?;
    let c = 0.5 * (&c + c.transpose());
    Ok(c.symmetric_eigen().eigenvalues.min())
}
