//! Direct solves of the constrained and unconstrained systems.
//!
//! Pure-Neumann systems fix the constant mode of `A` by pinning one
//! coefficient and replacing its equation, which the compatible data make
//! redundant, then shift `p` to `∫ p = 0`. The last constraint row is the
//! negative sum of the others and is dropped.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use nalgebra::DMatrix;

use crate::assembly::SparseSystem;
use crate::error::{Error, Result};
use crate::mesh::BoundaryKind;
use crate::sparse::max_abs;

/// Dense rank estimation is attempted up to this dimension.
const RANK_ESTIMATE_MAX_DIM: usize = 2000;
/// Residual relative to the right-hand side above which a factorization is
/// treated as singular.
const SINGULAR_RESIDUAL: f64 = 1e-8;
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveInfo {
    pub level: u32,
    pub degree: usize,
    pub constrained: bool,
    /// `‖A p + Āᵀλ - f‖_∞`
    pub residual_energy: f64,
    /// `‖Ā p - f̄‖_∞`, zero for unconstrained solves.
    pub residual_constraint: f64,
    /// Constraint row removed before factorization (Neumann only). Its
    /// multiplier is reconstructed by least squares.
    pub dropped_constraint: Option<usize>,
    /// Constant subtracted from λ to give it zero area-weighted mean
    /// (Neumann only).
    pub lambda_shift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Coefficients over all DOFs, Dirichlet values included.
    pub p: Vec<f64>,
    /// One multiplier per control volume; zero for unconstrained solves.
    pub lambda: Vec<f64>,
    pub info: SolveInfo,
}

fn lu_solve(n: usize, triplets: &[Triplet<usize, usize, f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let singular = || Error::SingularSystem {
        dimension: n,
        rank_estimate: rank_estimate(n, triplets),
    };
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, triplets)
        .map_err(|e| Error::Internal(format!("sparse matrix construction failed: {e:?}")))?;
    let lu = m.sp_lu().map_err(|_| singular())?;
    let residual = |x: &[f64]| {
        let mut r = rhs.to_vec();
        for t in triplets {
            r[t.row] -= t.val * x[t.col];
        }
        r
    };
    let solve = |b: &[f64]| {
        let x = lu.solve(&Col::from_fn(n, |i| b[i]));
        (0..n).map(|i| x[i]).collect::<Vec<f64>>()
    };
    let mut x = solve(rhs);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(singular());
    }
    let mut r = residual(&x);
    for _ in 0..REFINEMENT_STEPS {
        let dx = solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let rc = residual(&candidate);
        if !(max_abs(&rc) < max_abs(&r)) {
            break;
        }
        (x, r) = (candidate, rc);
    }
    // a near-zero pivot can survive as a huge but finite solution
    if max_abs(&r) > SINGULAR_RESIDUAL * max_abs(rhs) {
        return Err(singular());
    }
    Ok(x)
}

fn rank_estimate(n: usize, triplets: &[Triplet<usize, usize, f64>]) -> Option<usize> {
    if n > RANK_ESTIMATE_MAX_DIM {
        return None;
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for t in triplets {
        m[(t.row, t.col)] += t.val;
    }
    let sv = m.singular_values();
    let tol = sv.max() * n as f64 * f64::EPSILON;
    Some(sv.iter().filter(|&&s| s > tol).count())
}

/// `(‖A p + Āᵀλ - f‖_∞, ‖Ā p - f̄‖_∞)` on free DOFs.
pub fn residuals(system: &SparseSystem, solution: &Solution) -> (f64, f64) {
    let p = system.restrict(&solution.p);
    let mut r1 = system.a.mul_vec(&p);
    for (r, (c, f)) in r1.iter_mut().zip(
        system
            .abar
            .transpose_mul_vec(&solution.lambda)
            .iter()
            .zip(&system.f),
    ) {
        *r += c - f;
    }
    let r2: Vec<f64> = system
        .abar
        .mul_vec(&p)
        .iter()
        .zip(&system.fbar)
        .map(|(a, b)| a - b)
        .collect();
    (max_abs(&r1), max_abs(&r2))
}

/// Free DOF whose coefficient is fixed to zero in pure-Neumann solves.
const PINNED: usize = 0;

/// `[A Āᵀ; Ā 0]` restricted to the first `rows` constraints. With `pin`
/// the row and column of that DOF become the identity.
fn push_block(
    out: &mut Vec<Triplet<usize, usize, f64>>,
    system: &SparseSystem,
    rows: usize,
    pin: Option<usize>,
) {
    let nf = system.n_free();
    let keep = |j: usize| pin != Some(j);
    out.extend(
        system
            .a
            .triplets()
            .filter(|&(i, j, _)| keep(i) && keep(j))
            .map(|(i, j, v)| Triplet::new(i, j, v)),
    );
    for (k, j, v) in system.abar.triplets() {
        if k < rows && keep(j) {
            out.push(Triplet::new(nf + k, j, v));
            out.push(Triplet::new(j, nf + k, v));
        }
    }
    if let Some(p) = pin {
        out.push(Triplet::new(p, p, 1.0));
    }
}

/// Shifts `p` by a constant to zero weighted mean.
fn remove_mean(system: &SparseSystem, p: &mut [f64]) {
    let total: f64 = system.mean_weights.iter().sum();
    let mean = p
        .iter()
        .zip(&system.mean_weights)
        .map(|(a, w)| a * w)
        .sum::<f64>()
        / total;
    p.iter_mut().for_each(|a| *a -= mean);
}

/// Solves the constrained system for `(p, λ)`.
pub fn solve_saddle(system: &SparseSystem) -> Result<Solution> {
    let nf = system.n_free();
    let nv = system.n_constraints();
    let mut t = Vec::with_capacity(system.a.nnz() + 2 * system.abar.nnz() + 2 * nf);
    let mut rhs = system.f.clone();
    let (p_free, mut lambda, dropped) = match system.bc {
        BoundaryKind::AllDirichlet => {
            push_block(&mut t, system, nv, None);
            rhs.extend_from_slice(&system.fbar);
            let x = lu_solve(nf + nv, &t, &rhs)?;
            (x[..nf].to_vec(), x[nf..].to_vec(), None)
        }
        BoundaryKind::AllNeumann => {
            if nv == 0 {
                return Err(Error::Precondition("no control volumes".into()));
            }
            let kept = nv - 1;
            push_block(&mut t, system, kept, Some(PINNED));
            rhs[PINNED] = 0.0;
            rhs.extend_from_slice(&system.fbar[..kept]);
            let x = lu_solve(nf + kept, &t, &rhs)?;
            let mut p = x[..nf].to_vec();
            remove_mean(system, &mut p);
            let mut lambda = x[nf..].to_vec();
            lambda.push(0.0);
            (p, lambda, Some(kept))
        }
    };
    let mut shift = None;
    if let Some(d) = dropped {
        // least-squares value of the dropped multiplier against the first
        // block equation
        let mut r = system.a.mul_vec(&p_free);
        for (ri, (c, f)) in r
            .iter_mut()
            .zip(system.abar.transpose_mul_vec(&lambda).iter().zip(&system.f))
        {
            *ri = f - *ri - c;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (j, v) in system.abar.row(d) {
            num += v * r[j];
            den += v * v;
        }
        if den > 0.0 {
            lambda[d] = num / den;
        }
        let area: f64 = system.volume_areas.iter().sum();
        let mean = lambda
            .iter()
            .zip(&system.volume_areas)
            .map(|(l, a)| l * a)
            .sum::<f64>()
            / area;
        lambda.iter_mut().for_each(|l| *l -= mean);
        shift = Some(mean);
    }
    finish(system, p_free, lambda, true, dropped, shift)
}

/// Plain Galerkin solve; the returned multipliers are zero.
pub fn solve_unconstrained(system: &SparseSystem) -> Result<Solution> {
    let nf = system.n_free();
    let mut t = Vec::with_capacity(system.a.nnz() + 1);
    let mut rhs = system.f.clone();
    let p_free = match system.bc {
        BoundaryKind::AllDirichlet => {
            push_block(&mut t, system, 0, None);
            lu_solve(nf, &t, &rhs)?
        }
        BoundaryKind::AllNeumann => {
            push_block(&mut t, system, 0, Some(PINNED));
            rhs[PINNED] = 0.0;
            let mut p = lu_solve(nf, &t, &rhs)?;
            remove_mean(system, &mut p);
            p
        }
    };
    let lambda = vec![0.0; system.n_constraints()];
    finish(system, p_free, lambda, false, None, None)
}

fn finish(
    system: &SparseSystem,
    p_free: Vec<f64>,
    lambda: Vec<f64>,
    constrained: bool,
    dropped_constraint: Option<usize>,
    lambda_shift: Option<f64>,
) -> Result<Solution> {
    let mut solution = Solution {
        p: system.expand(&p_free),
        lambda,
        info: SolveInfo {
            level: system.level,
            degree: system.degree,
            constrained,
            residual_energy: 0.0,
            residual_constraint: 0.0,
            dropped_constraint,
            lambda_shift,
        },
    };
    let (r1, r2) = residuals(system, &solution);
    solution.info.residual_energy = r1;
    solution.info.residual_constraint = if constrained { r2 } else { 0.0 };
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_system;
    use crate::exec::ExecutionMode;
    use crate::geometry::Point;
    use crate::mesh::{DualMesh, StructuredMesh};
    use crate::problem::{Forcing, PointSource, ProblemSpec};
    use crate::space::FeSpace;
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn example_q(p: Point) -> f64 {
        let (x, y) = (p.x, p.y);
        2.0 * PI
            * ((PI * x).cos() * (PI * y).sin() - 3.0 * (PI * x).sin() * (PI * y).cos()
                + PI * (PI * x).sin() * (PI * y).sin() * (-x + 3.0 * y))
    }

    fn system(level: u32, r: usize, problem: &ProblemSpec) -> (FeSpace, SparseSystem) {
        let mesh = StructuredMesh::new(level, problem.bc).unwrap();
        let space = FeSpace::new(&mesh, r).unwrap();
        let dual = DualMesh::new(&mesh);
        let sys = assemble_system(problem, &space, &dual, ExecutionMode::Sequential).unwrap();
        (space, sys)
    }

    fn example1() -> ProblemSpec {
        ProblemSpec::new(
            "example1",
            BoundaryKind::AllDirichlet,
            Forcing::smooth(example_q),
        )
        .with_dirichlet(|p| 1.0 + p.x + 2.0 * p.y)
    }

    fn linear() -> ProblemSpec {
        ProblemSpec::new(
            "linear",
            BoundaryKind::AllDirichlet,
            Forcing::smooth(|_| 0.0),
        )
        .with_dirichlet(|p| 1.0 + p.x + 2.0 * p.y)
    }

    #[test]
    fn linear_solution_is_reproduced() {
        for r in 1..=2 {
            let (space, sys) = system(3, r, &linear());
            let exact = space.interpolate(|p| 1.0 + p.x + 2.0 * p.y);
            for sol in [
                solve_saddle(&sys).unwrap(),
                solve_unconstrained(&sys).unwrap(),
            ] {
                for (a, b) in sol.p.iter().zip(&exact) {
                    assert!((a - b).abs() < 1e-11);
                }
                assert!(max_abs(&sol.lambda) < 1e-11);
            }
        }
    }

    #[test]
    fn q1_saddle_equals_classical_fv() {
        let (_, sys) = system(3, 1, &example1());
        let sol = solve_saddle(&sys).unwrap();
        // Q1: Ā is square and invertible on free DOFs
        let fv = sys
            .abar
            .to_dense()
            .lu()
            .solve(&DVector::from_vec(sys.fbar.clone()))
            .unwrap();
        let p = sys.restrict(&sol.p);
        for (a, b) in p.iter().zip(fv.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    fn dense_kkt(sys: &SparseSystem) -> (DMatrix<f64>, DVector<f64>) {
        let (nf, nv) = (sys.n_free(), sys.n_constraints());
        let mut k = DMatrix::zeros(nf + nv, nf + nv);
        k.view_mut((0, 0), (nf, nf)).copy_from(&sys.a.to_dense());
        let ab = sys.abar.to_dense();
        k.view_mut((nf, 0), (nv, nf)).copy_from(&ab);
        k.view_mut((0, nf), (nf, nv)).copy_from(&ab.transpose());
        let rhs = DVector::from_iterator(nf + nv, sys.f.iter().chain(&sys.fbar).copied());
        (k, rhs)
    }

    #[test]
    fn q2_saddle_matches_dense_lu() {
        let (_, sys) = system(2, 2, &example1());
        let sol = solve_saddle(&sys).unwrap();
        let (k, rhs) = dense_kkt(&sys);
        let x = k.lu().solve(&rhs).unwrap();
        let nf = sys.n_free();
        let p = sys.restrict(&sol.p);
        for i in 0..nf {
            assert!((p[i] - x[i]).abs() < 1e-11);
        }
        for (k, l) in sol.lambda.iter().enumerate() {
            assert!((l - x[nf + k]).abs() < 1e-11);
        }
    }

    #[test]
    fn saddle_matches_null_space_oracle() {
        for level in 1..=3 {
            let (_, sys) = system(level, 2, &example1());
            let sol = solve_saddle(&sys).unwrap();
            // p = p0 + Z y with Ā p0 = f̄ (least norm) and Z spanning ker Ā
            let a = sys.a.to_dense();
            let ab = sys.abar.to_dense();
            let nf = sys.n_free();
            let nv = sys.n_constraints();
            // orthonormal kernel basis of Ā from the eigenvectors of ĀᵀĀ
            let eig = (ab.transpose() * &ab).symmetric_eigen();
            let kernel: Vec<usize> = (0..nf)
                .filter(|&i| eig.eigenvalues[i].abs() < 1e-10)
                .collect();
            assert_eq!(kernel.len(), nf - nv);
            let z = DMatrix::from_fn(nf, kernel.len(), |i, c| eig.eigenvectors[(i, kernel[c])]);
            let p0 =
                ab.clone().pseudo_inverse(1e-13).unwrap() * DVector::from_vec(sys.fbar.clone());
            let f = DVector::from_vec(sys.f.clone());
            let reduced = z.transpose() * &a * &z;
            let y = reduced
                .cholesky()
                .unwrap()
                .solve(&(z.transpose() * (f - &a * &p0)));
            let p = p0 + z * y;
            let ps = sys.restrict(&sol.p);
            for i in 0..nf {
                assert!((ps[i] - p[i]).abs() < 1e-10, "level {level}");
            }
        }
    }

    #[test]
    fn residual_contract() {
        let (_, sys) = system(4, 2, &example1());
        let sol = solve_saddle(&sys).unwrap();
        assert!(sol.info.residual_energy <= 1e-10);
        assert!(sol.info.residual_constraint <= 1e-10);
        // zero solution: r1 = ‖f‖_∞
        let mut zero = sol.clone();
        zero.p = sys.lift.clone();
        zero.p.iter_mut().for_each(|v| *v = 0.0);
        zero.lambda.iter_mut().for_each(|v| *v = 0.0);
        let homogeneous = SparseSystem {
            lift: vec![0.0; sys.lift.len()],
            ..sys.clone()
        };
        assert_eq!(residuals(&homogeneous, &zero).0, max_abs(&sys.f));
        // perturbing a coefficient
        let mut bumped = sol.clone();
        let d = sys.free_dofs[0];
        bumped.p[d] += 1.0;
        let min_diag = (0..sys.n_free())
            .map(|i| sys.a.get(i, i).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(residuals(&sys, &bumped).0 >= min_diag - 1e-10);
    }

    #[test]
    fn neumann_solutions_have_zero_mean() {
        let smooth = ProblemSpec::new(
            "s",
            BoundaryKind::AllNeumann,
            Forcing::smooth(|p| p.x - p.y),
        );
        let singular = ProblemSpec::new(
            "v",
            BoundaryKind::AllNeumann,
            Forcing::sources(vec![
                PointSource::new(0.0, 0.0, 1.0),
                PointSource::new(1.0, 1.0, -1.0),
            ]),
        );
        for problem in [smooth, singular] {
            for r in 1..=2 {
                let (_, sys) = system(3, r, &problem);
                for sol in [
                    solve_saddle(&sys).unwrap(),
                    solve_unconstrained(&sys).unwrap(),
                ] {
                    let mean: f64 = sys
                        .restrict(&sol.p)
                        .iter()
                        .zip(&sys.mean_weights)
                        .map(|(p, w)| p * w)
                        .sum();
                    assert!(mean.abs() < 1e-12);
                    assert!(
                        sol.info.residual_energy < 1e-10,
                        "{}",
                        sol.info.residual_energy
                    );
                    assert!(sol.info.residual_constraint < 1e-10);
                }
                let sol = solve_saddle(&sys).unwrap();
                assert_eq!(sol.info.dropped_constraint, Some(sys.n_constraints() - 1));
                let lmean: f64 = sol
                    .lambda
                    .iter()
                    .zip(&sys.volume_areas)
                    .map(|(l, a)| l * a)
                    .sum();
                assert!(lmean.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let (_, sys) = system(4, 2, &example1());
        assert_eq!(solve_saddle(&sys).unwrap(), solve_saddle(&sys).unwrap());
    }

    #[test]
    fn singular_system_is_reported() {
        let (_, mut sys) = system(2, 1, &example1());
        // make constraint row 1 a copy of row 0
        let mut t = crate::sparse::TripletList::new(sys.abar.nrows(), sys.abar.ncols());
        for (k, j, v) in sys.abar.triplets() {
            if k != 1 {
                t.push(k, j, v);
            }
            if k == 0 {
                t.push(1, j, v);
            }
        }
        sys.abar = t.into_csr();
        match solve_saddle(&sys) {
            Err(Error::SingularSystem {
                dimension,
                rank_estimate,
            }) => {
                assert_eq!(dimension, 18);
                assert_eq!(rank_estimate, Some(17));
            }
            other => panic!("expected singular system, got {other:?}"),
        }
    }
}
