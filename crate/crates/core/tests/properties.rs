use proptest::prelude::*;

use consfem::analysis::{conservation_indicator, energy, norm_errors, Regions};
use consfem::harness::{problem_example1, solve_level, Method};
use consfem::{
    BoundaryKind, Conductivity, DualMesh, ExecutionMode, Forcing, Point, PointSource, ProblemSpec,
    StructuredMesh, SymTensor2,
};

fn spd() -> impl Strategy<Value = SymTensor2> {
    (0.2f64..3.0, 0.2f64..3.0, -0.9f64..0.9)
        .prop_map(|(a, b, c)| SymTensor2::new(a, c * (a * b).sqrt(), b))
}

/// `q = c₀ + c₁ x + c₂ y + c₃ xy` with linear Dirichlet data.
fn dirichlet_problem(c: [f64; 4], lambda: SymTensor2, slope: (f64, f64)) -> ProblemSpec {
    ProblemSpec::new(
        "random",
        BoundaryKind::AllDirichlet,
        Forcing::smooth(move |p: Point| c[0] + c[1] * p.x + c[2] * p.y + c[3] * p.x * p.y),
    )
    .with_dirichlet(move |p: Point| slope.0 * p.x + slope.1 * p.y)
    .with_conductivity(Conductivity::Uniform(lambda))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn saddle_solutions_conserve_mass(
        level in 1u32..=4,
        degree in 1usize..=2,
        c in prop::array::uniform4(-5.0f64..5.0),
        lambda in spd(),
        slope in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let problem = dirichlet_problem(c, lambda, slope);
        let s = solve_level(&problem, degree, level, Method::Fv, ExecutionMode::Parallel).unwrap();
        let j = conservation_indicator(&s.space, &s.dual, &s.solution.p, &problem, Regions::ControlVolumes, ExecutionMode::Parallel).unwrap();
        prop_assert!(j <= 1e-10, "J = {j:e}");
        prop_assert!(s.solution.info.residual_constraint <= 1e-10);
    }

    #[test]
    fn galerkin_minimizes_energy(
        level in 1u32..=4,
        degree in 1usize..=2,
        c in prop::array::uniform4(-5.0f64..5.0),
        lambda in spd(),
    ) {
        let problem = dirichlet_problem(c, lambda, (1.0, -0.5));
        let fem = solve_level(&problem, degree, level, Method::Fem, ExecutionMode::Parallel).unwrap();
        let fv = solve_level(&problem, degree, level, Method::Fv, ExecutionMode::Parallel).unwrap();
        let e_fem = energy(&fem.space, &fem.solution.p, &problem, ExecutionMode::Parallel).unwrap();
        let e_fv = energy(&fv.space, &fv.solution.p, &problem, ExecutionMode::Parallel).unwrap();
        prop_assert!(e_fem <= e_fv + 1e-12 * e_fem.abs().max(1.0));
    }

    #[test]
    fn neumann_sources_conserve_and_have_zero_mean(
        level in 2u32..=4,
        degree in 1usize..=2,
        a in (0.0f64..=1.0, 0.0f64..=1.0),
        b in (0.0f64..=1.0, 0.0f64..=1.0),
        w in 0.1f64..3.0,
    ) {
        let problem = ProblemSpec::new(
            "sources",
            BoundaryKind::AllNeumann,
            Forcing::sources(vec![PointSource::new(a.0, a.1, w), PointSource::new(b.0, b.1, -w)]),
        );
        let s = solve_level(&problem, degree, level, Method::Fv, ExecutionMode::Parallel).unwrap();
        let j = conservation_indicator(&s.space, &s.dual, &s.solution.p, &problem, Regions::ControlVolumes, ExecutionMode::Parallel).unwrap();
        prop_assert!(j <= 1e-10 * w.max(1.0), "J = {j:e}");
        let mean: f64 = s.system.restrict(&s.solution.p).iter().zip(&s.system.mean_weights).map(|(p, m)| p * m).sum();
        prop_assert!(mean.abs() <= 1e-12 * w.max(1.0));
    }

    #[test]
    fn dual_volumes_tile_the_square(level in 1u32..=5, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        let mesh = StructuredMesh::new(level, BoundaryKind::AllNeumann).unwrap();
        let dual = DualMesh::new(&mesh);
        prop_assert!((dual.total_area() - 1.0).abs() <= 1e-13);
        let p = Point::new(x, y);
        let k = dual.volume_containing(p);
        prop_assert!(k.is_some());
        prop_assert!(dual.volumes()[k.unwrap()].contains(p));
    }
}

#[test]
fn augmented_norm_dominates_energy_norm() {
    let problem = problem_example1();
    let exact = problem.exact.clone().unwrap();
    for degree in 1..=2 {
        for level in 1..=4 {
            for method in [Method::Fem, Method::Fv] {
                let s =
                    solve_level(&problem, degree, level, method, ExecutionMode::Parallel).unwrap();
                let e = norm_errors(
                    &s.space,
                    &s.solution.p,
                    None,
                    &exact,
                    ExecutionMode::Parallel,
                )
                .unwrap();
                assert!(e.h1 <= e.vh);
                let expect =
                    (e.h1 * e.h1 + s.space.mesh().h().powi(2) * e.vh_semi * e.vh_semi).sqrt();
                assert!((e.vh - expect).abs() <= 1e-14 * expect);
            }
        }
    }
}

#[test]
fn corrected_error_beats_plain_error_for_q2() {
    let problem = problem_example1();
    let exact = problem.exact.clone().unwrap();
    for level in 4..=5 {
        let s = solve_level(&problem, 2, level, Method::Fv, ExecutionMode::Parallel).unwrap();
        let e = norm_errors(
            &s.space,
            &s.solution.p,
            Some((&s.dual, &s.solution.lambda)),
            &exact,
            ExecutionMode::Parallel,
        )
        .unwrap();
        assert!(e.l2_corrected.unwrap() < e.l2, "level {level}");
    }
}

#[test]
fn execution_modes_agree_bitwise() {
    let problem = problem_example1();
    for degree in 1..=2 {
        let a = solve_level(&problem, degree, 4, Method::Fv, ExecutionMode::Sequential).unwrap();
        let b = solve_level(&problem, degree, 4, Method::Fv, ExecutionMode::Parallel).unwrap();
        assert_eq!(a.solution.p, b.solution.p);
        assert_eq!(a.solution.lambda, b.solution.lambda);
    }
}
