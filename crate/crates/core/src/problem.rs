//! Boundary value problem data: forcing, boundary data, conductivity and an
//! optional exact solution used for error measurement.

use std::fmt;
use std::sync::Arc;

use crate::geometry::{Point, SymTensor2};
use crate::mesh::{BoundaryKind, StructuredMesh};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;
/// Pure second derivatives `(f_xx, f_yy)`.
pub type SecondDerivatives = Arc<dyn Fn(Point) -> (f64, f64) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSource {
    pub location: Point,
    pub strength: f64,
}

impl PointSource {
    pub fn new(x: f64, y: f64, strength: f64) -> Self {
        Self {
            location: Point::new(x, y),
            strength,
        }
    }
}

/// Right-hand side `q`: an optional smooth density plus Dirac sources.
#[derive(Clone, Default)]
pub struct Forcing {
    pub density: Option<ScalarField>,
    pub point_sources: Vec<PointSource>,
}

impl Forcing {
    pub fn smooth(q: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            density: Some(Arc::new(q)),
            point_sources: Vec::new(),
        }
    }

    pub fn sources(sources: Vec<PointSource>) -> Self {
        Self {
            density: None,
            point_sources: sources,
        }
    }

    pub fn density_at(&self, p: Point) -> f64 {
        self.density.as_ref().map_or(0.0, |q| q(p))
    }

    pub fn total_point_strength(&self) -> f64 {
        self.point_sources.iter().map(|s| s.strength).sum()
    }
}

/// Conductivity `Λ`, constant on each primal element.
#[derive(Clone)]
pub enum Conductivity {
    Uniform(SymTensor2),
    /// Sampled at the element centre.
    Cellwise(Arc<dyn Fn(Point) -> SymTensor2 + Send + Sync>),
}

impl Conductivity {
    pub fn on_element(&self, mesh: &StructuredMesh, e: usize) -> SymTensor2 {
        match self {
            Conductivity::Uniform(t) => *t,
            Conductivity::Cellwise(f) => f(mesh.element_center(e)),
        }
    }
}

impl Default for Conductivity {
    fn default() -> Self {
        Conductivity::Uniform(SymTensor2::IDENTITY)
    }
}

#[derive(Clone)]
pub struct ExactSolution {
    pub value: ScalarField,
    pub gradient: VectorField,
    pub second_derivatives: SecondDerivatives,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub id: String,
    pub bc: BoundaryKind,
    pub forcing: Forcing,
    /// Dirichlet data, defined on the whole domain so it can also serve as
    /// the extension used to homogenise the energy.
    pub dirichlet: Option<ScalarField>,
    pub conductivity: Conductivity,
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    pub fn new(id: impl Into<String>, bc: BoundaryKind, forcing: Forcing) -> Self {
        Self {
            id: id.into(),
            bc,
            forcing,
            dirichlet: None,
            conductivity: Conductivity::default(),
            exact: None,
        }
    }

    pub fn with_dirichlet(mut self, g: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        self.dirichlet = Some(Arc::new(g));
        self
    }

    pub fn with_conductivity(mut self, c: Conductivity) -> Self {
        self.conductivity = c;
        self
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("id", &self.id)
            .field("bc", &self.bc)
            .field("smooth_forcing", &self.forcing.density.is_some())
            .field("point_sources", &self.forcing.point_sources)
            .field("dirichlet", &self.dirichlet.is_some())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}
