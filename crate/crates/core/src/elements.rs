//! Reference-element machinery: Gauss–Legendre rules on `[0, 1]` and
//! `[0, 1]^2`, and tensor-product Lagrange bases of degree 1 and 2.
//!
//! Local node numbering is lexicographic by `(y, x)` over the equispaced
//! tensor grid: node `(a, b)` (x-index `a`, y-index `b`) has local index
//! `b * (r + 1) + a`. For `r = 1` this gives the corners
//! `(0,0), (1,0), (0,1), (1,1)`; for `r = 2` the centre node is index 4.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Point, SymTensor2};

pub const MAX_GAUSS_POINTS: usize = 10;

/// Quadrature rule on the reference interval (`D = 1`) or square (`D = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    /// Maximal per-direction polynomial degree integrated exactly.
    pub exactness_degree: usize,
}

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; D], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

impl QuadratureRule<2> {
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.iter()
            .map(|(p, w)| w * f(Point::new(p[0], p[1])))
            .sum()
    }
}

impl QuadratureRule<1> {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(p[0])).sum()
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule mapped to `[0, 1]`, points ascending.
pub fn gauss_1d(n: usize) -> Result<QuadratureRule<1>> {
    if !(1..=MAX_GAUSS_POINTS).contains(&n) {
        return Err(Error::Parameter(format!(
            "Gauss rule with {n} points (supported 1..={MAX_GAUSS_POINTS})"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Roots of P_n, largest first.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        // map [-1, 1] -> [0, 1], ascending order
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    Ok(QuadratureRule {
        points: nodes.into_iter().map(|x| [x]).collect(),
        weights,
        exactness_degree: 2 * n - 1,
    })
}

/// Tensor product of [`gauss_1d`]; `x` varies fastest.
pub fn gauss_2d(n: usize) -> Result<QuadratureRule<2>> {
    let line = gauss_1d(n)?;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (py, wy) in line.iter() {
        for (px, wx) in line.iter() {
            points.push([px[0], py[0]]);
            weights.push(wx * wy);
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree: line.exactness_degree,
    })
}

/// 1D Lagrange polynomials on `r + 1` equispaced nodes of `[0, 1]`:
/// values, first and second derivatives at `t`.
fn lagrange_1d(r: usize, t: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let mut v = [0.0; 3];
    let mut d = [0.0; 3];
    let mut dd = [0.0; 3];
    match r {
        1 => {
            v[0] = 1.0 - t;
            v[1] = t;
            d[0] = -1.0;
            d[1] = 1.0;
        }
        2 => {
            v[0] = (2.0 * t - 1.0) * (t - 1.0);
            v[1] = 4.0 * t * (1.0 - t);
            v[2] = t * (2.0 * t - 1.0);
            d[0] = 4.0 * t - 3.0;
            d[1] = 4.0 - 8.0 * t;
            d[2] = 4.0 * t - 1.0;
            dd = [4.0, -8.0, 4.0];
        }
        _ => unreachable!("degree validated by ReferenceBasis::new"),
    }
    (v, d, dd)
}

/// Second derivatives `(xx, xy, yy)` of a reference basis function.
pub type Hessian = [f64; 3];

/// Tensor-product Lagrange basis of degree `r` on the reference square.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBasis {
    degree: usize,
    nodes: Vec<Point>,
}

impl ReferenceBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        let step = 1.0 / degree as f64;
        let nodes = (0..=degree)
            .flat_map(|b| (0..=degree).map(move |a| Point::new(a as f64 * step, b as f64 * step)))
            .collect();
        Ok(Self { degree, nodes })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of local functions, `(r + 1)^2`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn values(&self, xi: Point) -> Vec<f64> {
        let (vx, _, _) = lagrange_1d(self.degree, xi.x);
        let (vy, _, _) = lagrange_1d(self.degree, xi.y);
        self.tensor(|a, b| vx[a] * vy[b])
    }

    pub fn gradients(&self, xi: Point) -> Vec<Point> {
        let (vx, dx, _) = lagrange_1d(self.degree, xi.x);
        let (vy, dy, _) = lagrange_1d(self.degree, xi.y);
        self.tensor(|a, b| Point::new(dx[a] * vy[b], vx[a] * dy[b]))
    }

    pub fn hessians(&self, xi: Point) -> Vec<Hessian> {
        let (vx, dx, ddx) = lagrange_1d(self.degree, xi.x);
        let (vy, dy, ddy) = lagrange_1d(self.degree, xi.y);
        self.tensor(|a, b| [ddx[a] * vy[b], dx[a] * dy[b], vx[a] * ddy[b]])
    }

    fn tensor<T>(&self, f: impl Fn(usize, usize) -> T) -> Vec<T> {
        let m = self.degree + 1;
        (0..m)
            .flat_map(|b| (0..m).map(move |a| (a, b)))
            .map(|(a, b)| f(a, b))
            .collect()
    }

    /// Values, gradients and second derivatives at every point of `rule`.
    pub fn tabulate(&self, rule: &QuadratureRule<2>) -> BasisTable {
        let mut table = BasisTable {
            n_basis: self.len(),
            weights: rule.weights.clone(),
            points: Vec::with_capacity(rule.len()),
            values: Vec::with_capacity(rule.len() * self.len()),
            gradients: Vec::with_capacity(rule.len() * self.len()),
            hessians: Vec::with_capacity(rule.len() * self.len()),
        };
        for p in &rule.points {
            let xi = Point::new(p[0], p[1]);
            table.points.push(xi);
            table.values.extend(self.values(xi));
            table.gradients.extend(self.gradients(xi));
            table.hessians.extend(self.hessians(xi));
        }
        table
    }
}

/// Reference basis data precomputed at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct BasisTable {
    n_basis: usize,
    pub weights: Vec<f64>,
    pub points: Vec<Point>,
    values: Vec<f64>,
    gradients: Vec<Point>,
    hessians: Vec<Hessian>,
}

impl BasisTable {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }

    pub fn gradients(&self, q: usize) -> &[Point] {
        &self.gradients[q * self.n_basis..(q + 1) * self.n_basis]
    }

    pub fn hessians(&self, q: usize) -> &[Hessian] {
        &self.hessians[q * self.n_basis..(q + 1) * self.n_basis]
    }
}

pub fn basis_eval(r: usize, xi: Point) -> Result<Vec<f64>> {
    Ok(ReferenceBasis::new(r)?.values(xi))
}

pub fn basis_grad(r: usize, xi: Point) -> Result<Vec<Point>> {
    Ok(ReferenceBasis::new(r)?.gradients(xi))
}

/// Element stiffness `∫_R Λ ∇φ_a · ∇φ_b` on a square of side `h`.
///
/// Uses `r + 1` Gauss points per direction, exact for constant `Λ`. In two
/// dimensions the result does not depend on `h`.
pub fn local_stiffness(basis: &ReferenceBasis, lambda: SymTensor2, h: f64) -> Result<DMatrix<f64>> {
    if !lambda.is_spd() {
        return Err(Error::NotSpd {
            xx: lambda.xx,
            xy: lambda.xy,
            yy: lambda.yy,
        });
    }
    let rule = gauss_2d(basis.degree() + 1)?;
    let n = basis.len();
    let mut k = DMatrix::zeros(n, n);
    let inv_h = 1.0 / h;
    for (p, w) in rule.iter() {
        let grads: Vec<Point> = basis
            .gradients(Point::new(p[0], p[1]))
            .into_iter()
            .map(|g| inv_h * g)
            .collect();
        for a in 0..n {
            let flux = lambda.apply(grads[a]);
            for b in 0..n {
                k[(a, b)] += w * h * h * flux.dot(grads[b]);
            }
        }
    }
    Ok(k)
}
