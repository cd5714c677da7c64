//! Finsler norms: evaluation, duality, and subdifferential faces.
//!
//! A Finsler norm is a convex, positively one-homogeneous function that is
//! positive away from zero; its unit ball is a convex body with the origin
//! in its interior, and the norm may be asymmetric. Polytope balls carry
//! exact vertex/facet data so that dual values and subdifferential faces
//! come out of finite maximizations rather than sampling.

use crate::error::{Error, Result};
use crate::geom::{invert_matrix, solve2, solve3, vec2, Vector};

/// Relative tolerance used to decide vertex/facet incidences.
const GEOM_TOL: f64 = 1e-9;

/// Declarative description of a norm, as it appears in scenario files.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    /// `phi(x) = max_i <a_i, x>`; the ball is `{q : <a_i, q> <= 1 for all i}`.
    PolytopeH { rows: Vec<Vector> },
    /// Ball given as the convex hull of `vertices`.
    PolytopeV { vertices: Vec<Vector> },
    /// `phi(x) = ||A x||_p`, `p in [1, inf]`; `map = None` means `A = Id`.
    PNorm { p: f64, map: Option<Vec<Vec<f64>>> },
    /// C^{1,1} regularization of `base` at radius `zeta` (see `regularize`).
    Regularized { base: Box<NormSpec>, zeta: f64 },
    /// `phi(x) = base(-x)`.
    Inverted { base: Box<NormSpec> },
}

impl NormSpec {
    pub fn l1(dim: usize) -> NormSpec {
        NormSpec::PNorm { p: 1.0, map: None }.with_dim_check(dim)
    }

    pub fn linf(dim: usize) -> NormSpec {
        NormSpec::PNorm {
            p: f64::INFINITY,
            map: None,
        }
        .with_dim_check(dim)
    }

    pub fn euclidean() -> NormSpec {
        NormSpec::PNorm { p: 2.0, map: None }
    }

    fn with_dim_check(self, _dim: usize) -> NormSpec {
        self
    }
}

/// An exposed face of the unit ball: the subdifferential `d(phi*)(p)`.
#[derive(Debug, Clone)]
pub struct Face {
    /// Extreme points of the face. A singleton for smooth balls, two
    /// endpoints for an edge, a CCW polygon for a 2-face in 3D.
    pub vertices: Vec<Vector>,
    /// Affine dimension: 0, 1, or 2.
    pub affine_dim: usize,
    /// The anchoring outward normal direction `p / |p|`.
    pub normal: Vector,
}

impl Face {
    pub fn singleton(q: Vector, normal: Vector) -> Face {
        Face {
            vertices: vec![q],
            affine_dim: 0,
            normal,
        }
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].dim()
    }

    pub fn centroid(&self) -> Vector {
        let mut c = Vector::zeros(self.dim());
        for v in &self.vertices {
            c = c + *v;
        }
        c.scale(1.0 / self.vertices.len() as f64)
    }

    /// Translates every vertex by `t`.
    pub fn translated(&self, t: Vector) -> Face {
        Face {
            vertices: self.vertices.iter().map(|v| *v + t).collect(),
            affine_dim: self.affine_dim,
            normal: self.normal,
        }
    }

    /// Negates every vertex (face of the inverted norm).
    pub fn negated(&self, normal: Vector) -> Face {
        Face {
            vertices: self.vertices.iter().map(|v| -*v).collect(),
            affine_dim: self.affine_dim,
            normal,
        }
    }

    /// A point of the relative interior.
    pub fn interior_point(&self) -> Vector {
        self.centroid()
    }

    /// Euclidean distance from `x` to the face (exact over strata).
    pub fn distance(&self, x: &Vector) -> f64 {
        match self.affine_dim {
            0 => x.dist2(&self.vertices[0]),
            1 => segment_distance(x, &self.vertices[0], &self.vertices[1]),
            _ => polygon_distance(x, &self.vertices),
        }
    }

    /// Symmetric Hausdorff distance between two faces, exact over strata.
    pub fn hausdorff(&self, other: &Face) -> f64 {
        let one_way = |a: &Face, b: &Face| -> f64 {
            // Extreme points realize the directed Hausdorff distance of a
            // convex set against a convex set.
            a.vertices
                .iter()
                .map(|v| b.distance(v))
                .fold(0.0_f64, f64::max)
        };
        one_way(self, other).max(one_way(other, self))
    }

    /// Membership test with slack (barycentric up to `tol`).
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.distance(x) <= tol
    }
}

pub(crate) fn segment_distance(x: &Vector, a: &Vector, b: &Vector) -> f64 {
    let ab = *b - *a;
    let denom = ab.dot(&ab);
    if denom <= 0.0 {
        return x.dist2(a);
    }
    let t = ((*x - *a).dot(&ab) / denom).clamp(0.0, 1.0);
    x.dist2(&(*a + ab.scale(t)))
}

/// Distance from a point to a planar convex polygon embedded in 2D or 3D.
pub(crate) fn polygon_distance(x: &Vector, verts: &[Vector]) -> f64 {
    let n = verts.len();
    if n == 1 {
        return x.dist2(&verts[0]);
    }
    if n == 2 {
        return segment_distance(x, &verts[0], &verts[1]);
    }
    if verts[0].dim() == 2 {
        // 2D polygon: inside test + edge distances.
        if point_in_convex_polygon_2d(x, verts, 0.0) {
            return 0.0;
        }
        return (0..n)
            .map(|i| segment_distance(x, &verts[i], &verts[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
        ;
    }
    // 3D planar polygon: project onto the plane, test, else edges.
    let normal = (verts[1] - verts[0]).cross3(&(verts[2] - verts[0]));
    if let Some(nu) = normal.normalized() {
        let off = (*x - verts[0]).dot(&nu);
        let proj = *x - nu.scale(off);
        let inside = (0..n).all(|i| {
            let e = verts[(i + 1) % n] - verts[i];
            let c = e.cross3(&(proj - verts[i]));
            c.dot(&nu) >= -GEOM_TOL * (1.0 + e.norm2())
        });
        if inside {
            return off.abs();
        }
    }
    (0..n)
        .map(|i| segment_distance(x, &verts[i], &verts[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn point_in_convex_polygon_2d(x: &Vector, verts: &[Vector], tol: f64) -> bool {
    let n = verts.len();
    let mut sign = 0.0_f64;
    for i in 0..n {
        let e = verts[(i + 1) % n] - verts[i];
        let c = e.cross2(&(*x - verts[i]));
        if c.abs() <= tol {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

/// Exact vertex/facet data for a polytope unit ball in dimension 2 or 3.
#[derive(Debug, Clone)]
pub struct PolytopeBall {
    pub dim: usize,
    /// Irredundant facet functionals: ball = intersection of `<a_i, q> <= 1`.
    pub rows: Vec<Vector>,
    /// Extreme points. In 2D these are sorted counterclockwise.
    pub vertices: Vec<Vector>,
    /// Per row, the indices of the vertices lying on that facet.
    /// In 3D the indices trace the facet polygon counterclockwise (seen
    /// from outside).
    pub facets: Vec<Vec<usize>>,
}

impl PolytopeBall {
    pub fn from_rows(rows: &[Vector]) -> Result<PolytopeBall> {
        let dim = rows
            .first()
            .ok_or_else(|| Error::InvalidNorm("polytope needs at least one row".into()))?
            .dim();
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension {
                what: "polytope ball",
                dim,
            });
        }
        for r in rows {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.dim(),
                });
            }
            if r.norm2() < 1e-12 {
                return Err(Error::InvalidNorm("zero row in H-description".into()));
            }
        }
        // Boundedness and 0-in-interior: every direction must see a
        // strictly positive functional.
        let dirs = sphere_directions(dim, if dim == 2 { 720 } else { 1500 });
        for u in &dirs {
            let best = rows.iter().map(|a| a.dot(u)).fold(f64::NEG_INFINITY, f64::max);
            if best <= 1e-9 {
                return Err(Error::InvalidNorm(
                    "H-rows do not positively span (ball unbounded or empty)".into(),
                ));
            }
        }
        let vertices = enumerate_vertices(rows, dim)?;
        if vertices.len() < dim + 1 {
            return Err(Error::InvalidNorm(format!(
                "degenerate polytope ball: only {} vertices",
                vertices.len()
            )));
        }
        let scale = vertices.iter().map(|v| v.norm2()).fold(0.0_f64, f64::max);
        let tol = GEOM_TOL * scale.max(1.0);

        // Keep rows whose facet carries enough vertices to matter; the
        // discarded rows only touch the ball on lower-dimensional sets and
        // do not change the gauge.
        let mut kept_rows = Vec::new();
        let mut facets = Vec::new();
        for a in rows {
            let idx: Vec<usize> = vertices
                .iter()
                .enumerate()
                .filter(|(_, v)| (a.dot(v) - 1.0).abs() <= tol)
                .map(|(i, _)| i)
                .collect();
            let effective_dim = affine_rank(&idx.iter().map(|&i| vertices[i]).collect::<Vec<_>>(), tol);
            if idx.len() >= dim && effective_dim + 1 >= dim {
                kept_rows.push(*a);
                facets.push(idx);
            }
        }
        // Deduplicate identical rows.
        let mut uniq_rows: Vec<Vector> = Vec::new();
        let mut uniq_facets: Vec<Vec<usize>> = Vec::new();
        for (a, f) in kept_rows.iter().zip(facets.iter()) {
            if !uniq_rows.iter().any(|b| (*a - *b).norm2() <= 1e-12 * scale.max(1.0)) {
                uniq_rows.push(*a);
                uniq_facets.push(f.clone());
            }
        }

        let mut ball = PolytopeBall {
            dim,
            rows: uniq_rows,
            vertices,
            facets: uniq_facets,
        };
        ball.order_vertices();
        Ok(ball)
    }

    /// Builds from a vertex cloud: the rows are recovered as the vertices
    /// of the polar body, enumerated from the cloud taken as H-rows.
    pub fn from_vertices(points: &[Vector]) -> Result<PolytopeBall> {
        let dim = points
            .first()
            .ok_or_else(|| Error::InvalidNorm("polytope needs at least one vertex".into()))?
            .dim();
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDimension {
                what: "polytope ball",
                dim,
            });
        }
        for v in points {
            if v.norm2() < 1e-12 {
                return Err(Error::InvalidNorm("zero vertex in V-description".into()));
            }
        }
        // Vertices of the polar {q : <v_k, q> <= 1} are exactly the facet
        // functionals of conv(points).
        let polar = PolytopeBall::from_rows(points)?;
        PolytopeBall::from_rows(&polar.vertices)
    }

    fn order_vertices(&mut self) {
        if self.dim == 2 {
            let mut idx: Vec<usize> = (0..self.vertices.len()).collect();
            idx.sort_by(|&i, &j| {
                let ai = self.vertices[i][1].atan2(self.vertices[i][0]);
                let aj = self.vertices[j][1].atan2(self.vertices[j][0]);
                ai.partial_cmp(&aj).unwrap()
            });
            let remap: Vec<Vector> = idx.iter().map(|&i| self.vertices[i]).collect();
            let inv: Vec<usize> = {
                let mut inv = vec![0; idx.len()];
                for (new, &old) in idx.iter().enumerate() {
                    inv[old] = new;
                }
                inv
            };
            self.vertices = remap;
            for f in &mut self.facets {
                for v in f.iter_mut() {
                    *v = inv[*v];
                }
                f.sort();
            }
        } else {
            // Order each 3D facet polygon counterclockwise around its
            // outward normal.
            for (fi, f) in self.facets.iter_mut().enumerate() {
                let a = self.rows[fi];
                let n = a.normalized().unwrap();
                let centroid = {
                    let mut c = Vector::zeros(3);
                    for &i in f.iter() {
                        c = c + self.vertices[i];
                    }
                    c.scale(1.0 / f.len() as f64)
                };
                let (u, v) = plane_basis(&n);
                f.sort_by(|&i, &j| {
                    let pi = self.vertices[i] - centroid;
                    let pj = self.vertices[j] - centroid;
                    let ai = pi.dot(&v).atan2(pi.dot(&u));
                    let aj = pj.dot(&v).atan2(pj.dot(&u));
                    ai.partial_cmp(&aj).unwrap()
                });
            }
        }
    }

    pub fn gauge(&self, x: &Vector) -> f64 {
        self.rows
            .iter()
            .map(|a| a.dot(x))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0)
    }

    pub fn support(&self, p: &Vector) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.dot(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The exposed face in direction `p`, with relative tolerance `tol`.
    pub fn face(&self, p: &Vector, tol: f64) -> Face {
        let normal = p.normalized().expect("face direction must be nonzero");
        let s = self.support(p);
        let band = tol * s.abs().max(p.norm2()).max(1.0);
        let mut verts: Vec<Vector> = self
            .vertices
            .iter()
            .filter(|v| v.dot(p) >= s - band)
            .copied()
            .collect();
        let scale = self
            .vertices
            .iter()
            .map(|v| v.norm2())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let rank = affine_rank(&verts, GEOM_TOL * scale);
        if rank == 1 && verts.len() > 2 {
            // Keep only the segment endpoints.
            let d = (verts[1] - verts[0]).normalized().unwrap();
            let proj = |v: &Vector| (*v - verts[0]).dot(&d);
            let (mut lo, mut hi) = (verts[0], verts[0]);
            let (mut plo, mut phi) = (0.0_f64, 0.0_f64);
            for v in &verts {
                let t = proj(v);
                if t < plo {
                    plo = t;
                    lo = *v;
                }
                if t > phi {
                    phi = t;
                    hi = *v;
                }
            }
            verts = vec![lo, hi];
        } else if rank == 1 && verts.len() == 2 {
            // fine as is
        } else if rank == 2 {
            // CCW polygon order around the face normal.
            let centroid = {
                let mut c = Vector::zeros(self.dim);
                for v in &verts {
                    c = c + *v;
                }
                c.scale(1.0 / verts.len() as f64)
            };
            if self.dim == 2 {
                verts.sort_by(|a, b| {
                    let pa = *a - centroid;
                    let pb = *b - centroid;
                    pa[1].atan2(pa[0]).partial_cmp(&pb[1].atan2(pb[0])).unwrap()
                });
            } else {
                let (u, v) = plane_basis(&normal);
                verts.sort_by(|a, b| {
                    let pa = *a - centroid;
                    let pb = *b - centroid;
                    let aa = pa.dot(&v).atan2(pa.dot(&u));
                    let ab = pb.dot(&v).atan2(pb.dot(&u));
                    aa.partial_cmp(&ab).unwrap()
                });
            }
        } else if rank == 0 {
            verts.truncate(1);
        }
        Face {
            affine_dim: rank.min(2),
            vertices: verts,
            normal,
        }
    }

    /// All facets as `Face` values (used for gradient-free envelopes).
    pub fn all_facets(&self) -> Vec<Face> {
        self.rows
            .iter()
            .zip(self.facets.iter())
            .map(|(a, idx)| {
                let verts: Vec<Vector> = idx.iter().map(|&i| self.vertices[i]).collect();
                let scale = verts.iter().map(|v| v.norm2()).fold(1.0_f64, f64::max);
                Face {
                    affine_dim: affine_rank(&verts, GEOM_TOL * scale).min(2),
                    vertices: verts,
                    normal: a.normalized().unwrap(),
                }
            })
            .collect()
    }

    /// Exact Euclidean distance from `x` to the ball.
    pub fn distance(&self, x: &Vector) -> f64 {
        if self.gauge(x) <= 1.0 {
            return 0.0;
        }
        if self.dim == 2 {
            let n = self.vertices.len();
            (0..n)
                .map(|i| segment_distance(x, &self.vertices[i], &self.vertices[(i + 1) % n]))
                .fold(f64::INFINITY, f64::min)
        } else {
            self.all_facets()
                .iter()
                .map(|f| f.distance(x))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

fn affine_rank(verts: &[Vector], tol: f64) -> usize {
    if verts.len() <= 1 {
        return 0;
    }
    let base = verts[0];
    let mut basis: Vec<Vector> = Vec::new();
    for v in &verts[1..] {
        let mut d = *v - base;
        for b in &basis {
            d = d - b.scale(d.dot(b));
        }
        if d.norm2() > tol {
            basis.push(d.normalized().unwrap());
        }
    }
    basis.len()
}

/// Orthonormal basis of the plane orthogonal to `n` (3D).
pub(crate) fn plane_basis(n: &Vector) -> (Vector, Vector) {
    debug_assert_eq!(n.dim(), 3);
    let pick = if n[0].abs() < 0.9 {
        Vector::basis(3, 0)
    } else {
        Vector::basis(3, 1)
    };
    let u = (pick - n.scale(pick.dot(n))).normalized().unwrap();
    let v = n.cross3(&u);
    (u, v)
}

fn enumerate_vertices(rows: &[Vector], dim: usize) -> Result<Vec<Vector>> {
    let m = rows.len();
    let scale: f64 = rows.iter().map(|r| r.norm2()).fold(0.0_f64, f64::max);
    let mut verts: Vec<Vector> = Vec::new();
    let feasible = |q: &Vector| rows.iter().all(|a| a.dot(q) <= 1.0 + 1e-9 * scale.max(1.0));
    let push = |q: Vector, verts: &mut Vec<Vector>| {
        if q.as_slice().iter().any(|c| !c.is_finite()) {
            return;
        }
        if feasible(&q) && !verts.iter().any(|v| v.dist2(&q) <= 1e-8) {
            verts.push(q);
        }
    };
    if dim == 2 {
        for i in 0..m {
            for j in (i + 1)..m {
                if let Some((x, y)) = solve2(
                    rows[i][0], rows[i][1], rows[j][0], rows[j][1], 1.0, 1.0,
                ) {
                    push(vec2(x, y), &mut verts);
                }
            }
        }
    } else {
        for i in 0..m {
            for j in (i + 1)..m {
                for k in (j + 1)..m {
                    let a = [
                        [rows[i][0], rows[i][1], rows[i][2]],
                        [rows[j][0], rows[j][1], rows[j][2]],
                        [rows[k][0], rows[k][1], rows[k][2]],
                    ];
                    if let Some(s) = solve3(a, [1.0, 1.0, 1.0]) {
                        push(Vector::new(&s), &mut verts);
                    }
                }
            }
        }
    }
    Ok(verts)
}

/// Uniform-ish direction samples on the unit sphere: equally spaced on the
/// circle in 2D, a Fibonacci lattice in 3D.
pub fn sphere_directions(dim: usize, n: usize) -> Vec<Vector> {
    match dim {
        2 => (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                vec2(t.cos(), t.sin())
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / (n as f64);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = 2.0 * std::f64::consts::PI * (k as f64) / golden;
                    Vector::new(&[r * t.cos(), r * t.sin(), z])
                })
                .collect()
        }
        _ => panic!("sphere_directions supports dim 2 and 3"),
    }
}

/// Compiled evaluator behind a [`NormSpec`].
#[derive(Debug, Clone)]
enum Kernel {
    Polytope(PolytopeBall),
    /// `phi(x) = ||A x||_p` with `p` in `(1, inf)` (or any `p` when the
    /// dimension rules out polytope data).
    Power {
        p: f64,
        /// conjugate exponent
        q: f64,
        map: Option<Vec<Vec<f64>>>,
        inv: Option<Vec<Vec<f64>>>,
    },
    Regularized(Box<crate::regularize::RegularizedNorm>),
    Inverted(Box<FinslerNorm>),
}

/// A validated, ready-to-evaluate Finsler norm.
#[derive(Debug, Clone)]
pub struct FinslerNorm {
    spec: NormSpec,
    kernel: Kernel,
    dim: usize,
    /// Upper bound for `max {phi(u) : |u| = 1}`, used for bisection brackets.
    sphere_max_bound: f64,
}

impl FinslerNorm {
    pub fn build(spec: &NormSpec, dim: usize) -> Result<FinslerNorm> {
        let kernel = match spec {
            NormSpec::PolytopeH { rows } => Kernel::Polytope(PolytopeBall::from_rows(rows)?),
            NormSpec::PolytopeV { vertices } => {
                Kernel::Polytope(PolytopeBall::from_vertices(vertices)?)
            }
            NormSpec::PNorm { p, map } => build_pnorm(*p, map.clone(), dim)?,
            NormSpec::Regularized { base, zeta } => {
                let base_norm = FinslerNorm::build(base, dim)?;
                Kernel::Regularized(Box::new(crate::regularize::RegularizedNorm::new(
                    base_norm, *zeta,
                )?))
            }
            NormSpec::Inverted { base } => {
                Kernel::Inverted(Box::new(FinslerNorm::build(base, dim)?))
            }
        };
        let dim = match &kernel {
            Kernel::Polytope(b) => b.dim,
            Kernel::Power { map, .. } => map.as_ref().map(|m| m.len()).unwrap_or(dim),
            Kernel::Regularized(r) => r.base().dim(),
            Kernel::Inverted(b) => b.dim(),
        };
        if dim < 1 || dim > crate::geom::MAX_DIM {
            return Err(Error::UnsupportedDimension { what: "norm", dim });
        }
        let mut norm = FinslerNorm {
            spec: spec.clone(),
            kernel,
            dim,
            sphere_max_bound: 0.0,
        };
        norm.sphere_max_bound = norm.crude_sphere_max();
        Ok(norm)
    }

    fn crude_sphere_max(&self) -> f64 {
        match &self.kernel {
            Kernel::Polytope(b) => b.rows.iter().map(|a| a.norm2()).fold(0.0, f64::max),
            Kernel::Power { map, .. } => match map {
                None => (self.dim as f64).sqrt() * 2.0,
                Some(m) => {
                    let frob: f64 = m
                        .iter()
                        .flat_map(|r| r.iter())
                        .map(|v| v * v)
                        .sum::<f64>()
                        .sqrt();
                    frob * (self.dim as f64).sqrt() * 2.0
                }
            },
            Kernel::Regularized(r) => r.base().sphere_max_bound,
            Kernel::Inverted(b) => b.sphere_max_bound,
        }
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The polytope ball data, when this norm has one.
    pub fn polytope(&self) -> Option<&PolytopeBall> {
        match &self.kernel {
            Kernel::Polytope(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_regularized(&self) -> Option<&crate::regularize::RegularizedNorm> {
        match &self.kernel {
            Kernel::Regularized(r) => Some(r),
            _ => None,
        }
    }

    /// True when the ball boundary is smooth and strictly convex, so the
    /// subdifferential is single-valued away from the origin.
    pub fn is_smooth_strictly_convex(&self) -> bool {
        match &self.kernel {
            Kernel::Power { p, .. } => p.is_finite() && *p > 1.0,
            Kernel::Inverted(b) => b.is_smooth_strictly_convex(),
            _ => false,
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.dim() != self.dim {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            })
        } else {
            Ok(())
        }
    }

    /// Evaluates `phi(x)`.
    pub fn eval(&self, x: &Vector) -> f64 {
        debug_assert!(self.check_dim(x).is_ok());
        match &self.kernel {
            Kernel::Polytope(b) => b.gauge(x),
            Kernel::Power { p, map, .. } => {
                let y = apply_map(map, x);
                pnorm_value(&y, *p)
            }
            Kernel::Regularized(r) => r.eval(x),
            Kernel::Inverted(b) => b.eval(&-*x),
        }
    }

    /// Evaluates the dual norm `phi*(p) = max {<p, q> : phi(q) <= 1}`.
    pub fn dual_eval(&self, p: &Vector) -> f64 {
        debug_assert!(self.check_dim(p).is_ok());
        match &self.kernel {
            Kernel::Polytope(b) => b.support(p),
            Kernel::Power { q, map, inv, .. } => {
                // phi(x) = |A x|_p  =>  phi*(y) = |A^{-T} y|_q.
                let w = apply_map_transpose(inv, p);
                let _ = map;
                pnorm_value(&w, *q)
            }
            Kernel::Regularized(r) => r.dual_eval(p),
            Kernel::Inverted(b) => b.dual_eval(&-*p),
        }
    }

    /// The boundary point of the unit ball along direction `dir`.
    pub fn boundary_point(&self, dir: &Vector) -> Option<Vector> {
        let v = self.eval(dir);
        if v <= 0.0 || !v.is_finite() {
            None
        } else {
            Some(dir.scale(1.0 / v))
        }
    }

    /// The subdifferential face `d(phi*)(p)` with the default tolerance.
    pub fn face(&self, p: &Vector) -> Result<Face> {
        self.face_with_tol(p, GEOM_TOL)
    }

    /// The subdifferential face `d(phi*)(p)`: the exposed face of the unit
    /// ball whose outward normal is parallel to `p`.
    pub fn face_with_tol(&self, p: &Vector, tol: f64) -> Result<Face> {
        self.check_dim(p)?;
        if p.norm2() == 0.0 {
            return Err(Error::Domain(
                "subdifferential face requires p != 0 (the face at 0 is the whole ball)".into(),
            ));
        }
        match &self.kernel {
            Kernel::Polytope(b) => Ok(b.face(p, tol)),
            Kernel::Power { p: pe, q, map, inv } => {
                if !pe.is_finite() || *pe <= 1.0 {
                    return Err(Error::UnsupportedDimension {
                        what: "faces of non-smooth p-norm balls",
                        dim: self.dim,
                    });
                }
                // Unique maximizer of <p, .> over {|A q|_p <= 1}:
                // with w = A^{-T} p, the ball maximizer is A^{-1} u* where
                // u*_i = sign(w_i) |w_i|^{q-1} / |w|_q^{q-1}.
                let w = apply_map_transpose(inv, p);
                let wq = pnorm_value(&w, *q);
                if wq <= 0.0 {
                    return Err(Error::Domain("dual evaluates to zero".into()));
                }
                let mut u = Vector::zeros(self.dim);
                for i in 0..self.dim {
                    u[i] = w[i].signum() * (w[i].abs() / wq).powf(q - 1.0);
                }
                let qstar = apply_map_inv(map, inv, &u);
                Ok(Face::singleton(qstar, p.normalized().unwrap()))
            }
            Kernel::Regularized(r) => r.face_with_tol(p, tol),
            Kernel::Inverted(b) => {
                let inner = b.face_with_tol(&-*p, tol)?;
                Ok(inner.negated(p.normalized().unwrap()))
            }
        }
    }

    /// A closed-form dual norm, where one exists. The dual of a polytope
    /// norm swaps the V- and H-roles of the ball data.
    pub fn dual_norm(&self) -> Option<FinslerNorm> {
        match &self.kernel {
            Kernel::Polytope(b) => {
                let spec = NormSpec::PolytopeV {
                    vertices: b.rows.clone(),
                };
                // Dual ball = conv(rows); its H-rows are the primal vertices.
                let ball = PolytopeBall::from_rows(&b.vertices).ok()?;
                Some(FinslerNorm {
                    spec,
                    dim: self.dim,
                    sphere_max_bound: ball.rows.iter().map(|a| a.norm2()).fold(0.0, f64::max),
                    kernel: Kernel::Polytope(ball),
                })
            }
            Kernel::Power { p, q, map, inv } => {
                let (dmap, dinv) = match (map, inv) {
                    (None, None) => (None, None),
                    (Some(m), Some(i)) => (Some(transpose(i)), Some(transpose(m))),
                    _ => return None,
                };
                let spec = NormSpec::PNorm {
                    p: *q,
                    map: dmap.clone(),
                };
                Some(FinslerNorm {
                    spec,
                    dim: self.dim,
                    sphere_max_bound: 0.0,
                    kernel: Kernel::Power {
                        p: *q,
                        q: *p,
                        map: dmap,
                        inv: dinv,
                    },
                })
                .map(|mut n| {
                    n.sphere_max_bound = n.crude_sphere_max();
                    n
                })
            }
            Kernel::Inverted(b) => {
                let dual = b.dual_norm()?;
                Some(FinslerNorm {
                    spec: NormSpec::Inverted {
                        base: Box::new(dual.spec.clone()),
                    },
                    dim: self.dim,
                    sphere_max_bound: dual.sphere_max_bound,
                    kernel: Kernel::Inverted(Box::new(dual)),
                })
            }
            Kernel::Regularized(_) => None,
        }
    }

    /// `max {phi(u) : |u| = 1}` by dense sweep plus golden refinement.
    pub fn sphere_max(&self) -> f64 {
        sphere_extremum(self.dim, |u| self.eval(u), true)
    }

    /// `min {phi(u) : |u| = 1}`.
    pub fn sphere_min(&self) -> f64 {
        sphere_extremum(self.dim, |u| self.eval(u), false)
    }

    /// Largest inscribed / smallest circumscribed Euclidean ball radii.
    pub fn nondegeneracy_radii(&self) -> (f64, f64) {
        (1.0 / self.sphere_max(), 1.0 / self.sphere_min())
    }

    pub(crate) fn sphere_max_bound(&self) -> f64 {
        self.sphere_max_bound
    }

    /// Euclidean distance from `x` to the unit ball `{phi <= 1}` together
    /// with an exactness flag. Polytope balls and Euclidean balls project
    /// exactly; other smooth balls fall back to the radial chord, which
    /// overestimates slightly and is flagged as approximate.
    pub fn ball_distance(&self, x: &Vector) -> (f64, bool) {
        match &self.kernel {
            Kernel::Polytope(b) => (b.distance(x), true),
            Kernel::Power { p, map, .. } => {
                if *p == 2.0 {
                    if let Some(alpha) = scalar_map_factor(map) {
                        // ball = B_{1/alpha}
                        return ((x.norm2() - 1.0 / alpha).max(0.0), true);
                    }
                }
                let v = self.eval(x);
                if v <= 1.0 {
                    (0.0, true)
                } else {
                    ((x.norm2()) * (1.0 - 1.0 / v), false)
                }
            }
            Kernel::Regularized(r) => {
                // dist(x, A + zeta*B) = max(0, dist(x, A) - zeta)
                let (d, exact) = r.base().ball_distance(x);
                ((d - r.zeta()).max(0.0), exact)
            }
            Kernel::Inverted(b) => b.ball_distance(&-*x),
        }
    }
}

fn scalar_map_factor(map: &Option<Vec<Vec<f64>>>) -> Option<f64> {
    match map {
        None => Some(1.0),
        Some(m) => {
            let n = m.len();
            let a = m[0][0];
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { a } else { 0.0 };
                    if (m[i][j] - want).abs() > 1e-14 * a.abs().max(1.0) {
                        return None;
                    }
                }
            }
            if a > 0.0 {
                Some(a)
            } else {
                None
            }
        }
    }
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    (0..n).map(|j| (0..n).map(|i| m[i][j]).collect()).collect()
}

fn apply_map(map: &Option<Vec<Vec<f64>>>, x: &Vector) -> Vector {
    match map {
        None => *x,
        Some(m) => {
            let mut y = Vector::zeros(x.dim());
            for (i, row) in m.iter().enumerate() {
                let mut s = 0.0;
                for (j, &a) in row.iter().enumerate() {
                    s += a * x[j];
                }
                y[i] = s;
            }
            y
        }
    }
}

fn apply_map_transpose(inv: &Option<Vec<Vec<f64>>>, x: &Vector) -> Vector {
    match inv {
        None => *x,
        Some(m) => {
            // A^{-T} x where `m` stores A^{-1}.
            let mut y = Vector::zeros(x.dim());
            for j in 0..x.dim() {
                let mut s = 0.0;
                for i in 0..x.dim() {
                    s += m[i][j] * x[i];
                }
                y[j] = s;
            }
            y
        }
    }
}

fn apply_map_inv(_map: &Option<Vec<Vec<f64>>>, inv: &Option<Vec<Vec<f64>>>, x: &Vector) -> Vector {
    match inv {
        None => *x,
        Some(m) => apply_map(&Some(m.clone()), x),
    }
}

fn pnorm_value(y: &Vector, p: f64) -> f64 {
    if p == 1.0 {
        y.as_slice().iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        y.norm2()
    } else if p.is_infinite() {
        y.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max)
    } else {
        y.as_slice()
            .iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

fn build_pnorm(p: f64, map: Option<Vec<Vec<f64>>>, dim: usize) -> Result<Kernel> {
    if !(p >= 1.0) {
        return Err(Error::InvalidNorm(format!("p-norm exponent {p} < 1")));
    }
    let dim = map.as_ref().map(|m| m.len()).unwrap_or(dim);
    if let Some(m) = &map {
        if m.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidNorm("p-norm map must be square".into()));
        }
    }
    let inv = match &map {
        None => None,
        Some(m) => Some(
            invert_matrix(m).ok_or_else(|| Error::InvalidNorm("p-norm map is singular".into()))?,
        ),
    };
    // l1 / linf balls in low dimension become exact polytopes so that face
    // queries are available.
    if (p == 1.0 || p.is_infinite()) && (dim == 2 || dim == 3) {
        let mut rows: Vec<Vector> = Vec::new();
        if p == 1.0 {
            // rows are A^T sigma over sign vectors sigma
            let count = 1usize << dim;
            for mask in 0..count {
                let mut sigma = Vector::zeros(dim);
                for i in 0..dim {
                    sigma[i] = if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
                }
                let a = match &map {
                    None => sigma,
                    Some(m) => {
                        let mut a = Vector::zeros(dim);
                        for j in 0..dim {
                            let mut s = 0.0;
                            for i in 0..dim {
                                s += m[i][j] * sigma[i];
                            }
                            a[j] = s;
                        }
                        a
                    }
                };
                rows.push(a);
            }
        } else {
            for i in 0..dim {
                let row = match &map {
                    None => Vector::basis(dim, i),
                    Some(m) => Vector::new(&m[i]),
                };
                rows.push(row);
                rows.push(-row);
            }
        }
        return Ok(Kernel::Polytope(PolytopeBall::from_rows(&rows)?));
    }
    let q = if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    };
    Ok(Kernel::Power { p, q, map, inv })
}

/// Bisection for the Minkowski gauge of a convex set given by a membership
/// oracle. The set must be closed, convex, and contain the origin in its
/// interior; `bracket = (lo, hi)` must satisfy `x/hi in S`, `x/lo not in S`.
pub fn gauge_bisect<F: Fn(&Vector) -> bool>(
    membership: F,
    x: &Vector,
    bracket: (f64, f64),
    tol: f64,
) -> Result<f64> {
    if x.is_zero() {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Bracket(format!("invalid bracket ({lo}, {hi})")));
    }
    if !membership(&x.scale(1.0 / hi)) {
        return Err(Error::Bracket(format!(
            "x/hi is outside the set at hi = {hi}"
        )));
    }
    if membership(&x.scale(1.0 / lo)) {
        return Err(Error::Bracket(format!("x/lo is inside the set at lo = {lo}")));
    }
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if membership(&x.scale(1.0 / mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Maximum (or minimum) of `f` over the Euclidean unit sphere via a dense
/// sweep with golden-section refinement; used for nondegeneracy radii and
/// the generic dual fallback.
pub fn sphere_extremum<F: Fn(&Vector) -> f64>(dim: usize, f: F, maximize: bool) -> f64 {
    let sgn = if maximize { 1.0 } else { -1.0 };
    match dim {
        2 => {
            let n = 4096;
            let g = |t: f64| {
                let u = vec2(t.cos(), t.sin());
                sgn * f(&u)
            };
            let mut best_t = 0.0;
            let mut best = f64::NEG_INFINITY;
            for k in 0..n {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let v = g(t);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            let w = 2.0 * std::f64::consts::PI / n as f64;
            sgn * golden_max(g, best_t - w, best_t + w, 1e-12)
        }
        3 => {
            let dirs = sphere_directions(3, 8192);
            let mut best = f64::NEG_INFINITY;
            let mut best_u = dirs[0];
            for u in &dirs {
                let v = sgn * f(u);
                if v > best {
                    best = v;
                    best_u = *u;
                }
            }
            // Local refinement in spherical coordinates around the best.
            let (e1, e2) = plane_basis(&best_u);
            let g = |a: f64, b: f64| {
                let u = (best_u + e1.scale(a) + e2.scale(b)).normalized().unwrap();
                sgn * f(&u)
            };
            let mut a = 0.0;
            let mut b = 0.0;
            let mut w = 0.05;
            for _ in 0..40 {
                a = golden_max(|t| g(t, b), a - w, a + w, 1e-13);
                b = golden_max(|t| g(a, t), b - w, b + w, 1e-13);
                w *= 0.6;
            }
            sgn * g(a, b)
        }
        _ => {
            // Higher dimensions: sampled sweep only (smooth norms).
            let mut best = f64::NEG_INFINITY;
            let mut rng_state = 0x9E3779B97F4A7C15u64;
            let mut next = || {
                rng_state ^= rng_state << 13;
                rng_state ^= rng_state >> 7;
                rng_state ^= rng_state << 17;
                (rng_state >> 11) as f64 / (1u64 << 53) as f64
            };
            for _ in 0..20000 {
                let mut u = Vector::zeros(dim);
                for i in 0..dim {
                    // Box-Muller-ish without trig pairs; adequate for a sweep.
                    let r1: f64 = next().max(1e-12);
                    let r2: f64 = next();
                    u[i] = (-2.0 * r1.ln()).sqrt() * (2.0 * std::f64::consts::PI * r2).cos();
                }
                if let Some(un) = u.normalized() {
                    best = best.max(sgn * f(&un));
                }
            }
            sgn * best
        }
    }
}

/// Golden-section maximization of a 1D function on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    f(mid).max(fc).max(fd)
}

/// Argmax version of [`golden_max`], returning `(t, f(t))`.
pub fn golden_argmax<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}

/// Numerically evaluates the bidual `phi**(x)` from the dual evaluator by
/// maximizing `<x, p> / phi*(p)` over boundary directions. Independent of
/// the primal evaluation path.
pub fn bidual_eval(norm: &FinslerNorm, x: &Vector) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let f = |u: &Vector| {
        let d = norm.dual_eval(u);
        if d <= 0.0 {
            f64::NEG_INFINITY
        } else {
            x.dot(u) / d
        }
    };
    match norm.dim() {
        2 => {
            let n = 4096;
            let g = |t: f64| f(&vec2(t.cos(), t.sin()));
            let mut best_t = 0.0;
            let mut best = f64::NEG_INFINITY;
            for k in 0..n {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let v = g(t);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            let w = 2.0 * std::f64::consts::PI / n as f64;
            golden_max(g, best_t - w, best_t + w, 1e-13)
        }
        3 => {
            let dirs = sphere_directions(3, 8192);
            let mut best = f64::NEG_INFINITY;
            let mut best_u = dirs[0];
            for u in &dirs {
                let v = f(u);
                if v > best {
                    best = v;
                    best_u = *u;
                }
            }
            let (e1, e2) = plane_basis(&best_u);
            let g = |a: f64, b: f64| {
                let u = (best_u + e1.scale(a) + e2.scale(b)).normalized().unwrap();
                f(&u)
            };
            let mut a = 0.0;
            let mut b = 0.0;
            let mut w = 0.05;
            let mut val = g(0.0, 0.0);
            for _ in 0..40 {
                let (na, va) = golden_argmax(|t| g(t, b), a - w, a + w, 1e-13);
                a = na;
                let (nb, vb) = golden_argmax(|t| g(a, t), b - w, b + w, 1e-13);
                b = nb;
                val = va.max(vb);
                w *= 0.6;
            }
            val
        }
        _ => sphere_extremum(norm.dim(), |u| f(u).max(0.0), true),
    }
}

/// Report produced by [`validate_norm`].
#[derive(Debug, Clone)]
pub struct NormValidation {
    pub max_homogeneity_violation: f64,
    pub max_triangle_violation: f64,
    pub min_eval_on_sphere: f64,
    pub delta_in: f64,
    pub delta_out: f64,
    pub max_bidual_error: f64,
    pub samples: usize,
}

impl NormValidation {
    pub fn is_finsler(&self, tol: f64) -> bool {
        self.max_homogeneity_violation <= tol
            && self.max_triangle_violation <= tol
            && self.min_eval_on_sphere > 0.0
    }
}

/// Samples the Finsler-norm axioms and measures the nondegeneracy radii and
/// the bidual round trip. Violations are reported, never thrown.
pub fn validate_norm(norm: &FinslerNorm, samples: usize, seed: u64) -> NormValidation {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = norm.dim();
    let mut homo = 0.0_f64;
    let mut tri = 0.0_f64;
    let mut min_sphere = f64::INFINITY;
    let mut bidual = 0.0_f64;
    let sample_vec = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut v = Vector::zeros(dim);
        for i in 0..dim {
            v[i] = rng.gen_range(-1.0..1.0);
        }
        v
    };
    for k in 0..samples {
        let x = sample_vec(&mut rng);
        let y = sample_vec(&mut rng);
        let lambda = rng.gen_range(1e-3..10.0);
        let fx = norm.eval(&x);
        let fy = norm.eval(&y);
        let scale = fx.abs().max(fy.abs()).max(1.0);
        homo = homo.max((norm.eval(&x.scale(lambda)) - lambda * fx).abs() / scale.max(lambda * scale));
        tri = tri.max((norm.eval(&(x + y)) - fx - fy) / scale);
        if let Some(u) = x.normalized() {
            min_sphere = min_sphere.min(norm.eval(&u));
        }
        // The bidual sweep is costly; thin it out.
        if k % 10 == 0 && !x.is_zero() {
            bidual = bidual.max((bidual_eval(norm, &x) - fx).abs());
        }
    }
    let (delta_in, delta_out) = norm.nondegeneracy_radii();
    NormValidation {
        max_homogeneity_violation: homo,
        max_triangle_violation: tri.max(0.0),
        min_eval_on_sphere: min_sphere,
        delta_in,
        delta_out,
        max_bidual_error: bidual,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use approx::assert_relative_eq;

    pub(crate) fn diamond() -> FinslerNorm {
        FinslerNorm::build(
            &NormSpec::PolytopeH {
                rows: vec![
                    vec2(1.0, 1.0),
                    vec2(1.0, -1.0),
                    vec2(-1.0, 1.0),
                    vec2(-1.0, -1.0),
                ],
            },
            2,
        )
        .unwrap()
    }

    fn square() -> FinslerNorm {
        FinslerNorm::build(&NormSpec::linf(2), 2).unwrap()
    }

    #[test]
    fn l1_eval_examples() {
        let n = diamond();
        // |3| + |-4| = 7
        assert_relative_eq!(n.eval(&vec2(3.0, -4.0)), 7.0, epsilon = 1e-12);
        assert_eq!(n.eval(&vec2(0.0, 0.0)), 0.0);
    }

    #[test]
    fn polytope_v_diamond_boundary() {
        let n = FinslerNorm::build(
            &NormSpec::PolytopeV {
                vertices: vec![
                    vec2(1.0, 0.0),
                    vec2(0.0, 1.0),
                    vec2(-1.0, 0.0),
                    vec2(0.0, -1.0),
                ],
            },
            2,
        )
        .unwrap();
        assert_relative_eq!(n.eval(&vec2(0.5, 0.5)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(n.eval(&vec2(3.0, -4.0)), 7.0, epsilon = 1e-12);
    }

    #[test]
    fn dual_examples() {
        let l1 = diamond();
        assert_relative_eq!(l1.dual_eval(&vec2(1.0, 1.0)), 1.0, epsilon = 1e-12);
        let linf = square();
        assert_relative_eq!(linf.dual_eval(&vec2(1.0, 0.0)), 1.0, epsilon = 1e-12);
        // l2 self-duality with a scale map
        let e = FinslerNorm::build(
            &NormSpec::PNorm {
                p: 2.0,
                map: Some(vec![vec![2.0, 0.0], vec![0.0, 2.0]]),
            },
            2,
        )
        .unwrap();
        assert_relative_eq!(e.eval(&vec2(1.0, 0.0)), 2.0, epsilon = 1e-12);
        assert_relative_eq!(e.dual_eval(&vec2(1.0, 0.0)), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn face_examples() {
        let l1 = diamond();
        // p = (1,1): the diamond edge conv{(1,0),(0,1)}
        let f = l1.face(&vec2(1.0, 1.0)).unwrap();
        assert_eq!(f.affine_dim, 1);
        assert_eq!(f.vertices.len(), 2);
        assert!(f.contains(&vec2(1.0, 0.0), 1e-9));
        assert!(f.contains(&vec2(0.0, 1.0), 1e-9));
        assert!(f.contains(&vec2(0.5, 0.5), 1e-9));
        // p = (1,0): singleton vertex (1,0)
        let f = l1.face(&vec2(1.0, 0.0)).unwrap();
        assert_eq!(f.affine_dim, 0);
        assert!(f.vertices[0].dist2(&vec2(1.0, 0.0)) <= 1e-9);
        // linf, p = (1,0): right edge of the square
        let f = square().face(&vec2(1.0, 0.0)).unwrap();
        assert_eq!(f.affine_dim, 1);
        assert!(f.contains(&vec2(1.0, -1.0), 1e-9));
        assert!(f.contains(&vec2(1.0, 1.0), 1e-9));
    }

    #[test]
    fn face_3d_linf() {
        let n = FinslerNorm::build(&NormSpec::linf(3), 3).unwrap();
        let f = n.face(&vec3(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(f.affine_dim, 2);
        assert_eq!(f.vertices.len(), 4);
        for v in &f.vertices {
            assert_relative_eq!(v[0], 1.0, epsilon = 1e-9);
        }
        // edge face
        let f = n.face(&vec3(1.0, 1.0, 0.0)).unwrap();
        assert_eq!(f.affine_dim, 1);
        // vertex face
        let f = n.face(&vec3(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(f.affine_dim, 0);
    }

    #[test]
    fn gauge_bisect_examples() {
        // unit disc
        let g = gauge_bisect(|y| y.norm2() <= 1.0, &vec2(2.0, 0.0), (0.5, 8.0), 1e-10).unwrap();
        assert_relative_eq!(g, 2.0, epsilon = 1e-9);
        // diamond
        let g = gauge_bisect(
            |y| y[0].abs() + y[1].abs() <= 1.0,
            &vec2(1.0, 1.0),
            (0.5, 8.0),
            1e-10,
        )
        .unwrap();
        assert_relative_eq!(g, 2.0, epsilon = 1e-9);
        // zero maps to zero
        assert_eq!(
            gauge_bisect(|y| y.norm2() <= 1.0, &vec2(0.0, 0.0), (0.5, 8.0), 1e-10).unwrap(),
            0.0
        );
        // non-straddling bracket errors out
        assert!(gauge_bisect(|y| y.norm2() <= 1.0, &vec2(2.0, 0.0), (3.0, 8.0), 1e-10).is_err());
    }

    #[test]
    fn validation_radii() {
        let l1 = diamond();
        let v = validate_norm(&l1, 200, 7);
        assert!(v.is_finsler(1e-12));
        assert_relative_eq!(v.delta_in, 1.0 / 2.0_f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(v.delta_out, 1.0, epsilon = 1e-9);
        assert!(v.max_bidual_error < 1e-6, "bidual error {}", v.max_bidual_error);

        let eu = FinslerNorm::build(&NormSpec::euclidean(), 2).unwrap();
        let v = validate_norm(&eu, 200, 7);
        assert_relative_eq!(v.delta_in, 1.0, epsilon = 1e-9);
        assert_relative_eq!(v.delta_out, 1.0, epsilon = 1e-9);
        assert!(v.max_homogeneity_violation <= 1e-12);
        assert!(v.max_triangle_violation <= 1e-12);
    }

    #[test]
    fn inverted_matches_base_for_symmetric() {
        let l1 = diamond();
        let inv = FinslerNorm::build(
            &NormSpec::Inverted {
                base: Box::new(l1.spec().clone()),
            },
            2,
        )
        .unwrap();
        let v = validate_norm(&inv, 200, 7);
        assert_relative_eq!(v.delta_in, 1.0 / 2.0_f64.sqrt(), epsilon = 1e-9);
        assert_relative_eq!(v.delta_out, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn asymmetric_norm_round_trip() {
        // triangle ball: max(x1, x2, -x1-x2)
        let tri = FinslerNorm::build(
            &NormSpec::PolytopeH {
                rows: vec![vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(-1.0, -1.0)],
            },
            2,
        )
        .unwrap();
        assert!(tri.eval(&vec2(1.0, 0.0)) > 0.0);
        // phi(1,1) = 1 but phi(-1,-1) = 2
        assert!((tri.eval(&vec2(1.0, 1.0)) - tri.eval(&vec2(-1.0, -1.0))).abs() > 0.5);
        let v = validate_norm(&tri, 300, 11);
        assert!(v.is_finsler(1e-10));
        assert!(v.max_bidual_error < 1e-6);
        // vertices are (1,1), (1,-2), (-2,1)
        let ball = tri.polytope().unwrap();
        assert_eq!(ball.vertices.len(), 3);
    }

    #[test]
    fn dual_norm_swaps_roles() {
        let l1 = diamond();
        let dual = l1.dual_norm().unwrap();
        // dual of l1 (diamond scaled: rows (±1,±1)) is linf-like
        assert_relative_eq!(dual.eval(&vec2(1.0, 0.5)), 1.0, epsilon = 1e-9);
        for dir in sphere_directions(2, 64) {
            assert_relative_eq!(dual.eval(&dir), l1.dual_eval(&dir), epsilon = 1e-9);
        }
    }
}
