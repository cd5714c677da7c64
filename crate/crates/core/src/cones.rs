//! Conical test functions: gauges of faces fattened by tangent balls, their
//! graph representation over the face plane, mollified graphs, and the
//! perturbed (hypograph) gauges, with touching and flatness checks.

use crate::error::{Error, Result};
use crate::geom::{vec2, Vector};
use crate::norm::{plane_basis, point_in_convex_polygon_2d, segment_distance, Face, FinslerNorm};

/// Convex subset of the face plane `{e}^perp`, in orthonormal coordinates.
#[derive(Debug, Clone)]
enum ProjectedFace {
    Point(Vector),
    Segment(Vector, Vector),
    Polygon(Vec<Vector>),
}

impl ProjectedFace {
    fn distance(&self, xp: &Vector) -> f64 {
        match self {
            ProjectedFace::Point(q) => xp.dist2(q),
            ProjectedFace::Segment(a, b) => segment_distance(xp, a, b),
            ProjectedFace::Polygon(vs) => {
                if point_in_convex_polygon_2d(xp, vs, 0.0) {
                    0.0
                } else {
                    let n = vs.len();
                    (0..n)
                        .map(|i| segment_distance(xp, &vs[i], &vs[(i + 1) % n]))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    fn vertices(&self) -> Vec<Vector> {
        match self {
            ProjectedFace::Point(q) => vec![*q],
            ProjectedFace::Segment(a, b) => vec![*a, *b],
            ProjectedFace::Polygon(vs) => vs.clone(),
        }
    }
}

/// The conical test function `psi_{e,F,nu}`: the Minkowski gauge of the face
/// `F` fattened by the union of radius-`nu` balls tangent from inside,
/// `F_(e,nu) = union over q in F of B_nu(q - nu e)`.
#[derive(Debug, Clone)]
pub struct ConicalTestFn {
    face: Face,
    e: Vector,
    nu: f64,
    /// Plane offset `c = phi*(e)`; the face lies in `{<x,e> = c}`.
    c: f64,
    /// Orthonormal basis of `{e}^perp`.
    basis: Vec<Vector>,
    gp: ProjectedFace,
}

impl ConicalTestFn {
    /// Builds the test function for the face `d(phi*)(p)` of `norm`.
    pub fn new(norm: &FinslerNorm, p: &Vector, nu: f64) -> Result<ConicalTestFn> {
        if !(nu > 0.0) {
            return Err(Error::Config(format!(
                "cone radius nu = {nu} must be positive"
            )));
        }
        let e = p
            .normalized()
            .ok_or_else(|| Error::Domain("cone direction must be nonzero".into()))?;
        let face = norm.face(p)?;
        let c = norm.dual_eval(&e);
        Self::from_face(face, e, c, nu)
    }

    /// Builds directly from a face known to lie in `{<x,e> = c}`.
    pub fn from_face(face: Face, e: Vector, c: f64, nu: f64) -> Result<ConicalTestFn> {
        let scale = face
            .vertices
            .iter()
            .map(|v| v.norm2())
            .fold(1.0_f64, f64::max);
        for v in &face.vertices {
            if (v.dot(&e) - c).abs() > 1e-9 * scale {
                return Err(Error::Domain(format!(
                    "face vertex off the hyperplane <x,e> = {c} by {}",
                    (v.dot(&e) - c).abs()
                )));
            }
        }
        let dim = e.dim();
        let basis = match dim {
            2 => vec![vec2(-e[1], e[0])],
            3 => {
                let (u, v) = plane_basis(&e);
                vec![u, v]
            }
            _ => {
                return Err(Error::UnsupportedDimension {
                    what: "conical test functions",
                    dim,
                })
            }
        };
        let project = |y: &Vector| -> Vector {
            let coords: Vec<f64> = basis.iter().map(|b| y.dot(b)).collect();
            Vector::new(&coords)
        };
        let proj_verts: Vec<Vector> = face.vertices.iter().map(|v| project(v)).collect();
        let gp = match face.affine_dim {
            0 => ProjectedFace::Point(proj_verts[0]),
            1 => ProjectedFace::Segment(proj_verts[0], proj_verts[1]),
            _ => ProjectedFace::Polygon(proj_verts),
        };
        Ok(ConicalTestFn {
            face,
            e,
            nu,
            c,
            basis,
            gp,
        })
    }

    pub fn face(&self) -> &Face {
        &self.face
    }

    pub fn direction(&self) -> Vector {
        self.e
    }

    pub fn radius(&self) -> f64 {
        self.nu
    }

    pub fn plane_offset(&self) -> f64 {
        self.c
    }

    /// Coordinates of `y` in the face plane basis.
    pub fn project(&self, y: &Vector) -> Vector {
        let coords: Vec<f64> = self.basis.iter().map(|b| y.dot(b)).collect();
        Vector::new(&coords)
    }

    /// Inverse of [`ConicalTestFn::project`]: plane coordinates plus height.
    pub fn embed(&self, xp: &Vector, s: f64) -> Vector {
        let mut y = self.e.scale(s);
        for (i, b) in self.basis.iter().enumerate() {
            y = y + b.scale(xp[i]);
        }
        y
    }

    /// Distance from plane coordinates `x'` to the projected face `G_p`.
    pub fn plane_distance(&self, xp: &Vector) -> f64 {
        self.gp.distance(xp)
    }

    /// Membership in the fattened face `F_(e,nu)`.
    pub fn set_membership(&self, y: &Vector) -> bool {
        self.face.distance(&(*y + self.e.scale(self.nu))) <= self.nu
    }

    /// The gauge `psi(x)`; `None` encodes the infinite value (the ray
    /// through `x` misses the fattened face; tangent grazes count as
    /// misses).
    pub fn psi_gauge(&self, x: &Vector, tol: f64) -> Option<f64> {
        let scale = self.c.abs().max(1.0);
        let graze = 1e-12 * scale;
        let strict =
            |y: &Vector| self.face.distance(&(*y + self.e.scale(self.nu))) <= self.nu - graze;
        let loose = |y: &Vector| self.set_membership(y);
        // The fattened face lies in the slab <y, e> in [c - 2 nu, c].
        let a = x.dot(&self.e);
        let (t_lo, t_hi) = slab_interval(a, self.c - 2.0 * self.nu, self.c, x.norm2(), scale)?;
        ray_gauge(&strict, &loose, x, t_lo, t_hi, tol)
    }

    /// The graph function `g_nu(x') = c - nu + sqrt(nu^2 - dist(x',G_p)^2)`
    /// parametrizing the upper boundary of the fattened face.
    pub fn graph_g(&self, xp: &Vector) -> Result<f64> {
        let d = self.plane_distance(xp);
        if d > self.nu {
            return Err(Error::Domain(format!(
                "graph point at plane distance {d} > nu = {}",
                self.nu
            )));
        }
        Ok(self.c - self.nu + (self.nu * self.nu - d * d).max(0.0).sqrt())
    }

    /// Empirical admissibility radius: starts at `nu/4` and halves until the
    /// graph/gauge coherence test passes on a probe set (the gauge equals 1
    /// on the graph within `r` of the projected face).
    pub fn admissible_radius(&self, probes: usize) -> Result<f64> {
        let mut r = self.nu / 4.0;
        let scale = self.c.abs().max(1.0);
        'outer: while r >= self.nu / 64.0 {
            for k in 0..probes {
                let ang = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / probes as f64;
                let frac = 0.15 + 0.8 * ((k * 7919) % probes) as f64 / probes as f64;
                let offset = match self.basis.len() {
                    1 => Vector::new(&[r * frac * ang.cos()]),
                    _ => Vector::new(&[r * frac * ang.cos(), r * frac * ang.sin()]),
                };
                let anchors = self.gp.vertices();
                let base = anchors[k % anchors.len()];
                let xp = base + offset;
                if self.plane_distance(&xp) >= r {
                    continue;
                }
                let g = match self.graph_g(&xp) {
                    Ok(g) => g,
                    Err(_) => continue,
                };
                let x = self.embed(&xp, g);
                match self.psi_gauge(&x, 1e-12) {
                    Some(v) if (v - 1.0).abs() <= 1e-9 * scale => {}
                    _ => {
                        r *= 0.5;
                        continue 'outer;
                    }
                }
            }
            return Ok(r);
        }
        Err(Error::Domain(
            "no admissible radius found down to nu/64".into(),
        ))
    }
}

/// `t`-interval along the ray `t x` allowed by `lo <= t a <= hi`, plus a
/// crude range bound; `None` when empty.
fn slab_interval(a: f64, lo: f64, hi: f64, xnorm: f64, scale: f64) -> Option<(f64, f64)> {
    let tiny = 1e-14;
    let big = 1e6 * scale / xnorm.max(1e-14);
    if a > 1e-14 {
        let t1 = if lo <= 0.0 { tiny } else { lo / a };
        let t2 = hi / a;
        if t2 <= 0.0 {
            None
        } else {
            Some((t1.max(tiny), t2))
        }
    } else if a < -1e-14 {
        if lo >= 0.0 {
            None
        } else {
            Some((tiny, (lo / a).min(big)))
        }
    } else if lo <= 0.0 && hi >= 0.0 {
        Some((tiny, big))
    } else {
        None
    }
}

/// Gauge along the ray `t x` for a closed bounded convex set given by a
/// membership oracle: scans the parameter interval, then bisects for the
/// farthest member `t_max` and returns `1/t_max`. The set need not contain
/// the origin.
fn ray_gauge<FS: Fn(&Vector) -> bool, FL: Fn(&Vector) -> bool>(
    strict: &FS,
    loose: &FL,
    x: &Vector,
    t_lo: f64,
    t_hi: f64,
    tol: f64,
) -> Option<f64> {
    const SCAN: usize = 512;
    let mut best_t: Option<f64> = None;
    for k in (0..=SCAN).rev() {
        let t = t_lo + (t_hi - t_lo) * k as f64 / SCAN as f64;
        if strict(&x.scale(t)) {
            best_t = Some(t);
            break;
        }
    }
    let t0 = best_t?;
    let mut inside = t0;
    let mut outside = t_hi;
    if loose(&x.scale(t_hi)) {
        outside = t_hi * (1.0 + 1e-9);
        let mut guard = 0;
        while loose(&x.scale(outside)) {
            outside *= 1.5;
            guard += 1;
            if guard > 80 {
                return None;
            }
        }
    }
    while outside - inside > tol * inside.max(1.0) {
        let mid = 0.5 * (inside + outside);
        if loose(&x.scale(mid)) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Some(1.0 / (0.5 * (inside + outside)))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// The standard radial bump `rho(y) = Z exp(-1/(1-|y|^2))` on the unit ball
/// of the face plane, with `Z` fixed so the *quadrature* integral is one,
/// together with the mollified graph `g^eps_nu`.
#[derive(Debug, Clone)]
pub struct MollifiedGraph {
    cone: ConicalTestFn,
    eps: f64,
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    normalization: f64,
}

impl MollifiedGraph {
    pub fn new(cone: ConicalTestFn, eps: f64) -> Result<MollifiedGraph> {
        MollifiedGraph::with_order(cone, eps, 32)
    }

    pub fn with_order(cone: ConicalTestFn, eps: f64, order: usize) -> Result<MollifiedGraph> {
        if !(eps > 0.0 && eps < cone.nu) {
            return Err(Error::Config(format!(
                "mollification scale eps = {eps} must lie in (0, nu = {})",
                cone.nu
            )));
        }
        let (nodes, weights) = gauss_legendre(order);
        let mut mg = MollifiedGraph {
            cone,
            eps,
            order,
            nodes,
            weights,
            normalization: 1.0,
        };
        let raw = mg.quadrature(|_| 1.0);
        if !(raw > 0.0) {
            return Err(Error::Config("mollifier quadrature degenerate".into()));
        }
        mg.normalization = 1.0 / raw;
        Ok(mg)
    }

    pub fn cone(&self) -> &ConicalTestFn {
        &self.cone
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn quad_order(&self) -> usize {
        self.order
    }

    fn bump(y2: f64) -> f64 {
        if y2 >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - y2)).exp()
        }
    }

    /// Tensor quadrature of `f(y) * exp(-1/(1-|y|^2))` over the unit ball of
    /// the face plane (un-normalized).
    fn quadrature<F: Fn(&Vector) -> f64>(&self, f: F) -> f64 {
        match self.cone.basis.len() {
            1 => {
                let mut s = 0.0;
                for (t, w) in self.nodes.iter().zip(self.weights.iter()) {
                    let b = Self::bump(t * t);
                    if b > 0.0 {
                        s += w * b * f(&Vector::new(&[*t]));
                    }
                }
                s
            }
            _ => {
                let mut s = 0.0;
                for (t1, w1) in self.nodes.iter().zip(self.weights.iter()) {
                    for (t2, w2) in self.nodes.iter().zip(self.weights.iter()) {
                        let y2 = t1 * t1 + t2 * t2;
                        let b = Self::bump(y2);
                        if b > 0.0 {
                            s += w1 * w2 * b * f(&Vector::new(&[*t1, *t2]));
                        }
                    }
                }
                s
            }
        }
    }

    /// Quadrature mass of the normalized mollifier (equals 1 by choice of Z).
    pub fn mollifier_mass(&self) -> f64 {
        self.normalization * self.quadrature(|_| 1.0)
    }

    /// The mollified graph `g^eps(x') = integral of g(x' + eps y) rho(y)`.
    pub fn value(&self, xp: &Vector) -> Result<f64> {
        let d = self.cone.plane_distance(xp);
        if d > self.cone.nu - self.eps {
            return Err(Error::Domain(format!(
                "mollified graph needs dist(x', G_p) <= nu - eps, got {d}"
            )));
        }
        let cone = &self.cone;
        let eps = self.eps;
        Ok(self.normalization
            * self.quadrature(|y| {
                let mut shifted = *xp;
                for i in 0..xp.dim() {
                    shifted[i] += eps * y[i];
                }
                cone.graph_g(&shifted)
                    .expect("shifted point stays in the graph domain")
            }))
    }

    /// Membership oracle for the hypograph
    /// `H = {x' + s e : dist(x', G_p) <= nu - eps, 0 <= s <= g^eps(x')}`.
    pub fn hypograph_membership(&self, y: &Vector) -> bool {
        let s = y.dot(&self.cone.e);
        if s < -1e-14 {
            return false;
        }
        let yp = self.cone.project(y);
        if self.cone.plane_distance(&yp) > self.cone.nu - self.eps {
            return false;
        }
        match self.value(&yp) {
            Ok(g) => s <= g,
            Err(_) => false,
        }
    }

    /// The perturbed gauge: the Minkowski gauge of the hypograph restricted
    /// to the cone over `{dist(., G_p) < r}`; `None` outside that cone.
    pub fn perturbed_psi_gauge(&self, r: f64, x: &Vector, tol: f64) -> Option<f64> {
        // Cone membership: the ray must cross the unperturbed graph within
        // plane distance r of the projected face.
        let psi = self.cone.psi_gauge(x, 1e-12)?;
        let b = x.scale(1.0 / psi);
        if b.dot(&self.cone.e) < self.cone.c - self.cone.nu - 1e-12 {
            return None;
        }
        let bp = self.cone.project(&b);
        if self.cone.plane_distance(&bp) >= r {
            return None;
        }
        let member = |y: &Vector| self.hypograph_membership(y);
        let a = x.dot(&self.cone.e);
        let scale = self.cone.c.abs().max(1.0);
        let (t_lo, t_hi) = slab_interval(a, 0.0, self.cone.c, x.norm2(), scale)?;
        ray_gauge(&member, &member, x, t_lo, t_hi, tol)
    }
}

/// Result of [`touching_check`].
#[derive(Debug, Clone)]
pub struct TouchingReport {
    /// `min(psi_nu - phi)` over ambient samples.
    pub min_gap: f64,
    /// `max |psi_nu - phi|` over rays through the face (the touching set).
    pub max_ray_deviation: f64,
    /// For `nu < zeta`: minimum of `psi_nu - psi_zeta` just off the cone
    /// (strictly positive when the contact set is exactly the cone).
    pub off_cone_margin: Option<f64>,
    pub samples: usize,
    /// Samples where `psi` was infinite (ray missing the fattened face).
    pub infinite_samples: usize,
}

/// Verifies that the conical test function touches the norm from above with
/// contact on the cone over the face. The norm must carry a known
/// interior-ball radius `zeta` (regularized norms or Euclidean balls) and
/// `nu <= zeta`.
pub fn touching_check(
    norm: &FinslerNorm,
    p: &Vector,
    nu: f64,
    samples: usize,
    seed: u64,
) -> Result<TouchingReport> {
    use rand::{Rng, SeedableRng};
    let zeta = interior_ball_radius(norm).ok_or_else(|| {
        Error::Config("touching_check needs a norm with a known interior-ball radius".into())
    })?;
    if nu > zeta + 1e-12 {
        return Err(Error::Config(format!(
            "cone radius nu = {nu} exceeds the interior-ball radius zeta = {zeta}"
        )));
    }
    let cone = ConicalTestFn::new(norm, p, nu)?;
    let dim = norm.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut min_gap = f64::INFINITY;
    let mut infinite = 0usize;
    for _ in 0..samples {
        let mut u = Vector::zeros(dim);
        for i in 0..dim {
            u[i] = rng.gen_range(-1.0..1.0);
        }
        let u = match u.normalized() {
            Some(u) => u,
            None => continue,
        };
        let x = u.scale(rng.gen_range(0.5..2.0));
        match cone.psi_gauge(&x, 1e-11) {
            Some(psi) => min_gap = min_gap.min(psi - norm.eval(&x)),
            None => infinite += 1,
        }
    }

    // Rays through the face: psi == phi there.
    let mut max_ray_dev = 0.0_f64;
    let verts = cone.face.vertices.clone();
    for _ in 0..samples.min(200) {
        let mut q = Vector::zeros(dim);
        let mut total = 0.0;
        for v in &verts {
            let w: f64 = rng.gen_range(0.0..1.0);
            q = q + v.scale(w);
            total += w;
        }
        if total <= 0.0 {
            continue;
        }
        let q = q.scale(1.0 / total);
        let t: f64 = rng.gen_range(0.25..4.0);
        let x = q.scale(t);
        if let Some(psi) = cone.psi_gauge(&x, 1e-12) {
            max_ray_dev = max_ray_dev.max((psi - norm.eval(&x)).abs());
        } else {
            max_ray_dev = f64::INFINITY;
        }
    }

    // Strictness just off the cone when nu < zeta: compare against the
    // zeta-radius test function, whose contact with psi_nu is the cone.
    let off_cone_margin = if nu < zeta - 1e-12 {
        let wide = ConicalTestFn::new(norm, p, zeta)?;
        let mut margin = f64::INFINITY;
        let mut found = false;
        for k in 0..samples.min(400) {
            let vtx = verts[k % verts.len()];
            let vp = cone.project(&vtx);
            let mut dir = Vector::zeros(vp.dim());
            for i in 0..vp.dim() {
                dir[i] = rng.gen_range(-1.0..1.0);
            }
            let dir = match dir.normalized() {
                Some(d) => d,
                None => continue,
            };
            let xp = vp + dir.scale(0.08 * nu);
            let off = cone.plane_distance(&xp);
            if off <= 1e-12 || off > 0.9 * nu {
                continue;
            }
            let g = cone.graph_g(&xp)?;
            let x = cone.embed(&xp, g);
            if let (Some(pn), Some(pz)) = (cone.psi_gauge(&x, 1e-12), wide.psi_gauge(&x, 1e-12)) {
                margin = margin.min(pn - pz);
                found = true;
            }
        }
        if found {
            Some(margin)
        } else {
            None
        }
    } else {
        None
    };

    Ok(TouchingReport {
        min_gap,
        max_ray_deviation: max_ray_dev,
        off_cone_margin,
        samples,
        infinite_samples: infinite,
    })
}

/// Interior-ball radius of the unit ball, when the construction provides
/// one: `zeta` for regularized norms, the radius itself for Euclidean balls.
pub fn interior_ball_radius(norm: &FinslerNorm) -> Option<f64> {
    if let Some(reg) = norm.as_regularized() {
        return Some(reg.zeta());
    }
    if let crate::norm::NormSpec::PNorm { p, map } = norm.spec() {
        if *p == 2.0 {
            match map {
                None => return Some(1.0),
                Some(m) => {
                    let n = m.len();
                    let a = m[0][0];
                    let scalar = (0..n).all(|i| {
                        (0..n).all(|j| {
                            let want = if i == j { a } else { 0.0 };
                            (m[i][j] - want).abs() <= 1e-14 * a.abs().max(1.0)
                        })
                    });
                    if scalar && a > 0.0 {
                        return Some(1.0 / a);
                    }
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::NormSpec;
    use crate::regularize::regularize;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    /// Stadium cone from the walk-through: F = {1} x [-1,1], e = e1,
    /// c = 1, nu = 1/2.
    fn stadium() -> ConicalTestFn {
        let face = Face {
            vertices: vec![vec2(1.0, -1.0), vec2(1.0, 1.0)],
            affine_dim: 1,
            normal: vec2(1.0, 0.0),
        };
        ConicalTestFn::from_face(face, vec2(1.0, 0.0), 1.0, 0.5).unwrap()
    }

    #[test]
    fn psi_gauge_examples() {
        let cone = stadium();
        assert_relative_eq!(
            cone.psi_gauge(&vec2(1.0, 0.7), 1e-12).unwrap(),
            1.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            cone.psi_gauge(&vec2(2.0, 0.0), 1e-12).unwrap(),
            2.0,
            epsilon = 1e-9
        );
        // ray missing the stadium
        assert!(cone.psi_gauge(&vec2(0.0, 1.0), 1e-12).is_none());
    }

    #[test]
    fn graph_examples() {
        let cone = stadium();
        let at = |d: f64| Vector::new(&[d]);
        // G_p = [-1,1] in plane coordinates; c = 1, nu = 0.5
        assert_relative_eq!(cone.graph_g(&at(0.0)).unwrap(), 1.0, epsilon = 1e-12);
        // distance 0.3: 0.5 + sqrt(0.25 - 0.09) = 0.9
        assert_relative_eq!(cone.graph_g(&at(1.3)).unwrap(), 0.9, epsilon = 1e-12);
        // distance 0.5: sqrt term vanishes
        assert_relative_eq!(cone.graph_g(&at(1.5)).unwrap(), 0.5, epsilon = 1e-12);
        assert!(cone.graph_g(&at(1.6)).is_err());
    }

    #[test]
    fn graph_gauge_coherence() {
        let cone = stadium();
        let r = cone.admissible_radius(64).unwrap();
        assert!(r > 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d: f64 = rng.gen_range(-0.99..0.99);
            let xp = Vector::new(&[d]);
            if cone.plane_distance(&xp) >= r {
                continue;
            }
            let g = cone.graph_g(&xp).unwrap();
            let x = cone.embed(&xp, g);
            let psi = cone.psi_gauge(&x, 1e-12).unwrap();
            assert_relative_eq!(psi, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn mollifier_mass_and_flatness() {
        let cone = stadium();
        let mg = MollifiedGraph::new(cone.clone(), 0.1).unwrap();
        assert_relative_eq!(mg.mollifier_mass(), 1.0, epsilon = 1e-12);
        // Richardson check: order 48 agrees with order 32
        let fine = MollifiedGraph::with_order(stadium(), 0.1, 48).unwrap();
        let xp = Vector::new(&[0.3]);
        assert_relative_eq!(
            mg.value(&xp).unwrap(),
            fine.value(&xp).unwrap(),
            epsilon = 1e-8
        );

        // flatness: deep inside G_p the mollified graph equals c exactly
        for d in [0.0, 0.4, -0.8] {
            let xp = Vector::new(&[d]);
            assert!((mg.value(&xp).unwrap() - 1.0).abs() <= 1e-10);
        }
        // on the boundary of G_p the value drops below c by a real margin
        let edge = Vector::new(&[1.0]);
        let v = mg.value(&edge).unwrap();
        assert!(1.0 - v >= 1e-4, "edge drop too small: {}", 1.0 - v);
        let v_fine = fine.value(&edge).unwrap();
        assert_relative_eq!(v, v_fine, epsilon = 1e-8);

        // Jensen: mollified graph <= graph everywhere in its domain
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let xp = Vector::new(&[rng.gen_range(-1.35..1.35_f64)]);
            if cone.plane_distance(&xp) > 0.5 - 0.1 {
                continue;
            }
            assert!(mg.value(&xp).unwrap() <= cone.graph_g(&xp).unwrap() + 1e-8);
        }
    }

    #[test]
    fn perturbed_gauge_properties() {
        let cone = stadium();
        let r = cone.admissible_radius(64).unwrap();
        let mg = MollifiedGraph::new(cone, 0.05).unwrap();
        // flat region: perturbed gauge equals the plain gauge
        let x = vec2(1.0, 0.3);
        let psi = mg.cone().psi_gauge(&x, 1e-12).unwrap();
        let pert = mg.perturbed_psi_gauge(r, &x, 1e-12).unwrap();
        assert_relative_eq!(pert, psi, epsilon = 1e-8);
        // vertex of F: value in [1, 1 + c1 eps^2]
        let v = vec2(1.0, 1.0);
        if let Some(pv) = mg.perturbed_psi_gauge(r, &v, 1e-12) {
            assert!(pv >= 1.0 - 1e-9);
            assert!(pv <= 1.0 + 10.0 * 0.05 * 0.05, "vertex value {pv}");
        }
        // ordering: psi_nu <= perturbed gauge on sampled cone points
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = vec2(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0));
            if let Some(p) = mg.perturbed_psi_gauge(r, &x, 1e-12) {
                let base = mg.cone().psi_gauge(&x, 1e-12).unwrap();
                assert!(p >= base - 1e-8, "ordering violated: {p} < {base}");
            }
        }
    }

    #[test]
    fn perturbed_gauge_converges_to_gauge() {
        let cone = stadium();
        let r = cone.admissible_radius(64).unwrap();
        let nu = cone.radius();
        let mut sups = Vec::new();
        for frac in [0.2, 0.1, 0.05] {
            let mg = MollifiedGraph::new(stadium(), frac * nu).unwrap();
            let mut sup = 0.0_f64;
            for k in 0..40 {
                let y = -0.9 + 1.8 * k as f64 / 39.0;
                let x = vec2(1.0, y);
                if let (Some(p), Some(b)) = (
                    mg.perturbed_psi_gauge(r, &x, 1e-12),
                    cone.psi_gauge(&x, 1e-12),
                ) {
                    sup = sup.max((p - b).abs());
                }
            }
            sups.push(sup);
        }
        for w in sups.windows(2) {
            assert!(w[1] <= 0.6 * w[0] + 1e-12, "convergence ratios {sups:?}");
        }
    }

    #[test]
    fn hypograph_convexity_midpoints() {
        let cone = stadium();
        let r = cone.admissible_radius(64).unwrap();
        let mg = MollifiedGraph::new(cone, 0.05).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let in_cone = |y: &Vector| -> bool {
            match mg.cone().psi_gauge(y, 1e-12) {
                Some(p) => {
                    let b = y.scale(1.0 / p);
                    mg.cone().plane_distance(&mg.cone().project(&b)) < r
                }
                None => false,
            }
        };
        let mut pairs = 0;
        while pairs < 1000 {
            let a = vec2(rng.gen_range(0.1..1.4), rng.gen_range(-1.5..1.5));
            let b = vec2(rng.gen_range(0.1..1.4), rng.gen_range(-1.5..1.5));
            if !(mg.hypograph_membership(&a) && mg.hypograph_membership(&b)) {
                continue;
            }
            if !(in_cone(&a) && in_cone(&b)) {
                continue;
            }
            let mid = (a + b).scale(0.5);
            assert!(
                mg.hypograph_membership(&mid),
                "hypograph midpoint escaped at {a:?}, {b:?}"
            );
            pairs += 1;
        }
    }

    #[test]
    fn touching_regularized_l1() {
        let spec = NormSpec::l1(2);
        let norm = regularize(&spec, 0.4).unwrap();
        let p = vec2(1.0, 1.0);
        let rep = touching_check(&norm, &p, 0.4, 2000, 7).unwrap();
        assert!(rep.min_gap >= -1e-8, "min gap {}", rep.min_gap);
        assert!(
            rep.max_ray_deviation <= 1e-8,
            "ray dev {}",
            rep.max_ray_deviation
        );

        // nu = zeta/2: strictly positive margin off the cone
        let rep = touching_check(&norm, &p, 0.2, 2000, 9).unwrap();
        assert!(rep.min_gap >= -1e-8);
        let margin = rep.off_cone_margin.expect("off-cone margin measured");
        assert!(margin > 0.0, "no strictness margin: {margin}");
    }

    #[test]
    fn touching_euclidean() {
        let norm = FinslerNorm::build(&NormSpec::euclidean(), 2).unwrap();
        let rep = touching_check(&norm, &vec2(0.3, -0.9), 1.0, 1000, 13).unwrap();
        assert!(rep.min_gap >= -1e-8, "min gap {}", rep.min_gap);
        assert!(rep.max_ray_deviation <= 1e-8);
    }
}
