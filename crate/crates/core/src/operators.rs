//! Upper and lower envelopes of the Finsler infinity Laplacian and their
//! shifted variants: exact extremization of quadratic forms over
//! subdifferential faces.

use crate::error::{Error, Result};
use crate::geom::{solve2, SymQuadratic, Vector};
use crate::norm::{golden_argmax, sphere_directions, Face, FinslerNorm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    /// `G*`: maximum of the quadratic form over the face.
    Upper,
    /// `G_*`: minimum.
    Lower,
}

impl EnvelopeKind {
    fn extremum(self) -> Extremum {
        match self {
            EnvelopeKind::Upper => Extremum::Max,
            EnvelopeKind::Lower => Extremum::Min,
        }
    }
}

/// Result of an envelope evaluation: the extremal value, the point of the
/// face where it is attained, and the face itself.
#[derive(Debug, Clone)]
pub struct OperatorResult {
    pub value: f64,
    /// The extremizing `q` on the face (before shifting).
    pub argpoint: Vector,
    pub face: Face,
    /// Set when evaluating the upper envelope at `p = 0` and the boundary
    /// maximum is negative, i.e. the interior point `q = 0` of the ball
    /// would beat every boundary face. The boundary convention is reported.
    pub origin_flagged: bool,
}

/// Exact extremum of `Q_X(q - shift)` for `q` in a face of dimension <= 2.
///
/// Dimension 0 evaluates the vertex; dimension 1 solves the 1D quadratic on
/// the segment in closed form; dimension 2 checks the interior stationary
/// point of the restricted quadratic plus all edges and vertices.
pub fn extremize_quadratic_over_face(
    x_form: &SymQuadratic,
    face: &Face,
    shift: &Vector,
    mode: Extremum,
) -> Result<OperatorResult> {
    if face.affine_dim > 2 {
        return Err(Error::UnsupportedDimension {
            what: "quadratic extremization over faces",
            dim: face.affine_dim,
        });
    }
    let better = |a: f64, b: f64| match mode {
        Extremum::Max => a > b,
        Extremum::Min => a < b,
    };
    let eval = |q: &Vector| x_form.quad(&(*q - *shift));
    let mut best_q = face.vertices[0];
    let mut best = eval(&best_q);
    let consider = |q: Vector, best: &mut f64, best_q: &mut Vector| {
        let v = eval(&q);
        if better(v, *best) {
            *best = v;
            *best_q = q;
        }
    };

    // Vertices.
    for v in &face.vertices {
        consider(*v, &mut best, &mut best_q);
    }

    // Edge interiors: stationary point of the 1D restriction.
    let edge_stationary = |a: &Vector, b: &Vector, best: &mut f64, best_q: &mut Vector| {
        let d = *b - *a;
        let alpha = x_form.quad(&d);
        let beta = x_form.apply(&(*a - *shift)).dot(&d);
        if alpha.abs() > 0.0 {
            let t = -beta / alpha;
            if t > 0.0 && t < 1.0 {
                consider(*a + d.scale(t), best, best_q);
            }
        }
    };
    match face.affine_dim {
        0 => {}
        1 => {
            edge_stationary(&face.vertices[0], &face.vertices[1], &mut best, &mut best_q);
        }
        _ => {
            let n = face.vertices.len();
            for i in 0..n {
                edge_stationary(
                    &face.vertices[i],
                    &face.vertices[(i + 1) % n],
                    &mut best,
                    &mut best_q,
                );
            }
            // Interior stationary point of the plane-restricted quadratic.
            let origin = face.vertices[0];
            let u1 = (face.vertices[1] - origin).normalized().unwrap();
            let mut u2 = face.vertices[2] - origin;
            u2 = u2 - u1.scale(u2.dot(&u1));
            if let Some(u2) = u2.normalized() {
                let a11 = x_form.quad(&u1);
                let a22 = x_form.quad(&u2);
                let a12 = x_form.apply(&u1).dot(&u2);
                let r = origin - *shift;
                let b1 = x_form.apply(&r).dot(&u1);
                let b2 = x_form.apply(&r).dot(&u2);
                if let Some((s, t)) = solve2(a11, a12, a12, a22, -b1, -b2) {
                    let q = origin + u1.scale(s) + u2.scale(t);
                    if face.contains(&q, 1e-9) {
                        consider(q, &mut best, &mut best_q);
                    }
                }
            }
        }
    }
    Ok(OperatorResult {
        value: best,
        argpoint: best_q,
        face: face.clone(),
        origin_flagged: false,
    })
}

/// The (shifted) infinity-Laplacian envelope.
///
/// For `p != 0` this extremizes `Q_X(q - alpha p/|p|)` over the face
/// `d(phi*)(p)`; `alpha = 0` gives the plain envelopes. At `p = 0` the
/// envelopes are realized as extremization over the whole unit sphere of
/// the norm (the union of all faces), matching the limsup/liminf closure.
pub fn infinity_operator(
    norm: &FinslerNorm,
    kind: EnvelopeKind,
    alpha: f64,
    p: &Vector,
    x_form: &SymQuadratic,
) -> Result<OperatorResult> {
    if p.norm2() > 0.0 {
        let face = norm.face(p)?;
        let shift = p.normalized().unwrap().scale(alpha);
        return extremize_quadratic_over_face(x_form, &face, &shift, kind.extremum());
    }
    envelope_at_zero(norm, kind, alpha, x_form)
}

fn envelope_at_zero(
    norm: &FinslerNorm,
    kind: EnvelopeKind,
    alpha: f64,
    x_form: &SymQuadratic,
) -> Result<OperatorResult> {
    let mode = kind.extremum();
    let sgn = match mode {
        Extremum::Max => 1.0,
        Extremum::Min => -1.0,
    };
    let mut best: Option<OperatorResult> = None;
    let consider = |r: OperatorResult, best: &mut Option<OperatorResult>| {
        if best.as_ref().map_or(true, |b| sgn * r.value > sgn * b.value) {
            *best = Some(r);
        }
    };

    if let Some(ball) = norm.polytope() {
        if alpha == 0.0 {
            // The union of all faces is exactly the boundary; facets cover it.
            let shift = Vector::zeros(norm.dim());
            for f in ball.all_facets() {
                let r = extremize_quadratic_over_face(x_form, &f, &shift, mode)?;
                consider(r, &mut best);
            }
            let mut out = best.expect("polytope has facets");
            if kind == EnvelopeKind::Upper && out.value < 0.0 {
                out.origin_flagged = true;
            }
            return Ok(out);
        }
        // alpha != 0: the shift direction varies with the face normal.
        // Facet normals first (each with its exact face), then the vertex
        // normal cones via a dense direction sweep.
        for (row, f) in ball.rows.iter().zip(ball.all_facets().into_iter()) {
            let e = row.normalized().unwrap();
            let r = extremize_quadratic_over_face(x_form, &f, &e.scale(alpha), mode)?;
            consider(r, &mut best);
        }
    }

    // Dense direction sweep (covers smooth boundaries, vertex cones, and
    // the alpha-shifted polytope case), followed by golden refinement.
    let dim = norm.dim();
    let n = if dim == 2 { 4096 } else { 8192 };
    let mut best_dir: Option<Vector> = None;
    let mut best_sweep = f64::NEG_INFINITY;
    for u in sphere_directions(dim, n) {
        let face = norm.face(&u)?;
        let r = extremize_quadratic_over_face(x_form, &face, &u.scale(alpha), mode)?;
        if sgn * r.value > best_sweep {
            best_sweep = sgn * r.value;
            best_dir = Some(u);
        }
        consider(r, &mut best);
    }
    if dim == 2 {
        if let Some(u) = best_dir {
            let t0 = u[1].atan2(u[0]);
            let w = 2.0 * std::f64::consts::PI / n as f64;
            let g = |t: f64| {
                let dir = crate::geom::vec2(t.cos(), t.sin());
                let face = norm.face(&dir).expect("face in sweep");
                let r =
                    extremize_quadratic_over_face(x_form, &face, &dir.scale(alpha), mode).unwrap();
                sgn * r.value
            };
            let (t, _) = golden_argmax(g, t0 - w, t0 + w, 1e-12);
            let dir = crate::geom::vec2(t.cos(), t.sin());
            let face = norm.face(&dir)?;
            let r = extremize_quadratic_over_face(x_form, &face, &dir.scale(alpha), mode)?;
            consider(r, &mut best);
        }
    }
    let mut out = best.ok_or_else(|| Error::Domain("empty boundary sweep".into()))?;
    if kind == EnvelopeKind::Upper && alpha == 0.0 && out.value < 0.0 {
        out.origin_flagged = true;
    }
    Ok(out)
}

/// Convenience wrapper: both envelopes at once.
pub fn envelope_pair(
    norm: &FinslerNorm,
    alpha: f64,
    p: &Vector,
    x_form: &SymQuadratic,
) -> Result<(f64, f64)> {
    let hi = infinity_operator(norm, EnvelopeKind::Upper, alpha, p, x_form)?;
    let lo = infinity_operator(norm, EnvelopeKind::Lower, alpha, p, x_form)?;
    Ok((hi.value, lo.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec2;
    use crate::norm::NormSpec;
    use crate::regularize::regularize;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn l1() -> FinslerNorm {
        FinslerNorm::build(&NormSpec::l1(2), 2).unwrap()
    }

    fn linf() -> FinslerNorm {
        FinslerNorm::build(&NormSpec::linf(2), 2).unwrap()
    }

    fn segment_face(a: Vector, b: Vector, normal: Vector) -> Face {
        Face {
            vertices: vec![a, b],
            affine_dim: 1,
            normal,
        }
    }

    #[test]
    fn segment_extremes() {
        // X = diag(0,1), face {(1,t) : t in [-1,1]}
        let x = SymQuadratic::diag(&[0.0, 1.0]);
        let f = segment_face(vec2(1.0, -1.0), vec2(1.0, 1.0), vec2(1.0, 0.0));
        let zero = Vector::zeros(2);
        let hi = extremize_quadratic_over_face(&x, &f, &zero, Extremum::Max).unwrap();
        assert_relative_eq!(hi.value, 1.0, epsilon = 1e-12);
        let lo = extremize_quadratic_over_face(&x, &f, &zero, Extremum::Min).unwrap();
        assert_relative_eq!(lo.value, 0.0, epsilon = 1e-12);
        assert!(lo.argpoint.dist2(&vec2(1.0, 0.0)) <= 1e-9);

        // X = diag(2,0), face conv{(1,0),(0,1)}
        let x = SymQuadratic::diag(&[2.0, 0.0]);
        let f = segment_face(vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(1.0, 1.0).normalized().unwrap());
        let hi = extremize_quadratic_over_face(&x, &f, &zero, Extremum::Max).unwrap();
        assert_relative_eq!(hi.value, 2.0, epsilon = 1e-12);
        assert!(hi.argpoint.dist2(&vec2(1.0, 0.0)) <= 1e-9);
        let lo = extremize_quadratic_over_face(&x, &f, &zero, Extremum::Min).unwrap();
        assert_relative_eq!(lo.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shifted_segment_matches_dense_sampling() {
        let x = SymQuadratic::diag(&[2.0, 0.0]);
        let f = segment_face(vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(1.0, 1.0).normalized().unwrap());
        let s = vec2(1.0, 1.0).normalized().unwrap().scale(0.5);
        let hi = extremize_quadratic_over_face(&x, &f, &s, Extremum::Max).unwrap();
        let lo = extremize_quadratic_over_face(&x, &f, &s, Extremum::Min).unwrap();
        assert_relative_eq!(hi.value, 2.0 * (1.0 - 0.5 / 2.0_f64.sqrt()).powi(2), epsilon = 1e-9);
        assert!((hi.value - 0.835786).abs() < 1e-6);
        assert_relative_eq!(lo.value, 0.0, epsilon = 1e-12);
        // dense-sampling oracle over the segment parameter
        let mut smax = f64::NEG_INFINITY;
        let mut smin = f64::INFINITY;
        for k in 0..=200_000 {
            let t = k as f64 / 200_000.0;
            let q = vec2(1.0 - t, t);
            let v = x.quad(&(q - s));
            smax = smax.max(v);
            smin = smin.min(v);
        }
        assert_relative_eq!(hi.value, smax, epsilon = 1e-9);
        assert!(lo.value <= smin + 1e-9);
    }

    #[test]
    fn operator_examples() {
        // linf, alpha=0, p=(1,0), X=diag(0,1): upper 1, lower 0
        let x = SymQuadratic::diag(&[0.0, 1.0]);
        let (hi, lo) = envelope_pair(&linf(), 0.0, &vec2(1.0, 0.0), &x).unwrap();
        assert_relative_eq!(hi, 1.0, epsilon = 1e-12);
        assert_relative_eq!(lo, 0.0, epsilon = 1e-12);

        // l1 singleton face at p=(1,0): upper = lower = X11
        let x = SymQuadratic::new(&[vec![3.0, 1.0], vec![1.0, -2.0]]);
        let (hi, lo) = envelope_pair(&l1(), 0.0, &vec2(1.0, 0.0), &x).unwrap();
        assert_relative_eq!(hi, 3.0, epsilon = 1e-12);
        assert_relative_eq!(lo, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_gradient_envelope() {
        // linf, p=0, X=diag(1,-1): extremize over the square boundary
        let x = SymQuadratic::diag(&[1.0, -1.0]);
        let zero = Vector::zeros(2);
        let hi = infinity_operator(&linf(), EnvelopeKind::Upper, 0.0, &zero, &x).unwrap();
        let lo = infinity_operator(&linf(), EnvelopeKind::Lower, 0.0, &zero, &x).unwrap();
        assert_relative_eq!(hi.value, 1.0, epsilon = 1e-9);
        assert_relative_eq!(lo.value, -1.0, epsilon = 1e-9);
        assert!(!hi.origin_flagged);
        // dense boundary oracle
        let mut omax = f64::NEG_INFINITY;
        let mut omin = f64::INFINITY;
        for u in sphere_directions(2, 100_000) {
            let b = u.scale(1.0 / linf().eval(&u));
            let v = x.quad(&b);
            omax = omax.max(v);
            omin = omin.min(v);
        }
        assert_relative_eq!(hi.value, omax, epsilon = 1e-6);
        assert_relative_eq!(lo.value, omin, epsilon = 1e-6);

        // negative definite X at p=0 flags the origin convention
        let x = SymQuadratic::diag(&[-1.0, -2.0]);
        let hi = infinity_operator(&linf(), EnvelopeKind::Upper, 0.0, &zero, &x).unwrap();
        assert!(hi.value < 0.0);
        assert!(hi.origin_flagged);
    }

    #[test]
    fn envelope_order_and_ellipticity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let norms = [l1(), linf()];
        for _ in 0..200 {
            let p = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if p.norm2() < 1e-3 {
                continue;
            }
            let x = SymQuadratic::new(&[
                vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                vec![0.0, rng.gen_range(-2.0..2.0)],
            ]);
            // PSD bump for the ellipticity check
            let a = rng.gen_range(0.0..1.5);
            let b = rng.gen_range(-1.0..1.0);
            let bump = SymQuadratic::new(&[
                vec![a * a + 1e-3, a * b],
                vec![a * b, b * b + 1e-3],
            ]);
            let y = x.add(&bump);
            for nrm in &norms {
                let (hi, lo) = envelope_pair(nrm, 0.0, &p, &x).unwrap();
                assert!(lo <= hi + 1e-12);
                let (hi2, lo2) = envelope_pair(nrm, 0.0, &p, &y).unwrap();
                assert!(hi <= hi2 + 1e-12, "upper ellipticity");
                assert!(lo <= lo2 + 1e-12, "lower ellipticity");
            }
        }
    }

    #[test]
    fn zero_homogeneity_in_p() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let nrm = l1();
        for _ in 0..100 {
            let p = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if p.norm2() < 1e-3 {
                continue;
            }
            let x = SymQuadratic::new(&[
                vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                vec![0.0, rng.gen_range(-2.0..2.0)],
            ]);
            let (hi, lo) = envelope_pair(&nrm, 0.0, &p, &x).unwrap();
            for lambda in [0.5, 2.0, 10.0] {
                let (hi2, lo2) = envelope_pair(&nrm, 0.0, &p.scale(lambda), &x).unwrap();
                assert_relative_eq!(hi, hi2, epsilon = 1e-10);
                assert_relative_eq!(lo, lo2, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn smooth_norms_have_continuous_operator() {
        let e = FinslerNorm::build(&NormSpec::euclidean(), 2).unwrap();
        let p4 = FinslerNorm::build(&NormSpec::PNorm { p: 4.0, map: None }, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let p = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if p.norm2() < 1e-3 {
                continue;
            }
            let x = SymQuadratic::new(&[
                vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                vec![0.0, rng.gen_range(-2.0..2.0)],
            ]);
            for nrm in [&e, &p4] {
                let (hi, lo) = envelope_pair(nrm, 0.0, &p, &x).unwrap();
                assert_relative_eq!(hi, lo, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn key_transformation_identity() {
        // G*_phi(p, X) == shifted operator of phi_zeta at alpha = zeta
        let bases = [NormSpec::l1(2), NormSpec::linf(2)];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for base in &bases {
            let plain = FinslerNorm::build(base, 2).unwrap();
            for zeta in [0.1, 0.3] {
                let reg = regularize(base, zeta).unwrap();
                for _ in 0..50 {
                    let p = vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    if p.norm2() < 1e-3 {
                        continue;
                    }
                    let x = SymQuadratic::new(&[
                        vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                        vec![0.0, rng.gen_range(-2.0..2.0)],
                    ]);
                    let (hi, lo) = envelope_pair(&plain, 0.0, &p, &x).unwrap();
                    let (hi_s, lo_s) = envelope_pair(&reg, zeta, &p, &x).unwrap();
                    assert_relative_eq!(hi, hi_s, epsilon = 1e-9);
                    assert_relative_eq!(lo, lo_s, epsilon = 1e-9);
                }
            }
        }
    }
}
