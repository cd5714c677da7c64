//! Small fixed-capacity vectors and symmetric quadratic forms.
//!
//! Everything in this crate works in dimension 2 or 3 (polytope face
//! machinery) or up to [`MAX_DIM`] for smooth norms, so vectors are stored
//! inline and are `Copy`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Hard cap on the ambient dimension.
pub const MAX_DIM: usize = 8;

/// A point or direction in `R^d`, `d <= MAX_DIM`.
#[derive(Copy, Clone, PartialEq)]
pub struct Vector {
    len: usize,
    data: [f64; MAX_DIM],
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice().iter()).finish()
    }
}

impl Vector {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            coords.len() >= 1 && coords.len() <= MAX_DIM,
            "vector dimension {} out of range 1..={}",
            coords.len(),
            MAX_DIM
        );
        let mut data = [0.0; MAX_DIM];
        data[..coords.len()].copy_from_slice(coords);
        Vector {
            len: coords.len(),
            data,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Vector::new(&vec![0.0; dim])
    }

    /// Standard basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Vector::zeros(dim);
        v[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.len
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.len]
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len, other.len);
        let mut s = 0.0;
        for i in 0..self.len {
            s += self.data[i] * other.data[i];
        }
        s
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist2(&self, other: &Vector) -> f64 {
        (*self - *other).norm2()
    }

    pub fn scale(&self, a: f64) -> Vector {
        let mut v = *self;
        for i in 0..self.len {
            v.data[i] *= a;
        }
        v
    }

    /// Unit vector in the same direction; `None` for (near-)zero input.
    pub fn normalized(&self) -> Option<Vector> {
        let n = self.norm2();
        if n <= 0.0 || !n.is_finite() {
            None
        } else {
            Some(self.scale(1.0 / n))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_slice().iter().all(|&c| c == 0.0)
    }

    /// 2D cross product `z`-component; panics unless `dim == 2`.
    pub fn cross2(&self, other: &Vector) -> f64 {
        assert_eq!(self.len, 2);
        self.data[0] * other.data[1] - self.data[1] * other.data[0]
    }

    /// 3D cross product; panics unless `dim == 3`.
    pub fn cross3(&self, other: &Vector) -> Vector {
        assert_eq!(self.len, 3);
        Vector::new(&[
            self.data[1] * other.data[2] - self.data[2] * other.data[1],
            self.data[2] * other.data[0] - self.data[0] * other.data[2],
            self.data[0] * other.data[1] - self.data[1] * other.data[0],
        ])
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[..self.len][i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[..self.len][i]
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(self, rhs: Vector) -> Vector {
        debug_assert_eq!(self.len, rhs.len);
        let mut v = self;
        for i in 0..self.len {
            v.data[i] += rhs.data[i];
        }
        v
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(self, rhs: Vector) -> Vector {
        debug_assert_eq!(self.len, rhs.len);
        let mut v = self;
        for i in 0..self.len {
            v.data[i] -= rhs.data[i];
        }
        v
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(self, rhs: f64) -> Vector {
        self.scale(rhs)
    }
}

/// Convenience constructor for 2D points.
pub fn vec2(x: f64, y: f64) -> Vector {
    Vector::new(&[x, y])
}

/// Convenience constructor for 3D points.
pub fn vec3(x: f64, y: f64, z: f64) -> Vector {
    Vector::new(&[x, y, z])
}

/// A symmetric `d x d` matrix with its quadratic form `Q_X(v) = <Xv, v>`.
///
/// The constructor symmetrizes, so `X = X^T` holds exactly.
#[derive(Copy, Clone, PartialEq)]
pub struct SymQuadratic {
    dim: usize,
    entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl fmt::Debug for SymQuadratic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| self.entries[i][..self.dim].to_vec())
            .collect();
        f.debug_tuple("SymQuadratic").field(&rows).finish()
    }
}

impl SymQuadratic {
    /// Builds from a row-major matrix, symmetrizing via `(X + X^T)/2`.
    pub fn new(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        assert!(dim >= 1 && dim <= MAX_DIM);
        let mut entries = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), dim, "matrix must be square");
            for (j, &v) in r.iter().enumerate() {
                entries[i][j] = v;
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let s = 0.5 * (entries[i][j] + entries[j][i]);
                entries[i][j] = s;
                entries[j][i] = s;
            }
        }
        SymQuadratic { dim, entries }
    }

    pub fn diag(d: &[f64]) -> Self {
        let dim = d.len();
        let mut rows = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            rows[i][i] = d[i];
        }
        SymQuadratic::new(&rows)
    }

    pub fn zeros(dim: usize) -> Self {
        SymQuadratic::diag(&vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.dim && j < self.dim);
        self.entries[i][j]
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        debug_assert_eq!(v.dim(), self.dim);
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            let mut s = 0.0;
            for j in 0..self.dim {
                s += self.entries[i][j] * v[j];
            }
            out[i] = s;
        }
        out
    }

    /// The quadratic form `<Xv, v>`.
    pub fn quad(&self, v: &Vector) -> f64 {
        self.apply(v).dot(v)
    }

    pub fn add(&self, other: &SymQuadratic) -> SymQuadratic {
        assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.entries[i][j] += other.entries[i][j];
            }
        }
        out
    }
}

/// Dense square matrix helpers: tiny Gauss-Jordan inverse, used for the
/// linear maps attached to p-norms.
pub fn invert_matrix(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            assert_eq!(row.len(), n, "matrix must be square");
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        let sub = f * m[col][j];
                        m[row][j] -= sub;
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Solves a 2x2 system `[[a,b],[c,d]] x = rhs`; `None` when singular.
pub fn solve2(a: f64, b: f64, c: f64, d: f64, r0: f64, r1: f64) -> Option<(f64, f64)> {
    let det = a * d - b * c;
    if det.abs() < 1e-14 * (a.abs() + b.abs() + c.abs() + d.abs()).max(1.0) {
        return None;
    }
    Some(((r0 * d - r1 * b) / det, (a * r1 - c * r0) / det))
}

/// Solves a 3x3 system by Cramer's rule; `None` when singular.
pub fn solve3(rows: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: [[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(rows);
    let scale: f64 = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
        .max(1.0);
    if d.abs() < 1e-13 * scale * scale * scale {
        return None;
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut m = rows;
        for i in 0..3 {
            m[i][k] = rhs[i];
        }
        out[k] = det3(m) / d;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vector_ops() {
        let a = vec2(1.0, 2.0);
        let b = vec2(3.0, -1.0);
        assert_eq!((a + b).as_slice(), &[4.0, 1.0]);
        assert_eq!((a - b).as_slice(), &[-2.0, 3.0]);
        assert_relative_eq!(a.dot(&b), 1.0);
        assert_relative_eq!(a.cross2(&b), -7.0);
        assert_relative_eq!(vec3(1.0, 0.0, 0.0).cross3(&vec3(0.0, 1.0, 0.0))[2], 1.0);
    }

    #[test]
    fn quadratic_symmetrizes() {
        let x = SymQuadratic::new(&[vec![1.0, 4.0], vec![0.0, 2.0]]);
        assert_eq!(x.get(0, 1), 2.0);
        assert_eq!(x.get(1, 0), 2.0);
        assert_relative_eq!(x.quad(&vec2(1.0, 1.0)), 1.0 + 2.0 + 2.0 * 2.0);
    }

    #[test]
    fn small_solvers() {
        let (x, y) = solve2(2.0, 1.0, 1.0, 3.0, 5.0, 10.0).unwrap();
        assert_relative_eq!(2.0 * x + y, 5.0, epsilon = 1e-12);
        assert_relative_eq!(x + 3.0 * y, 10.0, epsilon = 1e-12);

        let s = solve3([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 4.0]], [1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(s[2], 0.25);

        let inv = invert_matrix(&[vec![2.0, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_relative_eq!(inv[0][0], 0.5);
        assert_relative_eq!(inv[1][1], 2.0);
    }
}
