//! Fixed-size vectors and matrices for d ≤ 2.
//!
//! Every quantity is stored as a 2-vector or 2×2 matrix. In one dimension only
//! the leading entry is meaningful and the rest stay zero, so products and sums
//! need no special casing. Determinants, inverses and norms take the dimension
//! explicitly.

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const ZERO_V: Vec2 = [0.0; 2];
pub const ZERO_M: Mat2 = [[0.0; 2]; 2];

pub fn identity(dim: usize) -> Mat2 {
    if dim == 1 {
        [[1.0, 0.0], [0.0, 0.0]]
    } else {
        [[1.0, 0.0], [0.0, 1.0]]
    }
}

#[inline]
pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

#[inline]
pub fn mat_vec(a: &Mat2, v: &Vec2) -> Vec2 {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

#[inline]
pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

#[inline]
pub fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

#[inline]
pub fn sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

#[inline]
pub fn scale(a: &Mat2, s: f64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

#[inline]
pub fn outer(u: &Vec2, v: &Vec2) -> Mat2 {
    [[u[0] * v[0], u[0] * v[1]], [u[1] * v[0], u[1] * v[1]]]
}

#[inline]
pub fn sym(a: &Mat2) -> Mat2 {
    let off = 0.5 * (a[0][1] + a[1][0]);
    [[a[0][0], off], [off, a[1][1]]]
}

#[inline]
pub fn det(a: &Mat2, dim: usize) -> f64 {
    if dim == 1 {
        a[0][0]
    } else {
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    }
}

/// Inverse, or `None` when the determinant vanishes or is not finite.
pub fn inverse(a: &Mat2, dim: usize) -> Option<Mat2> {
    let d = det(a, dim);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    if dim == 1 {
        return Some([[1.0 / d, 0.0], [0.0, 0.0]]);
    }
    let r = 1.0 / d;
    Some([[a[1][1] * r, -a[0][1] * r], [-a[1][0] * r, a[0][0] * r]])
}

/// Eigenvalues `(min, max)` of the symmetric part.
pub fn sym_eigs(a: &Mat2, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (a[0][0], a[0][0]);
    }
    let p = a[0][0];
    let r = a[1][1];
    let q = 0.5 * (a[0][1] + a[1][0]);
    let mean = 0.5 * (p + r);
    let rad = (0.5 * (p - r)).hypot(q);
    // The larger-magnitude root is accurate; recover the other from the determinant.
    let big = if mean >= 0.0 { mean + rad } else { mean - rad };
    let small = if big == 0.0 { 0.0 } else { (p * r - q * q) / big };
    if big >= small {
        (small, big)
    } else {
        (big, small)
    }
}

/// Spectral (operator 2-) norm.
pub fn op_norm(a: &Mat2, dim: usize) -> f64 {
    if dim == 1 {
        return a[0][0].abs();
    }
    let ata = mat_mul(&transpose(a), a);
    sym_eigs(&ata, 2).1.max(0.0).sqrt()
}

/// Entrywise max-abs norm.
pub fn max_abs(a: &Mat2) -> f64 {
    a[0][0]
        .abs()
        .max(a[0][1].abs())
        .max(a[1][0].abs())
        .max(a[1][1].abs())
}

pub fn is_finite(a: &Mat2) -> bool {
    a.iter().flatten().all(|v| v.is_finite())
}

#[inline]
fn sinhc(r: f64) -> f64 {
    if r.abs() < 1e-4 {
        1.0 + r * r / 6.0
    } else {
        r.sinh() / r
    }
}

#[inline]
fn sinc(r: f64) -> f64 {
    if r.abs() < 1e-4 {
        1.0 - r * r / 6.0
    } else {
        r.sin() / r
    }
}

/// Matrix exponential in closed form.
pub fn expm(x: &Mat2, dim: usize) -> Mat2 {
    if dim == 1 {
        return [[x[0][0].exp(), 0.0], [0.0, 0.0]];
    }
    let s = 0.5 * (x[0][0] + x[1][1]);
    let n = [[x[0][0] - s, x[0][1]], [x[1][0], x[1][1] - s]];
    let q = n[0][0] * n[0][0] + x[0][1] * x[1][0];
    let (c, k) = if q >= 0.0 {
        let r = q.sqrt();
        (r.cosh(), sinhc(r))
    } else {
        let r = (-q).sqrt();
        (r.cos(), sinc(r))
    };
    let e = s.exp();
    [
        [e * (c + k * n[0][0]), e * k * n[0][1]],
        [e * k * n[1][0], e * (c + k * n[1][1])],
    ]
}
