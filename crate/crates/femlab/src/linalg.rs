//! Small dense helpers for 2x2 SPD matrices and tiny linear solves.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric: a12 = {a12}, a21 = {a21}")]
    NotSymmetric { a12: f64, a21: f64 },
    #[error("matrix is not positive definite: eigenvalues {mu1}, {mu2}")]
    NotPositiveDefinite { mu1: f64, mu2: f64 },
    #[error("singular {n}x{n} system")]
    Singular { n: usize },
}

/// Constant symmetric positive definite 2x2 matrix with cached spectral
/// bounds `mu1 <= mu2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdMatrix2 {
    a11: f64,
    a12: f64,
    a22: f64,
    mu1: f64,
    mu2: f64,
}

impl SpdMatrix2 {
    pub fn new(entries: [[f64; 2]; 2]) -> Result<Self, LinalgError> {
        let [[a11, a12], [a21, a22]] = entries;
        let scale = a11.abs().max(a22.abs()).max(1.0);
        if (a12 - a21).abs() > 1e-14 * scale {
            return Err(LinalgError::NotSymmetric { a12, a21 });
        }
        let mid = 0.5 * (a11 + a22);
        let rad = (0.25 * (a11 - a22) * (a11 - a22) + a12 * a12).sqrt();
        let (mu1, mu2) = (mid - rad, mid + rad);
        if mu1 <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { mu1, mu2 });
        }
        Ok(Self { a11, a12, a22, mu1, mu2 })
    }

    pub fn identity() -> Self {
        Self { a11: 1.0, a12: 0.0, a22: 1.0, mu1: 1.0, mu2: 1.0 }
    }

    pub fn is_identity(&self) -> bool {
        (self.a11 - 1.0).abs() <= 1e-14
            && self.a12.abs() <= 1e-14
            && (self.a22 - 1.0).abs() <= 1e-14
    }

    /// Smallest eigenvalue.
    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    /// Largest eigenvalue.
    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a12 * v[0] + self.a22 * v[1]]
    }

    pub fn inv_apply(&self, v: [f64; 2]) -> [f64; 2] {
        let det = self.a11 * self.a22 - self.a12 * self.a12;
        [
            (self.a22 * v[0] - self.a12 * v[1]) / det,
            (-self.a12 * v[0] + self.a11 * v[1]) / det,
        ]
    }

    /// `v . (A w)`.
    pub fn bilinear(&self, v: [f64; 2], w: [f64; 2]) -> f64 {
        dot(v, self.apply(w))
    }

    /// `v . (A^{-1} v)`, the weighting used for flux norms.
    pub fn inv_quadratic(&self, v: [f64; 2]) -> f64 {
        dot(v, self.inv_apply(v))
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }
}

pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn scale(s: f64, a: [f64; 2]) -> [f64; 2] {
    [s * a[0], s * a[1]]
}

pub fn norm(a: [f64; 2]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves a 2x2 system by Cramer's rule.
pub fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Result<[f64; 2], LinalgError> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 {
        return Err(LinalgError::Singular { n: 2 });
    }
    Ok([
        (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det,
    ])
}

/// Solves a 3x3 system by Gaussian elimination with partial pivoting.
pub fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Result<[f64; 3], LinalgError> {
    let mut a = m;
    let mut b = rhs;
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(LinalgError::Singular { n: 3 });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let fact = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= fact * a[col][k];
            }
            b[row] -= fact * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spd_eigenvalues_of_diagonal_matrix() {
        let a = SpdMatrix2::new([[2.0, 0.0], [0.0, 5.0]]).unwrap();
        assert_relative_eq!(a.mu1(), 2.0);
        assert_relative_eq!(a.mu2(), 5.0);
    }

    #[test]
    fn spd_rejects_asymmetric_and_indefinite() {
        assert!(SpdMatrix2::new([[1.0, 0.5], [0.2, 1.0]]).is_err());
        assert!(SpdMatrix2::new([[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn inverse_application_round_trips() {
        let a = SpdMatrix2::new([[3.0, 1.0], [1.0, 2.0]]).unwrap();
        let v = [0.7, -1.3];
        let w = a.inv_apply(a.apply(v));
        assert_relative_eq!(w[0], v[0], max_relative = 1e-14);
        assert_relative_eq!(w[1], v[1], max_relative = 1e-14);
    }

    #[test]
    fn solve3_matches_hand_solution() {
        let m = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        let x = solve3(m, [4.0, 4.0, 4.0]).unwrap();
        for xi in x {
            assert_relative_eq!(xi, 1.0, max_relative = 1e-14);
        }
    }
}
