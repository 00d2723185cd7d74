//! Quadrature on reference triangles and edges.
//!
//! Triangle rules are conical products of a Gauss-Legendre rule with a
//! Gauss-Jacobi rule for the weight `(1 - x)` on `[0, 1]`; both factors are
//! computed from their exact three-term recurrences, so every rule has
//! strictly positive weights and is exact to machine precision up to its
//! declared degree. Reference weights sum to the triangle area `1/2`
//! (edge rules sum to `1`), and physical integrals scale by `2 * area`
//! (edge length).

use crate::mesh::Mesh;
use thiserror::Error;

/// Largest supported polynomial degree for triangle rules.
pub const MAX_TRIANGLE_DEGREE: u32 = 6;
/// Largest supported polynomial degree for edge rules.
pub const MAX_EDGE_DEGREE: u32 = 5;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("unsupported triangle rule degree {requested}, supported range is 1..={max}")]
    UnsupportedTriangleDegree { requested: u32, max: u32 },
    #[error("unsupported edge rule degree {requested}, supported range is 1..={max}")]
    UnsupportedEdgeDegree { requested: u32, max: u32 },
}

/// Quadrature rule on the reference triangle, nodes in barycentric form.
#[derive(Debug, Clone)]
pub struct QuadRule {
    degree: u32,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

/// Quadrature rule on the reference edge, nodes in barycentric form.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    degree: u32,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl QuadRule {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl EdgeRule {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Monic three-term recurrence `p_{k+1} = (x - a_k) p_k - b_k p_{k-1}`
/// together with the total mass of the weight on `[0, 1]`.
struct Recurrence {
    a: Vec<f64>,
    b: Vec<f64>,
    mass: f64,
}

impl Recurrence {
    /// Legendre weight `1` on `[0, 1]`.
    fn legendre(n: usize) -> Self {
        let a = vec![0.5; n];
        let b = (0..n)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    let kf = k as f64;
                    kf * kf / (4.0 * (4.0 * kf * kf - 1.0))
                }
            })
            .collect();
        Self { a, b, mass: 1.0 }
    }

    /// Jacobi weight `(1 - x)` on `[0, 1]`.
    fn jacobi_one_zero(n: usize) -> Self {
        let a = (0..n)
            .map(|k| {
                let alpha = if k == 0 {
                    -1.0 / 3.0
                } else {
                    let kf = k as f64;
                    -1.0 / ((2.0 * kf + 1.0) * (2.0 * kf + 3.0))
                };
                0.5 * (1.0 + alpha)
            })
            .collect();
        let b = (0..n)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    let kf = k as f64;
                    let beta = kf * (kf + 1.0) / ((2.0 * kf + 1.0) * (2.0 * kf + 1.0));
                    0.25 * beta
                }
            })
            .collect();
        Self { a, b, mass: 0.5 }
    }

    /// Value of the monic orthogonal polynomial of degree `deg` at `x`.
    fn eval(&self, deg: usize, x: f64) -> f64 {
        let mut prev = 0.0;
        let mut cur = 1.0;
        for k in 0..deg {
            let next = (x - self.a[k]) * cur - self.b[k] * prev;
            prev = cur;
            cur = next;
        }
        cur
    }
}

/// Gauss nodes and weights for the measure described by `rec`.
///
/// Roots are found by bisection on the interlacing intervals of the lower
/// degree polynomial; weights come from the Christoffel formula
/// `w_i = 1 / sum_k q_k(x_i)^2` with orthonormal `q_k`.
fn gauss_rule(rec: &Recurrence, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut roots: Vec<f64> = Vec::new();
    for deg in 1..=n {
        let mut brackets = Vec::with_capacity(deg + 1);
        brackets.push(0.0);
        brackets.extend_from_slice(&roots);
        brackets.push(1.0);
        let mut next = Vec::with_capacity(deg);
        for pair in brackets.windows(2) {
            next.push(bisect_root(rec, deg, pair[0], pair[1]));
        }
        roots = next;
    }

    let mut norms_sq = Vec::with_capacity(n);
    let mut acc = rec.mass;
    norms_sq.push(acc);
    for k in 1..n {
        acc *= rec.b[k];
        norms_sq.push(acc);
    }

    let weights = roots
        .iter()
        .map(|&x| {
            let mut s = 0.0;
            for (k, nsq) in norms_sq.iter().enumerate() {
                let q = rec.eval(k, x);
                s += q * q / nsq;
            }
            1.0 / s
        })
        .collect();
    (roots, weights)
}

fn bisect_root(rec: &Recurrence, deg: usize, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = rec.eval(deg, lo);
    debug_assert!(flo * rec.eval(deg, hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fmid = rec.eval(deg, mid);
        if fmid == 0.0 {
            return mid;
        }
        if flo * fmid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    0.5 * (lo + hi)
}

/// Positive-weight rule on the reference triangle, exact for polynomials
/// of total degree up to `degree`.
pub fn triangle_rule(degree: u32) -> Result<QuadRule, QuadratureError> {
    if degree == 0 || degree > MAX_TRIANGLE_DEGREE {
        return Err(QuadratureError::UnsupportedTriangleDegree {
            requested: degree,
            max: MAX_TRIANGLE_DEGREE,
        });
    }
    let n = (degree as usize + 2) / 2;
    let (xi, wxi) = gauss_rule(&Recurrence::legendre(n), n);
    let (eta, weta) = gauss_rule(&Recurrence::jacobi_one_zero(n), n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (j, &e) in eta.iter().enumerate() {
        for (i, &x) in xi.iter().enumerate() {
            let px = x * (1.0 - e);
            let py = e;
            points.push([1.0 - px - py, px, py]);
            weights.push(wxi[i] * weta[j]);
        }
    }
    Ok(QuadRule { degree, points, weights })
}

/// Gauss rule on the reference edge, exact for polynomials up to `degree`.
pub fn edge_rule(degree: u32) -> Result<EdgeRule, QuadratureError> {
    if degree == 0 || degree > MAX_EDGE_DEGREE {
        return Err(QuadratureError::UnsupportedEdgeDegree {
            requested: degree,
            max: MAX_EDGE_DEGREE,
        });
    }
    let n = (degree as usize + 2) / 2;
    let (t, w) = gauss_rule(&Recurrence::legendre(n), n);
    let points = t.iter().map(|&ti| [1.0 - ti, ti]).collect();
    Ok(EdgeRule { degree, points, weights: w })
}

/// Integrates `f` over element `r`, passing physical coordinates.
pub fn integrate_on_element<F>(mesh: &Mesh, r: usize, rule: &QuadRule, mut f: F) -> f64
where
    F: FnMut([f64; 2]) -> f64,
{
    integrate_on_element_bary(mesh, r, rule, |p, _| f(p))
}

/// Integrates `f` over element `r`, passing physical coordinates and the
/// barycentric coordinates of the quadrature node.
pub fn integrate_on_element_bary<F>(mesh: &Mesh, r: usize, rule: &QuadRule, mut f: F) -> f64
where
    F: FnMut([f64; 2], [f64; 3]) -> f64,
{
    let [v0, v1, v2] = mesh.triangle_vertices(r);
    let jac = 2.0 * mesh.area(r);
    let mut acc = 0.0;
    for (bary, w) in rule.points().iter().zip(rule.weights()) {
        let p = [
            bary[0] * v0[0] + bary[1] * v1[0] + bary[2] * v2[0],
            bary[0] * v0[1] + bary[1] * v1[1] + bary[2] * v2[1],
        ];
        acc += w * f(p, *bary);
    }
    jac * acc
}

/// Integrates `f` over the whole mesh.
pub fn integrate<F>(mesh: &Mesh, rule: &QuadRule, mut f: F) -> f64
where
    F: FnMut([f64; 2]) -> f64,
{
    (0..mesh.num_triangles())
        .map(|r| integrate_on_element(mesh, r, rule, &mut f))
        .sum()
}

/// Integrates `f` along the segment from `p0` to `p1`.
pub fn integrate_on_edge<F>(p0: [f64; 2], p1: [f64; 2], rule: &EdgeRule, mut f: F) -> f64
where
    F: FnMut([f64; 2]) -> f64,
{
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
    let mut acc = 0.0;
    for (bary, w) in rule.points().iter().zip(rule.weights()) {
        let p = [
            bary[0] * p0[0] + bary[1] * p1[0],
            bary[0] * p0[1] + bary[1] * p1[1],
        ];
        acc += w * f(p);
    }
    len * acc
}

/// Exact reference-triangle moment `int x^a y^b` with factorials,
/// `a! b! / (a + b + 2)!`.
pub fn reference_moment(a: u32, b: u32) -> f64 {
    let mut value = 1.0;
    // a! b! / (a+b+2)! computed as a product of ratios to stay exact in f64
    // for the small exponents used here.
    let mut denom = 1.0;
    for k in 1..=(a + b + 2) {
        denom *= k as f64;
    }
    for k in 1..=a {
        value *= k as f64;
    }
    for k in 1..=b {
        value *= k as f64;
    }
    value / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::mesh::Mesh;

    #[test]
    fn triangle_weights_are_positive_and_sum_to_half() {
        for degree in 1..=MAX_TRIANGLE_DEGREE {
            let rule = triangle_rule(degree).unwrap();
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            let total: f64 = rule.weights().iter().sum();
            assert_relative_eq!(total, 0.5, max_relative = 1e-14);
        }
    }

    #[test]
    fn edge_weights_are_positive_and_sum_to_one() {
        for degree in 1..=MAX_EDGE_DEGREE {
            let rule = edge_rule(degree).unwrap();
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            let total: f64 = rule.weights().iter().sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn triangle_rules_integrate_reference_monomials_exactly() {
        for degree in 1..=MAX_TRIANGLE_DEGREE {
            let rule = triangle_rule(degree).unwrap();
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let approx: f64 = rule
                        .points()
                        .iter()
                        .zip(rule.weights())
                        .map(|(bary, w)| w * bary[1].powi(a as i32) * bary[2].powi(b as i32))
                        .sum();
                    let exact = reference_moment(a, b);
                    assert_relative_eq!(approx, exact, max_relative = 1e-14);
                }
            }
        }
    }

    #[test]
    fn edge_rules_integrate_monomials_exactly() {
        for degree in 1..=MAX_EDGE_DEGREE {
            let rule = edge_rule(degree).unwrap();
            for k in 0..=degree {
                let approx: f64 = rule
                    .points()
                    .iter()
                    .zip(rule.weights())
                    .map(|(bary, w)| w * bary[1].powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert_relative_eq!(approx, exact, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn degree_four_rule_hits_x2y2_moment() {
        // int over reference triangle of x^2 y^2 = 2!2!/6! = 1/180.
        let rule = triangle_rule(4).unwrap();
        let value: f64 = rule
            .points()
            .iter()
            .zip(rule.weights())
            .map(|(bary, w)| w * bary[1] * bary[1] * bary[2] * bary[2])
            .sum();
        assert_relative_eq!(value, 1.0 / 180.0, max_relative = 1e-14);
    }

    #[test]
    fn edge_rule_integrates_lambda_product() {
        // int over an edge of length L of lambda1 * lambda2 = L/6.
        let rule = edge_rule(2).unwrap();
        let value = integrate_on_edge([0.0, 0.0], [3.0, 4.0], &rule, |p| {
            let t = ((p[0] * 3.0 + p[1] * 4.0) / 25.0).clamp(0.0, 1.0);
            (1.0 - t) * t
        });
        assert_relative_eq!(value, 5.0 / 6.0, max_relative = 1e-13);
    }

    #[test]
    fn unsupported_degrees_are_rejected() {
        assert!(triangle_rule(0).is_err());
        assert!(triangle_rule(MAX_TRIANGLE_DEGREE + 1).is_err());
        assert!(edge_rule(0).is_err());
        assert!(edge_rule(MAX_EDGE_DEGREE + 1).is_err());
    }

    #[test]
    fn physical_integration_scales_with_area() {
        let mesh = Mesh::structured_unit_square(2).unwrap();
        let rule = triangle_rule(2).unwrap();
        let total = integrate(&mesh, &rule, |_| 1.0);
        assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        // Barycentric products integrate by the factorial formula per element.
        let lam12: f64 = (0..mesh.num_triangles())
            .map(|r| integrate_on_element_bary(&mesh, r, &rule, |_, b| b[0] * b[1]))
            .sum();
        let exact: f64 = (0..mesh.num_triangles())
            .map(|r| 2.0 * mesh.area(r) * reference_moment(1, 1))
            .sum();
        assert_relative_eq!(lam12, exact, max_relative = 1e-14);
    }
}
