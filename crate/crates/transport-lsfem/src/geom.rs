//! Small 2D vector and triangle helpers used throughout the crate.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Counterclockwise rotation by 90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn midpoint(self, other: Vec2) -> Vec2 {
        Vec2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Signed area of the triangle (a, b, c); positive when the vertices are in
/// counterclockwise order.
pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    0.5 * (b - a).cross(c - a)
}

/// Longest edge length of the triangle (a, b, c).
pub fn triangle_diameter(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    a.dist(b).max(b.dist(c)).max(c.dist(a))
}

/// Smallest interior angle of the triangle (a, b, c), in radians.
pub fn triangle_min_angle(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let angle = |at: Vec2, p: Vec2, q: Vec2| {
        let u = (p - at).normalized();
        let v = (q - at).normalized();
        u.dot(v).clamp(-1.0, 1.0).acos()
    };
    angle(a, b, c).min(angle(b, c, a)).min(angle(c, a, b))
}

/// An oriented interface curve splitting the plane into a positive and a
/// negative side, used to describe solution discontinuities. The signed
/// side function is `n·(p − p₀)` for a line and `|p − c| − r` for a circle.
#[derive(Clone, Copy, Debug)]
pub enum Curve {
    Line { point: Vec2, normal: Vec2 },
    Circle { center: Vec2, radius: f64 },
}

impl Curve {
    /// Signed side of `p`: positive, negative, or (up to roundoff) zero on
    /// the curve itself.
    pub fn side(&self, p: Vec2) -> f64 {
        match *self {
            Curve::Line { point, normal } => normal.dot(p - point),
            Curve::Circle { center, radius } => (p - center).norm() - radius,
        }
    }

    /// Unit direction of increasing side function at `p` (the curve normal
    /// pointing into the positive side).
    pub fn gradient_dir(&self, p: Vec2) -> Vec2 {
        match *self {
            Curve::Line { normal, .. } => normal.normalized(),
            Curve::Circle { center, .. } => {
                let d = p - center;
                if d.norm_sq() == 0.0 {
                    Vec2::new(1.0, 0.0)
                } else {
                    d.normalized()
                }
            }
        }
    }

    /// Parameters t strictly inside (0, 1) where the segment a + t(b − a)
    /// crosses the curve transversally, sorted ascending. Tangential
    /// touches and crossings at the endpoints are not reported.
    pub fn segment_crossings(&self, a: Vec2, b: Vec2) -> Vec<f64> {
        const T_EPS: f64 = 1e-14;
        match *self {
            Curve::Line { .. } => {
                let sa = self.side(a);
                let sb = self.side(b);
                if sa * sb < 0.0 {
                    let t = sa / (sa - sb);
                    if t > T_EPS && t < 1.0 - T_EPS {
                        return vec![t];
                    }
                }
                Vec::new()
            }
            Curve::Circle { center, radius } => {
                // |a + t d − c|² = r² as a·t² + 2b·t + c0 = 0, solved in the
                // numerically stable formulation via q = −(b ± √disc).
                let d = b - a;
                let e = a - center;
                let qa = d.norm_sq();
                let qb = d.dot(e);
                let qc = e.norm_sq() - radius * radius;
                let disc = qb * qb - qa * qc;
                if disc <= 0.0 || qa == 0.0 {
                    return Vec::new();
                }
                let root = disc.sqrt();
                let q = -(qb + qb.signum() * root);
                let mut ts: Vec<f64> = [q / qa, if q != 0.0 { qc / q } else { f64::NAN }]
                    .into_iter()
                    .filter(|t| t.is_finite() && *t > T_EPS && *t < 1.0 - T_EPS)
                    .collect();
                ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                ts.dedup_by(|x, y| (*x - *y).abs() < T_EPS);
                ts
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_area_orientation() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        let c = Vec2::new(0.0, 1.0);
        assert_eq!(signed_area(a, b, c), 0.5);
        assert_eq!(signed_area(a, c, b), -0.5);
    }

    #[test]
    fn perp_is_ccw_rotation() {
        let v = Vec2::new(1.0, 0.0);
        assert_eq!(v.perp(), Vec2::new(0.0, 1.0));
        assert_eq!(v.perp().perp(), -v);
    }

    #[test]
    fn min_angle_of_right_isoceles() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        let c = Vec2::new(0.0, 1.0);
        let expected = std::f64::consts::FRAC_PI_4;
        assert!((triangle_min_angle(a, b, c) - expected).abs() < 1e-14);
    }

    #[test]
    fn line_curve_sides_and_crossing() {
        let line = Curve::Line {
            point: Vec2::new(0.5, 0.0),
            normal: Vec2::new(1.0, 0.0),
        };
        assert!(line.side(Vec2::new(0.0, 0.3)) < 0.0);
        assert!(line.side(Vec2::new(1.0, -2.0)) > 0.0);
        assert_eq!(line.side(Vec2::new(0.5, 7.0)), 0.0);
        let ts = line.segment_crossings(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        assert_eq!(ts, vec![0.5]);
        // Segment entirely on one side: no crossing.
        assert!(line
            .segment_crossings(Vec2::new(0.6, 0.0), Vec2::new(0.9, 1.0))
            .is_empty());
    }

    #[test]
    fn circle_curve_sides_and_crossings() {
        let circle = Curve::Circle {
            center: Vec2::new(1.0, 0.0),
            radius: 0.5,
        };
        assert!(circle.side(Vec2::new(1.0, 0.1)) < 0.0);
        assert!(circle.side(Vec2::new(2.0, 0.0)) > 0.0);
        // Chord through the center: crossings at both circle intersections.
        let ts = circle.segment_crossings(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0));
        assert_eq!(ts.len(), 2);
        assert!((ts[0] - 0.25).abs() < 1e-15);
        assert!((ts[1] - 0.75).abs() < 1e-15);
        // Segment ending inside: one crossing.
        let ts = circle.segment_crossings(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        assert_eq!(ts.len(), 1);
        assert!((ts[0] - 0.5).abs() < 1e-15);
        // Tangent segment: no transversal crossing.
        let ts = circle.segment_crossings(Vec2::new(0.0, 0.5), Vec2::new(2.0, 0.5));
        assert!(ts.is_empty());
        // Gradient points radially outward.
        let g = circle.gradient_dir(Vec2::new(1.5, 0.0));
        assert!((g - Vec2::new(1.0, 0.0)).norm() < 1e-15);
    }
}
