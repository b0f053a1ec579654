//! Quadrature rules: Gauss-Legendre on the unit interval and product rules
//! on the reference triangle.
//!
//! Triangle rules store barycentric points and weights that sum to one, so
//! the integral over a physical element K is `|K| · Σ wᵢ f(xᵢ)`. Degree 1 is
//! the one-point centroid rule; higher degrees use a collapsed
//! Gauss-Legendre product (Duffy transform), which is exact for all
//! polynomials of the requested total degree and has strictly interior
//! points and positive weights.

/// Largest supported polynomial degree for triangle rules.
pub const MAX_TRIANGLE_DEGREE: usize = 10;

/// Quadrature rule on the reference triangle with vertices
/// (0,0), (1,0), (0,1), stored in barycentric coordinates.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    /// Barycentric triples (λ₀, λ₁, λ₂), each strictly positive.
    pub points: Vec<[f64; 3]>,
    /// Weights, strictly positive, summing to 1.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [0, 1].
/// Weights sum to 1; the rule is exact for polynomials of degree 2n − 1.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for k in 0..m {
        // Root of the Legendre polynomial on [-1, 1] by Newton iteration.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..50 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // The iteration above finds the roots in (0, 1]; mirror them.
        nodes[k] = 0.5 * (1.0 - x);
        nodes[n - 1 - k] = 0.5 * (1.0 + x);
        weights[k] = 0.5 * w;
        weights[n - 1 - k] = 0.5 * w;
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial Pₙ at x.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * cur - (kf - 1.0) * prev) / kf;
        prev = cur;
        cur = next;
    }
    let dp = n as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, dp)
}

/// Quadrature rule on the reference triangle, exact for polynomials of the
/// given total degree.
///
/// Panics when `degree` is 0 or exceeds [`MAX_TRIANGLE_DEGREE`].
pub fn triangle_rule(degree: usize) -> TriangleRule {
    assert!(
        (1..=MAX_TRIANGLE_DEGREE).contains(&degree),
        "unsupported triangle quadrature degree {degree} (supported: 1..={MAX_TRIANGLE_DEGREE})"
    );
    if degree == 1 {
        return TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        };
    }
    // Collapsed product rule: x = ξ, y = η(1 − ξ) maps the unit square onto
    // the triangle with Jacobian (1 − ξ). A monomial x^a y^b of total degree
    // ≤ d becomes degree ≤ d + 1 in ξ (including the Jacobian) and ≤ d in η.
    let n_xi = (degree + 3) / 2; // 2n − 1 ≥ d + 1
    let n_eta = (degree + 2) / 2; // 2n − 1 ≥ d
    let (xi, wxi) = gauss_legendre_01(n_xi);
    let (eta, weta) = gauss_legendre_01(n_eta);
    let mut points = Vec::with_capacity(n_xi * n_eta);
    let mut weights = Vec::with_capacity(n_xi * n_eta);
    for (&x, &wx) in xi.iter().zip(&wxi) {
        for (&e, &we) in eta.iter().zip(&weta) {
            let y = e * (1.0 - x);
            points.push([1.0 - x - y, x, y]);
            // Normalized so the weights sum to 1 over the reference triangle
            // of area 1/2: raw product weights sum to exactly that area.
            weights.push(2.0 * wx * we * (1.0 - x));
        }
    }
    TriangleRule { points, weights }
}

/// 5-point Gauss rule on [0, 1] used for all edge (line) integrals;
/// exact through degree 9.
pub fn edge_rule() -> (Vec<f64>, Vec<f64>) {
    gauss_legendre_01(5)
}
