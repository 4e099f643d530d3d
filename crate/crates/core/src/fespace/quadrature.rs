//! Gauss rules on the unit interval and the reference triangle.

/// Gauss–Legendre rule on `[0,1]` with weights summing to 1.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    /// `n`-point rule, exact for polynomials of degree `2n−1`.
    pub fn gauss(n: usize) -> LineRule {
        assert!(n >= 1);
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        LineRule { points, weights }
    }

    /// Smallest rule exact for polynomials of the given degree.
    pub fn with_degree(degree: usize) -> LineRule {
        LineRule::gauss(degree / 2 + 1)
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let d = if n == 0 {
        0.0
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p, d)
}

/// Quadrature on the reference triangle in barycentric coordinates.
/// Weights are normalized to sum to 1, so `∫_K g ≈ |K| Σ w_q g(x_q)`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// Collapsed (Duffy) tensor Gauss rule exact for polynomials of `degree`.
    pub fn triangle(degree: usize) -> QuadratureRule {
        let n = (degree + 2).div_ceil(2);
        let g = LineRule::gauss(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&b, &wb) in g.points.iter().zip(&g.weights) {
            for (&a, &wa) in g.points.iter().zip(&g.weights) {
                let xi = a * (1.0 - b);
                let eta = b;
                points.push([1.0 - xi - eta, xi, eta]);
                weights.push(2.0 * wa * wb * (1.0 - b));
            }
        }
        QuadratureRule {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
