//! Closed-form scalar fields on the plane together with their first and
//! second derivatives.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

/// Value, gradient and Hessian `[xx, xy, yy]` of a scalar field at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

impl Jet {
    pub const fn constant(value: f64) -> Self {
        Jet {
            value,
            grad: [0.0; 2],
            hess: [0.0; 3],
        }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[0] + self.hess[2]
    }

    /// Compose with a scalar function given its value and first two derivatives.
    pub fn compose(&self, g: f64, dg: f64, ddg: f64) -> Jet {
        let [gx, gy] = self.grad;
        let [hxx, hxy, hyy] = self.hess;
        Jet {
            value: g,
            grad: [dg * gx, dg * gy],
            hess: [
                ddg * gx * gx + dg * hxx,
                ddg * gx * gy + dg * hxy,
                ddg * gy * gy + dg * hyy,
            ],
        }
    }

    pub fn tanh(&self) -> Jet {
        let t = self.value.tanh();
        let d = 1.0 - t * t;
        self.compose(t, d, -2.0 * t * d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn scale(&self, a: f64) -> Jet {
        Jet {
            value: a * self.value,
            grad: [a * self.grad[0], a * self.grad[1]],
            hess: [a * self.hess[0], a * self.hess[1], a * self.hess[2]],
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            value: self.value + o.value,
            grad: [self.grad[0] + o.grad[0], self.grad[1] + o.grad[1]],
            hess: [
                self.hess[0] + o.hess[0],
                self.hess[1] + o.hess[1],
                self.hess[2] + o.hess[2],
            ],
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self, o);
        Jet {
            value: a.value * b.value,
            grad: [
                a.grad[0] * b.value + a.value * b.grad[0],
                a.grad[1] * b.value + a.value * b.grad[1],
            ],
            hess: [
                a.hess[0] * b.value + 2.0 * a.grad[0] * b.grad[0] + a.value * b.hess[0],
                a.hess[1] * b.value
                    + a.grad[0] * b.grad[1]
                    + a.grad[1] * b.grad[0]
                    + a.value * b.hess[1],
                a.hess[2] * b.value + 2.0 * a.grad[1] * b.grad[1] + a.value * b.hess[2],
            ],
        }
    }
}

/// The coordinate functions `x` and `y` as jets.
pub fn coordinates(x: f64, y: f64) -> (Jet, Jet) {
    (
        Jet {
            value: x,
            grad: [1.0, 0.0],
            hess: [0.0; 3],
        },
        Jet {
            value: y,
            grad: [0.0, 1.0],
            hess: [0.0; 3],
        },
    )
}

/// A smooth field known in closed form.
pub trait AnalyticField: Send + Sync {
    fn jet(&self, x: f64, y: f64) -> Jet;

    fn value(&self, x: f64, y: f64) -> f64 {
        self.jet(x, y).value
    }
}

/// Adapter turning a jet-valued closure into an [`AnalyticField`].
pub struct FnField<F>(pub F);

impl<F> AnalyticField for FnField<F>
where
    F: Fn(f64, f64) -> Jet + Send + Sync,
{
    fn jet(&self, x: f64, y: f64) -> Jet {
        (self.0)(x, y)
    }
}

pub type SharedField = Arc<dyn AnalyticField>;

/// The constant field.
pub struct Constant(pub f64);

impl AnalyticField for Constant {
    fn jet(&self, _x: f64, _y: f64) -> Jet {
        Jet::constant(self.0)
    }
}

/// A circle `(x−cx)² + (y−cy)² = r²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// `Π_k tanh(((x−cx_k)² + (y−cy_k)² − r_k²)/ε)`: negative inside an odd
/// number of circles, `≈ +1` far from all of them.
#[derive(Clone, Debug)]
pub struct TanhCircles {
    pub circles: Vec<Circle>,
    pub epsilon: f64,
}

impl AnalyticField for TanhCircles {
    fn jet(&self, x: f64, y: f64) -> Jet {
        let mut acc = Jet::constant(1.0);
        for c in &self.circles {
            let dx = x - c.cx;
            let dy = y - c.cy;
            let inv = 1.0 / self.epsilon;
            let arg = Jet {
                value: (dx * dx + dy * dy - c.r * c.r) * inv,
                grad: [2.0 * dx * inv, 2.0 * dy * inv],
                hess: [2.0 * inv, 0.0, 2.0 * inv],
            };
            acc = acc * arg.tanh();
        }
        acc
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        self.circles
            .iter()
            .map(|c| {
                let dx = x - c.cx;
                let dy = y - c.cy;
                ((dx * dx + dy * dy - c.r * c.r) / self.epsilon).tanh()
            })
            .product()
    }
}

/// `cos(π(x+1)/2)`, a Neumann eigenfunction of `−Δ` on `[-1,1]²` with
/// eigenvalue `(π/2)²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct CosineMode;

impl CosineMode {
    pub fn eigenvalue() -> f64 {
        let k = std::f64::consts::FRAC_PI_2;
        k * k
    }
}

impl AnalyticField for CosineMode {
    fn jet(&self, x: f64, y: f64) -> Jet {
        let (xj, _) = coordinates(x, y);
        let k = std::f64::consts::FRAC_PI_2;
        (xj + Jet::constant(1.0)).scale(k).cos()
    }
}

/// Manufactured solution `u* = e^{−t} cos(π(x+1)/2)` of the forced problem
/// `u_t − Δφ = g`, `φ = −εΔu + ε⁻¹f(u)`. Both Neumann conditions hold.
#[derive(Clone, Copy, Debug)]
pub struct Manufactured {
    pub epsilon: f64,
}

impl Manufactured {
    /// `(u, u_x, u_xx)`; the field does not depend on `y`.
    fn profile(t: f64, x: f64) -> (f64, f64, f64) {
        let k = std::f64::consts::FRAC_PI_2;
        let a = (-t).exp();
        let (s, c) = (k * (x + 1.0)).sin_cos();
        (a * c, -a * k * s, -a * k * k * c)
    }

    pub fn u(&self, t: f64, x: f64, _y: f64) -> f64 {
        Self::profile(t, x).0
    }

    pub fn u_jet(&self, t: f64, x: f64, _y: f64) -> Jet {
        let (u, ux, uxx) = Self::profile(t, x);
        Jet {
            value: u,
            grad: [ux, 0.0],
            hess: [uxx, 0.0, 0.0],
        }
    }

    pub fn phi(&self, t: f64, x: f64, _y: f64) -> f64 {
        let (u, _, uxx) = Self::profile(t, x);
        let eps = self.epsilon;
        -eps * uxx + (u * u * u - u) / eps
    }

    /// `g = u*_t − Δφ*`.
    pub fn forcing(&self, t: f64, x: f64, _y: f64) -> f64 {
        let (u, ux, uxx) = Self::profile(t, x);
        let eps = self.epsilon;
        let k2 = CosineMode::eigenvalue();
        let phi_xx = eps * k2 * uxx + (3.0 * u * u * uxx + 6.0 * u * ux * ux - uxx) / eps;
        -u - phi_xx
    }
}
