//! The quartic double well.

/// `F(u) = ¼(u²−1)²` with `f = F′`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DoubleWell;

impl DoubleWell {
    #[inline]
    pub fn f(u: f64) -> f64 {
        u * u * u - u
    }

    #[inline]
    pub fn df(u: f64) -> f64 {
        3.0 * u * u - 1.0
    }

    #[inline]
    pub fn energy_density(u: f64) -> f64 {
        let s = u * u - 1.0;
        0.25 * s * s
    }
}
