use std::fmt;
use std::sync::Arc;

use crate::analytic::{AnalyticField, Circle, CosineMode, Manufactured, TanhCircles};
use crate::chsolver::Forcing;

/// Initial data families. The three circle tests are products of `tanh`
/// profiles; `Manufactured` also brings its source term.
#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    Test1,
    Test2,
    Test3,
    Manufactured,
    Custom(Vec<Circle>),
}

fn c(cx: f64, cy: f64, r: f64) -> Circle {
    Circle { cx, cy, r }
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Test1 => "test1",
            Preset::Test2 => "test2",
            Preset::Test3 => "test3",
            Preset::Manufactured => "manufactured",
            Preset::Custom(_) => "custom",
        }
    }

    pub fn circles(&self) -> Vec<Circle> {
        match self {
            Preset::Test1 => vec![c(0.3, 0.0, 0.25), c(-0.3, 0.0, 0.3)],
            Preset::Test2 => vec![c(0.3, 0.0, 0.2), c(-0.3, 0.0, 0.2), c(0.0, 0.3, 0.2), c(0.0, -0.3, 0.2)],
            Preset::Test3 => {
                let mut v = vec![c(0.0, 0.0, 0.15)];
                let d = 0.31;
                for (x, y) in [(d, 0.0), (-d, 0.0), (0.0, d), (0.0, -d), (d, d), (d, -d), (-d, d), (-d, -d)] {
                    v.push(c(x, y, 0.15));
                }
                v
            }
            Preset::Manufactured => Vec::new(),
            Preset::Custom(circles) => circles.clone(),
        }
    }

    pub fn field(&self, epsilon: f64) -> Arc<dyn AnalyticField> {
        match self {
            Preset::Manufactured => Arc::new(CosineMode),
            _ => Arc::new(TanhCircles {
                circles: self.circles(),
                epsilon,
            }),
        }
    }

    pub fn forcing(&self, epsilon: f64) -> Option<Forcing> {
        match self {
            Preset::Manufactured => {
                let m = Manufactured { epsilon };
                Some(Arc::new(move |t, x, y| m.forcing(t, x, y)))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `u₀(x, y)` of a preset.
pub fn evaluate_preset(preset: &Preset, epsilon: f64, x: f64, y: f64) -> f64 {
    preset.field(epsilon).value(x, y)
}
