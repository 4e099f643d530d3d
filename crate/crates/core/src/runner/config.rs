use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use super::preset::Preset;
use crate::adapt::{AdaptConfig, Problem};
use crate::analytic::Circle;
use crate::chsolver::{Scheme, StepperConfig};
use crate::error::{Error, Result};
use crate::estimator::BoundConstants;

/// A complete run description. `epsilon` lives in `stepper`, `tol` and
/// `t_end` in `adapt`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub stepper: StepperConfig,
    pub adapt: AdaptConfig,
    pub bound: BoundConstants,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub snapshot_every_blocks: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Manufactured,
            stepper: StepperConfig::default(),
            adapt: AdaptConfig::default(),
            bound: BoundConstants::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            snapshot_every_blocks: 5,
        }
    }
}

/// Every accepted key, in print order.
pub const CONFIG_KEYS: &[&str] = &[
    "preset",
    "circles",
    "epsilon",
    "tol",
    "t_end",
    "scheme",
    "dt_init",
    "dt_min",
    "dt_max",
    "newton_tol",
    "newton_max_iter",
    "temporal_rtol",
    "linearized",
    "convex_splitting",
    "reuse_jacobian",
    "block_steps",
    "max_redo",
    "refine_budget_factor",
    "coarsen_budget_divisor",
    "max_generation",
    "initial_subdivisions",
    "degree",
    "bound_C",
    "bound_C0",
    "output_dir",
    "seed",
    "snapshot_every_blocks",
];

/// Shortest round-trip form, in exponent notation for very small or large values.
fn num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e7) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn format_circles(circles: &[Circle]) -> String {
    circles
        .iter()
        .map(|c| format!("{} {} {}", num(c.cx), num(c.cy), num(c.r)))
        .collect::<Vec<_>>()
        .join("; ")
}

fn parse_circles(v: &str) -> std::result::Result<Vec<Circle>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let n: Vec<f64> = s
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}` in circle `{s}`")))
                .collect::<std::result::Result<_, _>>()?;
            match n[..] {
                [cx, cy, r] if r > 0.0 && r.is_finite() && cx.is_finite() && cy.is_finite() => Ok(Circle { cx, cy, r }),
                _ => Err(format!("circle `{s}` must be `cx cy r` with r > 0")),
            }
        })
        .collect()
}

impl RunConfig {
    pub fn epsilon(&self) -> f64 {
        self.stepper.epsilon
    }

    /// `key = value` lines for every key; `parse_config` reads them back unchanged.
    pub fn to_text(&self) -> String {
        let s = &self.stepper;
        let a = &self.adapt;
        let circles = match &self.preset {
            Preset::Custom(c) => format_circles(c),
            _ => String::new(),
        };
        let values: Vec<(&str, String)> = vec![
            ("preset", self.preset.to_string()),
            ("circles", circles),
            ("epsilon", num(s.epsilon)),
            ("tol", num(a.tol)),
            ("t_end", num(a.t_end)),
            ("scheme", s.scheme.to_string()),
            ("dt_init", num(s.dt_init)),
            ("dt_min", num(s.dt_min)),
            ("dt_max", num(s.dt_max)),
            ("newton_tol", num(s.newton_tol)),
            ("newton_max_iter", s.newton_max_iter.to_string()),
            ("temporal_rtol", num(s.temporal_rtol)),
            ("linearized", s.linearized.to_string()),
            ("convex_splitting", s.convex_splitting.to_string()),
            ("reuse_jacobian", s.reuse_jacobian.to_string()),
            ("block_steps", a.block_steps.to_string()),
            ("max_redo", a.max_redo.to_string()),
            ("refine_budget_factor", num(a.refine_budget_factor)),
            ("coarsen_budget_divisor", num(a.coarsen_budget_divisor)),
            ("max_generation", a.max_generation.to_string()),
            ("initial_subdivisions", a.initial_subdivisions.to_string()),
            ("degree", a.degree.to_string()),
            ("bound_C", num(self.bound.c)),
            ("bound_C0", num(self.bound.c0)),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("snapshot_every_blocks", self.snapshot_every_blocks.to_string()),
        ];
        debug_assert_eq!(values.len(), CONFIG_KEYS.len());
        let mut out = String::new();
        for (k, v) in values {
            if k == "circles" && v.is_empty() {
                continue;
            }
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn problem(&self) -> Problem {
        let eps = self.epsilon();
        Problem {
            adapt: self.adapt.clone(),
            stepper: self.stepper.clone(),
            initial: self.preset.field(eps),
            forcing: self.preset.forcing(eps),
            bound: self.bound,
        }
    }

    /// Cross-key checks, returning the offending message.
    fn validate(&self) -> std::result::Result<(), String> {
        self.stepper.validate()?;
        self.adapt.validate()?;
        for (name, v) in [("bound_C", self.bound.c), ("bound_C0", self.bound.c0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.snapshot_every_blocks == 0 {
            return Err("snapshot_every_blocks must be at least 1".into());
        }
        if matches!(&self.preset, Preset::Custom(c) if c.is_empty()) {
            return Err("preset custom needs a nonempty `circles` list".into());
        }
        Ok(())
    }
}

/// Parse flat `key = value` lines with `#` comments. Absent keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut preset_name: Option<(String, usize)> = None;
    let mut circles: Option<Vec<Circle>> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::Config { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(err(format!("expected `key = value`, got `{content}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(err(format!("unknown key `{key}`")));
        }
        if let Some(prev) = seen.insert(key.to_string(), line) {
            return Err(err(format!("key `{key}` already set on line {prev}")));
        }

        let float = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| err(format!("`{key}` expects a number, got `{value}`")))
        };
        let positive = || -> Result<f64> {
            let v = float()?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("`{key}` must be positive and finite, got {value}")))
            }
        };
        let count = || -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|_| err(format!("`{key}` expects a nonnegative integer, got `{value}`")))
        };
        let flag = || -> Result<bool> {
            value
                .parse::<bool>()
                .map_err(|_| err(format!("`{key}` expects true or false, got `{value}`")))
        };

        let s = &mut cfg.stepper;
        let a = &mut cfg.adapt;
        match key {
            "preset" => preset_name = Some((value.to_string(), line)),
            "circles" => circles = Some(parse_circles(value).map_err(err)?),
            "epsilon" => s.epsilon = positive()?,
            "tol" => a.tol = positive()?,
            "t_end" => a.t_end = positive()?,
            "scheme" => s.scheme = value.parse::<Scheme>().map_err(err)?,
            "dt_init" => s.dt_init = positive()?,
            "dt_min" => s.dt_min = positive()?,
            "dt_max" => s.dt_max = positive()?,
            "newton_tol" => s.newton_tol = positive()?,
            "newton_max_iter" => s.newton_max_iter = count()?,
            "temporal_rtol" => s.temporal_rtol = positive()?,
            "linearized" => s.linearized = flag()?,
            "convex_splitting" => s.convex_splitting = flag()?,
            "reuse_jacobian" => s.reuse_jacobian = flag()?,
            "block_steps" => a.block_steps = count()?,
            "max_redo" => a.max_redo = count()?,
            "refine_budget_factor" => a.refine_budget_factor = positive()?,
            "coarsen_budget_divisor" => a.coarsen_budget_divisor = positive()?,
            "max_generation" => {
                a.max_generation = value
                    .parse::<u32>()
                    .map_err(|_| err(format!("`{key}` expects a nonnegative integer, got `{value}`")))?
            }
            "initial_subdivisions" => a.initial_subdivisions = count()?,
            "degree" => a.degree = count()?,
            "bound_C" => cfg.bound.c = positive()?,
            "bound_C0" => cfg.bound.c0 = positive()?,
            "output_dir" => {
                if value.is_empty() {
                    return Err(err("`output_dir` must not be empty".into()));
                }
                cfg.output_dir = PathBuf::from(value)
            }
            "seed" => {
                cfg.seed = value
                    .parse::<u64>()
                    .map_err(|_| err(format!("`{key}` expects a nonnegative integer, got `{value}`")))?
            }
            "snapshot_every_blocks" => cfg.snapshot_every_blocks = count()?,
            _ => unreachable!("key list checked above"),
        }
    }

    if let Some((name, line)) = &preset_name {
        cfg.preset = match name.as_str() {
            "test1" => Preset::Test1,
            "test2" => Preset::Test2,
            "test3" => Preset::Test3,
            "manufactured" => Preset::Manufactured,
            "custom" => Preset::Custom(circles.take().unwrap_or_default()),
            other => {
                return Err(Error::Config {
                    line: *line,
                    message: format!("unknown preset `{other}` (expected test1, test2, test3, manufactured or custom)"),
                })
            }
        };
    }
    if circles.is_some() {
        return Err(Error::Config {
            line: seen["circles"],
            message: "`circles` is only used with preset = custom".into(),
        });
    }

    cfg.validate().map_err(|message| {
        // Point at the last line among the keys the message names.
        let line = CONFIG_KEYS
            .iter()
            .filter(|k| message.contains(*k))
            .filter_map(|k| seen.get(*k))
            .max()
            .copied()
            .unwrap_or(0);
        Error::Config { line, message }
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_test1_parameters() {
        let cfg = parse_config("epsilon = 0.01\ntol = 0.02\npreset = test1").unwrap();
        assert_eq!(cfg.epsilon(), 0.01);
        assert_eq!(cfg.adapt.tol, 0.02);
        assert_eq!(cfg.preset, Preset::Test1);
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.preset, Preset::Manufactured);
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), cfg);
    }

    #[test]
    fn errors_name_key_and_line() {
        match parse_config("tol = 0.1\nepsilon = -1\n") {
            Err(Error::Config { line: 2, message }) => assert!(message.contains("epsilon"), "{message}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("foo = 1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("tol = 0.1\ntol = 0.2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("\nscheme = rk4"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("preset = custom"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("no equals sign"), Err(Error::Config { line: 1, .. })));
        match parse_config("dt_init = 1e-3\n\ndt_max = 1e-4\n") {
            Err(Error::Config { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_circles_round_trip() {
        let cfg = parse_config("preset = custom\ncircles = 0.1 0 0.2; -0.25 0.5 0.125 # two\n").unwrap();
        assert_eq!(cfg.preset.circles().len(), 2);
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
        assert!(parse_config("circles = 0 0 0.1").is_err());
    }
}
