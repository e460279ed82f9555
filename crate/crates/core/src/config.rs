//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! domain = l_shape
//! initial_subdivision = 4
//! n_levels = 5
//! zeta = 10
//! gammas = 1, 1
//! method = tensor
//!
//! [scf]
//! tol_lambda = 1e-10
//!
//! [bench]
//! zeta_values = 1, 10, 100, 1000
//! methods = tensor, baseline, direct-linear
//!
//! [adapt]
//! theta_mark = 0.5
//! max_dofs = 20000
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::AdaptConfig;
use crate::driver::{Method, SolverConfig};
use crate::mesh::DomainKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown section `[{section}]`")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    /// Fully qualified key the diagnostic is about, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::UnknownKey { key, .. }
            | Self::BadValue { key, .. }
            | Self::Duplicate { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMethod {
    #[serde(rename = "tensor")]
    Tensor,
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "direct-linear")]
    DirectLinear,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Tensor => "tensor",
            Self::Baseline => "baseline",
            Self::DirectLinear => "direct-linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tensor" => Some(Self::Tensor),
            "baseline" => Some(Self::Baseline),
            "direct-linear" => Some(Self::DirectLinear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub zeta_values: Vec<f64>,
    pub methods: Vec<BenchMethod>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            zeta_values: vec![1.0, 10.0, 100.0, 1000.0],
            methods: vec![
                BenchMethod::Tensor,
                BenchMethod::Baseline,
                BenchMethod::DirectLinear,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub bench: BenchConfig,
    pub adapt: AdaptConfig,
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: format!("`{v}`: {e}"),
    })
}

fn parse_list<T, F>(line: usize, key: &str, v: &str, mut item: F) -> Result<Vec<T>, ConfigError>
where
    F: FnMut(&str) -> Result<T, ConfigError>,
{
    let v = v.trim().trim_start_matches('[').trim_end_matches(']');
    if v.trim().is_empty() {
        return Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            reason: "empty list".into(),
        });
    }
    v.split(',').map(|s| item(s.trim())).collect()
}

fn bad(line: usize, key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Parses the configuration text. Keys not given keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "scf" | "bench" | "adapt") {
                return Err(ConfigError::UnknownSection {
                    line,
                    section: name.to_string(),
                });
            }
            section = name.to_string();
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: body.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        let key = if section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: body.to_string(),
            });
        }
        if !seen.insert(key.clone()) {
            return Err(ConfigError::Duplicate { line, key });
        }
        let s = &mut cfg.solver;
        match key.as_str() {
            "domain" => {
                s.domain.kind = DomainKind::parse(v)
                    .ok_or_else(|| bad(line, &key, format!("unknown domain `{v}`")))?;
            }
            "initial_subdivision" => s.domain.initial_subdivision = parse_num(line, &key, v)?,
            "n_levels" => s.n_levels = parse_num(line, &key, v)?,
            "zeta" => s.zeta = parse_num(line, &key, v)?,
            "gammas" => s.gammas = parse_list(line, &key, v, |x| parse_num(line, &key, x))?,
            "c_sigma" => s.c_sigma = parse_num(line, &key, v)?,
            "method" => {
                s.method = Method::parse(v)
                    .ok_or_else(|| bad(line, &key, format!("unknown method `{v}`")))?
            }
            "h1_refinements" => s.h1_refinements = parse_num(line, &key, v)?,
            "corrections_per_level" => s.corrections_per_level = parse_num(line, &key, v)?,
            "reference_lambda" => {
                s.reference_lambda = if v == "none" {
                    None
                } else {
                    Some(parse_num(line, &key, v)?)
                }
            }
            "scf.damping" => s.scf.damping = parse_num(line, &key, v)?,
            "scf.tol_lambda" => s.scf.tol_lambda = parse_num(line, &key, v)?,
            "scf.tol_u" => s.scf.tol_u = parse_num(line, &key, v)?,
            "scf.max_iters" => s.scf.max_iters = parse_num(line, &key, v)?,
            "scf.anderson_depth" => s.scf.anderson_depth = parse_num(line, &key, v)?,
            "bench.zeta_values" => {
                cfg.bench.zeta_values = parse_list(line, &key, v, |x| parse_num(line, &key, x))?
            }
            "bench.methods" => {
                cfg.bench.methods = parse_list(line, &key, v, |x| {
                    BenchMethod::parse(x)
                        .ok_or_else(|| bad(line, &key, format!("unknown bench method `{x}`")))
                })?
            }
            "adapt.theta_mark" => cfg.adapt.theta_mark = parse_num(line, &key, v)?,
            "adapt.max_dofs" => cfg.adapt.max_dofs = parse_num(line, &key, v)?,
            "adapt.max_iters" => cfg.adapt.max_iters = parse_num(line, &key, v)?,
            _ => return Err(ConfigError::UnknownKey { line, key }),
        }
    }
    Ok(cfg)
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Writes a configuration that `parse_config` reads back unchanged.
pub fn render_config(cfg: &RunConfig) -> String {
    let s = &cfg.solver;
    let mut out = String::new();
    let _ = writeln!(out, "domain = {}", s.domain.kind.name());
    let _ = writeln!(
        out,
        "initial_subdivision = {}",
        s.domain.initial_subdivision
    );
    let _ = writeln!(out, "n_levels = {}", s.n_levels);
    let _ = writeln!(out, "zeta = {:?}", s.zeta);
    let _ = writeln!(
        out,
        "gammas = {}",
        join(
            &s.gammas
                .iter()
                .map(|g| format!("{g:?}"))
                .collect::<Vec<_>>()
        )
    );
    let _ = writeln!(out, "c_sigma = {:?}", s.c_sigma);
    let _ = writeln!(out, "method = {}", s.method.name());
    let _ = writeln!(out, "h1_refinements = {}", s.h1_refinements);
    let _ = writeln!(out, "corrections_per_level = {}", s.corrections_per_level);
    match s.reference_lambda {
        Some(r) => {
            let _ = writeln!(out, "reference_lambda = {r:?}");
        }
        None => {
            let _ = writeln!(out, "reference_lambda = none");
        }
    }
    let _ = writeln!(out, "\n[scf]");
    let _ = writeln!(out, "damping = {:?}", s.scf.damping);
    let _ = writeln!(out, "tol_lambda = {:?}", s.scf.tol_lambda);
    let _ = writeln!(out, "tol_u = {:?}", s.scf.tol_u);
    let _ = writeln!(out, "max_iters = {}", s.scf.max_iters);
    let _ = writeln!(out, "anderson_depth = {}", s.scf.anderson_depth);
    let _ = writeln!(out, "\n[bench]");
    let zs: Vec<String> = cfg
        .bench
        .zeta_values
        .iter()
        .map(|z| format!("{z:?}"))
        .collect();
    let _ = writeln!(out, "zeta_values = {}", join(&zs));
    let ms: Vec<&str> = cfg.bench.methods.iter().map(|m| m.name()).collect();
    let _ = writeln!(out, "methods = {}", join(&ms));
    let _ = writeln!(out, "\n[adapt]");
    let _ = writeln!(out, "theta_mark = {:?}", cfg.adapt.theta_mark);
    let _ = writeln!(out, "max_dofs = {}", cfg.adapt.max_dofs);
    let _ = writeln!(out, "max_iters = {}", cfg.adapt.max_iters);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(
            parse_config("# only a comment\n\n").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn sections_and_lists() {
        let text = "domain = l_shape\ninitial_subdivision = 4  # coarse\ngammas = [1, 2.5]\n\
                    method = direct\n[scf]\ntol_u = 1e-9\n[bench]\nzeta_values = 1, 10\n\
                    methods = tensor, direct-linear\n[adapt]\nmax_dofs = 500\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.solver.domain.kind, DomainKind::LShape);
        assert_eq!(cfg.solver.domain.initial_subdivision, 4);
        assert_eq!(cfg.solver.gammas, vec![1.0, 2.5]);
        assert_eq!(cfg.solver.method, Method::Direct);
        assert_eq!(cfg.solver.scf.tol_u, 1e-9);
        assert_eq!(cfg.bench.zeta_values, vec![1.0, 10.0]);
        assert_eq!(
            cfg.bench.methods,
            vec![BenchMethod::Tensor, BenchMethod::DirectLinear]
        );
        assert_eq!(cfg.adapt.max_dofs, 500);
    }

    #[test]
    fn diagnostics_name_the_key() {
        let e = parse_config("zeta = 1\nzetta = 2\n").unwrap_err();
        assert_eq!(e.key(), Some("zetta"));
        assert!(e.to_string().contains("zetta"));
        let e = parse_config("[scf]\ndamping = half\n").unwrap_err();
        assert_eq!(e.key(), Some("scf.damping"));
        let e = parse_config("[bench]\nmethods = tensor, fast\n").unwrap_err();
        assert!(e.to_string().contains("bench.methods"));
        let e = parse_config("zeta = 1\nzeta = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Duplicate { .. }));
        assert!(matches!(
            parse_config("[solver]\n").unwrap_err(),
            ConfigError::UnknownSection { .. }
        ));
        assert!(matches!(
            parse_config("just words\n").unwrap_err(),
            ConfigError::Syntax { line: 1, .. }
        ));
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.solver.zeta = 0.1 + 0.2;
        cfg.solver.reference_lambda = Some(2.0 * std::f64::consts::PI.powi(2));
        cfg.bench.methods = vec![BenchMethod::Baseline];
        assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
        let cfg = RunConfig::default();
        assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
    }
}
