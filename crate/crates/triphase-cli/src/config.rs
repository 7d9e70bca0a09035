//! Flat key-value run configuration.
//!
//! The format is deliberately minimal so it can be specified exactly:
//! `[section]` headers, one `key = value` pair per line, `#` comments,
//! blank lines ignored. Floats accept decimal or scientific notation.
//! Unknown sections or keys are rejected with their line number; the
//! physical and grid keys are mandatory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use triphase_core::params::{GridSpec, PhysParams};
use triphase_core::solver::SolverConfig;

#[derive(Debug)]
pub struct ParseError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(n) => write!(f, "config line {}: {}", n, self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ParseError {}

/// Initial-data family of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    GaussianBump,
    PureLift,
    SingleMode,
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub family: Family,
    pub seed: u64,
    pub amplitude: f64,
    /// Vertical mode index for the single-mode family (1-based).
    pub mode_n: usize,
    /// Horizontal wavenumber index for the single-mode family.
    pub mode_kx: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            family: Family::GaussianBump,
            seed: 42,
            amplitude: 1.0,
            mode_n: 1,
            mode_kx: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub phys: PhysParams,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub scenario: Scenario,
    pub constants_trials: usize,
    pub output_prefix: String,
    /// FNV-1a hash of the raw config bytes; stamped into artifact names.
    pub hash: String,
    pub raw: String,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

pub fn parse(path: &Path) -> Result<RunConfig, ParseError> {
    let raw = std::fs::read_to_string(path).map_err(|e| ParseError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_str(&raw)
}

pub fn parse_str(raw: &str) -> Result<RunConfig, ParseError> {
    const SECTIONS: [&str; 5] = ["phys", "grid", "solver", "scenario", "output"];
    let mut entries: BTreeMap<(String, String), Entry> = BTreeMap::new();
    let mut section = String::new();
    for (idx, line) in raw.lines().enumerate() {
        let n = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ParseError {
                line: Some(n),
                message: "unterminated section header".into(),
            })?;
            if !SECTIONS.contains(&name) {
                return Err(ParseError {
                    line: Some(n),
                    message: format!("unknown section [{name}]"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ParseError {
            line: Some(n),
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        if section.is_empty() {
            return Err(ParseError {
                line: Some(n),
                message: "key before any [section] header".into(),
            });
        }
        let key = key.trim().to_string();
        let prev = entries.insert(
            (section.clone(), key.clone()),
            Entry {
                line: n,
                value: value.trim().to_string(),
                used: false,
            },
        );
        if prev.is_some() {
            return Err(ParseError {
                line: Some(n),
                message: format!("duplicate key `{key}` in [{section}]"),
            });
        }
    }

    let mut take = |section: &str, key: &str| -> Option<(usize, String)> {
        entries
            .get_mut(&(section.to_string(), key.to_string()))
            .map(|e| {
                e.used = true;
                (e.line, e.value.clone())
            })
    };

    fn req_f64(
        got: Option<(usize, String)>,
        section: &str,
        key: &str,
    ) -> Result<f64, ParseError> {
        let (line, v) = got.ok_or(ParseError {
            line: None,
            message: format!("missing required key `{key}` in [{section}]"),
        })?;
        v.parse::<f64>().map_err(|_| ParseError {
            line: Some(line),
            message: format!("`{key}` is not a number: `{v}`"),
        })
    }
    fn req_usize(
        got: Option<(usize, String)>,
        section: &str,
        key: &str,
    ) -> Result<usize, ParseError> {
        let (line, v) = got.ok_or(ParseError {
            line: None,
            message: format!("missing required key `{key}` in [{section}]"),
        })?;
        v.parse::<usize>().map_err(|_| ParseError {
            line: Some(line),
            message: format!("`{key}` is not a nonnegative integer: `{v}`"),
        })
    }
    fn opt_f64(got: Option<(usize, String)>, key: &str, default: f64) -> Result<f64, ParseError> {
        match got {
            None => Ok(default),
            Some((line, v)) => v.parse::<f64>().map_err(|_| ParseError {
                line: Some(line),
                message: format!("`{key}` is not a number: `{v}`"),
            }),
        }
    }
    fn opt_usize(
        got: Option<(usize, String)>,
        key: &str,
        default: usize,
    ) -> Result<usize, ParseError> {
        match got {
            None => Ok(default),
            Some((line, v)) => v.parse::<usize>().map_err(|_| ParseError {
                line: Some(line),
                message: format!("`{key}` is not a nonnegative integer: `{v}`"),
            }),
        }
    }
    fn opt_bool(got: Option<(usize, String)>, key: &str, default: bool) -> Result<bool, ParseError> {
        match got {
            None => Ok(default),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(ParseError {
                    line: Some(line),
                    message: format!("`{key}` is not a boolean: `{v}`"),
                }),
            },
        }
    }

    let phys = PhysParams::new(
        req_f64(take("phys", "kappa_a"), "phys", "kappa_a")?,
        req_f64(take("phys", "kappa_b"), "phys", "kappa_b")?,
        req_f64(take("phys", "kappa_s_tilde"), "phys", "kappa_s_tilde")?,
        req_f64(take("phys", "alpha_s"), "phys", "alpha_s")?,
        req_f64(take("phys", "beta"), "phys", "beta")?,
    )
    .map_err(|e| ParseError {
        line: None,
        message: e.to_string(),
    })?;

    let grid = GridSpec::new(
        req_f64(take("grid", "l_h"), "grid", "l_h")?,
        req_usize(take("grid", "n_h"), "grid", "n_h")?,
        req_f64(take("grid", "l_z"), "grid", "l_z")?,
        req_usize(take("grid", "n_z"), "grid", "n_z")?,
        req_f64(take("grid", "dt"), "grid", "dt")?,
        req_f64(take("grid", "t_end"), "grid", "t_end")?,
    )
    .map_err(|e| ParseError {
        line: None,
        message: e.to_string(),
    })?;

    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        window_t: opt_f64(take("solver", "window_t"), "window_t", defaults.window_t)?,
        max_picard_iters: opt_usize(
            take("solver", "max_picard_iters"),
            "max_picard_iters",
            defaults.max_picard_iters,
        )?,
        picard_tol: opt_f64(take("solver", "picard_tol"), "picard_tol", defaults.picard_tol)?,
        contraction_target: opt_f64(
            take("solver", "contraction_target"),
            "contraction_target",
            defaults.contraction_target,
        )?,
        adapt_window: opt_bool(
            take("solver", "adapt_window"),
            "adapt_window",
            defaults.adapt_window,
        )?,
        trace_tol: opt_f64(take("solver", "trace_tol"), "trace_tol", defaults.trace_tol)?,
        store_every: opt_usize(
            take("solver", "store_every"),
            "store_every",
            defaults.store_every,
        )?,
        ..defaults
    };
    let constants_trials = opt_usize(take("solver", "constants_trials"), "constants_trials", 64)?;

    let mut scenario = Scenario {
        seed: opt_usize(take("scenario", "seed"), "seed", 42)? as u64,
        amplitude: opt_f64(take("scenario", "amplitude"), "amplitude", 1.0)?,
        mode_n: opt_usize(take("scenario", "mode_n"), "mode_n", 1)?,
        mode_kx: opt_usize(take("scenario", "mode_kx"), "mode_kx", 1)?,
        ..Scenario::default()
    };
    let file_value = take("scenario", "file");
    if let Some((line, name)) = take("scenario", "name") {
        scenario.family = match name.as_str() {
            "gaussian-bump" => Family::GaussianBump,
            "pure-lift" => Family::PureLift,
            "single-mode" => Family::SingleMode,
            "file" => {
                let (fline, fv) = file_value.clone().ok_or(ParseError {
                    line: Some(line),
                    message: "scenario `file` needs a `file = PATH` key".into(),
                })?;
                if fv.is_empty() {
                    return Err(ParseError {
                        line: Some(fline),
                        message: "`file` path is empty".into(),
                    });
                }
                Family::File(PathBuf::from(fv))
            }
            other => {
                return Err(ParseError {
                    line: Some(line),
                    message: format!(
                        "unknown scenario `{other}` (expected gaussian-bump, pure-lift, single-mode, or file)"
                    ),
                })
            }
        };
    } else if file_value.is_some() {
        return Err(ParseError {
            line: None,
            message: "`file` given without `name = file`".into(),
        });
    }

    let output_prefix = take("output", "prefix")
        .map(|(_, v)| v)
        .unwrap_or_else(|| "run".to_string());

    // Reject anything not consumed.
    for ((section, key), entry) in entries.iter() {
        if !entry.used {
            return Err(ParseError {
                line: Some(entry.line),
                message: format!("unknown key `{key}` in [{section}]"),
            });
        }
    }

    Ok(RunConfig {
        phys,
        grid,
        solver,
        scenario,
        constants_trials,
        output_prefix,
        hash: format!("{:016x}", fnv1a(raw.as_bytes())),
        raw: raw.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
[phys]
kappa_a = 0.5
kappa_b = 0.5
kappa_s_tilde = 1.0
alpha_s = 8.0
beta = 1.0

[grid]
l_h = 16.0
n_h = 8
l_z = 8.0
n_z = 8
dt = 1e-3
t_end = 0.01

[scenario]
name = gaussian-bump
seed = 7
";

    #[test]
    fn parses_complete_config() {
        let cfg = parse_str(GOOD).unwrap();
        assert_eq!(cfg.grid.n_h, 8);
        assert_eq!(cfg.scenario.seed, 7);
        assert_eq!(cfg.scenario.family, Family::GaussianBump);
        assert_eq!(cfg.hash.len(), 16);
    }

    #[test]
    fn missing_kappa_a_names_the_key() {
        let bad = GOOD.replace("kappa_a = 0.5\n", "");
        let err = parse_str(&bad).unwrap_err();
        assert!(err.to_string().contains("kappa_a"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let bad = format!("{GOOD}\n[solver]\nwarp_speed = 9\n");
        let err = parse_str(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("warp_speed") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn scientific_notation_floats_parse() {
        let cfg = parse_str(GOOD).unwrap();
        assert_eq!(cfg.grid.dt, 1e-3);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let bad = GOOD.replace("beta = 1.0", "beta = 1.0\nbeta = 2.0");
        assert!(parse_str(&bad).is_err());
    }
}
