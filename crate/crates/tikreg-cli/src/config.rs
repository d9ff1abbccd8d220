//! Experiment configuration: file format and flag overrides.
//!
//! The config file is sectioned key-value text (TOML syntax). Every key is
//! optional and falls back to the paper-default sweep; unknown keys are
//! rejected by name. Command-line flags are applied on top of the file.

use std::path::Path;

use serde::Deserialize;
use tikreg::experiment::{ForwardChoice, NoiseCase, PriorKind, SweepConfig};
use tikreg::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    prior: PriorSection,
    #[serde(default)]
    forward: ForwardSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    case: Option<String>,
    grid_sizes: Option<Vec<usize>>,
    sample_sizes: Option<Vec<usize>>,
    reps: Option<usize>,
    master_seed: Option<u64>,
    sigma: Option<f64>,
    parallel: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorSection {
    /// "bump" or "laplacian".
    kind: Option<String>,
    /// Bump kernel radius.
    kernel_c: Option<f64>,
    /// Laplacian smoothness exponent.
    smoothness: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForwardSection {
    /// "identity" or "blur".
    kind: Option<String>,
    /// Blur kernel width.
    width: Option<f64>,
}

/// Reads a config file and applies it over the full default preset.
pub fn load_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let file: FileConfig = toml::from_str(&text).map_err(|e| {
        Error::Config(format!("config file {}: {e}", path.display()))
    })?;

    let mut cfg = SweepConfig::default();
    let exp = file.experiment;
    if let Some(case) = exp.case {
        cfg.case = NoiseCase::from_label(&case)?;
    }
    if let Some(gs) = exp.grid_sizes {
        cfg.grid_sizes = gs;
    }
    if let Some(ms) = exp.sample_sizes {
        cfg.sample_sizes = ms;
    }
    if let Some(reps) = exp.reps {
        cfg.reps = reps;
    }
    if let Some(seed) = exp.master_seed {
        cfg.master_seed = seed;
    }
    if let Some(sigma) = exp.sigma {
        cfg.sigma = sigma;
    }
    if let Some(parallel) = exp.parallel {
        cfg.parallel = parallel;
    }

    if let Some(c) = file.prior.kernel_c {
        cfg.kernel_c = c;
    }
    match file.prior.kind.as_deref() {
        None | Some("bump") => {
            if file.prior.smoothness.is_some() {
                return Err(Error::Config(
                    "prior.smoothness only applies to the laplacian prior".into(),
                ));
            }
        }
        Some("laplacian") => {
            cfg.prior = PriorKind::Laplacian {
                s: file.prior.smoothness.unwrap_or(1.0),
            };
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown prior kind '{other}', expected bump or laplacian"
            )));
        }
    }

    match file.forward.kind.as_deref() {
        None | Some("identity") => {
            if file.forward.width.is_some() {
                return Err(Error::Config(
                    "forward.width only applies to the blur forward".into(),
                ));
            }
        }
        Some("blur") => {
            cfg.forward = ForwardChoice::Blur {
                width: file.forward.width.unwrap_or(0.05),
            };
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown forward kind '{other}', expected identity or blur"
            )));
        }
    }

    Ok(cfg)
}

/// Flag overrides shared by the sweep presets and config files.
pub struct Overrides<'a> {
    pub seed: Option<u64>,
    pub grid_sizes: Option<&'a [usize]>,
    pub sigma: Option<f64>,
    pub case: Option<&'a str>,
}

pub fn apply_overrides(cfg: &mut SweepConfig, ov: &Overrides) -> Result<()> {
    if let Some(seed) = ov.seed {
        cfg.master_seed = seed;
    }
    if let Some(gs) = ov.grid_sizes {
        cfg.grid_sizes = gs.to_vec();
    }
    if let Some(sigma) = ov.sigma {
        cfg.sigma = sigma;
    }
    if let Some(case) = ov.case {
        cfg.case = NoiseCase::from_label(case)?;
    }
    Ok(())
}

/// Prior selection for the single-instance commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorFlag {
    /// Identity covariance operator, zero mean. Works for any n >= 1.
    Unit,
    Bump { c: f64 },
    Laplacian { s: f64 },
}

/// Forward selection for the single-instance commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardFlag {
    Identity,
    Blur { width: f64 },
}

fn parse_param(spec: &str, what: &str) -> Result<f64> {
    spec.parse::<f64>()
        .map_err(|_| Error::Config(format!("cannot parse {what} '{spec}' as a number")))
}

pub fn parse_prior(s: &str) -> Result<PriorFlag> {
    let (kind, param) = match s.split_once(':') {
        Some((k, p)) => (k, Some(p)),
        None => (s, None),
    };
    match (kind, param) {
        ("unit", None) => Ok(PriorFlag::Unit),
        // "paper" is accepted as a synonym for the bump-kernel default.
        ("bump", p) | ("paper", p) => Ok(PriorFlag::Bump {
            c: p.map(|p| parse_param(p, "kernel radius")).transpose()?.unwrap_or(0.2),
        }),
        ("laplacian", p) => Ok(PriorFlag::Laplacian {
            s: p.map(|p| parse_param(p, "smoothness")).transpose()?.unwrap_or(1.0),
        }),
        _ => Err(Error::Config(format!(
            "unknown prior '{s}', expected unit, bump[:c] or laplacian[:s]"
        ))),
    }
}

pub fn parse_forward(s: &str) -> Result<ForwardFlag> {
    let (kind, param) = match s.split_once(':') {
        Some((k, p)) => (k, Some(p)),
        None => (s, None),
    };
    match (kind, param) {
        ("identity", None) => Ok(ForwardFlag::Identity),
        ("blur", p) => Ok(ForwardFlag::Blur {
            width: p.map(|p| parse_param(p, "blur width")).transpose()?.unwrap_or(0.05),
        }),
        _ => Err(Error::Config(format!(
            "unknown forward operator '{s}', expected identity or blur[:width]"
        ))),
    }
}

/// Learner selection for the reconstruct command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerFlag {
    Optimal,
    Supervised { m: usize },
    Unsupervised { m: usize },
}

pub fn parse_learner(s: &str) -> Result<LearnerFlag> {
    if s == "optimal" {
        return Ok(LearnerFlag::Optimal);
    }
    if let Some((kind, m)) = s.split_once(':') {
        let m: usize = m.parse().map_err(|_| {
            Error::Config(format!("cannot parse sample count '{m}' in learner '{s}'"))
        })?;
        match kind {
            "supervised" => return Ok(LearnerFlag::Supervised { m }),
            "unsupervised" => return Ok(LearnerFlag::Unsupervised { m }),
            _ => {}
        }
    }
    Err(Error::Config(format!(
        "unknown learner '{s}', expected optimal, supervised:m or unsupervised:m"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_flag_forms() {
        assert_eq!(parse_prior("unit").unwrap(), PriorFlag::Unit);
        assert_eq!(parse_prior("bump").unwrap(), PriorFlag::Bump { c: 0.2 });
        assert_eq!(parse_prior("paper").unwrap(), PriorFlag::Bump { c: 0.2 });
        assert_eq!(parse_prior("bump:0.3").unwrap(), PriorFlag::Bump { c: 0.3 });
        assert_eq!(
            parse_prior("laplacian:1.5").unwrap(),
            PriorFlag::Laplacian { s: 1.5 }
        );
        assert!(parse_prior("unit:1").is_err());
        assert!(parse_prior("gauss").is_err());
    }

    #[test]
    fn learner_flag_forms() {
        assert_eq!(parse_learner("optimal").unwrap(), LearnerFlag::Optimal);
        assert_eq!(
            parse_learner("supervised:3000").unwrap(),
            LearnerFlag::Supervised { m: 3000 }
        );
        assert!(parse_learner("supervised").is_err());
        assert!(parse_learner("unsupervised:x").is_err());
    }

    #[test]
    fn config_file_round_trip() {
        let dir = std::env::temp_dir().join("tikreg-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sweep.toml");
        std::fs::write(
            &path,
            "[experiment]\ncase = \"b\"\ngrid_sizes = [16]\nsample_sizes = [100, 200]\n\
             reps = 2\nmaster_seed = 9\nsigma = 0.1\n\n[prior]\nkind = \"laplacian\"\nsmoothness = 1.2\n",
        )
        .unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.case.label(), "b");
        assert_eq!(cfg.grid_sizes, vec![16]);
        assert_eq!(cfg.sample_sizes, vec![100, 200]);
        assert_eq!(cfg.reps, 2);
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.sigma, 0.1);
        assert_eq!(cfg.prior, PriorKind::Laplacian { s: 1.2 });
    }

    #[test]
    fn unknown_config_key_is_named() {
        let dir = std::env::temp_dir().join("tikreg-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.toml");
        std::fs::write(&path, "[experiment]\nrepz = 3\n").unwrap();
        let err = load_config(&path).unwrap_err();
        assert!(err.to_string().contains("repz"), "message was: {err}");
    }
}
