//! Line-oriented configuration file format.
//!
//! Four sections, each a `[name]` header followed by `key = value` lines.
//! `#` starts a comment, blank lines are ignored, numbers are plain decimal
//! or scientific notation, and list values are comma separated. All lengths
//! share one arbitrary unit; angles are radians.
//!
//! ```text
//! [grating]
//! period = 6.283185307179586
//! mean   = 1.0
//! cosine = 0.2          # harmonic coefficients m = 1, 2, ...
//! sine   =
//! h1     = 2.0
//!
//! [materials]
//! eps1 = 1.0
//! mu1  = 1.0
//! eps2 = -2.0
//! mu2  = -1.0
//!
//! [incidence]
//! omega = 1.0
//! theta = 0.0
//! sigma = 0.0
//!
//! [numerics]
//! nx  = 48
//! ny1 = 24
//! ny2 = 24
//! modes = auto
//! ```

use crate::error::{Error, Result};
use crate::problem::{GratingProfile, ProblemConfig};

/// Discretization parameters, kept apart from the physics.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericsConfig {
    /// Cells across one period.
    pub nx: usize,
    /// Cell rows in the upper (dielectric) strip.
    pub ny1: usize,
    /// Cell rows in the lower (filling) strip.
    pub ny2: usize,
    /// Retained diffraction orders n = -modes..=modes; `None` selects
    /// automatically from the evanescent decay of the truncated tail.
    pub modes: Option<usize>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            nx: 48,
            ny1: 24,
            ny2: 24,
            modes: None,
        }
    }
}

/// Everything a command needs: the physics and how to discretize it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub numerics: NumericsConfig,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigParse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("key '{key}': expected a number, got '{}'", raw.trim())))
}

fn parse_usize(line: usize, key: &str, raw: &str) -> Result<usize> {
    raw.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(line, format!("key '{key}': expected a non-negative integer, got '{}'", raw.trim())))
}

fn parse_f64_list(line: usize, key: &str, raw: &str) -> Result<Vec<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|part| {
            part.trim().parse::<f64>().map_err(|_| {
                parse_err(line, format!("key '{key}': expected comma-separated numbers, got '{part}'"))
            })
        })
        .collect()
}

/// Parses the text of a configuration file.
///
/// Unknown sections and keys are rejected so a typo cannot silently fall
/// back to a default. Required keys are the physical ones; every `[numerics]`
/// key has a default.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    #[derive(Default)]
    struct Raw {
        period: Option<f64>,
        mean: Option<f64>,
        cosine: Vec<f64>,
        sine: Vec<f64>,
        h1: Option<f64>,
        eps1: Option<f64>,
        mu1: Option<f64>,
        eps2: Option<f64>,
        mu2: Option<f64>,
        omega: Option<f64>,
        theta: Option<f64>,
        sigma: Option<f64>,
        numerics: NumericsConfig,
    }
    let mut raw = Raw {
        numerics: NumericsConfig::default(),
        ..Default::default()
    };

    let mut section: Option<String> = None;
    for (idx, full_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match full_line.find('#') {
            Some(pos) => &full_line[..pos],
            None => full_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(lineno, "section header missing closing ']'"))?
                .trim();
            match name {
                "grating" | "materials" | "incidence" | "numerics" => {
                    section = Some(name.to_string());
                }
                other => return Err(parse_err(lineno, format!("unknown section '[{other}]'"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        let section = section
            .as_deref()
            .ok_or_else(|| parse_err(lineno, "key appears before any [section] header"))?;
        match (section, key) {
            ("grating", "period") => raw.period = Some(parse_f64(lineno, key, value)?),
            ("grating", "mean") => raw.mean = Some(parse_f64(lineno, key, value)?),
            ("grating", "cosine") => raw.cosine = parse_f64_list(lineno, key, value)?,
            ("grating", "sine") => raw.sine = parse_f64_list(lineno, key, value)?,
            ("grating", "h1") => raw.h1 = Some(parse_f64(lineno, key, value)?),
            ("materials", "eps1") => raw.eps1 = Some(parse_f64(lineno, key, value)?),
            ("materials", "mu1") => raw.mu1 = Some(parse_f64(lineno, key, value)?),
            ("materials", "eps2") => raw.eps2 = Some(parse_f64(lineno, key, value)?),
            ("materials", "mu2") => raw.mu2 = Some(parse_f64(lineno, key, value)?),
            ("incidence", "omega") => raw.omega = Some(parse_f64(lineno, key, value)?),
            ("incidence", "theta") => raw.theta = Some(parse_f64(lineno, key, value)?),
            ("incidence", "sigma") => raw.sigma = Some(parse_f64(lineno, key, value)?),
            ("numerics", "nx") => raw.numerics.nx = parse_usize(lineno, key, value)?,
            ("numerics", "ny1") => raw.numerics.ny1 = parse_usize(lineno, key, value)?,
            ("numerics", "ny2") => raw.numerics.ny2 = parse_usize(lineno, key, value)?,
            ("numerics", "modes") => {
                let v = value.trim();
                raw.numerics.modes = if v == "auto" {
                    None
                } else {
                    Some(parse_usize(lineno, key, v)?)
                };
            }
            (section, key) => {
                return Err(parse_err(lineno, format!("unknown key '{key}' in section '[{section}]'")))
            }
        }
    }

    fn require<T>(value: Option<T>, section: &str, key: &str) -> Result<T> {
        value.ok_or_else(|| parse_err(0, format!("missing required key '{key}' in section '[{section}]'")))
    }

    let problem = ProblemConfig {
        profile: GratingProfile {
            period: require(raw.period, "grating", "period")?,
            mean: require(raw.mean, "grating", "mean")?,
            cosine: raw.cosine,
            sine: raw.sine,
        },
        h1: require(raw.h1, "grating", "h1")?,
        eps1: require(raw.eps1, "materials", "eps1")?,
        mu1: require(raw.mu1, "materials", "mu1")?,
        eps2: require(raw.eps2, "materials", "eps2")?,
        mu2: require(raw.mu2, "materials", "mu2")?,
        omega: require(raw.omega, "incidence", "omega")?,
        theta: require(raw.theta, "incidence", "theta")?,
        sigma: raw.sigma.unwrap_or(0.0),
    };
    if raw.numerics.nx < 2 || raw.numerics.ny1 < 1 || raw.numerics.ny2 < 1 {
        return Err(parse_err(0, "numerics require nx >= 2, ny1 >= 1, ny2 >= 1".to_string()));
    }
    Ok(RunConfig {
        problem,
        numerics: raw.numerics,
    })
}

/// Renders a configuration back to the file format (used to ship and to
/// round-trip reference configurations in tests).
pub fn render_config(run: &RunConfig) -> String {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let p = &run.problem;
    let n = &run.numerics;
    format!(
        "[grating]\nperiod = {}\nmean = {}\ncosine = {}\nsine = {}\nh1 = {}\n\n\
         [materials]\neps1 = {}\nmu1 = {}\neps2 = {}\nmu2 = {}\n\n\
         [incidence]\nomega = {}\ntheta = {}\nsigma = {}\n\n\
         [numerics]\nnx = {}\nny1 = {}\nny2 = {}\nmodes = {}\n",
        p.profile.period,
        p.profile.mean,
        join(&p.profile.cosine),
        join(&p.profile.sine),
        p.h1,
        p.eps1,
        p.mu1,
        p.eps2,
        p.mu2,
        p.omega,
        p.theta,
        p.sigma,
        n.nx,
        n.ny1,
        n.ny2,
        n.modes.map(|m| m.to_string()).unwrap_or_else(|| "auto".to_string()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# reference corrugated cell
[grating]
period = 6.283185307179586
mean = 1.0
cosine = 0.2
sine =
h1 = 2.0

[materials]
eps1 = 1.0
mu1 = 1.0
eps2 = -2.0
mu2 = -1.0

[incidence]
omega = 1.0
theta = 0.0
sigma = 0.0

[numerics]
nx = 48
ny1 = 24
ny2 = 24
modes = auto
";

    #[test]
    fn parses_reference_file() {
        let run = parse_config(SAMPLE).unwrap();
        assert_eq!(run.problem.profile.cosine, vec![0.2]);
        assert!(run.problem.profile.sine.is_empty());
        assert_eq!(run.problem.eps2, -2.0);
        assert_eq!(run.numerics.nx, 48);
        assert_eq!(run.numerics.modes, None);
        assert!(run.problem.validate().is_empty());
    }

    #[test]
    fn round_trips_through_render() {
        let run = parse_config(SAMPLE).unwrap();
        let again = parse_config(&render_config(&run)).unwrap();
        assert_eq!(run, again);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let text = SAMPLE.replace("omega", "omeag");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, Error::ConfigParse { .. }));
        assert!(err.to_string().contains("omeag"));
    }

    #[test]
    fn unknown_section_is_an_error() {
        let text = format!("{SAMPLE}\n[extras]\nfoo = 1\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn missing_required_key_is_an_error() {
        let text = SAMPLE.replace("h1 = 2.0", "");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("h1"));
    }

    #[test]
    fn key_before_section_is_an_error() {
        assert!(parse_config("period = 1.0\n").is_err());
    }

    #[test]
    fn sigma_defaults_to_zero_and_modes_accepts_integers() {
        let text = SAMPLE.replace("sigma = 0.0", "").replace("modes = auto", "modes = 5");
        let run = parse_config(&text).unwrap();
        assert_eq!(run.problem.sigma, 0.0);
        assert_eq!(run.numerics.modes, Some(5));
    }

    #[test]
    fn coefficient_lists_parse_multiple_entries() {
        let text = SAMPLE.replace("cosine = 0.2", "cosine = 0.2, -0.05, 1e-3");
        let run = parse_config(&text).unwrap();
        assert_eq!(run.problem.profile.cosine, vec![0.2, -0.05, 1e-3]);
    }
}
