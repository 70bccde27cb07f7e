//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. List-valued keys
//! (`scheme`, `mesh.n`, `problem.eps`) take comma-separated values. Every
//! key has a default and [`RunConfig::to_text`] writes the effective
//! configuration back in the same format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::{AlphaKind, BKind, ProblemSpec, Source, StudyConfig};
use crate::solvers::{InitialGuess, PicardConfig, ReducedMode, Scheme};
use crate::{Error, Result};

pub const KEYS: [&str; 16] = [
    "problem.alpha",
    "problem.alpha.a0",
    "problem.alpha.rho",
    "problem.eps",
    "problem.b",
    "problem.b.c",
    "problem.f",
    "mesh.n",
    "mesh.m",
    "mesh.ref_levels",
    "scheme",
    "reduced.mode",
    "picard.tol",
    "picard.max_iter",
    "picard.initial_guess",
    "picard.linear_tol",
];

/// Scheme names as written in the config (the reduced mode is a separate key).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeName {
    Galerkin,
    RfbCoupled,
    RfbDecoupled,
    RfbReduced,
}

impl SchemeName {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "galerkin" => Some(SchemeName::Galerkin),
            "rfb_coupled" => Some(SchemeName::RfbCoupled),
            "rfb_decoupled" => Some(SchemeName::RfbDecoupled),
            "rfb_reduced" => Some(SchemeName::RfbReduced),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SchemeName::Galerkin => "galerkin",
            SchemeName::RfbCoupled => "rfb_coupled",
            SchemeName::RfbDecoupled => "rfb_decoupled",
            SchemeName::RfbReduced => "rfb_reduced",
        }
    }
}

/// Effective run configuration with all defaults resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub eps: Vec<f64>,
    pub ns: Vec<usize>,
    pub m: usize,
    pub ref_levels: usize,
    pub schemes: Vec<SchemeName>,
    pub reduced_mode: ReducedMode,
    pub picard: PicardConfig,
}

fn parse_lines(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::config(k, "unknown key"));
        }
        if v.is_empty() {
            return Err(Error::config(k, "missing value"));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::config(k, "given more than once"));
        }
    }
    Ok(map)
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}` as a number")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| number(key, s.trim())).collect()
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

/// Smallest power of two `m >= 4` whose sub-mesh size is at most `eps / 4`.
pub fn default_resolution(n: usize, eps: f64) -> usize {
    let h = std::f64::consts::SQRT_2 / n as f64;
    let mut m = 4;
    while eps.is_finite() && h / m as f64 > eps / 4.0 && m < 1 << 12 {
        m *= 2;
    }
    m
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_lines(text)?;
        let get = |k: &str| map.get(k).map(String::as_str);

        let alpha = match get("problem.alpha").unwrap_or("periodic") {
            "constant" => AlphaKind::Constant,
            "periodic" => AlphaKind::Periodic,
            "layered" => AlphaKind::Layered,
            v => return Err(Error::config("problem.alpha", format!("expected constant|periodic|layered, got `{v}`"))),
        };
        let a0 = positive("problem.alpha.a0", get("problem.alpha.a0").map_or(Ok(1.0), |v| number("problem.alpha.a0", v))?)?;
        let rho: f64 = get("problem.alpha.rho").map_or(Ok(0.5), |v| number("problem.alpha.rho", v))?;
        let rho_ok = match alpha {
            AlphaKind::Layered => (0.0..2.0).contains(&rho),
            _ => (0.0..1.0).contains(&rho),
        };
        if !rho_ok {
            return Err(Error::config("problem.alpha.rho", format!("{rho} is outside the admissible range")));
        }
        let eps = get("problem.eps").map_or(Ok(vec![1.0 / 16.0]), |v| list::<f64>("problem.eps", v))?;
        for &e in &eps {
            positive("problem.eps", e)?;
        }
        let c = positive("problem.b.c", get("problem.b.c").map_or(Ok(1.0), |v| number("problem.b.c", v))?)?;
        let b = match get("problem.b").unwrap_or("sin") {
            "sin" => BKind::Sin,
            "constant" => BKind::Constant(c),
            v => return Err(Error::config("problem.b", format!("expected sin|constant, got `{v}`"))),
        };
        if get("problem.b.c").is_some() && b == BKind::Sin {
            return Err(Error::config("problem.b.c", "only meaningful with problem.b = constant"));
        }
        let source = match get("problem.f").unwrap_or("one") {
            "manufactured" => Source::Manufactured,
            "one" => Source::One,
            "small" => Source::Small,
            "zero" => Source::Zero,
            v => return Err(Error::config("problem.f", format!("expected manufactured|one|small|zero, got `{v}`"))),
        };
        let problem = ProblemSpec { alpha, a0, rho, b, source };

        let ns = get("mesh.n").map_or(Ok(vec![8]), |v| list::<usize>("mesh.n", v))?;
        if ns.iter().any(|&n| n == 0) {
            return Err(Error::config("mesh.n", "mesh sizes must be positive"));
        }
        let eps_min = match alpha {
            AlphaKind::Constant => f64::INFINITY,
            _ => eps.iter().copied().fold(f64::INFINITY, f64::min),
        };
        let n_min = *ns.iter().min().expect("non-empty list");
        let m = match get("mesh.m") {
            Some(v) => number("mesh.m", v)?,
            None => default_resolution(n_min, eps_min),
        };
        if m < 3 {
            return Err(Error::config("mesh.m", format!("m = {m} leaves no bubble degree of freedom (need m >= 3)")));
        }
        let ref_levels = match get("mesh.ref_levels") {
            Some(v) => number("mesh.ref_levels", v)?,
            None => (m.next_power_of_two().trailing_zeros() + 1) as usize,
        };
        if ref_levels > 12 {
            return Err(Error::config("mesh.ref_levels", "at most 12 levels"));
        }

        let schemes = get("scheme")
            .unwrap_or("rfb_coupled")
            .split(',')
            .map(|s| {
                SchemeName::parse(s.trim()).ok_or_else(|| {
                    Error::config("scheme", format!("expected galerkin|rfb_coupled|rfb_decoupled|rfb_reduced, got `{}`", s.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let reduced_mode = match get("reduced.mode") {
            Some(v) => v.parse().map_err(|_| Error::config("reduced.mode", format!("expected field|element_average|point_sample, got `{v}`")))?,
            None => ReducedMode::Field,
        };
        let tol = positive("picard.tol", get("picard.tol").map_or(Ok(1e-8), |v| number("picard.tol", v))?)?;
        let max_iter: usize = get("picard.max_iter").map_or(Ok(50), |v| number("picard.max_iter", v))?;
        if max_iter == 0 {
            return Err(Error::config("picard.max_iter", "must be at least 1"));
        }
        let initial_guess = match get("picard.initial_guess").unwrap_or("zero") {
            "zero" => InitialGuess::Zero,
            "galerkin" => InitialGuess::Galerkin,
            v => return Err(Error::config("picard.initial_guess", format!("expected zero|galerkin, got `{v}`"))),
        };
        let linear_tol = positive(
            "picard.linear_tol",
            get("picard.linear_tol").map_or(Ok((tol * 1e-2).min(1e-12)), |v| number("picard.linear_tol", v))?,
        )?;
        let cfg = RunConfig {
            problem,
            eps,
            ns,
            m,
            ref_levels,
            schemes,
            reduced_mode,
            picard: PicardConfig {
                tol,
                max_iter,
                initial_guess,
                linear_tol,
            },
        };
        cfg.study().validate().map_err(|e| Error::config("mesh.ref_levels", e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn scheme(&self, name: SchemeName) -> Scheme {
        match name {
            SchemeName::Galerkin => Scheme::Galerkin,
            SchemeName::RfbCoupled => Scheme::RfbCoupled,
            SchemeName::RfbDecoupled => Scheme::RfbDecoupled,
            SchemeName::RfbReduced => Scheme::RfbReduced(self.reduced_mode),
        }
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            schemes: self.schemes.iter().map(|&s| self.scheme(s)).collect(),
            ns: self.ns.clone(),
            m: self.m,
            eps: self.eps.clone(),
            problem: self.problem,
            picard: self.picard.clone(),
            ref_levels: self.ref_levels,
        }
    }

    /// Effective configuration in the input format; parsing it yields an
    /// identical `RunConfig`.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let p = &self.problem;
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line(
            "problem.alpha",
            match p.alpha {
                AlphaKind::Constant => "constant",
                AlphaKind::Periodic => "periodic",
                AlphaKind::Layered => "layered",
            }
            .into(),
        );
        line("problem.alpha.a0", format!("{}", p.a0));
        line("problem.alpha.rho", format!("{}", p.rho));
        line("problem.eps", join(self.eps.iter().map(|e| format!("{e}")).collect()));
        match p.b {
            BKind::Sin => line("problem.b", "sin".into()),
            BKind::Constant(c) => {
                line("problem.b", "constant".into());
                line("problem.b.c", format!("{c}"));
            }
        }
        line(
            "problem.f",
            match p.source {
                Source::Manufactured => "manufactured",
                Source::One => "one",
                Source::Small => "small",
                Source::Zero => "zero",
            }
            .into(),
        );
        line("mesh.n", join(self.ns.iter().map(|n| n.to_string()).collect()));
        line("mesh.m", self.m.to_string());
        line("mesh.ref_levels", self.ref_levels.to_string());
        line("scheme", join(self.schemes.iter().map(|s| s.name().to_string()).collect()));
        line("reduced.mode", self.reduced_mode.name().into());
        line("picard.tol", format!("{}", self.picard.tol));
        line("picard.max_iter", self.picard.max_iter.to_string());
        line("picard.initial_guess", self.picard.initial_guess.label().into());
        line("picard.linear_tol", format!("{}", self.picard.linear_tol));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            e => panic!("expected a config error, got {e}"),
        }
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = RunConfig::parse("# nothing but defaults\n\n").unwrap();
        assert_eq!(cfg.ns, vec![8]);
        assert_eq!(cfg.m, 16);
        assert_eq!(cfg.schemes, vec![SchemeName::RfbCoupled]);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);

        let text = "problem.alpha = layered\nproblem.alpha.rho = 1.5 # comment\nproblem.eps = 0.125, 0.0625\n\
                    problem.b = constant\nproblem.b.c = 2\nscheme = galerkin, rfb_reduced\nreduced.mode = point_sample\n\
                    mesh.n = 4, 8\nmesh.m = 8\nmesh.ref_levels = 4\npicard.tol = 1e-9\npicard.initial_guess = galerkin\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.problem.b, BKind::Constant(2.0));
        assert_eq!(cfg.study().schemes, vec![Scheme::Galerkin, Scheme::RfbReduced(ReducedMode::PointSample)]);
        assert_eq!(cfg.picard.linear_tol, 1e-12);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("colour = red", "colour"),
            ("mesh.n = eight", "mesh.n"),
            ("mesh.m = 2", "mesh.m"),
            ("scheme = newton", "scheme"),
            ("picard.tol = -1", "picard.tol"),
            ("picard.max_iter = 0", "picard.max_iter"),
            ("problem.alpha.rho = 1.2", "problem.alpha.rho"),
            ("problem.b.c = 2", "problem.b.c"),
            ("mesh.n = 3\nmesh.m = 4\nmesh.ref_levels = 1", "mesh.ref_levels"),
            ("mesh.n = 4\nmesh.n = 8", "mesh.n"),
            ("reduced.mode = mean", "reduced.mode"),
        ];
        for (text, key) in cases {
            assert_eq!(key_of(RunConfig::parse(text).unwrap_err()), key, "{text}");
        }
        assert!(matches!(RunConfig::parse("just words"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn resolution_default_resolves_eps() {
        assert_eq!(default_resolution(8, 1.0 / 16.0), 16);
        assert_eq!(default_resolution(8, f64::INFINITY), 4);
        assert_eq!(default_resolution(64, 1.0), 4);
    }
}
