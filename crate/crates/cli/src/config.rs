//! Run configuration assembled from three layers: built-in defaults, an
//! optional config file, and command-line flags. Later layers win field by
//! field. Files are either flat `key = value` text (with `#` comments) or a
//! JSON object when the path ends in `.json`; unknown or malformed keys are
//! rejected with their location.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use lambda_shelve::{Level, SystemParams};

use crate::output::Format;

/// Spacing of the `density` time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum GridSpacing {
    #[default]
    Linear,
    Log,
}

/// One layer of optional settings.
#[derive(Debug, Default, Clone)]
pub struct Overlay {
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub n: Option<u64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub initial: Option<u8>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub grid_points: Option<u64>,
    pub grid: Option<GridSpacing>,
    pub ks_samples: Option<u64>,
    pub theta: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub plot: Option<PathBuf>,
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: SystemParams,
    pub n: u64,
    pub horizon: f64,
    pub seed: u64,
    pub initial: Level,
    pub t_min: f64,
    pub t_max: f64,
    pub grid_points: usize,
    pub grid: GridSpacing,
    pub ks_samples: usize,
    /// Override for the long/short classification threshold; derived from
    /// the analytic split when absent.
    pub theta: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub plot: Option<PathBuf>,
}

const KNOWN_KEYS: &str = "omega1, omega2, delta1, delta2, gamma1, gamma2, n, \
                          horizon, seed, initial, t_min, t_max, grid_points, grid, \
                          ks_samples, theta, out, format, plot";

impl Overlay {
    /// Apply one `key = value` pair. `place` locates the pair in error text.
    fn set(&mut self, key: &str, value: &str, place: &str) -> Result<(), String> {
        fn float(value: &str, key: &str, place: &str) -> Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("key `{key}` expects a number, got `{value}` ({place})"))
        }
        fn integer(value: &str, key: &str, place: &str) -> Result<u64, String> {
            value.parse::<u64>().map_err(|_| {
                format!("key `{key}` expects a nonnegative integer, got `{value}` ({place})")
            })
        }
        fn path(value: &str, key: &str, place: &str) -> Result<PathBuf, String> {
            if value.is_empty() {
                return Err(format!("key `{key}` expects a path ({place})"));
            }
            Ok(PathBuf::from(value))
        }
        match key {
            "omega1" => self.omega1 = Some(float(value, key, place)?),
            "omega2" => self.omega2 = Some(float(value, key, place)?),
            "delta1" => self.delta1 = Some(float(value, key, place)?),
            "delta2" => self.delta2 = Some(float(value, key, place)?),
            "gamma1" => self.gamma1 = Some(float(value, key, place)?),
            "gamma2" => self.gamma2 = Some(float(value, key, place)?),
            "n" => self.n = Some(integer(value, key, place)?),
            "horizon" => self.horizon = Some(float(value, key, place)?),
            "seed" => self.seed = Some(integer(value, key, place)?),
            "initial" => {
                self.initial = Some(integer(value, key, place)? as u8);
            }
            "t_min" => self.t_min = Some(float(value, key, place)?),
            "t_max" => self.t_max = Some(float(value, key, place)?),
            "grid_points" => self.grid_points = Some(integer(value, key, place)?),
            "grid" => {
                self.grid = Some(GridSpacing::from_str(value, true).map_err(|_| {
                    format!("key `grid` expects `linear` or `log`, got `{value}` ({place})")
                })?);
            }
            "ks_samples" => self.ks_samples = Some(integer(value, key, place)?),
            "theta" => self.theta = Some(float(value, key, place)?),
            "out" => self.out = Some(path(value, key, place)?),
            "format" => {
                self.format = Some(Format::from_str(value, true).map_err(|_| {
                    format!("key `format` expects `csv` or `json`, got `{value}` ({place})")
                })?);
            }
            "plot" => self.plot = Some(path(value, key, place)?),
            _ => {
                return Err(format!(
                    "unknown key `{key}` ({place}); known keys: {KNOWN_KEYS}"
                ))
            }
        }
        Ok(())
    }

    fn is_set(&self, key: &str) -> bool {
        match key {
            "omega1" => self.omega1.is_some(),
            "omega2" => self.omega2.is_some(),
            "delta1" => self.delta1.is_some(),
            "delta2" => self.delta2.is_some(),
            "gamma1" => self.gamma1.is_some(),
            "gamma2" => self.gamma2.is_some(),
            "n" => self.n.is_some(),
            "horizon" => self.horizon.is_some(),
            "seed" => self.seed.is_some(),
            "initial" => self.initial.is_some(),
            "t_min" => self.t_min.is_some(),
            "t_max" => self.t_max.is_some(),
            "grid_points" => self.grid_points.is_some(),
            "grid" => self.grid.is_some(),
            "ks_samples" => self.ks_samples.is_some(),
            "theta" => self.theta.is_some(),
            "out" => self.out.is_some(),
            "format" => self.format.is_some(),
            "plot" => self.plot.is_some(),
            _ => false,
        }
    }

    /// Parse a config file, dispatching on the extension.
    pub fn from_file(path: &Path) -> Result<Overlay, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config `{}`: {e}", path.display()))?;
        if path.extension().is_some_and(|ext| ext == "json") {
            Self::from_json(&text, path)
        } else {
            Self::from_key_values(&text, path)
        }
    }

    fn from_key_values(text: &str, path: &Path) -> Result<Overlay, String> {
        let mut overlay = Overlay::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let place = format!("{}, line {}", path.display(), i + 1);
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("expected `key = value`, got `{line}` ({place})"));
            };
            let key = key.trim();
            let value = value.trim();
            if overlay.is_set(key) {
                return Err(format!("duplicate key `{key}` ({place})"));
            }
            overlay.set(key, value, &place)?;
        }
        Ok(overlay)
    }

    fn from_json(text: &str, path: &Path) -> Result<Overlay, String> {
        let place = path.display().to_string();
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| format!("invalid JSON in `{place}`: {e}"))?;
        let serde_json::Value::Object(map) = value else {
            return Err(format!("config `{place}` must be a JSON object"));
        };
        let mut overlay = Overlay::default();
        for (key, v) in &map {
            let mut rendered = String::new();
            let _ = write!(rendered, "{v}");
            let text_value = match v {
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::String(s) => s.clone(),
                _ => rendered,
            };
            overlay.set(key, &text_value, &place)?;
        }
        Ok(overlay)
    }

    /// Field-by-field override: values present in `self` beat `base`.
    pub fn over(self, base: Overlay) -> Overlay {
        Overlay {
            omega1: self.omega1.or(base.omega1),
            omega2: self.omega2.or(base.omega2),
            delta1: self.delta1.or(base.delta1),
            delta2: self.delta2.or(base.delta2),
            gamma1: self.gamma1.or(base.gamma1),
            gamma2: self.gamma2.or(base.gamma2),
            n: self.n.or(base.n),
            horizon: self.horizon.or(base.horizon),
            seed: self.seed.or(base.seed),
            initial: self.initial.or(base.initial),
            t_min: self.t_min.or(base.t_min),
            t_max: self.t_max.or(base.t_max),
            grid_points: self.grid_points.or(base.grid_points),
            grid: self.grid.or(base.grid),
            ks_samples: self.ks_samples.or(base.ks_samples),
            theta: self.theta.or(base.theta),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
            plot: self.plot.or(base.plot),
        }
    }

    /// Fill in defaults and validate the result.
    pub fn resolve(self) -> Result<RunConfig, String> {
        let params = SystemParams::new(
            self.omega1.unwrap_or(0.0),
            self.omega2.unwrap_or(0.0),
            self.delta1.unwrap_or(0.0),
            self.delta2.unwrap_or(0.0),
            self.gamma1.unwrap_or(0.0),
            self.gamma2.unwrap_or(0.0),
        )
        .map_err(|e| e.to_string())?;
        let initial = match self.initial.unwrap_or(1) {
            1 => Level::One,
            2 => Level::Two,
            other => return Err(format!("initial level must be 1 or 2, got {other}")),
        };
        let horizon = self.horizon.unwrap_or(1000.0);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err("horizon must be positive and finite".into());
        }
        let t_min = self.t_min.unwrap_or(0.0);
        if !(t_min >= 0.0 && t_min.is_finite()) {
            return Err("t_min must be nonnegative and finite".into());
        }
        let t_max = self.t_max.unwrap_or(20.0);
        if !(t_max > t_min && t_max.is_finite()) {
            return Err("t_max must be finite and greater than t_min".into());
        }
        let grid = self.grid.unwrap_or_default();
        if grid == GridSpacing::Log && t_min <= 0.0 {
            return Err("a log grid needs a positive t_min".into());
        }
        let grid_points = self.grid_points.unwrap_or(201);
        if grid_points < 2 {
            return Err("grid_points must be at least 2".into());
        }
        let ks_samples = self.ks_samples.unwrap_or(20_000);
        if ks_samples < 10 {
            return Err("ks_samples must be at least 10".into());
        }
        if let Some(theta) = self.theta {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err("theta must be positive and finite".into());
            }
        }
        Ok(RunConfig {
            params,
            n: self.n.unwrap_or(1000),
            horizon,
            seed: self.seed.unwrap_or(1),
            initial,
            t_min,
            t_max,
            grid_points: grid_points as usize,
            grid,
            ks_samples: ks_samples as usize,
            theta: self.theta,
            out: self.out,
            format: self.format.unwrap_or_default(),
            plot: self.plot,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn key_value_parsing_with_comments() {
        let text = "# reference configuration\nomega1 = 0.5\nomega2=5e-3 # weak drive\n\ndelta2 = 0.05\ngamma1 = 1\ngamma2 = 1e-4\nn = 64\n";
        let overlay = Overlay::from_key_values(text, &PathBuf::from("x.cfg")).unwrap();
        assert_eq!(overlay.omega1, Some(0.5));
        assert_eq!(overlay.omega2, Some(5e-3));
        assert_eq!(overlay.delta1, None);
        assert_eq!(overlay.n, Some(64));
        let cfg = overlay.resolve().unwrap();
        assert_eq!(cfg.params.omega1(), 0.5);
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.format, Format::Csv);
        assert_eq!(cfg.grid, GridSpacing::Linear);
        assert_eq!(cfg.t_min, 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line() {
        let text = "omega1 = 0.5\nomega3 = 1.0\n";
        let err = Overlay::from_key_values(text, &PathBuf::from("x.cfg")).unwrap_err();
        assert!(err.contains("omega3"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_and_malformed_entries_are_rejected() {
        let dup = "gamma1 = 1\ngamma1 = 2\n";
        let err = Overlay::from_key_values(dup, &PathBuf::from("x.cfg")).unwrap_err();
        assert!(err.contains("duplicate"), "{err}");
        let bad = "gamma1: 1\n";
        let err = Overlay::from_key_values(bad, &PathBuf::from("x.cfg")).unwrap_err();
        assert!(err.contains("key = value"), "{err}");
        let bad_type = "n = 1.5\n";
        let err = Overlay::from_key_values(bad_type, &PathBuf::from("x.cfg")).unwrap_err();
        assert!(err.contains("nonnegative integer"), "{err}");
        let bad_grid = "grid = cubic\n";
        let err = Overlay::from_key_values(bad_grid, &PathBuf::from("x.cfg")).unwrap_err();
        assert!(err.contains("linear"), "{err}");
    }

    #[test]
    fn json_objects_parse_with_the_same_keys() {
        let text = r#"{"omega1": 0.5, "gamma1": 1.0, "seed": 9, "initial": 2,
                       "format": "json", "out": "table.json", "grid": "log",
                       "t_min": 0.1}"#;
        let overlay = Overlay::from_json(text, &PathBuf::from("x.json")).unwrap();
        let cfg = overlay.resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.initial, Level::Two);
        assert_eq!(cfg.format, Format::Json);
        assert_eq!(cfg.out, Some(PathBuf::from("table.json")));
        assert_eq!(cfg.grid, GridSpacing::Log);
        let bad = r#"{"omega9": 1}"#;
        assert!(Overlay::from_json(bad, &PathBuf::from("x.json")).is_err());
    }

    #[test]
    fn flags_override_files_override_defaults() {
        let file = Overlay {
            omega1: Some(0.5),
            gamma1: Some(1.0),
            seed: Some(5),
            format: Some(Format::Json),
            ..Overlay::default()
        };
        let flags = Overlay {
            seed: Some(11),
            ..Overlay::default()
        };
        let cfg = flags.over(file).resolve().unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.params.omega1(), 0.5);
        assert_eq!(cfg.n, 1000);
        assert_eq!(cfg.format, Format::Json, "file value survives empty flags");
    }

    #[test]
    fn validation_failures_name_the_offender() {
        let err = Overlay {
            gamma1: Some(1.0),
            initial: Some(3),
            ..Overlay::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.contains("initial"), "{err}");
        let err = Overlay::default().resolve().unwrap_err();
        assert!(err.contains("gamma"), "{err}");
        let err = Overlay {
            gamma1: Some(1.0),
            grid: Some(GridSpacing::Log),
            ..Overlay::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.contains("log grid"), "{err}");
        let err = Overlay {
            gamma1: Some(1.0),
            t_min: Some(5.0),
            t_max: Some(1.0),
            ..Overlay::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.contains("t_max"), "{err}");
    }
}
