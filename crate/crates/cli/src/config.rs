//! Run configuration: JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Singularities,
    Classify,
    Sector,
    Trace,
    Poisson,
    Wedge,
    Ergodic,
    Metric,
    FamilySweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Singularities => "singularities",
            Command::Classify => "classify",
            Command::Sector => "sector",
            Command::Trace => "trace",
            Command::Poisson => "poisson",
            Command::Wedge => "wedge",
            Command::Ergodic => "ergodic",
            Command::Metric => "metric",
            Command::FamilySweep => "family-sweep",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Command::Wedge | Command::Ergodic | Command::Metric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MetricCheck {
    Curvature,
    Mass,
    Schwarz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

/// Every parameter of every command. Absent fields take per-command defaults
/// in [`RunConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// `linear:RE,IM`, `jouanolou:D` or `random:D:SEED`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// JSON file `{"alpha": poly, "beta": poly}` with a chart-0 form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub form: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chart: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jet_order: Option<u32>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_model: Option<bool>,
    /// Points per axis of the model polyline grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,

    /// `(Re z, Im z, Re w, Im w)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arc: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at: Option<[f64; 2]>,
    /// `zero` or `power:P`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<String>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<i64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<Vec<[f64; 4]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_walk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes_per_axis: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<MetricCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_path: Option<[[f64; 2]; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Disc radius of the Ahlfors average.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.display().to_string(), source: e })?;
        Self::from_json(&text).map_err(|e| ConfigError::Parse { path: path.display().to_string(), source: e })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn merge(mut self, flags: &RunConfig) -> Self {
        let s = &mut self;
        overlay!(s, flags; command, preset, form, chart, jet_order, lambda, alpha, trace_model, grid, start, arc, data,
            gamma, at, tail, a1, b1, eps, delta, pairs, n_max, starts, n, horizon, h_walk, boxes_per_axis, check,
            samples, lambda_path, steps, radius, seed, tol, slack, out, report, format);
        self
    }

    /// Fill per-command defaults and check invariants.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let cmd = self.command.ok_or_else(|| ConfigError::Invalid("no command given".into()))?;
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(ConfigError::Invalid(format!("{}: missing {what}", cmd.name()))) };
        match cmd {
            Command::Singularities | Command::Classify => {
                need(self.preset.is_some() || self.form.is_some(), "--preset or --form")?;
                self.chart.get_or_insert(0);
                if cmd == Command::Classify {
                    self.jet_order.get_or_insert(6);
                }
                self.tol.get_or_insert(1e-9);
            }
            Command::Sector => {
                need(self.lambda.is_some(), "--lambda")?;
                self.trace_model.get_or_insert(false);
                if self.trace_model == Some(true) {
                    self.grid.get_or_insert(24);
                    self.tol.get_or_insert(1e-12);
                }
            }
            Command::Trace => {
                need(self.preset.is_some() || self.form.is_some(), "--preset or --form")?;
                need(self.start.is_some(), "--start")?;
                self.chart.get_or_insert(0);
                self.arc.get_or_insert(50.0);
                self.tol.get_or_insert(1e-6);
            }
            Command::Poisson => {
                need(self.data.is_some(), "--data")?;
                self.gamma.get_or_insert(2.0);
                self.at.get_or_insert([0.0, 1.0]);
                self.tail.get_or_insert_with(|| "zero".into());
            }
            Command::Wedge => {
                self.lambda.get_or_insert([-1.0, 1.0]);
                self.a1.get_or_insert([1.0, 0.0]);
                self.b1.get_or_insert([0.3, 0.0]);
                self.eps.get_or_insert_with(|| vec![1e-2, 5e-3, 2.5e-3]);
                self.delta.get_or_insert(0.3);
                self.pairs.get_or_insert(2000);
                self.n_max.get_or_insert(4);
                self.slack.get_or_insert(1.05);
            }
            Command::Ergodic => {
                self.preset.get_or_insert_with(|| "jouanolou:2".into());
                self.starts.get_or_insert_with(|| vec![[0.3, 0.0, 0.2, 0.0], [-0.4, 0.0, 0.1, 0.0]]);
                self.n.get_or_insert(200);
                self.horizon.get_or_insert(2000);
                self.h_walk.get_or_insert(0.01);
                self.boxes_per_axis.get_or_insert(3);
                self.slack.get_or_insert(1.05);
            }
            Command::Metric => {
                need(self.check.is_some(), "--check")?;
                self.samples.get_or_insert(1000);
                match self.check {
                    Some(MetricCheck::Curvature) => {
                        self.tol.get_or_insert(1e-4);
                    }
                    Some(MetricCheck::Schwarz) => {
                        self.tol.get_or_insert(1e-8);
                    }
                    Some(MetricCheck::Mass) => {
                        self.lambda.get_or_insert([-1.0, 1.0]);
                        self.tol.get_or_insert(1e-2);
                    }
                    None => unreachable!(),
                }
            }
            Command::FamilySweep => {
                need(self.lambda_path.is_some(), "--lambda-path")?;
                self.steps.get_or_insert(5);
                self.radius.get_or_insert(0.9);
            }
        }
        if cmd.stochastic() && self.seed.is_none() && !(cmd == Command::Metric && self.check == Some(MetricCheck::Mass)) {
            return Err(ConfigError::Invalid(format!("{}: a --seed is required", cmd.name())));
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(ConfigError::Invalid(format!("{name} must be > 0, got {x}"))),
            _ => Ok(()),
        };
        positive("tol", self.tol)?;
        positive("slack", self.slack)?;
        positive("delta", self.delta)?;
        positive("h-walk", self.h_walk)?;
        positive("arc", self.arc)?;
        positive("gamma", self.gamma)?;
        positive("radius", self.radius)?;
        if let Some(eps) = &self.eps {
            if eps.is_empty() {
                return Err(ConfigError::Invalid("eps list is empty".into()));
            }
            for e in eps {
                positive("eps", Some(*e))?;
            }
        }
        if let Some(c) = self.chart {
            if c > 2 {
                return Err(ConfigError::Invalid(format!("chart must be 0, 1 or 2, got {c}")));
            }
        }
        if self.steps == Some(0) || self.steps == Some(1) {
            return Err(ConfigError::Invalid("steps must be at least 2".into()));
        }
        for (name, v) in [("pairs", self.pairs), ("n", self.n), ("horizon", self.horizon), ("samples", self.samples)] {
            if v == Some(0) {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if let Some(h) = self.horizon {
            if h < 8 {
                return Err(ConfigError::Invalid("horizon must be at least 8 steps".into()));
            }
        }
        Ok(())
    }
}

/// Normalize typographic minus and arrow variants.
pub fn normalize(s: &str) -> String {
    s.replace(['\u{2212}', '\u{2013}'], "-").replace('\u{2192}', "->")
}

/// `"re,im"` or a single real number.
pub fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v = parse_reals(s)?;
    match v.as_slice() {
        [x] => Ok([*x, 0.0]),
        [x, y] => Ok([*x, *y]),
        _ => Err(format!("expected `re,im`, got `{s}`")),
    }
}

/// A point `"z,w"` with real coordinates or `"re_z,im_z,re_w,im_w"`.
pub fn parse_point(s: &str) -> Result<[f64; 4], String> {
    let v = parse_reals(s)?;
    match v.as_slice() {
        [z, w] => Ok([*z, 0.0, *w, 0.0]),
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        _ => Err(format!("expected `z,w` or `re_z,im_z,re_w,im_w`, got `{s}`")),
    }
}

/// Points separated by `;`.
pub fn parse_points(s: &str) -> Result<Vec<[f64; 4]>, String> {
    s.split(';').filter(|t| !t.trim().is_empty()).map(parse_point).collect()
}

/// `"a,b -> c,d"` (also with the arrow character).
pub fn parse_path(s: &str) -> Result<[[f64; 2]; 2], String> {
    let n = normalize(s);
    let parts: Vec<&str> = n.split("->").collect();
    if parts.len() != 2 {
        return Err(format!("expected `re,im -> re,im`, got `{s}`"));
    }
    Ok([parse_pair(parts[0])?, parse_pair(parts[1])?])
}

/// Comma-separated reals.
pub fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    normalize(s)
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: `{}`", t.trim())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typographic_input() {
        assert_eq!(parse_pair("\u{2212}1,1").unwrap(), [-1.0, 1.0]);
        assert_eq!(parse_points("0.3,0.2;\u{2212}0.4,0.1").unwrap(), vec![[0.3, 0.0, 0.2, 0.0], [-0.4, 0.0, 0.1, 0.0]]);
        assert_eq!(parse_path("-1,1 \u{2192} -1,1.2").unwrap(), [[-1.0, 1.0], [-1.0, 1.2]]);
        assert!(parse_pair("1,2,3").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig { command: Some(Command::Wedge), pairs: Some(10), seed: Some(1), ..Default::default() };
        let flags = RunConfig { pairs: Some(20), ..Default::default() };
        let m = file.merge(&flags);
        assert_eq!(m.pairs, Some(20));
        assert_eq!(m.seed, Some(1));
    }

    #[test]
    fn unknown_field_lists_valid_ones() {
        let e = RunConfig::from_json(r#"{"command":"wedge","pears":3}"#).unwrap_err().to_string();
        assert!(e.contains("unknown field `pears`") && e.contains("pairs"), "{e}");
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let c = RunConfig { command: Some(Command::Trace), preset: Some("jouanolou:2".into()), start: Some([0.3, 0.0, 0.2, 0.0]), tol: Some(0.0), ..Default::default() };
        assert!(c.resolve().is_err());
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        let c = RunConfig { command: Some(Command::Wedge), ..Default::default() };
        assert!(c.resolve().unwrap_err().to_string().contains("seed"));
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig { command: Some(Command::Wedge), seed: Some(3), ..Default::default() }.resolve().unwrap();
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
