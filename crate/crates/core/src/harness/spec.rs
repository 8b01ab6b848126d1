use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algorithms::{Variant, VariantConfig};
use crate::environments::{LinearInstanceConfig, NoiseConfig, ProblemInstance, SettingKind};

use super::HarnessError;

fn default_sigma2() -> f64 {
    0.01
}
fn default_q() -> usize {
    1
}

/// Environment family and noise levels; the instance itself is drawn from
/// the seed of each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub kind: SettingKind,
    #[serde(default = "default_sigma2")]
    pub sigma_v2: f64,
    #[serde(default = "default_sigma2")]
    pub sigma_w2: f64,
    /// Number of auxiliary feedback channels (linear setting only).
    #[serde(default = "default_q")]
    pub num_feedback: usize,
    /// Share one problem instance across all replications.
    #[serde(default)]
    pub fixed_instance: bool,
    /// Feedback noise independent of the reward noise (a `ρ = 0` instance).
    #[serde(default)]
    pub independent_feedback: bool,
}

impl InstanceSpec {
    pub fn build(&self, seed: u64, noise: NoiseConfig) -> Result<ProblemInstance, HarnessError> {
        let inst = match self.kind {
            SettingKind::Linear => {
                let cfg = LinearInstanceConfig::default();
                ProblemInstance::linear_multi(
                    seed,
                    cfg.d,
                    noise.sigma_v2,
                    &vec![noise.sigma_w2; self.num_feedback],
                    cfg.num_actions,
                    cfg.coordinate_bound,
                )?
            }
            kind => ProblemInstance::of_kind(kind, seed, noise)?,
        };
        Ok(if self.independent_feedback {
            inst.with_independent_feedback()
        } else {
            inst
        })
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            sigma_v2: self.sigma_v2,
            sigma_w2: self.sigma_w2,
        }
    }
}

fn default_sigma_w() -> f64 {
    0.1
}

/// Parameter swept across runs. Values are listed in the order they are run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    /// Replaces the bias of every biased variant.
    Bias { values: Vec<f64> },
    /// Replaces the history size of every history variant.
    History { values: Vec<usize> },
    /// Noise standard deviations `σ_v` with `σ_w` held fixed; applies to
    /// every algorithm.
    Correlation {
        sigma_v: Vec<f64>,
        #[serde(default = "default_sigma_w")]
        sigma_w: f64,
    },
}

impl Sweep {
    pub fn axis_name(&self) -> &'static str {
        match self {
            Sweep::Bias { .. } => "bias",
            Sweep::History { .. } => "n_h",
            Sweep::Correlation { .. } => "sigma_v",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::Bias { values } => values.len(),
            Sweep::History { values } => values.len(),
            Sweep::Correlation { sigma_v, .. } => sigma_v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            Sweep::Bias { values } => values[i],
            Sweep::History { values } => values[i] as f64,
            Sweep::Correlation { sigma_v, .. } => sigma_v[i],
        }
    }

    /// Whether `algo` changes along this axis.
    pub fn affects(&self, algo: &VariantConfig) -> bool {
        match self {
            Sweep::Bias { .. } => matches!(algo.variant, Variant::Biased { .. }),
            Sweep::History { .. } => matches!(algo.variant, Variant::History { .. }),
            Sweep::Correlation { .. } => true,
        }
    }

    /// `algo` and the instance noise at sweep point `i`.
    pub fn apply(
        &self,
        i: usize,
        algo: &VariantConfig,
        noise: NoiseConfig,
    ) -> (VariantConfig, NoiseConfig) {
        let mut algo = algo.clone();
        let mut noise = noise;
        match self {
            Sweep::Bias { values } => {
                if let Variant::Biased { bias } = &mut algo.variant {
                    *bias = values[i];
                }
            }
            Sweep::History { values } => {
                if let Variant::History { samples } = &mut algo.variant {
                    *samples = values[i];
                }
            }
            Sweep::Correlation { sigma_v, sigma_w } => {
                noise = NoiseConfig {
                    sigma_v2: sigma_v[i] * sigma_v[i],
                    sigma_w2: sigma_w * sigma_w,
                };
            }
        }
        (algo, noise)
    }
}

/// Correlation `σ_w / sqrt(σ_v² + σ_w²)` between reward and a single
/// auxiliary feedback.
pub fn correlation_for(sigma_v: f64, sigma_w: f64) -> f64 {
    sigma_w / (sigma_v * sigma_v + sigma_w * sigma_w).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub instance: InstanceSpec,
    pub algorithms: Vec<VariantConfig>,
    pub horizon: usize,
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |field: &str, msg: &str| Err(HarnessError::Config(format!("{field}: {msg}")));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return bad("name", "must be nonempty and use only [A-Za-z0-9._-]");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1");
        }
        if self.algorithms.is_empty() {
            return bad("algorithms", "must list at least one algorithm");
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            a.validate()
                .map_err(|e| HarnessError::Config(format!("algorithms[{i}]: {e}")))?;
        }
        if self
            .algorithms
            .iter()
            .any(|a| a.name().contains([',', '"', '\n']))
        {
            return bad(
                "algorithms",
                "labels must not contain commas, quotes or newlines",
            );
        }
        let mut names: Vec<String> = self.algorithms.iter().map(|a| a.name()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad(
                "algorithms",
                "names must be unique (set `label` to disambiguate)",
            );
        }
        if let Some(s) = &self.sweep {
            if s.is_empty() {
                return bad("sweep", "values must be nonempty");
            }
            let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
            match s {
                Sweep::Bias { values } if values.iter().any(|v| !v.is_finite()) => {
                    return bad("sweep.values", "must be finite")
                }
                Sweep::History { values } if values.contains(&0) => {
                    return bad("sweep.values", "must be >= 1")
                }
                Sweep::Correlation { sigma_v, sigma_w }
                    if sigma_v.iter().any(|v| !finite_nonneg(*v)) || !finite_nonneg(*sigma_w) =>
                {
                    return bad(
                        "sweep.sigma_v",
                        "standard deviations must be finite and >= 0",
                    )
                }
                _ => {}
            }
        }
        if self.instance.num_feedback == 0 {
            return bad("instance.num_feedback", "must be at least 1");
        }
        if self.instance.num_feedback > 1 && self.instance.kind != SettingKind::Linear {
            return bad(
                "instance.num_feedback",
                "only the linear setting supports more than one feedback",
            );
        }
        if matches!(self.threads, Some(0)) {
            return bad("threads", "must be at least 1");
        }
        self.instance
            .build(0, self.instance.noise())
            .map_err(|e| HarnessError::Config(format!("instance: {e}")))?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Self::from_value(
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?,
        )
    }

    pub fn from_value(value: Value) -> Result<Self, HarnessError> {
        let spec: Self =
            serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// Sets the dotted path `key` in a JSON config to `raw`, parsed as JSON when
/// possible and as a string otherwise.
pub fn apply_override(config: &mut Value, assignment: &str) -> Result<(), HarnessError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        HarnessError::Config(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let key = key.trim();
    if key.is_empty() {
        return Err(HarnessError::Config(format!(
            "override `{assignment}` has an empty key"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    HarnessError::Config(format!("{key}: `{part}` is not an array index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    HarnessError::Config(format!("{key}: index {idx} out of range ({len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(HarnessError::Config(format!(
                    "{key}: `{part}` is not inside an object"
                )))
            }
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "name": "demo",
        "instance": {"kind": "linear"},
        "algorithms": [{"learner": "oful", "variant": {"kind": "vanilla"}},
                       {"learner": "oful", "variant": {"kind": "af"}}],
        "horizon": 10,
        "replications": 2
    }"#;

    #[test]
    fn parses_with_defaults() {
        let s = ExperimentSpec::from_json(BASE).unwrap();
        assert_eq!(s.instance.sigma_v2, 0.01);
        assert_eq!(s.master_seed, 0);
        assert!(s.sweep.is_none());
    }

    #[test]
    fn errors_name_the_field() {
        let mut v: Value = serde_json::from_str(BASE).unwrap();
        v.as_object_mut().unwrap().remove("horizon");
        let e = ExperimentSpec::from_value(v).unwrap_err().to_string();
        assert!(e.contains("horizon"), "{e}");

        let mut v: Value = serde_json::from_str(BASE).unwrap();
        v["bogus"] = Value::from(1);
        let e = ExperimentSpec::from_value(v).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");

        let mut v: Value = serde_json::from_str(BASE).unwrap();
        v["replications"] = Value::from(0);
        let e = ExperimentSpec::from_value(v).unwrap_err().to_string();
        assert!(e.contains("replications"), "{e}");

        let mut v: Value = serde_json::from_str(BASE).unwrap();
        v["algorithms"][1]["variant"] = serde_json::json!({"kind": "vanilla"});
        let e = ExperimentSpec::from_value(v).unwrap_err().to_string();
        assert!(e.contains("algorithms"), "{e}");
    }

    #[test]
    fn overrides() {
        let mut v: Value = serde_json::from_str(BASE).unwrap();
        apply_override(&mut v, "replications=7").unwrap();
        apply_override(&mut v, "instance.sigma_v2=0.04").unwrap();
        apply_override(&mut v, "algorithms.1.learner=lin-ucb").unwrap();
        let s = ExperimentSpec::from_value(v.clone()).unwrap();
        assert_eq!(s.replications, 7);
        assert_eq!(s.instance.sigma_v2, 0.04);
        assert_eq!(s.algorithms[1].name(), "Lin-UCB-AF");
        assert!(apply_override(&mut v, "noequals").is_err());
        assert!(apply_override(&mut v, "algorithms.9.learner=oful").is_err());
    }

    #[test]
    fn correlation_identity() {
        assert!((correlation_for(0.1, 0.1) - 0.7071).abs() < 1e-4);
        assert!((correlation_for(0.0655, 0.1) - 0.8365).abs() < 1e-3);
        let sweep = Sweep::Correlation {
            sigma_v: vec![0.3, 0.2, 0.1528, 0.1, 0.0655],
            sigma_w: 0.1,
        };
        let rhos: Vec<f64> = (0..5)
            .map(|i| correlation_for(sweep.value(i), 0.1))
            .collect();
        assert!(rhos.windows(2).all(|w| w[0] < w[1]));
    }
}
