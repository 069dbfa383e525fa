use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::approx::{Estimator, KMeansConfig};
use crate::controllers::{MethodSpec, TrainerSpec};
use crate::envs::{ActionSpace, Task};
use crate::eval::Anchor;
use crate::family::{enumerate_family, ContextFeature, ContextSpace, MdpFamily};
use crate::{Error, Result};

/// Top-level experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub task: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: Vec<u64>,
    /// Defaults to `runs/<experiment_id>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Defaults to the task's usual anchor.
    #[serde(default)]
    pub anchor: Option<AnchorConfig>,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub distribution: DistributionConfig,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub estimation: Option<EstimationConfig>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityConfig>,
}

fn default_eval_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorConfig {
    Baseline,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub name: String,
    pub values: Vec<f64>,
}

/// Either a grid (`features`, in the task's feature order) or an explicit
/// list of context vectors. Empty means the task's default grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default)]
    pub features: Vec<FeatureConfig>,
    #[serde(default)]
    pub explicit: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    #[default]
    Uniform,
    Explicit,
    Random,
    FailureLow,
    FailureHigh,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    #[serde(default)]
    pub scheme: SchemeConfig,
    /// Explicit scheme: unnormalized weights in family order.
    #[serde(default)]
    pub weights: Vec<f64>,
    /// Random scheme and failure jitter; derived from the global seed if absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Failure schemes: method whose mean raw return decides failures.
    #[serde(default)]
    pub reference_method: Option<String>,
    /// Failure schemes: raw-return threshold.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "all_estimators")]
    pub estimators: Vec<Estimator>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Evaluate every point so exact values and full reports are available.
    #[serde(default = "yes")]
    pub exact: bool,
    #[serde(default = "default_kmeans_iterations")]
    pub kmeans_max_iterations: usize,
}

fn all_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

fn default_repetitions() -> usize {
    10
}

fn yes() -> bool {
    true
}

fn default_kmeans_iterations() -> usize {
    KMeansConfig::default().max_iterations
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Number of seeded random distributions compared with the main one.
    #[serde(default = "default_random_distributions")]
    pub random_distributions: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_random_distributions() -> usize {
    5
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_toml(&text)
    }

    pub fn task(&self) -> Result<Task> {
        Task::from_id(&self.task)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.experiment_id))
    }

    pub fn anchor(&self, task: Task) -> Anchor {
        match self.anchor {
            Some(AnchorConfig::Baseline) => Anchor::Baseline,
            Some(AnchorConfig::Constant(c)) => Anchor::Constant(c),
            None => Anchor::default_for(task),
        }
    }

    pub fn build_family(&self, task: Task) -> Result<MdpFamily> {
        let names: Vec<String> = task.feature_names().into_iter().map(String::from).collect();
        if !self.family.explicit.is_empty() {
            return MdpFamily::explicit(task.id(), names, self.family.explicit.clone());
        }
        if self.family.features.is_empty() {
            return Ok(enumerate_family(&task.context_space()));
        }
        let features = self
            .family
            .features
            .iter()
            .map(|f| ContextFeature::new(f.name.clone(), f.values.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(enumerate_family(&ContextSpace::new(task.id(), features)?))
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iterations: self.estimation.as_ref().map_or(300, |e| e.kmeans_max_iterations),
        }
    }

    /// Every problem with the config, or nothing. Nothing runs until this passes.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let id_ok = !self.experiment_id.is_empty()
            && !self.experiment_id.starts_with('.')
            && self
                .experiment_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !id_ok {
            problems.push(format!(
                "experiment_id: `{}` must be non-empty, use only letters, digits, `-`, `_` or `.`, and not start with `.`",
                self.experiment_id
            ));
        }
        if self.eval_seeds.is_empty() {
            problems.push("eval_seeds: at least one seed is required".into());
        }
        if let Some(AnchorConfig::Constant(c)) = self.anchor {
            if !c.is_finite() || c == 0.0 {
                problems.push(format!("anchor: constant {c} cannot normalize scores"));
            }
        }

        let task = match self.task() {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(format!("task: {e}"));
                None
            }
        };
        let mut family_size = None;
        if let Some(task) = task {
            if !self.family.features.is_empty() && !self.family.explicit.is_empty() {
                problems.push("family: give either `features` or `explicit`, not both".into());
            } else {
                let expected: Vec<&str> = task.feature_names();
                let given: Vec<&str> = self.family.features.iter().map(|f| f.name.as_str()).collect();
                if !given.is_empty() && given != expected {
                    problems.push(format!(
                        "family.features: names {given:?} must be {expected:?} in that order"
                    ));
                } else {
                    match self.build_family(task) {
                        Ok(f) => family_size = Some(f.size()),
                        Err(e) => problems.push(format!("family: {e}")),
                    }
                }
            }
        }

        if self.methods.is_empty() {
            problems.push("methods: at least one method is required".into());
        }
        let mut ids = BTreeSet::new();
        for (k, m) in self.methods.iter().enumerate() {
            if m.id.is_empty() || m.id.contains(',') || m.id.contains('"') || m.id.contains('\n') {
                problems.push(format!(
                    "methods[{k}].id: `{}` must be non-empty without commas, quotes or newlines",
                    m.id
                ));
            }
            if !ids.insert(m.id.as_str()) {
                problems.push(format!("methods[{k}].id: `{}` is used twice", m.id));
            }
            if let Err(e) = m.trainer.validate() {
                problems.push(format!("methods[{k}] ({}): {e}", m.id));
            }
            if let (Some(task), TrainerSpec::TabularQ { .. }) = (task, &m.trainer) {
                if matches!(task.action_space(), ActionSpace::Box { .. }) {
                    problems.push(format!(
                        "methods[{k}] ({}): tabular_q needs discrete actions; {} is continuous",
                        m.id,
                        task.id()
                    ));
                }
            }
        }

        let d = &self.distribution;
        match d.scheme {
            SchemeConfig::Explicit => match family_size {
                _ if d.weights.is_empty() => {
                    problems.push("distribution.weights: required by the explicit scheme".into())
                }
                Some(n) if n != d.weights.len() => problems.push(format!(
                    "distribution.weights: {} weights for a family of {n}",
                    d.weights.len()
                )),
                _ => {
                    if d.weights.iter().any(|w| !w.is_finite() || *w < 0.0) || d.weights.iter().sum::<f64>() <= 0.0 {
                        problems.push("distribution.weights: must be finite, non-negative and not all zero".into());
                    }
                }
            },
            SchemeConfig::FailureLow | SchemeConfig::FailureHigh => {
                match &d.reference_method {
                    None => problems.push("distribution.reference_method: required by failure schemes".into()),
                    Some(r) if !ids.contains(r.as_str()) => {
                        problems.push(format!("distribution.reference_method: `{r}` is not a listed method"))
                    }
                    _ => {}
                }
                if !d.threshold.is_some_and(f64::is_finite) {
                    problems.push("distribution.threshold: a finite threshold is required by failure schemes".into());
                }
                if let Some(r) = d.ratio {
                    if !(r.is_finite() && r > 0.0) {
                        problems.push(format!("distribution.ratio: {r} must be positive"));
                    }
                }
                if let Some(j) = d.jitter {
                    if !(0.0..1.0).contains(&j) {
                        problems.push(format!("distribution.jitter: {j} must lie in [0, 1)"));
                    }
                }
            }
            SchemeConfig::Uniform | SchemeConfig::Random => {}
        }

        if let Some(est) = &self.estimation {
            if est.estimators.is_empty() {
                problems.push("estimation.estimators: at least one estimator is required".into());
            }
            if est.budgets.is_empty() {
                problems.push("estimation.budgets: at least one budget is required".into());
            }
            for &b in &est.budgets {
                match family_size {
                    _ if b == 0 => problems.push("estimation.budgets: budgets must be at least 1".into()),
                    Some(n) if b > n => {
                        problems.push(format!("estimation.budgets: budget {b} exceeds the family size {n}"))
                    }
                    _ => {}
                }
            }
            if est.repetitions == 0 {
                problems.push("estimation.repetitions: must be at least 1".into());
            }
            if est.kmeans_max_iterations == 0 {
                problems.push("estimation.kmeans_max_iterations: must be at least 1".into());
            }
        }
        if let Some(s) = &self.sensitivity {
            if s.random_distributions == 0 {
                problems.push("sensitivity.random_distributions: must be at least 1".into());
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment_id = "pendulum-min"
task = "pendulum"

[[methods]]
id = "baseline"
trainer = "baseline"
"#;

    #[test]
    fn minimal_config_validates() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.build_family(Task::Pendulum).unwrap().size(), 180);
        assert_eq!(c.eval_seeds, vec![0, 1, 2]);
        assert_eq!(c.output_dir(), PathBuf::from("runs/pendulum-min"));
    }

    #[test]
    fn trainer_settings_parse() {
        let text = format!(
            "{MINIMAL}\n[[methods]]\nid = \"rs\"\ntrainer = \"random_search\"\nmax_episodes = 100\neval_episodes_per_candidate = 2\nstep_size = 0.3\n"
        );
        let c = ExperimentConfig::from_toml(&text).unwrap();
        c.validate().unwrap();
        assert!(matches!(
            c.methods[1].trainer,
            TrainerSpec::RandomSearch { max_episodes: 100, .. }
        ));
    }

    #[test]
    fn oversized_budget_names_the_field() {
        let text = format!("{MINIMAL}\n[estimation]\nbudgets = [10, 500]\n");
        let err = ExperimentConfig::from_toml(&text).unwrap().validate().unwrap_err();
        let Error::InvalidConfig(p) = err else { panic!() };
        assert_eq!(p.len(), 1);
        assert!(p[0].starts_with("estimation.budgets"), "{p:?}");
    }

    #[test]
    fn all_problems_are_listed() {
        let text = r#"
experiment_id = "bad/id"
task = "pendulum"
eval_seeds = []

[distribution]
scheme = "failure_high"

[[methods]]
id = "q"
trainer = "tabular_q"
max_episodes = 0
eval_episodes_per_candidate = 1
bins = [2, 2, 2]
alpha = 0.1
gamma = 0.9
epsilon = { start = 1.0, end = 0.1, decay_episodes = 10 }
"#;
        let Error::InvalidConfig(p) = ExperimentConfig::from_toml(text).unwrap().validate().unwrap_err() else {
            panic!()
        };
        for field in [
            "experiment_id",
            "eval_seeds",
            "methods[0] (q): invalid trainer",
            "methods[0] (q): tabular_q",
            "distribution.reference_method",
            "distribution.threshold",
        ] {
            assert!(p.iter().any(|x| x.starts_with(field)), "missing {field}: {p:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml(&format!("bogus = 1\n{MINIMAL}")).is_err());
    }

    #[test]
    fn feature_names_must_follow_task_order() {
        let text = format!(
            "{MINIMAL}\n[[family.features]]\nname = \"length\"\nvalues = [1.0]\n[[family.features]]\nname = \"mass\"\nvalues = [1.0]\n"
        );
        assert!(ExperimentConfig::from_toml(&text).unwrap().validate().is_err());
    }
}
