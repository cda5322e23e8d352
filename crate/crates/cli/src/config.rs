//! TOML run configuration.
//!
//! Every key is optional and falls back to the defaults of the reference
//! setup. Unknown keys are rejected. Value-level problems (a zero `lambda`, an
//! even grid size) are reported by the parser with the offending line;
//! cross-field problems are reported at the line of their section header.

use std::fmt;
use std::path::{Path, PathBuf};

use robust_bandit::env::default_arms;
use robust_bandit::experiment::{DefenseConfig, EstimatorConfig};
use robust_bandit::{
    ArmEncoding, DatacenterArm, EnvConfig, ExplorationSchedule, KernelFamily, KernelSpec, Norm, PolicyKind,
    RewardTransform, RunSpec,
};
use serde::de::{self, Deserializer};
use serde::Deserialize;
use toml::Spanned;

/// Environment variable that replaces `env.seed`.
pub const SEED_ENV_VAR: &str = "ROBUST_BANDIT_SEED";

/// Bad configuration or flag value; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn usage(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

macro_rules! checked_number {
    ($name:ident, $inner:ty, $what:literal, |$v:ident| $ok:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        struct $name($inner);

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let $v = <$inner>::deserialize(d)?;
                if $ok {
                    Ok($name($v))
                } else {
                    Err(de::Error::custom(format!(concat!("expected ", $what, ", got {}"), $v)))
                }
            }
        }
    };
}

checked_number!(Positive, f64, "a finite value > 0", |v| v > 0.0 && v.is_finite());
checked_number!(NonNegative, f64, "a finite value >= 0", |v| v >= 0.0 && v.is_finite());
checked_number!(Probability, f64, "a value in (0, 1)", |v| v > 0.0 && v < 1.0);
checked_number!(Finite, f64, "a finite value", |v| v.is_finite());
checked_number!(OddCount, usize, "an odd count >= 1", |v| v % 2 == 1);
checked_number!(AtLeastOne, usize, "a count >= 1", |v| v >= 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ExplorationMode {
    Fixed,
    Theoretical,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSection {
    arms: Option<Vec<DatacenterArm>>,
    context_lo: Option<Finite>,
    context_hi: Option<Finite>,
    delta: Option<NonNegative>,
    noise_sigma: Option<NonNegative>,
    seed: Option<u64>,
    reward_transform: Option<RewardTransform>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatorSection {
    kernel: Option<KernelFamily>,
    lengthscale: Option<Positive>,
    lambda: Option<Positive>,
    arm_encoding: Option<ArmEncoding>,
    exploration: Option<ExplorationMode>,
    h: Option<NonNegative>,
    reward_bound: Option<Positive>,
    noise_scale: Option<NonNegative>,
    confidence_delta: Option<Probability>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefenseSection {
    delta: Option<NonNegative>,
    norm: Option<Norm>,
    grid_points: Option<OddCount>,
    oracle_grid_points: Option<OddCount>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    policies: Option<Vec<String>>,
    horizon: Option<AtLeastOne>,
    n_seeds: Option<AtLeastOne>,
    output: Option<PathBuf>,
    env: Option<Spanned<EnvSection>>,
    estimator: Option<Spanned<EstimatorSection>>,
    defense: Option<Spanned<DefenseSection>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub policies: Vec<PolicyKind>,
    pub horizon: Option<usize>,
    pub seeds: Option<usize>,
    /// Sets both the environment's perturbation budget and the defense budget.
    pub delta: Option<f64>,
    pub grid_points: Option<usize>,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Spec shared by all policies; its `policy` field is the first policy.
    pub spec: RunSpec,
    pub policies: Vec<PolicyKind>,
    pub n_seeds: usize,
    pub output: PathBuf,
    pub jobs: usize,
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        robust_bandit::seed_range(self.spec.env.seed, self.n_seeds)
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Reads and resolves a config file (or the defaults when `path` is `None`).
pub fn load(path: Option<&Path>, overrides: &Overrides, seed_env: Option<&str>) -> Result<RunConfig, ConfigError> {
    let (source, label) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (String::new(), "<defaults>".to_string()),
    };
    resolve(&source, &label, overrides, seed_env)
}

/// Resolves `source` (TOML) with precedence flag > environment > file > default.
pub fn resolve(source: &str, label: &str, ov: &Overrides, seed_env: Option<&str>) -> Result<RunConfig, ConfigError> {
    let file: FileConfig = toml::from_str(source).map_err(|e| usage(format!("{label}: {e}")))?;
    let at = |offset: usize, msg: String| usage(format!("{label}: line {}: {msg}", line_of(source, offset)));

    let (env_sec, env_at) = split(file.env);
    let (est_sec, est_at) = split(file.estimator);
    let (def_sec, def_at) = split(file.defense);

    let defaults = EnvConfig::default();
    let mut env = EnvConfig {
        arms: env_sec.arms.unwrap_or_else(default_arms),
        context_lo: env_sec.context_lo.map_or(defaults.context_lo, |v| v.0),
        context_hi: env_sec.context_hi.map_or(defaults.context_hi, |v| v.0),
        delta: env_sec.delta.map_or(defaults.delta, |v| v.0),
        noise_sigma: env_sec.noise_sigma.map_or(defaults.noise_sigma, |v| v.0),
        seed: env_sec.seed.unwrap_or(defaults.seed),
        horizon: file.horizon.map_or(defaults.horizon, |v| v.0),
        reward_transform: env_sec.reward_transform.unwrap_or_default(),
    };
    if let Some(raw) = seed_env {
        env.seed = raw
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV_VAR}={raw:?} is not an unsigned integer")))?;
    }

    let family = est_sec.kernel.unwrap_or(KernelFamily::Gaussian);
    let lengthscale = est_sec.lengthscale.map_or(0.1, |v| v.0);
    let schedule = match est_sec.exploration.unwrap_or(ExplorationMode::Fixed) {
        ExplorationMode::Fixed => ExplorationSchedule::Fixed {
            h: est_sec.h.map_or(0.04, |v| v.0),
        },
        ExplorationMode::Theoretical => ExplorationSchedule::Theoretical {
            reward_bound: est_sec.reward_bound.map_or(7.2, |v| v.0),
            noise_scale: est_sec.noise_scale.map_or(env.noise_sigma, |v| v.0),
            delta: est_sec.confidence_delta.map_or(0.1, |v| v.0),
        },
    };
    let estimator = EstimatorConfig {
        kernel: KernelSpec::new(family, lengthscale).map_err(|e| at(est_at, e.to_string()))?,
        arm_encoding: est_sec.arm_encoding.unwrap_or_default(),
        lambda: est_sec.lambda.map_or(0.1, |v| v.0),
        schedule,
    };
    let mut defense = DefenseConfig {
        delta: def_sec.delta.map_or(env.delta, |v| v.0),
        norm: def_sec.norm.unwrap_or_default(),
        grid_points: def_sec.grid_points.map_or(41, |v| v.0),
        oracle_grid_points: def_sec.oracle_grid_points.map_or(41, |v| v.0),
    };

    let mut policies = match file.policies {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<PolicyKind>().map_err(|e| usage(format!("{label}: policies: {e}"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => PolicyKind::LEARNING.to_vec(),
    };
    if policies.is_empty() {
        return Err(usage(format!("{label}: policies must not be empty")));
    }
    let mut n_seeds = file.n_seeds.map_or(10, |v| v.0);
    let mut output = file.output.unwrap_or_else(|| PathBuf::from("results"));

    // File-level cross-field checks, anchored at the section.
    env.validate().map_err(|e| at(env_at, e.to_string()))?;
    estimator.validate().map_err(|e| at(est_at, e.to_string()))?;
    defense.validate().map_err(|e| at(def_at, e.to_string()))?;

    if !ov.policies.is_empty() {
        policies = ov.policies.clone();
    }
    if let Some(h) = ov.horizon {
        if h == 0 {
            return Err(usage("--horizon must be >= 1"));
        }
        env.horizon = h;
    }
    if let Some(n) = ov.seeds {
        if n == 0 {
            return Err(usage("--seeds must be >= 1"));
        }
        n_seeds = n;
    }
    if let Some(d) = ov.delta {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(usage(format!("--delta must be >= 0, got {d}")));
        }
        env.delta = d;
        defense.delta = d;
    }
    if let Some(g) = ov.grid_points {
        if g % 2 == 0 {
            return Err(usage(format!("--grid-points must be odd and >= 1, got {g}")));
        }
        defense.grid_points = g;
    }
    if let Some(o) = &ov.output {
        output = o.clone();
    }
    let jobs = match ov.jobs {
        Some(0) => return Err(usage("--jobs must be >= 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };

    let spec = RunSpec {
        env,
        estimator,
        defense,
        policy: policies[0],
    };
    spec.validate().map_err(|e| usage(format!("{label}: {e}")))?;
    Ok(RunConfig {
        spec,
        policies,
        n_seeds,
        output,
        jobs,
    })
}

fn split<T: Default>(section: Option<Spanned<T>>) -> (T, usize) {
    match section {
        Some(s) => {
            let start = s.span().start;
            (s.into_inner(), start)
        }
        None => (T::default(), 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(src: &str) -> RunConfig {
        resolve(src, "test.toml", &Overrides::default(), None).unwrap()
    }

    fn err(src: &str) -> String {
        resolve(src, "test.toml", &Overrides::default(), None).unwrap_err().0
    }

    #[test]
    fn empty_file_gives_reference_defaults() {
        let c = ok("");
        assert_eq!(c.spec.env, EnvConfig::default());
        assert_eq!(c.spec.estimator, EstimatorConfig::default());
        assert_eq!(c.spec.defense, DefenseConfig::default());
        assert_eq!(c.policies, PolicyKind::LEARNING.to_vec());
        assert_eq!(c.n_seeds, 10);
        assert_eq!(c.seeds(), (0..10).collect::<Vec<u64>>());
    }

    #[test]
    fn full_file_round_trip() {
        let c = ok(r#"
policies = ["minwd", "oracle_minmax"]
horizon = 50
n_seeds = 3
output = "out"

[env]
arms = [{ mu = 40, p = 0.05 }, { mu = 50, p = 0.08 }]
context_lo = 5
context_hi = 25
delta = 1.0
noise_sigma = 0.0
seed = 7
reward_transform = "reciprocal"

[estimator]
kernel = "linear"
lambda = 1.0
arm_encoding = "one_hot"
exploration = "theoretical"
reward_bound = 2.0
confidence_delta = 0.05

[defense]
delta = 1.5
norm = "linf"
grid_points = 21
oracle_grid_points = 101
"#);
        assert_eq!(c.policies, vec![PolicyKind::MinWd, PolicyKind::OracleMinMax]);
        assert_eq!((c.spec.env.horizon, c.n_seeds, c.spec.env.seed), (50, 3, 7));
        assert_eq!(c.spec.env.arms.len(), 2);
        assert_eq!(c.spec.estimator.kernel.family(), KernelFamily::Linear);
        assert_eq!(
            c.spec.estimator.schedule,
            ExplorationSchedule::Theoretical {
                reward_bound: 2.0,
                noise_scale: 0.0,
                delta: 0.05
            }
        );
        assert_eq!(c.spec.defense.delta, 1.5);
        assert_eq!(c.spec.defense.oracle_grid_points, 101);
        assert_eq!(c.output, PathBuf::from("out"));
    }

    #[test]
    fn value_errors_name_their_line() {
        let e = err("horizon = 10\n\n[estimator]\nlambda = 0\n");
        assert!(e.contains("line 4"), "{e}");
        assert!(e.contains("> 0"), "{e}");
        let e = err("[defense]\ngrid_points = 40\n");
        assert!(e.contains("line 2") && e.contains("odd"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(err("lamda = 0.1\n").contains("unknown field"));
        assert!(err("[estimator]\nlamda = 0.1\n").contains("unknown field"));
        assert!(err("[env]\narms = [{ mu = 40, p = 0.1, q = 1 }]\n").contains("unknown field"));
    }

    #[test]
    fn cross_field_errors_point_at_the_section() {
        let e = err("n_seeds = 2\n[env]\ncontext_hi = 36\n");
        assert!(e.contains("line 2") && e.contains("service rate"), "{e}");
        let e = err("[estimator]\nexploration = \"theoretical\"\nconfidence_delta = 1.5\n");
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn flags_beat_environment_beats_file() {
        let src = "horizon = 30\nn_seeds = 4\n[env]\nseed = 3\ndelta = 1.0\n";
        let c = resolve(src, "t", &Overrides::default(), None).unwrap();
        assert_eq!((c.spec.env.horizon, c.n_seeds, c.spec.env.seed), (30, 4, 3));
        assert_eq!(c.spec.defense.delta, 1.0);

        let c = resolve(src, "t", &Overrides::default(), Some("11")).unwrap();
        assert_eq!(c.spec.env.seed, 11);
        assert_eq!(c.seeds(), (11..15).collect::<Vec<u64>>());

        let ov = Overrides {
            policies: vec![PolicyKind::SimpleUcb],
            horizon: Some(5),
            seeds: Some(1),
            delta: Some(0.5),
            grid_points: Some(7),
            output: Some("x".into()),
            jobs: Some(2),
        };
        let c = resolve(src, "t", &ov, Some("11")).unwrap();
        assert_eq!((c.spec.env.horizon, c.n_seeds, c.jobs), (5, 1, 2));
        assert_eq!((c.spec.env.delta, c.spec.defense.delta, c.spec.defense.grid_points), (0.5, 0.5, 7));
        assert_eq!(c.policies, vec![PolicyKind::SimpleUcb]);
        assert!(resolve(src, "t", &Overrides::default(), Some("abc")).is_err());
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        for ov in [
            Overrides { grid_points: Some(4), ..Overrides::default() },
            Overrides { horizon: Some(0), ..Overrides::default() },
            Overrides { seeds: Some(0), ..Overrides::default() },
            Overrides { delta: Some(-1.0), ..Overrides::default() },
            Overrides { jobs: Some(0), ..Overrides::default() },
        ] {
            assert!(resolve("", "t", &ov, None).is_err(), "{ov:?}");
        }
    }

    #[test]
    fn unknown_policy_is_rejected() {
        assert!(err("policies = [\"greedy\"]\n").contains("greedy"));
        assert!(err("policies = []\n").contains("empty"));
    }
}
