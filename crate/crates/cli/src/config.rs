//! Experiment manifests.
//!
//! A manifest is one JSON object. Every block is optional; missing values fall
//! back to the defaults of the chosen problem.
//!
//! ```json
//! {
//!   "problem": "example2",
//!   "mode": "partial",
//!   "example2": { "a": -3, "b": 1, "c": 0.5, "initial": 1 },
//!   "policy": { "mu_coeff": 2, "mu_power": 2, "phi_coeff": 2, "phi_power": 0.25, "h_hat": 2 },
//!   "solver": { "step": 1e-4, "horizon": 10, "n_paths": 2000, "seed": 7, "record_stride": 100 },
//!   "converge": { "steps": [0.0078125, 0.00390625], "reference_step": 6.103515625e-05 },
//!   "stability": { "delta_list": [1e-4, 1e-5], "params": { "lambda1": 6, "...": 0 } },
//!   "check": { "khasminskii": { "k1": 2, "k2": 1.375, "k3": 0.125, "beta": 4 } }
//! }
//! ```
//!
//! `problem` is a built-in name (`example1`, `example2`, `zero`,
//! `linear-decay`) or an inline scalar problem:
//!
//! ```json
//! {
//!   "drift": [ { "coeff": -9, "x_power": 3 }, { "coeff": 1, "y_power": 1.5, "y_abs": true } ],
//!   "diffusion": [ { "coeff": 1, "x_power": 2 } ],
//!   "delay": { "kind": "sine", "amplitude": 0.5 },
//!   "initial": 2
//! }
//! ```
//!
//! Each term is `coeff · x^x_power · y^y_power` (or `|y|^y_power` with
//! `y_abs`). Integer powers are required on signed arguments. Optional
//! `drift_linear` / `diffusion_linear` term lists, with `lbar` and `lbar1`,
//! make the problem usable in partial mode.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use sdde_core::builtin::{self, Example2};
use sdde_core::checks::KhasminskiiConstants;
use sdde_core::model::{kappa_bar, Coefficient, DelayFunction, InitialPath, SddeProblem, SplitSddeProblem};
use sdde_core::{Mode, Result, SddeError, StabilityParams, TruncationPolicy};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub example2: Option<Example2Spec>,
    /// Constant initial value overriding the problem's own.
    #[serde(default)]
    pub initial: Option<f64>,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub converge: ConvergeSpec,
    #[serde(default)]
    pub stability: StabilitySpec,
    #[serde(default)]
    pub check: CheckSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Builtin(String),
    Inline(InlineProblem),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example2Spec {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub drift: Vec<Term>,
    pub diffusion: Vec<Term>,
    #[serde(default)]
    pub drift_linear: Option<Vec<Term>>,
    #[serde(default)]
    pub diffusion_linear: Option<Vec<Term>>,
    pub delay: DelaySpec,
    pub initial: f64,
    #[serde(default)]
    pub lbar: Option<f64>,
    #[serde(default)]
    pub lbar1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    #[serde(default)]
    pub x_power: f64,
    #[serde(default)]
    pub y_power: f64,
    #[serde(default)]
    pub y_abs: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DelaySpec {
    Constant { tau: f64 },
    Sine { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub mu_coeff: f64,
    pub mu_power: f64,
    pub phi_coeff: f64,
    pub phi_power: f64,
    pub h_hat: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub record_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSpec {
    pub steps: Option<Vec<f64>>,
    pub reference_step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    pub params: Option<ParamsSpec>,
    pub delta_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub beta: f64,
    #[serde(default)]
    pub theta: Option<f64>,
    pub lbar: f64,
    pub lbar1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub khasminskii: Option<KhasminskiiSpec>,
    pub steps: Option<Vec<f64>>,
    pub grid_points: Option<usize>,
    pub half_width: Option<f64>,
    pub k_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KhasminskiiSpec {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub beta: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SddeError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SddeError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// A problem with everything needed to run any subcommand.
pub struct Experiment {
    pub name: String,
    pub problem: SddeProblem,
    pub split: Option<SplitSddeProblem>,
    pub mode: Mode,
    pub policy: TruncationPolicy,
    pub stability: Option<StabilityParams>,
    pub khasminskii: Option<KhasminskiiConstants>,
    pub kappa: usize,
    pub step: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub record_stride: usize,
    pub converge_steps: Vec<f64>,
    pub reference_step: f64,
    pub delta_list: Vec<f64>,
    pub check_steps: Vec<f64>,
    pub grid_points: usize,
    pub half_width: f64,
    pub k_max: usize,
}

pub const DEFAULT_SEED: u64 = 20240601;

struct Defaults {
    step: f64,
    horizon: f64,
    n_paths: usize,
    mode: Mode,
}

fn defaults_for(name: &str) -> Defaults {
    match name {
        "example1" => Defaults { step: 2f64.powi(-7), horizon: 10.0, n_paths: 500, mode: Mode::Full },
        "example2" => Defaults { step: 1e-4, horizon: 10.0, n_paths: 2000, mode: Mode::Partial },
        "linear-decay" => Defaults { step: 1e-3, horizon: 1.0, n_paths: 1, mode: Mode::Full },
        _ => Defaults { step: 0.01, horizon: 1.0, n_paths: 100, mode: Mode::Full },
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(SddeError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn power_of(base: f64, p: f64, signed: bool) -> f64 {
    if p == 0.0 {
        1.0
    } else if signed {
        base.powi(p as i32)
    } else {
        base.abs().powf(p)
    }
}

fn compile_terms(terms: &[Term], what: &str) -> Result<Coefficient> {
    for t in terms {
        if !t.coeff.is_finite() {
            return Err(SddeError::Config(format!("{what}: coefficient must be finite")));
        }
        if !(t.x_power >= 0.0 && t.x_power.fract() == 0.0 && t.x_power <= 64.0) {
            return Err(SddeError::Config(format!(
                "{what}: x_power must be an integer in [0, 64], got {}",
                t.x_power
            )));
        }
        let signed_ok = t.y_power.fract() == 0.0 && t.y_power <= 64.0;
        if !(t.y_power >= 0.0 && t.y_power.is_finite()) || (!t.y_abs && !signed_ok) {
            return Err(SddeError::Config(format!(
                "{what}: y_power {} needs y_abs = true unless it is an integer in [0, 64]",
                t.y_power
            )));
        }
    }
    let terms = terms.to_vec();
    Ok(Arc::new(move |x: &[f64], y: &[f64], out: &mut [f64]| {
        out[0] = terms
            .iter()
            .map(|t| t.coeff * power_of(x[0], t.x_power, true) * power_of(y[0], t.y_power, !t.y_abs))
            .sum();
    }))
}

fn delay_from(spec: DelaySpec) -> Result<DelayFunction> {
    let d = match spec {
        DelaySpec::Constant { tau } => DelayFunction::constant(tau),
        DelaySpec::Sine { amplitude } => DelayFunction::sine(amplitude),
    };
    d.map_err(|e| SddeError::Config(format!("delay: {e}")))
}

fn constant_initial(v: f64) -> Result<InitialPath> {
    if !v.is_finite() {
        return Err(SddeError::Config(format!("initial value must be finite, got {v}")));
    }
    InitialPath::constant(vec![v])
}

fn with_initial(problem: SddeProblem, v: f64) -> Result<SddeProblem> {
    SddeProblem::new(
        problem.dim_x,
        problem.dim_w,
        problem.drift,
        problem.diffusion,
        problem.delay,
        constant_initial(v)?,
    )
}

/// Parses a comma-separated list of positive numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| SddeError::Config(format!("'{s}' is not a number")))
                .and_then(|v| positive("list entry", v))
        })
        .collect()
}

impl Experiment {
    /// Validates the whole manifest and builds the problem. No simulation
    /// work happens here.
    pub fn resolve(cfg: &ExperimentConfig) -> Result<Experiment> {
        let spec = cfg.problem.clone().unwrap_or_else(|| ProblemSpec::Builtin("example1".into()));
        let mut policy: Option<TruncationPolicy> = None;
        let mut stability = None;
        let mut khasminskii = None;
        let (name, mut problem, mut split) = match &spec {
            ProblemSpec::Builtin(n) => match n.as_str() {
                "example1" => {
                    let p = builtin::example1_policy();
                    khasminskii = Some(builtin::example1_khasminskii(&p));
                    policy = Some(p);
                    (n.clone(), builtin::example1_problem(), None)
                }
                "example2" => {
                    let d = Example2::default();
                    let o = cfg.example2.unwrap_or(Example2Spec { a: None, b: None, c: None, initial: None });
                    let ex = Example2 {
                        a: o.a.unwrap_or(d.a),
                        b: o.b.unwrap_or(d.b),
                        c: o.c.unwrap_or(d.c),
                        initial: o.initial.unwrap_or(d.initial),
                    };
                    if ![ex.a, ex.b, ex.c, ex.initial].iter().all(|v| v.is_finite()) {
                        return Err(SddeError::Config("example2 parameters must be finite".into()));
                    }
                    let p = builtin::example2_policy_for(ex);
                    if ex == d {
                        khasminskii = Some(builtin::example2_khasminskii(&p));
                    }
                    policy = Some(p);
                    stability = Some(builtin::example2_stability_params(ex));
                    let s = builtin::example2_split(ex);
                    (n.clone(), s.base.clone(), Some(s))
                }
                "zero" => (n.clone(), builtin::zero_problem(vec![0.0], 1.0), None),
                "linear-decay" => {
                    policy = Some(builtin::linear_policy());
                    (n.clone(), builtin::linear_decay_problem(), None)
                }
                other => {
                    return Err(SddeError::Config(format!(
                        "unknown problem '{other}' (expected example1, example2, zero, linear-decay or an inline spec)"
                    )))
                }
            },
            ProblemSpec::Inline(inline) => {
                let delay = delay_from(inline.delay)?;
                let initial = constant_initial(inline.initial)?;
                let f = compile_terms(&inline.drift, "drift")?;
                let g = compile_terms(&inline.diffusion, "diffusion")?;
                if inline.drift_linear.is_some() || inline.diffusion_linear.is_some() {
                    let f1 = compile_terms(inline.drift_linear.as_deref().unwrap_or(&[]), "drift_linear")?;
                    let g1 = compile_terms(inline.diffusion_linear.as_deref().unwrap_or(&[]), "diffusion_linear")?;
                    let s = SplitSddeProblem::from_parts(
                        1,
                        1,
                        f1,
                        f,
                        g1,
                        g,
                        delay,
                        initial,
                        inline.lbar.unwrap_or(0.0),
                        inline.lbar1.unwrap_or(0.0),
                    )
                    .map_err(|e| SddeError::Config(e.to_string()))?;
                    ("inline".to_string(), s.base.clone(), Some(s))
                } else {
                    ("inline".to_string(), SddeProblem::new(1, 1, f, g, delay, initial)?, None)
                }
            }
        };
        if name == "zero" {
            policy = Some(builtin::linear_policy());
        }

        if let Some(v) = cfg.initial {
            problem = with_initial(problem, v)?;
            if let Some(s) = split.take() {
                split = Some(SplitSddeProblem {
                    base: problem.clone(),
                    ..s
                });
            }
        }

        if let Some(p) = cfg.policy {
            let built = TruncationPolicy::power_law(p.mu_coeff, p.mu_power, p.phi_coeff, p.phi_power, p.h_hat)
                .map_err(|e| SddeError::Config(format!("policy: {e}")))?;
            if let Some(k) = khasminskii {
                khasminskii = Some(KhasminskiiConstants::new(k.k1, k.k2, k.k3, k.beta, &built)?);
            }
            policy = Some(built);
        }
        let policy = policy.ok_or_else(|| {
            SddeError::Config(format!("problem '{name}' has no built-in truncation policy; add a \"policy\" block"))
        })?;
        let issues = policy.validate();
        if !issues.is_empty() {
            return Err(SddeError::Config(format!("policy: {}", issues.join("; "))));
        }

        if let Some(p) = cfg.stability.params {
            let params = StabilityParams {
                lambda1: p.lambda1,
                lambda2: p.lambda2,
                alpha1: p.alpha1,
                alpha2: p.alpha2,
                alpha3: p.alpha3,
                alpha4: p.alpha4,
                beta: p.beta,
                theta: p.theta.unwrap_or(f64::INFINITY),
                lbar: p.lbar,
                lbar1: p.lbar1,
            };
            params.validate().map_err(|e| SddeError::Config(e.to_string()))?;
            stability = Some(params);
        }
        if let Some(k) = cfg.check.khasminskii {
            khasminskii = Some(
                KhasminskiiConstants::new(k.k1, k.k2, k.k3, k.beta, &policy)
                    .map_err(|e| SddeError::Config(format!("khasminskii: {e}")))?,
            );
        }

        let d = defaults_for(&name);
        let mode = match &cfg.mode {
            Some(m) => m.parse::<Mode>()?,
            None if split.is_some() => d.mode,
            None => Mode::Full,
        };
        if mode == Mode::Partial && split.is_none() {
            return Err(SddeError::Config(format!(
                "partial truncation requires a split problem; '{name}' has none"
            )));
        }

        let s = &cfg.solver;
        let step = positive("solver.step", s.step.unwrap_or(d.step))?;
        let horizon = positive("solver.horizon", s.horizon.unwrap_or(d.horizon))?;
        let n_paths = s.n_paths.unwrap_or(d.n_paths);
        if n_paths == 0 {
            return Err(SddeError::Config("solver.n_paths must be at least 1".into()));
        }
        let record_stride = s.record_stride.unwrap_or(1);
        if record_stride == 0 {
            return Err(SddeError::Config("solver.record_stride must be at least 1".into()));
        }

        let converge_steps = match &cfg.converge.steps {
            Some(v) => v.iter().map(|&x| positive("converge.steps entry", x)).collect::<Result<Vec<_>>>()?,
            None => (7..=11).map(|e| 2f64.powi(-e)).collect(),
        };
        if converge_steps.is_empty() {
            return Err(SddeError::Config("converge.steps must not be empty".into()));
        }
        let reference_step = positive(
            "converge.reference_step",
            cfg.converge.reference_step.unwrap_or(2f64.powi(-14)),
        )?;
        let delta_list = match &cfg.stability.delta_list {
            Some(v) => v.iter().map(|&x| positive("stability.delta_list entry", x)).collect::<Result<Vec<_>>>()?,
            None => (4..=9).map(|e| 10f64.powi(-e)).collect(),
        };
        let check_steps = match &cfg.check.steps {
            Some(v) => v.iter().map(|&x| positive("check.steps entry", x)).collect::<Result<Vec<_>>>()?,
            None => {
                let tau = problem.delay.tau();
                let widest = tau / tau.ceil();
                if widest == step {
                    vec![widest]
                } else {
                    vec![widest, step]
                }
            }
        };
        for &s in &check_steps {
            problem.delay.grid_intervals(s)?;
        }
        let grid_points = cfg.check.grid_points.unwrap_or(200);
        if grid_points < 2 {
            return Err(SddeError::Config("check.grid_points must be at least 2".into()));
        }
        let half_width = positive("check.half_width", cfg.check.half_width.unwrap_or(50.0))?;
        let k_max = cfg.check.k_max.unwrap_or(100_000);
        let kappa = kappa_bar(problem.delay.delta_hat())?;

        Ok(Experiment {
            name,
            problem,
            split,
            mode,
            policy,
            stability,
            khasminskii,
            kappa,
            step,
            horizon,
            n_paths,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            record_stride,
            converge_steps,
            reference_step,
            delta_list,
            check_steps,
            grid_points,
            half_width,
            k_max,
        })
    }

    pub fn scheme(&self) -> Result<sdde_core::Scheme<'_>> {
        sdde_core::Scheme::select(&self.problem, self.split.as_ref(), self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_example1() {
        let e = Experiment::resolve(&ExperimentConfig::default()).unwrap();
        assert_eq!(e.name, "example1");
        assert_eq!(e.mode, Mode::Full);
        assert_eq!(e.step, 2f64.powi(-7));
        assert_eq!(e.converge_steps.len(), 5);
        assert_eq!(e.kappa, 3);
        assert!(e.khasminskii.is_some());
    }

    #[test]
    fn example2_defaults_are_partial() {
        let cfg = ExperimentConfig::from_json(r#"{"problem": "example2"}"#).unwrap();
        let e = Experiment::resolve(&cfg).unwrap();
        assert_eq!(e.mode, Mode::Partial);
        assert_eq!(e.kappa, 2);
        assert_eq!(e.stability.unwrap().lambda1, 6.0);
        assert_eq!(e.problem.initial.eval(0.0), vec![1.0]);
        assert_eq!(e.delta_list.len(), 6);
    }

    #[test]
    fn inline_problem_matches_builtin() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "problem": {
                    "drift": [{"coeff": -9, "x_power": 3}, {"coeff": 1, "y_power": 1.5, "y_abs": true}],
                    "diffusion": [{"coeff": 1, "x_power": 2}],
                    "delay": {"kind": "sine", "amplitude": 0.5},
                    "initial": 2
                },
                "policy": {"mu_coeff": 10, "mu_power": 2, "phi_coeff": 10, "phi_power": 0.25, "h_hat": 10}
            }"#,
        )
        .unwrap();
        let e = Experiment::resolve(&cfg).unwrap();
        let b = builtin::example1_problem();
        for (x, y) in [(0.3, -1.7), (-2.0, 4.0), (5.5, 0.0)] {
            assert_eq!(e.problem.drift_at(&[x], &[y]), b.drift_at(&[x], &[y]));
            assert_eq!(e.problem.diffusion_at(&[x], &[y]), b.diffusion_at(&[x], &[y]));
        }
    }

    #[test]
    fn config_errors() {
        let bad = [
            r#"{"problem": "example9"}"#,
            r#"{"problem": "zero", "mode": "partial"}"#,
            r#"{"solver": {"step": -1}}"#,
            r#"{"solver": {"n_paths": 0}}"#,
            r#"{"policy": {"mu_coeff": 10, "mu_power": 2, "phi_coeff": 10, "phi_power": 0.5, "h_hat": 10}}"#,
            r#"{"problem": {"drift": [{"coeff": 1, "y_power": 1.5}], "diffusion": [], "delay": {"kind": "constant", "tau": 1}, "initial": 1}, "policy": {"mu_coeff": 1, "mu_power": 2, "phi_coeff": 1, "phi_power": 0.25, "h_hat": 1}}"#,
            r#"{"problem": {"drift": [], "diffusion": [], "delay": {"kind": "constant", "tau": 1}, "initial": 1}}"#,
            r#"{"unknown": 1}"#,
            r#"{"converge": {"steps": []}}"#,
        ];
        for text in bad {
            let r = ExperimentConfig::from_json(text).and_then(|c| Experiment::resolve(&c));
            assert!(matches!(r, Err(SddeError::Config(_))), "{text}: {:?}", r.err());
        }
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("1e-4, 1e-5,").unwrap(), vec![1e-4, 1e-5]);
        assert!(parse_list("1,x").is_err());
        assert!(parse_list("0").is_err());
    }
}
