//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, Function, HashMapContext, Node,
    Value,
};
use monokin_core::eas::initial;
use monokin_core::fokker_planck::{sigma_for_epsilon, MIN_XI_BOX};
use monokin_core::kernels::KernelSpec;
use monokin_core::schedule::TimeStep;
use monokin_core::{ModulationParams, TorusGrid};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    Eas,
    Profile,
    Vlasov,
    Fp,
    Characteristics,
    Particles,
    Sweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Eas => "eas",
            Scenario::Profile => "profile",
            Scenario::Vlasov => "vlasov",
            Scenario::Fp => "fp",
            Scenario::Characteristics => "characteristics",
            Scenario::Particles => "particles",
            Scenario::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "eas" => Scenario::Eas,
            "profile" => Scenario::Profile,
            "vlasov" => Scenario::Vlasov,
            "fp" => Scenario::Fp,
            "characteristics" => Scenario::Characteristics,
            "particles" => Scenario::Particles,
            "sweep" => Scenario::Sweep,
            _ => return None,
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scalar function of `x` given as an `evalexpr` expression.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    tree: Node,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, String> {
        let tree = build_operator_tree(&floatify(source)).map_err(|e| e.to_string())?;
        let expr = Self {
            source: source.to_string(),
            tree,
        };
        expr.eval(0.0)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: f64) -> Result<f64, String> {
        let mut ctx = math_context().map_err(|e| e.to_string())?;
        ctx.set_value("x".into(), Value::Float(x)).map_err(|e| e.to_string())?;
        let v = self.tree.eval_number_with_context(&ctx).map_err(|e| e.to_string())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("`{}` is not finite at x = {x}", self.source))
        }
    }
}

/// `pi` plus the unqualified one-argument functions `sqrt exp ln sin cos tan abs`.
fn math_context() -> Result<HashMapContext, evalexpr::EvalexprError> {
    type Unary = (&'static str, fn(f64) -> f64);
    const UNARY: [Unary; 7] = [
        ("sqrt", f64::sqrt),
        ("exp", f64::exp),
        ("ln", f64::ln),
        ("sin", f64::sin),
        ("cos", f64::cos),
        ("tan", f64::tan),
        ("abs", f64::abs),
    ];
    let mut ctx = HashMapContext::new();
    ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI))?;
    for (name, f) in UNARY {
        ctx.set_function(
            name.into(),
            Function::new(move |arg| Ok(Value::Float(f(arg.as_number()?)))),
        )?;
    }
    Ok(ctx)
}

/// Append `.0` to integer literals so that `1/10` divides as floats.
fn floatify(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_number = c.is_ascii_digit()
            && (i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.'));
        if !starts_number {
            out.push(c);
            i += 1;
            continue;
        }
        let start = i;
        let mut is_float = false;
        while i < chars.len() {
            let d = chars[i];
            if d.is_ascii_digit() {
                i += 1;
            } else if d == '.' {
                is_float = true;
                i += 1;
            } else if (d == 'e' || d == 'E')
                && chars
                    .get(i + 1)
                    .is_some_and(|n| n.is_ascii_digit() || *n == '-' || *n == '+')
            {
                is_float = true;
                i += 2;
            } else {
                break;
            }
        }
        out.extend(&chars[start..i]);
        if !is_float {
            out.push_str(".0");
        }
    }
    out
}

#[derive(Debug, Clone)]
pub enum VelocityProfile {
    Symmetric,
    Asymmetric,
    Zero,
    Custom(Expression),
}

impl VelocityProfile {
    pub fn name(&self) -> String {
        match self {
            VelocityProfile::Symmetric => "sym".into(),
            VelocityProfile::Asymmetric => "asym".into(),
            VelocityProfile::Zero => "zero".into(),
            VelocityProfile::Custom(e) => e.source().to_string(),
        }
    }

    pub fn sample(&self, grid: &TorusGrid) -> Vec<f64> {
        match self {
            VelocityProfile::Symmetric => grid.sample(initial::symmetric),
            VelocityProfile::Asymmetric => grid.sample(initial::asymmetric),
            VelocityProfile::Zero => vec![0.0; grid.len()],
            // validated on every cell centre at load time
            VelocityProfile::Custom(e) => grid.sample(|x| e.eval(x).unwrap_or(f64::NAN)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepModel {
    Vlasov,
    Fp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub model: SweepModel,
    /// Strictly decreasing.
    pub eps_list: Vec<f64>,
    /// Estimate a discretisation floor from an extra run at `min eps / 8`.
    pub floor_correction: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub nx: usize,
    pub nxi: usize,
    pub xi_max: f64,
    pub t_final: f64,
    pub step: TimeStep,
    pub epsilon: f64,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub u0: VelocityProfile,
    /// Variance of the initial Gaussian profile in `xi`.
    pub sigma_g0: f64,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub particles: usize,
    pub characteristics: usize,
    pub char_dt: f64,
    pub snapshot_times: Option<Vec<f64>>,
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Defaults for everything except the required keys.
    pub fn new(scenario: Scenario, nx: usize, nxi: usize, xi_max: f64, t_final: f64) -> Self {
        Self {
            scenario,
            nx,
            nxi,
            xi_max,
            t_final,
            step: TimeStep::Cfl(0.4),
            epsilon: 0.1,
            sigma: None,
            delta: None,
            alpha: 1.0,
            kernel: KernelSpec::CONSTANT,
            u0: VelocityProfile::Symmetric,
            sigma_g0: 0.1,
            out_dir: None,
            seed: 0,
            particles: 4096,
            characteristics: 20,
            char_dt: 1e-3,
            snapshot_times: None,
            sweep: None,
        }
    }

    /// `sigma` from `sigma log(1/sigma) = eps` and `delta = eps^2` unless given.
    pub fn params_for(&self, epsilon: f64) -> Result<ModulationParams, ConfigError> {
        let sigma = match self.sigma {
            Some(s) => s,
            None if matches!(self.scenario, Scenario::Fp)
                || matches!(&self.sweep, Some(s) if s.model == SweepModel::Fp) =>
            {
                sigma_for_epsilon(epsilon).map_err(|e| invalid("epsilon", e.to_string()))?
            }
            None => 0.0,
        };
        Ok(ModulationParams {
            epsilon,
            sigma,
            delta: self.delta.unwrap_or(epsilon * epsilon),
            alpha: self.alpha,
        })
    }

    pub fn params(&self) -> Result<ModulationParams, ConfigError> {
        self.params_for(self.epsilon)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nx < TorusGrid::MIN_CELLS {
            return Err(invalid("nx", format!("need at least {} cells", TorusGrid::MIN_CELLS)));
        }
        if self.nxi < 2 {
            return Err(invalid("nxi", "need at least 2 cells"));
        }
        if !(self.xi_max > 0.0 && self.xi_max.is_finite()) {
            return Err(invalid("xi_max", "must be positive"));
        }
        let needs_wide_box =
            matches!(self.scenario, Scenario::Fp) || matches!(&self.sweep, Some(s) if s.model == SweepModel::Fp);
        if needs_wide_box && self.xi_max < MIN_XI_BOX {
            return Err(invalid(
                "xi_max",
                format!("must be at least {MIN_XI_BOX} for the fp model"),
            ));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(invalid("t_final", "must be positive"));
        }
        self.step.validate().map_err(|e| match self.step {
            TimeStep::Fixed(_) => invalid("dt", e.to_string()),
            TimeStep::Cfl(_) => invalid("cfl", e.to_string()),
        })?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("sigma", "must be nonnegative"));
            }
            if needs_wide_box && s <= 0.0 {
                return Err(invalid("sigma", "the fp model needs sigma > 0"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("delta", "must be positive"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1]"));
        }
        if !(self.sigma_g0 > 0.0 && self.sigma_g0.is_finite()) {
            return Err(invalid("sigma_g0", "must be positive"));
        }
        if self.particles == 0 {
            return Err(invalid("particles", "must be positive"));
        }
        if self.characteristics == 0 {
            return Err(invalid("characteristics", "must be positive"));
        }
        if self.char_dt.is_nan() || self.char_dt <= 0.0 {
            return Err(invalid("char_dt", "must be positive"));
        }
        if let VelocityProfile::Custom(e) = &self.u0 {
            let grid = TorusGrid::unit(self.nx).map_err(|err| invalid("nx", err.to_string()))?;
            for x in grid.centers() {
                e.eval(x).map_err(|m| invalid("u0", m))?;
            }
        }
        if let Some(times) = &self.snapshot_times {
            if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_final)) {
                return Err(invalid("snapshot_times", "times must lie in [0, t_final]"));
            }
        }
        match (&self.scenario, &self.sweep) {
            (Scenario::Sweep, None) => return Err(invalid("sweep_model", "required for a sweep")),
            (Scenario::Sweep, Some(s)) => {
                if s.eps_list.is_empty() {
                    return Err(invalid("eps_list", "at least one value is required"));
                }
                if s.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(invalid("eps_list", "values must be positive"));
                }
                if s.eps_list.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(invalid("eps_list", "values must be strictly decreasing"));
                }
                for &e in &s.eps_list {
                    self.params_for(e)?;
                }
            }
            (_, Some(_)) => return Err(invalid("sweep_model", "only valid with scenario = sweep")),
            _ => {}
        }
        self.params()?;
        Ok(())
    }

    /// Snapshot times: the configured list, or four equally spaced times.
    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_times
            .clone()
            .unwrap_or_else(|| monokin_core::schedule::equally_spaced(self.t_final, 4))
    }
}

const KEYS: &[&str] = &[
    "scenario",
    "nx",
    "nxi",
    "xi_max",
    "t_final",
    "dt",
    "cfl",
    "epsilon",
    "sigma",
    "delta",
    "alpha",
    "kernel",
    "kernel_beta",
    "u0",
    "sigma_g0",
    "out_dir",
    "seed",
    "particles",
    "characteristics",
    "char_dt",
    "snapshot_times",
    "sweep_model",
    "eps_list",
    "floor_correction",
];

struct Entry {
    line: usize,
    value: String,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = &cfg.out_dir {
        if dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.out_dir = Some(base.join(dir));
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries: BTreeMap<&'static str, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let key = key.trim().to_ascii_lowercase();
        let key = KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("unknown key `{key}`"),
        })?;
        let value = value.trim();
        if value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: format!("empty value for `{key}`"),
            });
        }
        if let Some(prev) = entries.get(key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.insert(
            key,
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }

    let required = |key: &'static str| entries.get(key).ok_or_else(|| invalid(key, "missing required key"));
    let number = |key: &'static str, e: &Entry| -> Result<f64, ConfigError> {
        if let Ok(v) = e.value.parse::<f64>() {
            return Ok(v);
        }
        let expr = Expression::parse(&e.value).map_err(|m| ConfigError::Parse {
            line: e.line,
            message: format!("`{key}`: {m}"),
        })?;
        expr.eval(0.0).map_err(|m| ConfigError::Parse {
            line: e.line,
            message: format!("`{key}`: {m}"),
        })
    };
    let count = |key: &'static str, e: &Entry| -> Result<usize, ConfigError> {
        e.value.parse::<usize>().map_err(|_| ConfigError::Parse {
            line: e.line,
            message: format!("`{key}` must be a nonnegative integer"),
        })
    };
    let list = |key: &'static str, e: &Entry| -> Result<Vec<f64>, ConfigError> {
        e.value
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| ConfigError::Parse {
                    line: e.line,
                    message: format!("`{key}`: `{}` is not a number", v.trim()),
                })
            })
            .collect()
    };

    let scenario_entry = required("scenario")?;
    let scenario = Scenario::parse(&scenario_entry.value)
        .ok_or_else(|| invalid("scenario", format!("unknown scenario `{}`", scenario_entry.value)))?;
    let nx = count("nx", required("nx")?)?;
    let nxi = count("nxi", required("nxi")?)?;
    let xi_max = number("xi_max", required("xi_max")?)?;
    let t_final = number("t_final", required("t_final")?)?;
    let mut cfg = RunConfig::new(scenario, nx, nxi, xi_max, t_final);

    match (entries.get("dt"), entries.get("cfl")) {
        (Some(_), Some(e)) => {
            return Err(ConfigError::Parse {
                line: e.line,
                message: "set either `dt` or `cfl`, not both".into(),
            })
        }
        (Some(e), None) => cfg.step = TimeStep::Fixed(number("dt", e)?),
        (None, Some(e)) => cfg.step = TimeStep::Cfl(number("cfl", e)?),
        (None, None) => {}
    }
    if let Some(e) = entries.get("epsilon") {
        cfg.epsilon = number("epsilon", e)?;
    }
    if let Some(e) = entries.get("sigma") {
        cfg.sigma = Some(number("sigma", e)?);
    }
    if let Some(e) = entries.get("delta") {
        cfg.delta = Some(number("delta", e)?);
    }
    if let Some(e) = entries.get("alpha") {
        cfg.alpha = number("alpha", e)?;
    }
    if let Some(e) = entries.get("sigma_g0") {
        cfg.sigma_g0 = number("sigma_g0", e)?;
    }
    if let Some(e) = entries.get("kernel") {
        cfg.kernel = match e.value.as_str() {
            "const" => KernelSpec::CONSTANT,
            "algebraic" => {
                let b = entries
                    .get("kernel_beta")
                    .ok_or_else(|| invalid("kernel_beta", "required for the algebraic kernel"))?;
                KernelSpec::algebraic(number("kernel_beta", b)?)
                    .map_err(|err| invalid("kernel_beta", err.to_string()))?
            }
            other => return Err(invalid("kernel", format!("unknown kernel `{other}`"))),
        };
    }
    if let Some(e) = entries.get("u0") {
        cfg.u0 = match e.value.as_str() {
            "sym" => VelocityProfile::Symmetric,
            "asym" => VelocityProfile::Asymmetric,
            "zero" => VelocityProfile::Zero,
            expr => VelocityProfile::Custom(Expression::parse(expr).map_err(|m| ConfigError::Parse {
                line: e.line,
                message: format!("`u0`: {m}"),
            })?),
        };
    }
    if let Some(e) = entries.get("out_dir") {
        cfg.out_dir = Some(PathBuf::from(&e.value));
    }
    if let Some(e) = entries.get("seed") {
        cfg.seed = e.value.parse().map_err(|_| ConfigError::Parse {
            line: e.line,
            message: "`seed` must be a nonnegative integer".into(),
        })?;
    }
    if let Some(e) = entries.get("particles") {
        cfg.particles = count("particles", e)?;
    }
    if let Some(e) = entries.get("characteristics") {
        cfg.characteristics = count("characteristics", e)?;
    }
    if let Some(e) = entries.get("char_dt") {
        cfg.char_dt = number("char_dt", e)?;
    }
    if let Some(e) = entries.get("snapshot_times") {
        cfg.snapshot_times = Some(list("snapshot_times", e)?);
    }
    if let Some(e) = entries.get("sweep_model") {
        let model = match e.value.as_str() {
            "vlasov" => SweepModel::Vlasov,
            "fp" => SweepModel::Fp,
            other => return Err(invalid("sweep_model", format!("unknown model `{other}`"))),
        };
        let eps_list = match entries.get("eps_list") {
            Some(l) => list("eps_list", l)?,
            None => return Err(invalid("eps_list", "missing required key")),
        };
        let floor_correction = match entries.get("floor_correction") {
            None => true,
            Some(f) => f.value.parse::<bool>().map_err(|_| ConfigError::Parse {
                line: f.line,
                message: "`floor_correction` must be true or false".into(),
            })?,
        };
        cfg.sweep = Some(SweepSpec {
            model,
            eps_list,
            floor_correction,
        });
    }
    cfg.validate()?;
    Ok(cfg)
}
