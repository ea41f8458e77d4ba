//! Run configuration: a TOML file with `HD_<SECTION>_<KEY>` environment
//! overrides, validated into a [`RunConfig`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use pelab_core::deviations::Metric;
use pelab_core::dynamics::{DiagLevel, IntegratorConfig, LambdaRule};
use pelab_core::field::sample;
use pelab_core::noise::{DeclaredConstants, ShippedMode};
use pelab_core::verify::GronwallScenario;
use pelab_core::{Domain, PhysicalParams, State};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level tables that environment overrides may target.
pub const SECTIONS: [&str; 8] = ["run", "grid", "physics", "forcing", "noise", "integrator", "initial", "experiment"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub run: RunBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub physics: PhysicsBlock,
    #[serde(default)]
    pub forcing: ForcingBlock,
    #[serde(default)]
    pub noise: NoiseBlock,
    #[serde(default)]
    pub integrator: IntegratorBlock,
    #[serde(default)]
    pub initial: InitialBlock,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub seed: u64,
    pub output_dir: String,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self { seed: 0, output_dir: "runs".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "two_pi")]
    pub length: f64,
    #[serde(default = "one")]
    pub depth: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

fn two_pi() -> f64 {
    2.0 * PI
}

fn one() -> f64 {
    1.0
}

impl GridBlock {
    pub fn domain(&self) -> Domain {
        Domain { length: self.length, depth: self.depth, nx: self.nx, ny: self.ny, nz: self.nz }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsBlock {
    pub mu_v: f64,
    pub nu_v: f64,
    pub mu_t: f64,
    pub nu_t: f64,
    pub f_cor: f64,
    pub beta_t_g: f64,
    pub alpha: f64,
    /// Drop the advection term (linear experiments).
    pub advection: bool,
}

impl Default for PhysicsBlock {
    fn default() -> Self {
        let p = PhysicalParams::default();
        Self { mu_v: p.mu_v, nu_v: p.nu_v, mu_t: p.mu_t, nu_t: p.nu_t, f_cor: p.f_cor, beta_t_g: p.beta_t_g, alpha: p.alpha, advection: true }
    }
}

impl PhysicsBlock {
    pub fn params(&self) -> PhysicalParams {
        PhysicalParams {
            mu_v: self.mu_v,
            nu_v: self.nu_v,
            mu_t: self.mu_t,
            nu_t: self.nu_t,
            f_cor: self.f_cor,
            beta_t_g: self.beta_t_g,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    V1,
    V2,
    T,
}

/// `amplitude cos(2 pi (kx x + ky y) / L + phase) cos(kz pi (z + h) / h)` on one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub component: Component,
    #[serde(default)]
    pub kx: i32,
    #[serde(default)]
    pub ky: i32,
    #[serde(default)]
    pub kz: u32,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

impl ModeSpec {
    /// Unprojected state holding this mode.
    pub fn state(&self, grid: &pelab_core::Grid) -> State {
        let (l, h) = (grid.length(), grid.depth());
        let f = sample(grid, |x, y, z| {
            self.amplitude
                * (2.0 * PI * (self.kx as f64 * x + self.ky as f64 * y) / l + self.phase).cos()
                * (self.kz as f64 * PI * (z + h) / h).cos()
        });
        let mut s = State::zeros(grid);
        match self.component {
            Component::V1 => s.v[0] = f,
            Component::V2 => s.v[1] = f,
            Component::T => s.t = f,
        }
        s
    }
}

pub fn modes_state(grid: &pelab_core::Grid, modes: &[ModeSpec]) -> State {
    let mut s = State::zeros(grid);
    for m in modes {
        s.axpy(1.0, &m.state(grid));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeSpec {
    Const,
    Exp { rate: f64 },
    Sin { omega: f64, #[serde(default)] phase: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingTermSpec {
    pub modes: Vec<ModeSpec>,
    #[serde(default = "const_time")]
    pub time: TimeSpec,
}

fn const_time() -> TimeSpec {
    TimeSpec::Const
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingBlock {
    pub terms: Vec<ForcingTermSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseBlock {
    /// The built-in eight-mode model.
    ShippedDefault {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        declared: Option<DeclaredConstants>,
    },
    Shipped {
        modes: Vec<ShippedMode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        declared: Option<DeclaredConstants>,
    },
    ScalarMultiple {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        declared: Option<DeclaredConstants>,
    },
    None,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock::ShippedDefault { declared: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorBlock {
    pub dt: f64,
    pub t_end: f64,
    pub eps: f64,
    pub lambda: LambdaRule,
    pub store_every: usize,
    pub blowup_threshold: f64,
    pub diagnostics: DiagLevel,
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        Self {
            dt: c.dt,
            t_end: c.t_end,
            eps: c.eps,
            lambda: c.lambda_rule,
            store_every: c.store_every,
            blowup_threshold: c.blowup_threshold,
            diagnostics: c.diagnostics,
        }
    }
}

impl IntegratorBlock {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            t_end: self.t_end,
            eps: self.eps,
            lambda_rule: self.lambda,
            store_every: self.store_every,
            blowup_threshold: self.blowup_threshold,
            diagnostics: self.diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialBlock {
    Zero,
    /// Band-limited random state (projected); the seed defaults to the run seed.
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "default_k_max")]
        k_max: i32,
        #[serde(default = "default_n_max")]
        n_max: u32,
        #[serde(default = "one")]
        decay: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Modes { modes: Vec<ModeSpec> },
    Snapshot { path: String },
}

fn default_k_max() -> i32 {
    2
}

fn default_n_max() -> u32 {
    2
}

impl Default for InitialBlock {
    fn default() -> Self {
        InitialBlock::Random { seed: None, k_max: default_k_max(), n_max: default_n_max(), decay: 1.0, amplitude: 1.0 }
    }
}

/// Piecewise-constant control on equal blocks: `blocks[i]` holds the `m` coefficients of block `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub blocks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "observation", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Endpoint equal to a state. For `rate-ldp` the state is added to the
    /// deterministic endpoint; for `rate-mdp` it is the deviation itself.
    FullState {
        #[serde(default)]
        metric: Metric,
        #[serde(default)]
        modes: Vec<ModeSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot: Option<String>,
    },
    /// `sum psi . U(t) = value` over grid values; `psi` is normalized so
    /// that the functional returns the mode coefficient.
    Functional { psi: ModeSpec, value: f64 },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Deterministic {
        #[serde(default)]
        export_states: bool,
    },
    Stochastic {
        #[serde(default = "one_usize")]
        paths: usize,
        #[serde(default)]
        export_states: bool,
    },
    SkeletonLdp {
        control: ControlSpec,
        #[serde(default)]
        export_states: bool,
    },
    SkeletonMdp {
        control: ControlSpec,
        #[serde(default)]
        export_states: bool,
    },
    Clt {
        #[serde(default = "default_clt_eps")]
        eps: Vec<f64>,
        #[serde(default = "default_clt_paths")]
        paths: usize,
    },
    RateLdp(RateSpec),
    RateMdp(RateSpec),
    McScaling(McSpec),
    Verify(VerifySpec),
}

fn one_usize() -> usize {
    1
}

fn default_clt_eps() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

fn default_clt_paths() -> usize {
    32
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Deterministic { .. } => "deterministic",
            Experiment::Stochastic { .. } => "stochastic",
            Experiment::SkeletonLdp { .. } => "skeleton-ldp",
            Experiment::SkeletonMdp { .. } => "skeleton-mdp",
            Experiment::Clt { .. } => "clt",
            Experiment::RateLdp(_) => "rate-ldp",
            Experiment::RateMdp(_) => "rate-mdp",
            Experiment::McScaling(_) => "mc-scaling",
            Experiment::Verify(_) => "verify",
        }
    }

    pub const NAMES: [&'static str; 9] =
        ["deterministic", "stochastic", "skeleton-ldp", "skeleton-mdp", "clt", "rate-ldp", "rate-mdp", "mc-scaling", "verify"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub target: TargetSpec,
    #[serde(default = "default_blocks")]
    pub n_blocks: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
}

fn default_blocks() -> usize {
    4
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    500
}

fn default_max_outer() -> usize {
    40
}

/// Single-mode reduction `c_{n+1} = (c_n + sqrt(eps) amp dW) / (1 + dt kappa)`
/// and the event `c_N >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub kappa: f64,
    pub amp: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub x0: f64,
    pub threshold: f64,
    pub eps: Vec<f64>,
    pub paths: u64,
    pub confidence: f64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self { kappa: 1.0, amp: 1.0, dt: 0.01, n_steps: 100, x0: 0.0, threshold: 0.3, eps: vec![0.1, 0.05, 0.02], paths: 100_000, confidence: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub identity_samples: usize,
    pub tolerance: f64,
    pub ratio_samples: usize,
    pub ratio_coarse: usize,
    pub ratio_nz: usize,
    pub max_growth: f64,
    pub constants_samples: usize,
    #[serde(default = "default_true")]
    pub run_ratios: bool,
    pub gronwall: GronwallScenario,
}

impl Default for VerifySpec {
    fn default() -> Self {
        let study = pelab_core::verify::RatioStudy::default();
        Self {
            identity_samples: 100,
            tolerance: 1e-8,
            ratio_samples: study.n_samples,
            ratio_coarse: study.coarse,
            ratio_nz: study.nz,
            max_growth: study.max_growth,
            constants_samples: 8,
            run_ratios: true,
            gronwall: GronwallScenario::default(),
        }
    }
}

// ---- loading ----------------------------------------------------------------

/// Options that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `(name, value)` pairs; normally the process environment.
    pub env: Vec<(String, String)>,
}

impl Overrides {
    pub fn from_env() -> Vec<(String, String)> {
        let mut env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with("HD_")).collect();
        env.sort();
        env
    }
}

fn schema(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Schema { path: path.to_string(), message: msg.to_string() }
}

fn parse_env_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `HD_<SECTION>_<KEY>=value` pairs to the raw table.
pub fn apply_env(table: &mut toml::Table, env: &[(String, String)]) -> Result<(), CliError> {
    for (name, raw) in env {
        let Some(rest) = name.strip_prefix("HD_") else { continue };
        let lower = rest.to_ascii_lowercase();
        let Some((section, key)) = SECTIONS.iter().find_map(|s| lower.strip_prefix(&format!("{s}_")).map(|k| (*s, k))) else {
            return Err(schema(name, "environment override names no known section"));
        };
        if key.is_empty() {
            return Err(schema(name, "environment override names no key"));
        }
        let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(t) = entry else {
            return Err(schema(section, "expected a table"));
        };
        t.insert(key.to_string(), parse_env_value(raw));
    }
    Ok(())
}

fn deserialize<'de, D, T>(de: D) -> Result<T, CliError>
where
    D: serde::Deserializer<'de>,
    T: DeserializeOwned,
{
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let msg = e.inner().to_string();
        // name the missing field in the path as well
        if let Some(field) = msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        schema(&path, msg)
    })
}

/// Reads a TOML config, or the `config` entry of a run manifest (`.json`).
pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| schema(".", e))?;
        let cfg = v.get("config").cloned().ok_or_else(|| schema("config", "manifest has no config entry"))?;
        let s = toml::to_string(&cfg).map_err(|e| schema("config", e))?;
        s.parse().map_err(|e| schema("config", e))?
    } else {
        text.parse().map_err(|e: toml::de::Error| schema(".", e.message()))?
    };
    apply_env(&mut table, &overrides.env)?;
    if let Some(name) = &overrides.experiment {
        if !Experiment::NAMES.contains(&name.as_str()) {
            return Err(schema("experiment.kind", format!("unknown experiment `{name}`")));
        }
        let same = table.get("experiment").and_then(|e| e.get("kind")).and_then(|k| k.as_str()) == Some(name.as_str());
        if !same {
            let mut t = toml::Table::new();
            t.insert("kind".into(), toml::Value::String(name.clone()));
            table.insert("experiment".into(), toml::Value::Table(t));
        }
    }
    if let Some(seed) = overrides.seed {
        let run = table.entry("run").or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if let toml::Value::Table(t) = run {
            t.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
    }
    match table.get("schema_version") {
        None => return Err(schema("schema_version", "missing schema version tag")),
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
        Some(v) => return Err(schema("schema_version", format!("unsupported schema version {v}, expected {SCHEMA_VERSION}"))),
    }
    let mut cfg: RunConfig = deserialize(toml::Value::Table(table))?;
    if let Some(out) = &overrides.out {
        cfg.run.output_dir = out.to_string_lossy().into_owned();
    }
    resolve_paths(&mut cfg, path.parent().unwrap_or(Path::new(".")));
    validate(&cfg)?;
    Ok(cfg)
}

/// Parses a config from text (no environment, relative paths kept).
pub fn from_str(text: &str) -> Result<RunConfig, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| schema(".", e.message()))?;
    if table.get("schema_version").is_none() {
        return Err(schema("schema_version", "missing schema version tag"));
    }
    let cfg: RunConfig = deserialize(toml::Value::Table(table))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn absolutize(base: &Path, p: &mut String) {
    let path = Path::new(p.as_str());
    if path.is_relative() {
        *p = base.join(path).to_string_lossy().into_owned();
    }
}

fn resolve_paths(cfg: &mut RunConfig, base: &Path) {
    if let InitialBlock::Snapshot { path } = &mut cfg.initial {
        absolutize(base, path);
    }
    if let Experiment::RateLdp(r) | Experiment::RateMdp(r) = &mut cfg.experiment {
        if let TargetSpec::FullState { snapshot: Some(p), .. } = &mut r.target {
            absolutize(base, p);
        }
    }
}

fn check_file(field: &str, p: &str) -> Result<(), CliError> {
    if Path::new(p).is_file() {
        Ok(())
    } else {
        Err(schema(field, format!("referenced file `{p}` does not exist")))
    }
}

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.grid.domain().validate().map_err(|e| schema("grid", e))?;
    cfg.physics.params().validate().map_err(|e| schema("physics", e))?;
    cfg.integrator.config().validate().map_err(|e| schema("integrator", e))?;
    if let InitialBlock::Snapshot { path } = &cfg.initial {
        check_file("initial.path", path)?;
    }
    match &cfg.experiment {
        Experiment::RateLdp(r) | Experiment::RateMdp(r) => {
            if r.n_blocks == 0 {
                return Err(schema("experiment.n_blocks", "must be at least 1"));
            }
            if let TargetSpec::FullState { snapshot, modes, .. } = &r.target {
                if let Some(p) = snapshot {
                    check_file("experiment.target.snapshot", p)?;
                } else if modes.is_empty() {
                    return Err(schema("experiment.target", "full-state target needs modes or a snapshot"));
                }
            }
        }
        Experiment::McScaling(m) => {
            if m.eps.is_empty() || m.eps.iter().any(|e| !(*e > 0.0)) {
                return Err(schema("experiment.eps", "needs positive eps values"));
            }
            if !(m.kappa > 0.0 && m.dt > 0.0) || m.n_steps == 0 || m.paths == 0 {
                return Err(schema("experiment", "kappa, dt, n_steps and paths must be positive"));
            }
            if !(m.confidence > 0.0 && m.confidence < 1.0) {
                return Err(schema("experiment.confidence", "must lie in (0, 1)"));
            }
        }
        Experiment::Clt { eps, paths } => {
            if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) || *paths == 0 {
                return Err(schema("experiment", "clt needs at least two positive eps values and one path"));
            }
        }
        Experiment::Stochastic { paths, .. } if *paths == 0 => {
            return Err(schema("experiment.paths", "must be at least 1"));
        }
        Experiment::SkeletonLdp { control, .. } | Experiment::SkeletonMdp { control, .. } if control.blocks.is_empty() => {
            return Err(schema("experiment.control.blocks", "needs at least one block"));
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
schema_version = 1
[grid]
nx = 4
ny = 4
nz = 3
[experiment]
kind = "deterministic"
"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = from_str(TINY).unwrap();
        assert_eq!(cfg.run.seed, 0);
        assert_eq!(cfg.physics, PhysicsBlock::default());
        assert_eq!(cfg.experiment.name(), "deterministic");
    }

    #[test]
    fn missing_grid_names_the_path() {
        let err = from_str("schema_version = 1\n[experiment]\nkind = \"verify\"\n").unwrap_err();
        match err {
            CliError::Schema { path, .. } => assert_eq!(path, "grid"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn nested_errors_carry_the_field_path() {
        let text = TINY.replace("nz = 3", "nz = 3\nbogus = 1");
        match from_str(&text).unwrap_err() {
            CliError::Schema { path, .. } => assert_eq!(path, "grid.bogus"),
            e => panic!("{e:?}"),
        }
        let text = TINY.replace("nx = 4", "nx = \"four\"");
        match from_str(&text).unwrap_err() {
            CliError::Schema { path, .. } => assert_eq!(path, "grid.nx"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn env_overrides_reach_nested_keys() {
        let mut t: toml::Table = TINY.parse().unwrap();
        let env = vec![("HD_INTEGRATOR_T_END".to_string(), "0.5".to_string()), ("HD_RUN_OUTPUT_DIR".to_string(), "out".to_string())];
        apply_env(&mut t, &env).unwrap();
        let cfg: RunConfig = deserialize(toml::Value::Table(t)).unwrap();
        assert_eq!(cfg.integrator.t_end, 0.5);
        assert_eq!(cfg.run.output_dir, "out");
        let mut t: toml::Table = TINY.parse().unwrap();
        assert!(apply_env(&mut t, &[("HD_NOPE_X".into(), "1".into())]).is_err());
    }
}
