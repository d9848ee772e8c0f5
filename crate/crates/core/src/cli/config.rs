//! Run configuration: a TOML file of named domains, functions, kernels and tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{make_schedule, EpsilonSchedule, Policy};
use crate::error::{Error, Result};
use crate::exponential::ExpMode;
use crate::functions::{SmoothFn, TensorTerm, C64};
use crate::genfunc::{GeneralizedNumberNet, RepNet};
use crate::kernel_ops::{load_sampled_kernel, KernelNet};
use crate::mollifier::{build_rho, build_rho_cached, embed_is, DistributionSpec, MollifierKit};
use crate::quadrature::{AxisBox, Rule};
use crate::random;

/// Objects every configuration can reference without defining them.
pub const BUILTIN: &str = include_str!("builtin.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Values { values: Vec<f64> },
    Range { k_min: i32, k_max: i32, #[serde(default = "two")] base: f64 },
}

fn two() -> f64 {
    2.0
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Range { k_min: 4, k_max: 14, base: 2.0 }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<EpsilonSchedule> {
        match self {
            ScheduleSpec::Values { values } => EpsilonSchedule::new(values.clone()),
            ScheduleSpec::Range { k_min, k_max, base } => make_schedule(*k_min, *k_max, *base),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub series_tol: f64,
    pub slope_tol: f64,
    pub m_max: u32,
    pub window: usize,
    pub noise_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let p = Policy::default();
        Tolerances {
            series_tol: crate::exponential::DEFAULT_SERIES_TOL,
            slope_tol: p.slope_tol,
            m_max: p.m_max,
            window: p.window,
            noise_rel: p.noise_rel,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MollifierSpec {
    pub resolution: usize,
    pub radius: f64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for MollifierSpec {
    fn default() -> Self {
        MollifierSpec { resolution: 256, radius: 20.0, cache_dir: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub bounds: Vec<(f64, f64)>,
    #[serde(default = "eight")]
    pub panels: usize,
    #[serde(default = "eight")]
    pub nodes: usize,
}

fn eight() -> usize {
    8
}

impl DomainSpec {
    pub fn bbox(&self) -> Result<AxisBox> {
        AxisBox::new(self.bounds.clone())
    }

    pub fn rule(&self) -> Rule {
        Rule::new(self.panels, self.nodes)
    }
}

/// Generalized-number factor applied to a kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScaleSpec {
    /// `c |ln eps|`
    Log { c: f64 },
    /// `c eps^p`
    Power { c: f64, p: f64 },
    Constant { re: f64, #[serde(default)] im: f64 },
}

impl ScaleSpec {
    fn net(&self) -> GeneralizedNumberNet {
        match *self {
            ScaleSpec::Log { c } => GeneralizedNumberNet::log_scale(c),
            ScaleSpec::Power { c, p } => GeneralizedNumberNet::power(c, p),
            ScaleSpec::Constant { re, im } => GeneralizedNumberNet::constant(C64::new(re, im)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `sigma(f)` for `f = sum of tensor terms`.
    Smooth { domain: String, terms: Vec<TensorTerm> },
    /// `i_S(T)`, one-dimensional.
    Distribution { domain: String, dist: DistributionSpec },
    /// Random trigonometric polynomial.
    Probe { domain: String, #[serde(default = "three")] modes: usize, seed: Option<u64> },
}

fn three() -> usize {
    3
}

impl FunctionSpec {
    fn domain(&self) -> &str {
        match self {
            FunctionSpec::Smooth { domain, .. } | FunctionSpec::Distribution { domain, .. } | FunctionSpec::Probe { domain, .. } => domain,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelCtor {
    Sigma { x: String, y: String, terms: Vec<TensorTerm> },
    /// `Theta_eps(x - y)`.
    Theta { domain: String },
    Zero { x: String, y: String },
    RandomSmooth { domain: String, #[serde(default = "three")] terms: usize, seed: Option<u64> },
    Hermitian { domain: String, #[serde(default = "three")] rank: usize, seed: Option<u64> },
    /// CSV `epsilon,x,y,re,im`.
    Sampled { domain: String, path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub ctor: KernelCtor,
    #[serde(default)]
    pub scale: Option<ScaleSpec>,
    /// Drop the support witness (L2 kernel).
    #[serde(default)]
    pub l2: bool,
}

impl KernelSpec {
    fn domains(&self) -> Vec<&str> {
        match &self.ctor {
            KernelCtor::Sigma { x, y, .. } | KernelCtor::Zero { x, y } => vec![x, y],
            KernelCtor::Theta { domain }
            | KernelCtor::RandomSmooth { domain, .. }
            | KernelCtor::Hermitian { domain, .. }
            | KernelCtor::Sampled { domain, .. } => vec![domain],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Semigroup, derivative, commutation, oracle agreement and (for symmetric kernels) unitarity.
    Exponential,
    /// Zero-operator falsification harness.
    Zero,
    /// Log-scale classification.
    LogScale,
    /// Properly-supported witness check.
    Support,
}

fn one_re() -> (f64, f64) {
    (1.0, 0.0)
}

fn one_f() -> f64 {
    1.0
}

fn five() -> usize {
    5
}

fn four() -> u32 {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskOp {
    /// Moment conditions `m = 0..m_max-1` of `Theta_eps`.
    Moments {
        #[serde(default = "four")]
        m_max: u32,
        #[serde(default = "three_f")]
        min_decay: f64,
    },
    Embed { function: String },
    Apply { kernel: String, function: String },
    Compose { left: String, right: String },
    Power { kernel: String, n: usize },
    Exp {
        kernel: String,
        #[serde(default = "one_re")]
        t: (f64, f64),
        #[serde(default = "compact")]
        mode: ExpMode,
        #[serde(default)]
        proceed: bool,
    },
    Verify {
        suite: Suite,
        kernel: String,
        #[serde(default = "one_f")]
        t: f64,
        #[serde(default = "five")]
        probes: usize,
    },
}

fn three_f() -> f64 {
    3.0
}

fn compact() -> ExpMode {
    ExpMode::CompactSup
}

impl TaskOp {
    pub fn name(&self) -> &'static str {
        match self {
            TaskOp::Moments { .. } => "moments",
            TaskOp::Embed { .. } => "embed",
            TaskOp::Apply { .. } => "apply",
            TaskOp::Compose { .. } => "compose",
            TaskOp::Power { .. } => "power",
            TaskOp::Exp { .. } => "exp",
            TaskOp::Verify { .. } => "verify",
        }
    }

    fn kernels(&self) -> Vec<&str> {
        match self {
            TaskOp::Apply { kernel, .. } | TaskOp::Power { kernel, .. } | TaskOp::Exp { kernel, .. } | TaskOp::Verify { kernel, .. } => vec![kernel],
            TaskOp::Compose { left, right } => vec![left, right],
            _ => vec![],
        }
    }

    fn functions(&self) -> Vec<&str> {
        match self {
            TaskOp::Embed { function } | TaskOp::Apply { function, .. } => vec![function],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    /// Base path of the outputs, relative to the output directory; the task name by default.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(flatten)]
    pub op: TaskOp,
}

impl Task {
    pub fn output_base(&self) -> &str {
        self.output.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mollifier: MollifierSpec,
    #[serde(default)]
    pub domains: BTreeMap<String, DomainSpec>,
    #[serde(default)]
    pub functions: BTreeMap<String, FunctionSpec>,
    #[serde(default)]
    pub kernels: BTreeMap<String, KernelSpec>,
    #[serde(default)]
    pub tasks: Vec<Task>,
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl RunConfig {
    /// Parses `text` and adds the built-in objects it does not redefine.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.merge_builtins();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn builtin() -> Self {
        toml::from_str(BUILTIN).expect("built-in catalog parses")
    }

    fn merge_builtins(&mut self) {
        let b = RunConfig::builtin();
        for (k, v) in b.domains {
            self.domains.entry(k).or_insert(v);
        }
        for (k, v) in b.functions {
            self.functions.entry(k).or_insert(v);
        }
        for (k, v) in b.kernels {
            self.kernels.entry(k).or_insert(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |what: &str, name: &str, user: &str| Error::Config(format!("{user}: undefined {what} \"{name}\""));
        for (n, f) in &self.functions {
            if !self.domains.contains_key(f.domain()) {
                return Err(missing("domain", f.domain(), &format!("function {n}")));
            }
        }
        for (n, k) in &self.kernels {
            for d in k.domains() {
                if !self.domains.contains_key(d) {
                    return Err(missing("domain", d, &format!("kernel {n}")));
                }
            }
        }
        let mut outputs = BTreeSet::new();
        for t in &self.tasks {
            for k in t.op.kernels() {
                if !self.kernels.contains_key(k) {
                    return Err(missing("kernel", k, &format!("task {}", t.name)));
                }
            }
            for f in t.op.functions() {
                if !self.functions.contains_key(f) {
                    return Err(missing("function", f, &format!("task {}", t.name)));
                }
            }
            if !outputs.insert(t.output_base().to_string()) {
                return Err(Error::Config(format!("task {}: output \"{}\" is used twice", t.name, t.output_base())));
            }
        }
        self.schedule.build()?;
        Ok(())
    }

    pub fn policy(&self) -> Result<Policy> {
        Ok(Policy {
            schedule: self.schedule.build()?,
            m_max: self.tolerances.m_max,
            slope_tol: self.tolerances.slope_tol,
            window: self.tolerances.window,
            noise_rel: self.tolerances.noise_rel,
        })
    }
}

/// Builds named objects on demand, resolving relative paths against `base_dir`.
pub struct Objects<'a> {
    pub cfg: &'a RunConfig,
    pub base_dir: PathBuf,
    kit: Option<MollifierKit>,
}

impl<'a> Objects<'a> {
    pub fn new(cfg: &'a RunConfig, base_dir: &Path) -> Self {
        Objects { cfg, base_dir: base_dir.to_path_buf(), kit: None }
    }

    pub fn kit(&mut self) -> Result<&MollifierKit> {
        if self.kit.is_none() {
            let m = &self.cfg.mollifier;
            let kit = match &m.cache_dir {
                Some(d) => build_rho_cached(m.resolution, m.radius, &self.base_dir.join(d))?,
                None => build_rho(m.resolution, m.radius)?,
            };
            self.kit = Some(kit);
        }
        Ok(self.kit.as_ref().expect("just built"))
    }

    pub fn domain(&self, name: &str) -> Result<&DomainSpec> {
        self.cfg.domains.get(name).ok_or_else(|| Error::Config(format!("undefined domain \"{name}\"")))
    }

    fn seed(&self, s: Option<u64>) -> u64 {
        s.unwrap_or(self.cfg.seed)
    }

    pub fn function(&mut self, name: &str) -> Result<RepNet> {
        let spec = self.cfg.functions.get(name).ok_or_else(|| Error::Config(format!("undefined function \"{name}\"")))?.clone();
        let dom = self.domain(spec.domain())?.bbox()?;
        let f = match &spec {
            FunctionSpec::Smooth { terms, .. } => RepNet::from_smooth(SmoothFn::Tensor { dim: dom.dim(), terms: terms.clone() }, dom)?,
            FunctionSpec::Distribution { dist, .. } => {
                let kit = self.kit()?.clone();
                embed_is(dist, &kit, &dom)?
            }
            FunctionSpec::Probe { modes, seed, .. } => {
                let mut rng = random::rng(self.seed(*seed));
                RepNet::from_smooth(random::trig_probe(&mut rng, *modes), dom)?
            }
        };
        Ok(f.with_label(name))
    }

    pub fn kernel(&mut self, name: &str) -> Result<KernelNet> {
        let spec = self.cfg.kernels.get(name).ok_or_else(|| Error::Config(format!("undefined kernel \"{name}\"")))?.clone();
        let k = match &spec.ctor {
            KernelCtor::Sigma { x, y, terms } => {
                let (dx, dy) = (self.domain(x)?, self.domain(y)?);
                let (bx, by) = (dx.bbox()?, dy.bbox()?);
                let f = SmoothFn::Tensor { dim: bx.dim() + by.dim(), terms: terms.clone() };
                KernelNet::sigma(f, &bx, &by, dy.rule())?
            }
            KernelCtor::Theta { domain } => {
                let d = self.domain(domain)?.clone();
                let b = d.bbox()?;
                let kit = self.kit()?.clone();
                KernelNet::theta_diff(&kit, &b, &b, d.rule())?
            }
            KernelCtor::Zero { x, y } => {
                let (dx, dy) = (self.domain(x)?, self.domain(y)?);
                KernelNet::zero(&dx.bbox()?, &dy.bbox()?, dy.rule())?
            }
            KernelCtor::RandomSmooth { domain, terms, seed } => {
                let d = self.domain(domain)?;
                let b = d.bbox()?;
                random::smooth_kernel(&mut random::rng(self.seed(*seed)), &b, &b, *terms, d.rule())?
            }
            KernelCtor::Hermitian { domain, rank, seed } => {
                let d = self.domain(domain)?;
                random::hermitian_kernel(&mut random::rng(self.seed(*seed)), &d.bbox()?, *rank, d.rule())?
            }
            KernelCtor::Sampled { domain, path } => {
                let d = self.domain(domain)?;
                load_sampled_kernel(&self.base_dir.join(path), d.rule())?
            }
        };
        let k = match &spec.scale {
            Some(s) => k.scaled(&s.net()),
            None => k,
        };
        let k = if spec.l2 { k.into_l2() } else { k };
        Ok(k.with_label(name))
    }
}
