//! Exponentials `e^(tH^) = Id + S_t^` of log-scale kernels, and the identities they satisfy.
//!
//! `S_t = sum_{n>=1} t^n L_n / n!` is kept in the sandwich form
//! `t H + h_x^T M h_y` with `M = sum_{n>=2} t^n/n! (W K)^(n-2) W` on the
//! discretization grid of `H`, which is the recurrence `L_n = compose(L_{n-1}, H)`
//! evaluated once per epsilon. The number of terms comes from the majorant
//! `(1/Vol) sum_{n>N} (|t| Vol p)^n / n!` (compact supports, `p` the sup of `|H|`)
//! or `sum_{n>N} (|t| ||H||_2)^n / n!` (L2).
//!
//! `Id` has no kernel; an exponential is the pair `(Id, S)` and acts as `f + S^(f)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{classify, is_null_difference, linear_fit, GrowthClass, Policy, SeminormReport, SeminormSelector};
use crate::error::{Error, Result};
use crate::functions::{Func1, SmoothFn, C64};
use crate::genfunc::{self, scalar_product, seminorm_hm_adaptive, seminorm_pkl_adaptive, GeneralizedNumberNet, RepNet, Support};
use crate::kernel_ops::{
    apply, diag, kernel_combination, kernel_matrix, nystrom_box, nystrom_grid, sandwich_kernel, wk_times, KernelNet,
    MatrixBuilder, SandwichCache, SandwichData, Witness, WitnessKind,
};
use crate::quadrature::{grid_unchecked, AxisBox, Grid, Rule};
use crate::random;
use crate::report::{EpsResidual, ResidualReport, Verdict};

pub const N_CAP: usize = 300;
pub const DEFAULT_SERIES_TOL: f64 = 1e-14;
/// Series tolerance used by the derivative check, so truncation stays below the
/// central-difference error at the smallest step.
pub const DERIVATIVE_SERIES_TOL: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpMode {
    CompactSup,
    L2,
}

#[derive(Debug, Clone)]
pub struct ExpOptions {
    pub series_tol: f64,
    pub n_cap: usize,
    /// Run the log-scale check before summing.
    pub gate: bool,
    /// Record a failed log-scale check and continue.
    pub proceed_if_not_log_scale: bool,
    /// Box for the log-scale seminorms; the kernel's domain when `None`.
    pub gate_box: Option<AxisBox>,
    pub gate_l_max: usize,
    /// Terms summed beyond the majorant's choice.
    pub extra_terms: usize,
}

impl Default for ExpOptions {
    fn default() -> Self {
        ExpOptions {
            series_tol: DEFAULT_SERIES_TOL,
            n_cap: N_CAP,
            gate: true,
            proceed_if_not_log_scale: false,
            gate_box: None,
            gate_l_max: 0,
            extra_terms: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpSettings {
    pub mode: ExpMode,
    pub options: ExpOptions,
    pub policy: Policy,
}

impl Default for ExpSettings {
    fn default() -> Self {
        ExpSettings { mode: ExpMode::CompactSup, options: ExpOptions::default(), policy: Policy::default() }
    }
}

impl ExpSettings {
    fn with_tol(&self, tol: f64) -> ExpSettings {
        let mut s = self.clone();
        s.options.series_tol = tol;
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogScaleEntry {
    pub order: usize,
    pub class: GrowthClass,
    pub k: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LogScaleReport {
    pub mode: ExpMode,
    pub entries: Vec<LogScaleEntry>,
    pub max_k: f64,
    pub pass: bool,
}

fn gate_rule(dim: usize) -> Rule {
    if dim <= 2 {
        Rule::new(8, 4)
    } else {
        Rule::new(2, 4)
    }
}

/// Classifies `p_{K,l}(H_eps)` (or `||H_eps||_l` in L2 mode) for `l <= l_max`.
/// Bounded nets count as log-scale with `k = 0`.
pub fn check_log_scale(h: &KernelNet, k: &AxisBox, l_max: usize, mode: ExpMode, policy: &Policy) -> Result<LogScaleReport> {
    if l_max > h.base.deriv_order {
        return Err(Error::Capability(format!("{}: only {} derivatives", h.label(), h.base.deriv_order)));
    }
    let mut entries = Vec::new();
    for l in 0..=l_max {
        let rep = match mode {
            ExpMode::CompactSup => seminorm_pkl_adaptive(&h.base, k, l, gate_rule(k.dim()), policy)?,
            ExpMode::L2 => seminorm_hm_adaptive(&h.base, l, gate_rule(h.base.dim()), policy)?,
        };
        let class = classify(&rep, policy.m_max, policy.slope_tol);
        let kk = match class {
            GrowthClass::LogScale { k } => k,
            _ => rep.log_fit_coeff.max(0.0),
        };
        entries.push(LogScaleEntry { order: l, class, k: kk, slope: rep.fitted_slope });
    }
    let pass = entries.iter().all(|e| {
        matches!(e.class, GrowthClass::LogScale { .. } | GrowthClass::Negligible { .. } | GrowthClass::Moderate { n: 0 })
    });
    let max_k = entries.iter().map(|e| e.k).fold(0.0, f64::max);
    Ok(LogScaleReport { mode, entries, max_k, pass })
}

/// Coefficients `c_n` of an entire function `f(z) = sum c_n z^n` and a bound
/// `tail(x, N) >= sum_{n>N} |c_n| x^n`.
#[derive(Clone)]
pub struct SeriesSpec {
    pub label: String,
    pub coeff: Arc<dyn Fn(usize) -> C64 + Send + Sync>,
    pub tail: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
}

impl SeriesSpec {
    /// `e^(tz)`.
    pub fn exp(t: C64) -> Self {
        let a = t.norm();
        SeriesSpec {
            label: format!("exp({t})"),
            coeff: Arc::new(move |n| (1..=n).fold(C64::new(1.0, 0.0), |c, i| c * t / i as f64)),
            tail: Arc::new(move |x, n| exp_tail(a * x, n)),
        }
    }
}

/// `sum_{n>N} x^n / n! <= x^(N+1)/(N+1)! / (1 - x/(N+2))` for `x < N + 2`.
pub fn exp_tail(x: f64, n: usize) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x >= (n + 2) as f64 {
        return f64::INFINITY;
    }
    let first = (1..=n + 1).fold(1.0, |p, k| p * x / k as f64);
    first / (1.0 - x / (n + 2) as f64)
}

/// Smallest `N >= 1` with `scale * tail(x, N) < tol`.
fn choose_terms(spec: &SeriesSpec, x: f64, scale: f64, tol: f64, cap: usize, eps: f64) -> Result<(usize, f64)> {
    for n in 1..=cap {
        let b = scale * (spec.tail)(x, n);
        if b < tol {
            return Ok((n, b));
        }
    }
    Err(Error::Divergence { epsilon: eps, tol, cap })
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `(x, scale)` of the majorant at `eps`: `(Vol p, 1/Vol)` or `(||H||_2, 1)`.
fn majorant_arg(h: &KernelNet, eps: f64, k: &DMatrix<C64>, w: &[f64], mode: ExpMode) -> (f64, f64) {
    let gx = grid_unchecked(&h.x_support_at(eps), h.rule);
    let gy = grid_unchecked(&h.y_support_at(eps), h.rule);
    let full = kernel_matrix(h, eps, &gx, &gy);
    match mode {
        ExpMode::CompactSup => {
            let vol: f64 = w.iter().sum();
            let p = max_abs(k).max(max_abs(&full));
            if vol > 0.0 {
                (vol * p, 1.0 / vol)
            } else {
                (0.0, 1.0)
            }
        }
        ExpMode::L2 => {
            let mut on_grid = 0.0;
            let mut on_support = 0.0;
            for i in 0..k.nrows() {
                for j in 0..k.ncols() {
                    on_grid += w[i] * w[j] * k[(i, j)].norm_sqr();
                }
            }
            for i in 0..gx.len() {
                for j in 0..gy.len() {
                    on_support += gx.weights[i] * gy.weights[j] * full[(i, j)].norm_sqr();
                }
            }
            (on_grid.sqrt().max(on_support.sqrt()), 1.0)
        }
    }
}

/// `sum_{n=2}^{N} c_n (W K)^(n-2) W`.
fn series_matrix(spec: &SeriesSpec, n_terms: usize, k: &DMatrix<C64>, w: &[f64]) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(w.len(), w.len());
    if n_terms < 2 {
        return m;
    }
    let mut p = diag(w);
    for n in 2..=n_terms {
        if n > 2 {
            p = wk_times(w, k, &p);
        }
        m += &p * (spec.coeff)(n);
    }
    m
}

/// Square kernel in the witness mode the series needs.
fn prepare(h: &KernelNet, mode: ExpMode) -> Result<KernelNet> {
    if !h.is_square() {
        return Err(Error::Dimension { expected: h.x_dim, found: h.y_dim });
    }
    match (mode, h.witness_kind()) {
        (_, WitnessKind::Local) => Err(Error::Capability(format!(
            "{}: exponentials need a kernel with a global or L2 support box",
            h.label()
        ))),
        (ExpMode::CompactSup, WitnessKind::L2) => Err(Error::Capability(format!(
            "{}: L2 kernel has no compact-support witness; use L2 mode",
            h.label()
        ))),
        (ExpMode::CompactSup, _) => Ok(h.clone()),
        (ExpMode::L2, _) => Ok(h.clone().into_l2()),
    }
}

pub struct ExpSeriesResult {
    /// Kernel of `S`.
    pub s: KernelNet,
    pub t: C64,
    pub mode: ExpMode,
    pub series_tol: f64,
    pub epsilons: Vec<f64>,
    pub terms_used: Vec<usize>,
    pub tail_bound: Vec<f64>,
    pub log_scale: Option<LogScaleReport>,
    /// The kernel the series was built from, after mode conversion.
    pub kernel: KernelNet,
    c1: C64,
    cache: Arc<SandwichCache>,
    info: Arc<Mutex<HashMap<u64, (usize, f64)>>>,
}

impl ExpSeriesResult {
    /// `e^(tH^)(f) = f + S^(f)`.
    pub fn apply(&self, f: &RepNet) -> Result<RepNet> {
        genfunc::add(f, &apply(&self.s, f)?)
    }

    pub fn discretization(&self, eps: f64) -> Result<Arc<SandwichData>> {
        self.cache.get(eps)
    }

    /// Grid and `S_eps` on it.
    pub fn grid_matrix(&self, eps: f64) -> Result<(Grid, DMatrix<C64>)> {
        let d = self.cache.get(eps)?;
        Ok((d.grid.clone(), d.grid_values(self.c1)))
    }

    /// `(N(eps), tail bound)` once `eps` has been built.
    pub fn terms_at(&self, eps: f64) -> Option<(usize, f64)> {
        self.info.lock().unwrap().get(&eps.to_bits()).copied()
    }

    fn eps_row(&self, eps: f64, residual: f64) -> EpsResidual {
        let t = self.terms_at(eps);
        EpsResidual { epsilon: eps, residual, terms_used: t.map(|p| p.0), tail_bound: t.map(|p| p.1) }
    }
}

impl std::fmt::Debug for ExpSeriesResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExpSeriesResult")
            .field("t", &self.t)
            .field("mode", &self.mode)
            .field("terms_used", &self.terms_used)
            .field("tail_bound", &self.tail_bound)
            .finish()
    }
}

/// `S_t` for `e^(tH^)`.
pub fn exp_kernel(h: &KernelNet, t: C64, mode: ExpMode, series_tol: f64, policy: &Policy) -> Result<ExpSeriesResult> {
    let s = ExpSettings { mode, options: ExpOptions { series_tol, ..ExpOptions::default() }, policy: policy.clone() };
    exp_with(h, t, &s)
}

pub fn exp_with(h: &KernelNet, t: C64, settings: &ExpSettings) -> Result<ExpSeriesResult> {
    let mut r = entire_kernel(h, SeriesSpec::exp(t), settings)?;
    r.t = t;
    Ok(r)
}

/// `f(H^) - f(0) Id` for an entire `f` given by its coefficients and tail majorant.
///
/// Experimental: the majorant is trusted as given.
pub fn entire_kernel(h: &KernelNet, spec: SeriesSpec, settings: &ExpSettings) -> Result<ExpSeriesResult> {
    let mode = settings.mode;
    let opts = &settings.options;
    let policy = &settings.policy;
    let h = prepare(h, mode)?;
    let log_scale = if opts.gate {
        let k = opts.gate_box.clone().unwrap_or_else(|| h.base.domain.clone());
        let rep = check_log_scale(&h, &k, opts.gate_l_max, mode, policy)?;
        if !rep.pass && !opts.proceed_if_not_log_scale {
            let worst = rep.entries.iter().find(|e| !matches!(e.class, GrowthClass::LogScale { .. } | GrowthClass::Negligible { .. } | GrowthClass::Moderate { n: 0 }));
            return Err(Error::LogScaleGate(format!(
                "{}: order {} classified {}",
                h.label(),
                worst.map(|e| e.order).unwrap_or(0),
                worst.map(|e| e.class.label()).unwrap_or_default()
            )));
        }
        Some(rep)
    } else {
        None
    };
    let info: Arc<Mutex<HashMap<u64, (usize, f64)>>> = Arc::new(Mutex::new(HashMap::new()));
    let (hh, sp, inf) = (h.clone(), spec.clone(), info.clone());
    let (tol, cap, extra) = (opts.series_tol, opts.n_cap, opts.extra_terms);
    let build: MatrixBuilder = Arc::new(move |eps, k, w| {
        let (x, scale) = majorant_arg(&hh, eps, k, w, mode);
        let (n, tail) = choose_terms(&sp, x, scale, tol, cap, eps)?;
        inf.lock().unwrap().insert(eps.to_bits(), (n, tail));
        Ok(series_matrix(&sp, n + extra, k, w))
    });
    let c1 = (spec.coeff)(1);
    let (s, cache) = sandwich_kernel(&h, c1, build, format!("S[{}]({})", spec.label, h.label()))?;
    cache.prefill(&policy.schedule)?;
    let epsilons = policy.schedule.values().to_vec();
    let (terms_used, tail_bound) = {
        let m = info.lock().unwrap();
        epsilons.iter().map(|e| m[&e.to_bits()]).unzip()
    };
    Ok(ExpSeriesResult {
        s,
        t: C64::new(1.0, 0.0),
        mode,
        series_tol: opts.series_tol,
        epsilons,
        terms_used,
        tail_bound,
        log_scale,
        kernel: h,
        c1,
        cache,
        info,
    })
}

/// `(e^Z, phi_1(Z), phi_2(Z))` from the exponential of `[[Z, I, 0], [0, 0, I], [0, 0, 0]]`.
pub fn phi_functions(z: &DMatrix<C64>, eps: f64) -> Result<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>)> {
    let n = z.nrows();
    let one = C64::new(1.0, 0.0);
    let mut big = DMatrix::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(z);
    for i in 0..n {
        big[(i, n + i)] = one;
        big[(n + i, 2 * n + i)] = one;
    }
    let e = big.exp();
    if e.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Overflow(eps));
    }
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
        e.view((0, 2 * n), (n, n)).into_owned(),
    ))
}

/// `K W`.
fn kw(k: &DMatrix<C64>, w: &[f64]) -> DMatrix<C64> {
    let mut a = k.clone();
    for (j, wj) in w.iter().enumerate() {
        a.column_mut(j).scale_mut(*wj);
    }
    a
}

/// `t phi_1(t K W) K` on the grid.
pub fn oracle_grid(k: &DMatrix<C64>, w: &[f64], t: C64, eps: f64) -> Result<DMatrix<C64>> {
    let (_, p1, _) = phi_functions(&(kw(k, w) * t), eps)?;
    Ok(p1 * k * t)
}

/// Oracle for `S_t` from matrix functions: `t H + h_x^T (t^2 W phi_2(t K W)) h_y`,
/// which equals `t phi_1(t K W) K` on the grid.
pub fn oracle_phi1(h: &KernelNet, t: C64, mode: ExpMode) -> Result<(KernelNet, Arc<SandwichCache>)> {
    let h = prepare(h, mode)?;
    let build: MatrixBuilder = Arc::new(move |eps, k, w| {
        let (_, _, p2) = phi_functions(&(kw(k, w) * t), eps)?;
        let mut m = p2 * (t * t);
        for (i, wi) in w.iter().enumerate() {
            m.row_mut(i).scale_mut(*wi);
        }
        Ok(m)
    });
    sandwich_kernel(&h, t, build, format!("phi1-oracle({})", h.label()))
}

/// `max |a - b| / max |b|`, 0 when both vanish.
fn rel_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let d = max_abs(&(a - b));
    if d == 0.0 {
        0.0
    } else {
        d / max_abs(b)
    }
}

/// `a W b`.
fn wprod(a: &DMatrix<C64>, w: &[f64], b: &DMatrix<C64>) -> DMatrix<C64> {
    kw(a, w) * b
}

pub const ORACLE_TOL: f64 = 1e-10;
pub const SEMIGROUP_TOL: f64 = 1e-8;
pub const COMMUTE_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-7;
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Series against `t phi_1(t K W) K`, per epsilon, on the grid.
pub fn oracle_agreement(res: &ExpSeriesResult) -> Result<ResidualReport> {
    let mut rows = Vec::new();
    for &e in &res.epsilons {
        let d = res.discretization(e)?;
        let o = oracle_grid(&d.k, &d.grid.weights, res.t, e)?;
        rows.push(res.eps_row(e, rel_diff(&d.grid_values(res.c1), &o)));
    }
    Ok(ResidualReport::new("series-vs-phi1-oracle", rows, ORACLE_TOL))
}

/// `Id + S W` against `exp(t K W)`, per epsilon.
pub fn exp_matrix_identity(res: &ExpSeriesResult) -> Result<ResidualReport> {
    let mut rows = Vec::new();
    for &e in &res.epsilons {
        let d = res.discretization(e)?;
        let w = &d.grid.weights;
        let lhs = DMatrix::identity(w.len(), w.len()) + kw(&d.grid_values(res.c1), w);
        let rhs = (kw(&d.k, w) * res.t).exp();
        rows.push(res.eps_row(e, rel_diff(&lhs, &rhs)));
    }
    Ok(ResidualReport::new("id-plus-sw-vs-expm", rows, ORACLE_TOL))
}

/// `sum_j c_j cos(f_j x + p_j)` per axis, restricted to the discretization box of `h`.
pub fn grid_probe(h: &KernelNet, f: SmoothFn) -> Result<RepNet> {
    let hh = h.clone();
    Ok(RepNet::from_smooth(f, h.y_domain())?.with_support(Support::Shrinking(Arc::new(move |e| nystrom_box(&hh, e)))))
}

fn default_probe(dim: usize) -> SmoothFn {
    let f = Func1::Trig { amp: 1.0, freq: 1.3, phase: 0.2 };
    SmoothFn::tensor(vec![f; dim])
}

fn grid_values(f: &RepNet, eps: f64, g: &Grid) -> Vec<C64> {
    g.nodes().map(|x| f.eval(eps, x)).collect()
}

/// `(I + S W) v` for a grid vector `v`.
fn act(s: &DMatrix<C64>, w: &[f64], v: &[C64]) -> Vec<C64> {
    let wv: Vec<C64> = v.iter().zip(w).map(|(a, b)| a * *b).collect();
    let sv = s * nalgebra::DVector::from_vec(wv);
    v.iter().zip(sv.iter()).map(|(a, b)| a + b).collect()
}

/// `e^(aH^) o e^(bH^) = e^((a+b)H^)`: kernel residual `||S_{a+b} - (S_a W S_b + S_a + S_b)||`,
/// and the same identity applied to a probe, with `e^((a+b)H^)(f)` taken through [`ExpSeriesResult::apply`].
pub fn verify_semigroup(h: &KernelNet, a: C64, b: C64, settings: &ExpSettings) -> Result<ResidualReport> {
    let sa = exp_with(h, a, settings)?;
    let sb = exp_with(h, b, settings)?;
    let sab = exp_with(h, a + b, settings)?;
    let probe = grid_probe(&sab.kernel, default_probe(h.x_dim))?;
    let u_probe = sab.apply(&probe)?;
    let mut rows = Vec::new();
    for &e in &sab.epsilons {
        let (g, mab) = sab.grid_matrix(e)?;
        let (_, ma) = sa.grid_matrix(e)?;
        let (_, mb) = sb.grid_matrix(e)?;
        let w = &g.weights;
        let rhs = wprod(&ma, w, &mb) + &ma + &mb;
        let d = max_abs(&(&mab - &rhs));
        let den = max_abs(&mab).max(max_abs(&ma)).max(max_abs(&mb));
        let kernel_res = if d == 0.0 { 0.0 } else { d / den };
        let f = grid_values(&probe, e, &g);
        let lhs = act(&ma, w, &act(&mb, w, &f));
        let direct = grid_values(&u_probe, e, &g);
        let fmax = f.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let op_res = lhs.iter().zip(&direct).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max) / fmax;
        rows.push(sab.eps_row(e, kernel_res.max(op_res)));
    }
    Ok(ResidualReport::new(format!("semigroup(a={a}, b={b})"), rows, SEMIGROUP_TOL)
        .with_note("residual = max(kernel identity, identity applied to a trigonometric probe)"))
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub t: f64,
    pub steps: Vec<f64>,
    /// Largest relative residual over epsilon, per step.
    pub residuals: Vec<f64>,
    pub observed_order: Option<f64>,
    /// Per-epsilon residuals at the smallest step.
    pub per_epsilon: Vec<EpsResidual>,
    pub verdict: Verdict,
}

pub const DEFAULT_STEPS: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

/// `(S_{t+h} - S_{t-h}) / 2h` against `Ker(H^ o e^(tH^)) = H + H W S_t`.
pub fn verify_derivative(h: &KernelNet, t: f64, steps: &[f64], settings: &ExpSettings) -> Result<DerivativeReport> {
    if steps.is_empty() || steps.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Argument("derivative steps must be positive".into()));
    }
    let settings = settings.with_tol(settings.options.series_tol.min(DERIVATIVE_SERIES_TOL));
    let st = exp_with(h, C64::new(t, 0.0), &settings)?;
    let mut residuals = Vec::new();
    let mut last_rows = Vec::new();
    for &hs in steps {
        let sp = exp_with(h, C64::new(t + hs, 0.0), &settings)?;
        let sm = exp_with(h, C64::new(t - hs, 0.0), &settings)?;
        let mut rows = Vec::new();
        for &e in &st.epsilons {
            let d = st.discretization(e)?;
            let w = &d.grid.weights;
            let target = &d.k + wprod(&d.k, w, &d.grid_values(st.c1));
            let (_, p) = sp.grid_matrix(e)?;
            let (_, m) = sm.grid_matrix(e)?;
            let fd = (p - m) / C64::new(2.0 * hs, 0.0);
            rows.push(st.eps_row(e, rel_diff(&fd, &target)));
        }
        residuals.push(rows.iter().map(|r| r.residual).fold(0.0, f64::max));
        last_rows = rows;
    }
    let exact = residuals.iter().all(|r| *r <= 1e-13);
    let observed_order = if exact || steps.len() < 2 {
        None
    } else {
        let xs: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
        let ys: Vec<f64> = residuals.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
        Some(linear_fit(&xs, &ys).0)
    };
    let ok = exact || observed_order.is_some_and(|o| (o - 2.0).abs() <= 0.2);
    Ok(DerivativeReport {
        t,
        steps: steps.to_vec(),
        residuals,
        observed_order,
        per_epsilon: last_rows,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    })
}

/// `H^ o e^(tH^) = e^(tH^) o H^`: `||H W S - S W H|| / ||H W S||` on the grid.
pub fn verify_commutes(h: &KernelNet, t: C64, settings: &ExpSettings) -> Result<ResidualReport> {
    let st = exp_with(h, t, settings)?;
    let mut rows = Vec::new();
    for &e in &st.epsilons {
        let d = st.discretization(e)?;
        let w = &d.grid.weights;
        let s = d.grid_values(st.c1);
        rows.push(st.eps_row(e, rel_diff(&wprod(&s, w, &d.k), &wprod(&d.k, w, &s))));
    }
    Ok(ResidualReport::new(format!("commutes-with-exp(t={t})"), rows, COMMUTE_TOL))
}

/// `e^(H^) o e^(K^) = e^(H^ + K^)` when `H^` and `K^` commute. All matrices are taken on
/// the discretization grid of `H + K`.
pub fn verify_commuting_sum(h: &KernelNet, k: &KernelNet, settings: &ExpSettings) -> Result<ResidualReport> {
    let one = C64::new(1.0, 0.0);
    let hk = kernel_combination(h, one, k, one)?;
    let (eh, ek, ehk) = (exp_with(h, one, settings)?, exp_with(k, one, settings)?, exp_with(&hk, one, settings)?);
    let mut rows = Vec::new();
    let mut comm = 0.0f64;
    let mut same_grids = true;
    for &e in &ehk.epsilons {
        let g = nystrom_grid(&ehk.kernel, e)?;
        let b = nystrom_box(&ehk.kernel, e);
        same_grids &= nystrom_box(&eh.kernel, e) == b && nystrom_box(&ek.kernel, e) == b;
        let w = &g.weights;
        let (kh, kk) = (kernel_matrix(&eh.kernel, e, &g, &g), kernel_matrix(&ek.kernel, e, &g, &g));
        comm = comm.max(rel_diff(&wprod(&kh, w, &kk), &wprod(&kk, w, &kh)));
        let sh = kernel_matrix(&eh.s, e, &g, &g);
        let sk = kernel_matrix(&ek.s, e, &g, &g);
        let (_, shk) = ehk.grid_matrix(e)?;
        let rhs = wprod(&sh, w, &sk) + &sh + &sk;
        rows.push(ehk.eps_row(e, rel_diff(&rhs, &shk)));
    }
    let mut r = ResidualReport::new("commuting-sum", rows, SEMIGROUP_TOL)
        .with_note(format!("commutation residual {comm:e}"));
    if comm > COMMUTE_TOL {
        r.verdict = Verdict::HypothesisViolated;
    }
    if !same_grids {
        r = r.with_note("discretization boxes differ; residual includes quadrature error");
    }
    Ok(r)
}

/// `max |H(x_i, x_j) - conj(H(x_j, x_i))| / max(1, sup |H|)` on the grid, per epsilon.
pub fn is_symmetric(h: &KernelNet, policy: &Policy) -> Result<ResidualReport> {
    if !h.is_square() {
        return Err(Error::Dimension { expected: h.x_dim, found: h.y_dim });
    }
    let mut rows = Vec::new();
    for e in policy.schedule.iter() {
        let g = match h.witness_kind() {
            WitnessKind::Local => grid_unchecked(&h.x_domain(), h.rule),
            _ => nystrom_grid(h, e)?,
        };
        let k = kernel_matrix(h, e, &g, &g);
        let d = max_abs(&(&k - k.adjoint()));
        rows.push(EpsResidual { epsilon: e, residual: d / max_abs(&k).max(1.0), terms_used: None, tail_bound: None });
    }
    Ok(ResidualReport::new("symmetry", rows, SYMMETRY_TOL))
}

/// `|(Uf, Ug) - (f, g)| / |(f, g)|` with `U = e^(itH^)`; scalar products are weighted sums over
/// the discretization grid, where `U` acts as `I + S W`.
pub fn verify_unitary(h: &KernelNet, t: f64, probes: &[(RepNet, RepNet)], settings: &ExpSettings) -> Result<ResidualReport> {
    let sym = is_symmetric(h, &settings.policy)?;
    let u = exp_with(h, C64::new(0.0, t), settings)?;
    let mut rows = Vec::new();
    for &e in &u.epsilons {
        let (g, s) = u.grid_matrix(e)?;
        let w = &g.weights;
        let mut worst = 0.0f64;
        for (f, gg) in probes {
            let fg = scalar_product(f, gg, &g)?.value(e);
            let (fv, gv) = (grid_values(f, e, &g), grid_values(gg, e, &g));
            let (uf, ug) = (act(&s, w, &fv), act(&s, w, &gv));
            let ufg: C64 = uf.iter().zip(&ug).zip(w).map(|((a, b), wi)| a * b.conj() * *wi).sum();
            let den = if fg.norm() > 0.0 {
                fg.norm()
            } else {
                let n = |v: &[C64]| v.iter().zip(w).map(|(a, wi)| a.norm_sqr() * wi).sum::<f64>().sqrt();
                (n(&fv) * n(&gv)).max(f64::MIN_POSITIVE)
            };
            worst = worst.max((ufg - fg).norm() / den);
        }
        rows.push(u.eps_row(e, worst));
    }
    let mut r = ResidualReport::new(format!("unitary(t={t})"), rows, UNITARY_TOL);
    if !sym.passed() {
        r.verdict = Verdict::HypothesisViolated;
        r = r.with_note(format!("kernel not symmetric: residual {:e}", sym.max_residual));
    }
    Ok(r)
}

/// Random probe pairs for [`verify_unitary`].
pub fn random_probe_pairs(h: &KernelNet, count: usize, seed: u64) -> Result<Vec<(RepNet, RepNet)>> {
    let mut rng = random::rng(seed);
    let dom = h.x_domain();
    (0..count)
        .map(|_| {
            let f = RepNet::from_smooth(random::trig_probe(&mut rng, 3), dom.clone())?;
            let g = RepNet::from_smooth(random::trig_probe(&mut rng, 3), dom.clone())?;
            Ok((f, g))
        })
        .collect()
}

/// Re-runs the series on `H + eps^3 R` (R a random smooth kernel, same witness) and checks
/// that the two `S` differ by a net negligible to order 2.
pub fn verify_representative_independence(h: &KernelNet, t: C64, seed: u64, settings: &ExpSettings) -> Result<(bool, SeminormReport)> {
    let r = random::smooth_kernel(&mut random::rng(seed), &h.x_domain(), &h.y_domain(), 3, h.rule)?;
    let small = genfunc::scale_net(&GeneralizedNumberNet::power(1.0, 3.0), &r.base);
    let mut hp = h.clone();
    hp.base = genfunc::add(&h.base, &small)?.with_support(h.base.support.clone());
    if let Witness::Local(_) = hp.witness {
        return Err(Error::Capability("exponentials need a global or L2 support box".into()));
    }
    let s1 = exp_with(h, t, settings)?;
    let s2 = exp_with(&hp, t, settings)?;
    let k = h.base.domain.clone();
    is_null_difference(&s1.s.base, &s2.s.base, SeminormSelector::Sup { l: 0, rule: Rule::new(4, 4) }, &k, 2, &settings.policy)
}

#[cfg(test)]
mod tests;
