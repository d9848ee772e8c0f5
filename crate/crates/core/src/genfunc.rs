//! Representative nets `(u_eps)` and their algebra.
//!
//! A [`RepNet`] is evaluated per epsilon through one closure that returns the
//! value of a partial derivative together with a roundoff magnitude: the size
//! of the floating-point terms that produced it. Seminorm reports turn that
//! magnitude into a noise floor so that cancellation residue is not mistaken
//! for a genuine (moderate) signal.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::asymptotics::{classify, fit_growth_with, Policy, SeminormReport};
use crate::error::{Error, Result};
use crate::functions::{SmoothFn, C64};
use crate::jet::binomial;
use crate::quadrature::{grid_unchecked, AxisBox, Grid, Rule};

/// A derivative value and the magnitude of the terms that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: C64,
    pub mag: f64,
}

impl Sample {
    pub const ZERO: Sample = Sample { value: C64 { re: 0.0, im: 0.0 }, mag: 0.0 };

    pub fn exact(value: C64) -> Self {
        Sample { value, mag: value.norm() }
    }

    pub fn real(v: f64) -> Self {
        Sample { value: C64::new(v, 0.0), mag: v.abs() }
    }
}

pub type NetFn = Arc<dyn Fn(f64, &[f64], &[usize]) -> Sample + Send + Sync>;
pub type ShrinkFn = Arc<dyn Fn(f64) -> AxisBox + Send + Sync>;

/// Where a net may be non-zero.
#[derive(Clone)]
pub enum Support {
    Unbounded,
    Fixed(AxisBox),
    /// Epsilon-dependent box, e.g. the support of a mollifier that shrinks to a point.
    Shrinking(ShrinkFn),
}

impl fmt::Debug for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Support::Unbounded => write!(f, "Unbounded"),
            Support::Fixed(b) => write!(f, "Fixed({:?})", b.axes),
            Support::Shrinking(_) => write!(f, "Shrinking"),
        }
    }
}

impl Support {
    pub fn at(&self, eps: f64) -> Option<AxisBox> {
        match self {
            Support::Unbounded => None,
            Support::Fixed(b) => Some(b.clone()),
            Support::Shrinking(f) => Some(f(eps)),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Support::Unbounded)
    }
}

/// A representative net: one smooth function per epsilon on a box domain.
#[derive(Clone)]
pub struct RepNet {
    pub domain: AxisBox,
    pub support: Support,
    /// Highest total derivative order `deriv_eval` supports.
    pub deriv_order: usize,
    pub label: String,
    f: NetFn,
}

impl fmt::Debug for RepNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RepNet")
            .field("label", &self.label)
            .field("domain", &self.domain.axes)
            .field("support", &self.support)
            .field("deriv_order", &self.deriv_order)
            .finish()
    }
}

/// All multi-indices of length `dim` with total order `<= max`.
pub fn multi_indices(dim: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    for order in 1..=max {
        let mut cur = vec![0; dim];
        fill(&mut out, &mut cur, 0, order);
    }
    out
}

fn fill(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, axis: usize, left: usize) {
    if axis + 1 == cur.len() {
        cur[axis] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[axis] = k;
        fill(out, cur, axis + 1, left - k);
    }
    cur[axis] = 0;
}

impl RepNet {
    pub fn new(
        domain: AxisBox,
        support: Support,
        deriv_order: usize,
        label: impl Into<String>,
        f: impl Fn(f64, &[f64], &[usize]) -> Sample + Send + Sync + 'static,
    ) -> Self {
        RepNet { domain, support, deriv_order, label: label.into(), f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Constant-in-epsilon net of a smooth function.
    pub fn from_smooth(f: SmoothFn, domain: AxisBox) -> Result<Self> {
        if f.dim() != domain.dim() {
            return Err(Error::Dimension { expected: domain.dim(), found: f.dim() });
        }
        let support = match f.support() {
            Some(axes) if f.is_zero() => Support::Fixed(AxisBox::raw(axes)),
            Some(axes) => match AxisBox::raw(axes).intersect(&domain) {
                Some(b) => Support::Fixed(b),
                None => Support::Fixed(AxisBox::point(&domain.center())),
            },
            None if f.is_zero() => Support::Fixed(AxisBox::point(&domain.center())),
            None => Support::Unbounded,
        };
        let order = f.order();
        Ok(RepNet::new(domain, support, order, "sigma", move |_, x, a| Sample {
            value: f.deriv(x, a),
            mag: f.deriv_magnitude(x, a),
        }))
    }

    pub fn zero(domain: AxisBox) -> Self {
        let d = domain.dim();
        RepNet::from_smooth(SmoothFn::zero(d), domain).expect("zero net")
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    /// Raw evaluation without the derivative-order check.
    #[inline]
    pub fn sample(&self, eps: f64, x: &[f64], alpha: &[usize]) -> Sample {
        (self.f)(eps, x, alpha)
    }

    pub fn eval(&self, eps: f64, x: &[f64]) -> C64 {
        let zeros = [0usize; 8];
        self.sample(eps, x, &zeros[..self.dim()]).value
    }

    pub fn deriv_eval(&self, eps: f64, x: &[f64], alpha: &[usize]) -> Result<C64> {
        let order: usize = alpha.iter().sum();
        if order > self.deriv_order {
            return Err(Error::Capability(format!(
                "{}: derivative order {order} exceeds {}",
                self.label, self.deriv_order
            )));
        }
        Ok(self.sample(eps, x, alpha).value)
    }

    pub fn support_at(&self, eps: f64) -> Option<AxisBox> {
        self.support.at(eps)
    }

    /// Support box at `eps` clipped to the domain; the domain when unbounded.
    pub fn support_box(&self, eps: f64) -> Option<AxisBox> {
        match self.support.at(eps) {
            None => Some(self.domain.clone()),
            Some(b) => b.intersect(&self.domain),
        }
    }
}

fn check_same_domain(a: &RepNet, b: &RepNet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

fn hull_support(a: &Support, b: &Support) -> Support {
    match (a, b) {
        (Support::Unbounded, _) | (_, Support::Unbounded) => Support::Unbounded,
        (Support::Fixed(x), Support::Fixed(y)) => Support::Fixed(x.hull(y)),
        _ => {
            let (a, b) = (a.clone(), b.clone());
            Support::Shrinking(Arc::new(move |e| a.at(e).unwrap().hull(&b.at(e).unwrap())))
        }
    }
}

fn meet_support(a: &Support, b: &Support) -> Support {
    match (a, b) {
        (Support::Unbounded, s) | (s, Support::Unbounded) => s.clone(),
        (Support::Fixed(x), Support::Fixed(y)) => Support::Fixed(
            x.intersect(y).unwrap_or_else(|| AxisBox::point(&x.center())),
        ),
        _ => {
            let (a, b) = (a.clone(), b.clone());
            Support::Shrinking(Arc::new(move |e| {
                let x = a.at(e).unwrap();
                x.intersect(&b.at(e).unwrap()).unwrap_or_else(|| AxisBox::point(&x.center()))
            }))
        }
    }
}

pub fn add(a: &RepNet, b: &RepNet) -> Result<RepNet> {
    combine(a, b, C64::new(1.0, 0.0))
}

pub fn sub(a: &RepNet, b: &RepNet) -> Result<RepNet> {
    combine(a, b, C64::new(-1.0, 0.0))
}

fn combine(a: &RepNet, b: &RepNet, sign: C64) -> Result<RepNet> {
    check_same_domain(a, b)?;
    let (fa, fb) = (a.clone(), b.clone());
    let label = if sign.re > 0.0 { "sum" } else { "difference" };
    Ok(RepNet::new(
        a.domain.clone(),
        hull_support(&a.support, &b.support),
        a.deriv_order.min(b.deriv_order),
        format!("{label}({}, {})", a.label, b.label),
        move |e, x, al| {
            let sa = fa.sample(e, x, al);
            let sb = fb.sample(e, x, al);
            Sample { value: sa.value + sign * sb.value, mag: sa.mag + sb.mag }
        },
    ))
}

/// Pointwise product with the Leibniz rule for derivatives.
pub fn mul(a: &RepNet, b: &RepNet) -> Result<RepNet> {
    check_same_domain(a, b)?;
    let (fa, fb) = (a.clone(), b.clone());
    Ok(RepNet::new(
        a.domain.clone(),
        meet_support(&a.support, &b.support),
        a.deriv_order.min(b.deriv_order),
        format!("product({}, {})", a.label, b.label),
        move |e, x, al| {
            let d = al.len();
            let mut beta = vec![0usize; d];
            let mut rest = vec![0usize; d];
            let mut acc = Sample::ZERO;
            loop {
                let mut coeff = 1.0;
                for i in 0..d {
                    coeff *= binomial(al[i], beta[i]);
                    rest[i] = al[i] - beta[i];
                }
                let sa = fa.sample(e, x, &beta);
                if sa.mag != 0.0 {
                    let sb = fb.sample(e, x, &rest);
                    acc.value += sa.value * sb.value * coeff;
                    acc.mag += sa.mag * sb.mag * coeff;
                }
                // next beta <= alpha
                let mut i = 0;
                loop {
                    if i == d {
                        return acc;
                    }
                    beta[i] += 1;
                    if beta[i] <= al[i] {
                        break;
                    }
                    beta[i] = 0;
                    i += 1;
                }
            }
        },
    ))
}

pub fn scale(c: C64, a: &RepNet) -> RepNet {
    let fa = a.clone();
    RepNet::new(
        a.domain.clone(),
        a.support.clone(),
        a.deriv_order,
        format!("{c}*{}", a.label),
        move |e, x, al| {
            let s = fa.sample(e, x, al);
            Sample { value: s.value * c, mag: s.mag * c.norm() }
        },
    )
}

/// Multiply by a generalized number, i.e. a scalar depending on epsilon.
pub fn scale_net(c: &GeneralizedNumberNet, a: &RepNet) -> RepNet {
    let fa = a.clone();
    let c = c.clone();
    RepNet::new(
        a.domain.clone(),
        a.support.clone(),
        a.deriv_order,
        format!("net*{}", a.label),
        move |e, x, al| {
            let k = c.sample(e);
            let s = fa.sample(e, x, al);
            Sample { value: s.value * k.value, mag: s.mag * k.mag }
        },
    )
}

/// A net of complex numbers `eps -> c_eps`.
#[derive(Clone)]
pub struct GeneralizedNumberNet {
    f: Arc<dyn Fn(f64) -> Sample + Send + Sync>,
}

impl fmt::Debug for GeneralizedNumberNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GeneralizedNumberNet")
    }
}

impl GeneralizedNumberNet {
    pub fn new(f: impl Fn(f64) -> Sample + Send + Sync + 'static) -> Self {
        GeneralizedNumberNet { f: Arc::new(f) }
    }

    pub fn constant(c: C64) -> Self {
        GeneralizedNumberNet::new(move |_| Sample::exact(c))
    }

    /// `eps -> c * eps^p`.
    pub fn power(c: f64, p: f64) -> Self {
        GeneralizedNumberNet::new(move |e| Sample::real(c * e.powf(p)))
    }

    /// `eps -> c * |ln eps|`.
    pub fn log_scale(c: f64) -> Self {
        GeneralizedNumberNet::new(move |e| Sample::real(c * e.ln().abs()))
    }

    pub fn sample(&self, eps: f64) -> Sample {
        (self.f)(eps)
    }

    pub fn value(&self, eps: f64) -> C64 {
        self.sample(eps).value
    }

    pub fn minus(&self, c: C64) -> Self {
        let f = self.clone();
        GeneralizedNumberNet::new(move |e| {
            let s = f.sample(e);
            Sample { value: s.value - c, mag: s.mag + c.norm() }
        })
    }

    /// Growth report of `|c_eps|` with the roundoff floor of `policy`.
    pub fn report(&self, policy: &Policy) -> Result<SeminormReport> {
        let samples: Vec<Sample> =
            policy.schedule.values().par_iter().map(|&e| self.sample(e)).collect();
        let values: Vec<f64> = samples.iter().map(|s| s.value.norm()).collect();
        let floors: Vec<f64> = samples.iter().map(|s| policy.noise_rel * s.mag).collect();
        fit_growth_with(&values, &floors, &policy.schedule, policy.window)
    }
}

fn check_order(u: &RepNet, l: usize) -> Result<()> {
    if l > u.deriv_order {
        return Err(Error::Capability(format!(
            "{}: seminorm needs derivatives of order {l}, net provides {}",
            u.label, u.deriv_order
        )));
    }
    Ok(())
}

/// Per-epsilon `(value, magnitude)` of the sup seminorm over grid nodes.
fn sup_on_grid(u: &RepNet, eps: f64, grid: &Grid, alphas: &[Vec<usize>]) -> (f64, f64) {
    let mut val: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for x in grid.nodes() {
        for a in alphas {
            let s = u.sample(eps, x, a);
            val = val.max(s.value.norm());
            mag = mag.max(s.mag);
        }
    }
    (val, mag)
}

/// `p_{K,l}(u_eps) = sup_{x in K, |alpha| <= l} |d^alpha u_eps(x)|`, sampled on `grid`.
pub fn seminorm_pkl(
    u: &RepNet,
    k: &AxisBox,
    l: usize,
    grid: &Grid,
    policy: &Policy,
) -> Result<SeminormReport> {
    check_order(u, l)?;
    if grid.dim() != u.dim() || k.dim() != u.dim() {
        return Err(Error::Dimension { expected: u.dim(), found: grid.dim() });
    }
    let alphas = multi_indices(u.dim(), l);
    let per: Vec<(f64, f64)> = policy
        .schedule
        .values()
        .par_iter()
        .map(|&e| sup_on_grid(u, e, grid, &alphas))
        .collect();
    report_from(&per, policy)
}

/// Like [`seminorm_pkl`] but samples only where the net can be non-zero at each
/// epsilon: a `rule` grid over `K` intersected with the support box.
pub fn seminorm_pkl_adaptive(
    u: &RepNet,
    k: &AxisBox,
    l: usize,
    rule: Rule,
    policy: &Policy,
) -> Result<SeminormReport> {
    check_order(u, l)?;
    let alphas = multi_indices(u.dim(), l);
    let per: Vec<(f64, f64)> = policy
        .schedule
        .values()
        .par_iter()
        .map(|&e| match u.support_box(e).and_then(|s| s.intersect(k)) {
            None => (0.0, 0.0),
            Some(b) => sup_on_grid(u, e, &grid_unchecked(&b, rule), &alphas),
        })
        .collect();
    report_from(&per, policy)
}

fn report_from(per: &[(f64, f64)], policy: &Policy) -> Result<SeminormReport> {
    let values: Vec<f64> = per.iter().map(|p| p.0).collect();
    let floors: Vec<f64> = per.iter().map(|p| policy.noise_rel * p.1).collect();
    fit_growth_with(&values, &floors, &policy.schedule, policy.window)
}

fn sobolev_on_grid(u: &RepNet, eps: f64, grid: &Grid, alphas: &[Vec<usize>]) -> (f64, f64) {
    let mut val = 0.0;
    let mut mag = 0.0;
    for a in alphas {
        let mut s2 = 0.0;
        let mut m2 = 0.0;
        for (x, w) in grid.nodes().zip(&grid.weights) {
            let s = u.sample(eps, x, a);
            s2 += w * s.value.norm_sqr();
            m2 += w * s.mag * s.mag;
        }
        val += s2.sqrt();
        mag += m2.sqrt();
    }
    (val, mag)
}

/// `sum_{|alpha| <= m} ||d^alpha u_eps||_2` by quadrature on `grid`.
pub fn seminorm_hm(u: &RepNet, m: usize, grid: &Grid, policy: &Policy) -> Result<SeminormReport> {
    check_order(u, m)?;
    if !u.support.is_bounded() {
        return Err(Error::Capability(format!(
            "{}: L2 seminorm needs a bounded support box",
            u.label
        )));
    }
    let alphas = multi_indices(u.dim(), m);
    let per: Vec<(f64, f64)> = policy
        .schedule
        .values()
        .par_iter()
        .map(|&e| sobolev_on_grid(u, e, grid, &alphas))
        .collect();
    report_from(&per, policy)
}

/// [`seminorm_hm`] on a `rule` grid rebuilt over the support box at each epsilon.
pub fn seminorm_hm_adaptive(u: &RepNet, m: usize, rule: Rule, policy: &Policy) -> Result<SeminormReport> {
    check_order(u, m)?;
    if !u.support.is_bounded() {
        return Err(Error::Capability(format!(
            "{}: L2 seminorm needs a bounded support box",
            u.label
        )));
    }
    let alphas = multi_indices(u.dim(), m);
    let per: Vec<(f64, f64)> = policy
        .schedule
        .values()
        .par_iter()
        .map(|&e| match u.support_box(e) {
            None => (0.0, 0.0),
            Some(b) => sobolev_on_grid(u, e, &grid_unchecked(&b, rule), &alphas),
        })
        .collect();
    report_from(&per, policy)
}

/// `eps -> integral over K of u_eps`, by quadrature on `grid` (a grid over K).
pub fn integrate_compact(u: &RepNet, k: &AxisBox, grid: &Grid) -> Result<GeneralizedNumberNet> {
    if !u.domain.contains_box(k) {
        return Err(Error::Argument(format!("{}: integration box leaves the domain", u.label)));
    }
    let u = u.clone();
    let grid = grid.clone();
    Ok(GeneralizedNumberNet::new(move |e| quad_sample(&u, e, &grid)))
}

/// Integral over K restricted to the support box at each epsilon, `rule` per axis.
pub fn integrate_on_support(u: &RepNet, k: &AxisBox, rule: Rule) -> GeneralizedNumberNet {
    let u = u.clone();
    let k = k.clone();
    GeneralizedNumberNet::new(move |e| match u.support_box(e).and_then(|s| s.intersect(&k)) {
        None => Sample::ZERO,
        Some(b) => quad_sample(&u, e, &grid_unchecked(&b, rule)),
    })
}

pub(crate) fn quad_sample(u: &RepNet, eps: f64, grid: &Grid) -> Sample {
    let zeros = vec![0usize; u.dim()];
    let mut acc = Sample::ZERO;
    for (x, w) in grid.nodes().zip(&grid.weights) {
        let s = u.sample(eps, x, &zeros);
        acc.value += s.value * *w;
        acc.mag += s.mag * w;
    }
    acc
}

/// `eps -> sum_j w_j f_eps(x_j) conj(g_eps(x_j))`.
pub fn scalar_product(f: &RepNet, g: &RepNet, grid: &Grid) -> Result<GeneralizedNumberNet> {
    check_same_domain(f, g)?;
    let (f, g, grid) = (f.clone(), g.clone(), grid.clone());
    Ok(GeneralizedNumberNet::new(move |e| {
        let zeros = vec![0usize; f.dim()];
        let mut acc = Sample::ZERO;
        for (x, w) in grid.nodes().zip(&grid.weights) {
            let a = f.sample(e, x, &zeros);
            let b = g.sample(e, x, &zeros);
            acc.value += a.value * b.value.conj() * *w;
            acc.mag += a.mag * b.mag * w;
        }
        acc
    }))
}

/// Outer approximation of the support: hull of the cells of a uniform
/// `cells`-per-axis partition of `domain` on which the sup seminorm is not
/// negligible to order `m_test`. `None` when every cell is null.
pub fn support_estimate(
    u: &RepNet,
    domain: &AxisBox,
    cells: usize,
    m_test: u32,
    policy: &Policy,
) -> Result<Option<AxisBox>> {
    if cells < 2 {
        return Err(Error::Argument("support_estimate needs at least 2 cells per axis".into()));
    }
    let d = domain.dim();
    let total = cells.pow(d as u32);
    let mut hull: Option<AxisBox> = None;
    for idx in 0..total {
        let mut rem = idx;
        let mut axes = Vec::with_capacity(d);
        for &(a, b) in &domain.axes {
            let i = rem % cells;
            rem /= cells;
            let h = (b - a) / cells as f64;
            axes.push((a + i as f64 * h, a + (i + 1) as f64 * h));
        }
        let cell = AxisBox::raw(axes);
        let report = seminorm_pkl_adaptive(u, &cell, 0, Rule::new(2, 6), policy)?;
        if !classify(&report, m_test, policy.slope_tol).is_negligible_to(m_test) {
            hull = Some(match hull {
                None => cell,
                Some(h) => h.hull(&cell),
            });
        }
    }
    Ok(hull)
}
