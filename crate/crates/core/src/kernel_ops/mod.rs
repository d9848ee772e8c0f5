//! Generalized integral kernels and the operators they define.
//!
//! A [`KernelNet`] is a net on `X x Y` together with a witness telling, for a
//! box `O1` in `X`, which box of `Y` carries the kernel over `O1`. Every
//! y-integral (application, parameter integrals, composition) is a composite
//! Gauss rule over such a witness box, so kernels that share boxes and rules
//! compose by weighted matrix products exactly.

mod harness;
mod nystrom;

pub use harness::*;
pub use nystrom::*;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{classify, fit_growth_with, GrowthClass, Policy};
use crate::error::{Error, Result};
use crate::functions::{SmoothFn, C64};
use crate::genfunc::{RepNet, Sample, ShrinkFn, Support};
use crate::mollifier::{embed_is, DistributionSpec, MollifierKit};
use crate::quadrature::{grid_unchecked, AxisBox, Grid, Rule};

/// Largest total dimension `x_dim + y_dim` of a kernel.
pub const MAX_KERNEL_DIM: usize = 8;

pub type LocalWitness = Arc<dyn Fn(&AxisBox, f64) -> Option<AxisBox> + Send + Sync>;

/// How a kernel's y-support over a box of `X` is known.
#[derive(Clone)]
pub enum Witness {
    /// `(O1, eps) -> K2`, `None` when the kernel vanishes over `O1`.
    Local(LocalWitness),
    /// Support inside `x_support x y_support`.
    Global { x_support: Support, y_support: Support },
    /// No witness; integrals run over the bounded support box of the kernel.
    L2,
}

impl fmt::Debug for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Local(_) => write!(f, "Local"),
            Witness::Global { x_support, y_support } => {
                write!(f, "Global({x_support:?} x {y_support:?})")
            }
            Witness::L2 => write!(f, "L2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Local,
    Global,
    L2,
}

#[derive(Clone, Debug)]
pub struct KernelNet {
    pub base: RepNet,
    pub x_dim: usize,
    pub y_dim: usize,
    pub witness: Witness,
    /// Composite rule for integrals over y (per axis).
    pub rule: Rule,
}

fn support_at(s: &Support, eps: f64, fallback: &AxisBox) -> AxisBox {
    s.at(eps).unwrap_or_else(|| fallback.clone())
}

impl KernelNet {
    pub fn new(base: RepNet, x_dim: usize, witness: Witness, rule: Rule) -> Result<Self> {
        let d = base.dim();
        if x_dim == 0 || x_dim >= d || d > MAX_KERNEL_DIM {
            return Err(Error::Argument(format!(
                "kernel dimension split {x_dim} + {} invalid",
                d.saturating_sub(x_dim)
            )));
        }
        if rule.panels == 0 || !(1..=64).contains(&rule.nodes) {
            return Err(Error::Argument(format!("quadrature rule {rule:?} invalid")));
        }
        Ok(KernelNet { base, x_dim, y_dim: d - x_dim, witness, rule })
    }

    pub fn label(&self) -> &str {
        &self.base.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.base.label = label.into();
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rule = rule;
        self
    }

    pub fn x_domain(&self) -> AxisBox {
        self.base.domain.slice(0..self.x_dim)
    }

    pub fn y_domain(&self) -> AxisBox {
        self.base.domain.slice(self.x_dim..self.x_dim + self.y_dim)
    }

    pub fn witness_kind(&self) -> WitnessKind {
        match self.witness {
            Witness::Local(_) => WitnessKind::Local,
            Witness::Global { .. } => WitnessKind::Global,
            Witness::L2 => WitnessKind::L2,
        }
    }

    pub fn is_square(&self) -> bool {
        self.x_dim == self.y_dim
    }

    /// `d_x^ax d_y^ay H_eps(x, y)` with its roundoff magnitude.
    #[inline]
    pub fn sample(&self, eps: f64, x: &[f64], y: &[f64], ax: &[usize], ay: &[usize]) -> Sample {
        let (m, n) = (self.x_dim, self.y_dim);
        let mut p = [0.0; MAX_KERNEL_DIM];
        let mut a = [0usize; MAX_KERNEL_DIM];
        p[..m].copy_from_slice(x);
        p[m..m + n].copy_from_slice(y);
        a[..m].copy_from_slice(ax);
        a[m..m + n].copy_from_slice(ay);
        self.base.sample(eps, &p[..m + n], &a[..m + n])
    }

    pub fn eval(&self, eps: f64, x: &[f64], y: &[f64]) -> C64 {
        let z = [0usize; MAX_KERNEL_DIM];
        self.sample(eps, x, y, &z[..self.x_dim], &z[..self.y_dim]).value
    }

    /// Box of `X` outside which the kernel vanishes, at `eps`.
    pub fn x_support_at(&self, eps: f64) -> AxisBox {
        match &self.witness {
            Witness::Global { x_support, .. } => support_at(x_support, eps, &self.x_domain()),
            _ => match self.base.support_box(eps) {
                Some(b) => b.slice(0..self.x_dim),
                None => AxisBox::point(&self.x_domain().center()),
            },
        }
    }

    /// Box of `Y` outside which the kernel vanishes, at `eps`.
    pub fn y_support_at(&self, eps: f64) -> AxisBox {
        match &self.witness {
            Witness::Global { y_support, .. } => support_at(y_support, eps, &self.y_domain()),
            _ => match self.base.support_box(eps) {
                Some(b) => b.slice(self.x_dim..self.x_dim + self.y_dim),
                None => AxisBox::point(&self.y_domain().center()),
            },
        }
    }

    /// The y-box carrying `H_eps(x, .)` for `x` in `o1`, clipped to the y-domain.
    pub fn y_box(&self, o1: &AxisBox, eps: f64) -> Option<AxisBox> {
        let b = match &self.witness {
            Witness::Local(w) => w(o1, eps)?,
            Witness::Global { .. } | Witness::L2 => {
                if !o1.meets(&self.x_support_at(eps)) {
                    return None;
                }
                self.y_support_at(eps)
            }
        };
        b.intersect(&self.y_domain())
    }

    pub fn zero(x_box: &AxisBox, y_box: &AxisBox, rule: Rule) -> Result<Self> {
        let dom = x_box.product(y_box);
        let c = AxisBox::point(&x_box.center());
        let d = AxisBox::point(&y_box.center());
        KernelNet::new(
            RepNet::zero(dom).with_label("zero"),
            x_box.dim(),
            Witness::Global { x_support: Support::Fixed(c), y_support: Support::Fixed(d) },
            rule,
        )
    }

    /// `sigma(h)` for a smooth `h` on `x_box x y_box`; Global witness from the support of `h`
    /// (the whole box on unbounded axes).
    pub fn sigma(h: SmoothFn, x_box: &AxisBox, y_box: &AxisBox, rule: Rule) -> Result<Self> {
        let dom = x_box.product(y_box);
        let m = x_box.dim();
        let support = match h.support() {
            Some(axes) => AxisBox::raw(axes).intersect(&dom).unwrap_or_else(|| AxisBox::point(&dom.center())),
            None => dom.clone(),
        };
        let base = RepNet::from_smooth(h, dom)?.with_support(Support::Fixed(support.clone())).with_label("sigma");
        let witness = Witness::Global {
            x_support: Support::Fixed(support.slice(0..m)),
            y_support: Support::Fixed(support.slice(m..support.dim())),
        };
        KernelNet::new(base, m, witness, rule)
    }

    /// `Theta_eps(x - y)` on one-dimensional `x_box x y_box`, with the witness
    /// `O1 -> O1` inflated by the support radius of `Theta_eps`.
    pub fn theta_diff(kit: &MollifierKit, x_box: &AxisBox, y_box: &AxisBox, rule: Rule) -> Result<Self> {
        if x_box.dim() != 1 || y_box.dim() != 1 {
            return Err(Error::Dimension { expected: 1, found: x_box.dim().max(y_box.dim()) });
        }
        let dom = x_box.product(y_box);
        let k = kit.clone();
        let base = RepNet::new(dom, Support::Unbounded, crate::jet::MAX_ORDER, "theta-diff", move |e, p, a| {
            let v = k.theta_deriv(e, p[0] - p[1], a[0] + a[1]);
            Sample::real(if a[1] % 2 == 1 { -v } else { v })
        });
        let k = kit.clone();
        let witness = Witness::Local(Arc::new(move |o1: &AxisBox, e| Some(o1.inflate(k.theta_radius(e)))));
        KernelNet::new(base, 1, witness, rule)
    }

    /// `c * i_S(T1)(x) i_S(T2)(y)`.
    pub fn embedded_tensor(
        t1: &DistributionSpec,
        t2: &DistributionSpec,
        coeff: f64,
        kit: &MollifierKit,
        x_box: &AxisBox,
        y_box: &AxisBox,
        rule: Rule,
    ) -> Result<Self> {
        let u = embed_is(t1, kit, x_box)?;
        let v = embed_is(t2, kit, y_box)?;
        KernelNet::tensor(&u, &v, coeff, rule)
    }

    /// `c * u(x) v(y)` with a Global witness from the supports of `u` and `v`.
    pub fn tensor(u: &RepNet, v: &RepNet, coeff: f64, rule: Rule) -> Result<Self> {
        let m = u.dim();
        let dom = u.domain.product(&v.domain);
        let (uu, vv) = (u.clone(), v.clone());
        let sx = support_fn(u);
        let sy = support_fn(v);
        let (sx2, sy2) = (sx.clone(), sy.clone());
        let support = Support::Shrinking(Arc::new(move |e| sx2(e).product(&sy2(e))));
        let base = RepNet::new(
            dom,
            support,
            u.deriv_order.min(v.deriv_order),
            format!("{}(x)*{}(y)", u.label, v.label),
            move |e, p, a| {
                let s = uu.sample(e, &p[..m], &a[..m]);
                if s.mag == 0.0 {
                    return Sample::ZERO;
                }
                let t = vv.sample(e, &p[m..], &a[m..]);
                Sample { value: s.value * t.value * coeff, mag: s.mag * t.mag * coeff.abs() }
            },
        );
        let witness = Witness::Global { x_support: Support::Shrinking(sx), y_support: Support::Shrinking(sy) };
        KernelNet::new(base, m, witness, rule)
    }

    /// Multiplies the kernel by a generalized number.
    pub fn scaled(&self, c: &crate::genfunc::GeneralizedNumberNet) -> KernelNet {
        let mut k = self.clone();
        k.base = crate::genfunc::scale_net(c, &self.base).with_label(format!("c*{}", self.label()));
        k
    }

    pub fn scaled_by(&self, c: C64) -> KernelNet {
        let mut k = self.clone();
        k.base = crate::genfunc::scale(c, &self.base);
        k
    }

    /// Same kernel with the L2 (no witness) mode.
    pub fn into_l2(mut self) -> KernelNet {
        if let Witness::Global { .. } = self.witness {
            let (xs, ys) = (self.clone(), self.clone());
            self.base = self.base.with_support(Support::Shrinking(Arc::new(move |e| {
                xs.x_support_at(e).product(&ys.y_support_at(e))
            })));
        }
        self.witness = Witness::L2;
        self
    }
}

fn support_fn(u: &RepNet) -> ShrinkFn {
    let u = u.clone();
    Arc::new(move |e| u.support_box(e).unwrap_or_else(|| AxisBox::point(&u.domain.center())))
}

fn same_dims(a: &KernelNet, b: &KernelNet) -> Result<()> {
    if a.x_dim != b.x_dim || a.y_dim != b.y_dim {
        return Err(Error::Dimension { expected: a.x_dim + a.y_dim, found: b.x_dim + b.y_dim });
    }
    Ok(())
}

fn hull_witness(a: &KernelNet, b: &KernelNet) -> Result<Witness> {
    Ok(match (&a.witness, &b.witness) {
        (Witness::Global { .. }, Witness::Global { .. }) => {
            let (a1, b1, a2, b2) = (a.clone(), b.clone(), a.clone(), b.clone());
            Witness::Global {
                x_support: Support::Shrinking(Arc::new(move |e| a1.x_support_at(e).hull(&b1.x_support_at(e)))),
                y_support: Support::Shrinking(Arc::new(move |e| a2.y_support_at(e).hull(&b2.y_support_at(e)))),
            }
        }
        (Witness::L2, _) | (_, Witness::L2) => {
            if matches!(a.witness, Witness::Local(_)) || matches!(b.witness, Witness::Local(_)) {
                return Err(Error::Capability("cannot mix L2 and local-witness kernels".into()));
            }
            Witness::L2
        }
        _ => {
            let (a, b) = (a.clone(), b.clone());
            Witness::Local(Arc::new(move |o, e| match (a.y_box(o, e), b.y_box(o, e)) {
                (Some(p), Some(q)) => Some(p.hull(&q)),
                (p, q) => p.or(q),
            }))
        }
    })
}

/// `a H + b K` on a common domain.
pub fn kernel_combination(h: &KernelNet, a: C64, k: &KernelNet, b: C64) -> Result<KernelNet> {
    same_dims(h, k)?;
    let base = crate::genfunc::add(&crate::genfunc::scale(a, &h.base), &crate::genfunc::scale(b, &k.base))?;
    let witness = hull_witness(h, k)?;
    let mut out = KernelNet::new(base, h.x_dim, witness, h.rule)?;
    if out.witness_kind() == WitnessKind::L2 {
        let (h2, k2) = (h.clone(), k.clone());
        out.base = out.base.with_support(Support::Shrinking(Arc::new(move |e| {
            h2.x_support_at(e).hull(&k2.x_support_at(e)).product(&h2.y_support_at(e).hull(&k2.y_support_at(e)))
        })));
    }
    Ok(out.with_label(format!("{}+{}", h.label(), k.label())))
}

/// Per-probe result of the proper-support check.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessCheck {
    pub probe: Vec<(f64, f64)>,
    pub class: GrowthClass,
    pub fitted_slope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub applicable: bool,
    pub checks: Vec<WitnessCheck>,
    pub pass: bool,
}

/// Samples `|H_eps|` on `O1 x (Y minus witness(O1))` and requires it to be negligible.
pub fn check_properly_supported(h: &KernelNet, probes: &[AxisBox], policy: &Policy) -> Result<WitnessReport> {
    if h.witness_kind() == WitnessKind::L2 {
        return Ok(WitnessReport { applicable: false, checks: Vec::new(), pass: true });
    }
    let ydom = h.y_domain();
    let rule = Rule::new(8, 6);
    let zx = vec![0usize; h.x_dim];
    let zy = vec![0usize; h.y_dim];
    let mut checks = Vec::new();
    for o1 in probes {
        if o1.dim() != h.x_dim {
            return Err(Error::Dimension { expected: h.x_dim, found: o1.dim() });
        }
        let xg = grid_unchecked(o1, Rule::new(2, 4));
        let yg = grid_unchecked(&ydom, rule);
        let per: Vec<(f64, f64)> = policy
            .schedule
            .values()
            .par_iter()
            .map(|&e| {
                let k2 = h.y_box(o1, e);
                let mut v: f64 = 0.0;
                let mut m: f64 = 0.0;
                for x in xg.nodes() {
                    for y in yg.nodes() {
                        if k2.as_ref().is_some_and(|b| b.contains(y)) {
                            continue;
                        }
                        let s = h.sample(e, x, y, &zx, &zy);
                        v = v.max(s.value.norm());
                        m = m.max(s.mag);
                    }
                }
                (v, m)
            })
            .collect();
        let values: Vec<f64> = per.iter().map(|p| p.0).collect();
        let floors: Vec<f64> = per.iter().map(|p| policy.noise_rel * p.1).collect();
        let rep = fit_growth_with(&values, &floors, &policy.schedule, policy.window)?;
        let class = classify(&rep, policy.m_max, policy.slope_tol);
        let pass = class.is_negligible_to(policy.m_max);
        checks.push(WitnessCheck { probe: o1.axes.clone(), class, fitted_slope: rep.fitted_slope, pass });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(WitnessReport { applicable: true, checks, pass })
}

fn ones(y_domain: &AxisBox) -> RepNet {
    RepNet::from_smooth(SmoothFn::sum_of(y_domain.dim(), vec![(C64::new(1.0, 0.0), vec![crate::functions::Func1::constant(1.0); y_domain.dim()])]), y_domain.clone())
        .expect("constant net")
}

/// `G_eps(x) = int_Y g_eps(x, y) dy` over the witness box.
pub fn param_integral(g: &KernelNet) -> Result<RepNet> {
    if g.witness_kind() == WitnessKind::L2 {
        return Err(Error::Capability(format!("{}: parameter integral needs a witness", g.label())));
    }
    Ok(apply(g, &ones(&g.y_domain()))?.with_label(format!("int {} dy", g.label())))
}

/// Parameter integral over an explicitly given y-box instead of the witness.
pub fn param_integral_over(g: &KernelNet, y_box: &AxisBox) -> Result<RepNet> {
    let mut g2 = g.clone();
    let b = y_box.clone();
    g2.witness = Witness::Local(Arc::new(move |_, _| Some(b.clone())));
    param_integral(&g2)
}

/// `H^(f)(x) = int H_eps(x, y) f_eps(y) dy` by the kernel's rule over
/// `witness({x}) cap supp f_eps`.
pub fn apply(h: &KernelNet, f: &RepNet) -> Result<RepNet> {
    if f.dim() != h.y_dim {
        return Err(Error::Dimension { expected: h.y_dim, found: f.dim() });
    }
    if f.domain.intersect(&h.y_domain()).is_none() {
        return Err(Error::Argument(format!("{} and {} have disjoint y-domains", h.label(), f.label)));
    }
    let support = match &h.witness {
        Witness::Global { x_support, .. } => x_support.clone(),
        Witness::L2 => {
            let h2 = h.clone();
            Support::Shrinking(Arc::new(move |e| h2.x_support_at(e)))
        }
        Witness::Local(_) => Support::Unbounded,
    };
    let (hh, ff) = (h.clone(), f.clone());
    let zy = vec![0usize; h.y_dim];
    Ok(RepNet::new(
        h.x_domain(),
        support,
        h.base.deriv_order,
        format!("{}({})", h.label(), f.label),
        move |e, x, a| {
            let Some(b) = hh.y_box(&AxisBox::point(x), e).and_then(|b| match ff.support_box(e) {
                Some(s) => b.intersect(&s),
                None => None,
            }) else {
                return Sample::ZERO;
            };
            let grid = grid_unchecked(&b, hh.rule);
            let mut acc = Sample::ZERO;
            for (y, w) in grid.nodes().zip(&grid.weights) {
                let s = ff.sample(e, y, &zy);
                if s.mag == 0.0 {
                    continue;
                }
                let k = hh.sample(e, x, y, a, &zy);
                acc.value += k.value * s.value * *w;
                acc.mag += k.mag * s.mag * w;
            }
            acc
        },
    ))
}

/// Inner grid of `compose(h1, h2)` at `x`.
fn xi_box(h1: &KernelNet, h2: &KernelNet, x: &[f64], eps: f64) -> Option<AxisBox> {
    h1.y_box(&AxisBox::point(x), eps)?.intersect(&h2.x_support_at(eps))
}

/// Kernel of `H1^ o H2^`: `L(x, y) = sum_j w_j H1(x, xi_j) H2(xi_j, y)` over the
/// rule of `h1` on `witness1({x}) cap supp_x H2`.
pub fn compose(h1: &KernelNet, h2: &KernelNet) -> Result<KernelNet> {
    if h1.y_dim != h2.x_dim {
        return Err(Error::Dimension { expected: h1.y_dim, found: h2.x_dim });
    }
    let (m, n) = (h1.x_dim, h2.y_dim);
    let dom = h1.x_domain().product(&h2.y_domain());
    let witness = match (&h1.witness, &h2.witness) {
        (Witness::Global { .. }, Witness::Global { .. }) => {
            let (a, b) = (h1.clone(), h2.clone());
            Witness::Global {
                x_support: Support::Shrinking(Arc::new(move |e| a.x_support_at(e))),
                y_support: Support::Shrinking(Arc::new(move |e| b.y_support_at(e))),
            }
        }
        (Witness::L2, Witness::Local(_)) | (Witness::Local(_), Witness::L2) => {
            return Err(Error::Capability("cannot compose an L2 kernel with a local-witness kernel".into()));
        }
        (Witness::L2, _) | (_, Witness::L2) => Witness::L2,
        _ => {
            let (a, b) = (h1.clone(), h2.clone());
            Witness::Local(Arc::new(move |o1, e| {
                let k2 = a.y_box(o1, e)?.intersect(&b.x_support_at(e))?;
                b.y_box(&k2, e)
            }))
        }
    };
    let (a, b) = (h1.clone(), h2.clone());
    let support = Support::Shrinking(Arc::new(move |e| a.x_support_at(e).product(&b.y_support_at(e))));
    let (a, b) = (h1.clone(), h2.clone());
    let zk = vec![0usize; h1.y_dim];
    let base = RepNet::new(
        dom,
        support,
        h1.base.deriv_order.min(h2.base.deriv_order),
        format!("{}o{}", h1.label(), h2.label()),
        move |e, p, al| {
            let (x, y) = p.split_at(m);
            let (ax, ay) = al.split_at(m);
            let Some(bx) = xi_box(&a, &b, x, e) else {
                return Sample::ZERO;
            };
            let grid = grid_unchecked(&bx, a.rule);
            let mut acc = Sample::ZERO;
            for (xi, w) in grid.nodes().zip(&grid.weights) {
                let s = a.sample(e, x, xi, ax, &zk);
                if s.mag == 0.0 {
                    continue;
                }
                let t = b.sample(e, xi, y, &zk, ay);
                acc.value += s.value * t.value * *w;
                acc.mag += s.mag * t.mag * w;
            }
            debug_assert_eq!(y.len(), n);
            acc
        },
    );
    KernelNet::new(base, m, witness, h2.rule)
}

/// Grid over the box on which a square kernel is discretized at `eps`:
/// `supp_y H cap supp_x H`.
pub fn nystrom_grid(h: &KernelNet, eps: f64) -> Result<Grid> {
    if !h.is_square() {
        return Err(Error::Dimension { expected: h.x_dim, found: h.y_dim });
    }
    if h.witness_kind() == WitnessKind::Local {
        return Err(Error::Capability(format!(
            "{}: matrix discretization needs a global or L2 support box",
            h.label()
        )));
    }
    Ok(grid_unchecked(&nystrom_box(h, eps), h.rule))
}

/// `supp_y H cap supp_x H`, or the center point of `supp_x H` when they are disjoint.
pub fn nystrom_box(h: &KernelNet, eps: f64) -> AxisBox {
    let b = h.y_support_at(eps).intersect(&h.x_support_at(eps));
    b.unwrap_or_else(|| AxisBox::point(&h.x_support_at(eps).center()))
}

/// `K_ij = H_eps(x_i, y_j)`.
pub fn kernel_matrix(h: &KernelNet, eps: f64, gx: &Grid, gy: &Grid) -> DMatrix<C64> {
    let zx = vec![0usize; h.x_dim];
    let zy = vec![0usize; h.y_dim];
    let rows: Vec<Vec<C64>> = (0..gx.len())
        .into_par_iter()
        .map(|i| gy.nodes().map(|y| h.sample(eps, gx.node(i), y, &zx, &zy).value).collect())
        .collect();
    DMatrix::from_fn(gx.len(), gy.len(), |i, j| rows[i][j])
}

/// Discrete `||H_eps||_2 = (sum_ij wx_i wy_j |H(x_i, y_j)|^2)^(1/2)` on the rule grids over
/// the kernel's support boxes.
pub fn discrete_l2_norm(h: &KernelNet, eps: f64) -> f64 {
    let gx = grid_unchecked(&h.x_support_at(eps), h.rule);
    let gy = grid_unchecked(&h.y_support_at(eps), h.rule);
    let k = kernel_matrix(h, eps, &gx, &gy);
    let mut s = 0.0;
    for i in 0..gx.len() {
        for j in 0..gy.len() {
            s += gx.weights[i] * gy.weights[j] * k[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}
