//! Falsification and consistency harnesses built on kernel application:
//! the zero-operator test, regularity, the smooth-kernel diagram, the Fourier
//! example, and explicit resampling of sampled kernels.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::{apply, KernelNet, Witness};
use crate::asymptotics::{classify, GrowthClass, Policy, SeminormReport};
use crate::error::{Error, Result};
use crate::functions::{Func1, SmoothFn, C64};
use crate::genfunc::{seminorm_pkl_adaptive, sub, RepNet, Sample, Support};
use crate::jet::MAX_ORDER;
use crate::mollifier::{embed_is, DistTerm, DistributionSpec, MollifierKit};
use crate::quadrature::{composite_1d, grid_unchecked, AxisBox, Rule};

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub probe: String,
    pub class: GrowthClass,
    pub fitted_slope: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroVerdict {
    pub consistent_with_zero: bool,
    /// First probe whose image is not negligible.
    pub witness: Option<String>,
    pub probes: Vec<ProbeResult>,
}

impl ZeroVerdict {
    pub fn label(&self) -> &'static str {
        if self.consistent_with_zero {
            "consistent-with-zero"
        } else {
            "nonzero"
        }
    }
}

/// Cubic B-spline bumps at dyadic centers and widths on a one-dimensional box,
/// levels `1..=levels` (2, 4, 8, ... bumps).
pub fn bspline_probes(y_box: &AxisBox, levels: u32) -> Vec<RepNet> {
    let (a, b) = y_box.axes[0];
    let mut out = Vec::new();
    for lev in 1..=levels {
        let count = 1usize << lev;
        let width = (b - a) / count as f64;
        for k in 0..count {
            let c = a + (k as f64 + 0.5) * width;
            let f = Func1::CubicSpline { center: c, spacing: 0.5 * width };
            let net = RepNet::from_smooth(SmoothFn::of(f), y_box.clone()).expect("1-d probe");
            out.push(net.with_label(format!("bspline(c={c:.4}, h={:.4})", 0.5 * width)));
        }
    }
    out
}

/// `f_eps(y) = conj(H_eps(x*, y))`, supported on the witness box of `{x*}`.
pub fn adjoint_probe(h: &KernelNet, x_star: &[f64]) -> RepNet {
    let hh = h.clone();
    let hs = h.clone();
    let xs = x_star.to_vec();
    let xs2 = x_star.to_vec();
    let zx = vec![0usize; h.x_dim];
    let ydom = h.y_domain();
    let ydom2 = ydom.clone();
    RepNet::new(
        ydom,
        Support::Shrinking(Arc::new(move |e| {
            hs.y_box(&AxisBox::point(&xs2), e).unwrap_or_else(|| AxisBox::point(&ydom2.center()))
        })),
        0,
        format!("adjoint(x*={x_star:?})"),
        move |e, y, a| {
            let s = hh.sample(e, &xs, y, &zx, a);
            Sample { value: s.value.conj(), mag: s.mag }
        },
    )
}

/// Default probe family: B-spline bumps over the y-domain (three dyadic levels)
/// and adjoint probes at the center and quartiles of `out_box`.
pub fn default_probe_family(h: &KernelNet, out_box: &AxisBox) -> Vec<RepNet> {
    let mut probes = if h.y_dim == 1 { bspline_probes(&h.y_domain(), 3) } else { Vec::new() };
    let c = out_box.center();
    for t in [0.5, 0.25, 0.75] {
        let x: Vec<f64> = out_box.axes.iter().map(|&(a, b)| a + t * (b - a)).collect();
        probes.push(adjoint_probe(h, &x));
    }
    debug_assert_eq!(c.len(), h.x_dim);
    probes
}

/// Declares `H^ = 0` consistent when every probe image is negligible to `m_max` on
/// `out_box`. A falsification harness: "nonzero" names the probe that witnessed it.
pub fn test_zero_operator(
    h: &KernelNet,
    probes: Option<&[RepNet]>,
    out_box: &AxisBox,
    m_max: u32,
    policy: &Policy,
) -> Result<ZeroVerdict> {
    let owned;
    let probes = match probes {
        Some(p) => p,
        None => {
            owned = default_probe_family(h, out_box);
            &owned[..]
        }
    };
    let mut results = Vec::new();
    let mut witness = None;
    for p in probes {
        let image = apply(h, p)?;
        let rep = seminorm_pkl_adaptive(&image, out_box, 0, Rule::new(4, 4), policy)?;
        let class = classify(&rep, m_max, policy.slope_tol);
        let max_value = rep.values.iter().cloned().fold(0.0, f64::max);
        if witness.is_none() && !class.is_negligible_to(m_max) {
            witness = Some(p.label.clone());
        }
        results.push(ProbeResult { probe: p.label.clone(), class, fitted_slope: rep.fitted_slope, max_value });
        if witness.is_some() {
            break;
        }
    }
    Ok(ZeroVerdict { consistent_with_zero: witness.is_none(), witness, probes: results })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityProbe {
    pub probe: String,
    pub slopes: Vec<f64>,
    /// Moderate order per derivative order l.
    pub orders: Vec<u32>,
    pub uniform: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub probes: Vec<RegularityProbe>,
    pub regular: bool,
}

fn moderate_order(rep: &SeminormReport, policy: &Policy) -> u32 {
    match classify(rep, policy.m_max, policy.slope_tol) {
        GrowthClass::Moderate { n } => n,
        GrowthClass::Negligible { .. } | GrowthClass::LogScale { .. } => 0,
        GrowthClass::Indeterminate => (rep.fitted_slope - policy.slope_tol).ceil().max(0.0) as u32,
    }
}

/// Growth orders of `p_{K,l}(H^(f))` for l = 0..=l_max; a probe is uniform when no
/// derivative order needs a larger power of `1/eps` than l = 0 does.
///
/// The sup is sampled on one panel of 11 Gauss nodes over `k`, so the center of
/// `k` is a sample point.
pub fn check_regular(h: &KernelNet, probes: &[RepNet], k: &AxisBox, l_max: usize, policy: &Policy) -> Result<RegularityReport> {
    if l_max > h.base.deriv_order {
        return Err(Error::Capability(format!(
            "{}: regularity up to order {l_max} needs more derivatives than {}",
            h.label(),
            h.base.deriv_order
        )));
    }
    let mut out = Vec::new();
    for p in probes {
        let image = apply(h, p)?;
        let mut slopes = Vec::new();
        let mut orders = Vec::new();
        for l in 0..=l_max {
            let rep = seminorm_pkl_adaptive(&image, k, l, Rule::new(1, 11), policy)?;
            slopes.push(rep.fitted_slope);
            orders.push(moderate_order(&rep, policy));
        }
        let uniform = orders.iter().all(|&o| o <= orders[0]);
        out.push(RegularityProbe { probe: p.label.clone(), slopes, orders, uniform });
    }
    let regular = out.iter().all(|p| p.uniform);
    Ok(RegularityReport { probes: out, regular })
}

/// Fine rule for the classical pairings in [`diagram_check_smooth`].
const CLASSICAL_RULE: Rule = Rule::new(64, 12);

/// `sigma(h^(T))` computed term by term from the smooth kernel `h(x, y)`.
pub fn classical_pairing(h: &SmoothFn, t: &DistributionSpec, x_box: &AxisBox, y_box: &AxisBox) -> Result<RepNet> {
    if h.dim() != 2 || x_box.dim() != 1 || y_box.dim() != 1 {
        return Err(Error::Dimension { expected: 2, found: h.dim() });
    }
    let mut max_alpha = 0;
    for term in &t.terms {
        if let DistTerm::Smooth { f } | DistTerm::DerivedContinuous { f, .. } = term {
            if f.support().is_none() {
                return Err(Error::Capability("classical pairing needs compactly supported terms".into()));
            }
        }
        max_alpha = max_alpha.max(match term {
            DistTerm::Dirac { alpha, .. } | DistTerm::DerivedContinuous { alpha, .. } => *alpha,
            DistTerm::Smooth { .. } => 0,
        });
    }
    let h = h.clone();
    let terms = t.terms.clone();
    let order = h.order().saturating_sub(max_alpha).min(MAX_ORDER);
    Ok(RepNet::new(x_box.clone(), Support::Unbounded, order, "classical", move |_, x, a| {
        let mut acc = Sample::ZERO;
        for term in &terms {
            match term {
                DistTerm::Dirac { point, alpha, coeff } => {
                    let sign = if alpha % 2 == 0 { 1.0 } else { -1.0 };
                    let v = h.deriv(&[x[0], *point], &[a[0], *alpha]) * (sign * coeff);
                    acc.value += v;
                    acc.mag += v.norm();
                }
                DistTerm::Smooth { f } | DistTerm::DerivedContinuous { f, .. } => {
                    let alpha = if let DistTerm::DerivedContinuous { alpha, .. } = term { *alpha } else { 0 };
                    let sign = if alpha % 2 == 0 { 1.0 } else { -1.0 };
                    let (lo, hi) = f.support().expect("checked above");
                    if lo >= hi {
                        continue;
                    }
                    let (ys, ws) = composite_1d(lo, hi, CLASSICAL_RULE);
                    for (y, w) in ys.iter().zip(&ws) {
                        let v = h.deriv(&[x[0], *y], &[a[0], alpha]) * (sign * w * f.eval(*y));
                        acc.value += v;
                        acc.mag += v.norm();
                    }
                }
            }
        }
        acc
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramReport {
    pub report: SeminormReport,
    pub class: GrowthClass,
}

/// Compares `sigma(h^(T))` with `sigma(h)^(i_S(T))` on `k`.
#[allow(clippy::too_many_arguments)]
pub fn diagram_check_smooth(
    h: &SmoothFn,
    t: &DistributionSpec,
    kit: &MollifierKit,
    x_box: &AxisBox,
    y_box: &AxisBox,
    k: &AxisBox,
    rule: Rule,
    policy: &Policy,
) -> Result<DiagramReport> {
    let classical = classical_pairing(h, t, x_box, y_box)?;
    let kernel = KernelNet::sigma(h.clone(), x_box, y_box, rule)?;
    let generalized = apply(&kernel, &embed_is(t, kit, y_box)?)?;
    let diff = sub(&generalized, &classical)?;
    let report = seminorm_pkl_adaptive(&diff, k, 0, Rule::new(4, 6), policy)?;
    let class = classify(&report, policy.m_max, policy.slope_tol);
    Ok(DiagramReport { report, class })
}

/// `u^_eps(xi) = int exp(-i xi.y) u_eps(y) dy` over the support box of `u_eps`.
pub fn fourier_hat(u: &RepNet, freq_box: &AxisBox, rule: Rule) -> Result<RepNet> {
    if freq_box.dim() != u.dim() {
        return Err(Error::Dimension { expected: u.dim(), found: freq_box.dim() });
    }
    if !u.support.is_bounded() {
        return Err(Error::Capability(format!("{}: Fourier transform needs a bounded support box", u.label)));
    }
    let uu = u.clone();
    let d = u.dim();
    Ok(RepNet::new(freq_box.clone(), Support::Unbounded, MAX_ORDER, format!("hat({})", u.label), move |e, xi, a| {
        let Some(b) = uu.support_box(e) else {
            return Sample::ZERO;
        };
        let grid = grid_unchecked(&b, rule);
        let z = vec![0usize; d];
        let mut acc = Sample::ZERO;
        for (y, w) in grid.nodes().zip(&grid.weights) {
            let s = uu.sample(e, y, &z);
            if s.mag == 0.0 {
                continue;
            }
            let mut phase = 0.0;
            let mut poly = C64::new(1.0, 0.0);
            for k in 0..d {
                phase -= xi[k] * y[k];
                poly *= C64::new(0.0, -y[k]).powu(a[k] as u32);
            }
            let v = poly * C64::from_polar(1.0, phase) * s.value * *w;
            acc.value += v;
            acc.mag += poly.norm() * s.mag * w;
        }
        acc
    }))
}

/// Local cubic (4-point Lagrange) interpolation weights on sorted `nodes`.
fn lagrange4(nodes: &[f64], t: f64) -> (usize, Vec<f64>) {
    let n = nodes.len();
    let k = n.min(4);
    let i = nodes.partition_point(|&v| v < t);
    let start = i.saturating_sub(k / 2).min(n - k);
    let pts = &nodes[start..start + k];
    let w = (0..k)
        .map(|a| {
            (0..k).filter(|&b| b != a).map(|b| (t - pts[b]) / (pts[a] - pts[b])).product::<f64>()
        })
        .collect();
    (start, w)
}

/// Cubic per-axis interpolation of samples `vals` on sorted `nodes` at `targets`.
/// Error is `O(h^4)` in the node spacing for smooth data.
pub fn resample_cubic(nodes: &[f64], vals: &[C64], targets: &[f64]) -> Result<Vec<C64>> {
    if nodes.len() != vals.len() || nodes.is_empty() {
        return Err(Error::Argument("resample: nodes and values must be non-empty and equal length".into()));
    }
    Ok(targets
        .iter()
        .map(|&t| {
            let (s, w) = lagrange4(nodes, t);
            w.iter().enumerate().map(|(k, wk)| vals[s + k] * *wk).sum()
        })
        .collect())
}

fn bicubic(xs: &[f64], ys: &[f64], vals: &[C64], x: f64, y: f64) -> C64 {
    let (sx, wx) = lagrange4(xs, x);
    let (sy, wy) = lagrange4(ys, y);
    let mut acc = C64::new(0.0, 0.0);
    for (i, a) in wx.iter().enumerate() {
        for (j, b) in wy.iter().enumerate() {
            acc += vals[(sx + i) * ys.len() + sy + j] * (a * b);
        }
    }
    acc
}

/// A one-dimensional kernel replaced by the bicubic interpolant of its samples on
/// the node sets `xs`, `ys` (sorted). Derivatives are not available.
pub fn resample_kernel(h: &KernelNet, xs: Vec<f64>, ys: Vec<f64>) -> Result<KernelNet> {
    if h.x_dim != 1 || h.y_dim != 1 {
        return Err(Error::Dimension { expected: 2, found: h.x_dim + h.y_dim });
    }
    let hh = h.clone();
    let mut out = h.clone();
    out.base = RepNet::new(h.base.domain.clone(), h.base.support.clone(), 0, format!("resampled({})", h.label()), move |e, p, _| {
        let (sx, wx) = lagrange4(&xs, p[0]);
        let (sy, wy) = lagrange4(&ys, p[1]);
        let mut acc = Sample::ZERO;
        for (i, a) in wx.iter().enumerate() {
            for (j, b) in wy.iter().enumerate() {
                let s = hh.base.sample(e, &[xs[sx + i], ys[sy + j]], &[0, 0]);
                acc.value += s.value * (a * b);
                acc.mag += s.mag * (a * b).abs();
            }
        }
        acc
    });
    Ok(out)
}

struct SampledTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    vals: Vec<C64>,
}

/// Kernel read from CSV rows `epsilon,x,y,re,im` (header optional). Each epsilon must
/// carry a full tensor grid; values between samples are bicubic interpolants and
/// epsilons absent from the file evaluate to NaN.
pub fn load_sampled_kernel(path: &Path, rule: Rule) -> Result<KernelNet> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: BTreeMap<u64, Vec<(f64, f64, C64)>> = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        let Ok(v) = parsed else {
            if ln == 0 {
                continue;
            }
            return Err(Error::Config(format!("{}:{}: expected numbers", path.display(), ln + 1)));
        };
        if v.len() != 5 {
            return Err(Error::Config(format!("{}:{}: expected 5 columns", path.display(), ln + 1)));
        }
        rows.entry(v[0].to_bits()).or_default().push((v[1], v[2], C64::new(v[3], v[4])));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no samples", path.display())));
    }
    let mut tables: BTreeMap<u64, SampledTable> = BTreeMap::new();
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (eb, pts) in rows {
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        if xs.len() * ys.len() != pts.len() {
            return Err(Error::Config(format!(
                "{}: samples at epsilon {} do not form a tensor grid",
                path.display(),
                f64::from_bits(eb)
            )));
        }
        let mut vals = vec![C64::new(0.0, 0.0); pts.len()];
        for (x, y, v) in pts {
            let i = xs.partition_point(|&a| a < x);
            let j = ys.partition_point(|&a| a < y);
            vals[i * ys.len() + j] = v;
        }
        xlo = xlo.min(xs[0]);
        xhi = xhi.max(*xs.last().unwrap());
        ylo = ylo.min(ys[0]);
        yhi = yhi.max(*ys.last().unwrap());
        tables.insert(eb, SampledTable { xs, ys, vals });
    }
    let x_box = AxisBox::new(vec![(xlo, xhi)])?;
    let y_box = AxisBox::new(vec![(ylo, yhi)])?;
    let dom = x_box.product(&y_box);
    let tables = Arc::new(tables);
    let base = RepNet::new(dom.clone(), Support::Fixed(dom), 0, path.display().to_string(), move |e, p, _| {
        match tables.get(&e.to_bits()) {
            Some(t) => Sample::exact(bicubic(&t.xs, &t.ys, &t.vals, p[0], p[1])),
            None => Sample { value: C64::new(f64::NAN, f64::NAN), mag: f64::NAN },
        }
    });
    KernelNet::new(
        base,
        1,
        Witness::Global { x_support: Support::Fixed(x_box), y_support: Support::Fixed(y_box) },
        rule,
    )
}
