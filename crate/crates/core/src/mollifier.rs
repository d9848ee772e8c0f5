//! The mollifier `rho`, the cut-off net `Theta_eps`, the boundary cutoff
//! `gamma_eps`, and the embeddings of smooth functions and distributions.
//!
//! `rho` is the inverse Fourier transform of the plateau
//! `psi(xi) = exp(-xi^2/2) * sum_{j<k} (xi^2/2)^j / j!`, which equals
//! `1 + O(xi^{2k})` at the origin, so moments `1..2k-1` of `rho` vanish. The
//! transform is computed by Gauss quadrature in frequency and then tabulated
//! per panel as Chebyshev series for every derivative order a [`Jet`] can hold.
//! `k = 1` gives the Gaussian density, kept as a debug kit with one moment.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{fit_growth_with, Policy, SeminormReport};
use crate::error::{Error, Result};
use crate::functions::{cutoff_chi, smooth_step, Func1, SmoothFn, C64};
use crate::genfunc::{RepNet, Sample, Support};
use crate::jet::{binomial, factorial, Jet, MAX_ORDER};
use crate::quadrature::{composite_1d, AxisBox, Rule};

/// Frequency cut for the spectral integral; the plateau is below 1e-30 beyond it.
const XI_MAX: f64 = 14.0;
const SPECTRAL_NODES: usize = 16;
const TABLE_PANEL: f64 = 0.25;
const CHEB_POINTS: usize = 17;
const ORDERS: usize = MAX_ORDER + 1;
/// Table entries below this fraction of the per-order maximum count as zero.
const TAIL_REL: f64 = 1e-14;
const MASS_TOL: f64 = 1e-10;
const MOMENT_TOL: f64 = 1e-8;
/// Highest moment order tested when counting vanishing moments.
pub const MOMENT_ORDERS: usize = 8;
/// Largest Dirac derivative order accepted by [`embed_is`].
pub const MAX_DIRAC_ORDER: usize = 4;
const BUILD_PANELS: usize = 40;
const BUILD_NODES: usize = 12;
const SIDECAR_MAGIC: &[u8; 8] = b"GKRHO01\0";

/// The cutoff `chi`: 1 on `|t| <= r_inner`, 0 for `|t| >= r_outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiDescriptor {
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Default for ChiDescriptor {
    fn default() -> Self {
        ChiDescriptor { r_inner: 1.0, r_outer: 2.0 }
    }
}

#[derive(Debug)]
struct Tables {
    panel: f64,
    n_panels: usize,
    /// `coeffs[(p * ORDERS + k) * CHEB_POINTS + i]`
    coeffs: Vec<f64>,
}

/// A built mollifier with its verified moment count.
#[derive(Debug, Clone)]
pub struct MollifierKit {
    pub spectral_resolution: usize,
    pub support_radius: f64,
    /// `rho` and its tabulated derivatives are treated as zero beyond this radius.
    pub effective_radius: f64,
    pub verified_moments: usize,
    /// `int y^m rho(y) dy` on the build grid, m = 0..=MOMENT_ORDERS.
    pub moments: Vec<f64>,
    pub plateau_terms: usize,
    pub chi: ChiDescriptor,
    /// Rule for the inner convolution integral over the support of `Theta_eps`.
    pub inner_rule: Rule,
    spectral: Arc<(Vec<f64>, Vec<f64>)>,
    tables: Arc<Tables>,
}

fn plateau(xi: f64, terms: usize) -> f64 {
    let h = 0.5 * xi * xi;
    let mut s = 0.0;
    let mut t = 1.0;
    for j in 0..terms {
        s += t;
        t *= h / (j + 1) as f64;
    }
    (-h).exp() * s
}

fn spectral_nodes(resolution: usize, terms: usize) -> (Vec<f64>, Vec<f64>) {
    let panels = (resolution / SPECTRAL_NODES).max(1);
    let (xs, ws) = composite_1d(0.0, XI_MAX, Rule::new(panels, SPECTRAL_NODES));
    let ws = xs.iter().zip(ws).map(|(x, w)| w * plateau(*x, terms) / PI).collect();
    (xs, ws)
}

/// All derivatives `rho^(k)(y)`, k = 0..=MAX_ORDER, by direct spectral quadrature.
fn spectral_all(nodes: &(Vec<f64>, Vec<f64>), y: f64) -> [f64; ORDERS] {
    let mut out = [0.0; ORDERS];
    for (xi, w) in nodes.0.iter().zip(&nodes.1) {
        let (s, c) = (y * xi).sin_cos();
        // d^k/dy^k cos(y xi) = xi^k * (c, -s, -c, s)[k mod 4]
        let mut p = *w;
        for (k, o) in out.iter_mut().enumerate() {
            let trig = match k % 4 {
                0 => c,
                1 => -s,
                2 => -c,
                _ => s,
            };
            *o += p * trig;
            p *= xi;
        }
    }
    out
}

fn cheb_nodes() -> [f64; CHEB_POINTS] {
    let mut t = [0.0; CHEB_POINTS];
    for (j, v) in t.iter_mut().enumerate() {
        *v = (PI * (j as f64 + 0.5) / CHEB_POINTS as f64).cos();
    }
    t
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c[1..].iter().rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

fn build_tables(nodes: &(Vec<f64>, Vec<f64>), radius: f64) -> Tables {
    let n_panels = ((2.0 * radius / TABLE_PANEL).ceil() as usize).max(1);
    let panel = 2.0 * radius / n_panels as f64;
    let t = cheb_nodes();
    let per_panel: Vec<Vec<f64>> = (0..n_panels)
        .into_par_iter()
        .map(|p| {
            let a = -radius + p as f64 * panel;
            let vals: Vec<[f64; ORDERS]> =
                t.iter().map(|tj| spectral_all(nodes, a + 0.5 * (tj + 1.0) * panel)).collect();
            let mut coeffs = vec![0.0; ORDERS * CHEB_POINTS];
            for k in 0..ORDERS {
                for i in 0..CHEB_POINTS {
                    let mut s = 0.0;
                    for (j, v) in vals.iter().enumerate() {
                        s += v[k] * (PI * i as f64 * (j as f64 + 0.5) / CHEB_POINTS as f64).cos();
                    }
                    let scale = if i == 0 { 1.0 } else { 2.0 };
                    coeffs[k * CHEB_POINTS + i] = scale * s / CHEB_POINTS as f64;
                }
            }
            coeffs
        })
        .collect();
    Tables { panel, n_panels, coeffs: per_panel.concat() }
}

impl Tables {
    fn radius(&self) -> f64 {
        0.5 * self.panel * self.n_panels as f64
    }

    fn locate(&self, y: f64) -> (usize, f64) {
        let r = self.radius();
        let p = (((y + r) / self.panel).floor().max(0.0) as usize).min(self.n_panels - 1);
        let a = -r + p as f64 * self.panel;
        (p, 2.0 * (y - a) / self.panel - 1.0)
    }

    fn eval(&self, p: usize, t: f64, k: usize) -> f64 {
        let off = (p * ORDERS + k) * CHEB_POINTS;
        clenshaw(&self.coeffs[off..off + CHEB_POINTS], t)
    }

    /// Smallest panel boundary beyond which every sampled derivative is tail noise.
    fn effective_radius(&self) -> f64 {
        let t = cheb_nodes();
        let mut max = [0.0f64; ORDERS];
        let mut panel_max = vec![[0.0f64; ORDERS]; self.n_panels];
        for (p, pm) in panel_max.iter_mut().enumerate() {
            for tj in &t {
                for k in 0..ORDERS {
                    let v = self.eval(p, *tj, k).abs();
                    pm[k] = pm[k].max(v);
                    max[k] = max[k].max(v);
                }
            }
        }
        let r = self.radius();
        let mut reach = 0.0f64;
        for (p, pm) in panel_max.iter().enumerate() {
            if (0..ORDERS).any(|k| pm[k] > TAIL_REL * max[k]) {
                let a = -r + p as f64 * self.panel;
                reach = reach.max(a.abs()).max((a + self.panel).abs());
            }
        }
        reach.min(r)
    }
}

impl MollifierKit {
    /// Builds the default plateau mollifier (three plateau terms, five moments).
    pub fn build(spectral_resolution: usize, support_radius: f64) -> Result<Self> {
        Self::with_plateau(3, spectral_resolution, support_radius)
    }

    /// The Gaussian density as a mollifier: only odd moments vanish.
    pub fn gaussian_debug(spectral_resolution: usize, support_radius: f64) -> Result<Self> {
        Self::with_plateau(1, spectral_resolution, support_radius)
    }

    pub fn with_plateau(terms: usize, spectral_resolution: usize, support_radius: f64) -> Result<Self> {
        if spectral_resolution < 64 {
            return Err(Error::Argument(format!(
                "spectral resolution {spectral_resolution} below 64"
            )));
        }
        if terms == 0 || !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::Argument("plateau terms and support radius must be positive".into()));
        }
        let spectral = spectral_nodes(spectral_resolution, terms);
        let tables = build_tables(&spectral, support_radius);
        Self::finish(terms, spectral_resolution, support_radius, spectral, tables)
    }

    fn finish(
        terms: usize,
        spectral_resolution: usize,
        support_radius: f64,
        spectral: (Vec<f64>, Vec<f64>),
        tables: Tables,
    ) -> Result<Self> {
        let effective_radius = tables.effective_radius();
        let mut kit = MollifierKit {
            spectral_resolution,
            support_radius,
            effective_radius,
            verified_moments: 0,
            moments: Vec::new(),
            plateau_terms: terms,
            chi: ChiDescriptor::default(),
            inner_rule: Rule::new(16, 8),
            spectral: Arc::new(spectral),
            tables: Arc::new(tables),
        };
        kit.moments = kit.raw_moments(1.0, 0.0);
        let mass_err = (kit.moments[0] - 1.0).abs();
        if mass_err >= MASS_TOL {
            return Err(Error::Construction(format!(
                "integral of rho is 1 {:+e} after truncation at radius {support_radius}",
                kit.moments[0] - 1.0
            )));
        }
        let m = (1..=MOMENT_ORDERS)
            .take_while(|&m| kit.moments[m].abs() < MOMENT_TOL)
            .last()
            .unwrap_or(0);
        if m == 0 {
            return Err(Error::Construction(format!(
                "first moment {:e} does not vanish",
                kit.moments[1]
            )));
        }
        kit.verified_moments = m;
        Ok(kit)
    }

    pub fn with_inner_rule(mut self, rule: Rule) -> Self {
        self.inner_rule = rule;
        self
    }

    /// `rho^(k)(y)` from the Chebyshev tables; zero beyond the effective radius.
    pub fn rho_deriv(&self, y: f64, k: usize) -> f64 {
        if k > MAX_ORDER || y.abs() >= self.effective_radius {
            return 0.0;
        }
        let (p, t) = self.tables.locate(y);
        self.tables.eval(p, t, k)
    }

    pub fn rho(&self, y: f64) -> f64 {
        self.rho_deriv(y, 0)
    }

    /// `rho^(k)(y)` by direct spectral quadrature, without tables or truncation.
    pub fn rho_spectral(&self, y: f64, k: usize) -> f64 {
        spectral_all(&self.spectral, y)[k.min(MAX_ORDER)]
    }

    /// Nodes and values of `rho` on the build grid.
    pub fn rho_samples(&self) -> (Vec<f64>, Vec<f64>) {
        let (ys, _) = self.build_rule();
        let vals = ys.iter().map(|&y| self.rho(y)).collect();
        (ys, vals)
    }

    fn build_rule(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.effective_radius;
        composite_1d(-r, r, Rule::new(BUILD_PANELS, BUILD_NODES))
    }

    /// `int y^m rho(y) chi(c y) dy` for m = 0..=MOMENT_ORDERS, with `c = 0` meaning no cutoff.
    /// `scale` multiplies the weight of `y^m` by `scale^m`.
    fn raw_moments(&self, scale: f64, c: f64) -> Vec<f64> {
        self.moment_samples(scale, c).into_iter().map(|s| s.0).collect()
    }

    /// `(value, magnitude)` of `scale^m int y^m rho(y) chi(c y) dy`.
    fn moment_samples(&self, scale: f64, c: f64) -> Vec<(f64, f64)> {
        let (ys, ws) = self.build_rule();
        let mut out = vec![(0.0, 0.0); MOMENT_ORDERS + 1];
        for (y, w) in ys.iter().zip(&ws) {
            let chi = if c == 0.0 { 1.0 } else { cutoff_chi(Jet::constant(c * y)).value() };
            let base = w * self.rho(*y) * chi;
            let mut p = 1.0;
            for o in out.iter_mut() {
                o.0 += base * p;
                o.1 += (base * p).abs();
                p *= scale * y;
            }
        }
        out
    }

    /// Radius of the support of `Theta_eps`.
    pub fn theta_radius(&self, eps: f64) -> f64 {
        let l = eps.ln().abs();
        let r = eps * self.effective_radius;
        if l == 0.0 {
            r
        } else {
            r.min(self.chi.r_outer / l)
        }
    }

    /// Taylor jet of `Theta_eps` at `z`, exact up to `order`.
    pub fn theta_jet(&self, eps: f64, z: f64, order: usize) -> Jet {
        let order = order.min(MAX_ORDER);
        if z.abs() >= self.theta_radius(eps) {
            return Jet::zero();
        }
        let y = z / eps;
        let (p, t) = self.tables.locate(y);
        let mut rho = Jet::zero();
        let mut s = 1.0 / eps;
        for k in 0..=order {
            rho.c[k] = self.tables.eval(p, t, k) * s / factorial(k);
            s /= eps;
        }
        let l = eps.ln().abs();
        if (l * z).abs() <= self.chi.r_inner {
            return rho;
        }
        rho * cutoff_chi(Jet::variable(z).scale(l))
    }

    /// `Theta_eps(z) = eps^-1 rho(z / eps) chi(|ln eps| z)`.
    pub fn theta(&self, eps: f64, z: f64) -> f64 {
        self.theta_jet(eps, z, 0).value()
    }

    pub fn theta_deriv(&self, eps: f64, z: f64, k: usize) -> f64 {
        self.theta_jet(eps, z, k).derivative(k)
    }

    /// `Theta_eps` as a net on `domain` (one-dimensional).
    pub fn theta_net(&self, domain: &AxisBox) -> Result<RepNet> {
        if domain.dim() != 1 {
            return Err(Error::Dimension { expected: 1, found: domain.dim() });
        }
        let kit = self.clone();
        let k2 = self.clone();
        Ok(RepNet::new(
            domain.clone(),
            Support::Shrinking(Arc::new(move |e| {
                let r = k2.theta_radius(e);
                AxisBox::raw(vec![(-r, r)])
            })),
            MAX_ORDER,
            "theta",
            move |e, x, a| Sample::real(kit.theta_deriv(e, x[0], a[0])),
        ))
    }

    /// Writes the Chebyshev tables and build parameters to `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * self.tables.coeffs.len());
        buf.extend_from_slice(SIDECAR_MAGIC);
        for v in [self.plateau_terms, self.spectral_resolution, self.tables.n_panels] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.support_radius.to_le_bytes());
        for c in &self.tables.coeffs {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Reads a kit written by [`MollifierKit::save`]; moments are re-verified.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = || Error::Io(format!("{}: not a mollifier sidecar", path.display()));
        if bytes.len() < 40 || &bytes[..8] != SIDECAR_MAGIC {
            return Err(bad());
        }
        let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
        let terms = u64::from_le_bytes(word(0)) as usize;
        let resolution = u64::from_le_bytes(word(1)) as usize;
        let n_panels = u64::from_le_bytes(word(2)) as usize;
        let radius = f64::from_le_bytes(word(3));
        let body = &bytes[40..];
        if n_panels == 0 || body.len() != 8 * n_panels * ORDERS * CHEB_POINTS {
            return Err(bad());
        }
        let coeffs = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let tables = Tables { panel: 2.0 * radius / n_panels as f64, n_panels, coeffs };
        let spectral = spectral_nodes(resolution, terms);
        Self::finish(terms, resolution, radius, spectral, tables)
    }
}

/// Builds the default kit (see [`MollifierKit::build`]).
pub fn build_rho(spectral_resolution: usize, support_radius: f64) -> Result<MollifierKit> {
    MollifierKit::build(spectral_resolution, support_radius)
}

fn sidecar_name(terms: usize, resolution: usize, radius: f64) -> String {
    format!("rho-k{terms}-n{resolution}-r{radius}.bin")
}

/// Loads the kit from `dir` when a sidecar for `(resolution, radius)` exists, otherwise
/// builds it and writes the sidecar.
pub fn build_rho_cached(spectral_resolution: usize, support_radius: f64, dir: &Path) -> Result<MollifierKit> {
    let path: PathBuf = dir.join(sidecar_name(3, spectral_resolution, support_radius));
    if path.exists() {
        if let Ok(kit) = MollifierKit::load(&path) {
            return Ok(kit);
        }
    }
    let kit = build_rho(spectral_resolution, support_radius)?;
    fs::create_dir_all(dir)?;
    kit.save(&path)?;
    Ok(kit)
}

pub fn theta(kit: &MollifierKit, eps: f64, x: f64) -> f64 {
    kit.theta(eps, x)
}

/// Reports of `|int Theta_eps - 1|` (m = 0) and `|int x^m Theta_eps|` for m = 1..=m_max,
/// without checking `m_max` against the kit's verified moments.
pub fn scarp_moment_reports(kit: &MollifierKit, policy: &Policy, m_max: usize) -> Result<Vec<SeminormReport>> {
    let m_max = m_max.min(MOMENT_ORDERS);
    let per_eps: Vec<Vec<(f64, f64)>> = policy
        .schedule
        .values()
        .par_iter()
        .map(|&e| kit.moment_samples(e, e * e.ln().abs()))
        .collect();
    (0..=m_max)
        .map(|m| {
            let mut values = Vec::with_capacity(per_eps.len());
            let mut floors = Vec::with_capacity(per_eps.len());
            for s in &per_eps {
                let (v, mag) = s[m];
                if m == 0 {
                    values.push((v - 1.0).abs());
                    floors.push(policy.noise_rel * (mag + 1.0));
                } else {
                    values.push(v.abs());
                    floors.push(policy.noise_rel * mag);
                }
            }
            fit_growth_with(&values, &floors, &policy.schedule, policy.window)
        })
        .collect()
}

/// Moment conditions of `Theta_eps` for m = 0..=m_max; needs `m_max <= verified_moments`.
pub fn check_scarp_moments(kit: &MollifierKit, policy: &Policy, m_max: usize) -> Result<Vec<SeminormReport>> {
    if m_max > kit.verified_moments {
        return Err(Error::Capability(format!(
            "moment order {m_max} exceeds the {} verified moments of the kit",
            kit.verified_moments
        )));
    }
    scarp_moment_reports(kit, policy, m_max)
}

/// `gamma_eps` on the interval `(lo, hi)`: 1 on `[lo + eps, hi - eps] cap [-1/eps, 1/eps]`,
/// falling to 0 over a width `eps / 2` outside that set.
pub fn gamma_jet(lo: f64, hi: f64, eps: f64, x: f64) -> Jet {
    let a = (lo + eps).max(-1.0 / eps);
    let b = (hi - eps).min(1.0 / eps);
    let w = 0.5 * eps;
    if x >= a && x <= b {
        return Jet::constant(1.0);
    }
    let t = Jet::variable(x);
    let left = smooth_step((t + (w - a)).scale(1.0 / w));
    let right = smooth_step((-t + (b + w)).scale(1.0 / w));
    left * right
}

fn gamma_support(lo: f64, hi: f64, eps: f64) -> (f64, f64) {
    let w = 0.5 * eps;
    ((lo + eps).max(-1.0 / eps) - w, (hi - eps).min(1.0 / eps) + w)
}

/// One term of a distribution in local-structure form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistTerm {
    /// `coeff * d^alpha delta_point`
    Dirac {
        point: f64,
        #[serde(default)]
        alpha: usize,
        #[serde(default = "one")]
        coeff: f64,
    },
    Smooth { f: Func1 },
    /// `d^alpha f` for a continuous `f`.
    DerivedContinuous {
        f: Func1,
        #[serde(default)]
        alpha: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl DistTerm {
    pub fn dirac(point: f64, alpha: usize) -> Self {
        DistTerm::Dirac { point, alpha, coeff: 1.0 }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            DistTerm::Dirac { point, .. } => Some((*point, *point)),
            DistTerm::Smooth { f } | DistTerm::DerivedContinuous { f, .. } => f.support(),
        }
    }

    fn alpha(&self) -> usize {
        match self {
            DistTerm::Dirac { alpha, .. } | DistTerm::DerivedContinuous { alpha, .. } => *alpha,
            DistTerm::Smooth { .. } => 0,
        }
    }
}

/// A one-dimensional distribution `T = sum of terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub terms: Vec<DistTerm>,
    /// Declared support; defaults to the hull of the term supports.
    #[serde(default, rename = "support_box", skip_serializing_if = "Option::is_none")]
    pub declared_support: Option<AxisBox>,
}

impl DistributionSpec {
    pub fn new(terms: Vec<DistTerm>) -> Self {
        DistributionSpec { terms, declared_support: None }
    }

    pub fn delta(point: f64) -> Self {
        Self::new(vec![DistTerm::dirac(point, 0)])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("distribution: {e}")))
    }

    /// Hull of the term supports, `None` when some term has unbounded support.
    pub fn support_box(&self) -> Option<AxisBox> {
        if let Some(b) = &self.declared_support {
            return Some(b.clone());
        }
        let mut hull: Option<(f64, f64)> = None;
        for t in &self.terms {
            let (a, b) = t.support()?;
            hull = Some(match hull {
                None => (a, b),
                Some((lo, hi)) => (lo.min(a), hi.max(b)),
            });
        }
        hull.map(|(a, b)| AxisBox::raw(vec![(a, b)]))
    }
}

/// `sigma(f)`: the constant net `f_eps = f`.
pub fn embed_sigma(f: SmoothFn, domain: &AxisBox) -> Result<RepNet> {
    Ok(RepNet::from_smooth(f, domain.clone())?.with_label("sigma"))
}

/// `i_S(T) = (gamma_eps T) * Theta_eps` on a one-dimensional `domain`.
pub fn embed_is(t: &DistributionSpec, kit: &MollifierKit, domain: &AxisBox) -> Result<RepNet> {
    if domain.dim() != 1 {
        return Err(Error::Dimension { expected: 1, found: domain.dim() });
    }
    let (lo, hi) = domain.axes[0];
    if let Some(sb) = t.support_box() {
        let (a, b) = sb.axes[0];
        if !(a > lo && b < hi) {
            return Err(Error::Argument(format!(
                "distribution support [{a}, {b}] touches the boundary of ({lo}, {hi})"
            )));
        }
    }
    let max_alpha = t.terms.iter().map(DistTerm::alpha).max().unwrap_or(0);
    for term in &t.terms {
        if let DistTerm::Dirac { alpha, .. } = term {
            if *alpha > MAX_DIRAC_ORDER {
                return Err(Error::Argument(format!("Dirac derivative order {alpha} above {MAX_DIRAC_ORDER}")));
            }
        }
        if let DistTerm::DerivedContinuous { alpha, .. } = term {
            if *alpha > MAX_ORDER {
                return Err(Error::Argument(format!("derivative order {alpha} above {MAX_ORDER}")));
            }
        }
    }
    let supports: Vec<Option<(f64, f64)>> = t.terms.iter().map(DistTerm::support).collect();
    let support = {
        let kit = kit.clone();
        let supports = supports.clone();
        Support::Shrinking(Arc::new(move |e| {
            let (ga, gb) = gamma_support(lo, hi, e);
            let r = kit.theta_radius(e);
            let mut hull: Option<(f64, f64)> = None;
            for s in &supports {
                let (a, b) = s.map_or((ga, gb), |(a, b)| (a.max(ga), b.min(gb)));
                let (a, b) = (a - r, b + r);
                hull = Some(hull.map_or((a, b), |(x, y)| (x.min(a), y.max(b))));
            }
            let (a, b) = hull.unwrap_or((0.5 * (lo + hi), 0.5 * (lo + hi)));
            AxisBox::raw(vec![(a.max(lo), b.min(hi).max(a.max(lo)))])
        }))
    };
    let terms = t.terms.clone();
    let kit = kit.clone();
    Ok(RepNet::new(
        domain.clone(),
        support,
        MAX_ORDER - max_alpha,
        "i_S",
        move |e, x, a| {
            let mut acc = Sample::ZERO;
            for (term, sup) in terms.iter().zip(&supports) {
                let s = eval_term(&kit, term, *sup, lo, hi, e, x[0], a[0]);
                acc.value += s.value;
                acc.mag += s.mag;
            }
            acc
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn eval_term(
    kit: &MollifierKit,
    term: &DistTerm,
    sup: Option<(f64, f64)>,
    lo: f64,
    hi: f64,
    eps: f64,
    x: f64,
    k: usize,
) -> Sample {
    match term {
        DistTerm::Dirac { point, alpha, coeff } => {
            let g = gamma_jet(lo, hi, eps, *point);
            let th = kit.theta_jet(eps, x - point, alpha + k);
            let mut v = 0.0;
            let mut mag = 0.0;
            for beta in 0..=*alpha {
                let sign = if (alpha - beta) % 2 == 0 { 1.0 } else { -1.0 };
                let c = coeff * binomial(*alpha, beta) * sign * g.derivative(alpha - beta);
                let t = c * th.derivative(beta + k);
                v += t;
                mag += t.abs();
            }
            Sample { value: C64::new(v, 0.0), mag }
        }
        DistTerm::Smooth { f } => convolve(kit, f, 0, sup, lo, hi, eps, x, k),
        DistTerm::DerivedContinuous { f, alpha } => convolve(kit, f, *alpha, sup, lo, hi, eps, x, k),
    }
}

/// `(-1)^alpha int f(l) d_l^alpha [gamma(l) Theta(x - l)] dl`, differentiated `k` times in x.
#[allow(clippy::too_many_arguments)]
fn convolve(
    kit: &MollifierKit,
    f: &Func1,
    alpha: usize,
    sup: Option<(f64, f64)>,
    lo: f64,
    hi: f64,
    eps: f64,
    x: f64,
    k: usize,
) -> Sample {
    let r = kit.theta_radius(eps);
    let (ga, gb) = gamma_support(lo, hi, eps);
    let (mut a, mut b) = ((x - r).max(ga), (x + r).min(gb));
    if let Some((fa, fb)) = sup {
        a = a.max(fa);
        b = b.min(fb);
    }
    if a >= b {
        return Sample::ZERO;
    }
    let (ls, ws) = composite_1d(a, b, kit.inner_rule);
    let mut v = 0.0;
    let mut mag = 0.0;
    for (l, w) in ls.iter().zip(&ws) {
        let fl = f.eval(*l);
        if fl == 0.0 {
            continue;
        }
        let g = gamma_jet(lo, hi, eps, *l);
        let th = kit.theta_jet(eps, x - l, alpha + k);
        let mut s = 0.0;
        let mut m = 0.0;
        for beta in 0..=alpha {
            let sign = if (alpha + beta) % 2 == 0 { 1.0 } else { -1.0 };
            let t = sign * binomial(alpha, beta) * g.derivative(alpha - beta) * th.derivative(beta + k);
            s += t;
            m += t.abs();
        }
        v += w * fl * s;
        mag += w * fl.abs() * m;
    }
    Sample { value: C64::new(v, 0.0), mag }
}
