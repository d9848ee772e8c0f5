//! Boxes, composite Gauss-Legendre grids and the quadrature sum.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::functions::C64;

/// Closed axis-aligned box `[a_1, b_1] x ... x [a_d, b_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AxisBox {
    pub axes: Vec<(f64, f64)>,
}

impl AxisBox {
    pub fn new(axes: Vec<(f64, f64)>) -> Result<Self> {
        if axes.is_empty() {
            return arg("box needs at least one axis");
        }
        for &(a, b) in &axes {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return arg(format!("degenerate box axis [{a}, {b}]"));
            }
        }
        Ok(AxisBox { axes })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        AxisBox::new(vec![(a, b)])
    }

    /// Builds a box without validation; axes may be degenerate (a == b).
    pub(crate) fn raw(axes: Vec<(f64, f64)>) -> Self {
        AxisBox { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.axes.iter().zip(p).all(|(&(a, b), &x)| a <= x && x <= b)
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        self.axes
            .iter()
            .zip(&other.axes)
            .all(|(&(a, b), &(c, d))| a <= c && d <= b)
    }

    /// True when `other` lies in the open interior of `self`.
    pub fn interior_contains_box(&self, other: &AxisBox) -> bool {
        self.axes
            .iter()
            .zip(&other.axes)
            .all(|(&(a, b), &(c, d))| a < c && d < b)
    }

    pub fn inflate(&self, r: f64) -> AxisBox {
        AxisBox::raw(self.axes.iter().map(|&(a, b)| (a - r, b + r)).collect())
    }

    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        let axes: Vec<(f64, f64)> = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(&(a, b), &(c, d))| (a.max(c), b.min(d)))
            .collect();
        if axes.iter().all(|(a, b)| a < b) {
            Some(AxisBox::raw(axes))
        } else {
            None
        }
    }

    /// Closed boxes share at least one point.
    pub fn meets(&self, other: &AxisBox) -> bool {
        self.axes.iter().zip(&other.axes).all(|(&(a, b), &(c, d))| a.max(c) <= b.min(d))
    }

    pub fn hull(&self, other: &AxisBox) -> AxisBox {
        AxisBox::raw(
            self.axes
                .iter()
                .zip(&other.axes)
                .map(|(&(a, b), &(c, d))| (a.min(c), b.max(d)))
                .collect(),
        )
    }

    /// Cartesian product `self x other`.
    pub fn product(&self, other: &AxisBox) -> AxisBox {
        let mut axes = self.axes.clone();
        axes.extend_from_slice(&other.axes);
        AxisBox::raw(axes)
    }

    /// Sub-box made of the axes in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> AxisBox {
        AxisBox::raw(self.axes[range].to_vec())
    }

    pub fn point(p: &[f64]) -> AxisBox {
        AxisBox::raw(p.iter().map(|&x| (x, x)).collect())
    }

    pub fn center(&self) -> Vec<f64> {
        self.axes.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Composite rule parameters: panels per axis and Gauss nodes per panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub panels: usize,
    pub nodes: usize,
}

impl Rule {
    pub const fn new(panels: usize, nodes: usize) -> Self {
        Rule { panels, nodes }
    }
}

fn legendre_table() -> &'static Vec<(Vec<f64>, Vec<f64>)> {
    static TABLE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=64).map(compute_gauss_legendre).collect())
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            if n == 1 {
                dp = 1.0;
            }
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss-Legendre nodes and weights on [-1, 1] (n <= 64).
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    let (x, w) = &legendre_table()[n];
    (x, w)
}

/// Composite Gauss-Legendre nodes/weights on one interval.
pub fn composite_1d(a: f64, b: f64, rule: Rule) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(rule.nodes);
    let h = (b - a) / rule.panels as f64;
    let mut xs = Vec::with_capacity(rule.panels * rule.nodes);
    let mut ws = Vec::with_capacity(rule.panels * rule.nodes);
    for p in 0..rule.panels {
        let lo = a + p as f64 * h;
        for (t, w) in gx.iter().zip(gw) {
            xs.push(lo + 0.5 * (t + 1.0) * h);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Tensor-product composite Gauss-Legendre grid over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub bbox: AxisBox,
    pub rule: Rule,
    nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    #[serde(rename = "box")]
    bbox: Vec<(f64, f64)>,
    panels: usize,
    nodes_per_panel: usize,
}

impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridSpec {
            bbox: self.bbox.axes.clone(),
            panels: self.rule.panels,
            nodes_per_panel: self.rule.nodes,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = GridSpec::deserialize(d)?;
        let bbox = AxisBox::new(spec.bbox).map_err(serde::de::Error::custom)?;
        build_grid(&bbox, spec.panels, spec.nodes_per_panel).map_err(serde::de::Error::custom)
    }
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks(self.dim())
    }
}

/// Builds the grid without the public range checks on `nodes_per_panel`.
pub(crate) fn grid_unchecked(bbox: &AxisBox, rule: Rule) -> Grid {
    let per_axis: Vec<(Vec<f64>, Vec<f64>)> =
        bbox.axes.iter().map(|&(a, b)| composite_1d(a, b, rule)).collect();
    let d = bbox.dim();
    let count: usize = per_axis.iter().map(|(x, _)| x.len()).product();
    let mut nodes = Vec::with_capacity(count * d);
    let mut weights = Vec::with_capacity(count);
    let mut idx = vec![0usize; d];
    for _ in 0..count {
        let mut w = 1.0;
        for (ax, &i) in idx.iter().enumerate() {
            nodes.push(per_axis[ax].0[i]);
            w *= per_axis[ax].1[i];
        }
        weights.push(w);
        // last axis varies fastest
        for ax in (0..d).rev() {
            idx[ax] += 1;
            if idx[ax] < per_axis[ax].0.len() {
                break;
            }
            idx[ax] = 0;
        }
    }
    Grid { bbox: bbox.clone(), rule, nodes, weights }
}

/// Tensor-product Gauss-Legendre grid with `panels` per axis and `nodes_per_panel` in [2, 12].
pub fn build_grid(bbox: &AxisBox, panels: usize, nodes_per_panel: usize) -> Result<Grid> {
    if panels < 1 {
        return arg("panels must be >= 1");
    }
    if !(2..=12).contains(&nodes_per_panel) {
        return arg(format!("nodes_per_panel {nodes_per_panel} outside [2, 12]"));
    }
    AxisBox::new(bbox.axes.clone())?;
    Ok(grid_unchecked(bbox, Rule::new(panels, nodes_per_panel)))
}

pub fn integrate(grid: &Grid, samples: &[C64]) -> Result<C64> {
    if samples.len() != grid.len() {
        return Err(Error::Dimension { expected: grid.len(), found: samples.len() });
    }
    Ok(grid.weights.iter().zip(samples).map(|(w, s)| s * *w).sum())
}

pub fn volume(bbox: &AxisBox) -> f64 {
    bbox.volume()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample<F: Fn(&[f64]) -> C64>(g: &Grid, f: F) -> Vec<C64> {
        g.nodes().map(f).collect()
    }

    #[test]
    fn weights_sum_to_volume() {
        let g = build_grid(&AxisBox::interval(0.0, 1.0).unwrap(), 1, 2).unwrap();
        assert_eq!(g.len(), 2);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let b = AxisBox::new(vec![(0.0, 2.0), (0.0, 3.0)]).unwrap();
        let g = build_grid(&b, 3, 4).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 6.0).abs() < 6e-12);
        assert!(g.weights.iter().all(|&w| w > 0.0));
        assert!(g.nodes().all(|p| b.contains(p)));
    }

    #[test]
    fn gauss_exactness_degree_five() {
        let g = build_grid(&AxisBox::interval(-1.0, 1.0).unwrap(), 1, 3).unwrap();
        let v = integrate(&g, &sample(&g, |p| C64::new(p[0].powi(4), 0.0))).unwrap();
        assert!((v.re - 0.4).abs() < 1e-15);
    }

    #[test]
    fn closed_form_integrals() {
        let pi = std::f64::consts::PI;
        let g = build_grid(&AxisBox::interval(0.0, pi).unwrap(), 8, 4).unwrap();
        let v = integrate(&g, &sample(&g, |p| C64::new(p[0].sin(), 0.0))).unwrap();
        assert!((v.re - 2.0).abs() < 1e-10);
        let g = build_grid(&AxisBox::interval(0.0, 2.0 * pi).unwrap(), 8, 4).unwrap();
        let v = integrate(&g, &sample(&g, |p| C64::new(0.0, p[0]).exp())).unwrap();
        assert!(v.norm() < 1e-10);
        let g = build_grid(&AxisBox::interval(0.0, 1.0).unwrap(), 1, 2).unwrap();
        let v = integrate(&g, &sample(&g, |_| C64::new(1.0, 0.0))).unwrap();
        assert!((v.re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn volumes() {
        assert_eq!(volume(&AxisBox::interval(0.0, 1.0).unwrap()), 1.0);
        assert_eq!(volume(&AxisBox::new(vec![(0.0, 2.0), (1.0, 4.0)]).unwrap()), 6.0);
        assert_eq!(volume(&AxisBox::new(vec![(-1.0, 1.0); 3]).unwrap()), 8.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AxisBox::interval(1.0, 1.0).is_err());
        let b = AxisBox::interval(0.0, 1.0).unwrap();
        assert!(build_grid(&b, 0, 4).is_err());
        assert!(build_grid(&b, 1, 13).is_err());
        let g = build_grid(&b, 1, 2).unwrap();
        assert!(integrate(&g, &[C64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn refinement_reduces_error() {
        let b = AxisBox::interval(0.0, 3.0).unwrap();
        for f in [|x: f64| x.sin(), |x: f64| x.exp()] {
            let exact = if f(0.0) == 0.0 { 1.0 - 3f64.cos() } else { 3f64.exp() - 1.0 };
            let mut prev = f64::INFINITY;
            for panels in [2, 4, 8, 16] {
                let g = build_grid(&b, panels, 2).unwrap();
                let v = integrate(&g, &sample(&g, |p| C64::new(f(p[0]), 0.0))).unwrap();
                let err = (v.re - exact).abs();
                assert!(err < prev);
                prev = err;
            }
        }
    }

    #[test]
    fn grid_json_regenerates_nodes() {
        let b = AxisBox::new(vec![(0.0, 1.0), (-1.0, 2.0)]).unwrap();
        let g = build_grid(&b, 2, 3).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("nodes_per_panel"));
        let back: Grid = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
