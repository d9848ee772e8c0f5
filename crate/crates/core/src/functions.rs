//! Closed-form test functions with exact derivatives.
//!
//! [`Func1`] is a small library of one-variable functions (bumps, Gaussians,
//! trig, polynomials, splines) evaluated through [`Jet`]s. [`SmoothFn`] builds
//! multi-variable functions as sums of tensor products of those, which covers
//! every smooth kernel and test function the library embeds.

use std::fmt;
use std::sync::Arc;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::jet::{Jet, MAX_ORDER};

pub type C64 = Complex<f64>;

/// Smooth step from 0 (t <= 0) to 1 (t >= 1), built from `exp(-1/t)`.
pub fn smooth_step(t: Jet) -> Jet {
    let v = t.value();
    if v <= 0.0 {
        return Jet::zero();
    }
    if v >= 1.0 {
        return Jet::constant(1.0);
    }
    let a = (-t.recip()).exp();
    let one_minus = -t + 1.0;
    let b = (-one_minus.recip()).exp();
    a * (a + b).recip()
}

/// Radial cutoff: 1 on [-1, 1], 0 outside (-2, 2), values in [0, 1], even.
pub fn cutoff_chi(t: Jet) -> Jet {
    let v = t.value();
    if v.abs() <= 1.0 {
        return Jet::constant(1.0);
    }
    if v.abs() >= 2.0 {
        return Jet::zero();
    }
    let abs = if v < 0.0 { -t } else { t };
    smooth_step(-abs + 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Func1 {
    Const { value: f64 },
    /// `c0 + c1 x + c2 x^2 + ...`
    Poly { coeffs: Vec<f64> },
    /// `amp * sin(freq * x + phase)`
    Trig { amp: f64, freq: f64, phase: f64 },
    Exp { rate: f64 },
    /// `exp(-((x - center) / width)^2)`
    Gaussian { center: f64, width: f64 },
    /// `exp(-1 / (1 - u^2))` with `u = (x - center) / radius`, zero for |u| >= 1.
    Bump { center: f64, radius: f64 },
    /// Continuous piecewise-linear tent, `max(0, 1 - |x - center| / radius)`.
    Hat { center: f64, radius: f64 },
    /// Centered cardinal cubic B-spline of the given knot spacing.
    CubicSpline { center: f64, spacing: f64 },
    Product { factors: Vec<Func1> },
    Sum { terms: Vec<(f64, Func1)> },
}

impl Func1 {
    pub fn bump(center: f64, radius: f64) -> Self {
        Func1::Bump { center, radius }
    }

    pub fn gaussian(center: f64, width: f64) -> Self {
        Func1::Gaussian { center, width }
    }

    pub fn constant(value: f64) -> Self {
        Func1::Const { value }
    }

    pub fn sin() -> Self {
        Func1::Trig { amp: 1.0, freq: 1.0, phase: 0.0 }
    }

    pub fn cos() -> Self {
        Func1::Trig { amp: 1.0, freq: 1.0, phase: std::f64::consts::FRAC_PI_2 }
    }

    pub fn times(self, other: Func1) -> Self {
        Func1::Product { factors: vec![self, other] }
    }

    pub fn jet(&self, x: f64) -> Jet {
        match self {
            Func1::Const { value } => Jet::constant(*value),
            Func1::Poly { coeffs } => {
                let t = Jet::variable(x);
                coeffs.iter().rev().fold(Jet::zero(), |acc, c| acc * t + *c)
            }
            Func1::Trig { amp, freq, phase } => {
                let arg = Jet::variable(x).scale(*freq) + *phase;
                arg.sin_cos().0.scale(*amp)
            }
            Func1::Exp { rate } => Jet::variable(x).scale(*rate).exp(),
            Func1::Gaussian { center, width } => {
                let u = (Jet::variable(x) + (-center)).scale(1.0 / width);
                (-(u * u)).exp()
            }
            Func1::Bump { center, radius } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 {
                    return Jet::zero();
                }
                let uj = (Jet::variable(x) + (-center)).scale(1.0 / radius);
                let denom = -(uj * uj) + 1.0;
                (-denom.recip()).exp()
            }
            Func1::Hat { center, radius } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 {
                    return Jet::zero();
                }
                let mut j = Jet::constant(1.0 - u.abs());
                j.c[1] = -u.signum() / radius;
                j
            }
            Func1::CubicSpline { center, spacing } => {
                let u = (x - center) / spacing;
                let a = u.abs();
                if a >= 2.0 {
                    return Jet::zero();
                }
                let uj = (Jet::variable(x) + (-center)).scale(1.0 / spacing);
                let aj = if u < 0.0 { -uj } else { uj };
                if a < 1.0 {
                    // (4 - 6a^2 + 3a^3) / 6
                    (aj.powi(3).scale(3.0) - aj.powi(2).scale(6.0) + 4.0).scale(1.0 / 6.0)
                } else {
                    (-aj + 2.0).powi(3).scale(1.0 / 6.0)
                }
            }
            Func1::Product { factors } => {
                factors.iter().fold(Jet::constant(1.0), |acc, f| acc * f.jet(x))
            }
            Func1::Sum { terms } => {
                terms.iter().fold(Jet::zero(), |acc, (c, f)| acc + f.jet(x).scale(*c))
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.jet(x).value()
    }

    pub fn deriv(&self, x: f64, k: usize) -> f64 {
        self.jet(x).derivative(k)
    }

    /// Closed interval outside of which the function vanishes, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Func1::Bump { center, radius } | Func1::Hat { center, radius } => {
                Some((center - radius, center + radius))
            }
            Func1::CubicSpline { center, spacing } => {
                Some((center - 2.0 * spacing, center + 2.0 * spacing))
            }
            Func1::Const { value } if *value == 0.0 => Some((0.0, 0.0)),
            Func1::Product { factors } => {
                let mut out: Option<(f64, f64)> = None;
                for f in factors {
                    if let Some((a, b)) = f.support() {
                        out = Some(match out {
                            None => (a, b),
                            Some((lo, hi)) => (lo.max(a), hi.min(b)),
                        });
                    }
                }
                out
            }
            Func1::Sum { terms } => {
                let mut out: Option<(f64, f64)> = None;
                for (_, f) in terms {
                    let (a, b) = f.support()?;
                    out = Some(match out {
                        None => (a, b),
                        Some((lo, hi)) => (lo.min(a), hi.max(b)),
                    });
                }
                out
            }
            _ => None,
        }
    }

    /// Highest derivative order that is classically defined everywhere.
    pub fn smoothness(&self) -> usize {
        match self {
            Func1::Hat { .. } => 0,
            Func1::CubicSpline { .. } => 2,
            Func1::Product { factors } => {
                factors.iter().map(Func1::smoothness).min().unwrap_or(MAX_ORDER)
            }
            Func1::Sum { terms } => {
                terms.iter().map(|(_, f)| f.smoothness()).min().unwrap_or(MAX_ORDER)
            }
            _ => MAX_ORDER,
        }
    }
}

/// One term `coeff * f_1(x_1) * ... * f_d(x_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorTerm {
    pub coeff: (f64, f64),
    pub factors: Vec<Func1>,
}

type CustomEval = Arc<dyn Fn(&[f64], &[usize]) -> C64 + Send + Sync>;

/// A smooth function of `dim` variables with partial derivatives.
#[derive(Clone)]
pub enum SmoothFn {
    Tensor { dim: usize, terms: Vec<TensorTerm> },
    /// User-supplied evaluator `(x, alpha) -> d^alpha f(x)`.
    Custom {
        dim: usize,
        order: usize,
        support: Option<Vec<(f64, f64)>>,
        eval: CustomEval,
    },
}

impl fmt::Debug for SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothFn::Tensor { dim, terms } => {
                f.debug_struct("Tensor").field("dim", dim).field("terms", terms).finish()
            }
            SmoothFn::Custom { dim, order, .. } => {
                f.debug_struct("Custom").field("dim", dim).field("order", order).finish()
            }
        }
    }
}

impl SmoothFn {
    pub fn of(f: Func1) -> Self {
        SmoothFn::Tensor {
            dim: 1,
            terms: vec![TensorTerm { coeff: (1.0, 0.0), factors: vec![f] }],
        }
    }

    pub fn tensor(factors: Vec<Func1>) -> Self {
        SmoothFn::Tensor {
            dim: factors.len(),
            terms: vec![TensorTerm { coeff: (1.0, 0.0), factors }],
        }
    }

    pub fn zero(dim: usize) -> Self {
        SmoothFn::Tensor { dim, terms: Vec::new() }
    }

    /// Sum of `coeff * tensor` terms; all terms must share one dimension.
    pub fn sum_of(dim: usize, terms: Vec<(C64, Vec<Func1>)>) -> Self {
        let terms = terms
            .into_iter()
            .map(|(c, factors)| {
                assert_eq!(factors.len(), dim, "tensor term dimension");
                TensorTerm { coeff: (c.re, c.im), factors }
            })
            .collect();
        SmoothFn::Tensor { dim, terms }
    }

    pub fn custom(
        dim: usize,
        order: usize,
        support: Option<Vec<(f64, f64)>>,
        eval: impl Fn(&[f64], &[usize]) -> C64 + Send + Sync + 'static,
    ) -> Self {
        SmoothFn::Custom { dim, order, support, eval: Arc::new(eval) }
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothFn::Tensor { dim, .. } | SmoothFn::Custom { dim, .. } => *dim,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            SmoothFn::Tensor { terms, .. } => terms
                .iter()
                .flat_map(|t| t.factors.iter().map(Func1::smoothness))
                .min()
                .unwrap_or(MAX_ORDER),
            SmoothFn::Custom { order, .. } => *order,
        }
    }

    pub fn deriv(&self, x: &[f64], alpha: &[usize]) -> C64 {
        match self {
            SmoothFn::Tensor { terms, .. } => {
                let mut acc = C64::new(0.0, 0.0);
                for t in terms {
                    let mut prod = 1.0;
                    for (i, f) in t.factors.iter().enumerate() {
                        prod *= f.deriv(x[i], alpha.get(i).copied().unwrap_or(0));
                        if prod == 0.0 {
                            break;
                        }
                    }
                    acc += C64::new(t.coeff.0, t.coeff.1) * prod;
                }
                acc
            }
            SmoothFn::Custom { eval, .. } => eval(x, alpha),
        }
    }

    /// Sum over terms of `|coeff| * prod |f_i^(alpha_i)|`, the roundoff scale of [`Self::deriv`].
    pub fn deriv_magnitude(&self, x: &[f64], alpha: &[usize]) -> f64 {
        match self {
            SmoothFn::Tensor { terms, .. } => terms
                .iter()
                .map(|t| {
                    let c = C64::new(t.coeff.0, t.coeff.1).norm();
                    t.factors
                        .iter()
                        .enumerate()
                        .fold(c, |p, (i, f)| p * f.deriv(x[i], alpha.get(i).copied().unwrap_or(0)).abs())
                })
                .sum(),
            SmoothFn::Custom { eval, .. } => eval(x, alpha).norm(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        let zeros = [0usize; 8];
        self.deriv(x, &zeros[..x.len().min(8)])
    }

    /// Per-axis interval outside of which the function vanishes, if known.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            SmoothFn::Tensor { dim, terms } => {
                if terms.is_empty() {
                    return None;
                }
                let mut hull: Vec<Option<(f64, f64)>> = vec![None; *dim];
                for t in terms {
                    for (i, f) in t.factors.iter().enumerate() {
                        let (a, b) = f.support()?;
                        hull[i] = Some(match hull[i] {
                            None => (a, b),
                            Some((lo, hi)) => (lo.min(a), hi.max(b)),
                        });
                    }
                }
                hull.into_iter().collect()
            }
            SmoothFn::Custom { support, .. } => support.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SmoothFn::Tensor { terms, .. } if terms.is_empty())
    }
}
