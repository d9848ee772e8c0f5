//! Truncated Taylor arithmetic in one variable.
//!
//! A [`Jet`] carries the Taylor coefficients `c_k = f^(k)(x0) / k!` of a
//! function at a point, up to [`MAX_ORDER`]. Composing jets gives exact
//! derivatives of smooth closed-form functions (bumps, cutoffs, smooth steps)
//! without hand-written derivative formulas.

use std::ops::{Add, Mul, Neg, Sub};

/// Highest derivative order tracked by a jet.
pub const MAX_ORDER: usize = 10;
const LEN: usize = MAX_ORDER + 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub c: [f64; LEN],
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = v;
        Jet { c }
    }

    /// The identity function expanded at `x0`.
    pub fn variable(x0: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = x0;
        c[1] = 1.0;
        Jet { c }
    }

    pub fn zero() -> Self {
        Jet { c: [0.0; LEN] }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        if k > MAX_ORDER {
            return f64::NAN;
        }
        self.c[k] * factorial(k)
    }

    /// Jet of `g(self)` given the derivatives `g^(k)(self.value())` for k = 0..=MAX_ORDER.
    ///
    /// Uses the recursive Faa di Bruno form: powers of the centered jet are
    /// accumulated and weighted by `g^(k) / k!`.
    pub fn compose_with(&self, outer_derivs: &[f64; LEN]) -> Jet {
        let mut centered = *self;
        centered.c[0] = 0.0;
        let mut out = Jet::constant(outer_derivs[0]);
        let mut power = Jet::constant(1.0);
        for (k, d) in outer_derivs.iter().enumerate().skip(1) {
            power = power * centered;
            let w = d / factorial(k);
            for i in 0..LEN {
                out.c[i] += w * power.c[i];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut c = self.c;
        c.iter_mut().for_each(|v| *v *= s);
        Jet { c }
    }

    pub fn recip(&self) -> Jet {
        let a0 = self.c[0];
        let mut r = [0.0; LEN];
        r[0] = 1.0 / a0;
        for k in 1..LEN {
            let s: f64 = (1..=k).map(|j| self.c[j] * r[k - j]).sum();
            r[k] = -s / a0;
        }
        Jet { c: r }
    }

    pub fn exp(&self) -> Jet {
        let mut e = [0.0; LEN];
        e[0] = self.c[0].exp();
        for k in 1..LEN {
            let s: f64 = (1..=k).map(|j| j as f64 * self.c[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Jet { c: e }
    }

    /// Returns `(sin(self), cos(self))`.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let mut s = [0.0; LEN];
        let mut c = [0.0; LEN];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..LEN {
            let mut ss = 0.0;
            let mut cc = 0.0;
            for j in 1..=k {
                ss += j as f64 * self.c[j] * c[k - j];
                cc += j as f64 * self.c[j] * s[k - j];
            }
            s[k] = ss / k as f64;
            c[k] = -cc / k as f64;
        }
        (Jet { c: s }, Jet { c })
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut out = Jet::constant(1.0);
        for _ in 0..n {
            out = out * *self;
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut c = self.c;
        c.iter_mut().zip(rhs.c.iter()).for_each(|(a, b)| *a += b);
        Jet { c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let mut c = self.c;
        c.iter_mut().zip(rhs.c.iter()).for_each(|(a, b)| *a -= b);
        Jet { c }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [0.0; LEN];
        for i in 0..LEN {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..LEN - i {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        Jet { c }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}
