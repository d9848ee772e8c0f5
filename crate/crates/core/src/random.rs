//! Seeded random smooth kernels and probe functions on one-dimensional boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functions::{Func1, SmoothFn, C64};
use crate::kernel_ops::KernelNet;
use crate::quadrature::{AxisBox, Rule};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn interval(b: &AxisBox) -> Result<(f64, f64)> {
    if b.dim() != 1 {
        return Err(Error::Dimension { expected: 1, found: b.dim() });
    }
    Ok(b.axes[0])
}

fn trig(rng: &mut impl Rng) -> Func1 {
    Func1::Trig { amp: rng.random_range(0.5..1.5), freq: rng.random_range(0.0..3.0), phase: rng.random_range(0.0..std::f64::consts::TAU) }
}

/// `bump(c, r) * trig` with the bump inside `[lo, hi]`.
pub fn windowed_trig(rng: &mut impl Rng, lo: f64, hi: f64) -> Func1 {
    let w = hi - lo;
    let r = rng.random_range(0.2 * w..0.45 * w);
    let c = rng.random_range(lo + r..hi - r);
    Func1::bump(c, r).times(trig(rng))
}

/// `sum_k c_k a_k(x) b_k(y)` with windowed trigonometric factors and complex `c_k`.
pub fn smooth_kernel(rng: &mut impl Rng, x_box: &AxisBox, y_box: &AxisBox, terms: usize, rule: Rule) -> Result<KernelNet> {
    let (xl, xh) = interval(x_box)?;
    let (yl, yh) = interval(y_box)?;
    let terms = (0..terms)
        .map(|_| {
            let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (c, vec![windowed_trig(rng, xl, xh), windowed_trig(rng, yl, yh)])
        })
        .collect();
    Ok(KernelNet::sigma(SmoothFn::sum_of(2, terms), x_box, y_box, rule)?.with_label("random"))
}

/// Hermitian `H(x, y) = sum_jk C_jk a_j(x) a_k(y)` with real `a_k` sharing one window
/// and `C` a random Hermitian matrix scaled to unit max entry.
pub fn hermitian_kernel(rng: &mut impl Rng, bbox: &AxisBox, rank: usize, rule: Rule) -> Result<KernelNet> {
    let (lo, hi) = interval(bbox)?;
    let window = Func1::bump(0.5 * (lo + hi), 0.45 * (hi - lo));
    let a: Vec<Func1> = (0..rank).map(|_| window.clone().times(trig(rng))).collect();
    let mut c = vec![vec![C64::new(0.0, 0.0); rank]; rank];
    for j in 0..rank {
        c[j][j] = C64::new(rng.random_range(-1.0..1.0), 0.0);
        for k in j + 1..rank {
            let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            c[j][k] = v;
            c[k][j] = v.conj();
        }
    }
    let max = c.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut terms = Vec::new();
    for j in 0..rank {
        for k in 0..rank {
            terms.push((c[j][k] / max, vec![a[j].clone(), a[k].clone()]));
        }
    }
    Ok(KernelNet::sigma(SmoothFn::sum_of(2, terms), bbox, bbox, rule)?.with_label("hermitian"))
}

/// Complex trigonometric polynomial with `terms` modes.
pub fn trig_probe(rng: &mut impl Rng, terms: usize) -> SmoothFn {
    let t = (0..terms)
        .map(|_| (C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), vec![trig(rng)]))
        .collect();
    SmoothFn::sum_of(1, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_hermitian() {
        let b = AxisBox::interval(-1.0, 1.0).unwrap();
        let k1 = smooth_kernel(&mut rng(0), &b, &b, 3, Rule::new(4, 4)).unwrap();
        let k2 = smooth_kernel(&mut rng(0), &b, &b, 3, Rule::new(4, 4)).unwrap();
        assert_eq!(k1.eval(0.1, &[0.2], &[-0.3]), k2.eval(0.1, &[0.2], &[-0.3]));
        let h = hermitian_kernel(&mut rng(7), &b, 3, Rule::new(4, 4)).unwrap();
        for &(x, y) in &[(0.1, 0.4), (-0.5, 0.3), (0.7, 0.7)] {
            let d = h.eval(0.1, &[x], &[y]) - h.eval(0.1, &[y], &[x]).conj();
            assert!(d.norm() < 1e-15);
        }
        assert!(smooth_kernel(&mut rng(0), &b.product(&b), &b, 1, Rule::new(2, 2)).is_err());
    }
}
