//! Kernels of the form `c H(x, y) + h_x^T M_eps h_y`, where `h_x = (H(x, xi_i))_i`,
//! `h_y = (H(xi_j, y))_j` on the discretization grid of `H` and `M_eps` is a
//! matrix built once per epsilon. Iterates and power series of `H^` are of
//! this form: `L_n = h_x^T (W K)^(n-2) W h_y` for `n >= 2`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{compose, kernel_matrix, nystrom_grid, KernelNet, WitnessKind};
use crate::asymptotics::EpsilonSchedule;
use crate::error::{Error, Result};
use crate::functions::C64;
use crate::genfunc::{RepNet, Sample};
use crate::quadrature::Grid;

pub type MatrixBuilder = Arc<dyn Fn(f64, &DMatrix<C64>, &[f64]) -> Result<DMatrix<C64>> + Send + Sync>;

/// Per-epsilon discretization data of a sandwich kernel.
#[derive(Debug)]
pub struct SandwichData {
    pub grid: Grid,
    /// `K_ij = H(xi_i, xi_j)`
    pub k: DMatrix<C64>,
    pub m: DMatrix<C64>,
}

impl SandwichData {
    /// Values of the sandwich kernel on the grid: `c K + K M K`.
    pub fn grid_values(&self, c: C64) -> DMatrix<C64> {
        &self.k * c + &self.k * &self.m * &self.k
    }
}

/// Shared, lazily filled cache of per-epsilon matrices.
pub struct SandwichCache {
    id: u64,
    h: KernelNet,
    build: MatrixBuilder,
    map: Mutex<HashMap<u64, Arc<SandwichData>>>,
}

impl SandwichCache {
    pub fn get(&self, eps: f64) -> Result<Arc<SandwichData>> {
        if let Some(d) = self.map.lock().unwrap().get(&eps.to_bits()) {
            return Ok(d.clone());
        }
        let grid = nystrom_grid(&self.h, eps)?;
        let k = kernel_matrix(&self.h, eps, &grid, &grid);
        let m = (self.build)(eps, &k, &grid.weights)?;
        let d = Arc::new(SandwichData { grid, k, m });
        self.map.lock().unwrap().insert(eps.to_bits(), d.clone());
        Ok(d)
    }

    /// Builds every epsilon of the schedule, in parallel, and returns the first error.
    pub fn prefill(&self, schedule: &EpsilonSchedule) -> Result<()> {
        schedule.values().par_iter().map(|&e| self.get(e).map(|_| ())).collect()
    }
}

/// `W K P` with `W = diag(w)`.
pub(crate) fn wk_times(w: &[f64], k: &DMatrix<C64>, p: &DMatrix<C64>) -> DMatrix<C64> {
    let mut r = k * p;
    for (i, wi) in w.iter().enumerate() {
        r.row_mut(i).scale_mut(*wi);
    }
    r
}

pub(crate) fn diag(w: &[f64]) -> DMatrix<C64> {
    DMatrix::from_fn(w.len(), w.len(), |i, j| if i == j { C64::new(w[i], 0.0) } else { C64::new(0.0, 0.0) })
}

static NEXT_CACHE_ID: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Side {
    X,
    Y,
}

#[derive(PartialEq, Eq, Hash)]
struct RowKey {
    cache: u64,
    eps: u64,
    side: Side,
    point: [u64; super::MAX_KERNEL_DIM],
    alpha: [usize; super::MAX_KERNEL_DIM],
}

const ROW_MEMO_LIMIT: usize = 1 << 13;

thread_local! {
    static ROWS: RefCell<HashMap<RowKey, Arc<Vec<Sample>>>> = RefCell::new(HashMap::new());
}

/// Per-thread memo of `(H(x, xi_i))_i` (side X) and `M (H(xi_j, y))_j` (side Y). Grid
/// evaluations revisit the same x and y many times; each hit costs O(n) instead of O(n^2).
fn row(cache: u64, eps: f64, side: Side, p: &[f64], a: &[usize], make: impl FnOnce() -> Vec<Sample>) -> Arc<Vec<Sample>> {
    let mut key = RowKey { cache, eps: eps.to_bits(), side, point: [0; super::MAX_KERNEL_DIM], alpha: [0; super::MAX_KERNEL_DIM] };
    for (k, v) in p.iter().enumerate() {
        key.point[k] = v.to_bits();
    }
    key.alpha[..a.len()].copy_from_slice(a);
    if let Some(r) = ROWS.with(|m| m.borrow().get(&key).cloned()) {
        return r;
    }
    let r = Arc::new(make());
    ROWS.with(|m| {
        let mut m = m.borrow_mut();
        if m.len() >= ROW_MEMO_LIMIT {
            m.clear();
        }
        m.insert(key, r.clone());
    });
    r
}

/// The kernel `c H + h_x^T M_eps h_y` with `M_eps = build(eps, K, w)`.
pub fn sandwich_kernel(h: &KernelNet, c: C64, build: MatrixBuilder, label: String) -> Result<(KernelNet, Arc<SandwichCache>)> {
    if h.witness_kind() == WitnessKind::Local || !h.is_square() {
        return Err(Error::Capability(format!(
            "{}: needs a square kernel with a global or L2 support box",
            h.label()
        )));
    }
    let cache = Arc::new(SandwichCache {
        id: NEXT_CACHE_ID.fetch_add(1, Ordering::Relaxed),
        h: h.clone(),
        build,
        map: Mutex::new(HashMap::new()),
    });
    let hh = h.clone();
    let cc = cache.clone();
    let d = h.x_dim;
    let base = RepNet::new(h.base.domain.clone(), h.base.support.clone(), h.base.deriv_order, label, move |e, p, a| {
        let Ok(data) = cc.get(e) else {
            return Sample { value: C64::new(f64::NAN, f64::NAN), mag: f64::NAN };
        };
        let (x, y) = p.split_at(d);
        let (ax, ay) = a.split_at(d);
        let mut acc = if c == C64::new(0.0, 0.0) {
            Sample::ZERO
        } else {
            let s = hh.sample(e, x, y, ax, ay);
            Sample { value: s.value * c, mag: s.mag * c.norm() }
        };
        let my = row(cc.id, e, Side::Y, y, ay, || {
            let z = [0usize; super::MAX_KERNEL_DIM];
            let n = data.grid.len();
            let hy: Vec<Sample> = (0..n).map(|j| hh.sample(e, data.grid.node(j), y, &z[..d], ay)).collect();
            (0..n)
                .map(|i| {
                    let mut s = Sample::ZERO;
                    for (j, h) in hy.iter().enumerate() {
                        let mij = data.m[(i, j)];
                        s.value += mij * h.value;
                        s.mag += mij.norm() * h.mag;
                    }
                    s
                })
                .collect()
        });
        if my.iter().all(|s| s.mag == 0.0) {
            return acc;
        }
        let hx = row(cc.id, e, Side::X, x, ax, || {
            let z = [0usize; super::MAX_KERNEL_DIM];
            data.grid.nodes().map(|xi| hh.sample(e, x, xi, ax, &z[..d])).collect()
        });
        for (u, v) in hx.iter().zip(my.iter()) {
            acc.value += u.value * v.value;
            acc.mag += u.mag * v.mag;
        }
        acc
    });
    let mut out = h.clone();
    out.base = base;
    Ok((out, cache))
}

/// Kernel `L_n` of the n-th power of `H^`.
///
/// Square kernels with a global or L2 box use the matrix form
/// `L_n = h_x^T (W K)^(n-2) W h_y`; local-witness kernels compose lazily.
pub fn iterate(h: &KernelNet, n: usize) -> Result<KernelNet> {
    if !h.is_square() {
        return Err(Error::Dimension { expected: h.x_dim, found: h.y_dim });
    }
    match n {
        0 => Err(Error::Argument("iterate needs n >= 1; the identity has no kernel".into())),
        1 => Ok(h.clone()),
        2 => compose(h, h),
        _ if h.witness_kind() != WitnessKind::Local => {
            let build: MatrixBuilder = Arc::new(move |_, k, w| {
                let mut p = diag(w);
                for _ in 0..n - 2 {
                    p = wk_times(w, k, &p);
                }
                Ok(p)
            });
            Ok(sandwich_kernel(h, C64::new(0.0, 0.0), build, format!("{}^{n}", h.label()))?.0)
        }
        _ => {
            let mut l = compose(h, h)?;
            for _ in 2..n {
                l = compose(&l, h)?;
            }
            Ok(l)
        }
    }
}
