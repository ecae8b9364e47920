//! Householder QR baselines: unblocked (`hqr2`), blocked with a compact WY
//! trailing update (`hqrf`), and the fused per-column variants (`mht`,
//! `mht_blocked`).
//!
//! A reflector is `H = I − τ·v·vᵀ` with `v[0] = 1`, chosen so that
//! `H·x = β·e₁` with `β = −sign(x₀)·‖x‖`.

use crate::counting::{Arith, OpCounter, Uncounted};
use crate::error::{Error, Result};
use crate::factorization::{check_panel, check_tall, drive, FactorizationResult, Sweep};
use crate::matcore::{dot, gemm, gemv_t_block, norm2, DenseMatrix, GEMM_BLOCK};

#[derive(Debug, Clone, PartialEq)]
pub struct Reflector {
    pub v: Vec<f64>,
    pub tau: f64,
    pub beta: f64,
}

impl Reflector {
    fn identity(len: usize, alpha: f64) -> Self {
        let mut v = vec![0.0; len];
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        Self { v, tau: 0.0, beta: alpha }
    }
}

/// Reflector that maps `x` to `β·e₁`. If `x[1..]` is already zero, `τ = 0`.
pub fn householder_vector(x: &[f64]) -> Result<Reflector> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("householder_vector needs a nonempty vector".into()));
    }
    Ok(reflector_with(x, Uncounted))
}

pub(crate) fn reflector_with<A: Arith>(x: &[f64], ops: A) -> Reflector {
    let alpha = x[0];
    if x[1..].iter().all(|&t| t == 0.0) {
        return Reflector::identity(x.len(), alpha);
    }
    let norm = norm2(x, &ops);
    let beta = -norm.copysign(alpha);
    let v0 = ops.sub(alpha, beta);
    let mut v = Vec::with_capacity(x.len());
    v.push(1.0);
    for &xi in &x[1..] {
        v.push(ops.div(xi, v0));
    }
    let tau = ops.div(ops.sub(beta, alpha), beta);
    Reflector { v, tau, beta }
}

/// Applies `H` to rows `row0..` of columns `col0..` of `a`.
pub fn apply_reflector(a: &mut DenseMatrix, h: &Reflector, row0: usize, col0: usize) -> Result<()> {
    if row0 + h.v.len() != a.rows() || col0 > a.cols() {
        return Err(Error::DimensionMismatch {
            op: "apply_reflector",
            left: a.shape(),
            right: (row0 + h.v.len(), col0),
        });
    }
    apply_fused(a, h, row0, col0, Uncounted);
    Ok(())
}

/// Level-2 form: all inner products first, then the rank-1 update.
fn apply_rank1<A: Arith>(a: &mut DenseMatrix, h: &Reflector, row0: usize, col0: usize, ops: A) {
    if h.tau == 0.0 || col0 >= a.cols() {
        return;
    }
    let w = gemv_t_block(a, row0, col0, &h.v, &ops);
    for (j, wj) in (col0..a.cols()).zip(w) {
        let scale = ops.mul(h.tau, wj);
        for (x, &vi) in a.col_mut(j)[row0..].iter_mut().zip(&h.v) {
            *x = ops.sub(*x, ops.mul(scale, vi));
        }
    }
}

/// Per-column form: inner product and update of one column at a time.
fn apply_fused<A: Arith>(a: &mut DenseMatrix, h: &Reflector, row0: usize, col0: usize, ops: A) {
    if h.tau == 0.0 {
        return;
    }
    for j in col0..a.cols() {
        let col = &mut a.col_mut(j)[row0..];
        let d = dot(col, &h.v, &ops);
        let scale = ops.mul(h.tau, d);
        for (x, &vi) in col.iter_mut().zip(&h.v) {
            *x = ops.sub(*x, ops.mul(scale, vi));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Rank1,
    Fused,
}

impl Kernel {
    fn apply<A: Arith>(self, a: &mut DenseMatrix, h: &Reflector, row0: usize, col0: usize, ops: A) {
        match self {
            Kernel::Rank1 => apply_rank1(a, h, row0, col0, ops),
            Kernel::Fused => apply_fused(a, h, row0, col0, ops),
        }
    }
}

/// Reduces `r` column by column and returns the reflectors in order.
fn reduce<A: Arith, B: Arith>(
    kernel: Kernel,
    r: &mut DenseMatrix,
    mut qt: Option<&mut DenseMatrix>,
    ops: A,
    qops: B,
) -> Vec<Reflector> {
    let (m, n) = r.shape();
    let steps = n.min(m.saturating_sub(1));
    let mut out = Vec::with_capacity(steps);
    for p in 0..steps {
        let h = reflector_with(&r.col(p)[p..], &ops);
        kernel.apply(r, &h, p, p + 1, &ops);
        let col = &mut r.col_mut(p)[p..];
        col[0] = h.beta;
        col[1..].iter_mut().for_each(|x| *x = 0.0);
        if let Some(qt) = qt.as_deref_mut() {
            kernel.apply(qt, &h, p, 0, &qops);
        }
        out.push(h);
    }
    out
}

struct Unblocked(Kernel);

impl Sweep for Unblocked {
    fn sweep<A: Arith, B: Arith>(
        &self,
        r: &mut DenseMatrix,
        qt: Option<&mut DenseMatrix>,
        ops: A,
        qops: B,
    ) -> Result<()> {
        reduce(self.0, r, qt, ops, qops);
        Ok(())
    }
}

/// Unblocked Householder QR with a GEMV + rank-1 trailing update.
pub fn hqr2_factorize(
    a: &DenseMatrix,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    drive(&Unblocked(Kernel::Rank1), a, accumulate_q, counter)
}

/// Unblocked Householder QR that updates each trailing column in one fused
/// dot-then-axpy pass.
pub fn mht_factorize(
    a: &DenseMatrix,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    drive(&Unblocked(Kernel::Fused), a, accumulate_q, counter)
}

/// Unit lower trapezoidal `V` with the panel's reflectors as columns. Missing
/// reflectors (past the last row) are left as zero columns with `τ = 0`.
fn panel_v(reflectors: &[Reflector], rows: usize, width: usize) -> (DenseMatrix, Vec<f64>) {
    let mut v = DenseMatrix::zeros(rows, width);
    let mut taus = vec![0.0; width];
    for (i, h) in reflectors.iter().enumerate() {
        v.col_mut(i)[i..].copy_from_slice(&h.v);
        taus[i] = h.tau;
    }
    (v, taus)
}

/// Upper triangular `T` with `H₁·H₂·…·H_b = I − V·T·Vᵀ`, built forward one
/// column at a time.
pub(crate) fn block_reflector_t<A: Arith>(v: &DenseMatrix, taus: &[f64], ops: A) -> DenseMatrix {
    let b = taus.len();
    let mut t = DenseMatrix::zeros(b, b);
    for i in 0..b {
        t[(i, i)] = taus[i];
        if i == 0 || taus[i] == 0.0 {
            continue;
        }
        // z = −τᵢ · V(:, 0..i)ᵀ · vᵢ
        let vi = v.col(i);
        let z: Vec<f64> = (0..i)
            .map(|c| {
                let d = dot(&v.col(c)[i..], &vi[i..], &ops);
                -ops.mul(taus[i], d)
            })
            .collect();
        // T(0..i, i) = T(0..i, 0..i) · z, with T upper triangular.
        for row in 0..i {
            let mut acc = ops.mul(t[(row, row)], z[row]);
            for c in row + 1..i {
                acc = ops.add(acc, ops.mul(t[(row, c)], z[c]));
            }
            t[(row, i)] = acc;
        }
    }
    t
}

/// `C ← C − V·(Tᵀ·(Vᵀ·C))`, i.e. `C ← Qᵀ_panel·C`.
fn apply_block_reflector<A: Arith>(v: &DenseMatrix, t: &DenseMatrix, c: &mut DenseMatrix, ops: A) {
    let vt = v.transpose();
    let w = gemm(&vt, c, GEMM_BLOCK, &ops);
    let w = gemm(&t.transpose(), &w, GEMM_BLOCK, &ops);
    let update = gemm(v, &w, GEMM_BLOCK, &ops);
    for (x, u) in c.data_mut().iter_mut().zip(update.data()) {
        *x = ops.sub(*x, *u);
    }
}

struct Blocked {
    kernel: Kernel,
    panel: usize,
}

impl Sweep for Blocked {
    fn sweep<A: Arith, B: Arith>(
        &self,
        r: &mut DenseMatrix,
        mut qt: Option<&mut DenseMatrix>,
        ops: A,
        qops: B,
    ) -> Result<()> {
        let (m, n) = r.shape();
        for c0 in (0..n).step_by(self.panel) {
            let width = self.panel.min(n - c0);
            let rows = m - c0;
            if rows < 2 {
                break;
            }
            let mut block = r.submatrix(c0, c0, rows, width);
            let reflectors = reduce(self.kernel, &mut block, None, &ops, Uncounted);
            r.set_submatrix(c0, c0, &block);
            let (v, taus) = panel_v(&reflectors, rows, width);
            let t = block_reflector_t(&v, &taus, &ops);

            let rest = n - c0 - width;
            if rest > 0 {
                let mut trailing = r.submatrix(c0, c0 + width, rows, rest);
                apply_block_reflector(&v, &t, &mut trailing, &ops);
                r.set_submatrix(c0, c0 + width, &trailing);
            }
            if let Some(qt) = qt.as_deref_mut() {
                let cols = qt.cols();
                let mut slab = qt.submatrix(c0, 0, rows, cols);
                apply_block_reflector(&v, &t, &mut slab, &qops);
                qt.set_submatrix(c0, 0, &slab);
            }
        }
        Ok(())
    }
}

/// Blocked Householder QR: panels reduced with the rank-1 kernel, trailing
/// matrix updated through the compact WY form.
pub fn hqrf_blocked_factorize(
    a: &DenseMatrix,
    panel: usize,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    check_tall(a)?;
    check_panel(a, panel)?;
    let sweep = Blocked {
        kernel: Kernel::Rank1,
        panel,
    };
    drive(&sweep, a, accumulate_q, counter)
}

/// Blocked variant with the fused per-column panel kernel.
pub fn mht_blocked_factorize(
    a: &DenseMatrix,
    panel: usize,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    check_tall(a)?;
    check_panel(a, panel)?;
    let sweep = Blocked {
        kernel: Kernel::Fused,
        panel,
    };
    drive(&sweep, a, accumulate_q, counter)
}
