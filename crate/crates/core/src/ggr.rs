//! Column-wise and generalized Givens rotation QR.
//!
//! A whole chain of bottom-up Givens rotations on one pivot column collapses
//! into closed forms driven by the tail norms `q[t] = ‖v[t..]‖₂` of the
//! active column `v`:
//!
//! ```text
//! row 0      : (v[0]·a[0] + s[0]) / q[0]
//! row t      : k[t−1]·s[t−1] − l[t−1]·a[t−1]        1 ≤ t ≤ L−2
//! row L−1    : c·a[L−1] − s·a[L−2]
//!
//! k[t] = v[t] / (q[t]·q[t+1])      l[t] = q[t+1] / q[t]
//! c    = v[L−2] / q[L−2]           s    = v[L−1] / q[L−2]
//! s[t] = Σ_{u>t} v[u]·a[u]
//! ```
//!
//! where `a` is a trailing column and every right-hand side reads the values
//! from before the step. The pivot column itself becomes `(q[0], 0, …, 0)`.
//!
//! CGR applies this per trailing column in two passes (inner sums, then a
//! top-down row sweep with a one-value scratch). GGR fuses both into a single
//! bottom-up pass that builds `s` incrementally; the arithmetic and its order
//! are identical, so the two produce bitwise-equal factors. GGR also exposes
//! the first-row and lower-rows updates as separate phases.

use crate::counting::{with_ops, Arith, OpCounter, Uncounted};
use crate::error::{Error, Result};
use crate::factorization::{check_panel, check_tall, drive, FactorizationResult, Sweep};
use crate::matcore::{gemm, DenseMatrix, GEMM_BLOCK};

/// Tail norms below this are treated as an already-annihilated sub-column.
pub const ZERO_THRESHOLD: f64 = 1e-300;

/// Everything needed to apply one column step to any trailing column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTransform {
    /// The active pivot column before the step.
    pub v: Vec<f64>,
    /// Tail norms, nonincreasing.
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub l: Vec<f64>,
    pub c_last: f64,
    pub s_last: f64,
    /// Rows touched by the step: the rows above the first tail norm below
    /// [`ZERO_THRESHOLD`] (at least 1). Rows past it are left unchanged.
    pub active: usize,
}

impl ColumnTransform {
    /// Column length `L`.
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// True when the step changes nothing.
    pub fn is_identity(&self) -> bool {
        self.active < 2
    }

    fn trivial(v: Vec<f64>, q: Vec<f64>) -> Self {
        let pairs = v.len().saturating_sub(2);
        Self {
            v,
            q,
            k: vec![0.0; pairs],
            l: vec![0.0; pairs],
            c_last: 1.0,
            s_last: 0.0,
            active: 1,
        }
    }
}

/// Leading-sign convention for the new diagonal entry of a column step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotSign {
    /// `R(i, i) = q[0] ≥ 0`.
    #[default]
    Positive,
    /// `R(i, i) = −copysign(q[0], v[0])`, the sign rule of the GPU kernel
    /// formulation.
    Copysign,
}

/// `q[t] = √(v[t]² + q[t+1]²)`, accumulated from the bottom.
pub fn tail_norms(v: &[f64]) -> Vec<f64> {
    tail_norms_with(v, Uncounted)
}

pub(crate) fn tail_norms_with<A: Arith>(v: &[f64], ops: A) -> Vec<f64> {
    let len = v.len();
    let mut q = vec![0.0; len];
    let Some(&last) = v.last() else {
        return q;
    };
    let mut ss = ops.mul(last, last);
    q[len - 1] = last.abs();
    for t in (0..len - 1).rev() {
        ss = ops.add(ops.mul(v[t], v[t]), ss);
        q[t] = ops.sqrt(ss);
    }
    q
}

/// Builds the `k`, `l`, `c`, `s` coefficients from `v` and its tail norms.
pub fn kl_vectors(v: &[f64], q: &[f64]) -> ColumnTransform {
    kl_vectors_with(v, q, Uncounted)
}

pub(crate) fn kl_vectors_with<A: Arith>(v: &[f64], q: &[f64], ops: A) -> ColumnTransform {
    debug_assert_eq!(v.len(), q.len());
    let len = v.len();
    let small = q.iter().position(|&x| x < ZERO_THRESHOLD).unwrap_or(len);
    let active = small.max(1);
    let mut out = ColumnTransform::trivial(v.to_vec(), q.to_vec());
    if active < 2 {
        return out;
    }
    out.active = active;
    for t in 0..active - 2 {
        out.k[t] = ops.div(v[t], ops.mul(q[t], q[t + 1]));
        out.l[t] = ops.div(q[t + 1], q[t]);
    }
    let p = active - 2;
    out.c_last = ops.div(v[p], q[p]);
    out.s_last = ops.div(v[p + 1], q[p]);
    out
}

/// `s[t] = Σ_{u=t+1}^{L−1} v[u]·w[u]` for `t = 0..L−2`, by one reverse pass.
pub fn partial_inner_sums(v: &[f64], w: &[f64]) -> Vec<f64> {
    partial_inner_sums_with(v, w, Uncounted)
}

pub(crate) fn partial_inner_sums_with<A: Arith>(v: &[f64], w: &[f64], ops: A) -> Vec<f64> {
    debug_assert_eq!(v.len(), w.len());
    let len = v.len();
    if len < 2 {
        return Vec::new();
    }
    let mut s = vec![0.0; len - 1];
    s[len - 2] = ops.mul(v[len - 1], w[len - 1]);
    for t in (0..len - 2).rev() {
        s[t] = ops.add(s[t + 1], ops.mul(v[t + 1], w[t + 1]));
    }
    s
}

/// Two-pass column update: inner sums first, then rows top-down carrying the
/// old value of the row above.
pub(crate) fn cgr_update_column<A: Arith>(t: &ColumnTransform, a: &mut [f64], ops: A) {
    let la = t.active;
    if la < 2 {
        return;
    }
    let s = partial_inner_sums_with(&t.v[..la], &a[..la], &ops);
    let mut prev = a[0];
    a[0] = ops.div(ops.add(ops.mul(t.v[0], a[0]), s[0]), t.q[0]);
    for r in 1..la - 1 {
        let cur = a[r];
        a[r] = ops.sub(ops.mul(t.k[r - 1], s[r - 1]), ops.mul(t.l[r - 1], prev));
        prev = cur;
    }
    let last = la - 1;
    a[last] = ops.sub(ops.mul(t.c_last, a[last]), ops.mul(t.s_last, prev));
}

/// Fused single bottom-up pass: the inner sum for row `r` is extended just
/// before row `r` is overwritten, and row `r − 1` is still untouched.
pub(crate) fn ggr_update_column<A: Arith>(t: &ColumnTransform, a: &mut [f64], ops: A) {
    let la = t.active;
    if la < 2 {
        return;
    }
    let last = la - 1;
    let mut suffix = ops.mul(t.v[last], a[last]);
    a[last] = ops.sub(ops.mul(t.c_last, a[last]), ops.mul(t.s_last, a[last - 1]));
    for r in (1..last).rev() {
        suffix = ops.add(suffix, ops.mul(t.v[r], a[r]));
        a[r] = ops.sub(ops.mul(t.k[r - 1], suffix), ops.mul(t.l[r - 1], a[r - 1]));
    }
    a[0] = ops.div(ops.add(ops.mul(t.v[0], a[0]), suffix), t.q[0]);
}

fn column_transform<A: Arith>(a: &DenseMatrix, pivot_row: usize, pivot_col: usize, ops: A) -> ColumnTransform {
    let v = a.col(pivot_col)[pivot_row..].to_vec();
    if v.len() < 2 {
        let q = v.iter().map(|x| x.abs()).collect();
        return ColumnTransform::trivial(v, q);
    }
    let q = tail_norms_with(&v, &ops);
    kl_vectors_with(&v, &q, &ops)
}

/// Writes `(q[0], 0, …, 0)` into the active pivot column.
fn settle_pivot_column(a: &mut DenseMatrix, pivot_row: usize, pivot_col: usize, t: &ColumnTransform) {
    let col = &mut a.col_mut(pivot_col)[pivot_row..];
    if !t.is_identity() {
        col[0] = t.q[0];
    }
    for x in &mut col[1..] {
        *x = 0.0;
    }
}

fn check_pivot(a: &DenseMatrix, pivot_row: usize, pivot_col: usize) -> Result<()> {
    if pivot_row >= a.rows() {
        return Err(Error::IndexOutOfBounds {
            what: "pivot_row",
            index: pivot_row,
            limit: a.rows(),
        });
    }
    if pivot_col >= a.cols() {
        return Err(Error::IndexOutOfBounds {
            what: "pivot_col",
            index: pivot_col,
            limit: a.cols(),
        });
    }
    Ok(())
}

/// One column-wise Givens step at `(pivot_row, pivot_col)`, in place.
pub fn cgr_column_step(
    a: &mut DenseMatrix,
    pivot_row: usize,
    pivot_col: usize,
    counter: Option<&mut OpCounter>,
) -> Result<ColumnTransform> {
    cgr_column_step_signed(a, pivot_row, pivot_col, PivotSign::Positive, counter)
}

/// [`cgr_column_step`] with an explicit leading-sign convention.
pub fn cgr_column_step_signed(
    a: &mut DenseMatrix,
    pivot_row: usize,
    pivot_col: usize,
    sign: PivotSign,
    counter: Option<&mut OpCounter>,
) -> Result<ColumnTransform> {
    check_pivot(a, pivot_row, pivot_col)?;
    let t = with_ops!(counter, |ops| cgr_step_with(a, pivot_row, pivot_col, ops));
    if sign == PivotSign::Copysign && !t.is_identity() && t.v[0].is_sign_positive() {
        for j in pivot_col..a.cols() {
            let x = &mut a[(pivot_row, j)];
            *x = -*x;
        }
    }
    Ok(t)
}

fn cgr_step_with<A: Arith>(a: &mut DenseMatrix, pivot_row: usize, pivot_col: usize, ops: A) -> ColumnTransform {
    let t = column_transform(a, pivot_row, pivot_col, &ops);
    if t.is_identity() {
        settle_pivot_column(a, pivot_row, pivot_col, &t);
        return t;
    }
    for j in pivot_col + 1..a.cols() {
        cgr_update_column(&t, &mut a.col_mut(j)[pivot_row..], &ops);
    }
    settle_pivot_column(a, pivot_row, pivot_col, &t);
    t
}

fn apply_to_qt<A: Arith>(
    qt: Option<&mut DenseMatrix>,
    pivot_row: usize,
    t: &ColumnTransform,
    kernel: fn(&ColumnTransform, &mut [f64], &A),
    ops: &A,
) {
    if let Some(qt) = qt {
        for j in 0..qt.cols() {
            kernel(t, &mut qt.col_mut(j)[pivot_row..], ops);
        }
    }
}

struct ColumnWise;

impl Sweep for ColumnWise {
    fn sweep<A: Arith, B: Arith>(
        &self,
        r: &mut DenseMatrix,
        mut qt: Option<&mut DenseMatrix>,
        ops: A,
        qops: B,
    ) -> Result<()> {
        let (m, n) = r.shape();
        for p in 0..n.min(m.saturating_sub(1)) {
            let t = cgr_step_with(r, p, p, &ops);
            apply_to_qt(qt.as_deref_mut(), p, &t, |t, a, o| cgr_update_column(t, a, o), &qops);
        }
        Ok(())
    }
}

/// Column-wise Givens QR: one fused step per pivot column.
pub fn cgr_factorize(
    a: &DenseMatrix,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    drive(&ColumnWise, a, accumulate_q, counter)
}

/// The fused GGR step: transform, then one bottom-up pass per trailing column.
fn ggr_step_with<A: Arith>(a: &mut DenseMatrix, pivot_row: usize, pivot_col: usize, ops: A) -> ColumnTransform {
    let t = column_transform(a, pivot_row, pivot_col, &ops);
    if t.is_identity() {
        settle_pivot_column(a, pivot_row, pivot_col, &t);
        return t;
    }
    for j in pivot_col + 1..a.cols() {
        ggr_update_column(&t, &mut a.col_mut(j)[pivot_row..], &ops);
    }
    settle_pivot_column(a, pivot_row, pivot_col, &t);
    t
}

pub(crate) struct Generalized;

impl Generalized {
    /// Same sweep with one counter for both `r` and `qt`.
    pub(crate) fn shared<A: Arith>(r: &mut DenseMatrix, mut qt: Option<&mut DenseMatrix>, ops: &A) {
        let (m, n) = r.shape();
        for p in 0..n.min(m.saturating_sub(1)) {
            let t = ggr_step_with(r, p, p, ops);
            apply_to_qt(qt.as_deref_mut(), p, &t, |t, a, o| ggr_update_column(t, a, o), ops);
        }
    }
}

impl Sweep for Generalized {
    fn sweep<A: Arith, B: Arith>(
        &self,
        r: &mut DenseMatrix,
        mut qt: Option<&mut DenseMatrix>,
        ops: A,
        qops: B,
    ) -> Result<()> {
        let (m, n) = r.shape();
        for p in 0..n.min(m.saturating_sub(1)) {
            let t = ggr_step_with(r, p, p, &ops);
            apply_to_qt(qt.as_deref_mut(), p, &t, |t, a, o| ggr_update_column(t, a, o), &qops);
        }
        Ok(())
    }
}

/// Generalized Givens QR with the fused single-pass trailing update.
pub fn ggr_factorize(
    a: &DenseMatrix,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    drive(&Generalized, a, accumulate_q, counter)
}

/// Precomputed state of one GGR column step, from which the first-row and
/// lower-rows updates can run independently.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub pivot_row: usize,
    pub pivot_col: usize,
    pub transform: ColumnTransform,
    /// Old pivot-row values of the trailing columns.
    pub head: Vec<f64>,
    /// Partial inner sums, one column of length `active − 1` per trailing column.
    pub sums: DenseMatrix,
}

/// Computes the transform and every trailing column's inner sums.
pub fn ggr_plan(
    a: &DenseMatrix,
    pivot_row: usize,
    pivot_col: usize,
    counter: Option<&mut OpCounter>,
) -> Result<SweepPlan> {
    check_pivot(a, pivot_row, pivot_col)?;
    Ok(with_ops!(counter, |ops| plan_with(a, pivot_row, pivot_col, ops)))
}

fn plan_with<A: Arith>(a: &DenseMatrix, pivot_row: usize, pivot_col: usize, ops: A) -> SweepPlan {
    let transform = column_transform(a, pivot_row, pivot_col, &ops);
    let trailing = pivot_col + 1..a.cols();
    let head = trailing.clone().map(|j| a[(pivot_row, j)]).collect();
    let la = transform.active;
    let mut sums = DenseMatrix::zeros(la.saturating_sub(1), trailing.len());
    if la >= 2 {
        for (c, j) in trailing.enumerate() {
            let col = &a.col(j)[pivot_row..pivot_row + la];
            let s = partial_inner_sums_with(&transform.v[..la], col, &ops);
            sums.col_mut(c).copy_from_slice(&s);
        }
    }
    SweepPlan {
        pivot_row,
        pivot_col,
        transform,
        head,
        sums,
    }
}

/// New pivot-row values of the trailing columns. Pure in the plan.
pub fn ggr_first_row(plan: &SweepPlan, counter: Option<&mut OpCounter>) -> Vec<f64> {
    with_ops!(counter, |ops| first_row_with(plan, ops))
}

fn first_row_with<A: Arith>(plan: &SweepPlan, ops: A) -> Vec<f64> {
    let t = &plan.transform;
    if t.is_identity() {
        return plan.head.clone();
    }
    plan.head
        .iter()
        .enumerate()
        .map(|(c, &a0)| ops.div(ops.add(ops.mul(t.v[0], a0), plan.sums[(0, c)]), t.q[0]))
        .collect()
}

/// Updates rows below the pivot in every trailing column and clears the pivot
/// column. Never reads the pivot row of `a`.
pub fn ggr_lower_rows(plan: &SweepPlan, a: &mut DenseMatrix, counter: Option<&mut OpCounter>) -> Result<()> {
    if a.rows() < plan.pivot_row + plan.transform.len() || a.cols() != plan.pivot_col + 1 + plan.head.len() {
        return Err(Error::DimensionMismatch {
            op: "ggr_lower_rows",
            left: a.shape(),
            right: (plan.pivot_row + plan.transform.len(), plan.pivot_col + 1 + plan.head.len()),
        });
    }
    with_ops!(counter, |ops| lower_rows_with(plan, a, ops));
    Ok(())
}

fn lower_rows_with<A: Arith>(plan: &SweepPlan, a: &mut DenseMatrix, ops: A) {
    let t = &plan.transform;
    let la = t.active;
    if la >= 2 {
        let last = la - 1;
        for (c, j) in (plan.pivot_col + 1..a.cols()).enumerate() {
            let col = &mut a.col_mut(j)[plan.pivot_row..];
            let old_above = |col: &[f64], r: usize| if r == 1 { plan.head[c] } else { col[r - 1] };
            let above = old_above(col, last);
            col[last] = ops.sub(ops.mul(t.c_last, col[last]), ops.mul(t.s_last, above));
            for r in (1..last).rev() {
                let above = old_above(col, r);
                col[r] = ops.sub(
                    ops.mul(t.k[r - 1], plan.sums[(r - 1, c)]),
                    ops.mul(t.l[r - 1], above),
                );
            }
        }
    }
    let pivot = &mut a.col_mut(plan.pivot_col)[plan.pivot_row..];
    for x in &mut pivot[1..] {
        *x = 0.0;
    }
}

/// Writes the first-row result and the new diagonal entry back into `a`.
pub fn ggr_commit_first_row(plan: &SweepPlan, a: &mut DenseMatrix, row: &[f64]) {
    for (c, &x) in row.iter().enumerate() {
        a[(plan.pivot_row, plan.pivot_col + 1 + c)] = x;
    }
    if !plan.transform.is_identity() {
        a[(plan.pivot_row, plan.pivot_col)] = plan.transform.q[0];
    }
}

/// Blocked GGR: each `m×b` panel is reduced with the fused sweep while its
/// orthogonal factor `Q_p` is accumulated over the panel's active rows; the
/// trailing matrix is then updated with one GEMM `Q_pᵀ · A_trail`.
pub fn ggr_blocked_factorize(
    a: &DenseMatrix,
    panel: usize,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    check_tall(a)?;
    check_panel(a, panel)?;
    drive(&BlockedGeneralized { panel }, a, accumulate_q, counter)
}

struct BlockedGeneralized {
    panel: usize,
}

impl Sweep for BlockedGeneralized {
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
            // Q_pᵀ is needed for the trailing update, so it is R-path work.
            let mut panel_qt = DenseMatrix::identity(rows);
            Generalized::shared(&mut block, Some(&mut panel_qt), &ops);
            r.set_submatrix(c0, c0, &block);

            let rest = n - c0 - width;
            if rest > 0 {
                let trailing = r.submatrix(c0, c0 + width, rows, rest);
                let updated = gemm(&panel_qt, &trailing, GEMM_BLOCK, &ops);
                r.set_submatrix(c0, c0 + width, &updated);
            }
            if let Some(qt) = qt.as_deref_mut() {
                let cols = qt.cols();
                let slab = qt.submatrix(c0, 0, rows, cols);
                let updated = gemm(&panel_qt, &slab, GEMM_BLOCK, &qops);
                qt.set_submatrix(c0, 0, &updated);
            }
        }
        Ok(())
    }
}
