//! Classical Givens-rotation QR.
//!
//! Each rotation zeroes one entry against the entry directly above it.
//! Rotations are applied bottom-up within a column, columns left to right:
//! `(m,1), (m−1,1), …, (2,1)`, then column 2, and so on.

use crate::counting::{with_ops, Arith, OpCounter};
use crate::error::{Error, Result};
use crate::factorization::{drive, FactorizationResult, Sweep};
use crate::matcore::DenseMatrix;

// Beyond these magnitudes a² + b² over- or underflows; `t` is then formed
// from scaled operands.
const SCALE_ABOVE: f64 = 1e154;
const SCALE_BELOW: f64 = 1e-154;

/// Cosine/sine pair with `t = √(a² + b²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensCoeff {
    pub c: f64,
    pub s: f64,
    pub t: f64,
}

impl GivensCoeff {
    pub const IDENTITY: GivensCoeff = GivensCoeff {
        c: 1.0,
        s: 0.0,
        t: 0.0,
    };
}

/// Rotation that maps `(a, b)` to `(t, 0)`. `(0, 0)` yields the identity.
pub fn givens_coeffs(a: f64, b: f64) -> GivensCoeff {
    givens_with(a, b, crate::counting::Uncounted)
}

pub(crate) fn givens_with<A: Arith>(a: f64, b: f64, ops: A) -> GivensCoeff {
    let big = a.abs().max(b.abs());
    if big == 0.0 {
        return GivensCoeff::IDENTITY;
    }
    let t = if !(SCALE_BELOW..=SCALE_ABOVE).contains(&big) {
        let (sa, sb) = (ops.div(a, big), ops.div(b, big));
        let ss = ops.add(ops.mul(sa, sa), ops.mul(sb, sb));
        ops.mul(big, ops.sqrt(ss))
    } else {
        let ss = ops.add(ops.mul(a, a), ops.mul(b, b));
        ops.sqrt(ss)
    };
    GivensCoeff {
        c: ops.div(a, t),
        s: ops.div(b, t),
        t,
    }
}

/// Applies `[[c, s], [−s, c]]` to rows `upper` and `lower` of `a`, columns
/// `from_col..`.
pub fn apply_givens_rows(
    a: &mut DenseMatrix,
    upper: usize,
    lower: usize,
    g: GivensCoeff,
    from_col: usize,
) -> Result<()> {
    if upper >= lower {
        return Err(Error::InvalidArgument(format!(
            "upper row {upper} must be above lower row {lower}"
        )));
    }
    if lower >= a.rows() {
        return Err(Error::IndexOutOfBounds {
            what: "lower_row",
            index: lower,
            limit: a.rows(),
        });
    }
    if from_col > a.cols() {
        return Err(Error::IndexOutOfBounds {
            what: "from_col",
            index: from_col,
            limit: a.cols(),
        });
    }
    rotate_rows(a, upper, lower, g, from_col, crate::counting::Uncounted);
    Ok(())
}

#[inline]
pub(crate) fn rotate_rows<A: Arith>(
    a: &mut DenseMatrix,
    upper: usize,
    lower: usize,
    g: GivensCoeff,
    from_col: usize,
    ops: A,
) {
    for j in from_col..a.cols() {
        let col = a.col_mut(j);
        let (u, l) = (col[upper], col[lower]);
        col[upper] = ops.add(ops.mul(g.c, u), ops.mul(g.s, l));
        col[lower] = ops.sub(ops.mul(g.c, l), ops.mul(g.s, u));
    }
}

struct Classical;

impl Sweep for Classical {
    fn sweep<A: Arith, B: Arith>(
        &self,
        r: &mut DenseMatrix,
        mut qt: Option<&mut DenseMatrix>,
        ops: A,
        qops: B,
    ) -> Result<()> {
        let (m, n) = r.shape();
        for j in 0..n.min(m.saturating_sub(1)) {
            for lower in ((j + 1)..m).rev() {
                let upper = lower - 1;
                let b = r[(lower, j)];
                if b == 0.0 {
                    continue;
                }
                let g = givens_with(r[(upper, j)], b, &ops);
                // The annihilated pair is set directly: (t, 0).
                r[(upper, j)] = g.t;
                r[(lower, j)] = 0.0;
                rotate_rows(r, upper, lower, g, j + 1, &ops);
                if let Some(qt) = qt.as_deref_mut() {
                    rotate_rows(qt, upper, lower, g, 0, &qops);
                }
            }
        }
        Ok(())
    }
}

/// Classical Givens QR. `R` comes back with a nonnegative diagonal.
pub fn gr_factorize(
    a: &DenseMatrix,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    drive(&Classical, a, accumulate_q, counter)
}

/// Same as [`givens_coeffs`] but counted.
pub fn givens_coeffs_counted(a: f64, b: f64, counter: Option<&mut OpCounter>) -> GivensCoeff {
    with_ops!(counter, |ops| givens_with(a, b, ops))
}
