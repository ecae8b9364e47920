use super::{gemm, DenseMatrix, GEMM_BLOCK};
use crate::counting::Uncounted;
use crate::error::{Error, Result};

/// Quality measures of a computed factorization `A ≈ Q·R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `‖A − QR‖_F / ‖A‖_F` (absolute when `A = 0`).
    pub reconstruction_residual: f64,
    /// `‖QᵀQ − I‖_F`.
    pub orthogonality_defect: f64,
    /// `max |R(i, j)|` over `i > j`.
    pub max_lower_triangle: f64,
}

pub fn metrics(a: &DenseMatrix, q: &DenseMatrix, r: &DenseMatrix) -> Result<Metrics> {
    let (m, n) = a.shape();
    if q.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            op: "metrics (Q)",
            left: a.shape(),
            right: q.shape(),
        });
    }
    if r.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            op: "metrics (R)",
            left: a.shape(),
            right: r.shape(),
        });
    }

    let qr = gemm(q, r, GEMM_BLOCK, Uncounted);
    let diff: f64 = a
        .data()
        .iter()
        .zip(qr.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let a_norm = a.frobenius_norm();
    let residual = if a_norm > 0.0 { diff / a_norm } else { diff };

    let qtq = gemm(&q.transpose(), q, GEMM_BLOCK, Uncounted);
    let mut orth = 0.0;
    for j in 0..m {
        for i in 0..m {
            let e = qtq[(i, j)] - if i == j { 1.0 } else { 0.0 };
            orth += e * e;
        }
    }

    Ok(Metrics {
        reconstruction_residual: residual,
        orthogonality_defect: orth.sqrt(),
        max_lower_triangle: r.max_lower_triangle(),
    })
}
