//! Shared plumbing for every QR routine: the result type, the algorithm
//! registry, sign normalization and the counted/uncounted driver.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::counting::{Arith, Channel, OpCounter, Tally, Uncounted};
use crate::error::{Error, Result};
use crate::matcore::DenseMatrix;
use crate::{ggr, householder, rotations};

/// Panel width used by the blocked routines when none is given.
pub const DEFAULT_PANEL: usize = 8;

#[derive(Debug, Clone)]
pub struct FactorizationResult {
    /// Upper triangular `m×n` factor with nonnegative diagonal.
    pub r: DenseMatrix,
    /// Orthogonal `m×m` factor, when accumulation was requested.
    pub q: Option<DenseMatrix>,
    /// Operations spent producing `R`. All zero for an uninstrumented run.
    pub counts: OpCounter,
    /// Operations spent accumulating `Q`, tallied separately.
    pub q_counts: OpCounter,
    /// Wall-clock seconds.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Gr,
    Cgr,
    Ggr,
    GgrBlocked,
    Hqr2,
    Hqrf,
    Mht,
    MhtBlocked,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Gr,
        Algorithm::Cgr,
        Algorithm::Ggr,
        Algorithm::GgrBlocked,
        Algorithm::Hqr2,
        Algorithm::Hqrf,
        Algorithm::Mht,
        Algorithm::MhtBlocked,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gr => "gr",
            Algorithm::Cgr => "cgr",
            Algorithm::Ggr => "ggr",
            Algorithm::GgrBlocked => "ggr_blocked",
            Algorithm::Hqr2 => "hqr2",
            Algorithm::Hqrf => "hqrf",
            Algorithm::Mht => "mht",
            Algorithm::MhtBlocked => "mht_blocked",
        }
    }

    pub fn is_blocked(self) -> bool {
        matches!(
            self,
            Algorithm::GgrBlocked | Algorithm::Hqrf | Algorithm::MhtBlocked
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorizeOptions {
    pub accumulate_q: bool,
    /// Panel width for the blocked routines; ignored by the others.
    pub panel: Option<usize>,
}

impl Default for FactorizeOptions {
    fn default() -> Self {
        Self {
            accumulate_q: true,
            panel: None,
        }
    }
}

/// Runs `algorithm` on `a`.
pub fn factorize(
    algorithm: Algorithm,
    a: &DenseMatrix,
    options: FactorizeOptions,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    let q = options.accumulate_q;
    let panel = || options.panel.unwrap_or(DEFAULT_PANEL).min(a.cols().max(1));
    match algorithm {
        Algorithm::Gr => rotations::gr_factorize(a, q, counter),
        Algorithm::Cgr => ggr::cgr_factorize(a, q, counter),
        Algorithm::Ggr => ggr::ggr_factorize(a, q, counter),
        Algorithm::GgrBlocked => ggr::ggr_blocked_factorize(a, panel(), q, counter),
        Algorithm::Hqr2 => householder::hqr2_factorize(a, q, counter),
        Algorithm::Hqrf => householder::hqrf_blocked_factorize(a, panel(), q, counter),
        Algorithm::Mht => householder::mht_factorize(a, q, counter),
        Algorithm::MhtBlocked => householder::mht_blocked_factorize(a, panel(), q, counter),
    }
}

/// One algorithm's in-place reduction of `r` to upper triangular form.
///
/// `qt`, when present, starts as the identity and must receive every
/// transform applied to `r`, so that on return `qt · A = r`.
pub(crate) trait Sweep {
    fn sweep<A: Arith, B: Arith>(
        &self,
        r: &mut DenseMatrix,
        qt: Option<&mut DenseMatrix>,
        ops: A,
        qops: B,
    ) -> Result<()>;
}

pub(crate) fn check_tall(a: &DenseMatrix) -> Result<()> {
    if a.rows() < a.cols() {
        return Err(Error::UnsupportedShape {
            rows: a.rows(),
            cols: a.cols(),
            reason: "QR needs rows >= cols",
        });
    }
    Ok(())
}

pub(crate) fn check_panel(a: &DenseMatrix, panel: usize) -> Result<()> {
    if panel == 0 || panel > a.cols() {
        return Err(Error::InvalidPanel {
            panel,
            cols: a.cols(),
        });
    }
    Ok(())
}

/// Shape check, timing, counter plumbing, sign normalization and `Q = Qtᵀ`.
pub(crate) fn drive<S: Sweep>(
    sweep: &S,
    a: &DenseMatrix,
    accumulate_q: bool,
    counter: Option<&mut OpCounter>,
) -> Result<FactorizationResult> {
    check_tall(a)?;
    let start = Instant::now();
    let mut r = a.clone();
    let mut qt = accumulate_q.then(|| DenseMatrix::identity(a.rows()));
    let mut counts = OpCounter::new(Channel::RPath);
    let mut q_counts = OpCounter::new(Channel::QPath);
    match counter {
        Some(c) => {
            let (tally, q_tally) = (Tally::new(), Tally::new());
            sweep.sweep(&mut r, qt.as_mut(), &tally, &q_tally)?;
            tally.flush_into(&mut counts);
            q_tally.flush_into(&mut q_counts);
            c.merge(&counts);
        }
        None => sweep.sweep(&mut r, qt.as_mut(), Uncounted, Uncounted)?,
    }
    normalize_signs(&mut r, qt.as_mut());
    Ok(FactorizationResult {
        r,
        q: qt.map(|t| t.transpose()),
        counts,
        q_counts,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Flips row `i` of `R` (and of `Qᵀ`) wherever `R(i, i) < 0`.
pub fn normalize_signs(r: &mut DenseMatrix, mut qt: Option<&mut DenseMatrix>) {
    for i in 0..r.rows().min(r.cols()) {
        if r[(i, i)] < 0.0 {
            r.negate_row(i);
            if let Some(qt) = qt.as_deref_mut() {
                qt.negate_row(i);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_roundtrip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("lu".parse::<Algorithm>().is_err());
    }

    #[test]
    fn sign_normalization_flips_rows() {
        let mut r = DenseMatrix::from_rows(&[[-2.0, 1.0], [0.0, 3.0]]).unwrap();
        let mut qt = DenseMatrix::identity(2);
        normalize_signs(&mut r, Some(&mut qt));
        assert_eq!(r, DenseMatrix::from_rows(&[[2.0, -1.0], [0.0, 3.0]]).unwrap());
        assert_eq!(qt[(0, 0)], -1.0);
    }

    #[test]
    fn every_algorithm_rejects_wide_input() {
        let a = DenseMatrix::random_uniform(3, 5, 1);
        for alg in Algorithm::ALL {
            let err = factorize(alg, &a, FactorizeOptions::default(), None).unwrap_err();
            assert!(matches!(err, Error::UnsupportedShape { .. }), "{alg}");
        }
    }
}
