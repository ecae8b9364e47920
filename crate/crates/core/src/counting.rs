//! Arithmetic-operation instrumentation and closed-form operation counts.
//!
//! Kernels are generic over [`Arith`]. Passing an [`OpCounter`] routes every
//! scalar multiply, add, divide and square root through a tally; passing
//! [`Uncounted`] compiles down to plain floating-point arithmetic.
//!
//! Counting convention used for the closed-form comparisons: "multiplications"
//! means `mul + div`. Square roots and additions/subtractions are tallied
//! separately and never enter the comparison.

use std::cell::Cell;

use crate::error::{Error, Result};

/// Which part of a factorization a counter is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Channel {
    /// Work that produces `R` (the trailing-matrix updates).
    #[default]
    RPath,
    /// Work spent accumulating the orthogonal factor `Q`.
    QPath,
}

/// Scalar arithmetic layer used inside every kernel.
pub trait Arith {
    fn mul(&self, a: f64, b: f64) -> f64;
    fn add(&self, a: f64, b: f64) -> f64;
    fn sub(&self, a: f64, b: f64) -> f64;
    fn div(&self, a: f64, b: f64) -> f64;
    fn sqrt(&self, a: f64) -> f64;
}

/// Zero-sized pass-through: no bookkeeping at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uncounted;

impl Arith for Uncounted {
    #[inline(always)]
    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline(always)]
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline(always)]
    fn sub(&self, a: f64, b: f64) -> f64 {
        a - b
    }
    #[inline(always)]
    fn div(&self, a: f64, b: f64) -> f64 {
        a / b
    }
    #[inline(always)]
    fn sqrt(&self, a: f64) -> f64 {
        a.sqrt()
    }
}

/// Tallies of the scalar operations performed by an instrumented run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounter {
    pub mul: u64,
    pub add: u64,
    pub div: u64,
    pub sqrt: u64,
    pub channel: Channel,
}

impl OpCounter {
    pub fn new(channel: Channel) -> Self {
        Self {
            channel,
            ..Self::default()
        }
    }

    /// Multiplies plus divides: the quantity compared against the closed forms.
    pub fn muldiv(&self) -> u64 {
        self.mul + self.div
    }

    pub fn total(&self) -> u64 {
        self.mul + self.add + self.div + self.sqrt
    }

    /// Fieldwise sum. The channel of `self` is kept.
    pub fn merged(&self, other: &OpCounter) -> OpCounter {
        OpCounter {
            mul: self.mul + other.mul,
            add: self.add + other.add,
            div: self.div + other.div,
            sqrt: self.sqrt + other.sqrt,
            channel: self.channel,
        }
    }

    pub fn merge(&mut self, other: &OpCounter) {
        *self = self.merged(other);
    }
}

/// Interior-mutable tally that kernels count into; flushed into an
/// [`OpCounter`] when the kernel returns.
#[derive(Debug, Default)]
pub struct Tally {
    mul: Cell<u64>,
    add: Cell<u64>,
    div: Cell<u64>,
    sqrt: Cell<u64>,
}

impl Tally {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the tallies to `counter` and resets them.
    pub fn flush_into(&self, counter: &mut OpCounter) {
        counter.mul += self.mul.take();
        counter.add += self.add.take();
        counter.div += self.div.take();
        counter.sqrt += self.sqrt.take();
    }

    pub fn snapshot(&self, channel: Channel) -> OpCounter {
        OpCounter {
            mul: self.mul.get(),
            add: self.add.get(),
            div: self.div.get(),
            sqrt: self.sqrt.get(),
            channel,
        }
    }
}

#[inline(always)]
fn bump(c: &Cell<u64>) {
    c.set(c.get() + 1);
}

impl Arith for Tally {
    #[inline]
    fn mul(&self, a: f64, b: f64) -> f64 {
        bump(&self.mul);
        a * b
    }
    #[inline]
    fn add(&self, a: f64, b: f64) -> f64 {
        bump(&self.add);
        a + b
    }
    #[inline]
    fn sub(&self, a: f64, b: f64) -> f64 {
        bump(&self.add);
        a - b
    }
    #[inline]
    fn div(&self, a: f64, b: f64) -> f64 {
        bump(&self.div);
        a / b
    }
    #[inline]
    fn sqrt(&self, a: f64) -> f64 {
        bump(&self.sqrt);
        a.sqrt()
    }
}

impl<T: Arith + ?Sized> Arith for &T {
    #[inline(always)]
    fn mul(&self, a: f64, b: f64) -> f64 {
        (**self).mul(a, b)
    }
    #[inline(always)]
    fn add(&self, a: f64, b: f64) -> f64 {
        (**self).add(a, b)
    }
    #[inline(always)]
    fn sub(&self, a: f64, b: f64) -> f64 {
        (**self).sub(a, b)
    }
    #[inline(always)]
    fn div(&self, a: f64, b: f64) -> f64 {
        (**self).div(a, b)
    }
    #[inline(always)]
    fn sqrt(&self, a: f64) -> f64 {
        (**self).sqrt(a)
    }
}

/// Expands `$body` once with `$ops` bound to a [`Tally`] that is flushed into
/// the supplied counter and once with it bound to [`Uncounted`], picking the
/// arm from the `Option`.
macro_rules! with_ops {
    ($counter:expr, |$ops:ident| $body:expr) => {
        match $counter {
            Some(counter) => {
                let tally = $crate::counting::Tally::new();
                let out = {
                    let $ops = &tally;
                    $body
                };
                tally.flush_into(counter);
                out
            }
            None => {
                let $ops = &$crate::counting::Uncounted;
                $body
            }
        }
    };
}
pub(crate) use with_ops;

/// Multiplication count of classical bottom-up Givens QR on a square `n×n`
/// matrix: `(4n³ − 4n) / 3`.
pub fn gr_count_formula(n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let wide = n as u128;
    wide.checked_mul(wide)
        .and_then(|v| v.checked_mul(wide))
        .and_then(|v| v.checked_mul(4))
        .map(|v| (v - 4 * wide) / 3)
        .and_then(|v| u64::try_from(v).ok())
        .ok_or(Error::CountOverflow { n })
}

/// Multiplication count of column-wise Givens QR on a square `n×n` matrix:
/// `(2n³ + 3n² − 5n) / 2`.
pub fn cgr_count_formula(n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let wide = n as u128;
    wide.checked_mul(wide)
        .and_then(|sq| sq.checked_mul(wide).map(|cube| (sq, cube)))
        .and_then(|(sq, cube)| cube.checked_mul(2)?.checked_add(3 * sq))
        .map(|v| (v - 5 * wide) / 2)
        .and_then(|v| u64::try_from(v).ok())
        .ok_or(Error::CountOverflow { n })
}

/// `3(2n + 5) / (8(n + 1))`, the column-wise to classical multiplication ratio.
/// Tends to 3/4 from above.
pub fn alpha_ratio(n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("alpha_ratio needs n >= 2".into()));
    }
    let n = n as f64;
    Ok(3.0 * (2.0 * n + 5.0) / (8.0 * (n + 1.0)))
}

/// Instrumentable algorithms with a closed-form multiplication count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuditAlgorithm {
    Gr,
    Cgr,
    Ggr,
}

impl AuditAlgorithm {
    pub const ALL: [AuditAlgorithm; 3] = [AuditAlgorithm::Gr, AuditAlgorithm::Cgr, AuditAlgorithm::Ggr];

    pub fn name(self) -> &'static str {
        match self {
            AuditAlgorithm::Gr => "gr",
            AuditAlgorithm::Cgr => "cgr",
            AuditAlgorithm::Ggr => "ggr",
        }
    }

    /// Closed form the run is compared against. GGR shares the CGR count.
    pub fn formula(self, n: u64) -> Result<u64> {
        match self {
            AuditAlgorithm::Gr => gr_count_formula(n),
            AuditAlgorithm::Cgr | AuditAlgorithm::Ggr => cgr_count_formula(n),
        }
    }
}

impl std::fmt::Display for AuditAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AuditAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("no closed-form count for `{s}`")))
    }
}

/// Relative band used for the column-wise counts.
pub const AUDIT_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    pub algorithm: AuditAlgorithm,
    pub n: u64,
    pub measured: OpCounter,
    pub formula: u64,
    /// `measured.muldiv() / formula`; 1 when both are zero.
    pub ratio: f64,
    pub exact_match: bool,
    pub within_tolerance: bool,
}

/// Factorizes a seeded random `n×n` matrix with counting on, `Q` off, and
/// compares the R-path multiply+divide count to the closed form.
pub fn audit(algorithm: AuditAlgorithm, n: u64, seed: u64) -> Result<Audit> {
    let formula = algorithm.formula(n)?;
    let size = usize::try_from(n).map_err(|_| Error::CountOverflow { n })?;
    let a = crate::matcore::DenseMatrix::random_uniform(size, size, seed);
    let mut measured = OpCounter::new(Channel::RPath);
    let run = match algorithm {
        AuditAlgorithm::Gr => crate::rotations::gr_factorize,
        AuditAlgorithm::Cgr => crate::ggr::cgr_factorize,
        AuditAlgorithm::Ggr => crate::ggr::ggr_factorize,
    };
    run(&a, false, Some(&mut measured))?;
    let got = measured.muldiv();
    let ratio = if formula == 0 {
        if got == 0 { 1.0 } else { f64::INFINITY }
    } else {
        got as f64 / formula as f64
    };
    Ok(Audit {
        algorithm,
        n,
        measured,
        formula,
        ratio,
        exact_match: got == formula,
        within_tolerance: (ratio - 1.0).abs() <= AUDIT_TOLERANCE,
    })
}
