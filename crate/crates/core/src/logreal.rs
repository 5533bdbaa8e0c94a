//! Signed log-space reals.
//!
//! Partition values span thousands of orders of magnitude (`Z(n, beta)` is
//! of order `exp(-2*beta*n^2/3)`), so every probability-like quantity in
//! this crate is carried as a sign plus the log of its magnitude and only
//! converted to a plain float at API edges.

use crate::math;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// A real number stored as `(sign, ln |x|)`.
///
/// Multiplication adds log-magnitudes; addition goes through log-sum-exp
/// anchored at the larger magnitude, so the representation neither
/// overflows nor loses the large-scale exponent for log-magnitudes up to
/// about `1e6`.
#[derive(Clone, Copy, Debug)]
pub struct LogReal {
    sign: i8,
    logmag: f64,
}

impl LogReal {
    pub const ZERO: LogReal = LogReal {
        sign: 0,
        logmag: f64::NEG_INFINITY,
    };
    pub const ONE: LogReal = LogReal {
        sign: 1,
        logmag: 0.0,
    };

    /// `exp(logmag)` as a positive value.
    #[inline]
    pub fn from_ln(logmag: f64) -> Self {
        LogReal { sign: 1, logmag }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            LogReal::ZERO
        } else if x > 0.0 {
            LogReal {
                sign: 1,
                logmag: math::ln(x),
            }
        } else {
            LogReal {
                sign: -1,
                logmag: math::ln(-x),
            }
        }
    }

    #[inline]
    pub fn sign(&self) -> i8 {
        self.sign
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// Natural log of the magnitude; `-inf` for zero.
    #[inline]
    pub fn ln_abs(&self) -> f64 {
        if self.sign == 0 {
            f64::NEG_INFINITY
        } else {
            self.logmag
        }
    }

    /// Natural log of a positive value.
    ///
    /// Panics if the value is zero or negative; callers converting
    /// probability-like quantities should check the sign first.
    #[inline]
    pub fn ln(&self) -> f64 {
        assert!(self.sign > 0, "ln of non-positive LogReal");
        self.logmag
    }

    /// Convert to `f64`, saturating to `0` / `±inf` outside the
    /// representable range.
    pub fn to_f64(&self) -> f64 {
        match self.sign {
            0 => 0.0,
            1 => math::exp(self.logmag),
            _ => -math::exp(self.logmag),
        }
    }

    pub fn abs(&self) -> Self {
        LogReal {
            sign: if self.sign == 0 { 0 } else { 1 },
            logmag: self.logmag,
        }
    }

    /// Square root of a non-negative value.
    pub fn sqrt(&self) -> Self {
        assert!(self.sign >= 0, "sqrt of negative LogReal");
        if self.sign == 0 {
            LogReal::ZERO
        } else {
            LogReal::from_ln(0.5 * self.logmag)
        }
    }

    /// Divide by a positive count, e.g. when averaging replicas.
    pub fn div_count(&self, k: u64) -> Self {
        assert!(k > 0);
        if self.sign == 0 {
            LogReal::ZERO
        } else {
            LogReal {
                sign: self.sign,
                logmag: self.logmag - math::ln(k as f64),
            }
        }
    }
}

impl Add for LogReal {
    type Output = LogReal;
    fn add(self, rhs: LogReal) -> LogReal {
        if self.sign == 0 {
            return rhs;
        }
        if rhs.sign == 0 {
            return self;
        }
        let (hi, lo) = if self.logmag >= rhs.logmag {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let d = lo.logmag - hi.logmag; // <= 0
        if self.sign == rhs.sign {
            LogReal {
                sign: hi.sign,
                logmag: hi.logmag + math::ln_1p(math::exp(d)),
            }
        } else if d == 0.0 {
            // Exact cancellation of equal magnitudes.
            LogReal::ZERO
        } else {
            let m = math::ln_1p(-math::exp(d));
            LogReal {
                sign: hi.sign,
                logmag: hi.logmag + m,
            }
        }
    }
}

impl AddAssign for LogReal {
    fn add_assign(&mut self, rhs: LogReal) {
        *self = *self + rhs;
    }
}

impl Sub for LogReal {
    type Output = LogReal;
    fn sub(self, rhs: LogReal) -> LogReal {
        self + (-rhs)
    }
}

impl Neg for LogReal {
    type Output = LogReal;
    fn neg(self) -> LogReal {
        LogReal {
            sign: -self.sign,
            logmag: self.logmag,
        }
    }
}

impl Mul for LogReal {
    type Output = LogReal;
    fn mul(self, rhs: LogReal) -> LogReal {
        if self.sign == 0 || rhs.sign == 0 {
            return LogReal::ZERO;
        }
        LogReal {
            sign: self.sign * rhs.sign,
            logmag: self.logmag + rhs.logmag,
        }
    }
}

impl Div for LogReal {
    type Output = LogReal;
    fn div(self, rhs: LogReal) -> LogReal {
        assert!(rhs.sign != 0, "division by zero LogReal");
        if self.sign == 0 {
            return LogReal::ZERO;
        }
        LogReal {
            sign: self.sign * rhs.sign,
            logmag: self.logmag - rhs.logmag,
        }
    }
}

impl PartialEq for LogReal {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for LogReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.sign, other.sign) {
            (0, 0) => Some(Ordering::Equal),
            (a, b) if a < b => Some(Ordering::Less),
            (a, b) if a > b => Some(Ordering::Greater),
            (1, _) => self.logmag.partial_cmp(&other.logmag),
            _ => other.logmag.partial_cmp(&self.logmag),
        }
    }
}

impl fmt::Display for LogReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            1 => write!(f, "exp({})", self.logmag),
            _ => write!(f, "-exp({})", self.logmag),
        }
    }
}
