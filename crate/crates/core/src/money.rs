//! Token amounts with checked arithmetic.

use crate::canonical::{Canonical, DecodeError, Reader, Writer};

/// A non-negative token amount. All arithmetic is checked; overflow
/// surfaces as `None` and must be handled by the caller.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn new(amount: u64) -> Self {
        Money(amount)
    }

    pub const fn amount(&self) -> u64 {
        self.0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }

    pub fn checked_sub(self, other: Money) -> Option<Money> {
        self.0.checked_sub(other.0).map(Money)
    }

    pub fn checked_mul(self, k: u64) -> Option<Money> {
        self.0.checked_mul(k).map(Money)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }

    /// Checked sum over an iterator; `None` on overflow.
    pub fn sum<I: IntoIterator<Item = Money>>(iter: I) -> Option<Money> {
        let mut total = Money::ZERO;
        for m in iter {
            total = total.checked_add(m)?;
        }
        Some(total)
    }
}

impl std::fmt::Display for Money {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Canonical for Money {
    fn encode(&self, w: &mut Writer) {
        w.u64(self.0);
    }

    fn decode(r: &mut Reader) -> Result<Self, DecodeError> {
        Ok(Money(r.u64()?))
    }
}
