use std::fmt;

use serde::Serialize;

use crate::classify::{ClassificationResult, ResultStatus};
use crate::error::{Error, Result};

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// An exact non-negative rational with a non-zero denominator.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fraction {
    num: u128,
    den: u128,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Report("fraction with zero denominator".into()));
        }
        Ok(Self::reduced(num.into(), den.into()))
    }

    fn reduced(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Self { num: num / g, den: den / g }
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn denominator(&self) -> u128 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Mean of non-empty `items`, exactly.
    pub fn mean(items: &[Fraction]) -> Option<Fraction> {
        let (first, rest) = items.split_first()?;
        let sum = rest.iter().fold(*first, |acc, f| {
            let den = acc.den / gcd(acc.den, f.den) * f.den;
            Self::reduced(acc.num * (den / acc.den) + f.num * (den / f.den), den)
        });
        Some(Self::reduced(sum.num, sum.den * items.len() as u128))
    }

    /// The fraction as a percentage in tenths of a point, rounded half up.
    pub fn percent_tenths(&self) -> i64 {
        ((2000 * self.num + self.den) / (2 * self.den)) as i64
    }
}

impl PartialEq for Fraction {
    fn eq(&self, other: &Self) -> bool {
        self.num * other.den == other.num * self.den
    }
}

impl Eq for Fraction {}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Outcome tallies for one condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub correct: u64,
    pub incorrect: u64,
    pub parse_failures: u64,
    pub backend_failures: u64,
    /// Context requested but classified in baseline mode for lack of a profile.
    pub profile_fallbacks: u64,
}

impl Counts {
    pub fn add(&mut self, r: &ClassificationResult) {
        self.profile_fallbacks += u64::from(r.profile_fallback);
        match r.status {
            ResultStatus::BackendFailure => self.backend_failures += 1,
            ResultStatus::ParseFailure => self.parse_failures += 1,
            ResultStatus::Ok if r.is_correct() => self.correct += 1,
            ResultStatus::Ok => self.incorrect += 1,
        }
    }

    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a ClassificationResult>) -> Self {
        let mut c = Self::default();
        for r in results {
            c.add(r);
        }
        c
    }

    pub fn instances(&self) -> u64 {
        self.correct + self.incorrect + self.parse_failures + self.backend_failures
    }

    /// Parse failures count against accuracy; backend failures are excluded
    /// from the denominator. `None` when nothing was scorable.
    pub fn accuracy(&self) -> Option<Fraction> {
        Fraction::new(self.correct, self.correct + self.incorrect + self.parse_failures).ok()
    }
}

/// Accuracy of a result set; an empty or wholly failed set is a report error.
pub fn accuracy(results: &[ClassificationResult]) -> Result<Fraction> {
    if results.is_empty() {
        return Err(Error::Report("accuracy of an empty result set".into()));
    }
    Counts::from_results(results)
        .accuracy()
        .ok_or_else(|| Error::Report("every result in the set is a backend failure".into()))
}

/// `ctx − base` in tenths of a percentage point, computed exactly and
/// rounded half away from zero, so `improvement(a, b) == -improvement(b, a)`.
pub fn improvement(ctx: Fraction, base: Fraction) -> i64 {
    let num = 1000 * (ctx.num as i128 * base.den as i128 - base.num as i128 * ctx.den as i128);
    let den = (ctx.den * base.den) as i128;
    let mag = (2 * num.abs() + den) / (2 * den);
    (num.signum() * mag) as i64
}

/// `355` → `"35.5"`.
pub fn format_tenths(t: i64) -> String {
    let sign = if t < 0 { "-" } else { "" };
    format!("{sign}{}.{}", t.abs() / 10, t.abs() % 10)
}

/// `385` → `"+38.5"`, `-20` → `"-2.0"`, `0` → `"0.0"`.
pub fn format_signed_tenths(t: i64) -> String {
    if t > 0 {
        format!("+{}", format_tenths(t))
    } else {
        format_tenths(t)
    }
}
