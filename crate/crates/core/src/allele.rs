//! STR allele designations.
//!
//! A designation is a repeat count with up to two decimal digits of partial
//! repeat (`9.3`, `10`, `22.25`). Values are held as exact hundredths so that
//! ladder arithmetic ("one repeat above") and equality never go through
//! floating point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Hundredths of a repeat unit.
const SCALE: i32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Allele(i32);

impl Allele {
    /// Builds a designation from hundredths of a repeat (`930` is `9.3`).
    pub fn from_hundredths(hundredths: i32) -> Result<Self, Error> {
        if hundredths <= 0 {
            return Err(Error::InvalidAllele(format_hundredths(hundredths)));
        }
        Ok(Allele(hundredths))
    }

    /// Whole-repeat designation.
    pub fn repeats(n: u32) -> Self {
        Allele(n as i32 * SCALE)
    }

    pub fn hundredths(self) -> i32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    /// The ladder position one full repeat above.
    pub fn one_up(self) -> Allele {
        Allele(self.0 + SCALE)
    }

    /// The back-stutter position one full repeat below, if it is still a
    /// positive designation.
    pub fn one_down(self) -> Option<Allele> {
        (self.0 > SCALE).then(|| Allele(self.0 - SCALE))
    }

    /// Partial-repeat remainder; alleles are ladder-adjacent only within the
    /// same class.
    pub fn ladder_class(self) -> i32 {
        self.0.rem_euclid(SCALE)
    }
}

fn format_hundredths(v: i32) -> String {
    let sign = if v < 0 { "-" } else { "" };
    let v = v.unsigned_abs();
    let whole = v / SCALE as u32;
    let frac = v % SCALE as u32;
    if frac == 0 {
        format!("{sign}{whole}")
    } else if frac % 10 == 0 {
        format!("{sign}{whole}.{}", frac / 10)
    } else {
        format!("{sign}{whole}.{frac:02}")
    }
}

impl fmt::Display for Allele {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_hundredths(self.0))
    }
}

impl FromStr for Allele {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::InvalidAllele(s.to_string());
        let t = s.trim();
        let (whole, frac) = match t.split_once('.') {
            Some((w, f)) => (w, f),
            None => (t, ""),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) || (t.contains('.') && frac.is_empty()) {
            return Err(bad());
        }
        // Trailing zeros beyond two digits carry no information.
        let frac = frac.trim_end_matches('0');
        if frac.len() > 2 {
            return Err(bad());
        }
        let whole: i32 = whole.parse().map_err(|_| bad())?;
        let frac_val: i32 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i32>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        let total = whole
            .checked_mul(SCALE)
            .and_then(|w| w.checked_add(frac_val))
            .ok_or_else(bad)?;
        Allele::from_hundredths(total).map_err(|_| bad())
    }
}

impl Serialize for Allele {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Allele {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_whole_and_partial_repeats() {
        assert_eq!("10".parse::<Allele>().unwrap().hundredths(), 1000);
        assert_eq!("9.3".parse::<Allele>().unwrap().hundredths(), 930);
        assert_eq!("9.30".parse::<Allele>().unwrap().hundredths(), 930);
        assert_eq!("22.25".parse::<Allele>().unwrap().hundredths(), 2225);
        assert_eq!(" 16 ".parse::<Allele>().unwrap(), Allele::repeats(16));
    }

    #[test]
    fn rejects_malformed() {
        for s in ["", "x", "9.", ".3", "9.333", "-1", "0", "0.0", "1e2", "9,3"] {
            assert!(s.parse::<Allele>().is_err(), "{s} should not parse");
        }
    }

    #[test]
    fn ladder_moves_by_whole_repeats() {
        let a: Allele = "9.3".parse().unwrap();
        assert_eq!(a.one_up().to_string(), "10.3");
        assert_eq!(a.one_down().unwrap().to_string(), "8.3");
        assert_eq!(a.ladder_class(), 30);
        assert_eq!(Allele::repeats(1).one_down(), None);
    }

    proptest! {
        #[test]
        fn display_round_trips(h in 1i32..10_000) {
            let a = Allele::from_hundredths(h).unwrap();
            prop_assert_eq!(a.to_string().parse::<Allele>().unwrap(), a);
        }
    }
}
