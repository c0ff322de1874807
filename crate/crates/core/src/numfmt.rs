//! Number formatting shared by every writer: 17 significant digits where a
//! value must round-trip, 6 where it is for human eyes.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Formats `x` with 17 significant digits, enough to round-trip any finite
/// binary64 value through decimal text.
pub fn sig17(x: f64) -> String {
    debug_assert!(x.is_finite());
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0.0".into()
        } else {
            "0.0".into()
        };
    }
    format!("{x:.16e}")
}

/// `%.6g`-style formatting: 6 significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A float that serializes into JSON with [`sig17`] digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(sig17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 5e-324, 0.0, 123456.789] {
            let s = sig17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(sig17(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn sig6_matches_printf_g() {
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(-0.5), "-0.5");
        assert_eq!(sig6(2.7e-59), "2.7e-59");
        assert_eq!(sig6(1.23456789e-5), "1.23457e-5");
        assert_eq!(sig6(999999.5), "1e6");
        assert_eq!(sig6(123456.4), "123456");
        assert_eq!(sig6(0.0001), "0.0001");
    }

    #[test]
    fn sig17_in_json() {
        let v = serde_json::to_string(&vec![Sig17(0.1), Sig17(2.0)]).unwrap();
        assert_eq!(v, "[1.0000000000000001e-1,2.0000000000000000e0]");
    }
}
