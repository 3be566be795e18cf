//! Fixed 17-significant-digit decimal rendering.
//!
//! Seventeen digits round-trip every `f64`. Output is plain decimal (no
//! exponent) so CSV consumers need no scientific-notation support.

use serde::Serializer;
use serde_json::value::RawValue;

/// Renders `v` with exactly 17 significant digits in decimal notation.
///
/// Non-finite values render as `NaN`, `inf` and `-inf`.
pub fn sig17(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    debug_assert_eq!(digits.len(), 17);

    let body = if exp >= 16 {
        let mut s = digits;
        s.extend(std::iter::repeat_n('0', (exp - 16) as usize));
        s
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("0.{zeros}{digits}")
    };
    format!("{sign}{body}")
}

/// JSON rendering of a number: `sig17` for finite values, `null` otherwise.
pub fn json_number(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() { sig17(v) } else { "null".to_string() };
    RawValue::from_string(text).expect("decimal literal is valid JSON")
}

/// `serialize_with` adapter emitting a 17-digit JSON number.
///
/// Only meaningful with `serde_json`; other serializers see the raw-value
/// wrapper struct.
pub fn serialize_sig17<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&json_number(*v), s)
}
