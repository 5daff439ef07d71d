//! Fixed-precision number formatting shared by the CSV and JSON emitters.

/// Significant digits used by every text output.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` with `digits` significant digits, `%g` style: plain notation
/// for moderate exponents, scientific otherwise, trailing zeros removed.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `format_sig(x, SIG_DIGITS)`.
pub fn fmt12(x: f64) -> String {
    format_sig(x, SIG_DIGITS)
}

/// Rounds to `SIG_DIGITS` significant digits so that JSON and CSV emit the same value.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        fmt12(x).parse().unwrap_or(x)
    } else {
        x
    }
}
