//! Shortest round-trip decimal text for `f64`.
//!
//! Plain notation is used for `1e-4 ≤ |x| < 1e15` and scientific notation
//! elsewhere. Both forms parse back to the identical bit pattern and never
//! carry more than 17 significant digits.

/// Formats a finite or non-finite value as a TOML-compatible literal.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0".into() };
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Like [`format_f64`] but always yields a float literal (never a bare integer).
pub fn format_float_literal(x: f64) -> String {
    let s = format_f64(x);
    if s.bytes().any(|c| matches!(c, b'.' | b'e' | b'n' | b'i')) {
        s
    } else {
        s + ".0"
    }
}

/// Number of significant digits in a formatted value.
pub fn significant_digits(text: &str) -> usize {
    let mantissa = text.split(['e', 'E']).next().unwrap_or("");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let trimmed = digits.trim_start_matches('0');
    if trimmed.is_empty() {
        return 1;
    }
    if mantissa.contains('.') {
        trimmed.len()
    } else {
        trimmed.trim_end_matches('0').len().max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_cases() {
        assert_eq!(format_f64(0.0), "0");
        assert_eq!(format_f64(-0.0), "-0.0");
        assert_eq!(format_f64(1.0), "1");
        assert_eq!(format_f64(-0.1122824), "-0.1122824");
        assert_eq!(format_f64(1e-5), "1e-5");
        assert_eq!(format_f64(2.5e15), "2.5e15");
        assert_eq!(format_f64(f64::INFINITY), "inf");
        assert_eq!(format_float_literal(3.0), "3.0");
        assert_eq!(format_float_literal(1e20), "1e20");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        for _ in 0..20_000 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let x = f64::from_bits(state);
            if !x.is_finite() {
                continue;
            }
            let s = format_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
            assert!(significant_digits(&s) <= 17, "{s}");
        }
    }

    #[test]
    fn digit_counting() {
        assert_eq!(significant_digits("0.000123"), 3);
        assert_eq!(significant_digits("-1.2345678901234567e-300"), 17);
        assert_eq!(significant_digits("1500"), 2);
        assert_eq!(significant_digits("0"), 1);
    }
}
