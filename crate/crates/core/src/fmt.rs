//! Fixed-precision number formatting for every text artifact the crate writes.

/// Formats `x` with 10 significant digits, trailing zeros trimmed.
pub fn sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if x.is_nan() {
        return "NaN".to_owned();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_owned();
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_owned()))
    }
}

fn trim(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_owned()
}

#[cfg(test)]
mod tests {
    use super::sig10;

    #[test]
    fn formats() {
        assert_eq!(sig10(0.0), "0");
        assert_eq!(sig10(1.0), "1");
        assert_eq!(sig10(0.05), "0.05");
        assert_eq!(sig10(1.959_963_984_540_054), "1.959963985");
        assert_eq!(sig10(-0.012_533_469_508), "-0.01253346951");
        assert_eq!(sig10(123_456.789_012_34), "123456.789");
        assert_eq!(sig10(2.2e-308), "2.2e-308");
        assert_eq!(sig10(6.02214076e23), "6.02214076e23");
        assert_eq!(sig10(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn parses_back_to_ten_digits() {
        for &x in &[0.1 + 0.2, std::f64::consts::PI, -1e-7 / 3.0, 7.0e12 / 3.0] {
            let back: f64 = sig10(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-9, "{x}");
        }
    }
}
