//! Fixed-precision number formatting for the CSV outputs.

/// Formats `x` with `digits` significant digits, in plain notation for
/// moderate exponents and scientific notation otherwise. Trailing zeros are
/// dropped, so `sig(0.5, 12) == "0.5"`.
pub fn sig(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::sig;

    #[test]
    fn formats() {
        assert_eq!(sig(0.5, 12), "0.5");
        assert_eq!(sig(-1.0 / 3.0, 12), "-0.333333333333");
        assert_eq!(sig(123456.0, 12), "123456");
        assert_eq!(sig(1.5e-9, 12), "1.5e-9");
        assert_eq!(sig(2.0e15, 12), "2e15");
        assert_eq!(sig(0.1 + 0.2, 17), "0.30000000000000004");
        assert_eq!(sig(0.0, 12), "0");
    }
}
