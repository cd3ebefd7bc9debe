//! Text output helpers: every float is printed with 6 significant digits.

/// `%g`-style rendering with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..6).contains(&exp) {
        return format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    trim_zeros(&format!("{:.*}", (5 - exp) as usize, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Joins fields with commas; fields never contain commas.
pub fn csv_line<I: IntoIterator<Item = String>>(fields: I) -> String {
    let mut s = fields.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.01), "0.01");
        assert_eq!(sig6(-0.123456789), "-0.123457");
        assert_eq!(sig6(123456789.0), "1.23457e+08");
        assert_eq!(sig6(999999.7), "1e+06");
        assert_eq!(sig6(1.5e-7), "1.5e-07");
        assert_eq!(sig6(2.0f64.sqrt()), "1.41421");
    }
}
