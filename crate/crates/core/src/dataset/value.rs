use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValueError {
    #[error("malformed result '{0}': expected a number or ND<X")]
    Malformed(String),
    #[error("detection threshold in '{0}' must be positive")]
    NonPositiveThreshold(String),
}

fn parse_decimal(text: &str) -> Option<f64> {
    let t = text.trim();
    // Reject the spellings f64::from_str accepts but a laboratory result never uses.
    let ok = !t.is_empty()
        && t
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !ok {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a `Result` cell: a decimal literal, or `ND<X` (case-insensitive, any
/// internal whitespace) for a non-detect with detection threshold `X`.
///
/// Returns `(value, censored)`.
pub fn parse_value(text: &str) -> Result<(f64, bool), ValueError> {
    let t = text.trim();
    if t.len() >= 2 && t[..2].eq_ignore_ascii_case("nd") {
        let rest = t[2..].trim_start();
        let Some(threshold) = rest.strip_prefix('<') else {
            return Err(ValueError::Malformed(text.to_string()));
        };
        let x = parse_decimal(threshold).ok_or_else(|| ValueError::Malformed(text.to_string()))?;
        if x <= 0.0 {
            return Err(ValueError::NonPositiveThreshold(text.to_string()));
        }
        return Ok((x, true));
    }
    parse_decimal(t)
        .map(|v| (v, false))
        .ok_or_else(|| ValueError::Malformed(text.to_string()))
}

/// Inverse of [`parse_value`] using shortest round-trip float formatting.
pub(crate) fn format_value(value: f64, censored: bool) -> String {
    if censored {
        format!("ND<{value}")
    } else {
        format!("{value}")
    }
}
