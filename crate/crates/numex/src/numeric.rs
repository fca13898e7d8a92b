//! Exact decimal comparison for attribute values.
//!
//! Attribute values travel through the pipeline as strings. Matching a token
//! against a value must ignore leading and trailing zeros ("12.30" names the
//! same quantity as "12.3") without introducing any rounding tolerance, so
//! comparison works on normalized digit strings rather than floats.

/// A decimal number reduced to a canonical digit form.
///
/// `int_part` has no leading zeros (but is at least "0"); `frac_part` has no
/// trailing zeros and may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decimal {
    int_part: String,
    frac_part: String,
}

impl Decimal {
    /// Parses a string of the form `[0-9]+(.[0-9]+)?`. Anything else
    /// (signs, exponents, grouping commas) is rejected.
    pub fn parse(s: &str) -> Option<Decimal> {
        let (int_raw, frac_raw) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_raw.is_empty() || !int_raw.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if s.contains('.') && (frac_raw.is_empty() || !frac_raw.bytes().all(|b| b.is_ascii_digit()))
        {
            return None;
        }
        let int_part = int_raw.trim_start_matches('0');
        let int_part = if int_part.is_empty() { "0" } else { int_part };
        let frac_part = frac_raw.trim_end_matches('0');
        Some(Decimal {
            int_part: int_part.to_string(),
            frac_part: frac_part.to_string(),
        })
    }

    /// Canonical string form, e.g. "12.3" for input "012.30".
    pub fn canonical(&self) -> String {
        if self.frac_part.is_empty() {
            self.int_part.clone()
        } else {
            format!("{}.{}", self.int_part, self.frac_part)
        }
    }
}

/// True iff both strings parse as decimals and denote the same quantity.
///
/// "1,200" vs "1200" is false: comma-grouped forms are not normalized.
pub fn numeric_equal(a: &str, b: &str) -> bool {
    match (Decimal::parse(a), Decimal::parse(b)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

/// True iff the token is a well-formed decimal per [`Decimal::parse`].
pub fn is_numeric_token(s: &str) -> bool {
    Decimal::parse(s).is_some()
}

/// Normalized form used when deduplicating predicted values; falls back to
/// the raw string for non-decimal inputs.
pub fn normalize_value(s: &str) -> String {
    Decimal::parse(s).map_or_else(|| s.to_string(), |d| d.canonical())
}
