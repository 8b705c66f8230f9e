//! Numeric interpretation of literal lexical forms.

/// Parses a literal as a real number.
///
/// Plain decimals are parsed directly. Dates (`YYYY`, `YYYY-MM`,
/// `YYYY-MM-DD`, with `??` or `##` standing in for unknown components and an
/// optional time suffix) become fractional years:
/// `year + (month-1)/12 + (day-1)/365.25`, unknown components counted as 1.
pub fn parse_numeric(lexical: &str) -> Option<f64> {
    let s = lexical.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    parse_date(s)
}

fn parse_date(s: &str) -> Option<f64> {
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let body = body.split('T').next()?;
    let body = body.strip_suffix('Z').unwrap_or(body);
    let mut parts = body.split('-');
    let year_text = parts.next()?;
    if year_text.is_empty() || !year_text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut year: f64 = year_text.parse().ok()?;
    if negative {
        year = -year;
    }
    let month = component(parts.next(), 12)?;
    let day = component(parts.next(), 31)?;
    if parts.next().is_some() {
        return None;
    }
    Some(year + (month - 1.0) / 12.0 + (day - 1.0) / 365.25)
}

/// A month or day field; absent or placeholder fields count as 1.
fn component(part: Option<&str>, max: u32) -> Option<f64> {
    let Some(p) = part else { return Some(1.0) };
    if p.chars().all(|c| c == '?' || c == '#') && !p.is_empty() {
        return Some(1.0);
    }
    if p.is_empty() || p.len() > 2 || !p.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: u32 = p.parse().ok()?;
    (1..=max).contains(&v).then_some(v as f64)
}
