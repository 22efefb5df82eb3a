//! Minimal CSV emission: `.` decimal separator, LF endings, 17 significant digits.

use std::io::Write;

/// Formats a float with 17 significant digits so it round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub(crate) fn write_lines<W: Write, I>(mut out: W, header: &str, rows: I) -> std::io::Result<()>
where
    I: IntoIterator<Item = String>,
{
    out.write_all(header.as_bytes())?;
    out.write_all(b"\n")?;
    for row in rows {
        out.write_all(row.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Splits CSV text into a header and rows of fields. No quoting support; none
/// of the files this crate writes need it.
pub fn parse(text: &str) -> Option<(Vec<&str>, Vec<Vec<&str>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next()?.split(',').map(str::trim).collect();
    let rows = lines.map(|l| l.split(',').map(str::trim).collect()).collect();
    Some((header, rows))
}
