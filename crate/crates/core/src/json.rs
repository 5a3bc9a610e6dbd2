//! JSON output with a fixed 17-significant-digit float format.
//!
//! Shortest round-trip printing is correct but not canonical across
//! implementations; fixed-width scientific notation makes byte-identity
//! comparisons between runs meaningful.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

/// Wraps a formatter and prints every float as `d.dddddddddddddddde±x`.
pub struct Fixed17<F>(pub F);

fn write_float<W: ?Sized + io::Write>(writer: &mut W, value: f64) -> io::Result<()> {
    if value.is_finite() {
        write!(writer, "{value:.16e}")
    } else {
        writer.write_all(b"null")
    }
}

impl<F: Formatter> Formatter for Fixed17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write_float(writer, value)
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write_float(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// One float in the same format, `NaN` and infinities as `null`.
pub fn fixed17(value: f64) -> String {
    let mut out = Vec::new();
    write_float(&mut out, value).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("float formatting is ASCII")
}

/// Serializes `value` with 17 significant digits per float.
pub fn to_string<T: Serialize + ?Sized>(value: &T, pretty: bool) -> serde_json::Result<String> {
    let mut out = Vec::new();
    if pretty {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Fixed17(PrettyFormatter::new()));
        value.serialize(&mut ser)?;
    } else {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Fixed17(CompactFormatter));
        value.serialize(&mut ser)?;
    }
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        let s = to_string(&vec![0.1_f64, 1.0, -2.5e-300], false).unwrap();
        assert_eq!(
            s,
            "[1.0000000000000001e-1,1.0000000000000000e0,-2.5000000000000000e-300]"
        );
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, 1.0, -2.5e-300]);
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(to_string(&f64::NAN, false).unwrap(), "null");
    }

    #[test]
    fn pretty_layout_is_preserved() {
        let v = serde_json::json!({"a": [1.5]});
        let s = to_string(&v, true).unwrap();
        assert!(s.contains("\n  \"a\": [\n    1.5000000000000000e0\n  ]"));
    }
}
