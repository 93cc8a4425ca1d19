//! Canonical text serialization shared by every persisted artifact.
//!
//! Documents are JSON with object keys sorted, two-space indentation, a
//! trailing newline, and floats written in their shortest round-trip form.
//! Equal values always produce equal bytes.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum CanonError {
    #[error("cannot serialize value: {0}")]
    Encode(String),
    #[error("non-finite number at {path}")]
    NonFinite { path: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

/// Serializes `value` to canonical bytes.
pub fn to_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonError> {
    let tree = to_tree(value)?;
    let mut out =
        serde_json::to_vec_pretty(&tree).map_err(|e| CanonError::Encode(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonError> {
    // serde_json only emits valid UTF-8.
    Ok(String::from_utf8(to_bytes(value)?).expect("canonical output is UTF-8"))
}

/// Converts to a key-sorted value tree, rejecting NaN and infinities that
/// serde_json would otherwise silently turn into `null`.
pub fn to_tree<T: Serialize + ?Sized>(value: &T) -> Result<Value, CanonError> {
    check_finite(value)?;
    serde_json::to_value(value).map_err(|e| CanonError::Encode(e.to_string()))
}

pub fn from_slice<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonError> {
    serde_json::from_slice(bytes).map_err(|e| CanonError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T, CanonError> {
    from_slice(text.as_bytes())
}

/// Round-trips a value through the canonical form.
pub fn normalize<T: Serialize + DeserializeOwned>(value: &T) -> Result<T, CanonError> {
    from_slice(&to_bytes(value)?)
}

/// Compact single-line canonical form, used for hashing and request payloads.
pub fn to_compact<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonError> {
    let tree = to_tree(value)?;
    serde_json::to_vec(&tree).map_err(|e| CanonError::Encode(e.to_string()))
}

fn check_finite<T: Serialize + ?Sized>(value: &T) -> Result<(), CanonError> {
    let mut probe = FiniteProbe::default();
    match value.serialize(&mut probe) {
        Ok(()) => Ok(()),
        Err(ProbeError::NonFinite) => Err(CanonError::NonFinite {
            path: probe.path.join("."),
        }),
        Err(ProbeError::Other(msg)) => Err(CanonError::Encode(msg)),
    }
}

#[derive(Debug)]
enum ProbeError {
    NonFinite,
    Other(String),
}

impl fmt::Display for ProbeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeError::NonFinite => f.write_str("non-finite float"),
            ProbeError::Other(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for ProbeError {}

impl serde::ser::Error for ProbeError {
    fn custom<M: fmt::Display>(msg: M) -> Self {
        ProbeError::Other(msg.to_string())
    }
}

/// A serializer that discards everything except float checks; tracks the
/// field path so the error can point at the offending value.
#[derive(Default)]
struct FiniteProbe {
    path: Vec<String>,
}

impl FiniteProbe {
    fn float(&mut self, v: f64) -> Result<(), ProbeError> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(ProbeError::NonFinite)
        }
    }
}

macro_rules! probe_ok {
    ($($name:ident: $ty:ty),* $(,)?) => {
        $(fn $name(self, _v: $ty) -> Result<(), ProbeError> { Ok(()) })*
    };
}

impl serde::Serializer for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    type SerializeSeq = Self;
    type SerializeTuple = Self;
    type SerializeTupleStruct = Self;
    type SerializeTupleVariant = Self;
    type SerializeMap = Self;
    type SerializeStruct = Self;
    type SerializeStructVariant = Self;

    probe_ok!(
        serialize_bool: bool,
        serialize_i8: i8,
        serialize_i16: i16,
        serialize_i32: i32,
        serialize_i64: i64,
        serialize_u8: u8,
        serialize_u16: u16,
        serialize_u32: u32,
        serialize_u64: u64,
        serialize_char: char,
        serialize_str: &str,
        serialize_bytes: &[u8],
    );

    fn serialize_f32(self, v: f32) -> Result<(), ProbeError> {
        self.float(v as f64)
    }
    fn serialize_f64(self, v: f64) -> Result<(), ProbeError> {
        self.float(v)
    }
    fn serialize_none(self) -> Result<(), ProbeError> {
        Ok(())
    }
    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<(), ProbeError> {
        value.serialize(self)
    }
    fn serialize_unit(self) -> Result<(), ProbeError> {
        Ok(())
    }
    fn serialize_unit_struct(self, _: &'static str) -> Result<(), ProbeError> {
        Ok(())
    }
    fn serialize_unit_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
    ) -> Result<(), ProbeError> {
        Ok(())
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        value: &T,
    ) -> Result<(), ProbeError> {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        value: &T,
    ) -> Result<(), ProbeError> {
        self.path.push(variant.to_string());
        value.serialize(&mut *self)?;
        self.path.pop();
        Ok(())
    }
    fn serialize_seq(self, _: Option<usize>) -> Result<Self, ProbeError> {
        Ok(self)
    }
    fn serialize_tuple(self, _: usize) -> Result<Self, ProbeError> {
        Ok(self)
    }
    fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<Self, ProbeError> {
        Ok(self)
    }
    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self, ProbeError> {
        Ok(self)
    }
    fn serialize_map(self, _: Option<usize>) -> Result<Self, ProbeError> {
        Ok(self)
    }
    fn serialize_struct(self, _: &'static str, _: usize) -> Result<Self, ProbeError> {
        Ok(self)
    }
    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self, ProbeError> {
        Ok(self)
    }
}

impl serde::ser::SerializeSeq for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), ProbeError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), ProbeError> {
        Ok(())
    }
}

impl serde::ser::SerializeTuple for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), ProbeError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), ProbeError> {
        Ok(())
    }
}

impl serde::ser::SerializeTupleStruct for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), ProbeError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), ProbeError> {
        Ok(())
    }
}

impl serde::ser::SerializeTupleVariant for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), ProbeError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), ProbeError> {
        Ok(())
    }
}

impl serde::ser::SerializeMap for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    fn serialize_key<T: Serialize + ?Sized>(&mut self, _key: &T) -> Result<(), ProbeError> {
        Ok(())
    }
    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), ProbeError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), ProbeError> {
        Ok(())
    }
}

impl serde::ser::SerializeStruct for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> Result<(), ProbeError> {
        self.path.push(key.to_string());
        value.serialize(&mut **self)?;
        self.path.pop();
        Ok(())
    }
    fn end(self) -> Result<(), ProbeError> {
        Ok(())
    }
}

impl serde::ser::SerializeStructVariant for &mut FiniteProbe {
    type Ok = ();
    type Error = ProbeError;
    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> Result<(), ProbeError> {
        self.path.push(key.to_string());
        value.serialize(&mut **self)?;
        self.path.pop();
        Ok(())
    }
    fn end(self) -> Result<(), ProbeError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Debug, PartialEq, Serialize, serde::Deserialize)]
    struct Sample {
        zeta: f64,
        alpha: Vec<u32>,
        name: String,
    }

    #[test]
    fn keys_are_sorted_and_floats_keep_a_decimal_point() {
        let s = Sample {
            zeta: 5.0,
            alpha: vec![1, 2],
            name: "x".into(),
        };
        let text = to_string(&s).unwrap();
        let alpha = text.find("\"alpha\"").unwrap();
        let name = text.find("\"name\"").unwrap();
        let zeta = text.find("\"zeta\"").unwrap();
        assert!(alpha < name && name < zeta);
        assert!(text.contains("5.0"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn map_insertion_order_does_not_matter() {
        let mut a = BTreeMap::new();
        a.insert("b", 1);
        a.insert("a", 2);
        let v: serde_json::Value = serde_json::json!({"b": 1, "a": 2});
        assert_eq!(to_bytes(&a).unwrap(), to_bytes(&v).unwrap());
    }

    #[test]
    fn nan_is_rejected_with_path() {
        let s = Sample {
            zeta: f64::NAN,
            alpha: vec![],
            name: String::new(),
        };
        match to_bytes(&s) {
            Err(CanonError::NonFinite { path }) => assert_eq!(path, "zeta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_stream_reports_location() {
        let s = Sample {
            zeta: 1.25,
            alpha: vec![3],
            name: "n".into(),
        };
        let bytes = to_bytes(&s).unwrap();
        let cut = &bytes[..bytes.len() - 4];
        match from_slice::<Sample>(cut) {
            Err(CanonError::Parse { line, .. }) => assert!(line >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn awkward_floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 8.0 / 3.0, 1e-9, 123456.789, -0.5] {
            let s = Sample {
                zeta: v,
                alpha: vec![],
                name: String::new(),
            };
            let back: Sample = from_slice(&to_bytes(&s).unwrap()).unwrap();
            assert_eq!(back, s);
        }
    }
}
