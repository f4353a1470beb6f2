//! File formats and command dispatch.
//!
//! Game specifications are JSON objects with row-major nested arrays:
//!
//! ```json
//! {"version": 1, "A": [[0]], "B": [[1]], "C": [[1]], "Q": [[0]], "Q_f": [[1]],
//!  "R_p": [[1]], "R_e": [[2]], "t0": 0, "tf": 1, "x0": [1]}
//! ```
//!
//! `{"preset": "example1"}` loads [`crate::example_one_spec`]; any other
//! field given next to a preset overrides it.
//!
//! Reports are written with a fixed float format (17 significant digits,
//! non-finite values as `null`) so identical inputs give identical bytes.

mod run;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::linalg::asymmetry;
use crate::model::{example_one_spec, GameSpec};
use crate::{Error, Result, Tolerances};

pub use run::{run, Command, EvaderChoice, Outcome, PursuerChoice, RunConfig, SpecSource};

pub const SCHEMA_VERSION: u64 = 1;

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

struct Deterministic<'a> {
    pretty: serde_json::ser::PrettyFormatter<'a>,
}

macro_rules! delegate {
    ($($name:ident $(($arg:ident: $ty:ty))?),* $(,)?) => {
        $(
            fn $name<W: ?Sized + std::io::Write>(&mut self, w: &mut W $(, $arg: $ty)?) -> std::io::Result<()> {
                self.pretty.$name(w $(, $arg)?)
            }
        )*
    };
}

impl serde_json::ser::Formatter for Deterministic<'_> {
    delegate!(
        begin_array,
        end_array,
        begin_object,
        end_object,
        end_array_value,
        end_object_value,
        begin_array_value(first: bool),
        begin_object_key(first: bool),
        begin_object_value,
    );

    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, x: f64) -> std::io::Result<()> {
        if x.is_finite() {
            w.write_all(fmt_f64(x).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + std::io::Write>(&mut self, w: &mut W, x: f32) -> std::io::Result<()> {
        self.write_f64(w, x as f64)
    }
}

/// Pretty-printed JSON with the fixed float format and a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let fmt = Deterministic {
        pretty: serde_json::ser::PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub(crate) fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn matrix_value(m: &DMatrix<f64>) -> Value {
    Value::Array(
        m.row_iter()
            .map(|r| Value::Array(r.iter().map(|&x| Value::from(x)).collect()))
            .collect(),
    )
}

/// The JSON form of a spec, accepted back by [`parse_spec`].
pub fn spec_to_json(spec: &GameSpec) -> Value {
    let mut obj = Map::new();
    obj.insert("version".into(), Value::from(SCHEMA_VERSION));
    for (name, m) in spec_matrices(spec) {
        obj.insert(name.into(), matrix_value(m));
    }
    obj.insert("t0".into(), Value::from(spec.t0));
    obj.insert("tf".into(), Value::from(spec.tf));
    obj.insert(
        "x0".into(),
        Value::Array(spec.x0.iter().map(|&x| Value::from(x)).collect()),
    );
    Value::Object(obj)
}

fn spec_matrices(spec: &GameSpec) -> [(&'static str, &DMatrix<f64>); 7] {
    [
        ("A", &spec.a),
        ("B", &spec.b),
        ("C", &spec.c),
        ("Q", &spec.q),
        ("Q_f", &spec.q_f),
        ("R_p", &spec.r_p),
        ("R_e", &spec.r_e),
    ]
}

fn number(field: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::schema(field, "expected a finite number"))
}

fn parse_matrix(field: &str, v: &Value) -> Result<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::schema(field, "expected an array of rows"))?;
    let mut data = Vec::new();
    let mut ncols = None;
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::schema(field, format!("row {i} is not an array")))?;
        if *ncols.get_or_insert(row.len()) != row.len() {
            return Err(Error::schema(
                field,
                format!("row {i} has a different length"),
            ));
        }
        for x in row {
            data.push(number(field, x)?);
        }
    }
    Ok(DMatrix::from_row_slice(
        rows.len(),
        ncols.unwrap_or(0),
        &data,
    ))
}

fn parse_vector(field: &str, v: &Value) -> Result<DVector<f64>> {
    let items = v
        .as_array()
        .ok_or_else(|| Error::schema(field, "expected an array of numbers"))?;
    let data = items
        .iter()
        .map(|x| number(field, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(data))
}

/// Parses a spec object (see the module docs) and checks shapes and
/// symmetry. Definiteness and well-posedness are left to
/// [`crate::validate_spec`].
pub fn spec_from_value(v: &Value) -> Result<GameSpec> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::schema("<root>", "expected a JSON object"))?;
    if let Some(version) = obj.get("version") {
        if version.as_u64() != Some(SCHEMA_VERSION) {
            return Err(Error::schema(
                "version",
                format!("unsupported version {version}"),
            ));
        }
    }
    let preset = match obj.get("preset") {
        None => None,
        Some(Value::String(name)) if name == "example1" => Some(example_one_spec()),
        Some(other) => return Err(Error::schema("preset", format!("unknown preset {other}"))),
    };
    let mut missing = Vec::new();
    let mut take_matrix =
        |name: &'static str, fallback: Option<&DMatrix<f64>>| -> Result<DMatrix<f64>> {
            match (obj.get(name), fallback) {
                (Some(v), _) => parse_matrix(name, v),
                (None, Some(m)) => Ok(m.clone()),
                (None, None) => {
                    missing.push(name);
                    Ok(DMatrix::zeros(0, 0))
                }
            }
        };
    let base = preset.as_ref();
    let a = take_matrix("A", base.map(|s| &s.a))?;
    let b = take_matrix("B", base.map(|s| &s.b))?;
    let c = take_matrix("C", base.map(|s| &s.c))?;
    let q = take_matrix("Q", base.map(|s| &s.q))?;
    let q_f = take_matrix("Q_f", base.map(|s| &s.q_f))?;
    let r_p = take_matrix("R_p", base.map(|s| &s.r_p))?;
    let r_e = take_matrix("R_e", base.map(|s| &s.r_e))?;
    if let Some(name) = missing.first() {
        return Err(Error::schema(*name, "missing"));
    }
    let scalar = |name: &str, fallback: Option<f64>| -> Result<f64> {
        match (obj.get(name), fallback) {
            (Some(v), _) => number(name, v),
            (None, Some(x)) => Ok(x),
            (None, None) => Err(Error::schema(name, "missing")),
        }
    };
    let t0 = scalar("t0", base.map(|s| s.t0))?;
    let tf = scalar("tf", base.map(|s| s.tf))?;
    let x0 = match (obj.get("x0"), base) {
        (Some(v), _) => parse_vector("x0", v)?,
        (None, Some(s)) => s.x0.clone(),
        (None, None) => return Err(Error::schema("x0", "missing")),
    };
    const KNOWN: [&str; 13] = [
        "version",
        "preset",
        "A",
        "B",
        "C",
        "Q",
        "Q_f",
        "R_p",
        "R_e",
        "t0",
        "tf",
        "x0",
        "description",
    ];
    if let Some(key) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(Error::schema(key.clone(), "unknown field"));
    }

    let spec = GameSpec {
        a,
        b,
        c,
        q,
        q_f,
        r_p,
        r_e,
        t0,
        tf,
        x0,
    };
    check_shapes(&spec)?;
    let tol = Tolerances::default();
    for (name, m) in spec.symmetric_fields() {
        if asymmetry(m) > tol.tol_sym {
            return Err(Error::schema(name, format!("{name} not symmetric")));
        }
    }
    if !(t0 < tf) {
        return Err(Error::schema("tf", "tf must exceed t0"));
    }
    Ok(spec)
}

fn check_shapes(spec: &GameSpec) -> Result<()> {
    let nx = spec.a.nrows();
    let np = spec.b.ncols();
    let ne = spec.c.ncols();
    let expect = [
        ("A", &spec.a, nx, nx),
        ("B", &spec.b, nx, np),
        ("C", &spec.c, nx, ne),
        ("Q", &spec.q, nx, nx),
        ("Q_f", &spec.q_f, nx, nx),
        ("R_p", &spec.r_p, np, np),
        ("R_e", &spec.r_e, ne, ne),
    ];
    for (name, m, r, c) in expect {
        if m.shape() != (r, c) {
            return Err(Error::schema(
                name,
                format!("is {}x{}, expected {r}x{c}", m.nrows(), m.ncols()),
            ));
        }
    }
    if nx == 0 {
        return Err(Error::schema("A", "state dimension must be positive"));
    }
    if spec.x0.len() != nx {
        return Err(Error::schema(
            "x0",
            format!("has length {}, expected {nx}", spec.x0.len()),
        ));
    }
    Ok(())
}

pub fn parse_spec(text: &str) -> Result<GameSpec> {
    spec_from_value(&parse_json(text)?)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<GameSpec> {
    parse_spec(&std::fs::read_to_string(path)?)
}
