//! JSON and CSV formats.
//!
//! Matrices are row-major lists of `[re, im]` pairs. Numbers are written in
//! shortest round-trip form, so a save/load cycle is bit-exact.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gframe::{BlockFamily, TargetOperator};
use crate::linalg::{c64, Matrix};
use crate::measure::MeasureSpace;

/// Extended reals: finite values as numbers, `+∞` as the string `"inf"`.
pub fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else if *v < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

struct Extended(f64);

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ser_extended(&self.0, s)
    }
}

pub fn ser_extended_vec<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for &v in values {
        seq.serialize_element(&Extended(v))?;
    }
    seq.end()
}

pub fn ser_matrix<S: Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    MatrixDto::from(m).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDto {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

fn row_major(m: &Matrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push([z.re, z.im]);
        }
    }
    out
}

fn from_row_major(rows: usize, cols: usize, entries: &[[f64; 2]], at: &str) -> Result<Matrix> {
    if entries.len() != rows * cols {
        return Err(Error::Parse(format!(
            "{at}: expected {} entries ({rows} x {cols}), found {}",
            rows * cols,
            entries.len()
        )));
    }
    if let Some(k) = entries.iter().position(|e| !e[0].is_finite() || !e[1].is_finite()) {
        return Err(Error::Parse(format!("{at}: entry {k} is not finite")));
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        let [re, im] = entries[i * cols + j];
        c64(re, im)
    }))
}

impl From<&Matrix> for MatrixDto {
    fn from(m: &Matrix) -> Self {
        MatrixDto { rows: m.nrows(), cols: m.ncols(), entries: row_major(m) }
    }
}

impl MatrixDto {
    pub fn to_matrix(&self, at: &str) -> Result<Matrix> {
        from_row_major(self.rows, self.cols, &self.entries, at)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDto {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDto {
    pub rows: usize,
    pub entries: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDto {
    pub dim: usize,
    pub measure: MeasureDto,
    pub blocks: Vec<BlockDto>,
}

impl From<&BlockFamily> for FamilyDto {
    fn from(fam: &BlockFamily) -> Self {
        FamilyDto {
            dim: fam.dim(),
            measure: MeasureDto { weights: fam.space().weights().to_vec() },
            blocks: fam.blocks().iter().map(|b| BlockDto { rows: b.nrows(), entries: row_major(b) }).collect(),
        }
    }
}

impl FamilyDto {
    pub fn to_family(&self, at: &str) -> Result<BlockFamily> {
        let space =
            MeasureSpace::new(self.measure.weights.clone()).map_err(|e| Error::Parse(format!("{at}.measure: {e}")))?;
        if self.blocks.len() != space.len() {
            return Err(Error::Parse(format!("{at}: {} blocks for {} measure points", self.blocks.len(), space.len())));
        }
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| from_row_major(b.rows, self.dim, &b.entries, &format!("{at}.blocks[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        BlockFamily::new(space, self.dim, blocks).map_err(|e| Error::Parse(format!("{at}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetDto {
    Identity { identity: usize },
    Matrix { matrix: MatrixDto },
}

impl From<&TargetOperator> for TargetDto {
    fn from(t: &TargetOperator) -> Self {
        if t.is_identity() {
            TargetDto::Identity { identity: t.dim() }
        } else {
            TargetDto::Matrix { matrix: MatrixDto::from(t.matrix()) }
        }
    }
}

impl TargetDto {
    pub fn to_target(&self, at: &str) -> Result<TargetOperator> {
        match self {
            TargetDto::Identity { identity } => Ok(TargetOperator::identity(*identity)),
            TargetDto::Matrix { matrix } => TargetOperator::new(matrix.to_matrix(&format!("{at}.matrix"))?)
                .map_err(|e| Error::Parse(format!("{at}: {e}"))),
        }
    }
}

/// A family plus whichever companions an instance kind carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub chi: BlockFamily,
    pub xi: Option<BlockFamily>,
    pub phi: Option<BlockFamily>,
    pub chi_p: Option<BlockFamily>,
    pub xi_p: Option<BlockFamily>,
    pub target: Option<TargetOperator>,
}

impl Instance {
    pub fn single(chi: BlockFamily) -> Self {
        Instance { chi, xi: None, phi: None, chi_p: None, xi_p: None, target: None }
    }

    /// The target, defaulting to the identity.
    pub fn target_or_identity(&self) -> TargetOperator {
        self.target.clone().unwrap_or_else(|| TargetOperator::identity(self.chi.dim()))
    }

    pub fn require_xi(&self) -> Result<&BlockFamily> {
        self.xi.as_ref().ok_or_else(|| Error::Parse("instance has no \"xi\" family".into()))
    }

    pub fn require_phi(&self) -> Result<&BlockFamily> {
        self.phi.as_ref().ok_or_else(|| Error::Parse("instance has no \"phi\" family".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceDto {
    chi: FamilyDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xi: Option<FamilyDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phi: Option<FamilyDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chi_p: Option<FamilyDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    xi_p: Option<FamilyDto>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    target: Option<TargetDto>,
}

fn syntax(at: &str, e: serde_json::Error) -> Error {
    Error::Parse(format!("{at}: line {}, column {}: {e}", e.line(), e.column()))
}

fn field<T: for<'de> Deserialize<'de>>(value: &Value, at: &str) -> Result<T> {
    T::deserialize(value).map_err(|e| Error::Parse(format!("{at}: {e}")))
}

/// Accepts a bare family (`{"dim", "measure", "blocks"}`) or an instance
/// object with `chi` and optional `xi`, `phi`, `chi_p`, `xi_p`, `L`.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let value: Value = serde_json::from_str(text).map_err(|e| syntax("instance", e))?;
    if value.get("dim").is_some() {
        return Ok(Instance::single(field::<FamilyDto>(&value, "family")?.to_family("family")?));
    }
    let Value::Object(map) = &value else {
        return Err(Error::Parse("instance: expected a JSON object".into()));
    };
    let family = |key: &str| -> Result<Option<BlockFamily>> {
        map.get(key).map(|v| field::<FamilyDto>(v, key)?.to_family(key)).transpose()
    };
    let chi = family("chi")?.ok_or_else(|| Error::Parse("instance: missing \"chi\"".into()))?;
    let target = map.get("L").map(|v| field::<TargetDto>(v, "L")?.to_target("L")).transpose()?;
    Ok(Instance { chi, xi: family("xi")?, phi: family("phi")?, chi_p: family("chi_p")?, xi_p: family("xi_p")?, target })
}

pub fn instance_to_json(inst: &Instance) -> String {
    let dto = InstanceDto {
        chi: FamilyDto::from(&inst.chi),
        xi: inst.xi.as_ref().map(FamilyDto::from),
        phi: inst.phi.as_ref().map(FamilyDto::from),
        chi_p: inst.chi_p.as_ref().map(FamilyDto::from),
        xi_p: inst.xi_p.as_ref().map(FamilyDto::from),
        target: inst.target.as_ref().map(TargetDto::from),
    };
    to_json(&dto)
}

pub fn family_to_json(fam: &BlockFamily) -> String {
    to_json(&FamilyDto::from(fam))
}

pub fn parse_target(text: &str) -> Result<TargetOperator> {
    let dto: TargetDto = serde_json::from_str(text).map_err(|e| syntax("target", e))?;
    dto.to_target("L")
}

pub fn target_to_json(target: &TargetOperator) -> String {
    to_json(&TargetDto::from(target))
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    parse_instance(&fs::read_to_string(path)?)
}

pub fn load_target(path: impl AsRef<Path>) -> Result<TargetOperator> {
    parse_target(&fs::read_to_string(path)?)
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance_to_json(inst) + "\n")?;
    Ok(())
}

/// Pretty JSON; infallible for the plain-data types of this crate.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize to JSON")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Parse(format!("unknown format `{other}` (expected json or csv)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

/// Reports with a fixed tabular layout.
pub trait CsvTable {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

fn write_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn table_to_csv(table: &dyn CsvTable) -> Result<String> {
    write_csv(&table.header(), &table.rows())
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<Vec<String>>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, out);
            }
        }
        Value::String(s) => out.push(vec![prefix.to_string(), s.clone()]),
        Value::Null => out.push(vec![prefix.to_string(), String::new()]),
        other => out.push(vec![prefix.to_string(), other.to_string()]),
    }
}

/// Any serializable report as `field,value` rows with dotted paths.
pub fn to_field_csv<T: Serialize>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    let mut rows = Vec::new();
    flatten("", &value, &mut rows);
    write_csv(&["field", "value"], &rows)
}

pub fn render<T: Serialize>(value: &T, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(to_json(value) + "\n"),
        Format::Csv => to_field_csv(value),
    }
}

pub fn save_report<T: Serialize>(report: &T, path: impl AsRef<Path>, format: Format) -> Result<()> {
    fs::write(path, render(report, format)?)?;
    Ok(())
}
