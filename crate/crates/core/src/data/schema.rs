//! Delimited-text loader driven by a small `key = value` schema file.
//!
//! ```text
//! version = 1
//! label = two_year_recid
//! label.positive = 1
//! group = race
//! group.u = Caucasian
//! filter = days_b_screening_arrest <= 30
//! feature = priors_count * 0.1
//! feature = sex == Male
//! feature = const 1
//! ```
//!
//! Labels become +1 when the cell equals `label.positive` and -1 otherwise.
//! Rows failing any filter are dropped, including rows where a numeric
//! filter meets an empty or non-numeric cell.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Filter {
    pub column: String,
    pub op: FilterOp,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    Numeric { column: String, scale: f64 },
    Indicator { column: String, value: String },
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupRule {
    /// Rows equal to the value form group `p`.
    Protected(String),
    /// Rows equal to the value form group `u`; everything else is `p`.
    Unprotected(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub version: u32,
    pub delimiter: u8,
    pub label: String,
    pub positive: String,
    pub group: Option<(String, GroupRule)>,
    pub filters: Vec<Filter>,
    pub features: Vec<Feature>,
}

impl CsvSchema {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut version = None;
        let mut delimiter = b',';
        let mut label = None;
        let mut positive = None;
        let mut group_col = None;
        let mut group_rule = None;
        let mut filters = Vec::new();
        let mut features = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line_no, format!("expected key = value, got {line:?}")))?;
            // `filter = a == b` splits at the first '=', which is the key separator.
            match key {
                "version" => {
                    let v: u32 = value.parse().map_err(|_| err(line_no, format!("bad version {value:?}")))?;
                    if v != SCHEMA_VERSION {
                        return Err(err(line_no, format!("unsupported schema version {v}")));
                    }
                    version = Some(v);
                }
                "delimiter" => {
                    let v = match value {
                        "tab" => b'\t',
                        "comma" => b',',
                        "semicolon" => b';',
                        s if s.len() == 1 => s.as_bytes()[0],
                        _ => return Err(err(line_no, format!("bad delimiter {value:?}"))),
                    };
                    delimiter = v;
                }
                "label" => label = Some(value.to_string()),
                "label.positive" => positive = Some(value.to_string()),
                "group" => group_col = Some(value.to_string()),
                "group.p" => group_rule = Some(GroupRule::Protected(value.to_string())),
                "group.u" => group_rule = Some(GroupRule::Unprotected(value.to_string())),
                "filter" => filters.push(parse_filter(value).map_err(|m| err(line_no, m))?),
                "feature" => features.push(parse_feature(value).map_err(|m| err(line_no, m))?),
                other => return Err(err(line_no, format!("unknown key {other:?}"))),
            }
        }
        let missing = |what: &str| Error::Format { path: path.to_path_buf(), msg: format!("schema has no {what}") };
        let group = match (group_col, group_rule) {
            (Some(c), Some(r)) => Some((c, r)),
            (None, None) => None,
            _ => return Err(missing("complete group rule (need group and group.p or group.u)")),
        };
        if features.is_empty() {
            return Err(missing("feature"));
        }
        Ok(CsvSchema {
            version: version.ok_or_else(|| missing("version"))?,
            delimiter,
            label: label.ok_or_else(|| missing("label"))?,
            positive: positive.ok_or_else(|| missing("label.positive"))?,
            group,
            filters,
            features,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

fn parse_filter(s: &str) -> std::result::Result<Filter, String> {
    // Two-character operators first so that `<=` is not read as `<`.
    const OPS: [(&str, FilterOp); 6] = [
        ("==", FilterOp::Eq),
        ("!=", FilterOp::Ne),
        ("<=", FilterOp::Le),
        (">=", FilterOp::Ge),
        ("<", FilterOp::Lt),
        (">", FilterOp::Gt),
    ];
    for (tok, op) in OPS {
        if let Some((c, v)) = s.split_once(tok) {
            let column = c.trim().to_string();
            if column.is_empty() {
                return Err(format!("filter {s:?} has no column"));
            }
            return Ok(Filter { column, op, value: v.trim().to_string() });
        }
    }
    Err(format!("filter {s:?} has no comparison operator"))
}

fn parse_feature(s: &str) -> std::result::Result<Feature, String> {
    if let Some(v) = s.strip_prefix("const ") {
        let c: f64 = v.trim().parse().map_err(|_| format!("bad constant {v:?}"))?;
        return Ok(Feature::Constant(c));
    }
    if let Some((c, v)) = s.split_once("==") {
        return Ok(Feature::Indicator { column: c.trim().to_string(), value: v.trim().to_string() });
    }
    if let Some((c, v)) = s.split_once('*') {
        let scale: f64 = v.trim().parse().map_err(|_| format!("bad scale {v:?}"))?;
        if !scale.is_finite() {
            return Err(format!("bad scale {v:?}"));
        }
        return Ok(Feature::Numeric { column: c.trim().to_string(), scale });
    }
    let column = s.trim();
    if column.is_empty() || column.contains(char::is_whitespace) {
        return Err(format!("bad feature {s:?}"));
    }
    Ok(Feature::Numeric { column: column.to_string(), scale: 1.0 })
}

fn passes(f: &Filter, cell: &str) -> bool {
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    match f.op {
        FilterOp::Eq | FilterOp::Ne => {
            let equal = match (num(cell), num(&f.value)) {
                (Some(a), Some(b)) => a == b,
                _ => cell.trim() == f.value,
            };
            equal == (f.op == FilterOp::Eq)
        }
        op => match (num(cell), num(&f.value)) {
            (Some(a), Some(b)) => match op {
                FilterOp::Lt => a < b,
                FilterOp::Le => a <= b,
                FilterOp::Gt => a > b,
                FilterOp::Ge => a >= b,
                _ => unreachable!(),
            },
            _ => false,
        },
    }
}

/// Loads a delimited file according to `schema`. A header-only file gives an
/// empty dataset.
pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    read_csv(file, path, schema)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let p: PathBuf = path.to_path_buf();
    let mut rdr = csv::ReaderBuilder::new().delimiter(schema.delimiter).has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let col = |name: &str| {
        cols.get(name)
            .copied()
            .ok_or_else(|| Error::Format { path: p.clone(), msg: format!("missing column {name:?}") })
    };
    let label_col = col(&schema.label)?;
    let group = match &schema.group {
        Some((c, rule)) => Some((col(c)?, rule)),
        None => None,
    };
    let filters = schema
        .filters
        .iter()
        .map(|f| Ok((col(&f.column)?, f)))
        .collect::<Result<Vec<_>>>()?;
    enum Slot<'a> {
        Num(usize, f64),
        Ind(usize, &'a str),
        Const(f64),
    }
    let slots = schema
        .features
        .iter()
        .map(|f| {
            Ok(match f {
                Feature::Numeric { column, scale } => Slot::Num(col(column)?, *scale),
                Feature::Indicator { column, value } => Slot::Ind(col(column)?, value.as_str()),
                Feature::Constant(c) => Slot::Const(*c),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        // Header is line 1.
        let line = rec.position().map(|q| q.line() as usize).unwrap_or(0);
        let cell = |i: usize| rec.get(i).unwrap_or("").trim();
        if !filters.iter().all(|(i, f)| passes(f, cell(*i))) {
            continue;
        }
        for s in &slots {
            let v = match s {
                Slot::Num(i, scale) => {
                    let raw = cell(*i);
                    let v: f64 = raw.parse().map_err(|_| Error::Parse {
                        path: p.clone(),
                        line,
                        msg: format!("column {:?}: not a number: {raw:?}", &headers[*i]),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse { path: p.clone(), line, msg: format!("non-finite value {raw:?}") });
                    }
                    v * scale
                }
                Slot::Ind(i, value) => {
                    if cell(*i) == *value {
                        1.0
                    } else {
                        0.0
                    }
                }
                Slot::Const(c) => *c,
            };
            features.push(v);
        }
        labels.push(if cell(label_col) == schema.positive { 1.0 } else { -1.0 });
        if let Some((gi, rule)) = &group {
            let g = cell(*gi);
            groups.push(match rule {
                GroupRule::Protected(v) => g == v,
                GroupRule::Unprotected(v) => g != v,
            });
        }
    }
    let groups = schema.group.as_ref().map(|_| groups);
    Dataset::new(schema.dim(), features, labels, groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = "version = 1\nlabel = y\nlabel.positive = 1\ngroup = g\ngroup.u = a\n\
filter = k != skip\nfilter = v <= 10\nfeature = v * 0.5\nfeature = k == x\nfeature = const 1\n";

    fn schema() -> CsvSchema {
        CsvSchema::parse(SCHEMA, Path::new("s")).unwrap()
    }

    fn read(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), Path::new("d.csv"), &schema())
    }

    #[test]
    fn applies_filters_features_and_groups() {
        let ds = read("y,g,k,v\n1,a,x,4\n0,b,z,2\n1,b,skip,1\n0,a,x,11\n1,b,x,\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.row(0), &[2.0, 1.0, 1.0]);
        assert_eq!(ds.row(1), &[1.0, 0.0, 1.0]);
        assert_eq!(ds.labels(), &[1.0, -1.0]);
        assert_eq!(ds.groups().unwrap(), &[false, true]);
    }

    #[test]
    fn header_only_gives_empty_dataset() {
        let ds = read("y,g,k,v\n").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.dim(), 3);
    }

    #[test]
    fn missing_column_is_an_error() {
        assert!(read("y,g,v\n1,a,3\n").is_err());
    }

    #[test]
    fn bad_number_reports_line() {
        let s = CsvSchema::parse("version = 1\nlabel = y\nlabel.positive = 1\nfeature = v\n", Path::new("s")).unwrap();
        let e = read_csv("y,v\n1,2\n0,abc\n".as_bytes(), Path::new("d"), &s).unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        assert!(CsvSchema::parse("label = y\n", Path::new("s")).is_err());
        assert!(CsvSchema::parse("version = 2\n", Path::new("s")).is_err());
        assert!(CsvSchema::parse("version = 1\nbogus = 3\n", Path::new("s")).is_err());
        assert!(CsvSchema::parse("version = 1\nlabel = y\nlabel.positive = 1\nfeature = v\nfilter = v\n", Path::new("s")).is_err());
    }

    #[test]
    fn filter_operators() {
        let f = parse_filter("a >= -30").unwrap();
        assert_eq!(f.op, FilterOp::Ge);
        assert!(passes(&f, "-30"));
        assert!(!passes(&f, "-31"));
        assert!(!passes(&f, ""));
        let f = parse_filter("s != N/A").unwrap();
        assert!(passes(&f, "Low"));
        assert!(!passes(&f, "N/A"));
    }
}
