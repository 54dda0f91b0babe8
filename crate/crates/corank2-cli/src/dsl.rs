//! Parser for model description files.
//!
//! A file is a sequence of INI-style sections. `#` starts a comment,
//! blank lines are ignored.
//!
//! ```text
//! [coordinates]
//! x1 x2 y1 y2 z1 z2
//!
//! [forms]
//! lambda1 = dz1 - y1*dx1 + (x2^3/3)*dx2
//! lambda2 = dz2 - y2*dx1 - x2*dy1
//!
//! [framing]            # optional, four kernel fields
//! X1 = @x1 + y1*@z1 + y2*@z2
//! ...
//!
//! [reeb]               # optional, two transverse fields
//! Z1 = @z1
//! Z2 = @z2
//!
//! [domain]             # optional, default is the cube |c| <= 0.9
//! x2 = -0.9 0.9
//! ```
//!
//! The coordinate section is fixed: it must list exactly
//! `x1 x2 y1 y2 z1 z2` in that order, and exists so a file states the
//! chart it is written in.

use std::fmt;
use std::path::Path;

use corank2::exterior::{Form, VectorField};
use corank2::parse::{parse_one_form, parse_vector_field};
use corank2::sample::Box6;
use corank2::scalar::Coordinate;

/// Contents of a model file, ready for `build_distribution`.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub forms: [Form; 2],
    pub framing: Option<[VectorField; 4]>,
    pub reeb: Option<[VectorField; 2]>,
    pub domain: Box6,
}

/// A parse failure with its line number.
#[derive(Debug, Clone)]
pub struct FileError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for FileError {}

fn err(line: usize, message: impl Into<String>) -> FileError {
    FileError {
        line,
        message: message.into(),
    }
}

pub fn load_model_file(path: &Path) -> Result<ModelFile, FileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
    parse_model_file(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Coordinates,
    Forms,
    Framing,
    Reeb,
    Domain,
}

pub fn parse_model_file(text: &str) -> Result<ModelFile, FileError> {
    let mut section = Section::None;
    let mut coordinates: Vec<(usize, String)> = Vec::new();
    let mut lambda1: Option<Form> = None;
    let mut lambda2: Option<Form> = None;
    let mut framing: Vec<VectorField> = Vec::new();
    let mut reeb: Vec<VectorField> = Vec::new();
    let mut domain = Box6::symmetric(0.9);
    let mut saw_coordinates = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(cut) => &raw[..cut],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "unterminated section header"))?
                .trim();
            section = match name {
                "coordinates" => Section::Coordinates,
                "forms" => Section::Forms,
                "framing" => Section::Framing,
                "reeb" => Section::Reeb,
                "domain" => Section::Domain,
                other => return Err(err(line_no, format!("unknown section [{other}]"))),
            };
            if section == Section::Coordinates {
                saw_coordinates = true;
            }
            continue;
        }

        match section {
            Section::None => {
                return Err(err(line_no, "content before the first section header"));
            }
            Section::Coordinates => {
                for tok in line.split_whitespace() {
                    coordinates.push((line_no, tok.to_string()));
                }
            }
            Section::Forms => {
                let (key, value) = split_assignment(line, line_no)?;
                let form = parse_one_form(value).map_err(|e| err(line_no, e.to_string()))?;
                let slot = match key {
                    "lambda1" => &mut lambda1,
                    "lambda2" => &mut lambda2,
                    other => {
                        return Err(err(
                            line_no,
                            format!("unknown form {other:?}; expected lambda1 or lambda2"),
                        ));
                    }
                };
                if slot.is_some() {
                    return Err(err(line_no, format!("{key} given twice")));
                }
                *slot = Some(form);
            }
            Section::Framing | Section::Reeb => {
                let (_, value) = split_assignment(line, line_no)?;
                let field = parse_vector_field(value).map_err(|e| err(line_no, e.to_string()))?;
                if section == Section::Framing {
                    framing.push(field);
                } else {
                    reeb.push(field);
                }
            }
            Section::Domain => {
                let (key, value) = split_assignment(line, line_no)?;
                let coord = Coordinate::parse(key)
                    .ok_or_else(|| err(line_no, format!("unknown coordinate {key:?}")))?;
                let bounds: Vec<&str> = value.split_whitespace().collect();
                if bounds.len() != 2 {
                    return Err(err(line_no, "expected two bounds: <coordinate> = lo hi"));
                }
                let lo: f64 = bounds[0]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad number {:?}", bounds[0])))?;
                let hi: f64 = bounds[1]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad number {:?}", bounds[1])))?;
                if !(lo < hi) {
                    return Err(err(line_no, "bounds must satisfy lo < hi"));
                }
                domain.0[coord.index()] = [lo, hi];
            }
        }
    }

    if !saw_coordinates {
        return Err(err(0, "missing [coordinates] section"));
    }
    let expected = ["x1", "x2", "y1", "y2", "z1", "z2"];
    if coordinates.len() != 6 {
        let line = coordinates.last().map_or(0, |(l, _)| *l);
        return Err(err(
            line,
            format!(
                "[coordinates] must list exactly {}, found {} names",
                expected.join(" "),
                coordinates.len()
            ),
        ));
    }
    for (got, want) in coordinates.iter().zip(expected) {
        if got.1 != want {
            return Err(err(
                got.0,
                format!("coordinate {:?} out of place; the chart is fixed as {}", got.1, expected.join(" ")),
            ));
        }
    }

    let (Some(l1), Some(l2)) = (lambda1, lambda2) else {
        return Err(err(0, "the [forms] section must define lambda1 and lambda2"));
    };

    let framing = match framing.len() {
        0 => None,
        4 => Some(framing.try_into().expect("length checked")),
        n => return Err(err(0, format!("[framing] needs exactly 4 fields, found {n}"))),
    };
    let reeb = match reeb.len() {
        0 => None,
        2 => Some(reeb.try_into().expect("length checked")),
        n => return Err(err(0, format!("[reeb] needs exactly 2 fields, found {n}"))),
    };

    Ok(ModelFile {
        forms: [l1, l2],
        framing,
        reeb,
        domain,
    })
}

fn split_assignment(line: &str, line_no: usize) -> Result<(&str, &str), FileError> {
    let (key, value) = line
        .split_once('=')
        .ok_or_else(|| err(line_no, "expected <name> = <value>"))?;
    let key = key.trim();
    let value = value.trim();
    if key.is_empty() || value.is_empty() {
        return Err(err(line_no, "expected <name> = <value>"));
    }
    Ok((key, value))
}
