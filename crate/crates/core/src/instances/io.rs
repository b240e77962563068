//! JSON instance files.
//!
//! ```json
//! { "n": 3, "sense": "max", "offset": 0.0, "b": [1.0, 2.0, 0.5],
//!   "A": { "triplets": [[0, 1, 0.5], [1, 0, 0.5]], "symmetric": true },
//!   "constraints": { "m": 1, "relation": "le", "C": [[0, 0, 1.0]], "d": [1.0] } }
//! ```
//!
//! `A` and `constraints` may be `null`. Coordinates are 0-based; the writer
//! emits each coordinate once, in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConstraintBlock, IpInstance, Relation, Sense, SparseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub sense: Sense,
    pub offset: f64,
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Option<QuadraticFile>,
    pub constraints: Option<ConstraintFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticFile {
    pub triplets: Vec<(usize, usize, f64)>,
    pub symmetric: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    pub m: usize,
    pub relation: Relation,
    #[serde(rename = "C")]
    pub c: Vec<(usize, usize, f64)>,
    pub d: Vec<f64>,
}

impl From<&IpInstance> for InstanceFile {
    fn from(inst: &IpInstance) -> Self {
        InstanceFile {
            n: inst.n(),
            sense: inst.sense,
            offset: inst.offset,
            b: inst.linear.clone(),
            a: inst.quadratic.as_ref().map(|a| QuadraticFile {
                triplets: a.triplets().collect(),
                symmetric: inst.symmetric,
            }),
            constraints: inst.constraints.as_ref().map(|c| ConstraintFile {
                m: c.m(),
                relation: c.relation,
                c: c.matrix.triplets().collect(),
                d: c.rhs.clone(),
            }),
        }
    }
}

impl TryFrom<InstanceFile> for IpInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let n = file.n;
        if n == 0 {
            return Err(Error::parse("n", "must be at least 1"));
        }
        if file.b.len() != n {
            return Err(Error::parse("b", format!("expected {n} entries, got {}", file.b.len())));
        }
        let quadratic = match &file.a {
            None => None,
            Some(q) => Some(
                SparseMatrix::from_triplets(n, n, &q.triplets)
                    .map_err(|e| Error::parse("A.triplets", e.to_string()))?,
            ),
        };
        let symmetric = file.a.as_ref().is_some_and(|q| q.symmetric);
        let constraints = match file.constraints {
            None => None,
            Some(c) => {
                if c.d.len() != c.m {
                    return Err(Error::parse(
                        "constraints.d",
                        format!("expected {} entries, got {}", c.m, c.d.len()),
                    ));
                }
                let matrix = SparseMatrix::from_triplets(c.m, n, &c.c)
                    .map_err(|e| Error::parse("constraints.C", e.to_string()))?;
                Some(ConstraintBlock::new(matrix, c.d, c.relation)?)
            }
        };
        IpInstance::new(file.sense, quadratic, symmetric, file.b, constraints, file.offset)
            .map_err(|e| match e {
                Error::Invalid { field, reason } => Error::Parse { field, reason },
                other => other,
            })
    }
}

/// Decodes an instance from JSON text.
pub fn parse_instance(text: &str) -> Result<IpInstance> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::parse(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
    })?;
    IpInstance::try_from(file)
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<IpInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text)
}

/// Serialises `inst` to JSON text (single line, trailing newline).
pub fn instance_to_json(inst: &IpInstance) -> String {
    let mut s = serde_json::to_string(&InstanceFile::from(inst)).expect("instance serialises");
    s.push('\n');
    s
}

pub fn write_instance(inst: &IpInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, instance_to_json(inst)).map_err(|e| Error::io(path, e))
}
