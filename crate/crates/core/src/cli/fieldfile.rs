//! JSON field files.
//!
//! ```json
//! {"kind": "vector", "m": 2, "q": 4, "bounds": [[-1,1],[-1,1]], "shape": [33,33],
//!  "components": ["f1","f2","f3","f4"], "data": [...]}
//! ```
//!
//! `data` is flat and row-major over the grid (axis 1 slowest) with the
//! component index fastest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, Grid};
use crate::jetcalc::pairs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub kind: FieldKind,
    pub m: usize,
    pub q: Option<usize>,
    pub bounds: Vec<[f64; 2]>,
    pub shape: Vec<usize>,
    pub components: Vec<String>,
    pub data: Vec<f64>,
}

pub fn component_labels(kind: FieldKind, m: usize, ncomp: usize) -> Vec<String> {
    match kind {
        FieldKind::Scalar => vec!["h".to_string()],
        FieldKind::Covector => (1..=m).map(|a| format!("h{a}")).collect(),
        FieldKind::Vector => (1..=ncomp).map(|i| format!("f{i}")).collect(),
        FieldKind::Symtensor => pairs(m)
            .into_iter()
            .map(|(a, b)| format!("g{}_{}", a + 1, b + 1))
            .collect(),
    }
}

impl FieldFile {
    /// `q` is recorded for vector fields (their component count) or when
    /// supplied explicitly.
    pub fn from_field(field: &Field, q: Option<usize>) -> Self {
        let grid = field.grid();
        let q = match field.kind() {
            FieldKind::Vector => Some(field.ncomp()),
            _ => q,
        };
        Self {
            kind: field.kind(),
            m: grid.dim(),
            q,
            bounds: grid.bounds().iter().map(|&(a, b)| [a, b]).collect(),
            shape: grid.counts().to_vec(),
            components: component_labels(field.kind(), grid.dim(), field.ncomp()),
            data: field.data().to_vec(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        if self.bounds.len() != self.m || self.shape.len() != self.m {
            return Err(Error::Field(format!(
                "m = {} but {} bound pairs and {} axis sizes",
                self.m,
                self.bounds.len(),
                self.shape.len()
            )));
        }
        Grid::new(
            self.bounds.iter().map(|b| (b[0], b[1])).collect(),
            self.shape.clone(),
        )
    }

    pub fn to_field(&self) -> Result<Field> {
        let grid = self.grid()?;
        let ncomp = self
            .kind
            .components(self.m, self.q)
            .ok_or_else(|| Error::Field("vector field without q".into()))?;
        if self.components.len() != ncomp {
            return Err(Error::Field(format!(
                "{:?} field needs {ncomp} component labels, found {}",
                self.kind,
                self.components.len()
            )));
        }
        if self.data.len() != grid.len() * ncomp {
            return Err(Error::Field(format!(
                "data has {} values, expected {} x {} = {}",
                self.data.len(),
                grid.len(),
                ncomp,
                grid.len() * ncomp
            )));
        }
        Field::from_data(self.kind, &grid, ncomp, self.data.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Field("field contains non-finite values".into()));
        }
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Field(e.to_string()))
    }
}

pub fn write_field(path: &Path, field: &Field, q: Option<usize>) -> Result<()> {
    fs::write(path, FieldFile::from_field(field, q).to_json()?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    FieldFile::from_json(&fs::read_to_string(path)?)?.to_field()
}
