//! Versioned JSON model documents.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

pub const FORMAT: &str = "corex-model";
pub const VERSION: u32 = 1;

/// A fitted hierarchy with the schema of the data it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub version: u32,
    pub column_names: Vec<String>,
    /// Per-column category strings in code order, when the training data
    /// was read from text.
    pub codebooks: Option<Vec<Vec<String>>>,
    pub hierarchy: Hierarchy,
}

impl Model {
    pub fn new(hierarchy: Hierarchy, data: &DataMatrix) -> Self {
        Model {
            format: FORMAT.to_string(),
            version: VERSION,
            column_names: (0..data.n_vars()).map(|i| data.column_label(i)).collect(),
            codebooks: data.codebooks().map(<[_]>::to_vec),
            hierarchy,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Model = serde_json::from_str(text)?;
        if model.format != FORMAT {
            return Err(Error::SchemaMismatch(format!("not a model document (format {:?})", model.format)));
        }
        if model.version != VERSION {
            return Err(Error::SchemaMismatch(format!(
                "model version {} is not supported (expected {VERSION})",
                model.version
            )));
        }
        if model.hierarchy.layers.is_empty() {
            return Err(Error::SchemaMismatch("model has no layers".into()));
        }
        let n = model.hierarchy.layers[0].n_vars();
        if model.column_names.len() != n || model.codebooks.as_ref().is_some_and(|b| b.len() != n) {
            return Err(Error::SchemaMismatch("column metadata does not match the first layer".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks that `data` has the training columns, by name when both sides
    /// carry names.
    pub fn check_columns(&self, data: &DataMatrix) -> Result<()> {
        if data.n_vars() != self.column_names.len() {
            return Err(Error::SchemaMismatch(format!(
                "data has {} columns, model expects {}",
                data.n_vars(),
                self.column_names.len()
            )));
        }
        if let Some(names) = data.column_names() {
            for (i, (got, want)) in names.iter().zip(&self.column_names).enumerate() {
                if got != want {
                    return Err(Error::SchemaMismatch(format!(
                        "column {i} is named {got:?}, model expects {want:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::fit_hierarchy;
    use crate::layer::CorexConfig;
    use crate::synthetic::{generate, LatentTreeSpec};

    fn fitted() -> (Model, DataMatrix) {
        let (data, _) = generate(&LatentTreeSpec::new(3, 3).with_seed(4)).unwrap();
        let h = fit_hierarchy(&data, &[CorexConfig::new(3).with_seed(4), CorexConfig::new(1)]).unwrap();
        (Model::new(h, &data), data)
    }

    #[test]
    fn round_trip_is_exact() {
        let (model, data) = fitted();
        let back = Model::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(
            back.hierarchy.transform(&data).unwrap(),
            model.hierarchy.transform(&data).unwrap()
        );
        assert_eq!(back.to_json().unwrap(), model.to_json().unwrap());
    }

    #[test]
    fn rejects_foreign_documents() {
        let (model, _) = fitted();
        let mut other = model.clone();
        other.format = "something".into();
        assert!(Model::from_json(&other.to_json().unwrap()).is_err());
        other = model;
        other.version = 99;
        assert!(matches!(Model::from_json(&other.to_json().unwrap()), Err(Error::SchemaMismatch(_))));
        assert!(Model::from_json("{}").is_err());
    }

    #[test]
    fn column_checks() {
        let (model, data) = fitted();
        assert!(model.check_columns(&data).is_ok());
        let mut names: Vec<String> = data.column_names().unwrap().to_vec();
        names.swap(0, 1);
        let renamed = data.clone().with_column_names(names).unwrap();
        assert!(model.check_columns(&renamed).is_err());
    }
}
