//! Table schema: per-column roles, binning policies and value transforms.
//!
//! A schema is declared in a TOML file:
//!
//! ```toml
//! delimiter = ","
//! has_header = true
//! missing_values = ["NA", "NaN", "null"]
//!
//! [[columns]]
//! name = "Sex"
//! role = "categorical"
//!
//! [[columns]]
//! name = "Age"
//! role = "numeric"
//! bins = { quantile = 20 }
//!
//! [[columns]]
//! name = "Date"
//! role = "numeric"
//! bins = { quantile = 50 }
//! transform = { day_of_year = { format = "%Y-%m-%d" } }
//!
//! [[columns]]
//! name = "Survived"
//! role = "target"
//! target_kind = "binary"
//!
//! [[columns]]
//! name = "PassengerId"
//! role = "excluded"
//! ```
//!
//! File columns not listed in the schema are dropped at parse time.
//! `excluded` columns are kept as raw strings so they can be used for row
//! filtering, but never contribute entities.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Categorical,
    Numeric,
    Excluded,
    Target,
}

/// How a numeric column is discretized into bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinPolicy {
    /// Equal-frequency interior bins by empirical quantiles.
    Quantile(usize),
    /// One degenerate bin per distinct training value.
    PerDistinctValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Binary,
    Continuous,
}

/// Optional cell-level rewrite applied before numeric parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueTransform {
    /// Parse the cell as a date and replace it with its day of year (1..=366).
    DayOfYear {
        #[serde(default = "default_date_format")]
        format: String,
    },
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<BinPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<ValueTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kind: Option<TargetKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Cells matching one of these strings (or the empty string) are missing.
    #[serde(default = "default_missing_values")]
    pub missing_values: Vec<String>,
    pub columns: Vec<ColumnSpec>,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

fn default_missing_values() -> Vec<String> {
    vec!["NA".to_string(), "NaN".to_string(), "null".to_string()]
}

impl TableSchema {
    /// Parse a schema from TOML, fill per-column defaults and validate it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut schema: TableSchema =
            toml::from_str(text).map_err(|e| Error::InvalidSchema(e.to_string()))?;
        schema.fill_defaults();
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("schema serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let schema: TableSchema =
            serde_json::from_str(text).map_err(|e| Error::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    fn fill_defaults(&mut self) {
        for col in &mut self.columns {
            if col.role == ColumnRole::Numeric && col.bins.is_none() {
                col.bins = Some(BinPolicy::Quantile(20));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
            match col.role {
                ColumnRole::Numeric => {
                    if let Some(BinPolicy::Quantile(k)) = col.bins {
                        if k < 1 {
                            return Err(Error::InvalidSchema(format!(
                                "column {:?}: quantile bin count must be >= 1",
                                col.name
                            )));
                        }
                    }
                }
                ColumnRole::Target => {
                    if col.target_kind.is_none() {
                        return Err(Error::InvalidSchema(format!(
                            "target column {:?} needs target_kind = \"binary\" | \"continuous\"",
                            col.name
                        )));
                    }
                }
                _ => {}
            }
            if col.role != ColumnRole::Numeric && col.bins.is_some() {
                return Err(Error::InvalidSchema(format!(
                    "column {:?}: bins only apply to numeric columns",
                    col.name
                )));
            }
        }
        let targets = self
            .columns
            .iter()
            .filter(|c| c.role == ColumnRole::Target)
            .count();
        if targets > 1 {
            return Err(Error::InvalidSchema(
                "at most one column may have role = \"target\"".to_string(),
            ));
        }
        let features = self
            .columns
            .iter()
            .filter(|c| matches!(c.role, ColumnRole::Categorical | ColumnRole::Numeric))
            .count();
        if features == 0 {
            return Err(Error::InvalidSchema(
                "schema needs at least one categorical or numeric column".to_string(),
            ));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn target_column(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.role == ColumnRole::Target)
    }

    pub fn is_missing(&self, cell: &str) -> bool {
        cell.is_empty() || self.missing_values.iter().any(|s| s == cell)
    }

    /// Copy of the schema with all value transforms removed, for re-reading
    /// intermediate tables whose cells are already transformed.
    pub fn without_transforms(&self) -> Self {
        let mut out = self.clone();
        for col in &mut out.columns {
            col.transform = None;
        }
        out
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
