//! Dataset schemas: keypoint names, OKS sigmas, flip pairs, PCKh head joints.
//!
//! The standard schemas ship embedded in the binary and can also be loaded
//! from JSON files with the same structure.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub num_keypoints: usize,
    pub keypoints: Vec<String>,
    /// Per-joint OKS sigmas; absent for datasets evaluated with PCKh only.
    pub oks_sigmas: Option<Vec<f64>>,
    #[serde(default)]
    pub flip_pairs: Vec<(usize, usize)>,
    /// (top joint, bottom joint) of the head segment used as the PCKh scale
    /// when no head bbox is annotated.
    #[serde(default)]
    pub pckh_head_joints: Option<(usize, usize)>,
}

const COCO: &str = include_str!("../data/coco.json");
const AIC: &str = include_str!("../data/aic.json");
const MPII: &str = include_str!("../data/mpii.json");
const SYNTHETIC: &str = include_str!("../data/synthetic.json");

impl Schema {
    pub fn by_name(name: &str) -> Result<Schema> {
        let text = match name {
            "coco" => COCO,
            "aic" => AIC,
            "mpii" => MPII,
            "synthetic" => SYNTHETIC,
            other => {
                return Err(Error::UnknownDataset { id: other.into() });
            }
        };
        Schema::from_json(text, name)
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Schema> {
        let schema: Schema = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            detail: e.to_string(),
        })?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        Schema::from_json(&text, &path.display().to_string())
    }

    /// Load a built-in schema by name, else treat the argument as a path.
    pub fn resolve(name_or_path: &str) -> Result<Schema> {
        match Schema::by_name(name_or_path) {
            Ok(s) => Ok(s),
            Err(Error::UnknownDataset { .. }) => Schema::from_path(Path::new(name_or_path)),
            Err(e) => Err(e),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_keypoints;
        let fail = |detail: String| Err(Error::InvalidConfig { detail });
        if self.keypoints.len() != n {
            return fail(format!(
                "schema {}: {} names for {} keypoints",
                self.name,
                self.keypoints.len(),
                n
            ));
        }
        if let Some(sigmas) = &self.oks_sigmas {
            if sigmas.len() != n {
                return fail(format!("schema {}: sigma count mismatch", self.name));
            }
            if sigmas.iter().any(|&s| s <= 0.0) {
                return fail(format!("schema {}: sigmas must be positive", self.name));
            }
        }
        for &(a, b) in &self.flip_pairs {
            if a >= n || b >= n {
                return fail(format!("schema {}: flip pair out of range", self.name));
            }
        }
        if let Some((a, b)) = self.pckh_head_joints {
            if a >= n || b >= n {
                return fail(format!("schema {}: head joints out of range", self.name));
            }
        }
        Ok(())
    }

    pub fn sigmas(&self) -> Result<&[f64]> {
        self.oks_sigmas.as_deref().ok_or_else(|| Error::InvalidConfig {
            detail: format!("schema {} has no OKS sigmas", self.name),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_schemas_have_expected_arity() {
        assert_eq!(Schema::by_name("coco").unwrap().num_keypoints, 17);
        assert_eq!(Schema::by_name("aic").unwrap().num_keypoints, 14);
        assert_eq!(Schema::by_name("mpii").unwrap().num_keypoints, 16);
        assert_eq!(Schema::by_name("synthetic").unwrap().num_keypoints, 6);
    }

    #[test]
    fn mpii_defines_a_head_segment_but_no_sigmas() {
        let mpii = Schema::by_name("mpii").unwrap();
        assert_eq!(mpii.pckh_head_joints, Some((9, 8)));
        assert!(mpii.sigmas().is_err());
        assert!(Schema::by_name("coco").unwrap().sigmas().is_ok());
    }

    #[test]
    fn unknown_dataset_is_an_error() {
        assert!(matches!(
            Schema::by_name("ochuman"),
            Err(Error::UnknownDataset { .. })
        ));
    }

    #[test]
    fn malformed_schema_json_is_a_parse_error() {
        assert!(matches!(
            Schema::from_json("{\"name\": 3}", "inline"),
            Err(Error::Parse { .. })
        ));
        let wrong_arity = r#"{"name":"x","num_keypoints":3,"keypoints":["a","b"],"oks_sigmas":null}"#;
        assert!(Schema::from_json(wrong_arity, "inline").is_err());
    }
}
