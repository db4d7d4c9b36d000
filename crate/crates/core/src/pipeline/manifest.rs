use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Split};

/// Environment variable naming the default workspace root.
pub const WORKSPACE_ENV: &str = "STEPGRAPH_WORKSPACE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path of the STEP file, relative to the workspace root.
    pub path: String,
    pub class_id: usize,
    pub class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Application protocol tag, e.g. `AP214`.
    pub schema: String,
    /// Class names indexed by class id.
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class ids must be contiguous from 0, every class must be populated
    /// and entry class names must agree with the class table.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Manifest(m));
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        let mut seen = vec![false; self.classes.len()];
        for e in &self.entries {
            let Some(name) = self.classes.get(e.class_id) else {
                return bad(format!("{}: class id {} out of range", e.path, e.class_id));
            };
            if *name != e.class_name {
                return bad(format!(
                    "{}: class name '{}' does not match class {} ('{name}')",
                    e.path, e.class_name, e.class_id
                ));
            }
            seen[e.class_id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return bad(format!("class {missing} has no entries"));
        }
        let tagged = self.entries.iter().filter(|e| e.split.is_some()).count();
        if tagged != 0 && tagged != self.entries.len() {
            return bad("split tags must be given for all entries or none".into());
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| PipelineError::io(path, e))
    }

    pub fn resolve(&self, root: &Path, entry: &ManifestEntry) -> PathBuf {
        root.join(&entry.path)
    }
}

/// Workspace root: explicit flag, then `STEPGRAPH_WORKSPACE`, then the
/// directory holding the manifest.
pub fn resolve_workspace(flag: Option<&Path>, manifest_path: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(WORKSPACE_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
