//! Dataset manifests: `video_id,class_id,split` rows plus a sibling
//! `class_id,name` table.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Novel,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Base => "base",
            Split::Novel => "novel",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub class_id: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ClassRow {
    class_id: usize,
    name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_names: BTreeMap<usize, String>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, class_names: BTreeMap<usize, String>) -> Result<Self> {
        let m = DatasetManifest { entries, class_names };
        m.validate()?;
        Ok(m)
    }

    /// Checks split disjointness and unique video ids.
    pub fn validate(&self) -> Result<()> {
        let mut split_of: BTreeMap<usize, Split> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(e.video_id.as_str()) {
                return Err(TatError::Validation(format!("duplicate video id '{}'", e.video_id)));
            }
            match split_of.insert(e.class_id, e.split) {
                Some(prev) if prev != e.split => {
                    return Err(TatError::Validation(format!(
                        "class {} appears in both base and novel splits",
                        e.class_id
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Every class of `split` must have at least `k_shot + 1` videos.
    pub fn validate_for(&self, split: Split, k_shot: usize) -> Result<()> {
        for (class, videos) in self.videos_by_class(split) {
            if videos.len() < k_shot + 1 {
                return Err(TatError::Validation(format!(
                    "class {class} has {} {split} videos, need at least {}",
                    videos.len(),
                    k_shot + 1
                )));
            }
        }
        Ok(())
    }

    /// Entry indices grouped by class, classes ascending.
    pub fn videos_by_class(&self, split: Split) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.split == split {
                out.entry(e.class_id).or_default().push(i);
            }
        }
        out
    }

    /// Sorted class ids of a split.
    pub fn classes(&self, split: Split) -> Vec<usize> {
        self.videos_by_class(split).into_keys().collect()
    }

    pub fn to_csv(&self) -> Result<(String, String)> {
        let csv_err = |e: csv::Error| TatError::Data(format!("manifest serialization failed: {e}"));
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e).map_err(csv_err)?;
        }
        let rows = String::from_utf8(w.into_inner().map_err(|e| TatError::Data(e.to_string()))?)
            .expect("csv output is UTF-8");
        let mut w = csv::Writer::from_writer(Vec::new());
        for (&class_id, name) in &self.class_names {
            w.serialize(ClassRow { class_id, name: name.clone() }).map_err(csv_err)?;
        }
        let names = String::from_utf8(w.into_inner().map_err(|e| TatError::Data(e.to_string()))?)
            .expect("csv output is UTF-8");
        Ok((rows, names))
    }

    pub fn from_csv(rows: &str, names: Option<&str>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut r = csv::Reader::from_reader(rows.as_bytes());
        let headers = r.headers().map_err(|e| TatError::parse("manifest header", e.to_string()))?;
        if headers != vec!["video_id", "class_id", "split"] {
            return Err(TatError::parse(
                "manifest header",
                format!("expected video_id,class_id,split, found {}", headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        for (i, rec) in r.deserialize::<ManifestEntry>().enumerate() {
            entries.push(rec.map_err(|e| TatError::parse(format!("manifest row {}", i + 1), e.to_string()))?);
        }
        let mut class_names = BTreeMap::new();
        if let Some(names) = names {
            let mut r = csv::Reader::from_reader(names.as_bytes());
            for (i, rec) in r.deserialize::<ClassRow>().enumerate() {
                let row = rec.map_err(|e| TatError::parse(format!("class table row {}", i + 1), e.to_string()))?;
                class_names.insert(row.class_id, row.name);
            }
        }
        Self::new(entries, class_names)
    }

    /// Writes `path` and its sibling `classes.csv`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (rows, names) = self.to_csv()?;
        crate::io_util::write_atomic(path, rows.as_bytes())?;
        crate::io_util::write_atomic(&class_table_path(path), names.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rows = fs::read_to_string(path).map_err(|e| TatError::io(path, e))?;
        let names_path = class_table_path(path);
        let names = if names_path.exists() {
            Some(fs::read_to_string(&names_path).map_err(|e| TatError::io(&names_path, e))?)
        } else {
            None
        };
        Self::from_csv(&rows, names.as_deref())
    }
}

pub fn class_table_path(manifest: &Path) -> std::path::PathBuf {
    manifest.with_file_name("classes.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, class_id: usize, split: Split) -> ManifestEntry {
        ManifestEntry { video_id: id.into(), class_id, split }
    }

    #[test]
    fn csv_round_trip() {
        let mut names = BTreeMap::new();
        names.insert(0, "push, left".to_string());
        names.insert(1, "spin".to_string());
        let m = DatasetManifest::new(vec![entry("a", 0, Split::Base), entry("b", 1, Split::Novel)], names).unwrap();
        let (rows, table) = m.to_csv().unwrap();
        assert!(rows.starts_with("video_id,class_id,split\n"));
        assert_eq!(DatasetManifest::from_csv(&rows, Some(&table)).unwrap(), m);
    }

    #[test]
    fn overlapping_splits_rejected() {
        let err = DatasetManifest::new(vec![entry("a", 0, Split::Base), entry("b", 0, Split::Novel)], BTreeMap::new());
        assert!(err.is_err());
        let err = DatasetManifest::new(vec![entry("a", 0, Split::Base), entry("a", 0, Split::Base)], BTreeMap::new());
        assert!(err.is_err());
    }

    #[test]
    fn bad_header_and_rows() {
        assert!(DatasetManifest::from_csv("id,class\nx,1\n", None).is_err());
        match DatasetManifest::from_csv("video_id,class_id,split\nx,1,train\n", None).unwrap_err() {
            TatError::Parse { record, .. } => assert_eq!(record, "manifest row 1"),
            e => panic!("{e}"),
        }
    }
}
