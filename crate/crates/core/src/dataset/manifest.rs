//! Potsdam patch naming, per-patch records and the fixed train/validation split.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatchId {
    pub row: u32,
    pub col: u32,
}

impl PatchId {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for PatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "IRRG")]
    Irrg,
    #[serde(rename = "RGBIR")]
    Rgbir,
    #[serde(rename = "DSM")]
    Dsm,
    #[serde(rename = "GT")]
    Gt,
}

/// Patches with known annotation errors, left out unless asked for.
pub const DEFAULT_EXCLUDED: [PatchId; 1] = [PatchId::new(7, 10)];

pub const VALIDATION_PATCHES: [PatchId; 5] = [
    PatchId::new(7, 7),
    PatchId::new(7, 8),
    PatchId::new(7, 9),
    PatchId::new(7, 11),
    PatchId::new(7, 12),
];

fn patterns() -> &'static (Regex, Regex) {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"^top_potsdam_(\d+)_(\d+)_(RGBIR|IRRG|RGB|label)$").unwrap(),
            Regex::new(r"^dsm_potsdam_(\d{2})_(\d{2})$").unwrap(),
        )
    })
}

/// Recognizes a Potsdam file name, with or without directory and extension.
pub fn parse_patch_name(filename: &str) -> Result<(PatchId, Modality)> {
    let unknown = || Error::Data(format!("unrecognized patch file name {filename:?}"));
    let base = Path::new(filename)
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(unknown)?;
    let stem = match base.find('.') {
        Some(k) => &base[..k],
        None => base,
    };
    let (top, dsm) = patterns();
    let (row, col, modality) = if let Some(c) = top.captures(stem) {
        let m = match &c[3] {
            "RGB" => Modality::Rgb,
            "IRRG" => Modality::Irrg,
            "RGBIR" => Modality::Rgbir,
            _ => Modality::Gt,
        };
        (c[1].to_string(), c[2].to_string(), m)
    } else if let Some(c) = dsm.captures(stem) {
        (c[1].to_string(), c[2].to_string(), Modality::Dsm)
    } else {
        return Err(unknown());
    };
    let row: u32 = row.parse().map_err(|_| unknown())?;
    let col: u32 = col.parse().map_err(|_| unknown())?;
    if row == 0 || col == 0 {
        return Err(unknown());
    }
    Ok((PatchId::new(row, col), modality))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: PatchId,
    pub files: BTreeMap<Modality, PathBuf>,
    /// DSM plus either RGBIR or both RGB and IRRG.
    pub complete: bool,
    pub excluded: bool,
    pub issues: Vec<String>,
}

impl PatchRecord {
    pub fn has(&self, m: Modality) -> bool {
        self.files.contains_key(&m)
    }

    pub fn has_gt(&self) -> bool {
        self.has(Modality::Gt)
    }

    /// Complete, labeled and not excluded.
    pub fn usable_labeled(&self) -> bool {
        self.complete && self.has_gt() && !self.excluded
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<PatchRecord>,
    /// Listing entries that match no known pattern.
    pub unrecognized: Vec<String>,
}

impl Manifest {
    pub fn get(&self, id: PatchId) -> Option<&PatchRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn labeled(&self) -> impl Iterator<Item = &PatchRecord> {
        self.records.iter().filter(|r| r.usable_labeled())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn build_manifest<S: AsRef<str>>(listing: &[S]) -> Manifest {
    build_manifest_excluding(listing, &DEFAULT_EXCLUDED)
}

pub fn build_manifest_excluding<S: AsRef<str>>(listing: &[S], excluded: &[PatchId]) -> Manifest {
    let mut by_id: BTreeMap<PatchId, PatchRecord> = BTreeMap::new();
    let mut unrecognized = Vec::new();
    for entry in listing {
        let entry = entry.as_ref();
        let Ok((id, modality)) = parse_patch_name(entry) else {
            unrecognized.push(entry.to_string());
            continue;
        };
        let record = by_id.entry(id).or_insert_with(|| PatchRecord {
            id,
            files: BTreeMap::new(),
            complete: false,
            excluded: excluded.contains(&id),
            issues: Vec::new(),
        });
        if let Some(prev) = record.files.insert(modality, PathBuf::from(entry)) {
            record
                .issues
                .push(format!("duplicate {modality:?} entry, {} replaced", prev.display()));
        }
    }
    for record in by_id.values_mut() {
        let imagery = record.has(Modality::Rgbir) || (record.has(Modality::Rgb) && record.has(Modality::Irrg));
        if !record.has(Modality::Dsm) {
            record.issues.push("missing DSM".into());
        }
        if !imagery {
            record.issues.push("missing RGBIR and RGB+IRRG imagery".into());
        }
        record.complete = imagery && record.has(Modality::Dsm);
    }
    Manifest {
        records: by_id.into_values().collect(),
        unrecognized,
    }
}

/// Builds a manifest from the regular files directly inside `dir`.
pub fn scan_directory(dir: &Path) -> Result<Manifest> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_file() {
            names.push(entry.path().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(build_manifest(&names))
}

/// Validation = the fixed five patches; training = every other usable labeled patch.
pub fn split_train_val(manifest: &Manifest) -> Result<(Vec<PatchRecord>, Vec<PatchRecord>)> {
    let mut val = Vec::with_capacity(VALIDATION_PATCHES.len());
    for id in VALIDATION_PATCHES {
        match manifest.get(id) {
            Some(r) if r.usable_labeled() => val.push(r.clone()),
            Some(_) => {
                return Err(Error::Data(format!(
                    "validation patch {id} is not a complete labeled record"
                )))
            }
            None => return Err(Error::Data(format!("validation patch {id} is missing"))),
        }
    }
    let train = manifest
        .labeled()
        .filter(|r| !VALIDATION_PATCHES.contains(&r.id))
        .cloned()
        .collect();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(
            parse_patch_name("top_potsdam_2_10_RGBIR.tif").unwrap(),
            (PatchId::new(2, 10), Modality::Rgbir)
        );
        assert_eq!(
            parse_patch_name("dsm_potsdam_07_08.tif").unwrap(),
            (PatchId::new(7, 8), Modality::Dsm)
        );
        assert_eq!(
            parse_patch_name("top_potsdam_7_7_label.tif").unwrap(),
            (PatchId::new(7, 7), Modality::Gt)
        );
        assert_eq!(
            parse_patch_name("data/top_potsdam_3_12_RGB.ppm").unwrap(),
            (PatchId::new(3, 12), Modality::Rgb)
        );
        assert_eq!(parse_patch_name("top_potsdam_3_12_IRRG").unwrap().1, Modality::Irrg);
        for bad in ["dsm_potsdam_7_8.tif", "top_potsdam_0_3_RGB", "top_potsdam_2_10_NIR", "readme.txt"] {
            assert!(parse_patch_name(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn empty_listing() {
        let m = build_manifest::<&str>(&[]);
        assert!(m.records.is_empty());
    }

    #[test]
    fn missing_dsm_flags_incomplete() {
        let m = build_manifest(&["top_potsdam_2_10_RGBIR.tif", "top_potsdam_2_10_label.tif"]);
        assert_eq!(m.records.len(), 1);
        assert!(!m.records[0].complete);
        assert!(m.records[0].issues.iter().any(|s| s.contains("DSM")));
    }

    #[test]
    fn rgb_plus_irrg_is_enough() {
        let m = build_manifest(&["top_potsdam_2_10_RGB", "top_potsdam_2_10_IRRG", "dsm_potsdam_02_10"]);
        assert!(m.records[0].complete);
    }

    #[test]
    fn split_names_missing_patch() {
        let listing: Vec<String> = VALIDATION_PATCHES
            .iter()
            .filter(|id| **id != PatchId::new(7, 12))
            .flat_map(|id| {
                [
                    format!("top_potsdam_{}_{}_RGBIR", id.row, id.col),
                    format!("dsm_potsdam_{:02}_{:02}", id.row, id.col),
                    format!("top_potsdam_{}_{}_label", id.row, id.col),
                ]
            })
            .collect();
        let err = split_train_val(&build_manifest(&listing)).unwrap_err().to_string();
        assert!(err.contains("7_12"), "{err}");
    }
}
