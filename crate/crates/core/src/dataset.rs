//! Ground-truth parsing and train/validation/test splits.
//!
//! Ground truth is a small CSV with one row per image:
//!
//! ```text
//! image_id,malignant,nonmelanocytic
//! ISIC_0000000,0,0
//! ```
//!
//! `malignant` is 1 for malignant lesions and 0 for benign ones;
//! `nonmelanocytic` is 1 for non-melanocytic lesions and 0 for melanocytic
//! ones. Images are paired with rows by file stem and are not decoded here.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub const CANONICAL_HEADER: [&str; 3] = ["image_id", "malignant", "nonmelanocytic"];
pub const ISIC2017_HEADER: [&str; 3] = ["image_id", "melanoma", "seborrheic_keratosis"];

/// Image extensions accepted next to the ground truth, in lookup priority order.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("line 1: missing or unexpected header, expected `{expected}`")]
    MissingHeader { expected: String },
    #[error("line {line}: duplicate image id `{id}`")]
    DuplicateImageId { line: usize, id: String },
    #[error("line {line}: label `{token}` is not one of 0, 1, 0.0, 1.0")]
    LabelOutOfDomain { line: usize, token: String },
    #[error("line {line}: expected 3 columns, found {found}")]
    RaggedRow { line: usize, found: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: invalid image id `{id}`")]
    InvalidImageId { line: usize, id: String },
    #[error("missing image file for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingImageFile(Vec<String>),
    #[error("{} image file(s) have no ground-truth row: {}", .0.len(), .0.join(", "))]
    UnlabeledImageFile(Vec<String>),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown split `{0}` (expected train, validation or test)")]
    UnknownSplit(String),
    #[error("cannot read image directory {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Which binary task a label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Benign (0) vs. malignant (1).
    Malignancy,
    /// Melanocytic (0) vs. non-melanocytic (1).
    CellOrigin,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Malignancy, Task::CellOrigin];

    pub fn name(self) -> &'static str {
        match self {
            Task::Malignancy => "malignancy",
            Task::CellOrigin => "cell-origin",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "malignancy" => Ok(Task::Malignancy),
            "cell-origin" | "cell_origin" => Ok(Task::CellOrigin),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub malignant: u8,
    pub nonmelanocytic: u8,
}

impl GroundTruthRecord {
    pub fn label(&self, task: Task) -> u8 {
        match task {
            Task::Malignancy => self.malignant,
            Task::CellOrigin => self.nonmelanocytic,
        }
    }
}

/// Column layout of an incoming ground-truth file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelSchema {
    #[default]
    Canonical,
    /// ISIC 2017 challenge layout: melanoma maps to `malignant`,
    /// seborrheic_keratosis maps to `nonmelanocytic`.
    Isic2017,
}

impl LabelSchema {
    fn header(self) -> [&'static str; 3] {
        match self {
            LabelSchema::Canonical => CANONICAL_HEADER,
            LabelSchema::Isic2017 => ISIC2017_HEADER,
        }
    }
}

impl FromStr for LabelSchema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(LabelSchema::Canonical),
            "isic2017" => Ok(LabelSchema::Isic2017),
            other => Err(format!("unknown label schema `{other}`")),
        }
    }
}

pub fn is_valid_image_id(id: &str) -> bool {
    !id.is_empty() && !id.contains(['/', '\\'])
}

fn parse_label(token: &str, line: usize) -> Result<u8, DatasetError> {
    match token {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        _ => Err(DatasetError::LabelOutOfDomain {
            line,
            token: token.to_string(),
        }),
    }
}

/// Parses a canonical ground-truth file.
pub fn parse_ground_truth(csv_text: &str) -> Result<Vec<GroundTruthRecord>, DatasetError> {
    parse_ground_truth_with(csv_text, LabelSchema::Canonical)
}

pub fn parse_ground_truth_with(
    csv_text: &str,
    schema: LabelSchema,
) -> Result<Vec<GroundTruthRecord>, DatasetError> {
    let text = csv_text.strip_prefix('\u{feff}').unwrap_or(csv_text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();

    let expected = schema.header();
    let header_ok = match rows.next() {
        Some(Ok(h)) => h.iter().eq(expected.iter().copied()),
        _ => false,
    };
    if !header_ok {
        return Err(DatasetError::MissingHeader {
            expected: expected.join(","),
        });
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rows {
        let row = row.map_err(|e| DatasetError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        // Whitespace-only lines.
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() != 3 {
            return Err(DatasetError::RaggedRow { line, found: row.len() });
        }
        let id = &row[0];
        if !is_valid_image_id(id) {
            return Err(DatasetError::InvalidImageId {
                line,
                id: id.to_string(),
            });
        }
        let malignant = parse_label(&row[1], line)?;
        let nonmelanocytic = parse_label(&row[2], line)?;
        if !seen.insert(id.to_string()) {
            return Err(DatasetError::DuplicateImageId {
                line,
                id: id.to_string(),
            });
        }
        records.push(GroundTruthRecord {
            image_id: id.to_string(),
            malignant,
            nonmelanocytic,
        });
    }
    Ok(records)
}

/// Writes records in the canonical layout; the inverse of [`parse_ground_truth`].
pub fn serialize_ground_truth(records: &[GroundTruthRecord]) -> String {
    let mut out = CANONICAL_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},{}\n", r.image_id, r.malignant, r.nonmelanocytic));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image_id: String,
    pub path: PathBuf,
    pub record: GroundTruthRecord,
}

/// A labeled split. Paths are resolved but images are decoded lazily.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.image_id.as_str())
    }
}

/// How [`load_split_with`] treats rows and files that do not pair up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    #[default]
    Strict,
    /// Drop unpaired rows and ignore unlabeled files, reporting them as warnings.
    AllowMissing,
}

/// Result of a lenient load: the dataset plus everything that was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSplit {
    pub dataset: Dataset,
    pub dropped_ids: Vec<String>,
    pub unlabeled_files: Vec<String>,
}

/// Lists image files in `dir` keyed by file stem. When a stem appears with
/// several extensions the first in [`IMAGE_EXTENSIONS`] order wins.
pub fn scan_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>, DatasetError> {
    let io_err = |e: std::io::Error| DatasetError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    };
    let mut found: BTreeMap<String, (usize, PathBuf)> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let ext = ext.to_ascii_lowercase();
        let Some(rank) = IMAGE_EXTENSIONS.iter().position(|e| *e == ext) else {
            continue;
        };
        match found.get(stem) {
            Some((existing, _)) if *existing <= rank => {}
            _ => {
                found.insert(stem.to_string(), (rank, path));
            }
        }
    }
    Ok(found.into_iter().map(|(k, (_, p))| (k, p)).collect())
}

/// Pairs records with `<image_id>.{jpg,jpeg,png}` files under `image_dir`.
pub fn load_split(
    image_dir: &Path,
    records: &[GroundTruthRecord],
    split_name: &str,
) -> Result<Dataset, DatasetError> {
    load_split_with(image_dir, records, split_name, Pairing::Strict).map(|l| l.dataset)
}

pub fn load_split_with(
    image_dir: &Path,
    records: &[GroundTruthRecord],
    split_name: &str,
    pairing: Pairing,
) -> Result<LoadedSplit, DatasetError> {
    let split: Split = split_name.parse()?;
    let mut files = scan_images(image_dir)?;

    let mut examples = Vec::with_capacity(records.len());
    let mut missing = Vec::new();
    for record in records {
        match files.remove(&record.image_id) {
            Some(path) => examples.push(Example {
                image_id: record.image_id.clone(),
                path,
                record: record.clone(),
            }),
            None => missing.push(record.image_id.clone()),
        }
    }
    let unlabeled: Vec<String> = files.into_keys().collect();

    if pairing == Pairing::Strict {
        if !missing.is_empty() {
            return Err(DatasetError::MissingImageFile(missing));
        }
        if !unlabeled.is_empty() {
            return Err(DatasetError::UnlabeledImageFile(unlabeled));
        }
    }
    if examples.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(LoadedSplit {
        dataset: Dataset { split, examples },
        dropped_ids: missing,
        unlabeled_files: unlabeled,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub count: usize,
    /// Indexed like [`Task::ALL`].
    pub positives: [usize; 2],
    /// `positives / count`, absent for an empty dataset.
    pub balance: [Option<f64>; 2],
}

pub fn dataset_summary(d: &Dataset) -> DatasetSummary {
    summarize_records(d.examples.iter().map(|e| &e.record))
}

pub fn summarize_records<'a>(
    records: impl IntoIterator<Item = &'a GroundTruthRecord>,
) -> DatasetSummary {
    let mut count = 0;
    let mut positives = [0usize; 2];
    for r in records {
        count += 1;
        for (slot, task) in positives.iter_mut().zip(Task::ALL) {
            *slot += r.label(task) as usize;
        }
    }
    let balance = positives.map(|p| (count > 0).then(|| p as f64 / count as f64));
    DatasetSummary {
        count,
        positives,
        balance,
    }
}

/// Label lookup for one task, keyed by image id.
pub fn task_labels(records: &[GroundTruthRecord], task: Task) -> HashMap<String, u8> {
    records
        .iter()
        .map(|r| (r.image_id.clone(), r.label(task)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, m: u8, n: u8) -> GroundTruthRecord {
        GroundTruthRecord {
            image_id: id.into(),
            malignant: m,
            nonmelanocytic: n,
        }
    }

    #[test]
    fn parses_single_benign_melanocytic_row() {
        let got = parse_ground_truth("image_id,malignant,nonmelanocytic\nISIC_0000000,0,0").unwrap();
        assert_eq!(got, vec![rec("ISIC_0000000", 0, 0)]);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_ground_truth("image_id,malignant,nonmelanocytic\n")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn label_two_is_rejected_with_line() {
        let err = parse_ground_truth("image_id,malignant,nonmelanocytic\nISIC_0000001,2,0").unwrap_err();
        assert_eq!(
            err,
            DatasetError::LabelOutOfDomain {
                line: 2,
                token: "2".into()
            }
        );
    }

    #[test]
    fn float_labels_and_crlf() {
        let got = parse_ground_truth(
            "image_id,malignant,nonmelanocytic\r\nA,1.0,0.0\r\nB,0,1\r\n",
        )
        .unwrap();
        assert_eq!(got, vec![rec("A", 1, 0), rec("B", 0, 1)]);
    }

    #[test]
    fn near_miss_floats_are_not_rounded() {
        for tok in ["0.5", "1.00", "true", "", "-0"] {
            let text = format!("image_id,malignant,nonmelanocytic\nA,{tok},0");
            assert!(matches!(
                parse_ground_truth(&text),
                Err(DatasetError::LabelOutOfDomain { line: 2, .. })
            ));
        }
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            parse_ground_truth("id,a,b\nA,0,0"),
            Err(DatasetError::MissingHeader { .. })
        ));
        assert!(matches!(parse_ground_truth(""), Err(DatasetError::MissingHeader { .. })));
        assert_eq!(
            parse_ground_truth("image_id,malignant,nonmelanocytic\nA,0,0\nB,0\n").unwrap_err(),
            DatasetError::RaggedRow { line: 3, found: 2 }
        );
        assert_eq!(
            parse_ground_truth("image_id,malignant,nonmelanocytic\nA,0,0\nA,1,1\n").unwrap_err(),
            DatasetError::DuplicateImageId {
                line: 3,
                id: "A".into()
            }
        );
        assert!(matches!(
            parse_ground_truth("image_id,malignant,nonmelanocytic\nx/y,0,0\n"),
            Err(DatasetError::InvalidImageId { line: 2, .. })
        ));
    }

    #[test]
    fn isic_header_maps_columns() {
        let text = "image_id,melanoma,seborrheic_keratosis\nISIC_1,1.0,0.0\nISIC_2,0.0,1.0\n";
        assert!(parse_ground_truth(text).is_err());
        let got = parse_ground_truth_with(text, LabelSchema::Isic2017).unwrap();
        assert_eq!(got, vec![rec("ISIC_1", 1, 0), rec("ISIC_2", 0, 1)]);
    }

    #[test]
    fn summary_counts() {
        let records = [rec("a", 1, 0), rec("b", 0, 0), rec("c", 1, 0), rec("d", 1, 1)];
        let s = summarize_records(&records);
        assert_eq!(s.count, 4);
        assert_eq!(s.positives, [3, 1]);
        assert_eq!(s.balance, [Some(0.75), Some(0.25)]);

        let zeros = [rec("a", 0, 0), rec("b", 0, 0)];
        assert_eq!(summarize_records(&zeros).positives, [0, 0]);

        let empty = summarize_records(&[]);
        assert_eq!(empty.count, 0);
        assert_eq!(empty.balance, [None, None]);
    }

    #[test]
    fn split_names() {
        assert_eq!("validation".parse::<Split>().unwrap(), Split::Validation);
        assert!(matches!("dev".parse::<Split>(), Err(DatasetError::UnknownSplit(_))));
    }
}
