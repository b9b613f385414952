use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::io::{
    read_calibration, read_ground_truth, read_json, read_labels, read_stack, write_calibration, write_ground_truth,
    write_json, write_stack,
};
use crate::imaging::{generate_phantom, Band, CalibrationPair, ChannelStack, GroundTruth, PhantomSpec};

pub const DATASET_FORMAT: &str = "spectag-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Identity of one image within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: String,
    pub subject: String,
    pub split: Split,
}

/// Anything that can hand out labelled raw images one at a time.
pub trait ImageSource: Sync {
    fn classes(&self) -> &[String];
    fn images(&self) -> Vec<ImageInfo>;
    /// Calibration shared by every image of the source.
    fn calibration(&self) -> Result<CalibrationPair>;
    /// Raw stack and ground truth of `images()[index]`.
    fn load(&self, index: usize) -> Result<(ChannelStack, GroundTruth)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    /// Directory holding the channel PNGs and `stack.json`, relative to the root.
    pub stack: PathBuf,
    /// Indexed label PNG, relative to the root; `labels.json` sits next to it.
    pub ground_truth: PathBuf,
    pub subject: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    /// Base directory for relative paths; resolved against the manifest's
    /// directory on load.
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub bands: Vec<Band>,
    /// Directory with `dark/` and `white/` stacks.
    pub calibration: PathBuf,
    pub images: Vec<ImageEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Self = read_json(path)?;
        if m.format != DATASET_FORMAT {
            return Err(Error::format(path, format!("unsupported dataset format {:?}", m.format)));
        }
        if m.root.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            m.root = base.join(&m.root);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    /// Checks paths, unique ids, the subject-level split and label files.
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::InvalidParameter("dataset needs at least two classes".into()));
        }
        let cal = self.resolve(&self.calibration);
        for sub in ["dark", "white"] {
            if !cal.join(sub).is_dir() {
                return Err(Error::format(&cal, format!("missing calibration directory {sub}/")));
            }
        }
        let mut ids = BTreeSet::new();
        let mut subject_split: BTreeMap<&str, Split> = BTreeMap::new();
        for e in &self.images {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate image id {:?}", e.id)));
            }
            if let Some(&prev) = subject_split.get(e.subject.as_str()) {
                if prev != e.split {
                    return Err(Error::InvalidParameter(format!(
                        "subject {:?} appears in both train and test splits",
                        e.subject
                    )));
                }
            }
            subject_split.insert(&e.subject, e.split);
            let stack = self.resolve(&e.stack);
            if !stack.is_dir() {
                return Err(Error::format(&stack, "stack directory not found"));
            }
            let gt = self.resolve(&e.ground_truth);
            if !gt.is_file() {
                return Err(Error::format(&gt, "ground-truth file not found"));
            }
            let labels_path = gt.with_file_name("labels.json");
            let labels = read_labels(&labels_path)?;
            if labels != self.classes {
                return Err(Error::format(&labels_path, "class list differs from the manifest"));
            }
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.images.iter().filter(|e| e.split == split).count()
    }
}

impl ImageSource for DatasetManifest {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn images(&self) -> Vec<ImageInfo> {
        self.images
            .iter()
            .map(|e| ImageInfo {
                id: e.id.clone(),
                subject: e.subject.clone(),
                split: e.split,
            })
            .collect()
    }

    fn calibration(&self) -> Result<CalibrationPair> {
        read_calibration(&self.resolve(&self.calibration))
    }

    fn load(&self, index: usize) -> Result<(ChannelStack, GroundTruth)> {
        let e = &self.images[index];
        let stack = read_stack(&self.resolve(&e.stack))?;
        let gt = read_ground_truth(&self.resolve(&e.ground_truth))?;
        if gt.width() != stack.width() || gt.height() != stack.height() {
            return Err(Error::DimensionMismatch(format!("image {:?}: ground truth and stack differ in size", e.id)));
        }
        if let Some(l) = gt.as_array().iter().flatten().find(|&&l| l as usize >= self.classes.len()) {
            return Err(Error::format(&self.resolve(&e.ground_truth), format!("label {l} outside class list")));
        }
        Ok((stack, gt))
    }
}

/// Recipe for a synthetic dataset with a subject-level train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Template for every image; its seed is replaced per image.
    pub phantom: PhantomSpec,
    pub train_subjects: usize,
    pub test_subjects: usize,
    pub train_images: usize,
    pub test_images: usize,
    /// Relative per-subject, per-class, per-band perturbation of the spectra.
    pub subject_jitter: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::default(),
            train_subjects: 3,
            test_subjects: 4,
            train_images: 29,
            test_images: 28,
            subject_jitter: 0.02,
            seed: 0,
        }
    }
}

/// One planned image of a [`SynthSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedImage {
    pub info: ImageInfo,
    pub spec: PhantomSpec,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        if self.train_subjects == 0 || self.test_subjects == 0 {
            return Err(Error::InvalidParameter("each split needs at least one subject".into()));
        }
        if self.train_images < self.train_subjects || self.test_images < self.test_subjects {
            return Err(Error::InvalidParameter("each subject needs at least one image".into()));
        }
        if !(0.0..0.5).contains(&self.subject_jitter) {
            return Err(Error::InvalidParameter(format!("subject_jitter {} outside [0, 0.5)", self.subject_jitter)));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.phantom.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Per-image phantom specs; images are dealt round-robin over subjects.
    pub fn plan(&self) -> Result<Vec<PlannedImage>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let total_subjects = self.train_subjects + self.test_subjects;
        let subject_specs: Vec<PhantomSpec> = (0..total_subjects)
            .map(|_| {
                let mut spec = self.phantom.clone();
                for class in &mut spec.classes {
                    for v in &mut class.spectrum {
                        *v *= 1.0 + self.subject_jitter * (2.0 * rng.random::<f64>() - 1.0);
                    }
                }
                spec
            })
            .collect();
        let mut out = Vec::with_capacity(self.train_images + self.test_images);
        for (split, count, first_subject, subjects) in [
            (Split::Train, self.train_images, 0, self.train_subjects),
            (Split::Test, self.test_images, self.train_subjects, self.test_subjects),
        ] {
            for k in 0..count {
                let subject = first_subject + k % subjects;
                let mut spec = subject_specs[subject].clone();
                spec.seed = rng.random();
                let prefix = match split {
                    Split::Train => "train",
                    Split::Test => "test",
                };
                out.push(PlannedImage {
                    info: ImageInfo {
                        id: format!("{prefix}_{k:03}"),
                        subject: format!("subject_{subject}"),
                        split,
                    },
                    spec,
                });
            }
        }
        Ok(out)
    }
}

/// A [`SynthSpec`] whose images are generated on demand, never touching disk.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    spec: SynthSpec,
    classes: Vec<String>,
    plan: Vec<PlannedImage>,
}

impl SyntheticSource {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        let plan = spec.plan()?;
        Ok(Self {
            classes: spec.class_names(),
            spec,
            plan,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn plan(&self) -> &[PlannedImage] {
        &self.plan
    }
}

impl ImageSource for SyntheticSource {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn images(&self) -> Vec<ImageInfo> {
        self.plan.iter().map(|p| p.info.clone()).collect()
    }

    fn calibration(&self) -> Result<CalibrationPair> {
        Ok(self.spec.phantom.calibration())
    }

    fn load(&self, index: usize) -> Result<(ChannelStack, GroundTruth)> {
        let p = generate_phantom(&self.plan[index].spec)?;
        Ok((p.raw, p.ground_truth))
    }
}

/// Writes every image of `spec` under `out` and returns the saved manifest.
pub fn write_synthetic_dataset(spec: &SynthSpec, out: &Path) -> Result<DatasetManifest> {
    let source = SyntheticSource::new(spec.clone())?;
    let classes = source.classes().to_vec();
    write_calibration(&out.join("calibration"), &source.calibration()?)?;
    let mut images = Vec::new();
    for (k, planned) in source.plan().iter().enumerate() {
        let (raw, gt) = source.load(k)?;
        let rel = PathBuf::from("images").join(&planned.info.id);
        write_stack(&out.join(&rel).join("stack"), &raw)?;
        write_ground_truth(&out.join(&rel).join("ground_truth.png"), &gt, &classes)?;
        info!("wrote {}", planned.info.id);
        images.push(ImageEntry {
            id: planned.info.id.clone(),
            stack: rel.join("stack"),
            ground_truth: rel.join("ground_truth.png"),
            subject: planned.info.subject.clone(),
            split: planned.info.split,
        });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.to_string(),
        root: PathBuf::from("."),
        classes,
        bands: spec.phantom.bands.clone(),
        calibration: PathBuf::from("calibration"),
        images,
    };
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        let mut s = SynthSpec::default();
        s.phantom.width = 48;
        s.phantom.height = 40;
        s.train_images = 4;
        s.test_images = 3;
        s.train_subjects = 2;
        s.test_subjects = 2;
        s.seed = 5;
        s
    }

    #[test]
    fn default_counts_mirror_protocol() {
        let plan = SynthSpec::default().plan().unwrap();
        assert_eq!(plan.iter().filter(|p| p.info.split == Split::Train).count(), 29);
        assert_eq!(plan.iter().filter(|p| p.info.split == Split::Test).count(), 28);
        let train_subjects: BTreeSet<_> = plan.iter().filter(|p| p.info.split == Split::Train).map(|p| &p.info.subject).collect();
        let test_subjects: BTreeSet<_> = plan.iter().filter(|p| p.info.split == Split::Test).map(|p| &p.info.subject).collect();
        assert_eq!(train_subjects.len(), 3);
        assert_eq!(test_subjects.len(), 4);
        assert!(train_subjects.is_disjoint(&test_subjects));
    }

    #[test]
    fn written_dataset_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let m = write_synthetic_dataset(&spec, dir.path()).unwrap();
        assert_eq!(m.classes.len(), 6);
        let loaded = DatasetManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.images, m.images);
        assert_eq!(loaded.count(Split::Test), 3);
        let (raw, gt) = loaded.load(0).unwrap();
        let (mem_raw, mem_gt) = SyntheticSource::new(spec).unwrap().load(0).unwrap();
        assert_eq!(gt, mem_gt);
        for k in 0..raw.channels() {
            for (a, b) in raw.channel(k).iter().zip(mem_raw.channel(k).iter()) {
                assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_synthetic_dataset(&small_spec(), a.path()).unwrap();
        write_synthetic_dataset(&small_spec(), b.path()).unwrap();
        for entry in ["manifest.json", "images/test_002/ground_truth.png", "images/train_001/stack/ch4_580nm.png"] {
            assert_eq!(std::fs::read(a.path().join(entry)).unwrap(), std::fs::read(b.path().join(entry)).unwrap());
        }
    }

    #[test]
    fn shared_subject_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = write_synthetic_dataset(&small_spec(), dir.path()).unwrap();
        m.root = dir.path().to_path_buf();
        m.validate().unwrap();
        let train_subject = m.images[0].subject.clone();
        let last = m.images.len() - 1;
        m.images[last].subject = train_subject;
        assert!(m.validate().is_err());
    }

    #[test]
    fn missing_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = write_synthetic_dataset(&small_spec(), dir.path()).unwrap();
        m.root = dir.path().to_path_buf();
        m.images[1].ground_truth = PathBuf::from("nope.png");
        assert!(m.validate().is_err());
    }
}
