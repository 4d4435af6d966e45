use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, SimilarityReport};
use crate::embryo::Category;
use crate::render::ViewSpec;
use crate::seed::keyed_rng;

pub const OBJECTS_PER_ROLE: usize = 6;
pub const TEST_SETS: usize = 6;
pub const TRAINING_IMAGES: usize = 36;
pub const TEST_IMAGES_PER_SET: usize = 51;
const MANIFEST_VERSION: u32 = 1;

const OBJECT_DRAW_KEY: u64 = 0x6f62_6a73;
const ASSIGN_KEY: u64 = 0x6173_7367;
const ORDER_KEY: u64 = 0x6f72_6472;

/// Training views: the initial pose and a quarter turn in yaw.
pub fn training_views() -> [ViewSpec; 2] {
    [ViewSpec::INITIAL, ViewSpec::yaw(90)]
}

/// The eight held-out perspectives, relative to the initial pose.
pub fn perspective_views() -> [ViewSpec; 8] {
    [
        ViewSpec::pitch(-60),
        ViewSpec::pitch(-30),
        ViewSpec::pitch(30),
        ViewSpec::pitch(60),
        ViewSpec::yaw(-60),
        ViewSpec::yaw(-30),
        ViewSpec::yaw(30),
        ViewSpec::yaw(60),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub object_id: String,
    pub category: Category,
    pub view: ViewSpec,
}

impl ImageRef {
    pub fn new(object_id: &str, category: Category, view: ViewSpec) -> Self {
        ImageRef {
            object_id: object_id.to_string(),
            category,
            view,
        }
    }

    pub fn image_id(&self) -> String {
        self.view.image_id(&self.object_id)
    }

    /// Path of the PNG relative to the data root.
    pub fn relative_path(&self) -> String {
        format!("images/{}/{}.png", self.category.slug(), self.image_id())
    }

    pub fn label(&self) -> usize {
        self.category.index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    NovelPerspective,
    NovelObject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestImage {
    pub image: ImageRef,
    pub kind: TestKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pool,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub pool: Vec<ImageRef>,
    pub training_set: Vec<ImageRef>,
    /// Test set `t` is shown after training epoch `t + 1`.
    pub test_sets: Vec<Vec<TestImage>>,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ManifestLine {
    Meta {
        version: u32,
        seed: u64,
        pool: usize,
        training: usize,
        test_sets: usize,
    },
    Image {
        image_id: String,
        object_id: String,
        category: Category,
        pitch: i32,
        yaw: i32,
        role: Role,
        /// 1-based test set / epoch index; absent for pool and training.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_set: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kind: Option<TestKind>,
        path: String,
    },
}

/// Draws six training and six unseen objects per category from the kept
/// pool and lays out the training set and the six test sets.
pub fn compose_splits(report: &SimilarityReport, views_per_object: &[ViewSpec], seed: u64) -> Result<DatasetManifest, DatasetError> {
    let mut pool = Vec::new();
    let mut training_set = Vec::with_capacity(TRAINING_IMAGES);
    let mut test_sets: Vec<Vec<TestImage>> = (0..TEST_SETS).map(|_| Vec::with_capacity(TEST_IMAGES_PER_SET)).collect();

    for category in Category::ALL {
        let kept = report.kept(category);
        for id in kept {
            pool.extend(views_per_object.iter().map(|&v| ImageRef::new(id, category, v)));
        }
        if kept.len() < 2 * OBJECTS_PER_ROLE {
            return Err(DatasetError::PoolTooSmall {
                category,
                need: 2 * OBJECTS_PER_ROLE,
                have: kept.len(),
            });
        }
        let mut drawn: Vec<&String> = kept.iter().collect();
        drawn.shuffle(&mut keyed_rng(seed, &[OBJECT_DRAW_KEY, category.index() as u64]));
        let (train, rest) = drawn.split_at(OBJECTS_PER_ROLE);
        let unseen = &rest[..OBJECTS_PER_ROLE];

        for id in train {
            training_set.extend(training_views().iter().map(|&v| ImageRef::new(id, category, v)));
        }
        let mut assignment: Vec<usize> = (0..OBJECTS_PER_ROLE).collect();
        assignment.shuffle(&mut keyed_rng(seed, &[ASSIGN_KEY, category.index() as u64]));
        for (t, set) in test_sets.iter_mut().enumerate() {
            let trained = train[assignment[t]];
            set.extend(perspective_views().iter().map(|&v| TestImage {
                image: ImageRef::new(trained, category, v),
                kind: TestKind::NovelPerspective,
            }));
            set.extend(
                std::iter::once(ViewSpec::INITIAL)
                    .chain(perspective_views())
                    .map(|v| TestImage {
                        image: ImageRef::new(unseen[t], category, v),
                        kind: TestKind::NovelObject,
                    }),
            );
        }
    }
    for (t, set) in test_sets.iter_mut().enumerate() {
        set.shuffle(&mut keyed_rng(seed, &[ORDER_KEY, t as u64]));
    }

    let manifest = DatasetManifest {
        seed,
        pool,
        training_set,
        test_sets,
    };
    manifest.validate()?;
    Ok(manifest)
}

impl DatasetManifest {
    /// Every image the protocol shows, with its category.
    pub fn protocol_images(&self) -> impl Iterator<Item = &ImageRef> {
        self.training_set
            .iter()
            .chain(self.test_sets.iter().flatten().map(|t| &t.image))
    }

    /// image id -> true label for every training and test image.
    pub fn labels(&self) -> HashMap<String, usize> {
        self.protocol_images().map(|r| (r.image_id(), r.label())).collect()
    }

    /// image id -> kind, for the given 0-based test set.
    pub fn test_kinds(&self, set: usize) -> HashMap<String, TestKind> {
        self.test_sets
            .get(set)
            .map(|s| s.iter().map(|t| (t.image.image_id(), t.kind)).collect())
            .unwrap_or_default()
    }

    /// Checks every count, membership and disjointness invariant.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |m: String| Err(DatasetError::Invariant(m));

        let pool_ids: HashSet<String> = self.pool.iter().map(ImageRef::image_id).collect();
        if pool_ids.len() != self.pool.len() {
            return fail("pool contains duplicate images".into());
        }
        if self.training_set.len() != TRAINING_IMAGES {
            return fail(format!("training set has {} images", self.training_set.len()));
        }
        if self.test_sets.len() != TEST_SETS {
            return fail(format!("{} test sets", self.test_sets.len()));
        }

        let mut train_objects: BTreeMap<Category, HashSet<&str>> = BTreeMap::new();
        let mut train_images: HashSet<(&str, ViewSpec)> = HashSet::new();
        for r in &self.training_set {
            if !pool_ids.contains(&r.image_id()) {
                return fail(format!("training image {} not in pool", r.image_id()));
            }
            if !training_views().contains(&r.view) {
                return fail(format!("training image {} has a non-training view", r.image_id()));
            }
            if !train_images.insert((&r.object_id, r.view)) {
                return fail(format!("training image {} repeated", r.image_id()));
            }
            train_objects.entry(r.category).or_default().insert(&r.object_id);
        }
        for cat in Category::ALL {
            let n = train_objects.get(&cat).map_or(0, |s| s.len());
            if n != OBJECTS_PER_ROLE {
                return fail(format!("{cat}: {n} training objects"));
            }
        }

        let mut seen_test: HashSet<String> = HashSet::new();
        let mut trained_use: BTreeMap<Category, Vec<String>> = BTreeMap::new();
        let mut unseen_use: BTreeMap<Category, Vec<String>> = BTreeMap::new();
        for (t, set) in self.test_sets.iter().enumerate() {
            if set.len() != TEST_IMAGES_PER_SET {
                return fail(format!("test set {} has {} images", t + 1, set.len()));
            }
            for cat in Category::ALL {
                let of_cat: Vec<&TestImage> = set.iter().filter(|x| x.image.category == cat).collect();
                let persp: Vec<&TestImage> = of_cat.iter().copied().filter(|x| x.kind == TestKind::NovelPerspective).collect();
                let novel: Vec<&TestImage> = of_cat.iter().copied().filter(|x| x.kind == TestKind::NovelObject).collect();
                let single_object = |xs: &[&TestImage]| -> Option<String> {
                    let first = &xs.first()?.image.object_id;
                    xs.iter().all(|x| &x.image.object_id == first).then(|| first.clone())
                };
                let views = |xs: &[&TestImage]| -> HashSet<ViewSpec> { xs.iter().map(|x| x.image.view).collect() };

                let expected_p: HashSet<ViewSpec> = perspective_views().into_iter().collect();
                let mut expected_o = expected_p.clone();
                expected_o.insert(ViewSpec::INITIAL);
                if persp.len() != 8 || views(&persp) != expected_p {
                    return fail(format!("test set {} {cat}: bad novel-perspective views", t + 1));
                }
                if novel.len() != 9 || views(&novel) != expected_o {
                    return fail(format!("test set {} {cat}: bad novel-object views", t + 1));
                }
                let (Some(p_obj), Some(o_obj)) = (single_object(&persp), single_object(&novel)) else {
                    return fail(format!("test set {} {cat}: mixed objects", t + 1));
                };
                if !train_objects[&cat].contains(p_obj.as_str()) {
                    return fail(format!("novel-perspective object {p_obj} was not trained"));
                }
                if train_objects[&cat].contains(o_obj.as_str()) {
                    return fail(format!("novel object {o_obj} was trained"));
                }
                trained_use.entry(cat).or_default().push(p_obj);
                unseen_use.entry(cat).or_default().push(o_obj);
            }
            for x in set {
                let id = x.image.image_id();
                if !pool_ids.contains(&id) {
                    return fail(format!("test image {id} not in pool"));
                }
                if train_images.contains(&(x.image.object_id.as_str(), x.image.view)) {
                    return fail(format!("test image {id} is also a training image"));
                }
                if !seen_test.insert(id.clone()) {
                    return fail(format!("test image {id} appears in two test sets"));
                }
            }
        }
        for cat in Category::ALL {
            let mut used = trained_use.remove(&cat).unwrap_or_default();
            used.sort();
            used.dedup();
            if used.len() != OBJECTS_PER_ROLE {
                return fail(format!("{cat}: training objects are not each tested once"));
            }
            let mut unseen = unseen_use.remove(&cat).unwrap_or_default();
            unseen.sort();
            unseen.dedup();
            if unseen.len() != TEST_SETS {
                return fail(format!("{cat}: unseen objects repeat across test sets"));
            }
        }
        Ok(())
    }

    pub fn to_lines(&self) -> Vec<ManifestLine> {
        let image = |r: &ImageRef, role: Role, test_set: Option<usize>, kind: Option<TestKind>| ManifestLine::Image {
            image_id: r.image_id(),
            object_id: r.object_id.clone(),
            category: r.category,
            pitch: r.view.pitch_deg,
            yaw: r.view.yaw_deg,
            role,
            test_set,
            kind,
            path: r.relative_path(),
        };
        let mut lines = vec![ManifestLine::Meta {
            version: MANIFEST_VERSION,
            seed: self.seed,
            pool: self.pool.len(),
            training: self.training_set.len(),
            test_sets: self.test_sets.len(),
        }];
        lines.extend(self.pool.iter().map(|r| image(r, Role::Pool, None, None)));
        lines.extend(self.training_set.iter().map(|r| image(r, Role::Train, None, None)));
        for (t, set) in self.test_sets.iter().enumerate() {
            lines.extend(set.iter().map(|x| image(&x.image, Role::Test, Some(t + 1), Some(x.kind))));
        }
        lines
    }

    pub fn from_lines(lines: impl IntoIterator<Item = (usize, ManifestLine)>) -> Result<Self, DatasetError> {
        let mut seed = None;
        let mut pool = Vec::new();
        let mut training_set = Vec::new();
        let mut test_sets: Vec<Vec<TestImage>> = Vec::new();
        for (line, entry) in lines {
            let err = |message: String| DatasetError::Parse { line, message };
            match entry {
                ManifestLine::Meta { version, seed: s, test_sets: n, .. } => {
                    if version != MANIFEST_VERSION {
                        return Err(err(format!("unsupported manifest version {version}")));
                    }
                    if seed.replace(s).is_some() {
                        return Err(err("second meta line".into()));
                    }
                    test_sets = vec![Vec::new(); n];
                }
                ManifestLine::Image {
                    image_id,
                    object_id,
                    category,
                    pitch,
                    yaw,
                    role,
                    test_set,
                    kind,
                    ..
                } => {
                    if seed.is_none() {
                        return Err(err("image line before meta line".into()));
                    }
                    let view = ViewSpec::new(pitch, yaw).map_err(|e| err(e.to_string()))?;
                    let r = ImageRef::new(&object_id, category, view);
                    if r.image_id() != image_id {
                        return Err(err(format!("image id {image_id} does not match object and view")));
                    }
                    match role {
                        Role::Pool => pool.push(r),
                        Role::Train => training_set.push(r),
                        Role::Test => {
                            let (Some(t), Some(kind)) = (test_set, kind) else {
                                return Err(err("test image without test_set or kind".into()));
                            };
                            let set = t
                                .checked_sub(1)
                                .and_then(|i| test_sets.get_mut(i))
                                .ok_or_else(|| err(format!("test set {t} out of range")))?;
                            set.push(TestImage { image: r, kind });
                        }
                    }
                }
            }
        }
        let seed = seed.ok_or(DatasetError::Parse {
            line: 0,
            message: "missing meta line".into(),
        })?;
        Ok(DatasetManifest {
            seed,
            pool,
            training_set,
            test_sets,
        })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for line in self.to_lines() {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads and validates a manifest written by `write_jsonl`.
    pub fn read_jsonl(path: &Path) -> Result<Self, DatasetError> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestLine = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((i + 1, entry));
        }
        let m = Self::from_lines(entries)?;
        m.validate()?;
        Ok(m)
    }
}
