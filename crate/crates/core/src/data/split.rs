use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::layout::{read_split, split_path, ModelEntry};
use super::{DataError, Result};

/// Categories seen during training.
pub const DEFAULT_KNOWN: &[&str] = &["airplane", "cabinet", "car", "chair", "lamp", "sofa", "table", "watercraft"];
/// Unseen categories used only for generalisation tests. Firearm is neither
/// trained on nor evaluated.
pub const DEFAULT_HELDOUT: &[&str] = &["bench", "monitor", "speaker", "phone"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Eval,
    Heldout,
}

/// Which categories, and optionally which model ids per category, make up
/// each subset. A category without an id list contributes all its models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_categories: Vec<String>,
    pub eval_categories: Vec<String>,
    pub heldout_categories: Vec<String>,
    pub ids: BTreeMap<String, Vec<String>>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        let known: Vec<String> = DEFAULT_KNOWN.iter().map(|s| s.to_string()).collect();
        Self {
            train_categories: known.clone(),
            eval_categories: known,
            heldout_categories: DEFAULT_HELDOUT.iter().map(|s| s.to_string()).collect(),
            ids: BTreeMap::new(),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let train: BTreeSet<&String> = self.train_categories.iter().collect();
        if let Some(c) = self.heldout_categories.iter().find(|c| train.contains(c)) {
            return Err(DataError::Split(format!("category `{c}` is both trained on and held out")));
        }
        Ok(())
    }

    /// Split over exactly the listed models, usable as any non-heldout subset.
    pub fn from_ids(ids: &[String], models: &[ModelEntry]) -> Result<Self> {
        let by_id: BTreeMap<&str, &ModelEntry> = models.iter().map(|m| (m.model_id.as_str(), m)).collect();
        let mut per_cat: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for id in ids {
            let m = by_id.get(id.as_str()).ok_or_else(|| DataError::Split(format!("unknown model id `{id}`")))?;
            per_cat.entry(m.category.clone()).or_default().push(id.clone());
        }
        let cats: Vec<String> = per_cat.keys().cloned().collect();
        Ok(Self { train_categories: cats.clone(), eval_categories: cats, heldout_categories: Vec::new(), ids: per_cat })
    }

    /// `name` is a split file under `root/splits/`, or one of `train`, `eval`
    /// and `heldout` for the default category split.
    pub fn resolve(root: &Path, name: &str, models: &[ModelEntry]) -> Result<(Self, Subset)> {
        let file = split_path(root, name);
        if file.is_file() {
            return Ok((Self::from_ids(&read_split(&file)?, models)?, Subset::Eval));
        }
        let subset = match name {
            "train" => Subset::Train,
            "eval" => Subset::Eval,
            "heldout" => Subset::Heldout,
            _ => return Err(DataError::Split(format!("no split file {} and `{name}` is not a default split", file.display()))),
        };
        Ok((Self::default(), subset))
    }

    pub fn categories(&self, subset: Subset) -> &[String] {
        match subset {
            Subset::Train => &self.train_categories,
            Subset::Eval => &self.eval_categories,
            Subset::Heldout => &self.heldout_categories,
        }
    }

    pub fn select(&self, models: &[ModelEntry], subset: Subset) -> Vec<ModelEntry> {
        let cats = self.categories(subset);
        models
            .iter()
            .filter(|m| cats.contains(&m.category))
            .filter(|m| self.ids.get(&m.category).is_none_or(|ids| ids.contains(&m.model_id)))
            .cloned()
            .collect()
    }
}
