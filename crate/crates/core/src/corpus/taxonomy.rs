use std::collections::BTreeMap;
use std::path::Path;

use super::{CorpusError, Result};
use crate::config::KeyValues;

/// Per-category ordered component names.
///
/// Text form is one `category = component, component, ...` line per category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentTaxonomy {
    categories: BTreeMap<String, Vec<String>>,
}

const DEFAULT: &[(&str, &[&str])] = &[
    ("airplane", &["fuselage", "wing", "tail", "engine"]),
    ("bench", &["seat", "leg", "backrest", "armrest"]),
    ("cabinet", &["door", "drawer", "shelf", "handle"]),
    ("car", &["body", "wheel", "window", "roof"]),
    ("chair", &["back", "seat", "leg", "arm"]),
    ("firearm", &["barrel", "stock", "trigger", "scope"]),
    ("lamp", &["base", "stem", "shade"]),
    ("monitor", &["screen", "stand", "bezel"]),
    ("phone", &["screen", "button", "camera"]),
    ("sofa", &["seat", "back", "arm", "cushion"]),
    ("speaker", &["enclosure", "driver", "grille"]),
    ("table", &["top", "leg", "drawer"]),
    ("watercraft", &["hull", "deck", "mast", "sail"]),
];

impl Default for ComponentTaxonomy {
    fn default() -> Self {
        let categories = DEFAULT
            .iter()
            .map(|(c, parts)| (c.to_string(), parts.iter().map(|p| p.to_string()).collect()))
            .collect();
        Self { categories }
    }
}

impl ComponentTaxonomy {
    pub fn new(categories: BTreeMap<String, Vec<String>>) -> Result<Self> {
        if categories.is_empty() {
            return Err(CorpusError::Taxonomy("no categories".into()));
        }
        for (cat, parts) in &categories {
            let valid = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == ' ' || c == '-');
            if !valid(cat) {
                return Err(CorpusError::Taxonomy(format!("category `{cat}` must be lowercase")));
            }
            if parts.is_empty() {
                return Err(CorpusError::Taxonomy(format!("category `{cat}` has no components")));
            }
            if let Some(bad) = parts.iter().find(|p| !valid(p)) {
                return Err(CorpusError::Taxonomy(format!("component `{bad}` of `{cat}` must be lowercase")));
            }
            let mut seen = parts.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != parts.len() {
                return Err(CorpusError::Taxonomy(format!("category `{cat}` repeats a component")));
            }
        }
        Ok(Self { categories })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text).map_err(|e| CorpusError::Taxonomy(e.to_string()))?;
        let categories = kv
            .iter()
            .map(|(k, _)| {
                let parts = kv.get_list::<String>(k).map_err(|e| CorpusError::Taxonomy(e.to_string()))?;
                Ok((k.to_string(), parts))
            })
            .collect::<Result<_>>()?;
        Self::new(categories)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.categories.iter().map(|(c, parts)| format!("{c} = {}\n", parts.join(", "))).collect()
    }

    pub fn components(&self, category: &str) -> Result<&[String]> {
        self.categories.get(category).map(Vec::as_slice).ok_or_else(|| CorpusError::UnknownCategory(category.into()))
    }

    pub fn contains(&self, category: &str) -> bool {
        self.categories.contains_key(category)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    /// Every component name across all categories.
    pub fn all_components(&self) -> Vec<&str> {
        let mut all: Vec<&str> = self.categories.values().flatten().map(String::as_str).collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}
