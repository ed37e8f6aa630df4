use std::path::Path;

use crate::data::{load_triples, pick_view, scan_models, LoaderOptions, SplitSpec, TripleRecord, ViewMode};
use crate::encoders::{build_prompt_with, RenderedImage, TextPrompt, TokenCounter};
use crate::geometry::PointCloud;

use super::{HarnessError, Result};

/// Loads every record of `split` under `root`, joined with `corpus` when given.
pub fn load_records(root: &Path, split: &str, corpus: Option<&Path>) -> Result<Vec<TripleRecord>> {
    let models = scan_models(root)?;
    let (spec, subset) = SplitSpec::resolve(root, split, &models)?;
    let loader = load_triples(root, &spec, subset, corpus, LoaderOptions::default())?;
    let stats = loader.stats();
    let records = loader.prefetch(8).collect::<std::result::Result<Vec<_>, _>>()?;
    let missing = stats.missing_text.load(std::sync::atomic::Ordering::SeqCst);
    if missing > 0 {
        log::info!("{missing} of {} records have no description", records.len());
    }
    if records.is_empty() {
        return Err(HarnessError::Invalid(format!("split `{split}` selects no models under {}", root.display())));
    }
    Ok(records)
}

/// A record ready for a forward pass, in the frame where its complete cloud
/// fills `[-1, 1]^3`.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub model_id: String,
    pub category: String,
    pub partial: PointCloud,
    pub gt: PointCloud,
    pub image: RenderedImage,
    pub prompt: TextPrompt,
}

/// Both clouds are mapped by the complete cloud's normalising transform, so
/// the partial keeps its position relative to the whole.
pub fn normalized_pair(record: &TripleRecord) -> Result<(PointCloud, PointCloud)> {
    let t = record.gt.unit_transform()?;
    Ok((t.apply_cloud(&record.partial), t.apply_cloud(&record.gt)))
}

/// The category template, extended by the record's description when
/// `rich_text` is set and one exists.
pub fn record_prompt(record: &TripleRecord, rich_text: bool, counter: &dyn TokenCounter) -> Result<TextPrompt> {
    let description = if rich_text { record.text.as_deref() } else { None };
    Ok(build_prompt_with(&record.category, description, counter)?)
}

pub fn prepare_sample(record: &TripleRecord, view: ViewMode, rich_text: bool, counter: &dyn TokenCounter) -> Result<EvalSample> {
    let (partial, gt) = normalized_pair(record)?;
    Ok(EvalSample {
        model_id: record.model_id.clone(),
        category: record.category.clone(),
        partial,
        gt,
        image: pick_view(record, view)?,
        prompt: record_prompt(record, rich_text, counter)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::encoders::StubTokenizer;

    #[test]
    fn loads_and_prepares() {
        let dir = tempfile::tempdir().unwrap();
        synth_generate(dir.path(), 2, &["chair", "lamp"], 3).unwrap();
        let records = load_records(dir.path(), "all", None).unwrap();
        assert_eq!(records.len(), 4);
        let s = prepare_sample(&records[0], ViewMode::Eval, true, &StubTokenizer).unwrap();
        assert_eq!(s.image.view_id(), 0);
        assert_eq!(s.prompt.rendered, format!("This is a {}", records[0].category));
        let (lo, hi) = s.gt.bounds();
        let half = (0..3).map(|a| 0.5 * (hi[a] - lo[a])).fold(0.0, f64::max);
        assert!((half - 1.0).abs() < 1e-12);

        assert!(matches!(load_records(dir.path(), "nonexistent", None), Err(HarnessError::Data(_))));
        std::fs::write(dir.path().join("splits/empty.txt"), "").unwrap();
        assert!(matches!(load_records(dir.path(), "empty", None), Err(HarnessError::Invalid(_))));
    }

    #[test]
    fn partial_keeps_its_place_in_the_whole() {
        let dir = tempfile::tempdir().unwrap();
        synth_generate(dir.path(), 1, &["table"], 9).unwrap();
        let mut record = load_records(dir.path(), "all", None).unwrap().remove(0);
        record.gt = record.gt.scaled(3.0);
        record.partial = record.partial.scaled(3.0);
        let (partial, gt) = normalized_pair(&record).unwrap();
        // Every partial point is a gt point, before and after the transform.
        let gt_pts = gt.points();
        for p in partial.points().iter().take(50) {
            assert!(gt_pts.iter().any(|q| (0..3).all(|k| (p[k] - q[k]).abs() < 1e-9)));
        }
    }
}
