use std::fmt::Write as _;
use std::path::Path;

use crate::fusion::FusionConfig;
use crate::geometry::MetricReport;

use super::config::TrainConfig;
use super::evaluate::{evaluate, EvalOptions};
use super::ledger::LedgerEvent;
use super::train::{train, TrainOptions};
use super::{write_atomic, HarnessError, Result};

/// Relative Chamfer improvement over `base`, in percent. Lower CD is better.
pub fn cd_improvement(base: f64, row: f64) -> f64 {
    100.0 * (base - row) / base
}

/// Relative F-Score improvement over `base`, in percent. Higher is better.
pub fn fscore_improvement(base: f64, row: f64) -> f64 {
    100.0 * (row - base) / base
}

/// The ablation variants, baseline first. All rows keep the architecture
/// sizes of `base` and differ only in which globals are fused where.
pub fn ablation_grid(base: &FusionConfig) -> Vec<(&'static str, FusionConfig)> {
    let plain = FusionConfig { use_rich_text: false, ..*base };
    vec![
        ("baseline", plain.with_globals(false, false).with_stages(false, false)),
        ("visual", plain.with_globals(true, false).with_stages(true, true)),
        ("text", plain.with_globals(false, true).with_stages(true, true)),
        ("both_stage1", plain.with_globals(true, true).with_stages(true, false)),
        ("both_stage2", plain.with_globals(true, true).with_stages(false, true)),
        ("both_stages", plain.with_globals(true, true).with_stages(true, true)),
        ("rich_text", FusionConfig { use_rich_text: true, ..plain.with_globals(true, true).with_stages(true, true) }),
    ]
}

fn percent(v: f64) -> String {
    if v.is_finite() { format!("{v:.2}") } else { String::new() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub fusion: FusionConfig,
    pub parameters: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// One line per row with improvements measured against the first row.
    /// An improvement over a zero baseline is left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,mean_cd_e3,fscore,cd_improvement_pct,fscore_improvement_pct,parameters\n");
        let Some(base) = self.rows.first().map(|r| r.report.mean()) else { return s };
        for r in &self.rows {
            let m = r.report.mean();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.name,
                m.mean_cd_e3,
                m.fscore,
                percent(cd_improvement(base.mean_cd_e3, m.mean_cd_e3)),
                percent(fscore_improvement(base.fscore, m.fscore)),
                r.parameters
            );
        }
        s
    }
}

/// Trains and evaluates every row of [`ablation_grid`] with the same seed,
/// one run directory per row under `out_dir`, and writes `ablation.csv`.
pub fn ablate(config: &TrainConfig, out_dir: &Path) -> Result<AblationTable> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut rows = Vec::new();
    for (name, fusion) in ablation_grid(&config.model.fusion) {
        let mut row_config = config.clone();
        row_config.model.fusion = fusion;
        let dir = out_dir.join(name);
        log::info!("ablation row {name}");
        let mut run = train(&row_config, &dir, &TrainOptions::default())?;
        let ck = run.last_checkpoint.clone().ok_or_else(|| HarnessError::Invalid(format!("row {name} wrote no checkpoint")))?;
        let options = EvalOptions {
            corpus: config.corpus.clone(),
            tau: config.eval_tau,
            workers: config.effective_workers(),
            embedder: Some(config.embedder.clone()),
            ..EvalOptions::new(&config.data_root, &config.eval_split)
        };
        let report = evaluate(&ck, &options)?;
        write_atomic(&dir.join("report.csv"), report.to_csv().as_bytes())?;
        let rel = ck.strip_prefix(&dir).unwrap_or(&ck).display().to_string();
        run.ledger.append(LedgerEvent::Eval { checkpoint: rel, split: config.eval_split.clone(), report: report.clone() })?;
        rows.push(AblationRow { name: name.into(), fusion, parameters: run.model.parameter_count(), report });
    }
    let table = AblationTable { rows };
    write_atomic(&out_dir.join("ablation.csv"), table.to_csv().as_bytes())?;
    Ok(table)
}
