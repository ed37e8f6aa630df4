use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    /// Chamfer distance multiplied by 1000.
    pub mean_cd_e3: f64,
    pub fscore: f64,
    pub n: usize,
}

/// Per-category and category-averaged completion metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_category: BTreeMap<String, CategoryMetrics>,
    pub tau: f64,
    /// Free-form `key=value` notes written as `#` lines above the CSV table.
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn new(tau: f64) -> Self {
        Self { per_category: BTreeMap::new(), tau, notes: Vec::new() }
    }

    /// Builds a report from per-sample `(category, chamfer, fscore)` triples.
    pub fn from_samples<'a>(tau: f64, samples: impl IntoIterator<Item = (&'a str, f64, f64)>) -> Self {
        let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
        for (cat, cd, f) in samples {
            let e = acc.entry(cat.to_string()).or_insert((0.0, 0.0, 0));
            e.0 += cd;
            e.1 += f;
            e.2 += 1;
        }
        let per_category = acc
            .into_iter()
            .map(|(cat, (cd, f, n))| {
                let n_f = n as f64;
                (cat, CategoryMetrics { mean_cd_e3: 1000.0 * cd / n_f, fscore: f / n_f, n })
            })
            .collect();
        Self { per_category, tau, notes: Vec::new() }
    }

    /// Unweighted average over categories; `n` is the total sample count.
    pub fn mean(&self) -> CategoryMetrics {
        let k = self.per_category.len().max(1) as f64;
        let mut out = CategoryMetrics { mean_cd_e3: 0.0, fscore: 0.0, n: 0 };
        for m in self.per_category.values() {
            out.mean_cd_e3 += m.mean_cd_e3;
            out.fscore += m.fscore;
            out.n += m.n;
        }
        out.mean_cd_e3 /= k;
        out.fscore /= k;
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tau={}", self.tau);
        for note in &self.notes {
            let _ = writeln!(s, "# {note}");
        }
        s.push_str("category,mean_cd_e3,fscore,n\n");
        for (cat, m) in &self.per_category {
            let _ = writeln!(s, "{cat},{},{},{}", m.mean_cd_e3, m.fscore, m.n);
        }
        let m = self.mean();
        let _ = writeln!(s, "mean,{},{},{}", m.mean_cd_e3, m.fscore, m.n);
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| GeometryError::InvalidInput(format!("report line {line}: {reason}"));
        let mut report = MetricReport::new(f64::NAN);
        let mut saw_header = false;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(note) = line.strip_prefix("# ") {
                match note.strip_prefix("tau=") {
                    Some(t) => report.tau = t.parse().map_err(|_| bad(line_no, "bad tau"))?,
                    None => report.notes.push(note.to_string()),
                }
                continue;
            }
            if !saw_header {
                if line != "category,mean_cd_e3,fscore,n" {
                    return Err(bad(line_no, "unexpected header"));
                }
                saw_header = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad(line_no, "expected 4 columns"));
            }
            if cols[0] == "mean" {
                continue;
            }
            let m = CategoryMetrics {
                mean_cd_e3: cols[1].parse().map_err(|_| bad(line_no, "bad mean_cd_e3"))?,
                fscore: cols[2].parse().map_err(|_| bad(line_no, "bad fscore"))?,
                n: cols[3].parse().map_err(|_| bad(line_no, "bad n"))?,
            };
            report.per_category.insert(cols[0].to_string(), m);
        }
        if !saw_header {
            return Err(bad(0, "missing header"));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_row_is_unweighted_category_average() {
        let report = MetricReport::from_samples(
            0.001,
            [("chair", 0.001, 1.0), ("chair", 0.003, 0.5), ("lamp", 0.010, 0.0)],
        );
        let chair = report.per_category["chair"];
        assert!((chair.mean_cd_e3 - 2.0).abs() < 1e-12);
        assert_eq!(chair.n, 2);
        let mean = report.mean();
        assert!((mean.mean_cd_e3 - 6.0).abs() < 1e-9);
        assert!((mean.fscore - 0.375).abs() < 1e-9);
        assert_eq!(mean.n, 3);
    }

    #[test]
    fn csv_has_documented_columns_and_round_trips() {
        let mut report = MetricReport::from_samples(0.05, [("table", 0.002, 0.9)]);
        report.notes.push("normalization=gt-unit-box".into());
        let csv = report.to_csv();
        let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header, "category,mean_cd_e3,fscore,n");
        assert!(csv.lines().last().unwrap().starts_with("mean,"));
        assert_eq!(MetricReport::from_csv(&csv).unwrap(), report);
    }
}
