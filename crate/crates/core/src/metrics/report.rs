use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imageio::{load_gray, load_mask, IMAGE_EXTENSIONS};
use crate::tensor::{Mask, SoftMap};

use super::{e_measure, mae, s_measure, weighted_fmeasure};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub stem: String,
    pub s_alpha: f64,
    /// `None` when the ground truth has no foreground.
    pub f_wbeta: Option<f64>,
    pub mae: f64,
    pub e_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricMeans {
    pub s_alpha: f64,
    pub f_wbeta: Option<f64>,
    pub mae: f64,
    pub e_phi: f64,
}

/// Per-image scores in stem order plus dataset means.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub means: Option<MetricMeans>,
    /// Stems present in only one of the two inputs.
    pub unmatched: Vec<String>,
    /// Stems present in both but not scorable, with the reason.
    pub failed: Vec<String>,
}

fn score(stem: String, o: &SoftMap, gt: &Mask) -> Result<MetricRow> {
    Ok(MetricRow {
        s_alpha: s_measure(o, gt, 0.5)?,
        f_wbeta: weighted_fmeasure(o, gt, 1.0)?,
        mae: mae(o, gt)?,
        e_phi: e_measure(o, gt)?,
        stem,
    })
}

impl MetricReport {
    fn from_rows(mut rows: Vec<MetricRow>, unmatched: Vec<String>, failed: Vec<String>) -> Self {
        rows.sort_by(|a, b| a.stem.cmp(&b.stem));
        let means = (!rows.is_empty()).then(|| {
            let n = rows.len() as f64;
            let defined: Vec<f64> = rows.iter().filter_map(|r| r.f_wbeta).collect();
            MetricMeans {
                s_alpha: rows.iter().map(|r| r.s_alpha).sum::<f64>() / n,
                f_wbeta: (!defined.is_empty())
                    .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
                mae: rows.iter().map(|r| r.mae).sum::<f64>() / n,
                e_phi: rows.iter().map(|r| r.e_phi).sum::<f64>() / n,
            }
        });
        Self {
            rows,
            means,
            unmatched,
            failed,
        }
    }

    /// `stem,s_alpha,f_wbeta,mae,e_phi` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
        let mut out = String::from("stem,s_alpha,f_wbeta,mae,e_phi\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.stem,
                r.s_alpha,
                fmt(r.f_wbeta),
                r.mae,
                r.e_phi
            );
        }
        if let Some(m) = &self.means {
            let _ = writeln!(
                out,
                "mean,{},{},{},{}",
                m.s_alpha,
                fmt(m.f_wbeta),
                m.mae,
                m.e_phi
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores in-memory `(stem, prediction, ground truth)` triples.
pub fn evaluate_maps(items: Vec<(String, SoftMap, Mask)>) -> MetricReport {
    let results: Vec<std::result::Result<MetricRow, String>> = items
        .into_par_iter()
        .map(|(stem, o, gt)| score(stem.clone(), &o, &gt).map_err(|e| format!("{stem}: {e}")))
        .collect();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(msg) => failed.push(msg),
        }
    }
    MetricReport::from_rows(rows, Vec::new(), failed)
}

fn image_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Pairs images by file stem across the two directories and scores each
/// pair. Predictions are 8-bit grayscale scaled to `[0, 1]`; ground truth is
/// thresholded at mid-grey.
pub fn evaluate_batch(
    pred_dir: impl AsRef<Path>,
    gt_dir: impl AsRef<Path>,
) -> Result<MetricReport> {
    let preds = image_stems(pred_dir.as_ref())?;
    let gts = image_stems(gt_dir.as_ref())?;
    let mut unmatched: Vec<String> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .chain(gts.keys().filter(|k| !preds.contains_key(*k)))
        .cloned()
        .collect();
    unmatched.sort();
    let mut items = Vec::new();
    let mut failed = Vec::new();
    for (stem, pp) in &preds {
        let Some(gp) = gts.get(stem) else { continue };
        match (load_gray(pp), load_mask(gp)) {
            (Ok(o), Ok(g)) => items.push((stem.clone(), o, g)),
            (Err(e), _) | (_, Err(e)) => failed.push(format!("{stem}: {e}")),
        }
    }
    let mut report = evaluate_maps(items);
    report.unmatched = unmatched;
    report.failed.extend(failed);
    report.failed.sort();
    Ok(report)
}
