//! Report records (one JSON object per line) and the loss-history text file.

use serde::{Deserialize, Serialize};

use super::{CrossValidation, EvalReport, TrainConfig};
use crate::dataset::SplitMode;
use crate::model::{GraspFcnConfig, checksum};

/// One line of a report file. `fold` is `None` for the aggregate record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub split: SplitMode,
    pub fold: Option<usize>,
    pub jaccard_threshold: f64,
    pub accuracy: f64,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_inference_ms: Option<f64>,
    pub seed: u64,
    pub epochs: usize,
    pub config_checksum: String,
}

/// Hex digest identifying a network and training configuration.
pub fn config_checksum(net: &GraspFcnConfig, cfg: &TrainConfig) -> String {
    let text = format!("{}{}", net.to_text(), serde_json::to_string(cfg).expect("config serializes"));
    format!("{:016x}", checksum(text.as_bytes()))
}

impl ReportRecord {
    pub fn new(report: &EvalReport, fold: Option<usize>, net: &GraspFcnConfig, cfg: &TrainConfig) -> Self {
        Self {
            split: cfg.split,
            fold,
            jaccard_threshold: report.jaccard_threshold,
            accuracy: report.accuracy,
            n_test: report.n_test,
            mean_inference_ms: Some(report.mean_inference_ms),
            seed: cfg.seed,
            epochs: cfg.epochs,
            config_checksum: config_checksum(net, cfg),
        }
    }

    /// One record per fold followed by the aggregate.
    pub fn from_cross_validation(cv: &CrossValidation, net: &GraspFcnConfig, cfg: &TrainConfig) -> Vec<Self> {
        cv.folds
            .iter()
            .map(|f| Self::new(&f.report, Some(f.fold), net, cfg))
            .chain([Self::new(&cv.aggregate, None, net, cfg)])
            .collect()
    }
}

/// JSON lines. Wall-clock timing is dropped unless `include_timing`, so that
/// reports of identical runs compare byte for byte.
pub fn records_to_jsonl(records: &[ReportRecord], include_timing: bool) -> String {
    let mut out = String::new();
    for r in records {
        let mut r = r.clone();
        if !include_timing {
            r.mean_inference_ms = None;
        }
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// `epoch mean_loss` per line, epochs counted from 1.
pub fn format_loss_history(history: &[f64]) -> String {
    history.iter().enumerate().map(|(i, l)| format!("{} {l}\n", i + 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        EvalReport {
            accuracy: 0.5,
            per_fold: vec![],
            jaccard_threshold: 0.25,
            mean_inference_ms: 3.25,
            n_test: 4,
            passed: vec![true, false, true, false],
        }
    }

    #[test]
    fn timing_is_optional() {
        let cfg = TrainConfig::default();
        let rec = ReportRecord::new(&report(), Some(1), &GraspFcnConfig::desk(), &cfg);
        let with = records_to_jsonl(std::slice::from_ref(&rec), true);
        let without = records_to_jsonl(&[rec], false);
        assert!(with.contains("mean_inference_ms"));
        assert!(!without.contains("mean_inference_ms"));
        let back: ReportRecord = serde_json::from_str(without.trim()).unwrap();
        assert_eq!(back.fold, Some(1));
        assert_eq!(back.split, SplitMode::ImageWise);
    }

    #[test]
    fn checksum_tracks_config() {
        let a = TrainConfig::default();
        let b = TrainConfig { lr: 0.01, ..a.clone() };
        let net = GraspFcnConfig::desk();
        assert_eq!(config_checksum(&net, &a), config_checksum(&net, &a));
        assert_ne!(config_checksum(&net, &a), config_checksum(&net, &b));
        assert_ne!(config_checksum(&net, &a), config_checksum(&GraspFcnConfig::paper(), &a));
    }

    #[test]
    fn loss_history_lines() {
        assert_eq!(format_loss_history(&[2.5, 1.0]), "1 2.5\n2 1\n");
    }
}
