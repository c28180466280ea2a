//! Locator evaluation against a generated dataset.

use std::path::Path;

use forge_clients::{DepthClient, LocateClient, LocateQuery};
use forge_core::codec::{read_pfm, read_png};
use forge_core::geometry::{summarize, MetricsSummary, RecordMetrics};
use forge_core::relations::{classify, Placed, Thresholds};
use forge_core::Location25D;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::error::{PipelineError, Result};

/// Published results of a fine-tuned locator, shown for comparison only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub iou: f64,
    pub bbox_mse: f64,
    pub depth_mse: f64,
}

pub const PUBLISHED_REFERENCE: PublishedReference =
    PublishedReference { iou: 0.8515, bbox_mse: 0.0496, depth_mse: 0.0658 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: u64,
    pub prediction: Location25D,
    pub raw_text: String,
    pub metrics: RecordMetrics,
    pub relations_satisfied: usize,
    pub relations_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub metrics: MetricsSummary,
    /// Satisfied relations over all relations, re-derived from the predictions.
    pub relation_satisfaction_rate: f64,
    /// Records whose every relation holds for the prediction.
    pub records_fully_satisfied: usize,
    pub published_reference: PublishedReference,
    pub records: Vec<RecordResult>,
}

/// Number of `record`'s relations that hold for `pred`.
pub fn satisfied_relations(record: &DatasetRecord, pred: &Location25D, th: &Thresholds) -> usize {
    let placed = Placed { bbox: pred.bbox, depth: pred.depth() };
    record
        .relations
        .iter()
        .filter(|r| {
            record
                .anchors
                .iter()
                .find(|a| a.id == r.anchor)
                .is_some_and(|a| classify(&placed, &Placed { bbox: a.bbox, depth: a.depth }, th) == r.predicate)
        })
        .count()
}

/// Locates every record's target in its counterfactual image.
///
/// Depth comes from the record's stored depth map when present, otherwise
/// from `depth`.
pub fn run_eval(
    records: &[DatasetRecord],
    dataset_dir: &Path,
    locate: &dyn LocateClient,
    depth: &dyn DepthClient,
    th: &Thresholds,
) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let results: Vec<RecordResult> = records
        .par_iter()
        .map(|r| {
            let background = read_png(dataset_dir.join(&r.counterfactual_image))?;
            let depth_path = dataset_dir.join(&r.depth_map);
            let depth_map =
                if depth_path.exists() { read_pfm(&depth_path)?.map } else { depth.estimate(&background)? };
            let pred = locate.locate(&LocateQuery {
                background,
                depth: depth_map,
                instruction: r.instruction.clone(),
                annotations: r.annotations(),
            })?;
            Ok(RecordResult {
                id: r.id,
                prediction: pred.location,
                raw_text: pred.raw_text,
                metrics: RecordMetrics::compute(&pred.location, &r.answer)?,
                relations_satisfied: satisfied_relations(r, &pred.location, th),
                relations_total: r.relations.len(),
            })
        })
        .collect::<Result<_>>()?;
    let metrics = summarize(&results.iter().map(|r| r.metrics).collect::<Vec<_>>())?;
    let total: usize = results.iter().map(|r| r.relations_total).sum();
    let satisfied: usize = results.iter().map(|r| r.relations_satisfied).sum();
    Ok(EvalReport {
        n: results.len(),
        metrics,
        relation_satisfaction_rate: if total == 0 { 1.0 } else { satisfied as f64 / total as f64 },
        records_fully_satisfied: results.iter().filter(|r| r.relations_satisfied == r.relations_total).count(),
        published_reference: PUBLISHED_REFERENCE,
        records: results,
    })
}
