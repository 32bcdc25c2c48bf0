//! Size and automation metrics of a platform.

use std::fmt::Write as _;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::annotation::{count_annotations, DelimiterTable};
use crate::base_model::BaseModelManifest;
use crate::feature_model::{FeatureModel, ModelError, DEFAULT_ENUMERATION_CAP};
use crate::variability::VariabilitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("platform has no artifacts")]
    EmptyPlatform,
    #[error("baseline is zero")]
    ZeroBaseline,
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

/// Share of elements resolved automatically, `e_a / (e_a + e_m)`, rounded
/// to four decimals.
pub fn degree_of_automation(e_a: u64, e_m: u64) -> Result<f64, MetricsError> {
    let total = e_a + e_m;
    if total == 0 {
        return Err(MetricsError::EmptyPlatform);
    }
    Ok(round4(e_a as f64 / total as f64))
}

/// Relative reduction `1 - after / before`.
pub fn reduction_ratio(before: u64, after: u64) -> Result<f64, MetricsError> {
    if before == 0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(1.0 - after as f64 / before as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductCount {
    Exact(u64),
    ExceedsCap { features: usize, cap: usize },
}

impl Serialize for ProductCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ProductCount::Exact(n) => s.serialize_u64(*n),
            ProductCount::ExceedsCap { .. } => s.serialize_str("exceeds cap"),
        }
    }
}

impl std::fmt::Display for ProductCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProductCount::Exact(n) => write!(f, "{n}"),
            ProductCount::ExceedsCap { features, cap } => {
                write!(f, "exceeds cap ({features} features, cap {cap})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplMetrics {
    pub feature_count: usize,
    pub product_count: ProductCount,
    pub artifact_count: usize,
    pub annotated_artifact_count: usize,
    pub annotation_count: usize,
    pub variable_artifact_count: usize,
    pub manual_count: usize,
    /// Absent for a platform without artifacts.
    pub degree_of_automation: Option<f64>,
}

impl SplMetrics {
    /// One `key: value` line per metric.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "features: {}", self.feature_count);
        let _ = writeln!(s, "products: {}", self.product_count);
        let _ = writeln!(s, "artifacts: {}", self.artifact_count);
        let _ = writeln!(s, "annotated_artifacts: {}", self.annotated_artifact_count);
        let _ = writeln!(s, "annotations: {}", self.annotation_count);
        let _ = writeln!(s, "variable_artifacts: {}", self.variable_artifact_count);
        let _ = writeln!(s, "manual_artifacts: {}", self.manual_count);
        match self.degree_of_automation {
            Some(d) => {
                let _ = writeln!(s, "degree_of_automation: {d:.4}");
            }
            None => {
                let _ = writeln!(s, "degree_of_automation: n/a");
            }
        }
        s
    }
}

pub fn compute_metrics(
    model: &FeatureModel,
    manifest: &BaseModelManifest,
    spec: &VariabilitySpec,
    delimiters: &DelimiterTable,
) -> SplMetrics {
    compute_metrics_capped(model, manifest, spec, delimiters, DEFAULT_ENUMERATION_CAP)
}

pub fn compute_metrics_capped(
    model: &FeatureModel,
    manifest: &BaseModelManifest,
    spec: &VariabilitySpec,
    delimiters: &DelimiterTable,
    cap: usize,
) -> SplMetrics {
    let product_count = match model.count_products_capped(cap) {
        Ok(n) => ProductCount::Exact(n),
        Err(ModelError::ModelTooLarge { features, cap }) => ProductCount::ExceedsCap { features, cap },
        Err(_) => ProductCount::ExceedsCap {
            features: model.len(),
            cap,
        },
    };
    let counts = count_annotations(manifest, delimiters);
    let artifact_count = manifest.all_files().len();
    let trace = spec.trace_bindings(manifest);
    let variable_artifact_count = trace.artifacts.len();
    let manual_count = artifact_count - variable_artifact_count;
    SplMetrics {
        feature_count: model.len(),
        product_count,
        artifact_count,
        annotated_artifact_count: counts.annotated_artifacts,
        annotation_count: counts.total,
        variable_artifact_count,
        manual_count,
        degree_of_automation: degree_of_automation(variable_artifact_count as u64, manual_count as u64).ok(),
    }
}
