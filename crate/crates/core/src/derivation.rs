//! End-to-end derivation: validate the configuration, run the compositional
//! stage, resolve annotations in every included artifact, write the product
//! and its trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::annotation::{
    AnnotationError, DelimiterError, DelimiterTable, DirectiveRecord, EvalContext,
};
use crate::base_model::{BaseModelManifest, ManifestError};
use crate::composition::{compose, CompositionError, ProductSkeleton};
use crate::feature_model::{ConfigError, Configuration, FeatureModel, ModelError, ValidationReport};
use crate::value::Value;
use crate::variability::{ResolutionPlan, SpecError, VariabilitySpec, VpKind, SPEC_FILE};

pub const FEATURES_FILE: &str = "features.json";
pub const PRODUCT_MANIFEST_FILE: &str = "product.manifest.json";
pub const TRACE_FILE: &str = "trace.json";
pub const COMMON_ENTRY: &str = "<common>";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("configuration is not valid:\n{0}")]
    InvalidConfiguration(ValidationReport),
    #[error("configuration: {0}")]
    Configuration(#[from] ConfigError),
    #[error("configuration file: {0}")]
    ConfigurationSyntax(ModelError),
    #[error("{path}: {source}")]
    Model { path: String, source: ModelError },
    #[error("{path}: {source}")]
    Manifest { path: String, source: ManifestError },
    #[error("{path}: {source}")]
    Spec { path: String, source: SpecError },
    #[error("{path}: {source}")]
    Delimiters { path: String, source: DelimiterError },
    #[error("cannot read {path}: {message}")]
    PlatformFile { path: String, message: String },
    #[error("composition: {0}")]
    Composition(#[from] CompositionError),
    #[error("{path}: {error}")]
    Annotation { path: String, error: AnnotationError },
    #[error("product path `{0}` clashes with a file the engine writes")]
    ReservedPath(String),
    #[error("output directory {0} exists and is not empty")]
    OutputNotEmpty(PathBuf),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl DeriveError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            DeriveError::InvalidConfiguration(_) | DeriveError::Configuration(_) | DeriveError::ConfigurationSyntax(_) => 2,
            DeriveError::Model { .. }
            | DeriveError::Manifest { .. }
            | DeriveError::Spec { .. }
            | DeriveError::Delimiters { .. }
            | DeriveError::PlatformFile { .. }
            | DeriveError::Composition(_)
            | DeriveError::ReservedPath(_) => 3,
            DeriveError::Annotation { .. } => 4,
            DeriveError::OutputNotEmpty(_) | DeriveError::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> DeriveError {
    DeriveError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// The three models of a platform directory plus its delimiter table.
#[derive(Debug, Clone)]
pub struct Platform {
    pub model: FeatureModel,
    pub manifest: BaseModelManifest,
    pub spec: VariabilitySpec,
    pub delimiters: DelimiterTable,
}

impl Platform {
    pub fn load(dir: &Path) -> Result<Self, DeriveError> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| DeriveError::PlatformFile {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let path = |name: &str| dir.join(name).display().to_string();
        let model = FeatureModel::parse(&read(FEATURES_FILE)?).map_err(|source| DeriveError::Model {
            path: path(FEATURES_FILE),
            source,
        })?;
        let manifest = BaseModelManifest::load_dir(dir).map_err(|source| DeriveError::Manifest {
            path: path(crate::base_model::MANIFEST_FILE),
            source,
        })?;
        let spec = VariabilitySpec::parse(&read(SPEC_FILE)?, &model, &manifest).map_err(|source| DeriveError::Spec {
            path: path(SPEC_FILE),
            source,
        })?;
        let delimiters = DelimiterTable::load_dir(dir).map_err(|source| DeriveError::Delimiters {
            path: path(crate::annotation::DELIMITERS_FILE),
            source,
        })?;
        Ok(Platform {
            model,
            manifest,
            spec,
            delimiters,
        })
    }

    /// Reads a configuration file and fills in the implied features and
    /// slot defaults.
    pub fn load_configuration(&self, path: &Path) -> Result<Configuration, DeriveError> {
        let src = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let partial = Configuration::from_json(&src).map_err(DeriveError::ConfigurationSyntax)?;
        Ok(self.model.complete(&partial)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeriveOptions {
    /// Reject directives not covered by an annotative variation point.
    pub strict: bool,
    /// Leave the timestamp out of the product manifest.
    pub reproducible: bool,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        DeriveOptions {
            strict: true,
            reproducible: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VpRef {
    pub id: String,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composite_unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TracedDirective {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub directive: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureTrace {
    pub feature: String,
    pub active: bool,
    /// In plan order.
    pub vps: Vec<VpRef>,
    /// Product paths; empty for inactive features.
    pub artifacts_touched: Vec<String>,
    pub annotations_resolved: usize,
    pub directives: Vec<TracedDirective>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceSummary {
    pub selected: Vec<String>,
    pub artifacts_written: usize,
    pub directives_resolved: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceReport {
    pub features: Vec<FeatureTrace>,
    /// Product path -> features that put it there or shaped it.
    pub artifacts: BTreeMap<String, Vec<String>>,
    pub summary: TraceSummary,
}

impl TraceReport {
    pub fn feature(&self, id: &str) -> Option<&FeatureTrace> {
        self.features.iter().find(|f| f.feature == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProductManifest {
    pub components: Vec<String>,
    pub links: Vec<String>,
    pub slots: BTreeMap<String, Value>,
    pub configuration: Configuration,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_at: Option<String>,
    pub engine_version: String,
}

/// A derived product held in memory.
#[derive(Debug, Clone)]
pub struct Product {
    /// Product path -> bytes.
    pub files: BTreeMap<String, Vec<u8>>,
    pub manifest: ProductManifest,
    pub trace: TraceReport,
    pub plan: ResolutionPlan,
    pub skeleton: ProductSkeleton,
    pub diagnostics: Vec<String>,
    /// Platform paths read while resolving annotations.
    pub reads: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct DerivationResult {
    pub output_root: PathBuf,
    pub trace: TraceReport,
    pub diagnostics: Vec<String>,
    pub reads: BTreeSet<String>,
}

/// Every feature slot keyed `Feature.slot`: the configured value, else the
/// declared default.
pub fn feature_slot_values(model: &FeatureModel, config: &Configuration) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for f in model.features() {
        for s in &f.slots {
            let key = format!("{}.{}", f.id, s.name);
            if let Some(v) = config.slot_values.get(&key).or(s.default.as_ref()) {
                out.insert(key, v.clone());
            }
        }
    }
    out
}

/// Derives a product without touching the output directory.
pub fn derive_in_memory(platform: &Platform, config: &Configuration, opts: DeriveOptions) -> Result<Product, DeriveError> {
    let report = platform.model.validate(config);
    if !report.is_valid() {
        return Err(DeriveError::InvalidConfiguration(report));
    }
    let plan = platform.spec.plan_resolution(config);
    derive_with_plan(platform, config, &plan, opts)
}

/// Like [`derive_in_memory`] but with a caller-chosen plan, which must list
/// the variation points active under `config`. The configuration is assumed
/// valid.
pub fn derive_with_plan(
    platform: &Platform,
    config: &Configuration,
    plan: &ResolutionPlan,
    opts: DeriveOptions,
) -> Result<Product, DeriveError> {
    let Platform {
        model, manifest, spec, ..
    } = platform;

    let mut ctx = EvalContext {
        features: model.feature_ids().map(str::to_owned).collect(),
        selected: config.selected.clone(),
        slot_values: feature_slot_values(model, config),
        active_links: BTreeSet::new(),
    };
    let skel = compose(manifest, spec, &plan.compositional, &ctx)?;
    for reserved in [PRODUCT_MANIFEST_FILE, TRACE_FILE] {
        if skel.artifacts.contains_key(reserved) {
            return Err(DeriveError::ReservedPath(reserved.into()));
        }
    }
    ctx.slot_values.extend(skel.slot_values.clone());
    ctx.active_links = skel.active_links.clone();

    let pairs: Vec<(&str, &str)> = skel.included_artifacts().collect();
    let resolved = crate::par::map(&pairs, |&(src, _)| resolve_one(platform, &ctx, src, opts.strict));

    let mut files = BTreeMap::new();
    let mut records: BTreeMap<String, Vec<DirectiveRecord>> = BTreeMap::new();
    let mut diagnostics = skel.warnings.clone();
    let mut reads = BTreeSet::new();
    for ((src, dst), r) in pairs.iter().zip(resolved) {
        let out = r?;
        reads.insert(src.to_string());
        if let Some(w) = out.warning {
            diagnostics.push(w);
        }
        files.insert(dst.to_string(), out.bytes);
        if !out.records.is_empty() {
            records.insert(src.to_string(), out.records);
        }
    }
    diagnostics.extend(spec.warnings().iter().cloned());

    let trace = build_trace(platform, config, &skel, &records, files.len(), &diagnostics);
    let product_manifest = ProductManifest {
        components: skel.included_components.iter().cloned().collect(),
        links: skel.active_links.iter().cloned().collect(),
        slots: skel.slot_values.clone(),
        configuration: config.clone(),
        derived_at: (!opts.reproducible).then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        engine_version: ENGINE_VERSION.to_owned(),
    };
    Ok(Product {
        files,
        manifest: product_manifest,
        trace,
        plan: plan.clone(),
        skeleton: skel,
        diagnostics,
        reads,
    })
}

struct Resolved {
    bytes: Vec<u8>,
    records: Vec<DirectiveRecord>,
    warning: Option<String>,
}

fn resolve_one(platform: &Platform, ctx: &EvalContext, src: &str, strict: bool) -> Result<Resolved, DeriveError> {
    let manifest = &platform.manifest;
    let bytes = manifest.read(src).map_err(|e| io_err(&manifest.root().join(src), e))?;
    let text = match String::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            return Ok(Resolved {
                bytes: e.into_bytes(),
                records: Vec::new(),
                warning: Some(format!("{src}: not UTF-8, copied verbatim")),
            })
        }
    };
    let Some(styles) = platform.delimiters.styles_for_path(src) else {
        return Ok(Resolved {
            bytes: text.into_bytes(),
            records: Vec::new(),
            warning: None,
        });
    };
    let annotation = |error| DeriveError::Annotation {
        path: src.to_owned(),
        error,
    };
    let tree = crate::annotation::scan_with_styles(&text, styles).map_err(annotation)?;
    let activation = strict.then(|| platform.spec.activation_for(manifest.owner_of(src), manifest));
    let out = tree.resolve(ctx, activation.as_ref()).map_err(annotation)?;
    Ok(Resolved {
        bytes: out.text.into_bytes(),
        records: out.records,
        warning: None,
    })
}

fn plan_key(kind: &VpKind, id: &str) -> (u8, String) {
    (kind.compositional_rank().unwrap_or(u8::MAX), id.to_owned())
}

fn build_trace(
    platform: &Platform,
    config: &Configuration,
    skel: &ProductSkeleton,
    records: &BTreeMap<String, Vec<DirectiveRecord>>,
    written: usize,
    warnings: &[String],
) -> TraceReport {
    let Platform {
        model, manifest, spec, ..
    } = platform;
    let mut by_source: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (dst, src) in &skel.artifacts {
        by_source.entry(src.as_str()).or_default().push(dst.as_str());
    }

    let mut features: BTreeMap<&str, FeatureTrace> = model
        .features()
        .iter()
        .map(|f| {
            (
                f.id.as_str(),
                FeatureTrace {
                    feature: f.id.clone(),
                    active: config.is_selected(&f.id),
                    vps: Vec::new(),
                    artifacts_touched: Vec::new(),
                    annotations_resolved: 0,
                    directives: Vec::new(),
                },
            )
        })
        .collect();

    let mut vps: Vec<_> = spec.variation_points().iter().collect();
    vps.sort_by_key(|v| plan_key(&v.kind, &v.id));
    let mut touched: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for vp in vps {
        let Some(entry) = features.get_mut(vp.feature.as_str()) else {
            continue;
        };
        entry.vps.push(VpRef {
            id: vp.id.clone(),
            kind: vp.kind.name(),
            composite_unit: spec.composite_unit_of(&vp.id).map(str::to_owned),
        });
        if entry.active {
            let t = touched.entry(vp.feature.as_str()).or_default();
            for src in vp.touched_artifacts(manifest) {
                for dst in by_source.get(src.as_str()).into_iter().flatten() {
                    t.insert(dst.to_string());
                }
            }
        }
    }

    for (src, recs) in records {
        let Some(component) = manifest.owner_of(src) else {
            continue;
        };
        let covering: Vec<_> = spec
            .annotative_vps_for(component, manifest)
            .filter(|vp| config.is_selected(&vp.feature))
            .collect();
        for r in recs {
            let mut owners = BTreeSet::new();
            for vp in &covering {
                let hit = match (&vp.kind, r.keyword) {
                    (VpKind::OvpExistence { .. }, "if") => r.symbols.iter().any(|s| s == &vp.feature),
                    (VpKind::OvpAssignment { slot_names, .. }, "set" | "val") => {
                        r.symbols.first().is_some_and(|name| slot_names.contains(name))
                    }
                    (VpKind::OvpUses { link }, "uses") => r.symbols.first() == Some(link),
                    _ => false,
                };
                if hit {
                    owners.insert(vp.feature.as_str());
                }
            }
            for f in owners {
                let entry = features.get_mut(f).expect("vp features exist in the model");
                entry.annotations_resolved += 1;
                entry.directives.push(TracedDirective {
                    path: by_source.get(src.as_str()).and_then(|d| d.first()).map_or_else(|| src.clone(), |d| d.to_string()),
                    line: r.line,
                    column: r.column,
                    directive: r.keyword,
                });
                let t = touched.entry(f).or_default();
                for dst in by_source.get(src.as_str()).into_iter().flatten() {
                    t.insert(dst.to_string());
                }
            }
        }
    }

    let mut artifacts: BTreeMap<String, Vec<String>> =
        skel.artifacts.keys().map(|p| (p.clone(), Vec::new())).collect();
    for (f, paths) in &touched {
        let entry = features.get_mut(f).expect("feature exists");
        entry.artifacts_touched = paths.iter().cloned().collect();
        for p in paths {
            if let Some(list) = artifacts.get_mut(p) {
                list.push(f.to_string());
            }
        }
    }
    for list in artifacts.values_mut() {
        if list.is_empty() {
            list.push(COMMON_ENTRY.to_owned());
        }
    }

    TraceReport {
        features: features.into_values().collect(),
        artifacts,
        summary: TraceSummary {
            selected: config.selected.iter().cloned().collect(),
            artifacts_written: written,
            directives_resolved: records.values().map(Vec::len).sum(),
            warnings: warnings.to_vec(),
        },
    }
}

/// Derives a product into `output_root`, which must be absent or empty.
/// Files are written to a staging directory first and moved into place only
/// when everything succeeded.
pub fn derive_product(
    platform: &Platform,
    config: &Configuration,
    output_root: &Path,
    opts: DeriveOptions,
) -> Result<DerivationResult, DeriveError> {
    if output_root.exists() {
        let mut entries = fs::read_dir(output_root).map_err(|e| io_err(output_root, e))?;
        if entries.next().is_some() {
            return Err(DeriveError::OutputNotEmpty(output_root.to_path_buf()));
        }
    }
    let product = derive_in_memory(platform, config, opts)?;
    write_product(platform, &product, output_root)?;
    Ok(DerivationResult {
        output_root: output_root.to_path_buf(),
        trace: product.trace,
        diagnostics: product.diagnostics,
        reads: product.reads,
    })
}

fn write_product(platform: &Platform, product: &Product, output_root: &Path) -> Result<(), DeriveError> {
    let parent = match output_root.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| io_err(&parent, e))?;
    let name = output_root
        .file_name()
        .map_or_else(|| "product".into(), |n| n.to_string_lossy().into_owned());
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    log::debug!("staging product in {}", staging.display());
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    }
    let result = (|| {
        fs::create_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
        for (dst, bytes) in &product.files {
            let path = staging.join(dst);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
            let src = &product.skeleton.artifacts[dst];
            if let Ok(meta) = fs::metadata(platform.manifest.root().join(src)) {
                fs::set_permissions(&path, meta.permissions()).map_err(|e| io_err(&path, e))?;
            }
        }
        write_json(&staging.join(PRODUCT_MANIFEST_FILE), &product.manifest)?;
        write_json(&staging.join(TRACE_FILE), &product.trace)?;
        if output_root.exists() {
            fs::remove_dir(output_root).map_err(|e| io_err(output_root, e))?;
        }
        fs::rename(&staging, output_root).map_err(|e| io_err(output_root, e))
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DeriveError> {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    fs::write(path, s).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown feature `{0}`")]
pub struct UnknownFeature(pub String);

/// Human-readable slice of the trace for one feature.
pub fn explain_trace(trace: &TraceReport, feature: &str) -> Result<String, UnknownFeature> {
    let f = trace
        .feature(feature)
        .ok_or_else(|| UnknownFeature(feature.to_owned()))?;
    let mut s = String::new();
    let state = if f.active { "active" } else { "inactive" };
    let _ = writeln!(s, "feature {} ({state})", f.feature);
    let cus: BTreeSet<&str> = f.vps.iter().filter_map(|v| v.composite_unit.as_deref()).collect();
    if !cus.is_empty() {
        let _ = writeln!(s, "composite units: {}", cus.into_iter().collect::<Vec<_>>().join(", "));
    }
    let _ = writeln!(s, "variation points ({}):", f.vps.len());
    for v in &f.vps {
        match &v.composite_unit {
            Some(cu) => {
                let _ = writeln!(s, "  {} {} [{cu}]", v.id, v.kind);
            }
            None => {
                let _ = writeln!(s, "  {} {}", v.id, v.kind);
            }
        }
    }
    let _ = writeln!(s, "artifacts ({}):", f.artifacts_touched.len());
    for a in &f.artifacts_touched {
        let _ = writeln!(s, "  {a}");
    }
    let _ = writeln!(s, "annotations resolved: {}", f.annotations_resolved);
    for d in &f.directives {
        let _ = writeln!(s, "  {}:{}:{} spl:{}", d.path, d.line, d.column, d.directive);
    }
    Ok(s)
}
