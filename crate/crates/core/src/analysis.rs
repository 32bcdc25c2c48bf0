//! Static consistency checks across the feature model, base model,
//! variability bindings and the annotated artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::annotation::{scan_with_styles, DelimiterTable, DirectiveKind, DirectiveTree, EvalContext};
use crate::base_model::BaseModelManifest;
use crate::derivation::{feature_slot_values, FEATURES_FILE};
use crate::expr::{Expr, Scope};
use crate::feature_model::{Configuration, FeatureModel, ModelError, DEFAULT_ENUMERATION_CAP};
use crate::value::Value;
use crate::variability::{SpecError, VariabilitySpec, VpKind, SPEC_FILE};

pub const DEAD_FEATURE: &str = "dead-feature";
pub const UNKNOWN_SYMBOL: &str = "unknown-symbol";
pub const SUSPICIOUS_BINDING: &str = "suspicious-binding";
pub const UNCOVERED_DIRECTIVE: &str = "uncovered-directive";
pub const CU_FEATURE_MISMATCH: &str = "cu-feature-mismatch";
pub const UNREACHABLE_BRANCH: &str = "unreachable-branch";
pub const SCAN_ERROR: &str = "scan-error";
pub const SPEC_ERROR: &str = "spec-error";
pub const ENUMERATION_SKIPPED: &str = "enumeration-skipped";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Note,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Note => "note",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: &'static str,
    pub severity: Severity,
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn model(rule: &'static str, severity: Severity, path: &str, message: String) -> Self {
        Diagnostic {
            rule,
            severity,
            path: path.to_owned(),
            offset: None,
            line: None,
            column: None,
            message,
        }
    }

    fn at(rule: &'static str, severity: Severity, path: &str, d: &crate::annotation::Directive, message: String) -> Self {
        Diagnostic {
            rule,
            severity,
            path: path.to_owned(),
            offset: Some(d.span.start),
            line: Some(d.line),
            column: Some(d.column),
            message,
        }
    }

    fn sort_key(&self) -> (&str, Option<usize>, &str) {
        (&self.path, self.offset, self.rule)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path)?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, ":{l}:{c}")?;
        }
        write!(f, ": {} [{}] {}", self.severity, self.rule, self.message)
    }
}

/// Scanned text artifacts of the platform, in path order.
struct Scanned {
    trees: Vec<(String, DirectiveTree)>,
    diagnostics: Vec<Diagnostic>,
}

fn scan_platform(manifest: &BaseModelManifest, delimiters: &DelimiterTable) -> Scanned {
    let files = manifest.all_files();
    let results = crate::par::map(&files, |path| {
        let styles = delimiters.styles_for_path(path)?;
        let text = manifest.read(path).ok().and_then(|b| String::from_utf8(b).ok())?;
        Some(scan_with_styles(&text, styles))
    });
    let mut out = Scanned {
        trees: Vec::new(),
        diagnostics: Vec::new(),
    };
    for (path, r) in files.into_iter().zip(results) {
        match r {
            Some(Ok(tree)) => out.trees.push((path.to_owned(), tree)),
            Some(Err(e)) => {
                let (line, column) = e.position();
                out.diagnostics.push(Diagnostic {
                    rule: SCAN_ERROR,
                    severity: Severity::Error,
                    path: path.to_owned(),
                    offset: None,
                    line: Some(line),
                    column: Some(column),
                    message: e.to_string(),
                });
            }
            None => {}
        }
    }
    out
}

/// Runs every check. Never fails; problems become diagnostics sorted by
/// path, offset and rule id.
pub fn check_consistency(
    model: &FeatureModel,
    manifest: &BaseModelManifest,
    spec: &VariabilitySpec,
    delimiters: &DelimiterTable,
) -> Vec<Diagnostic> {
    check_consistency_capped(model, manifest, spec, delimiters, DEFAULT_ENUMERATION_CAP)
}

pub fn check_consistency_capped(
    model: &FeatureModel,
    manifest: &BaseModelManifest,
    spec: &VariabilitySpec,
    delimiters: &DelimiterTable,
    cap: usize,
) -> Vec<Diagnostic> {
    let scanned = scan_platform(manifest, delimiters);
    let mut out = scanned.diagnostics;

    let configs = match model.enumerate_configurations_capped(cap) {
        Ok(c) => Some(c),
        Err(ModelError::ModelTooLarge { features, cap }) => {
            out.push(Diagnostic::model(
                ENUMERATION_SKIPPED,
                Severity::Note,
                FEATURES_FILE,
                format!("{features} features exceed the enumeration cap of {cap}; dead-feature and unreachable-branch checks skipped"),
            ));
            None
        }
        Err(e) => {
            out.push(Diagnostic::model(ENUMERATION_SKIPPED, Severity::Note, FEATURES_FILE, e.to_string()));
            None
        }
    };

    if let Some(configs) = &configs {
        let mut alive = BTreeSet::new();
        for c in configs {
            alive.extend(c.selected.iter().map(String::as_str));
        }
        for id in model.feature_ids() {
            if !alive.contains(id) {
                out.push(Diagnostic::model(
                    DEAD_FEATURE,
                    Severity::Warning,
                    FEATURES_FILE,
                    format!("feature `{id}` appears in no valid configuration"),
                ));
            }
        }
    }

    check_symbols(model, manifest, &scanned.trees, &mut out);
    check_bindings(manifest, spec, &scanned.trees, &mut out);
    check_coverage(manifest, spec, &scanned.trees, &mut out);
    if let Some(configs) = &configs {
        check_reachability(model, manifest, spec, &scanned.trees, configs, &mut out);
    }

    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

/// Parses `variability.json` leniently and runs every check; binding
/// problems are reported alongside the other diagnostics.
pub fn check_platform(
    model: &FeatureModel,
    manifest: &BaseModelManifest,
    spec_source: &str,
    delimiters: &DelimiterTable,
) -> Vec<Diagnostic> {
    let (spec, problems) = match VariabilitySpec::parse_collecting(spec_source, model, manifest) {
        Ok(r) => r,
        Err(e) => return vec![Diagnostic::model(SPEC_ERROR, Severity::Error, SPEC_FILE, e.to_string())],
    };
    let mut out = check_consistency(model, manifest, &spec, delimiters);
    for p in problems {
        let rule = match p {
            SpecError::CuFeatureMismatch { .. } => CU_FEATURE_MISMATCH,
            _ => SPEC_ERROR,
        };
        out.push(Diagnostic::model(rule, Severity::Error, SPEC_FILE, p.to_string()));
    }
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

/// Names an expression may mention that are always defined: features,
/// feature slots and base slots.
fn global_names(model: &FeatureModel, manifest: &BaseModelManifest) -> BTreeSet<String> {
    let mut names: BTreeSet<String> = model.feature_ids().map(str::to_owned).collect();
    for f in model.features() {
        names.extend(f.slots.iter().map(|s| format!("{}.{}", f.id, s.name)));
    }
    names.extend(manifest.slots().iter().map(|s| s.name.clone()));
    names
}

fn check_symbols(model: &FeatureModel, manifest: &BaseModelManifest, trees: &[(String, DirectiveTree)], out: &mut Vec<Diagnostic>) {
    let globals = global_names(model, manifest);
    for (path, tree) in trees {
        let mut local: BTreeSet<&str> = BTreeSet::new();
        for d in tree.directives() {
            let mut unknown = Vec::new();
            if let Some(e) = d.kind.expr() {
                for s in e.symbols() {
                    if !globals.contains(s) && !local.contains(s) {
                        unknown.push(format!("`{s}`"));
                    }
                }
            }
            match &d.kind {
                DirectiveKind::Val { name } if !globals.contains(name) && !local.contains(name.as_str()) => {
                    unknown.push(format!("`{name}`"));
                }
                DirectiveKind::Uses { link } if manifest.link(link).is_none() => {
                    unknown.push(format!("link `{link}`"));
                }
                _ => {}
            }
            if let DirectiveKind::Set { name, .. } = &d.kind {
                local.insert(name);
            }
            if !unknown.is_empty() {
                out.push(Diagnostic::at(
                    UNKNOWN_SYMBOL,
                    Severity::Error,
                    path,
                    d,
                    format!("`{d}` refers to unknown {}", unknown.join(", ")),
                ));
            }
        }
    }
}

fn check_bindings(manifest: &BaseModelManifest, spec: &VariabilitySpec, trees: &[(String, DirectiveTree)], out: &mut Vec<Diagnostic>) {
    let by_path: BTreeMap<&str, &DirectiveTree> = trees.iter().map(|(p, t)| (p.as_str(), t)).collect();
    let component_has = |component: &str, pred: &dyn Fn(&DirectiveKind) -> bool| {
        manifest.component(component).is_some_and(|c| {
            c.artifacts.iter().any(|a| {
                by_path
                    .get(a.as_str())
                    .is_some_and(|t| t.directives().iter().any(|d| pred(&d.kind)))
            })
        })
    };
    for vp in spec.variation_points() {
        let mut empty: Vec<&str> = Vec::new();
        let what = match &vp.kind {
            VpKind::OvpExistence { components } => {
                let pred = |k: &DirectiveKind| matches!(k, DirectiveKind::If(_));
                empty.extend(components.iter().map(String::as_str).filter(|c| !component_has(c, &pred)));
                "`spl:if` directives".to_owned()
            }
            VpKind::OvpAssignment { components, slot_names } => {
                let pred = |k: &DirectiveKind| match k {
                    DirectiveKind::Set { name, .. } | DirectiveKind::Val { name } => slot_names.contains(name),
                    _ => false,
                };
                empty.extend(components.iter().map(String::as_str).filter(|c| !component_has(c, &pred)));
                format!("`spl:set`/`spl:val` directives for {}", slot_names.join(", "))
            }
            VpKind::OvpUses { link } => {
                let pred = |k: &DirectiveKind| matches!(k, DirectiveKind::Uses { link: l } if l == link);
                if let Some(l) = manifest.link(link) {
                    if !component_has(&l.from, &pred) && !component_has(&l.to, &pred) {
                        empty.push(&l.from);
                        empty.push(&l.to);
                    }
                }
                format!("`spl:uses {link}` blocks")
            }
            _ => continue,
        };
        for c in empty {
            out.push(Diagnostic::model(
                SUSPICIOUS_BINDING,
                Severity::Warning,
                SPEC_FILE,
                format!("variation point `{}` binds component `{c}`, which has no {what}", vp.id),
            ));
        }
    }
}

fn check_coverage(manifest: &BaseModelManifest, spec: &VariabilitySpec, trees: &[(String, DirectiveTree)], out: &mut Vec<Diagnostic>) {
    for (path, tree) in trees {
        let act = spec.activation_for(manifest.owner_of(path), manifest);
        for d in tree.directives() {
            if !act.covers(d) {
                out.push(Diagnostic::at(
                    UNCOVERED_DIRECTIVE,
                    Severity::Warning,
                    path,
                    d,
                    format!("`{d}` is not covered by an annotative variation point of this artifact"),
                ));
            }
        }
    }
}

struct Condition<'a> {
    path: &'a str,
    directive: &'a crate::annotation::Directive,
    expr: &'a Expr,
}

/// Flags `if`/`elif` conditions that are false under every valid
/// configuration. Conditions that read names assigned inside the artifact,
/// or that fail to evaluate, are left alone.
fn check_reachability(
    model: &FeatureModel,
    manifest: &BaseModelManifest,
    spec: &VariabilitySpec,
    trees: &[(String, DirectiveTree)],
    configs: &[Configuration],
    out: &mut Vec<Diagnostic>,
) {
    let globals = global_names(model, manifest);
    let mut conds = Vec::new();
    for (path, tree) in trees {
        let set_names: BTreeSet<&str> = tree
            .directives()
            .iter()
            .filter_map(|d| match &d.kind {
                DirectiveKind::Set { name, .. } => Some(name.as_str()),
                _ => None,
            })
            .collect();
        for d in tree.directives() {
            if let DirectiveKind::If(e) | DirectiveKind::Elif(e) = &d.kind {
                let syms = e.symbols();
                if syms.iter().all(|s| globals.contains(*s) && !set_names.contains(s)) {
                    conds.push(Condition {
                        path,
                        directive: d,
                        expr: e,
                    });
                }
            }
        }
    }
    if conds.is_empty() {
        return;
    }

    let features: BTreeSet<String> = model.feature_ids().map(str::to_owned).collect();
    let chunks: Vec<&[Configuration]> = configs.chunks(256).collect();
    let partial = crate::par::map(&chunks, |chunk| {
        let mut reached = vec![false; conds.len()];
        for c in *chunk {
            let ctx = analysis_context(model, manifest, spec, &features, c);
            for (i, cond) in conds.iter().enumerate() {
                if !reached[i] {
                    reached[i] = cond.expr.eval_condition(&ctx).unwrap_or(true);
                }
            }
        }
        reached
    });
    let mut reached = vec![false; conds.len()];
    for p in partial {
        for (r, x) in reached.iter_mut().zip(p) {
            *r |= x;
        }
    }
    for (cond, r) in conds.iter().zip(reached) {
        if !r {
            out.push(Diagnostic::at(
                UNREACHABLE_BRANCH,
                Severity::Warning,
                cond.path,
                cond.directive,
                format!("`{}` is false in every valid configuration", cond.directive),
            ));
        }
    }
}

/// The evaluation context a derivation of `config` would use, without
/// touching any file.
fn analysis_context(
    model: &FeatureModel,
    manifest: &BaseModelManifest,
    spec: &VariabilitySpec,
    features: &BTreeSet<String>,
    config: &Configuration,
) -> EvalContext {
    let mut ctx = EvalContext {
        features: features.clone(),
        selected: config.selected.clone(),
        slot_values: feature_slot_values(model, config),
        active_links: BTreeSet::new(),
    };
    let base: BTreeMap<String, Value> = manifest.slots().iter().map(|s| (s.name.clone(), s.value.clone())).collect();
    let mut assigned = base.clone();
    {
        let scope = |name: &str| ctx.lookup(name).or_else(|| base.get(name).cloned());
        for id in &spec.plan_resolution(config).compositional {
            if let Some(VpKind::ParametricSlotAssignment { slot, value_expr, .. }) = spec.vp(id).map(|v| &v.kind) {
                if let Ok(v) = value_expr.eval(&scope) {
                    assigned.insert(slot.clone(), v);
                }
            }
        }
    }
    ctx.slot_values.extend(assigned);
    ctx
}

/// Diagnostics as text, one per line.
pub fn render_text(diags: &[Diagnostic]) -> String {
    let mut s = String::new();
    for d in diags {
        s.push_str(&d.to_string());
        s.push('\n');
    }
    s
}
