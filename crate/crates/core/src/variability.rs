//! The concrete level of the variability model: variation points bound to
//! features, composite units grouping them, and the resolution plan derived
//! for a configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::Activation;
use crate::base_model::{normalize_path, BaseModelManifest};
use crate::expr::{Expr, ParseError};
use crate::feature_model::{Configuration, FeatureKind, FeatureModel};
use crate::value::is_token;

pub const SPEC_FILE: &str = "variability.json";

#[derive(Debug, Clone, PartialEq)]
pub enum VpKind {
    ObjectExistence {
        component: String,
    },
    LinkExistence {
        link: String,
    },
    ObjectSubstitution {
        target_component: String,
        replacement_component: String,
        /// replacement artifact path -> product path it lands on
        path_map: BTreeMap<String, String>,
    },
    FragmentSubstitution {
        placement_fragment: String,
        replacement_fragment: String,
    },
    ParametricSlotAssignment {
        slot: String,
        value_source: String,
        value_expr: Expr,
    },
    OvpExistence {
        components: Vec<String>,
    },
    OvpAssignment {
        components: Vec<String>,
        slot_names: Vec<String>,
    },
    OvpUses {
        link: String,
    },
}

impl VpKind {
    pub fn name(&self) -> &'static str {
        match self {
            VpKind::ObjectExistence { .. } => "ObjectExistence",
            VpKind::LinkExistence { .. } => "LinkExistence",
            VpKind::ObjectSubstitution { .. } => "ObjectSubstitution",
            VpKind::FragmentSubstitution { .. } => "FragmentSubstitution",
            VpKind::ParametricSlotAssignment { .. } => "ParametricSlotAssignment",
            VpKind::OvpExistence { .. } => "OvpExistence",
            VpKind::OvpAssignment { .. } => "OvpAssignment",
            VpKind::OvpUses { .. } => "OvpUses",
        }
    }

    /// Position within the compositional stage; `None` for annotative kinds.
    pub fn compositional_rank(&self) -> Option<u8> {
        match self {
            VpKind::ObjectExistence { .. } => Some(0),
            VpKind::LinkExistence { .. } => Some(1),
            VpKind::ObjectSubstitution { .. } => Some(2),
            VpKind::FragmentSubstitution { .. } => Some(3),
            VpKind::ParametricSlotAssignment { .. } => Some(4),
            _ => None,
        }
    }

    pub fn is_compositional(&self) -> bool {
        self.compositional_rank().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationPoint {
    pub id: String,
    pub feature: String,
    pub kind: VpKind,
}

impl VariationPoint {
    /// Platform artifacts this variation point refers to.
    pub fn touched_artifacts(&self, manifest: &BaseModelManifest) -> BTreeSet<String> {
        let comp = |id: &str| -> Vec<String> {
            manifest.component(id).map(|c| c.artifacts.clone()).unwrap_or_default()
        };
        let frag = |id: &str| -> Vec<String> {
            manifest.fragment(id).map(|f| f.artifacts.clone()).unwrap_or_default()
        };
        let mut out = BTreeSet::new();
        match &self.kind {
            VpKind::ObjectExistence { component } => out.extend(comp(component)),
            VpKind::LinkExistence { .. } | VpKind::ParametricSlotAssignment { .. } => {}
            VpKind::ObjectSubstitution {
                target_component,
                replacement_component,
                ..
            } => {
                out.extend(comp(target_component));
                out.extend(comp(replacement_component));
            }
            VpKind::FragmentSubstitution {
                placement_fragment,
                replacement_fragment,
            } => {
                out.extend(frag(placement_fragment));
                out.extend(frag(replacement_fragment));
            }
            VpKind::OvpExistence { components } | VpKind::OvpAssignment { components, .. } => {
                for c in components {
                    out.extend(comp(c));
                }
            }
            VpKind::OvpUses { link } => {
                if let Some(l) = manifest.link(link) {
                    out.extend(comp(&l.from));
                    out.extend(comp(&l.to));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompositeUnit {
    pub id: String,
    pub feature: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("variation point `{vp}`: {message}")]
    Malformed { vp: String, message: String },
    #[error("{context} refers to unknown `{name}`")]
    DanglingReference { context: String, name: String },
    #[error("variation point `{vp}` is bound to abstract feature `{feature}`")]
    AbstractFeatureBound { vp: String, feature: String },
    #[error("variation point `{vp}` is bound to `{feature}`, which is present in every product")]
    InvariantFeatureBound { vp: String, feature: String },
    #[error("variation point id `{0}` declared more than once")]
    DuplicateVpId(String),
    #[error("composite unit id `{0}` declared more than once")]
    DuplicateCuId(String),
    #[error("variation point `{vp}` belongs to both `{first}` and `{second}`")]
    VpInTwoCUs {
        vp: String,
        first: String,
        second: String,
    },
    #[error("composite unit `{cu}` is bound to `{cu_feature}` but member `{vp}` is bound to `{vp_feature}`")]
    CuFeatureMismatch {
        cu: String,
        cu_feature: String,
        vp: String,
        vp_feature: String,
    },
    #[error("composite unit `{0}` needs at least two members")]
    CuTooSmall(String),
    #[error("variation point `{0}` substitutes an element with itself")]
    SelfSubstitution(String),
    #[error("variation point `{vp}`: {error}")]
    BadExpression { vp: String, error: ParseError },
    #[error("variable feature `{0}` is bound to no variation point (add it to `unbound_ok` to allow)")]
    UnboundFeature(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    variation_points: Vec<RawVp>,
    #[serde(default)]
    composite_units: Vec<RawCu>,
    #[serde(default)]
    unbound_ok: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCu {
    id: String,
    feature: String,
    members: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawVp {
    id: String,
    feature: String,
    kind: String,
    component: Option<String>,
    link: Option<String>,
    target_component: Option<String>,
    replacement_component: Option<String>,
    path_map: Option<BTreeMap<String, String>>,
    placement_fragment: Option<String>,
    replacement_fragment: Option<String>,
    slot: Option<String>,
    value_expr: Option<String>,
    components: Option<Vec<String>>,
    slot_names: Option<Vec<String>>,
}

impl RawVp {
    fn present_fields(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! field {
            ($($f:ident),*) => {$(if self.$f.is_some() { v.push(stringify!($f)); })*};
        }
        field!(
            component,
            link,
            target_component,
            replacement_component,
            path_map,
            placement_fragment,
            replacement_fragment,
            slot,
            value_expr,
            components,
            slot_names
        );
        v
    }

    fn into_vp(mut self) -> Result<VariationPoint, SpecError> {
        let (allowed, required): (&[&str], &[&str]) = match self.kind.as_str() {
            "ObjectExistence" => (&["component"], &["component"]),
            "LinkExistence" | "OvpUses" => (&["link"], &["link"]),
            "ObjectSubstitution" => (
                &["target_component", "replacement_component", "path_map"],
                &["target_component", "replacement_component"],
            ),
            "FragmentSubstitution" => (
                &["placement_fragment", "replacement_fragment"],
                &["placement_fragment", "replacement_fragment"],
            ),
            "ParametricSlotAssignment" => (&["slot", "value_expr"], &["slot", "value_expr"]),
            "OvpExistence" => (&["components"], &["components"]),
            "OvpAssignment" => (&["components", "slot_names"], &["components", "slot_names"]),
            other => {
                return Err(SpecError::Malformed {
                    vp: self.id,
                    message: format!("unknown variation point kind `{other}`"),
                })
            }
        };
        let present = self.present_fields();
        let malformed = |message: String| SpecError::Malformed {
            vp: self.id.clone(),
            message,
        };
        if let Some(f) = present.iter().find(|f| !allowed.contains(f)) {
            return Err(malformed(format!("field `{f}` is not allowed for {}", self.kind)));
        }
        if let Some(f) = required.iter().find(|f| !present.contains(f)) {
            return Err(malformed(format!("{} requires field `{f}`", self.kind)));
        }
        let kind = match self.kind.as_str() {
            "ObjectExistence" => VpKind::ObjectExistence {
                component: self.component.take().expect("checked"),
            },
            "LinkExistence" => VpKind::LinkExistence {
                link: self.link.take().expect("checked"),
            },
            "OvpUses" => VpKind::OvpUses {
                link: self.link.take().expect("checked"),
            },
            "ObjectSubstitution" => VpKind::ObjectSubstitution {
                target_component: self.target_component.take().expect("checked"),
                replacement_component: self.replacement_component.take().expect("checked"),
                path_map: self.path_map.take().unwrap_or_default(),
            },
            "FragmentSubstitution" => VpKind::FragmentSubstitution {
                placement_fragment: self.placement_fragment.take().expect("checked"),
                replacement_fragment: self.replacement_fragment.take().expect("checked"),
            },
            "ParametricSlotAssignment" => {
                let value_source = self.value_expr.take().expect("checked");
                let value_expr = Expr::parse(&value_source).map_err(|error| SpecError::BadExpression {
                    vp: self.id.clone(),
                    error,
                })?;
                VpKind::ParametricSlotAssignment {
                    slot: self.slot.take().expect("checked"),
                    value_source,
                    value_expr,
                }
            }
            "OvpExistence" => VpKind::OvpExistence {
                components: self.components.take().expect("checked"),
            },
            "OvpAssignment" => VpKind::OvpAssignment {
                components: self.components.take().expect("checked"),
                slot_names: self.slot_names.take().expect("checked"),
            },
            _ => unreachable!("kind checked above"),
        };
        Ok(VariationPoint {
            id: self.id,
            feature: self.feature,
            kind,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct VariabilitySpec {
    variation_points: Vec<VariationPoint>,
    composite_units: Vec<CompositeUnit>,
    unbound_ok: BTreeSet<String>,
    cu_of: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl VariabilitySpec {
    /// Parses `variability.json` and checks it against the model and manifest.
    /// Returns the first problem found.
    pub fn parse(src: &str, model: &FeatureModel, manifest: &BaseModelManifest) -> Result<Self, SpecError> {
        let (spec, mut problems) = Self::parse_collecting(src, model, manifest)?;
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(problems.swap_remove(0))
        }
    }

    /// Like [`Self::parse`] but keeps going after semantic problems, dropping
    /// variation points whose references do not resolve. Syntax errors are
    /// still fatal.
    pub fn parse_collecting(
        src: &str,
        model: &FeatureModel,
        manifest: &BaseModelManifest,
    ) -> Result<(Self, Vec<SpecError>), SpecError> {
        let raw: RawSpec = serde_json::from_str(src).map_err(|e| SpecError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let mut problems = Vec::new();
        let mut vps: Vec<VariationPoint> = Vec::new();
        let mut ids = BTreeSet::new();
        for r in raw.variation_points {
            if !is_token(&r.id) {
                problems.push(SpecError::Malformed {
                    vp: r.id.clone(),
                    message: "id is not a valid token".into(),
                });
                continue;
            }
            if !ids.insert(r.id.clone()) {
                problems.push(SpecError::DuplicateVpId(r.id.clone()));
                continue;
            }
            match r.into_vp() {
                Ok(vp) => {
                    let before = problems.len();
                    check_vp(&vp, model, manifest, &mut problems);
                    if problems.len() == before {
                        vps.push(vp);
                    }
                }
                Err(e) => problems.push(e),
            }
        }
        vps.sort_by(|a, b| a.id.cmp(&b.id));

        let mut cus = Vec::new();
        let mut cu_ids = BTreeSet::new();
        let mut cu_of: BTreeMap<String, String> = BTreeMap::new();
        for c in raw.composite_units {
            if !cu_ids.insert(c.id.clone()) {
                problems.push(SpecError::DuplicateCuId(c.id));
                continue;
            }
            if !model.contains(&c.feature) {
                problems.push(SpecError::DanglingReference {
                    context: format!("composite unit `{}`", c.id),
                    name: c.feature.clone(),
                });
            }
            if c.members.len() < 2 {
                problems.push(SpecError::CuTooSmall(c.id.clone()));
            }
            for m in &c.members {
                match vps.iter().find(|v| &v.id == m) {
                    None if !ids.contains(m) => problems.push(SpecError::DanglingReference {
                        context: format!("composite unit `{}`", c.id),
                        name: m.clone(),
                    }),
                    None => {}
                    Some(vp) if vp.feature != c.feature => problems.push(SpecError::CuFeatureMismatch {
                        cu: c.id.clone(),
                        cu_feature: c.feature.clone(),
                        vp: vp.id.clone(),
                        vp_feature: vp.feature.clone(),
                    }),
                    Some(_) => {}
                }
                if let Some(first) = cu_of.get(m) {
                    problems.push(SpecError::VpInTwoCUs {
                        vp: m.clone(),
                        first: first.clone(),
                        second: c.id.clone(),
                    });
                } else {
                    cu_of.insert(m.clone(), c.id.clone());
                }
            }
            cus.push(CompositeUnit {
                id: c.id,
                feature: c.feature,
                members: c.members,
            });
        }
        cus.sort_by(|a, b| a.id.cmp(&b.id));

        let mut warnings = Vec::new();
        let unbound_ok: BTreeSet<String> = raw.unbound_ok.into_iter().collect();
        for f in &unbound_ok {
            if !model.contains(f) {
                problems.push(SpecError::DanglingReference {
                    context: "unbound_ok".into(),
                    name: f.clone(),
                });
            }
        }
        let bound: BTreeSet<&str> = vps.iter().map(|v| v.feature.as_str()).collect();
        for f in model.features() {
            if f.kind != FeatureKind::Optional || bound.contains(f.id.as_str()) {
                continue;
            }
            if unbound_ok.contains(&f.id) {
                warnings.push(format!("feature `{}` is not bound to any variation point", f.id));
            } else {
                problems.push(SpecError::UnboundFeature(f.id.clone()));
            }
        }

        Ok((
            VariabilitySpec {
                variation_points: vps,
                composite_units: cus,
                unbound_ok,
                cu_of,
                warnings,
            },
            problems,
        ))
    }

    /// Sorted by id.
    pub fn variation_points(&self) -> &[VariationPoint] {
        &self.variation_points
    }

    pub fn composite_units(&self) -> &[CompositeUnit] {
        &self.composite_units
    }

    pub fn unbound_ok(&self) -> &BTreeSet<String> {
        &self.unbound_ok
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn vp(&self, id: &str) -> Option<&VariationPoint> {
        self.variation_points
            .binary_search_by(|v| v.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.variation_points[i])
    }

    pub fn composite_unit_of(&self, vp_id: &str) -> Option<&str> {
        self.cu_of.get(vp_id).map(String::as_str)
    }

    /// Variation points whose bound feature is selected, compositional first.
    /// Composite units add nothing beyond their members: a selected feature
    /// activates every variation point bound to it.
    pub fn plan_resolution(&self, config: &Configuration) -> ResolutionPlan {
        let mut compositional: Vec<&VariationPoint> = Vec::new();
        let mut annotative = Vec::new();
        for vp in self.variation_points.iter().filter(|v| config.is_selected(&v.feature)) {
            if vp.kind.is_compositional() {
                compositional.push(vp);
            } else {
                annotative.push(vp.id.clone());
            }
        }
        annotative.sort();
        compositional.sort_by(|a, b| {
            (a.kind.compositional_rank(), &a.id).cmp(&(b.kind.compositional_rank(), &b.id))
        });
        ResolutionPlan {
            compositional: compositional.into_iter().map(|v| v.id.clone()).collect(),
            annotative,
        }
    }

    /// Feature -> variation points -> artifacts, and the reverse.
    pub fn trace_bindings(&self, manifest: &BaseModelManifest) -> TraceIndex {
        let mut features: BTreeMap<String, FeatureBinding> = BTreeMap::new();
        let mut artifacts: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for f in &self.unbound_ok {
            features.entry(f.clone()).or_default();
        }
        for vp in &self.variation_points {
            let touched = vp.touched_artifacts(manifest);
            for a in &touched {
                artifacts.entry(a.clone()).or_default().insert(vp.feature.clone());
            }
            let entry = features.entry(vp.feature.clone()).or_default();
            entry.vps.push(vp.id.clone());
            entry.artifacts.extend(touched);
        }
        TraceIndex { features, artifacts }
    }

    /// Which directives the annotative variation points declare for a
    /// component. Every variation point declared counts, selected or not:
    /// directives of unselected features still have to be resolved away.
    pub fn activation_for(&self, component: Option<&str>, manifest: &BaseModelManifest) -> Activation {
        let mut act = Activation::default();
        let Some(component) = component else {
            return act;
        };
        for vp in &self.variation_points {
            match &vp.kind {
                VpKind::OvpExistence { components } if components.iter().any(|c| c == component) => {
                    act.existence = true;
                }
                VpKind::OvpAssignment {
                    components,
                    slot_names,
                } if components.iter().any(|c| c == component) => {
                    act.assignment_slots.extend(slot_names.iter().cloned());
                }
                VpKind::OvpUses { link }
                    if manifest
                        .link(link)
                        .is_some_and(|l| l.from == component || l.to == component) =>
                {
                    act.uses_links.insert(link.clone());
                }
                _ => {}
            }
        }
        act
    }

    /// Annotative variation points of active features covering a directive
    /// category in a component; used to attribute resolved directives.
    pub(crate) fn annotative_vps_for<'a>(
        &'a self,
        component: &'a str,
        manifest: &'a BaseModelManifest,
    ) -> impl Iterator<Item = &'a VariationPoint> + 'a {
        self.variation_points.iter().filter(move |vp| match &vp.kind {
            VpKind::OvpExistence { components } | VpKind::OvpAssignment { components, .. } => {
                components.iter().any(|c| c == component)
            }
            VpKind::OvpUses { link } => manifest
                .link(link)
                .is_some_and(|l| l.from == component || l.to == component),
            _ => false,
        })
    }
}

fn check_vp(vp: &VariationPoint, model: &FeatureModel, manifest: &BaseModelManifest, out: &mut Vec<SpecError>) {
    let dangling = |name: &str| SpecError::DanglingReference {
        context: format!("variation point `{}`", vp.id),
        name: name.to_owned(),
    };
    match model.feature(&vp.feature) {
        None => out.push(dangling(&vp.feature)),
        Some(f) if f.kind == FeatureKind::Abstract => out.push(SpecError::AbstractFeatureBound {
            vp: vp.id.clone(),
            feature: vp.feature.clone(),
        }),
        Some(_) if model.is_core(&vp.feature) => out.push(SpecError::InvariantFeatureBound {
            vp: vp.id.clone(),
            feature: vp.feature.clone(),
        }),
        Some(_) => {}
    }
    let component = |id: &str, out: &mut Vec<SpecError>| {
        if manifest.component(id).is_none() {
            out.push(dangling(id));
        }
    };
    let link = |id: &str, out: &mut Vec<SpecError>| {
        if manifest.link(id).is_none() {
            out.push(dangling(id));
        }
    };
    let fragment = |id: &str, out: &mut Vec<SpecError>| {
        if manifest.fragment(id).is_none() {
            out.push(dangling(id));
        }
    };
    let malformed = |message: String| SpecError::Malformed {
        vp: vp.id.clone(),
        message,
    };
    match &vp.kind {
        VpKind::ObjectExistence { component: c } => component(c, out),
        VpKind::LinkExistence { link: l } | VpKind::OvpUses { link: l } => link(l, out),
        VpKind::ObjectSubstitution {
            target_component,
            replacement_component,
            path_map,
        } => {
            component(target_component, out);
            component(replacement_component, out);
            if target_component == replacement_component {
                out.push(SpecError::SelfSubstitution(vp.id.clone()));
            }
            let replacement = manifest.component(replacement_component);
            for (from, to) in path_map {
                if !replacement.is_some_and(|r| r.artifacts.contains(from)) {
                    out.push(malformed(format!(
                        "path_map key `{from}` is not an artifact of `{replacement_component}`"
                    )));
                }
                if normalize_path(to).map(|n| &n != to).unwrap_or(true) {
                    out.push(malformed(format!("path_map target `{to}` is not a normalised relative path")));
                }
            }
        }
        VpKind::FragmentSubstitution {
            placement_fragment,
            replacement_fragment,
        } => {
            fragment(placement_fragment, out);
            fragment(replacement_fragment, out);
            if placement_fragment == replacement_fragment {
                out.push(SpecError::SelfSubstitution(vp.id.clone()));
            }
        }
        VpKind::ParametricSlotAssignment { slot, .. } => {
            if manifest.slot(slot).is_none() {
                out.push(dangling(slot));
            }
        }
        VpKind::OvpExistence { components } | VpKind::OvpAssignment { components, .. } => {
            if components.is_empty() {
                out.push(malformed("needs at least one component".into()));
            }
            for c in components {
                component(c, out);
            }
            if let VpKind::OvpAssignment { slot_names, .. } = &vp.kind {
                if slot_names.is_empty() {
                    out.push(malformed("needs at least one slot name".into()));
                }
                for s in slot_names {
                    if Expr::parse(s).map(|e| !matches!(e, Expr::Ident(_))).unwrap_or(true) {
                        out.push(malformed(format!("`{s}` is not a slot name")));
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ResolutionPlan {
    pub compositional: Vec<String>,
    pub annotative: Vec<String>,
}

impl ResolutionPlan {
    pub fn is_empty(&self) -> bool {
        self.compositional.is_empty() && self.annotative.is_empty()
    }

    /// Compositional steps followed by annotative steps.
    pub fn flattened(&self) -> impl Iterator<Item = &str> {
        self.compositional
            .iter()
            .chain(&self.annotative)
            .map(String::as_str)
    }

    pub fn contains(&self, vp: &str) -> bool {
        self.flattened().any(|v| v == vp)
    }
}

impl fmt::Display for ResolutionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "compositional: {}", self.compositional.join(", "))?;
        writeln!(f, "annotative: {}", self.annotative.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FeatureBinding {
    pub vps: Vec<String>,
    pub artifacts: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TraceIndex {
    pub features: BTreeMap<String, FeatureBinding>,
    pub artifacts: BTreeMap<String, BTreeSet<String>>,
}
