//! Compositional resolution: which components, files and links make it into
//! the product, where files land, and the values of base slots.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::base_model::BaseModelManifest;
use crate::expr::{EvalError, Scope};
use crate::value::{Value, ValueType};
use crate::variability::{VariabilitySpec, VariationPoint, VpKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompositionError {
    #[error("variation point `{vp}` refers to unknown `{name}`")]
    DanglingReference { vp: String, name: String },
    #[error("variation point `{vp}`: product path `{path}` is already taken by `{existing}`, cannot place `{incoming}`")]
    SubstitutionCollision {
        vp: String,
        path: String,
        existing: String,
        incoming: String,
    },
    #[error("variation point `{vp}`: slot `{slot}` is {expected}, value is {found}")]
    TypeMismatch {
        vp: String,
        slot: String,
        expected: ValueType,
        found: ValueType,
    },
    #[error("variation point `{vp}`: {error}")]
    Eval { vp: String, error: EvalError },
    #[error("variation point `{0}` is annotative")]
    NotCompositional(String),
}

/// The product under construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProductSkeleton {
    pub included_components: BTreeSet<String>,
    /// product path -> platform source path
    pub artifacts: BTreeMap<String, String>,
    pub active_links: BTreeSet<String>,
    pub slot_values: BTreeMap<String, Value>,
    /// Source paths removed by a substitution; later steps never re-add them.
    #[serde(skip)]
    banned: BTreeSet<String>,
    #[serde(skip)]
    assigned_by: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

/// Starting point before any variation point is applied: everything not
/// waiting on a variation point to bring it in.
///
/// Components bound by `ObjectExistence` and the replacement side of
/// substitutions start out excluded. Substitution targets and placements
/// start included and are swapped out only when their variation point runs.
pub fn init_skeleton(manifest: &BaseModelManifest, spec: &VariabilitySpec) -> ProductSkeleton {
    let mut pending_components = BTreeSet::new();
    let mut pending_paths = BTreeSet::new();
    let mut pending_links = BTreeSet::new();
    for vp in spec.variation_points() {
        match &vp.kind {
            VpKind::ObjectExistence { component } => {
                pending_components.insert(component.as_str());
            }
            VpKind::ObjectSubstitution {
                replacement_component, ..
            } => {
                pending_components.insert(replacement_component.as_str());
            }
            VpKind::FragmentSubstitution {
                replacement_fragment, ..
            } => {
                if let Some(f) = manifest.fragment(replacement_fragment) {
                    pending_paths.extend(f.artifacts.iter().map(String::as_str));
                }
            }
            VpKind::LinkExistence { link } => {
                pending_links.insert(link.as_str());
            }
            _ => {}
        }
    }
    let mut skel = ProductSkeleton::default();
    for c in manifest.components() {
        if pending_components.contains(c.id.as_str()) {
            continue;
        }
        skel.included_components.insert(c.id.clone());
        for a in &c.artifacts {
            if !pending_paths.contains(a.as_str()) {
                skel.artifacts.insert(a.clone(), a.clone());
            }
        }
    }
    for f in manifest.unclaimed_files() {
        skel.artifacts.insert(f.clone(), f.clone());
    }
    skel.active_links = manifest
        .links()
        .iter()
        .filter(|l| !pending_links.contains(l.id.as_str()))
        .map(|l| l.id.clone())
        .collect();
    skel.slot_values = manifest
        .slots()
        .iter()
        .map(|s| (s.name.clone(), s.value.clone()))
        .collect();
    skel
}

impl ProductSkeleton {
    /// (source path, product path) pairs ordered by product path.
    pub fn included_artifacts(&self) -> impl Iterator<Item = (&str, &str)> {
        self.artifacts.iter().map(|(dst, src)| (src.as_str(), dst.as_str()))
    }

    pub fn contains_source(&self, src: &str) -> bool {
        self.artifacts.values().any(|s| s == src)
    }

    fn place(&mut self, vp: &str, src: &str, dst: &str) -> Result<(), CompositionError> {
        if self.banned.contains(src) {
            return Ok(());
        }
        match self.artifacts.get(dst) {
            Some(existing) if existing == src => Ok(()),
            Some(existing) => Err(CompositionError::SubstitutionCollision {
                vp: vp.to_owned(),
                path: dst.to_owned(),
                existing: existing.clone(),
                incoming: src.to_owned(),
            }),
            None => {
                self.artifacts.insert(dst.to_owned(), src.to_owned());
                Ok(())
            }
        }
    }

    /// Removes every placement of `src`; returns whether one existed.
    fn remove_source(&mut self, src: &str) -> bool {
        let before = self.artifacts.len();
        self.artifacts.retain(|_, s| s != src);
        self.banned.insert(src.to_owned());
        self.artifacts.len() != before
    }

    pub fn apply_object_existence(
        &mut self,
        manifest: &BaseModelManifest,
        vp: &str,
        component: &str,
    ) -> Result<(), CompositionError> {
        let c = manifest.component(component).ok_or_else(|| dangling(vp, component))?;
        if self.banned.contains(&format!("component:{component}")) {
            return Ok(());
        }
        self.included_components.insert(c.id.clone());
        for a in &c.artifacts {
            self.place(vp, a, a)?;
        }
        Ok(())
    }

    pub fn apply_link_existence(&mut self, manifest: &BaseModelManifest, vp: &str, link: &str) -> Result<(), CompositionError> {
        manifest.link(link).ok_or_else(|| dangling(vp, link))?;
        self.active_links.insert(link.to_owned());
        Ok(())
    }

    pub fn apply_object_substitution(
        &mut self,
        manifest: &BaseModelManifest,
        vp: &str,
        target: &str,
        replacement: &str,
        path_map: &BTreeMap<String, String>,
    ) -> Result<(), CompositionError> {
        let t = manifest.component(target).ok_or_else(|| dangling(vp, target))?;
        let r = manifest.component(replacement).ok_or_else(|| dangling(vp, replacement))?;
        self.included_components.remove(target);
        self.banned.insert(format!("component:{target}"));
        for a in &t.artifacts {
            self.remove_source(a);
        }
        self.included_components.insert(r.id.clone());
        for a in &r.artifacts {
            let dst = path_map.get(a).unwrap_or(a);
            self.place(vp, a, dst)?;
        }
        Ok(())
    }

    pub fn apply_fragment_substitution(
        &mut self,
        manifest: &BaseModelManifest,
        vp: &str,
        placement: &str,
        replacement: &str,
    ) -> Result<(), CompositionError> {
        let p = manifest.fragment(placement).ok_or_else(|| dangling(vp, placement))?;
        let r = manifest.fragment(replacement).ok_or_else(|| dangling(vp, replacement))?;
        for a in &p.artifacts {
            if !self.remove_source(a) {
                self.warnings
                    .push(format!("{vp}: `{a}` of fragment `{placement}` was already absent"));
            }
        }
        for a in &r.artifacts {
            self.place(vp, a, a)?;
        }
        Ok(())
    }

    /// Evaluates `vp`'s value in `scope` and stores it. A second assignment
    /// to the same slot wins and leaves a warning.
    pub fn apply_parametric_assignment(
        &mut self,
        manifest: &BaseModelManifest,
        vp: &VariationPoint,
        scope: &dyn Scope,
    ) -> Result<(), CompositionError> {
        let VpKind::ParametricSlotAssignment { slot, value_expr, .. } = &vp.kind else {
            return Err(CompositionError::NotCompositional(vp.id.clone()));
        };
        let decl = manifest.slot(slot).ok_or_else(|| dangling(&vp.id, slot))?;
        let value = value_expr.eval(scope).map_err(|error| CompositionError::Eval {
            vp: vp.id.clone(),
            error,
        })?;
        if value.value_type() != decl.ty {
            return Err(CompositionError::TypeMismatch {
                vp: vp.id.clone(),
                slot: slot.clone(),
                expected: decl.ty,
                found: value.value_type(),
            });
        }
        if let Some(prev) = self.assigned_by.insert(slot.clone(), vp.id.clone()) {
            self.warnings
                .push(format!("{}: slot `{slot}` was already assigned by `{prev}`; last assignment wins", vp.id));
        }
        self.slot_values.insert(slot.clone(), value);
        Ok(())
    }

    /// Applies one compositional variation point.
    pub fn apply(&mut self, manifest: &BaseModelManifest, vp: &VariationPoint, scope: &dyn Scope) -> Result<(), CompositionError> {
        match &vp.kind {
            VpKind::ObjectExistence { component } => self.apply_object_existence(manifest, &vp.id, component),
            VpKind::LinkExistence { link } => self.apply_link_existence(manifest, &vp.id, link),
            VpKind::ObjectSubstitution {
                target_component,
                replacement_component,
                path_map,
            } => self.apply_object_substitution(manifest, &vp.id, target_component, replacement_component, path_map),
            VpKind::FragmentSubstitution {
                placement_fragment,
                replacement_fragment,
            } => self.apply_fragment_substitution(manifest, &vp.id, placement_fragment, replacement_fragment),
            VpKind::ParametricSlotAssignment { .. } => self.apply_parametric_assignment(manifest, vp, scope),
            _ => Err(CompositionError::NotCompositional(vp.id.clone())),
        }
    }
}

fn dangling(vp: &str, name: &str) -> CompositionError {
    CompositionError::DanglingReference {
        vp: vp.to_owned(),
        name: name.to_owned(),
    }
}

/// Runs the compositional steps in the given order. Assignments see the
/// selection plus the slot values as they were before the stage began, so
/// the order of steps only matters where two of them collide.
pub fn compose(
    manifest: &BaseModelManifest,
    spec: &VariabilitySpec,
    steps: &[String],
    base_scope: &dyn Scope,
) -> Result<ProductSkeleton, CompositionError> {
    let mut skel = init_skeleton(manifest, spec);
    let start = skel.slot_values.clone();
    let scope = |name: &str| base_scope.lookup(name).or_else(|| start.get(name).cloned());
    for id in steps {
        let vp = spec.vp(id).ok_or_else(|| dangling(id, id))?;
        log::debug!("apply {} ({:?})", vp.id, vp.kind);
        skel.apply(manifest, vp, &scope)?;
    }
    Ok(skel)
}
