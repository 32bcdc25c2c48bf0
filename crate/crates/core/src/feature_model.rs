//! The abstract level of the variability model: the feature tree, its
//! groups and cross-tree constraints, and configurations over it.
//!
//! Group semantics are the usual ones: an alternative group admits exactly
//! one selected member when its parent is selected, an or-group at least
//! one. Abstract features organise the tree; for closure and validation they
//! behave like mandatory children of their parent.
//!
//! Enumeration is brute force over the feature-inclusion vector and refuses
//! models above a cap (24 features by default). The inner loop runs on a
//! bitmask form of the model and is spread across threads by [`crate::par`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ParseError};
use crate::par;
use crate::value::{is_identifier, Value, ValueType};

pub const DEFAULT_ENUMERATION_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mandatory,
    Optional,
    Abstract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feature {
    pub id: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub slots: Vec<SlotDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Alternative,
    Orgroup,
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupKind::Alternative => "alternative",
            GroupKind::Orgroup => "orgroup",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub parent: String,
    pub kind: GroupKind,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub source: String,
    pub expr: Expr,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    features: Vec<Feature>,
    #[serde(default)]
    groups: Vec<Group>,
    #[serde(default)]
    constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("feature `{0}` declared more than once")]
    DuplicateFeature(String),
    #[error("{context} refers to unknown `{name}`")]
    DanglingReference { context: String, name: String },
    #[error("multiple root features: {}", .0.join(", "))]
    MultipleRoots(Vec<String>),
    #[error("no root feature (every feature has a parent)")]
    NoRoot,
    #[error("`{0}` is not a valid identifier")]
    InvalidIdentifier(String),
    #[error("feature `{0}` is not connected to the root (cycle in parent links)")]
    Cycle(String),
    #[error("invalid group under `{parent}`: {reason}")]
    InvalidGroup { parent: String, reason: String },
    #[error("invalid slot `{feature}.{slot}`: {reason}")]
    InvalidSlot {
        feature: String,
        slot: String,
        reason: String,
    },
    #[error("constraint #{index}: {error}")]
    BadConstraint { index: usize, error: ParseError },
    #[error("model has {features} features, enumeration cap is {cap}")]
    ModelTooLarge { features: usize, cap: usize },
}

impl ModelError {
    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        ModelError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// A feature selection plus slot values keyed `Feature.slot`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    pub selected: BTreeSet<String>,
    #[serde(rename = "slots", default)]
    pub slot_values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn from_json(src: &str) -> Result<Self, ModelError> {
        serde_json::from_str(src).map_err(ModelError::from_json)
    }

    pub fn with_features<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Configuration {
            selected: ids.into_iter().map(Into::into).collect(),
            slot_values: BTreeMap::new(),
        }
    }

    pub fn is_selected(&self, id: &str) -> bool {
        self.selected.contains(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown slot `{0}`")]
    UnknownSlot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    UnknownFeature { feature: String },
    UnknownSlot { slot: String },
    SlotTypeMismatch { slot: String, expected: ValueType, found: ValueType },
    SlotOfUnselectedFeature { slot: String },
    RootNotSelected { root: String },
    ParentNotSelected { feature: String, parent: String },
    MissingMandatoryChild { parent: String, child: String },
    GroupCardinality { parent: String, kind: GroupKind, selected: usize },
    ConstraintViolated { constraint: String },
    ConstraintError { constraint: String, error: String },
    MissingSlotValue { slot: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownFeature { feature } => write!(f, "unknown feature `{feature}`"),
            Violation::UnknownSlot { slot } => write!(f, "unknown slot `{slot}`"),
            Violation::SlotTypeMismatch { slot, expected, found } => {
                write!(f, "slot `{slot}` expects {expected}, got {found}")
            }
            Violation::SlotOfUnselectedFeature { slot } => {
                write!(f, "slot `{slot}` set for a feature that is not selected")
            }
            Violation::RootNotSelected { root } => write!(f, "root feature `{root}` not selected"),
            Violation::ParentNotSelected { feature, parent } => {
                write!(f, "`{feature}` selected without its parent `{parent}`")
            }
            Violation::MissingMandatoryChild { parent, child } => {
                write!(f, "`{parent}` selected without its mandatory child `{child}`")
            }
            Violation::GroupCardinality { parent, kind, selected } => write!(
                f,
                "{kind} group under `{parent}` has {selected} selected member(s), expected {}",
                match kind {
                    GroupKind::Alternative => "exactly 1",
                    GroupKind::Orgroup => "at least 1",
                }
            ),
            Violation::ConstraintViolated { constraint } => {
                write!(f, "constraint `{constraint}` is false")
            }
            Violation::ConstraintError { constraint, error } => {
                write!(f, "constraint `{constraint}` cannot be evaluated: {error}")
            }
            Violation::MissingSlotValue { slot } => write!(f, "slot `{slot}` has no value"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FeatureModel {
    features: Vec<Feature>,
    index: BTreeMap<String, usize>,
    root: usize,
    children: Vec<Vec<usize>>,
    groups: Vec<Group>,
    group_of: Vec<Option<usize>>,
    constraints: Vec<Constraint>,
}

impl FeatureModel {
    /// Parses and validates a `features.json` document.
    pub fn parse(src: &str) -> Result<Self, ModelError> {
        let raw: RawModel = serde_json::from_str(src).map_err(ModelError::from_json)?;
        Self::build(raw.features, raw.groups, raw.constraints)
    }

    pub fn build(
        features: Vec<Feature>,
        groups: Vec<Group>,
        constraints: Vec<String>,
    ) -> Result<Self, ModelError> {
        let mut index = BTreeMap::new();
        for (i, f) in features.iter().enumerate() {
            if !is_identifier(&f.id) {
                return Err(ModelError::InvalidIdentifier(f.id.clone()));
            }
            if index.insert(f.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateFeature(f.id.clone()));
            }
        }

        let roots: Vec<usize> = (0..features.len())
            .filter(|&i| features[i].parent.is_none())
            .collect();
        let root = match roots.as_slice() {
            [] => return Err(ModelError::NoRoot),
            [r] => *r,
            many => {
                return Err(ModelError::MultipleRoots(
                    many.iter().map(|&i| features[i].id.clone()).collect(),
                ))
            }
        };

        let mut children = vec![Vec::new(); features.len()];
        for (i, f) in features.iter().enumerate() {
            if let Some(p) = &f.parent {
                let &pi = index.get(p).ok_or_else(|| ModelError::DanglingReference {
                    context: format!("parent of `{}`", f.id),
                    name: p.clone(),
                })?;
                children[pi].push(i);
            }
        }
        // every feature must reach the root within n steps
        for (i, f) in features.iter().enumerate() {
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = &features[cur].parent {
                cur = index[p];
                steps += 1;
                if steps > features.len() {
                    return Err(ModelError::Cycle(f.id.clone()));
                }
            }
        }

        for f in &features {
            let mut names = BTreeSet::new();
            for s in &f.slots {
                let bad = |reason: &str| ModelError::InvalidSlot {
                    feature: f.id.clone(),
                    slot: s.name.clone(),
                    reason: reason.into(),
                };
                if !is_identifier(&s.name) {
                    return Err(bad("not a valid identifier"));
                }
                if !names.insert(&s.name) {
                    return Err(bad("declared twice"));
                }
                if let Some(d) = &s.default {
                    if d.value_type() != s.ty {
                        return Err(bad(&format!("default is a {}, slot is {}", d.value_type(), s.ty)));
                    }
                }
            }
        }

        let mut group_of = vec![None; features.len()];
        for (gi, g) in groups.iter().enumerate() {
            let bad = |reason: String| ModelError::InvalidGroup {
                parent: g.parent.clone(),
                reason,
            };
            let &pi = index.get(&g.parent).ok_or_else(|| ModelError::DanglingReference {
                context: "group parent".into(),
                name: g.parent.clone(),
            })?;
            if g.members.len() < 2 {
                return Err(bad("a group needs at least two members".into()));
            }
            for m in &g.members {
                let &mi = index.get(m).ok_or_else(|| ModelError::DanglingReference {
                    context: format!("group under `{}`", g.parent),
                    name: m.clone(),
                })?;
                if features[mi].parent.as_deref() != Some(features[pi].id.as_str()) {
                    return Err(bad(format!("`{m}` is not a child of `{}`", g.parent)));
                }
                if features[mi].kind != FeatureKind::Optional {
                    return Err(bad(format!("grouped feature `{m}` must be optional")));
                }
                if group_of[mi].replace(gi).is_some() {
                    return Err(bad(format!("`{m}` belongs to more than one group")));
                }
            }
        }

        let mut parsed = Vec::with_capacity(constraints.len());
        for (i, source) in constraints.into_iter().enumerate() {
            let expr =
                Expr::parse(&source).map_err(|error| ModelError::BadConstraint { index: i, error })?;
            let model_ref = (&index, &features);
            for sym in expr.symbols() {
                if !resolves(model_ref, sym) {
                    return Err(ModelError::DanglingReference {
                        context: format!("constraint `{source}`"),
                        name: sym.to_owned(),
                    });
                }
            }
            parsed.push(Constraint { source, expr });
        }

        for c in children.iter_mut() {
            c.sort_by(|&a, &b| features[a].id.cmp(&features[b].id));
        }

        Ok(FeatureModel {
            features,
            index,
            root,
            children,
            groups,
            group_of,
            constraints: parsed,
        })
    }

    pub fn root(&self) -> &Feature {
        &self.features[self.root]
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, id: &str) -> Option<&Feature> {
        self.index.get(id).map(|&i| &self.features[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Feature ids in sorted order.
    pub fn feature_ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn children(&self, id: &str) -> impl Iterator<Item = &Feature> {
        let kids = self.index.get(id).map(|&i| self.children[i].as_slice()).unwrap_or(&[]);
        kids.iter().map(|&c| &self.features[c])
    }

    /// Looks up the declaration behind a `Feature.slot` name.
    pub fn slot(&self, qualified: &str) -> Option<(&Feature, &SlotDecl)> {
        let (fid, slot) = qualified.split_once('.')?;
        let f = self.feature(fid)?;
        f.slots.iter().find(|s| s.name == slot).map(|s| (f, s))
    }

    /// Children that are selected whenever their parent is.
    fn is_implied_child(&self, i: usize) -> bool {
        self.group_of[i].is_none()
            && matches!(self.features[i].kind, FeatureKind::Mandatory | FeatureKind::Abstract)
    }

    /// Features present in every configuration: the root and chains of
    /// mandatory/abstract children below it.
    pub fn is_core(&self, id: &str) -> bool {
        let Some(&start) = self.index.get(id) else {
            return false;
        };
        let mut i = start;
        loop {
            if i == self.root {
                return true;
            }
            if !self.is_implied_child(i) {
                return false;
            }
            i = self.index[self.features[i].parent.as_ref().expect("non-root has parent")];
        }
    }

    /// Adds the root, all ancestors of selected features, all mandatory
    /// descendants, and slot defaults. Never removes anything.
    pub fn complete(&self, partial: &Configuration) -> Result<Configuration, ConfigError> {
        for id in &partial.selected {
            if !self.contains(id) {
                return Err(ConfigError::UnknownFeature(id.clone()));
            }
        }
        for key in partial.slot_values.keys() {
            if self.slot(key).is_none() {
                return Err(ConfigError::UnknownSlot(key.clone()));
            }
        }
        let mut on = vec![false; self.features.len()];
        let mut stack = vec![self.root];
        for id in &partial.selected {
            stack.push(self.index[id]);
        }
        while let Some(i) = stack.pop() {
            if on[i] {
                continue;
            }
            on[i] = true;
            if let Some(p) = &self.features[i].parent {
                stack.push(self.index[p]);
            }
            stack.extend(self.children[i].iter().copied().filter(|&c| self.is_implied_child(c)));
        }
        let mut out = partial.clone();
        for (i, f) in self.features.iter().enumerate() {
            if !on[i] {
                continue;
            }
            out.selected.insert(f.id.clone());
            for s in &f.slots {
                if let Some(d) = &s.default {
                    out.slot_values
                        .entry(format!("{}.{}", f.id, s.name))
                        .or_insert_with(|| d.clone());
                }
            }
        }
        Ok(out)
    }

    /// Lists every rule the configuration breaks; an empty report means valid.
    pub fn validate(&self, config: &Configuration) -> ValidationReport {
        let mut v = Vec::new();
        for id in &config.selected {
            if !self.contains(id) {
                v.push(Violation::UnknownFeature { feature: id.clone() });
            }
        }
        for (key, value) in &config.slot_values {
            match self.slot(key) {
                None => v.push(Violation::UnknownSlot { slot: key.clone() }),
                Some((f, decl)) => {
                    if value.value_type() != decl.ty {
                        v.push(Violation::SlotTypeMismatch {
                            slot: key.clone(),
                            expected: decl.ty,
                            found: value.value_type(),
                        });
                    }
                    if !config.is_selected(&f.id) {
                        v.push(Violation::SlotOfUnselectedFeature { slot: key.clone() });
                    }
                }
            }
        }
        let root = self.root();
        if !config.is_selected(&root.id) {
            v.push(Violation::RootNotSelected { root: root.id.clone() });
        }
        for (id, &i) in &self.index {
            if !config.is_selected(id) {
                continue;
            }
            let f = &self.features[i];
            if let Some(p) = &f.parent {
                if !config.is_selected(p) {
                    v.push(Violation::ParentNotSelected {
                        feature: id.clone(),
                        parent: p.clone(),
                    });
                }
            }
            for &c in &self.children[i] {
                if self.is_implied_child(c) && !config.is_selected(&self.features[c].id) {
                    v.push(Violation::MissingMandatoryChild {
                        parent: id.clone(),
                        child: self.features[c].id.clone(),
                    });
                }
            }
        }
        for g in &self.groups {
            if !config.is_selected(&g.parent) {
                continue;
            }
            let n = g.members.iter().filter(|m| config.is_selected(m)).count();
            let ok = match g.kind {
                GroupKind::Alternative => n == 1,
                GroupKind::Orgroup => n >= 1,
            };
            if !ok {
                v.push(Violation::GroupCardinality {
                    parent: g.parent.clone(),
                    kind: g.kind,
                    selected: n,
                });
            }
        }
        let scope = |name: &str| self.lookup_for_constraints(config, name);
        for c in &self.constraints {
            match c.expr.eval_condition(&scope) {
                Ok(true) => {}
                Ok(false) => v.push(Violation::ConstraintViolated {
                    constraint: c.source.clone(),
                }),
                Err(e) => v.push(Violation::ConstraintError {
                    constraint: c.source.clone(),
                    error: e.to_string(),
                }),
            }
        }
        for (id, &i) in &self.index {
            if !config.is_selected(id) {
                continue;
            }
            for s in &self.features[i].slots {
                let key = format!("{id}.{}", s.name);
                if s.default.is_none() && !config.slot_values.contains_key(&key) {
                    v.push(Violation::MissingSlotValue { slot: key });
                }
            }
        }
        ValidationReport { violations: v }
    }

    fn lookup_for_constraints(&self, config: &Configuration, name: &str) -> Option<Value> {
        if self.contains(name) {
            return Some(Value::Bool(config.is_selected(name)));
        }
        let (_, decl) = self.slot(name)?;
        config
            .slot_values
            .get(name)
            .cloned()
            .or_else(|| decl.default.clone())
    }

    fn compile(&self, cap: usize) -> Result<Compiled, ModelError> {
        let n = self.features.len();
        if n > cap || n > 63 {
            return Err(ModelError::ModelTooLarge { features: n, cap });
        }
        // sorted position -> bit, most significant first
        let ids: Vec<&str> = self.feature_ids().collect();
        let bit_of = |id: &str| -> u64 {
            let pos = ids.binary_search(&id).expect("known id");
            1u64 << (n - 1 - pos)
        };
        let mut checks = Vec::new();
        let mut unfillable = 0u64;
        for f in &self.features {
            let b = bit_of(&f.id);
            if let Some(p) = &f.parent {
                checks.push((b, bit_of(p)));
            }
            if f.slots.iter().any(|s| s.default.is_none()) {
                unfillable |= b;
            }
        }
        let mut mandatory = Vec::new();
        for (i, f) in self.features.iter().enumerate() {
            let m = self.children[i]
                .iter()
                .filter(|&&c| self.is_implied_child(c))
                .fold(0u64, |acc, &c| acc | bit_of(&self.features[c].id));
            if m != 0 {
                mandatory.push((bit_of(&f.id), m));
            }
        }
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let members = g.members.iter().fold(0u64, |acc, m| acc | bit_of(m));
                (bit_of(&g.parent), members, g.kind)
            })
            .collect();
        let constraints = self
            .constraints
            .iter()
            .map(|c| CExpr::compile(&c.expr, &|name| {
                if self.contains(name) {
                    CExpr::Feature(bit_of(name))
                } else {
                    match self.slot(name).and_then(|(_, d)| d.default.clone()) {
                        Some(v) => CExpr::Lit(v),
                        None => CExpr::Unknown(name.to_owned()),
                    }
                }
            }))
            .collect();
        Ok(Compiled {
            n,
            ids: ids.iter().map(|s| s.to_string()).collect(),
            root: bit_of(&self.root().id),
            parents: checks,
            mandatory,
            groups,
            constraints,
            unfillable,
        })
    }

    pub fn enumerate_configurations(&self) -> Result<Vec<Configuration>, ModelError> {
        self.enumerate_configurations_capped(DEFAULT_ENUMERATION_CAP)
    }

    /// Every valid configuration, in lexicographic order of the inclusion
    /// vector over sorted feature ids. Slot values are the declared defaults.
    pub fn enumerate_configurations_capped(&self, cap: usize) -> Result<Vec<Configuration>, ModelError> {
        let c = self.compile(cap)?;
        let masks = par::filter_range(1u64 << c.n, |m| c.is_valid(m));
        Ok(masks.into_iter().map(|m| self.config_from_mask(&c, m)).collect())
    }

    /// Lazy, single-threaded counterpart of [`Self::enumerate_configurations`].
    pub fn configurations(&self) -> Result<Configurations<'_>, ModelError> {
        self.configurations_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn configurations_capped(&self, cap: usize) -> Result<Configurations<'_>, ModelError> {
        let compiled = self.compile(cap)?;
        Ok(Configurations {
            model: self,
            end: 1u64 << compiled.n,
            compiled,
            next: 0,
        })
    }

    pub fn count_products(&self) -> Result<u64, ModelError> {
        self.count_products_capped(DEFAULT_ENUMERATION_CAP)
    }

    pub fn count_products_capped(&self, cap: usize) -> Result<u64, ModelError> {
        let c = self.compile(cap)?;
        Ok(par::count_range(1u64 << c.n, |m| c.is_valid(m)))
    }

    pub fn detect_dead_features(&self) -> Result<BTreeSet<String>, ModelError> {
        self.detect_dead_features_capped(DEFAULT_ENUMERATION_CAP)
    }

    /// Features that appear in no valid configuration.
    pub fn detect_dead_features_capped(&self, cap: usize) -> Result<BTreeSet<String>, ModelError> {
        let c = self.compile(cap)?;
        let live = par::or_range(1u64 << c.n, |m| c.is_valid(m).then_some(m));
        Ok(c
            .ids
            .iter()
            .enumerate()
            .filter(|(pos, _)| live & (1u64 << (c.n - 1 - pos)) == 0)
            .map(|(_, id)| id.clone())
            .collect())
    }

    fn config_from_mask(&self, c: &Compiled, mask: u64) -> Configuration {
        let mut cfg = Configuration::default();
        for (pos, id) in c.ids.iter().enumerate() {
            if mask & (1u64 << (c.n - 1 - pos)) != 0 {
                cfg.selected.insert(id.clone());
                for s in &self.feature(id).expect("known").slots {
                    if let Some(d) = &s.default {
                        cfg.slot_values.insert(format!("{id}.{}", s.name), d.clone());
                    }
                }
            }
        }
        cfg
    }
}

fn resolves((index, features): (&BTreeMap<String, usize>, &Vec<Feature>), sym: &str) -> bool {
    if index.contains_key(sym) {
        return true;
    }
    let Some((fid, slot)) = sym.split_once('.') else {
        return false;
    };
    index
        .get(fid)
        .is_some_and(|&i| features[i].slots.iter().any(|s| s.name == slot))
}

pub struct Configurations<'a> {
    model: &'a FeatureModel,
    compiled: Compiled,
    next: u64,
    end: u64,
}

impl Iterator for Configurations<'_> {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        while self.next < self.end {
            let m = self.next;
            self.next += 1;
            if self.compiled.is_valid(m) {
                return Some(self.model.config_from_mask(&self.compiled, m));
            }
        }
        None
    }
}

/// Bitmask form of the model used by the enumeration loop.
struct Compiled {
    n: usize,
    ids: Vec<String>,
    root: u64,
    /// (feature bit, parent bit)
    parents: Vec<(u64, u64)>,
    /// (feature bit, mask of implied children)
    mandatory: Vec<(u64, u64)>,
    groups: Vec<(u64, u64, GroupKind)>,
    constraints: Vec<CExpr>,
    unfillable: u64,
}

impl Compiled {
    fn is_valid(&self, m: u64) -> bool {
        if m & self.root == 0 || m & self.unfillable != 0 {
            return false;
        }
        for &(b, p) in &self.parents {
            if m & b != 0 && m & p == 0 {
                return false;
            }
        }
        for &(b, kids) in &self.mandatory {
            if m & b != 0 && m & kids != kids {
                return false;
            }
        }
        for &(p, members, kind) in &self.groups {
            if m & p == 0 {
                continue;
            }
            let n = (m & members).count_ones();
            let ok = match kind {
                GroupKind::Alternative => n == 1,
                GroupKind::Orgroup => n >= 1,
            };
            if !ok {
                return false;
            }
        }
        self.constraints
            .iter()
            .all(|c| matches!(c.eval(m), Ok(Value::Bool(true))))
    }
}

enum CExpr {
    Lit(Value),
    Feature(u64),
    Unknown(String),
    Not(Box<CExpr>),
    Binary(expr::BinOp, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    fn compile(e: &Expr, ident: &dyn Fn(&str) -> CExpr) -> CExpr {
        match e {
            Expr::Lit(v) => CExpr::Lit(v.clone()),
            Expr::Ident(n) => ident(n),
            Expr::Not(inner) => CExpr::Not(Box::new(Self::compile(inner, ident))),
            Expr::Binary { op, lhs, rhs } => CExpr::Binary(
                *op,
                Box::new(Self::compile(lhs, ident)),
                Box::new(Self::compile(rhs, ident)),
            ),
        }
    }

    fn eval(&self, mask: u64) -> Result<Value, EvalError> {
        match self {
            CExpr::Lit(v) => Ok(v.clone()),
            CExpr::Feature(b) => Ok(Value::Bool(mask & b != 0)),
            CExpr::Unknown(n) => Err(EvalError::UnknownSymbol(n.clone())),
            CExpr::Not(inner) => match inner.eval(mask)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(EvalError::TypeMismatch {
                    op: "!",
                    left: other.value_type(),
                    right: None,
                }),
            },
            CExpr::Binary(op, l, r) => expr::apply(*op, l.eval(mask)?, r.eval(mask)?),
        }
    }
}
