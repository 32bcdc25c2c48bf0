//! Random feature models and a brute-force subset filter over them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value as Json};

use super::naive::{self, V};

/// A feature model as plain data, read straight from `features.json`.
#[derive(Debug, Clone)]
pub struct RawModel {
    pub ids: Vec<String>,
    pub parent: BTreeMap<String, String>,
    pub kind: BTreeMap<String, String>,
    /// (parent, is_alternative, members)
    pub groups: Vec<(String, bool, Vec<String>)>,
    pub constraints: Vec<String>,
    pub slot_defaults: BTreeMap<String, V>,
}

fn to_v(j: &Json) -> V {
    match j {
        Json::Bool(b) => V::B(*b),
        Json::Number(n) => V::I(n.as_i64().unwrap()),
        Json::String(s) => V::S(s.clone()),
        other => panic!("unexpected slot value {other}"),
    }
}

impl RawModel {
    pub fn from_json(src: &str) -> Self {
        let j: Json = serde_json::from_str(src).unwrap();
        let mut m = RawModel {
            ids: Vec::new(),
            parent: BTreeMap::new(),
            kind: BTreeMap::new(),
            groups: Vec::new(),
            constraints: Vec::new(),
            slot_defaults: BTreeMap::new(),
        };
        for f in j["features"].as_array().unwrap() {
            let id = f["id"].as_str().unwrap().to_string();
            if let Some(p) = f["parent"].as_str() {
                m.parent.insert(id.clone(), p.to_string());
            }
            m.kind.insert(id.clone(), f["kind"].as_str().unwrap().to_string());
            for s in f["slots"].as_array().into_iter().flatten() {
                if let Some(d) = s.get("default") {
                    m.slot_defaults.insert(format!("{id}.{}", s["name"].as_str().unwrap()), to_v(d));
                }
            }
            m.ids.push(id);
        }
        for g in j["groups"].as_array().into_iter().flatten() {
            m.groups.push((
                g["parent"].as_str().unwrap().to_string(),
                g["kind"] == "alternative",
                g["members"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect(),
            ));
        }
        for c in j["constraints"].as_array().into_iter().flatten() {
            m.constraints.push(c.as_str().unwrap().to_string());
        }
        m.ids.sort();
        m
    }

    pub fn is_valid(&self, sel: &BTreeSet<String>) -> bool {
        let root = self.ids.iter().find(|id| !self.parent.contains_key(*id)).unwrap();
        if !sel.contains(root) {
            return false;
        }
        for (child, parent) in &self.parent {
            if sel.contains(child) && !sel.contains(parent) {
                return false;
            }
            let implied = self.kind[child] != "optional";
            if implied && sel.contains(parent) && !sel.contains(child) {
                return false;
            }
        }
        for (parent, alt, members) in &self.groups {
            if !sel.contains(parent) {
                continue;
            }
            let n = members.iter().filter(|m| sel.contains(*m)).count();
            if (*alt && n != 1) || n == 0 {
                return false;
            }
        }
        let lookup = |name: &str| -> Option<V> {
            if self.ids.iter().any(|i| i == name) {
                Some(V::B(sel.contains(name)))
            } else {
                self.slot_defaults.get(name).cloned()
            }
        };
        self.constraints
            .iter()
            .all(|c| naive::eval_bool(c, &lookup).unwrap_or(false))
    }

    /// Every valid selection, ordered by the inclusion vector over sorted ids
    /// with the first id as the most significant position.
    pub fn brute_force(&self) -> Vec<BTreeSet<String>> {
        let n = self.ids.len();
        let mut out = Vec::new();
        for mask in 0u64..(1 << n) {
            let sel: BTreeSet<String> = (0..n)
                .filter(|&p| mask & (1 << (n - 1 - p)) != 0)
                .map(|p| self.ids[p].clone())
                .collect();
            if self.is_valid(&sel) {
                out.push(sel);
            }
        }
        out
    }
}

fn random_bool_expr<R: Rng>(rng: &mut R, ids: &[String], slots: &[(String, i64)], depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        if !slots.is_empty() && rng.gen_bool(0.2) {
            let (s, _) = slots.choose(rng).unwrap();
            let op = ["<", "<=", ">", ">=", "==", "!="].choose(rng).unwrap();
            return format!("{s} {op} {}", rng.gen_range(0..6));
        }
        return ids.choose(rng).unwrap().clone();
    }
    match rng.gen_range(0..3) {
        0 => format!("!({})", random_bool_expr(rng, ids, slots, depth - 1)),
        1 => format!(
            "({} && {})",
            random_bool_expr(rng, ids, slots, depth - 1),
            random_bool_expr(rng, ids, slots, depth - 1)
        ),
        _ => format!(
            "({} || {})",
            random_bool_expr(rng, ids, slots, depth - 1),
            random_bool_expr(rng, ids, slots, depth - 1)
        ),
    }
}

/// A random model of at most `max` features as `features.json` source:
/// random tree, kinds, groups over optional siblings, up to three
/// constraints and the occasional integer slot.
pub fn random_model<R: Rng>(rng: &mut R, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    let ids: Vec<String> = (0..n).map(|i| format!("F{i}")).collect();
    let mut features = Vec::new();
    let mut parents = vec![None; n];
    let mut kinds = vec!["mandatory"; n];
    let mut slots = Vec::new();
    for i in 0..n {
        let mut f = json!({"id": ids[i]});
        if i > 0 {
            let p = rng.gen_range(0..i);
            parents[i] = Some(p);
            kinds[i] = match rng.gen_range(0..10) {
                0 => "mandatory",
                1 => "abstract",
                _ => "optional",
            };
            f["parent"] = json!(ids[p]);
        }
        f["kind"] = json!(kinds[i]);
        if rng.gen_bool(0.15) {
            let d = rng.gen_range(0..6);
            f["slots"] = json!([{"name": "k", "type": "integer", "default": d}]);
            slots.push((format!("{}.k", ids[i]), d));
        }
        features.push(f);
    }
    let mut groups = Vec::new();
    for p in 0..n {
        let mut opts: Vec<usize> = (0..n).filter(|&c| parents[c] == Some(p) && kinds[c] == "optional").collect();
        if opts.len() >= 2 && rng.gen_bool(0.5) {
            opts.shuffle(rng);
            let k = rng.gen_range(2..=opts.len());
            let mut members: Vec<usize> = opts[..k].to_vec();
            members.sort();
            let kind = if rng.gen_bool(0.5) { "alternative" } else { "orgroup" };
            groups.push(json!({
                "parent": ids[p],
                "kind": kind,
                "members": members.iter().map(|&m| ids[m].clone()).collect::<Vec<_>>(),
            }));
        }
    }
    let constraints: Vec<String> = (0..rng.gen_range(0..=3))
        .map(|_| random_bool_expr(rng, &ids, &slots, 2))
        .collect();
    serde_json::to_string_pretty(&json!({
        "features": features,
        "groups": groups,
        "constraints": constraints,
    }))
    .unwrap()
}
