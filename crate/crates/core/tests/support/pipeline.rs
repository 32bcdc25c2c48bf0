//! Reference derivation over the raw platform documents: set arithmetic for
//! the compositional part, the reference directive processor for the rest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value as Json;

use super::models::RawModel;
use super::naive::{self, Ctx, Style, V};

const RESERVED: [&str; 4] = ["features.json", "basemodel.json", "variability.json", "delimiters.json"];

pub struct Expected {
    pub files: BTreeMap<String, Vec<u8>>,
    pub components: BTreeSet<String>,
    pub links: BTreeSet<String>,
    pub slots: BTreeMap<String, V>,
}

fn read_json(dir: &Path, name: &str) -> Json {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn strs(j: &Json) -> Vec<String> {
    j.as_array().into_iter().flatten().map(|x| x.as_str().unwrap().to_string()).collect()
}

fn json_v(j: &Json) -> V {
    match j {
        Json::Bool(b) => V::B(*b),
        Json::Number(n) => V::I(n.as_i64().unwrap()),
        Json::String(s) => V::S(s.clone()),
        other => panic!("{other}"),
    }
}

pub fn derive(dir: &Path, selected: &BTreeSet<String>) -> Expected {
    let model = RawModel::from_json(&std::fs::read_to_string(dir.join("features.json")).unwrap());
    let base = read_json(dir, "basemodel.json");
    let spec = read_json(dir, "variability.json");

    let artifacts_of = |list: &str, id: &str| -> Vec<String> {
        base[list]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["id"] == id)
            .map(|c| strs(&c["artifacts"]))
            .unwrap()
    };
    let vps: Vec<&Json> = spec["variation_points"].as_array().unwrap().iter().collect();
    let on = |vp: &Json| selected.contains(vp["feature"].as_str().unwrap());
    let of_kind = |k: &'static str| vps.iter().copied().filter(move |vp| vp["kind"] == k);

    // components
    let mut components: BTreeSet<String> = base["components"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap().to_string())
        .collect();
    let oe: BTreeSet<&str> = of_kind("ObjectExistence").map(|v| v["component"].as_str().unwrap()).collect();
    for c in &oe {
        if !of_kind("ObjectExistence").any(|v| v["component"] == *c && on(v)) {
            components.remove(*c);
        }
    }
    for vp in of_kind("ObjectSubstitution") {
        if on(vp) {
            components.remove(vp["target_component"].as_str().unwrap());
        } else {
            components.remove(vp["replacement_component"].as_str().unwrap());
        }
    }

    // files: path in the platform -> path in the product
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    for e in walkdir::WalkDir::new(dir).into_iter().map(Result::unwrap) {
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
            if !RESERVED.contains(&rel.as_str()) {
                files.insert(rel.clone(), rel);
            }
        }
    }
    let mut owned: BTreeMap<String, String> = BTreeMap::new();
    for c in base["components"].as_array().unwrap() {
        for a in strs(&c["artifacts"]) {
            owned.insert(a, c["id"].as_str().unwrap().to_string());
        }
    }
    files.retain(|src, _| owned.get(src).is_none_or(|c| components.contains(c)));
    for vp in of_kind("ObjectSubstitution").filter(|v| on(v)) {
        for (from, to) in vp["path_map"].as_object().into_iter().flatten() {
            if let Some(dst) = files.get_mut(from) {
                *dst = to.as_str().unwrap().to_string();
            }
        }
    }
    for vp in of_kind("FragmentSubstitution") {
        let placement = artifacts_of("fragments", vp["placement_fragment"].as_str().unwrap());
        let replacement = artifacts_of("fragments", vp["replacement_fragment"].as_str().unwrap());
        let gone = if on(vp) { placement } else { replacement };
        for p in gone {
            files.remove(&p);
        }
    }

    // links
    let mut links: BTreeSet<String> = base["links"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["id"].as_str().unwrap().to_string())
        .collect();
    for l in links.clone() {
        let governing: Vec<&Json> = of_kind("LinkExistence").filter(|v| v["link"] == l.as_str()).collect();
        if !governing.is_empty() && !governing.iter().any(|v| on(v)) {
            links.remove(&l);
        }
    }

    // slots
    let mut slot_values: BTreeMap<String, V> = model.slot_defaults.clone();
    let mut base_slots: BTreeMap<String, V> = BTreeMap::new();
    for s in base["slots"].as_array().into_iter().flatten() {
        base_slots.insert(s["name"].as_str().unwrap().to_string(), json_v(&s["value"]));
    }
    let start = base_slots.clone();
    for vp in of_kind("ParametricSlotAssignment").filter(|v| on(v)) {
        let lookup = |n: &str| {
            if model.ids.iter().any(|i| i == n) {
                Some(V::B(selected.contains(n)))
            } else {
                slot_values.get(n).or_else(|| start.get(n)).cloned()
            }
        };
        let v = naive::eval(vp["value_expr"].as_str().unwrap(), &lookup).unwrap();
        base_slots.insert(vp["slot"].as_str().unwrap().to_string(), v);
    }
    slot_values.extend(base_slots.clone());

    let mut styles = naive::default_styles();
    if dir.join("delimiters.json").exists() {
        for (ext, list) in read_json(dir, "delimiters.json").as_object().unwrap() {
            let parsed = list
                .as_array()
                .unwrap()
                .iter()
                .map(|s| match s["style"].as_str().unwrap() {
                    "line" => Style::Line(s["open"].as_str().unwrap().into()),
                    _ => Style::Block(s["open"].as_str().unwrap().into(), s["close"].as_str().unwrap().into()),
                })
                .collect();
            styles.insert(ext.clone(), parsed);
        }
    }
    let ctx = Ctx {
        features: model.ids.clone(),
        selected: selected.iter().cloned().collect(),
        slots: slot_values,
        links: links.iter().cloned().collect(),
    };

    let mut out = BTreeMap::new();
    for (src, dst) in files {
        let bytes = std::fs::read(dir.join(&src)).unwrap();
        let ext = src.rfind('.').map(|p| &src[p..]).filter(|e| !e.contains('/'));
        let resolved = match (ext.and_then(|e| styles.get(e)), std::str::from_utf8(&bytes)) {
            (Some(st), Ok(text)) => naive::resolve(text, st, &ctx)
                .unwrap_or_else(|e| panic!("{src}: {e}"))
                .into_bytes(),
            _ => bytes,
        };
        out.insert(dst, resolved);
    }
    Expected {
        files: out,
        components,
        links,
        slots: base_slots,
    }
}
