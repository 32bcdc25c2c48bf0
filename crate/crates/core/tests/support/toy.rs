//! A six-feature shop platform that exercises every variation point kind.

use std::fs;

use tempfile::TempDir;

const FEATURES: &str = r#"{
  "features": [
    {"id": "Shop", "kind": "mandatory"},
    {"id": "Cart", "kind": "optional", "parent": "Shop"},
    {"id": "Pay", "kind": "optional", "parent": "Cart"},
    {"id": "Dark", "kind": "optional", "parent": "Shop"},
    {"id": "Search", "kind": "optional", "parent": "Shop"},
    {"id": "Promo", "kind": "optional", "parent": "Shop",
     "slots": [{"name": "code", "type": "string", "default": "SPRING"}]},
    {"id": "Log", "kind": "optional", "parent": "Shop"}
  ],
  "constraints": ["!Promo || Cart", "!Pay || Log"]
}"#;

const MANIFEST: &str = r#"{
  "components": [
    {"id": "Core", "artifacts": ["index.html", "app.js"]},
    {"id": "CartComp", "artifacts": ["cart/cart.js"]},
    {"id": "PayComp", "artifacts": ["pay/pay.js"]},
    {"id": "LightTheme", "artifacts": ["theme/theme.css"]},
    {"id": "DarkTheme", "artifacts": ["theme/dark.css", "theme/dark-extra.css"]},
    {"id": "SearchComp", "artifacts": ["search/basic.js", "search/full.js", "search/index.json"]},
    {"id": "Config", "artifacts": ["config/settings.yml"]}
  ],
  "fragments": [
    {"id": "basic-search", "artifacts": ["search/basic.js"]},
    {"id": "full-search", "artifacts": ["search/full.js", "search/index.json"]}
  ],
  "links": [{"id": "cart-pay", "from": "CartComp", "to": "PayComp"}],
  "slots": [
    {"name": "discount", "type": "integer", "value": 0},
    {"name": "level", "type": "string", "value": "warn"}
  ]
}"#;

const SPEC: &str = r#"{
  "variation_points": [
    {"id": "cart", "feature": "Cart", "kind": "ObjectExistence", "component": "CartComp"},
    {"id": "core-cart", "feature": "Cart", "kind": "OvpExistence", "components": ["Core", "Config"]},
    {"id": "pay", "feature": "Pay", "kind": "ObjectExistence", "component": "PayComp"},
    {"id": "pay-link", "feature": "Pay", "kind": "LinkExistence", "link": "cart-pay"},
    {"id": "pay-uses", "feature": "Pay", "kind": "OvpUses", "link": "cart-pay"},
    {"id": "dark", "feature": "Dark", "kind": "ObjectSubstitution", "target_component": "LightTheme",
     "replacement_component": "DarkTheme", "path_map": {"theme/dark.css": "theme/theme.css"}},
    {"id": "search-full", "feature": "Search", "kind": "FragmentSubstitution",
     "placement_fragment": "basic-search", "replacement_fragment": "full-search"},
    {"id": "search-markup", "feature": "Search", "kind": "OvpExistence", "components": ["Core", "DarkTheme", "SearchComp"]},
    {"id": "promo", "feature": "Promo", "kind": "ParametricSlotAssignment", "slot": "discount", "value_expr": "15"},
    {"id": "promo-values", "feature": "Promo", "kind": "OvpAssignment", "components": ["Core"],
     "slot_names": ["discount", "Promo.code"]},
    {"id": "log-level", "feature": "Log", "kind": "ParametricSlotAssignment", "slot": "level", "value_expr": "\"debug\""},
    {"id": "log-values", "feature": "Log", "kind": "OvpAssignment", "components": ["Config"], "slot_names": ["level"]},
    {"id": "log-calls", "feature": "Log", "kind": "OvpExistence", "components": ["CartComp", "Config"]}
  ],
  "composite_units": [
    {"id": "payments", "feature": "Pay", "members": ["pay", "pay-link", "pay-uses"]}
  ]
}"#;

const FILES: &[(&str, &str)] = &[
    (
        "index.html",
        "<!doctype html>\n<html>\n<body>\n  <h1>Shop</h1>\n  <!-- spl:if Cart -->\n  <a href=\"cart\">Cart</a>\n  <!-- spl:if Pay && !Search -->\n  <a href=\"pay\">Pay now</a>\n  <!-- spl:elif Pay --><a href=\"pay\">Pay</a>\n  <!-- spl:endif -->\n  <!-- spl:else -->\n  <p>Browse only</p>\n  <!-- spl:endif -->\n  <p>Discount: <!-- spl:val discount -->%</p>\n  <!-- spl:if Search --><input type=\"search\"><!-- spl:endif -->\n</body>\n</html>\n",
    ),
    (
        "app.js",
        "const shop = {};\n/* spl:if Cart */\nshop.cart = true;\n/* spl:endif */\nshop.discount = /* spl:val discount */;\n// spl:if Promo\n// spl:set discount = 50\nshop.code = \"/* spl:val Promo.code */\";\n// spl:endif\nshop.promo = /* spl:val discount */;\n",
    ),
    (
        "cart/cart.js",
        "export function cart() {\n  // spl:uses cart-pay\n  import('../pay/pay.js');\n  // spl:enduses\n  // spl:if Log\n  console.log('cart');\n  // spl:endif\n}\n",
    ),
    ("pay/pay.js", "export const pay = 1;\n"),
    ("theme/theme.css", "body { color: black; }\n"),
    (
        "theme/dark.css",
        "/* spl:if Search */ .search { color: white; } /* spl:endif */\nbody { color: white; }\n",
    ),
    ("theme/dark-extra.css", ".shade { opacity: 0.5; }\n"),
    ("search/basic.js", "export const search = 'basic';\n"),
    ("search/full.js", "export const search = 'full';\n"),
    ("search/index.json", "/* spl:if Search */{\"full\": true}/* spl:endif */\n"),
    (
        "config/settings.yml",
        "app:\n  level: # spl:val level\n# spl:if Log\n  log-file: shop.log\n# spl:endif\n# spl:if Cart\n  cart: true\n# spl:endif\n",
    ),
    ("README.md", "# Shop\n\nA toy shop.\n"),
];

/// Not UTF-8; must come through untouched.
pub const LOGO: &[u8] = &[0x89, b'P', b'N', b'G', 0xff, 0xfe, b'\n'];

pub fn shop() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let write = |rel: &str, bytes: &[u8]| {
        let p = dir.path().join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, bytes).unwrap();
    };
    write("features.json", FEATURES.as_bytes());
    write("basemodel.json", MANIFEST.as_bytes());
    write("variability.json", SPEC.as_bytes());
    for (path, body) in FILES {
        write(path, body.as_bytes());
    }
    write("assets/logo.png", LOGO);
    dir
}
