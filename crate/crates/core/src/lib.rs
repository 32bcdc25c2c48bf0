//! Product-line derivation engine.
//!
//! A product line is described by three documents next to its source tree:
//! a feature model (`features.json`), a base-model manifest
//! (`basemodel.json`) listing components, fragments, links and slots, and a
//! variability document (`variability.json`) binding features to
//! variation points. Given a configuration, [`derivation::derive_product`]
//! applies the compositional variation points to pick and substitute
//! artifacts, then resolves comment-embedded `spl:` directives inside the
//! surviving text artifacts.

pub mod analysis;
pub mod annotation;
pub mod base_model;
pub mod composition;
pub mod derivation;
pub mod expr;
pub mod feature_model;
pub mod metrics;
pub mod par;
pub mod sample;
pub mod value;
pub mod variability;

pub use expr::{EvalError, Expr};
pub use feature_model::{Configuration, FeatureModel, ValidationReport, Violation};
pub use value::{Value, ValueType};
