//! Ready-made checks for common model-check figures.
//!
//! Every preset is an ordinary `vmc-spec/1` document filled in with the
//! predictors of the data at hand, so anything a preset draws can also be
//! written by hand.

use serde_json::{json, Value};
use thiserror::Error;

use crate::compiler::{parse_spec_value, SpecError, VmcSpec};
use crate::models::{fit_grouped, simulate_dataset, ModelBundle, ModelError, NigPrior, SimulationConfig};
use crate::sampling::quantity_labels;
use crate::tables::{ColumnKind, ObservedTable};

pub const PRESET_IDS: [&str; 13] = [
    "teaser_a",
    "teaser_b",
    "teaser_c",
    "teaser_d",
    "teaser_e",
    "teaser_f",
    "teaser_g",
    "teaser_h",
    "teaser_i",
    "teaser_j",
    "expressiveness_a",
    "expressiveness_b",
    "expressiveness_c",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PresetError {
    #[error("unknown preset `{0}`; valid presets: {ids}", ids = PRESET_IDS.join(", "))]
    Unknown(String),
    #[error("preset `{preset}` needs a {kind} predictor in the observed data")]
    MissingPredictor { preset: String, kind: &'static str },
    #[error("preset `{preset}` needs quantity `{quantity}`; the model offers: {available}")]
    MissingQuantity { preset: String, quantity: String, available: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
}

fn first_predictor(obs: &ObservedTable, numeric: bool) -> Option<String> {
    obs.schema().iter().find(|c| matches!(c.kind, ColumnKind::Numeric) == numeric).map(|c| c.name.clone())
}

/// The spec document of a preset, before parsing.
pub fn preset_document(id: &str, bundle: &ModelBundle, obs: &ObservedTable) -> Result<Value, PresetError> {
    if !PRESET_IDS.contains(&id) {
        return Err(PresetError::Unknown(id.to_string()));
    }
    let group = || {
        first_predictor(obs, false)
            .ok_or_else(|| PresetError::MissingPredictor { preset: id.to_string(), kind: "categorical" })
    };
    let num = || {
        first_predictor(obs, true)
            .ok_or_else(|| PresetError::MissingPredictor { preset: id.to_string(), kind: "numeric" })
    };
    let layer = |mark: &str, policy: &str| json!({"mark": mark, "policy": policy});
    let obs_layer = |mark: &str| json!({"mark": mark});

    let doc = match id {
        "teaser_a" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("densityline", "individual")],
            "obs_layers": [obs_layer("densityline")],
        }),
        "teaser_b" => json!({
            "draw": {"quantity": "mu"},
            "obs_transform": "mean",
            "model_layers": [layer("densityline", "aggregate:mean")],
            "obs_layers": [obs_layer("point")],
        }),
        "teaser_c" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("point", "hops")],
            "obs_layers": [obs_layer("point")],
            "condition": {"x": num()?},
        }),
        "teaser_d" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("lineribbon", "collapse")],
            "obs_layers": [obs_layer("point")],
            "condition": {"x": num()?, "color": group()?},
        }),
        "teaser_e" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("densityline", "individual")],
            "obs_layers": [obs_layer("densityline")],
            "condition": {"column": group()?},
        }),
        "teaser_f" => json!({
            "draw": {"quantity": "y"},
            "obs_transform": "mean",
            "model_layers": [layer("pointinterval", "aggregate:mean")],
            "obs_layers": [obs_layer("point")],
            "layout": "nest",
            "condition": {"x": group()?},
        }),
        "teaser_g" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("slab", "collapse"), layer("interval", "collapse")],
            "obs_layers": [obs_layer("dots")],
            "layout": "nest",
            "condition": {"x": group()?},
        }),
        "teaser_h" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("interval", "collapse")],
            "obs_layers": [obs_layer("point")],
            "layout": "nest",
            "condition": {"x": group()?},
        }),
        "teaser_i" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("point", "collapse")],
            "obs_layers": [],
            "layout": "explicit:residual",
            "condition": {"x": num()?, "color": group()?},
        }),
        "teaser_j" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("point", "collapse")],
            "obs_layers": [],
            "layout": "explicit:qq",
        }),
        "expressiveness_a" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("slab", "collapse"), layer("interval", "collapse")],
            "obs_layers": [obs_layer("dots")],
        }),
        "expressiveness_b" => json!({
            "draw": {"quantity": "mu"},
            "model_layers": [layer("lineribbon", "collapse")],
            "obs_layers": [obs_layer("point")],
            "condition": {"x": num()?, "color": group()?},
        }),
        "expressiveness_c" => json!({
            "draw": {"quantity": "y"},
            "model_layers": [layer("densityline", "hops")],
            "obs_layers": [obs_layer("densityline")],
        }),
        _ => unreachable!("id checked above"),
    };
    let quantity = doc["draw"]["quantity"].as_str().unwrap_or("y");
    let available = quantity_labels(bundle);
    if !available.iter().any(|q| q == quantity) {
        return Err(PresetError::MissingQuantity {
            preset: id.to_string(),
            quantity: quantity.to_string(),
            available: available.join(", "),
        });
    }
    Ok(doc)
}

/// Fills in the preset `id` for `bundle` and `obs`.
pub fn preset(id: &str, bundle: &ModelBundle, obs: &ObservedTable) -> Result<VmcSpec, PresetError> {
    Ok(parse_spec_value(&preset_document(id, bundle, obs)?)?)
}

/// Rows per region in the demo data.
pub const DEMO_ROWS_PER_REGION: usize = 60;
/// Posterior draws in the demo bundle.
pub const DEMO_DRAWS: usize = 200;

/// Three regions with increasing slopes and a common noise scale.
pub fn demo_data(seed: u64) -> Result<ObservedTable, ModelError> {
    let cfg = SimulationConfig::with_regions(DEMO_ROWS_PER_REGION, vec![1.0, 1.5, 0.5], vec![1.0, 2.5, 4.0], 0.3, seed);
    simulate_dataset(&cfg)
}

/// Per-region gaussian regression fitted to `obs`.
pub fn demo_bundle(obs: &ObservedTable, seed: u64) -> Result<ModelBundle, ModelError> {
    fit_grouped(obs, "region", "x", &NigPrior::diffuse(2), DEMO_DRAWS, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::MarkChoice;
    use crate::layers::{GroupingPolicy, Mark};
    use crate::layout::{ExplicitEncoding, LayoutKind};

    fn demo() -> (ModelBundle, ObservedTable) {
        let obs = demo_data(1).unwrap();
        (demo_bundle(&obs, 1).unwrap(), obs)
    }

    #[test]
    fn raincloud_layers() {
        let (b, o) = demo();
        let s = preset("teaser_g", &b, &o).unwrap();
        let marks: Vec<_> = s.model_layers.iter().map(|l| (l.mark, l.policy)).collect();
        assert_eq!(
            marks,
            vec![
                (MarkChoice::Mark(Mark::Slab), Some(GroupingPolicy::Collapsing)),
                (MarkChoice::Mark(Mark::Interval), Some(GroupingPolicy::Collapsing)),
            ]
        );
        assert_eq!(s.obs_layers.len(), 1);
        assert_eq!(s.obs_layers[0].mark, MarkChoice::Mark(Mark::Dots));
        assert_eq!(s.layout, LayoutKind::Nested);
    }

    #[test]
    fn qq_and_hops() {
        let (b, o) = demo();
        assert_eq!(preset("teaser_j", &b, &o).unwrap().layout, LayoutKind::Explicit(ExplicitEncoding::Qq));
        assert_eq!(preset("teaser_c", &b, &o).unwrap().model_layers[0].policy, Some(GroupingPolicy::Animating));
    }

    #[test]
    fn every_preset_round_trips() {
        let (b, o) = demo();
        for id in PRESET_IDS {
            let s = preset(id, &b, &o).unwrap();
            assert_eq!(parse_spec_value(&s.to_value()).unwrap(), s, "{id}");
        }
    }

    #[test]
    fn errors() {
        let (b, o) = demo();
        assert!(matches!(preset("nope", &b, &o), Err(PresetError::Unknown(_))));
        let text = "x,y\n0.1,1\n0.2,2\n0.3,3\n";
        let numeric_only = crate::tables::read_observed(text, "y").unwrap();
        let err = preset("teaser_h", &b, &numeric_only).unwrap_err();
        assert!(matches!(err, PresetError::MissingPredictor { kind: "categorical", .. }));
    }
}
