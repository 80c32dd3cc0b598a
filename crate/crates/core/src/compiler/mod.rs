//! `vmc-spec/1` documents and their compilation to Vega-Lite.

mod emit;
mod patch;
mod pipeline;
mod schema;

use std::fmt;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::layers::{GroupingPolicy, Mark};
use crate::layout::{Conditioning, LayoutKind};
use crate::sampling::DrawCount;
use crate::transform::TransformKind;

pub use emit::{emit, ChartSpec, CompileOutput, FrameSet, DEFAULT_FPS};
pub use patch::{apply_patches, Patch};
pub use pipeline::{compile, compile_with, CompileOptions, STAGES};
pub use schema::{validate_output, Violation};

pub const SPEC_VERSION: &str = "vmc-spec/1";

/// A problem in a check specification, located by JSON pointer.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct SpecError {
    pub path: String,
    pub message: String,
}

impl SpecError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        let path = path.into();
        SpecError { path: if path.is_empty() { "/".into() } else { path }, message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Sample,
    Transform,
    Translate,
    Construct,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Transform => "transform",
            Stage::Translate => "translate",
            Stage::Construct => "construct",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<crate::Error>,
    },
    #[error("output fails schema validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
}

impl CompileError {
    pub fn stage(stage: Stage, e: impl Into<crate::Error>) -> Self {
        CompileError::Stage { stage, source: Box::new(e.into()) }
    }

    pub fn is_spec_error(&self) -> bool {
        !matches!(self, CompileError::Stage { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorValues {
    Fitted,
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawSpec {
    pub quantity: String,
    pub predictor_values: PredictorValues,
    pub n_draws: DrawCount,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkChoice {
    Auto,
    Mark(Mark),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub mark: MarkChoice,
    /// Model layers only; `None` means the mark's default.
    pub policy: Option<GroupingPolicy>,
    pub opacity: Option<f64>,
    pub color: Option<String>,
}

impl LayerSpec {
    pub fn new(mark: Mark, policy: Option<GroupingPolicy>) -> Self {
        LayerSpec { mark: MarkChoice::Mark(mark), policy, opacity: None, color: None }
    }
}

/// A parsed check specification.
#[derive(Debug, Clone, PartialEq)]
pub struct VmcSpec {
    pub draw: DrawSpec,
    pub obs_transform: TransformKind,
    pub model_layers: Vec<LayerSpec>,
    pub obs_layers: Vec<LayerSpec>,
    pub layout: LayoutKind,
    pub condition: Conditioning,
    pub patches: Vec<Patch>,
}

impl VmcSpec {
    /// Canonical document with every default spelled out.
    pub fn to_value(&self) -> Value {
        let layer = |l: &LayerSpec, model: bool| {
            let mut m = Map::new();
            m.insert(
                "mark".into(),
                json!(match l.mark {
                    MarkChoice::Auto => "auto",
                    MarkChoice::Mark(mark) => mark.name(),
                }),
            );
            if model {
                if let Some(p) = l.policy {
                    m.insert("policy".into(), json!(p.to_string()));
                }
            }
            if let Some(o) = l.opacity {
                m.insert("opacity".into(), json!(o));
            }
            if let Some(c) = &l.color {
                m.insert("color".into(), json!(c));
            }
            Value::Object(m)
        };
        let mut condition = Map::new();
        for (k, v) in [
            ("x", &self.condition.x),
            ("color", &self.condition.color),
            ("row", &self.condition.row),
            ("column", &self.condition.column),
        ] {
            if let Some(v) = v {
                condition.insert(k.into(), json!(v));
            }
        }
        json!({
            "version": SPEC_VERSION,
            "draw": {
                "quantity": self.draw.quantity,
                "predictor_values": match &self.draw.predictor_values {
                    PredictorValues::Fitted => json!("fitted"),
                    PredictorValues::Csv(text) => json!({ "csv": text }),
                },
                "n_draws": match self.draw.n_draws {
                    DrawCount::All => json!("all"),
                    DrawCount::Count(n) => json!(n),
                },
                "seed": self.draw.seed,
            },
            "obs_transform": self.obs_transform.to_string(),
            "model_layers": self.model_layers.iter().map(|l| layer(l, true)).collect::<Vec<_>>(),
            "obs_layers": self.obs_layers.iter().map(|l| layer(l, false)).collect::<Vec<_>>(),
            "layout": self.layout.name(),
            "condition": condition,
            "patches": self.patches.iter().map(|p| json!({ "path": p.path, "value": p.value })).collect::<Vec<_>>(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("spec serializes")
    }
}

fn join(path: &str, key: &str) -> String {
    format!("{path}/{key}")
}

fn check_keys(obj: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<(), SpecError> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(SpecError::new(
                join(path, k),
                format!("unknown field; expected one of: {}", allowed.join(", ")),
            ));
        }
    }
    Ok(())
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, SpecError> {
    v.as_object().ok_or_else(|| SpecError::new(path, "expected an object"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, SpecError> {
    v.as_str().ok_or_else(|| SpecError::new(path, "expected a string"))
}

fn opt_str(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<String>, SpecError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => Ok(Some(as_str(v, &join(path, key))?.to_string())),
    }
}

fn parse_layer(v: &Value, path: &str, model: bool) -> Result<LayerSpec, SpecError> {
    let obj = as_object(v, path)?;
    let allowed: &[&str] = if model { &["mark", "policy", "opacity", "color"] } else { &["mark", "opacity", "color"] };
    if !model && obj.contains_key("policy") {
        return Err(SpecError::new(join(path, "policy"), "observed layers take no grouping policy"));
    }
    check_keys(obj, path, allowed)?;
    let mark = match obj.get("mark") {
        None => MarkChoice::Auto,
        Some(m) => match as_str(m, &join(path, "mark"))? {
            "auto" => MarkChoice::Auto,
            name => MarkChoice::Mark(Mark::parse(name).map_err(|e| SpecError::new(join(path, "mark"), e))?),
        },
    };
    let policy = match opt_str(obj, "policy", path)? {
        None => None,
        Some(p) => Some(GroupingPolicy::parse(&p).map_err(|e| SpecError::new(join(path, "policy"), e))?),
    };
    let opacity = match obj.get("opacity") {
        None | Some(Value::Null) => None,
        Some(o) => {
            let o = o.as_f64().ok_or_else(|| SpecError::new(join(path, "opacity"), "expected a number"))?;
            if !(0.0..=1.0).contains(&o) {
                return Err(SpecError::new(join(path, "opacity"), format!("opacity {o} outside [0, 1]")));
            }
            Some(o)
        }
    };
    Ok(LayerSpec { mark, policy, opacity, color: opt_str(obj, "color", path)? })
}

fn parse_layers(v: Option<&Value>, path: &str, model: bool) -> Result<Vec<LayerSpec>, SpecError> {
    match v {
        None => Ok(Vec::new()),
        Some(v) => v
            .as_array()
            .ok_or_else(|| SpecError::new(path, "expected an array of layers"))?
            .iter()
            .enumerate()
            .map(|(i, l)| parse_layer(l, &format!("{path}/{i}"), model))
            .collect(),
    }
}

fn parse_draw(v: Option<&Value>) -> Result<DrawSpec, SpecError> {
    let path = "/draw";
    let empty = Map::new();
    let obj = match v {
        None => &empty,
        Some(v) => as_object(v, path)?,
    };
    check_keys(obj, path, &["quantity", "predictor_values", "n_draws", "seed"])?;
    let quantity = opt_str(obj, "quantity", path)?.unwrap_or_else(|| "y".into());
    let predictor_values = match obj.get("predictor_values") {
        None => PredictorValues::Fitted,
        Some(Value::String(s)) if s == "fitted" => PredictorValues::Fitted,
        Some(Value::Object(o)) => {
            let p = join(path, "predictor_values");
            check_keys(o, &p, &["csv"])?;
            let csv = o.get("csv").ok_or_else(|| SpecError::new(&p, "missing field `csv`"))?;
            PredictorValues::Csv(as_str(csv, &join(&p, "csv"))?.to_string())
        }
        Some(_) => {
            return Err(SpecError::new(join(path, "predictor_values"), "expected \"fitted\" or {\"csv\": <text>}"))
        }
    };
    let n_draws = match obj.get("n_draws") {
        None => DrawCount::All,
        Some(Value::String(s)) if s == "all" => DrawCount::All,
        Some(v) => match v.as_u64() {
            Some(n) if n >= 1 => DrawCount::Count(n as usize),
            _ => return Err(SpecError::new(join(path, "n_draws"), "expected \"all\" or a positive integer")),
        },
    };
    let seed = match obj.get("seed") {
        None => 0,
        Some(v) => v.as_u64().ok_or_else(|| SpecError::new(join(path, "seed"), "expected a non-negative integer"))?,
    };
    Ok(DrawSpec { quantity, predictor_values, n_draws, seed })
}

fn parse_condition(v: Option<&Value>) -> Result<Conditioning, SpecError> {
    let path = "/condition";
    let Some(v) = v else { return Ok(Conditioning::default()) };
    let obj = as_object(v, path)?;
    check_keys(obj, path, &["x", "color", "row", "column"])?;
    Ok(Conditioning {
        x: opt_str(obj, "x", path)?,
        color: opt_str(obj, "color", path)?,
        row: opt_str(obj, "row", path)?,
        column: opt_str(obj, "column", path)?,
    })
}

/// Parses a `vmc-spec/1` JSON document, applying defaults. Name and type
/// errors are reported here; constraints involving the model or data are
/// checked by [`compile`].
pub fn parse_spec(text: &str) -> Result<VmcSpec, SpecError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| SpecError::new("/", format!("invalid JSON: {e}")))?;
    parse_spec_value(&doc)
}

pub fn parse_spec_value(doc: &Value) -> Result<VmcSpec, SpecError> {
    let obj = as_object(doc, "/")?;
    check_keys(
        obj,
        "",
        &["version", "draw", "obs_transform", "model_layers", "obs_layers", "layout", "condition", "patches"],
    )?;
    if let Some(v) = obj.get("version") {
        if as_str(v, "/version")? != SPEC_VERSION {
            return Err(SpecError::new("/version", format!("unsupported version; expected {SPEC_VERSION}")));
        }
    }
    let obs_transform = match opt_str(obj, "obs_transform", "")? {
        None => TransformKind::Identity,
        Some(t) => TransformKind::parse(&t).map_err(|e| SpecError::new("/obs_transform", e))?,
    };
    let layout = match opt_str(obj, "layout", "")? {
        None => LayoutKind::Superposition,
        Some(l) => LayoutKind::parse(&l).map_err(|e| SpecError::new("/layout", e))?,
    };
    let model_layers = parse_layers(obj.get("model_layers"), "/model_layers", true)?;
    let obs_layers = parse_layers(obj.get("obs_layers"), "/obs_layers", false)?;
    if model_layers.is_empty() {
        return Err(SpecError::new("/model_layers", "at least one model layer is required"));
    }
    if obs_layers.is_empty() && !matches!(layout, LayoutKind::Explicit(_)) {
        return Err(SpecError::new(
            "/obs_layers",
            "at least one observed layer is required unless the layout is explicit",
        ));
    }
    let patches = match obj.get("patches") {
        None => Vec::new(),
        Some(v) => v
            .as_array()
            .ok_or_else(|| SpecError::new("/patches", "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let path = format!("/patches/{i}");
                let o = as_object(p, &path)?;
                check_keys(o, &path, &["path", "value"])?;
                let target = o.get("path").ok_or_else(|| SpecError::new(&path, "missing field `path`"))?;
                let target = as_str(target, &join(&path, "path"))?;
                if !target.is_empty() && !target.starts_with('/') {
                    return Err(SpecError::new(join(&path, "path"), "expected a JSON pointer"));
                }
                let value = o.get("value").ok_or_else(|| SpecError::new(&path, "missing field `value`"))?;
                Ok(Patch { path: target.to_string(), value: value.clone() })
            })
            .collect::<Result<_, SpecError>>()?,
    };
    Ok(VmcSpec {
        draw: parse_draw(obj.get("draw"))?,
        obs_transform,
        model_layers,
        obs_layers,
        layout,
        condition: parse_condition(obj.get("condition"))?,
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"draw":{"quantity":"y"},
        "model_layers":[{"mark":"densityline","policy":"individual"}],
        "obs_layers":[{"mark":"densityline"}]}"#;

    #[test]
    fn minimal_spec_gets_defaults() {
        let s = parse_spec(MINIMAL).unwrap();
        assert_eq!(s.layout, LayoutKind::Superposition);
        assert_eq!(s.draw.predictor_values, PredictorValues::Fitted);
        assert_eq!(s.draw.n_draws, DrawCount::All);
        assert_eq!(s.obs_transform, TransformKind::Identity);
        assert_eq!(s.model_layers[0].policy, Some(GroupingPolicy::Individualizing));
    }

    #[test]
    fn round_trips_through_canonical_form() {
        let s = parse_spec(MINIMAL).unwrap();
        assert_eq!(parse_spec(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn bad_mark_names_valid_marks() {
        let text = MINIMAL.replace(r#""mark":"densityline","policy""#, r#""mark":"densitee","policy""#);
        let e = parse_spec(&text).unwrap_err();
        assert_eq!(e.path, "/model_layers/0/mark");
        for m in Mark::NAMES {
            assert!(e.message.contains(m));
        }
    }

    #[test]
    fn nest_without_x_parses() {
        let text = MINIMAL.replace(r#""draw""#, r#""layout":"nest","draw""#);
        assert_eq!(parse_spec(&text).unwrap().layout, LayoutKind::Nested);
    }

    #[test]
    fn diagnostics_carry_paths() {
        let cases = [
            (r#"{"model_layers":[{"mark":"point","policy":"twice"}],"obs_layers":[{}]}"#, "/model_layers/0/policy"),
            (r#"{"model_layers":[{}],"obs_layers":[{"policy":"collapse"}]}"#, "/obs_layers/0/policy"),
            (r#"{"model_layers":[{}],"obs_layers":[{}],"layout":"grid"}"#, "/layout"),
            (r#"{"model_layers":[{}],"obs_layers":[{}],"draw":{"n_draws":0}}"#, "/draw/n_draws"),
            (r#"{"model_layers":[{}],"obs_layers":[{}],"extra":1}"#, "/extra"),
            (r#"{"model_layers":[{}]}"#, "/obs_layers"),
            (r#"{"model_layers":[{}],"obs_layers":[{}],"obs_transform":"q2"}"#, "/obs_transform"),
            ("[1", "/"),
        ];
        for (text, path) in cases {
            assert_eq!(parse_spec(text).unwrap_err().path, path, "{text}");
        }
    }
}
