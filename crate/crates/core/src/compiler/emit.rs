//! Vega-Lite rendering of panel layouts and the canonical text form.

use serde_json::{json, Map, Value};

use crate::layers::{Datum, Encoding, PlanPart, Source};
use crate::layout::{FacetCell, Panel, PanelLayer, PanelLayout};

pub const DEFAULT_FPS: f64 = 2.5;
const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";
const WIDTH: u32 = 360;
const HEIGHT: u32 = 240;
const MODEL_COLOR: &str = "#4c78a8";
const DATA_COLOR: &str = "#222222";

/// A single Vega-Lite chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec(pub Value);

impl ChartSpec {
    pub fn value(&self) -> &Value {
        &self.0
    }
}

/// Animation frames sharing scales, one per retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frame_key: String,
    pub fps: f64,
    pub frames: Vec<(usize, ChartSpec)>,
}

impl FrameSet {
    pub fn to_value(&self) -> Value {
        json!({
            "frame_key": self.frame_key,
            "fps": self.fps,
            "frames": self.frames.iter().map(|(id, spec)| json!({"id": id, "spec": spec.0})).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompileOutput {
    Chart(ChartSpec),
    Frames(FrameSet),
}

impl CompileOutput {
    pub fn to_value(&self) -> Value {
        match self {
            CompileOutput::Chart(c) => c.0.clone(),
            CompileOutput::Frames(f) => f.to_value(),
        }
    }

    /// Every chart in output order.
    pub fn charts(&self) -> Vec<&ChartSpec> {
        match self {
            CompileOutput::Chart(c) => vec![c],
            CompileOutput::Frames(f) => f.frames.iter().map(|(_, c)| c).collect(),
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.charts()
            .first()
            .and_then(|c| c.0["usermeta"]["warnings"].as_array())
            .map(|w| w.iter().filter_map(|s| s.as_str().map(str::to_string)).collect())
            .unwrap_or_default()
    }
}

/// Canonical serialization: compact JSON with object keys sorted at every level.
pub fn emit(output: &CompileOutput) -> String {
    serde_json::to_string(&output.to_value()).expect("chart serializes")
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn quote_expr(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

struct Axes<'a> {
    layout: &'a PanelLayout,
}

impl Axes<'_> {
    fn x_def(&self) -> Value {
        let l = self.layout;
        let mut def = json!({
            "field": "x",
            "type": "quantitative",
            "scale": {"domain": [num(l.x_domain.0), num(l.x_domain.1)], "zero": false, "nice": false},
            "title": l.x_title,
        });
        if let Some(bands) = &l.x_bands {
            let values: Vec<Value> = (0..bands.len()).map(|i| json!(i as f64 + 0.5)).collect();
            let mut expr = String::new();
            for (i, b) in bands.iter().enumerate() {
                expr.push_str(&format!("datum.value == {} ? {} : ", i as f64 + 0.5, quote_expr(b)));
            }
            expr.push_str("''");
            def["axis"] = json!({"values": values, "labelExpr": expr, "grid": false});
        }
        def
    }

    fn y_def(&self) -> Value {
        let l = self.layout;
        json!({
            "field": "y",
            "type": "quantitative",
            "scale": {"domain": [num(l.y_domain.0), num(l.y_domain.1)], "zero": false, "nice": false},
            "title": l.y_title,
        })
    }
}

fn encoding(enc: &Encoding, axes: &Axes) -> Value {
    let mut m = Map::new();
    if enc.x.is_some() {
        m.insert("x".into(), axes.x_def());
    }
    if enc.y.is_some() {
        m.insert("y".into(), axes.y_def());
    }
    if enc.x2.is_some() {
        m.insert("x2".into(), json!({"field": "x2"}));
    }
    if enc.y2.is_some() {
        m.insert("y2".into(), json!({"field": "y2"}));
    }
    if let Some(c) = &enc.color {
        let name = c.trim_start_matches("cell_");
        let mut def = json!({"field": c, "type": "nominal", "title": name});
        if let Some(domain) = &axes.layout.color_levels {
            def["scale"] = json!({"domain": domain});
        }
        m.insert("color".into(), def);
    }
    if let Some(o) = &enc.opacity {
        m.insert("opacity".into(), json!({"field": o, "type": "quantitative", "scale": null, "legend": null}));
    }
    if let Some(s) = &enc.size {
        m.insert("size".into(), json!({"field": s, "type": "quantitative", "scale": null, "legend": null}));
    }
    if let Some(o) = &enc.order {
        m.insert("order".into(), json!({"field": o, "type": "quantitative"}));
    }
    if !enc.detail.is_empty() {
        let d: Vec<Value> = enc.detail.iter().map(|f| json!({"field": f, "type": "nominal"})).collect();
        m.insert("detail".into(), Value::Array(d));
    }
    Value::Object(m)
}

fn data_values(part: &PlanPart, x_offset: f64, frame: Option<(&str, usize)>) -> Vec<Value> {
    let t = &part.table;
    let frame_col = frame.and_then(|(k, j)| t.column(k).map(|c| (c, j as f64)));
    t.rows
        .iter()
        .filter(|r| match frame_col {
            Some((c, j)) => r[c] == Datum::Num(j),
            None => true,
        })
        .map(|r| {
            let mut obj = Map::new();
            for (name, d) in t.columns.iter().zip(r) {
                let v = match d {
                    Datum::Num(v) if x_offset != 0.0 && (name == "x" || name == "x2") => num(v + x_offset),
                    Datum::Num(v) => num(*v),
                    Datum::Text(s) => json!(s),
                };
                obj.insert(name.clone(), v);
            }
            Value::Object(obj)
        })
        .collect()
}

fn layer_specs(layer: &PanelLayer, axes: &Axes, frame: Option<usize>) -> Vec<Value> {
    let plan = &layer.plan;
    let frame = match (&plan.frame_key, frame) {
        (Some(k), Some(j)) => Some((k.as_str(), j)),
        _ => None,
    };
    plan.parts
        .iter()
        .map(|part| {
            let mut mark = json!({"type": part.mark.kind});
            if let Some(o) = part.mark.orient {
                mark["orient"] = json!(o);
            }
            if let Some(o) = plan.style.opacity {
                if part.encoding.opacity.is_none() {
                    mark["opacity"] = json!(o);
                }
            }
            let default_color = match plan.source {
                Source::Model => MODEL_COLOR,
                Source::Data => DATA_COLOR,
            };
            mark["color"] = json!(plan.style.color.as_deref().unwrap_or(default_color));
            match part.mark.kind {
                "point" => mark["filled"] = json!(true),
                "line" | "rule" if part.encoding.size.is_none() => mark["strokeWidth"] = json!(1),
                _ => {}
            }
            json!({
                "mark": mark,
                "data": {"values": data_values(part, layer.x_offset, frame)},
                "encoding": encoding(&part.encoding, axes),
            })
        })
        .collect()
}

fn panel_spec(panel: &Panel, axes: &Axes, frame: Option<usize>, title: Option<String>) -> Value {
    let layers: Vec<Value> = panel.layers.iter().flat_map(|l| layer_specs(l, axes, frame)).collect();
    let mut spec = json!({"layer": layers, "width": WIDTH, "height": HEIGHT});
    if let Some(t) = title.or_else(|| panel.title.clone()) {
        spec["title"] = json!(t);
    }
    spec
}

fn cell_title(layout: &PanelLayout, cell: &FacetCell) -> Option<String> {
    let mut parts = Vec::new();
    if let (Some(v), Some(l)) = (&layout.facet_rows, &cell.row_level) {
        parts.push(format!("{} = {l}", v.name));
    }
    if let (Some(v), Some(l)) = (&layout.facet_columns, &cell.column_level) {
        parts.push(format!("{} = {l}", v.name));
    }
    (!parts.is_empty()).then(|| parts.join(", "))
}

fn cell_spec(layout: &PanelLayout, cell: &FacetCell, axes: &Axes, frame: Option<usize>) -> Value {
    let title = cell_title(layout, cell);
    if cell.panels.len() == 1 {
        return panel_spec(&cell.panels[0], axes, frame, title);
    }
    let panels: Vec<Value> = cell.panels.iter().map(|p| panel_spec(p, axes, frame, None)).collect();
    let mut spec = json!({"hconcat": panels, "resolve": {"legend": {"color": "shared"}}});
    if let Some(t) = title {
        spec["title"] = json!(t);
    }
    spec
}

/// Renders one chart; `frame` restricts animated layers to one draw.
pub(crate) fn render(layout: &PanelLayout, title: &str, usermeta: Value, frame: Option<usize>) -> Value {
    let axes = Axes { layout };
    let mut body = if layout.cells.len() == 1 {
        cell_spec(layout, &layout.cells[0], &axes, frame)
    } else {
        let n_cols = layout.facet_columns.as_ref().map_or(1, |v| v.levels.len());
        let rows: Vec<Value> = layout
            .cells
            .chunks(n_cols)
            .map(|row| {
                let cells: Vec<Value> = row.iter().map(|c| cell_spec(layout, c, &axes, frame)).collect();
                json!({"hconcat": cells})
            })
            .collect();
        json!({"vconcat": rows, "resolve": {"legend": {"color": "shared"}}})
    };
    let obj = body.as_object_mut().expect("object spec");
    obj.insert("$schema".into(), json!(VEGA_LITE_SCHEMA));
    obj.insert("title".into(), json!(title));
    obj.insert("usermeta".into(), usermeta);
    body
}
