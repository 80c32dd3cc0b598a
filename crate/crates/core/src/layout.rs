//! Comparative layouts: placing model and observed layers in shared
//! coordinates, the explicit residual encodings, and faceting.

use thiserror::Error;

use crate::layers::{
    cell_column, Datum, Encoding, GeometryTable, LayerPlan, LayerStyle, Mark, PlanPart, Source, ValueAxis, VegaMark,
};
use crate::stats::{self, StatsError};
use crate::tables::{CellVar, ColumnKind, DrawsTable, ObservedTable, PredictorColumn};

/// Dodge of model (left) and observed (right) layers within a band.
pub const NEST_OFFSET: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("unknown layout `{0}`; valid layouts: superpose, juxtapose, nest, explicit:residual, explicit:standardized_residual, explicit:qq, explicit:worm")]
    UnknownLayout(String),
    #[error("unknown predictor `{name}` in condition.{slot}")]
    UnknownPredictor { slot: &'static str, name: String },
    #[error("predictor `{0}` is used by more than one conditioning slot")]
    DuplicateSlot(String),
    #[error("condition.{slot} needs a categorical predictor, `{name}` is continuous")]
    ContinuousCell { slot: &'static str, name: String },
    #[error("nested juxtaposition needs a discrete x conditional")]
    NestedNeedsDiscreteX,
    #[error("no {0} layers to compose")]
    NoLayers(&'static str),
    #[error("observed data has {obs} rows but draws have {draws}")]
    RowMismatch { obs: usize, draws: usize },
    #[error("draws have zero spread at row {0}; cannot standardize")]
    ZeroSpread(usize),
    #[error("standardization needs ≥2 draws")]
    TooFewDraws,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplicitEncoding {
    Residual,
    StandardizedResidual,
    Qq,
    Worm,
}

impl ExplicitEncoding {
    pub fn name(self) -> &'static str {
        match self {
            ExplicitEncoding::Residual => "residual",
            ExplicitEncoding::StandardizedResidual => "standardized_residual",
            ExplicitEncoding::Qq => "qq",
            ExplicitEncoding::Worm => "worm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayoutKind {
    #[default]
    Superposition,
    Juxtaposition,
    Nested,
    Explicit(ExplicitEncoding),
}

impl LayoutKind {
    pub fn parse(text: &str) -> Result<Self, LayoutError> {
        Ok(match text {
            "superpose" => LayoutKind::Superposition,
            "juxtapose" => LayoutKind::Juxtaposition,
            "nest" => LayoutKind::Nested,
            "explicit:residual" => LayoutKind::Explicit(ExplicitEncoding::Residual),
            "explicit:standardized_residual" => LayoutKind::Explicit(ExplicitEncoding::StandardizedResidual),
            "explicit:qq" => LayoutKind::Explicit(ExplicitEncoding::Qq),
            "explicit:worm" => LayoutKind::Explicit(ExplicitEncoding::Worm),
            _ => return Err(LayoutError::UnknownLayout(text.to_string())),
        })
    }

    pub fn name(self) -> String {
        match self {
            LayoutKind::Superposition => "superpose".into(),
            LayoutKind::Juxtaposition => "juxtapose".into(),
            LayoutKind::Nested => "nest".into(),
            LayoutKind::Explicit(e) => format!("explicit:{}", e.name()),
        }
    }
}

/// Predictors bound to position, color and facet slots.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Conditioning {
    pub x: Option<String>,
    pub color: Option<String>,
    pub row: Option<String>,
    pub column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum XAxis {
    #[default]
    None,
    Discrete(CellVar),
    Continuous(String),
}

impl XAxis {
    pub fn continuous_name(&self) -> Option<&str> {
        match self {
            XAxis::Continuous(n) => Some(n),
            _ => None,
        }
    }

    pub fn discrete_name(&self) -> Option<&str> {
        match self {
            XAxis::Discrete(v) => Some(&v.name),
            _ => None,
        }
    }

    /// Band centre of a cell key whose first entry is the x level.
    pub fn discrete_position(&self) -> impl Fn(&[String]) -> f64 + '_ {
        move |key: &[String]| match self {
            XAxis::Discrete(v) => band_centre(&v.levels, &key[0]),
            _ => 0.0,
        }
    }
}

fn band_centre(levels: &[String], level: &str) -> f64 {
    levels.iter().position(|l| l == level).map_or(0.0, |i| i as f64 + 0.5)
}

/// Conditioning resolved against a predictor schema.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellContext {
    pub x: XAxis,
    pub color: Option<CellVar>,
    pub row: Option<CellVar>,
    pub column: Option<CellVar>,
}

impl CellContext {
    pub fn resolve(cond: &Conditioning, schema: &[PredictorColumn]) -> Result<Self, LayoutError> {
        let slots = [("x", &cond.x), ("color", &cond.color), ("row", &cond.row), ("column", &cond.column)];
        let mut seen: Vec<&str> = Vec::new();
        for (_, name) in &slots {
            if let Some(n) = name {
                if seen.contains(&n.as_str()) {
                    return Err(LayoutError::DuplicateSlot(n.clone()));
                }
                seen.push(n);
            }
        }
        let find = |slot: &'static str, name: &str| {
            schema
                .iter()
                .find(|c| c.name == name)
                .ok_or_else(|| LayoutError::UnknownPredictor { slot, name: name.to_string() })
        };
        let categorical = |slot: &'static str, name: &Option<String>| -> Result<Option<CellVar>, LayoutError> {
            let Some(name) = name else { return Ok(None) };
            match &find(slot, name)?.kind {
                ColumnKind::Categorical { levels } => Ok(Some(CellVar { name: name.clone(), levels: levels.clone() })),
                ColumnKind::Numeric => Err(LayoutError::ContinuousCell { slot, name: name.clone() }),
            }
        };
        let x = match &cond.x {
            None => XAxis::None,
            Some(name) => match &find("x", name)?.kind {
                ColumnKind::Categorical { levels } => {
                    XAxis::Discrete(CellVar { name: name.clone(), levels: levels.clone() })
                }
                ColumnKind::Numeric => XAxis::Continuous(name.clone()),
            },
        };
        Ok(CellContext {
            x,
            color: categorical("color", &cond.color)?,
            row: categorical("row", &cond.row)?,
            column: categorical("column", &cond.column)?,
        })
    }

    /// Cell variables in partition order: discrete x, color, row, column.
    pub fn vars(&self) -> Vec<CellVar> {
        let mut out = Vec::new();
        if let XAxis::Discrete(v) = &self.x {
            out.push(v.clone());
        }
        out.extend(self.color.iter().cloned());
        out.extend(self.row.iter().cloned());
        out.extend(self.column.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelLayer {
    pub plan: LayerPlan,
    /// Horizontal dodge applied when drawing; geometry is left untouched.
    pub x_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: Option<String>,
    pub layers: Vec<PanelLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetCell {
    pub row_level: Option<String>,
    pub column_level: Option<String>,
    pub panels: Vec<Panel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelLayout {
    pub kind: LayoutKind,
    /// Row-major facet cells; a single unkeyed cell when not faceted.
    pub cells: Vec<FacetCell>,
    pub facet_rows: Option<CellVar>,
    pub facet_columns: Option<CellVar>,
    pub x_domain: (f64, f64),
    pub y_domain: (f64, f64),
    pub x_title: String,
    pub y_title: String,
    /// Level names of a discrete x, one band each.
    pub x_bands: Option<Vec<String>>,
    /// Shared color legend levels.
    pub color_levels: Option<Vec<String>>,
    pub frame_key: Option<String>,
    pub frames: Vec<usize>,
}

impl PanelLayout {
    pub fn layers(&self) -> impl Iterator<Item = &PanelLayer> {
        self.cells.iter().flat_map(|c| c.panels.iter()).flat_map(|p| p.layers.iter())
    }
}

fn extent(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values.into_iter().filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn widen(d: Option<(f64, f64)>) -> (f64, f64) {
    match d {
        Some((lo, hi)) if hi > lo => (lo, hi),
        Some((lo, _)) => (lo - 0.5, lo + 0.5),
        None => (0.0, 1.0),
    }
}

/// Shared axis domains over every layer of every panel.
fn domains(panels: &[Panel], ctx: &CellContext) -> ((f64, f64), (f64, f64)) {
    let layers = || panels.iter().flat_map(|p| p.layers.iter());
    let x = match &ctx.x {
        XAxis::Discrete(v) => (0.0, v.levels.len() as f64),
        _ => widen(extent(layers().flat_map(|l| {
            l.plan.parts.iter().flat_map(move |p| {
                p.table.numbers("x").into_iter().chain(p.table.numbers("x2")).map(move |v| v + l.x_offset)
            })
        }))),
    };
    let y = widen(extent(layers().flat_map(|l| {
        l.plan.parts.iter().flat_map(|p| p.table.numbers("y").into_iter().chain(p.table.numbers("y2")))
    })));
    (x, y)
}

fn explicit_titles(e: ExplicitEncoding, ctx: &CellContext) -> (String, String) {
    let x = match &ctx.x {
        XAxis::None => "fitted median".to_string(),
        XAxis::Discrete(v) => v.name.clone(),
        XAxis::Continuous(n) => n.clone(),
    };
    match e {
        ExplicitEncoding::Residual => (x, "residual".into()),
        ExplicitEncoding::StandardizedResidual => (x, "standardized residual".into()),
        ExplicitEncoding::Qq => ("theoretical quantile".into(), "sample quantile".into()),
        ExplicitEncoding::Worm => ("theoretical quantile".into(), "deviation".into()),
    }
}

/// Places layer plans in panels. Under an explicit layout `model` holds the
/// plans produced by [`explicit_encode`] and `obs` is ignored.
pub fn compose(
    model: &[LayerPlan],
    obs: &[LayerPlan],
    layout: LayoutKind,
    ctx: &CellContext,
    quantity: &str,
) -> Result<PanelLayout, LayoutError> {
    if model.is_empty() {
        return Err(LayoutError::NoLayers("model"));
    }
    if obs.is_empty() && !matches!(layout, LayoutKind::Explicit(_)) {
        return Err(LayoutError::NoLayers("observed"));
    }
    let at = |plans: &[LayerPlan], offset: f64| -> Vec<PanelLayer> {
        plans.iter().map(|p| PanelLayer { plan: p.clone(), x_offset: offset }).collect()
    };
    let panels = match layout {
        LayoutKind::Superposition => {
            let mut layers = at(model, 0.0);
            layers.extend(at(obs, 0.0));
            vec![Panel { title: None, layers }]
        }
        LayoutKind::Juxtaposition => vec![
            Panel { title: Some("model".into()), layers: at(model, 0.0) },
            Panel { title: Some("observed".into()), layers: at(obs, 0.0) },
        ],
        LayoutKind::Nested => {
            if !matches!(ctx.x, XAxis::Discrete(_)) {
                return Err(LayoutError::NestedNeedsDiscreteX);
            }
            let mut layers = at(model, -NEST_OFFSET);
            layers.extend(at(obs, NEST_OFFSET));
            vec![Panel { title: None, layers }]
        }
        LayoutKind::Explicit(_) => vec![Panel { title: None, layers: at(model, 0.0) }],
    };
    let (x_domain, y_domain) = domains(&panels, ctx);
    let value_axis = model[0].value_axis;
    let (x_title, y_title) = match layout {
        LayoutKind::Explicit(e) => explicit_titles(e, ctx),
        _ => match (value_axis, &ctx.x) {
            (ValueAxis::X, _) => (quantity.to_string(), "density".to_string()),
            (ValueAxis::Y, XAxis::Discrete(v)) => (v.name.clone(), quantity.to_string()),
            (ValueAxis::Y, XAxis::Continuous(n)) => (n.clone(), quantity.to_string()),
            (ValueAxis::Y, XAxis::None) => (String::new(), quantity.to_string()),
        },
    };
    let frame_plans: Vec<&LayerPlan> = model.iter().filter(|p| p.frame_key.is_some()).collect();
    let frame_key = frame_plans.first().and_then(|p| p.frame_key.clone());
    let mut frames: Vec<usize> = frame_plans.iter().flat_map(|p| p.draws()).collect();
    frames.sort_unstable();
    frames.dedup();
    Ok(PanelLayout {
        kind: layout,
        cells: vec![FacetCell { row_level: None, column_level: None, panels }],
        facet_rows: None,
        facet_columns: None,
        x_domain,
        y_domain,
        x_title,
        y_title,
        x_bands: match &ctx.x {
            XAxis::Discrete(v) => Some(v.levels.clone()),
            _ => None,
        },
        color_levels: ctx.color.as_ref().map(|v| v.levels.clone()),
        frame_key,
        frames,
    })
}

/// Splits every panel into row x column facet cells, row-major. Empty cells
/// are kept; domains stay those of the unfaceted layout.
pub fn facet(layout: &PanelLayout, ctx: &CellContext) -> PanelLayout {
    if ctx.row.is_none() && ctx.column.is_none() {
        return layout.clone();
    }
    let levels = |v: &Option<CellVar>| -> Vec<Option<String>> {
        match v {
            Some(v) => v.levels.iter().cloned().map(Some).collect(),
            None => vec![None],
        }
    };
    let source = &layout.cells[0].panels;
    let mut cells = Vec::new();
    for r in levels(&ctx.row) {
        for c in levels(&ctx.column) {
            let keep = |table: &GeometryTable| {
                let rc = ctx.row.as_ref().and_then(|v| table.column(&cell_column(&v.name)));
                let cc = ctx.column.as_ref().and_then(|v| table.column(&cell_column(&v.name)));
                let (r, c) = (r.clone(), c.clone());
                table.filter(move |row| {
                    let matches = |idx: Option<usize>, level: &Option<String>| match (idx, level) {
                        (Some(i), Some(l)) => row[i] == Datum::Text(l.clone()),
                        _ => true,
                    };
                    matches(rc, &r) && matches(cc, &c)
                })
            };
            let panels = source
                .iter()
                .map(|p| Panel {
                    title: p.title.clone(),
                    layers: p
                        .layers
                        .iter()
                        .map(|l| {
                            let mut plan = l.plan.clone();
                            for part in &mut plan.parts {
                                part.table = keep(&part.table);
                            }
                            PanelLayer { plan, x_offset: l.x_offset }
                        })
                        .collect(),
                })
                .collect();
            cells.push(FacetCell { row_level: r.clone(), column_level: c, panels });
        }
    }
    PanelLayout { cells, facet_rows: ctx.row.clone(), facet_columns: ctx.column.clone(), ..layout.clone() }
}

fn check_rows(draws: &DrawsTable, obs: &ObservedTable) -> Result<(), LayoutError> {
    if draws.n_rows() != obs.len() {
        return Err(LayoutError::RowMismatch { obs: obs.len(), draws: draws.n_rows() });
    }
    Ok(())
}

fn row_values(draws: &DrawsTable, row: usize) -> Vec<f64> {
    (1..=draws.n_draws()).map(|d| draws.value(d, row)).collect()
}

/// `y_i - median_j(draw_j(i))` per observation.
pub fn residuals(draws: &DrawsTable, obs: &ObservedTable) -> Result<Vec<f64>, LayoutError> {
    check_rows(draws, obs)?;
    obs.rows().iter().enumerate().map(|(i, r)| Ok(r.response - stats::median(&row_values(draws, i + 1))?)).collect()
}

/// Residuals divided by the per-row sample sd of the draws.
pub fn standardized_residuals(draws: &DrawsTable, obs: &ObservedTable) -> Result<Vec<f64>, LayoutError> {
    if draws.n_draws() < 2 {
        return Err(LayoutError::TooFewDraws);
    }
    let res = residuals(draws, obs)?;
    res.iter()
        .enumerate()
        .map(|(i, r)| {
            let sd = stats::sample_sd(&row_values(draws, i + 1))?;
            if sd == 0.0 {
                return Err(LayoutError::ZeroSpread(i + 1));
            }
            Ok(r / sd)
        })
        .collect()
}

fn explicit_plan(mark: Mark, parts: Vec<PlanPart>, cell_columns: Vec<String>, opacity: Option<f64>) -> LayerPlan {
    LayerPlan {
        source: Source::Data,
        mark,
        policy: None,
        parts,
        group_key: None,
        frame_key: None,
        cell_columns,
        value_axis: ValueAxis::Y,
        style: LayerStyle { opacity, color: None },
    }
}

fn xy_part(kind: &'static str, pts: &[(f64, f64)], ordered: bool) -> PlanPart {
    let mut columns = vec!["x".to_string(), "y".to_string()];
    if ordered {
        columns.push("order".into());
    }
    let rows = pts
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let mut r = vec![Datum::Num(x), Datum::Num(y)];
            if ordered {
                r.push(Datum::Num(k as f64));
            }
            r
        })
        .collect();
    PlanPart {
        mark: VegaMark { kind, orient: None },
        table: GeometryTable { columns, rows },
        encoding: Encoding {
            x: Some("x".into()),
            y: Some("y".into()),
            order: ordered.then(|| "order".to_string()),
            ..Default::default()
        },
    }
}

fn zero_rule() -> PlanPart {
    PlanPart {
        mark: VegaMark { kind: "rule", orient: None },
        table: GeometryTable { columns: vec!["y".into()], rows: vec![vec![Datum::Num(0.0)]] },
        encoding: Encoding { y: Some("y".into()), ..Default::default() },
    }
}

/// Geometry of an explicit encoding of model/data differences. `draws` must
/// be response draws on the observation rows.
pub fn explicit_encode(
    draws: &DrawsTable,
    obs: &ObservedTable,
    encoding: ExplicitEncoding,
    ctx: &CellContext,
) -> Result<Vec<LayerPlan>, LayoutError> {
    check_rows(draws, obs)?;
    match encoding {
        ExplicitEncoding::Residual | ExplicitEncoding::StandardizedResidual => {
            let res = if encoding == ExplicitEncoding::Residual {
                residuals(draws, obs)?
            } else {
                standardized_residuals(draws, obs)?
            };
            let vars: Vec<CellVar> = ctx.color.iter().chain(&ctx.row).chain(&ctx.column).cloned().collect();
            let cell_columns: Vec<String> = vars.iter().map(|v| cell_column(&v.name)).collect();
            let mut columns = vec!["x".to_string(), "y".to_string()];
            columns.extend(cell_columns.iter().cloned());
            let mut rows = Vec::with_capacity(obs.len());
            for (i, (row, r)) in obs.rows().iter().zip(&res).enumerate() {
                let x = match &ctx.x {
                    XAxis::None => stats::median(&row_values(draws, i + 1))?,
                    XAxis::Continuous(n) => obs.predictor(i, n).and_then(|p| p.as_f64()).unwrap_or(f64::NAN),
                    XAxis::Discrete(v) => {
                        band_centre(&v.levels, obs.predictor(i, &v.name).and_then(|p| p.as_level()).unwrap_or(""))
                    }
                };
                let mut out = vec![Datum::Num(x), Datum::Num(*r)];
                for v in &vars {
                    let level = obs.column_index(&v.name).map(|c| row.predictors[c].to_string()).unwrap_or_default();
                    out.push(Datum::Text(level));
                }
                rows.push(out);
            }
            let table = GeometryTable { columns, rows };
            let points = PlanPart {
                mark: VegaMark { kind: "point", orient: None },
                table,
                encoding: Encoding {
                    x: Some("x".into()),
                    y: Some("y".into()),
                    color: ctx.color.as_ref().map(|v| cell_column(&v.name)),
                    ..Default::default()
                },
            };
            Ok(vec![
                explicit_plan(Mark::Line, vec![zero_rule()], Vec::new(), None),
                explicit_plan(Mark::Point, vec![points], cell_columns, Some(0.7)),
            ])
        }
        ExplicitEncoding::Qq | ExplicitEncoding::Worm => {
            let pairs = stats::qq_pairs(&standardized_residuals(draws, obs)?)?;
            if encoding == ExplicitEncoding::Qq {
                let lo = pairs.first().map_or(0.0, |p| p.0);
                let hi = pairs.last().map_or(0.0, |p| p.0);
                return Ok(vec![
                    explicit_plan(Mark::Line, vec![xy_part("line", &[(lo, lo), (hi, hi)], true)], Vec::new(), None),
                    explicit_plan(Mark::Point, vec![xy_part("point", &pairs, false)], Vec::new(), Some(0.7)),
                ]);
            }
            let worm = stats::worm(&pairs);
            let upper: Vec<(f64, f64)> = worm.iter().map(|w| (w.theoretical, w.band)).collect();
            let lower: Vec<(f64, f64)> = worm.iter().map(|w| (w.theoretical, -w.band)).collect();
            let points: Vec<(f64, f64)> = worm.iter().map(|w| (w.theoretical, w.deviation)).collect();
            Ok(vec![
                explicit_plan(
                    Mark::Line,
                    vec![zero_rule(), xy_part("line", &upper, true), xy_part("line", &lower, true)],
                    Vec::new(),
                    None,
                ),
                explicit_plan(Mark::Point, vec![xy_part("point", &points, false)], Vec::new(), Some(0.7)),
            ])
        }
    }
}
