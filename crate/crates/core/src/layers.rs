//! Visual representation: marks, grouping policies and the geometry they
//! produce from draws or observations.
//!
//! Geometry is computed in plot coordinates. With no x conditional the
//! quantity lies on the x axis; with a discrete x it lies on the y axis and
//! each level owns a band of width 1 centred at `index + 0.5`; with a
//! continuous x it lies on the y axis against the predictor.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::layout::{CellContext, XAxis};
use crate::stats::{self, Bandwidth, DensityCurve, IntervalSet, StatsError, DEFAULT_DOTS, DEFAULT_WIDTHS};
use crate::tables::{CellPartition, DrawsTable, ObservedTable, PredictorValue, TableError};

/// Largest extent of a distribution mark inside its band.
pub const BAND_EXTENT: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("unknown mark `{0}`; valid marks: {marks}", marks = Mark::NAMES.join(", "))]
    UnknownMark(String),
    #[error("unknown policy `{0}`; valid policies: collapse, individual, hops, aggregate:mean, aggregate:median, aggregate:sd")]
    UnknownPolicy(String),
    #[error("mark `{mark}` cannot be used with policy `{policy}`")]
    Incompatible { mark: Mark, policy: GroupingPolicy },
    #[error("mark `{mark}` {requirement}")]
    NeedsX { mark: Mark, requirement: &'static str },
    #[error("policy `{0}` needs a discrete or absent x conditional")]
    AggregateContinuousX(GroupingPolicy),
    #[error("mark requires ≥2 values per cell, got {got} for `{mark}`; compatible marks: {compatible}")]
    TooFewValues { mark: Mark, got: usize, compatible: String },
    #[error("empty cell {0:?}")]
    EmptyCell(Vec<String>),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    Densityline,
    Slab,
    Violin,
    Histogram,
    Interval,
    Pointinterval,
    Lineribbon,
    Gradient,
    Dots,
    Line,
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkCategory {
    Extent,
    VisualVariable,
    Countable,
}

impl Mark {
    pub const ALL: [Mark; 11] = [
        Mark::Densityline,
        Mark::Slab,
        Mark::Violin,
        Mark::Histogram,
        Mark::Interval,
        Mark::Pointinterval,
        Mark::Lineribbon,
        Mark::Gradient,
        Mark::Dots,
        Mark::Line,
        Mark::Point,
    ];
    pub const NAMES: [&'static str; 11] = [
        "densityline",
        "slab",
        "violin",
        "histogram",
        "interval",
        "pointinterval",
        "lineribbon",
        "gradient",
        "dots",
        "line",
        "point",
    ];

    pub fn name(self) -> &'static str {
        Mark::NAMES[Mark::ALL.iter().position(|m| *m == self).expect("listed")]
    }

    pub fn parse(text: &str) -> Result<Mark, LayerError> {
        Mark::NAMES
            .iter()
            .position(|n| *n == text)
            .map(|i| Mark::ALL[i])
            .ok_or_else(|| LayerError::UnknownMark(text.to_string()))
    }

    pub fn category(self) -> MarkCategory {
        match self {
            Mark::Gradient => MarkCategory::VisualVariable,
            Mark::Dots | Mark::Line | Mark::Point => MarkCategory::Countable,
            _ => MarkCategory::Extent,
        }
    }

    fn is_density(self) -> bool {
        matches!(self, Mark::Densityline | Mark::Slab | Mark::Violin)
    }

    fn is_interval(self) -> bool {
        matches!(self, Mark::Interval | Mark::Pointinterval | Mark::Lineribbon | Mark::Gradient)
    }

    /// Marks that lay out a distribution along the value axis and so cannot
    /// share that axis with a continuous predictor.
    fn is_distribution(self) -> bool {
        self.is_density() || matches!(self, Mark::Histogram | Mark::Dots)
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-draw statistic of an aggregating policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    Median,
    Sd,
}

impl Aggregator {
    pub fn apply(self, values: &[f64]) -> Result<f64, StatsError> {
        match self {
            Aggregator::Mean => stats::mean(values),
            Aggregator::Median => stats::median(values),
            Aggregator::Sd => stats::sample_sd(values),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
            Aggregator::Sd => "sd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingPolicy {
    Collapsing,
    Individualizing,
    Animating,
    Aggregating(Aggregator),
}

impl GroupingPolicy {
    pub fn parse(text: &str) -> Result<Self, LayerError> {
        Ok(match text {
            "collapse" => GroupingPolicy::Collapsing,
            "individual" => GroupingPolicy::Individualizing,
            "hops" => GroupingPolicy::Animating,
            "aggregate:mean" => GroupingPolicy::Aggregating(Aggregator::Mean),
            "aggregate:median" => GroupingPolicy::Aggregating(Aggregator::Median),
            "aggregate:sd" => GroupingPolicy::Aggregating(Aggregator::Sd),
            _ => return Err(LayerError::UnknownPolicy(text.to_string())),
        })
    }

    /// Whether the policy draws one mark per retained draw.
    pub fn per_draw(self) -> bool {
        matches!(self, GroupingPolicy::Individualizing | GroupingPolicy::Animating)
    }
}

impl fmt::Display for GroupingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupingPolicy::Collapsing => f.write_str("collapse"),
            GroupingPolicy::Individualizing => f.write_str("individual"),
            GroupingPolicy::Animating => f.write_str("hops"),
            GroupingPolicy::Aggregating(a) => write!(f, "aggregate:{}", a.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Model,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    None,
    Discrete,
    Continuous,
}

/// Default mark and policy by response kind and x conditional kind.
/// Observed layers get no policy.
pub fn auto_mark(source: Source, response: VarKind, conditional: VarKind) -> (Mark, Option<GroupingPolicy>) {
    use VarKind::*;
    match source {
        Source::Model => {
            let (mark, policy) = match (response, conditional) {
                (Discrete, _) => (Mark::Dots, GroupingPolicy::Collapsing),
                (_, None) => (Mark::Densityline, GroupingPolicy::Individualizing),
                (_, Discrete) => (Mark::Pointinterval, GroupingPolicy::Collapsing),
                (_, Continuous) => (Mark::Lineribbon, GroupingPolicy::Collapsing),
            };
            (mark, Some(policy))
        }
        Source::Data => {
            let mark = match (response, conditional) {
                (Discrete, _) => Mark::Histogram,
                (_, None) => Mark::Densityline,
                (_, Discrete) => Mark::Dots,
                (_, Continuous) => Mark::Point,
            };
            (mark, Option::None)
        }
    }
}

/// Checks that `mark` can be planned under `policy` with the given x axis.
pub fn check_compat(mark: Mark, policy: Option<GroupingPolicy>, x: &XAxis) -> Result<(), LayerError> {
    match (mark, x) {
        (Mark::Lineribbon | Mark::Gradient, XAxis::None | XAxis::Discrete(_)) => {
            return Err(LayerError::NeedsX { mark, requirement: "needs a continuous x conditional" });
        }
        (Mark::Line, XAxis::None) => {
            return Err(LayerError::NeedsX { mark, requirement: "needs an x conditional" });
        }
        (m, XAxis::Continuous(_)) if m.is_distribution() => {
            return Err(LayerError::NeedsX { mark, requirement: "cannot be drawn against a continuous x conditional" });
        }
        _ => {}
    }
    if let Some(p) = policy {
        let bad = matches!(
            (mark, p),
            (Mark::Lineribbon | Mark::Gradient | Mark::Line, GroupingPolicy::Aggregating(_))
                | (Mark::Gradient, GroupingPolicy::Individualizing)
        );
        if bad {
            return Err(LayerError::Incompatible { mark, policy: p });
        }
        if matches!(p, GroupingPolicy::Aggregating(_)) && matches!(x, XAxis::Continuous(_)) {
            return Err(LayerError::AggregateContinuousX(p));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Datum {
    Num(f64),
    Text(String),
}

impl Datum {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Datum::Num(v) => Some(*v),
            Datum::Text(_) => None,
        }
    }
}

/// Column-named rows of mark geometry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeometryTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Datum>>,
}

impl GeometryTable {
    pub fn new(columns: Vec<String>) -> Self {
        GeometryTable { columns, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.column(name).is_some()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Numeric values of a column (text cells skipped).
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        match self.column(name) {
            Some(c) => self.rows.iter().filter_map(|r| r[c].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn filter(&self, keep: impl Fn(&[Datum]) -> bool) -> GeometryTable {
        GeometryTable { columns: self.columns.clone(), rows: self.rows.iter().filter(|r| keep(r)).cloned().collect() }
    }
}

/// Backend mark of one plan part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VegaMark {
    pub kind: &'static str,
    pub orient: Option<&'static str>,
}

impl VegaMark {
    const fn plain(kind: &'static str) -> Self {
        VegaMark { kind, orient: None }
    }
}

/// Channel bindings to geometry columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Encoding {
    pub x: Option<String>,
    pub x2: Option<String>,
    pub y: Option<String>,
    pub y2: Option<String>,
    pub color: Option<String>,
    pub opacity: Option<String>,
    pub size: Option<String>,
    pub order: Option<String>,
    pub detail: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanPart {
    pub mark: VegaMark,
    pub table: GeometryTable,
    pub encoding: Encoding,
}

/// Where the checked quantity is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueAxis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerStyle {
    pub opacity: Option<f64>,
    pub color: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub source: Source,
    pub mark: Mark,
    pub policy: Option<GroupingPolicy>,
    pub parts: Vec<PlanPart>,
    /// `draw` when individualizing.
    pub group_key: Option<String>,
    /// `draw` when animating.
    pub frame_key: Option<String>,
    pub cell_columns: Vec<String>,
    pub value_axis: ValueAxis,
    pub style: LayerStyle,
}

impl LayerPlan {
    /// Distinct draw indices carried by the geometry.
    pub fn draws(&self) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for part in &self.parts {
            for v in part.table.numbers("draw") {
                set.insert(v as usize);
            }
        }
        set.into_iter().collect()
    }
}

pub fn cell_column(predictor: &str) -> String {
    format!("cell_{predictor}")
}

/// Values feeding one mark instance.
struct Unit {
    cell: usize,
    draw: Option<usize>,
    /// Continuous x per value; empty otherwise.
    xs: Vec<f64>,
    values: Vec<f64>,
}

fn sort_pairs(xs: &mut Vec<f64>, values: &mut Vec<f64>) {
    if xs.is_empty() {
        values.sort_by(f64::total_cmp);
        return;
    }
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(values.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    *xs = pairs.iter().map(|p| p.0).collect();
    *values = pairs.iter().map(|p| p.1).collect();
}

fn continuous_x(x: &XAxis, preds: &[PredictorValue], idx: Option<usize>) -> Option<f64> {
    match x {
        XAxis::Continuous(_) => idx.and_then(|i| preds[i].as_f64()),
        _ => None,
    }
}

/// Plans a model layer over `draws`.
pub fn plan_model_layer(
    draws: &DrawsTable,
    mark: Mark,
    policy: GroupingPolicy,
    ctx: &CellContext,
    style: LayerStyle,
) -> Result<LayerPlan, LayerError> {
    check_compat(mark, Some(policy), &ctx.x)?;
    let partition = draws.partition(&ctx.vars())?;
    let x_idx = ctx.x.continuous_name().and_then(|n| draws.column_index(n));
    let cell_x = |row0: usize| continuous_x(&ctx.x, draws.row_predictors(row0 + 1), x_idx);
    let mut units = Vec::new();
    match policy {
        GroupingPolicy::Collapsing => {
            for (c, cell) in partition.cells.iter().enumerate() {
                let mut xs = Vec::new();
                let mut values = Vec::with_capacity(draws.n_draws() * cell.rows.len());
                for d in 1..=draws.n_draws() {
                    for &i in &cell.rows {
                        values.push(draws.value(d, i + 1));
                        xs.extend(cell_x(i));
                    }
                }
                sort_pairs(&mut xs, &mut values);
                units.push(Unit { cell: c, draw: None, xs, values });
            }
        }
        GroupingPolicy::Individualizing | GroupingPolicy::Animating => {
            for d in 1..=draws.n_draws() {
                for (c, cell) in partition.cells.iter().enumerate() {
                    let values = cell.rows.iter().map(|&i| draws.value(d, i + 1)).collect();
                    let xs = cell.rows.iter().filter_map(|&i| cell_x(i)).collect();
                    units.push(Unit { cell: c, draw: Some(d), xs, values });
                }
            }
        }
        GroupingPolicy::Aggregating(pi) => {
            for (c, cell) in partition.cells.iter().enumerate() {
                let values = (1..=draws.n_draws())
                    .map(|d| {
                        let v: Vec<f64> = cell.rows.iter().map(|&i| draws.value(d, i + 1)).collect();
                        pi.apply(&v)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                units.push(Unit { cell: c, draw: None, xs: Vec::new(), values });
            }
        }
    }
    let key = if policy.per_draw() { Some("draw".to_string()) } else { None };
    let mut style = style;
    if policy == GroupingPolicy::Individualizing && style.opacity.is_none() {
        style.opacity = Some(0.4);
    }
    let mut plan = build_plan(Source::Model, mark, units, &partition, ctx, style)?;
    plan.policy = Some(policy);
    match policy {
        GroupingPolicy::Individualizing => plan.group_key = key,
        GroupingPolicy::Animating => plan.frame_key = key,
        _ => {}
    }
    Ok(plan)
}

/// Plans an observed-data layer over `obs`.
pub fn plan_obs_layer(
    obs: &ObservedTable,
    mark: Mark,
    ctx: &CellContext,
    style: LayerStyle,
) -> Result<LayerPlan, LayerError> {
    check_compat(mark, None, &ctx.x)?;
    let partition = obs.partition(&ctx.vars())?;
    let x_idx = ctx.x.continuous_name().and_then(|n| obs.column_index(n));
    let mut units = Vec::new();
    for (c, cell) in partition.cells.iter().enumerate() {
        let mut values: Vec<f64> = cell.rows.iter().map(|&i| obs.rows()[i].response).collect();
        let mut xs: Vec<f64> =
            cell.rows.iter().filter_map(|&i| continuous_x(&ctx.x, &obs.rows()[i].predictors, x_idx)).collect();
        if (mark.is_density() || mark.is_interval()) && values.len() < 2 {
            let mut compatible = vec!["dots", "histogram", "point"];
            if !matches!(ctx.x, XAxis::None) {
                compatible.push("line");
            }
            return Err(LayerError::TooFewValues { mark, got: values.len(), compatible: compatible.join(", ") });
        }
        sort_pairs(&mut xs, &mut values);
        units.push(Unit { cell: c, draw: None, xs, values });
    }
    build_plan(Source::Data, mark, units, &partition, ctx, style)
}

/// Statistic of one unit before placement.
enum UnitStat {
    Density(DensityCurve),
    Hist(Vec<stats::Bin>, usize),
    Intervals(IntervalSet),
    Dots(stats::DotplotBins),
    Points(Vec<(f64, f64)>),
    Ribbon(Vec<(f64, IntervalSet)>),
}

fn gradient_widths() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

fn band_opacity(mark: Mark, w: f64) -> f64 {
    match mark {
        Mark::Gradient => 0.02 + 0.3 * (1.0 - w),
        _ => 0.2 + 0.8 * (1.0 - w),
    }
}

fn thickness(w: f64) -> f64 {
    1.0 + 4.0 * (1.0 - w)
}

/// Groups sorted `(x, value)` pairs by exact x.
fn by_x(xs: &[f64], values: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for (&x, &v) in xs.iter().zip(values) {
        match out.last_mut() {
            Some((lx, vs)) if *lx == x => vs.push(v),
            _ => out.push((x, vec![v])),
        }
    }
    out
}

fn unit_stat(mark: Mark, unit: &Unit, x: &XAxis, source: Source) -> Result<UnitStat, LayerError> {
    let too_few = |got| LayerError::TooFewValues { mark, got, compatible: "dots, histogram, point".to_string() };
    Ok(match mark {
        Mark::Densityline | Mark::Slab | Mark::Violin => {
            if unit.values.len() < 2 {
                return Err(too_few(unit.values.len()));
            }
            UnitStat::Density(stats::kde(&unit.values, Bandwidth::Silverman)?)
        }
        Mark::Histogram => UnitStat::Hist(stats::histogram(&unit.values)?, unit.values.len()),
        Mark::Dots => UnitStat::Dots(stats::quantile_dotplot(&unit.values, DEFAULT_DOTS.min(unit.values.len()))?),
        Mark::Point => UnitStat::Points(if unit.xs.is_empty() {
            unit.values.iter().map(|&v| (f64::NAN, v)).collect()
        } else {
            unit.xs.iter().copied().zip(unit.values.iter().copied()).collect()
        }),
        Mark::Line => {
            let pts = match (x, source, unit.draw) {
                // Collapsed model lines follow the median at each x.
                (XAxis::Continuous(_), Source::Model, None) => by_x(&unit.xs, &unit.values)
                    .into_iter()
                    .map(|(x, vs)| Ok((x, stats::median(&vs)?)))
                    .collect::<Result<Vec<_>, StatsError>>()?,
                (XAxis::Discrete(_), Source::Model, _) => vec![(f64::NAN, stats::median(&unit.values)?)],
                _ if unit.xs.is_empty() => unit.values.iter().map(|&v| (f64::NAN, v)).collect(),
                _ => unit.xs.iter().copied().zip(unit.values.iter().copied()).collect(),
            };
            UnitStat::Points(pts)
        }
        Mark::Interval | Mark::Pointinterval if !unit.xs.is_empty() => UnitStat::Ribbon(
            by_x(&unit.xs, &unit.values)
                .into_iter()
                .map(|(x, vs)| Ok((x, stats::interval_set(&vs, &DEFAULT_WIDTHS)?)))
                .collect::<Result<Vec<_>, StatsError>>()?,
        ),
        Mark::Interval | Mark::Pointinterval => {
            UnitStat::Intervals(stats::interval_set(&unit.values, &DEFAULT_WIDTHS)?)
        }
        Mark::Lineribbon | Mark::Gradient => {
            let widths = if mark == Mark::Gradient { gradient_widths() } else { DEFAULT_WIDTHS.to_vec() };
            UnitStat::Ribbon(
                by_x(&unit.xs, &unit.values)
                    .into_iter()
                    .map(|(x, vs)| Ok((x, stats::interval_set(&vs, &widths)?)))
                    .collect::<Result<Vec<_>, StatsError>>()?,
            )
        }
    })
}

/// Rows of one part, before cell and draw columns are appended.
struct PartRows {
    mark: VegaMark,
    columns: &'static [&'static str],
    rows: Vec<Vec<f64>>,
}

fn part(mark: VegaMark, columns: &'static [&'static str]) -> PartRows {
    PartRows { mark, columns, rows: Vec::new() }
}

fn build_plan(
    source: Source,
    mark: Mark,
    units: Vec<Unit>,
    partition: &CellPartition,
    ctx: &CellContext,
    style: LayerStyle,
) -> Result<LayerPlan, LayerError> {
    let stats: Vec<UnitStat> =
        units.par_iter().map(|u| unit_stat(mark, u, &ctx.x, source)).collect::<Result<Vec<_>, LayerError>>()?;

    let vertical = !matches!(ctx.x, XAxis::None);
    let band = matches!(ctx.x, XAxis::Discrete(_));
    // One scale per layer so every cell and draw is drawn comparably.
    let max_extent = stats
        .iter()
        .map(|s| match s {
            UnitStat::Density(c) => c.density.iter().copied().fold(0.0, f64::max),
            UnitStat::Hist(bins, n) => bins.iter().map(|b| hist_density(b, *n)).fold(0.0, f64::max),
            UnitStat::Dots(d) => d.heights.iter().copied().max().unwrap_or(0) as f64,
            _ => 0.0,
        })
        .fold(0.0, f64::max);
    let half = if mark == Mark::Violin { BAND_EXTENT / 2.0 } else { BAND_EXTENT };
    let scale = if band && max_extent > 0.0 { half / max_extent } else { 1.0 };

    let x_pos = ctx.x.discrete_position();
    let mut parts: Vec<PartRows> = Vec::new();
    // (cell, draw) of every emitted row, per part.
    let mut tags: Vec<Vec<(usize, Option<usize>)>> = Vec::new();

    for (u, stat) in units.iter().zip(&stats) {
        let c = if band { x_pos(&partition.cells[u.cell].key) } else { 0.0 };
        let emitted = emit_unit(mark, stat, vertical, band, c, scale);
        if parts.is_empty() {
            for p in &emitted {
                parts.push(part(p.mark, p.columns));
                tags.push(Vec::new());
            }
        }
        for (k, p) in emitted.into_iter().enumerate() {
            tags[k].extend(std::iter::repeat_n((u.cell, u.draw), p.rows.len()));
            parts[k].rows.extend(p.rows);
        }
    }

    let cell_columns: Vec<String> = partition.vars.iter().map(|v| cell_column(&v.name)).collect();
    let has_draw = units.iter().any(|u| u.draw.is_some());
    let color = ctx.color.as_ref().map(|v| cell_column(&v.name));
    let plan_parts = parts
        .into_iter()
        .zip(tags)
        .map(|(p, tag)| {
            let mut columns: Vec<String> = p.columns.iter().map(|s| s.to_string()).collect();
            if has_draw {
                columns.push("draw".into());
            }
            columns.extend(cell_columns.iter().cloned());
            let rows = p
                .rows
                .into_iter()
                .zip(tag)
                .map(|(nums, (cell, draw))| {
                    let mut row: Vec<Datum> = nums.into_iter().map(Datum::Num).collect();
                    if has_draw {
                        row.push(Datum::Num(draw.unwrap_or(0) as f64));
                    }
                    row.extend(partition.cells[cell].key.iter().map(|k| Datum::Text(k.clone())));
                    row
                })
                .collect();
            let table = GeometryTable { columns, rows };
            let encoding = infer_encoding(&table, p.mark, has_draw, color.clone(), &cell_columns, ctx);
            PlanPart { mark: p.mark, table, encoding }
        })
        .collect();

    Ok(LayerPlan {
        source,
        mark,
        policy: None,
        parts: plan_parts,
        group_key: None,
        frame_key: None,
        cell_columns,
        value_axis: if vertical { ValueAxis::Y } else { ValueAxis::X },
        style,
    })
}

fn hist_density(b: &stats::Bin, n: usize) -> f64 {
    let w = b.hi - b.lo;
    if w > 0.0 {
        b.count as f64 / (n as f64 * w)
    } else {
        b.count as f64 / n as f64
    }
}

const LINE: VegaMark = VegaMark::plain("line");
const AREA: VegaMark = VegaMark::plain("area");
const AREA_H: VegaMark = VegaMark { kind: "area", orient: Some("horizontal") };
const RECT: VegaMark = VegaMark::plain("rect");
const RULE: VegaMark = VegaMark::plain("rule");
const POINT: VegaMark = VegaMark::plain("point");

/// Geometry of one unit. `c` is the band centre when `band` is set.
fn emit_unit(mark: Mark, stat: &UnitStat, vertical: bool, band: bool, c: f64, s: f64) -> Vec<PartRows> {
    match stat {
        UnitStat::Density(curve) => {
            let pts = curve.grid.iter().zip(&curve.density);
            match (mark, vertical) {
                (Mark::Densityline, false) => {
                    let mut p = part(LINE, &["x", "y", "order"]);
                    p.rows = pts.enumerate().map(|(k, (&g, &d))| vec![g, d, k as f64]).collect();
                    vec![p]
                }
                (Mark::Densityline, true) => {
                    let mut p = part(LINE, &["x", "y", "order"]);
                    p.rows = pts.enumerate().map(|(k, (&g, &d))| vec![c + s * d, g, k as f64]).collect();
                    vec![p]
                }
                (Mark::Slab, false) => {
                    let mut p = part(AREA, &["x", "y", "y2"]);
                    p.rows = pts.map(|(&g, &d)| vec![g, d, 0.0]).collect();
                    vec![p]
                }
                (Mark::Slab, true) => {
                    let mut p = part(AREA_H, &["y", "x", "x2"]);
                    p.rows = pts.map(|(&g, &d)| vec![g, c, c + s * d]).collect();
                    vec![p]
                }
                (_, false) => {
                    let mut p = part(AREA, &["x", "y", "y2"]);
                    p.rows = pts.map(|(&g, &d)| vec![g, -d / 2.0, d / 2.0]).collect();
                    vec![p]
                }
                (_, true) => {
                    let mut p = part(AREA_H, &["y", "x", "x2"]);
                    p.rows = pts.map(|(&g, &d)| vec![g, c - s * d, c + s * d]).collect();
                    vec![p]
                }
            }
        }
        UnitStat::Hist(bins, n) => {
            let mut p = part(RECT, &["x", "x2", "y", "y2", "count"]);
            p.rows = bins
                .iter()
                .map(|b| {
                    let d = hist_density(b, *n);
                    if vertical {
                        vec![c, c + s * d, b.lo, b.hi, b.count as f64]
                    } else {
                        vec![b.lo, b.hi, 0.0, d, b.count as f64]
                    }
                })
                .collect();
            vec![p]
        }
        UnitStat::Dots(d) => {
            let mut p = part(POINT, &["x", "y"]);
            let min = d.dots.first().map_or(0.0, |dot| dot.x);
            // Each dot carries 1/n of the mass, so a stack reads as a density.
            let n = d.dots.len().max(1) as f64;
            let per_dot = if d.bin_width > 0.0 { 1.0 / (n * d.bin_width) } else { 1.0 / n };
            p.rows = d
                .dots
                .iter()
                .map(|dot| {
                    let centre = if d.bin_width > 0.0 { min + (dot.bin as f64 + 0.5) * d.bin_width } else { dot.x };
                    if vertical {
                        vec![c + s * dot.stack as f64, centre]
                    } else {
                        vec![centre, (dot.stack as f64 - 0.5) * per_dot]
                    }
                })
                .collect();
            vec![p]
        }
        UnitStat::Intervals(set) => {
            let mut rule = part(RULE, &["x", "x2", "y", "y2", "width", "thickness"]);
            let mut point = part(POINT, &["x", "y"]);
            for iv in &set.intervals {
                rule.rows.push(if vertical {
                    vec![c, c, iv.lo, iv.hi, iv.width, thickness(iv.width)]
                } else {
                    vec![iv.lo, iv.hi, 0.0, 0.0, iv.width, thickness(iv.width)]
                });
            }
            point.rows.push(if vertical { vec![c, set.point] } else { vec![set.point, 0.0] });
            if mark == Mark::Pointinterval {
                vec![rule, point]
            } else {
                vec![rule]
            }
        }
        UnitStat::Ribbon(by_x) => match mark {
            Mark::Lineribbon | Mark::Gradient => {
                let mut area = part(AREA, &["x", "y", "y2", "width", "opacity"]);
                for (x, set) in by_x {
                    for iv in &set.intervals {
                        area.rows.push(vec![*x, iv.lo, iv.hi, iv.width, band_opacity(mark, iv.width)]);
                    }
                }
                let mut line = part(LINE, &["x", "y", "order"]);
                line.rows = by_x.iter().enumerate().map(|(k, (x, set))| vec![*x, set.point, k as f64]).collect();
                vec![area, line]
            }
            _ => {
                let mut rule = part(RULE, &["x", "x2", "y", "y2", "width", "thickness"]);
                let mut point = part(POINT, &["x", "y"]);
                for (x, set) in by_x {
                    for iv in &set.intervals {
                        rule.rows.push(vec![*x, *x, iv.lo, iv.hi, iv.width, thickness(iv.width)]);
                    }
                    point.rows.push(vec![*x, set.point]);
                }
                if mark == Mark::Pointinterval {
                    vec![rule, point]
                } else {
                    vec![rule]
                }
            }
        },
        UnitStat::Points(pts) => {
            let kind = if mark == Mark::Line { LINE } else { POINT };
            let mut p = if mark == Mark::Line { part(kind, &["x", "y", "order"]) } else { part(kind, &["x", "y"]) };
            p.rows = pts
                .iter()
                .enumerate()
                .map(|(k, &(x, v))| {
                    let (px, py) = if band {
                        (c, v)
                    } else if vertical {
                        (x, v)
                    } else {
                        (v, 0.0)
                    };
                    let mut row = vec![px, py];
                    if mark == Mark::Line {
                        row.push(if band { c } else { k as f64 });
                    }
                    row
                })
                .collect();
            vec![p]
        }
    }
}

fn infer_encoding(
    table: &GeometryTable,
    mark: VegaMark,
    has_draw: bool,
    color: Option<String>,
    cell_columns: &[String],
    ctx: &CellContext,
) -> Encoding {
    let col = |n: &str| table.has(n).then(|| n.to_string());
    let mut detail = Vec::new();
    if has_draw {
        detail.push("draw".to_string());
    }
    if table.has("width") && mark.kind == "area" {
        detail.push("width".to_string());
    }
    // Lines and areas must not connect across cells.
    if matches!(mark.kind, "line" | "area") {
        let x_cell = ctx.x.discrete_name().map(cell_column);
        for c in cell_columns {
            let connects_levels = mark.kind == "line" && x_cell.as_deref() == Some(c.as_str()) && !table.has("count");
            if Some(c) != color.as_ref() && !connects_levels {
                detail.push(c.clone());
            }
        }
    }
    Encoding {
        x: col("x"),
        x2: col("x2"),
        y: col("y"),
        y2: col("y2"),
        color,
        opacity: col("opacity"),
        size: col("thickness"),
        order: col("order"),
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{CellContext, Conditioning};
    use crate::sampling::QuantityId;
    use crate::tables::{read_observed, ColumnKind, PredictorColumn};

    fn draws_of(rows: &[&[f64]]) -> DrawsTable {
        let n = rows[0].len();
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DrawsTable::new(QuantityId::Response, rows.len(), values, Vec::new(), vec![Vec::new(); n]).unwrap()
    }

    fn none() -> CellContext {
        CellContext::default()
    }

    #[test]
    fn names_and_categories() {
        assert_eq!(Mark::parse("gradient").unwrap().category(), MarkCategory::VisualVariable);
        assert_eq!(Mark::parse("dots").unwrap().category(), MarkCategory::Countable);
        assert_eq!(Mark::parse("violin").unwrap().category(), MarkCategory::Extent);
        let err = Mark::parse("densitee").unwrap_err().to_string();
        for n in Mark::NAMES {
            assert!(err.contains(n));
        }
        assert_eq!(GroupingPolicy::parse("aggregate:sd").unwrap().to_string(), "aggregate:sd");
    }

    #[test]
    fn auto_table() {
        use VarKind::*;
        assert_eq!(
            auto_mark(Source::Model, Continuous, Continuous),
            (Mark::Lineribbon, Some(GroupingPolicy::Collapsing))
        );
        assert_eq!(auto_mark(Source::Data, Continuous, None), (Mark::Densityline, Option::None));
        assert_eq!(
            auto_mark(Source::Model, Continuous, None),
            (Mark::Densityline, Some(GroupingPolicy::Individualizing))
        );
        assert_eq!(auto_mark(Source::Data, Discrete, Continuous).0, Mark::Histogram);
    }

    #[test]
    fn aggregating_uses_per_draw_statistic() {
        let d = draws_of(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let plan = plan_model_layer(
            &d,
            Mark::Dots,
            GroupingPolicy::Aggregating(Aggregator::Mean),
            &none(),
            LayerStyle::default(),
        )
        .unwrap();
        let xs = plan.parts[0].table.numbers("x");
        assert_eq!(xs.len(), 2);
        // Two dots at the 0.25 and 0.75 quantiles of [2, 5], each alone in a
        // bin of width 0.75, so each weighs 1 / (2 * 0.75) and sits at half that.
        for y in plan.parts[0].table.numbers("y") {
            assert!((y - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn collapsing_is_draw_order_invariant() {
        let forward = draws_of(&[&[0.3, 1.2], &[-0.7, 2.2], &[0.9, -1.4]]);
        let shuffled = draws_of(&[&[0.9, -1.4], &[0.3, 1.2], &[-0.7, 2.2]]);
        let a = plan_model_layer(&forward, Mark::Interval, GroupingPolicy::Collapsing, &none(), LayerStyle::default())
            .unwrap();
        let b = plan_model_layer(&shuffled, Mark::Interval, GroupingPolicy::Collapsing, &none(), LayerStyle::default())
            .unwrap();
        assert_eq!(a.parts, b.parts);
    }

    #[test]
    fn individualizing_yields_one_curve_per_draw() {
        let rows: Vec<Vec<f64>> = (0..50).map(|d| (0..10).map(|i| (i * (d + 1)) as f64 * 0.1).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let plan = plan_model_layer(
            &draws_of(&refs),
            Mark::Densityline,
            GroupingPolicy::Individualizing,
            &none(),
            LayerStyle::default(),
        )
        .unwrap();
        assert_eq!(plan.draws().len(), 50);
        assert_eq!(plan.group_key.as_deref(), Some("draw"));
        assert!(plan.frame_key.is_none());
        assert_eq!(plan.style.opacity, Some(0.4));
    }

    #[test]
    fn compatibility_errors() {
        let d = draws_of(&[&[1.0, 2.0]]);
        assert!(matches!(
            plan_model_layer(&d, Mark::Lineribbon, GroupingPolicy::Collapsing, &none(), LayerStyle::default()),
            Err(LayerError::NeedsX { .. })
        ));
        let x = XAxis::Continuous("x".into());
        assert!(matches!(
            check_compat(Mark::Lineribbon, Some(GroupingPolicy::Aggregating(Aggregator::Mean)), &x),
            Err(LayerError::Incompatible { .. })
        ));
        assert!(matches!(
            check_compat(Mark::Gradient, Some(GroupingPolicy::Individualizing), &x),
            Err(LayerError::Incompatible { .. })
        ));
        assert!(check_compat(Mark::Gradient, Some(GroupingPolicy::Collapsing), &x).is_ok());
    }

    #[test]
    fn compat_matrix_is_total() {
        let policies = [
            GroupingPolicy::Collapsing,
            GroupingPolicy::Individualizing,
            GroupingPolicy::Animating,
            GroupingPolicy::Aggregating(Aggregator::Mean),
        ];
        let obs = read_observed("y,g,x\n1,A,0.1\n2,A,0.2\n3,B,0.3\n4,B,0.4\n5,A,0.5\n", "y").unwrap();
        let schema = obs.schema().to_vec();
        let values: Vec<f64> = (0..15).map(|v| (v as f64 * 0.37).sin()).collect();
        let rows = obs.rows().iter().map(|r| r.predictors.clone()).collect();
        let d = DrawsTable::new(QuantityId::Response, 3, values, schema, rows).unwrap();
        for cond in [
            Conditioning::default(),
            Conditioning { x: Some("g".into()), ..Default::default() },
            Conditioning { x: Some("x".into()), color: Some("g".into()), ..Default::default() },
        ] {
            let ctx = CellContext::resolve(&cond, obs.schema()).unwrap();
            for m in Mark::ALL {
                for p in policies {
                    let r = plan_model_layer(&d, m, p, &ctx, LayerStyle::default());
                    if let Err(e) = r {
                        assert!(matches!(
                            e,
                            LayerError::Incompatible { .. }
                                | LayerError::NeedsX { .. }
                                | LayerError::AggregateContinuousX(_)
                                | LayerError::TooFewValues { .. }
                        ));
                    }
                }
            }
        }
    }

    #[test]
    fn obs_layers() {
        let obs = read_observed("y\n1\n2\n3\n", "y").unwrap();
        let plan = plan_obs_layer(&obs, Mark::Point, &none(), LayerStyle::default()).unwrap();
        assert_eq!(plan.parts[0].table.len(), 3);
        assert!(plan.policy.is_none());
        let single = read_observed("y\n2\n", "y").unwrap();
        let err = plan_obs_layer(&single, Mark::Densityline, &none(), LayerStyle::default()).unwrap_err();
        assert!(err.to_string().contains("mark requires ≥2 values"));
    }

    #[test]
    fn obs_interval_per_cell() {
        let obs = read_observed("y,g\n1,A\n2,A\n3,A\n10,B\n20,B\n", "y").unwrap();
        let ctx =
            CellContext::resolve(&Conditioning { x: Some("g".into()), ..Default::default() }, obs.schema()).unwrap();
        let plan = plan_obs_layer(&obs, Mark::Interval, &ctx, LayerStyle::default()).unwrap();
        let t = &plan.parts[0].table;
        let w = t.column("width").unwrap();
        let half: Vec<&Vec<Datum>> = t.rows.iter().filter(|r| r[w] == Datum::Num(0.5)).collect();
        assert_eq!(half.len(), 2);
        let y = t.column("y").unwrap();
        let y2 = t.column("y2").unwrap();
        assert_eq!((half[0][y].as_f64(), half[0][y2].as_f64()), (Some(1.5), Some(2.5)));
        assert_eq!((half[1][y].as_f64(), half[1][y2].as_f64()), (Some(12.5), Some(17.5)));
        let x = t.column("x").unwrap();
        assert_eq!(half[1][x], Datum::Num(1.5));
    }

    #[test]
    fn band_marks_stay_inside_band() {
        let schema = vec![PredictorColumn {
            name: "g".into(),
            kind: ColumnKind::Categorical { levels: vec!["A".into(), "B".into()] },
        }];
        let preds: Vec<Vec<PredictorValue>> =
            (0..6).map(|i| vec![PredictorValue::Categorical(if i % 2 == 0 { "A" } else { "B" }.into())]).collect();
        let values: Vec<f64> = (0..60).map(|v| (v as f64 * 1.7).cos() * 3.0).collect();
        let d = DrawsTable::new(QuantityId::Response, 10, values, schema.clone(), preds).unwrap();
        let ctx = CellContext::resolve(&Conditioning { x: Some("g".into()), ..Default::default() }, &schema).unwrap();
        for m in [Mark::Slab, Mark::Violin, Mark::Densityline, Mark::Histogram, Mark::Dots] {
            let plan = plan_model_layer(&d, m, GroupingPolicy::Collapsing, &ctx, LayerStyle::default()).unwrap();
            for p in &plan.parts {
                for x in p.table.numbers("x").into_iter().chain(p.table.numbers("x2")) {
                    let centre = if x < 1.0 { 0.5 } else { 1.5 };
                    assert!((x - centre).abs() <= BAND_EXTENT + 1e-12, "{m}: {x}");
                }
            }
        }
    }
}
