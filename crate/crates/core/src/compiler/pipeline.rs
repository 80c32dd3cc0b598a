use serde_json::{json, Value};

use super::emit::{render, ChartSpec, CompileOutput, FrameSet, DEFAULT_FPS};
use super::patch::apply_patches;
use super::schema::validate_value;
use super::{CompileError, LayerSpec, MarkChoice, PredictorValues, SpecError, Stage, VmcSpec};
use crate::layers::{
    auto_mark, check_compat, plan_model_layer, plan_obs_layer, GroupingPolicy, LayerError, LayerPlan, LayerStyle, Mark,
    Source, VarKind,
};
use crate::layout::{compose, explicit_encode, facet, CellContext, ExplicitEncoding, LayoutError, LayoutKind, XAxis};
use crate::models::{Family, ModelBundle, ResponseKind};
use crate::sampling::{
    parse_quantity_for, resolve_with, subsample_draws, DrawCount, EvalOrder, QuantityId, SamplingError, SamplingSpec,
};
use crate::tables::{read_predictors, DrawsTable, ObservedTable};
use crate::transform::{apply_transform, comparability_warning, ObsTransform};

pub const STAGES: [&str; 4] = ["sample", "transform", "translate", "construct"];

/// Draws kept for individualizing and animating layers when the spec asks for all.
const PER_DRAW_DEFAULT: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompileOptions {
    pub eval_order: EvalOrder,
    /// Replaces the spec's seed.
    pub seed_override: Option<u64>,
}

pub fn compile(spec: &VmcSpec, bundle: &ModelBundle, obs: &ObservedTable) -> Result<CompileOutput, CompileError> {
    compile_with(spec, bundle, obs, CompileOptions::default())
}

struct Sampled {
    label: String,
    all: DrawsTable,
    per_draw: DrawsTable,
}

fn resolved_mark(layer: &LayerSpec, source: Source, response: VarKind, x: VarKind) -> (Mark, Option<GroupingPolicy>) {
    match layer.mark {
        MarkChoice::Auto => {
            let (mark, policy) = auto_mark(source, response, x);
            (mark, layer.policy.or(policy))
        }
        MarkChoice::Mark(m) => {
            (m, if source == Source::Model { Some(layer.policy.unwrap_or(GroupingPolicy::Collapsing)) } else { None })
        }
    }
}

fn layer_error(path: String, e: LayerError, stage: Stage) -> CompileError {
    match e {
        LayerError::NeedsX { .. }
        | LayerError::Incompatible { .. }
        | LayerError::AggregateContinuousX(_)
        | LayerError::TooFewValues { .. } => CompileError::Spec(SpecError::new(path, e)),
        other => CompileError::stage(stage, other),
    }
}

fn style(layer: &LayerSpec) -> LayerStyle {
    LayerStyle { opacity: layer.opacity, color: layer.color.clone() }
}

fn sample(
    spec: &VmcSpec,
    bundle: &ModelBundle,
    seed: u64,
    order: EvalOrder,
    per_draw_needed: bool,
) -> Result<Sampled, CompileError> {
    let quantity = parse_quantity_for(&spec.draw.quantity, bundle).map_err(|e| SpecError::new("/draw/quantity", e))?;
    let predictor_values = match &spec.draw.predictor_values {
        PredictorValues::Fitted => None,
        PredictorValues::Csv(text) => Some(
            read_predictors(text, bundle.fitted_data().response_name())
                .map_err(|e| CompileError::stage(Stage::Sample, e))?,
        ),
    };
    let r = bundle.n_draws();
    if let DrawCount::Count(n) = spec.draw.n_draws {
        if n == 0 || n > r {
            return Err(SpecError::new("/draw/n_draws", SamplingError::DrawCount { requested: n, available: r }).into());
        }
    }
    let sampling = SamplingSpec { quantity: quantity.clone(), predictor_values, n_draws: spec.draw.n_draws, seed };
    let all = resolve_with(&sampling, bundle, order).map_err(|e| CompileError::stage(Stage::Sample, e))?;
    let per_draw = if per_draw_needed && spec.draw.n_draws == DrawCount::All && all.n_draws() > PER_DRAW_DEFAULT {
        subsample_draws(&all, PER_DRAW_DEFAULT, seed).map_err(|e| CompileError::stage(Stage::Sample, e))?
    } else {
        all.clone()
    };
    Ok(Sampled { label: quantity.label(bundle), all, per_draw })
}

/// Runs the sample, transform, translate and construct stages, then emits
/// and validates the chart or frame set.
pub fn compile_with(
    spec: &VmcSpec,
    bundle: &ModelBundle,
    obs: &ObservedTable,
    opts: CompileOptions,
) -> Result<CompileOutput, CompileError> {
    let seed = opts.seed_override.unwrap_or(spec.draw.seed);
    let ctx = CellContext::resolve(&spec.condition, obs.schema()).map_err(|e| {
        let slot = match &e {
            LayoutError::UnknownPredictor { slot, .. } | LayoutError::ContinuousCell { slot, .. } => slot.to_string(),
            _ => String::new(),
        };
        let path = if slot.is_empty() { "/condition".to_string() } else { format!("/condition/{slot}") };
        CompileError::Spec(SpecError::new(path, e))
    })?;
    let x_kind = match ctx.x {
        XAxis::None => VarKind::None,
        XAxis::Discrete(_) => VarKind::Discrete,
        XAxis::Continuous(_) => VarKind::Continuous,
    };
    let explicit = match spec.layout {
        LayoutKind::Explicit(e) => Some(e),
        _ => None,
    };

    let quantity_is_response = QuantityId::parse(&spec.draw.quantity).is_response();
    let response_kind = if quantity_is_response && bundle.family().response_kind() == ResponseKind::Discrete {
        VarKind::Discrete
    } else {
        VarKind::Continuous
    };
    let model_marks: Vec<(Mark, Option<GroupingPolicy>)> =
        spec.model_layers.iter().map(|l| resolved_mark(l, Source::Model, response_kind, x_kind)).collect();
    let per_draw_needed = model_marks.iter().any(|(_, p)| p.is_some_and(GroupingPolicy::per_draw));

    // sample
    let sampled = sample(spec, bundle, seed, opts.eval_order, per_draw_needed)?;

    // transform
    let mut warnings = Vec::new();
    if let Some(w) = comparability_warning(&sampled.label, spec.obs_transform) {
        warnings.push(w);
    }
    let vars = ctx.vars();
    let t = if vars.is_empty() {
        ObsTransform::global(spec.obs_transform)
    } else {
        ObsTransform::per_cell(spec.obs_transform)
    };
    let partition = if vars.is_empty() {
        None
    } else {
        Some(obs.partition(&vars).map_err(|e| CompileError::stage(Stage::Transform, e))?)
    };
    let transformed =
        apply_transform(obs, t, partition.as_ref()).map_err(|e| CompileError::stage(Stage::Transform, e))?;

    // translate
    let (model_plans, obs_plans) = match explicit {
        Some(enc) => {
            for (i, (_, policy)) in model_marks.iter().enumerate() {
                if policy.is_some_and(GroupingPolicy::per_draw) && *policy != Some(GroupingPolicy::Individualizing) {
                    return Err(SpecError::new(
                        format!("/model_layers/{i}/policy"),
                        "explicit encodings summarize all draws; animating is not available",
                    )
                    .into());
                }
            }
            if matches!(enc, ExplicitEncoding::Qq | ExplicitEncoding::Worm) && bundle.family() != Family::Gaussian {
                return Err(SpecError::new(
                    "/layout",
                    format!("explicit:{} needs a gaussian model, found {}", enc.name(), bundle.family().name()),
                )
                .into());
            }
            let plans = explicit_encode(&sampled.all, &transformed, enc, &ctx)
                .map_err(|e| CompileError::stage(Stage::Translate, e))?;
            (plans, Vec::new())
        }
        None => {
            let mut model_plans = Vec::new();
            for (i, (layer, (mark, policy))) in spec.model_layers.iter().zip(&model_marks).enumerate() {
                let path = format!("/model_layers/{i}");
                let policy = policy.unwrap_or(GroupingPolicy::Collapsing);
                check_compat(*mark, Some(policy), &ctx.x)
                    .map_err(|e| layer_error(path.clone(), e, Stage::Translate))?;
                let draws = if policy.per_draw() { &sampled.per_draw } else { &sampled.all };
                let plan = plan_model_layer(draws, *mark, policy, &ctx, style(layer))
                    .map_err(|e| layer_error(path, e, Stage::Translate))?;
                model_plans.push(plan);
            }
            let mut obs_plans = Vec::new();
            for (i, layer) in spec.obs_layers.iter().enumerate() {
                let path = format!("/obs_layers/{i}");
                let (mark, _) = resolved_mark(layer, Source::Data, response_kind, x_kind);
                check_compat(mark, None, &ctx.x).map_err(|e| layer_error(path.clone(), e, Stage::Translate))?;
                let plan = plan_obs_layer(&transformed, mark, &ctx, style(layer))
                    .map_err(|e| layer_error(path, e, Stage::Translate))?;
                obs_plans.push(plan);
            }
            (model_plans, obs_plans)
        }
    };

    // construct
    let layout = construct(&model_plans, &obs_plans, spec.layout, &ctx, &sampled.label)?;

    let title = format!("Model check: {}", sampled.label);
    let meta = |frame: Option<usize>| {
        let mut m = json!({
            "stages": STAGES,
            "warnings": warnings,
            "seed": seed,
            "vmc_version": env!("CARGO_PKG_VERSION"),
            "layout": spec.layout.name(),
            "quantity": sampled.label,
        });
        if let Some(f) = frame {
            m["frame"] = json!(f);
        }
        m
    };
    let finish = |chart: Value| -> Result<ChartSpec, CompileError> {
        let patched = apply_patches(&chart, &spec.patches)?;
        Ok(ChartSpec(patched))
    };
    let output = match &layout.frame_key {
        Some(key) => {
            let frames = layout
                .frames
                .iter()
                .map(|&id| Ok((id, finish(render(&layout, &title, meta(Some(id)), Some(id)))?)))
                .collect::<Result<Vec<_>, CompileError>>()?;
            CompileOutput::Frames(FrameSet { frame_key: key.clone(), fps: DEFAULT_FPS, frames })
        }
        None => CompileOutput::Chart(finish(render(&layout, &title, meta(None), None))?),
    };
    let violations = validate_value(&output.to_value());
    if !violations.is_empty() {
        return Err(CompileError::Validation(violations));
    }
    Ok(output)
}

fn construct(
    model: &[LayerPlan],
    obs: &[LayerPlan],
    kind: LayoutKind,
    ctx: &CellContext,
    quantity: &str,
) -> Result<crate::layout::PanelLayout, CompileError> {
    let composed = compose(model, obs, kind, ctx, quantity).map_err(|e| match e {
        LayoutError::NestedNeedsDiscreteX => CompileError::Spec(SpecError::new("/layout", e)),
        other => CompileError::stage(Stage::Construct, other),
    })?;
    Ok(facet(&composed, ctx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::parse_spec;
    use crate::models::{fit_gaussian_conjugate, DesignSpec, NigPrior, Term};
    use crate::tables::read_observed;

    fn data() -> ObservedTable {
        let mut csv = String::from("g,x,y\n");
        for i in 0..40 {
            let g = ["A", "B"][i % 2];
            let x = i as f64 / 10.0;
            let y = 1.0 + 0.5 * x + if g == "A" { 0.3 } else { -0.2 } + ((i * 7919) % 13) as f64 / 20.0;
            csv.push_str(&format!("{g},{x},{y}\n"));
        }
        read_observed(&csv, "y").unwrap()
    }

    fn bundle(obs: &ObservedTable) -> ModelBundle {
        let design = DesignSpec::new(vec![Term::Intercept, Term::Numeric("x".into())], obs).unwrap();
        fit_gaussian_conjugate(obs, design, &NigPrior::diffuse(2), 120, 7).unwrap()
    }

    fn run(text: &str) -> Result<CompileOutput, CompileError> {
        let obs = data();
        compile(&parse_spec(text).unwrap(), &bundle(&obs), &obs)
    }

    #[test]
    fn records_stage_trace_and_is_deterministic() {
        let text = r#"{"draw":{"quantity":"y","seed":3},"model_layers":[{"mark":"densityline","policy":"individual"}],"obs_layers":[{"mark":"densityline"}]}"#;
        let a = run(text).unwrap();
        let b = run(text).unwrap();
        assert_eq!(super::super::emit(&a), super::super::emit(&b));
        let v = a.to_value();
        assert_eq!(v["usermeta"]["stages"], json!(STAGES));
        assert_eq!(v["usermeta"]["seed"], 3);
        // 50 individual curves plus the observed curve
        assert_eq!(v["layer"].as_array().unwrap().len(), 2);
        let detail = &v["layer"][0]["encoding"]["detail"];
        assert!(detail.is_array());
        let draws: std::collections::BTreeSet<i64> = v["layer"][0]["data"]["values"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["draw"].as_f64().unwrap() as i64)
            .collect();
        assert_eq!(draws.len(), 50);
    }

    #[test]
    fn hops_promotes_to_frames() {
        let out = run(r#"{"model_layers":[{"mark":"point","policy":"hops"}],"obs_layers":[{"mark":"point"}],"condition":{"x":"x"},"draw":{"n_draws":5}}"#).unwrap();
        match out {
            CompileOutput::Frames(f) => {
                assert_eq!(f.frames.len(), 5);
                assert_eq!(f.frame_key, "draw");
                assert_eq!(f.fps, DEFAULT_FPS);
            }
            CompileOutput::Chart(_) => panic!("expected frames"),
        }
    }

    #[test]
    fn cross_component_errors_point_into_the_spec() {
        let err = run(r#"{"model_layers":[{"mark":"pointinterval"}],"obs_layers":[{"mark":"point"}],"layout":"nest"}"#)
            .unwrap_err();
        assert!(matches!(&err, CompileError::Spec(e) if e.path == "/layout"), "{err}");
        let err = run(r#"{"model_layers":[{"mark":"lineribbon"}],"obs_layers":[{"mark":"point"}]}"#).unwrap_err();
        assert!(matches!(&err, CompileError::Spec(e) if e.path == "/model_layers/0"), "{err}");
        let err = run(r#"{"draw":{"quantity":"phi"},"model_layers":[{}],"obs_layers":[{}]}"#).unwrap_err();
        assert!(matches!(&err, CompileError::Spec(e) if e.path == "/draw/quantity"), "{err}");
        let err = run(r#"{"model_layers":[{}],"obs_layers":[{}],"condition":{"color":"x"}}"#).unwrap_err();
        assert!(matches!(&err, CompileError::Spec(e) if e.path == "/condition/color"), "{err}");
        let err =
            run(r#"{"model_layers":[{}],"obs_layers":[{"mark":"densityline"}],"obs_transform":"mean"}"#).unwrap_err();
        assert!(err.to_string().contains("≥2 values"), "{err}");
    }

    #[test]
    fn warnings_and_patches_land_in_output() {
        let out = run(r#"{"draw":{"quantity":"sigma"},"obs_transform":"mean","model_layers":[{"mark":"densityline","policy":"collapse"}],"obs_layers":[{"mark":"point"}],"patches":[{"path":"/title","value":"custom"}]}"#)
            .unwrap();
        assert_eq!(out.warnings().len(), 1);
        assert_eq!(out.to_value()["title"], "custom");
        let err = run(
            r#"{"model_layers":[{}],"obs_layers":[{}],"patches":[{"path":"/layer/0/mark","value":{"type":"blob"}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, CompileError::Validation(_)));
    }

    #[test]
    fn stage_errors_are_tagged() {
        let err = run(
            r#"{"model_layers":[{}],"obs_layers":[{}],"obs_transform":"log","draw":{"predictor_values":{"csv":"x\n1\n"}}}"#,
        );
        // one new row leaves each per-draw density with a single value
        assert!(
            matches!(err, Err(CompileError::Spec(e)) if e.path == "/model_layers/0" && e.message.contains("≥2 values"))
        );
        let err =
            run(r#"{"model_layers":[{}],"obs_layers":[{}],"draw":{"predictor_values":{"csv":"z\n1\n"}}}"#).unwrap_err();
        assert!(matches!(err, CompileError::Stage { stage: Stage::Sample, .. }), "{err}");
    }
}
