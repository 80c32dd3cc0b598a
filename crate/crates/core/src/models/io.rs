//! `vmc-bundle/1` JSON interchange for model bundles.

use serde::{Deserialize, Serialize};

use super::{DesignSpec, Family, Link, ModelBundle, ModelError, ParamSpec};
use crate::tables::read_observed_with_kinds;

pub const BUNDLE_VERSION: &str = "vmc-bundle/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleDoc {
    version: String,
    family: String,
    n_draws: usize,
    params: Vec<ParamDoc>,
    response: String,
    /// CSV text of the data the model was fitted to.
    fitted_data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDoc {
    name: String,
    link: String,
    coef_names: Vec<String>,
    draws: Vec<Vec<f64>>,
    design: DesignSpec,
}

pub fn bundle_to_json(bundle: &ModelBundle) -> String {
    let doc = BundleDoc {
        version: BUNDLE_VERSION.to_string(),
        family: bundle.family().name().to_string(),
        n_draws: bundle.n_draws(),
        params: bundle
            .params()
            .iter()
            .map(|p| ParamDoc {
                name: p.name.clone(),
                link: p.link.name().to_string(),
                coef_names: p.coef_names.clone(),
                draws: p.coef_draws.clone(),
                design: p.design.clone(),
            })
            .collect(),
        response: bundle.fitted_data().response_name().to_string(),
        fitted_data: bundle.fitted_data().to_csv(),
    };
    serde_json::to_string(&doc).expect("bundle serializes")
}

pub fn bundle_from_json(text: &str) -> Result<ModelBundle, ModelError> {
    let doc: BundleDoc = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
    if doc.version != BUNDLE_VERSION {
        return Err(ModelError::Json(format!("unsupported version `{}`, expected {BUNDLE_VERSION}", doc.version)));
    }
    let family = Family::parse(&doc.family)?;
    // Grouping predictors stay categorical even when their levels look numeric.
    let groups: Vec<String> = doc.params.iter().flat_map(|p| p.design.levels.keys().cloned()).collect();
    let group_refs: Vec<&str> = groups.iter().map(String::as_str).collect();
    let fitted = read_observed_with_kinds(&doc.fitted_data, &doc.response, &group_refs)?;
    let params = doc
        .params
        .into_iter()
        .map(|p| {
            Ok(ParamSpec {
                link: Link::parse(&p.link)?,
                name: p.name,
                coef_names: p.coef_names,
                coef_draws: p.draws,
                design: p.design,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let bundle = ModelBundle::new(family, params, fitted)?;
    if bundle.n_draws() != doc.n_draws {
        return Err(ModelError::Json(format!(
            "n_draws is {} but parameters carry {} draws",
            doc.n_draws,
            bundle.n_draws()
        )));
    }
    Ok(bundle)
}
