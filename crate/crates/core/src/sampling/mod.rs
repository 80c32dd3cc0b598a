//! Sampling specification: which model quantity to draw, on which
//! predictor values, and how many draws to keep.

pub mod rng;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

pub use rng::{rng_uniform, RngKey, RngStream};

use crate::models::{sample_response, Link, ModelBundle, ModelError};
use crate::tables::{DrawsTable, ObservedTable, TableError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("quantity `{quantity}` is not checkable for this model; expected one of: {allowed}")]
    NotCheckable { quantity: String, allowed: String },
    #[error("n_draws = {requested} outside 1..={available}")]
    DrawCount { requested: usize, available: usize },
    #[error("incompatible predictor values: {0}")]
    IncompatibleNewdata(String),
    #[error("model quantity `{quantity}` is not finite at draw {draw}, row {row}")]
    NonFinite { quantity: String, draw: usize, row: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A model quantity that can be drawn and compared with (transformed)
/// observations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QuantityId {
    /// The response `y` (posterior predictive draws).
    Response,
    /// The response on its link scale. No supported family uses a
    /// non-identity response link, so this is never checkable.
    ResponseLink,
    /// A distributional parameter on its natural scale.
    Param(String),
    /// A distributional parameter on its link scale.
    ParamLink(String),
}

impl QuantityId {
    /// Parses the surface syntax: `y`, `<param>` or `<link>_<param>`.
    pub fn parse(text: &str) -> QuantityId {
        if text == "y" {
            return QuantityId::Response;
        }
        for prefix in ["logit_", "log_"] {
            if let Some(rest) = text.strip_prefix(prefix) {
                if !rest.is_empty() {
                    return QuantityId::ParamLink(rest.to_string());
                }
            }
        }
        QuantityId::Param(text.to_string())
    }

    pub fn is_response(&self) -> bool {
        matches!(self, QuantityId::Response)
    }

    /// Name of the underlying parameter, if any.
    pub fn param_name(&self) -> Option<&str> {
        match self {
            QuantityId::Param(p) | QuantityId::ParamLink(p) => Some(p),
            _ => None,
        }
    }

    /// Surface name given the link used by `bundle` for link-scale params.
    pub fn label(&self, bundle: &ModelBundle) -> String {
        match self {
            QuantityId::ParamLink(p) => match bundle.param(p) {
                Ok(spec) => format!("{}_{p}", spec.link.name()),
                Err(_) => self.to_string(),
            },
            _ => self.to_string(),
        }
    }
}

impl fmt::Display for QuantityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantityId::Response => f.write_str("y"),
            QuantityId::ResponseLink => f.write_str("link_y"),
            QuantityId::Param(p) => f.write_str(p),
            // Without a bundle the link is unknown; the log form is the common one.
            QuantityId::ParamLink(p) => write!(f, "log_{p}"),
        }
    }
}

/// Checkable quantities of a bundle: the response, then each parameter
/// in bundle order followed by its link-scale variant when the link is
/// not the identity.
pub fn enumerate_quantities(bundle: &ModelBundle) -> Vec<QuantityId> {
    let mut out = vec![QuantityId::Response];
    for p in bundle.params() {
        out.push(QuantityId::Param(p.name.clone()));
        if p.link != Link::Identity {
            out.push(QuantityId::ParamLink(p.name.clone()));
        }
    }
    out
}

/// Surface names of [`enumerate_quantities`], e.g. `log_sigma`.
pub fn quantity_labels(bundle: &ModelBundle) -> Vec<String> {
    enumerate_quantities(bundle).iter().map(|q| q.label(bundle)).collect()
}

/// Resolves surface syntax against a bundle, honouring the actual link name
/// (`logit_mu` is only valid when `mu` uses the logit link).
pub fn parse_quantity_for(text: &str, bundle: &ModelBundle) -> Result<QuantityId, SamplingError> {
    let labels = quantity_labels(bundle);
    enumerate_quantities(bundle)
        .into_iter()
        .zip(&labels)
        .find(|(_, l)| l.as_str() == text)
        .map(|(q, _)| q)
        .ok_or_else(|| SamplingError::NotCheckable { quantity: text.to_string(), allowed: labels.join(", ") })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DrawCount {
    #[default]
    All,
    Count(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub quantity: QuantityId,
    /// `None` uses the data the model was fitted to.
    pub predictor_values: Option<ObservedTable>,
    pub n_draws: DrawCount,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn new(quantity: QuantityId, seed: u64) -> Self {
        SamplingSpec { quantity, predictor_values: None, n_draws: DrawCount::All, seed }
    }
}

/// Order in which (draw, row) cells are evaluated. Output never depends
/// on it; the variants exist to exercise that guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalOrder {
    #[default]
    Parallel,
    Sequential,
    Shuffled(u64),
}

/// Evenly strided draw indices `ceil((k + 1) r / n)` for `k = 0..n` (1-based).
pub fn stride_indices(r: usize, n: usize) -> Result<Vec<usize>, SamplingError> {
    if n == 0 || n > r {
        return Err(SamplingError::DrawCount { requested: n, available: r });
    }
    Ok((0..n).map(|k| ((k + 1) * r).div_ceil(n)).collect())
}

/// Keeps `n` evenly strided draws, relabelled `1..n` in order. The seed is
/// accepted for interface stability; the stride is deterministic.
pub fn subsample_draws(draws: &DrawsTable, n: usize, _seed: u64) -> Result<DrawsTable, SamplingError> {
    let keep = stride_indices(draws.n_draws(), n)?;
    Ok(draws.select_draws(&keep)?)
}

pub fn resolve(spec: &SamplingSpec, bundle: &ModelBundle) -> Result<DrawsTable, SamplingError> {
    resolve_with(spec, bundle, EvalOrder::default())
}

/// Draws `spec.quantity` for every retained draw and predictor row.
///
/// Response draws for original draw `j` and row `i` use the RNG key
/// `(seed, "pp", j, i)`, so thinning before or after resolving gives the
/// same values.
pub fn resolve_with(spec: &SamplingSpec, bundle: &ModelBundle, order: EvalOrder) -> Result<DrawsTable, SamplingError> {
    if !enumerate_quantities(bundle).contains(&spec.quantity) {
        return Err(SamplingError::NotCheckable {
            quantity: spec.quantity.label(bundle),
            allowed: quantity_labels(bundle).join(", "),
        });
    }
    let newdata = spec.predictor_values.as_ref().unwrap_or(bundle.fitted_data());
    let retained = match spec.n_draws {
        DrawCount::All => (1..=bundle.n_draws()).collect(),
        DrawCount::Count(n) => stride_indices(bundle.n_draws(), n)?,
    };

    let designs: Vec<Vec<Vec<f64>>> = bundle
        .params()
        .iter()
        .map(|p| p.design.design_matrix(newdata))
        .collect::<Result<_, _>>()
        .map_err(|e| match e {
            ModelError::UnseenLevel { .. } | ModelError::Design(_) => SamplingError::IncompatibleNewdata(e.to_string()),
            other => SamplingError::Model(other),
        })?;
    let n_rows = newdata.len();
    let family = bundle.family();
    let target = spec.quantity.param_name().map(|name| {
        let idx = bundle.params().iter().position(|p| p.name == name).expect("checkable quantity");
        (idx, matches!(spec.quantity, QuantityId::ParamLink(_)))
    });
    // Params in family order for response sampling.
    let family_order: Vec<usize> = family
        .params()
        .iter()
        .map(|name| bundle.params().iter().position(|p| p.name == *name).expect("validated bundle"))
        .collect();

    let eval = |slot: usize| -> Result<f64, SamplingError> {
        let (k, i) = (slot / n_rows, slot % n_rows);
        let draw = retained[k];
        let eta = |p: usize| -> f64 {
            let coefs = &bundle.params()[p].coef_draws[draw - 1];
            crate::models::dot(coefs, &designs[p][i])
        };
        let value = match target {
            Some((p, true)) => eta(p),
            Some((p, false)) => bundle.params()[p].link.inverse(eta(p)),
            None => {
                let values: Vec<f64> = family_order.iter().map(|&p| bundle.params()[p].link.inverse(eta(p))).collect();
                sample_response(family, &values, RngKey::new(spec.seed, "pp", draw as u32, (i + 1) as u32))?
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(SamplingError::NonFinite { quantity: spec.quantity.label(bundle), draw, row: i + 1 })
        }
    };

    let total = retained.len() * n_rows;
    let values: Vec<f64> = match order {
        EvalOrder::Parallel => (0..total).into_par_iter().map(eval).collect::<Result<_, _>>()?,
        EvalOrder::Sequential => (0..total).map(eval).collect::<Result<_, _>>()?,
        EvalOrder::Shuffled(seed) => {
            let mut perm: Vec<usize> = (0..total).collect();
            let mut s = RngKey::new(seed, "shuffle", 0, 0).stream();
            for i in (1..total).rev() {
                let j = (s.next_uniform() * (i + 1) as f64) as usize;
                perm.swap(i, j.min(i));
            }
            let mut out = vec![0.0; total];
            for slot in perm {
                out[slot] = eval(slot)?;
            }
            out
        }
    };
    Ok(DrawsTable::from_observed_predictors(spec.quantity.clone(), retained.len(), values, newdata)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DesignSpec, Family, ParamSpec, Term};
    use crate::tables::read_observed;

    fn param(name: &str, link: Link, obs: &ObservedTable, draws: Vec<f64>) -> ParamSpec {
        let d = DesignSpec::new(vec![Term::Intercept], obs).unwrap();
        ParamSpec {
            name: name.into(),
            link,
            coef_names: d.column_names(),
            coef_draws: draws.into_iter().map(|v| vec![v]).collect(),
            design: d,
        }
    }

    /// Intercept-only gaussian; alpha in {1, 3}, log sigma as given.
    fn demo(log_sigma: Vec<f64>) -> ModelBundle {
        let obs = read_observed("y\n2\n", "y").unwrap();
        let mu = param("mu", Link::Identity, &obs, vec![1.0, 3.0]);
        let sigma = param("sigma", Link::Log, &obs, log_sigma);
        ModelBundle::new(Family::Gaussian, vec![mu, sigma], obs).unwrap()
    }

    fn names(b: &ModelBundle) -> Vec<String> {
        quantity_labels(b)
    }

    #[test]
    fn gaussian_quantities() {
        assert_eq!(names(&demo(vec![0.0, 0.0])), vec!["y", "mu", "sigma", "log_sigma"]);
    }

    #[test]
    fn beta_and_bernoulli_quantities() {
        let obs = read_observed("y\n0.5\n", "y").unwrap();
        let beta = ModelBundle::new(
            Family::Beta,
            vec![param("mu", Link::Logit, &obs, vec![0.0]), param("phi", Link::Log, &obs, vec![1.0])],
            obs.clone(),
        )
        .unwrap();
        assert_eq!(names(&beta), vec!["y", "mu", "logit_mu", "phi", "log_phi"]);
        let bern = ModelBundle::new(Family::Bernoulli, vec![param("mu", Link::Logit, &obs, vec![0.0])], obs).unwrap();
        assert_eq!(names(&bern), vec!["y", "mu", "logit_mu"]);
    }

    #[test]
    fn surface_names_resolve_against_links() {
        let b = demo(vec![0.0, 0.0]);
        assert_eq!(parse_quantity_for("log_sigma", &b).unwrap(), QuantityId::ParamLink("sigma".into()));
        assert!(parse_quantity_for("logit_sigma", &b).is_err());
        assert!(parse_quantity_for("log_mu", &b).is_err());
        assert_eq!(QuantityId::parse("logit_mu"), QuantityId::ParamLink("mu".into()));
        assert_eq!(QuantityId::parse("y"), QuantityId::Response);
    }

    #[test]
    fn resolves_mu_draws() {
        let b = demo(vec![0.0, 0.0]);
        let d = resolve(&SamplingSpec::new(QuantityId::Param("mu".into()), 1), &b).unwrap();
        assert_eq!(d.values(), &[1.0, 3.0]);
        assert_eq!(d.n_draws(), 2);
    }

    #[test]
    fn resolves_log_sigma() {
        let b = demo(vec![0.0, 1.0]);
        let d = resolve(&SamplingSpec::new(QuantityId::ParamLink("sigma".into()), 1), &b).unwrap();
        assert_eq!(d.values(), &[0.0, 1.0]);
        let s = resolve(&SamplingSpec::new(QuantityId::Param("sigma".into()), 1), &b).unwrap();
        assert_eq!(s.values(), &[1.0, std::f64::consts::E]);
    }

    #[test]
    fn degenerate_noise_response() {
        // exp(-800) underflows to exactly 0.
        let b = demo(vec![-800.0, -800.0]);
        let d = resolve(&SamplingSpec::new(QuantityId::Response, 5), &b).unwrap();
        assert_eq!(d.values(), &[1.0, 3.0]);
    }

    #[test]
    fn rejects_unknown_quantities() {
        let b = demo(vec![0.0, 0.0]);
        for q in [QuantityId::Param("phi".into()), QuantityId::ParamLink("mu".into()), QuantityId::ResponseLink] {
            assert!(matches!(resolve(&SamplingSpec::new(q, 1), &b), Err(SamplingError::NotCheckable { .. })));
        }
    }

    #[test]
    fn stride_examples() {
        assert_eq!(stride_indices(10, 5).unwrap(), vec![2, 4, 6, 8, 10]);
        assert_eq!(stride_indices(7, 3).unwrap(), vec![3, 5, 7]);
        assert_eq!(stride_indices(4, 4).unwrap(), vec![1, 2, 3, 4]);
        assert!(stride_indices(4, 5).is_err());
        assert!(stride_indices(4, 0).is_err());
    }

    #[test]
    fn subsample_keeps_strided_draws() {
        let obs = read_observed("y\n0\n", "y").unwrap();
        let d = DrawsTable::from_observed_predictors(QuantityId::Response, 10, (1..=10).map(f64::from).collect(), &obs)
            .unwrap();
        let s = subsample_draws(&d, 5, 0).unwrap();
        assert_eq!(s.values(), &[2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(subsample_draws(&d, 10, 0).unwrap(), d);
    }

    #[test]
    fn evaluation_order_does_not_matter() {
        let b = demo(vec![0.2, -0.4]);
        let obs = read_observed("y\n1\n2\n3\n4\n5\n", "y").unwrap();
        let spec = SamplingSpec { predictor_values: Some(obs), ..SamplingSpec::new(QuantityId::Response, 77) };
        let a = resolve_with(&spec, &b, EvalOrder::Sequential).unwrap();
        assert_eq!(a, resolve_with(&spec, &b, EvalOrder::Parallel).unwrap());
        assert_eq!(a, resolve_with(&spec, &b, EvalOrder::Shuffled(3)).unwrap());
    }

    #[test]
    fn thinning_commutes_with_resolve() {
        let obs = read_observed("y\n1\n", "y").unwrap();
        let mu = param("mu", Link::Identity, &obs, (0..10).map(f64::from).collect());
        let sigma = param("sigma", Link::Log, &obs, vec![0.0; 10]);
        let b = ModelBundle::new(Family::Gaussian, vec![mu, sigma], obs).unwrap();
        let all = resolve(&SamplingSpec::new(QuantityId::Response, 9), &b).unwrap();
        let thin =
            resolve(&SamplingSpec { n_draws: DrawCount::Count(3), ..SamplingSpec::new(QuantityId::Response, 9) }, &b)
                .unwrap();
        assert_eq!(subsample_draws(&all, 3, 9).unwrap(), thin);
    }

    #[test]
    fn params_ignore_seed() {
        let b = demo(vec![0.3, 0.1]);
        let q = QuantityId::Param("sigma".into());
        assert_eq!(
            resolve(&SamplingSpec::new(q.clone(), 1), &b).unwrap(),
            resolve(&SamplingSpec::new(q, 2), &b).unwrap()
        );
    }
}
