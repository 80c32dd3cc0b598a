//! Fitted-model bundles: response families, link functions, linear
//! designs and coefficient draws.
//!
//! A [`ModelBundle`] stands in for a fitted GLM-style model object. Each
//! distributional parameter of the family is modelled on its link scale
//! by a linear predictor over a [`DesignSpec`], with one coefficient
//! vector per posterior draw.

mod conjugate;
mod design;
mod distributions;
mod io;
mod simulate;

pub use conjugate::{fit_gaussian_conjugate, fit_grouped, NigPosterior, NigPrior};
pub use design::{DesignSpec, Term};
pub use distributions::{gamma_draw, poisson_draw, sample_response};
pub use io::{bundle_from_json, bundle_to_json, BUNDLE_VERSION};
pub use simulate::{simulate_dataset, SimulationConfig};

use thiserror::Error;

use crate::tables::{ObservedTable, TableError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("unknown family `{0}` (expected gaussian, bernoulli, poisson or beta)")]
    UnknownFamily(String),
    #[error("unknown link `{0}` (expected identity, log or logit)")]
    UnknownLink(String),
    #[error("parameter `{param}` = {value} is outside its domain for the {family} family")]
    OutOfDomain { family: &'static str, param: String, value: f64 },
    #[error("predictor `{predictor}` has level `{level}` not seen when fitting")]
    UnseenLevel { predictor: String, level: String },
    #[error("design: {0}")]
    Design(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("rank-deficient design matrix (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("fit needs at least one observation")]
    NoData,
    #[error("grouped fit: {0}")]
    Grouping(String),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("bundle json: {0}")]
    Json(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Link function `g`, mapping a parameter to the linear-predictor scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Identity,
    Log,
    Logit,
}

/// Inverse-logit outputs are clamped to `[LOGIT_CLAMP, 1 - LOGIT_CLAMP]`.
pub const LOGIT_CLAMP: f64 = 1e-15;

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
        }
    }

    pub fn parse(s: &str) -> Result<Link, ModelError> {
        match s {
            "identity" => Ok(Link::Identity),
            "log" => Ok(Link::Log),
            "logit" => Ok(Link::Logit),
            other => Err(ModelError::UnknownLink(other.to_string())),
        }
    }

    /// `g(v)`.
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Link::Identity => v,
            Link::Log => v.ln(),
            Link::Logit => (v / (1.0 - v)).ln(),
        }
    }

    /// `g^-1(eta)`.
    pub fn inverse(self, eta: f64) -> f64 {
        inverse_link(self, eta)
    }
}

/// Inverse link. The logistic branch is evaluated by sign so `exp` never
/// overflows, and its output is clamped away from exact 0 and 1.
pub fn inverse_link(link: Link, eta: f64) -> f64 {
    match link {
        Link::Identity => eta,
        Link::Log => eta.exp(),
        Link::Logit => {
            let p = if eta >= 0.0 {
                1.0 / (1.0 + (-eta).exp())
            } else {
                let e = eta.exp();
                e / (1.0 + e)
            };
            p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Real,
    Positive,
    Unit,
}

impl Domain {
    fn admits_link(self, link: Link) -> bool {
        match self {
            Domain::Real => true,
            Domain::Positive => link == Link::Log,
            Domain::Unit => link == Link::Logit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Bernoulli,
    Poisson,
    Beta,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Result<Family, ModelError> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" => Ok(Family::Bernoulli),
            "poisson" => Ok(Family::Poisson),
            "beta" => Ok(Family::Beta),
            other => Err(ModelError::UnknownFamily(other.to_string())),
        }
    }

    /// Distributional parameters in canonical order.
    pub fn params(self) -> &'static [&'static str] {
        match self {
            Family::Gaussian => &["mu", "sigma"],
            Family::Bernoulli => &["mu"],
            Family::Poisson => &["lambda"],
            Family::Beta => &["mu", "phi"],
        }
    }

    pub fn response_kind(self) -> ResponseKind {
        match self {
            Family::Gaussian | Family::Beta => ResponseKind::Continuous,
            Family::Bernoulli | Family::Poisson => ResponseKind::Discrete,
        }
    }

    fn domain(self, param: &str) -> Option<Domain> {
        match (self, param) {
            (Family::Gaussian, "mu") => Some(Domain::Real),
            (Family::Gaussian, "sigma") | (Family::Poisson, "lambda") | (Family::Beta, "phi") => Some(Domain::Positive),
            (Family::Bernoulli, "mu") | (Family::Beta, "mu") => Some(Domain::Unit),
            _ => None,
        }
    }

    /// Checks a parameter value. Gaussian `sigma = 0` is admitted as a
    /// degenerate point mass.
    pub fn check_param(self, param: &str, value: f64) -> Result<(), ModelError> {
        let ok = match (self.domain(param), param) {
            (None, _) => return Err(ModelError::UnknownParam(param.to_string())),
            (Some(Domain::Real), _) => value.is_finite(),
            (Some(Domain::Positive), "sigma") if self == Family::Gaussian => value.is_finite() && value >= 0.0,
            (Some(Domain::Positive), _) => value.is_finite() && value > 0.0,
            (Some(Domain::Unit), _) => value > 0.0 && value < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::OutOfDomain { family: self.name(), param: param.to_string(), value })
        }
    }
}

/// One distributional parameter: link, design and coefficient draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub link: Link,
    pub coef_names: Vec<String>,
    /// `r x p`; one row per draw.
    pub coef_draws: Vec<Vec<f64>>,
    pub design: DesignSpec,
}

impl ParamSpec {
    /// `eta_i = sum_k coef[draw][k] * X[i][k]` for a precomputed design matrix.
    pub fn linear_predictors(&self, design_matrix: &[Vec<f64>], draw: usize) -> Vec<f64> {
        let coefs = &self.coef_draws[draw];
        design_matrix.iter().map(|row| dot(coefs, row)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    family: Family,
    params: Vec<ParamSpec>,
    fitted_data: ObservedTable,
    n_draws: usize,
}

impl ModelBundle {
    pub fn new(family: Family, params: Vec<ParamSpec>, fitted_data: ObservedTable) -> Result<Self, ModelError> {
        let required = family.params();
        let mut names: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        let mut expected = required.to_vec();
        expected.sort_unstable();
        if names != expected {
            return Err(ModelError::InvalidBundle(format!(
                "{} family needs parameters {:?}, got {:?}",
                family.name(),
                required,
                params.iter().map(|p| &p.name).collect::<Vec<_>>()
            )));
        }
        let n_draws = params[0].coef_draws.len();
        if n_draws == 0 {
            return Err(ModelError::InvalidBundle("bundle has no draws".into()));
        }
        for p in &params {
            let domain = family.domain(&p.name).expect("checked against family params");
            if !domain.admits_link(p.link) {
                return Err(ModelError::InvalidBundle(format!(
                    "link `{}` cannot map onto the domain of `{}`",
                    p.link.name(),
                    p.name
                )));
            }
            if p.coef_draws.len() != n_draws {
                return Err(ModelError::InvalidBundle(format!(
                    "parameter `{}` has {} draws, expected {n_draws}",
                    p.name,
                    p.coef_draws.len()
                )));
            }
            let cols = p.design.column_names();
            if cols != p.coef_names {
                return Err(ModelError::InvalidBundle(format!(
                    "parameter `{}` coefficient names {:?} do not match its design columns {:?}",
                    p.name, p.coef_names, cols
                )));
            }
            if p.coef_draws.iter().any(|row| row.len() != cols.len() || row.iter().any(|v| v.is_nan())) {
                return Err(ModelError::InvalidBundle(format!(
                    "parameter `{}` coefficient draws must be {n_draws} x {} and not NaN",
                    p.name,
                    cols.len()
                )));
            }
            p.design.check_table(&fitted_data)?;
        }
        Ok(ModelBundle { family, params, fitted_data, n_draws })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Result<&ParamSpec, ModelError> {
        self.params.iter().find(|p| p.name == name).ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    pub fn fitted_data(&self) -> &ObservedTable {
        &self.fitted_data
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn to_json(&self) -> String {
        bundle_to_json(self)
    }
}

/// Linear predictor of `param_name` on `newdata` for a 0-based draw. No link
/// is applied.
pub fn linear_predictor(
    bundle: &ModelBundle,
    param_name: &str,
    newdata: &ObservedTable,
    draw_index: usize,
) -> Result<Vec<f64>, ModelError> {
    let param = bundle.param(param_name)?;
    if draw_index >= bundle.n_draws() {
        return Err(ModelError::InvalidBundle(format!("draw {draw_index} outside 0..{}", bundle.n_draws())));
    }
    let x = param.design.design_matrix(newdata)?;
    Ok(param.linear_predictors(&x, draw_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::read_observed;

    fn bundle_with_mu(terms: Vec<Term>, data: &str, coefs: Vec<Vec<f64>>) -> ModelBundle {
        let obs = read_observed(data, "y").unwrap();
        let design = DesignSpec::new(terms, &obs).unwrap();
        let r = coefs.len();
        let mu = ParamSpec {
            name: "mu".into(),
            link: Link::Identity,
            coef_names: design.column_names(),
            coef_draws: coefs,
            design,
        };
        let sd = DesignSpec::new(vec![Term::Intercept], &obs).unwrap();
        let sigma = ParamSpec {
            name: "sigma".into(),
            link: Link::Log,
            coef_names: sd.column_names(),
            coef_draws: vec![vec![0.0]; r],
            design: sd,
        };
        ModelBundle::new(Family::Gaussian, vec![mu, sigma], obs).unwrap()
    }

    #[test]
    fn intercept_only_predictor() {
        let b = bundle_with_mu(vec![Term::Intercept], "y,x\n5,3\n", vec![vec![1.0]]);
        assert_eq!(linear_predictor(&b, "mu", b.fitted_data(), 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn numeric_term_predictor() {
        let b = bundle_with_mu(vec![Term::Intercept, Term::Numeric("x".into())], "y,x\n5,3\n", vec![vec![1.0, 2.0]]);
        assert_eq!(linear_predictor(&b, "mu", b.fitted_data(), 0).unwrap(), vec![7.0]);
    }

    #[test]
    fn group_intercept_selects_level() {
        let b =
            bundle_with_mu(vec![Term::GroupIntercept("region".into())], "y,region\n0,A\n0,B\n", vec![vec![1.0, -1.0]]);
        let new = read_observed("y,region\n0,B\n", "y").unwrap();
        assert_eq!(linear_predictor(&b, "mu", &new, 0).unwrap(), vec![-1.0]);
    }

    #[test]
    fn linear_predictor_errors() {
        let b =
            bundle_with_mu(vec![Term::GroupIntercept("region".into())], "y,region\n0,A\n0,B\n", vec![vec![1.0, -1.0]]);
        assert_eq!(linear_predictor(&b, "phi", b.fitted_data(), 0), Err(ModelError::UnknownParam("phi".into())));
        let new = read_observed("y,region\n0,C\n", "y").unwrap();
        assert!(matches!(linear_predictor(&b, "mu", &new, 0), Err(ModelError::UnseenLevel { .. })));
    }

    #[test]
    fn inverse_link_values() {
        assert_eq!(inverse_link(Link::Logit, 0.0), 0.5);
        assert_eq!(inverse_link(Link::Log, 0.0), 1.0);
        assert_eq!(inverse_link(Link::Identity, -3.5), -3.5);
        // 1/(1+e^40) = 4.2483542552915890e-18 (40-digit reference), below the clamp.
        let unclamped = (-40.0f64).exp() / (1.0 + (-40.0f64).exp());
        assert!((unclamped - 4.248354255291589e-18).abs() < 1e-30);
        assert_eq!(inverse_link(Link::Logit, -40.0), 1e-15);
        assert_eq!(inverse_link(Link::Logit, 40.0), 1.0 - 1e-15);
        assert_eq!(inverse_link(Link::Logit, 800.0), 1.0 - 1e-15);
        assert_eq!(inverse_link(Link::Logit, -800.0), 1e-15);
    }

    #[test]
    fn links_round_trip_on_interior() {
        for i in 1..=1000 {
            let t = i as f64 / 1001.0;
            let unit = t;
            let positive = (t * 40.0 - 20.0).exp();
            let real = t * 200.0 - 100.0;
            assert!((Link::Logit.inverse(Link::Logit.apply(unit)) - unit).abs() < 1e-12);
            assert!((Link::Log.inverse(Link::Log.apply(positive)) - positive).abs() <= 1e-12 * positive.max(1.0));
            assert_eq!(Link::Identity.inverse(Link::Identity.apply(real)), real);
        }
    }

    #[test]
    fn bundle_rejects_bad_links_and_params() {
        let obs = read_observed("y\n1\n", "y").unwrap();
        let d = DesignSpec::new(vec![Term::Intercept], &obs).unwrap();
        let p = |name: &str, link| ParamSpec {
            name: name.into(),
            link,
            coef_names: d.column_names(),
            coef_draws: vec![vec![0.0]],
            design: d.clone(),
        };
        assert!(ModelBundle::new(Family::Bernoulli, vec![p("mu", Link::Identity)], obs.clone()).is_err());
        assert!(ModelBundle::new(Family::Bernoulli, vec![p("mu", Link::Logit)], obs.clone()).is_ok());
        assert!(ModelBundle::new(Family::Gaussian, vec![p("mu", Link::Identity)], obs.clone()).is_err());
        assert!(ModelBundle::new(Family::Poisson, vec![p("lambda", Link::Identity)], obs).is_err());
    }

    #[test]
    fn parameter_domains() {
        assert!(Family::Gaussian.check_param("sigma", 0.0).is_ok());
        assert!(Family::Gaussian.check_param("sigma", -1.0).is_err());
        assert!(Family::Beta.check_param("mu", 1.0).is_err());
        assert!(Family::Beta.check_param("phi", 0.0).is_err());
        assert!(Family::Poisson.check_param("lambda", f64::INFINITY).is_err());
        assert!(Family::Poisson.check_param("mu", 1.0).is_err());
    }
}
