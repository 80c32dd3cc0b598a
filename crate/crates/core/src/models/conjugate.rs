//! Exact Bayesian linear regression under a Normal-Inverse-Gamma prior.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::distributions::gamma_draw;
use super::{DesignSpec, Family, Link, ModelBundle, ModelError, ParamSpec, Term};
use crate::sampling::rng::RngKey;
use crate::tables::{ColumnKind, ObservedTable};

/// `beta | s2 ~ N(mean, s2 * cov)`, `s2 ~ InvGamma(shape, rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NigPrior {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub shape: f64,
    pub rate: f64,
}

impl NigPrior {
    /// `m0 = 0`, `V0 = 1e6 I`, `a0 = b0 = 1e-3`.
    pub fn diffuse(p: usize) -> Self {
        let cov = (0..p).map(|i| (0..p).map(|j| if i == j { 1e6 } else { 0.0 }).collect()).collect();
        NigPrior { mean: vec![0.0; p], cov, shape: 1e-3, rate: 1e-3 }
    }

    fn validate(&self, p: usize) -> Result<(DVector<f64>, DMatrix<f64>), ModelError> {
        if !(self.shape > 0.0 && self.rate > 0.0) {
            return Err(ModelError::InvalidPrior("shape and rate must be positive".into()));
        }
        if self.mean.len() != p || self.cov.len() != p || self.cov.iter().any(|r| r.len() != p) {
            return Err(ModelError::InvalidPrior(format!("prior dimensions do not match {p} design columns")));
        }
        let m0 = DVector::from_vec(self.mean.clone());
        let v0 = DMatrix::from_fn(p, p, |i, j| self.cov[i][j]);
        if (0..p).any(|i| (0..p).any(|j| v0[(i, j)] != v0[(j, i)])) {
            return Err(ModelError::InvalidPrior("prior covariance must be symmetric".into()));
        }
        let chol = v0
            .clone()
            .cholesky()
            .ok_or_else(|| ModelError::InvalidPrior("prior covariance must be positive definite".into()))?;
        Ok((m0, chol.inverse()))
    }
}

/// Closed-form posterior of a Gaussian linear model.
#[derive(Debug, Clone)]
pub struct NigPosterior {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub shape: f64,
    pub rate: f64,
    cov_chol: DMatrix<f64>,
}

impl NigPosterior {
    pub fn from_data(x: &[Vec<f64>], y: &[f64], prior: &NigPrior) -> Result<Self, ModelError> {
        let n = y.len();
        if n == 0 {
            return Err(ModelError::NoData);
        }
        if x.len() != n {
            return Err(ModelError::Design(format!("{} design rows for {n} responses", x.len())));
        }
        let p = x[0].len();
        if p == 0 || x.iter().any(|r| r.len() != p) {
            return Err(ModelError::Design("design rows must share a positive column count".into()));
        }
        let (m0, v0_inv) = prior.validate(p)?;
        let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
        let yv = DVector::from_column_slice(y);

        let svd = xm.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd.rank(smax * n.max(p) as f64 * f64::EPSILON);
        if rank < p {
            return Err(ModelError::RankDeficient { rank, columns: p });
        }

        let xt = xm.transpose();
        let precision = &v0_inv + &xt * &xm;
        let vn = precision.cholesky().ok_or(ModelError::RankDeficient { rank, columns: p })?.inverse();
        let vn = (&vn + vn.transpose()) * 0.5;
        let mn = &vn * (&v0_inv * &m0 + &xt * &yv);
        let shape = prior.shape + n as f64 / 2.0;
        // Equal to b0 + (y'y + m0'V0^-1 m0 - mn'Vn^-1 mn) / 2, without the cancellation.
        let resid = &yv - &xm * &mn;
        let dm = &mn - &m0;
        let rate = prior.rate + 0.5 * (resid.dot(&resid) + dm.dot(&(&v0_inv * &dm)));
        let cov_chol = vn.clone().cholesky().ok_or(ModelError::RankDeficient { rank, columns: p })?.l();
        Ok(NigPosterior {
            mean: mn.iter().copied().collect(),
            cov: (0..p).map(|i| (0..p).map(|j| vn[(i, j)]).collect()).collect(),
            shape,
            rate,
            cov_chol,
        })
    }

    /// Exact posterior draws `(beta, sigma^2)`; draw `j` uses the RNG stream
    /// `(seed, "nig", j + 1, stream)`.
    pub fn draw(&self, n_draws: usize, seed: u64, stream: u32) -> (Vec<Vec<f64>>, Vec<f64>) {
        let p = self.mean.len();
        let mean = DVector::from_column_slice(&self.mean);
        let mut betas = Vec::with_capacity(n_draws);
        let mut sigma2 = Vec::with_capacity(n_draws);
        for j in 0..n_draws {
            let mut s = RngKey::new(seed, "nig", (j + 1) as u32, stream).stream();
            let s2 = self.rate / gamma_draw(self.shape, &mut s);
            let z = DVector::from_fn(p, |_, _| s.next_normal());
            let beta = &mean + (&self.cov_chol * z) * s2.sqrt();
            betas.push(beta.iter().copied().collect());
            sigma2.push(s2);
        }
        (betas, sigma2)
    }
}

fn check_draw_count(n_draws: usize) -> Result<(), ModelError> {
    if n_draws == 0 {
        Err(ModelError::InvalidBundle("n_draws must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn log_sigma_param(obs: &ObservedTable, sigma2: &[f64]) -> Result<ParamSpec, ModelError> {
    let design = DesignSpec::new(vec![Term::Intercept], obs)?;
    Ok(ParamSpec {
        name: "sigma".into(),
        link: Link::Log,
        coef_names: design.column_names(),
        coef_draws: sigma2.iter().map(|s2| vec![0.5 * s2.ln()]).collect(),
        design,
    })
}

/// Fits a Gaussian linear model for `mu` over `design` with exact NIG
/// posterior draws. `sigma` is stored on the log scale.
pub fn fit_gaussian_conjugate(
    obs: &ObservedTable,
    design: DesignSpec,
    prior: &NigPrior,
    n_draws: usize,
    seed: u64,
) -> Result<ModelBundle, ModelError> {
    check_draw_count(n_draws)?;
    let x = design.design_matrix(obs)?;
    let post = NigPosterior::from_data(&x, &obs.responses(), prior)?;
    let (betas, sigma2) = post.draw(n_draws, seed, 0);
    let mu = ParamSpec {
        name: "mu".into(),
        link: Link::Identity,
        coef_names: design.column_names(),
        coef_draws: betas,
        design,
    };
    let sigma = log_sigma_param(obs, &sigma2)?;
    ModelBundle::new(Family::Gaussian, vec![mu, sigma], obs.clone())
}

/// Independent per-group fits of `y ~ 1 + x`, merged into one bundle with
/// group-intercept and group-slope terms.
///
/// The shared `sigma` of draw `j` pools the group draws as
/// `sigma_j^2 = sum_g w_g sigma_{g,j}^2` with `w_g` proportional to the
/// posterior shape `a_g`, which indexes the precision of each group's
/// variance posterior. This approximates a jointly fitted common scale.
pub fn fit_grouped(
    obs: &ObservedTable,
    group_predictor: &str,
    numeric_predictor: &str,
    prior: &NigPrior,
    n_draws: usize,
    seed: u64,
) -> Result<ModelBundle, ModelError> {
    check_draw_count(n_draws)?;
    let levels = match obs.column(group_predictor).map(|c| &c.kind) {
        Some(ColumnKind::Categorical { levels }) => levels.clone(),
        Some(ColumnKind::Numeric) => {
            return Err(ModelError::Grouping(format!("`{group_predictor}` must be categorical")))
        }
        None => return Err(ModelError::Grouping(format!("unknown predictor `{group_predictor}`"))),
    };
    if levels.len() < 2 {
        return Err(ModelError::Grouping("need ≥2 levels in the group predictor".into()));
    }
    let local = DesignSpec::new(vec![Term::Intercept, Term::Numeric(numeric_predictor.into())], obs)?;
    let group_idx = obs.column_index(group_predictor).expect("column checked above");

    let fits: Vec<(NigPosterior, Vec<Vec<f64>>, Vec<f64>)> = levels
        .par_iter()
        .enumerate()
        .map(|(g, level)| {
            let rows: Vec<usize> = obs
                .rows()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.predictors[group_idx].as_level() == Some(level))
                .map(|(i, _)| i)
                .collect();
            if rows.len() < 2 {
                return Err(ModelError::Grouping(format!(
                    "group `{level}` has {} rows, fewer than its 2 design columns",
                    rows.len()
                )));
            }
            let sub = obs.select_rows(&rows)?;
            let x = local.design_matrix(&sub)?;
            let post = NigPosterior::from_data(&x, &sub.responses(), prior)?;
            let (betas, sigma2) = post.draw(n_draws, seed, (g + 1) as u32);
            Ok((post, betas, sigma2))
        })
        .collect::<Result<_, ModelError>>()?;

    let total_shape: f64 = fits.iter().map(|(p, _, _)| p.shape).sum();
    let k = levels.len();
    let mut coef_draws = Vec::with_capacity(n_draws);
    let mut pooled = Vec::with_capacity(n_draws);
    for j in 0..n_draws {
        let mut row = vec![0.0; 2 * k];
        let mut s2 = 0.0;
        for (g, (post, betas, sigma2)) in fits.iter().enumerate() {
            row[g] = betas[j][0];
            row[k + g] = betas[j][1];
            s2 += post.shape / total_shape * sigma2[j];
        }
        coef_draws.push(row);
        pooled.push(s2);
    }
    let design = DesignSpec::new(
        vec![
            Term::GroupIntercept(group_predictor.into()),
            Term::GroupSlope { group: group_predictor.into(), numeric: numeric_predictor.into() },
        ],
        obs,
    )?;
    let mu =
        ParamSpec { name: "mu".into(), link: Link::Identity, coef_names: design.column_names(), coef_draws, design };
    let sigma = log_sigma_param(obs, &pooled)?;
    ModelBundle::new(Family::Gaussian, vec![mu, sigma], obs.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate_dataset, SimulationConfig};
    use crate::tables::read_observed;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    }

    // Oracle: the textbook NIG update written with explicit inverses.
    fn textbook(x: &[Vec<f64>], y: &[f64], prior: &NigPrior) -> (Vec<f64>, f64) {
        let p = x[0].len();
        let xm = DMatrix::from_fn(y.len(), p, |i, j| x[i][j]);
        let yv = DVector::from_column_slice(y);
        let m0 = DVector::from_column_slice(&prior.mean);
        let v0i = DMatrix::from_fn(p, p, |i, j| prior.cov[i][j]).try_inverse().unwrap();
        let vn_inv = &v0i + xm.transpose() * &xm;
        let vn = vn_inv.clone().try_inverse().unwrap();
        let mn = &vn * (&v0i * &m0 + xm.transpose() * &yv);
        let bn = prior.rate + 0.5 * (yv.dot(&yv) + m0.dot(&(&v0i * &m0)) - mn.dot(&(&vn_inv * &mn)));
        (mn.iter().copied().collect(), bn)
    }

    #[test]
    fn intercept_only_mean() {
        let obs = read_observed("y\n1\n3\n", "y").unwrap();
        let design = DesignSpec::new(vec![Term::Intercept], &obs).unwrap();
        let b = fit_gaussian_conjugate(&obs, design, &NigPrior::diffuse(1), 4000, 3).unwrap();
        let alphas: Vec<f64> = b.param("mu").unwrap().coef_draws.iter().map(|r| r[0]).collect();
        let (m, sd) = mean_sd(&alphas);
        // Closed form: mn = (0 * 1e-6 + 4) / (1e-6 + 2) = 1.999999000...
        let mn = 4.0 / (1e-6 + 2.0);
        assert!((m - mn).abs() < 3.0 * sd / 4000f64.sqrt(), "mean {m}, sd {sd}");
        assert!((m - 2.0).abs() < 3.0 * sd / 4000f64.sqrt());
    }

    #[test]
    fn no_rows_is_an_error() {
        assert!(matches!(NigPosterior::from_data(&[], &[], &NigPrior::diffuse(1)), Err(ModelError::NoData)));
    }

    #[test]
    fn exact_fit_recovers_ols() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64 * 0.3, ((i * 7) % 5) as f64]).collect();
        let beta = [0.5, -1.25, 2.0];
        let y: Vec<f64> = x.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
        let post = NigPosterior::from_data(&x, &y, &NigPrior::diffuse(3)).unwrap();
        for (m, b) in post.mean.iter().zip(&beta) {
            assert!((m - b).abs() < 1e-6, "{m} vs {b}");
        }
    }

    #[test]
    fn matches_textbook_update() {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![1.0, (i as f64).sin()]).collect();
        let y: Vec<f64> = (0..15).map(|i| 1.0 + 0.1 * i as f64 + (i as f64 * 1.3).cos()).collect();
        let prior =
            NigPrior { mean: vec![0.5, -0.5], cov: vec![vec![2.0, 0.3], vec![0.3, 1.0]], shape: 2.0, rate: 1.5 };
        let post = NigPosterior::from_data(&x, &y, &prior).unwrap();
        let (mn, bn) = textbook(&x, &y, &prior);
        for (a, b) in post.mean.iter().zip(&mn) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((post.rate - bn).abs() < 1e-9 * bn);
        assert_eq!(post.shape, 2.0 + 7.5);
    }

    #[test]
    fn rejects_rank_deficiency_and_bad_priors() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        let y = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            NigPosterior::from_data(&x, &y, &NigPrior::diffuse(2)),
            Err(ModelError::RankDeficient { rank: 1, columns: 2 })
        ));
        let x = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let mut prior = NigPrior::diffuse(2);
        prior.rate = 0.0;
        assert!(matches!(NigPosterior::from_data(&x, &y[..2], &prior), Err(ModelError::InvalidPrior(_))));
        let mut prior = NigPrior::diffuse(2);
        prior.cov[0][0] = -1.0;
        assert!(matches!(NigPosterior::from_data(&x, &y[..2], &prior), Err(ModelError::InvalidPrior(_))));
    }

    #[test]
    fn draw_means_converge() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![1.0, i as f64 / 10.0]).collect();
        let y: Vec<f64> = (0..50).map(|i| 2.0 + 0.5 * i as f64 / 10.0 + ((i * 13) % 7) as f64 / 7.0 - 0.5).collect();
        let post = NigPosterior::from_data(&x, &y, &NigPrior::diffuse(2)).unwrap();
        let (betas, _) = post.draw(4000, 17, 0);
        for k in 0..2 {
            let col: Vec<f64> = betas.iter().map(|b| b[k]).collect();
            let (m, sd) = mean_sd(&col);
            assert!((m - post.mean[k]).abs() < 4.0 * sd / 4000f64.sqrt());
        }
    }

    #[test]
    fn grouped_recovers_slopes() {
        let cfg = SimulationConfig {
            n_per_region: 200,
            regions: vec!["a".into(), "b".into()],
            intercepts: vec![0.0, 1.0],
            slopes: vec![2.0, -1.0],
            sigma: 0.5,
            x_range: (0.0, 1.0),
            seed: 21,
        };
        let obs = simulate_dataset(&cfg).unwrap();
        let b = fit_grouped(&obs, "region", "x", &NigPrior::diffuse(2), 1000, 4).unwrap();
        let mu = b.param("mu").unwrap();
        assert_eq!(mu.coef_names, vec!["region[a]", "region[b]", "region[a]:x", "region[b]:x"]);
        let region = obs.column_index("region").unwrap();
        for (g, level) in ["a", "b"].iter().enumerate() {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for r in obs.rows() {
                if r.predictors[region].as_level() == Some(level) {
                    xs.push(r.predictors[obs.column_index("x").unwrap()].as_f64().unwrap());
                    ys.push(r.response);
                }
            }
            let (mx, _) = mean_sd(&xs);
            let (my, _) = mean_sd(&ys);
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            let ols = sxy / sxx;
            let col: Vec<f64> = mu.coef_draws.iter().map(|r| r[2 + g]).collect();
            let (m, sd) = mean_sd(&col);
            assert!((m - ols).abs() < 4.0 * sd / 1000f64.sqrt(), "slope {m} vs ols {ols}");
            // OLS itself sits within 4 standard errors of the truth.
            let truth = cfg.slopes[g];
            assert!((ols - truth).abs() < 4.0 * 0.5 / sxx.sqrt(), "ols {ols} vs {truth}");
        }
    }

    #[test]
    fn grouped_identical_groups_overlap() {
        let cfg = SimulationConfig {
            n_per_region: 100,
            regions: vec!["a".into(), "b".into()],
            intercepts: vec![1.0, 1.0],
            slopes: vec![1.5, 1.5],
            sigma: 0.3,
            x_range: (0.0, 1.0),
            seed: 5,
        };
        let obs = simulate_dataset(&cfg).unwrap();
        let b = fit_grouped(&obs, "region", "x", &NigPrior::diffuse(2), 2000, 8).unwrap();
        let mu = b.param("mu").unwrap();
        let (ma, sa) = mean_sd(&mu.coef_draws.iter().map(|r| r[2]).collect::<Vec<_>>());
        let (mb, sb) = mean_sd(&mu.coef_draws.iter().map(|r| r[3]).collect::<Vec<_>>());
        let pooled = ((sa * sa + sb * sb) / 2.0).sqrt();
        assert!((ma - mb).abs() < 2.0 * pooled, "{ma} vs {mb}, pooled sd {pooled}");
    }

    #[test]
    fn grouped_errors() {
        let one = read_observed("y,x,g\n1,1,a\n2,2,a\n3,3,a\n", "y").unwrap();
        let err = fit_grouped(&one, "g", "x", &NigPrior::diffuse(2), 10, 1).unwrap_err();
        assert!(err.to_string().contains("need ≥2 levels"), "{err}");
        let thin = read_observed("y,x,g\n1,1,a\n2,2,a\n3,3,b\n", "y").unwrap();
        assert!(matches!(fit_grouped(&thin, "g", "x", &NigPrior::diffuse(2), 10, 1), Err(ModelError::Grouping(_))));
    }
}
