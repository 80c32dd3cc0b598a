//! Response-distribution sampling fed by the counter-based generator.

use statrs::function::gamma::ln_gamma;

use super::{Family, ModelError};
use crate::sampling::rng::{RngKey, RngStream};

/// Draws one response value. `params` are in the family's canonical order
/// (see [`Family::params`]).
pub fn sample_response(family: Family, params: &[f64], key: RngKey) -> Result<f64, ModelError> {
    let names = family.params();
    if params.len() != names.len() {
        return Err(ModelError::InvalidBundle(format!(
            "{} family takes {} parameters, got {}",
            family.name(),
            names.len(),
            params.len()
        )));
    }
    for (name, &v) in names.iter().zip(params) {
        family.check_param(name, v)?;
    }
    let mut s = key.stream();
    let y = match family {
        Family::Gaussian => {
            let (mu, sigma) = (params[0], params[1]);
            if sigma == 0.0 {
                mu
            } else {
                mu + sigma * s.next_normal()
            }
        }
        Family::Bernoulli => {
            if s.next_uniform() < params[0] {
                1.0
            } else {
                0.0
            }
        }
        Family::Poisson => poisson_draw(params[0], &mut s),
        Family::Beta => {
            let (mu, phi) = (params[0], params[1]);
            let a = gamma_draw(mu * phi, &mut s);
            let b = gamma_draw((1.0 - mu) * phi, &mut s);
            if a + b == 0.0 {
                // Both shapes tiny enough to underflow; fall back on the mean.
                mu
            } else {
                a / (a + b)
            }
        }
    };
    Ok(y)
}

/// Gamma(shape, 1) by Marsaglia and Tsang; shapes below 1 use the
/// `Gamma(shape + 1) * U^(1/shape)` boost.
pub fn gamma_draw(shape: f64, s: &mut RngStream) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let g = gamma_draw(shape + 1.0, s);
        return g * s.next_open_uniform().powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = s.next_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = s.next_open_uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Poisson draw: sequential inversion for `lambda <= 30`, otherwise
/// Hormann's transformed rejection with squeeze (PTRS).
pub fn poisson_draw(lambda: f64, s: &mut RngStream) -> f64 {
    if lambda <= 30.0 {
        let u = s.next_uniform();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u >= cdf {
            k += 1;
            p *= lambda / k as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        return k as f64;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = s.next_uniform() - 0.5;
        let v = s.next_uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -lambda + k * loglam - ln_gamma(k + 1.0) {
            return k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(family: Family, params: &[f64], n: u32, seed: u64) -> Vec<f64> {
        (0..n).map(|i| sample_response(family, params, RngKey::new(seed, "test", i, 0)).unwrap()).collect()
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn beta_one_one_is_uniform_by_ks() {
        let mut v = draws(Family::Beta, &[0.5, 2.0], 10_000, 11);
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let d =
            v.iter().enumerate().map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)).fold(0.0, f64::max);
        // asymptotic KS critical value at alpha = 0.01
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn degenerate_gaussian() {
        assert_eq!(sample_response(Family::Gaussian, &[0.0, 0.0], RngKey::new(1, "x", 1, 1)).unwrap(), 0.0);
        assert_eq!(sample_response(Family::Gaussian, &[2.5, 0.0], RngKey::new(1, "x", 1, 1)).unwrap(), 2.5);
    }

    #[test]
    fn poisson_mean_small_lambda() {
        let (m, v) = mean_var(&draws(Family::Poisson, &[4.0], 100_000, 5));
        assert!((m - 4.0).abs() < 3.0 * (4.0f64 / 1e5).sqrt(), "mean {m}");
        assert!((v - 4.0).abs() < 0.1, "var {v}");
    }

    #[test]
    fn poisson_moments_large_lambda() {
        let (m, v) = mean_var(&draws(Family::Poisson, &[80.0], 100_000, 6));
        assert!((m - 80.0).abs() < 4.0 * (80.0f64 / 1e5).sqrt(), "mean {m}");
        assert!((v - 80.0).abs() < 2.0, "var {v}");
    }

    #[test]
    fn gaussian_moments() {
        let (m, v) = mean_var(&draws(Family::Gaussian, &[1.5, 2.0], 100_000, 7));
        assert!((m - 1.5).abs() < 4.0 * 2.0 / (1e5f64).sqrt(), "mean {m}");
        assert!((v - 4.0).abs() < 0.08, "var {v}");
    }

    #[test]
    fn gamma_moments() {
        for &shape in &[0.3, 1.0, 4.5] {
            let mut s = RngKey::new(8, "gamma", 0, 0).stream();
            let v: Vec<f64> = (0..50_000).map(|_| gamma_draw(shape, &mut s)).collect();
            let (m, var) = mean_var(&v);
            assert!((m - shape).abs() < 5.0 * (shape / 5e4f64).sqrt(), "shape {shape} mean {m}");
            assert!((var - shape).abs() < 0.1 * shape.max(1.0), "shape {shape} var {var}");
        }
    }

    #[test]
    fn bernoulli_rate() {
        let (m, _) = mean_var(&draws(Family::Bernoulli, &[0.3], 50_000, 9));
        assert!((m - 0.3).abs() < 4.0 * (0.21f64 / 5e4).sqrt());
    }

    #[test]
    fn out_of_domain() {
        let k = RngKey::new(1, "x", 1, 1);
        assert!(matches!(sample_response(Family::Beta, &[1.5, 2.0], k), Err(ModelError::OutOfDomain { .. })));
        assert!(sample_response(Family::Poisson, &[-1.0], k).is_err());
        assert!(sample_response(Family::Gaussian, &[0.0], k).is_err());
    }
}
