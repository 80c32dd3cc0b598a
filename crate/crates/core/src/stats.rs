//! Distributional statistics behind the marks.
//!
//! Quantiles use type-7 interpolation and normal plotting positions use
//! `(i - 0.5) / n` throughout.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("statistic of an empty sample")]
    Empty,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("interval width {0} outside (0, 1)")]
    Width(f64),
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("mark requires ≥2 values, got {0}")]
    TooFew(usize),
    #[error("need at least one dot")]
    NoDots,
}

pub const DEFAULT_WIDTHS: [f64; 3] = [0.5, 0.8, 0.95];
pub const KDE_GRID_POINTS: usize = 512;
pub const DEFAULT_DOTS: usize = 100;

fn checked_sorted(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Type-7 quantile of an ascending, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    }
}

pub fn quantiles(values: &[f64], probs: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::Probability(p));
    }
    let sorted = checked_sorted(values)?;
    Ok(probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect())
}

pub fn mean(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    Ok(quantile_sorted(&checked_sorted(values)?, 0.5))
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew(values.len()));
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub width: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Median plus central intervals, narrowest first.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub point: f64,
    pub intervals: Vec<Interval>,
}

pub fn interval_set(values: &[f64], widths: &[f64]) -> Result<IntervalSet, StatsError> {
    if let Some(&w) = widths.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
        return Err(StatsError::Width(w));
    }
    let sorted = checked_sorted(values)?;
    let mut ws = widths.to_vec();
    ws.sort_by(f64::total_cmp);
    let intervals = ws
        .into_iter()
        .map(|w| Interval {
            width: w,
            lo: quantile_sorted(&sorted, (1.0 - w) / 2.0),
            hi: quantile_sorted(&sorted, (1.0 + w) / 2.0),
        })
        .collect();
    Ok(IntervalSet { point: quantile_sorted(&sorted, 0.5), intervals })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid.windows(2).zip(self.density.windows(2)).map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1])).sum()
    }
}

/// `0.9 min(sd, IQR / 1.34) n^(-1/5)`, or 1 when that is zero.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew(values.len()));
    }
    let sorted = checked_sorted(values)?;
    let sd = sample_sd(&sorted)?;
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let bw = 0.9 * sd.min(iqr / 1.34) * (sorted.len() as f64).powf(-0.2);
    Ok(if bw > 0.0 { bw } else { 1.0 })
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gaussian-kernel density on 512 points spanning `[min - 3bw, max + 3bw]`.
pub fn kde(values: &[f64], bandwidth: Bandwidth) -> Result<DensityCurve, StatsError> {
    let sorted = checked_sorted(values)?;
    let bw = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(&sorted)?,
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => b,
        Bandwidth::Fixed(b) => return Err(StatsError::Bandwidth(b)),
    };
    let lo = sorted[0] - 3.0 * bw;
    let hi = sorted[sorted.len() - 1] + 3.0 * bw;
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID_POINTS).map(|k| lo + step * k as f64).collect();
    let density = grid.iter().map(|&g| kde_at(&sorted, bw, g)).collect();
    Ok(DensityCurve { grid, density, bandwidth: bw })
}

/// `(1 / (n bw)) sum_i phi((x - x_i) / bw)`.
pub fn kde_at(values: &[f64], bw: f64, x: f64) -> f64 {
    let s: f64 = values.iter().map(|&v| normal_pdf((x - v) / bw)).sum();
    s / (values.len() as f64 * bw)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Bins with Freedman-Diaconis width `2 IQR n^(-1/3)`, falling back to
/// Sturges' `ceil(log2 n) + 1` bins when the IQR is zero. Bins are
/// left-closed except the last, which also holds the maximum.
pub fn histogram(values: &[f64]) -> Result<Vec<Bin>, StatsError> {
    let sorted = checked_sorted(values)?;
    let n = sorted.len();
    let (min, max) = (sorted[0], sorted[n - 1]);
    if max == min {
        return Ok(vec![Bin { lo: min, hi: max, count: n }]);
    }
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let (k, width) = if iqr > 0.0 {
        let h = 2.0 * iqr * (n as f64).powf(-1.0 / 3.0);
        let k = (((max - min) / h).ceil() as usize).max(1);
        (k, h)
    } else {
        let k = (n as f64).log2().ceil() as usize + 1;
        (k, (max - min) / k as f64)
    };
    let mut bins: Vec<Bin> =
        (0..k).map(|i| Bin { lo: min + width * i as f64, hi: min + width * (i + 1) as f64, count: 0 }).collect();
    for &v in &sorted {
        let idx = (((v - min) / width).floor() as usize).min(k - 1);
        bins[idx].count += 1;
    }
    Ok(bins)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dot {
    pub x: f64,
    /// 0-based bin.
    pub bin: usize,
    /// 1-based position in its bin's stack, bottom-up.
    pub stack: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotplotBins {
    pub dots: Vec<Dot>,
    pub bin_width: f64,
    pub heights: Vec<usize>,
}

/// Quantile dotplot: `n_dots` dots at quantiles `(i - 0.5) / n_dots`,
/// stacked in `ceil(sqrt(n_dots))` equal-width bins.
pub fn quantile_dotplot(values: &[f64], n_dots: usize) -> Result<DotplotBins, StatsError> {
    if n_dots == 0 {
        return Err(StatsError::NoDots);
    }
    let sorted = checked_sorted(values)?;
    let xs: Vec<f64> = (1..=n_dots).map(|i| quantile_sorted(&sorted, (i as f64 - 0.5) / n_dots as f64)).collect();
    let n_bins = (n_dots as f64).sqrt().ceil() as usize;
    let (min, max) = (xs[0], xs[n_dots - 1]);
    let bin_width = (max - min) / n_bins as f64;
    let mut heights = vec![0usize; n_bins];
    let dots = xs
        .into_iter()
        .map(|x| {
            let bin = if bin_width > 0.0 { (((x - min) / bin_width).floor() as usize).min(n_bins - 1) } else { 0 };
            heights[bin] += 1;
            Dot { x, bin, stack: heights[bin] }
        })
        .collect();
    Ok(DotplotBins { dots, bin_width, heights })
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), accurate to about
/// 1e-16 relative.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.509_080_928_730_122_6e3 * r + 3.343_057_558_358_812_8e4) * r + 6.726_577_092_700_87e4) * r
                + 4.592_195_393_154_987e4)
                * r
                + 1.373_169_376_550_946e4)
                * r
                + 1.971_590_950_306_551_3e3)
                * r
                + 1.331_416_678_917_843_8e2)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r + 3.930_789_580_009_271e4) * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751e3)
                * r
                + 6.871_870_074_920_579e2)
                * r
                + 4.231_333_070_160_091e1)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r + 2.417_807_251_774_506e-1) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 1.519_866_656_361_645_7e-2)
                * r
                + 1.481_039_764_274_800_8e-1)
                * r
                + 6.897_673_349_851e-1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_758_8)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 1.242_660_947_388_078_4e-3) * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 1.487_536_129_085_061_5e-2)
                * r
                + 1.369_298_809_227_358e-1)
                * r
                + 5.998_322_065_558_88e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// `(theoretical, empirical)` pairs against the standard normal.
pub fn qq_pairs(sample: &[f64]) -> Result<Vec<(f64, f64)>, StatsError> {
    let sorted = checked_sorted(sample)?;
    let n = sorted.len() as f64;
    Ok(sorted.into_iter().enumerate().map(|(i, y)| (normal_quantile((i as f64 + 0.5) / n), y)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WormPoint {
    pub theoretical: f64,
    pub deviation: f64,
    /// Pointwise 95% half-width at this plotting position.
    pub band: f64,
}

/// Half-width `1.96 sqrt(p (1 - p) / n) / phi(z_p)` of the pointwise 95%
/// band for a sample quantile at plotting position `p`.
pub fn worm_band(p: f64, n: usize) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt() / normal_pdf(normal_quantile(p))
}

/// Detrended Q-Q plot. `pairs` must come from [`qq_pairs`] (ascending).
pub fn worm(pairs: &[(f64, f64)]) -> Vec<WormPoint> {
    let n = pairs.len();
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(t, e))| WormPoint {
            theoretical: t,
            deviation: e - t,
            band: worm_band((i as f64 + 0.5) / n as f64, n),
        })
        .collect()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let a = checked_sorted(a)?;
    let b = checked_sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}
