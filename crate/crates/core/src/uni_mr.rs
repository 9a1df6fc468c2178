//! Univariable two-sample MR estimators: Wald ratio, inverse-variance
//! weighted (IVW), MR-Egger and weighted median.
//!
//! All estimators take harmonized pairs and ignore pairs dropped during
//! harmonization.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::{normal_p, sample_sd};
use crate::sumstats::HarmonizedPair;

/// Default number of parametric bootstrap draws for the weighted median SE.
pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MrMethod {
    WaldRatio,
    Ivw,
    EggerSlope,
    EggerIntercept,
    WeightedMedian,
}

impl MrMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MrMethod::WaldRatio => "wald_ratio",
            MrMethod::Ivw => "ivw",
            MrMethod::EggerSlope => "egger_slope",
            MrMethod::EggerIntercept => "egger_intercept",
            MrMethod::WeightedMedian => "weighted_median",
        }
    }
}

impl fmt::Display for MrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Selectable estimator, as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodChoice {
    WaldRatio,
    Ivw,
    Egger,
    WeightedMedian,
}

impl MethodChoice {
    pub const ALL: [MethodChoice; 4] = [
        MethodChoice::WaldRatio,
        MethodChoice::Ivw,
        MethodChoice::Egger,
        MethodChoice::WeightedMedian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodChoice::WaldRatio => "mr_wald_ratio",
            MethodChoice::Ivw => "mr_ivw",
            MethodChoice::Egger => "mr_egger_regression",
            MethodChoice::WeightedMedian => "mr_weighted_median",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            MethodChoice::WaldRatio => "Wald ratio (exactly one instrument)",
            MethodChoice::Ivw => "Inverse-variance weighted, fixed effect",
            MethodChoice::Egger => "MR-Egger regression (>= 3 instruments)",
            MethodChoice::WeightedMedian => "Weighted median (>= 3 instruments)",
        }
    }

    /// Minimum instrument count, and for the Wald ratio also the maximum.
    pub fn min_instruments(self) -> usize {
        match self {
            MethodChoice::WaldRatio | MethodChoice::Ivw => 1,
            MethodChoice::Egger | MethodChoice::WeightedMedian => 3,
        }
    }
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_prefix("mr_").unwrap_or(&key);
        match key {
            "wald_ratio" | "wald" => Ok(MethodChoice::WaldRatio),
            "ivw" => Ok(MethodChoice::Ivw),
            "egger_regression" | "egger" => Ok(MethodChoice::Egger),
            "weighted_median" | "median" => Ok(MethodChoice::WeightedMedian),
            _ => Err(Error::param("method", format!("unknown MR method {s:?}"))),
        }
    }
}

/// A causal-effect estimate with a two-sided normal p-value.
#[derive(Clone, Debug, PartialEq)]
pub struct MrEstimate {
    pub method: MrMethod,
    pub estimate: f64,
    pub se: f64,
    pub pvalue: f64,
    pub n_snps: usize,
}

impl MrEstimate {
    pub fn new(method: MrMethod, estimate: f64, se: f64, n_snps: usize) -> Self {
        MrEstimate {
            method,
            estimate,
            se,
            pvalue: normal_p(estimate, se),
            n_snps,
        }
    }

    pub fn z(&self) -> f64 {
        self.estimate / self.se
    }
}

/// Standard-error approximation for the Wald ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WaldSe {
    /// `|se_Y / beta_X|`, ignoring exposure-side error.
    #[default]
    FirstOrder,
    /// Adds the `beta_Y^2 se_X^2 / beta_X^4` term.
    SecondOrder,
}

/// IVW variance model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IvwModel {
    #[default]
    FixedEffect,
    /// Fixed-effect SE inflated by `sqrt(max(1, Q / (n - 1)))`.
    MultiplicativeRandom,
}

fn usable(pairs: &[HarmonizedPair]) -> Result<Vec<&HarmonizedPair>> {
    let out: Vec<_> = pairs.iter().filter(|p| p.is_usable()).collect();
    for (i, p) in out.iter().enumerate() {
        if !(p.se_outcome > 0.0 && p.se_outcome.is_finite()) {
            return Err(Error::InvalidValue {
                row: i + 1,
                field: "se_outcome".into(),
                reason: format!("{} is not > 0 for {}", p.se_outcome, p.rsid),
            });
        }
    }
    Ok(out)
}

/// Wald ratio `beta_Y / beta_X` with the first-order SE.
pub fn wald_ratio(pair: &HarmonizedPair) -> Result<MrEstimate> {
    wald_ratio_with(pair, WaldSe::FirstOrder)
}

pub fn wald_ratio_with(pair: &HarmonizedPair, se_kind: WaldSe) -> Result<MrEstimate> {
    if pair.beta_exposure == 0.0 {
        return Err(Error::ZeroExposureEffect {
            rsid: pair.rsid.clone(),
        });
    }
    let bx = pair.beta_exposure;
    let estimate = pair.beta_outcome / bx;
    let se = match se_kind {
        WaldSe::FirstOrder => (pair.se_outcome / bx).abs(),
        WaldSe::SecondOrder => (pair.se_outcome.powi(2) / bx.powi(2)
            + pair.beta_outcome.powi(2) * pair.se_exposure.powi(2) / bx.powi(4))
        .sqrt(),
    };
    Ok(MrEstimate::new(MrMethod::WaldRatio, estimate, se, 1))
}

/// Fixed-effect IVW: weighted regression of `beta_Y` on `beta_X` through the
/// origin with weights `1 / se_Y^2`.
pub fn ivw(pairs: &[HarmonizedPair]) -> Result<MrEstimate> {
    ivw_with(pairs, IvwModel::FixedEffect)
}

pub fn ivw_with(pairs: &[HarmonizedPair], model: IvwModel) -> Result<MrEstimate> {
    let pairs = usable(pairs)?;
    match pairs.as_slice() {
        [] => return Err(Error::EmptyInstrumentSet),
        // The one-term sums collapse to the ratio; route through it so the
        // two agree bit for bit.
        [only] => {
            let mut est = wald_ratio(only)?;
            est.method = MrMethod::Ivw;
            return Ok(est);
        }
        _ => {}
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in &pairs {
        let w = 1.0 / (p.se_outcome * p.se_outcome);
        sxy += w * p.beta_exposure * p.beta_outcome;
        sxx += w * p.beta_exposure * p.beta_exposure;
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateDesign);
    }
    let estimate = sxy / sxx;
    let mut se = sxx.sqrt().recip();
    if model == IvwModel::MultiplicativeRandom {
        let q: f64 = pairs
            .iter()
            .map(|p| ((p.beta_outcome - estimate * p.beta_exposure) / p.se_outcome).powi(2))
            .sum();
        let phi = q / (pairs.len() - 1) as f64;
        se *= phi.max(1.0).sqrt();
    }
    Ok(MrEstimate::new(MrMethod::Ivw, estimate, se, pairs.len()))
}

/// MR-Egger fit: slope is the causal estimate, intercept the average
/// directional pleiotropy.
#[derive(Clone, Debug, PartialEq)]
pub struct EggerFit {
    pub slope: MrEstimate,
    pub intercept: MrEstimate,
    /// Factor applied to the unscaled SEs: `max(1, residual SD)`.
    pub residual_scale: f64,
}

/// MR-Egger regression.
///
/// Pairs are oriented so `beta_X >= 0`, then `beta_Y` is regressed on
/// `beta_X` with an intercept and weights `1 / se_Y^2`. SEs use the
/// weighted-regression covariance times `max(1, sigma)`.
pub fn egger(pairs: &[HarmonizedPair]) -> Result<EggerFit> {
    let pairs = usable(pairs)?;
    let n = pairs.len();
    if n < 3 {
        return Err(Error::TooFewInstruments {
            method: "MR-Egger",
            required: 3,
            found: n,
        });
    }
    let pts: Vec<(f64, f64, f64)> = pairs
        .iter()
        .map(|p| {
            let s = if p.beta_exposure < 0.0 { -1.0 } else { 1.0 };
            (
                s * p.beta_exposure,
                s * p.beta_outcome,
                1.0 / (p.se_outcome * p.se_outcome),
            )
        })
        .collect();
    if pts.iter().all(|&(x, _, _)| x == pts[0].0) {
        return Err(Error::DegenerateDesign);
    }
    let sw: f64 = pts.iter().map(|&(_, _, w)| w).sum();
    let x_bar = pts.iter().map(|&(x, _, w)| w * x).sum::<f64>() / sw;
    let y_bar = pts.iter().map(|&(_, y, w)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y, w) in &pts {
        sxx += w * (x - x_bar) * (x - x_bar);
        sxy += w * (x - x_bar) * (y - y_bar);
    }
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::DegenerateDesign);
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let rss: f64 = pts
        .iter()
        .map(|&(x, y, w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let sigma = (rss / (n - 2) as f64).sqrt();
    let scale = sigma.max(1.0);
    let se_slope = scale / sxx.sqrt();
    let se_intercept = scale * (1.0 / sw + x_bar * x_bar / sxx).sqrt();
    Ok(EggerFit {
        slope: MrEstimate::new(MrMethod::EggerSlope, slope, se_slope, n),
        intercept: MrEstimate::new(MrMethod::EggerIntercept, intercept, se_intercept, n),
        residual_scale: scale,
    })
}

/// The 50% point of the weighted empirical distribution of `ratios`.
///
/// Ratios are sorted; each sits at percentile `cumsum(w) - w/2` of the
/// normalized weights and the estimate interpolates linearly at 0.5.
pub fn weighted_median_point(ratios: &[f64], weights: &[f64]) -> Result<f64> {
    assert_eq!(ratios.len(), weights.len());
    let total: f64 = weights.iter().sum();
    if ratios.is_empty() || total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateDesign);
    }
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        ratios[a]
            .total_cmp(&ratios[b])
            .then(weights[a].total_cmp(&weights[b]))
    });
    let theta: Vec<f64> = order.iter().map(|&i| ratios[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| weights[i] / total).collect();
    let mut cum = 0.0;
    let percentile: Vec<f64> = w
        .iter()
        .map(|&wj| {
            cum += wj;
            cum - wj / 2.0
        })
        .collect();
    let Some(below) = percentile.iter().rposition(|&p| p < 0.5) else {
        return Ok(theta[0]);
    };
    if below + 1 == theta.len() {
        return Ok(theta[below]);
    }
    let (p0, p1) = (percentile[below], percentile[below + 1]);
    Ok(theta[below] + (theta[below + 1] - theta[below]) * (0.5 - p0) / (p1 - p0))
}

/// Weighted median estimator with a parametric-bootstrap SE.
///
/// Ratio weights are `beta_X^2 / se_Y^2`. Each bootstrap draw resamples
/// `beta_X` and `beta_Y` from their normal sampling distributions and keeps
/// the original weights.
pub fn weighted_median<R: Rng + ?Sized>(
    pairs: &[HarmonizedPair],
    n_boot: usize,
    rng: &mut R,
) -> Result<MrEstimate> {
    let pairs = usable(pairs)?;
    let n = pairs.len();
    if n < 3 {
        return Err(Error::TooFewInstruments {
            method: "weighted median",
            required: 3,
            found: n,
        });
    }
    if n_boot < 2 {
        return Err(Error::param("n_boot", "need at least 2 bootstrap draws"));
    }
    if let Some(p) = pairs.iter().find(|p| p.beta_exposure == 0.0) {
        return Err(Error::ZeroExposureEffect {
            rsid: p.rsid.clone(),
        });
    }
    let ratios: Vec<f64> = pairs
        .iter()
        .map(|p| p.beta_outcome / p.beta_exposure)
        .collect();
    let weights: Vec<f64> = pairs
        .iter()
        .map(|p| (p.beta_exposure / p.se_outcome).powi(2))
        .collect();
    let estimate = weighted_median_point(&ratios, &weights)?;

    let mut draws = Vec::with_capacity(n_boot);
    let mut boot_ratios = vec![0.0; n];
    for _ in 0..n_boot {
        for (r, p) in boot_ratios.iter_mut().zip(&pairs) {
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            let bx = p.beta_exposure + p.se_exposure * zx;
            let by = p.beta_outcome + p.se_outcome * zy;
            *r = by / bx;
        }
        draws.push(weighted_median_point(&boot_ratios, &weights)?);
    }
    let se = sample_sd(&draws);
    Ok(MrEstimate::new(MrMethod::WeightedMedian, estimate, se, n))
}

/// IVW for two or more instruments, Wald ratio for exactly one.
pub fn primary_estimate(pairs: &[HarmonizedPair]) -> Result<MrEstimate> {
    let usable_count = pairs.iter().filter(|p| p.is_usable()).count();
    match usable_count {
        0 => Err(Error::EmptyInstrumentSet),
        1 => wald_ratio(pairs.iter().find(|p| p.is_usable()).expect("one usable")),
        _ => ivw(pairs),
    }
}
