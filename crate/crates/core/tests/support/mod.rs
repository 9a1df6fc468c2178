//! Reference implementations used as test oracles. Each one is written
//! directly from the defining formula, without sharing code with the
//! library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xmr_core::sumstats::{AssocTable, HarmonizedPair, Locus, SnpRecord, TraitKind};
use xmr_core::{ClumpParams, LdMatrix, LdScale};

pub const SAMPLE_MATRIX: &str = "GENES\tENSG00000002919\tENSG00000159202\tBETA_GWAS
rs221602\t-2.495E-02\t0.000E+00\t3.247E-03
rs1317850\t1.481E-01\t0.000E+00\t-1.617E-04
rs1468270\t-3.096E-01\t0.000E+00\t8.533E-03
rs7350950\t0.000E+00\t-4.463E-02\t6.919E-03
rs9897918\t-6.519E-02\t0.000E+00\t-1.193E-05
";

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Weighted least squares by the normal equations `(X'WX) b = X'Wy`.
/// Returns coefficients and `(X'WX)^-1`.
pub fn wls(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let wm = DMatrix::from_diagonal(w);
    let xtwx = x.transpose() * &wm * x;
    let inv = xtwx.try_inverse().expect("invertible normal equations");
    let coef = &inv * x.transpose() * &wm * y;
    (coef, inv)
}

/// IVW as a no-intercept WLS of outcome on exposure, weights `1/se_Y^2`.
pub fn ivw_oracle(pairs: &[HarmonizedPair]) -> (f64, f64) {
    let n = pairs.len();
    let x = DMatrix::from_fn(n, 1, |i, _| pairs[i].beta_exposure);
    let y = DVector::from_fn(n, |i, _| pairs[i].beta_outcome);
    let w = DVector::from_fn(n, |i, _| pairs[i].se_outcome.powi(-2));
    let (coef, inv) = wls(&x, &y, &w);
    (coef[0], inv[(0, 0)].sqrt())
}

/// Egger as WLS with intercept on exposure-positive orientation; SEs scaled
/// by the residual standard error when it exceeds one.
/// Returns `(slope, slope_se, intercept, intercept_se)`.
pub fn egger_oracle(pairs: &[HarmonizedPair]) -> (f64, f64, f64, f64) {
    let n = pairs.len();
    let sign: Vec<f64> = pairs.iter().map(|p| p.beta_exposure.signum()).collect();
    let x = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            1.0
        } else {
            sign[i] * pairs[i].beta_exposure
        }
    });
    let y = DVector::from_fn(n, |i, _| sign[i] * pairs[i].beta_outcome);
    let w = DVector::from_fn(n, |i, _| pairs[i].se_outcome.powi(-2));
    let (coef, inv) = wls(&x, &y, &w);
    let resid = &y - &x * &coef;
    let rss: f64 = (0..n).map(|i| w[i] * resid[i] * resid[i]).sum();
    let sigma = (rss / (n as f64 - 2.0)).sqrt().max(1.0);
    (
        coef[1],
        sigma * inv[(1, 1)].sqrt(),
        coef[0],
        sigma * inv[(0, 0)].sqrt(),
    )
}

/// Weighted median by walking the standardized cumulative weights until the
/// segment that straddles one half.
pub fn weighted_median_oracle(pairs: &[HarmonizedPair]) -> f64 {
    let mut pts: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| {
            (
                p.beta_outcome / p.beta_exposure,
                (p.beta_exposure / p.se_outcome).powi(2),
            )
        })
        .collect();
    pts.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(theta, w) in &pts {
        let pct = acc + 0.5 * w / total;
        acc += w / total;
        if pct >= 0.5 {
            return match prev {
                None => theta,
                Some((t0, p0)) => t0 + (theta - t0) * (0.5 - p0) / (pct - p0),
            };
        }
        prev = Some((theta, pct));
    }
    pts.last().unwrap().0
}

/// Random harmonized pairs with well-separated, non-zero exposure effects.
pub fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<HarmonizedPair> {
    (0..n)
        .map(|i| {
            let mag: f64 = rng.random_range(0.05..0.5);
            let bx = if rng.random_bool(0.5) { mag } else { -mag };
            let theta: f64 = rng.random_range(-1.0..1.0);
            let sy: f64 = rng.random_range(0.01..0.1);
            let noise: f64 = rng.sample(StandardNormal);
            HarmonizedPair::new(
                format!("rs{i}"),
                bx,
                rng.random_range(0.005..0.05),
                theta * bx + sy * noise * 2.0,
                sy,
            )
        })
        .collect()
}

/// Clumping by literal reading of the greedy rule, scanning every SNP for
/// every index.
pub fn clump_oracle(
    assoc: &AssocTable,
    ld: &LdMatrix,
    params: &ClumpParams,
) -> Vec<(String, Vec<String>)> {
    let member_p = params.p1.max(params.p2);
    let window = (params.kb * 1000.0).round() as u64;
    let mut recs: Vec<&SnpRecord> = assoc.records().iter().collect();
    recs.sort_by(|a, b| {
        a.pvalue
            .partial_cmp(&b.pvalue)
            .unwrap()
            .then(a.pos().cmp(&b.pos()))
            .then(a.rsid.cmp(&b.rsid))
    });
    let mut taken = vec![false; recs.len()];
    let mut out = Vec::new();
    for i in 0..recs.len() {
        if taken[i] || recs[i].pvalue > params.p1 {
            continue;
        }
        taken[i] = true;
        let a = recs[i];
        let ia = ld.index_of(&a.rsid).unwrap();
        let mut members = Vec::new();
        for j in 0..recs.len() {
            if taken[j] {
                continue;
            }
            let b = recs[j];
            let ib = ld.index_of(&b.rsid).unwrap();
            let r = ld.values()[(ia, ib)];
            let r2 = match ld.scale() {
                LdScale::SignedR => r * r,
                LdScale::RSquared => r,
            };
            if b.pvalue <= member_p
                && a.chrom() == b.chrom()
                && a.pos().unwrap().abs_diff(b.pos().unwrap()) <= window
                && r2 >= params.r2
            {
                taken[j] = true;
                members.push(b.rsid.clone());
            }
        }
        out.push((a.rsid.clone(), members));
    }
    out
}

/// A random clumping instance: SNPs on three chromosomes, LD decaying with
/// distance, p-values with deliberate ties.
pub fn random_clump_instance(seed: u64, n: usize) -> (AssocTable, LdMatrix, ClumpParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut recs = Vec::with_capacity(n);
    for i in 0..n {
        let chrom = ["1", "2", "7"][rng.random_range(0..3)];
        let pos = rng.random_range(1..3_000_000u64);
        let p = match rng.random_range(0..4) {
            0 => 10f64.powi(-rng.random_range(5..20)),
            1 => 10f64.powf(-rng.random_range(0.0..12.0)),
            2 => 1e-9,
            _ => rng.random_range(0.0..1.0),
        };
        let p = p.max(1e-300);
        recs.push(
            SnpRecord::new(
                format!("rs{i}"),
                Some(Locus::new(chrom, pos).unwrap()),
                "A",
                "G",
                0.1,
                0.01,
                p,
            )
            .unwrap(),
        );
    }
    let mut r = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&recs[i], &recs[j]);
            let v = if a.chrom() == b.chrom() {
                let d = a.pos().unwrap().abs_diff(b.pos().unwrap()) as f64;
                let decay = (-d / 300_000.0).exp();
                decay * rng.random_range(-1.0..1.0)
            } else {
                0.0
            };
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    let snps = recs.iter().map(|r| r.rsid.clone()).collect();
    let ld = LdMatrix::new(snps, r, LdScale::SignedR).unwrap();
    let params = ClumpParams {
        p1: [5e-8, 1e-4, 0.05][rng.random_range(0..3)],
        p2: [5e-8, 1e-3, 0.5][rng.random_range(0..3)],
        r2: [0.01, 0.1, 0.5][rng.random_range(0..3)],
        kb: [50.0, 250.0, 1000.0][rng.random_range(0..3)],
    };
    let table = AssocTable::new("trait", TraitKind::Exposure, recs).unwrap();
    (table, ld, params)
}

/// Checks clump output invariants; returns a description of the first
/// violation.
pub fn clump_invariants(
    assoc: &AssocTable,
    ld: &LdMatrix,
    params: &ClumpParams,
    clumps: &[xmr_core::Clump],
) -> Result<(), String> {
    let window = (params.kb * 1000.0).round() as u64;
    let r2 = |a: &str, b: &str| ld.r2(ld.index_of(a).unwrap(), ld.index_of(b).unwrap());
    let near = |a: &SnpRecord, b: &SnpRecord| {
        a.chrom() == b.chrom() && a.pos().unwrap().abs_diff(b.pos().unwrap()) <= window
    };
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for c in clumps {
        for s in std::iter::once(&c.index).chain(&c.members) {
            *seen.entry(s.as_str()).or_default() += 1;
        }
    }
    if let Some((s, _)) = seen.iter().find(|(_, &n)| n > 1) {
        return Err(format!("{s} assigned to more than one clump"));
    }
    for r in assoc.records() {
        if r.pvalue <= params.p1 && !seen.contains_key(r.rsid.as_str()) {
            return Err(format!("{} (p = {}) not covered", r.rsid, r.pvalue));
        }
    }
    for (i, a) in clumps.iter().enumerate() {
        for b in &clumps[i + 1..] {
            let (ra, rb) = (assoc.get(&a.index).unwrap(), assoc.get(&b.index).unwrap());
            if near(ra, rb) && r2(&a.index, &b.index) >= params.r2 {
                return Err(format!("index SNPs {} and {} are in LD", a.index, b.index));
            }
        }
    }
    Ok(())
}

/// Gaussian log marginal likelihood of `y` under `N(0, I + s^2 X_S X_S')`,
/// computed in the n-dimensional SNP space.
pub fn bma_log_ml_direct(x: &DMatrix<f64>, y: &DVector<f64>, members: &[usize], sigma: f64) -> f64 {
    let n = x.nrows();
    let xs = DMatrix::from_fn(n, members.len(), |i, j| x[(i, members[j])]);
    let cov = DMatrix::identity(n, n) + &xs * xs.transpose() * (sigma * sigma);
    let chol = cov.cholesky().expect("positive definite");
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = y.dot(&chol.solve(y));
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Exhaustive posterior over all subsets with size in `[kmin, kmax]`.
/// Returns `(members, posterior)` pairs and the MIP vector.
pub fn bma_exhaustive_oracle(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kmin: usize,
    kmax: usize,
    prior_prob: f64,
    sigma: f64,
) -> (Vec<(Vec<usize>, f64)>, Vec<f64>) {
    let k = x.ncols();
    let mut models = Vec::new();
    for mask in 0u32..(1 << k) {
        let members: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        if members.len() < kmin || members.len() > kmax {
            continue;
        }
        let lp = members.len() as f64 * prior_prob.ln()
            + (k - members.len()) as f64 * (1.0 - prior_prob).ln();
        models.push((
            members.clone(),
            bma_log_ml_direct(x, y, &members, sigma) + lp,
        ));
    }
    let max = models.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = models.iter().map(|m| (m.1 - max).exp()).sum();
    let models: Vec<(Vec<usize>, f64)> = models
        .into_iter()
        .map(|(m, s)| (m, (s - max).exp() / z))
        .collect();
    let mut mip = vec![0.0; k];
    for (m, p) in &models {
        for &i in m {
            mip[i] += p;
        }
    }
    (models, mip)
}

/// A weighted MR-BMA design with two causal exposures among `k`.
pub fn random_bma_design(seed: u64, n: usize, k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    // Correlated exposures: mix each column with its neighbour.
    let x = DMatrix::from_fn(n, k, |i, j| base[(i, j)] + 0.5 * base[(i, (j + 1) % k)]);
    let mut theta = DVector::zeros(k);
    let a = rng.random_range(0..k);
    let b = (a + rng.random_range(1..k)) % k;
    theta[a] = rng.random_range(0.3..0.8);
    theta[b] = -rng.random_range(0.3..0.8);
    let y = &x * theta + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (x, y)
}
