//! Bayesian model averaging over subsets of correlated exposures.
//!
//! Each exposure subset `S` is scored in closed form on the weighted scale
//! (outcome noise standardized to unit variance) with an independent
//! `N(0, sigma^2)` prior on each included causal effect:
//!
//! ```text
//! log p(y | S) = -1/2 [ n log(2 pi) + logdet(I + sigma^2 X_S X_S') + y' (I + sigma^2 X_S X_S')^-1 y ]
//! log p(S)     = |S| log(q) + (k - |S|) log(1 - q)
//! ```
//!
//! Subsets are enumerated exhaustively when `kmin == kmax`, otherwise
//! explored with a shotgun stochastic search over add / delete / swap moves.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stats::log_sum_exp;

/// Model sizes above this make the search slow.
pub const RECOMMENDED_MAX_KMAX: usize = 12;
/// Smallest iteration count that gives stable stochastic-search results.
pub const RECOMMENDED_MIN_ITER: usize = 100_000;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Raw MR-BMA input: per-SNP exposure and outcome associations.
#[derive(Clone, Debug)]
pub struct BmaInput {
    pub beta_x: DMatrix<f64>,
    pub beta_y: DVector<f64>,
    pub se_y: DVector<f64>,
    pub snps: Vec<String>,
    pub exposures: Vec<String>,
    pub outcome: String,
}

impl BmaInput {
    pub fn new(
        beta_x: DMatrix<f64>,
        beta_y: DVector<f64>,
        se_y: DVector<f64>,
        snps: Vec<String>,
        exposures: Vec<String>,
        outcome: impl Into<String>,
    ) -> Result<Self> {
        let n = snps.len();
        if beta_x.nrows() != n || beta_y.len() != n || se_y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} SNPs but beta_x has {} rows, beta_y {} and se_y {} entries",
                beta_x.nrows(),
                beta_y.len(),
                se_y.len()
            )));
        }
        if beta_x.ncols() != exposures.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} exposures but beta_x has {} columns",
                exposures.len(),
                beta_x.ncols()
            )));
        }
        if exposures.is_empty() || n == 0 {
            return Err(Error::EmptyInstrumentSet);
        }
        if exposures.len() > 64 * 1024 {
            return Err(Error::param("exposures", "too many exposures"));
        }
        if let Some(i) = se_y.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidValue {
                row: i + 1,
                field: "se_y".into(),
                reason: format!("{} is not > 0", se_y[i]),
            });
        }
        Ok(BmaInput {
            beta_x,
            beta_y,
            se_y,
            snps,
            exposures,
            outcome: outcome.into(),
        })
    }

    pub fn n_exposures(&self) -> usize {
        self.exposures.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BmaParams {
    pub kmin: usize,
    pub kmax: usize,
    /// Prior inclusion probability of each exposure.
    pub prior_prob: f64,
    /// Prior standard deviation of the causal effects.
    pub prior_sigma: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for BmaParams {
    fn default() -> Self {
        BmaParams {
            kmin: 1,
            kmax: RECOMMENDED_MAX_KMAX,
            prior_prob: 0.1,
            prior_sigma: 0.5,
            max_iter: RECOMMENDED_MIN_ITER,
            seed: 0,
        }
    }
}

impl BmaParams {
    /// Checks the parameters against `k` exposures.
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.kmin > self.kmax {
            return Err(Error::InvalidSizes(format!(
                "kmin = {} exceeds kmax = {}",
                self.kmin, self.kmax
            )));
        }
        if self.kmax > k {
            return Err(Error::InvalidSizes(format!(
                "kmax = {} exceeds the number of exposures ({k})",
                self.kmax
            )));
        }
        if !(self.prior_prob > 0.0 && self.prior_prob < 1.0) {
            return Err(Error::param("prior_prob", "must lie in (0, 1)"));
        }
        if !(self.prior_sigma > 0.0 && self.prior_sigma.is_finite()) {
            return Err(Error::param("prior_sigma", "must be > 0"));
        }
        if self.kmin < self.kmax && self.max_iter == 0 {
            return Err(Error::param(
                "max_iter",
                "stochastic search needs max_iter >= 1",
            ));
        }
        Ok(())
    }

    /// Advisory messages for settings that are valid but ill-advised.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.kmax > RECOMMENDED_MAX_KMAX {
            out.push(format!(
                "kmax = {} exceeds the recommended maximum of {RECOMMENDED_MAX_KMAX} (kmax <= 12); \
                 too many candidate models make the search slow. Reduce kmax to 12 or below \
                 and set kmin < kmax to use stochastic search",
                self.kmax
            ));
        }
        if self.kmin < self.kmax && self.max_iter < RECOMMENDED_MIN_ITER {
            out.push(format!(
                "max_iter = {} is below {RECOMMENDED_MIN_ITER}; stochastic search results may be unstable",
                self.max_iter
            ));
        }
        out
    }

    pub fn mode(&self) -> SearchMode {
        if self.kmin == self.kmax {
            SearchMode::Exhaustive
        } else {
            SearchMode::Stochastic
        }
    }

    /// Prior expected number of causal exposures among `k`.
    pub fn expected_model_size(&self, k: usize) -> f64 {
        k as f64 * self.prior_prob
    }

    fn log_prior(&self, size: usize, k: usize) -> f64 {
        size as f64 * self.prior_prob.ln() + (k - size) as f64 * (1.0 - self.prior_prob).ln()
    }
}

/// Weighted design `X = beta_x / se_y`, `y = beta_y / se_y` with cached
/// cross products.
#[derive(Clone, Debug)]
pub struct WeightedDesign {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub exposures: Vec<String>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl WeightedDesign {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, exposures: Vec<String>) -> Self {
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let yty = y.dot(&y);
        WeightedDesign {
            x,
            y,
            exposures,
            xtx,
            xty,
            yty,
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }
}

/// Divides each SNP's row by its outcome SE. With `weighted = false` the
/// raw effects are used unchanged.
pub fn weight_input(raw: &BmaInput, weighted: bool) -> WeightedDesign {
    let (x, y) = if weighted {
        let mut x = raw.beta_x.clone();
        for (mut row, &s) in x.row_iter_mut().zip(raw.se_y.iter()) {
            row /= s;
        }
        (x, raw.beta_y.component_div(&raw.se_y))
    } else {
        (raw.beta_x.clone(), raw.beta_y.clone())
    };
    WeightedDesign::new(x, y, raw.exposures.clone())
}

/// A scored exposure subset.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelScore {
    /// Exposure indices, ascending.
    pub members: Vec<usize>,
    pub log_ml: f64,
    pub log_prior: f64,
    /// Normalized over the models in the report (0 until normalized).
    pub posterior: f64,
    /// Posterior-mean causal effects of the members, in member order.
    pub theta: Vec<f64>,
    /// Times the stochastic search sat on this model.
    pub visits: u64,
}

impl ModelScore {
    pub fn log_posterior(&self) -> f64 {
        self.log_ml + self.log_prior
    }
}

/// Scores one subset. Works in the `|S|`-dimensional space through
/// `logdet(I_n + s^2 X X') = logdet(I_S + s^2 X'X)` and Woodbury.
pub fn score_model(
    design: &WeightedDesign,
    members: &[usize],
    params: &BmaParams,
) -> Result<ModelScore> {
    let size = members.len();
    if size < params.kmin || size > params.kmax {
        return Err(Error::InvalidSizes(format!(
            "model of size {size} outside [{}, {}]",
            params.kmin, params.kmax
        )));
    }
    if let Some(&bad) = members.iter().find(|&&m| m >= design.k()) {
        return Err(Error::param(
            "members",
            format!("exposure index {bad} out of range"),
        ));
    }
    Ok(score_unchecked(design, members, params)).and_then(|s| {
        if s.log_ml.is_finite() {
            Ok(s)
        } else {
            Err(Error::NumericalOverflow)
        }
    })
}

fn score_unchecked(design: &WeightedDesign, members: &[usize], params: &BmaParams) -> ModelScore {
    let n = design.n() as f64;
    let size = members.len();
    let log_prior = params.log_prior(size, design.k());
    if size == 0 {
        return ModelScore {
            members: Vec::new(),
            log_ml: -0.5 * (n * LN_2PI + design.yty),
            log_prior,
            posterior: 0.0,
            theta: Vec::new(),
            visits: 0,
        };
    }
    let prec = params.prior_sigma.powi(-2);
    let m = DMatrix::from_fn(size, size, |a, b| {
        design.xtx[(members[a], members[b])] + if a == b { prec } else { 0.0 }
    });
    let xty = DVector::from_fn(size, |a, _| design.xty[members[a]]);
    let Some(chol) = m.cholesky() else {
        return ModelScore {
            members: members.to_vec(),
            log_ml: f64::NAN,
            log_prior,
            posterior: 0.0,
            theta: vec![f64::NAN; size],
            visits: 0,
        };
    };
    let theta = chol.solve(&xty);
    let logdet_m: f64 = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    let logdet = size as f64 * params.prior_sigma.powi(2).ln() + logdet_m;
    let quad = design.yty - xty.dot(&theta);
    ModelScore {
        members: members.to_vec(),
        log_ml: -0.5 * (n * LN_2PI + logdet + quad),
        log_prior,
        posterior: 0.0,
        theta: theta.iter().copied().collect(),
        visits: 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    Exhaustive,
    Stochastic,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Exhaustive => "exhaustive",
            SearchMode::Stochastic => "stochastic",
        }
    }
}

/// Aggregated model-averaging output.
#[derive(Clone, Debug)]
pub struct BmaReport {
    pub exposures: Vec<String>,
    /// Every scored model, by posterior descending.
    pub models: Vec<ModelScore>,
    /// Marginal inclusion probability per exposure.
    pub mip: Vec<f64>,
    /// Model-averaged causal estimate per exposure.
    pub mace: Vec<f64>,
    pub mode: SearchMode,
    pub seed: u64,
    /// Distinct models scored (each exactly once).
    pub n_scored: usize,
    /// Score requests, cache hits included.
    pub n_lookups: u64,
    pub warnings: Vec<String>,
}

impl BmaReport {
    /// Posterior estimated by visit frequency instead of renormalized
    /// scores, in `models` order. Empty for exhaustive runs.
    pub fn visit_frequencies(&self) -> Vec<f64> {
        let total: u64 = self.models.iter().map(|m| m.visits).sum();
        if total == 0 {
            return Vec::new();
        }
        self.models
            .iter()
            .map(|m| m.visits as f64 / total as f64)
            .collect()
    }

    pub fn best(&self) -> Option<&ModelScore> {
        self.models.first()
    }

    pub fn member_names(&self, model: &ModelScore) -> Vec<&str> {
        model
            .members
            .iter()
            .map(|&i| self.exposures[i].as_str())
            .collect()
    }
}

type ModelKey = Vec<u64>;

fn key_of(members: &[usize], words: usize) -> ModelKey {
    let mut key = vec![0u64; words];
    for &m in members {
        key[m / 64] |= 1 << (m % 64);
    }
    key
}

/// Score cache keyed by subset; each subset is scored once.
struct ScoreCache<'a> {
    design: &'a WeightedDesign,
    params: &'a BmaParams,
    words: usize,
    index: HashMap<ModelKey, usize>,
    models: Vec<ModelScore>,
    lookups: u64,
}

impl<'a> ScoreCache<'a> {
    fn new(design: &'a WeightedDesign, params: &'a BmaParams) -> Self {
        ScoreCache {
            design,
            params,
            words: design.k().div_ceil(64).max(1),
            index: HashMap::new(),
            models: Vec::new(),
            lookups: 0,
        }
    }

    fn get_or_score(&mut self, members: &[usize]) -> Result<usize> {
        self.lookups += 1;
        let key = key_of(members, self.words);
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        let score = score_unchecked(self.design, members, self.params);
        if !score.log_ml.is_finite() {
            return Err(Error::NumericalOverflow);
        }
        self.models.push(score);
        let i = self.models.len() - 1;
        self.index.insert(key, i);
        Ok(i)
    }
}

fn neighbours(current: &[usize], k: usize, kmin: usize, kmax: usize) -> Vec<Vec<usize>> {
    let size = current.len();
    let mut inside = vec![false; k];
    for &m in current {
        inside[m] = true;
    }
    let outside: Vec<usize> = (0..k).filter(|&i| !inside[i]).collect();
    let mut out = Vec::new();
    if size < kmax {
        for &o in &outside {
            let mut s = current.to_vec();
            let at = s.partition_point(|&m| m < o);
            s.insert(at, o);
            out.push(s);
        }
    }
    if size > kmin {
        for i in 0..size {
            let mut s = current.to_vec();
            s.remove(i);
            out.push(s);
        }
    }
    for i in 0..size {
        for &o in &outside {
            let mut s = current.to_vec();
            s.remove(i);
            let at = s.partition_point(|&m| m < o);
            s.insert(at, o);
            out.push(s);
        }
    }
    out
}

fn sample_proportional<R: Rng>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Runs the model search and averages over every scored model.
pub fn search(design: &WeightedDesign, params: &BmaParams) -> Result<BmaReport> {
    let k = design.k();
    params.validate(k)?;
    let mut cache = ScoreCache::new(design, params);

    match params.mode() {
        SearchMode::Exhaustive => {
            for members in (0..k).combinations(params.kmin) {
                cache.get_or_score(&members)?;
            }
        }
        SearchMode::Stochastic => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let mut current: Vec<usize> = sample(&mut rng, k, params.kmin).into_vec();
            current.sort_unstable();
            let start = cache.get_or_score(&current)?;
            cache.models[start].visits += 1;
            let mut scores = Vec::new();
            let mut ids = Vec::new();
            for _ in 0..params.max_iter {
                let moves = neighbours(&current, k, params.kmin, params.kmax);
                scores.clear();
                ids.clear();
                for m in &moves {
                    let id = cache.get_or_score(m)?;
                    ids.push(id);
                    scores.push(cache.models[id].log_posterior());
                }
                let pick = sample_proportional(&scores, &mut rng);
                cache.models[ids[pick]].visits += 1;
                current = cache.models[ids[pick]].members.clone();
            }
        }
    }

    let n_scored = cache.models.len();
    let n_lookups = cache.lookups;
    let mut models = cache.models;
    let norm = log_sum_exp(
        models
            .iter()
            .map(ModelScore::log_posterior)
            .collect::<Vec<_>>(),
    );
    for m in &mut models {
        m.posterior = (m.log_posterior() - norm).exp();
    }
    models.sort_by(|a, b| {
        b.posterior
            .total_cmp(&a.posterior)
            .then_with(|| a.members.len().cmp(&b.members.len()))
            .then_with(|| a.members.cmp(&b.members))
    });
    let mut mip = vec![0.0; k];
    let mut mace = vec![0.0; k];
    for m in &models {
        for (&i, &t) in m.members.iter().zip(&m.theta) {
            mip[i] += m.posterior;
            mace[i] += m.posterior * t;
        }
    }
    for v in &mut mip {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(BmaReport {
        exposures: design.exposures.clone(),
        models,
        mip,
        mace,
        mode: params.mode(),
        seed: params.seed,
        n_scored,
        n_lookups,
        warnings: params.warnings(),
    })
}

/// Per-exposure summary row.
#[derive(Clone, Debug, PartialEq)]
pub struct ExposureSummary {
    pub exposure: String,
    pub mip: f64,
    pub mace: f64,
}

/// The highest-posterior models plus the per-exposure MIP / MACE table.
#[derive(Clone, Debug)]
pub struct BestModels<'a> {
    pub models: &'a [ModelScore],
    pub exposures: Vec<ExposureSummary>,
}

/// The `top` best models (clamped to what was scored), and MIP / MACE per
/// exposure ordered by MIP descending.
pub fn report_best_models(report: &BmaReport, top: usize) -> BestModels<'_> {
    let top = top.max(1).min(report.models.len());
    let mut exposures: Vec<ExposureSummary> = report
        .exposures
        .iter()
        .enumerate()
        .map(|(i, e)| ExposureSummary {
            exposure: e.clone(),
            mip: report.mip[i],
            mace: report.mace[i],
        })
        .collect();
    exposures.sort_by(|a, b| {
        b.mip
            .total_cmp(&a.mip)
            .then_with(|| a.exposure.cmp(&b.exposure))
    });
    BestModels {
        models: &report.models[..top],
        exposures,
    }
}

/// Writes the ranked model table.
pub fn write_models_tsv<W: Write>(
    w: &mut W,
    report: &BmaReport,
    top: usize,
) -> std::io::Result<()> {
    let best = report_best_models(report, top);
    writeln!(
        w,
        "rank\tsize\texposures\tposterior\tlog_ml\tlog_prior\ttheta"
    )?;
    for (rank, m) in best.models.iter().enumerate() {
        let names = report.member_names(m);
        let names = if names.is_empty() {
            "-".to_string()
        } else {
            names.join(",")
        };
        let theta = if m.theta.is_empty() {
            "-".to_string()
        } else {
            m.theta.iter().map(f64::to_string).join(",")
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            rank + 1,
            m.members.len(),
            names,
            m.posterior,
            m.log_ml,
            m.log_prior,
            theta
        )?;
    }
    Ok(())
}

/// Writes the per-exposure MIP / MACE table.
pub fn write_mip_tsv<W: Write>(w: &mut W, report: &BmaReport) -> std::io::Result<()> {
    writeln!(w, "exposure\tmip\tmace")?;
    for e in report_best_models(report, 1).exposures {
        writeln!(w, "{}\t{}\t{}", e.exposure, e.mip, e.mace)?;
    }
    Ok(())
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let tok: Vec<String> = t.split_whitespace().map(str::to_string).collect();
        match header {
            None => header = Some(tok),
            Some(ref h) => {
                if tok.len() != h.len() {
                    return Err(Error::RowWidthMismatch {
                        path: path.to_path_buf(),
                        line: i + 1,
                        expected: h.len(),
                        found: tok.len(),
                    });
                }
                rows.push((i + 1, tok));
            }
        }
    }
    let header = header.ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        line: 1,
        message: "missing header".into(),
    })?;
    if rows.is_empty() {
        return Err(Error::EmptyMatrix {
            path: path.to_path_buf(),
        });
    }
    Ok(Table { header, rows })
}

fn number(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse {s:?} as a number"),
    })
}

/// Reads a single whitespace-delimited file with header
/// `SNP <exposure>... BETA_Y SE_Y`.
pub fn parse_bma_combined(path: impl AsRef<Path>, outcome: &str) -> Result<BmaInput> {
    let path = path.as_ref();
    let t = read_table(path)?;
    let w = t.header.len();
    if w < 4 {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "expected SNP, at least one exposure, then outcome beta and se".into(),
        });
    }
    let exposures = t.header[1..w - 2].to_vec();
    let k = exposures.len();
    let n = t.rows.len();
    let mut bx = Vec::with_capacity(n * k);
    let (mut by, mut sy, mut snps) = (Vec::new(), Vec::new(), Vec::new());
    for (line, row) in &t.rows {
        snps.push(row[0].clone());
        for v in &row[1..w - 2] {
            bx.push(number(path, *line, v)?);
        }
        by.push(number(path, *line, &row[w - 2])?);
        sy.push(number(path, *line, &row[w - 1])?);
    }
    BmaInput::new(
        DMatrix::from_row_slice(n, k, &bx),
        DVector::from_vec(by),
        DVector::from_vec(sy),
        snps,
        exposures,
        outcome,
    )
}

/// Reads `SNP <exposure>...` and `SNP BETA SE` files, joined on SNP in the
/// exposure file's order.
pub fn parse_bma_pair(
    beta_x_path: impl AsRef<Path>,
    beta_y_path: impl AsRef<Path>,
    outcome: &str,
) -> Result<BmaInput> {
    let (xp, yp) = (beta_x_path.as_ref(), beta_y_path.as_ref());
    let tx = read_table(xp)?;
    let ty = read_table(yp)?;
    if ty.header.len() != 3 {
        return Err(Error::Malformed {
            path: yp.to_path_buf(),
            line: 1,
            message: "expected columns SNP, beta, se".into(),
        });
    }
    let mut outcome_rows = HashMap::new();
    for (line, row) in &ty.rows {
        let vals = (number(yp, *line, &row[1])?, number(yp, *line, &row[2])?);
        if outcome_rows.insert(row[0].clone(), vals).is_some() {
            return Err(Error::DuplicateSnp {
                rsid: row[0].clone(),
            });
        }
    }
    let exposures = tx.header[1..].to_vec();
    let k = exposures.len();
    let n = tx.rows.len();
    let mut bx = Vec::with_capacity(n * k);
    let (mut by, mut sy, mut snps) = (Vec::new(), Vec::new(), Vec::new());
    for (line, row) in &tx.rows {
        let &(b, s) = outcome_rows.get(&row[0]).ok_or_else(|| {
            Error::DimensionMismatch(format!(
                "SNP {} from {} is missing in {}",
                row[0],
                xp.display(),
                yp.display()
            ))
        })?;
        snps.push(row[0].clone());
        for v in &row[1..] {
            bx.push(number(xp, *line, v)?);
        }
        by.push(b);
        sy.push(s);
    }
    BmaInput::new(
        DMatrix::from_row_slice(n, k, &bx),
        DVector::from_vec(by),
        DVector::from_vec(sy),
        snps,
        exposures,
        outcome,
    )
}
