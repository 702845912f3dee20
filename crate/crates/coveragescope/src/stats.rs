//! Statistical machinery: min-max normalization, OLS with classical
//! inference and country fixed effects, Gini/Lorenz concentration, and
//! a bagged-tree regressor for the robustness check.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("column {0} is constant; min-max normalization undefined")]
    ConstantColumn(String),
    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("need N > number of parameters (N = {n}, params = {p})")]
    TooFewRows { n: usize, p: usize },
    #[error("non-finite value in column {0}")]
    NonFinite(String),
    #[error("fixed effects need at least 2 groups")]
    TooFewGroups,
    #[error("all values zero; concentration undefined")]
    AllZero,
    #[error("negative value {0} in concentration input")]
    NegativeValue(f64),
    #[error("target has zero variance")]
    DegenerateTarget,
}

/// Regression design: y plus covariate columns, optionally with intercept.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub y: Vec<f64>,
    /// column-major covariates, one inner vec per column (no intercept column)
    pub columns: Vec<Vec<f64>>,
    pub column_names: Vec<String>,
    pub intercept: bool,
}

impl DesignMatrix {
    pub fn new(y: Vec<f64>, columns: Vec<Vec<f64>>, column_names: Vec<String>, intercept: bool) -> Result<Self, StatsError> {
        assert_eq!(columns.len(), column_names.len());
        for (col, name) in columns.iter().zip(&column_names) {
            assert_eq!(col.len(), y.len());
            if col.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite(name.clone()));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite("y".into()));
        }
        Ok(DesignMatrix {
            y,
            columns,
            column_names,
            intercept,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn full_matrix(&self) -> DMatrix<f64> {
        let n = self.n_rows();
        let extra = usize::from(self.intercept);
        let p = self.columns.len() + extra;
        let mut x = DMatrix::zeros(n, p);
        if self.intercept {
            for i in 0..n {
                x[(i, 0)] = 1.0;
            }
        }
        for (j, col) in self.columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                x[(i, j + extra)] = v;
            }
        }
        x
    }

    fn term_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.intercept {
            names.push("(Intercept)".to_string());
        }
        names.extend(self.column_names.iter().cloned());
        names
    }
}

/// Min-max scaling to [0,1].
pub fn minmax_normalize(column: &[f64]) -> Result<Vec<f64>, StatsError> {
    let min = column.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(StatsError::NonFinite("input".into()));
    }
    if max <= min {
        return Err(StatsError::ConstantColumn("input".into()));
    }
    Ok(column.iter().map(|v| (v - min) / (max - min)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionFit {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub residual_se: f64,
    pub df_resid: usize,
    /// F statistic against the intercept-only model, with its df pair
    pub f_stat: f64,
    pub f_df: (usize, usize),
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub n: usize,
}

impl RegressionFit {
    /// Significance stars at the 0.1 / 0.05 / 0.01 thresholds.
    pub fn stars(&self, idx: usize) -> &'static str {
        let p = self.p_values[idx];
        if p < 0.01 {
            "***"
        } else if p < 0.05 {
            "**"
        } else if p < 0.1 {
            "*"
        } else {
            ""
        }
    }
}

/// OLS via singular value decomposition (orthogonal, rank-revealing),
/// classical homoskedastic standard errors from σ̂²(XᵀX)⁻¹.
pub fn ols_fit(design: &DesignMatrix) -> Result<RegressionFit, StatsError> {
    let n = design.n_rows();
    let x = design.full_matrix();
    let p = x.ncols();
    if n <= p {
        return Err(StatsError::TooFewRows { n, p });
    }
    let y = DVector::from_column_slice(&design.y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(p) as f64) * f64::EPSILON * 16.0;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < p {
        // columns loading on the null space are the collinear set
        let v_t = svd.v_t.as_ref().unwrap();
        let names = design.term_names();
        let mut collinear = Vec::new();
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol {
                for j in 0..p {
                    if v_t[(k, j)].abs() > 1e-6 && !collinear.contains(&names[j]) {
                        collinear.push(names[j].clone());
                    }
                }
            }
        }
        return Err(StatsError::RankDeficient(collinear));
    }
    let mut beta = svd.solve(&y, tol).expect("svd solve");
    // two refinement sweeps push the normal-equation gradient from ~1e-7
    // down to machine precision
    for _ in 0..2 {
        let residual = &y - &x * &beta;
        let delta = svd.solve(&residual, tol).expect("svd refine");
        beta += delta;
    }
    let fitted = &x * &beta;
    let residuals = &y - &fitted;
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let (sst, k_slopes) = if design.intercept {
        let mean = y.iter().sum::<f64>() / n as f64;
        (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>(), p - 1)
    } else {
        (y.iter().map(|v| v * v).sum::<f64>(), p)
    };
    let df_resid = n - p;
    let sigma2 = ssr / df_resid as f64;
    // (X'X)^-1 = V S^-2 V'
    let v_t = svd.v_t.as_ref().unwrap();
    let mut xtx_inv = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..p {
                acc += v_t[(k, i)] * v_t[(k, j)] / (svd.singular_values[k] * svd.singular_values[k]);
            }
            xtx_inv[(i, j)] = acc;
        }
    }
    let std_errors: Vec<f64> = (0..p).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().cloned().collect();
    let t_stats: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| b / se)
        .collect();
    let p_values: Vec<f64> = t_stats
        .iter()
        .map(|&t| student_t_two_sided_p(t, df_resid as f64))
        .collect();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df_resid as f64;
    let f_stat = if k_slopes > 0 && ssr > 0.0 {
        ((sst - ssr) / k_slopes as f64) / (ssr / df_resid as f64)
    } else {
        f64::INFINITY
    };
    Ok(RegressionFit {
        terms: design.term_names(),
        coefficients,
        std_errors,
        t_stats,
        p_values,
        r2,
        adj_r2,
        residual_se: sigma2.sqrt(),
        df_resid,
        f_stat,
        f_df: (k_slopes, df_resid),
        residuals: residuals.iter().cloned().collect(),
        fitted: fitted.iter().cloned().collect(),
        n,
    })
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x)
}

/// Regularized incomplete beta I_x(a, b) via the Lentz continued
/// fraction, accurate to ~1e-13.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos log-gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Append G−1 country indicator columns; the first group by sorted code
/// is the omitted reference. Returns the augmented design and the list
/// of singleton groups (kept, flagged).
pub fn with_fixed_effects(
    design: &DesignMatrix,
    groups: &[String],
) -> Result<(DesignMatrix, Vec<String>), StatsError> {
    assert_eq!(groups.len(), design.n_rows());
    let mut unique: Vec<&String> = groups.iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    unique.sort();
    if unique.len() < 2 {
        return Err(StatsError::TooFewGroups);
    }
    let singletons: Vec<String> = unique
        .iter()
        .filter(|g| groups.iter().filter(|x| x == *g).count() == 1)
        .map(|g| g.to_string())
        .collect();
    let mut columns = design.columns.clone();
    let mut names = design.column_names.clone();
    for group in unique.iter().skip(1) {
        columns.push(
            groups
                .iter()
                .map(|g| if g == *group { 1.0 } else { 0.0 })
                .collect(),
        );
        names.push(format!("fe_{group}"));
    }
    let augmented = DesignMatrix::new(design.y.clone(), columns, names, design.intercept)?;
    Ok((augmented, singletons))
}

#[derive(Debug, Clone, Serialize)]
pub struct LorenzCurve {
    /// (cumulative region share, cumulative value share), (0,0) … (1,1)
    pub points: Vec<(f64, f64)>,
}

impl LorenzCurve {
    /// Cumulative value share at a given cumulative region share
    /// (linear interpolation along the curve).
    pub fn value_share_at(&self, region_share: f64) -> f64 {
        let s = region_share.clamp(0.0, 1.0);
        for pair in self.points.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            if s <= x1 {
                if x1 == x0 {
                    return y1;
                }
                return y0 + (y1 - y0) * (s - x0) / (x1 - x0);
            }
        }
        1.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GiniResult {
    pub gini: f64,
    pub lorenz: LorenzCurve,
}

/// Concentration index over `values`, regions ordered ascending by
/// `rank_keys` (ties broken by id). With `rank_keys == values` this is
/// the classical Gini; with an external key the curve may be non-convex
/// and the index can be negative.
pub fn gini_by_rank(
    ids: &[String],
    values: &[f64],
    rank_keys: &[f64],
) -> Result<GiniResult, StatsError> {
    assert_eq!(ids.len(), values.len());
    assert_eq!(ids.len(), rank_keys.len());
    if let Some(neg) = values.iter().find(|&&v| v < 0.0) {
        return Err(StatsError::NegativeValue(*neg));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(StatsError::AllZero);
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        rank_keys[a]
            .partial_cmp(&rank_keys[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let mut cum = 0.0;
    for (i, &idx) in order.iter().enumerate() {
        cum += values[idx];
        points.push(((i + 1) as f64 / n as f64, cum / total));
    }
    // exact endpoints
    points[n] = (1.0, 1.0);
    // trapezoidal area under the curve
    let mut area = 0.0;
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        area += 0.5 * (y0 + y1) * (x1 - x0);
    }
    Ok(GiniResult {
        gini: 1.0 - 2.0 * area,
        lorenz: LorenzCurve { points },
    })
}

/// Classical value-ranked Gini (rank key = the values themselves).
pub fn gini_classical(ids: &[String], values: &[f64]) -> Result<GiniResult, StatsError> {
    gini_by_rank(ids, values, values)
}

// ---------------------------------------------------------------------------
// bagged regression trees

#[derive(Debug, Clone, Serialize)]
enum TreeNode {
    Leaf {
        prediction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { prediction } => return *prediction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub seed: u64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub n_features: usize,
    /// total impurity reduction per feature, pre-normalization
    raw_importance: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureImportance {
    pub features: Vec<String>,
    pub importances: Vec<f64>,
    /// true when no tree made any split (all-zero importances)
    pub no_splits: bool,
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    nodes: Vec<TreeNode>,
    importance: Vec<f64>,
}

fn variance_times_n(indices: &[usize], y: &[f64]) -> (f64, f64) {
    let n = indices.len() as f64;
    let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / n;
    let ss = indices.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>();
    (ss, mean)
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, indices: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (ss_parent, mean) = variance_times_n(indices, self.y);
        if depth >= self.max_depth || indices.len() < 2 * self.min_leaf || ss_parent <= 1e-30 {
            self.nodes.push(TreeNode::Leaf { prediction: mean });
            return self.nodes.len() - 1;
        }
        // feature subsample without replacement
        let n_features = self.rows[0].len();
        let mut features: Vec<usize> = (0..n_features).collect();
        for i in 0..self.mtry.min(n_features) {
            let j = rng.gen_range(i..n_features);
            features.swap(i, j);
        }
        let candidates = &features[..self.mtry.min(n_features)];

        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        for &feat in candidates {
            let mut vals: Vec<(f64, f64)> = indices.iter().map(|&i| (self.rows[i][feat], self.y[i])).collect();
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            let n = vals.len();
            // prefix sums for O(n) split evaluation
            let mut sum_left = 0.0;
            let mut sumsq_left = 0.0;
            let total_sum: f64 = vals.iter().map(|v| v.1).sum();
            let total_sumsq: f64 = vals.iter().map(|v| v.1 * v.1).sum();
            for i in 0..n - 1 {
                sum_left += vals[i].1;
                sumsq_left += vals[i].1 * vals[i].1;
                if vals[i].0 == vals[i + 1].0 {
                    continue;
                }
                let n_l = (i + 1) as f64;
                let n_r = (n - i - 1) as f64;
                if (i + 1) < self.min_leaf || (n - i - 1) < self.min_leaf {
                    continue;
                }
                let ss_l = sumsq_left - sum_left * sum_left / n_l;
                let sum_r = total_sum - sum_left;
                let ss_r = (total_sumsq - sumsq_left) - sum_r * sum_r / n_r;
                let gain = ss_parent - ss_l - ss_r;
                let threshold = 0.5 * (vals[i].0 + vals[i + 1].0);
                if best.map(|(g, _, _)| gain > g).unwrap_or(gain > 1e-30) {
                    best = Some((gain, feat, threshold));
                }
            }
        }
        match best {
            None => {
                self.nodes.push(TreeNode::Leaf { prediction: mean });
                self.nodes.len() - 1
            }
            Some((gain, feature, threshold)) => {
                self.importance[feature] += gain;
                let split_at = itertools_partition(indices, |&i| self.rows[i][feature] < threshold);
                let node_idx = self.nodes.len();
                self.nodes.push(TreeNode::Leaf { prediction: mean }); // placeholder
                let (left_slice, right_slice) = indices.split_at_mut(split_at);
                let left = self.build(left_slice, depth + 1, rng);
                let right = self.build(right_slice, depth + 1, rng);
                self.nodes[node_idx] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                node_idx
            }
        }
    }
}

/// Stable partition of a slice by predicate; returns the pivot index.
fn itertools_partition<F: Fn(&usize) -> bool>(xs: &mut [usize], pred: F) -> usize {
    let mut left: Vec<usize> = Vec::with_capacity(xs.len());
    let mut right: Vec<usize> = Vec::with_capacity(xs.len());
    for &x in xs.iter() {
        if pred(&x) {
            left.push(x);
        } else {
            right.push(x);
        }
    }
    let pivot = left.len();
    for (i, v) in left.into_iter().chain(right).enumerate() {
        xs[i] = v;
    }
    pivot
}

/// Fit bagged CART regression trees: bootstrap rows, ⌈n/3⌉ features per
/// split, variance-reduction criterion. Deterministic given the seed;
/// tree `k` draws from an RNG stream seeded `seed + k`, so parallel
/// scheduling cannot change the result.
pub fn rf_fit(
    design: &DesignMatrix,
    n_trees: usize,
    max_depth: usize,
    min_leaf: usize,
    seed: u64,
) -> Result<ForestModel, StatsError> {
    let n = design.n_rows();
    if n < 2 * min_leaf {
        return Err(StatsError::TooFewRows { n, p: 2 * min_leaf });
    }
    let y = &design.y;
    let var: f64 = {
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - mean).powi(2)).sum()
    };
    if var <= 0.0 {
        return Err(StatsError::DegenerateTarget);
    }
    let n_features = design.columns.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| design.columns.iter().map(|c| c[i]).collect())
        .collect();
    let mtry = n_features.div_ceil(3).max(1);
    let mut trees = Vec::with_capacity(n_trees);
    let mut raw_importance = vec![0.0; n_features];
    for k in 0..n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let mut indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut builder = TreeBuilder {
            rows: &rows,
            y,
            max_depth,
            min_leaf,
            mtry,
            nodes: Vec::new(),
            importance: vec![0.0; n_features],
        };
        builder.build(&mut indices, 0, &mut rng);
        for (acc, imp) in raw_importance.iter_mut().zip(&builder.importance) {
            *acc += imp;
        }
        trees.push(RegressionTree {
            nodes: builder.nodes,
        });
    }
    Ok(ForestModel {
        trees,
        seed,
        n_trees,
        max_depth,
        min_leaf,
        n_features,
        raw_importance,
    })
}

impl ForestModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Normalized impurity-reduction importances, summing to 1 (all zeros
/// with a flag when no tree split).
pub fn rf_importance(model: &ForestModel, feature_names: &[String]) -> FeatureImportance {
    assert_eq!(feature_names.len(), model.n_features);
    let total: f64 = model.raw_importance.iter().sum();
    if total <= 0.0 {
        return FeatureImportance {
            features: feature_names.to_vec(),
            importances: vec![0.0; model.n_features],
            no_splits: true,
        };
    }
    FeatureImportance {
        features: feature_names.to_vec(),
        importances: model.raw_importance.iter().map(|v| v / total).collect(),
        no_splits: false,
    }
}

/// Table-4-style CSV export: term, coefficient, std_error, t, p, stars,
/// then a summary block.
pub fn regression_csv(fit: &RegressionFit) -> String {
    let mut out = String::from("term,coefficient,std_error,t,p,stars\n");
    for i in 0..fit.terms.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fit.terms[i], fit.coefficients[i], fit.std_errors[i], fit.t_stats[i], fit.p_values[i],
            fit.stars(i)
        ));
    }
    out.push_str(&format!("# N,{}\n", fit.n));
    out.push_str(&format!("# R2,{}\n", fit.r2));
    out.push_str(&format!("# adj_R2,{}\n", fit.adj_r2));
    out.push_str(&format!(
        "# residual_se,{} (df={})\n",
        fit.residual_se, fit.df_resid
    ));
    out.push_str(&format!(
        "# F,{} (df={}; {})\n",
        fit.f_stat, fit.f_df.0, fit.f_df.1
    ));
    out
}

/// Lorenz curve CSV: cumulative shares plus the gini scalar and the
/// checkpoint readouts at region shares 0.9 and 0.4.
pub fn lorenz_csv(result: &GiniResult) -> String {
    let mut out = String::from("cum_share_regions,cum_share_value\n");
    for (x, y) in &result.lorenz.points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out.push_str(&format!("# gini,{}\n", result.gini));
    out.push_str(&format!(
        "# top_10pct_value_share,{}\n",
        1.0 - result.lorenz.value_share_at(0.9)
    ));
    out.push_str(&format!(
        "# bottom_40pct_value_share,{}\n",
        result.lorenz.value_share_at(0.4)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i:04}")).collect()
    }

    #[test]
    fn minmax_basic() {
        assert_eq!(minmax_normalize(&[0.0, 5.0, 10.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[0.0, 0.25, 1.0]).unwrap(), vec![0.0, 0.25, 1.0]);
        assert!(matches!(
            minmax_normalize(&[3.0, 3.0]),
            Err(StatsError::ConstantColumn(_))
        ));
    }

    #[test]
    fn minmax_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..100).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let once = minmax_normalize(&v).unwrap();
        let twice = minmax_normalize(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ols_exact_line() {
        let design = DesignMatrix::new(
            vec![1.0, 2.0, 3.0],
            vec![vec![0.0, 1.0, 2.0]],
            vec!["x".into()],
            true,
        )
        .unwrap();
        let fit = ols_fit(&design).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        for r in &fit.residuals {
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn ols_constant_y_zero_slopes() {
        let design = DesignMatrix::new(
            vec![5.0; 10],
            vec![(0..10).map(|i| i as f64).collect()],
            vec!["x".into()],
            true,
        )
        .unwrap();
        let fit = ols_fit(&design).unwrap();
        assert!(fit.coefficients[1].abs() < 1e-12);
        assert!(fit.r2.abs() < 1e-12);
    }

    /// textbook normal-equations oracle
    fn ols_oracle(y: &[f64], cols: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, f64, f64, f64) {
        let n = y.len();
        let p = cols.len() + 1;
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for (j, c) in cols.iter().enumerate() {
                x[(i, j + 1)] = c[i];
            }
        }
        let yv = DVector::from_column_slice(y);
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &yv;
        let xtx_inv = xtx.try_inverse().unwrap();
        let beta = &xtx_inv * xty;
        let resid = &yv - &x * &beta;
        let ssr: f64 = resid.iter().map(|r| r * r).sum();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let df = (n - p) as f64;
        let sigma2 = ssr / df;
        let ses: Vec<f64> = (0..p).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();
        let r2 = 1.0 - ssr / sst;
        let adj = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df;
        let f = ((sst - ssr) / (p as f64 - 1.0)) / (ssr / df);
        (beta.iter().cloned().collect(), ses, r2, adj, f)
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = 200;
            let cols: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    1.5 + cols.iter().enumerate().map(|(j, c)| (j as f64 - 2.0) * c[i]).sum::<f64>()
                        + rng.gen_range(-0.5..0.5)
                })
                .collect();
            let design = DesignMatrix::new(
                y.clone(),
                cols.clone(),
                (0..5).map(|j| format!("x{j}")).collect(),
                true,
            )
            .unwrap();
            let fit = ols_fit(&design).unwrap();
            let (beta_o, se_o, r2_o, adj_o, f_o) = ols_oracle(&y, &cols);
            for j in 0..6 {
                assert!((fit.coefficients[j] - beta_o[j]).abs() / beta_o[j].abs().max(1.0) < 1e-9);
                assert!((fit.std_errors[j] - se_o[j]).abs() / se_o[j] < 1e-9);
            }
            assert!((fit.r2 - r2_o).abs() < 1e-9);
            assert!((fit.adj_r2 - adj_o).abs() < 1e-9);
            assert!((fit.f_stat - f_o).abs() / f_o < 1e-9);
        }
    }

    #[test]
    fn ols_residual_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 150;
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let design = DesignMatrix::new(y, cols.clone(), (0..4).map(|j| format!("x{j}")).collect(), true).unwrap();
        let fit = ols_fit(&design).unwrap();
        for col in &cols {
            let dot: f64 = col.iter().zip(&fit.residuals).map(|(x, r)| x * r).sum();
            assert!(dot.abs() < 1e-8, "X'e = {dot}");
        }
        let sum: f64 = fit.residuals.iter().sum();
        assert!(sum.abs() < 1e-8);
    }

    #[test]
    fn ols_detects_collinearity() {
        let x1: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let x2: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
        let y: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let design = DesignMatrix::new(
            y,
            vec![x1, x2],
            vec!["a".into(), "b".into()],
            true,
        )
        .unwrap();
        match ols_fit(&design) {
            Err(StatsError::RankDeficient(cols)) => {
                assert!(cols.contains(&"a".to_string()) || cols.contains(&"b".to_string()));
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn fitted_correlation_equals_sqrt_r2() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 120;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| cols[0][i] * 2.0 + rng.gen_range(-0.3..0.3))
            .collect();
        let design = DesignMatrix::new(y.clone(), cols, vec!["a".into(), "b".into(), "c".into()], true).unwrap();
        let fit = ols_fit(&design).unwrap();
        let mean_y = y.iter().sum::<f64>() / n as f64;
        let mean_f = fit.fitted.iter().sum::<f64>() / n as f64;
        let cov: f64 = y.iter().zip(&fit.fitted).map(|(a, b)| (a - mean_y) * (b - mean_f)).sum();
        let sy: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>().sqrt();
        let sf: f64 = fit.fitted.iter().map(|v| (v - mean_f).powi(2)).sum::<f64>().sqrt();
        let corr = cov / (sy * sf);
        assert!((corr - fit.r2.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn p_value_sanity() {
        // t = 1.96, df large -> ~0.05
        let p = student_t_two_sided_p(1.96, 100_000.0);
        assert!((p - 0.05).abs() < 0.001, "p = {p}");
        // t = 0 -> 1
        assert!((student_t_two_sided_p(0.0, 10.0) - 1.0).abs() < 1e-12);
        // known value: t=2.228, df=10 -> p≈0.05
        let p = student_t_two_sided_p(2.228, 10.0);
        assert!((p - 0.05).abs() < 5e-4, "p = {p}");
    }

    #[test]
    fn incomplete_beta_symmetry() {
        for (a, b, x) in [(2.0, 3.0, 0.4), (0.5, 0.5, 0.7), (10.0, 2.0, 0.9)] {
            let lhs = regularized_incomplete_beta(a, b, x);
            let rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_effects_two_groups_one_dummy() {
        let design = DesignMatrix::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![vec![0.1, 0.2, 0.3, 0.4]],
            vec!["x".into()],
            true,
        )
        .unwrap();
        let groups = vec!["B".to_string(), "A".to_string(), "B".to_string(), "A".to_string()];
        let (aug, singletons) = with_fixed_effects(&design, &groups).unwrap();
        assert_eq!(aug.columns.len(), 2);
        assert_eq!(aug.column_names[1], "fe_B");
        assert!(singletons.is_empty());
    }

    #[test]
    fn fixed_effects_recover_group_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 300;
        let offsets = [0.0, 1.5, -2.0]; // group A is the reference
        let group_names = ["A", "B", "C"];
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let groups: Vec<String> = (0..n).map(|i| group_names[i % 3].to_string()).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.7 + 2.0 * x[i] + offsets[i % 3]).collect();
        let design = DesignMatrix::new(y, vec![x], vec!["x".into()], true).unwrap();
        let (aug, _) = with_fixed_effects(&design, &groups).unwrap();
        let fit = ols_fit(&aug).unwrap();
        // terms: intercept, x, fe_B, fe_C
        assert!((fit.coefficients[0] - 0.7).abs() < 1e-9);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-9);
        assert!((fit.coefficients[2] - 1.5).abs() < 1e-9);
        assert!((fit.coefficients[3] - -2.0).abs() < 1e-9);
    }

    #[test]
    fn full_dummy_set_is_collinear() {
        let n = 30;
        let groups: Vec<String> = (0..n).map(|i| format!("G{}", i % 3)).collect();
        // force all G dummies plus intercept
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|g| {
                groups
                    .iter()
                    .map(|s| if s == &format!("G{g}") { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let design = DesignMatrix::new(
            y,
            cols,
            vec!["g0".into(), "g1".into(), "g2".into()],
            true,
        )
        .unwrap();
        assert!(matches!(ols_fit(&design), Err(StatsError::RankDeficient(_))));
    }

    #[test]
    fn gini_equal_values_zero() {
        let v = vec![3.0; 50];
        let r = gini_classical(&ids(50), &v).unwrap();
        assert!(r.gini.abs() < 1e-12);
    }

    #[test]
    fn gini_single_holder() {
        // [0,0,0,1] ranked by value -> 0.75
        let v = vec![0.0, 0.0, 0.0, 1.0];
        let r = gini_classical(&ids(4), &v).unwrap();
        assert!((r.gini - 0.75).abs() < 1e-15, "gini = {}", r.gini);
    }

    #[test]
    fn gini_matches_pairwise_difference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let n = rng.gen_range(3..50);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            if v.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let r = gini_classical(&ids(n), &v).unwrap();
            // G = sum |xi - xj| / (2 n^2 mean)
            let mean = v.iter().sum::<f64>() / n as f64;
            let mut diff_sum = 0.0;
            for a in &v {
                for b in &v {
                    diff_sum += (a - b).abs();
                }
            }
            let oracle = diff_sum / (2.0 * (n * n) as f64 * mean);
            // trapezoidal gini = pairwise-difference gini minus the
            // within-step correction 0 for discrete Lorenz at step edges
            assert!((r.gini - oracle).abs() < 1e-9, "{} vs {oracle}", r.gini);
        }
    }

    #[test]
    fn gini_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let v: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..5.0)).collect();
        let scaled: Vec<f64> = v.iter().map(|x| x * 123.456).collect();
        let a = gini_classical(&ids(60), &v).unwrap().gini;
        let b = gini_classical(&ids(60), &scaled).unwrap().gini;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lorenz_endpoints_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 100;
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let keys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r = gini_by_rank(&ids(n), &v, &keys).unwrap();
        assert_eq!(*r.lorenz.points.first().unwrap(), (0.0, 0.0));
        assert_eq!(*r.lorenz.points.last().unwrap(), (1.0, 1.0));
        for pair in r.lorenz.points.windows(2) {
            assert!(pair[1].0 >= pair[0].0);
            assert!(pair[1].1 >= pair[0].1 - 1e-15);
        }
    }

    #[test]
    fn gini_all_zero_rejected() {
        assert!(matches!(
            gini_classical(&ids(4), &[0.0; 4]),
            Err(StatsError::AllZero)
        ));
    }

    #[test]
    fn lorenz_checkpoint_readout() {
        // concentrated: top 10% holds everything
        let mut v = vec![0.0; 90];
        v.extend(vec![10.0; 10]);
        let r = gini_classical(&ids(100), &v).unwrap();
        assert!((r.lorenz.value_share_at(0.9) - 0.0).abs() < 1e-12);
        assert!((r.lorenz.value_share_at(0.4) - 0.0).abs() < 1e-12);
    }

    fn one_informative_design(seed: u64, n: usize) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let informative: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let noise1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let noise2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y = informative.clone();
        DesignMatrix::new(
            y,
            vec![informative, noise1, noise2],
            vec!["signal".into(), "noise1".into(), "noise2".into()],
            false,
        )
        .unwrap()
    }

    #[test]
    fn forest_finds_informative_feature() {
        let design = one_informative_design(47, 300);
        let model = rf_fit(&design, 50, 8, 5, 1234).unwrap();
        let imp = rf_importance(&model, &design.column_names);
        assert!(imp.importances[0] > 0.8, "importance = {:?}", imp.importances);
        let total: f64 = imp.importances.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forest_deterministic() {
        let design = one_informative_design(53, 200);
        let a = rf_fit(&design, 20, 6, 5, 99).unwrap();
        let b = rf_fit(&design, 20, 6, 5, 99).unwrap();
        let row = vec![0.5, 0.5, 0.5];
        assert_eq!(a.predict(&row).to_bits(), b.predict(&row).to_bits());
        assert_eq!(a.raw_importance, b.raw_importance);
    }

    #[test]
    fn constant_target_rejected() {
        let design = DesignMatrix::new(
            vec![2.0; 20],
            vec![(0..20).map(|i| i as f64).collect()],
            vec!["x".into()],
            false,
        )
        .unwrap();
        assert!(matches!(
            rf_fit(&design, 5, 4, 2, 1),
            Err(StatsError::DegenerateTarget)
        ));
    }

    #[test]
    fn depth_one_tree_matches_exhaustive_split_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let n = 40;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v < 0.4 { 1.0 } else { 5.0 }).collect();
        let design = DesignMatrix::new(y.clone(), vec![x.clone()], vec!["x".into()], false).unwrap();
        // min_leaf 1, depth 1, single feature: deterministic best split
        let model = rf_fit_no_bootstrap_for_test(&design, 1);
        // exhaustive oracle over all candidate thresholds
        let mut best_sse = f64::INFINITY;
        let mut best_pred = (0.0, 0.0);
        let mut sorted: Vec<(f64, f64)> = x.iter().cloned().zip(y.iter().cloned()).collect();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for i in 0..n - 1 {
            if sorted[i].0 == sorted[i + 1].0 {
                continue;
            }
            let left: Vec<f64> = sorted[..=i].iter().map(|p| p.1).collect();
            let right: Vec<f64> = sorted[i + 1..].iter().map(|p| p.1).collect();
            let ml = left.iter().sum::<f64>() / left.len() as f64;
            let mr = right.iter().sum::<f64>() / right.len() as f64;
            let sse: f64 = left.iter().map(|v| (v - ml).powi(2)).sum::<f64>()
                + right.iter().map(|v| (v - mr).powi(2)).sum::<f64>();
            if sse < best_sse {
                best_sse = sse;
                best_pred = (ml, mr);
            }
        }
        assert!((model.predict(&[0.1]) - best_pred.0).abs() < 1e-12);
        assert!((model.predict(&[0.9]) - best_pred.1).abs() < 1e-12);
    }

    /// single depth-1 tree over the full sample (no bootstrap) for oracle tests
    fn rf_fit_no_bootstrap_for_test(design: &DesignMatrix, min_leaf: usize) -> RegressionTree {
        let n = design.n_rows();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| design.columns.iter().map(|c| c[i]).collect())
            .collect();
        let mut builder = TreeBuilder {
            rows: &rows,
            y: &design.y,
            max_depth: 1,
            min_leaf,
            mtry: design.columns.len(),
            nodes: Vec::new(),
            importance: vec![0.0; design.columns.len()],
        };
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        builder.build(&mut indices, 0, &mut rng);
        RegressionTree {
            nodes: builder.nodes,
        }
    }

    #[test]
    fn adding_column_never_decreases_r2() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 80;
        let c1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let c2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| c1[i] + rng.gen_range(-0.5..0.5)).collect();
        let small = DesignMatrix::new(y.clone(), vec![c1.clone()], vec!["a".into()], true).unwrap();
        let big = DesignMatrix::new(y, vec![c1, c2], vec!["a".into(), "b".into()], true).unwrap();
        let fit_small = ols_fit(&small).unwrap();
        let fit_big = ols_fit(&big).unwrap();
        assert!(fit_big.r2 >= fit_small.r2 - 1e-12);
    }
}
