//! Class-membership probabilities and region forces.
//!
//! The Bernoulli force `f = -log(p + δ) + log(1 - p + δ)` is the negative
//! log-likelihood of the class indicator given prior membership
//! probabilities `p`; its first-order bound `1 - 2p` is the linear force.
//! Probabilities come either from diffusion affinities to labelled seeds on a
//! graph, or from a Gaussian color model around k-means centroids on images.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PottsError, Result};
use crate::graph::SparseMatrix;

const ROW_SUM_TOL: f64 = 1e-10;

pub const DEFAULT_DELTA: f64 = 1e-3;

/// Which region force a pipeline builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceKind {
    /// Bernoulli negative log-likelihood, `-log(p + δ) + log(1 - p + δ)`.
    Log,
    /// `1 - 2p`.
    Linear,
    /// Squared color distance to the centroid (images only).
    L2,
}

impl ForceKind {
    pub fn name(&self) -> &'static str {
        match self {
            ForceKind::Log => "log",
            ForceKind::Linear => "linear",
            ForceKind::L2 => "l2",
        }
    }
}

impl std::str::FromStr for ForceKind {
    type Err = PottsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(ForceKind::Log),
            "linear" => Ok(ForceKind::Linear),
            "l2" => Ok(ForceKind::L2),
            _ => Err(PottsError::invalid(format!(
                "unknown region force {s:?} (log|linear|l2)"
            ))),
        }
    }
}

/// N×K class-membership probabilities with rows on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(Array2<f64>);

impl ProbabilityMatrix {
    pub fn new(p: Array2<f64>) -> Result<Self> {
        for (i, row) in p.outer_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
                return Err(PottsError::invalid(format!(
                    "probability {v} outside [0,1] in row {i}"
                )));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(PottsError::invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(ProbabilityMatrix(p))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn n_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.ncols()
    }

    /// Per-row argmax, ties to the lower class index.
    pub fn argmax_labels(&self) -> Vec<usize> {
        crate::solver::assign_labels(self.0.view())
    }
}

/// N×K region forces `f_k(x_i)`; lower means a better fit to class `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionForceMatrix(Array2<f64>);

impl RegionForceMatrix {
    pub fn new(f: Array2<f64>) -> Result<Self> {
        if let Some(v) = f.iter().find(|v| !v.is_finite()) {
            return Err(PottsError::NumericDegeneracy(format!(
                "non-finite region force {v}"
            )));
        }
        Ok(RegionForceMatrix(f))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn n_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.ncols()
    }

    /// Same forces with the class columns reordered: column `c` of the result
    /// is column `perm[c]` of `self`.
    pub fn permute_classes(&self, perm: &[usize]) -> Self {
        RegionForceMatrix(self.0.select(Axis(1), perm))
    }
}

/// Labelled node indices per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    classes: Vec<Vec<usize>>,
}

impl SeedSet {
    pub fn new(classes: Vec<Vec<usize>>, n_nodes: usize) -> Result<Self> {
        if classes.iter().all(Vec::is_empty) {
            return Err(PottsError::invalid("seed set has no seeds"));
        }
        let mut owner = vec![usize::MAX; n_nodes];
        for (k, members) in classes.iter().enumerate() {
            for &i in members {
                if i >= n_nodes {
                    return Err(PottsError::invalid(format!(
                        "seed index {i} out of range for {n_nodes} nodes"
                    )));
                }
                if owner[i] != usize::MAX {
                    return Err(PottsError::invalid(format!(
                        "node {i} seeded in classes {} and {k}",
                        owner[i]
                    )));
                }
                owner[i] = k;
            }
        }
        let classes = classes
            .into_iter()
            .map(|mut v| {
                v.sort_unstable();
                v
            })
            .collect();
        Ok(SeedSet { classes })
    }

    /// Groups `(index, class)` pairs into a seed set with `n_classes` classes.
    pub fn from_pairs(pairs: &[(usize, usize)], n_classes: usize, n_nodes: usize) -> Result<Self> {
        let mut classes = vec![Vec::new(); n_classes];
        for &(i, k) in pairs {
            if k >= n_classes {
                return Err(PottsError::invalid(format!(
                    "seed class {k} out of range for {n_classes} classes"
                )));
            }
            classes[k].push(i);
        }
        Self::new(classes, n_nodes)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, k: usize) -> &[usize] {
        &self.classes[k]
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(index, class)` for every seed, ascending by index.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self
            .classes
            .iter()
            .enumerate()
            .flat_map(|(k, v)| v.iter().map(move |&i| (i, k)))
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Class `c` of the result is class `perm[c]` of `self`.
    pub fn permute_classes(&self, perm: &[usize]) -> Self {
        SeedSet {
            classes: perm.iter().map(|&k| self.classes[k].clone()).collect(),
        }
    }
}

/// Cluster centers in color space, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet(Array2<f64>);

impl CentroidSet {
    pub fn new(c: Array2<f64>) -> Result<Self> {
        if c.nrows() == 0 || c.ncols() == 0 {
            return Err(PottsError::invalid("empty centroid set"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(PottsError::invalid("non-finite centroid"));
        }
        Ok(CentroidSet(c))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn n_classes(&self) -> usize {
        self.0.nrows()
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        CentroidSet(self.0.select(Axis(0), perm))
    }
}

/// Probabilities from normalized diffusion affinities to the seeds.
///
/// With `W^m` the m-th power of the normalized affinity,
/// `r_ij = (w^m_ij)^2 / (w^m_ii w^m_jj)` and `p_k(i)` is the class-averaged
/// `r_ij` over seeds `j ∈ S_k`, normalized across classes. Rows with zero
/// affinity to every seed get the uniform distribution.
///
/// Only `m ∈ {1, 2}` is supported; `W^m` is never formed. Seed columns come
/// from `m` sparse products and `diag(W^2)` from squared row norms.
pub fn diffusion_probabilities(
    w_hat: &SparseMatrix,
    seeds: &SeedSet,
    m: usize,
) -> Result<ProbabilityMatrix> {
    if !(m == 1 || m == 2) {
        return Err(PottsError::invalid(format!(
            "diffusion power m must be 1 or 2, got {m}"
        )));
    }
    let n = w_hat.n();
    let k_classes = seeds.n_classes();
    if let Some(k) = (0..k_classes).find(|&k| seeds.class(k).is_empty()) {
        return Err(PottsError::invalid(format!("class {k} has no seeds")));
    }
    if let Some(&i) = seeds.classes().iter().flatten().find(|&&i| i >= n) {
        return Err(PottsError::invalid(format!("seed {i} out of range")));
    }

    let diag: Vec<f64> = (0..n)
        .map(|i| match m {
            1 => w_hat.get(i, i),
            _ => w_hat.row(i).map(|(_, v)| v * v).sum(),
        })
        .collect();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(PottsError::NumericDegeneracy(format!(
            "diffusion return probability is zero at node {i}"
        )));
    }

    let mut numer = Array2::<f64>::zeros((n, k_classes));
    let mut unit = vec![0.0; n];
    for k in 0..k_classes {
        let members = seeds.class(k);
        let inv = 1.0 / members.len() as f64;
        for &j in members {
            unit[j] = 1.0;
            let mut col = w_hat.matvec(&unit);
            unit[j] = 0.0;
            if m == 2 {
                col = w_hat.matvec(&col);
            }
            for (i, &c) in col.iter().enumerate() {
                if c != 0.0 {
                    numer[[i, k]] += inv * c * c / (diag[i] * diag[j]);
                }
            }
        }
    }

    let uniform = 1.0 / k_classes as f64;
    for mut row in numer.outer_iter_mut() {
        let denom: f64 = row.sum();
        if denom > 0.0 {
            row.mapv_inplace(|v| v / denom);
        } else {
            row.fill(uniform);
        }
    }
    ProbabilityMatrix::new(numer)
}

/// Gaussian color-model probabilities around the centroids, a softmax of
/// `-|I(x) - c_k| / (2σ^2)`. With `squared_distance` the exponent uses
/// `|I(x) - c_k|^2` instead.
pub fn image_probabilities(
    colors: ArrayView2<'_, f64>,
    centroids: &CentroidSet,
    sigma: f64,
    squared_distance: bool,
) -> Result<ProbabilityMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(PottsError::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let c = centroids.view();
    if c.nrows() < 2 {
        return Err(PottsError::invalid(
            "image probabilities need at least 2 centroids",
        ));
    }
    if c.ncols() != colors.ncols() {
        return Err(PottsError::SizeMismatch {
            what: "color channels",
            expected: c.ncols(),
            actual: colors.ncols(),
        });
    }
    let scale = 1.0 / (2.0 * sigma * sigma);
    let mut p = Array2::<f64>::zeros((colors.nrows(), c.nrows()));
    for (pixel, mut row) in colors.outer_iter().zip(p.outer_iter_mut()) {
        for (k, ck) in c.outer_iter().enumerate() {
            let d2: f64 = pixel
                .iter()
                .zip(ck.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = if squared_distance { d2 } else { d2.sqrt() };
            row[k] = -d * scale;
        }
        // log-sum-exp
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    ProbabilityMatrix::new(p)
}

/// `f = -log(p + δ) + log(1 - p + δ)`.
pub fn region_force_log(p: &ProbabilityMatrix, delta: f64) -> Result<RegionForceMatrix> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(PottsError::invalid(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    if delta == 0.0 {
        if let Some(((i, k), v)) = p
            .view()
            .indexed_iter()
            .find(|(_, v)| **v == 0.0 || **v == 1.0)
        {
            return Err(PottsError::NumericDegeneracy(format!(
                "log force with delta=0 is infinite at p={v} (node {i}, class {k})"
            )));
        }
    }
    RegionForceMatrix::new(p.view().mapv(|v| log_force(v, delta)))
}

pub(crate) fn log_force(p: f64, delta: f64) -> f64 {
    -(p + delta).ln() + (1.0 - p + delta).ln()
}

/// `f = 1 - 2p`.
pub fn region_force_linear(p: &ProbabilityMatrix) -> RegionForceMatrix {
    RegionForceMatrix(p.view().mapv(|v| 1.0 - 2.0 * v))
}

/// Squared color distance to each centroid.
pub fn region_force_l2(
    colors: ArrayView2<'_, f64>,
    centroids: &CentroidSet,
) -> Result<RegionForceMatrix> {
    let c = centroids.view();
    if c.ncols() != colors.ncols() {
        return Err(PottsError::SizeMismatch {
            what: "color channels",
            expected: c.ncols(),
            actual: colors.ncols(),
        });
    }
    let mut f = Array2::<f64>::zeros((colors.nrows(), c.nrows()));
    for (pixel, mut row) in colors.outer_iter().zip(f.outer_iter_mut()) {
        for (k, ck) in c.outer_iter().enumerate() {
            row[k] = pixel
                .iter()
                .zip(ck.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    }
    RegionForceMatrix::new(f)
}

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

/// Lloyd's k-means with k-means++ seeding. Empty clusters are re-seeded at
/// the point farthest from its assigned centroid.
pub fn kmeans_centroids(
    points: ArrayView2<'_, f64>,
    k: usize,
    rng_seed: u64,
) -> Result<CentroidSet> {
    let n = points.nrows();
    if k == 0 {
        return Err(PottsError::invalid("k-means needs k >= 1"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(PottsError::invalid("non-finite point in k-means input"));
    }
    let distinct = count_distinct(points);
    if distinct < k {
        return Err(PottsError::invalid(format!(
            "k-means needs at least {k} distinct points, found {distinct}"
        )));
    }
    let dist2 = |a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centers = Array2::<f64>::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.gen_range(0..n)));
    let mut nearest: Vec<f64> = points
        .outer_iter()
        .map(|p| dist2(p, centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in nearest.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        if nearest[pick] == 0.0 {
            // rounding ran off the end; fall back to the last point with mass
            pick = nearest
                .iter()
                .rposition(|&d| d > 0.0)
                .expect("distinct points remain");
        }
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, centers.row(c)));
        }
    }

    let mut assign = vec![0usize; n];
    let mut assign_d = vec![0.0; n];
    for _ in 0..KMEANS_MAX_ITER {
        for (i, p) in points.outer_iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.outer_iter().enumerate() {
                let d = dist2(p, center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assign[i] = best.1;
            assign_d[i] = best.0;
        }
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.outer_iter().enumerate() {
            sums.row_mut(assign[i]).scaled_add(1.0, &p);
            counts[assign[i]] += 1;
        }
        let mut moved: f64 = 0.0;
        for c in 0..k {
            let new_center = if counts[c] > 0 {
                sums.row(c).mapv(|v| v / counts[c] as f64)
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| assign_d[a].total_cmp(&assign_d[b]).then(b.cmp(&a)))
                    .expect("n > 0");
                assign_d[far] = 0.0;
                points.row(far).to_owned()
            };
            moved = moved.max(dist2(new_center.view(), centers.row(c)).sqrt());
            centers.row_mut(c).assign(&new_center);
        }
        if moved <= KMEANS_TOL {
            break;
        }
    }
    CentroidSet::new(centers)
}

fn count_distinct(points: ArrayView2<'_, f64>) -> usize {
    let mut rows: Vec<Vec<f64>> = points.outer_iter().map(|r| r.to_vec()).collect();
    let cmp = |a: &Vec<f64>, b: &Vec<f64>| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    rows.sort_by(cmp);
    rows.dedup_by(|a, b| cmp(a, b).is_eq());
    rows.len()
}
