use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PottsError, Result};
use crate::graph::{build_knn_graph, normalize_affinity, Graph, SparseMatrix, WeightKind};
use crate::io::{read_labels_csv, read_points_csv};
use crate::region::{
    diffusion_probabilities, region_force_linear, region_force_log, ForceKind, ProbabilityMatrix,
    SeedSet, DEFAULT_DELTA,
};
use crate::solver::{solve, SolverConfig, SolverReport, TvBackend, TvFlavor};

/// Points with ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    /// `K` defaults to the largest label plus one.
    pub fn new(points: Array2<f64>, labels: Vec<usize>, n_classes: Option<usize>) -> Result<Self> {
        check_len("labels", points.nrows(), labels.len())?;
        if points.iter().any(|v| !v.is_finite()) {
            return Err(PottsError::invalid("non-finite coordinate in dataset"));
        }
        let inferred = labels.iter().max().map_or(0, |&m| m + 1);
        let n_classes = n_classes.unwrap_or(inferred);
        if inferred > n_classes {
            return Err(PottsError::invalid(format!(
                "label {} out of range for K={n_classes}",
                inferred - 1
            )));
        }
        if n_classes == 0 || points.nrows() < n_classes {
            return Err(PottsError::invalid(format!(
                "dataset needs at least K points and K >= 1 (N={}, K={n_classes})",
                points.nrows()
            )));
        }
        Ok(Dataset {
            points,
            labels,
            n_classes,
        })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircleSelection {
    /// Each circle equally likely.
    PerCircle,
    /// Circle chosen with probability proportional to its radius.
    ArcLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeCircles {
    pub n_points: usize,
    pub dim: usize,
    pub noise_variance: f64,
    pub selection: CircleSelection,
    pub noise: bool,
}

impl Default for ThreeCircles {
    fn default() -> Self {
        ThreeCircles {
            n_points: 6000,
            dim: 100,
            noise_variance: 0.16,
            selection: CircleSelection::PerCircle,
            noise: true,
        }
    }
}

impl ThreeCircles {
    /// Concentric circles of radius 1, 2, 3 in the first two coordinates,
    /// zero padded to `dim`, plus i.i.d. Gaussian noise on every coordinate.
    /// The label is the circle index.
    pub fn generate(&self, rng_seed: u64) -> Result<Dataset> {
        if self.dim < 2 || self.n_points < 3 {
            return Err(PottsError::invalid(
                "three circles needs dim >= 2 and at least 3 points",
            ));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(PottsError::invalid(format!(
                "noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let noise = Normal::new(0.0, self.noise_variance.sqrt()).expect("checked variance");
        let mut points = Array2::<f64>::zeros((self.n_points, self.dim));
        let mut labels = Vec::with_capacity(self.n_points);
        for mut row in points.outer_iter_mut() {
            let class = match self.selection {
                CircleSelection::PerCircle => rng.gen_range(0..3),
                CircleSelection::ArcLength => match rng.gen_range(0..6) {
                    0 => 0,
                    1 | 2 => 1,
                    _ => 2,
                },
            };
            let radius = (class + 1) as f64;
            let theta = rng.gen_range(0.0..2.0 * PI);
            row[0] = radius * theta.cos();
            row[1] = radius * theta.sin();
            if self.noise {
                for v in row.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
            labels.push(class);
        }
        Dataset::new(points, labels, Some(3))
    }
}

/// The standard 6000-point, 100-dimensional Three-Circles set.
pub fn gen_three_circles(rng_seed: u64) -> Dataset {
    ThreeCircles::default()
        .generate(rng_seed)
        .expect("default parameters are valid")
}

/// Points CSV (one row per point) and labels CSV (one label per row).
pub fn load_dataset(points_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let points = read_points_csv(points_path)?;
    let labels = read_labels_csv(labels_path)?;
    if points.nrows() != labels.len() {
        return Err(PottsError::Parse {
            source_name: labels_path.display().to_string(),
            line: points.nrows().min(labels.len()) + 1,
            message: format!("{} points but {} labels", points.nrows(), labels.len()),
        });
    }
    Dataset::new(points, labels, None)
}

const SEED_REDRAWS: usize = 100;

/// Draws `n_seeds` points uniformly without replacement, redrawing the whole
/// set until every class has a seed. With `stratified` each class instead
/// gets `n_seeds / K` seeds (the remainder going to the lowest classes),
/// drawn uniformly within the class.
pub fn sample_seeds(
    dataset: &Dataset,
    n_seeds: usize,
    rng_seed: u64,
    stratified: bool,
) -> Result<SeedSet> {
    let (n, k) = (dataset.n_points(), dataset.n_classes());
    if n_seeds < k || n_seeds > n {
        return Err(PottsError::invalid(format!(
            "need K <= n_seeds <= N, got n_seeds={n_seeds}, K={k}, N={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    if stratified {
        let mut members = vec![Vec::new(); k];
        for (i, &l) in dataset.labels().iter().enumerate() {
            members[l].push(i);
        }
        let mut classes = Vec::with_capacity(k);
        for (c, m) in members.iter().enumerate() {
            let want = n_seeds / k + usize::from(c < n_seeds % k);
            if want > m.len() {
                return Err(PottsError::Seeding(format!(
                    "class {c} has {} points, {want} seeds requested",
                    m.len()
                )));
            }
            let mut picked: Vec<usize> = sample(&mut rng, m.len(), want)
                .into_iter()
                .map(|j| m[j])
                .collect();
            picked.sort_unstable();
            classes.push(picked);
        }
        return SeedSet::new(classes, n);
    }
    for _ in 0..SEED_REDRAWS {
        let mut classes = vec![Vec::new(); k];
        for i in sample(&mut rng, n, n_seeds) {
            classes[dataset.labels()[i]].push(i);
        }
        if classes.iter().all(|c| !c.is_empty()) {
            for c in &mut classes {
                c.sort_unstable();
            }
            return SeedSet::new(classes, n);
        }
    }
    Err(PottsError::Seeding(format!(
        "no draw of {n_seeds} seeds covered all {k} classes in {SEED_REDRAWS} attempts"
    )))
}

/// Fraction of positions where the two labelings agree.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_len("label vectors", truth.len(), predicted.len())?;
    if truth.is_empty() {
        return Err(PottsError::invalid("accuracy of an empty labeling"));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Neighbors per point.
    pub s: usize,
    pub weight: WeightKind,
    /// Diffusion power, 1 or 2.
    pub m: usize,
    /// Constant TV weight.
    pub alpha: f64,
    pub force: ForceKind,
    pub delta: f64,
    /// Self-loop weight added before normalization.
    pub self_loop: f64,
}

impl ClusterParams {
    /// Three-Circles settings for the given force.
    pub fn three_circles(force: ForceKind) -> Self {
        ClusterParams {
            s: 10,
            weight: WeightKind::Zmp,
            m: 2,
            alpha: if force == ForceKind::Linear { 0.5 } else { 3.0 },
            force,
            delta: DEFAULT_DELTA,
            self_loop: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(PottsError::Config("s must be at least 1".into()));
        }
        if !(self.m == 1 || self.m == 2) {
            return Err(PottsError::Config(format!(
                "m must be 1 or 2, got {}",
                self.m
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(PottsError::Config(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if self.force == ForceKind::L2 {
            return Err(PottsError::Config(
                "the l2 force needs centroids and only applies to images".into(),
            ));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(PottsError::Config(format!(
                "delta must be nonnegative, got {}",
                self.delta
            )));
        }
        if !(self.self_loop >= 0.0 && self.self_loop.is_finite()) {
            return Err(PottsError::Config(format!(
                "self_loop must be nonnegative, got {}",
                self.self_loop
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    /// Over all points, seeds clamped to their class.
    pub accuracy: f64,
    /// Over points that are not seeds, seeds clamped.
    pub accuracy_unlabeled: f64,
    /// Over all points, raw solver labels.
    pub accuracy_unclamped: f64,
    /// Over all points, argmax of the diffusion probabilities.
    pub probability_accuracy: f64,
    pub labels: Vec<usize>,
    pub seeds: SeedSet,
    pub report: SolverReport,
}

impl TrialResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "accuracy": self.accuracy,
            "accuracy_unlabeled": self.accuracy_unlabeled,
            "accuracy_unclamped": self.accuracy_unclamped,
            "probability_accuracy": self.probability_accuracy,
            "seeds": self.seeds.pairs(),
            "report": self.report.summary_json(),
        })
    }
}

/// kNN graph and normalized affinity for one dataset, reusable across
/// seed draws and solver settings.
#[derive(Debug, Clone)]
pub struct ClusterPipeline<'a> {
    dataset: &'a Dataset,
    params: ClusterParams,
    graph: Graph,
    w_hat: SparseMatrix,
}

impl<'a> ClusterPipeline<'a> {
    pub fn new(dataset: &'a Dataset, params: ClusterParams) -> Result<Self> {
        params.validate()?;
        let graph = build_knn_graph(dataset.points().view(), params.s, params.weight)?;
        let w_hat = normalize_affinity(&graph.to_affinity(params.self_loop))?;
        Ok(ClusterPipeline {
            dataset,
            params,
            graph,
            w_hat,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn params(&self) -> &ClusterParams {
        &self.params
    }

    /// Same graph, different force and TV weight.
    pub fn with_force(&self, force: ForceKind, alpha: f64) -> Result<Self> {
        let params = ClusterParams {
            force,
            alpha,
            ..self.params.clone()
        };
        params.validate()?;
        Ok(ClusterPipeline {
            params,
            ..self.clone()
        })
    }

    pub fn probabilities(&self, seeds: &SeedSet) -> Result<ProbabilityMatrix> {
        if seeds.n_classes() != self.dataset.n_classes() {
            return Err(PottsError::invalid(format!(
                "seed set has {} classes, dataset has {}",
                seeds.n_classes(),
                self.dataset.n_classes()
            )));
        }
        diffusion_probabilities(&self.w_hat, seeds, self.params.m)
    }

    pub fn run(&self, seeds: &SeedSet, config: &SolverConfig) -> Result<TrialResult> {
        if config.tv_flavor != TvFlavor::AnisotropicGraph {
            return Err(PottsError::Config(
                "clustering uses the anisotropic-graph TV flavor".into(),
            ));
        }
        let p = self.probabilities(seeds)?;
        let forces = match self.params.force {
            ForceKind::Log => region_force_log(&p, self.params.delta)?,
            ForceKind::Linear => region_force_linear(&p),
            ForceKind::L2 => unreachable!("rejected by validate"),
        };
        let alpha = vec![self.params.alpha; self.dataset.n_points()];
        let solution = solve(&forces, &alpha, &TvBackend::Graph(&self.graph), config)?;

        let truth = self.dataset.labels();
        let raw = solution.labels();
        let mut labels = raw.clone();
        let mut seeded = vec![false; labels.len()];
        for (i, k) in seeds.pairs() {
            labels[i] = k;
            seeded[i] = true;
        }
        let unlabeled: Vec<usize> = (0..labels.len()).filter(|&i| !seeded[i]).collect();
        let accuracy_unlabeled = if unlabeled.is_empty() {
            1.0
        } else {
            let pred: Vec<usize> = unlabeled.iter().map(|&i| labels[i]).collect();
            let tr: Vec<usize> = unlabeled.iter().map(|&i| truth[i]).collect();
            accuracy(&pred, &tr)?
        };
        Ok(TrialResult {
            accuracy: accuracy(&labels, truth)?,
            accuracy_unlabeled,
            accuracy_unclamped: accuracy(&raw, truth)?,
            probability_accuracy: accuracy(&p.argmax_labels(), truth)?,
            labels,
            seeds: seeds.clone(),
            report: solution.report,
        })
    }
}

/// Builds the graph and runs one trial.
pub fn cluster(
    dataset: &Dataset,
    seeds: &SeedSet,
    params: &ClusterParams,
    config: &SolverConfig,
) -> Result<TrialResult> {
    ClusterPipeline::new(dataset, params.clone())?.run(seeds, config)
}

/// Seeding for a batch of trials; trial `i` draws with `base_seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub n_seeds: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub stratified: bool,
}

#[derive(Debug, Clone)]
pub struct TrialAggregate {
    pub mean_accuracy: f64,
    /// Sample standard deviation (zero for one trial).
    pub std_accuracy: f64,
    pub mean_accuracy_unlabeled: f64,
    pub mean_accuracy_unclamped: f64,
    pub mean_probability_accuracy: f64,
    pub mean_iterations: f64,
    pub mean_wall_time_s: f64,
    pub all_converged: bool,
    pub trials: Vec<TrialResult>,
}

fn sorted_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

impl TrialAggregate {
    /// Fails on an empty trial list.
    pub fn from_trials(trials: Vec<TrialResult>) -> Result<Self> {
        if trials.is_empty() {
            return Err(PottsError::invalid("no trials to aggregate"));
        }
        let field = |f: fn(&TrialResult) -> f64| sorted_mean(trials.iter().map(f).collect());
        let mean_accuracy = field(|t| t.accuracy);
        let std_accuracy = if trials.len() > 1 {
            let mut sq: Vec<f64> = trials
                .iter()
                .map(|t| (t.accuracy - mean_accuracy).powi(2))
                .collect();
            sq.sort_by(f64::total_cmp);
            (sq.iter().sum::<f64>() / (trials.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(TrialAggregate {
            mean_accuracy,
            std_accuracy,
            mean_accuracy_unlabeled: field(|t| t.accuracy_unlabeled),
            mean_accuracy_unclamped: field(|t| t.accuracy_unclamped),
            mean_probability_accuracy: field(|t| t.probability_accuracy),
            mean_iterations: field(|t| t.report.iterations as f64),
            mean_wall_time_s: field(|t| t.report.wall_time_s),
            all_converged: trials
                .iter()
                .all(|t| t.report.termination == crate::solver::Termination::Gap),
            trials,
        })
    }

    /// Summary fields only; per-trial detail is in each [`TrialResult::to_json`].
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_trials": self.trials.len(),
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "mean_accuracy_unlabeled": self.mean_accuracy_unlabeled,
            "mean_accuracy_unclamped": self.mean_accuracy_unclamped,
            "mean_probability_accuracy": self.mean_probability_accuracy,
            "mean_iterations": self.mean_iterations,
            "mean_wall_time_s": self.mean_wall_time_s,
            "all_converged": self.all_converged,
        })
    }
}

/// Runs `spec.n_trials` trials on a prepared pipeline. Any failing trial
/// fails the whole batch. Trials run in parallel unless the solver config is
/// deterministic.
pub fn run_trials(
    pipeline: &ClusterPipeline<'_>,
    spec: &TrialSpec,
    config: &SolverConfig,
) -> Result<TrialAggregate> {
    if spec.n_trials == 0 {
        return Err(PottsError::invalid("n_trials must be at least 1"));
    }
    let one = |i: usize| -> Result<TrialResult> {
        let seeds = sample_seeds(
            pipeline.dataset,
            spec.n_seeds,
            spec.base_seed + i as u64,
            spec.stratified,
        )?;
        pipeline.run(&seeds, config)
    };
    let trials: Result<Vec<TrialResult>> = if config.deterministic {
        (0..spec.n_trials).map(one).collect()
    } else {
        (0..spec.n_trials).into_par_iter().map(one).collect()
    };
    TrialAggregate::from_trials(trials?)
}
