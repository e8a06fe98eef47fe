//! Convex-relaxed Potts solvers.
//!
//! Both algorithms minimize `sum_k <f_k, phi_k> + TV_alpha(phi_k)` over
//! row-simplex fields `phi`. [`pdhg_solve`] works on the min-max form with
//! dual flows bounded by `alpha`; [`admm_solve`] runs the augmented Lagrangian
//! on the max-flow dual (source flow `lambda`, sink flows `h_k <= f_k`) and
//! reads the labeling off the multipliers.
//!
//! Convergence is monitored with the primal energy and the dual energy
//! `sum_x min_k (f_k + div q_k)`; iteration stops when the relative absolute
//! gap `|E_P - E_D| / |E_P|` drops to `epsilon`.

mod admm;
mod backend;
mod pdhg;

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{PottsError, Result};
use crate::io::write_atomic;
use crate::region::RegionForceMatrix;

pub use admm::{admm_solve, augmented_lagrangian, source_flow_update};
pub use backend::{project_dual_ball, DualFlow, TvBackend, TvFlavor};
pub use pdhg::pdhg_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pdhg,
    Admm,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Pdhg => "pdhg",
            Algorithm::Admm => "admm",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = PottsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdhg" => Ok(Algorithm::Pdhg),
            "admm" => Ok(Algorithm::Admm),
            _ => Err(PottsError::invalid(format!(
                "unknown solver {s:?} (pdhg|admm)"
            ))),
        }
    }
}

/// Per-iteration step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `beta` and `gamma` from the config at every iteration.
    Constant,
    /// `beta_l = 0.5 l`, `gamma_l = 0.5 / (1 + 0.1 l)` for `l = 1, 2, ...`.
    Growing,
}

impl StepSchedule {
    pub(crate) fn steps(&self, config: &SolverConfig, iteration: usize) -> (f64, f64) {
        match self {
            StepSchedule::Constant => (config.beta, config.gamma),
            StepSchedule::Growing => {
                let l = iteration as f64;
                (0.5 * l, 0.5 / (1.0 + 0.1 * l))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// One-hot rows at `argmin_k f_k`.
    ArgminOneHot,
    /// Every row `1/K`.
    Uniform,
}

/// Which operands the PDHG steps use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdhgOrdering {
    /// Dual step on the extrapolated primal, primal step on the fresh dual.
    Standard,
    /// Dual step on the previous primal, primal step on the previous dual,
    /// exactly as the two updates are usually printed.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Dual step.
    pub beta: f64,
    /// Primal step (PDHG).
    pub gamma: f64,
    /// Extrapolation weight, `bar = theta * old + (1 - theta) * new`.
    pub theta: f64,
    /// ADMM penalty.
    pub c: f64,
    /// Relative duality-gap tolerance.
    pub epsilon: f64,
    pub max_iter: usize,
    pub tv_flavor: TvFlavor,
    pub step_schedule: StepSchedule,
    pub init: Initialization,
    pub pdhg_ordering: PdhgOrdering,
    /// Per-class updates run sequentially when set; results are identical
    /// either way.
    pub deterministic: bool,
}

impl SolverConfig {
    pub fn pdhg(tv_flavor: TvFlavor) -> Self {
        SolverConfig {
            algorithm: Algorithm::Pdhg,
            beta: 0.4,
            gamma: 0.4,
            theta: -0.5,
            c: 0.1,
            epsilon: 1e-5,
            max_iter: 2500,
            tv_flavor,
            step_schedule: StepSchedule::Constant,
            init: Initialization::ArgminOneHot,
            pdhg_ordering: PdhgOrdering::Standard,
            deterministic: true,
        }
    }

    pub fn admm(tv_flavor: TvFlavor) -> Self {
        SolverConfig {
            algorithm: Algorithm::Admm,
            beta: 0.05,
            c: 0.1,
            ..Self::pdhg(tv_flavor)
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("c", self.c),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PottsError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.theta.is_finite() {
            return Err(PottsError::Config(format!(
                "theta must be finite, got {}",
                self.theta
            )));
        }
        if self.max_iter == 0 {
            return Err(PottsError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Gap,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub primal_energy_history: Vec<f64>,
    pub dual_energy_history: Vec<f64>,
    /// Relative gap at the last iteration (absolute when `E_P = 0`).
    pub final_gap: f64,
    /// Primal energy of the returned, simplex-feasible field.
    pub extracted_primal_energy: f64,
    pub wall_time_s: f64,
    pub termination: Termination,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    algorithm: &'a str,
    iterations: usize,
    final_gap: f64,
    primal_energy: f64,
    dual_energy: f64,
    wall_time_s: f64,
    termination: Termination,
}

impl SolverReport {
    pub fn primal_energy(&self) -> f64 {
        self.primal_energy_history
            .last()
            .copied()
            .unwrap_or(f64::NAN)
    }

    pub fn dual_energy(&self) -> f64 {
        self.dual_energy_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Relative gap after `iteration` iterations (1-based).
    pub fn gap_at(&self, iteration: usize) -> Option<f64> {
        let ep = *self.primal_energy_history.get(iteration.checked_sub(1)?)?;
        let ed = self.dual_energy_history[iteration - 1];
        Some(relative_gap(ep, ed))
    }

    /// `{algorithm, iterations, final_gap, primal_energy, dual_energy, wall_time_s, termination}`.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(ReportSummary {
            algorithm: self.algorithm.name(),
            iterations: self.iterations,
            final_gap: self.final_gap,
            primal_energy: self.primal_energy(),
            dual_energy: self.dual_energy(),
            wall_time_s: self.wall_time_s,
            termination: self.termination,
        })
        .expect("plain struct serializes")
    }

    /// `iter,E_P,E_D` rows.
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            writeln!(w, "iter,E_P,E_D")?;
            for (l, (p, d)) in self
                .primal_energy_history
                .iter()
                .zip(&self.dual_energy_history)
                .enumerate()
            {
                writeln!(w, "{},{p},{d}", l + 1)?;
            }
            Ok(())
        })
    }
}

/// Output of a solve: the relaxed labeling (N×K, rows on the simplex), the
/// final dual flows and the run report.
#[derive(Debug, Clone)]
pub struct Solution {
    pub phi: Array2<f64>,
    pub flows: DualFlow,
    pub report: SolverReport,
}

impl Solution {
    pub fn labels(&self) -> Vec<usize> {
        assign_labels(self.phi.view())
    }
}

/// Runs the algorithm selected in `config`.
pub fn solve(
    forces: &RegionForceMatrix,
    alpha: &[f64],
    backend: &TvBackend<'_>,
    config: &SolverConfig,
) -> Result<Solution> {
    match config.algorithm {
        Algorithm::Pdhg => pdhg_solve(forces, alpha, backend, config),
        Algorithm::Admm => admm_solve(forces, alpha, backend, config),
    }
}

pub(crate) fn check_inputs(
    forces: &RegionForceMatrix,
    alpha: &[f64],
    backend: &TvBackend<'_>,
    config: &SolverConfig,
    expected: Algorithm,
) -> Result<()> {
    config.validate()?;
    if config.algorithm != expected {
        return Err(PottsError::Config(format!(
            "config selects {} but {} was called",
            config.algorithm.name(),
            expected.name()
        )));
    }
    if config.tv_flavor != backend.flavor() {
        return Err(PottsError::Config(format!(
            "config TV flavor {:?} does not match the {:?} backend",
            config.tv_flavor,
            backend.flavor()
        )));
    }
    crate::error::check_len("region forces", backend.n_nodes(), forces.n_nodes())?;
    if forces.n_classes() == 0 {
        return Err(PottsError::invalid("need at least one class"));
    }
    backend.check_alpha(alpha)
}

/// `|E_P - E_D| / |E_P|`, falling back to the absolute gap when `E_P = 0`.
pub fn relative_gap(primal: f64, dual: f64) -> f64 {
    let diff = (primal - dual).abs();
    if primal == 0.0 {
        diff
    } else {
        diff / primal.abs()
    }
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_simplex_in_place(&mut out, &mut Vec::with_capacity(v.len()));
    out
}

pub(crate) fn project_simplex_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    // points already on the simplex up to rounding are left untouched
    let sum: f64 = v.iter().sum();
    if v.iter().all(|&x| x >= 0.0) && (sum - 1.0).abs() <= 4.0 * f64::EPSILON * v.len() as f64 {
        return;
    }
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Per-row argmax, ties to the smallest class index.
pub fn assign_labels(phi: ArrayView2<'_, f64>) -> Vec<usize> {
    phi.outer_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// `sum_k <f_k, phi_k> + TV_alpha(phi_k)`.
pub fn primal_energy(
    forces: &RegionForceMatrix,
    phi: ArrayView2<'_, f64>,
    alpha: &[f64],
    backend: &TvBackend<'_>,
) -> Result<f64> {
    crate::error::check_len("primal field rows", forces.n_nodes(), phi.nrows())?;
    crate::error::check_len("primal field columns", forces.n_classes(), phi.ncols())?;
    crate::error::check_len("region forces", backend.n_nodes(), forces.n_nodes())?;
    backend.check_alpha(alpha)?;
    let columns: Vec<Vec<f64>> = phi.columns().into_iter().map(|c| c.to_vec()).collect();
    Ok(primal_energy_columns(forces, &columns, alpha, backend))
}

pub(crate) fn primal_energy_columns<C: AsRef<[f64]>>(
    forces: &RegionForceMatrix,
    phi: &[C],
    alpha: &[f64],
    backend: &TvBackend<'_>,
) -> f64 {
    let f = forces.view();
    let mut total = 0.0;
    for (k, col) in phi.iter().enumerate() {
        let col = col.as_ref();
        let fit: f64 = col.iter().enumerate().map(|(i, v)| f[[i, k]] * v).sum();
        total += fit + backend.tv(col, alpha);
    }
    total
}

/// `sum_x min_k (f_k(x) + div q_k(x))`.
pub fn dual_energy(
    forces: &RegionForceMatrix,
    flows: &DualFlow,
    backend: &TvBackend<'_>,
) -> Result<f64> {
    flows.check_backend(backend)?;
    crate::error::check_len("region forces", backend.n_nodes(), forces.n_nodes())?;
    crate::error::check_len("flow classes", forces.n_classes(), flows.n_classes())?;
    let n = backend.n_nodes();
    let divs: Vec<Vec<f64>> = (0..flows.n_classes())
        .map(|k| {
            let mut d = vec![0.0; n];
            backend.div_into(flows.class(k), &mut d);
            d
        })
        .collect();
    let divs: Vec<&[f64]> = divs.iter().map(Vec::as_slice).collect();
    Ok(dual_energy_divs(forces, &divs))
}

pub(crate) fn dual_energy_divs(forces: &RegionForceMatrix, divs: &[&[f64]]) -> f64 {
    let f = forces.view();
    let mut total = 0.0;
    for i in 0..f.nrows() {
        let mut m = f64::INFINITY;
        for (k, d) in divs.iter().enumerate() {
            m = m.min(f[[i, k]] + d[i]);
        }
        total += m;
    }
    total
}

/// Class-major initial field.
pub(crate) fn initial_field(forces: &RegionForceMatrix, init: Initialization) -> Vec<Vec<f64>> {
    let f = forces.view();
    let (n, k) = f.dim();
    match init {
        Initialization::Uniform => vec![vec![1.0 / k as f64; n]; k],
        Initialization::ArgminOneHot => {
            let mut phi = vec![vec![0.0; n]; k];
            for (i, row) in f.outer_iter().enumerate() {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v < row[best] {
                        best = c;
                    }
                }
                phi[best][i] = 1.0;
            }
            phi
        }
    }
}

pub(crate) fn to_row_major(phi: &[Vec<f64>]) -> Array2<f64> {
    let k = phi.len();
    let n = phi.first().map_or(0, Vec::len);
    Array2::from_shape_fn((n, k), |(i, c)| phi[c][i])
}

/// Tracks energies, the gap and the stopping rule across iterations.
pub(crate) struct Monitor {
    epsilon: f64,
    primal: Vec<f64>,
    dual: Vec<f64>,
    start: std::time::Instant,
}

impl Monitor {
    pub(crate) fn new(config: &SolverConfig) -> Self {
        Monitor {
            epsilon: config.epsilon,
            primal: Vec::with_capacity(config.max_iter.min(4096)),
            dual: Vec::with_capacity(config.max_iter.min(4096)),
            start: std::time::Instant::now(),
        }
    }

    /// Records one iteration; `Ok(true)` when the gap criterion is met.
    pub(crate) fn record(&mut self, iteration: usize, primal: f64, dual: f64) -> Result<bool> {
        if !primal.is_finite() || !dual.is_finite() {
            return Err(PottsError::Divergence {
                iteration,
                detail: format!("energies E_P={primal}, E_D={dual}"),
            });
        }
        self.primal.push(primal);
        self.dual.push(dual);
        Ok(relative_gap(primal, dual) <= self.epsilon)
    }

    pub(crate) fn finish(
        self,
        algorithm: Algorithm,
        converged: bool,
        extracted_primal_energy: f64,
    ) -> SolverReport {
        let final_gap = match (self.primal.last(), self.dual.last()) {
            (Some(&p), Some(&d)) => relative_gap(p, d),
            _ => f64::NAN,
        };
        SolverReport {
            algorithm,
            iterations: self.primal.len(),
            primal_energy_history: self.primal,
            dual_energy_history: self.dual,
            final_gap,
            extracted_primal_energy,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            termination: if converged {
                Termination::Gap
            } else {
                Termination::MaxIter
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn simplex_projection_examples() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(project_simplex(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = project_simplex(&[-3.0, 1.5, 0.7]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(p[0], 0.0);
        let twice = project_simplex(&p);
        assert_eq!(p, twice);
    }

    #[test]
    fn label_assignment() {
        let phi = array![
            [0.0, 1.0, 0.0],
            [0.4, 0.4, 0.2],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
        ];
        assert_eq!(assign_labels(phi.view()), vec![1, 0, 0]);
    }

    #[test]
    fn relative_gap_falls_back_to_absolute() {
        assert_eq!(relative_gap(0.0, -0.25), 0.25);
        assert_eq!(relative_gap(-2.0, -2.5), 0.25);
    }

    #[test]
    fn growing_schedule() {
        let cfg = SolverConfig::pdhg(TvFlavor::AnisotropicGraph);
        assert_eq!(StepSchedule::Constant.steps(&cfg, 7), (0.4, 0.4));
        let (b, g) = StepSchedule::Growing.steps(&cfg, 10);
        assert_eq!(b, 5.0);
        assert_eq!(g, 0.25);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::admm(TvFlavor::IsotropicGrid);
        assert!(cfg.validate().is_ok());
        cfg.c = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig::pdhg(TvFlavor::IsotropicGrid).with_max_iter(0);
        assert!(cfg.validate().is_err());
    }
}
