use rayon::prelude::*;

use super::{
    check_inputs, dual_energy_divs, initial_field, primal_energy_columns, project_simplex_in_place,
    to_row_major, Algorithm, DualFlow, Monitor, Solution, SolverConfig, TvBackend,
};
use crate::error::Result;
use crate::region::RegionForceMatrix;

/// Augmented Lagrangian of the max-flow dual,
/// `sum lambda + sum_k <phi_k, r_k> - c/2 sum_k |r_k|^2` with the flow
/// conservation residual `r_k = div q_k - lambda + h_k`.
///
/// Fields are class-major: `divs[k]`, `sink[k]` and `phi[k]` have one entry
/// per node.
pub fn augmented_lagrangian(
    lambda: &[f64],
    divs: &[Vec<f64>],
    sink: &[Vec<f64>],
    phi: &[Vec<f64>],
    c: f64,
) -> f64 {
    let mut total: f64 = lambda.iter().sum();
    for k in 0..divs.len() {
        for i in 0..lambda.len() {
            let r = divs[k][i] - lambda[i] + sink[k][i];
            total += phi[k][i] * r - 0.5 * c * r * r;
        }
    }
    total
}

/// Closed-form maximizer of [`augmented_lagrangian`] over `lambda`:
/// `(1/K) sum_k (div q_k + h_k - phi_k / c) + 1 / (K c)`.
pub fn source_flow_update(
    divs: &[Vec<f64>],
    sink: &[Vec<f64>],
    phi: &[Vec<f64>],
    c: f64,
) -> Vec<f64> {
    let k_classes = divs.len() as f64;
    let n = divs.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..divs.len() {
                acc += divs[k][i] + sink[k][i] - phi[k][i] / c;
            }
            acc / k_classes + 1.0 / (k_classes * c)
        })
        .collect()
}

struct ClassState {
    flow: Vec<f64>,
    grad: Vec<f64>,
    residual: Vec<f64>,
    div: Vec<f64>,
    sink: Vec<f64>,
    phi: Vec<f64>,
}

/// ADMM on the max-flow dual. Per iteration, with `d_k = div q_k`:
///
/// 1. `lambda <- (1/K) sum_k (d_k + h_k - phi_k/c) + 1/(Kc)`
/// 2. `h_k <- min(phi_k/c + lambda - d_k, f_k)`
/// 3. one projected gradient step on `q_k` for `-|d_k - lambda + h_k - phi_k/c|^2`
/// 4. `phi_k <- phi_k - c (h_k + div q_k - lambda)`
///
/// The multipliers `phi` may leave the simplex while iterating; energies are
/// evaluated on them as they are, so the gap can be transiently negative. The
/// returned field is the multiplier field projected row-wise onto the simplex.
pub fn admm_solve(
    forces: &RegionForceMatrix,
    alpha: &[f64],
    backend: &TvBackend<'_>,
    config: &SolverConfig,
) -> Result<Solution> {
    check_inputs(forces, alpha, backend, config, Algorithm::Admm)?;
    let n = backend.n_nodes();
    let k_classes = forces.n_classes();
    let f = forces.view();
    let c = config.c;

    let mut monitor = Monitor::new(config);
    let mut classes: Vec<ClassState> = initial_field(forces, config.init)
        .into_iter()
        .enumerate()
        .map(|(k, phi)| ClassState {
            flow: vec![0.0; backend.flow_len()],
            grad: vec![0.0; backend.flow_len()],
            residual: vec![0.0; n],
            div: vec![0.0; n],
            sink: f.column(k).iter().map(|&v| v.min(0.0)).collect(),
            phi,
        })
        .collect();
    let mut lambda = vec![0.0; n];
    let mut converged = false;

    for l in 1..=config.max_iter {
        let (beta, _) = config.step_schedule.steps(config, l);

        for (i, lam) in lambda.iter_mut().enumerate() {
            let mut acc = 0.0;
            for cls in &classes {
                acc += cls.div[i] + cls.sink[i] - cls.phi[i] / c;
            }
            *lam = acc / k_classes as f64 + 1.0 / (k_classes as f64 * c);
        }

        let lambda_ref = &lambda;
        let class_step = |(k, cls): (usize, &mut ClassState)| {
            for i in 0..n {
                let p = cls.phi[i] / c;
                cls.sink[i] = (p + lambda_ref[i] - cls.div[i]).min(f[[i, k]]);
                cls.residual[i] = cls.div[i] - lambda_ref[i] + cls.sink[i] - p;
            }
            backend.div_adjoint_into(&cls.residual, &mut cls.grad);
            for (q, g) in cls.flow.iter_mut().zip(&cls.grad) {
                *q -= beta * g;
            }
            backend.project_into_ball(&mut cls.flow, alpha);
            backend.div_into(&cls.flow, &mut cls.div);
            for i in 0..n {
                cls.phi[i] -= c * (cls.sink[i] + cls.div[i] - lambda_ref[i]);
            }
        };
        if config.deterministic {
            classes.iter_mut().enumerate().for_each(class_step);
        } else {
            classes.par_iter_mut().enumerate().for_each(class_step);
        }

        let phi: Vec<&[f64]> = classes.iter().map(|c| c.phi.as_slice()).collect();
        let divs: Vec<&[f64]> = classes.iter().map(|c| c.div.as_slice()).collect();
        let ep = primal_energy_columns(forces, &phi, alpha, backend);
        let ed = dual_energy_divs(forces, &divs);
        if monitor.record(l, ep, ed)? {
            converged = true;
            break;
        }
    }

    let mut extracted: Vec<Vec<f64>> = classes.iter().map(|c| c.phi.clone()).collect();
    let mut row = vec![0.0; k_classes];
    let mut sort_buf = Vec::with_capacity(k_classes);
    for i in 0..n {
        for k in 0..k_classes {
            row[k] = extracted[k][i];
        }
        project_simplex_in_place(&mut row, &mut sort_buf);
        for k in 0..k_classes {
            extracted[k][i] = row[k];
        }
    }
    let extracted_refs: Vec<&[f64]> = extracted.iter().map(Vec::as_slice).collect();
    let extracted_energy = primal_energy_columns(forces, &extracted_refs, alpha, backend);
    let report = monitor.finish(Algorithm::Admm, converged, extracted_energy);
    let flows = DualFlow::from_flows(backend, classes.into_iter().map(|c| c.flow).collect())?;
    Ok(Solution {
        phi: to_row_major(&extracted),
        flows,
        report,
    })
}
