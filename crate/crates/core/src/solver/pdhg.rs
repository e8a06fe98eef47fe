use rayon::prelude::*;

use super::{
    check_inputs, dual_energy_divs, initial_field, primal_energy_columns, project_simplex_in_place,
    to_row_major, Algorithm, DualFlow, Monitor, PdhgOrdering, Solution, SolverConfig, TvBackend,
};
use crate::error::Result;
use crate::region::RegionForceMatrix;

struct ClassState {
    flow: Vec<f64>,
    grad: Vec<f64>,
    div: Vec<f64>,
}

/// Primal-dual hybrid gradient on `min_phi max_q sum_k <f_k + div q_k, phi_k>`.
///
/// Each iteration:
/// 1. `q_k <- proj_ball(q_k + beta * div^T bar_k)` (on the grid this is
///    `q_k - beta grad bar_k`)
/// 2. `phi <- proj_simplex(phi - gamma (div q_k + f_k))` row by row
/// 3. `bar <- theta * phi_old + (1 - theta) * phi`
///
/// With [`PdhgOrdering::Literal`] step 1 uses `phi_old` instead of `bar` and
/// step 2 uses the divergence of the previous flow.
pub fn pdhg_solve(
    forces: &RegionForceMatrix,
    alpha: &[f64],
    backend: &TvBackend<'_>,
    config: &SolverConfig,
) -> Result<Solution> {
    check_inputs(forces, alpha, backend, config, Algorithm::Pdhg)?;
    let n = backend.n_nodes();
    let k_classes = forces.n_classes();
    let f = forces.view();
    let literal = config.pdhg_ordering == PdhgOrdering::Literal;

    let mut monitor = Monitor::new(config);
    let mut phi = initial_field(forces, config.init);
    let mut bar = phi.clone();
    let mut classes: Vec<ClassState> = (0..k_classes)
        .map(|_| ClassState {
            flow: vec![0.0; backend.flow_len()],
            grad: vec![0.0; backend.flow_len()],
            div: vec![0.0; n],
        })
        .collect();
    let mut prev_divs = vec![vec![0.0; n]; if literal { k_classes } else { 0 }];
    let mut row = vec![0.0; k_classes];
    let mut sort_buf = Vec::with_capacity(k_classes);
    let mut converged = false;

    for l in 1..=config.max_iter {
        let (beta, gamma) = config.step_schedule.steps(config, l);
        if literal {
            for (prev, cls) in prev_divs.iter_mut().zip(&classes) {
                prev.copy_from_slice(&cls.div);
            }
        }

        let operands = if literal { &phi } else { &bar };
        let dual_step = |(cls, operand): (&mut ClassState, &Vec<f64>)| {
            backend.div_adjoint_into(operand, &mut cls.grad);
            for (q, g) in cls.flow.iter_mut().zip(&cls.grad) {
                *q += beta * g;
            }
            backend.project_into_ball(&mut cls.flow, alpha);
            backend.div_into(&cls.flow, &mut cls.div);
        };
        if config.deterministic {
            classes.iter_mut().zip(operands).for_each(dual_step);
        } else {
            classes.par_iter_mut().zip(operands).for_each(dual_step);
        }

        for i in 0..n {
            for k in 0..k_classes {
                let d = if literal {
                    prev_divs[k][i]
                } else {
                    classes[k].div[i]
                };
                row[k] = phi[k][i] - gamma * (d + f[[i, k]]);
            }
            project_simplex_in_place(&mut row, &mut sort_buf);
            for k in 0..k_classes {
                let old = phi[k][i];
                phi[k][i] = row[k];
                bar[k][i] = config.theta * old + (1.0 - config.theta) * row[k];
            }
        }

        let ep = primal_energy_columns(forces, &phi, alpha, backend);
        let divs: Vec<&[f64]> = classes.iter().map(|c| c.div.as_slice()).collect();
        let ed = dual_energy_divs(forces, &divs);
        if monitor.record(l, ep, ed)? {
            converged = true;
            break;
        }
    }

    let extracted = primal_energy_columns(forces, &phi, alpha, backend);
    let report = monitor.finish(Algorithm::Pdhg, converged, extracted);
    let flows = DualFlow::from_flows(backend, classes.into_iter().map(|c| c.flow).collect())?;
    Ok(Solution {
        phi: to_row_major(&phi),
        flows,
        report,
    })
}
