//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any gating criterion fails.

mod common;

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use potts::clustering::{run_trials, ClusterPipeline, ThreeCircles, TrialAggregate};
use potts::config::{preset, RunConfig};
use potts::graph::{grid_divergence, grid_gradient, Graph, GridGeometry, PixelVectorField};
use potts::imaging::{permutation_accuracy, quadrant_image, segment_image, SegmentParams};
use potts::region::{region_force_log, ForceKind, ProbabilityMatrix, RegionForceMatrix};
use potts::solver::{
    dual_energy, primal_energy, project_dual_ball, project_simplex, solve, Algorithm, DualFlow,
    SolverConfig, TvBackend, TvFlavor,
};

struct Ledger {
    failed_gating: Vec<&'static str>,
}

impl Ledger {
    fn record(&mut self, id: &'static str, pass: bool, detail: String) {
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed_gating.push(id);
        }
    }

    fn note(&self, id: &str, detail: String) {
        println!("[NOTE] {id}: {detail}");
    }
}

fn summary(a: &TrialAggregate) -> String {
    format!(
        "mean {:.2}% (sd {:.2}), p-argmax {:.2}%, {:.0} iters, {:.2}s/trial",
        100.0 * a.mean_accuracy,
        100.0 * a.std_accuracy,
        100.0 * a.mean_probability_accuracy,
        a.mean_iterations,
        a.mean_wall_time_s
    )
}

struct CircleRuns {
    log_pdhg: TrialAggregate,
    log_admm: TrialAggregate,
    linear_pdhg: TrialAggregate,
    seconds: f64,
}

fn three_circles_runs(noise_variance: f64, conf: &RunConfig) -> CircleRuns {
    let start = Instant::now();
    let ds = ThreeCircles {
        noise_variance,
        ..ThreeCircles::default()
    }
    .generate(0)
    .unwrap();
    let params = conf.cluster_params().unwrap();
    let log = ClusterPipeline::new(&ds, params).unwrap();
    let linear = log
        .with_force(ForceKind::Linear, conf.alpha_linear.unwrap())
        .unwrap();
    let spec = conf.trial_spec();
    let pdhg = conf.solver_config(Some(Algorithm::Pdhg), TvFlavor::AnisotropicGraph, 1e-3);
    let admm = conf.solver_config(Some(Algorithm::Admm), TvFlavor::AnisotropicGraph, 1e-3);
    CircleRuns {
        log_pdhg: run_trials(&log, &spec, &pdhg).unwrap(),
        log_admm: run_trials(&log, &spec, &admm).unwrap(),
        linear_pdhg: run_trials(&linear, &spec, &pdhg).unwrap(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn gap_trend_holds(a: &TrialAggregate) -> bool {
    a.trials.iter().all(|t| {
        let r = &t.report;
        r.iterations < 10 || r.gap_at(r.iterations).unwrap() <= r.gap_at(10).unwrap()
    })
}

fn energy_agreement(a: &TrialAggregate, b: &TrialAggregate) -> f64 {
    a.trials
        .iter()
        .zip(&b.trials)
        .map(|(x, y)| {
            let (p, q) = (
                x.report.extracted_primal_energy,
                y.report.extracted_primal_energy,
            );
            (p - q).abs() / p.abs().max(q.abs()).max(1e-12)
        })
        .fold(0.0, f64::max)
}

fn criteria_1_to_4(ledger: &mut Ledger) {
    let conf = RunConfig::parse(preset("three-circles").unwrap(), "three-circles").unwrap();
    let runs = three_circles_runs(ThreeCircles::default().noise_variance, &conf);

    let acc = runs.log_pdhg.mean_accuracy;
    ledger.record(
        "C1 three-circles log/PDHG >= 96.5%",
        acc >= 0.965,
        format!(
            "{}; all three runs {:.0}s",
            summary(&runs.log_pdhg),
            runs.seconds
        ),
    );
    let d2 = (runs.log_admm.mean_accuracy - acc).abs();
    ledger.record(
        "C2 ADMM within 0.5pp of PDHG",
        d2 <= 0.005,
        format!("ADMM {}; diff {:.2}pp", summary(&runs.log_admm), 100.0 * d2),
    );
    let d3 = (runs.linear_pdhg.mean_accuracy - acc).abs();
    ledger.record(
        "C3 linear force within 1pp of log",
        d3 <= 0.01,
        format!(
            "linear {}; diff {:.2}pp",
            summary(&runs.linear_pdhg),
            100.0 * d3
        ),
    );
    let all = [&runs.log_pdhg, &runs.log_admm, &runs.linear_pdhg];
    let converged = all.iter().all(|a| {
        a.trials
            .iter()
            .all(|t| t.report.final_gap <= 1e-3 && t.report.iterations < 2500)
    });
    let worst = all
        .iter()
        .flat_map(|a| a.trials.iter().map(|t| t.report.iterations))
        .max()
        .unwrap();
    ledger.record(
        "C4 every trial reaches gap <= 1e-3 before 2500 iterations",
        converged,
        format!("max iterations over {} trials: {worst}", 3 * 10),
    );
    ledger.note(
        "gap trend (PDHG)",
        format!(
            "final gap <= gap at iteration 10: {}",
            gap_trend_holds(&runs.log_pdhg) && gap_trend_holds(&runs.linear_pdhg)
        ),
    );
    ledger.note(
        "PDHG/ADMM energy agreement",
        format!(
            "max relative difference {:.3e}",
            energy_agreement(&runs.log_pdhg, &runs.log_admm)
        ),
    );

    // Same pipeline with 0.16 read as the noise standard deviation.
    let alt = three_circles_runs(0.16 * 0.16, &conf);
    ledger.note(
        "three-circles with noise sd 0.16",
        format!(
            "log/PDHG {}; log/ADMM {:.2}%; linear/PDHG {:.2}%",
            summary(&alt.log_pdhg),
            100.0 * alt.log_admm.mean_accuracy,
            100.0 * alt.linear_pdhg.mean_accuracy
        ),
    );
}

fn criterion_5(ledger: &mut Ledger) {
    let (img, truth) = quadrant_image(64, 0.05, 7).unwrap();
    let mut worst = 1.0f64;
    let mut slowest = 0.0f64;
    for (force, beta, gamma) in [
        (ForceKind::Log, 0.6, 50.0),
        (ForceKind::Linear, 0.3, 70.0),
        (ForceKind::L2, 0.5, 70.0),
    ] {
        let params = SegmentParams {
            beta,
            gamma,
            ..SegmentParams::default()
        };
        for config in [
            SolverConfig::pdhg(TvFlavor::IsotropicGrid),
            SolverConfig::admm(TvFlavor::IsotropicGrid),
        ] {
            let start = Instant::now();
            let seg = segment_image(&img, 4, force, &params, &config).unwrap();
            slowest = slowest.max(start.elapsed().as_secs_f64());
            worst = worst.min(permutation_accuracy(&seg.labels, &truth, 4).unwrap());
        }
    }
    ledger.record(
        "C5 quadrant image >= 99% for 3 forces x 2 solvers, < 30 s per run",
        worst >= 0.99 && slowest < 30.0,
        format!(
            "worst accuracy {:.2}%, slowest run {slowest:.2}s",
            100.0 * worst
        ),
    );
}

fn criterion_6(ledger: &mut Ledger) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut hits = [0usize; 2];
    let mut worst_gap = [0.0f64; 2];
    for _ in 0..100 {
        let n = rng.gen_range(2..=10);
        let k = rng.gen_range(2..=3);
        let edges = random_edges(&mut rng, n, 0.3);
        let g = Graph::from_edges(n, &edges).unwrap();
        let f = Array2::from_shape_fn((n, k), |_| rng.gen_range(-1.0..1.0));
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
        let (best, _) = potts_brute_force(&edges, &alpha, &f);
        let forces = RegionForceMatrix::new(f.clone()).unwrap();
        for (slot, config) in [
            SolverConfig::pdhg(TvFlavor::AnisotropicGraph),
            SolverConfig::admm(TvFlavor::AnisotropicGraph),
        ]
        .into_iter()
        .enumerate()
        {
            let sol = solve(
                &forces,
                &alpha,
                &TvBackend::Graph(&g),
                &config.with_epsilon(1e-8).with_max_iter(20_000),
            )
            .unwrap();
            let gap = potts_objective(&edges, &alpha, &f, &sol.labels()) - best;
            if gap <= 1e-6 {
                hits[slot] += 1;
            } else {
                worst_gap[slot] = worst_gap[slot].max(gap);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ledger.record(
        "C6 brute-force optimum in >= 95/100 instances, < 1 min",
        hits.iter().all(|&h| h >= 95) && secs < 60.0,
        format!(
            "PDHG {}/100 (worst miss {:.2e}), ADMM {}/100 (worst miss {:.2e}), {secs:.1}s",
            hits[0], worst_gap[0], hits[1], worst_gap[1]
        ),
    );
}

fn criterion_7(ledger: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = Vec::new();

    let mut adj = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..15);
        let g = Graph::from_edges(n, &random_edges(&mut rng, n, 0.3)).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..g.n_directed())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let lhs: f64 = g
            .gradient(&u)
            .unwrap()
            .iter()
            .zip(&q)
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = g
            .divergence(&q)
            .unwrap()
            .iter()
            .zip(&u)
            .map(|(a, b)| a * b)
            .sum();
        adj += usize::from(!rel_close(lhs, rhs, 1e-12));

        let (w, h) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let geom = GridGeometry::new(w, h).unwrap();
        let u: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = PixelVectorField {
            horizontal: (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            vertical: (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let lhs = grid_gradient(geom, &u).unwrap().dot(&p);
        let rhs: f64 = grid_divergence(geom, &p)
            .unwrap()
            .iter()
            .zip(&u)
            .map(|(a, b)| a * b)
            .sum();
        adj += usize::from(!rel_close(lhs, -rhs, 1e-12));
    }
    if adj > 0 {
        failures.push(format!("adjointness {adj}"));
    }

    let simplex = (0..1000)
        .filter(|_| {
            let k = rng.gen_range(2..=10);
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            project_simplex(&v)
                .iter()
                .zip(simplex_oracle(&v))
                .any(|(a, b)| (a - b).abs() > 1e-8)
        })
        .count();
    if simplex > 0 {
        failures.push(format!("simplex {simplex}"));
    }

    let rows = random_simplex_rows(&mut rng, 500, 5);
    let p = ProbabilityMatrix::new(rows).unwrap();
    let bad_rows = p
        .view()
        .outer_iter()
        .filter(|r| (r.sum() - 1.0).abs() > 1e-10)
        .count();
    if bad_rows > 0 {
        failures.push(format!("row sums {bad_rows}"));
    }

    let bound = (1..=1000)
        .filter(|&i| {
            let p = i as f64 / 1001.0;
            let m =
                ProbabilityMatrix::new(Array2::from_shape_vec((1, 2), vec![p, 1.0 - p]).unwrap())
                    .unwrap();
            let f = region_force_log(&m, 0.0).unwrap().view()[[0, 0]];
            f > (1.0 - 2.0 * p) / p + 1e-12
        })
        .count();
    if bound > 0 {
        failures.push(format!("log-force bound {bound}"));
    }

    let mut duality = 0;
    for t in 0..100 {
        let k = rng.gen_range(1..5);
        let g;
        let backend = if t % 2 == 0 {
            let n = rng.gen_range(2..12);
            g = Graph::from_edges(n, &random_edges(&mut rng, n, 0.3)).unwrap();
            TvBackend::Graph(&g)
        } else {
            TvBackend::Grid(GridGeometry::new(rng.gen_range(1..7), rng.gen_range(1..7)).unwrap())
        };
        let n = backend.n_nodes();
        let f = RegionForceMatrix::new(Array2::from_shape_fn((n, k), |_| rng.gen_range(-3.0..3.0)))
            .unwrap();
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
        let phi = random_simplex_rows(&mut rng, n, k);
        let flows = (0..k)
            .map(|_| {
                (0..backend.flow_len())
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect()
            })
            .collect();
        let mut q = DualFlow::from_flows(&backend, flows).unwrap();
        project_dual_ball(&mut q, &alpha, &backend).unwrap();
        let ep = primal_energy(&f, phi.view(), &alpha, &backend).unwrap();
        let ed = dual_energy(&f, &q, &backend).unwrap();
        duality += usize::from(ed > ep + 1e-9 * (1.0 + ep.abs()));
    }
    if duality > 0 {
        failures.push(format!("weak duality {duality}"));
    }

    ledger.record(
        "C7 invariant suites with zero failures",
        failures.is_empty(),
        if failures.is_empty() {
            "adjointness 200, simplex 1000, row sums 500, log-force bound 1000, weak duality 100"
                .into()
        } else {
            format!("failures: {}", failures.join(", "))
        },
    );
}

#[test]
fn acceptance() {
    let mut ledger = Ledger {
        failed_gating: Vec::new(),
    };
    criterion_7(&mut ledger);
    criterion_6(&mut ledger);
    criterion_5(&mut ledger);
    criteria_1_to_4(&mut ledger);
    ledger.note(
        "C8",
        "timings, natural-image results and external-data accuracies are not gated".into(),
    );
    assert!(
        ledger.failed_gating.is_empty(),
        "failed criteria: {:?}",
        ledger.failed_gating
    );
}
