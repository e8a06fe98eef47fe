//! Class probabilities from a few seeds on a kNN graph of two noisy
//! half-moons. Diffusion with m <= 2 only reaches points within two hops of a
//! seed; the Potts solve then spreads the labels along the graph.
//!
//!     cargo run --release --example diffusion_probabilities

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use potts::clustering::{ClusterParams, ClusterPipeline, Dataset};
use potts::graph::normalize_affinity;
use potts::region::{diffusion_probabilities, region_force_log, ForceKind, SeedSet};
use potts::solver::{SolverConfig, TvFlavor};

fn main() -> potts::error::Result<()> {
    let n = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.08).unwrap();
    let truth: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let pts = Array2::from_shape_fn((n, 2), |(i, d)| {
        let t = std::f64::consts::PI * (i / 2) as f64 / (n / 2) as f64;
        let (x, y) = if truth[i] == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        (if d == 0 { x } else { y }) + noise.sample(&mut rng)
    });
    let ds = Dataset::new(pts, truth.clone(), Some(2))?;
    let params = ClusterParams {
        s: 10,
        ..ClusterParams::three_circles(ForceKind::Log)
    };
    let pipeline = ClusterPipeline::new(&ds, params)?;
    let seeds = SeedSet::new(vec![vec![0, 100, 200, 300], vec![1, 101, 201, 301]], n)?;

    let w_hat = normalize_affinity(&pipeline.graph().to_affinity(1.0))?;
    for m in [1, 2] {
        let p = diffusion_probabilities(&w_hat, &seeds, m)?;
        let reached = p
            .view()
            .outer_iter()
            .filter(|r| (r[0] - 0.5).abs() > 1e-12)
            .count();
        println!("m={m}: {reached}/{n} points have non-uniform probabilities");
    }

    let p = pipeline.probabilities(&seeds)?;
    let f = region_force_log(&p, 1e-3)?;
    println!("  point   p_0     log force f_0");
    for i in [0, 2, 4, 50, 399] {
        println!(
            "  {i:>5}  {:.3}  {:+8.3}",
            p.view()[[i, 0]],
            f.view()[[i, 0]]
        );
    }

    let run = pipeline.run(&seeds, &SolverConfig::pdhg(TvFlavor::AnisotropicGraph))?;
    println!(
        "Potts labels: {:.1}% correct after {} iterations (probability argmax {:.1}%)",
        100.0 * run.accuracy,
        run.report.iterations,
        100.0 * run.probability_accuracy
    );
    Ok(())
}
