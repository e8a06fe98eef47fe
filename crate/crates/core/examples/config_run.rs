//! Clustering driven by a config file, the way the `cluster` command does it.
//! Defaults to the shipped Three-Circles preset on a reduced dataset.
//!
//!     cargo run --release --example config_run [CONFIG]

use potts::clustering::{run_trials, ClusterPipeline, ThreeCircles};
use potts::config::{preset, RunConfig};
use potts::solver::TvFlavor;

fn main() -> potts::error::Result<()> {
    let mut conf = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::parse(preset("three-circles").unwrap(), "preset:three-circles")?,
    };
    conf.set("n_trials", "3")?;
    conf.set("n_seeds", "30")?;

    let ds = ThreeCircles {
        n_points: 1500,
        noise_variance: 0.0256,
        ..ThreeCircles::default()
    }
    .generate(3)?;
    let pipeline = ClusterPipeline::new(&ds, conf.cluster_params()?)?;
    let solver = conf.solver_config(None, TvFlavor::AnisotropicGraph, 1e-3);
    let agg = run_trials(&pipeline, &conf.trial_spec(), &solver)?;
    println!(
        "{} / {} force: {}",
        solver.algorithm.name(),
        pipeline.params().force.name(),
        serde_json::to_string_pretty(&agg.to_json()).expect("json")
    );
    Ok(())
}
