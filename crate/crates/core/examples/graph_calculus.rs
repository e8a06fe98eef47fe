//! Gradient, divergence and total variation on a small weighted graph and
//! on a pixel grid, with the adjoint identities checked numerically.
//!
//!     cargo run --example graph_calculus

use potts::graph::{grid_divergence, grid_gradient, Graph, GridGeometry, PixelVectorField};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn main() -> potts::error::Result<()> {
    // a square with one diagonal
    let g = Graph::from_edges(
        4,
        &[
            (0, 1, 1.0),
            (1, 2, 0.5),
            (2, 3, 1.0),
            (3, 0, 0.5),
            (0, 2, 0.25),
        ],
    )?;
    let u = [0.0, 1.0, 1.0, 0.0];
    let grad = g.gradient(&u)?;
    println!("directed edges and gradient:");
    for (e, v) in grad.iter().enumerate() {
        let (i, j, w) = g.edge(e);
        println!("  {i}->{j}  w={w:<5} grad={v:+.3}");
    }

    let q: Vec<f64> = (0..g.n_directed())
        .map(|e| (e as f64 * 0.7).sin())
        .collect();
    let div = g.divergence(&q)?;
    println!("divergence of a test flow: {div:.3?}");
    println!("<grad u, q> = {:.12}", dot(&grad, &q));
    println!("<u, div q>  = {:.12}", dot(&u, &div));
    println!("sum div q   = {:.1e}", div.iter().sum::<f64>());
    println!("TV(u), unit weights = {}", g.anisotropic_tv(&u, &[1.0; 4])?);

    let geom = GridGeometry::new(5, 4)?;
    let img: Vec<f64> = (0..20).map(|p| if p % 5 < 2 { 0.0 } else { 1.0 }).collect();
    let field = grid_gradient(geom, &img)?;
    let p = PixelVectorField {
        horizontal: (0..20).map(|i| (i as f64).cos()).collect(),
        vertical: (0..20).map(|i| (i as f64 * 0.3).sin()).collect(),
    };
    let gdiv = grid_divergence(geom, &p)?;
    println!(
        "grid: <grad u, p> = {:.12}, -<u, div p> = {:.12}",
        field.dot(&p),
        -dot(&img, &gdiv)
    );
    Ok(())
}
