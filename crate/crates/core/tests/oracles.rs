#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::HashMap;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use potts::graph::{
    build_knn_graph, grid_divergence, grid_gradient, normalize_affinity, Graph, GridGeometry,
    PixelVectorField, SparseMatrix, WeightKind,
};
use potts::region::{
    diffusion_probabilities, kmeans_centroids, region_force_log, ProbabilityMatrix, SeedSet,
};
use potts::solver::{
    dual_energy, primal_energy, project_dual_ball, project_simplex, solve, DualFlow, SolverConfig,
    TvBackend, TvFlavor,
};

fn flow_vector(g: &Graph, map: &HashMap<(usize, usize), f64>) -> Vec<f64> {
    (0..g.n_directed())
        .map(|e| {
            let (i, j, _) = g.edge(e);
            map[&(i, j)]
        })
        .collect()
}

#[test]
fn graph_operators_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(2..15);
        let edges = random_edges(&mut rng, n, 0.3);
        let g = Graph::from_edges(n, &edges).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let map: HashMap<_, _> = directed(&edges)
            .iter()
            .map(|&(i, j, _)| ((i, j), rng.gen_range(-1.0..1.0)))
            .collect();
        let q = flow_vector(&g, &map);

        let grad = g.gradient(&u).unwrap();
        let lhs: f64 = grad.iter().zip(&q).map(|(a, b)| a * b).sum();
        assert!(rel_close(lhs, grad_dot(&edges, &u, &map), 1e-12));

        let div = g.divergence(&q).unwrap();
        for (a, b) in div.iter().zip(divergence(&edges, n, &map)) {
            assert!((a - b).abs() < 1e-12);
        }
        let rhs: f64 = u.iter().zip(&div).map(|(a, b)| a * b).sum();
        assert!(rel_close(lhs, rhs, 1e-12), "adjointness {lhs} vs {rhs}");
        let total: f64 = div.iter().sum();
        let scale: f64 = div.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        assert!(total.abs() <= 1e-12 * scale);
    }
}

#[test]
fn anisotropic_tv_equals_plugged_in_dual() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let n = rng.gen_range(2..10);
        let edges = random_edges(&mut rng, n, 0.4);
        let g = Graph::from_edges(n, &edges).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let tv = g.anisotropic_tv(&u, &alpha).unwrap();
        assert!(rel_close(tv, anisotropic_tv(&edges, &u, &alpha), 1e-12));
        // q*(i->j) = alpha_i sign(u_j - u_i) attains the maximum of <u, div q>
        let map: HashMap<_, _> = directed(&edges)
            .iter()
            .map(|&(i, j, _)| ((i, j), alpha[i] * (u[j] - u[i]).signum()))
            .collect();
        let div = divergence(&edges, n, &map);
        let dual: f64 = u.iter().zip(&div).map(|(a, b)| a * b).sum();
        assert!(rel_close(tv, -dual, 1e-12) || rel_close(tv, dual, 1e-12));
    }
}

#[test]
fn constant_fields_have_zero_tv_only_when_constant_per_component() {
    let g = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 0.5)]).unwrap();
    let alpha = [1.0; 4];
    assert_eq!(
        g.anisotropic_tv(&[2.0, 2.0, -1.0, -1.0], &alpha).unwrap(),
        0.0
    );
    assert!(g.anisotropic_tv(&[2.0, 2.1, -1.0, -1.0], &alpha).unwrap() > 0.0);
}

#[test]
fn grid_operators_are_negative_adjoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for t in 0..100 {
        let (w, h) = if t == 0 {
            (8, 6)
        } else {
            (rng.gen_range(1..12), rng.gen_range(1..12))
        };
        let geom = GridGeometry::new(w, h).unwrap();
        let u: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = PixelVectorField {
            horizontal: (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            vertical: (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let g = grid_gradient(geom, &u).unwrap();
        let (gx, gy) = grid_grad(w, h, &u);
        assert_eq!(g.horizontal, gx);
        assert_eq!(g.vertical, gy);
        let lhs = g.dot(&q);
        let div = grid_divergence(geom, &q).unwrap();
        let rhs: f64 = u.iter().zip(&div).map(|(a, b)| a * b).sum();
        assert!(rel_close(lhs, -rhs, 1e-12), "{w}x{h}: {lhs} vs {rhs}");
    }
}

#[test]
fn knn_graph_against_exhaustive_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 200;
    let pts = Array2::from_shape_fn((n, 3), |_| {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
    });
    let s = 5;
    let g = build_knn_graph(pts.view(), s, WeightKind::Zmp).unwrap();
    let dist = |i: usize, j: usize| -> f64 {
        (0..3)
            .map(|d| (pts[[i, d]] - pts[[j, d]]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut knn = Vec::new();
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
        knn.push(order[..s].to_vec());
    }
    let sigma: Vec<f64> = (0..n).map(|i| dist(i, knn[i][s - 1])).collect();
    for i in 0..n {
        let deg = g.degree(i);
        assert!((s..n).contains(&deg));
        for j in 0..n {
            let a = knn[i].contains(&j);
            let b = knn[j].contains(&i);
            let w = (-dist(i, j).powi(2) / (sigma[i] * sigma[j])).exp();
            let expected = (f64::from(u8::from(a)) + f64::from(u8::from(b))) * w / 2.0;
            assert!((g.weight(i, j) - expected).abs() < 1e-14);
            assert_eq!(g.weight(i, j).to_bits(), g.weight(j, i).to_bits());
        }
    }
}

#[test]
fn normalized_affinity_spectral_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..20 {
        let n = 10;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = if rng.gen::<f64>() < 0.6 {
                    rng.gen_range(0.0..3.0)
                } else {
                    0.0
                };
                dense[i][j] = v;
                dense[j][i] = v;
            }
            dense[i][(i + 1) % n] += 0.1;
            dense[(i + 1) % n][i] += 0.1;
        }
        let w_hat = normalize_affinity(&SparseMatrix::from_dense(&dense).unwrap()).unwrap();
        let m = DMatrix::from_fn(n, n, |i, j| w_hat.get(i, j));
        let oracle = dense_normalize(&DMatrix::from_fn(n, n, |i, j| dense[i][j]));
        assert!((&m - &oracle).abs().max() < 1e-14);
        assert!((&m - m.transpose()).abs().max() == 0.0);
        assert!(spectral_radius(&m) <= 1.0 + 1e-12);
    }
}

#[test]
fn simplex_projection_matches_qp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..1000 {
        let k = rng.gen_range(2..=10);
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let got = project_simplex(&v);
        let want = simplex_oracle(&v);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8, "{v:?}: {got:?} vs {want:?}");
        }
    }
}

fn affinity_with_self_loops(edges: &EdgeList, n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::identity(n, n);
    for &(i, j, v) in edges {
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    w
}

#[test]
fn diffusion_probabilities_match_dense_matrix_powers() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for t in 0..40 {
        let n = rng.gen_range(4..20);
        let edges = random_edges(&mut rng, n, 0.2);
        let g = Graph::from_edges(n, &edges).unwrap();
        let w_hat = normalize_affinity(&g.to_affinity(1.0)).unwrap();
        let k = rng.gen_range(1..4).min(n);
        let mut classes = vec![Vec::new(); k];
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        for (c, &i) in perm.iter().take(k + 2).enumerate() {
            classes[c % k].push(i);
        }
        let seeds = SeedSet::new(classes.clone(), n).unwrap();
        let m = 1 + t % 2;
        let got = diffusion_probabilities(&w_hat, &seeds, m).unwrap();
        let want = dense_diffusion(
            &dense_normalize(&affinity_with_self_loops(&edges, n)),
            &classes,
            m as u32,
        );
        for (a, b) in got.view().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12, "m={m}: {a} vs {b}");
        }
        for row in got.view().outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn disconnected_components_get_certain_probabilities() {
    let edges = vec![(0, 1, 1.0), (1, 2, 0.5), (3, 4, 0.7), (4, 5, 1.0)];
    let g = Graph::from_edges(6, &edges).unwrap();
    let w_hat = normalize_affinity(&g.to_affinity(1.0)).unwrap();
    let seeds = SeedSet::new(vec![vec![1], vec![4]], 6).unwrap();
    let p = diffusion_probabilities(&w_hat, &seeds, 1).unwrap();
    let want = dense_diffusion(
        &dense_normalize(&affinity_with_self_loops(&edges, 6)),
        &[vec![1], vec![4]],
        1,
    );
    for i in [0, 2] {
        assert_eq!(p.view()[[i, 0]], 1.0);
        assert_eq!(want[[i, 0]], 1.0);
    }
    for i in [3, 5] {
        assert_eq!(p.view()[[i, 1]], 1.0);
    }
}

#[test]
fn kmeans_two_blobs_against_exhaustive_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let normal = rand_distr::Normal::new(0.0, 0.1).unwrap();
    let n = 12;
    let pts: Vec<f64> = (0..n)
        .map(|i| {
            let base = if i < n / 2 { 0.0 } else { 10.0 };
            base + rand_distr::Distribution::sample(&normal, &mut rng)
        })
        .collect();
    // optimal 2-means by enumerating every bipartition
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for mask in 1u32..(1 << n) - 1 {
        let (a, b): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (mask >> i & 1 == 1, pts[i])).fold(
            (vec![], vec![]),
            |(mut a, mut b), (side, v)| {
                if side {
                    a.push(v)
                } else {
                    b.push(v)
                }
                (a, b)
            },
        );
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cost: f64 = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>()
            + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
        if cost < best.0 {
            best = (cost, ma.min(mb), ma.max(mb));
        }
    }
    let arr = Array2::from_shape_vec((n, 1), pts).unwrap();
    let c = kmeans_centroids(arr.view(), 2, 3).unwrap();
    let mut got: Vec<f64> = c.view().iter().copied().collect();
    got.sort_by(f64::total_cmp);
    assert!((got[0] - best.1).abs() < 1e-9 && (got[1] - best.2).abs() < 1e-9);
    assert!(got[0].abs() < 0.1 && (got[1] - 10.0).abs() < 0.1);
}

#[test]
fn log_force_bound_on_probability_grid() {
    for i in 1..=1000 {
        let p = i as f64 / 1001.0;
        let pm = ProbabilityMatrix::new(Array2::from_shape_vec((1, 2), vec![p, 1.0 - p]).unwrap())
            .unwrap();
        let f = region_force_log(&pm, 0.0).unwrap().view()[[0, 0]];
        let oracle = -p.ln() + (1.0 - p).ln();
        assert!((f - oracle).abs() < 1e-12);
        assert!(f <= (1.0 - 2.0 * p) / p + 1e-12, "p={p}");
    }
}

fn random_flow(rng: &mut ChaCha8Rng, backend: &TvBackend<'_>, k: usize) -> DualFlow {
    let len = match backend {
        TvBackend::Grid(g) => 2 * g.n_pixels(),
        TvBackend::Graph(g) => g.n_directed(),
    };
    let flows = (0..k)
        .map(|_| (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    DualFlow::from_flows(backend, flows).unwrap()
}

#[test]
fn weak_duality_on_random_feasible_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for t in 0..100 {
        let k = rng.gen_range(1..5);
        let edges;
        let g;
        let backend = if t % 2 == 0 {
            let n = rng.gen_range(2..12);
            edges = random_edges(&mut rng, n, 0.3);
            g = Graph::from_edges(n, &edges).unwrap();
            TvBackend::Graph(&g)
        } else {
            TvBackend::Grid(GridGeometry::new(rng.gen_range(1..7), rng.gen_range(1..7)).unwrap())
        };
        let n = backend.n_nodes();
        let f = potts::region::RegionForceMatrix::new(Array2::from_shape_fn((n, k), |_| {
            rng.gen_range(-3.0..3.0)
        }))
        .unwrap();
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
        let phi = random_simplex_rows(&mut rng, n, k);
        let mut q = random_flow(&mut rng, &backend, k);
        project_dual_ball(&mut q, &alpha, &backend).unwrap();
        let ep = primal_energy(&f, phi.view(), &alpha, &backend).unwrap();
        let ed = dual_energy(&f, &q, &backend).unwrap();
        assert!(ed <= ep + 1e-9 * (1.0 + ep.abs()), "E_D {ed} > E_P {ep}");
    }
}

#[test]
fn energies_on_simple_fields() {
    let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
    let b = TvBackend::Graph(&g);
    let f = potts::region::RegionForceMatrix::new(
        Array2::from_shape_vec((3, 2), vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.0]).unwrap(),
    )
    .unwrap();
    let alpha = [1.0; 3];
    let mut onehot = Array2::<f64>::zeros((3, 2));
    onehot.column_mut(1).fill(1.0);
    assert_eq!(
        primal_energy(&f, onehot.view(), &alpha, &b).unwrap(),
        -2.0 + 3.0 + 0.0
    );
    let zero = DualFlow::zeros(&b, 2);
    assert_eq!(dual_energy(&f, &zero, &b).unwrap(), -2.0 + 0.5 - 1.0);
    let f1 = potts::region::RegionForceMatrix::new(
        Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let q = random_flow(&mut rng, &b, 1);
    assert!((dual_energy(&f1, &q, &b).unwrap() - 6.0).abs() < 1e-12);
}

#[test]
fn two_node_instance_matches_enumeration() {
    let edges = vec![(0, 1, 1.0)];
    let g = Graph::from_edges(2, &edges).unwrap();
    let f = Array2::from_shape_vec((2, 2), vec![0.0, 3.0, 0.5, 0.0]).unwrap();
    let alpha = [1.0, 1.0];
    let (best, labels) = potts_brute_force(&edges, &alpha, &f);
    let forces = potts::region::RegionForceMatrix::new(f.clone()).unwrap();
    for config in [
        SolverConfig::pdhg(TvFlavor::AnisotropicGraph),
        SolverConfig::admm(TvFlavor::AnisotropicGraph),
    ] {
        let algorithm = config.algorithm;
        let sol = solve(
            &forces,
            &alpha,
            &TvBackend::Graph(&g),
            &config.with_epsilon(1e-9).with_max_iter(20000),
        )
        .unwrap();
        assert_eq!(sol.labels(), labels, "{algorithm:?}");
        assert!((potts_objective(&edges, &alpha, &f, &sol.labels()) - best).abs() < 1e-9);
    }
}
