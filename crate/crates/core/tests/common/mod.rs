//! Independent reference implementations used by the integration suites.
//! Nothing here calls the library routine it checks.

#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Undirected weighted edge list `(i, j, w)` with `i < j`.
pub type EdgeList = Vec<(usize, usize, f64)>;

/// Random graph on `n` nodes: a spanning path plus each other pair with
/// probability `p`, weights in `(0.05, 1]`.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> EdgeList {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.gen::<f64>() < p {
                edges.push((i, j, rng.gen_range(0.05..1.0)));
            }
        }
    }
    edges
}

/// Directed pair list `(i, j, w)` covering both orientations of each edge.
pub fn directed(edges: &EdgeList) -> Vec<(usize, usize, f64)> {
    edges
        .iter()
        .flat_map(|&(i, j, w)| [(i, j, w), (j, i, w)])
        .collect()
}

/// `<grad u, q>` with `grad u (i->j) = w (u_j - u_i)`, by explicit summation
/// over a map from ordered pair to flow value.
pub fn grad_dot(
    edges: &EdgeList,
    u: &[f64],
    q: &std::collections::HashMap<(usize, usize), f64>,
) -> f64 {
    directed(edges)
        .iter()
        .map(|&(i, j, w)| w * (u[j] - u[i]) * q[&(i, j)])
        .sum()
}

/// `div q (i) = sum_j w_ij (q_ji - q_ij)`.
pub fn divergence(
    edges: &EdgeList,
    n: usize,
    q: &std::collections::HashMap<(usize, usize), f64>,
) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, j, w) in directed(edges) {
        out[i] += w * (q[&(j, i)] - q[&(i, j)]);
    }
    out
}

/// Weighted anisotropic TV, `sum_i a_i sum_j w_ij |u_j - u_i|`.
pub fn anisotropic_tv(edges: &EdgeList, u: &[f64], alpha: &[f64]) -> f64 {
    directed(edges)
        .iter()
        .map(|&(i, j, w)| alpha[i] * w * (u[j] - u[i]).abs())
        .sum()
}

/// Forward-difference gradient with zero flux at the far border.
pub fn grid_grad(w: usize, h: usize, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                gx[p] = u[p + 1] - u[p];
            }
            if y + 1 < h {
                gy[p] = u[p + w] - u[p];
            }
        }
    }
    (gx, gy)
}

/// Euclidean projection onto the simplex by enumerating supports: for each
/// support `S` the KKT point is `x_S = v_S - tau`, `tau = (sum v_S - 1)/|S|`,
/// valid when `x_S >= 0` and `v_j <= tau` off the support.
pub fn simplex_oracle(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        let tau = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = vec![0.0; k];
        let mut ok = true;
        for i in 0..k {
            if mask >> i & 1 == 1 {
                x[i] = v[i] - tau;
                ok &= x[i] >= -1e-14;
            } else {
                ok &= v[i] <= tau + 1e-14;
            }
        }
        if ok {
            let x: Vec<f64> = x.into_iter().map(|t| t.max(0.0)).collect();
            let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, x));
            }
        }
    }
    best.expect("some support satisfies KKT").1
}

/// Dense `D^{-1/2} W D^{-1/2}`.
pub fn dense_normalize(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let d: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| w[(i, j)] / (d[i].sqrt() * d[j].sqrt()))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &e| a.max(e.abs()))
}

/// Class probabilities from the m-th power of the normalized affinity,
/// evaluated directly on dense matrices.
pub fn dense_diffusion(w_hat: &DMatrix<f64>, seeds: &[Vec<usize>], m: u32) -> Array2<f64> {
    let n = w_hat.nrows();
    let mut wm = DMatrix::identity(n, n);
    for _ in 0..m {
        wm = &wm * w_hat;
    }
    let k = seeds.len();
    let mut p = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let mut total = 0.0;
        for (c, s) in seeds.iter().enumerate() {
            let r: f64 = s
                .iter()
                .map(|&j| wm[(i, j)].powi(2) / (wm[(i, i)] * wm[(j, j)]))
                .sum::<f64>()
                / s.len() as f64;
            p[[i, c]] = r;
            total += r;
        }
        for c in 0..k {
            p[[i, c]] = if total > 0.0 {
                p[[i, c]] / total
            } else {
                1.0 / k as f64
            };
        }
    }
    p
}

/// Discrete Potts objective of a labeling on a graph: region terms plus,
/// for every ordered pair `(i, j)` with different labels, `2 a_i w_ij`
/// (two indicator functions jump by one each).
pub fn potts_objective(edges: &EdgeList, alpha: &[f64], f: &Array2<f64>, labels: &[usize]) -> f64 {
    let region: f64 = labels.iter().enumerate().map(|(i, &l)| f[[i, l]]).sum();
    let boundary: f64 = directed(edges)
        .iter()
        .filter(|&&(i, j, _)| labels[i] != labels[j])
        .map(|&(i, _, w)| 2.0 * alpha[i] * w)
        .sum();
    region + boundary
}

/// Minimum of [`potts_objective`] over all `K^N` labelings.
pub fn potts_brute_force(edges: &EdgeList, alpha: &[f64], f: &Array2<f64>) -> (f64, Vec<usize>) {
    let (n, k) = f.dim();
    let mut labels = vec![0usize; n];
    let mut best = (f64::INFINITY, labels.clone());
    loop {
        let v = potts_objective(edges, alpha, f, &labels);
        if v < best.0 {
            best = (v, labels.clone());
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

pub fn random_simplex_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    let mut phi = Array2::<f64>::zeros((n, k));
    for mut row in phi.outer_iter_mut() {
        for v in row.iter_mut() {
            *v = -rng.gen::<f64>().ln();
        }
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    phi
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
