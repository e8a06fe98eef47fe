//! Weighted undirected graphs and the discrete differential operators on them.
//!
//! A [`Graph`] stores every undirected edge twice, once per direction, in a
//! compressed row layout sorted by neighbor index. Edge fields (flows, edge
//! gradients) are plain slices aligned with that layout: entry `e` of an edge
//! field belongs to the ordered pair `(i -> j)` returned by [`Graph::edge`].
//!
//! Operators follow the weighted nonlocal calculus:
//!
//! * gradient: `(grad u)(i -> j) = w_ij (u_j - u_i)`
//! * divergence: `(div q)(i) = sum_j w_ij (q(j -> i) - q(i -> j))`
//!
//! With symmetric weights the divergence is exactly the adjoint of the
//! gradient, `<grad u, q> = <u, div q>`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{check_len, PottsError, Result};
use crate::io::write_atomic;

/// Immutable weighted undirected graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    // position of (j -> i) for the entry (i -> j)
    reverse: Vec<usize>,
}

impl Graph {
    /// Builds a graph from undirected edges `(i, j, w)`. Each pair may appear
    /// once in either orientation.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(i, j, w) in edges {
            validate_edge(n_nodes, i, j, w)?;
            let key = (i.min(j), i.max(j));
            if map.insert(key, w).is_some() {
                return Err(PottsError::invalid(format!("duplicate edge {{{i}, {j}}}")));
            }
        }
        Ok(Self::from_upper(n_nodes, &map))
    }

    /// Builds the graph of `(W + W^T) / 2` from the directed entries of a
    /// possibly asymmetric weight matrix `W`.
    pub fn symmetrized(n_nodes: usize, directed: &[(usize, usize, f64)]) -> Result<Self> {
        let mut raw: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, w) in directed {
            validate_edge(n_nodes, i, j, w)?;
            if raw.insert((i, j), w).is_some() {
                return Err(PottsError::invalid(format!("duplicate entry ({i}, {j})")));
            }
        }
        let mut upper = BTreeMap::new();
        for (&(i, j), &w) in &raw {
            let key = (i.min(j), i.max(j));
            if upper.contains_key(&key) {
                continue;
            }
            let back = raw.get(&(j, i)).copied().unwrap_or(0.0);
            // both orientations averaged in the same order so the result is
            // independent of which one is visited first
            let (a, b) = if i < j { (w, back) } else { (back, w) };
            upper.insert(key, (a + b) / 2.0);
        }
        Ok(Self::from_upper(n_nodes, &upper))
    }

    fn from_upper(n_nodes: usize, upper: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_nodes];
        for (&(i, j), &w) in upper {
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut offsets = Vec::with_capacity(n_nodes + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            for &(j, w) in row.iter() {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        let mut graph = Graph {
            offsets,
            neighbors,
            weights,
            reverse: Vec::new(),
        };
        graph.reverse = (0..graph.n_nodes())
            .flat_map(|i| graph.row_range(i).map(move |e| (i, e)))
            .map(|(i, e)| {
                let j = graph.neighbors[e];
                graph
                    .position(j, i)
                    .expect("adjacency is symmetric by construction")
            })
            .collect();
        graph
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored ordered pairs, i.e. twice the undirected edge count.
    pub fn n_directed(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Neighbors of `i` with their weights, ascending by neighbor index.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_range(i)
            .map(move |e| (self.neighbors[e], self.weights[e]))
    }

    /// The ordered pair `(i, j)` and weight stored at edge-field position `e`.
    pub fn edge(&self, e: usize) -> (usize, usize, f64) {
        let i = self.offsets.partition_point(|&o| o <= e) - 1;
        (i, self.neighbors[e], self.weights[e])
    }

    /// Edge-field position of the ordered pair `(i, j)`, if the edge exists.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let range = self.row_range(i);
        self.neighbors[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |e| self.weights[e])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Positions of the reversed pair, `reverse()[e]` holds `(j -> i)` when `e` holds `(i -> j)`.
    pub fn reverse(&self) -> &[usize] {
        &self.reverse
    }

    /// Undirected edges `(i, j, w)` with `i < j`, ascending.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes()).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("node field", self.n_nodes(), u.len())?;
        let mut out = vec![0.0; self.n_directed()];
        self.gradient_into(u, &mut out);
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.n_nodes() {
            for e in self.row_range(i) {
                out[e] = self.weights[e] * (u[self.neighbors[e]] - u[i]);
            }
        }
    }

    pub fn divergence(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len("edge field", self.n_directed(), q.len())?;
        let mut out = vec![0.0; self.n_nodes()];
        self.divergence_into(q, &mut out);
        Ok(out)
    }

    pub(crate) fn divergence_into(&self, q: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in self.row_range(i) {
                acc += self.weights[e] * (q[self.reverse[e]] - q[e]);
            }
            *slot = acc;
        }
    }

    /// Weighted anisotropic total variation `sum_i alpha_i sum_j w_ij |u_j - u_i|`.
    pub fn anisotropic_tv(&self, u: &[f64], alpha: &[f64]) -> Result<f64> {
        check_len("node field", self.n_nodes(), u.len())?;
        check_len("alpha", self.n_nodes(), alpha.len())?;
        check_nonnegative(alpha)?;
        Ok(self.anisotropic_tv_unchecked(u, alpha))
    }

    pub(crate) fn anisotropic_tv_unchecked(&self, u: &[f64], alpha: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_nodes() {
            let mut row = 0.0;
            for e in self.row_range(i) {
                row += self.weights[e] * (u[self.neighbors[e]] - u[i]).abs();
            }
            total += alpha[i] * row;
        }
        total
    }

    /// Weight matrix with `self_loop` added on the diagonal, as a sparse
    /// symmetric matrix.
    pub fn to_affinity(&self, self_loop: f64) -> SparseMatrix {
        let n = self.n_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(self.n_directed() + n);
        let mut vals = Vec::with_capacity(self.n_directed() + n);
        offsets.push(0);
        for i in 0..n {
            let mut diag_done = self_loop == 0.0;
            for (j, w) in self.neighbors(i) {
                if !diag_done && j > i {
                    cols.push(i);
                    vals.push(self_loop);
                    diag_done = true;
                }
                cols.push(j);
                vals.push(w);
            }
            if !diag_done {
                cols.push(i);
                vals.push(self_loop);
            }
            offsets.push(cols.len());
        }
        SparseMatrix {
            n,
            offsets,
            cols,
            vals,
        }
    }

    /// Writes `i,j,w_ij` triplets with `i < j`.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            for (i, j, wij) in self.undirected_edges() {
                writeln!(w, "{i},{j},{wij}")?;
            }
            Ok(())
        })
    }
}

fn validate_edge(n: usize, i: usize, j: usize, w: f64) -> Result<()> {
    if i >= n || j >= n {
        return Err(PottsError::invalid(format!(
            "edge ({i}, {j}) out of range for {n} nodes"
        )));
    }
    if i == j {
        return Err(PottsError::invalid(format!("self-loop at node {i}")));
    }
    if !w.is_finite() || w < 0.0 {
        return Err(PottsError::invalid(format!(
            "edge ({i}, {j}) has invalid weight {w}"
        )));
    }
    Ok(())
}

pub(crate) fn check_nonnegative(alpha: &[f64]) -> Result<()> {
    if let Some(i) = alpha.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(PottsError::invalid(format!(
            "alpha must be finite and nonnegative, got {} at node {i}",
            alpha[i]
        )));
    }
    Ok(())
}

/// Square sparse matrix in compressed row form, diagonal entries allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.offsets[i]..self.offsets[i + 1]).map(move |e| (self.cols[e], self.vals[e]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    /// Builds from a dense matrix, keeping nonzero entries only.
    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let n = dense.len();
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in dense {
            check_len("dense row", n, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Ok(SparseMatrix {
            n,
            offsets,
            cols,
            vals,
        })
    }
}

/// `D^{-1/2} W D^{-1/2}` with `d_ii` the l1 norm of row `i`.
pub fn normalize_affinity(w: &SparseMatrix) -> Result<SparseMatrix> {
    let mut isolated = Vec::new();
    let mut degree = Vec::with_capacity(w.n);
    for i in 0..w.n {
        let d: f64 = w.row(i).map(|(_, v)| v.abs()).sum();
        if !(d > 0.0 && d.is_finite()) {
            isolated.push(i);
        }
        degree.push(d);
    }
    if !isolated.is_empty() {
        return Err(PottsError::IsolatedNodes(isolated));
    }
    let mut vals = w.vals.clone();
    for i in 0..w.n {
        for e in w.offsets[i]..w.offsets[i + 1] {
            vals[e] /= (degree[i] * degree[w.cols[e]]).sqrt();
        }
    }
    Ok(SparseMatrix {
        n: w.n,
        offsets: w.offsets.clone(),
        cols: w.cols.clone(),
        vals,
    })
}

// ---------------------------------------------------------------------------
// weight functions

/// Radial basis function `exp(-d^2 / (2 eps))`.
pub fn weight_rbf(d: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(d >= 0.0) {
        return Err(PottsError::invalid(format!(
            "rbf needs d >= 0 and eps > 0, got d={d}, eps={epsilon}"
        )));
    }
    Ok((-d * d / (2.0 * epsilon)).exp())
}

/// Self-tuning weight `exp(-d^2 / (sigma_i sigma_j))`.
pub fn weight_zmp(d: f64, sigma_i: f64, sigma_j: f64) -> Result<f64> {
    if !(sigma_i > 0.0 && sigma_j > 0.0) {
        return Err(PottsError::invalid(format!(
            "zmp local scales must be positive, got {sigma_i} and {sigma_j}"
        )));
    }
    Ok((-d * d / (sigma_i * sigma_j)).exp())
}

/// Cosine similarity of two nonzero vectors.
pub fn weight_cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("vector", x.len(), y.len())?;
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(PottsError::invalid("cosine similarity of a zero vector"));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Rbf {
        epsilon: f64,
    },
    /// Local scale of each point is its distance to the s-th nearest neighbor.
    Zmp,
    /// Negative similarities are clamped to zero to keep weights nonnegative.
    Cosine,
}

/// Indices and distances of the `s` nearest neighbors of every point, by
/// exhaustive search. Ties are broken by the lower index.
pub fn nearest_neighbors(points: ArrayView2<'_, f64>, s: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = points.nrows();
    if s == 0 || s >= n {
        return Err(PottsError::invalid(format!(
            "need 1 <= s < N, got s={s} with N={n}"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(PottsError::invalid("non-finite coordinate in point cloud"));
    }
    let rows: Vec<_> = points.outer_iter().collect();
    let result = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = rows[i];
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = xi
                        .iter()
                        .zip(rows[j].iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d2, j)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if s < cand.len() {
                cand.select_nth_unstable_by(s - 1, cmp);
                cand.truncate(s);
            }
            cand.sort_by(cmp);
            cand.into_iter().map(|(d2, j)| (j, d2.sqrt())).collect()
        })
        .collect();
    Ok(result)
}

/// Symmetrized s-nearest-neighbor graph under the Euclidean metric.
pub fn build_knn_graph(points: ArrayView2<'_, f64>, s: usize, kind: WeightKind) -> Result<Graph> {
    let knn = nearest_neighbors(points, s)?;
    let sigma: Vec<f64> = knn.iter().map(|row| row[s - 1].1).collect();
    let mut directed = Vec::with_capacity(knn.len() * s);
    for (i, row) in knn.iter().enumerate() {
        for &(j, d) in row {
            let w = match kind {
                WeightKind::Rbf { epsilon } => weight_rbf(d, epsilon)?,
                WeightKind::Zmp => weight_zmp(d, sigma[i], sigma[j]).map_err(|_| {
                    PottsError::NumericDegeneracy(format!(
                        "zero local scale at node {} (duplicate points)",
                        if sigma[i] > 0.0 { j } else { i }
                    ))
                })?,
                WeightKind::Cosine => {
                    let xi = points.row(i).to_vec();
                    let xj = points.row(j).to_vec();
                    weight_cosine(&xi, &xj)?.max(0.0)
                }
            };
            directed.push((i, j, w));
        }
    }
    Graph::symmetrized(points.nrows(), &directed)
}

// ---------------------------------------------------------------------------
// pixel grids

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(PottsError::invalid(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(GridGeometry { width, height })
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// Horizontal and vertical components per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelVectorField {
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
}

impl PixelVectorField {
    pub fn zeros(n: usize) -> Self {
        PixelVectorField {
            horizontal: vec![0.0; n],
            vertical: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.horizontal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizontal.is_empty()
    }

    pub fn dot(&self, other: &PixelVectorField) -> f64 {
        let h: f64 = self
            .horizontal
            .iter()
            .zip(&other.horizontal)
            .map(|(a, b)| a * b)
            .sum();
        let v: f64 = self
            .vertical
            .iter()
            .zip(&other.vertical)
            .map(|(a, b)| a * b)
            .sum();
        h + v
    }
}

/// 4-connected grid graph with unit weights.
pub fn build_grid_graph(geom: GridGeometry) -> Result<Graph> {
    let geom = GridGeometry::new(geom.width, geom.height)?;
    let mut edges = Vec::with_capacity(2 * geom.n_pixels());
    for y in 0..geom.height {
        for x in 0..geom.width {
            let p = geom.index(x, y);
            if x + 1 < geom.width {
                edges.push((p, p + 1, 1.0));
            }
            if y + 1 < geom.height {
                edges.push((p, p + geom.width, 1.0));
            }
        }
    }
    Graph::from_edges(geom.n_pixels(), &edges)
}

/// Forward differences with replicate (Neumann) boundary.
pub fn grid_gradient(geom: GridGeometry, u: &[f64]) -> Result<PixelVectorField> {
    check_len("image field", geom.n_pixels(), u.len())?;
    let mut out = PixelVectorField::zeros(u.len());
    grid_gradient_into(geom, u, &mut out);
    Ok(out)
}

pub(crate) fn grid_gradient_into(geom: GridGeometry, u: &[f64], out: &mut PixelVectorField) {
    let (w, h) = (geom.width, geom.height);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            out.horizontal[p] = if x + 1 < w { u[p + 1] - u[p] } else { 0.0 };
            out.vertical[p] = if y + 1 < h { u[p + w] - u[p] } else { 0.0 };
        }
    }
}

/// Backward differences with boundary truncation; the negative adjoint of
/// [`grid_gradient`], so `<grad u, q> = -<u, div q>`.
pub fn grid_divergence(geom: GridGeometry, q: &PixelVectorField) -> Result<Vec<f64>> {
    check_len("horizontal flow", geom.n_pixels(), q.horizontal.len())?;
    check_len("vertical flow", geom.n_pixels(), q.vertical.len())?;
    let mut out = vec![0.0; geom.n_pixels()];
    grid_divergence_into(geom, &q.horizontal, &q.vertical, &mut out);
    Ok(out)
}

pub(crate) fn grid_divergence_into(geom: GridGeometry, qh: &[f64], qv: &[f64], out: &mut [f64]) {
    let (w, h) = (geom.width, geom.height);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let dh = if x + 1 < w { qh[p] } else { 0.0 } - if x > 0 { qh[p - 1] } else { 0.0 };
            let dv = if y + 1 < h { qv[p] } else { 0.0 } - if y > 0 { qv[p - w] } else { 0.0 };
            out[p] = dh + dv;
        }
    }
}
