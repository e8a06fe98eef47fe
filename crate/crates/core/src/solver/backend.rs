use serde::{Deserialize, Serialize};

use crate::error::{check_len, PottsError, Result};
use crate::graph::{
    check_nonnegative, grid_divergence_into, Graph, GridGeometry, PixelVectorField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TvFlavor {
    /// Euclidean norm of the forward-difference gradient per pixel.
    IsotropicGrid,
    /// Weighted l1 norm over graph edges.
    AnisotropicGraph,
}

/// Discretization the solvers run on.
///
/// Each backend supplies a divergence `div` (node field from a flow) and its
/// transpose. On the grid `div = -grad^T`; on graphs `div = grad^T`. The
/// solvers only ever use `div` and `div^T`, so both conventions produce the
/// same saddle-point iteration.
#[derive(Debug, Clone, Copy)]
pub enum TvBackend<'a> {
    Grid(GridGeometry),
    Graph(&'a Graph),
}

impl<'a> TvBackend<'a> {
    pub fn flavor(&self) -> TvFlavor {
        match self {
            TvBackend::Grid(_) => TvFlavor::IsotropicGrid,
            TvBackend::Graph(_) => TvFlavor::AnisotropicGraph,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            TvBackend::Grid(g) => g.n_pixels(),
            TvBackend::Graph(g) => g.n_nodes(),
        }
    }

    /// Length of one class's flow: `2N` on the grid (horizontal block then
    /// vertical block), one entry per ordered edge on graphs.
    pub fn flow_len(&self) -> usize {
        match self {
            TvBackend::Grid(g) => 2 * g.n_pixels(),
            TvBackend::Graph(g) => g.n_directed(),
        }
    }

    pub(crate) fn div_into(&self, q: &[f64], out: &mut [f64]) {
        match self {
            TvBackend::Grid(geom) => {
                let n = geom.n_pixels();
                grid_divergence_into(*geom, &q[..n], &q[n..], out);
            }
            TvBackend::Graph(g) => g.divergence_into(q, out),
        }
    }

    /// Transpose of [`div_into`](Self::div_into).
    pub(crate) fn div_adjoint_into(&self, u: &[f64], out: &mut [f64]) {
        match self {
            TvBackend::Grid(geom) => {
                // -grad u
                let (w, h) = (geom.width, geom.height);
                let (oh, ov) = out.split_at_mut(w * h);
                for y in 0..h {
                    for x in 0..w {
                        let p = y * w + x;
                        oh[p] = if x + 1 < w { u[p] - u[p + 1] } else { 0.0 };
                        ov[p] = if y + 1 < h { u[p] - u[p + w] } else { 0.0 };
                    }
                }
            }
            TvBackend::Graph(g) => g.gradient_into(u, out),
        }
    }

    pub(crate) fn project_into_ball(&self, q: &mut [f64], alpha: &[f64]) {
        match self {
            TvBackend::Grid(geom) => {
                let n = geom.n_pixels();
                let (h, v) = q.split_at_mut(n);
                for p in 0..n {
                    let norm = h[p].hypot(v[p]);
                    if norm > alpha[p] {
                        let s = alpha[p] / norm;
                        h[p] *= s;
                        v[p] *= s;
                    }
                }
            }
            TvBackend::Graph(g) => {
                for i in 0..g.n_nodes() {
                    let a = alpha[i];
                    for e in g.row_range(i) {
                        q[e] = q[e].clamp(-a, a);
                    }
                }
            }
        }
    }

    pub(crate) fn tv(&self, u: &[f64], alpha: &[f64]) -> f64 {
        match self {
            TvBackend::Grid(geom) => {
                let (w, h) = (geom.width, geom.height);
                let mut total = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        let p = y * w + x;
                        let gx = if x + 1 < w { u[p + 1] - u[p] } else { 0.0 };
                        let gy = if y + 1 < h { u[p + w] - u[p] } else { 0.0 };
                        total += alpha[p] * gx.hypot(gy);
                    }
                }
                total
            }
            TvBackend::Graph(g) => g.anisotropic_tv_unchecked(u, alpha),
        }
    }

    pub(crate) fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        check_len("alpha", self.n_nodes(), alpha.len())?;
        check_nonnegative(alpha)
    }
}

/// Per-class dual flows `q_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFlow {
    flavor: TvFlavor,
    flows: Vec<Vec<f64>>,
}

impl DualFlow {
    pub fn zeros(backend: &TvBackend<'_>, n_classes: usize) -> Self {
        DualFlow {
            flavor: backend.flavor(),
            flows: vec![vec![0.0; backend.flow_len()]; n_classes],
        }
    }

    pub fn from_flows(backend: &TvBackend<'_>, flows: Vec<Vec<f64>>) -> Result<Self> {
        for f in &flows {
            check_len("dual flow", backend.flow_len(), f.len())?;
        }
        Ok(DualFlow {
            flavor: backend.flavor(),
            flows,
        })
    }

    pub fn flavor(&self) -> TvFlavor {
        self.flavor
    }

    pub fn n_classes(&self) -> usize {
        self.flows.len()
    }

    pub fn class(&self, k: usize) -> &[f64] {
        &self.flows[k]
    }

    /// Grid flows as a pixel vector field; `None` on the graph backend.
    pub fn pixel_field(&self, k: usize) -> Option<PixelVectorField> {
        if self.flavor != TvFlavor::IsotropicGrid {
            return None;
        }
        let n = self.flows[k].len() / 2;
        Some(PixelVectorField {
            horizontal: self.flows[k][..n].to_vec(),
            vertical: self.flows[k][n..].to_vec(),
        })
    }

    pub(crate) fn check_backend(&self, backend: &TvBackend<'_>) -> Result<()> {
        if self.flavor != backend.flavor() {
            return Err(PottsError::invalid(format!(
                "dual flow is {:?} but backend is {:?}",
                self.flavor,
                backend.flavor()
            )));
        }
        for f in &self.flows {
            check_len("dual flow", backend.flow_len(), f.len())?;
        }
        Ok(())
    }
}

/// Projects every class flow onto `{|q(x)| <= alpha(x)}`: radial scaling per
/// pixel on the grid, componentwise clamping on graphs.
pub fn project_dual_ball(q: &mut DualFlow, alpha: &[f64], backend: &TvBackend<'_>) -> Result<()> {
    q.check_backend(backend)?;
    backend.check_alpha(alpha)?;
    for flow in &mut q.flows {
        backend.project_into_ball(flow, alpha);
    }
    Ok(())
}
