use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contrast::Contrast;
use super::GricaError;
use crate::graph::{CanonicalDag, NodeId};
use crate::model::{free_edges, scaling_edges};
use crate::sem::Dataset;

/// Which contrast functional is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ObjectiveForm {
    /// `(1/N) Σ_i Σ_c g((B′ᵀ x_i)_c)`, the transpose used as an approximate
    /// demixing map.
    Transpose,
    /// `−(1/N) Σ_i log ∫ exp(−Σ_o g(r_io − (A_ol s)_o) − Σ_l g(s_l)) ds` with
    /// `r = (I − A_oo) x`: the latent noise is integrated out on a tensor
    /// grid instead of being read off through the transpose.
    Marginal(Quadrature),
}

impl Default for ObjectiveForm {
    fn default() -> Self {
        ObjectiveForm::Marginal(Quadrature::default())
    }
}

/// Tensor-product grid over `[−half_width, half_width]^{p_l}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub half_width: f64,
    /// Nodes per axis when there is a single latent.
    pub nodes: usize,
    /// Upper bound on the total node count; the per-axis count shrinks to
    /// respect it when there are several latents.
    pub budget: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            half_width: 12.0,
            nodes: 121,
            budget: 4096,
        }
    }
}

impl Quadrature {
    pub fn check(&self) -> Result<(), String> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(format!(
                "quadrature half width must be positive, got {}",
                self.half_width
            ));
        }
        if self.nodes < 3 || self.budget < 3 {
            return Err("quadrature needs at least 3 nodes".into());
        }
        Ok(())
    }

    fn per_axis(&self, p_l: usize) -> usize {
        let mut k = self.nodes;
        while k > 3 && (k as f64).powi(p_l as i32) > self.budget as f64 {
            k -= 1;
        }
        k
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Oo { to: usize, from: usize },
    Ol { to: usize, latent: usize },
}

/// Free parameters of a canonical graph laid out against the blocks `A_oo`
/// (rows and columns in observed topological order) and `A_ol` (columns in
/// latent topological order).
#[derive(Debug, Clone)]
pub struct Layout {
    rows: Vec<NodeId>,
    latents: Vec<NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    slots: Vec<Slot>,
    scaling: Vec<(usize, usize)>,
}

impl Layout {
    pub fn new(dag: &CanonicalDag) -> Self {
        let rows = dag.observed_in_order();
        let latents = dag.latent_in_order();
        let mut index = vec![usize::MAX; dag.p()];
        for (r, &v) in rows.iter().enumerate() {
            index[v] = r;
        }
        for (c, &v) in latents.iter().enumerate() {
            index[v] = c;
        }
        let edges = free_edges(dag);
        let slots = edges
            .iter()
            .map(|&(from, to)| {
                if dag.is_latent(from) {
                    Slot::Ol {
                        to: index[to],
                        latent: index[from],
                    }
                } else {
                    Slot::Oo {
                        to: index[to],
                        from: index[from],
                    }
                }
            })
            .collect();
        let scaling = scaling_edges(dag)
            .into_iter()
            .map(|(l, j)| (index[j], index[l]))
            .collect();
        Self {
            rows,
            latents,
            edges,
            slots,
            scaling,
        }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn p_o(&self) -> usize {
        self.rows.len()
    }

    pub fn p_l(&self) -> usize {
        self.latents.len()
    }

    /// Observed nodes in row order.
    pub fn rows(&self) -> &[NodeId] {
        &self.rows
    }

    /// Free edges, in the order of the parameter vector.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn blocks(&self, free: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut a_oo = DMatrix::zeros(self.p_o(), self.p_o());
        let mut a_ol = DMatrix::zeros(self.p_o(), self.p_l());
        for &(to, l) in &self.scaling {
            a_ol[(to, l)] = 1.0;
        }
        for (slot, &w) in self.slots.iter().zip(free) {
            match *slot {
                Slot::Oo { to, from } => a_oo[(to, from)] = w,
                Slot::Ol { to, latent } => a_ol[(to, latent)] = w,
            }
        }
        (a_oo, a_ol)
    }

    /// Row of each latent's first child, in latent order.
    fn anchors(&self) -> Vec<usize> {
        let mut rows = vec![0; self.p_l()];
        for &(to, l) in &self.scaling {
            rows[l] = to;
        }
        rows
    }

    fn gather(&self, g_oo: &DMatrix<f64>, g_ol: &DMatrix<f64>) -> Vec<f64> {
        self.slots
            .iter()
            .map(|slot| match *slot {
                Slot::Oo { to, from } => g_oo[(to, from)],
                Slot::Ol { to, latent } => g_ol[(to, latent)],
            })
            .collect()
    }

    /// `n × p_o` data matrix with columns permuted into row order.
    pub fn align(&self, data: &Dataset) -> Result<DMatrix<f64>, GricaError> {
        let p = self.rows.iter().chain(&self.latents).max().map_or(0, |&m| m + 1);
        let mut cols = data.columns.clone();
        cols.sort_unstable();
        let mut rows = self.rows.clone();
        rows.sort_unstable();
        if cols != rows {
            return Err(GricaError::DimensionMismatch(format!(
                "data columns {:?} do not match observed nodes {:?}",
                data.columns, rows
            )));
        }
        let col_of = data.column_of(p);
        let idx: Vec<usize> = self.rows.iter().map(|&v| col_of[v].expect("checked above")).collect();
        Ok(DMatrix::from_fn(data.n(), self.p_o(), |i, r| data.values[(i, idx[r])]))
    }
}

/// `(B_o, B′)` from the two adjacency blocks.
pub fn mixing_from_blocks(a_oo: &DMatrix<f64>, a_ol: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let p_o = a_oo.nrows();
    let id = DMatrix::<f64>::identity(p_o, p_o);
    let b_o = (&id - a_oo)
        .solve_lower_triangular(&id)
        .expect("unit lower triangular system");
    let b_l = &b_o * a_ol;
    let mut b = DMatrix::zeros(p_o, p_o + a_ol.ncols());
    b.columns_mut(0, p_o).copy_from(&b_o);
    b.columns_mut(p_o, a_ol.ncols()).copy_from(&b_l);
    (b_o, b)
}

const CHUNK: usize = 256;
const PRUNE: f64 = 30.0;

/// The contrast objective over the free edge weights of a fixed graph and
/// dataset.
#[derive(Debug, Clone)]
pub struct Objective {
    layout: Layout,
    x: DMatrix<f64>,
    contrast: Contrast,
    form: ObjectiveForm,
    grid: Grid,
}

#[derive(Debug, Clone, Default)]
struct Grid {
    /// `Q × p_l`, row-major.
    nodes: Vec<f64>,
    /// `Σ_l g(s_ql)` per node.
    prior: Vec<f64>,
    log_weight: f64,
    len: usize,
    per_axis: usize,
    start: f64,
    step: f64,
}

impl Objective {
    pub fn new(
        dag: &CanonicalDag,
        data: &Dataset,
        contrast: Contrast,
        form: ObjectiveForm,
    ) -> Result<Self, GricaError> {
        let layout = Layout::new(dag);
        let x = layout.align(data)?;
        Ok(Self::from_aligned(layout, x, contrast, form))
    }

    /// `x` must already be in the layout's row order.
    pub fn from_aligned(layout: Layout, x: DMatrix<f64>, contrast: Contrast, form: ObjectiveForm) -> Self {
        let grid = match form {
            ObjectiveForm::Transpose => Grid::default(),
            ObjectiveForm::Marginal(q) => Grid::new(&q, layout.p_l(), &contrast),
        };
        Self {
            layout,
            x,
            contrast,
            form,
            grid,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn value(&self, free: &[f64]) -> f64 {
        self.value_and_gradient(free).0
    }

    pub fn value_and_gradient(&self, free: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(free.len(), self.dim(), "parameter vector length");
        let (a_oo, a_ol) = self.layout.blocks(free);
        let (g_oo, g_ol, f) = match self.form {
            ObjectiveForm::Transpose => self.transpose(&a_oo, &a_ol),
            ObjectiveForm::Marginal(_) => self.marginal(&a_oo, &a_ol),
        };
        (f, self.layout.gather(&g_oo, &g_ol))
    }

    fn transpose(&self, a_oo: &DMatrix<f64>, a_ol: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, f64) {
        let n = self.n().max(1) as f64;
        let p_o = self.layout.p_o();
        let (b_o, b) = mixing_from_blocks(a_oo, a_ol);
        let mut z = &self.x * &b;
        let mut f = 0.0;
        for v in z.iter_mut() {
            let (g, d) = self.contrast.eval(*v);
            f += g;
            *v = d;
        }
        // ∂f/∂B′ = Xᵀ g′(X B′) / N, then chain through B_o = (I − A_oo)^{-1}
        // and B_l = B_o A_ol.
        let grad_b = self.x.tr_mul(&z) / n;
        let g_oo = b_o.tr_mul(&grad_b) * b.transpose();
        let g_ol = b_o.tr_mul(&grad_b.columns(p_o, a_ol.ncols()).into_owned());
        (g_oo, g_ol, f / n)
    }

    fn marginal(&self, a_oo: &DMatrix<f64>, a_ol: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, f64) {
        let p_o = self.layout.p_o();
        let p_l = self.layout.p_l();
        let q_len = self.grid.len;
        // shift[q * p_o + o] = (A_ol s_q)_o
        let mut shift = vec![0.0; q_len * p_o];
        for q in 0..q_len {
            let s = &self.grid.nodes[q * p_l..(q + 1) * p_l];
            for o in 0..p_o {
                shift[q * p_o + o] = (0..p_l).map(|l| a_ol[(o, l)] * s[l]).sum();
            }
        }
        // Rows with no latent parent contribute the same term at every node.
        let constant: Vec<bool> = (0..p_o).map(|o| (0..p_l).all(|l| a_ol[(o, l)] == 0.0)).collect();
        let i_minus_a = DMatrix::<f64>::identity(p_o, p_o) - a_oo;
        let n = self.n();
        let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
        let partials: Vec<Partial> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + CHUNK).min(n);
                self.marginal_chunk(start..end, &i_minus_a, &shift, &constant)
            })
            .collect();
        let mut total = Partial::new(p_o, p_l);
        for part in &partials {
            total.f += part.f;
            total.g_oo += &part.g_oo;
            total.g_ol += &part.g_ol;
        }
        let nf = n.max(1) as f64;
        (total.g_oo / nf, total.g_ol / nf, total.f / nf)
    }

    fn marginal_chunk(
        &self,
        range: std::ops::Range<usize>,
        i_minus_a: &DMatrix<f64>,
        shift: &[f64],
        constant: &[bool],
    ) -> Partial {
        let p_o = self.layout.p_o();
        let p_l = self.layout.p_l();
        let q_len = self.grid.len;
        let g = &self.contrast;
        let mut part = Partial::new(p_o, p_l);
        let mut r = vec![0.0; p_o];
        let mut energy = vec![0.0; q_len];
        let mut deriv = vec![0.0; q_len * p_o];
        let mut gamma = vec![0.0; p_o];
        let mut delta = vec![0.0; p_o * p_l];
        let mut base_deriv = vec![0.0; p_o];
        let anchors = self.layout.anchors();
        for i in range {
            for o in 0..p_o {
                r[o] = (0..p_o).map(|b| i_minus_a[(o, b)] * self.x[(i, b)]).sum();
            }
            let mut base = 0.0;
            for o in 0..p_o {
                if constant[o] {
                    let (v, d) = g.eval(r[o]);
                    base += v;
                    base_deriv[o] = d;
                }
            }
            // The node nearest the first children's residuals gives an upper
            // bound on the minimum energy, which lets the scan skip nodes
            // early.
            let mut probe = 0;
            let mut stride = 1;
            for &row in &anchors {
                let t = ((r[row] - self.grid.start) / self.grid.step).round();
                probe += t.clamp(0.0, (self.grid.per_axis - 1) as f64) as usize * stride;
                stride *= self.grid.per_axis;
            }
            let mut min_e = f64::INFINITY;
            for q in std::iter::once(probe).chain((0..q_len).filter(|&q| q != probe)) {
                let mut e = base + self.grid.prior[q];
                for o in 0..p_o {
                    if !constant[o] {
                        let (v, d) = g.eval(r[o] - shift[q * p_o + o]);
                        e += v;
                        deriv[q * p_o + o] = d;
                        // Every term is non-negative, so the node's weight
                        // is already below e^-PRUNE relative to the best.
                        if e > min_e + PRUNE {
                            e = f64::INFINITY;
                            break;
                        }
                    }
                }
                energy[q] = e;
                min_e = min_e.min(e);
            }
            let mut z = 0.0;
            for e in energy.iter_mut() {
                *e = (min_e - *e).exp();
                z += *e;
            }
            part.f += min_e - z.ln() - self.grid.log_weight;
            gamma.copy_from_slice(&base_deriv);
            delta.iter_mut().for_each(|v| *v = 0.0);
            for q in 0..q_len {
                let pi = energy[q] / z;
                if pi < 1e-300 {
                    continue;
                }
                let s = &self.grid.nodes[q * p_l..(q + 1) * p_l];
                for o in 0..p_o {
                    if constant[o] {
                        continue;
                    }
                    let w = pi * deriv[q * p_o + o];
                    gamma[o] += w;
                    for l in 0..p_l {
                        delta[o * p_l + l] += w * s[l];
                    }
                }
            }
            for o in 0..p_o {
                for b in 0..p_o {
                    part.g_oo[(o, b)] -= gamma[o] * self.x[(i, b)];
                }
                for l in 0..p_l {
                    part.g_ol[(o, l)] -= delta[o * p_l + l];
                }
            }
        }
        part
    }
}

struct Partial {
    f: f64,
    g_oo: DMatrix<f64>,
    g_ol: DMatrix<f64>,
}

impl Partial {
    fn new(p_o: usize, p_l: usize) -> Self {
        Self {
            f: 0.0,
            g_oo: DMatrix::zeros(p_o, p_o),
            g_ol: DMatrix::zeros(p_o, p_l),
        }
    }
}

impl Grid {
    fn new(q: &Quadrature, p_l: usize, contrast: &Contrast) -> Self {
        let k = q.per_axis(p_l);
        let h = 2.0 * q.half_width / (k - 1) as f64;
        let axis: Vec<f64> = (0..k).map(|t| -q.half_width + t as f64 * h).collect();
        let len = k.pow(p_l as u32);
        let mut nodes = Vec::with_capacity(len * p_l);
        let mut prior = Vec::with_capacity(len);
        for mut idx in 0..len {
            let mut sum = 0.0;
            for _ in 0..p_l {
                let s = axis[idx % k];
                idx /= k;
                nodes.push(s);
                sum += contrast.value(s);
            }
            prior.push(sum);
        }
        Self {
            nodes,
            prior,
            log_weight: p_l as f64 * h.ln(),
            len,
            per_axis: k,
            start: -q.half_width,
            step: h,
        }
    }
}
