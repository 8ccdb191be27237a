//! Loop/star divergence-free current basis on a voxel mesh.
//!
//! Currents are represented by their normal flux through each facet (lowest
//! order face elements). The curl of the edge function of edge `e` is the
//! circulation around `e`: unit flux through every facet incident to `e`,
//! signed by the right-hand rule. It is divergence free in every cell by
//! construction. Edges away from the boundary yield loops (no boundary
//! trace); edges on the boundary yield stars, truncated circulations that
//! enter and leave the atom through boundary facets.
//!
//! The curls of all edges are linearly dependent (gradients of node
//! functions are curl free), so only cotree edges are kept. The spanning tree
//! is grown over the boundary edges first and then extended into the
//! interior, which keeps the number of stars minimal.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Mesh;
use crate::math::abs;

/// Sparse real column: `(facet, coefficient)` pairs sorted by facet.
pub type SparseColumn = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Loop,
    Star,
}

/// Divergence-free basis; DoFs are numbered loops first, then stars.
#[derive(Debug, Clone)]
pub struct BasisSet {
    facet_count: usize,
    loops: Vec<SparseColumn>,
    stars: Vec<SparseColumn>,
    /// Generating edge of each DoF, when built from a mesh.
    edges: Vec<Option<usize>>,
}

impl BasisSet {
    /// Wraps arbitrary facet combinations, e.g. to audit a foreign basis with
    /// [`verify_basis`].
    pub fn from_columns(facet_count: usize, loops: Vec<SparseColumn>, stars: Vec<SparseColumn>) -> Self {
        let n = loops.len() + stars.len();
        Self { facet_count, loops, stars, edges: vec![None; n] }
    }

    pub fn facet_count(&self) -> usize {
        self.facet_count
    }

    pub fn loop_count(&self) -> usize {
        self.loops.len()
    }

    pub fn star_count(&self) -> usize {
        self.stars.len()
    }

    pub fn dof_count(&self) -> usize {
        self.loops.len() + self.stars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_count() == 0
    }

    pub fn kind(&self, dof: usize) -> DofKind {
        if dof < self.loops.len() {
            DofKind::Loop
        } else {
            DofKind::Star
        }
    }

    /// Facet coefficients of one DoF (a column of the combination matrix).
    pub fn column(&self, dof: usize) -> &SparseColumn {
        if dof < self.loops.len() {
            &self.loops[dof]
        } else {
            &self.stars[dof - self.loops.len()]
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = &SparseColumn> {
        self.loops.iter().chain(self.stars.iter())
    }

    pub fn generating_edge(&self, dof: usize) -> Option<usize> {
        self.edges[dof]
    }

    /// Combination matrix `C` as dense rows (`facet_count × dof_count`).
    pub fn combination_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dof_count()]; self.facet_count];
        for (j, col) in self.columns().enumerate() {
            for &(f, v) in col {
                out[f][j] += v;
            }
        }
        out
    }

    /// Facet-to-DoF incidence: for each facet, the `(dof, coefficient)` pairs.
    pub fn facet_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.facet_count];
        for (j, col) in self.columns().enumerate() {
            for &(f, v) in col {
                out[f].push((j, v));
            }
        }
        out
    }
}

/// Sparse row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; self.cols];
                for &(j, v) in r {
                    d[j] += v;
                }
                d
            })
            .collect()
    }

    /// `self · column`, dense result.
    pub fn apply(&self, column: &SparseColumn) -> Vec<f64> {
        let mut dense = vec![0.0; self.cols];
        for &(f, v) in column {
            dense[f] += v;
        }
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * dense[j]).sum()).collect()
    }
}

/// Discrete constraints on facet fluxes: one divergence row per cell (net
/// outward flux) followed by one row per boundary component (net outward
/// flux over that component).
pub fn constraint_matrix(mesh: &Mesh) -> SparseRows {
    let cell_faces = mesh.cell_faces();
    let mut rows: Vec<Vec<(usize, f64)>> = cell_faces
        .iter()
        .map(|cf| {
            let mut r: Vec<(usize, f64)> =
                cf.iter().flat_map(|[lo, hi]| [(*lo, -1.0), (*hi, 1.0)]).collect();
            r.sort_unstable_by_key(|e| e.0);
            r
        })
        .collect();
    for comp in mesh.boundary_components() {
        let mut r: Vec<(usize, f64)> =
            comp.iter().map(|&f| (f, mesh.faces()[f].outward_sign() as f64)).collect();
        r.sort_unstable_by_key(|e| e.0);
        rows.push(r);
    }
    SparseRows { cols: mesh.faces().len(), rows }
}

struct Forest(Vec<usize>);

impl Forest {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    /// Joins two trees; false when the endpoints were already connected.
    fn link(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Tree-cotree loop/star basis of `mesh`.
pub fn build_loop_star(mesh: &Mesh) -> BasisSet {
    let nodes = mesh.nodes();
    let node_id = |n: &[i32; 3]| nodes.binary_search(n).expect("edge endpoint is a mesh node");
    let ends: Vec<(usize, usize)> = mesh
        .edges()
        .iter()
        .map(|e| {
            let mut far = e.node;
            far[e.axis] += 1;
            (node_id(&e.node), node_id(&far))
        })
        .collect();

    let mut forest = Forest((0..nodes.len()).collect());
    let mut in_tree = vec![false; ends.len()];
    for boundary_pass in [true, false] {
        for (k, e) in mesh.edges().iter().enumerate() {
            if e.boundary == boundary_pass && forest.link(ends[k].0, ends[k].1) {
                in_tree[k] = true;
            }
        }
    }

    let circulation = |k: usize| -> SparseColumn {
        let mut col: SparseColumn = mesh.edges()[k].faces.iter().map(|&(f, s)| (f, s as f64)).collect();
        col.sort_unstable_by_key(|e| e.0);
        col
    };
    let (mut loops, mut stars) = (Vec::new(), Vec::new());
    let (mut loop_edges, mut star_edges) = (Vec::new(), Vec::new());
    for (k, e) in mesh.edges().iter().enumerate() {
        if in_tree[k] {
            continue;
        }
        if e.boundary {
            stars.push(circulation(k));
            star_edges.push(Some(k));
        } else {
            loops.push(circulation(k));
            loop_edges.push(Some(k));
        }
    }
    loop_edges.extend(star_edges);
    BasisSet { facet_count: mesh.faces().len(), loops, stars, edges: loop_edges }
}

/// Outcome of [`verify_basis`]; every field is zero for a valid basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisReport {
    /// Largest entry of `constraint_matrix · C`.
    pub max_constraint_residual: f64,
    /// Largest loop coefficient on a boundary facet.
    pub max_loop_boundary_coefficient: f64,
    /// Largest per-component net flux of a star.
    pub max_star_net_flux: f64,
    /// Stars without any boundary trace.
    pub stars_without_trace: usize,
    /// `dof_count − rank(C)`.
    pub rank_deficiency: usize,
    /// `dim null(constraint_matrix) − rank(C)`.
    pub missing_dimensions: usize,
}

impl BasisReport {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_constraint_residual <= tol
            && self.max_loop_boundary_coefficient <= tol
            && self.max_star_net_flux <= tol
            && self.stars_without_trace == 0
            && self.rank_deficiency == 0
            && self.missing_dimensions == 0
    }
}

/// Checks divergence, boundary trace, flux neutrality and rank of a basis.
pub fn verify_basis(mesh: &Mesh, basis: &BasisSet) -> BasisReport {
    let cons = constraint_matrix(mesh);
    let n_cells = mesh.cells().len();
    let mut max_res: f64 = 0.0;
    let mut max_flux: f64 = 0.0;
    for col in basis.columns() {
        let r = cons.apply(col);
        for (i, v) in r.iter().enumerate() {
            max_res = max_res.max(abs(*v));
            if i >= n_cells {
                max_flux = max_flux.max(abs(*v));
            }
        }
    }
    let faces = mesh.faces();
    let max_loop_bnd = (0..basis.loop_count())
        .flat_map(|k| basis.column(k).iter())
        .filter(|(f, _)| faces[*f].is_boundary())
        .map(|(_, v)| abs(*v))
        .fold(0.0, f64::max);
    let stars_without_trace = (basis.loop_count()..basis.dof_count())
        .filter(|&k| !basis.column(k).iter().any(|&(f, v)| faces[f].is_boundary() && v != 0.0))
        .count();
    let rank_c = numerical_rank(basis.combination_dense(), 1e-9);
    let rank_cons = numerical_rank(cons.to_dense(), 1e-9);
    let null_dim = cons.cols - rank_cons;
    BasisReport {
        max_constraint_residual: max_res,
        max_loop_boundary_coefficient: max_loop_bnd,
        max_star_net_flux: max_flux,
        stars_without_trace,
        rank_deficiency: basis.dof_count() - rank_c,
        missing_dimensions: null_dim.saturating_sub(rank_c),
    }
}

/// Rank by Gaussian elimination with full pivoting.
pub fn numerical_rank(mut a: Vec<Vec<f64>>, rel_tol: f64) -> usize {
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let scale = a.iter().flatten().map(|v| abs(*v)).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    for _ in 0..rows.min(cols) {
        let (mut pi, mut pj, mut best) = (0, 0, 0.0);
        for (i, row) in a.iter().enumerate().skip(rank) {
            for (j, v) in row.iter().enumerate() {
                if abs(*v) > best {
                    best = abs(*v);
                    pi = i;
                    pj = j;
                }
            }
        }
        if best <= rel_tol * scale {
            break;
        }
        a.swap(rank, pi);
        for row in a.iter_mut() {
            row.swap(rank, pj);
        }
        let pivot_row = a[rank].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[rank] / pivot_row[rank];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(&pivot_row).skip(rank) {
                    *x -= f * p;
                }
            }
        }
        rank += 1;
    }
    rank
}
