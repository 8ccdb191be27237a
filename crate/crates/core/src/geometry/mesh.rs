use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::ceil;

/// Lattice index of a cell, face key or node.
pub type Ijk = [i32; 3];

/// Axis-aligned quadrilateral facet.
///
/// The facet with `axis = a` and `key = k` lies between cell `k - e_a`
/// (`minus`) and cell `k` (`plus`); its flux is oriented along `+e_a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub key: Ijk,
    pub minus: Option<usize>,
    pub plus: Option<usize>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none() || self.plus.is_none()
    }

    /// `+1` when the outward normal is `+e_axis`, `-1` when it is `-e_axis`,
    /// `0` for interior facets.
    pub fn outward_sign(&self) -> i8 {
        match (self.minus, self.plus) {
            (Some(_), None) => 1,
            (None, Some(_)) => -1,
            _ => 0,
        }
    }
}

/// Mesh edge from node `node` to `node + e_axis`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub axis: usize,
    pub node: Ijk,
    /// Facets around the edge with their circulation sign (right-hand rule
    /// about `+e_axis`).
    pub faces: Vec<(usize, i8)>,
    pub boundary: bool,
}

/// Structured voxel mesh of a single meta-atom.
///
/// Cell `c` is the cube of edge `voxel_size` centered at
/// `(c + lattice_offset) * voxel_size`; node `n` sits at
/// `(n + lattice_offset - 1/2) * voxel_size`.
#[derive(Debug, Clone)]
pub struct Mesh {
    voxel_size: f64,
    lattice_offset: f64,
    cells: Vec<Ijk>,
    faces: Vec<Face>,
    edges: Vec<Edge>,
    nodes: Vec<Ijk>,
    boundary_components: Vec<Vec<usize>>,
}

const UNIT: [Ijk; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

fn add(a: Ijk, b: Ijk) -> Ijk {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Ijk, b: Ijk) -> Ijk {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn along(axis: usize, v: i32) -> Ijk {
    let mut r = [0; 3];
    r[axis] = v;
    r
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

impl Mesh {
    /// Builds the face/edge/node complex of a set of voxels.
    ///
    /// The cells must form a single face-connected solid whose Euler
    /// characteristic equals its number of boundary components (no handles).
    pub fn from_cells(voxel_size: f64, cells: &[Ijk]) -> Result<Mesh> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidInput("voxel size must be positive".into()));
        }
        let cell_set: BTreeSet<Ijk> = cells.iter().copied().collect();
        if cell_set.is_empty() {
            return Err(Error::DegenerateMesh);
        }
        let cells: Vec<Ijk> = cell_set.iter().copied().collect();
        let cell_id: BTreeMap<Ijk, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();

        let mut face_keys = BTreeSet::new();
        for &c in &cells {
            for a in 0..3 {
                face_keys.insert((a, c));
                face_keys.insert((a, add(c, UNIT[a])));
            }
        }
        let faces: Vec<Face> = face_keys
            .iter()
            .map(|&(axis, key)| Face {
                axis,
                key,
                minus: cell_id.get(&sub(key, UNIT[axis])).copied(),
                plus: cell_id.get(&key).copied(),
            })
            .collect();
        let face_id: BTreeMap<(usize, Ijk), usize> =
            face_keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();

        let mut edge_keys = BTreeSet::new();
        let mut node_set = BTreeSet::new();
        for &c in &cells {
            for a in 0..3 {
                let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
                for db in 0..2 {
                    for dc in 0..2 {
                        edge_keys.insert((a, add(add(c, along(b, db)), along(cc, dc))));
                    }
                }
            }
            for dx in 0..2 {
                for dy in 0..2 {
                    for dz in 0..2 {
                        node_set.insert(add(c, [dx, dy, dz]));
                    }
                }
            }
        }
        let edges: Vec<Edge> = edge_keys
            .iter()
            .map(|&(a, n)| {
                let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
                let quad = |db: i32, dc: i32| add(add(n, along(b, db)), along(cc, dc));
                let boundary = [quad(0, 0), quad(-1, 0), quad(-1, -1), quad(0, -1)]
                    .iter()
                    .any(|q| !cell_id.contains_key(q));
                // counter-clockwise about +e_a, starting on the +b half axis
                let ring = [
                    ((cc, quad(0, 0)), 1i8),
                    ((b, quad(0, 0)), -1),
                    ((cc, quad(-1, 0)), -1),
                    ((b, quad(0, -1)), 1),
                ];
                let faces = ring
                    .iter()
                    .filter_map(|(k, s)| face_id.get(k).map(|&f| (f, *s)))
                    .collect();
                Edge { axis: a, node: n, faces, boundary }
            })
            .collect();
        let nodes: Vec<Ijk> = node_set.into_iter().collect();

        Self::check_connected(&cells, &faces)?;

        let mut uf = UnionFind((0..faces.len()).collect());
        for e in edges.iter().filter(|e| e.boundary) {
            let mut bfaces = e.faces.iter().map(|&(f, _)| f).filter(|&f| faces[f].is_boundary());
            if let Some(first) = bfaces.next() {
                for f in bfaces {
                    uf.union(first, f);
                }
            }
        }
        let mut comp_of_root: BTreeMap<usize, usize> = BTreeMap::new();
        let mut boundary_components: Vec<Vec<usize>> = Vec::new();
        for (f, face) in faces.iter().enumerate() {
            if !face.is_boundary() {
                continue;
            }
            let root = uf.find(f);
            let next = boundary_components.len();
            let idx = *comp_of_root.entry(root).or_insert(next);
            if idx == boundary_components.len() {
                boundary_components.push(Vec::new());
            }
            boundary_components[idx].push(f);
        }

        let chi = nodes.len() as i64 - edges.len() as i64 + faces.len() as i64 - cells.len() as i64;
        if chi != boundary_components.len() as i64 {
            return Err(Error::UnsupportedTopology {
                euler_characteristic: chi,
                boundary_components: boundary_components.len(),
            });
        }

        Ok(Mesh { voxel_size, lattice_offset: 0.0, cells, faces, edges, nodes, boundary_components })
    }

    fn check_connected(cells: &[Ijk], faces: &[Face]) -> Result<()> {
        let mut uf = UnionFind((0..cells.len()).collect());
        for f in faces {
            if let (Some(a), Some(b)) = (f.minus, f.plus) {
                uf.union(a, b);
            }
        }
        let root = uf.find(0);
        if (1..cells.len()).any(|i| uf.find(i) != root) {
            return Err(Error::InvalidInput("voxel set is not face-connected".into()));
        }
        Ok(())
    }

    /// Box of `nx × ny × nz` voxels with its first cell at the lattice origin.
    pub fn voxel_box(voxel_size: f64, nx: i32, ny: i32, nz: i32) -> Result<Mesh> {
        let mut cells = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    cells.push([i, j, k]);
                }
            }
        }
        Self::from_cells(voxel_size, &cells)
    }

    /// Shifts every cell by `offset` voxels along each axis.
    pub fn with_lattice_offset(mut self, offset: f64) -> Mesh {
        self.lattice_offset = offset;
        self
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn lattice_offset(&self) -> f64 {
        self.lattice_offset
    }

    pub fn cells(&self) -> &[Ijk] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn nodes(&self) -> &[Ijk] {
        &self.nodes
    }

    pub fn boundary_components(&self) -> &[Vec<usize>] {
        &self.boundary_components
    }

    pub fn cell_volume(&self) -> f64 {
        self.voxel_size * self.voxel_size * self.voxel_size
    }

    pub fn interior_face_count(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn boundary_face_count(&self) -> usize {
        self.faces.len() - self.interior_face_count()
    }

    /// Cell center in meters.
    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let c = self.cells[cell];
        let (h, o) = (self.voxel_size, self.lattice_offset);
        [(c[0] as f64 + o) * h, (c[1] as f64 + o) * h, (c[2] as f64 + o) * h]
    }

    /// Minimum corner of a cell in lattice units (meters / voxel size).
    pub fn cell_corner_lattice(&self, cell: usize) -> [f64; 3] {
        self.lattice_point(self.cells[cell])
    }

    /// Lower corner of a facet in lattice units.
    pub fn face_corner_lattice(&self, face: usize) -> [f64; 3] {
        self.lattice_point(self.faces[face].key)
    }

    fn lattice_point(&self, n: Ijk) -> [f64; 3] {
        let o = self.lattice_offset - 0.5;
        [n[0] as f64 + o, n[1] as f64 + o, n[2] as f64 + o]
    }

    /// Midpoint of an edge in meters.
    pub fn edge_midpoint(&self, edge: usize) -> [f64; 3] {
        let e = &self.edges[edge];
        let h = self.voxel_size;
        let mut p = self.lattice_point(e.node);
        p[e.axis] += 0.5;
        p.map(|v| v * h)
    }

    /// Half-width of the axis-aligned hull of the cells, measured from the
    /// lattice origin (meters).
    pub fn hull_radius(&self) -> f64 {
        let o = self.lattice_offset;
        let m = self
            .cells
            .iter()
            .flat_map(|c| c.iter().map(move |&v| crate::math::abs(v as f64 + o)))
            .fold(0.0, f64::max);
        (m + 0.5) * self.voxel_size
    }

    /// Cells incident to a face, as `(cell, face is the cell's upper side)`.
    pub fn face_cells(&self, face: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        let f = &self.faces[face];
        f.minus.map(|c| (c, true)).into_iter().chain(f.plus.map(|c| (c, false)))
    }

    /// For each cell and axis, the facet ids of its lower and upper side.
    pub fn cell_faces(&self) -> Vec<[[usize; 2]; 3]> {
        let mut out = vec![[[usize::MAX; 2]; 3]; self.cells.len()];
        for (fid, f) in self.faces.iter().enumerate() {
            if let Some(c) = f.minus {
                out[c][f.axis][1] = fid;
            }
            if let Some(c) = f.plus {
                out[c][f.axis][0] = fid;
            }
        }
        out
    }
}

/// Placement of the voxel lattice relative to the sphere center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoxelLattice {
    /// One cell is centered on the sphere center.
    #[default]
    CellCentered,
    /// A lattice node coincides with the sphere center.
    NodeCentered,
}

impl VoxelLattice {
    fn offset(self) -> f64 {
        match self {
            VoxelLattice::CellCentered => 0.0,
            VoxelLattice::NodeCentered => 0.5,
        }
    }
}

/// Staircase voxel sphere on a lattice centered at the origin: the cells whose
/// centers lie strictly inside `radius`.
pub fn build_voxel_sphere(radius: f64, voxel_size: f64) -> Result<Mesh> {
    build_voxel_sphere_on(radius, voxel_size, VoxelLattice::CellCentered)
}

/// [`build_voxel_sphere`] with an explicit lattice placement.
///
/// A voxel wider than the sphere diameter is rejected as degenerate.
pub fn build_voxel_sphere_on(radius: f64, voxel_size: f64, lattice: VoxelLattice) -> Result<Mesh> {
    if !(radius > 0.0 && radius.is_finite()) || !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidInput("radius and voxel size must be positive".into()));
    }
    if voxel_size > 2.0 * radius {
        return Err(Error::DegenerateMesh);
    }
    let o = lattice.offset();
    let n = ceil(radius / voxel_size) as i32 + 1;
    let r2 = radius * radius;
    let mut cells = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                let p = [i, j, k].map(|v| (v as f64 + o) * voxel_size);
                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < r2 {
                    cells.push([i, j, k]);
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::DegenerateMesh);
    }
    Ok(Mesh::from_cells(voxel_size, &cells)?.with_lattice_offset(o))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversized_voxel_is_degenerate() {
        assert_eq!(build_voxel_sphere(1.0, 2.1).unwrap_err(), Error::DegenerateMesh);
    }

    #[test]
    fn single_voxel_sphere() {
        let m = build_voxel_sphere(1.0, 1.9).unwrap();
        assert_eq!(m.cells().len(), 1);
        assert_eq!(m.boundary_face_count(), 6);
        assert_eq!(m.boundary_components().len(), 1);
        assert_eq!(m.edges().len(), 12);
        assert_eq!(m.nodes().len(), 8);
    }

    #[test]
    fn sphere_cell_count_matches_enumeration() {
        // brute-force count of centered lattice points with |p| < 1 at h = 0.5
        let mut count = 0;
        for i in -4i32..=4 {
            for j in -4i32..=4 {
                for k in -4i32..=4 {
                    let (x, y, z) = (0.5 * i as f64, 0.5 * j as f64, 0.5 * k as f64);
                    if x * x + y * y + z * z < 1.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 27);
        let m = build_voxel_sphere(1.0, 0.5).unwrap();
        assert_eq!(m.cells().len(), count);
        assert_eq!(m.boundary_components().len(), 1);
    }

    #[test]
    fn node_centered_cube() {
        let m = build_voxel_sphere_on(1.0, 1.0, VoxelLattice::NodeCentered).unwrap();
        assert_eq!(m.cells().len(), 8);
        assert_eq!(m.faces().len(), 36);
        assert!((m.hull_radius() - 1.0).abs() < 1e-15);
        assert_eq!(m.cell_center(0), [-0.5, -0.5, -0.5]);
        assert!(build_voxel_sphere_on(1.0, 1.2, VoxelLattice::NodeCentered).is_err());
    }

    #[test]
    fn face_incidence_invariants() {
        let m = build_voxel_sphere(1.0, 0.4).unwrap();
        for f in m.faces() {
            let n = f.minus.is_some() as usize + f.plus.is_some() as usize;
            assert_eq!(n, if f.is_boundary() { 1 } else { 2 });
        }
        // every cell has six distinct facets
        for cf in m.cell_faces() {
            for a in cf {
                assert!(a[0] != usize::MAX && a[1] != usize::MAX && a[0] != a[1]);
            }
        }
        assert!((m.cell_volume() - 0.064).abs() < 1e-15);
    }

    #[test]
    fn edge_rings_are_divergence_free() {
        let m = Mesh::voxel_box(1.0, 2, 3, 2).unwrap();
        for e in m.edges() {
            let mut net = vec![0i32; m.cells().len()];
            for &(f, s) in &e.faces {
                let face = &m.faces()[f];
                if let Some(c) = face.minus {
                    net[c] += s as i32;
                }
                if let Some(c) = face.plus {
                    net[c] -= s as i32;
                }
            }
            assert!(net.iter().all(|&v| v == 0));
            assert_eq!(e.faces.len() == 4 && !e.boundary, !e.boundary);
        }
    }

    #[test]
    fn torus_is_rejected() {
        let mut cells = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (1, 1) {
                    cells.push([i, j, 0]);
                }
            }
        }
        assert!(matches!(
            Mesh::from_cells(1.0, &cells),
            Err(Error::UnsupportedTopology { euler_characteristic: 0, .. })
        ));
    }

    #[test]
    fn cavity_has_two_boundary_components() {
        let mut cells = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if (i, j, k) != (1, 1, 1) {
                        cells.push([i, j, k]);
                    }
                }
            }
        }
        let m = Mesh::from_cells(1.0, &cells).unwrap();
        assert_eq!(m.boundary_components().len(), 2);
    }
}
