//! Galerkin interaction blocks and excitation vector.
//!
//! Facet functions are lowest-order face elements normalized to unit flux.
//! Within a cell the function attached to the lower face along axis `a` is
//! `e_a (1 - ξ_a) / h²`, the one attached to the upper face `e_a ξ_a / h²`.
//! The DoF-level block is `Cᵀ Z_facet C` with `C` the loop/star combination
//! matrix, and
//!
//! ```text
//! Z_facet = [i = j] G / (σ + jωε₀χ) + jωμ₀ L + D / (jωε₀)
//! ```
//!
//! where `G` is the facet Gram matrix, `L` the volume kernel integral and `D`
//! the kernel integral of the normal traces on the atom boundary (the
//! divergence of every DoF vanishes inside the cells).
//!
//! All cell and facet pair integrals are written in relative lattice
//! coordinates, so a pair only depends on the offset between the two
//! elements. Offsets are canonicalized up to sign, which makes the self block
//! symmetric to rounding and lets every pair with the same offset share one
//! integral.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::geometry::{ArrayLayout, Mesh};
use crate::linalg::Matrix;
use crate::math::{abs, c, cis_neg, sqrt, C64, EPS0, MU0, PI};
use crate::quadrature::{norm3, GaussRule, Integrator};

/// Free-space Green's function `e^{-jkr} / (4πr)`.
pub fn green(r: f64, k: f64) -> Result<C64> {
    if !(r > 0.0) {
        return Err(Error::SingularEvaluation);
    }
    Ok(cis_neg(k * r) / (4.0 * PI * r))
}

/// Isotropic non-magnetic medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Conductivity in S/m.
    pub sigma: f64,
    /// Complex dielectric susceptibility.
    pub chi: C64,
}

impl Material {
    pub fn new(sigma: f64, chi: C64) -> Self {
        Material { sigma, chi }
    }

    /// Dielectric with relative permittivity `eps_r` (`χ = ε_r - 1`).
    pub fn from_permittivity(eps_r: C64) -> Self {
        Material { sigma: 0.0, chi: eps_r - 1.0 }
    }

    /// `σ + jωε₀χ`.
    pub fn admittivity(&self, omega: f64) -> C64 {
        c(self.sigma, 0.0) + c(0.0, omega * EPS0) * self.chi
    }
}

/// Incident field shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncidentField {
    /// `E₀ e^{-jk d·r}`.
    PlaneWave { amplitude: [C64; 3], direction: [f64; 3] },
    /// Spatially constant field, the `k → 0` limit of a plane wave.
    Uniform { amplitude: [C64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    /// Frequency in Hz.
    pub frequency: f64,
    pub field: IncidentField,
}

impl Excitation {
    pub fn plane_wave(frequency: f64, amplitude: [C64; 3], direction: [f64; 3]) -> Result<Self> {
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(Error::InvalidInput("frequency must be positive".into()));
        }
        if abs(norm3(&direction) - 1.0) > 1e-12 {
            return Err(Error::InvalidInput("propagation direction must be a unit vector".into()));
        }
        let along: C64 = (0..3).map(|a| amplitude[a] * direction[a]).sum();
        let scale = amplitude.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if along.norm() > 1e-12 * scale {
            return Err(Error::InvalidInput("field amplitude must be transverse".into()));
        }
        Ok(Excitation { frequency, field: IncidentField::PlaneWave { amplitude, direction } })
    }

    pub fn uniform(frequency: f64, amplitude: [C64; 3]) -> Result<Self> {
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(Error::InvalidInput("frequency must be positive".into()));
        }
        Ok(Excitation { frequency, field: IncidentField::Uniform { amplitude } })
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    /// Free-space wavenumber `ω√(ε₀μ₀)`.
    pub fn wavenumber(&self) -> f64 {
        self.omega() * sqrt(EPS0 * MU0)
    }
}

/// Kernel quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Gauss points per axis of the lower rule; the error estimate uses one
    /// more point.
    pub order: usize,
    /// Relative error target per integration box.
    pub eps_quad: f64,
    /// Bisection depth limit.
    pub max_depth: u32,
    /// Boxes at least this many diameters away from the kernel singularity
    /// skip the error estimate.
    pub near_factor: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { order: 5, eps_quad: 1e-6, max_depth: 8, near_factor: 2.0 }
    }
}

/// One atom-atom block at DoF level.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub atoms: (usize, usize),
    pub matrix: Matrix,
}

impl DenseBlock {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

/// Boundary facet with its outward sign and lattice corner.
#[derive(Debug, Clone, Copy)]
struct Trace {
    face: usize,
    axis: usize,
    sign: f64,
    corner: [f64; 3],
}

/// Cached pair integrals of one block.
#[derive(Default)]
struct PairCache {
    cells: BTreeMap<[i32; 3], [C64; 12]>,
    traces: BTreeMap<(usize, usize, [i32; 3]), C64>,
}

/// Assembles blocks, excitation and the dense oracle of an array of
/// identical meshes.
#[derive(Debug, Clone)]
pub struct Assembler {
    mesh: Mesh,
    basis: BasisSet,
    centers: Vec<[f64; 3]>,
    materials: Vec<Material>,
    atom_material: Vec<usize>,
    excitation: Excitation,
    integrator: Integrator,
    corners: Vec<[f64; 3]>,
    cell_faces: Vec<[[usize; 2]; 3]>,
    traces: Vec<Trace>,
    self_blocks: Vec<Matrix>,
}

impl Assembler {
    /// Every atom uses `material`.
    pub fn new(
        mesh: &Mesh,
        basis: &BasisSet,
        layout: &ArrayLayout,
        material: Material,
        excitation: Excitation,
        quad: QuadConfig,
    ) -> Result<Self> {
        Self::with_materials(mesh, basis, layout, vec![material], vec![0; layout.atom_count()], excitation, quad)
    }

    /// Atom `i` uses `materials[atom_material[i]]`.
    pub fn with_materials(
        mesh: &Mesh,
        basis: &BasisSet,
        layout: &ArrayLayout,
        materials: Vec<Material>,
        atom_material: Vec<usize>,
        excitation: Excitation,
        quad: QuadConfig,
    ) -> Result<Self> {
        if atom_material.len() != layout.atom_count() {
            return Err(Error::DimensionMismatch { expected: layout.atom_count(), found: atom_material.len() });
        }
        if atom_material.iter().any(|&m| m >= materials.len()) {
            return Err(Error::InvalidInput("material index out of range".into()));
        }
        if basis.facet_count() != mesh.faces().len() {
            return Err(Error::DimensionMismatch { expected: mesh.faces().len(), found: basis.facet_count() });
        }
        let omega = excitation.omega();
        if materials.iter().any(|m| m.admittivity(omega).norm() == 0.0) {
            return Err(Error::InvalidInput("material admittivity vanishes".into()));
        }
        if quad.order == 0 || !(quad.eps_quad > 0.0 && quad.eps_quad < 1.0) || !(quad.near_factor >= 1.0) {
            return Err(Error::InvalidInput("quadrature order and tolerance out of range".into()));
        }
        let corners = (0..mesh.cells().len()).map(|c| mesh.cell_corner_lattice(c)).collect();
        let traces = mesh
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_boundary())
            .map(|(i, f)| Trace {
                face: i,
                axis: f.axis,
                sign: f.outward_sign() as f64,
                corner: mesh.face_corner_lattice(i),
            })
            .collect();
        let mut asm = Assembler {
            mesh: mesh.clone(),
            basis: basis.clone(),
            centers: layout.centers.clone(),
            materials,
            atom_material,
            excitation,
            integrator: Integrator::new(quad.order, quad.eps_quad, quad.max_depth, quad.near_factor),
            corners,
            cell_faces: mesh.cell_faces(),
            traces,
            self_blocks: Vec::new(),
        };
        asm.check_overlaps()?;
        let free = asm.facet_block(None)?;
        let h = mesh.voxel_size();
        let mut blocks = Vec::with_capacity(asm.materials.len());
        for m in &asm.materials {
            let mut zf = free.clone();
            let inv = C64::new(1.0, 0.0) / m.admittivity(omega);
            for cf in &asm.cell_faces {
                for [lo, hi] in cf {
                    let (d, o) = (inv / (3.0 * h), inv / (6.0 * h));
                    zf[(*lo, *lo)] += d;
                    zf[(*hi, *hi)] += d;
                    zf[(*lo, *hi)] += o;
                    zf[(*hi, *lo)] += o;
                }
            }
            blocks.push(asm.project(&zf));
        }
        asm.self_blocks = blocks;
        Ok(asm)
    }

    fn check_overlaps(&self) -> Result<()> {
        let h = self.mesh.voxel_size();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.corners {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d] + 1.0);
            }
        }
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                let delta: [f64; 3] = core::array::from_fn(|d| (self.centers[i][d] - self.centers[j][d]) / h);
                if (0..3).any(|d| abs(delta[d]) >= hi[d] - lo[d]) {
                    continue;
                }
                let hit = self.corners.iter().any(|p| {
                    self.corners.iter().any(|q| (0..3).all(|d| abs(p[d] - q[d] + delta[d]) < 1.0 - 1e-9))
                });
                if hit {
                    return Err(Error::OverlappingAtoms { first: i, second: j });
                }
            }
        }
        Ok(())
    }

    pub fn atom_count(&self) -> usize {
        self.centers.len()
    }

    pub fn dofs_per_atom(&self) -> usize {
        self.basis.dof_count()
    }

    pub fn dof_count(&self) -> usize {
        self.atom_count() * self.dofs_per_atom()
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub fn excitation(&self) -> &Excitation {
        &self.excitation
    }

    pub fn material_of(&self, atom: usize) -> usize {
        self.atom_material[atom]
    }

    /// Self block of the atoms made of material `m`.
    pub fn self_block(&self, m: usize) -> &Matrix {
        &self.self_blocks[m]
    }

    /// `Z_ij` at DoF level.
    pub fn block(&self, i: usize, j: usize) -> Result<DenseBlock> {
        let n = self.atom_count();
        if i >= n || j >= n {
            return Err(Error::InvalidInput("atom index out of range".into()));
        }
        let matrix = if i == j {
            self.self_blocks[self.atom_material[i]].clone()
        } else {
            let h = self.mesh.voxel_size();
            let delta: [f64; 3] = core::array::from_fn(|d| (self.centers[i][d] - self.centers[j][d]) / h);
            self.project(&self.facet_block(Some(delta))?)
        };
        Ok(DenseBlock { atoms: (i, j), matrix })
    }

    /// `Cᵀ Z C`.
    fn project(&self, zf: &Matrix) -> Matrix {
        let n = self.basis.dof_count();
        let f = zf.rows();
        let mut zc = Matrix::zeros(f, n);
        for j in 0..n {
            let col = zc.col_mut(j);
            for &(g, w) in self.basis.column(j) {
                for (o, z) in col.iter_mut().zip(zf.col(g)) {
                    *o += z * w;
                }
            }
        }
        Matrix::from_fn(n, n, |i, j| {
            self.basis.column(i).iter().map(|&(fi, w)| zc[(fi, j)] * w).sum()
        })
    }

    /// Kernel part `jωμ₀ L + D / (jωε₀)` at facet level; `delta` is the
    /// lattice offset between the test and trial atom (`None` for the self
    /// block).
    fn facet_block(&self, delta: Option<[f64; 3]>) -> Result<Matrix> {
        let (mut l, d) = self.facet_parts(delta)?;
        l.add_scaled(C64::new(1.0, 0.0), &d);
        Ok(l)
    }

    /// `(jωμ₀ L, D / (jωε₀))` at facet level.
    fn facet_parts(&self, delta: Option<[f64; 3]>) -> Result<(Matrix, Matrix)> {
        let h = self.mesh.voxel_size();
        let omega = self.excitation.omega();
        let nf = self.mesh.faces().len();
        let off = delta.unwrap_or([0.0; 3]);
        let mut cache = PairCache::default();
        let mut zf = Matrix::zeros(nf, nf);
        let mut zd = Matrix::zeros(nf, nf);

        let l_scale = c(0.0, omega * MU0) * (h / (4.0 * PI));
        for (p, pc) in self.corners.iter().enumerate() {
            for (q, qc) in self.corners.iter().enumerate() {
                let key: [i32; 3] = core::array::from_fn(|d| crate::math::round(pc[d] - qc[d]) as i32);
                let vals = match cache.cells.get(&key) {
                    Some(v) => *v,
                    None => {
                        let d: [f64; 3] = core::array::from_fn(|k| key[k] as f64 + off[k]);
                        let v = self.cell_pair(d)?;
                        cache.cells.insert(key, v);
                        v
                    }
                };
                for a in 0..3 {
                    for al in 0..2 {
                        for be in 0..2 {
                            let f = self.cell_faces[p][a][al];
                            let g = self.cell_faces[q][a][be];
                            zf[(f, g)] += l_scale * vals[a * 4 + al * 2 + be];
                        }
                    }
                }
            }
        }

        let d_scale = C64::new(1.0, 0.0) / (c(0.0, omega * EPS0) * (4.0 * PI * h));
        for tf in &self.traces {
            for tg in &self.traces {
                let key: [i32; 3] = core::array::from_fn(|d| crate::math::round(tf.corner[d] - tg.corner[d]) as i32);
                let ck = (tf.axis, tg.axis, key);
                let v = match cache.traces.get(&ck) {
                    Some(v) => *v,
                    None => {
                        let d: [f64; 3] = core::array::from_fn(|k| key[k] as f64 + off[k]);
                        let v = self.trace_pair(tf.axis, tg.axis, d)?;
                        cache.traces.insert(ck, v);
                        v
                    }
                };
                zd[(tf.face, tg.face)] += d_scale * (tf.sign * tg.sign) * v;
            }
        }
        Ok((zf, zd))
    }

    /// `∫_{[-1,1]³} K(v) e^{-jκρ}/ρ dv` with `ρ = |v + Δ|` for all 12
    /// (axis, test side, trial side) combinations, indexed `a·4 + α·2 + β`.
    fn cell_pair(&self, delta: [f64; 3]) -> Result<[C64; 12]> {
        let (d, flipped) = canonical(delta);
        let kappa = self.excitation.wavenumber() * self.mesh.voxel_size();
        let raw = self.integrator.integrate(
            |v: &[f64; 3], out: &mut [C64]| {
                let r = [v[0] + d[0], v[1] + d[1], v[2] + d[2]];
                let rho = norm3(&r);
                let g = cis_neg(kappa * rho) / rho;
                let t = [1.0 - abs(v[0]), 1.0 - abs(v[1]), 1.0 - abs(v[2])];
                for a in 0..3 {
                    let lat = t[(a + 1) % 3] * t[(a + 2) % 3];
                    let k = overlap(v[a]);
                    for s in 0..4 {
                        out[a * 4 + s] = g * (lat * k[s]);
                    }
                }
            },
            [-1.0; 3],
            [1.0; 3],
            &[&[0.0], &[0.0], &[0.0]],
            Some(([-d[0], -d[1], -d[2]], 0.0)),
            12,
        )?;
        let mut out = [C64::new(0.0, 0.0); 12];
        for a in 0..3 {
            for al in 0..2 {
                for be in 0..2 {
                    let (x, y) = if flipped { (be, al) } else { (al, be) };
                    out[a * 4 + al * 2 + be] = raw[a * 4 + x * 2 + y];
                }
            }
        }
        Ok(out)
    }

    /// `∫_f ∫_g e^{-jκρ}/ρ` over two unit boundary squares with normals
    /// `af`, `ag` and lower-corner offset `Δ`.
    fn trace_pair(&self, af: usize, ag: usize, delta: [f64; 3]) -> Result<C64> {
        let kappa = self.excitation.wavenumber() * self.mesh.voxel_size();
        if af == ag {
            let (d, _) = canonical(delta);
            let (b, cc) = ((af + 1) % 3, (af + 2) % 3);
            let (db, dc, dn) = (d[b], d[cc], d[af]);
            let v = self.integrator.integrate(
                |v: &[f64; 2], out: &mut [C64]| {
                    let (x, y) = (v[0] + db, v[1] + dc);
                    let rho = sqrt(x * x + y * y + dn * dn);
                    out[0] = cis_neg(kappa * rho) / rho * ((1.0 - abs(v[0])) * (1.0 - abs(v[1])));
                },
                [-1.0; 2],
                [1.0; 2],
                &[&[0.0], &[0.0]],
                Some(([-db, -dc], abs(dn))),
                1,
            )?;
            return Ok(v[0]);
        }
        let (a, b, d) = if af < ag { (af, ag, delta) } else { (ag, af, delta.map(|x| -x)) };
        let cc = 3 - a - b;
        let (da, db, dc) = (d[a], d[b], d[cc]);
        let v = self.integrator.integrate(
            |x: &[f64; 3], out: &mut [C64]| {
                let (p, q, w) = (x[0], x[1], x[2]);
                let r = [da - q, db + p, w + dc];
                let rho = norm3(&r);
                out[0] = cis_neg(kappa * rho) / rho * (1.0 - abs(w));
            },
            [0.0, 0.0, -1.0],
            [1.0, 1.0, 1.0],
            &[&[], &[], &[0.0]],
            Some(([-db, da, -dc], 0.0)),
            1,
        )?;
        Ok(v[0])
    }

    /// Facet-level projection of the incident field on atom `atom`.
    fn facet_excitation(&self) -> Vec<C64> {
        let h = self.mesh.voxel_size();
        let k = self.excitation.wavenumber();
        let nf = self.mesh.faces().len();
        let mut out = vec![C64::new(0.0, 0.0); nf];
        match self.excitation.field {
            IncidentField::Uniform { amplitude } => {
                for cf in &self.cell_faces {
                    for a in 0..3 {
                        for side in cf[a] {
                            out[side] += amplitude[a] * (0.5 * h);
                        }
                    }
                }
            }
            IncidentField::PlaneWave { amplitude, direction } => {
                let rule = GaussRule::new(10);
                let kappa = k * h;
                // ∫_0^1 ψ(ξ) e^{-jκ d ξ} dξ for ψ ∈ {1 - ξ, ξ, 1}
                let moments = |db: f64| -> [C64; 3] {
                    let mut m = [C64::new(0.0, 0.0); 3];
                    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                        let e = cis_neg(kappa * db * x) * *w;
                        m[0] += e * (1.0 - x);
                        m[1] += e * *x;
                        m[2] += e;
                    }
                    m
                };
                let mom = [moments(direction[0]), moments(direction[1]), moments(direction[2])];
                for (p, pc) in self.corners.iter().enumerate() {
                    let phase = cis_neg(kappa * (0..3).map(|d| direction[d] * pc[d]).sum::<f64>());
                    for a in 0..3 {
                        let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
                        let trans = mom[b][2] * mom[cc][2];
                        for side in 0..2 {
                            let f = self.cell_faces[p][a][side];
                            out[f] += amplitude[a] * h * phase * trans * mom[a][side];
                        }
                    }
                }
            }
        }
        out
    }

    /// Per-DoF excitation of atom `atom` (length `dofs_per_atom`).
    pub fn atom_excitation(&self, atom: usize) -> Vec<C64> {
        let f = self.facet_excitation();
        let phase = match self.excitation.field {
            IncidentField::PlaneWave { direction, .. } => {
                let k = self.excitation.wavenumber();
                cis_neg(k * (0..3).map(|d| direction[d] * self.centers[atom][d]).sum::<f64>())
            }
            IncidentField::Uniform { .. } => C64::new(1.0, 0.0),
        };
        self.basis
            .columns()
            .map(|col| col.iter().map(|&(g, w)| f[g] * w).sum::<C64>() * phase)
            .collect()
    }

    /// Excitation vector `v₀` in atom-block order.
    pub fn excitation_vector(&self) -> Vec<C64> {
        (0..self.atom_count()).flat_map(|i| self.atom_excitation(i)).collect()
    }

    /// Full matrix assembled block-wise; refused above `cap` DoFs.
    pub fn dense(&self, cap: usize) -> Result<Matrix> {
        let n = self.dof_count();
        if n > cap {
            return Err(Error::DenseOracleDisabled { dofs: n, cap });
        }
        let np = self.dofs_per_atom();
        let mut z = Matrix::zeros(n, n);
        for i in 0..self.atom_count() {
            for j in i..self.atom_count() {
                let b = self.block(i, j)?.matrix;
                if i != j {
                    z.set_block(j * np, i * np, &b.transpose());
                }
                z.set_block(i * np, j * np, &b);
            }
        }
        Ok(z)
    }
}

/// Overlap integrals `∫ φ_α(t + v) φ_β(t) dt` of the two linear shape
/// functions `φ₀ = 1 - x`, `φ₁ = x`, indexed `α·2 + β`.
fn overlap(v: f64) -> [f64; 4] {
    let lo = if v < 0.0 { -v } else { 0.0 };
    let hi = if v > 0.0 { 1.0 - v } else { 1.0 };
    let len = hi - lo;
    let mut k = [0.0; 4];
    if len <= 0.0 {
        return k;
    }
    let g = 0.5 / sqrt(3.0);
    for t in [lo + len * (0.5 - g), lo + len * (0.5 + g)] {
        let (a0, a1) = (1.0 - (t + v), t + v);
        let (b0, b1) = (1.0 - t, t);
        k[0] += a0 * b0;
        k[1] += a0 * b1;
        k[2] += a1 * b0;
        k[3] += a1 * b1;
    }
    k.map(|x| x * 0.5 * len)
}

/// Representative of `{Δ, -Δ}` whose first nonzero component is positive,
/// and whether `Δ` was negated.
fn canonical(d: [f64; 3]) -> ([f64; 3], bool) {
    for x in d {
        if x > 0.0 {
            return (d, false);
        }
        if x < 0.0 {
            return (d.map(|v| -v), true);
        }
    }
    ([0.0; 3], false)
}

/// Block `(i, j)` of the array.
pub fn assemble_block(asm: &Assembler, i: usize, j: usize) -> Result<DenseBlock> {
    asm.block(i, j)
}

/// Excitation vector of the whole array.
pub fn assemble_excitation(asm: &Assembler) -> Vec<C64> {
    asm.excitation_vector()
}

/// Default DoF cap of the dense oracle.
pub const DENSE_CAP: usize = 5000;

/// Dense `Z`, refused above `cap` DoFs.
pub fn assemble_dense(asm: &Assembler, cap: usize) -> Result<Matrix> {
    asm.dense(cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_loop_star;
    use crate::geometry::{build_voxel_sphere, build_voxel_sphere_on, VoxelLattice};

    const R: f64 = 100e-9;

    fn gold() -> Material {
        Material::from_permittivity(c(-9.428, 1.513))
    }

    fn wave() -> Excitation {
        Excitation::plane_wave(5e14, [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], [0.0, 0.0, 1.0]).unwrap()
    }

    fn cube() -> (Mesh, BasisSet) {
        let m = build_voxel_sphere_on(R, R, VoxelLattice::NodeCentered).unwrap();
        let b = build_loop_star(&m);
        (m, b)
    }

    #[test]
    fn green_identities() {
        let k = 3.7;
        for r in [0.1, 1.0, 7.5] {
            assert!((green(r, k).unwrap().norm() - 1.0 / (4.0 * PI * r)).abs() < 1e-15);
            assert_eq!(green(r, 0.0).unwrap(), C64::new(1.0 / (4.0 * PI * r), 0.0));
        }
        let r = 2.0;
        let g = green(r, PI / r).unwrap();
        assert!((g - C64::new(-1.0 / (4.0 * PI * r), 0.0)).norm() < 1e-15);
        assert_eq!(green(0.0, k), Err(Error::SingularEvaluation));
    }

    #[test]
    fn overlap_matches_closed_form() {
        // ∫ (1 - t)² = 1/3 and ∫ t(1 - t) = 1/6 at zero shift
        let k = overlap(0.0);
        assert!((k[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((k[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((k[3] - 1.0 / 3.0).abs() < 1e-15);
        // K_{αβ}(-v) = K_{βα}(v)
        for v in [0.2, 0.7] {
            let (p, m) = (overlap(v), overlap(-v));
            assert!((p[1] - m[2]).abs() < 1e-15 && (p[0] - m[0]).abs() < 1e-15);
        }
        assert_eq!(overlap(1.0), [0.0; 4]);
    }

    #[test]
    fn gold_susceptibility() {
        let m = gold();
        assert!((m.chi - c(-10.428, 1.513)).norm() < 1e-12);
    }

    #[test]
    fn excitation_validation() {
        assert!(Excitation::plane_wave(5e14, [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], [0.0, 0.0, 1.0]).is_err());
        assert!(Excitation::plane_wave(5e14, [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], [0.0, 0.0, 2.0]).is_err());
        assert!(Excitation::plane_wave(-1.0, [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], [0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn self_block_is_symmetric() {
        let (m, b) = cube();
        let layout = ArrayLayout::new(vec![[0.0; 3]], R);
        let asm = Assembler::new(&m, &b, &layout, gold(), wave(), QuadConfig::default()).unwrap();
        let z = asm.block(0, 0).unwrap().matrix;
        assert_eq!(z.rows(), 28);
        let mut d = z.clone();
        d.add_scaled(C64::new(-1.0, 0.0), &z.transpose());
        assert!(d.frobenius() <= 1e-12 * z.frobenius());
        assert!(z.is_finite());
    }

    #[test]
    fn loop_rows_of_trace_term_vanish() {
        let m = Mesh::voxel_box(R, 3, 3, 3).unwrap();
        let b = build_loop_star(&m);
        assert!(b.loop_count() > 0);
        let layout = ArrayLayout::new(vec![[0.0; 3]], R);
        let asm = Assembler::new(&m, &b, &layout, gold(), wave(), QuadConfig::default()).unwrap();
        let d = asm.project(&asm.facet_parts(None).unwrap().1);
        for i in 0..b.dof_count() {
            for k in 0..b.loop_count() {
                assert_eq!(d[(i, k)], C64::new(0.0, 0.0));
                assert_eq!(d[(k, i)], C64::new(0.0, 0.0));
            }
        }
        assert!(d.frobenius() > 0.0);
    }

    #[test]
    fn far_pair_matches_midpoint_kernel() {
        let m = build_voxel_sphere(R, 1.5 * R).unwrap();
        let b = build_loop_star(&m);
        let d = 40.0 * R;
        let layout = ArrayLayout::new(vec![[0.0; 3], [d, 0.0, 0.0]], R);
        // electrically small cells, so the phase is constant across each one
        let ex = Excitation::plane_wave(5e13, [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], [0.0, 0.0, 1.0]).unwrap();
        let asm = Assembler::new(&m, &b, &layout, gold(), ex, QuadConfig::default()).unwrap();
        let h = m.voxel_size();
        let k = asm.excitation.wavenumber();
        let (l, _) = asm.facet_parts(Some([-d / h, 0.0, 0.0])).unwrap();
        // one cell per facet: ∫ w_f dV = e_a h / 2
        let expect = c(0.0, asm.excitation.omega() * MU0) * green(d, k).unwrap() * (h * h / 4.0);
        for a in 0..3 {
            for side in 0..2 {
                let f = asm.cell_faces[0][a][side];
                assert!((l[(f, f)] - expect).norm() <= 0.05 * expect.norm(), "{} vs {expect}", l[(f, f)]);
            }
        }
    }

    #[test]
    fn uniform_field_leaves_loops_unexcited() {
        let m = Mesh::voxel_box(R, 3, 3, 3).unwrap();
        let b = build_loop_star(&m);
        let layout = ArrayLayout::new(vec![[0.0; 3]], R);
        let ex = Excitation::uniform(5e14, [c(1.0, 0.5), c(-0.3, 0.0), c(0.2, 2.0)]).unwrap();
        let asm = Assembler::new(&m, &b, &layout, gold(), ex, QuadConfig::default()).unwrap();
        let v = asm.excitation_vector();
        let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        for x in &v[..b.loop_count()] {
            assert!(x.norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn excitation_is_linear() {
        let (m, b) = cube();
        let layout = ArrayLayout::new(vec![[0.0; 3], [3.0 * R, 0.0, 0.0]], R);
        let e1 = wave();
        let e2 = Excitation::plane_wave(5e14, [c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], [0.0, 0.0, 1.0]).unwrap();
        let e0 = Excitation::plane_wave(5e14, [c(0.0, 0.0); 3], [0.0, 0.0, 1.0]).unwrap();
        let q = QuadConfig::default();
        let a1 = Assembler::new(&m, &b, &layout, gold(), e1, q).unwrap().excitation_vector();
        let a2 = Assembler::new(&m, &b, &layout, gold(), e2, q).unwrap().excitation_vector();
        let a0 = Assembler::new(&m, &b, &layout, gold(), e0, q).unwrap().excitation_vector();
        for ((x, y), z) in a1.iter().zip(&a2).zip(&a0) {
            assert!((x * 2.0 - y).norm() <= 1e-15 * y.norm().max(1e-300));
            assert_eq!(*z, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn overlapping_atoms_are_rejected() {
        let (m, b) = cube();
        let layout = ArrayLayout::new(vec![[0.0; 3], [1.5 * R, 0.0, 0.0]], R);
        let r = Assembler::new(&m, &b, &layout, gold(), wave(), QuadConfig::default());
        assert!(matches!(r, Err(Error::OverlappingAtoms { first: 0, second: 1 })));
        // touching cubes are allowed
        let layout = ArrayLayout::new(vec![[0.0; 3], [2.0 * R, 0.0, 0.0]], R);
        assert!(Assembler::new(&m, &b, &layout, gold(), wave(), QuadConfig::default()).is_ok());
    }

    #[test]
    fn dense_cap_is_enforced() {
        let (m, b) = cube();
        let layout = ArrayLayout::new(vec![[0.0; 3], [3.0 * R, 0.0, 0.0]], R);
        let asm = Assembler::new(&m, &b, &layout, gold(), wave(), QuadConfig::default()).unwrap();
        assert_eq!(asm.dense(40), Err(Error::DenseOracleDisabled { dofs: 56, cap: 40 }));
    }
}
