use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::ArrayLayout;
use crate::error::{Error, Result};
use crate::math::ceil;

const MAX_LEVELS: usize = 48;

/// One regular 2-D grid over the array plane.
#[derive(Debug, Clone)]
pub struct GridLevel {
    pub blocks_per_side: usize,
    pub block_size: f64,
    /// Block of every atom, as `iy * blocks_per_side + ix`.
    pub atom_block: Vec<usize>,
    /// Non-empty blocks and their atoms in ascending order.
    pub members: BTreeMap<usize, Vec<usize>>,
}

impl GridLevel {
    pub fn coords(&self, block: usize) -> (usize, usize) {
        (block % self.blocks_per_side, block / self.blocks_per_side)
    }

    /// Two blocks are near when they share at least one grid node.
    pub fn near(&self, a: usize, b: usize) -> bool {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx) <= 1 && ay.abs_diff(by) <= 1
    }

    pub fn atoms(&self, block: usize) -> &[usize] {
        self.members.get(&block).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Near,
    Far,
}

/// Unordered block pair examined at one level, `first <= second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub first: usize,
    pub second: usize,
    pub kind: PairKind,
}

/// Multilevel grid over the layout with near/far classification.
#[derive(Debug, Clone)]
pub struct BlockTree {
    pub origin: [f64; 2],
    pub side: f64,
    pub levels: Vec<GridLevel>,
    /// Examined block pairs per level; empty until classified.
    pub interactions: Vec<Vec<Interaction>>,
    /// Ordered distinct-atom pairs left near at the finest level.
    pub finest_pairs: Vec<(usize, usize)>,
    classified: bool,
}

impl BlockTree {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn is_classified(&self) -> bool {
        self.classified
    }

    pub fn atom_count(&self) -> usize {
        self.levels.first().map_or(0, |l| l.atom_block.len())
    }

    /// Far pairs of a level.
    pub fn far_pairs(&self, level: usize) -> impl Iterator<Item = &Interaction> {
        self.interactions
            .get(level)
            .into_iter()
            .flatten()
            .filter(|i| i.kind == PairKind::Far)
    }

    pub fn far_pair_count(&self) -> usize {
        (0..self.levels.len()).map(|l| self.far_pairs(l).count()).sum()
    }

    /// Unordered finest-level pairs `(a, b)` with `a < b`.
    pub fn finest_unordered(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.finest_pairs.iter().copied().filter(|&(a, b)| a < b)
    }
}

/// Builds the grid hierarchy: level 1 tiles the bounding square of the
/// centers with `level1_blocks_per_side²` blocks, each further level halves
/// the block edge, until no block holds more than one atom.
pub fn build_block_tree(layout: &ArrayLayout, level1_blocks_per_side: usize) -> Result<BlockTree> {
    if level1_blocks_per_side < 2 {
        return Err(Error::InvalidInput("level-1 grid needs at least 2 blocks per side".into()));
    }
    if layout.is_empty() {
        return Err(Error::InvalidInput("layout has no atoms".into()));
    }
    let centers = &layout.centers;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            if centers[i][0] == centers[j][0] && centers[i][1] == centers[j][1] {
                return Err(Error::IndistinguishableAtoms { first: i, second: j });
            }
        }
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in centers {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let mut side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if side <= 0.0 {
        side = 1.0;
    }
    let n1 = level1_blocks_per_side;
    let size1 = side / n1 as f64;
    // scaled coordinates; multiplying by powers of two stays exact
    let scaled: Vec<[f64; 2]> =
        centers.iter().map(|c| [(c[0] - lo[0]) / size1, (c[1] - lo[1]) / size1]).collect();

    let mut levels = Vec::new();
    let mut factor = 1.0;
    let mut n = n1;
    loop {
        let index = |t: f64| -> usize {
            // a center on a grid line goes to the lower block
            let k = ceil(t * factor) - 1.0;
            if k < 0.0 {
                0
            } else {
                (k as usize).min(n - 1)
            }
        };
        let atom_block: Vec<usize> = scaled.iter().map(|t| index(t[1]) * n + index(t[0])).collect();
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (a, &b) in atom_block.iter().enumerate() {
            members.entry(b).or_default().push(a);
        }
        let done = members.values().all(|m| m.len() <= 1);
        let crowded = members.values().find(|m| m.len() > 1).map(|m| (m[0], m[1]));
        levels.push(GridLevel { blocks_per_side: n, block_size: size1 / factor, atom_block, members });
        if done {
            break;
        }
        if levels.len() >= MAX_LEVELS {
            let (first, second) = crowded.unwrap_or((0, 0));
            return Err(Error::IndistinguishableAtoms { first, second });
        }
        factor *= 2.0;
        n *= 2;
    }
    Ok(BlockTree {
        origin: lo,
        side,
        levels,
        interactions: Vec::new(),
        finest_pairs: Vec::new(),
        classified: false,
    })
}

/// Fills the per-level near/far lists and the finest-level pairs.
///
/// Level 1 examines every pair of non-empty blocks; deeper levels examine
/// only the children of pairs that were near one level up. Self pairs of a
/// single atom belong to the block diagonal and are never listed.
pub fn classify_interactions(tree: &mut BlockTree) {
    let levels = &tree.levels;
    let mut interactions: Vec<Vec<Interaction>> = Vec::with_capacity(levels.len());

    let first = &levels[0];
    let blocks: Vec<usize> = first.members.keys().copied().collect();
    let mut candidates = Vec::new();
    for (i, &a) in blocks.iter().enumerate() {
        for &b in &blocks[i..] {
            candidates.push((a, b));
        }
    }

    for (l, level) in levels.iter().enumerate() {
        let mut list = Vec::with_capacity(candidates.len());
        for &(a, b) in &candidates {
            let kind = if level.near(a, b) { PairKind::Near } else { PairKind::Far };
            list.push(Interaction { first: a, second: b, kind });
        }
        if let Some(next) = levels.get(l + 1) {
            let mut children = Vec::new();
            for it in list.iter().filter(|i| i.kind == PairKind::Near) {
                let ca = child_blocks(level, next, it.first);
                let cb = child_blocks(level, next, it.second);
                for &x in &ca {
                    for &y in &cb {
                        if it.first == it.second && y < x {
                            continue;
                        }
                        let (p, q) = if x <= y { (x, y) } else { (y, x) };
                        children.push((p, q));
                    }
                }
            }
            candidates = children;
        }
        interactions.push(list);
    }

    let finest = levels.last().expect("tree has at least one level");
    let mut finest_pairs = Vec::new();
    for it in interactions.last().into_iter().flatten() {
        if it.kind == PairKind::Near && it.first != it.second {
            let a = finest.atoms(it.first)[0];
            let b = finest.atoms(it.second)[0];
            finest_pairs.push((a, b));
            finest_pairs.push((b, a));
        }
    }
    finest_pairs.sort_unstable();

    tree.interactions = interactions;
    tree.finest_pairs = finest_pairs;
    tree.classified = true;
}

/// Non-empty children of `block` one level down.
fn child_blocks(level: &GridLevel, next: &GridLevel, block: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(4);
    for &atom in level.atoms(block) {
        let c = next.atom_block[atom];
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vogel_spiral;
    use alloc::vec;

    fn classified(layout: &ArrayLayout, n1: usize) -> BlockTree {
        let mut t = build_block_tree(layout, n1).unwrap();
        classify_interactions(&mut t);
        t
    }

    /// Counts coverage records of every ordered pair by brute force.
    fn coverage(t: &BlockTree) -> Vec<Vec<usize>> {
        let n = t.atom_count();
        let mut count = vec![vec![0usize; n]; n];
        for (l, level) in t.levels.iter().enumerate() {
            for it in t.far_pairs(l) {
                for &a in level.atoms(it.first) {
                    for &b in level.atoms(it.second) {
                        count[a][b] += 1;
                        count[b][a] += 1;
                    }
                }
            }
        }
        for &(a, b) in &t.finest_pairs {
            count[a][b] += 1;
        }
        count
    }

    #[test]
    fn single_atom_is_one_level() {
        let t = classified(&ArrayLayout::new(vec![[0.0; 3]], 1.0), 4);
        assert_eq!(t.level_count(), 1);
        assert_eq!(t.far_pair_count(), 0);
        assert!(t.finest_pairs.is_empty());
    }

    #[test]
    fn lattice_corner_block_has_three_neighbors() {
        let mut centers = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                centers.push([x as f64, y as f64, 0.0]);
            }
        }
        let t = classified(&ArrayLayout::new(centers, 0.1), 3);
        assert_eq!(t.level_count(), 1);
        let level = &t.levels[0];
        assert!((0..9).all(|a| level.atom_block[a] == a));
        // brute force over shared grid nodes: node sets of blocks
        let nodes = |b: usize| {
            let (x, y) = (b % 3, b / 3);
            [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]
        };
        for a in 0..9 {
            for b in 0..9 {
                let shared = nodes(a).iter().any(|p| nodes(b).contains(p));
                assert_eq!(level.near(a, b), shared);
            }
        }
        let near_of_corner = (0..9).filter(|&b| level.near(0, b)).count();
        assert_eq!(near_of_corner, 4);
        let near_pairs = t.interactions[0].iter().filter(|i| i.kind == PairKind::Near).count();
        // 9 self pairs + 12 edge-adjacent + 8 diagonal
        assert_eq!(near_pairs, 29);
    }

    #[test]
    fn adjacent_atoms_are_finest_pairs() {
        let t = classified(&ArrayLayout::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 0.1), 2);
        assert_eq!(t.far_pair_count(), 0);
        assert_eq!(t.finest_pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn separated_atoms_are_far_at_level_one() {
        let t = classified(&ArrayLayout::new(vec![[0.0, 0.0, 0.0], [3.0, 3.0, 0.0]], 0.1), 4);
        assert_eq!(t.far_pairs(0).count(), 1);
        assert_eq!(t.far_pair_count(), 1);
        assert!(t.finest_pairs.is_empty());
    }

    #[test]
    fn duplicate_centers_rejected() {
        let l = ArrayLayout::new(vec![[1.0, 2.0, 0.0], [0.0, 0.0, 0.0], [1.0, 2.0, 0.0]], 0.1);
        assert_eq!(
            build_block_tree(&l, 4).unwrap_err(),
            Error::IndistinguishableAtoms { first: 0, second: 2 }
        );
    }

    #[test]
    fn grid_line_ties_go_to_lower_block() {
        // x = 2 is the line between blocks 0 and 1 of a 2-block grid on [0, 4]
        let l = ArrayLayout::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [4.0, 4.0, 0.0]], 0.1);
        let t = build_block_tree(&l, 2).unwrap();
        assert_eq!(t.levels[0].atom_block, vec![0, 0, 3]);
    }

    #[test]
    fn vogel_coverage_is_a_partition() {
        let layout = vogel_spiral(60, 1.0).unwrap();
        for n1 in [2, 3, 4, 5] {
            let t = classified(&layout, n1);
            let cov = coverage(&t);
            for a in 0..60 {
                for b in 0..60 {
                    assert_eq!(cov[a][b], usize::from(a != b), "pair ({a},{b}) n1={n1}");
                }
            }
            for w in t.levels.windows(2) {
                assert_eq!(w[1].block_size, w[0].block_size / 2.0);
            }
            assert!(t.levels.last().unwrap().members.values().all(|m| m.len() == 1));
        }
    }

    #[test]
    fn children_stay_inside_parents() {
        let layout = vogel_spiral(40, 1.0).unwrap();
        let t = build_block_tree(&layout, 4).unwrap();
        for w in t.levels.windows(2) {
            for a in 0..40 {
                let (px, py) = w[0].coords(w[0].atom_block[a]);
                let (cx, cy) = w[1].coords(w[1].atom_block[a]);
                assert_eq!((cx / 2, cy / 2), (px, py));
            }
        }
    }
}
