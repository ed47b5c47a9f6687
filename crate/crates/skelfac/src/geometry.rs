//! Point sets and the adaptive quadtree.
//!
//! The tree separates *structure* (boxes, levels, neighbor lists) from the
//! *assignment* of DOFs to leaves. Two discretizations related by a localized
//! perturbation can share one structure built over both point sets
//! ([`matched_tree`]); the factorization update then reuses everything outside
//! the perturbed region.
//!
//! Construction is single-threaded; everything is immutable afterwards and
//! safe to read concurrently.

use std::sync::Arc;

use crate::error::{Error, Result};

pub type BoxId = usize;

/// Point set with quadrature data defining the discretized operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub normals: Option<Vec<[f64; 2]>>,
    pub params: Option<Vec<f64>>,
}

impl Discretization {
    pub fn dof_count(&self) -> usize {
        self.points.len()
    }

    /// Checks the container invariants; panics on caller bugs.
    pub fn validate(&self) {
        let n = self.points.len();
        assert_eq!(self.weights.len(), n);
        assert!(self.weights.iter().all(|&w| w > 0.0), "weights must be > 0");
        if let Some(nrm) = &self.normals {
            assert_eq!(nrm.len(), n);
            for v in nrm {
                let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
                assert!((len - 1.0).abs() < 1e-12, "normals must be unit length");
            }
        }
        if let Some(p) = &self.params {
            assert_eq!(p.len(), n);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeBox {
    pub id: BoxId,
    pub level: u32,
    /// Integer grid coordinates of the box within its level.
    pub coords: [i64; 2],
    pub center: [f64; 2],
    pub half_width: f64,
    pub parent: Option<BoxId>,
    /// Four children in (x,y) minor order, present iff the box was split.
    pub children: Option<[BoxId; 4]>,
}

impl TreeBox {
    pub fn is_childless(&self) -> bool {
        self.children.is_none()
    }
}

/// Immutable spatial subdivision shared between assignments.
#[derive(Debug)]
pub struct TreeStructure {
    pub boxes: Vec<TreeBox>,
    /// Box ids per level, ascending id order.
    pub levels: Vec<Vec<BoxId>>,
    pub root_lo: [f64; 2],
    pub root_width: f64,
    pub n_occ: usize,
    neighbors: Vec<Vec<BoxId>>,
}

/// A tree structure plus the DOF-to-leaf assignment for one discretization.
#[derive(Debug, Clone)]
pub struct QuadTree {
    pub structure: Arc<TreeStructure>,
    pub leaf_dofs: Vec<Vec<usize>>,
    pub leaf_of: Vec<BoxId>,
    pub dof_count: usize,
}

impl TreeStructure {
    pub fn depth(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn box_width(&self, level: u32) -> f64 {
        self.root_width / (1u64 << level) as f64
    }

    /// Same-level boxes at l-inf grid distance <= 1 plus adjacent childless
    /// boxes at coarser levels.
    pub fn nbor(&self, b: BoxId) -> &[BoxId] {
        &self.neighbors[b]
    }

    fn build_neighbors(&mut self) {
        use std::collections::HashMap;
        let mut maps: Vec<HashMap<[i64; 2], BoxId>> = Vec::with_capacity(self.levels.len());
        for ids in &self.levels {
            let mut m = HashMap::new();
            for &id in ids {
                m.insert(self.boxes[id].coords, id);
            }
            maps.push(m);
        }
        let mut result = vec![Vec::new(); self.boxes.len()];
        for b in &self.boxes {
            let mut out = Vec::new();
            let lvl = b.level as usize;
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let key = [b.coords[0] + dx, b.coords[1] + dy];
                    if let Some(&id) = maps[lvl].get(&key) {
                        out.push(id);
                    }
                }
            }
            // coarser childless boxes touching b
            for coarse in (0..lvl).rev() {
                let shift = (lvl - coarse) as u32;
                let lo = [
                    (b.coords[0] - 1) >> shift,
                    (b.coords[1] - 1) >> shift,
                ];
                let hi = [
                    (b.coords[0] + 1) >> shift,
                    (b.coords[1] + 1) >> shift,
                ];
                for zx in lo[0]..=hi[0] {
                    for zy in lo[1]..=hi[1] {
                        if let Some(&id) = maps[coarse].get(&[zx, zy]) {
                            let c = &self.boxes[id];
                            if c.is_childless() && !self.is_ancestor(id, b.id) {
                                out.push(id);
                            }
                        }
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            result[b.id] = out;
        }
        self.neighbors = result;
    }

    fn is_ancestor(&self, anc: BoxId, mut b: BoxId) -> bool {
        while let Some(p) = self.boxes[b].parent {
            if p == anc {
                return true;
            }
            b = p;
        }
        false
    }

    /// Leaf box containing the point, using the boundary convention that a
    /// point on a split line belongs to the lower-coordinate child.
    pub fn locate(&self, p: [f64; 2]) -> Option<BoxId> {
        let lo = self.root_lo;
        let w = self.root_width;
        if p[0] < lo[0] || p[0] > lo[0] + w || p[1] < lo[1] || p[1] > lo[1] + w {
            return None;
        }
        let mut id = 0;
        while let Some(children) = self.boxes[id].children {
            let c = self.boxes[id].center;
            let ix = usize::from(p[0] > c[0]);
            let iy = usize::from(p[1] > c[1]);
            id = children[iy * 2 + ix];
        }
        Some(id)
    }
}

struct Builder {
    boxes: Vec<TreeBox>,
    n_occ: usize,
    root_width: f64,
}

impl Builder {
    /// Recursively split a node whose point lists (per discretization) are given.
    fn split(&mut self, id: BoxId, sets: &mut [Vec<usize>], discs: &[&Discretization]) -> Result<()> {
        let count = sets.iter().map(|s| s.len()).max().unwrap_or(0);
        if count <= self.n_occ {
            return Ok(());
        }
        let hw = self.boxes[id].half_width;
        if self.boxes[id].level >= 60 || hw <= self.root_width * 1e-15 {
            return Err(Error::UnresolvableCluster);
        }
        let center = self.boxes[id].center;
        let level = self.boxes[id].level + 1;
        let coords = self.boxes[id].coords;
        let mut child_ids = [0usize; 4];
        for iy in 0..2 {
            for ix in 0..2 {
                let cid = self.boxes.len();
                child_ids[iy * 2 + ix] = cid;
                let off = hw * 0.5;
                self.boxes.push(TreeBox {
                    id: cid,
                    level,
                    coords: [coords[0] * 2 + ix as i64, coords[1] * 2 + iy as i64],
                    center: [
                        center[0] + if ix == 0 { -off } else { off },
                        center[1] + if iy == 0 { -off } else { off },
                    ],
                    half_width: hw * 0.5,
                    parent: Some(id),
                    children: None,
                });
            }
        }
        self.boxes[id].children = Some(child_ids);
        for ci in 0..4 {
            let cid = child_ids[ci];
            let mut child_sets: Vec<Vec<usize>> = vec![Vec::new(); sets.len()];
            for (si, set) in sets.iter().enumerate() {
                for &dof in set {
                    let p = discs[si].points[dof];
                    let ix = usize::from(p[0] > center[0]);
                    let iy = usize::from(p[1] > center[1]);
                    if iy * 2 + ix == ci {
                        child_sets[si].push(dof);
                    }
                }
            }
            self.split(cid, &mut child_sets, discs)?;
        }
        Ok(())
    }
}

fn build_structure(discs: &[&Discretization], n_occ: usize) -> Result<TreeStructure> {
    assert!(n_occ >= 4, "n_occ must be at least 4");
    assert!(discs.iter().all(|d| d.dof_count() > 0), "empty discretization");
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for d in discs {
        for p in &d.points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
    }
    let mut width = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if width == 0.0 {
        width = 1.0;
    }
    let root = TreeBox {
        id: 0,
        level: 0,
        coords: [0, 0],
        center: [lo[0] + width * 0.5, lo[1] + width * 0.5],
        half_width: width * 0.5,
        parent: None,
        children: None,
    };
    let mut builder = Builder {
        boxes: vec![root],
        n_occ,
        root_width: width,
    };
    let mut sets: Vec<Vec<usize>> = discs
        .iter()
        .map(|d| (0..d.dof_count()).collect())
        .collect();
    builder.split(0, &mut sets, discs)?;

    let max_level = builder.boxes.iter().map(|b| b.level).max().unwrap();
    let mut levels = vec![Vec::new(); (max_level + 1) as usize];
    for b in &builder.boxes {
        levels[b.level as usize].push(b.id);
    }
    let mut st = TreeStructure {
        boxes: builder.boxes,
        levels,
        root_lo: lo,
        root_width: width,
        n_occ,
        neighbors: Vec::new(),
    };
    st.build_neighbors();
    Ok(st)
}

/// Assign every DOF of `disc` to its leaf box on the given structure. Fails
/// when a point escapes the root or a leaf exceeds the occupancy bound.
pub fn assign(structure: &Arc<TreeStructure>, disc: &Discretization) -> Result<QuadTree> {
    let n = disc.dof_count();
    let mut leaf_dofs = vec![Vec::new(); structure.boxes.len()];
    let mut leaf_of = vec![0usize; n];
    for i in 0..n {
        let b = structure
            .locate(disc.points[i])
            .ok_or(Error::TreeInvalidated)?;
        leaf_of[i] = b;
        leaf_dofs[b].push(i);
    }
    for (b, dofs) in leaf_dofs.iter().enumerate() {
        if !dofs.is_empty() && structure.boxes[b].children.is_some() {
            unreachable!("locate always descends to a childless box");
        }
        if dofs.len() > structure.n_occ {
            return Err(Error::TreeInvalidated);
        }
    }
    Ok(QuadTree {
        structure: Arc::clone(structure),
        leaf_dofs,
        leaf_of,
        dof_count: n,
    })
}

/// Adaptive quadtree over one discretization: a box splits iff it holds more
/// than `n_occ` DOFs; all four children of a split are kept (empty ones stay
/// childless and cost nothing).
pub fn build_tree(disc: &Discretization, n_occ: usize) -> Result<QuadTree> {
    let st = Arc::new(build_structure(&[disc], n_occ)?);
    assign(&st, disc)
}

/// One structure valid for two discretizations of equal size: splits are
/// driven by the larger of the two per-box occupancies, so both assignments
/// respect `n_occ`.
pub fn matched_tree(
    old: &Discretization,
    new: &Discretization,
    n_occ: usize,
) -> Result<(QuadTree, QuadTree)> {
    if old.dof_count() != new.dof_count() {
        return Err(Error::SizeMismatch);
    }
    let st = Arc::new(build_structure(&[old, new], n_occ)?);
    Ok((assign(&st, old)?, assign(&st, new)?))
}

/// One Voronoi cell about the center of a box edge at some level; holds the
/// active DOFs nearest to this edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub level: u32,
    /// 0: vertical edge at x = z0*w, spanning cell (z0-1,z1)|(z0,z1);
    /// 1: horizontal edge at y = z1*w.
    pub axis: u8,
    pub z: [i64; 2],
}

#[derive(Debug, Clone)]
pub struct EdgeCell {
    pub id: usize,
    pub key: EdgeKey,
    pub center: [f64; 2],
    /// The <= 2 level-boxes sharing this edge (present ones only).
    pub owners: [Option<BoxId>; 2],
    pub dofs: Vec<usize>,
}

fn edge_center(st: &TreeStructure, key: &EdgeKey) -> [f64; 2] {
    let w = st.box_width(key.level);
    match key.axis {
        0 => [
            st.root_lo[0] + key.z[0] as f64 * w,
            st.root_lo[1] + (key.z[1] as f64 + 0.5) * w,
        ],
        _ => [
            st.root_lo[0] + (key.z[0] as f64 + 0.5) * w,
            st.root_lo[1] + key.z[1] as f64 * w,
        ],
    }
}

fn edge_owners(
    map: &std::collections::HashMap<[i64; 2], BoxId>,
    key: &EdgeKey,
) -> [Option<BoxId>; 2] {
    match key.axis {
        0 => [
            map.get(&[key.z[0] - 1, key.z[1]]).copied(),
            map.get(&[key.z[0], key.z[1]]).copied(),
        ],
        _ => [
            map.get(&[key.z[0], key.z[1] - 1]).copied(),
            map.get(&[key.z[0], key.z[1]]).copied(),
        ],
    }
}

/// Voronoi partition of the active DOFs near level-`level` box edges.
///
/// Each active DOF of a level box, and each active DOF of a childless coarser
/// box adjacent to one, is assigned to the nearest edge center (ties go to the
/// lexicographically smaller center), provided it lies within the half-width
/// circumradius of the tessellation.
pub fn edge_cells(
    tree: &QuadTree,
    disc: &Discretization,
    level: u32,
    active_of: &dyn Fn(BoxId) -> Vec<usize>,
) -> Vec<EdgeCell> {
    let st = &tree.structure;
    let lvl = level as usize;
    if lvl >= st.levels.len() {
        return Vec::new();
    }
    let mut map = std::collections::HashMap::new();
    for &id in &st.levels[lvl] {
        map.insert(st.boxes[id].coords, id);
    }
    // candidate DOF pool: level boxes plus adjacent childless coarse boxes
    let mut pool_boxes: Vec<BoxId> = Vec::new();
    for &id in &st.levels[lvl] {
        pool_boxes.push(id);
        for &nb in st.nbor(id) {
            if st.boxes[nb].level < level {
                pool_boxes.push(nb);
            }
        }
    }
    pool_boxes.sort_unstable();
    pool_boxes.dedup();

    let w = st.box_width(level);
    let cutoff = (0.5 * w) * (0.5 * w) * (1.0 + 1e-12);
    let mut cells: std::collections::BTreeMap<EdgeKey, Vec<usize>> =
        std::collections::BTreeMap::new();
    for &b in &pool_boxes {
        for dof in active_of(b) {
            let p = disc.points[dof];
            let fx = (p[0] - st.root_lo[0]) / w;
            let fy = (p[1] - st.root_lo[1]) / w;
            let zx = fx.floor() as i64;
            let zy = fy.floor() as i64;
            let mut best: Option<(f64, [f64; 2], EdgeKey)> = None;
            for dz0 in -1..=2i64 {
                for dz1 in -1..=1i64 {
                    for axis in 0..2u8 {
                        let key = if axis == 0 {
                            EdgeKey { level, axis, z: [zx + dz0, zy + dz1] }
                        } else {
                            EdgeKey { level, axis, z: [zx + dz1, zy + dz0] }
                        };
                        if edge_owners(&map, &key).iter().all(|o| o.is_none()) {
                            continue;
                        }
                        let c = edge_center(st, &key);
                        let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                        if d2 > cutoff {
                            continue;
                        }
                        let better = match &best {
                            None => true,
                            Some((bd, bc, _)) => {
                                d2 < *bd
                                    || (d2 == *bd
                                        && (c[0], c[1]) < (bc[0], bc[1]))
                            }
                        };
                        if better {
                            best = Some((d2, c, key));
                        }
                    }
                }
            }
            if let Some((_, _, key)) = best {
                cells.entry(key).or_default().push(dof);
            }
        }
    }
    cells
        .into_iter()
        .enumerate()
        .map(|(id, (key, mut dofs))| {
            dofs.sort_unstable();
            let center = edge_center(st, &key);
            let owners = edge_owners(&map, &key);
            EdgeCell { id, key, center, owners, dofs }
        })
        .collect()
}
