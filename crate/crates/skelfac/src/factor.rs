//! Factorization drivers: recursive skeletonization over box levels, and the
//! hierarchical interpolative variant that interleaves edge levels, plus the
//! resulting operator (apply, solve, log-determinant, diagnostics).
//!
//! The matrix state between stages is an index-mapped overlay over the raw
//! kernel: entries replaced by Schur data live in a sparse map keyed by DOF
//! pair, everything else is evaluated on demand. One driver serves both a
//! fresh build and an update replay; an update passes a reuse plan naming
//! the owners whose stored elimination data is still valid.
//!
//! Builds run sequentially so that identical inputs always reproduce
//! identical bits; a finished factorization is immutable and its apply,
//! solve and logdet are safe to call concurrently.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::compress::{proxy_rows, proxy_surface};
use crate::error::{Error, Result};
use crate::geometry::{edge_cells, BoxId, QuadTree};
use crate::kernel::Kernel;
use crate::linalg::{lu_factor, Lu};
use crate::skel::{
    apply_elim, apply_elim_inv, skeletonize, ElimSide, MatView, Owner, SkelData,
};
use crate::update::MarkedSets;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Rskelf,
    Hif,
}

/// Stage label: box skeletonization at an integer level, or the edge
/// (half-integer) stage directly below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageTag {
    Box(u32),
    Edge(u32),
}

impl std::fmt::Display for StageTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageTag::Box(l) => write!(f, "{l}"),
            StageTag::Edge(l) => write!(f, "{l}-1/2"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorOpts {
    pub eps: f64,
    pub n_proxy: usize,
}

impl Default for FactorOpts {
    fn default() -> Self {
        FactorOpts { eps: 1e-6, n_proxy: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub tag: StageTag,
    pub skels: Vec<Arc<SkelData>>,
}

#[derive(Debug)]
pub struct RootBlock {
    pub idx: Vec<usize>,
    pub dense: Array2<C64>,
    pub lu: Lu,
}

/// Ordered elimination stages plus the dense root factor; the compressed
/// operator F with apply/solve/logdet support.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub kind: FactorKind,
    pub tree: QuadTree,
    pub opts: FactorOpts,
    pub stages: Vec<Stage>,
    pub root: Arc<RootBlock>,
    pub n: usize,
}

/// Multiplicative hasher for the dense u64 pair keys of the overlay; the
/// overlay is only ever point-queried, so hash order never reaches outputs.
#[derive(Debug, Default, Clone)]
pub struct PairHasher(u64);

impl std::hash::Hasher for PairHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0 ^ v).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        self.0 ^= self.0 >> 29;
    }
}

#[derive(Debug, Default, Clone)]
pub struct PairHasherBuilder;

impl std::hash::BuildHasher for PairHasherBuilder {
    type Hasher = PairHasher;
    fn build_hasher(&self) -> PairHasher {
        PairHasher(0)
    }
}

/// Sparse replacement of kernel entries by Schur-complement data.
#[derive(Debug, Default)]
pub struct Overlay {
    map: HashMap<u64, C64, PairHasherBuilder>,
}

fn pair_key(i: usize, j: usize) -> u64 {
    ((i as u64) << 32) | j as u64
}

impl Overlay {
    pub fn get(&self, i: usize, j: usize) -> Option<C64> {
        self.map.get(&pair_key(i, j)).copied()
    }

    pub fn is_modified(&self, i: usize, j: usize) -> bool {
        self.map.contains_key(&pair_key(i, j))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn write_dss(&mut self, sk: &SkelData) {
        for (a, &i) in sk.skel.iter().enumerate() {
            for (b, &j) in sk.skel.iter().enumerate() {
                self.map.insert(pair_key(i, j), sk.d_ss[[a, b]]);
            }
        }
    }

    /// Entries touching eliminated DOFs are never read again; dropping them
    /// bounds memory. The scan only runs once the map is large enough for
    /// that to matter.
    fn purge_dead(&mut self, alive: &[bool]) {
        if self.map.len() < (1 << 20) {
            return;
        }
        self.map.retain(|&k, _| {
            let i = (k >> 32) as usize;
            let j = (k & 0xffff_ffff) as usize;
            alive[i] && alive[j]
        });
    }
}

/// Matrix state at one stage: raw kernel entries behind a Schur overlay.
pub struct LevelView<'a> {
    pub kernel: &'a dyn Kernel,
    pub overlay: &'a Overlay,
}

impl MatView for LevelView<'_> {
    fn block(&self, rows: &[usize], cols: &[usize]) -> Array2<C64> {
        Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| {
            let (i, j) = (rows[a], cols[b]);
            self.overlay
                .get(i, j)
                .unwrap_or_else(|| self.kernel.entry(i, j))
        })
    }
}

/// Reuse plan for an update replay.
pub(crate) struct ReusePlan<'a> {
    pub old: HashMap<StageTag, HashMap<Owner, Arc<SkelData>>>,
    pub marked: &'a MarkedSets,
}

impl ReusePlan<'_> {
    pub fn for_factorization<'a>(f: &Factorization, marked: &'a MarkedSets) -> ReusePlan<'a> {
        let mut old = HashMap::new();
        for stage in &f.stages {
            let mut m = HashMap::new();
            for sk in &stage.skels {
                m.insert(sk.owner.clone(), Arc::clone(sk));
            }
            old.insert(stage.tag, m);
        }
        ReusePlan { old, marked }
    }

    /// Stored data for an owner that is not marked at this stage.
    fn lookup(&self, tag: StageTag, owner: &Owner) -> Option<Arc<SkelData>> {
        if self.marked.is_marked(tag, owner) {
            return None;
        }
        self.old.get(&tag).and_then(|m| m.get(owner)).map(Arc::clone)
    }
}

struct DriverState<'a> {
    tree: &'a QuadTree,
    mask: Vec<bool>,
    /// Final skeleton set per box (sorted), filled at the box's own stage.
    box_skel: Vec<Option<Vec<usize>>>,
}

impl DriverState<'_> {
    /// Active DOFs a box contributes at the current stage: its leaf DOFs if
    /// childless, the union of its children's skeletons otherwise, filtered
    /// by the still-active mask.
    fn active(&self, b: BoxId) -> Vec<usize> {
        let st = &self.tree.structure;
        let base: Vec<usize> = if let Some(children) = st.boxes[b].children {
            let mut v: Vec<usize> = children
                .iter()
                .filter_map(|&c| self.box_skel[c].as_deref())
                .flatten()
                .copied()
                .collect();
            v.sort_unstable();
            v
        } else {
            self.tree.leaf_dofs[b].clone()
        };
        base.into_iter().filter(|&i| self.mask[i]).collect()
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

enum StageItem {
    Reuse(Arc<SkelData>),
    Compute {
        owner: Owner,
        i_set: Vec<usize>,
        near: Vec<usize>,
        center: [f64; 2],
    },
}

pub(crate) fn drive(
    kernel: &dyn Kernel,
    tree: &QuadTree,
    kind: FactorKind,
    opts: &FactorOpts,
    reuse: Option<&ReusePlan>,
) -> Result<Factorization> {
    let st = Arc::clone(&tree.structure);
    let n = tree.dof_count;
    assert_eq!(n, kernel.disc().dof_count(), "tree/kernel size mismatch");
    let depth = st.depth();
    let mut state = DriverState {
        tree,
        mask: vec![true; n],
        box_skel: vec![None; st.boxes.len()],
    };
    let mut overlay = Overlay::default();
    let mut stages: Vec<Stage> = Vec::new();

    for lvl in (1..=depth).rev() {
        let tag = StageTag::Box(lvl);
        let width = st.box_width(lvl);
        let radius2 = (1.5 * width) * (1.5 * width);
        let mut items: Vec<StageItem> = Vec::new();
        for &b in &st.levels[lvl as usize] {
            let owner = Owner::Box(b);
            if let Some(sk) = reuse.and_then(|plan| plan.lookup(tag, &owner)) {
                items.push(StageItem::Reuse(sk));
                continue;
            }
            let i_set = state.active(b);
            if i_set.is_empty() {
                continue;
            }
            let center = st.boxes[b].center;
            let mut near: Vec<usize> = Vec::new();
            for &nb in st.nbor(b) {
                for dof in state.active(nb) {
                    if dist2(kernel.disc().points[dof], center) < radius2 {
                        near.push(dof);
                    }
                }
            }
            near.sort_unstable();
            items.push(StageItem::Compute { owner, i_set, near, center });
        }
        run_stage(kernel, &mut state, &mut overlay, &mut stages, tag, items, width, opts, reuse)?;

        if kind == FactorKind::Hif {
            let tag = StageTag::Edge(lvl);
            let cells = {
                let active_fn = |b: BoxId| state.active(b);
                edge_cells(tree, kernel.disc(), lvl, &active_fn)
            };
            let mut items: Vec<StageItem> = Vec::new();
            for cell in cells {
                if cell.dofs.is_empty() {
                    continue;
                }
                let owner = Owner::Edge(cell.key);
                if let Some(sk) = reuse.and_then(|plan| plan.lookup(tag, &owner)) {
                    items.push(StageItem::Reuse(sk));
                    continue;
                }
                let mut cand: Vec<BoxId> = Vec::new();
                for ob in cell.owners.iter().flatten() {
                    cand.push(*ob);
                    cand.extend_from_slice(st.nbor(*ob));
                }
                cand.sort_unstable();
                cand.dedup();
                let mut near: Vec<usize> = Vec::new();
                for &cb in &cand {
                    for dof in state.active(cb) {
                        if cell.dofs.binary_search(&dof).is_err()
                            && dist2(kernel.disc().points[dof], cell.center) < radius2
                        {
                            near.push(dof);
                        }
                    }
                }
                near.sort_unstable();
                items.push(StageItem::Compute { owner, i_set: cell.dofs, near, center: cell.center });
            }
            run_stage(kernel, &mut state, &mut overlay, &mut stages, tag, items, width, opts, reuse)?;
        }
    }

    let survivors: Vec<usize> = (0..n).filter(|&i| state.mask[i]).collect();
    let cap = ((4.0 * (n as f64).sqrt() * (n as f64).log2().max(1.0)).ceil() as usize)
        .max(4 * st.n_occ);
    if survivors.len() > cap {
        return Err(Error::RootTooLarge { size: survivors.len(), cap });
    }
    // any recomputation may change couplings among survivors, and an update
    // with nothing to recompute never reaches this driver, so the root is
    // always refactored here
    let root = {
        let view = LevelView { kernel, overlay: &overlay };
        let dense = view.block(&survivors, &survivors);
        let lu = lu_factor(dense.clone()).map_err(|_| Error::SingularRoot)?;
        Arc::new(RootBlock { idx: survivors, dense, lu })
    };

    Ok(Factorization {
        kind,
        tree: tree.clone(),
        opts: opts.clone(),
        stages,
        root,
        n,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    kernel: &dyn Kernel,
    state: &mut DriverState,
    overlay: &mut Overlay,
    stages: &mut Vec<Stage>,
    tag: StageTag,
    items: Vec<StageItem>,
    box_width: f64,
    opts: &FactorOpts,
    reuse: Option<&ReusePlan>,
) -> Result<()> {
    // every computation reads the pre-stage state; writes land after the
    // whole group
    let mut skels: Vec<Arc<SkelData>> = Vec::with_capacity(items.len());
    {
        let view = LevelView { kernel, overlay };
        for item in items {
            let sk = match item {
                StageItem::Reuse(sk) => sk,
                StageItem::Compute { owner, i_set, near, center } => {
                    let proxy =
                        proxy_surface(center, box_width, opts.n_proxy, kernel.wavenumber());
                    let stack = proxy_rows(&view, kernel, &proxy, &i_set, &near);
                    Arc::new(skeletonize(&view, owner, &i_set, stack.view(), opts.eps)?)
                }
            };
            skels.push(sk);
        }
    }
    for sk in &skels {
        for &r in &sk.red {
            state.mask[r] = false;
        }
        if schur_write_needed(tag, &sk.owner, state, reuse) {
            overlay.write_dss(sk);
        }
        if let Owner::Box(b) = sk.owner {
            let mut s = sk.skel.clone();
            s.sort_unstable();
            state.box_skel[b] = Some(s);
        }
    }
    overlay.purge_dead(&state.mask);
    stages.push(Stage { tag, skels });
    Ok(())
}

/// During a box-stage-only replay most Schur writes are dead: a box's data is
/// read again only by its parent's recomputation or by the root assembly.
/// Edge stages mix blocks across owners, so any replay containing them keeps
/// every write.
fn schur_write_needed(
    tag: StageTag,
    owner: &Owner,
    state: &DriverState,
    reuse: Option<&ReusePlan>,
) -> bool {
    let Some(plan) = reuse else { return true };
    if plan.marked.has_edge_stages() {
        return true;
    }
    match (tag, owner) {
        (StageTag::Box(lvl), Owner::Box(b)) => {
            if lvl <= 1 {
                return true; // root assembly reads these pairs
            }
            match state.tree.structure.boxes[*b].parent {
                Some(p) => plan.marked.is_marked(StageTag::Box(lvl - 1), &Owner::Box(p)),
                None => true,
            }
        }
        _ => true,
    }
}

/// Fresh build of either factorization kind.
pub fn build(
    kernel: &dyn Kernel,
    tree: &QuadTree,
    kind: FactorKind,
    opts: &FactorOpts,
) -> Result<Factorization> {
    drive(kernel, tree, kind, opts, None)
}

/// Recursive skeletonization factorization: box stages only.
pub fn rskelf_build(kernel: &dyn Kernel, tree: &QuadTree, opts: &FactorOpts) -> Result<Factorization> {
    drive(kernel, tree, FactorKind::Rskelf, opts, None)
}

/// Hierarchical interpolative factorization: box stages interleaved with
/// edge stages at half-integer levels.
pub fn hif_build(kernel: &dyn Kernel, tree: &QuadTree, opts: &FactorOpts) -> Result<Factorization> {
    drive(kernel, tree, FactorKind::Hif, opts, None)
}

impl Factorization {
    /// y = F x, the compressed forward operator.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        let mut y = x.to_vec();
        for stage in &self.stages {
            for sk in &stage.skels {
                apply_elim_inv(sk, ElimSide::Right, &mut y);
            }
        }
        self.block_diag_apply(&mut y);
        for stage in self.stages.iter().rev() {
            for sk in stage.skels.iter().rev() {
                apply_elim_inv(sk, ElimSide::LeftAdjoint, &mut y);
            }
        }
        y
    }

    /// x = F^{-1} b.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        assert_eq!(b.len(), self.n);
        let mut y = b.to_vec();
        for stage in &self.stages {
            for sk in &stage.skels {
                apply_elim(sk, ElimSide::LeftAdjoint, &mut y);
            }
        }
        self.block_diag_solve(&mut y);
        for stage in self.stages.iter().rev() {
            for sk in stage.skels.iter().rev() {
                apply_elim(sk, ElimSide::Right, &mut y);
            }
        }
        y
    }

    fn block_diag_apply(&self, y: &mut [C64]) {
        for stage in &self.stages {
            for sk in &stage.skels {
                if sk.red.is_empty() {
                    continue;
                }
                let xr: Vec<C64> = sk.red.iter().map(|&i| y[i]).collect();
                let out = sk.d_rr.matvec(&xr);
                for (&i, v) in sk.red.iter().zip(out) {
                    y[i] = v;
                }
            }
        }
        if !self.root.idx.is_empty() {
            let xr: Vec<C64> = self.root.idx.iter().map(|&i| y[i]).collect();
            for (r, &i) in self.root.idx.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..xr.len() {
                    acc += self.root.dense[[r, c]] * xr[c];
                }
                y[i] = acc;
            }
        }
    }

    fn block_diag_solve(&self, y: &mut [C64]) {
        for stage in &self.stages {
            for sk in &stage.skels {
                if sk.red.is_empty() {
                    continue;
                }
                let mut xr: Vec<C64> = sk.red.iter().map(|&i| y[i]).collect();
                sk.d_rr.solve_in_place(&mut xr);
                for (&i, v) in sk.red.iter().zip(xr) {
                    y[i] = v;
                }
            }
        }
        if !self.root.idx.is_empty() {
            let mut xr: Vec<C64> = self.root.idx.iter().map(|&i| y[i]).collect();
            self.root.lu.solve_in_place(&mut xr);
            for (&i, v) in self.root.idx.iter().zip(xr) {
                y[i] = v;
            }
        }
    }

    /// log det G accumulated over every factored redundant block and the root.
    pub fn logdet(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for stage in &self.stages {
            for sk in &stage.skels {
                acc += sk.d_rr.logdet();
            }
        }
        acc + self.root.lu.logdet()
    }

    /// Sum of eliminated DOFs over all stages plus the root size; always N.
    pub fn eliminated_plus_root(&self) -> usize {
        let stage_sum: usize = self
            .stages
            .iter()
            .map(|s| s.skels.iter().map(|sk| sk.red.len()).sum::<usize>())
            .sum();
        stage_sum + self.root.idx.len()
    }

    pub fn skeleton_stats(&self) -> Vec<StageStats> {
        self.stages
            .iter()
            .map(|s| {
                let owners = s.skels.len();
                let total: usize = s.skels.iter().map(|sk| sk.skel.len()).sum();
                let max = s.skels.iter().map(|sk| sk.skel.len()).max().unwrap_or(0);
                let eliminated: usize = s.skels.iter().map(|sk| sk.red.len()).sum();
                StageStats {
                    tag: s.tag,
                    owners,
                    mean_skel: if owners > 0 { total as f64 / owners as f64 } else { 0.0 },
                    max_skel: max,
                    eliminated,
                }
            })
            .collect()
    }

    /// Replay the Schur writes of every stage; for bookkeeping checks.
    pub fn rebuild_overlay(&self) -> Overlay {
        let mut overlay = Overlay::default();
        for stage in &self.stages {
            for sk in &stage.skels {
                overlay.write_dss(sk);
            }
        }
        overlay
    }

    /// Bit-for-bit equality of all stored elimination data and the root.
    pub fn bitwise_eq(&self, other: &Factorization) -> bool {
        if self.kind != other.kind || self.n != other.n || self.stages.len() != other.stages.len() {
            return false;
        }
        for (a, b) in self.stages.iter().zip(other.stages.iter()) {
            if a.tag != b.tag || a.skels.len() != b.skels.len() {
                return false;
            }
            for (x, y) in a.skels.iter().zip(b.skels.iter()) {
                if !x.bitwise_eq(y) {
                    return false;
                }
            }
        }
        self.root.idx == other.root.idx
            && crate::linalg::bits_eq(&self.root.dense, &other.root.dense)
            && self.root.lu.bitwise_eq(&other.root.lu)
    }
}

#[derive(Debug, Clone)]
pub struct StageStats {
    pub tag: StageTag,
    pub owners: usize,
    pub mean_skel: f64,
    pub max_skel: usize,
    pub eliminated: usize,
}
