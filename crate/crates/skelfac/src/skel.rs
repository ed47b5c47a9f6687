//! Skeletonization: the block elimination that decouples redundant DOFs after
//! an interpolative decomposition of their off-diagonal couplings.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64 as C64;

use crate::compress::{id, IdResult};
use crate::error::Result;
use crate::geometry::{BoxId, EdgeKey};
use crate::linalg::{
    adjoint_matmul, bits_eq, gemv_add, gemv_adjoint, gemv_sub, lu_factor, matmul, Lu,
};

/// Read access to the current matrix state; entries may come from the raw
/// kernel or from Schur-complement overlays written by earlier stages.
pub trait MatView {
    fn block(&self, rows: &[usize], cols: &[usize]) -> Array2<C64>;
}

/// A dense matrix as a view, for oracle tests and desk-scale verification.
pub struct DenseView<'a>(pub &'a Array2<C64>);

impl MatView for DenseView<'_> {
    fn block(&self, rows: &[usize], cols: &[usize]) -> Array2<C64> {
        Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
            self.0[[rows[i], cols[j]]]
        })
    }
}

/// Owner of one skeletonization: a quadtree box or an edge cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Owner {
    Box(BoxId),
    Edge(EdgeKey),
}

/// Stored elimination data for one index set: the partition, interpolation
/// matrix, Schur complement block, factored redundant block, and the two
/// coupling products that realize the unit-triangular elimination operators.
#[derive(Debug, Clone)]
pub struct SkelData {
    pub owner: Owner,
    /// Skeleton DOFs (global indices, pivot order).
    pub skel: Vec<usize>,
    /// Redundant DOFs (global indices, pivot order).
    pub red: Vec<usize>,
    /// |S| x |R| interpolation matrix.
    pub interp: Array2<C64>,
    /// Updated self-interaction of the skeletons.
    pub d_ss: Array2<C64>,
    /// Factored redundant diagonal block.
    pub d_rr: Lu,
    /// D_SR * D_RR^{-1}.
    pub x_sr: Array2<C64>,
    /// D_RR^{-1} * D_RS.
    pub x_rs: Array2<C64>,
}

impl SkelData {
    pub fn index_count(&self) -> usize {
        self.skel.len() + self.red.len()
    }

    /// Bit-for-bit equality of every stored block and index set.
    pub fn bitwise_eq(&self, other: &SkelData) -> bool {
        self.owner == other.owner
            && self.skel == other.skel
            && self.red == other.red
            && bits_eq(&self.interp, &other.interp)
            && bits_eq(&self.d_ss, &other.d_ss)
            && self.d_rr.bitwise_eq(&other.d_rr)
            && bits_eq(&self.x_sr, &other.x_sr)
            && bits_eq(&self.x_rs, &other.x_rs)
    }
}

/// Eliminate the redundant part of `i_set` given the compression stack for
/// its off-diagonal couplings. The self-interaction block is read from
/// `view`; all derived blocks follow the standard Schur algebra.
pub fn skeletonize(
    view: &dyn MatView,
    owner: Owner,
    i_set: &[usize],
    stack: ArrayView2<C64>,
    eps: f64,
) -> Result<SkelData> {
    let id_res: IdResult = id(stack, eps);
    skeletonize_with_id(view, owner, i_set, &id_res)
}

/// The elimination step alone, reusing an already computed partition.
pub fn skeletonize_with_id(
    view: &dyn MatView,
    owner: Owner,
    i_set: &[usize],
    id_res: &IdResult,
) -> Result<SkelData> {
    let skel: Vec<usize> = id_res.skel.iter().map(|&p| i_set[p]).collect();
    let red: Vec<usize> = id_res.red.iter().map(|&p| i_set[p]).collect();
    let t = &id_res.interp;

    let a_ii = view.block(i_set, i_set);
    let pick = |rows: &[usize], cols: &[usize]| -> Array2<C64> {
        Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| {
            a_ii[[rows[r], cols[c]]]
        })
    };
    let a_ss = pick(&id_res.skel, &id_res.skel);
    let a_sr = pick(&id_res.skel, &id_res.red);
    let a_rs = pick(&id_res.red, &id_res.skel);
    let a_rr = pick(&id_res.red, &id_res.red);

    // D_SR = A_SR - A_SS T ; D_RS = A_RS - T* A_SS
    // D_RR = A_RR - A_RS T - T* D_SR
    let d_sr = &a_sr - &matmul(a_ss.view(), t.view());
    let d_rs = &a_rs - &adjoint_matmul(t.view(), a_ss.view());
    let d_rr = &(&a_rr - &matmul(a_rs.view(), t.view())) - &adjoint_matmul(t.view(), d_sr.view());

    let lu = lu_factor(d_rr)?;
    let x_sr = lu.right_solve(&d_sr);
    let mut x_rs = d_rs.clone();
    lu.solve_mat(&mut x_rs);
    // D_SS = A_SS - D_SR D_RR^{-1} D_RS
    let d_ss = &a_ss - &matmul(x_sr.view(), d_rs.view());

    Ok(SkelData {
        owner,
        skel,
        red,
        interp: t.clone(),
        d_ss,
        d_rr: lu,
        x_sr,
        x_rs,
    })
}

/// One skeletonization job: the owner, its index set, and the compression
/// stack assembled by the caller.
pub struct SkelJob {
    pub owner: Owner,
    pub i_set: Vec<usize>,
    pub stack: Array2<C64>,
}

/// Independent skeletonizations over pairwise disjoint index sets. All jobs
/// read the same pre-stage matrix state, so the output does not depend on the
/// processing order.
pub fn group_skeletonize(view: &dyn MatView, jobs: &[SkelJob], eps: f64) -> Result<Vec<SkelData>> {
    let mut out = Vec::with_capacity(jobs.len());
    for job in jobs {
        out.push(skeletonize(
            view,
            job.owner.clone(),
            &job.i_set,
            job.stack.view(),
            eps,
        )?);
    }
    Ok(out)
}

/// Which elimination operator to apply to a global vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElimSide {
    /// U^* (adjoint of the left factor).
    LeftAdjoint,
    /// V (right factor).
    Right,
}

fn gather(x: &[C64], idx: &[usize]) -> Vec<C64> {
    idx.iter().map(|&i| x[i]).collect()
}

fn scatter(x: &mut [C64], idx: &[usize], vals: &[C64]) {
    for (&i, &v) in idx.iter().zip(vals.iter()) {
        x[i] = v;
    }
}

/// Apply an elimination factor in place on a globally indexed vector.
pub fn apply_elim(sk: &SkelData, side: ElimSide, x: &mut [C64]) {
    let mut xs = gather(x, &sk.skel);
    let mut xr = gather(x, &sk.red);
    match side {
        ElimSide::LeftAdjoint => {
            // U^* = M^* Q^*: x_R -= T^H x_S, then x_S -= X_sr x_R
            gemv_adjoint(sk.interp.view(), &xs, &mut xr, false);
            gemv_sub(sk.x_sr.view(), &xr, &mut xs);
        }
        ElimSide::Right => {
            // V = Q H: x_R -= X_rs x_S, then x_S -= T x_R
            gemv_sub(sk.x_rs.view(), &xs, &mut xr);
            gemv_sub(sk.interp.view(), &xr, &mut xs);
        }
    }
    scatter(x, &sk.skel, &xs);
    scatter(x, &sk.red, &xr);
}

/// Apply the inverse of an elimination factor in place.
pub fn apply_elim_inv(sk: &SkelData, side: ElimSide, x: &mut [C64]) {
    let mut xs = gather(x, &sk.skel);
    let mut xr = gather(x, &sk.red);
    match side {
        ElimSide::LeftAdjoint => {
            // U^{-*} = Q^{-*} M^{-*}: x_S += X_sr x_R, then x_R += T^H x_S
            gemv_add(sk.x_sr.view(), &xr, &mut xs);
            gemv_adjoint(sk.interp.view(), &xs, &mut xr, true);
        }
        ElimSide::Right => {
            // V^{-1} = H^{-1} Q^{-1}: x_S += T x_R, then x_R += X_rs x_S
            gemv_add(sk.interp.view(), &xr, &mut xs);
            gemv_add(sk.x_rs.view(), &xs, &mut xr);
        }
    }
    scatter(x, &sk.skel, &xs);
    scatter(x, &sk.red, &xr);
}

/// Stack [A(I^c, I); A(I, I^c)^*] for dense oracle use.
pub fn dense_stack(a: &Array2<C64>, i_set: &[usize]) -> Array2<C64> {
    let n = a.nrows();
    let in_set: std::collections::HashSet<usize> = i_set.iter().copied().collect();
    let comp: Vec<usize> = (0..n).filter(|i| !in_set.contains(i)).collect();
    let mut stack = Array2::from_elem((2 * comp.len(), i_set.len()), C64::new(0.0, 0.0));
    for (r, &i) in comp.iter().enumerate() {
        for (c, &j) in i_set.iter().enumerate() {
            stack[[r, c]] = a[[i, j]];
            stack[[comp.len() + r, c]] = a[[j, i]].conj();
        }
    }
    stack
}
