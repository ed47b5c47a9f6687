//! Binary container for factorizations.
//!
//! Layout (all integers and floats little-endian):
//!   magic "SKF1", kind u8, n u64, eps f64, n_proxy u64,
//!   meta: u64 length + UTF-8 bytes (opaque caller text, e.g. a config),
//!   stage count u64, then per stage:
//!     tag u8 (0 box / 1 edge) + level u32 + owner count u64, per owner:
//!       owner (0 box: u64 id | 1 edge: u32 level, u8 axis, i64 z0, i64 z1),
//!       index vectors S and R, matrices T, D_SS, X_sr, X_rs,
//!       LU of D_RR (dimension, packed matrix, pivot vector),
//!   root: index vector, dense matrix, LU.
//! Matrices are row-major complex pairs (re, im) prefixed by their shape.
//! The tree is not stored; the reader attaches one rebuilt by the caller.

use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::factor::{FactorKind, FactorOpts, Factorization, RootBlock, Stage, StageTag};
use crate::geometry::{EdgeKey, QuadTree};
use crate::linalg::Lu;
use crate::skel::{Owner, SkelData};

const MAGIC: &[u8; 4] = b"SKF1";

fn w_u8(w: &mut dyn Write, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

fn w_u32(w: &mut dyn Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_u64(w: &mut dyn Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_i64(w: &mut dyn Write, v: i64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f64(w: &mut dyn Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn r_u8(r: &mut dyn Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn r_u32(r: &mut dyn Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_u64(r: &mut dyn Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn r_i64(r: &mut dyn Read) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn r_f64(r: &mut dyn Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn w_idx(w: &mut dyn Write, v: &[usize]) -> Result<()> {
    w_u64(w, v.len() as u64)?;
    for &i in v {
        w_u64(w, i as u64)?;
    }
    Ok(())
}

fn r_idx(r: &mut dyn Read) -> Result<Vec<usize>> {
    let len = r_u64(r)? as usize;
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        v.push(r_u64(r)? as usize);
    }
    Ok(v)
}

fn w_mat(w: &mut dyn Write, m: &Array2<C64>) -> Result<()> {
    w_u64(w, m.nrows() as u64)?;
    w_u64(w, m.ncols() as u64)?;
    for v in m.iter() {
        w_f64(w, v.re)?;
        w_f64(w, v.im)?;
    }
    Ok(())
}

fn r_mat(r: &mut dyn Read) -> Result<Array2<C64>> {
    let rows = r_u64(r)? as usize;
    let cols = r_u64(r)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re = r_f64(r)?;
        let im = r_f64(r)?;
        data.push(C64::new(re, im));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Serial(e.to_string()))
}

fn w_lu(w: &mut dyn Write, lu: &Lu) -> Result<()> {
    w_u64(w, lu.n as u64)?;
    w_mat(w, &lu.lu)?;
    w_idx(w, &lu.pivots)
}

fn r_lu(r: &mut dyn Read) -> Result<Lu> {
    let n = r_u64(r)? as usize;
    let m = r_mat(r)?;
    let pivots = r_idx(r)?;
    if m.nrows() != n || pivots.len() != n {
        return Err(Error::Serial("inconsistent LU record".into()));
    }
    Ok(Lu { n, lu: m, pivots })
}

fn w_owner(w: &mut dyn Write, o: &Owner) -> Result<()> {
    match o {
        Owner::Box(b) => {
            w_u8(w, 0)?;
            w_u64(w, *b as u64)
        }
        Owner::Edge(k) => {
            w_u8(w, 1)?;
            w_u32(w, k.level)?;
            w_u8(w, k.axis)?;
            w_i64(w, k.z[0])?;
            w_i64(w, k.z[1])
        }
    }
}

fn r_owner(r: &mut dyn Read) -> Result<Owner> {
    match r_u8(r)? {
        0 => Ok(Owner::Box(r_u64(r)? as usize)),
        1 => {
            let level = r_u32(r)?;
            let axis = r_u8(r)?;
            let z0 = r_i64(r)?;
            let z1 = r_i64(r)?;
            Ok(Owner::Edge(EdgeKey { level, axis, z: [z0, z1] }))
        }
        t => Err(Error::Serial(format!("bad owner tag {t}"))),
    }
}

pub fn write_factorization(w: &mut dyn Write, f: &Factorization, meta: &str) -> Result<()> {
    w.write_all(MAGIC)?;
    w_u8(w, match f.kind {
        FactorKind::Rskelf => 0,
        FactorKind::Hif => 1,
    })?;
    w_u64(w, f.n as u64)?;
    w_f64(w, f.opts.eps)?;
    w_u64(w, f.opts.n_proxy as u64)?;
    let meta_bytes = meta.as_bytes();
    w_u64(w, meta_bytes.len() as u64)?;
    w.write_all(meta_bytes)?;
    w_u64(w, f.stages.len() as u64)?;
    for stage in &f.stages {
        match stage.tag {
            StageTag::Box(l) => {
                w_u8(w, 0)?;
                w_u32(w, l)?;
            }
            StageTag::Edge(l) => {
                w_u8(w, 1)?;
                w_u32(w, l)?;
            }
        }
        w_u64(w, stage.skels.len() as u64)?;
        for sk in &stage.skels {
            w_owner(w, &sk.owner)?;
            w_idx(w, &sk.skel)?;
            w_idx(w, &sk.red)?;
            w_mat(w, &sk.interp)?;
            w_mat(w, &sk.d_ss)?;
            w_lu(w, &sk.d_rr)?;
            w_mat(w, &sk.x_sr)?;
            w_mat(w, &sk.x_rs)?;
        }
    }
    w_idx(w, &f.root.idx)?;
    w_mat(w, &f.root.dense)?;
    w_lu(w, &f.root.lu)
}

/// Read just the stored meta text (header fields are skipped); callers use it
/// to reconstruct the problem and tree before reading the full container.
pub fn peek_meta(r: &mut dyn Read) -> Result<String> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serial("bad magic".into()));
    }
    let _kind = r_u8(r)?;
    let _n = r_u64(r)?;
    let _eps = r_f64(r)?;
    let _n_proxy = r_u64(r)?;
    let meta_len = r_u64(r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    String::from_utf8(meta_bytes).map_err(|e| Error::Serial(e.to_string()))
}

/// Read a factorization back, attaching the tree the caller rebuilt (from the
/// stored meta text or otherwise). Returns the factorization and the meta.
pub fn read_factorization(r: &mut dyn Read, tree: &QuadTree) -> Result<(Factorization, String)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serial("bad magic".into()));
    }
    let kind = match r_u8(r)? {
        0 => FactorKind::Rskelf,
        1 => FactorKind::Hif,
        t => return Err(Error::Serial(format!("bad kind {t}"))),
    };
    let n = r_u64(r)? as usize;
    let eps = r_f64(r)?;
    let n_proxy = r_u64(r)? as usize;
    let meta_len = r_u64(r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta = String::from_utf8(meta_bytes).map_err(|e| Error::Serial(e.to_string()))?;
    if tree.dof_count != n {
        return Err(Error::Serial(format!(
            "tree has {} DOFs, container has {n}",
            tree.dof_count
        )));
    }
    let stage_count = r_u64(r)? as usize;
    let mut stages = Vec::with_capacity(stage_count);
    for _ in 0..stage_count {
        let tag = match r_u8(r)? {
            0 => StageTag::Box(r_u32(r)?),
            1 => StageTag::Edge(r_u32(r)?),
            t => return Err(Error::Serial(format!("bad stage tag {t}"))),
        };
        let count = r_u64(r)? as usize;
        let mut skels = Vec::with_capacity(count);
        for _ in 0..count {
            let owner = r_owner(r)?;
            let skel = r_idx(r)?;
            let red = r_idx(r)?;
            let interp = r_mat(r)?;
            let d_ss = r_mat(r)?;
            let d_rr = r_lu(r)?;
            let x_sr = r_mat(r)?;
            let x_rs = r_mat(r)?;
            skels.push(Arc::new(SkelData {
                owner,
                skel,
                red,
                interp,
                d_ss,
                d_rr,
                x_sr,
                x_rs,
            }));
        }
        stages.push(Stage { tag, skels });
    }
    let root_idx = r_idx(r)?;
    let root_dense = r_mat(r)?;
    let root_lu = r_lu(r)?;
    Ok((
        Factorization {
            kind,
            tree: tree.clone(),
            opts: FactorOpts { eps, n_proxy },
            stages,
            root: Arc::new(RootBlock { idx: root_idx, dense: root_dense, lu: root_lu }),
            n,
        },
        meta,
    ))
}
