//! Dense reference computations backing the accuracy assertions: full
//! assembly with LU solve and log-determinant, and direct summation for the
//! action of G without assembly.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::linalg::{lu_factor, Lu};

/// Assemble the full matrix; only for verification at desk scale.
pub fn assemble(kernel: &dyn Kernel) -> Array2<C64> {
    let n = kernel.disc().dof_count();
    Array2::from_shape_fn((n, n), |(i, j)| kernel.entry(i, j))
}

/// O(N^2)/O(N^3) dense reference factorization.
pub struct DenseOracle {
    pub a: Array2<C64>,
    lu: Lu,
}

impl DenseOracle {
    pub fn new(kernel: &dyn Kernel, cap: usize) -> Result<Self> {
        let n = kernel.disc().dof_count();
        if n > cap {
            return Err(Error::InvalidConfig(format!(
                "dense oracle cap exceeded: {n} > {cap}"
            )));
        }
        let a = assemble(kernel);
        let lu = lu_factor(a.clone()).map_err(|_| Error::SingularRoot)?;
        Ok(DenseOracle { a, lu })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.lu.solve_in_place(&mut x);
        x
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.a.nrows();
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += self.a[[i, j]] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn logdet(&self) -> C64 {
        self.lu.logdet()
    }
}

/// y = G x by direct summation of kernel entries, never assembling G.
pub fn direct_matvec(kernel: &dyn Kernel, x: &[C64]) -> Vec<C64> {
    let n = kernel.disc().dof_count();
    assert_eq!(x.len(), n);
    let mut y = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            acc += kernel.entry(i, j) * x[j];
        }
        y[i] = acc;
    }
    y
}

/// Relative l2 deviation between two vectors.
pub fn rel_err(got: &[C64], want: &[C64]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (g, w) in got.iter().zip(want.iter()) {
        num += (g - w).norm_sqr();
        den += w.norm_sqr();
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}
