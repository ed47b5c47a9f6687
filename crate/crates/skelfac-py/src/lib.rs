//! Python bindings: the two example problems, both factorizations, and the
//! local-update path.

use num_complex::Complex64 as C64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use skelfac::factor::{build, FactorKind, FactorOpts};
use skelfac::geometry::{matched_tree, QuadTree};
use skelfac::kernel::{
    bump_circle, diff, helmholtz_ls, laplace_dlp, ls_grid, plain_circle, scatterer_bump,
    scatterer_w0, window_fixed_count, window_fixed_proportion, Kernel,
};
use skelfac::update::update;

fn to_py_err(e: skelfac::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_kind(kind: &str) -> PyResult<FactorKind> {
    match kind {
        "rskelf" => Ok(FactorKind::Rskelf),
        "hif" => Ok(FactorKind::Hif),
        other => Err(PyValueError::new_err(format!("unknown kind {other}"))),
    }
}

/// A pair of problem instances related by a localized perturbation, on one
/// shared quadtree structure.
#[pyclass]
struct Problem {
    kern_old: Box<dyn Kernel>,
    kern_new: Box<dyn Kernel>,
    tree_old: QuadTree,
    tree_new: QuadTree,
}

#[pymethods]
impl Problem {
    /// Laplace double-layer system on a circle with a bump perturbation that
    /// relaxes to the plain circle. Mode: "fixed-proportion" or "fixed-count".
    #[staticmethod]
    #[pyo3(signature = (n, mode="fixed-proportion", n_occ=64))]
    fn circle_bump(n: usize, mode: &str, n_occ: usize) -> PyResult<Self> {
        let window = match mode {
            "fixed-proportion" => window_fixed_proportion(),
            "fixed-count" => {
                if n <= 2000 {
                    return Err(PyValueError::new_err("fixed-count window needs n > 2000"));
                }
                window_fixed_count(n)
            }
            other => return Err(PyValueError::new_err(format!("unknown mode {other}"))),
        };
        let old_curve = bump_circle(n, window.0, window.1);
        let new_curve = plain_circle(n);
        let (tree_old, tree_new) =
            matched_tree(&old_curve.disc, &new_curve.disc, n_occ).map_err(to_py_err)?;
        Ok(Problem {
            kern_old: Box::new(laplace_dlp(&old_curve).map_err(to_py_err)?),
            kern_new: Box::new(laplace_dlp(&new_curve).map_err(to_py_err)?),
            tree_old,
            tree_new,
        })
    }

    /// Lippmann-Schwinger volume scattering on a side x side grid; the
    /// perturbation adds the compactly supported Gaussian to the scatterer.
    #[staticmethod]
    #[pyo3(signature = (side, kappa=0.1, n_occ=64))]
    fn lippmann_schwinger(side: usize, kappa: f64, n_occ: usize) -> PyResult<Self> {
        let n = side * side;
        let disc = ls_grid(side);
        let w0: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
        let bump = scatterer_bump(n);
        let w1: Vec<f64> = disc
            .points
            .iter()
            .map(|&p| scatterer_w0(p) + bump(p))
            .collect();
        let k = 2.0 * std::f64::consts::PI * kappa;
        let (tree_old, tree_new) = matched_tree(&disc, &disc, n_occ).map_err(to_py_err)?;
        Ok(Problem {
            kern_old: Box::new(helmholtz_ls(&disc, &w0, k).map_err(to_py_err)?),
            kern_new: Box::new(helmholtz_ls(&disc, &w1, k).map_err(to_py_err)?),
            tree_old,
            tree_new,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.tree_old.dof_count
    }

    /// Indices whose matrix rows/columns differ between the two instances.
    fn modified_dofs(&self) -> PyResult<Vec<usize>> {
        Ok(diff(self.kern_old.as_ref(), self.kern_new.as_ref())
            .map_err(to_py_err)?
            .modified)
    }

    /// Factor one instance ("initial" chooses the pre-perturbation one).
    #[pyo3(signature = (eps=1e-6, kind="rskelf", initial=true, n_proxy=64))]
    fn factorize(
        &self,
        eps: f64,
        kind: &str,
        initial: bool,
        n_proxy: usize,
    ) -> PyResult<Factorization> {
        let kind = parse_kind(kind)?;
        let opts = FactorOpts { eps, n_proxy };
        let (kernel, tree) = if initial {
            (self.kern_old.as_ref(), &self.tree_old)
        } else {
            (self.kern_new.as_ref(), &self.tree_new)
        };
        Ok(Factorization {
            inner: build(kernel, tree, kind, &opts).map_err(to_py_err)?,
        })
    }

    /// Update a factorization of the initial instance to the perturbed one;
    /// returns the new factorization and a cost summary.
    fn update(
        &self,
        py: Python<'_>,
        f_old: &Factorization,
    ) -> PyResult<(Factorization, Py<pyo3::types::PyDict>)> {
        let pert = diff(self.kern_old.as_ref(), self.kern_new.as_ref()).map_err(to_py_err)?;
        let (f_new, report) =
            update(&f_old.inner, self.kern_new.as_ref(), &pert).map_err(to_py_err)?;
        let stats = pyo3::types::PyDict::new(py);
        stats.set_item("modified_dofs", pert.modified.len())?;
        stats.set_item("marked_total", report.marked_total)?;
        stats.set_item("recomputed", report.recomputed)?;
        stats.set_item("reused", report.reused)?;
        stats.set_item("reskel_dofs", report.reskel_dofs)?;
        Ok((Factorization { inner: f_new }, stats.unbind()))
    }

    /// Matrix entry of the chosen instance (for small-scale verification).
    #[pyo3(signature = (i, j, initial=true))]
    fn entry(&self, i: usize, j: usize, initial: bool) -> C64 {
        let kernel = if initial {
            self.kern_old.as_ref()
        } else {
            self.kern_new.as_ref()
        };
        kernel.entry(i, j)
    }
}

/// A compressed factorization supporting apply, solve and log-determinant.
#[pyclass]
struct Factorization {
    inner: skelfac::factor::Factorization,
}

#[pymethods]
impl Factorization {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    fn apply(&self, x: Vec<C64>) -> PyResult<Vec<C64>> {
        if x.len() != self.inner.n {
            return Err(PyValueError::new_err("length mismatch"));
        }
        Ok(self.inner.apply(&x))
    }

    fn solve(&self, b: Vec<C64>) -> PyResult<Vec<C64>> {
        if b.len() != self.inner.n {
            return Err(PyValueError::new_err("length mismatch"));
        }
        Ok(self.inner.solve(&b))
    }

    fn logdet(&self) -> C64 {
        self.inner.logdet()
    }

    /// Bit-for-bit equality of all stored elimination data.
    fn bitwise_eq(&self, other: &Factorization) -> bool {
        self.inner.bitwise_eq(&other.inner)
    }

    /// Per-stage (label, owners, mean skeleton size, eliminated) tuples.
    fn skeleton_stats(&self) -> Vec<(String, usize, f64, usize)> {
        self.inner
            .skeleton_stats()
            .iter()
            .map(|s| (s.tag.to_string(), s.owners, s.mean_skel, s.eliminated))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "<Factorization kind={:?} n={} stages={} root={}>",
            self.inner.kind,
            self.inner.n,
            self.inner.stages.len(),
            self.inner.root.idx.len()
        )
    }
}

#[pymodule]
fn skelfac_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Factorization>()?;
    Ok(())
}
