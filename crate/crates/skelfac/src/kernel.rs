//! Implicit system matrices: entrywise kernel evaluation for the Laplace
//! double-layer boundary problem and the Lippmann-Schwinger volume problem,
//! plus the perturbation model relating two problem instances.
//!
//! Matrices are never materialized; factorizations pull blocks on demand.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::special::{hankel1_0, hankel1_1};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Entry evaluator for the implicit matrix G together with the kernel data
/// needed for proxy compression and perturbation diffs.
pub trait Kernel: Send + Sync {
    fn disc(&self) -> &Discretization;

    fn entry(&self, i: usize, j: usize) -> C64;

    /// Field radiated by source DOF `j` at an off-surface location, used to
    /// stand in for all far targets during compression.
    fn proxy_outgoing(&self, p: [f64; 2], j: usize) -> C64;

    /// Adjoint-direction counterpart: conjugated incoming-field kernel at DOF
    /// `j` from an off-surface source location.
    fn proxy_incoming(&self, p: [f64; 2], j: usize) -> C64;

    fn is_symmetric(&self) -> bool;

    fn is_complex(&self) -> bool;

    /// Oscillation wavenumber, zero for static kernels; drives proxy point
    /// counts.
    fn wavenumber(&self) -> f64 {
        0.0
    }

    fn family(&self) -> &'static str;

    /// Problem-wide parameters; any change invalidates every DOF.
    fn global_fingerprint(&self) -> Vec<f64>;

    /// All per-DOF data the matrix entries depend on.
    fn dof_fingerprint(&self, i: usize, out: &mut Vec<f64>);

    fn block(&self, rows: &[usize], cols: &[usize]) -> Array2<C64> {
        Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| {
            self.entry(rows[a], cols[b])
        })
    }
}

/// Index set separating two kernel instances: outside of it the matrices
/// agree entrywise, bit for bit.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub modified: Vec<usize>,
    pub mask: Vec<bool>,
    pub description: String,
}

impl Perturbation {
    pub fn empty(n: usize) -> Self {
        Perturbation {
            modified: Vec::new(),
            mask: vec![false; n],
            description: String::from("identical"),
        }
    }

    pub fn from_modified(modified: Vec<usize>, n: usize) -> Self {
        let mut mask = vec![false; n];
        for &i in &modified {
            mask[i] = true;
        }
        Perturbation {
            modified,
            mask,
            description: String::from("explicit"),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.modified.is_empty()
    }
}

/// Rows/columns on which two instances of a problem may differ; a guaranteed
/// superset of the truly changed ones, by bitwise comparison of everything an
/// entry can depend on.
pub fn diff(old: &dyn Kernel, new: &dyn Kernel) -> Result<Perturbation> {
    let n = old.disc().dof_count();
    if n != new.disc().dof_count() || old.family() != new.family() {
        return Err(Error::SizeMismatch);
    }
    let gf_old = old.global_fingerprint();
    let gf_new = new.global_fingerprint();
    if !bits_eq_slice(&gf_old, &gf_new) {
        let modified: Vec<usize> = (0..n).collect();
        let mut p = Perturbation::from_modified(modified, n);
        p.description = String::from("global parameter change");
        return Ok(p);
    }
    let mut modified = Vec::new();
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    for i in 0..n {
        fa.clear();
        fb.clear();
        old.dof_fingerprint(i, &mut fa);
        new.dof_fingerprint(i, &mut fb);
        if !bits_eq_slice(&fa, &fb) {
            modified.push(i);
        }
    }
    let mut p = Perturbation::from_modified(modified, n);
    p.description = String::from("per-dof diff");
    Ok(p)
}

fn bits_eq_slice(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------------------
// Example 1 geometry: circle with a compactly supported radial bump
// ---------------------------------------------------------------------------

/// A closed curve discretized by the trapezoid rule, with the signed
/// curvature needed for the Nystrom diagonal limit.
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    pub disc: Discretization,
    pub curvature: Vec<f64>,
}

/// r(t), r'(t), r''(t) for the bumped circle; the window is open, everything
/// outside it takes the exact plain-circle branch.
fn bump_radius(t: f64, window: Option<(f64, f64)>) -> (f64, f64, f64) {
    if let Some((tm, tme)) = window {
        if t > tm && t < tme {
            let c = 2.0 / (tme - tm);
            let s = (2.0 * t - (tme + tm)) / (tme - tm);
            let u = 1.0 - s * s;
            if u > 0.0 {
                let f = (-1.0 / u).exp();
                let g = -2.0 * s / (u * u);
                let fp = f * g;
                let fpp = f * (g * g - 2.0 / (u * u) - 8.0 * s * s / (u * u * u));
                let a = 0.25;
                return (1.0 + a * f, a * fp * c, a * fpp * c * c);
            }
        }
    }
    (1.0, 0.0, 0.0)
}

fn curve_from_radius(n: usize, window: Option<(f64, f64)>) -> CurveGeometry {
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut curvature = Vec::with_capacity(n);
    for j in 0..n {
        let t = TWO_PI * j as f64 / n as f64;
        let (r, rp, rpp) = bump_radius(t, window);
        let (st, ct) = t.sin_cos();
        points.push([r * ct, r * st]);
        params.push(t);
        // gamma' = r'(cos,sin) + r(-sin,cos)
        let gx = rp * ct - r * st;
        let gy = rp * st + r * ct;
        let speed = (gx * gx + gy * gy).sqrt();
        weights.push(speed * TWO_PI / n as f64);
        // outward normal for counterclockwise orientation
        normals.push([gy / speed, -gx / speed]);
        // polar curvature
        let denom = (r * r + rp * rp).powf(1.5);
        curvature.push((r * r + 2.0 * rp * rp - r * rpp) / denom);
    }
    CurveGeometry {
        disc: Discretization {
            points,
            weights,
            normals: Some(normals),
            params: Some(params),
        },
        curvature,
    }
}

/// Trapezoid-rule discretization of the circle with a bump supported on the
/// open parameter window (t_m, t_M).
pub fn bump_circle(n: usize, t_m: f64, t_max: f64) -> CurveGeometry {
    assert!(
        (0.0..TWO_PI).contains(&t_m) && t_m < t_max && t_max <= TWO_PI,
        "window must satisfy 0 <= t_m < t_M <= 2*pi"
    );
    curve_from_radius(n, Some((t_m, t_max)))
}

/// The plain unit circle on the same nodes (the bump-free branch everywhere).
pub fn plain_circle(n: usize) -> CurveGeometry {
    curve_from_radius(n, None)
}

/// The fixed-proportion perturbation window of Example 1.
pub fn window_fixed_proportion() -> (f64, f64) {
    (0.9 * std::f64::consts::PI, 1.1 * std::f64::consts::PI)
}

/// The fixed-count window: about 1000 nodes regardless of N.
pub fn window_fixed_count(n: usize) -> (f64, f64) {
    let half = 1000.0 * std::f64::consts::PI / n as f64;
    (std::f64::consts::PI - half, std::f64::consts::PI + half)
}

/// Second-kind Nystrom system for the interior Laplace Dirichlet problem via
/// the double-layer potential on a closed curve.
pub struct LaplaceDlp {
    disc: Discretization,
    curvature: Vec<f64>,
    /// Static representative quadrature weight scaling the adjoint proxy
    /// rows to true matrix-entry magnitude; depends only on N so that
    /// perturbations stay local.
    w_rep: f64,
}

pub fn laplace_dlp(curve: &CurveGeometry) -> Result<LaplaceDlp> {
    if curve.disc.normals.is_none() {
        return Err(Error::MissingNormals);
    }
    curve.disc.validate();
    Ok(LaplaceDlp {
        disc: curve.disc.clone(),
        curvature: curve.curvature.clone(),
        w_rep: TWO_PI / curve.disc.dof_count() as f64,
    })
}

impl LaplaceDlp {
    /// dK/dnu_y evaluated at target x, source index j.
    fn dlp(&self, x: [f64; 2], j: usize) -> f64 {
        let y = self.disc.points[j];
        let nu = self.disc.normals.as_ref().unwrap()[j];
        let dx = x[0] - y[0];
        let dy = x[1] - y[1];
        let r2 = dx * dx + dy * dy;
        (dx * nu[0] + dy * nu[1]) / (TWO_PI * r2)
    }
}

impl Kernel for LaplaceDlp {
    fn disc(&self) -> &Discretization {
        &self.disc
    }

    fn entry(&self, i: usize, j: usize) -> C64 {
        if i == j {
            // smooth diagonal limit of the double-layer kernel
            let lim = -self.curvature[i] / (2.0 * TWO_PI);
            C64::new(-0.5 + lim * self.disc.weights[i], 0.0)
        } else {
            C64::new(
                self.dlp(self.disc.points[i], j) * self.disc.weights[j],
                0.0,
            )
        }
    }

    fn proxy_outgoing(&self, p: [f64; 2], j: usize) -> C64 {
        // a true matrix row at a far target: dipole kernel times the source
        // quadrature weight
        C64::new(self.dlp(p, j) * self.disc.weights[j], 0.0)
    }

    fn proxy_incoming(&self, p: [f64; 2], j: usize) -> C64 {
        // single-layer values capture incoming harmonic fields at the
        // sources; scaled like a true adjoint row
        let x = self.disc.points[j];
        let r2 = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
        C64::new(-r2.ln() / (2.0 * TWO_PI) * self.w_rep, 0.0)
    }

    fn is_symmetric(&self) -> bool {
        false
    }

    fn is_complex(&self) -> bool {
        false
    }

    fn family(&self) -> &'static str {
        "laplace-dlp"
    }

    fn global_fingerprint(&self) -> Vec<f64> {
        vec![self.disc.dof_count() as f64]
    }

    fn dof_fingerprint(&self, i: usize, out: &mut Vec<f64>) {
        let p = self.disc.points[i];
        let nu = self.disc.normals.as_ref().unwrap()[i];
        out.extend_from_slice(&[
            p[0],
            p[1],
            self.disc.weights[i],
            nu[0],
            nu[1],
            self.curvature[i],
        ]);
    }
}

// ---------------------------------------------------------------------------
// Example 2: Lippmann-Schwinger volume scattering on a uniform grid
// ---------------------------------------------------------------------------

/// Cell-centered uniform grid discretization of (0,1)^2.
pub fn ls_grid(side: usize) -> Discretization {
    let h = 1.0 / side as f64;
    let mut points = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            points.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
        }
    }
    let n = points.len();
    Discretization {
        points,
        weights: vec![h * h; n],
        normals: None,
        params: None,
    }
}

/// Base scatterer: a broad Gaussian centered in the domain.
pub fn scatterer_w0(x: [f64; 2]) -> f64 {
    let dx = x[0] - 0.5;
    let dy = x[1] - 0.5;
    (-16.0 * (dx * dx + dy * dy)).exp()
}

/// Perturbing Gaussian of Example 2: scale chosen in closed form so that
/// about 340 grid points see a value above machine precision; below that it
/// is truncated to exactly zero so the perturbation has finite support.
pub fn scatterer_bump(n_total: usize) -> impl Fn([f64; 2]) -> f64 {
    let rho2 = 340.0 / (std::f64::consts::PI * n_total as f64);
    let s = 52.0 * std::f64::consts::LN_2 / rho2;
    move |x: [f64; 2]| {
        let dx = x[0] - 0.8;
        let dy = x[1] - 0.8;
        let g = (-s * (dx * dx + dy * dy)).exp();
        if g > 2.0f64.powi(-52) {
            g
        } else {
            0.0
        }
    }
}

/// Symmetrized Lippmann-Schwinger system I + k sqrt(w) K k sqrt(w) with
/// one-point quadrature off the diagonal and an adaptively integrated
/// diagonal.
pub struct HelmholtzLs {
    disc: Discretization,
    k: f64,
    h: f64,
    coeff: Vec<f64>,
    w: Vec<f64>,
    diag_integral: C64,
}

pub fn helmholtz_ls(disc: &Discretization, w: &[f64], k: f64) -> Result<HelmholtzLs> {
    let n = disc.dof_count();
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Error::NonSquareGrid);
    }
    if w.len() != n {
        return Err(Error::SizeMismatch);
    }
    if w.iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeScatterer);
    }
    let h = 1.0 / side as f64;
    let coeff: Vec<f64> = w.iter().map(|&v| k * v.sqrt()).collect();
    let diag_integral = cell_self_integral(k, h);
    Ok(HelmholtzLs {
        disc: disc.clone(),
        k,
        h,
        coeff,
        w: w.to_vec(),
        diag_integral,
    })
}

impl HelmholtzLs {
    pub fn scatterer(&self) -> &[f64] {
        &self.w
    }
}

impl Kernel for HelmholtzLs {
    fn disc(&self) -> &Discretization {
        &self.disc
    }

    fn entry(&self, i: usize, j: usize) -> C64 {
        if i == j {
            let c2 = self.coeff[i] * self.coeff[i];
            C64::new(1.0, 0.0) + self.diag_integral * c2
        } else {
            let s = self.coeff[i] * self.coeff[j];
            if s == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let pi = self.disc.points[i];
            let pj = self.disc.points[j];
            let dx = pi[0] - pj[0];
            let dy = pi[1] - pj[1];
            let r = (dx * dx + dy * dy).sqrt();
            let kern = hankel1_0(self.k * r) * C64::new(0.0, 0.25);
            kern * (s * self.h * self.h)
        }
    }

    fn proxy_outgoing(&self, p: [f64; 2], j: usize) -> C64 {
        // a true matrix row at a far target, with the unknown target-side
        // coefficient replaced by its static upper bound k
        let c = self.coeff[j];
        if c == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let x = self.disc.points[j];
        let r = ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt();
        hankel1_0(self.k * r) * C64::new(0.0, 0.25) * (c * self.k * self.h * self.h)
    }

    fn proxy_incoming(&self, p: [f64; 2], j: usize) -> C64 {
        // complex-symmetric kernel: the adjoint direction is the conjugate
        self.proxy_outgoing(p, j).conj()
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_complex(&self) -> bool {
        true
    }

    fn wavenumber(&self) -> f64 {
        self.k
    }

    fn family(&self) -> &'static str {
        "helmholtz-ls"
    }

    fn global_fingerprint(&self) -> Vec<f64> {
        vec![self.k, self.h, self.disc.dof_count() as f64]
    }

    fn dof_fingerprint(&self, i: usize, out: &mut Vec<f64>) {
        let p = self.disc.points[i];
        out.extend_from_slice(&[p[0], p[1], self.disc.weights[i], self.coeff[i]]);
    }
}

/// (i/4) times the integral of H_0^(1)(k|y|) over one grid cell centered at
/// the singularity, by polar splitting of the square into eight wedges and
/// the closed-form radial primitive; the angular integral is adaptive.
fn cell_self_integral(k: f64, h: f64) -> C64 {
    // int_0^R H0(kr) r dr = (R H1(kR) + 2i/(pi k)) / k
    let radial = |theta: f64| -> C64 {
        let r = 0.5 * h / theta.cos();
        let z = k * r;
        (hankel1_1(z) * r + C64::new(0.0, 2.0 / (std::f64::consts::PI * k))) / k
    };
    let total = adaptive_simpson(&radial, 0.0, std::f64::consts::FRAC_PI_4, 1e-12, 30);
    total * 8.0 * C64::new(0.0, 0.25)
}

fn adaptive_simpson(
    f: &dyn Fn(f64) -> C64,
    a: f64,
    b: f64,
    tol: f64,
    depth: u32,
) -> C64 {
    let c = 0.5 * (a + b);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = (fa + fc * 4.0 + fb) * ((b - a) / 6.0);
    simpson_rec(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> C64,
    a: f64,
    b: f64,
    fa: C64,
    fb: C64,
    fc: C64,
    whole: C64,
    tol: f64,
    depth: u32,
) -> C64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (fa + fd * 4.0 + fc) * ((c - a) / 6.0);
    let right = (fc + fe * 4.0 + fb) * ((b - c) / 6.0);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, c, fa, fc, fd, left, tol * 0.5, depth - 1)
            + simpson_rec(f, c, b, fc, fb, fe, right, tol * 0.5, depth - 1)
    }
}
