//! Desk-scale verification of the factorization drivers against dense
//! references.

use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skelfac::dense::{direct_matvec, rel_err, DenseOracle};
use skelfac::factor::{hif_build, rskelf_build, FactorOpts, StageTag};
use skelfac::geometry::build_tree;
use skelfac::kernel::{
    helmholtz_ls, laplace_dlp, ls_grid, plain_circle, scatterer_w0, Kernel,
};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

#[test]
fn single_leaf_tree_is_exact() {
    let curve = plain_circle(48);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    assert_eq!(tree.structure.depth(), 0);
    let f = rskelf_build(&g, &tree, &FactorOpts::default()).unwrap();
    assert!(f.stages.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_vec(&mut rng, 48);
    let fx = f.apply(&x);
    let gx = direct_matvec(&g, &x);
    assert!(rel_err(&fx, &gx) < 1e-14);
    let b = random_vec(&mut rng, 48);
    let oracle = DenseOracle::new(&g, 100).unwrap();
    assert!(rel_err(&f.solve(&b), &oracle.solve(&b)) < 1e-12);
}

#[test]
fn rskelf_circle_matches_dense_solve() {
    let n = 1024;
    let curve = plain_circle(n);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-9, n_proxy: 64 };
    let f = rskelf_build(&g, &tree, &opts).unwrap();
    assert_eq!(f.eliminated_plus_root(), n);
    let oracle = DenseOracle::new(&g, 2048).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let b = random_vec(&mut rng, n);
    let err = rel_err(&f.solve(&b), &oracle.solve(&b));
    assert!(err <= 1e-6, "solve error {err}");
}

#[test]
fn rskelf_forward_accuracy_direct_summation() {
    let n = 2048;
    let curve = plain_circle(n);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-9, n_proxy: 64 };
    let f = rskelf_build(&g, &tree, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // residual of the compressed solve against the true matrix action
    let b = random_vec(&mut rng, n);
    let x = f.solve(&b);
    let gx = direct_matvec(&g, &x);
    let err = rel_err(&gx, &b);
    assert!(err <= 1e-6, "residual {err}");
    // forward map agrees with direct summation
    for _ in 0..3 {
        let x = random_vec(&mut rng, n);
        let fx = f.apply(&x);
        let gx = direct_matvec(&g, &x);
        assert!(rel_err(&fx, &gx) <= 10.0 * opts.eps);
    }
}

#[test]
fn rskelf_skeletons_stay_bounded_on_curves() {
    let n = 4096;
    let curve = plain_circle(n);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f = rskelf_build(&g, &tree, &opts).unwrap();
    let stats = f.skeleton_stats();
    let leaf_mean = stats.first().unwrap().mean_skel;
    for s in &stats {
        if let StageTag::Box(l) = s.tag {
            if l >= 1 && s.owners > 0 {
                assert!(
                    s.mean_skel <= 2.0 * leaf_mean,
                    "level {l}: {} > 2 * {leaf_mean}",
                    s.mean_skel
                );
            }
        }
    }
}

#[test]
fn solve_of_apply_roundtrips() {
    let n = 1024;
    let curve = plain_circle(n);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-9, n_proxy: 64 };
    let f = rskelf_build(&g, &tree, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..3 {
        let x = random_vec(&mut rng, n);
        let y = f.solve(&f.apply(&x));
        assert!(rel_err(&y, &x) <= 10.0 * opts.eps);
    }
}

#[test]
fn hif_zero_scatterer_is_identity() {
    let side = 16;
    let disc = ls_grid(side);
    let w = vec![0.0; side * side];
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 0.1).unwrap();
    let tree = build_tree(&disc, 16).unwrap();
    let f = hif_build(&g, &tree, &FactorOpts::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_vec(&mut rng, side * side);
    let fx = f.apply(&x);
    assert!(rel_err(&fx, &x) < 1e-12);
}

#[test]
fn hif_ls_matches_dense_solve() {
    let side = 32;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 0.1).unwrap();
    let tree = build_tree(&disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f = hif_build(&g, &tree, &opts).unwrap();
    assert_eq!(f.eliminated_plus_root(), side * side);
    let oracle = DenseOracle::new(&g, 1024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b = random_vec(&mut rng, side * side);
    let err = rel_err(&f.solve(&b), &oracle.solve(&b));
    assert!(err <= 1e-4, "solve error {err}");
}

#[test]
fn hif_compresses_harder_than_rskelf_in_2d() {
    let side = 64;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 0.1).unwrap();
    let tree = build_tree(&disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-3, n_proxy: 64 };
    let fr = rskelf_build(&g, &tree, &opts).unwrap();
    let fh = hif_build(&g, &tree, &opts).unwrap();
    let mean_at = |f: &skelfac::factor::Factorization, lvl: u32| {
        f.skeleton_stats()
            .iter()
            .find(|s| s.tag == StageTag::Box(lvl))
            .map(|s| s.mean_skel)
            .unwrap_or(0.0)
    };
    let depth = tree.structure.depth();
    // edge elimination thins the box skeleton sets at the coarse levels
    for lvl in 1..depth.saturating_sub(1) {
        let r = mean_at(&fr, lvl);
        let h = mean_at(&fh, lvl);
        assert!(h < r, "level {lvl}: hif {h} !< rskelf {r}");
    }
    // and both factorizations still solve accurately
    let oracle = DenseOracle::new(&g, 4096).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b = random_vec(&mut rng, side * side);
    assert!(rel_err(&fh.solve(&b), &oracle.solve(&b)) <= 1e-1 * 1e-3 / 1e-3);
}

#[test]
fn logdet_matches_dense() {
    let n = 512;
    let curve = plain_circle(n);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-9, n_proxy: 64 };
    let f = rskelf_build(&g, &tree, &opts).unwrap();
    let oracle = DenseOracle::new(&g, 1024).unwrap();
    let got = f.logdet().re;
    let want = oracle.logdet().re;
    assert!(
        (got - want).abs() <= 1e-6 * want.abs(),
        "log|det| {got} vs {want}"
    );
}

#[test]
fn complex_logdet_is_branch_consistent_with_dense() {
    let side = 16;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI).unwrap();
    let tree = build_tree(&disc, 16).unwrap();
    let opts = FactorOpts { eps: 1e-9, n_proxy: 64 };
    let f = hif_build(&g, &tree, &opts).unwrap();
    let oracle = DenseOracle::new(&g, 512).unwrap();
    let d = f.logdet() - oracle.logdet();
    assert!(d.re.abs() <= 1e-8 * oracle.logdet().re.abs().max(1.0), "re {d}");
    // imaginary parts agree up to whole turns of the argument
    let turns = d.im / (2.0 * std::f64::consts::PI);
    assert!((turns - turns.round()).abs() < 1e-8, "im {d}");
}

#[test]
fn bumped_curve_solves_interior_dirichlet() {
    // harmonic reconstruction through the double-layer density on the
    // non-circular boundary: exercises curvature, normals and weights
    let n = 512;
    let (tm, tmax) = skelfac::kernel::window_fixed_proportion();
    let curve = skelfac::kernel::bump_circle(n, tm, tmax);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-12, n_proxy: 96 };
    let f = rskelf_build(&g, &tree, &opts).unwrap();
    let harm = |p: [f64; 2]| p[0] * p[0] - p[1] * p[1];
    let rhs: Vec<C64> = curve
        .disc
        .points
        .iter()
        .map(|&p| C64::new(harm(p), 0.0))
        .collect();
    let sigma = f.solve(&rhs);
    let oracle = DenseOracle::new(&g, 1024).unwrap();
    let sigma_ref = oracle.solve(&rhs);
    let reconstruct = |sig: &[C64], x: [f64; 2]| {
        let mut u = C64::new(0.0, 0.0);
        for j in 0..n {
            let y = curve.disc.points[j];
            let nu = curve.disc.normals.as_ref().unwrap()[j];
            let dx = x[0] - y[0];
            let dy = x[1] - y[1];
            let r2 = dx * dx + dy * dy;
            let kernel_val = (dx * nu[0] + dy * nu[1])
                / (2.0 * std::f64::consts::PI * r2)
                * curve.disc.weights[j];
            u += C64::new(kernel_val, 0.0) * sig[j];
        }
        u.re
    };
    for x in [[0.25, 0.1], [-0.3, 0.45]] {
        let u = reconstruct(&sigma, x);
        // factorized density reproduces the dense one essentially exactly
        assert!((u - reconstruct(&sigma_ref, x)).abs() < 1e-10);
        // and the potential matches the harmonic data to quadrature accuracy
        assert!(
            (u - harm(x)).abs() < 1e-5,
            "u = {u} vs {} at {x:?}",
            harm(x)
        );
    }
}

#[test]
fn rskelf_overlay_is_pure_box_diagonal() {
    // every Schur write in rskelf lands inside one box's skeleton set; reads
    // outside those blocks are raw kernel entries
    let n = 512;
    let curve = plain_circle(n);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let f = rskelf_build(&g, &tree, &FactorOpts::default()).unwrap();
    let overlay = f.rebuild_overlay();
    let mut in_some_block = std::collections::HashSet::new();
    for stage in &f.stages {
        for sk in &stage.skels {
            for &i in &sk.skel {
                for &j in &sk.skel {
                    in_some_block.insert((i, j));
                }
            }
        }
    }
    for i in (0..n).step_by(13) {
        for j in (0..n).step_by(7) {
            if overlay.is_modified(i, j) {
                assert!(in_some_block.contains(&(i, j)));
            } else {
                assert!(!in_some_block.contains(&(i, j)));
            }
        }
    }
}

#[test]
fn hif_oscillatory_wavenumber_matches_dense() {
    // kappa = 10 on a 32x32 grid: the proxy ring doubles its point count to
    // resolve the oscillation and the factorization still matches the dense
    // reference for the same discrete system
    let side = 32;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 10.0).unwrap();
    let tree = build_tree(&disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f = hif_build(&g, &tree, &opts).unwrap();
    let oracle = DenseOracle::new(&g, 1024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let b = random_vec(&mut rng, side * side);
    let err = rel_err(&f.solve(&b), &oracle.solve(&b));
    assert!(err <= 1e-4, "solve error {err}");
}

#[test]
fn rskelf_on_the_bumped_curve() {
    // varying curvature, weights and normals along the bump
    let n = 2048;
    let (tm, tmax) = skelfac::kernel::window_fixed_proportion();
    let curve = skelfac::kernel::bump_circle(n, tm, tmax);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-9, n_proxy: 64 };
    let f = rskelf_build(&g, &tree, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let b = random_vec(&mut rng, n);
    let x = f.solve(&b);
    let gx = direct_matvec(&g, &x);
    let err = rel_err(&gx, &b);
    assert!(err <= 1e-6, "residual {err}");
}

#[test]
fn hif_unflagged_entries_are_raw_kernel() {
    // bookkeeping spot check: pairs not covered by any Schur write read back
    // as raw kernel entries, and flagged pairs sit inside some skeleton set
    let side = 16;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 0.1).unwrap();
    let tree = build_tree(&disc, 16).unwrap();
    let f = hif_build(&g, &tree, &FactorOpts::default()).unwrap();
    let overlay = f.rebuild_overlay();
    let mut in_some_block = std::collections::HashSet::new();
    for stage in &f.stages {
        for sk in &stage.skels {
            for &i in &sk.skel {
                for &j in &sk.skel {
                    in_some_block.insert((i, j));
                }
            }
        }
    }
    let view = skelfac::factor::LevelView { kernel: &g, overlay: &overlay };
    use skelfac::skel::MatView;
    let n = side * side;
    for i in (0..n).step_by(11) {
        for j in (0..n).step_by(5) {
            let got = view.block(&[i], &[j])[[0, 0]];
            if overlay.is_modified(i, j) {
                assert!(in_some_block.contains(&(i, j)));
            } else {
                assert_eq!(got, g.entry(i, j));
            }
        }
    }
}

#[test]
fn serial_roundtrip_is_bitwise() {
    let side = 16;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 0.1).unwrap();
    let tree = build_tree(&disc, 16).unwrap();
    let f = hif_build(&g, &tree, &FactorOpts::default()).unwrap();
    let mut buf = Vec::new();
    skelfac::serial::write_factorization(&mut buf, &f, "side=16 kind=hif").unwrap();
    let (f2, meta) = skelfac::serial::read_factorization(&mut buf.as_slice(), &tree).unwrap();
    assert_eq!(meta, "side=16 kind=hif");
    assert!(f.bitwise_eq(&f2));
    // and the operator still works after the round trip
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = random_vec(&mut rng, side * side);
    assert!(rel_err(&f2.solve(&b), &f.solve(&b)) < 1e-15);
}

#[test]
fn hif_forward_accuracy() {
    let side = 32;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 0.1).unwrap();
    let tree = build_tree(&disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f = hif_build(&g, &tree, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let x = random_vec(&mut rng, side * side);
        let fx = f.apply(&x);
        let gx = direct_matvec(&g, &x);
        let err = rel_err(&fx, &gx);
        assert!(err <= 100.0 * opts.eps, "forward error {err}");
    }
}
