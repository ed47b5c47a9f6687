//! The update path: marked-set propagation, selective refactorization, and
//! the central exactness property (update equals fresh build, bit for bit).

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skelfac::dense::rel_err;
use skelfac::factor::{build, FactorKind, FactorOpts, StageTag};
use skelfac::geometry::{build_tree, matched_tree, Discretization};
use skelfac::kernel::{
    bump_circle, diff, helmholtz_ls, laplace_dlp, ls_grid, plain_circle, scatterer_bump,
    scatterer_w0, window_fixed_proportion, Perturbation,
};
use skelfac::update::{mark_hif, mark_rskelf, update, update_cost_report};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

fn grid_disc(m: usize) -> Discretization {
    let h = 1.0 / m as f64;
    let mut points = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            points.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
        }
    }
    let n = points.len();
    Discretization { points, weights: vec![h * h; n], normals: None, params: None }
}

#[test]
fn empty_perturbation_shares_everything() {
    let curve = plain_circle(512);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let f = skelfac::factor::rskelf_build(&g, &tree, &FactorOpts::default()).unwrap();
    let pert = Perturbation::empty(512);
    let (f2, report) = update(&f, &g, &pert).unwrap();
    assert_eq!(report.marked_total, 0);
    assert_eq!(report.recomputed, 0);
    for (a, b) in f.stages.iter().zip(f2.stages.iter()) {
        for (x, y) in a.skels.iter().zip(b.skels.iter()) {
            assert!(Arc::ptr_eq(x, y));
        }
    }
    assert!(Arc::ptr_eq(&f.root, &f2.root));
}

#[test]
fn rskelf_update_is_bitwise_exact() {
    let n = 1024;
    let (tm, tmax) = window_fixed_proportion();
    let old_curve = bump_circle(n, tm, tmax);
    let new_curve = plain_circle(n);
    let g_old = laplace_dlp(&old_curve).unwrap();
    let g_new = laplace_dlp(&new_curve).unwrap();
    let (tree_old, tree_new) = matched_tree(&old_curve.disc, &new_curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f_old = skelfac::factor::rskelf_build(&g_old, &tree_old, &opts).unwrap();
    let pert = diff(&g_old, &g_new).unwrap();
    assert!(!pert.is_empty());

    let (f_upd, report) = update(&f_old, &g_new, &pert).unwrap();
    let f_fresh = build(&g_new, &tree_new, FactorKind::Rskelf, &opts).unwrap();
    assert!(f_upd.bitwise_eq(&f_fresh), "update differs from fresh build");
    assert!(report.recomputed > 0 && report.reused > 0);

    // apply agreement on random vectors
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..4 {
        let x = random_vec(&mut rng, n);
        let a = f_upd.apply(&x);
        let b = f_fresh.apply(&x);
        assert!(rel_err(&a, &b) <= 1e-13);
    }

    // unmarked data is shared by reference with the old factorization
    let mut shared = 0usize;
    for (so, su) in f_old.stages.iter().zip(f_upd.stages.iter()) {
        for old_sk in &so.skels {
            for new_sk in &su.skels {
                if Arc::ptr_eq(old_sk, new_sk) {
                    shared += 1;
                }
            }
        }
    }
    assert_eq!(shared, report.reused);
    assert!(shared > 0);
}

#[test]
fn rskelf_update_soundness_oracle() {
    // every owner whose fresh-build data differs between the two problems is
    // contained in the marked sets
    let n = 1024;
    let (tm, tmax) = window_fixed_proportion();
    let old_curve = bump_circle(n, tm, tmax);
    let new_curve = plain_circle(n);
    let g_old = laplace_dlp(&old_curve).unwrap();
    let g_new = laplace_dlp(&new_curve).unwrap();
    let (tree_old, tree_new) = matched_tree(&old_curve.disc, &new_curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f_a = build(&g_old, &tree_old, FactorKind::Rskelf, &opts).unwrap();
    let f_b = build(&g_new, &tree_new, FactorKind::Rskelf, &opts).unwrap();
    let pert = diff(&g_old, &g_new).unwrap();
    let marked = mark_rskelf(&tree_old, &tree_new, &pert);
    for (sa, sb) in f_a.stages.iter().zip(f_b.stages.iter()) {
        assert_eq!(sa.tag, sb.tag);
        let map_b: std::collections::HashMap<_, _> =
            sb.skels.iter().map(|sk| (sk.owner.clone(), sk)).collect();
        for sk in &sa.skels {
            match map_b.get(&sk.owner) {
                Some(other) => {
                    if !sk.bitwise_eq(other) {
                        assert!(
                            marked.is_marked(sa.tag, &sk.owner),
                            "owner {:?} differs but is unmarked at stage {}",
                            sk.owner,
                            sa.tag
                        );
                    }
                }
                None => {
                    assert!(marked.is_marked(sa.tag, &sk.owner));
                }
            }
        }
    }
}

#[test]
fn hif_update_is_bitwise_exact_with_soundness() {
    let side = 32;
    let n = side * side;
    let disc = ls_grid(side);
    let w0: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let bump = scatterer_bump(n);
    let w1: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p) + bump(p)).collect();
    let k = 2.0 * std::f64::consts::PI * 0.1;
    let g0 = helmholtz_ls(&disc, &w0, k).unwrap();
    let g1 = helmholtz_ls(&disc, &w1, k).unwrap();
    let tree = build_tree(&disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f_old = skelfac::factor::hif_build(&g0, &tree, &opts).unwrap();
    let pert = diff(&g0, &g1).unwrap();
    assert!(!pert.is_empty());

    let (f_upd, _report) = update(&f_old, &g1, &pert).unwrap();
    let f_fresh = build(&g1, &tree, FactorKind::Hif, &opts).unwrap();
    assert!(f_upd.bitwise_eq(&f_fresh), "hif update differs from fresh build");

    // exhaustive soundness check over both factorizations
    let f_a = build(&g0, &tree, FactorKind::Hif, &opts).unwrap();
    let marked = mark_hif(&tree, &tree, &pert);
    for (sa, sb) in f_a.stages.iter().zip(f_fresh.stages.iter()) {
        let map_b: std::collections::HashMap<_, _> =
            sb.skels.iter().map(|sk| (sk.owner.clone(), sk)).collect();
        for sk in &sa.skels {
            let differs = match map_b.get(&sk.owner) {
                Some(other) => !sk.bitwise_eq(other),
                None => true,
            };
            if differs {
                assert!(
                    marked.is_marked(sa.tag, &sk.owner),
                    "owner {:?} differs but is unmarked at stage {}",
                    sk.owner,
                    sa.tag
                );
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let x = random_vec(&mut rng, n);
        assert!(rel_err(&f_upd.apply(&x), &f_fresh.apply(&x)) <= 1e-13);
    }
}

#[test]
fn marked_sets_obey_lemma_bounds_on_uniform_trees() {
    // single-leaf perturbations on uniform trees: rskelf reach <= 2 and
    // |M_l| <= 25; hif reach <= 4 and |M_l| <= 81
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for depth in [4u32, 5] {
        let m = 2usize << depth; // 4 DOFs per leaf at n_occ = 4
        let disc = grid_disc(m);
        let tree = build_tree(&disc, 4).unwrap();
        assert_eq!(tree.structure.depth(), depth);
        let leaves: Vec<usize> = tree
            .structure
            .boxes
            .iter()
            .filter(|b| b.is_childless() && !tree.leaf_dofs[b.id].is_empty())
            .map(|b| b.id)
            .collect();
        for _ in 0..12 {
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let pert =
                Perturbation::from_modified(tree.leaf_dofs[leaf].clone(), disc.dof_count());
            let mr = mark_rskelf(&tree, &tree, &pert);
            for st in &mr.stages {
                if let StageTag::Box(l) = st.tag {
                    assert!(
                        st.owners.len() <= 25,
                        "rskelf |M_{l}| = {} > 25",
                        st.owners.len()
                    );
                    if l <= depth.saturating_sub(3) {
                        assert!(st.reach.unwrap_or(0) <= 2);
                    }
                }
            }
            let mh = mark_hif(&tree, &tree, &pert);
            for st in &mh.stages {
                if let StageTag::Box(l) = st.tag {
                    assert!(
                        st.owners.len() <= 81,
                        "hif |M_{l}| = {} > 81",
                        st.owners.len()
                    );
                    if l <= depth.saturating_sub(3) {
                        assert!(st.reach.unwrap_or(0) <= 4);
                    }
                }
            }
        }
    }
}

#[test]
fn corner_leaf_marking_matches_figure_pattern() {
    // 4x4 uniform leaves; perturbation confined to the leaf at grid (1,0):
    // M_L is the 3x2 block around it, P_{L-1} the bottom parent row, U_{L-1}
    // the top row, so all four parents are marked
    let disc = grid_disc(8); // 64 points, n_occ 4 -> depth 2
    let tree = build_tree(&disc, 4).unwrap();
    assert_eq!(tree.structure.depth(), 2);
    let st = &tree.structure;
    let target = st.levels[2]
        .iter()
        .copied()
        .find(|&b| st.boxes[b].coords == [1, 0])
        .unwrap();
    let pert = Perturbation::from_modified(tree.leaf_dofs[target].clone(), 64);
    let marks = mark_rskelf(&tree, &tree, &pert);
    let m2 = marks.stage(StageTag::Box(2)).unwrap();
    let coords2: std::collections::BTreeSet<[i64; 2]> = m2
        .owners
        .iter()
        .map(|o| match o {
            skelfac::skel::Owner::Box(b) => st.boxes[*b].coords,
            _ => unreachable!(),
        })
        .collect();
    let want2: std::collections::BTreeSet<[i64; 2]> =
        [[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]].into_iter().collect();
    assert_eq!(coords2, want2);
    let m1 = marks.stage(StageTag::Box(1)).unwrap();
    let p1: std::collections::BTreeSet<[i64; 2]> =
        m1.parent_rule.iter().map(|&b| st.boxes[b].coords).collect();
    assert_eq!(
        p1,
        [[0, 0], [1, 0]].into_iter().collect::<std::collections::BTreeSet<_>>()
    );
    let u1: std::collections::BTreeSet<[i64; 2]> =
        m1.neighbor_rule.iter().map(|&b| st.boxes[b].coords).collect();
    assert_eq!(
        u1,
        [[0, 1], [1, 1]].into_iter().collect::<std::collections::BTreeSet<_>>()
    );
    assert_eq!(m1.owners.len(), 4);
}

#[test]
fn marking_is_monotone_in_the_perturbation() {
    let disc = grid_disc(16);
    let tree = build_tree(&disc, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let mut small: Vec<usize> = Vec::new();
        for i in 0..disc.dof_count() {
            if rng.random::<f64>() < 0.02 {
                small.push(i);
            }
        }
        let mut big = small.clone();
        for i in 0..disc.dof_count() {
            if rng.random::<f64>() < 0.02 {
                big.push(i);
            }
        }
        big.sort_unstable();
        big.dedup();
        let p1 = Perturbation::from_modified(small, disc.dof_count());
        let p2 = Perturbation::from_modified(big, disc.dof_count());
        for markfn in [mark_rskelf, mark_hif] {
            let m1 = markfn(&tree, &tree, &p1);
            let m2 = markfn(&tree, &tree, &p2);
            for (s1, s2) in m1.stages.iter().zip(m2.stages.iter()) {
                assert_eq!(s1.tag, s2.tag);
                assert!(s1.owners.is_subset(&s2.owners));
            }
        }
    }
}

#[test]
fn cost_report_counts() {
    let curve = plain_circle(512);
    let g = laplace_dlp(&curve).unwrap();
    let tree = build_tree(&curve.disc, 64).unwrap();
    let f = skelfac::factor::rskelf_build(&g, &tree, &FactorOpts::default()).unwrap();
    // empty perturbation: all zeros
    let (marks, rep) = update_cost_report(&f, &g, &Perturbation::empty(512)).unwrap();
    assert_eq!(marks.total_marked(), 0);
    assert_eq!(rep.reskel_dofs, 0);
    assert_eq!(rep.predicted_work, 0.0);
    // nonempty: bounded by full work
    let pert = Perturbation::from_modified((0..32).collect(), 512);
    let (marks, rep) = update_cost_report(&f, &g, &pert).unwrap();
    assert!(marks.total_marked() > 0);
    assert!(rep.predicted_work > 0.0);
}

#[test]
fn single_leaf_marking_grows_additively_with_depth() {
    // one fixed window of the circle marked across doubling sizes: the total
    // marked count grows by a bounded amount per doubling
    let mut totals = Vec::new();
    for e in 15..=21u32 {
        let n = 1usize << e;
        let curve = plain_circle(n);
        let g = laplace_dlp(&curve).unwrap();
        let tree = build_tree(&curve.disc, 64).unwrap();
        // mark the DOFs of one leaf near angle pi
        let anchor = (0..n)
            .min_by(|&a, &b| {
                let ta = (curve.disc.params.as_ref().unwrap()[a] - std::f64::consts::PI).abs();
                let tb = (curve.disc.params.as_ref().unwrap()[b] - std::f64::consts::PI).abs();
                ta.partial_cmp(&tb).unwrap()
            })
            .unwrap();
        let leaf = tree.leaf_of[anchor];
        let pert = Perturbation::from_modified(tree.leaf_dofs[leaf].clone(), n);
        let marks = mark_rskelf(&tree, &tree, &pert);
        let _ = &g;
        totals.push(marks.total_marked());
    }
    for w in totals.windows(2) {
        assert!(
            w[1] as i64 - w[0] as i64 <= 25,
            "marked totals {totals:?} grew too fast"
        );
    }
}

#[test]
fn proportional_marking_scales_linearly() {
    // a fixed-proportion window marks a bounded-below fraction of all boxes
    for e in [12u32, 14] {
        let n = 1usize << e;
        let curve = plain_circle(n);
        let tree = build_tree(&curve.disc, 64).unwrap();
        let (tm, tmax) = window_fixed_proportion();
        let modified: Vec<usize> = (0..n)
            .filter(|&j| {
                let t = curve.disc.params.as_ref().unwrap()[j];
                t > tm && t < tmax
            })
            .collect();
        let pert = Perturbation::from_modified(modified, n);
        let marks = mark_rskelf(&tree, &tree, &pert);
        let nonempty_boxes = tree
            .structure
            .boxes
            .iter()
            .filter(|b| {
                b.is_childless() && !tree.leaf_dofs[b.id].is_empty()
            })
            .count();
        let total = marks.total_marked();
        assert!(
            total * 25 >= nonempty_boxes,
            "marked fraction too small: {total} of {nonempty_boxes}"
        );
    }
}

#[test]
fn hif_update_exact_on_a_deeper_tree() {
    // one more edge level than the 32x32 case; exercises the merge of reused
    // and recomputed edge cells during the replay
    let side = 64;
    let n = side * side;
    let disc = ls_grid(side);
    let w0: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let bump = scatterer_bump(n);
    let w1: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p) + bump(p)).collect();
    let k = 2.0 * std::f64::consts::PI * 0.1;
    let g0 = helmholtz_ls(&disc, &w0, k).unwrap();
    let g1 = helmholtz_ls(&disc, &w1, k).unwrap();
    let tree = build_tree(&disc, 64).unwrap();
    assert!(tree.structure.depth() >= 3);
    let opts = FactorOpts { eps: 1e-3, n_proxy: 64 };
    let f_old = skelfac::factor::hif_build(&g0, &tree, &opts).unwrap();
    let pert = diff(&g0, &g1).unwrap();
    let (f_upd, report) = update(&f_old, &g1, &pert).unwrap();
    let fresh = build(&g1, &tree, FactorKind::Hif, &opts).unwrap();
    assert!(f_upd.bitwise_eq(&fresh));
    assert!(report.reused > 0);
}

#[test]
fn update_sequence_round_trips_exactly() {
    // perturb and then revert: the second update must reproduce the original
    // factorization bit for bit, with no error accumulation
    let n = 1024;
    let (tm, tmax) = window_fixed_proportion();
    let old_curve = bump_circle(n, tm, tmax);
    let new_curve = plain_circle(n);
    let g_old = laplace_dlp(&old_curve).unwrap();
    let g_new = laplace_dlp(&new_curve).unwrap();
    let (tree_old, _) = matched_tree(&old_curve.disc, &new_curve.disc, 64).unwrap();
    let opts = FactorOpts { eps: 1e-6, n_proxy: 64 };
    let f1 = build(&g_old, &tree_old, FactorKind::Rskelf, &opts).unwrap();
    let pert = diff(&g_old, &g_new).unwrap();
    let (f2, _) = update(&f1, &g_new, &pert).unwrap();
    let pert_back = diff(&g_new, &g_old).unwrap();
    assert_eq!(pert.modified, pert_back.modified);
    let (f3, _) = update(&f2, &g_old, &pert_back).unwrap();
    assert!(f3.bitwise_eq(&f1), "revert did not reproduce the original");
    // and forward again equals the first update
    let (f4, _) = update(&f3, &g_new, &pert).unwrap();
    assert!(f4.bitwise_eq(&f2));
}

#[test]
fn update_rejects_incompatible_trees() {
    // occupancy violation: all points of a sparse region crammed into one leaf
    let disc_old = grid_disc(8);
    let disc_new = {
        let mut d = disc_old.clone();
        for i in 0..16 {
            d.points[i] = [0.01 + 0.001 * i as f64, 0.01];
        }
        d
    };
    disc_old.validate();
    let tree = build_tree(&disc_old, 4).unwrap();
    let g_old = helmholtz_ls(&disc_old, &vec![0.5; 64], 1.0).unwrap();
    let f = skelfac::factor::hif_build(&g_old, &tree, &FactorOpts::default()).unwrap();
    let g_new = helmholtz_ls(&disc_new, &vec![0.5; 64], 1.0).unwrap();
    let pert = diff(&g_old, &g_new).unwrap();
    let err = update(&f, &g_new, &pert);
    assert!(matches!(err, Err(skelfac::Error::TreeInvalidated)));
}
