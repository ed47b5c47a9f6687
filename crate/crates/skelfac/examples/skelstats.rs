//! Prints per-stage skeleton statistics of both factorizations on the
//! Lippmann-Schwinger grid problem, showing how edge elimination thins the
//! box levels.
//!
//!     cargo run --release -p skelfac --example skelstats

use skelfac::factor::{hif_build, rskelf_build, FactorOpts};
use skelfac::geometry::build_tree;
use skelfac::kernel::{helmholtz_ls, ls_grid, scatterer_w0};

fn main() {
    let side = 64usize;
    let disc = ls_grid(side);
    let w: Vec<f64> = disc.points.iter().map(|&p| scatterer_w0(p)).collect();
    let tree = build_tree(&disc, 64).unwrap();
    let g = helmholtz_ls(&disc, &w, 2.0 * std::f64::consts::PI * 0.1).unwrap();
    for eps in [1e-3, 1e-6] {
        let opts = FactorOpts { eps, n_proxy: 64 };
        let fr = rskelf_build(&g, &tree, &opts).unwrap();
        let fh = hif_build(&g, &tree, &opts).unwrap();
        println!("{side}x{side} grid, eps = {eps:.0e}");
        for s in fr.skeleton_stats() {
            println!(
                "  rskelf level {:>5}: owners={:<4} mean |S|={:<6.1} eliminated={}",
                format!("{}", s.tag),
                s.owners,
                s.mean_skel,
                s.eliminated
            );
        }
        println!("  rskelf root size = {}", fr.root.idx.len());
        for s in fh.skeleton_stats() {
            println!(
                "  hif    level {:>5}: owners={:<4} mean |S|={:<6.1} eliminated={}",
                format!("{}", s.tag),
                s.owners,
                s.mean_skel,
                s.eliminated
            );
        }
        println!("  hif    root size = {}", fh.root.idx.len());
    }
}
