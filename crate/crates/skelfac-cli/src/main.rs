//! Benchmark CLI for the skeletonization solvers.
//!
//! Subcommands:
//!   factor     build the base factorization of an experiment and save it
//!   update     load a saved factorization, apply the experiment's
//!              perturbation, save the result, and print a cost row
//!   bench-ex1  boundary-geometry experiment on the bumped circle
//!   bench-ex2  scatterer experiment for Lippmann-Schwinger volume problems
//!   verify     run the accuracy/exactness assertions for a config
//!
//! All subcommands accept `--config FILE` (flat key=value text) plus
//! `--<key> <value>` overrides for every config key.

#![allow(clippy::needless_range_loop)]

mod config;
mod plot;
mod runner;

use std::fs;
use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use config::ExperimentConfig;
use runner::{build_problem, opts_of, perturbation_of, CSV_HEADER};
use skelfac::factor::build;
use skelfac::update::update;
use skelfac::{Error, Result};

fn usage() -> String {
    let keys = "problem n n_list eps kind mode kappa n_occ n_proxy seed reps out";
    format!(
        "usage: skelfac <factor|update|bench-ex1|bench-ex2|verify> [options]\n\
         \n\
         common options:\n\
           --config FILE        flat key=value config file\n\
           --<key> VALUE        override any config key ({keys})\n\
         factor:\n\
           --file FILE          output factorization container (required)\n\
         update:\n\
           --file FILE          input factorization container (required)\n\
           --new-file FILE      output container for the updated factorization\n\
         bench-ex1 / bench-ex2:\n\
           --out FILE           CSV output (default stdout)\n\
           --plot FILE          write an SVG scaling plot\n"
    )
}

struct Cli {
    cfg: ExperimentConfig,
    file: Option<String>,
    new_file: Option<String>,
    plot: Option<String>,
}

fn parse_args(args: &[String]) -> Result<Cli> {
    let mut cfg = ExperimentConfig::default();
    let mut file = None;
    let mut new_file = None;
    let mut plot = None;
    // config file first, then overrides in order
    let mut i = 0;
    while i < args.len() {
        if args[i] == "--config" {
            let path = args
                .get(i + 1)
                .ok_or_else(|| Error::InvalidConfig("--config needs a path".into()))?;
            let text = fs::read_to_string(path)?;
            cfg.parse_text(&text)?;
        }
        i += 1;
    }
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| Error::InvalidConfig(format!("unexpected argument {a}")))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| Error::InvalidConfig(format!("--{key} needs a value")))?;
        match key {
            "config" => {}
            "file" => file = Some(value.clone()),
            "new-file" => new_file = Some(value.clone()),
            "plot" => plot = Some(value.clone()),
            _ => cfg.set(key, value)?,
        }
        i += 2;
    }
    cfg.validate()?;
    Ok(Cli { cfg, file, new_file, plot })
}

fn emit_rows(cfg: &ExperimentConfig, rows: &[runner::ResultRow]) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    match &cfg.out {
        Some(path) => {
            fs::write(path, text)?;
        }
        None => {
            print!("{text}");
        }
    }
    Ok(())
}

fn cmd_factor(cli: &Cli) -> Result<()> {
    let path = cli
        .file
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("factor needs --file".into()))?;
    let pair = build_problem(&cli.cfg, cli.cfg.n)?;
    let t0 = Instant::now();
    let f = build(pair.kern_old.as_ref(), &pair.tree_old, cli.cfg.kind, &opts_of(&cli.cfg))?;
    let t_f = t0.elapsed().as_secs_f64();
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    skelfac::serial::write_factorization(&mut out, &f, &cli.cfg.to_text())?;
    out.flush()?;
    eprintln!("factored N={} in {t_f:.3}s -> {path}", cli.cfg.n);
    Ok(())
}

fn cmd_update(cli: &Cli) -> Result<()> {
    let path = cli
        .file
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("update needs --file".into()))?;
    // the stored meta text reproduces the experiment configuration
    let bytes = fs::read(path)?;
    let mut probe = &bytes[..];
    let mut cfg = ExperimentConfig::default();
    {
        // peek at the meta without a tree: read header fields manually
        let meta = skelfac::serial::peek_meta(&mut probe)?;
        cfg.parse_text(&meta)?;
    }
    let pair = build_problem(&cfg, cfg.n)?;
    let (f_old, _meta) =
        skelfac::serial::read_factorization(&mut &bytes[..], &pair.tree_old)?;
    let pert = perturbation_of(&pair)?;
    let t0 = Instant::now();
    let (f_new, report) = update(&f_old, pair.kern_new.as_ref(), &pert)?;
    let t_u = t0.elapsed().as_secs_f64();
    if let Some(new_path) = &cli.new_file {
        let mut out = std::io::BufWriter::new(fs::File::create(new_path)?);
        skelfac::serial::write_factorization(&mut out, &f_new, &cfg.to_text())?;
        out.flush()?;
    }
    let row = format!(
        "N,m,marked_total,t_u_seconds\n{},{},{},{:.6}",
        f_new.n,
        pert.modified.len(),
        report.marked_total,
        t_u
    );
    match &cfg.out {
        Some(out_path) => fs::write(out_path, format!("{row}\n"))?,
        None => println!("{row}"),
    }
    Ok(())
}

fn cmd_bench(cli: &Cli, example: u8) -> Result<()> {
    let rows = match example {
        1 => runner::run_example1(&cli.cfg)?,
        _ => runner::run_example2(&cli.cfg)?,
    };
    emit_rows(&cli.cfg, &rows)?;
    if let Some(plot_path) = &cli.plot {
        fs::write(plot_path, plot::scaling_plot(&rows))?;
    }
    // growth-trend report: update time should grow strictly slower than
    // factor time; rows outside the asymptotic regime are tagged, not failed
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let rf = b.t_f / a.t_f.max(1e-12);
        let ru = b.t_u / a.t_u.max(1e-12);
        let tag = if ru < rf { "ok" } else { "sub-asymptotic" };
        eprintln!(
            "trend N {} -> {}: t_f x{rf:.2}, t_u x{ru:.2} [{tag}]",
            a.n, b.n
        );
    }
    // any exact_match = false is a failed assertion
    if rows.iter().any(|r| r.exact_match == "false") {
        return Err(Error::InvalidConfig("exactness verification failed".into()));
    }
    Ok(())
}

fn cmd_verify(cli: &Cli) -> Result<()> {
    let (lines, ok) = runner::verify(&cli.cfg)?;
    for l in lines {
        println!("{l}");
    }
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig("verification failed".into()))
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(cmd) = args.first() else {
        eprintln!("{}", usage());
        return ExitCode::from(2);
    };
    let rest = &args[1..];
    let run = || -> Result<()> {
        let cli = parse_args(rest)?;
        match cmd.as_str() {
            "factor" => cmd_factor(&cli),
            "update" => cmd_update(&cli),
            "bench-ex1" => cmd_bench(&cli, 1),
            "bench-ex2" => cmd_bench(&cli, 2),
            "verify" => cmd_verify(&cli),
            other => {
                eprintln!("unknown subcommand {other}\n{}", usage());
                Err(Error::InvalidConfig("unknown subcommand".into()))
            }
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
