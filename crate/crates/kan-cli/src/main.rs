//! `kan` — command-line surface for the kan-dynamics toolkit.
//!
//! Exit codes: 0 success, 1 domain errors (machine-readable JSON on
//! stderr), 2 usage errors (malformed flags or config).

mod config;
mod json;

use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::json;

use kan_dynamics::basins::{
    basin_raster, csv_string, intermingling_report, pgm_bytes, BasinSystem, SliceSpec,
};
use kan_dynamics::fiber::sternberg_linearize;
use kan_dynamics::number_theory::{
    diophantine_pairs, multiplicative_independence, PairSearchConfig,
};
use kan_dynamics::skew::{holonomy_center_map, preset, SystemPreset};
use kan_dynamics::transitivity::{
    build_certificate, direct_search, verify_certificate, CertificateParams, PhaseBox,
};
use kan_dynamics::{KanSystem, LeafDirection, TorusPoint};

use config::Ini;
use json::canonical;

#[derive(Parser)]
#[command(name = "kan", version, about = "Kan-type skew product toolkit")]
struct Cli {
    /// Seed recorded in output headers (all sampling is deterministic).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread count (does not affect results).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Numerical tolerance for holonomy and linearization limits.
    #[arg(long, global = true, default_value_t = 1e-11)]
    tol: f64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirArg {
    Stable,
    Unstable,
}

#[derive(Clone, Copy, ValueEnum)]
enum SliceArg {
    Cylinder,
    FixedX2,
    FixedT,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichPole {
    P,
    Q,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a system preset and print its K1-K3 validation report.
    Validate {
        #[arg(long, default_value = "kan-diffeo")]
        system: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide multiplicative independence of two positive rationals.
    Independence {
        /// First multiplier, e.g. 31/32.
        #[arg(long)]
        r: String,
        /// Second multiplier, e.g. 33/32.
        #[arg(long)]
        s: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sternberg linearization chart of a distinguished fiber map.
    Linearize {
        #[arg(long, default_value = "kan-diffeo")]
        system: String,
        /// Which fixed-point fiber map (q is linearized through its inverse).
        #[arg(long, value_enum, default_value_t = WhichPole::P)]
        which: WhichPole,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diophantine pair search for alpha^-k beta^l close to 1/eta.
    Pairs {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1_000_000)]
        max_k: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Whole-fiber center holonomy between two base points on a leaf.
    Holonomy {
        #[arg(long, default_value = "kan-diffeo")]
        system: String,
        #[arg(long)]
        x1: f64,
        #[arg(long)]
        x2: f64,
        #[arg(long)]
        target_x1: f64,
        #[arg(long)]
        target_x2: f64,
        #[arg(long, value_enum)]
        dir: DirArg,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a transitivity certificate for the boxes in the config.
    Certify {
        #[arg(long, default_value = "kan-diffeo")]
        system: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Direct witness search: smallest m with F^m(U) meeting V.
    Search {
        #[arg(long, default_value = "kan-diffeo")]
        system: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 64)]
        m_max: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Basin raster (PGM, optional CSV).
    Basins {
        #[arg(long, default_value = "kan-endo")]
        system: String,
        #[arg(long, default_value_t = 128)]
        grid_w: usize,
        #[arg(long, default_value_t = 128)]
        grid_h: usize,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 0.2)]
        tau0: f64,
        #[arg(long, default_value_t = 0.8)]
        tau1: f64,
        #[arg(long, value_enum, default_value_t = SliceArg::Cylinder)]
        slice: SliceArg,
        /// Fixed coordinate for the fixed-x2 / fixed-t slices.
        #[arg(long, default_value_t = 0.0)]
        slice_value: f64,
        /// PGM output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Intermingling report over dyadic sub-boxes of a basin raster.
    Intermingle {
        #[arg(long, default_value = "kan-endo")]
        system: String,
        #[arg(long, default_value_t = 512)]
        grid_w: usize,
        #[arg(long, default_value_t = 512)]
        grid_h: usize,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 0.2)]
        tau0: f64,
        #[arg(long, default_value_t = 0.8)]
        tau1: f64,
        #[arg(long, value_enum, default_value_t = SliceArg::Cylinder)]
        slice: SliceArg,
        #[arg(long, default_value_t = 0.0)]
        slice_value: f64,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    /// Malformed flags or config: exit 2.
    Usage(String),
    /// Well-formed request the math rejected: exit 1 with JSON on stderr.
    Domain(String),
}

fn usage(msg: impl Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn domain(msg: impl Display) -> CliError {
    CliError::Domain(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // worker count is a throughput knob only; results are per-cell pure
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(msg)) => {
            eprint!("{}", canonical(&json!({ "error": msg })));
            ExitCode::from(1)
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_diffeo(name: &str) -> Result<KanSystem, CliError> {
    match preset(name).map_err(|e| usage(e))? {
        SystemPreset::Diffeo(sys) => Ok(*sys),
        SystemPreset::Endo(_) => Err(domain(format!(
            "'{name}' is a non-invertible preset; this command needs the 3D diffeomorphism"
        ))),
    }
}

fn parse_fraction(s: &str) -> Result<BigRational, CliError> {
    let err = || usage(format!("expected a fraction like 31/32, got '{s}'"));
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let num: BigInt = num.trim().parse().map_err(|_| err())?;
    let den: BigInt = den.trim().parse().map_err(|_| err())?;
    if den == BigInt::from(0) {
        return Err(err());
    }
    Ok(BigRational::new(num, den))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Validate { system, out } => {
            let report = match preset(system).map_err(|e| usage(e))? {
                SystemPreset::Diffeo(sys) => json!({
                    "seed": cli.seed,
                    "system": system,
                    "validation": serde_json::to_value(&sys.validation).unwrap(),
                    "fixed_points": sys.base.fixed_points,
                    "eigenvalues": [sys.base.eigenvalue_u, sys.base.eigenvalue_s],
                    "norm": sys.base.norm,
                    "conorm": sys.base.conorm,
                }),
                SystemPreset::Endo(endo) => json!({
                    "seed": cli.seed,
                    "system": system,
                    "multiplier": endo.multiplier,
                }),
            };
            emit(out, &canonical(&report))
        }

        Cmd::Independence { r, s, out } => {
            let (r, s) = (parse_fraction(r)?, parse_fraction(s)?);
            let verdict = multiplicative_independence(&r, &s).map_err(|e| domain(e))?;
            let word = if verdict.dependent {
                "dependent"
            } else {
                "independent"
            };
            println!("{word}");
            if out.is_some() {
                let report = json!({
                    "seed": cli.seed,
                    "r": r.to_string(),
                    "s": s.to_string(),
                    "dependent": verdict.dependent,
                    "witness": verdict.witness,
                });
                emit(out, &canonical(&report))?;
            }
            Ok(())
        }

        Cmd::Linearize { system, which, out } => {
            let sys = load_diffeo(system)?;
            let map = match which {
                WhichPole::P => sys.phi_p().map_err(|e| domain(e))?.clone(),
                WhichPole::Q => sys
                    .phi_q()
                    .map_err(|e| domain(e))?
                    .inverse()
                    .map_err(|e| domain(e))?,
            };
            let chart = sternberg_linearize(&map, cli.tol).map_err(|e| domain(e))?;
            let report = json!({
                "seed": cli.seed,
                "system": system,
                "which": match which { WhichPole::P => "p", WhichPole::Q => "q" },
                "alpha": chart.alpha,
                "delta": chart.delta,
                "residual": chart.residual,
                "normalization_defect": chart.normalization_defect,
            });
            emit(out, &canonical(&report))
        }

        Cmd::Pairs {
            alpha,
            beta,
            eta,
            eps,
            count,
            max_k,
            out,
        } => {
            for (name, v) in [("alpha", *alpha), ("beta", *beta)] {
                if !(v > 0.0 && v < 1.0) {
                    return Err(usage(format!("--{name} must lie in (0,1), got {v}")));
                }
            }
            if !(*eta > 0.0) || !(*eps > 0.0) {
                return Err(usage("--eta and --eps must be positive"));
            }
            let config = PairSearchConfig { max_k: *max_k };
            let search = diophantine_pairs(*alpha, *beta, *eta, *eps, *count, &config)
                .map_err(|e| domain(e))?;
            let mut text = format!("# seed={}\nk,l,residual,eta_star\n", cli.seed);
            for p in &search.pairs {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    p.k,
                    p.l,
                    fmt17(p.residual),
                    fmt17(p.eta_star)
                ));
            }
            emit(out, &text)
        }

        Cmd::Holonomy {
            system,
            x1,
            x2,
            target_x1,
            target_x2,
            dir,
            grid,
            out,
        } => {
            let sys = load_diffeo(system)?;
            let path = match dir {
                DirArg::Stable => LeafDirection::Stable,
                DirArg::Unstable => LeafDirection::Unstable,
            };
            let holonomy = holonomy_center_map(
                &sys,
                &TorusPoint::new(*x1, *x2),
                &TorusPoint::new(*target_x1, *target_x2),
                path,
                *grid,
                cli.tol,
            )
            .map_err(|e| domain(e))?;
            let report = json!({
                "seed": cli.seed,
                "system": system,
                "source": [x1, x2],
                "target": [target_x1, target_x2],
                "dir": match dir { DirArg::Stable => "stable", DirArg::Unstable => "unstable" },
                "holonomy": serde_json::to_value(&holonomy).unwrap(),
            });
            emit(out, &canonical(&report))
        }

        Cmd::Certify {
            system,
            config,
            out,
        } => {
            let sys = load_diffeo(system)?;
            let (u, v, params) = read_boxes_config(config, cli.tol)?;
            let cert =
                build_certificate(&sys, system, &u, &v, &params).map_err(|e| domain(e))?;
            if !verify_certificate(&sys, &cert) {
                return Err(domain("certificate failed re-verification"));
            }
            emit(out, &canonical(&serde_json::to_value(&cert).unwrap()))
        }

        Cmd::Search {
            system,
            config,
            m_max,
            out,
        } => {
            let sys = load_diffeo(system)?;
            let (u, v, params) = read_boxes_config(config, cli.tol)?;
            let report = match direct_search(&sys, &u, &v, *m_max, params.subdivision_levels) {
                Some((m, z)) => json!({
                    "seed": cli.seed,
                    "found": true,
                    "m": m,
                    "witness": [z.base.x1, z.base.x2, z.t],
                }),
                None => json!({ "seed": cli.seed, "found": false }),
            };
            emit(out, &canonical(&report))
        }

        Cmd::Basins {
            system,
            grid_w,
            grid_h,
            n,
            tau0,
            tau1,
            slice,
            slice_value,
            out,
            csv,
        } => {
            let raster = run_raster(
                system,
                *grid_w,
                *grid_h,
                *n,
                *tau0,
                *tau1,
                *slice,
                *slice_value,
            )?;
            let comments = vec![format!("seed={}", cli.seed), format!("system={system}")];
            fs::write(out, pgm_bytes(&raster, &comments))
                .map_err(|e| usage(format!("{}: {e}", out.display())))?;
            if let Some(csv_path) = csv {
                fs::write(csv_path, csv_string(&raster, &comments))
                    .map_err(|e| usage(format!("{}: {e}", csv_path.display())))?;
            }
            Ok(())
        }

        Cmd::Intermingle {
            system,
            grid_w,
            grid_h,
            n,
            tau0,
            tau1,
            slice,
            slice_value,
            depth,
            out,
        } => {
            let raster = run_raster(
                system,
                *grid_w,
                *grid_h,
                *n,
                *tau0,
                *tau1,
                *slice,
                *slice_value,
            )?;
            let rep = intermingling_report(&raster, *depth).map_err(|e| domain(e))?;
            let total = raster.labels.len() as f64;
            let frac = |target| {
                raster.labels.iter().filter(|&&l| l == target).count() as f64 / total
            };
            let report = json!({
                "seed": cli.seed,
                "system": system,
                "grid": [grid_w, grid_h],
                "n": n,
                "depth": depth,
                "min_fraction": rep.min_fraction,
                "label_fractions": {
                    "basin0": frac(kan_dynamics::basins::BasinLabel::Basin0),
                    "basin1": frac(kan_dynamics::basins::BasinLabel::Basin1),
                    "undecided": frac(kan_dynamics::basins::BasinLabel::Undecided),
                },
                "per_box_fractions": rep.per_box_fractions,
            });
            emit(out, &canonical(&report))
        }
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[allow(clippy::too_many_arguments)]
fn run_raster(
    system: &str,
    grid_w: usize,
    grid_h: usize,
    n: u64,
    tau0: f64,
    tau1: f64,
    slice: SliceArg,
    slice_value: f64,
) -> Result<kan_dynamics::basins::BasinRaster, CliError> {
    let spec = match slice {
        SliceArg::Cylinder => SliceSpec::Cylinder,
        SliceArg::FixedX2 => SliceSpec::FixedX2(slice_value),
        SliceArg::FixedT => SliceSpec::FixedT(slice_value),
    };
    let loaded = preset(system).map_err(|e| usage(e))?;
    let bs = match &loaded {
        SystemPreset::Diffeo(sys) => {
            if matches!(slice, SliceArg::Cylinder) {
                return Err(usage(
                    "the cylinder slice needs an endomorphism preset; pass --slice fixed-x2 or fixed-t",
                ));
            }
            BasinSystem::Diffeo(sys)
        }
        SystemPreset::Endo(endo) => BasinSystem::Endo(endo),
    };
    basin_raster(&bs, grid_w, grid_h, spec, n, tau0, tau1).map_err(|e| domain(e))
}

/// Certify/search box config: `[u]`/`[v]` sections with box geometry and
/// an optional `[params]` section.
fn read_boxes_config(
    path: &PathBuf,
    tol: f64,
) -> Result<(PhaseBox, PhaseBox, CertificateParams), CliError> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let ini = Ini::parse(&text).map_err(usage)?;
    const BOX_KEYS: &[&str] = &["x1", "x2", "half_s", "half_u", "t_lo", "t_hi"];
    ini.check_schema(&[
        ("u", BOX_KEYS),
        ("v", BOX_KEYS),
        (
            "params",
            &["tol", "pair_count", "subdivision_levels", "holonomy_grid", "max_k"],
        ),
    ])
    .map_err(usage)?;

    let read_box = |section: &str| -> Result<PhaseBox, CliError> {
        Ok(PhaseBox::new(
            TorusPoint::new(
                ini.require_f64(section, "x1").map_err(usage)?,
                ini.require_f64(section, "x2").map_err(usage)?,
            ),
            ini.require_f64(section, "half_s").map_err(usage)?,
            ini.require_f64(section, "half_u").map_err(usage)?,
            ini.require_f64(section, "t_lo").map_err(usage)?,
            ini.require_f64(section, "t_hi").map_err(usage)?,
        ))
    };
    let u = read_box("u")?;
    let v = read_box("v")?;

    let mut params = CertificateParams {
        tol,
        ..CertificateParams::default()
    };
    if let Some(t) = ini.get_f64("params", "tol").map_err(usage)? {
        if !(t > 0.0) {
            return Err(usage("[params] tol must be positive"));
        }
        params.tol = t;
    }
    if let Some(c) = ini.get_u64("params", "pair_count").map_err(usage)? {
        params.pair_count = c as usize;
    }
    if let Some(l) = ini.get_u64("params", "subdivision_levels").map_err(usage)? {
        params.subdivision_levels = l as usize;
    }
    if let Some(g) = ini.get_u64("params", "holonomy_grid").map_err(usage)? {
        params.holonomy_grid = (g as usize).max(2);
    }
    if let Some(k) = ini.get_u64("params", "max_k").map_err(usage)? {
        params.pair_budget = PairSearchConfig { max_k: k };
    }
    Ok((u, v, params))
}
