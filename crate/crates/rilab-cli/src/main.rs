//! `rilab` — command-line front end for the random interlacement laboratory.
//!
//! Subcommands: `green`, `capacity`, `sample`, `crossing`, `eta`, `ustar`,
//! `scales`, `verify`, `peierls`, `u1`, `audit`. Parameters resolve from
//! command-line flags first, then from a flat key-value `--config` file,
//! then from documented defaults. Machine outputs are JSON, plot data is
//! CSV, occupancy dumps are binary grids with a JSON sidecar; every
//! artifact embeds the config digest, tool version, and seed.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure,
//! 4 precondition violation.

mod config;
mod emit;
mod fail;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{parse_list, Ctx, Manifest, Resolver, VERSION};
use emit::{csv_document, emit_json, emit_text, write_grid_dump, GridDump, GRID_MAGIC, GRID_STEPS};
use fail::{CliFail, CliResult};

use rilab::bounds::{peierls_condition, u1_threshold, PeierlsVerdict, ThresholdReport};
use rilab::green::{GreenTable, DEFAULT_TOL};
use rilab::lattice::{sub, Coord, FiniteSet, GridBox};
use rilab::percolation::{
    bracket_u_star, estimate_crossing, eta_proxy, CrossingEstimate, CrossingKind, UStarBracket,
};
use rilab::potential::Equilibrium;
use rilab::renorm::{
    track_levels, verify_induction_planar, verify_induction_vacant, InductionReport, LevelTrack,
    ScaleSequence,
};
use rilab::sampler::{default_shell, sample_interlacement, CloudConfig, EscapeMode};

#[derive(Parser)]
#[command(name = "rilab", version, about = "Random interlacement laboratory")]
struct Cli {
    /// Flat key-value configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for trial batches (default: RILAB_THREADS, else all
    /// cores). Results do not depend on the width.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the lattice Green function at a point.
    Green(GreenArgs),
    /// Solve the equilibrium problem of a finite set.
    Capacity(CapacityArgs),
    /// Draw one leveled occupancy sample and dump the grid.
    Sample(SampleArgs),
    /// Estimate crossing probabilities on coupled samples.
    Crossing(CrossingArgs),
    /// Estimate origin-escape probabilities over radii and levels.
    Eta(EtaArgs),
    /// Bracket the percolation threshold by coupled bisection.
    Ustar(UstarArgs),
    /// Build the renormalization scale ladder and track levels along it.
    Scales(ScalesArgs),
    /// Check the induction inequalities against measured crossing data.
    Verify(VerifyArgs),
    /// Contour-counting verdict per dimension.
    Peierls(PeierlsArgs),
    /// Certified coverage threshold for a split dimension.
    #[command(name = "u1")]
    U1(U1Args),
    /// Re-run every emitter on toy inputs and audit the manifests.
    Audit(AuditArgs),
}

#[derive(Args)]
struct GreenArgs {
    /// Lattice dimension (at least 3).
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated integer coordinates, one per dimension.
    #[arg(long)]
    point: Option<String>,
    /// Absolute quadrature tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON line here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    dim: Option<usize>,
    /// Point set: a file (one comma-separated point per line),
    /// `builtin:ball:R`, or `builtin:pair:dx,dy,...`.
    #[arg(long)]
    set: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    dim: Option<usize>,
    /// Window side length; the box is centered at the origin.
    #[arg(long = "box")]
    box_side: Option<u32>,
    /// Largest level to label; the dump quantizes (0, umax].
    #[arg(long)]
    umax: Option<f64>,
    /// Teleport shell radius (default: certified minimum for the window).
    #[arg(long)]
    shell: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Retain per-trajectory paths (recorded in the sidecar).
    #[arg(long = "keep-paths")]
    keep_paths: bool,
    /// Escape handling: `truncate` (certified bias) or `resample` (exact).
    #[arg(long)]
    mode: Option<String>,
    /// Grid dump path; the JSON sidecar appends `.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrossingArgs {
    /// `vacant` (full-dimensional) or `occupied` (planar).
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Base scale of the ladder.
    #[arg(long = "L0")]
    l0: Option<u64>,
    /// Ladder index; the crossing distance is the ladder scale there.
    #[arg(long)]
    level: Option<usize>,
    /// Comma-separated cloud levels.
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EtaArgs {
    /// Comma-separated ball radii for the escape proxy.
    #[arg(long = "M")]
    m: Option<String>,
    /// Comma-separated cloud levels.
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UstarArgs {
    /// Bracket endpoints `a,b` with the proxy straddling the threshold.
    #[arg(long)]
    bracket: Option<String>,
    /// Escape-probability threshold defining the tracked level.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Ball radius of the escape proxy.
    #[arg(long)]
    radius: Option<i64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalesArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "L0")]
    l0: Option<u64>,
    /// Highest ladder index to build (levels 0..=nmax).
    #[arg(long)]
    nmax: Option<usize>,
    /// Starting level for the tracked sequence (enables tracking).
    #[arg(long)]
    u0: Option<f64>,
    /// Sprinkling exponent of the tracked sequence.
    #[arg(long)]
    r: Option<u32>,
    /// Sprinkling constant of the tracked sequence.
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// `vacant` (full-dimensional induction) or `planar` (d >= 7 variant).
    #[arg(long)]
    kind: Option<String>,
    /// CSV of measured crossing probabilities: rows `level,p`.
    #[arg(long)]
    pn: Option<PathBuf>,
    /// Comma-separated named constants, e.g. `c2=2.0,c3=1.0` or
    /// `c5=1.0,c6=2.0`.
    #[arg(long)]
    constants: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "L0")]
    l0: Option<u64>,
    #[arg(long)]
    nmax: Option<usize>,
    /// Starting level of the tracked sequence (vacant kind).
    #[arg(long)]
    u0: Option<f64>,
    /// Sprinkling constant of the tracked sequence (vacant kind).
    #[arg(long)]
    c1: Option<f64>,
    /// Sprinkling exponent (vacant kind).
    #[arg(long)]
    r: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PeierlsArgs {
    #[arg(long)]
    dmin: Option<usize>,
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct U1Args {
    #[arg(long)]
    dim: Option<usize>,
    /// Split size (number of distinguished coordinates).
    #[arg(long)]
    m: Option<usize>,
    /// Exponential tilt the moment bound is evaluated at.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// Keep the audit scratch directory instead of removing it.
    #[arg(long)]
    keep: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let resolver = match Resolver::load(cli.config.as_deref()) {
        Ok(r) => r,
        Err(f) => return report_failure(f),
    };
    match run_command(cli.command, resolver) {
        Ok(_) => ExitCode::SUCCESS,
        Err(f) => report_failure(f),
    }
}

fn report_failure(f: CliFail) -> ExitCode {
    eprintln!("rilab: {f}");
    ExitCode::from(f.exit_code())
}

fn init_threads(cli: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        let width = cli.or_else(|| {
            std::env::var("RILAB_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        });
        if let Some(n) = width {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli;
}

/// Dispatches a fully parsed subcommand; returns the files written.
fn run_command(command: Command, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    match command {
        Command::Green(a) => run_green(a, resolver),
        Command::Capacity(a) => run_capacity(a, resolver),
        Command::Sample(a) => run_sample(a, resolver),
        Command::Crossing(a) => run_crossing(a, resolver),
        Command::Eta(a) => run_eta(a, resolver),
        Command::Ustar(a) => run_ustar(a, resolver),
        Command::Scales(a) => run_scales(a, resolver),
        Command::Verify(a) => run_verify(a, resolver),
        Command::Peierls(a) => run_peierls(a, resolver),
        Command::U1(a) => run_u1(a, resolver),
        Command::Audit(a) => run_audit(a, resolver),
    }
}

fn record_out(ctx: &mut Ctx, out: &Option<PathBuf>) {
    if let Some(path) = out {
        ctx.config.record("out", path.display());
    }
}

fn parse_point(text: &str, dim: usize) -> CliResult<Vec<Coord>> {
    let point: Vec<Coord> = parse_list(text, "point")?;
    if point.len() != dim {
        return Err(CliFail::usage(format!(
            "point has {} coordinates, expected {dim}",
            point.len()
        )));
    }
    Ok(point)
}

fn hex_digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in hash {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

// ---------------------------------------------------------------- green

#[derive(Serialize)]
struct GreenOutput {
    dim: usize,
    point: Vec<Coord>,
    value: f64,
    error: f64,
    manifest: Manifest,
}

fn run_green(args: GreenArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("green", resolver);
    let dim = ctx.need(args.dim, "dim")?;
    let point_text: String = ctx.need(args.point, "point")?;
    let tol = ctx.with_default(args.tol, "tol", DEFAULT_TOL)?;
    ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let point = parse_point(&point_text, dim)?;
    let mut table = GreenTable::new(dim, tol)?;
    let value = table.value(&point)?;
    let output = GreenOutput {
        dim,
        point,
        value,
        error: tol,
        manifest: ctx.config.manifest(),
    };
    emit_json(args.out.as_deref(), &output)
}

// ------------------------------------------------------------- capacity

#[derive(Serialize)]
struct CapacityOutput {
    dim: usize,
    set_size: usize,
    capacity: f64,
    weights: Vec<f64>,
    residual: f64,
    manifest: Manifest,
}

fn parse_set_spec(spec: &str, dim: usize, ctx: &mut Ctx) -> CliResult<FiniteSet> {
    if let Some(rest) = spec.strip_prefix("builtin:") {
        // A builtin spec is its own content, so it enters the digest as-is.
        ctx.config.record("set", spec);
        if let Some(radius) = rest.strip_prefix("ball:") {
            let r: Coord = radius
                .parse()
                .map_err(|e| CliFail::usage(format!("ball radius `{radius}`: {e}")))?;
            return Ok(FiniteSet::cube(dim, r)?);
        }
        if let Some(offsets) = rest.strip_prefix("pair:") {
            let delta = parse_point(offsets, dim)?;
            if delta.iter().all(|&c| c == 0) {
                return Err(CliFail::usage("pair offset must be nonzero"));
            }
            return Ok(FiniteSet::new(dim, vec![vec![0; dim], delta])?);
        }
        return Err(CliFail::usage(format!(
            "unknown builtin set `{rest}` (expected ball:R or pair:dx,dy,...)"
        )));
    }

    let text = std::fs::read_to_string(spec)
        .map_err(|e| CliFail::Io(format!("reading set file {spec}: {e}")))?;
    let mut points = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let point = parse_point(line, dim)
            .map_err(|e| CliFail::usage(format!("{spec} line {}: {e}", number + 1)))?;
        points.push(point);
    }
    let set = FiniteSet::new(dim, points)?;
    // The digest pins the parsed point set rather than the file name or
    // its formatting, so the experiment keeps its identity wherever and
    // however the file is written.
    let rendering: String = set
        .points()
        .iter()
        .map(|p| {
            p.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";");
    ctx.config
        .record("set-content-sha256", hex_digest(rendering.as_bytes()));
    Ok(set)
}

fn run_capacity(args: CapacityArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("capacity", resolver);
    let dim = ctx.need(args.dim, "dim")?;
    let spec: String = ctx.need_unrecorded(args.set, "set")?;
    ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let set = parse_set_spec(&spec, dim, &mut ctx)?;
    let mut green = GreenTable::new(dim, DEFAULT_TOL)?;
    let equilibrium = Equilibrium::compute(&mut green, &set)?;

    // Independent residual of the defining linear system: the weighted
    // Green sum must be one on every point of the set.
    let mut residual = 0.0f64;
    for x in set.points() {
        let mut total = 0.0;
        for (y, w) in equilibrium.support().iter().zip(equilibrium.weights()) {
            total += green.value(&sub(x, y))? * w;
        }
        residual = residual.max((total - 1.0).abs());
    }

    let output = CapacityOutput {
        dim,
        set_size: set.len(),
        capacity: equilibrium.capacity(),
        weights: equilibrium.weights().to_vec(),
        residual,
        manifest: ctx.config.manifest(),
    };
    emit_json(args.out.as_deref(), &output)
}

// --------------------------------------------------------------- sample

#[derive(Serialize)]
struct SampleSidecar {
    dim: usize,
    lo: Vec<Coord>,
    extent: Vec<u32>,
    u_max: f64,
    shell: Coord,
    mode: String,
    keep_paths: bool,
    trajectories: u64,
    window_capacity: f64,
    bias_per_trajectory: f64,
    bias_total: f64,
    total_steps: u64,
    quantization_steps: u32,
    vacant_sentinel: u32,
    grid_file: String,
    manifest: Manifest,
}

fn run_sample(args: SampleArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("sample", resolver);
    let dim = ctx.need(args.dim, "dim")?;
    let side = ctx.need(args.box_side, "box")?;
    let u_max = ctx.need(args.umax, "umax")?;
    let shell_flag = ctx.optional(args.shell, "shell")?;
    let seed = ctx.set_seed(args.seed, "seed")?;
    let keep_paths = ctx.switch(args.keep_paths, "keep-paths")?;
    let mode_name = ctx.with_default(args.mode, "mode", "truncate".to_string())?;
    let out = args.out.unwrap_or_else(|| PathBuf::from("sample.grid"));
    ctx.config.record("out", out.display());

    if side == 0 {
        return Err(CliFail::usage("box side must be positive"));
    }
    let mode = match mode_name.as_str() {
        "truncate" => EscapeMode::Truncate,
        "resample" => EscapeMode::Resample,
        other => {
            return Err(CliFail::usage(format!(
                "unknown mode `{other}` (expected truncate or resample)"
            )))
        }
    };

    let lo = vec![-(side as Coord) / 2; dim];
    let window = GridBox::new(lo.clone(), vec![side; dim])?;
    let shell = shell_flag.unwrap_or_else(|| default_shell(&window));
    let cfg = CloudConfig::new(window.clone(), u_max, seed)
        .with_mode(mode)
        .with_shell(shell)
        .with_paths(keep_paths);
    let mut green = GreenTable::new(dim, DEFAULT_TOL)?;
    let occupancy = sample_interlacement(&mut green, cfg)?;

    let manifest = ctx.config.manifest();
    write_grid_dump(
        &out,
        &manifest,
        &GridDump {
            lo: &lo,
            extent: window.extent(),
            u_max,
            trajectories: occupancy.n_trajectories() as u64,
            bias_bound: occupancy.bias_total(),
            labels: occupancy.labels(),
        },
    )?;
    let sidecar_path = PathBuf::from(format!("{}.json", out.display()));
    let sidecar = SampleSidecar {
        dim,
        lo,
        extent: window.extent().to_vec(),
        u_max,
        shell,
        mode: mode_name,
        keep_paths,
        trajectories: occupancy.n_trajectories() as u64,
        window_capacity: occupancy.capacity(),
        bias_per_trajectory: occupancy.bias_per_trajectory(),
        bias_total: occupancy.bias_total(),
        total_steps: occupancy.total_steps(),
        quantization_steps: GRID_STEPS,
        vacant_sentinel: emit::GRID_VACANT,
        grid_file: out.display().to_string(),
        manifest,
    };
    let mut written = emit_json(Some(&sidecar_path), &sidecar)?;
    written.insert(0, out);
    Ok(written)
}

// ----------------------------------------------------- crossing and eta

fn crossing_csv(
    manifest: &Manifest,
    level_of: impl Fn(&CrossingEstimate) -> String,
    rows: &[CrossingEstimate],
) -> String {
    csv_document(
        manifest,
        "u,level,trials,successes,lo95,hi95",
        rows,
        |est, line| {
            line.push_str(&format!(
                "{},{},{},{},{},{}",
                est.u,
                level_of(est),
                est.trials,
                est.successes,
                est.lo95,
                est.hi95
            ));
        },
    )
}

fn run_crossing(args: CrossingArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("crossing", resolver);
    let kind_name: String = ctx.need(args.kind, "kind")?;
    let dim = ctx.need(args.dim, "dim")?;
    let l0 = ctx.need(args.l0, "L0")?;
    let level = ctx.need(args.level, "level")?;
    let u_text: String = ctx.need(args.u, "u")?;
    let trials = ctx.need(args.trials, "trials")?;
    let seed = ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let kind = match kind_name.as_str() {
        "vacant" => CrossingKind::Vacant,
        "occupied" => CrossingKind::OccupiedPlanar,
        other => {
            return Err(CliFail::usage(format!(
                "unknown kind `{other}` (expected vacant or occupied)"
            )))
        }
    };
    let u_list: Vec<f64> = parse_list(&u_text, "u")?;

    // The crossing distance at ladder index `level` is the ladder scale.
    let ladder = ScaleSequence::new(dim, l0, level)?;
    let scale: u64 = ladder.scale(level).try_into().map_err(|_| {
        rilab::Error::precondition(format!(
            "ladder scale at level {level} does not fit a machine word"
        ))
    })?;
    let rows = estimate_crossing(
        &mut GreenTable::new(dim, DEFAULT_TOL)?,
        kind,
        dim,
        scale as Coord,
        &u_list,
        trials,
        seed,
    )?;

    let text = crossing_csv(&ctx.config.manifest(), |_| level.to_string(), &rows);
    emit_text(args.out.as_deref(), &text)
}

fn run_eta(args: EtaArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("eta", resolver);
    let m_text: String = ctx.need(args.m, "M")?;
    let u_text: String = ctx.need(args.u, "u")?;
    let dim = ctx.need(args.dim, "dim")?;
    let trials = ctx.need(args.trials, "trials")?;
    let seed = ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let m_list: Vec<Coord> = parse_list(&m_text, "M")?;
    let u_list: Vec<f64> = parse_list(&u_text, "u")?;
    let rows = eta_proxy(
        &mut GreenTable::new(dim, DEFAULT_TOL)?,
        dim,
        &u_list,
        &m_list,
        trials,
        seed,
    )?;

    // The level column carries the ball radius of the row.
    let text = crossing_csv(&ctx.config.manifest(), |est| est.scale.to_string(), &rows);
    emit_text(args.out.as_deref(), &text)
}

// ---------------------------------------------------------------- ustar

#[derive(Serialize)]
struct UstarOutput {
    bracket: UStarBracket,
    manifest: Manifest,
}

fn run_ustar(args: UstarArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("ustar", resolver);
    let bracket_text: String = ctx.need(args.bracket, "bracket")?;
    let threshold = ctx.need(args.threshold, "threshold")?;
    let dim = ctx.need(args.dim, "dim")?;
    let radius = ctx.need(args.radius, "radius")?;
    let trials = ctx.with_default(args.trials, "trials", 200)?;
    let iterations = ctx.with_default(args.iterations, "iterations", 6)?;
    let seed = ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let ends: Vec<f64> = parse_list(&bracket_text, "bracket")?;
    if ends.len() != 2 {
        return Err(CliFail::usage("bracket needs exactly two endpoints a,b"));
    }
    let bracket = bracket_u_star(
        &mut GreenTable::new(dim, DEFAULT_TOL)?,
        dim,
        radius,
        ends[0],
        ends[1],
        threshold,
        trials,
        iterations,
        seed,
    )?;
    let output = UstarOutput {
        bracket,
        manifest: ctx.config.manifest(),
    };
    emit_json(args.out.as_deref(), &output)
}

// --------------------------------------------------------------- scales

#[derive(Serialize)]
struct ScalesOutput {
    dim: usize,
    growth_exponent: f64,
    scales: Vec<String>,
    ratios: Vec<String>,
    growth_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    track: Option<LevelTrack>,
    manifest: Manifest,
}

fn run_scales(args: ScalesArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("scales", resolver);
    let dim = ctx.need(args.dim, "dim")?;
    let l0 = ctx.need(args.l0, "L0")?;
    let nmax = ctx.need(args.nmax, "nmax")?;
    let u0 = ctx.optional(args.u0, "u0")?;
    let r = ctx.optional(args.r, "r")?;
    let c1 = ctx.optional(args.c1, "c1")?;
    ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let ladder = ScaleSequence::new(dim, l0, nmax)?;
    let track = match (u0, r, c1) {
        (None, None, None) => None,
        (Some(u0), Some(r), Some(c1)) => Some(track_levels(&ladder, u0, c1, r)?),
        _ => {
            return Err(CliFail::usage(
                "level tracking needs all of --u0, --r, --c1",
            ))
        }
    };
    let output = ScalesOutput {
        dim,
        growth_exponent: ladder.growth_exponent(),
        scales: (0..ladder.len())
            .map(|n| ladder.scale(n).to_string())
            .collect(),
        ratios: (0..ladder.len())
            .map(|n| ladder.ratio(n).to_string())
            .collect(),
        growth_verified: ladder.verify_growth(),
        track,
        manifest: ctx.config.manifest(),
    };
    emit_json(args.out.as_deref(), &output)
}

// --------------------------------------------------------------- verify

#[derive(Serialize)]
struct VerifyOutput {
    kind: String,
    report: InductionReport,
    manifest: Manifest,
}

fn parse_constants(text: &str) -> CliResult<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for part in text.split(',') {
        let part = part.trim();
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| CliFail::usage(format!("constant `{part}` is not name=value")))?;
        let parsed: f64 = value
            .trim()
            .parse()
            .map_err(|e| CliFail::usage(format!("constant `{name}`: {e}")))?;
        map.insert(name.trim().to_string(), parsed);
    }
    Ok(map)
}

fn constant(map: &BTreeMap<String, f64>, name: &str) -> CliResult<f64> {
    map.get(name)
        .copied()
        .ok_or_else(|| CliFail::usage(format!("missing constant `{name}` in --constants")))
}

/// Reads measured crossing probabilities: CSV rows `level,p`, `#` comments
/// and a non-numeric header line allowed.
fn read_measured(path: &Path) -> CliResult<Vec<(usize, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliFail::Io(format!("reading {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let level = fields.next().unwrap_or("").trim();
        let p = fields.next().unwrap_or("").trim();
        let Ok(level) = level.parse::<usize>() else {
            if rows.is_empty() {
                continue; // header line
            }
            return Err(CliFail::usage(format!(
                "{} line {}: bad level `{level}`",
                path.display(),
                number + 1
            )));
        };
        let p: f64 = p
            .parse()
            .map_err(|e| CliFail::usage(format!("{} line {}: {e}", path.display(), number + 1)))?;
        rows.push((level, p));
    }
    if rows.is_empty() {
        return Err(CliFail::usage(format!(
            "{} contains no measurements",
            path.display()
        )));
    }
    Ok(rows)
}

fn run_verify(args: VerifyArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("verify", resolver);
    let kind: String = ctx.need(args.kind, "kind")?;
    let pn: PathBuf = args.pn.map(Ok).unwrap_or_else(|| {
        ctx.resolver.merge(None::<String>, "pn").and_then(|v| {
            v.map(PathBuf::from)
                .ok_or_else(|| CliFail::usage("missing required parameter --pn"))
        })
    })?;
    let constants_text: String = ctx.need(args.constants, "constants")?;
    let dim = ctx.need(args.dim, "dim")?;
    let l0 = ctx.need(args.l0, "L0")?;
    let nmax = ctx.need(args.nmax, "nmax")?;
    ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let measured = read_measured(&pn)?;
    let measured_text: String = measured
        .iter()
        .map(|(n, p)| format!("{n}:{p}"))
        .collect::<Vec<_>>()
        .join(",");
    ctx.config.record("pn-content", measured_text);
    let constants = parse_constants(&constants_text)?;
    ctx.config.record("constants", &constants_text);

    let ladder = ScaleSequence::new(dim, l0, nmax)?;
    let report = match kind.as_str() {
        "vacant" => {
            let u0 = ctx.need(args.u0, "u0")?;
            let c1 = ctx.need(args.c1, "c1")?;
            let r = ctx.need(args.r, "r")?;
            let c2 = constant(&constants, "c2")?;
            let c3 = constant(&constants, "c3")?;
            let track = track_levels(&ladder, u0, c1, r)?;
            verify_induction_vacant(&ladder, &track, r, c2, c3, &measured)?
        }
        "planar" => {
            let c5 = constant(&constants, "c5")?;
            let c6 = constant(&constants, "c6")?;
            verify_induction_planar(&ladder, c5, c6, &measured)?
        }
        other => {
            return Err(CliFail::usage(format!(
                "unknown kind `{other}` (expected vacant or planar)"
            )))
        }
    };
    let output = VerifyOutput {
        kind,
        report,
        manifest: ctx.config.manifest(),
    };
    emit_json(args.out.as_deref(), &output)
}

// -------------------------------------------------------------- peierls

fn run_peierls(args: PeierlsArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("peierls", resolver);
    let dmin = ctx.with_default(args.dmin, "dmin", 5)?;
    let dmax = ctx.with_default(args.dmax, "dmax", 24)?;
    ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    if dmin > dmax {
        return Err(CliFail::usage(format!("dmin {dmin} exceeds dmax {dmax}")));
    }
    let mut verdicts: Vec<PeierlsVerdict> = Vec::new();
    for d in dmin..=dmax {
        verdicts.push(peierls_condition(d)?);
    }
    let text = csv_document(
        &ctx.config.manifest(),
        "d,value,holds",
        &verdicts,
        |v, line| {
            line.push_str(&format!("{},{},{}", v.dim, v.value, v.holds));
        },
    );
    emit_text(args.out.as_deref(), &text)
}

// ------------------------------------------------------------------- u1

#[derive(Serialize)]
struct U1Output {
    report: ThresholdReport,
    manifest: Manifest,
}

fn run_u1(args: U1Args, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("u1", resolver);
    let dim = ctx.need(args.dim, "dim")?;
    let m = ctx.need(args.m, "m")?;
    let lambda = ctx.need(args.lambda, "lambda")?;
    ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let report = u1_threshold(dim, m, lambda)?;
    let output = U1Output {
        report,
        manifest: ctx.config.manifest(),
    };
    emit_json(args.out.as_deref(), &output)
}

// ---------------------------------------------------------------- audit

#[derive(Serialize)]
struct AuditCheck {
    file: String,
    ok: bool,
    detail: String,
}

#[derive(Serialize)]
struct AuditOutput {
    ok: bool,
    checks: Vec<AuditCheck>,
    manifest: Manifest,
}

fn is_hex64(s: &str) -> bool {
    s.len() == 64
        && s.chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}

fn check_json_manifest(path: &Path) -> (bool, String) {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return (false, format!("unreadable: {e}")),
    };
    let value: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return (false, format!("not JSON: {e}")),
    };
    let Some(manifest) = value.get("manifest") else {
        return (false, "no manifest object".to_string());
    };
    let digest = manifest
        .get("digest")
        .and_then(|d| d.as_str())
        .unwrap_or("");
    if !is_hex64(digest) {
        return (false, "digest missing or malformed".to_string());
    }
    if manifest.get("version").and_then(|v| v.as_str()) != Some(VERSION) {
        return (false, "version missing or wrong".to_string());
    }
    if manifest.get("seed").and_then(|s| s.as_u64()).is_none() {
        return (false, "seed missing".to_string());
    }
    (true, "manifest complete".to_string())
}

fn check_csv_manifest(path: &Path) -> (bool, String) {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return (false, format!("unreadable: {e}")),
    };
    let mut lines = text.lines();
    let digest_ok = lines
        .next()
        .and_then(|l| l.strip_prefix("# digest: "))
        .map(is_hex64)
        .unwrap_or(false);
    if !digest_ok {
        return (false, "digest comment missing or malformed".to_string());
    }
    let version_ok = lines
        .next()
        .and_then(|l| l.strip_prefix("# version: "))
        .map(|v| v == VERSION)
        .unwrap_or(false);
    if !version_ok {
        return (false, "version comment missing or wrong".to_string());
    }
    let seed_ok = lines
        .next()
        .and_then(|l| l.strip_prefix("# seed: "))
        .map(|s| s.parse::<u64>().is_ok())
        .unwrap_or(false);
    if !seed_ok {
        return (false, "seed comment missing or malformed".to_string());
    }
    (true, "manifest complete".to_string())
}

/// Validates the binary header and cross-checks the digest against the
/// JSON sidecar.
fn check_grid_manifest(grid: &Path, sidecar: &Path) -> (bool, String) {
    let bytes = match std::fs::read(grid) {
        Ok(b) => b,
        Err(e) => return (false, format!("unreadable: {e}")),
    };
    if bytes.len() < 8 || &bytes[..8] != GRID_MAGIC {
        return (false, "bad magic".to_string());
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut offset = 12;
    let mut sites: u64 = 1;
    for _ in 0..dim {
        if bytes.len() < offset + 12 {
            return (false, "truncated axis table".to_string());
        }
        let extent = u32::from_le_bytes(bytes[offset + 8..offset + 12].try_into().unwrap()) as u64;
        sites = sites.saturating_mul(extent);
        offset += 12;
    }
    // u_max, trajectory count, bias bound, seed.
    offset += 8 + 8 + 8 + 8;
    if bytes.len() < offset + 64 + 16 {
        return (false, "truncated header".to_string());
    }
    let digest = match std::str::from_utf8(&bytes[offset..offset + 64]) {
        Ok(d) => d,
        Err(_) => return (false, "digest not ASCII".to_string()),
    };
    if !is_hex64(digest) {
        return (false, "digest malformed".to_string());
    }
    let version = match std::str::from_utf8(&bytes[offset + 64..offset + 80]) {
        Ok(v) => v.trim_end(),
        Err(_) => return (false, "version not ASCII".to_string()),
    };
    if version != VERSION {
        return (false, "version wrong".to_string());
    }
    let payload = bytes.len() - offset - 80;
    if payload as u64 != 4 * sites {
        return (false, format!("payload {payload} bytes for {sites} sites"));
    }
    let sidecar_text = match std::fs::read_to_string(sidecar) {
        Ok(t) => t,
        Err(e) => return (false, format!("sidecar unreadable: {e}")),
    };
    let sidecar_digest = serde_json::from_str::<serde_json::Value>(&sidecar_text)
        .ok()
        .and_then(|v| {
            v.get("manifest")?
                .get("digest")?
                .as_str()
                .map(|s| s.to_string())
        })
        .unwrap_or_default();
    if sidecar_digest != digest {
        return (false, "sidecar digest differs from header".to_string());
    }
    (true, "manifest complete".to_string())
}

fn run_audit(args: AuditArgs, resolver: Resolver) -> CliResult<Vec<PathBuf>> {
    let mut ctx = Ctx::new("audit", resolver);
    let keep = ctx.switch(args.keep, "keep")?;
    ctx.set_seed(args.seed, "seed")?;
    record_out(&mut ctx, &args.out);

    let dir = std::env::temp_dir().join(format!("rilab-audit-{}", std::process::id()));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliFail::Io(format!("creating {}: {e}", dir.display())))?;
    let path = |name: &str| dir.join(name);

    let pn = path("pn.csv");
    std::fs::write(&pn, "level,p\n0,1e-9\n1,0\n")
        .map_err(|e| CliFail::Io(format!("writing {}: {e}", pn.display())))?;

    // One toy invocation per emitter, all writing into the scratch
    // directory. Each uses an empty resolver: parameters are spelled out.
    let jobs: Vec<(String, Command)> = vec![
        (
            "green.json".into(),
            Command::Green(GreenArgs {
                dim: Some(3),
                point: Some("1,0,0".into()),
                tol: None,
                seed: Some(1),
                out: Some(path("green.json")),
            }),
        ),
        (
            "capacity.json".into(),
            Command::Capacity(CapacityArgs {
                dim: Some(3),
                set: Some("builtin:pair:2,1,0".into()),
                seed: Some(2),
                out: Some(path("capacity.json")),
            }),
        ),
        (
            "sample.grid".into(),
            Command::Sample(SampleArgs {
                dim: Some(3),
                box_side: Some(5),
                umax: Some(1.0),
                shell: None,
                seed: Some(3),
                keep_paths: false,
                mode: None,
                out: Some(path("sample.grid")),
            }),
        ),
        (
            "crossing.csv".into(),
            Command::Crossing(CrossingArgs {
                kind: Some("vacant".into()),
                dim: Some(3),
                l0: Some(2),
                level: Some(0),
                u: Some("0.5,2.0".into()),
                trials: Some(40),
                seed: Some(4),
                out: Some(path("crossing.csv")),
            }),
        ),
        (
            "eta.csv".into(),
            Command::Eta(EtaArgs {
                m: Some("2,4".into()),
                u: Some("0.5,2.0".into()),
                dim: Some(3),
                trials: Some(40),
                seed: Some(5),
                out: Some(path("eta.csv")),
            }),
        ),
        (
            "ustar.json".into(),
            Command::Ustar(UstarArgs {
                bracket: Some("0.2,6.0".into()),
                threshold: Some(0.5),
                dim: Some(3),
                radius: Some(3),
                trials: Some(60),
                iterations: Some(2),
                seed: Some(6),
                out: Some(path("ustar.json")),
            }),
        ),
        (
            "scales.json".into(),
            Command::Scales(ScalesArgs {
                dim: Some(3),
                l0: Some(10),
                nmax: Some(3),
                u0: Some(1.0),
                r: Some(500),
                c1: Some(1.0),
                seed: Some(7),
                out: Some(path("scales.json")),
            }),
        ),
        (
            "verify.json".into(),
            Command::Verify(VerifyArgs {
                kind: Some("planar".into()),
                pn: Some(pn.clone()),
                constants: Some("c5=1.0,c6=2.0".into()),
                dim: Some(7),
                l0: Some(1_000_000),
                nmax: Some(2),
                u0: None,
                c1: None,
                r: None,
                seed: Some(8),
                out: Some(path("verify.json")),
            }),
        ),
        (
            "peierls.csv".into(),
            Command::Peierls(PeierlsArgs {
                dmin: Some(16),
                dmax: Some(19),
                seed: Some(9),
                out: Some(path("peierls.csv")),
            }),
        ),
        (
            "u1.json".into(),
            Command::U1(U1Args {
                dim: Some(5),
                m: Some(1),
                lambda: Some(0.5),
                seed: Some(10),
                out: Some(path("u1.json")),
            }),
        ),
    ];

    let mut checks: Vec<AuditCheck> = Vec::new();
    for (name, job) in jobs {
        match run_command(job, Resolver::load(None)?) {
            Err(e) => checks.push(AuditCheck {
                file: name,
                ok: false,
                detail: format!("emitter failed: {e}"),
            }),
            Ok(_) => {
                let full = path(&name);
                let (ok, detail) = if name.ends_with(".json") {
                    check_json_manifest(&full)
                } else if name.ends_with(".csv") {
                    check_csv_manifest(&full)
                } else {
                    let sidecar = path(&format!("{name}.json"));
                    let mut result = check_grid_manifest(&full, &sidecar);
                    if result.0 {
                        result = check_json_manifest(&sidecar);
                    }
                    result
                };
                checks.push(AuditCheck {
                    file: name,
                    ok,
                    detail,
                });
            }
        }
    }

    if !keep {
        let _ = std::fs::remove_dir_all(&dir);
    }

    let all_ok = checks.iter().all(|c| c.ok);
    let output = AuditOutput {
        ok: all_ok,
        checks,
        manifest: ctx.config.manifest(),
    };
    let written = emit_json(args.out.as_deref(), &output)?;
    if !all_ok {
        return Err(rilab::Error::precondition("audit found incomplete manifests").into());
    }
    Ok(written)
}
