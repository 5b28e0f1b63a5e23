//! `rbmtfi`: exact energies, RBM optimization, thermal scans and figure
//! reproduction for the transverse-field Ising chain.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rbm_tfi::analysis::{
    exact_energy, gamma_scan, gamma_seed, max_adjacent_drop, tail_csv, GammaPoint, TailReport,
};
use rbm_tfi::exact::{ed_ground_state, free_fermion_energy};
use rbm_tfi::io::{fmt_f64, Cell, CsvTable};
use rbm_tfi::run::{linear_grid, parse_list, KeyValues, OutputDir, RunManifest, MANIFEST_NAME};
use rbm_tfi::seeds::derive_seed;
use rbm_tfi::sr::{optimize, OptTrace, SrConfig};
use rbm_tfi::thermo::{
    default_grid, peak, scan_csv, temperature_scan, with_unit_temperature, ScanRow, Temperature,
    ThermalUpdate,
};
use rbm_tfi::vmc::{estimate, SamplerConfig};
use rbm_tfi::{Error, RbmParams, Result, TfiParams};

#[derive(Parser)]
#[command(name = "rbmtfi", version, about)]
struct Cli {
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true, env = "RBMTFI_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exact ground-state energy.
    Exact(ExactArgs),
    /// Optimize an RBM at one (L, gamma) and write its parameters and trace.
    Optimize(OptimizeArgs),
    /// Temperature scan of the classical RBM defined by a parameter snapshot.
    Thermo(ThermoArgs),
    /// Optimize over a gamma grid for several L and analyze the coupling tails.
    Scan(ScanArgs),
    /// Regenerate the data behind one figure.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ed,
    Fermion,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long = "L")]
    len: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "ed")]
    method: Method,
}

/// Optimizer and sampler settings; each flag overrides the config-file key
/// of the same name.
#[derive(Args, Default)]
struct OptFlags {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda_abs: Option<f64>,
    #[arg(long)]
    lambda_rel: Option<f64>,
    #[arg(long)]
    n_iters: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Final fraction of iterations averaged into the returned W.
    #[arg(long)]
    average_fraction: Option<f64>,
    #[arg(long)]
    n_sweeps: Option<usize>,
    #[arg(long)]
    n_burnin: Option<usize>,
    #[arg(long)]
    n_chains: Option<usize>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    opt: OptFlags,
    #[arg(long = "L")]
    len: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ThermoArgs {
    /// Parameter snapshot written by `optimize` or `scan`.
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Transverse field recorded in the CSV; read from the snapshot's manifest if omitted.
    #[arg(long)]
    gamma: Option<f64>,
    /// Explicit temperatures, comma separated (T=1 is always added).
    #[arg(long, conflicts_with_all = ["t_min", "t_max", "t_step"])]
    temps: Option<String>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    n_sweeps: usize,
    #[arg(long, default_value_t = 1_000)]
    n_burnin: usize,
    #[arg(long, default_value_t = 4)]
    n_chains: usize,
    /// Layer-wise heat-bath updates instead of single-spin Metropolis.
    #[arg(long)]
    heat_bath: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    opt: OptFlags,
    /// System sizes, comma separated.
    #[arg(long = "L")]
    lens: String,
    /// Explicit gamma values, comma separated.
    #[arg(long, conflicts_with_all = ["gamma_min", "gamma_max", "gamma_step"])]
    gammas: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    gamma_min: f64,
    #[arg(long, default_value_t = 1.5)]
    gamma_max: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma_step: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Scale {
    Desk,
    Paper,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    figure: Figure,
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Acknowledge that a paper-scale run takes hours.
    #[arg(long)]
    confirm: bool,
    #[arg(long)]
    force: bool,
}

const OPT_KEYS: &[&str] = &[
    "L",
    "gamma",
    "seed",
    "eta",
    "lambda_abs",
    "lambda_rel",
    "n_iters",
    "init_scale",
    "snapshot_every",
    "average_fraction",
    "n_sweeps",
    "n_burnin",
    "n_chains",
];

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match cli.command {
        Command::Exact(a) => cmd_exact(&a),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Thermo(a) => cmd_thermo(&a),
        Command::Scan(a) => cmd_scan(&a),
        Command::Reproduce(a) => cmd_reproduce(&a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn cmd_exact(a: &ExactArgs) -> Result<bool> {
    let tfi = TfiParams::new(a.gamma)?;
    let energy = match a.method {
        Method::Fermion => free_fermion_energy(a.len, tfi)
            .map_err(|e| hint(e, "use --method ed for odd L (L <= 14)"))?,
        Method::Ed => {
            ed_ground_state(a.len, tfi)
                .map_err(|e| hint(e, "use --method fermion for large even L"))?
                .ground_energy
        }
    };
    println!("{}", fmt_f64(energy));
    Ok(true)
}

fn hint(e: Error, text: &str) -> Error {
    match e {
        Error::Capability(m) => Error::Capability(format!("{m}; {text}")),
        other => other,
    }
}

/// Reads `--config`, applies flag overrides, and rejects unknown keys.
fn load_config(opt: &OptFlags, extra: &[(&str, Option<String>)]) -> Result<KeyValues> {
    let mut kv = match &opt.config {
        Some(path) => KeyValues::read(path)?,
        None => KeyValues::new("command line"),
    };
    let flags: [(&str, Option<String>); 11] = [
        ("seed", opt.seed.map(|v| v.to_string())),
        ("eta", opt.eta.map(|v| v.to_string())),
        ("lambda_abs", opt.lambda_abs.map(|v| v.to_string())),
        ("lambda_rel", opt.lambda_rel.map(|v| v.to_string())),
        ("n_iters", opt.n_iters.map(|v| v.to_string())),
        ("init_scale", opt.init_scale.map(|v| v.to_string())),
        ("snapshot_every", opt.snapshot_every.map(|v| v.to_string())),
        (
            "average_fraction",
            opt.average_fraction.map(|v| v.to_string()),
        ),
        ("n_sweeps", opt.n_sweeps.map(|v| v.to_string())),
        ("n_burnin", opt.n_burnin.map(|v| v.to_string())),
        ("n_chains", opt.n_chains.map(|v| v.to_string())),
    ];
    for (key, value) in flags.iter().chain(extra) {
        if let Some(v) = value {
            kv.set(key, v);
        }
    }
    kv.check_known(OPT_KEYS)?;
    Ok(kv)
}

/// Optimizer and sampler settings with every default materialized.
fn resolve_budget(kv: &KeyValues, seed: u64) -> Result<(SrConfig, SamplerConfig)> {
    let d = SrConfig::with_seed(seed);
    let sr = SrConfig {
        eta: kv.get_or("eta", d.eta)?,
        lambda_abs: kv.get_or("lambda_abs", d.lambda_abs)?,
        lambda_rel: kv.get_or("lambda_rel", d.lambda_rel)?,
        n_iters: kv.get_or("n_iters", d.n_iters)?,
        init_scale: kv.get_or("init_scale", d.init_scale)?,
        snapshot_every: kv.get_or("snapshot_every", d.snapshot_every)?,
        average_fraction: kv.get_or("average_fraction", d.average_fraction)?,
        seed,
    };
    sr.validate()?;
    let s = SamplerConfig::with_seed(seed);
    let sampler = SamplerConfig::new(
        kv.get_or("n_sweeps", s.n_sweeps)?,
        kv.get_or("n_burnin", s.n_burnin)?,
        kv.get_or("n_chains", s.n_chains)?,
        seed,
    )?;
    Ok((sr, sampler))
}

fn record_budget(m: &mut RunManifest, sr: &SrConfig, sampler: &SamplerConfig) {
    m.config("eta", sr.eta)
        .config("lambda_abs", sr.lambda_abs)
        .config("lambda_rel", sr.lambda_rel)
        .config("n_iters", sr.n_iters)
        .config("init_scale", sr.init_scale)
        .config("snapshot_every", sr.snapshot_every)
        .config("average_fraction", sr.average_fraction)
        .config("n_sweeps", sampler.n_sweeps)
        .config("n_burnin", sampler.n_burnin)
        .config("n_chains", sampler.n_chains)
        .config("sweep", "L single-flip proposals + global inversion");
}

fn snapshots_csv(trace: &OptTrace) -> CsvTable {
    let mut t = CsvTable::new(&["iter", "d", "W_d"]);
    for (iter, w) in &trace.snapshots {
        for (d, x) in w.iter().enumerate() {
            t.push(vec![Cell::from(*iter), Cell::from(d), Cell::from(*x)]);
        }
    }
    t
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<bool> {
    let kv = load_config(
        &a.opt,
        &[
            ("L", a.len.map(|v| v.to_string())),
            ("gamma", a.gamma.map(|v| v.to_string())),
        ],
    )?;
    let len: usize = kv.require("L")?;
    let gamma: f64 = kv.require("gamma")?;
    let seed: u64 = kv.require("seed")?;
    let tfi = TfiParams::new(gamma)?;
    let (sr, sampler) = resolve_budget(&kv, seed)?;
    let mut out = OutputDir::prepare(&a.out, a.force)?;
    let mut manifest = RunManifest::new("optimize", seed);
    manifest.config("L", len).config("gamma", gamma);
    record_budget(&mut manifest, &sr, &sampler);
    manifest.config("sampler_seed", derive_seed(seed, 1));
    manifest.config("evaluation_seed", derive_seed(seed, 2));

    let clock = Instant::now();
    let opt_sampler = SamplerConfig {
        seed: derive_seed(seed, 1),
        ..sampler.clone()
    };
    let (params, trace) = optimize(len, tfi, &sr, &opt_sampler)?;
    let eval = SamplerConfig {
        seed: derive_seed(seed, 2),
        ..sampler
    };
    let energy = estimate(&params, tfi, &eval)?.energy;
    manifest
        .result("energy", fmt_f64(energy.mean))
        .result("energy_err", fmt_f64(energy.stderr));
    match exact_energy(len, tfi) {
        Ok(exact) => {
            let rel = ((energy.mean - exact) / exact).abs();
            manifest
                .result("exact_energy", fmt_f64(exact))
                .result("rel_error", fmt_f64(rel));
            eprintln!(
                "L={len} gamma={gamma}: E = {:.8} ± {:.1e}, exact {exact:.8}, rel. error {rel:.2e}",
                energy.mean, energy.stderr
            );
        }
        Err(e) => eprintln!("no exact reference: {e}"),
    }
    match TailReport::new(gamma, &params) {
        Ok(report) => {
            manifest
                .result("w_tail", fmt_f64(report.w_tail))
                .result("w_tail_L", fmt_f64(report.w_tail_times_l))
                .result("origin_index", report.origin_index);
            out.add("profile.csv", report.profile_csv().render());
        }
        Err(e) => eprintln!("no tail analysis: {e}"),
    }
    manifest.result("seconds", format!("{:.1}", clock.elapsed().as_secs_f64()));
    out.add("params.txt", params.to_snapshot_string());
    out.add("trace.csv", trace.to_csv().render());
    out.add("snapshots.csv", snapshots_csv(&trace).render());
    out.commit(manifest)?;
    Ok(true)
}

fn thermal_grid(a: &ThermoArgs) -> Result<Vec<Temperature>> {
    let ts = match (&a.temps, a.t_min, a.t_max, a.t_step) {
        (Some(list), ..) => parse_list::<f64>(list, "temperature")?,
        (None, None, None, None) => return Ok(default_grid()),
        (None, lo, hi, step) => {
            linear_grid(lo.unwrap_or(0.2), hi.unwrap_or(4.0), step.unwrap_or(0.1))?
        }
    };
    let mut grid = ts
        .into_iter()
        .map(Temperature::new)
        .collect::<Result<Vec<_>>>()?;
    grid.sort_by(|x, y| x.t().total_cmp(&y.t()));
    grid.dedup();
    Ok(with_unit_temperature(grid))
}

/// Looks for `config.gamma` in a manifest next to the snapshot.
fn sibling_gamma(snapshot: &Path) -> Option<f64> {
    let manifest = snapshot.parent()?.join(MANIFEST_NAME);
    let kv = KeyValues::read(&manifest).ok()?;
    kv.get::<f64>("config.gamma").ok().flatten()
}

fn update_name(update: ThermalUpdate) -> &'static str {
    match update {
        ThermalUpdate::Metropolis => "metropolis",
        ThermalUpdate::HeatBath => "heat-bath",
    }
}

/// Runs a scan and returns the successful rows; failures are reported.
fn run_thermo(
    params: &RbmParams,
    grid: &[Temperature],
    config: &SamplerConfig,
    update: ThermalUpdate,
    label: &str,
) -> Result<(Vec<ScanRow>, bool)> {
    let mut rows = Vec::with_capacity(grid.len());
    let mut complete = true;
    for point in temperature_scan(params, grid, config, update)? {
        match point.result {
            Ok(row) => rows.push(row),
            Err(e) => {
                complete = false;
                eprintln!("{label} T={}: {e}", point.temperature.t());
            }
        }
    }
    Ok((rows, complete))
}

fn record_thermal(
    m: &mut RunManifest,
    grid: &[Temperature],
    config: &SamplerConfig,
    update: ThermalUpdate,
) {
    let ts: Vec<String> = grid.iter().map(|t| t.t().to_string()).collect();
    m.config("temperatures", ts.join(","))
        .config("thermal_n_sweeps", config.n_sweeps)
        .config("thermal_n_burnin", config.n_burnin)
        .config("thermal_n_chains", config.n_chains)
        .config("thermal_update", update_name(update))
        .config("thermal_sweep", "2L single-spin proposals")
        .config("per_site_divisor", "2L");
}

fn cmd_thermo(a: &ThermoArgs) -> Result<bool> {
    let params = RbmParams::read_snapshot(&a.snapshot)?;
    let gamma = a
        .gamma
        .or_else(|| sibling_gamma(&a.snapshot))
        .ok_or_else(|| {
            Error::Config(format!(
            "no gamma for {}: pass --gamma (no manifest with config.gamma next to the snapshot)",
            a.snapshot.display()
        ))
        })?;
    let grid = thermal_grid(a)?;
    let config = SamplerConfig::new(a.n_sweeps, a.n_burnin, a.n_chains, a.seed)?;
    let update = if a.heat_bath {
        ThermalUpdate::HeatBath
    } else {
        ThermalUpdate::Metropolis
    };
    let mut out = OutputDir::prepare(&a.out, a.force)?;
    let mut manifest = RunManifest::new("thermo", a.seed);
    manifest
        .config("snapshot", a.snapshot.display())
        .config("L", params.len())
        .config("gamma", gamma);
    record_thermal(&mut manifest, &grid, &config, update);
    let (rows, complete) = run_thermo(&params, &grid, &config, update, "thermo")?;
    if let Some((_, row)) = peak(&rows) {
        manifest
            .result("peak_T", row.t)
            .result("peak_c_per_site", fmt_f64(row.c_per_site));
    }
    manifest.result("complete", complete);
    out.add("thermo.csv", scan_csv(gamma, params.len(), &rows).render());
    out.commit(manifest)?;
    Ok(complete)
}

fn point_name(len: usize, gamma: f64) -> String {
    format!("L{len}_g{gamma:.3}")
}

fn energy_csv(points: &[&GammaPoint]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "gamma",
        "L",
        "energy",
        "energy_err",
        "exact_energy",
        "rel_error",
        "energy_per_site",
        "exact_per_site",
        "seed",
    ]);
    for p in points {
        let l = p.len as f64;
        t.push(vec![
            Cell::from(p.gamma),
            Cell::from(p.len),
            Cell::from(p.energy.mean),
            Cell::from(p.energy.stderr),
            Cell::from(p.exact_energy),
            Cell::from(p.rel_error),
            Cell::from(p.energy.mean / l),
            Cell::from(p.exact_energy / l),
            Cell::from(p.seed),
        ]);
    }
    t
}

/// Optimizes every (L, gamma) pair; failures are reported, not fatal.
fn run_points(
    lens: &[usize],
    gammas: &[f64],
    sr: &SrConfig,
    sampler: &SamplerConfig,
) -> (Vec<GammaPoint>, bool) {
    let mut points = Vec::new();
    let mut complete = true;
    for &len in lens {
        let clock = Instant::now();
        for outcome in gamma_scan(gammas, len, sr, sampler) {
            match outcome.result {
                Ok(p) => points.push(p),
                Err(e) => {
                    complete = false;
                    eprintln!("L={len} gamma={}: {e}", outcome.gamma);
                }
            }
        }
        eprintln!(
            "L={len}: {} points in {:.0} s",
            gammas.len(),
            clock.elapsed().as_secs_f64()
        );
    }
    (points, complete)
}

/// Tail, energy, profile, parameter and trace files for a set of points.
fn stage_points(
    out: &mut OutputDir,
    manifest: &mut RunManifest,
    points: &[GammaPoint],
    lens: &[usize],
) {
    let refs: Vec<&GammaPoint> = points.iter().collect();
    out.add("tail.csv", tail_csv(&refs).render());
    out.add("energy.csv", energy_csv(&refs).render());
    for p in points {
        let name = point_name(p.len, p.gamma);
        out.add(
            format!("profiles/profile_{name}.csv"),
            p.report.profile_csv().render(),
        );
        out.add(
            format!("params/params_{name}.txt"),
            p.params.to_snapshot_string(),
        );
        out.add(
            format!("traces/trace_{name}.csv"),
            p.trace.to_csv().render(),
        );
    }
    for &len in lens {
        let reports: Vec<&TailReport> = points
            .iter()
            .filter(|p| p.len == len)
            .map(|p| &p.report)
            .collect();
        if let Some((drop, g0, g1)) = max_adjacent_drop(&reports) {
            manifest.result(&format!("L{len}.max_drop"), fmt_f64(drop));
            manifest.result(&format!("L{len}.max_drop_between"), format!("{g0},{g1}"));
        }
        let worst = points
            .iter()
            .filter(|p| p.len == len)
            .map(|p| p.rel_error)
            .fold(0.0, f64::max);
        manifest.result(&format!("L{len}.max_rel_error"), fmt_f64(worst));
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn cmd_scan(a: &ScanArgs) -> Result<bool> {
    let kv = load_config(&a.opt, &[])?;
    if kv.contains("L") || kv.contains("gamma") {
        return Err(Error::Config(
            "scan takes L and gamma from --L and --gammas/--gamma-*, not from the config".into(),
        ));
    }
    let seed: u64 = kv.require("seed")?;
    let lens = parse_list::<usize>(&a.lens, "L")?;
    let gammas = match &a.gammas {
        Some(list) => parse_list::<f64>(list, "gamma")?,
        None => linear_grid(a.gamma_min, a.gamma_max, a.gamma_step)?,
    };
    if lens.is_empty() || gammas.is_empty() {
        return Err(Error::Config("empty L list or gamma grid".into()));
    }
    let (sr, sampler) = resolve_budget(&kv, seed)?;
    let mut out = OutputDir::prepare(&a.out, a.force)?;
    let mut manifest = RunManifest::new("scan", seed);
    manifest
        .config("L", join(&lens))
        .config("gamma", join(&gammas));
    record_budget(&mut manifest, &sr, &sampler);
    manifest.config("point_seed", "derived from (seed, L, gamma)");
    let (points, complete) = run_points(&lens, &gammas, &sr, &sampler);
    stage_points(&mut out, &mut manifest, &points, &lens);
    manifest.result("complete", complete);
    out.commit(manifest)?;
    Ok(complete)
}

/// Budgets for `reproduce`.
struct Budget {
    sr: SrConfig,
    sampler: SamplerConfig,
    thermal: SamplerConfig,
}

fn budget(scale: Scale, seed: u64) -> Budget {
    let thermal = SamplerConfig::new(10_000, 1_000, 4, seed).expect("valid");
    match scale {
        Scale::Desk => Budget {
            sr: SrConfig::with_seed(seed),
            sampler: SamplerConfig::new(500, 200, 4, seed).expect("valid"),
            thermal,
        },
        Scale::Paper => Budget {
            sr: SrConfig::with_seed(seed),
            sampler: SamplerConfig::with_seed(seed),
            thermal,
        },
    }
}

fn figure_plan(figure: Figure, scale: Scale) -> (Vec<usize>, Vec<f64>) {
    let broad = linear_grid(0.5, 1.5, 0.1).expect("valid grid");
    let sizes = match (figure, scale) {
        (_, Scale::Desk) => vec![16, 32, 64],
        (Figure::Fig4 | Figure::Fig5, Scale::Paper) => vec![32, 64, 128, 256],
        (_, Scale::Paper) => vec![256],
    };
    let gammas = match figure {
        Figure::Fig2 | Figure::Fig4 | Figure::Fig6 => broad,
        Figure::Fig3 => vec![0.9, 1.0, 1.1],
        Figure::Fig5 => vec![0.9, 1.1],
    };
    (sizes, gammas)
}

fn cmd_reproduce(a: &ReproduceArgs) -> Result<bool> {
    let thermal = matches!(a.figure, Figure::Fig5 | Figure::Fig6);
    if a.scale == Scale::Paper && !a.confirm {
        let what = if thermal {
            "L=256 optimization plus thermodynamics may take hours to days"
        } else {
            "L=256 optimization may take hours"
        };
        eprintln!("warning: {what} on a desktop machine");
        return Err(Error::Config("paper-scale runs require --confirm".into()));
    }
    let (lens, gammas) = figure_plan(a.figure, a.scale);
    let b = budget(a.scale, a.seed);
    let mut out = OutputDir::prepare(&a.out, a.force)?;
    let fig_name = Figure::value_variants()
        .iter()
        .zip(["fig2", "fig3", "fig4", "fig5", "fig6"])
        .find(|(f, _)| **f == a.figure)
        .map(|(_, n)| n)
        .unwrap_or("fig");
    let mut manifest = RunManifest::new(&format!("reproduce {fig_name}"), a.seed);
    manifest
        .config(
            "scale",
            if a.scale == Scale::Desk {
                "desk"
            } else {
                "paper"
            },
        )
        .config("L", join(&lens))
        .config("gamma", join(&gammas));
    record_budget(&mut manifest, &b.sr, &b.sampler);
    let (points, mut complete) = run_points(&lens, &gammas, &b.sr, &b.sampler);
    stage_points(&mut out, &mut manifest, &points, &lens);
    if thermal {
        let grid = default_grid();
        record_thermal(&mut manifest, &grid, &b.thermal, ThermalUpdate::Metropolis);
        let mut all = scan_csv(f64::NAN, 0, &[]);
        for p in &points {
            let config = SamplerConfig {
                seed: derive_seed(gamma_seed(a.seed, p.len, p.gamma), 3),
                ..b.thermal.clone()
            };
            let label = point_name(p.len, p.gamma);
            let (rows, ok) =
                run_thermo(&p.params, &grid, &config, ThermalUpdate::Metropolis, &label)?;
            complete &= ok;
            let table = scan_csv(p.gamma, p.len, &rows);
            out.add(format!("thermo/thermo_{label}.csv"), table.render());
            if let Some((_, row)) = peak(&rows) {
                manifest.result(&format!("{label}.peak_T"), row.t);
                manifest.result(&format!("{label}.peak_c_per_site"), fmt_f64(row.c_per_site));
            }
            all.extend(&table);
        }
        out.add("thermo.csv", all.render());
    }
    manifest.result("complete", complete);
    out.commit(manifest)?;
    Ok(complete)
}
