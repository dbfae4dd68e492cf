use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use waimforge::checks::property_suite;
use waimforge::config::ProblemConfig;
use waimforge::greens::WaimStack;
use waimforge::io::{self, DesignRecord, SweepRow};
use waimforge::lattice::ArrayDescriptors;
use waimforge::moments::{ArrayModel, ModelSettings, TruncationConfig};
use waimforge::objective::{
    plane_cuts, psi_from_map, scan_limit, tolerance_sweep, CostReport, FeasibilitySets, NodeResponse, Problem, ScanGrid,
};
use waimforge::swarm::run_synthesis;
use waimforge::{Error, Result};

/// Worst-plane ATC level that bounds the reported usable scan range.
const ATC_FLOOR: f64 = 0.9;

#[derive(Parser)]
#[command(name = "waimforge", version, about = "Scan matching of WAIM-coated infinite patch arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override the angular grid, e.g. 15x15.
    #[arg(long, value_name = "NTHETAxNPHI", value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
}

#[derive(Args)]
struct DesignArg {
    /// Design record to evaluate instead of the config's [[waim.layer]] entries.
    #[arg(long)]
    design: Option<PathBuf>,
}

#[derive(Args)]
struct CutArgs {
    /// Azimuth planes in degrees.
    #[arg(long, value_delimiter = ',', default_value = "0,45,90", allow_hyphen_values = true)]
    phis: Vec<f64>,
    /// Elevation step along each plane in degrees.
    #[arg(long, default_value_t = 1.0)]
    theta_step: f64,
}

#[derive(Subcommand)]
enum Command {
    /// ATC map of a coating (or of the bare array) with a baseline comparison.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignArg,
        /// Analyze the uncoated array only.
        #[arg(long)]
        uncoated: bool,
    },
    /// Optimize the coating; writes design.txt, trace.csv and atc_map.csv.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// ATC along constant-phi planes for the coated and uncoated array.
    Cuts {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignArg,
        #[command(flatten)]
        cuts: CutArgs,
    },
    /// Thickness tolerance sweep of a coating.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignArg,
        #[command(flatten)]
        cuts: CutArgs,
        /// Relative thickness perturbation.
        #[arg(long, default_value_t = 0.1)]
        perturb: f64,
    },
    /// Invisible-layer, broadside and scale-invariance checks.
    Selftest {
        /// Array to check; a built-in square lattice if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NTHETAxNPHI, got `{s}`"))?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    match (n(a)?, n(b)?) {
        (0, _) | (_, 0) => Err("grid sizes must be >= 1".into()),
        g => Ok(g),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|_| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) | Error::Parse { .. } | Error::InvalidInput(_) | Error::DegenerateLattice { .. } => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("WAIMFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Validation(vec![format!("WAIMFORGE_THREADS: `{v}` is not a count")]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

fn load(common: &Common) -> Result<ProblemConfig> {
    let cfg = ProblemConfig::load(&common.config)?;
    Ok(match common.grid {
        Some((nt, np)) => cfg.with_grid(nt, np),
        None => cfg,
    })
}

fn out_dir(common: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    Ok(&common.out)
}

fn design_stack(cfg: &ProblemConfig, design: &DesignArg) -> Result<WaimStack> {
    match (&design.design, &cfg.waim.design) {
        (Some(path), _) => Ok(io::read_design(path)?.stack()),
        (None, Some(stack)) => Ok(stack.clone()),
        (None, None) => Err(Error::Validation(vec![
            "waim.layer: no coating given; add [[waim.layer]] entries or pass --design".into(),
        ])),
    }
}

fn thetas(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 90.0) {
        return Err(Error::InvalidInput(format!("theta step {step} outside (0, 90]")));
    }
    let n = (90.0 / step).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

fn report_limit(label: &str, map: &[NodeResponse]) -> Option<f64> {
    let limit = scan_limit(map, ATC_FLOOR);
    match limit {
        Some(t) => println!("{label}: worst-plane ATC >= {ATC_FLOOR} up to theta = {t:.2} deg"),
        None => println!("{label}: worst-plane ATC below {ATC_FLOOR} at the first sample"),
    }
    limit
}

#[derive(serde::Serialize)]
struct AnalysisSummary {
    fingerprint: String,
    psi: f64,
    psi_no_waim: f64,
    psi_norm: f64,
    delta_psi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scan_limit_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scan_limit_uncoated_deg: Option<f64>,
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Analyze {
            common,
            design,
            uncoated,
        } => {
            let cfg = load(&common)?;
            let stack = if uncoated { None } else { Some(design_stack(&cfg, &design)?) };
            let out = out_dir(&common)?;
            let (problem, base_map) = Problem::with_reference_map(cfg.model()?, cfg.scan)?;
            let base_report = CostReport::new(psi_from_map(&problem.grid, &base_map), problem.psi_no_waim)?;
            let base_limit = report_limit("uncoated", &base_map);
            let summary = match stack {
                None => {
                    io::write_atc_map(&base_map, out.join("atc_map.csv"))?;
                    AnalysisSummary {
                        fingerprint: cfg.fingerprint(),
                        psi: base_report.psi,
                        psi_no_waim: problem.psi_no_waim,
                        psi_norm: base_report.psi_norm,
                        delta_psi: base_report.delta_psi,
                        scan_limit_deg: base_limit,
                        scan_limit_uncoated_deg: base_limit,
                    }
                }
                Some(stack) => {
                    let (report, map) = problem.cost_and_map(&stack)?;
                    io::write_atc_map(&map, out.join("atc_map.csv"))?;
                    io::write_atc_map(&base_map, out.join("atc_map_uncoated.csv"))?;
                    let limit = report_limit("coated", &map);
                    println!("delta_psi = {:+.2} %", 100.0 * report.delta_psi);
                    AnalysisSummary {
                        fingerprint: cfg.fingerprint(),
                        psi: report.psi,
                        psi_no_waim: problem.psi_no_waim,
                        psi_norm: report.psi_norm,
                        delta_psi: report.delta_psi,
                        scan_limit_deg: limit,
                        scan_limit_uncoated_deg: base_limit,
                    }
                }
            };
            io::write_toml(&summary, out.join("summary.toml"))?;
        }
        Command::Synthesize { common, seed } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let out = out_dir(&common)?;
            let problem = cfg.problem()?;
            let synthesis = run_synthesis(&problem, &cfg.design_space(), &cfg.swarm)?;
            let (report, map) = problem.cost_and_map(&synthesis.stack)?;
            let o = &synthesis.outcome;
            let record = DesignRecord {
                iterations: o.iterations,
                evaluations: o.evaluations,
                stagnated: o.stagnated,
                timing: o.timing,
                ..DesignRecord::from_report(cfg.fingerprint(), cfg.swarm.seed, &synthesis.stack, &report, problem.psi_no_waim)
            };
            io::write_design(&record, out.join("design.txt"))?;
            io::write_trace(&o.trace, out.join("trace.csv"))?;
            io::write_atc_map(&map, out.join("atc_map.csv"))?;
            println!(
                "delta_psi = {:+.2} % after {} iterations ({} evaluations, {:.1} s)",
                100.0 * report.delta_psi,
                o.iterations,
                o.evaluations,
                o.timing.total_s
            );
            for (i, l) in synthesis.stack.layers.iter().enumerate() {
                println!(
                    "layer {}: t = {:.4e} m, eps = ({:.3}, {:.3}, {:.3})",
                    i + 1,
                    l.thickness,
                    l.eps_xx,
                    l.eps_yy,
                    l.eps_zz
                );
            }
        }
        Command::Cuts { common, design, cuts } => {
            let cfg = load(&common)?;
            let stack = design_stack(&cfg, &design)?;
            let thetas = thetas(cuts.theta_step)?;
            let out = out_dir(&common)?;
            let (model, grid) = (cfg.model()?, ScanGrid::new(&cfg.scan)?);
            let coated = plane_cuts(&model, &stack, &grid, &cuts.phis, &thetas)?;
            let bare = plane_cuts(&model, &WaimStack::uncoated(), &grid, &cuts.phis, &thetas)?;
            io::write_cuts(&[("coated", &coated), ("uncoated", &bare)], &cuts.phis, out.join("cuts.csv"))?;
            report_limit("coated", &coated);
            report_limit("uncoated", &bare);
        }
        Command::Sweep {
            common,
            design,
            cuts,
            perturb,
        } => {
            let cfg = load(&common)?;
            let stack = design_stack(&cfg, &design)?;
            let thetas = thetas(cuts.theta_step)?;
            let out = out_dir(&common)?;
            let problem = cfg.problem()?;
            let variants = tolerance_sweep(&problem, &stack, &cfg.waim.sets, perturb, &cuts.phis, &thetas)?;
            let labelled: Vec<(&str, &[NodeResponse])> =
                variants.iter().filter(|v| v.feasible).map(|v| (v.label.as_str(), v.cuts.as_slice())).collect();
            io::write_cuts(&labelled, &cuts.phis, out.join("sweep_cuts.csv"))?;
            let rows: Vec<SweepRow> = variants.iter().map(SweepRow::from).collect();
            io::write_sweep(&rows, out.join("sweep.csv"))?;
            for r in &rows {
                match r.delta_psi {
                    Some(d) => println!("{:>8}: delta_psi = {:+.2} %", r.variant, 100.0 * d),
                    None => println!("{:>8}: infeasible ({})", r.variant, r.violations),
                }
            }
        }
        Command::Selftest { config } => return selftest(config.as_deref()),
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest(config: Option<&Path>) -> Result<ExitCode> {
    let (array, freq, sets) = match config {
        Some(path) => {
            let cfg = ProblemConfig::load(path)?;
            (cfg.array, cfg.scan.center_frequency(), cfg.waim.sets)
        }
        None => (
            ArrayDescriptors {
                substrate_thickness: 1.575e-3,
                substrate_eps: 2.2,
                patch_x: 9.06e-3,
                patch_y: 1.185e-2,
                feed_x: 2.298e-3,
                feed_y: 5.925e-3,
                w1: [0.015, 0.0],
                w2: [0.0, 0.015],
            },
            10e9,
            FeasibilitySets::standard(10e9),
        ),
    };
    let settings = ModelSettings {
        truncation: TruncationConfig { p: 12, q: 12, modes: 6 },
        ..ModelSettings::default()
    };
    let model = ArrayModel::new(array, settings)?;
    let results = property_suite(&model, freq, &sets, 1)?;
    let mut ok = true;
    for r in &results {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {:<18} {:.3e} (tolerance {:.0e})", r.name, r.value, r.tolerance);
        ok &= r.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
