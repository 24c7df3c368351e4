use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use soh_fusion::apso::{bench, optimize, ApsoConfig};
use soh_fusion::cell::{simulate_protocol, CellParameters, DiffusionKind};
use soh_fusion::datagen::read_dataset;
use soh_fusion::identify::{identify_aging, identify_pristine, AgingFitConfig, CurveMeta, MeasuredCurve, PristineConfig};
use soh_fusion::net::{evaluate, Network, TrainSet};
use soh_fusion::pipeline::{
    emit_report, load_prepared, run_experiment_sweep, run_pipeline, run_stages, sweep_summary_csv, ExperimentReport,
    Format, PipelineConfig, Step, Sweep,
};
use soh_fusion::protocol::Protocol;
use soh_fusion::{Error, Result};

#[derive(Parser)]
#[command(name = "soh-fusion", version, about = "Physics-informed battery SOH estimation pipeline")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMode {
    Aging,
    Pristine,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Segments,
    TransferEpochs,
    SourceCells,
    EarlyLife,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bench {
    Sphere,
    Rosenbrock,
    Rastrigin,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one protocol run and write the trace as CSV.
    Simulate {
        /// Preset (cccv-1c, cccv-1.5c, cccv-2c, mscc-paper) or protocol file.
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        soc0: f64,
        /// Cell parameter file.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        /// Finite-volume solid diffusion with this many nodes.
        #[arg(long)]
        fv_nodes: Option<usize>,
        /// Seven comma-separated multipliers on the aging parameters.
        #[arg(long, value_delimiter = ',')]
        aging: Option<Vec<f64>>,
    },
    /// Identify parameters from measured charge curves.
    Identify {
        /// CSV with columns t_s,current_A,voltage_V. Repeatable.
        #[arg(long = "curve", required = true)]
        curves: Vec<PathBuf>,
        /// C-rate of each curve, in the same order.
        #[arg(long = "rate")]
        rates: Vec<f64>,
        #[arg(long, value_enum, default_value = "aging")]
        mode: FitMode,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        iters: usize,
    },
    /// Steps 1 to 4: trajectories, expansion, protocol, corpus.
    GenData,
    /// Steps 1 to 5.
    Pretrain,
    /// The full pipeline for one transfer scenario.
    Transfer {
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Cells that contribute real segments.
        #[arg(long, value_delimiter = ',')]
        source_cells: Option<Vec<u32>>,
        /// Draw real segments only from the first N cycles.
        #[arg(long)]
        early_life: Option<u32>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Metrics of a weights file on a dataset; the cached pre-trained model
    /// on the target cells when no files are given.
    Evaluate {
        #[arg(long, requires = "data")]
        weights: Option<PathBuf>,
        #[arg(long, requires = "weights")]
        data: Option<PathBuf>,
    },
    /// Transfer scenarios on shared, cached pre-training.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
    },
    /// Re-render a persisted report.
    Report {
        /// report.json; the default scenario's when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "json,csv,svg")]
        formats: Vec<String>,
        /// Destination; next to the report when absent.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Time APSO on a test function.
    BenchApso {
        #[arg(long, value_enum, default_value = "rosenbrock")]
        function: Bench,
        #[arg(long, default_value_t = 5)]
        dims: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 100)]
        particles: usize,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.paths.out = o.clone();
    }
    Ok(c)
}

fn load_params(path: Option<&Path>, config: &PipelineConfig) -> Result<CellParameters> {
    match path {
        Some(p) => CellParameters::from_path(p),
        None => Ok(config.validate()?.params),
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| Error::Validation(format!("{}: {e}", d.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn summarize(r: &ExperimentReport) {
    println!("scenario {}", r.scenario.id);
    for (b, a) in r.before.per_cell.iter().zip(&r.after.per_cell) {
        let red = r.reduction(b.cell).unwrap_or(0.0);
        println!(
            "  cell {}: MAE {:.3}% -> {:.3}% ({:+.1}%)",
            b.cell,
            b.mae_soh_pct,
            a.mae_soh_pct,
            -100.0 * red
        );
    }
    println!("  all: MAE {:.3}% -> {:.3}%", r.before.mae_soh_pct, r.after.mae_soh_pct);
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    let config = load_config(&cli)?;
    let out = config.paths.out.clone();
    match cli.cmd {
        Cmd::Simulate {
            protocol,
            soc0,
            params,
            dt,
            fv_nodes,
            aging,
        } => {
            let params = load_params(params.as_deref(), &config)?;
            let name = protocol.unwrap_or_else(|| config.protocol.clone());
            let proto = if Path::new(&name).is_file() {
                Protocol::from_path(Path::new(&name))?
            } else {
                Protocol::preset(&name)?
            };
            let mut sim = config.sim;
            if let Some(dt) = dt {
                sim.dt = dt;
            }
            if let Some(nodes) = fv_nodes {
                sim.diffusion = DiffusionKind::FiniteVolume { nodes };
            }
            let mut a = params.aging();
            if let Some(f) = aging {
                let f: [f64; 7] = f
                    .try_into()
                    .map_err(|v: Vec<f64>| Error::InvalidParameter(format!("--aging takes 7 multipliers, got {}", v.len())))?;
                a = a.scaled(&f);
            }
            let t = Instant::now();
            let tr = simulate_protocol(&params, &a, &proto, soc0, sim)?;
            let path = out.join("trace.csv");
            write_file(&path, &tr.to_csv())?;
            print_json(&serde_json::json!({
                "trace": path, "samples": tr.samples.len(), "duration_s": tr.duration(),
                "throughput_ah": tr.total_throughput(), "capacity_ah": tr.final_capacity,
                "lithium_drift": tr.lithium_drift(), "wall_ms": t.elapsed().as_secs_f64() * 1e3,
            }));
        }
        Cmd::Identify {
            curves,
            rates,
            mode,
            params,
            iters,
        } => {
            if !rates.is_empty() && rates.len() != curves.len() {
                return Err(Error::Validation("give one --rate per --curve or none".into()));
            }
            let base = load_params(params.as_deref(), &config)?;
            let measured: Vec<MeasuredCurve> = curves
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut m = CurveMeta::builder();
                    if let Some(&r) = rates.get(i) {
                        m = m.rate(r);
                    }
                    MeasuredCurve::from_path(p, m.build())
                })
                .collect::<Result<_>>()?;
            match mode {
                FitMode::Aging => {
                    let mut cfg = AgingFitConfig::default();
                    cfg.apso = cfg.apso.with_iters(iters).with_seed(config.seed);
                    let fit = identify_aging(&measured, &base, &base.aging(), &cfg)?;
                    write_file(&out.join("aging_fit.json"), &serde_json::to_string_pretty(&fit).expect("serializable"))?;
                    print_json(&fit.aging);
                    println!("rmse {:.3} mV", fit.rmse_mv);
                }
                FitMode::Pristine => {
                    let mut cfg = PristineConfig::default();
                    cfg.apso = cfg.apso.with_iters(iters).with_seed(config.seed);
                    let fit = identify_pristine(&measured, &base, &cfg)?;
                    let path = out.join("pristine_params.toml");
                    write_file(&path, &fit.params.to_toml(None, None))?;
                    println!("parameters written to {}", path.display());
                    println!("rmse {:.3} mV per curve {:?}", fit.rmse_mv, fit.per_curve_rmse_mv);
                }
            }
        }
        Cmd::GenData | Cmd::Pretrain => {
            let step = if matches!(cli.cmd, Cmd::GenData) { Step::Corpus } else { Step::Pretrain };
            for s in run_stages(&config, step)? {
                println!("{:<13} {}", s.record.name, s.dir.display());
            }
        }
        Cmd::Transfer {
            segments,
            epochs,
            source_cells,
            early_life,
            id,
        } => {
            let mut c = config;
            let sc = &mut c.scenario;
            if let Some(n) = segments {
                sc.segments = n;
            }
            sc.epochs = epochs.or(sc.epochs);
            sc.source_cells = source_cells.or(sc.source_cells.take());
            sc.early_life_cycles = early_life.or(sc.early_life_cycles);
            if let Some(id) = id {
                sc.id = id;
            }
            let r = run_pipeline(&c)?;
            summarize(&r);
            println!("report in {}", out.join("reports").join(&r.scenario.id).display());
        }
        Cmd::Evaluate { weights, data } => {
            let m = match (weights, data) {
                (Some(w), Some(d)) => {
                    let net = Network::<f32>::load(&w)?;
                    let ds = read_dataset(&d)?;
                    evaluate(&net, &TrainSet::from_records(&ds.records, ds.norm.nominal_ah))?
                }
                _ => {
                    let p = load_prepared(&config)?;
                    evaluate(&p.net, &TrainSet::from_records(&p.targets.records, config.norm.nominal_ah))?
                }
            };
            print_json(&m);
        }
        Cmd::Sweep { kind } => {
            let (sweep, name) = match kind {
                SweepKind::Segments => (Sweep::segments_default(), "segments"),
                SweepKind::TransferEpochs => (Sweep::epochs_default(), "transfer-epochs"),
                SweepKind::SourceCells => (Sweep::SourceCells, "source-cells"),
                SweepKind::EarlyLife => (Sweep::EarlyLife, "early-life"),
            };
            let reports = run_experiment_sweep(&config, &sweep)?;
            for r in &reports {
                summarize(r);
            }
            let path = out.join("sweeps").join(format!("{name}.csv"));
            write_file(&path, &sweep_summary_csv(&reports))?;
            println!("summary in {}", path.display());
        }
        Cmd::Report { report, formats, dest } => {
            let path = report.unwrap_or_else(|| out.join("reports").join("default").join("report.json"));
            let r = ExperimentReport::from_path(&path)?;
            let formats: Vec<Format> = formats.iter().map(|f| Format::parse(f)).collect::<Result<_>>()?;
            let dir = dest.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            for f in emit_report(&r, &dir, &formats)? {
                println!("{}", f.display());
            }
        }
        Cmd::BenchApso {
            function,
            dims,
            iters,
            particles,
        } => {
            let f = match function {
                Bench::Sphere => bench::sphere,
                Bench::Rosenbrock => bench::rosenbrock,
                Bench::Rastrigin => bench::rastrigin,
            };
            let cfg = ApsoConfig::new(vec![(-2.0, 2.0); dims])
                .with_iters(iters)
                .with_particles(particles)
                .with_seed(config.seed);
            let t = Instant::now();
            let r = optimize(f, &cfg)?;
            print_json(&serde_json::json!({
                "best_fitness": r.best_fitness, "best_position": r.best_position,
                "iterations": iters, "wall_ms": t.elapsed().as_secs_f64() * 1e3,
            }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) | Error::InvalidParameter(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
