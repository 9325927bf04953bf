use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use pansim::artifacts::{self, Artifacts, DataDir, SaveInfo};
use pansim::config::Config;
use pansim::exec::Threads;
use pansim::{export, ingest, service, workflow};
use pansim_core::scenario::{Scenario, WeatherSource};

#[derive(Parser)]
#[command(name = "pansim", version, about = "Epidemic scenario simulator: NPI counterfactuals and forecasts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Data directory: input CSVs at the root, artifacts/ and runs/ below.
    #[arg(long, global = true, env = "PANSIM_DATA_DIR", default_value = ".")]
    data: PathBuf,
    /// Configuration file; defaults to <data>/pansim.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed: R_eff seed s, correction s+1, collateral s+2; for `run`
    /// and `export` also the generated-weather seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log debug output.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the input files of the data directory.
    Ingest,
    /// Train the artifact bundle.
    Train {
        /// Output directory [default: <data>/artifacts].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also train the NPI -> GDP -> LYL collateral model (needs econ.csv).
        #[arg(long)]
        with_collateral: bool,
        /// Training threads [default: available cores].
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a scenario file (TOML or JSON) and write result tables.
    Run {
        scenario: PathBuf,
        /// Artifact directory [default: <data>/artifacts].
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Output directory [default: <data>/out/<scenario id or file stem>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write collateral.csv (bundle must include the collateral model).
        #[arg(long)]
        with_collateral: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write plots-ready tables: results, per-band trajectories, feature
    /// selection and the historical replay beside the observed targets.
    Export {
        /// Scenario file; the historical replay when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Output directory [default: <data>/export].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        with_collateral: bool,
    },
    /// Write the synthetic dataset (inputs, econ.csv, pansim.toml) to a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let dirs = DataDir::new(&g.data);
    match cli.command {
        Command::Ingest => ingest_cmd(g),
        Command::Train {
            out,
            with_collateral,
            threads,
        } => train_cmd(g, out.unwrap_or_else(|| dirs.artifacts()), with_collateral, threads),
        Command::Run {
            scenario,
            artifacts,
            out,
            with_collateral,
        } => run_cmd(g, &scenario, artifacts.unwrap_or_else(|| dirs.artifacts()), out, with_collateral),
        Command::Serve { port, bind, workers } => serve_cmd(g, port, bind, workers),
        Command::Export {
            scenario,
            artifacts,
            out,
            with_collateral,
        } => export_cmd(
            g,
            scenario.as_deref(),
            artifacts.unwrap_or_else(|| dirs.artifacts()),
            out.unwrap_or_else(|| g.data.join("export")),
            with_collateral,
        ),
        Command::Synth { out } => synth_cmd(g, &out),
    }
}

fn load_config(g: &Global) -> Result<Config> {
    let (mut cfg, origin) = Config::resolve(g.config.as_deref(), Some(&g.data))?;
    match origin {
        Some(p) => info!("config {}", p.display()),
        None => info!("no config file, using defaults"),
    }
    if let Some(s) = g.seed {
        cfg.apply_seed(s);
    }
    Ok(cfg)
}

fn load_data(g: &Global, cfg: &Config) -> Result<ingest::Dataset> {
    let known = ingest::known_npis(&cfg.ingest.extra_npis);
    let ds = ingest::load_dir(&g.data, &known).with_context(|| format!("reading data directory {}", g.data.display()))?;
    if !ds.skipped_npis.is_empty() {
        warn!("skipped unknown NPI columns: {}", ds.skipped_npis.join(", "));
    }
    Ok(ds)
}

fn ingest_cmd(g: &Global) -> Result<()> {
    let cfg = load_config(g)?;
    let ds = load_data(g, &cfg)?;
    for line in ingest::describe(&ds) {
        println!("{line}");
    }
    println!("data hash: {}", ingest::data_hash(&g.data)?);
    Ok(())
}

fn train_cmd(g: &Global, out: PathBuf, with_collateral: bool, threads: Option<usize>) -> Result<()> {
    let cfg = load_config(g)?;
    let ds = load_data(g, &cfg)?;
    let exec = threads.map_or_else(Threads::available, Threads::new);
    info!("training on {} thread(s)", exec.threads);
    let t0 = Instant::now();
    let art = workflow::train(&ds, &cfg, with_collateral, &exec).context("training failed")?;
    let elapsed = t0.elapsed();
    let info = SaveInfo {
        config_toml: cfg.to_toml(),
        config_hash: cfg.hash(),
        data_hash: ingest::data_hash(&g.data)?,
        skipped_npis: ds.skipped_npis.clone(),
        collateral_seed: cfg.collateral.seed,
        train_wall_time_ms: elapsed.as_millis() as u64,
    };
    let m = artifacts::save(&out, &art, &info)?;
    println!("trained in {:.1} s, bundle written to {}", elapsed.as_secs_f64(), out.display());
    println!("window {} ..= {}", m.window_start, m.window_end);
    println!("features: {}", m.features.join(", "));
    let r2: Vec<String> = m
        .reff_validation_r2
        .iter()
        .map(|r| r.map_or("n/a".into(), |v| format!("{v:.3}")))
        .collect();
    println!("R_eff validation R2 (lower/mean/upper): {}", r2.join(" / "));
    if let Some(c) = &m.collateral {
        println!(
            "collateral: gate p = {:.2e} (NPI->GDP), {:.2e} (GDP->LYL), composed R2 {}",
            c.gdp_gate_p,
            c.lyl_gate_p,
            c.composed_validation_r2.map_or("n/a".into(), |v| format!("{v:.3}"))
        );
    }
    Ok(())
}

fn load_bundle(dir: &Path) -> Result<Artifacts> {
    let (art, m) = artifacts::load(dir)?;
    info!("bundle {} (trained {}, config {})", dir.display(), m.created, &m.config_hash[..12]);
    Ok(art)
}

fn seeded(mut s: Scenario, seed: Option<u64>) -> Scenario {
    if let (Some(seed), WeatherSource::Generated { .. }) = (seed, s.weather) {
        s.weather = WeatherSource::Generated { seed };
    }
    s
}

fn run_cmd(g: &Global, path: &Path, art_dir: PathBuf, out: Option<PathBuf>, with_collateral: bool) -> Result<()> {
    let scenario = seeded(workflow::load_scenario(path)?, g.seed);
    let art = load_bundle(&art_dir)?;
    let result = workflow::run(&scenario, &art)?;
    let label = if scenario.id.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
    } else {
        scenario.id.clone()
    };
    let out = out.unwrap_or_else(|| g.data.join("out").join(&label));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = export::write_result(&out, &result)?;
    if with_collateral {
        files.push(export::write_collateral(&out, &workflow::collateral_rows(&scenario, &art)?)?);
    }
    print_summary(&result);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn print_summary(r: &pansim_core::scenario::ScenarioResult) {
    println!(
        "{} {} ..= {} ({} clamp), config hash {}",
        r.scenario.kind.as_str(),
        r.start_date,
        r.end_date,
        serde_json::to_value(r.clamp).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        r.metadata.config_hash
    );
    for s in &r.summary {
        println!(
            "  {:<5} peak infected {:>12.0}  fatalities {:>10.0}  peak beds {:>9.0}  peak ICU {:>8.0}  overflow days {}/{}",
            s.band.as_str(),
            s.peak_infected,
            s.total_fatalities,
            s.peak_hospital_beds,
            s.peak_icu,
            s.hospital_overflow_days,
            s.icu_overflow_days
        );
    }
}

fn serve_cmd(g: &Global, port: Option<u16>, bind: Option<String>, workers: Option<usize>) -> Result<()> {
    let cfg = load_config(g)?;
    let dirs = DataDir::new(&g.data);
    let art = load_bundle(&dirs.artifacts())?;
    let port = port.unwrap_or(cfg.service.port);
    let bind = bind.unwrap_or(cfg.service.bind.clone());
    let workers = workers.unwrap_or(cfg.service.workers);
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    let addr: std::net::SocketAddr = format!("{bind}:{port}")
        .parse()
        .with_context(|| format!("invalid bind address {bind}:{port}"))?;
    let state = service::AppState::start(art, dirs, workers)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(state, addr))?;
    Ok(())
}

fn export_cmd(g: &Global, scenario: Option<&Path>, art_dir: PathBuf, out: PathBuf, with_collateral: bool) -> Result<()> {
    let art = load_bundle(&art_dir)?;
    let historical = Scenario::historical("historical");
    let s = match scenario {
        Some(p) => seeded(workflow::load_scenario(p)?, g.seed),
        None => historical.clone(),
    };
    let result = workflow::run(&s, &art)?;
    let hist_result = if s == historical {
        result.clone()
    } else {
        workflow::run(&historical, &art)?
    };
    let targets = g.data.join(ingest::TARGETS_FILE);
    let observed = if targets.exists() {
        let f = std::fs::File::open(&targets).with_context(|| format!("opening {}", targets.display()))?;
        Some(ingest::parse_targets(f)?)
    } else {
        None
    };
    let mut files = export::export_all(&out, &s, &art, &result, &hist_result, observed.as_ref())?;
    if with_collateral {
        files.push(export::write_collateral(&out, &workflow::collateral_rows(&s, &art)?)?);
    }
    print_summary(&result);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn synth_cmd(g: &Global, out: &Path) -> Result<()> {
    let (ds, cfg) = workflow::synthetic_dataset(g.seed)?;
    ingest::write_dir(out, &ds)?;
    let cfg_path = out.join(pansim::config::DEFAULT_CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_toml()).with_context(|| format!("writing {}", cfg_path.display()))?;
    println!("synthetic dataset written to {}", out.display());
    Ok(())
}
