use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sgcr_core::merger::{merge_model, CablePolicy};
use sgcr_core::sample::{sample_bundle, sample_fci, SampleVariant};
use sgcr_core::scenario::{
    check_trips, compile_range, export_topology, first_divergence, AttackScript, Bundle, ExportFormat, Range,
    RangeSpec, RunLog, TopologyLayer,
};
use sgcr_core::scl::validate_bundle;
use sgcr_gateway::{Pacing, RangeHandle};

#[derive(Parser)]
#[command(name = "sgcr", version, about = "Compile SCL bundles into runnable smart-grid cyber ranges")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a bundle directory and list findings.
    Validate { dir: PathBuf },
    /// Merge the SSD/SED and SCD files of a bundle.
    Merge {
        dir: PathBuf,
        /// Output directory for merged.ssd and merged.scd.
        #[arg(long, short)]
        out: PathBuf,
        /// Fail on cable ids shared by more than two endpoints instead of renaming them.
        #[arg(long)]
        strict_cables: bool,
    },
    /// Compile a bundle and print a summary.
    Compile { dir: PathBuf },
    /// Run a bundle headless and write its run log.
    Run {
        dir: PathBuf,
        /// Run log output (NDJSON). Defaults to stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Attack script XML.
        #[arg(long)]
        attack: Option<PathBuf>,
        /// Tick length in milliseconds of simulated time.
        #[arg(long)]
        tick_ms: Option<u64>,
        /// Replay every trip and report whether it was justified.
        #[arg(long)]
        check_trips: bool,
    },
    /// Print one topology layer.
    Export {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Layer::Power)]
        layer: Layer,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a bundle in real time behind the HTTP/WebSocket API.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Wall-clock time per step in milliseconds.
        #[arg(long, default_value_t = 100)]
        interval_ms: u64,
        #[arg(long)]
        attack: Option<PathBuf>,
    },
    /// Report the first tick at which two run logs differ.
    Diff { a: PathBuf, b: PathBuf },
    /// Write a generated example bundle.
    Example {
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Variant::Three)]
        variant: Variant,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Also write the stNum spoofing attack script to this path.
        #[arg(long)]
        attack: Option<PathBuf>,
        /// Tick at which the attack starts tapping.
        #[arg(long, default_value_t = 20)]
        attack_at: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Layer {
    Power,
    Cyber,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    /// Three substations, 45 IEDs.
    Three,
    /// One substation, 9 IEDs.
    Single,
}

fn load(dir: &Path) -> Result<Bundle> {
    Bundle::load_dir(dir).with_context(|| format!("loading bundle {}", dir.display()))
}

fn compile(dir: &Path) -> Result<RangeSpec> {
    let bundle = load(dir)?;
    compile_range(&bundle).map_err(|e| anyhow::anyhow!("compilation failed:\n{e}"))
}

fn load_attack(path: &Path) -> Result<AttackScript> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    AttackScript::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_log(path: &Path) -> Result<RunLog> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    RunLog::read_ndjson(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn validate(dir: &Path) -> Result<ExitCode> {
    let bundle = load(dir)?;
    let report = validate_bundle(&bundle.scl_docs(), &bundle.supplements);
    for f in &report.findings {
        println!("{f}");
    }
    println!(
        "{} error(s), {} warning(s)",
        report.errors().count(),
        report.warnings().count()
    );
    Ok(if report.ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn merge(dir: &Path, out: &Path, strict: bool) -> Result<()> {
    let b = load(dir)?;
    let policy = if strict { CablePolicy::Strict } else { CablePolicy::Namespace };
    let m = merge_model(&b.ssds, &b.seds, &b.scds, policy)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("merged.ssd"), m.ssd.to_xml())?;
    fs::write(out.join("merged.scd"), m.scd.to_xml())?;
    for c in &m.template_conflicts {
        log::warn!("template conflict: {c:?}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn summary(spec: &RangeSpec) {
    use sgcr_core::net::NodeKind;
    println!("buses:       {}", spec.power.buses.len());
    println!("switches:    {}", spec.power.switches.len());
    println!("IED nodes:   {}", spec.cyber.count(NodeKind::Ied));
    println!("switch nodes:{:>4}", spec.cyber.count(NodeKind::Switch));
    println!("links:       {}", spec.cyber.links.len());
    println!("PLCs:        {}", spec.plcs.len());
    println!("gateway:     {}", spec.gateway.as_ref().map_or("none", |g| g.node.as_str()));
    println!("steps:       {} x {} ms", spec.n_steps, spec.tick_ms);
    for w in spec.validation.warnings() {
        println!("{w}");
    }
}

fn run(
    dir: &Path,
    out: Option<&Path>,
    steps: Option<usize>,
    attack: Option<&Path>,
    tick_ms: Option<u64>,
    check: bool,
) -> Result<ExitCode> {
    let mut spec = compile(dir)?;
    if let Some(t) = tick_ms {
        spec.tick_ms = t;
    }
    let script = attack.map(load_attack).transpose()?;
    let mut range = match &script {
        Some(s) => Range::with_attack(&spec, s)?,
        None => Range::new(&spec)?,
    };
    let initial = range.store().initial().clone();
    let limit = steps.unwrap_or(spec.n_steps).min(spec.n_steps);
    for _ in 0..limit {
        range.step()?;
    }
    let log = range.into_run_log();
    match out {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            log.write_ndjson(io::BufWriter::new(f))?;
            eprintln!("wrote {} ticks to {}", log.ticks.len(), p.display());
        }
        None => log.write_ndjson(io::stdout().lock())?,
    }
    if !check {
        return Ok(ExitCode::SUCCESS);
    }
    let verdicts = check_trips(&spec, &initial, &log);
    let mut err = io::stderr().lock();
    for v in &verdicts {
        let why = v.reason.as_deref().unwrap_or("");
        writeln!(err, "tick {} {} {}: {} {why}", v.tick, v.ied, v.ln, if v.justified { "justified" } else { "UNJUSTIFIED" })?;
    }
    let bad = verdicts.iter().filter(|v| !v.justified).count();
    writeln!(err, "{} trip(s), {bad} unjustified", verdicts.len())?;
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn serve(dir: &Path, addr: &str, interval_ms: u64, attack: Option<&Path>) -> Result<()> {
    let spec = compile(dir)?;
    let range = match attack.map(load_attack).transpose()? {
        Some(s) => Range::with_attack(&spec, &s)?,
        None => Range::new(&spec)?,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        let handle = RangeHandle::spawn(range, Pacing::Interval(Duration::from_millis(interval_ms)));
        tokio::select! {
            r = sgcr_gateway::serve(listener, handle.clone()) => r?,
            _ = tokio::signal::ctrl_c() => log::info!("shutting down"),
        }
        handle.shutdown();
        Ok(())
    })
}

fn diff(a: &Path, b: &Path) -> Result<ExitCode> {
    let (la, lb) = (load_log(a)?, load_log(b)?);
    Ok(match first_divergence(&la, &lb) {
        Some(t) => {
            println!("first divergence at tick {t}");
            ExitCode::FAILURE
        }
        None => {
            println!("identical");
            ExitCode::SUCCESS
        }
    })
}

fn example(out: &Path, variant: Variant, steps: usize, attack: Option<&Path>, attack_at: u64) -> Result<()> {
    let v = match variant {
        Variant::Three => SampleVariant::ThreeSubstations,
        Variant::Single => SampleVariant::SingleSubstation,
    };
    let bundle = sample_bundle(v, steps);
    let files = bundle.write_dir(out)?;
    if let Some(path) = attack {
        if !matches!(variant, Variant::Three) {
            bail!("the example attack targets the three-substation variant");
        }
        fs::write(path, sample_fci(attack_at, 1000).to_xml())?;
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { dir } => validate(&dir),
        Cmd::Merge { dir, out, strict_cables } => merge(&dir, &out, strict_cables).map(|_| ExitCode::SUCCESS),
        Cmd::Compile { dir } => {
            summary(&compile(&dir)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run {
            dir,
            out,
            steps,
            attack,
            tick_ms,
            check_trips,
        } => run(&dir, out.as_deref(), steps, attack.as_deref(), tick_ms, check_trips),
        Cmd::Export { dir, layer, format } => {
            let spec = compile(&dir)?;
            let layer = match layer {
                Layer::Power => TopologyLayer::Power,
                Layer::Cyber => TopologyLayer::Cyber,
            };
            let format = match format {
                Format::Json => ExportFormat::Json,
                Format::Dot => ExportFormat::Dot,
            };
            let mut stdout = io::stdout().lock();
            match writeln!(stdout, "{}", export_topology(&spec, layer, format)) {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
                r => r.context("writing topology")?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Serve {
            dir,
            addr,
            interval_ms,
            attack,
        } => serve(&dir, &addr, interval_ms, attack.as_deref()).map(|_| ExitCode::SUCCESS),
        Cmd::Diff { a, b } => diff(&a, &b),
        Cmd::Example {
            out,
            variant,
            steps,
            attack,
            attack_at,
        } => example(&out, variant, steps, attack.as_deref(), attack_at).map(|_| ExitCode::SUCCESS),
    }
}
