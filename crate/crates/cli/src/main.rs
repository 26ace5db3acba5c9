use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aquitrend::analysis::{file_stem, Analysis, AnalysisError, AnalysisOptions, LambdaSpec};
use aquitrend::dataset::{has_errors, Dataset, DatasetError, DatasetOptions, Granularity, RawTables};
use aquitrend::export::{svg, well_report, ExportError, GridSpec};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

/// Trend analysis of groundwater monitoring data.
#[derive(Parser)]
#[command(name = "aquitrend", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset directory and print its diagnostics.
    Validate {
        dir: PathBuf,
        #[arg(long)]
        aquifer: Option<String>,
        /// Reference date for the future-sample check (default: today).
        #[arg(long)]
        today: Option<NaiveDate>,
    },
    /// Fit trends, smoothers and flow, and write the analysis directory.
    Analyze(AnalyzeArgs),
    /// Time-slice grid of one solute at one interval.
    Slice {
        analysis: PathBuf,
        #[arg(long)]
        solute: String,
        #[arg(long)]
        interval: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// One grid per interval with a shared colour scale.
    Frames {
        analysis: PathBuf,
        #[arg(long)]
        solute: String,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Final-interval grids and the three indicator matrices.
    Snapshot {
        analysis: PathBuf,
        /// JSON object mapping solute to threshold, e.g. {"Benzene": 5}.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-well time series with trend curves.
    Report {
        analysis: PathBuf,
        /// Include groundwater elevations.
        #[arg(long)]
        gw: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "AQUITREND_DATA")]
        data: PathBuf,
        #[arg(long, env = "AQUITREND_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Concurrent fitting jobs.
        #[arg(long, env = "AQUITREND_WORKERS", default_value_t = 2)]
        workers: usize,
        #[arg(long, env = "AQUITREND_MAX_UPLOAD", default_value_t = 64 << 20)]
        max_upload: usize,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Options file (JSON); flags override its fields.
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    granularity: Option<Granularity>,
    /// 0.5 or 1.0
    #[arg(long)]
    nd_fraction: Option<f64>,
    #[arg(long)]
    napl_substitute: bool,
    /// `auto` or a fixed value.
    #[arg(long)]
    lambda: Option<LambdaSpec>,
    /// mx,my,mt
    #[arg(long, value_parser = parse_basis)]
    basis: Option<[usize; 3]>,
    #[arg(long)]
    aquifer: Option<String>,
    #[arg(long)]
    today: Option<NaiveDate>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 50)]
    nx: usize,
    #[arg(long, default_value_t = 50)]
    ny: usize,
    /// Keep lattice points outside the wells' convex hull unmasked.
    #[arg(long)]
    no_mask: bool,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        GridSpec { nx: self.nx, ny: self.ny, mask_hull: !self.no_mask }
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output directory; JSON goes to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG renderings (requires --out).
    #[arg(long)]
    svg: bool,
}

fn parse_basis(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad basis size '{p}'")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(v).map_err(|_| "basis needs three sizes: mx,my,mt".to_string())
}

/// Failure with its exit code: 2 validation, 3 fit, 4 I/O.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(m: impl Into<String>) -> Failure {
        Failure { code: 2, message: m.into() }
    }

    fn fit(m: impl Into<String>) -> Failure {
        Failure { code: 3, message: m.into() }
    }

    fn io(m: impl Into<String>) -> Failure {
        Failure { code: 4, message: m.into() }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Dataset(DatasetError::Invalid(ref d)) => {
                let lines: Vec<String> = d.iter().filter(|d| d.is_error()).map(|d| d.to_string()).collect();
                Failure::validation(format!("{e}\n{}", lines.join("\n")))
            }
            AnalysisError::Options(_) => Failure::validation(e.to_string()),
            _ => Failure::io(e.to_string()),
        }
    }
}

impl From<ExportError> for Failure {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::BadGrid { .. } => Failure::validation(e.to_string()),
            ExportError::ModelUnavailable { .. } | ExportError::Extrapolation { .. } | ExportError::Model(_) => {
                Failure::fit(e.to_string())
            }
            // lookups into the analysis artifact
            _ => Failure::io(e.to_string()),
        }
    }
}

fn write_file(path: &Path, content: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, content).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializes");
    s.push(b'\n');
    s
}

/// Writes `name` into the output directory, or the bytes to stdout.
fn emit(out: &OutArgs, name: &str, json: &[u8]) -> Result<(), Failure> {
    match &out.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
            write_file(&dir.join(name), json)
        }
        None => std::io::stdout().write_all(json).map_err(|e| Failure::io(e.to_string())),
    }
}

fn svg_dir(out: &OutArgs) -> Result<Option<&Path>, Failure> {
    match (out.svg, &out.out) {
        (false, _) => Ok(None),
        (true, Some(d)) => Ok(Some(d)),
        (true, None) => Err(Failure::validation("--svg needs --out <dir>")),
    }
}

fn load(dir: &Path) -> Result<Analysis, Failure> {
    Analysis::load(dir).map_err(|e| Failure::io(e.to_string()))
}

fn well_markers(a: &Analysis) -> Vec<(String, f64, f64)> {
    a.dataset.wells.iter().map(|w| (w.well_id.clone(), w.x, w.y)).collect()
}

fn validate(dir: &Path, aquifer: Option<String>, today: Option<NaiveDate>) -> Result<(), Failure> {
    let tables = RawTables::read_dir(dir).map_err(|e| Failure::io(e.to_string()))?;
    let mut opts = DatasetOptions::new(today.unwrap_or_else(|| chrono::Local::now().date_naive()));
    opts.aquifer = aquifer;
    let (summary, diags) = match Dataset::build(tables, &opts) {
        Ok((d, diags)) => (
            Some(format!("{} wells, {} solutes, {} intervals", d.wells.len(), d.solutes.len(), d.intervals.len())),
            diags,
        ),
        Err(DatasetError::Invalid(diags)) => (None, diags),
        Err(e) => return Err(Failure::io(e.to_string())),
    };
    let mut stdout = std::io::stdout().lock();
    for d in &diags {
        let _ = writeln!(stdout, "{d}");
    }
    match summary {
        Some(s) if !has_errors(&diags) => {
            let _ = writeln!(stdout, "ok: {s}");
            Ok(())
        }
        _ => {
            let n = diags.iter().filter(|d| d.is_error()).count();
            Err(Failure::validation(format!("{n} error(s) in {}", dir.display())))
        }
    }
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let mut opts = match &args.options {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<AnalysisOptions>(&text)
                .map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?
        }
        None => AnalysisOptions::default(),
    };
    if let Some(g) = args.granularity {
        opts.granularity = g;
    }
    if let Some(f) = args.nd_fraction {
        opts.nd_fraction = f;
    }
    if args.napl_substitute {
        opts.napl_substitute = true;
    }
    if let Some(l) = args.lambda {
        opts.lambda = l;
    }
    if args.basis.is_some() {
        opts.basis = args.basis;
    }
    if args.aquifer.is_some() {
        opts.aquifer = args.aquifer;
    }
    if args.today.is_some() {
        opts.today = args.today;
    }
    let a = Analysis::run_dir(&args.dir, &opts)?;
    a.save(&args.out)?;
    for d in &a.diagnostics {
        eprintln!("{d}");
    }
    for (s, m) in &a.models {
        eprintln!("{s}: lambda {} edf {:.2} n {}", m.model.lambda, m.model.edf, m.model.n);
    }
    if !a.model_failures.is_empty() {
        let msgs: Vec<String> = a.model_failures.iter().map(|f| format!("{} ({})", f.message, f.code)).collect();
        return Err(Failure::fit(format!("smoother failed for {} solute(s): {}", msgs.len(), msgs.join("; "))));
    }
    Ok(())
}

fn read_thresholds(path: Option<&Path>) -> Result<BTreeMap<String, f64>, Failure> {
    let Some(p) = path else { return Ok(BTreeMap::new()) };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?;
    let t: BTreeMap<String, f64> =
        serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?;
    if let Some((k, v)) = t.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Failure::validation(format!("threshold for {k} must be positive, got {v}")));
    }
    Ok(t)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { dir, aquifer, today } => validate(&dir, aquifer, today),
        Command::Analyze(args) => analyze(args),
        Command::Slice { analysis, solute, interval, grid, out } => {
            let svgs = svg_dir(&out)?;
            let a = load(&analysis)?;
            let g = a.slice(&solute, interval, grid.spec())?;
            let stem = format!("slice-{}-{interval}", file_stem(&solute));
            emit(&out, &format!("{stem}.json"), &to_json(&g))?;
            if let Some(dir) = svgs {
                let doc = svg::render_slice(&g, &well_markers(&a), &a.dataset.overlays, None);
                write_file(&dir.join(format!("{stem}.svg")), doc.as_bytes())?;
            }
            Ok(())
        }
        Command::Frames { analysis, solute, grid, out } => {
            let svgs = svg_dir(&out)?;
            let a = load(&analysis)?;
            let f = a.frames(&solute, grid.spec())?;
            let stem = format!("frames-{}", file_stem(&solute));
            emit(&out, &format!("{stem}.json"), &to_json(&f))?;
            if let Some(dir) = svgs {
                let wells = well_markers(&a);
                for (k, g) in f.frames.iter().enumerate() {
                    let doc = svg::render_slice(g, &wells, &a.dataset.overlays, f.scale);
                    write_file(&dir.join(format!("{stem}-{k:03}.svg")), doc.as_bytes())?;
                }
            }
            Ok(())
        }
        Command::Snapshot { analysis, thresholds, grid, out } => {
            let svgs = svg_dir(&out)?;
            let th = read_thresholds(thresholds.as_deref())?;
            let a = load(&analysis)?;
            let s = a.latest_snapshot(&th, grid.spec())?;
            emit(&out, "snapshot.json", &to_json(&s))?;
            if let Some(dir) = svgs {
                let wells = well_markers(&a);
                for g in &s.grids {
                    if let Some(grid) = &g.grid {
                        let doc = svg::render_slice(grid, &wells, &a.dataset.overlays, None);
                        write_file(&dir.join(format!("snapshot-{}.svg", file_stem(&g.solute))), doc.as_bytes())?;
                    }
                }
                for m in &s.matrices {
                    write_file(&dir.join(format!("snapshot-{}.svg", m.mode)), svg::render_matrix(m).as_bytes())?;
                }
            }
            Ok(())
        }
        Command::Report { analysis, gw, out } => {
            let svgs = svg_dir(&out)?;
            let a = load(&analysis)?;
            let r = well_report(&a, gw);
            emit(&out, "report.json", &to_json(&r))?;
            if let Some(dir) = svgs {
                for w in &r.wells {
                    for s in w.series.iter().filter(|s| !s.observed.is_empty()) {
                        let name = format!("trend-{}-{}.svg", file_stem(&w.well_id), file_stem(&s.solute));
                        write_file(&dir.join(name), svg::render_trend(&w.well_id, s).as_bytes())?;
                    }
                }
            }
            Ok(())
        }
        Command::Serve { data, listen, workers, max_upload } => serve(data, &listen, workers, max_upload),
    }
}

fn serve(data: PathBuf, listen: &str, workers: usize, max_upload: usize) -> Result<(), Failure> {
    use aquitrend_service::{AppState, ServiceConfig};
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let config = ServiceConfig { data_dir: data, workers, max_upload_bytes: max_upload };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::io(e.to_string()))?;
    rt.block_on(async {
        let state = AppState::open(config).map_err(|e| Failure::io(format!("data directory: {e}")))?;
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| Failure::io(format!("binding {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::io(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        aquitrend_service::serve(listener, state, shutdown).await.map_err(|e| Failure::io(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
