use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use darts::eda::{build_table, EdaTable, EdaTableConfig};
use darts::film::{
    image_mse, read_pfm, write_histogram_csv, write_pfm, write_png_tonemapped, Image,
};
use darts::renderer::{
    render_time_gated_threads, render_transient_threads, Diagnostics, GateMode, SensorGate,
    StrategyConfig,
};
use darts::scene_desc::load_scene;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "darts", about = "Time-of-flight volumetric path tracer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a time-gated image or a transient frame sequence.
    Render(RenderArgs),
    /// Build the elliptical direction table and cache it to disk.
    Tabulate(TabulateArgs),
    /// Print MSE and relative MSE between two pfm images.
    Compare { reference: PathBuf, image: PathBuf },
    /// Run the statistical sampler verification suite.
    Pdftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Gated,
    Transient,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Vanilla,
    Da,
    Eda,
    Darts,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Parser)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 uses all available cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, value_enum, default_value_t = Mode::Gated)]
    mode: Mode,
    /// Gate window start in seconds; defaults to the scene's gate block.
    #[arg(long)]
    gate_start: Option<f64>,
    #[arg(long)]
    gate_width: Option<f64>,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, value_enum, default_value_t = Strategy::Darts)]
    strategy: Strategy,
    /// Elliptical/phase direction mixture knob.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Include the camera-segment transport time in recorded path times.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    warp: Switch,
    /// Output pfm path (stem for transient frame sequences).
    #[arg(long)]
    out: PathBuf,
    /// Direction-table cache file; loaded when the medium matches, rebuilt
    /// and rewritten otherwise.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Parser)]
struct TabulateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 uses all available cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Render(args) => render(args),
        Command::Tabulate(args) => tabulate(args),
        Command::Compare { reference, image } => compare(&reference, &image),
        Command::Pdftest => pdftest(),
    }
}

fn strategy_config(strategy: Strategy, alpha: f64) -> StrategyConfig {
    let mut cfg = match strategy {
        Strategy::Vanilla => StrategyConfig::vanilla(),
        Strategy::Da => StrategyConfig::da_only(),
        Strategy::Eda => StrategyConfig::eda_only(),
        Strategy::Darts => StrategyConfig::darts(),
    };
    cfg.alpha = alpha;
    cfg
}

fn strategy_name(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::Vanilla => "vanilla",
        Strategy::Da => "da",
        Strategy::Eda => "eda",
        Strategy::Darts => "darts",
    }
}

fn load_or_build_table(
    medium: &darts::Medium,
    cache: Option<&Path>,
    threads: usize,
) -> Result<EdaTable> {
    if let Some(path) = cache {
        if path.exists() {
            match EdaTable::load(path, medium) {
                Ok(table) => {
                    eprintln!("loaded direction table from {}", path.display());
                    return Ok(table);
                }
                Err(e) => eprintln!("table cache rejected ({e}); rebuilding"),
            }
        }
    }
    let start = Instant::now();
    let table = with_pool(threads, || build_table(medium, &EdaTableConfig::default(), 0));
    eprintln!("built direction table in {:.1} s", start.elapsed().as_secs_f64());
    if let Some(path) = cache {
        table.save(path).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("cached direction table to {}", path.display());
    }
    Ok(table)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
    }
}

fn write_manifest(
    path: &Path,
    args: &RenderArgs,
    width: usize,
    height: usize,
    wall: f64,
    diag: &Diagnostics,
    gate: &SensorGate,
) -> Result<()> {
    let text = format!(
        "scene = {}\nmode = {}\nstrategy = {}\nspp = {}\nseed = {}\nthreads = {}\nalpha = {}\n\
         warp = {}\ngate_start = {}\ngate_width = {}\nframes = {}\nresolution = {}x{}\n\
         wall_time_s = {:.3}\nconnection_attempts = {}\nzero_weight_rejections = {}\n\
         nonfinite_paths = {}\n",
        args.scene.display(),
        if matches!(args.mode, Mode::Gated) { "gated" } else { "transient" },
        strategy_name(args.strategy),
        args.spp,
        args.seed,
        args.threads,
        args.alpha,
        gate.warp,
        gate.gate_start,
        gate.gate_width,
        gate.frame_count,
        width,
        height,
        wall,
        diag.connection_attempts,
        diag.zero_weight_rejections,
        diag.nonfinite_paths,
    );
    std::fs::write(path, text)?;
    Ok(())
}

fn render(args: RenderArgs) -> Result<()> {
    let (desc, scene) = load_scene(&args.scene)
        .with_context(|| format!("loading {}", args.scene.display()))?;
    let (start, width) = match (args.gate_start, args.gate_width, &desc.gate) {
        (Some(s), Some(w), _) => (s, w),
        (s, w, Some(g)) => (s.unwrap_or(g.start), w.unwrap_or(g.width)),
        _ => bail!("no gate: pass --gate-start/--gate-width or add a [gate] block to the scene"),
    };
    let mut gate = match args.mode {
        Mode::Gated => SensorGate::gated(start, width),
        Mode::Transient => SensorGate::transient(start, width, args.frames),
    };
    gate.warp = matches!(args.warp, Switch::On);
    gate.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let strategy = strategy_config(args.strategy, args.alpha);
    strategy.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let table = if strategy.use_eda_direction {
        Some(load_or_build_table(&scene.medium, args.table.as_deref(), args.threads)?)
    } else {
        None
    };

    let clock = Instant::now();
    let diag;
    match gate.mode {
        GateMode::TimeGated => {
            let (image, d) = render_time_gated_threads(
                &scene, &gate, &strategy, table.as_ref(), args.spp, args.seed, args.threads,
            );
            diag = d;
            write_pfm(&image, &args.out)?;
            write_png_tonemapped(&image, &args.out.with_extension("png"))?;
        }
        GateMode::Transient => {
            let (transient, d) = render_transient_threads(
                &scene, &gate, &strategy, table.as_ref(), args.spp, args.seed, args.threads,
            );
            diag = d;
            let stem = args.out.with_extension("");
            for (j, frame) in transient.frames.iter().enumerate() {
                write_pfm(frame, &frame_path(&stem, j))?;
            }
            let sum = transient.frame_sum();
            write_png_tonemapped(&sum, &args.out.with_extension("png"))?;
            let centers: Vec<f64> = (0..gate.frame_count)
                .map(|j| {
                    let w = gate.frame_window(j);
                    0.5 * (w.t_min + w.t_max)
                })
                .collect();
            let values: Vec<[f64; 3]> = transient
                .frames
                .iter()
                .map(|f| {
                    let n = (f.width * f.height) as f64;
                    let mut acc = [0.0f64; 3];
                    for px in f.data.chunks_exact(3) {
                        for c in 0..3 {
                            acc[c] += px[c] as f64 / n;
                        }
                    }
                    acc
                })
                .collect();
            write_histogram_csv(&centers, &values, &histogram_path(&stem))?;
        }
    }
    let wall = clock.elapsed().as_secs_f64();
    write_manifest(
        &manifest_path(&args.out),
        &args,
        scene.camera.width,
        scene.camera.height,
        wall,
        &diag,
        &gate,
    )?;
    println!(
        "rendered {} spp in {wall:.2} s; weight-rejection fraction {:.4}",
        args.spp,
        diag.rejection_fraction()
    );
    Ok(())
}

fn frame_path(stem: &Path, frame: usize) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push(format!("_f{frame:04}.pfm"));
    stem.with_file_name(name)
}

fn histogram_path(stem: &Path) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push("_histogram.csv");
    stem.with_file_name(name)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.txt");
    out.with_file_name(name)
}

fn tabulate(args: TabulateArgs) -> Result<()> {
    let (_, scene) = load_scene(&args.scene)?;
    let start = Instant::now();
    let table =
        with_pool(args.threads, || build_table(&scene.medium, &EdaTableConfig::default(), args.seed));
    println!("built direction table in {:.1} s", start.elapsed().as_secs_f64());
    table.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn compare(reference: &Path, image: &Path) -> Result<()> {
    let a = read_pfm(reference)?;
    let b = read_pfm(image)?;
    if (a.width, a.height) != (b.width, b.height) {
        bail!(
            "size mismatch: {}x{} vs {}x{}",
            a.width,
            a.height,
            b.width,
            b.height
        );
    }
    let mse = image_mse(&a, &b);
    let ref_power = mean_square(&a);
    let relative = if ref_power > 0.0 { mse / ref_power } else { f64::INFINITY };
    println!("mse = {mse:e}");
    println!("relative_mse = {relative:e}");
    Ok(())
}

fn mean_square(img: &Image) -> f64 {
    img.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / img.data.len() as f64
}

fn pdftest() -> Result<()> {
    let results = darts::verify::run_all();
    let mut failed = 0;
    for r in &results {
        println!("{} {} ({})", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} sampler checks failed");
    }
    Ok(())
}
