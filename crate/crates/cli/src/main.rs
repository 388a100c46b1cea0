use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use caaug::database::{load_database_for, save_database, DatabaseBuilder};
use caaug::kitti::{read_frame, read_velodyne, write_frame, KittiLayout};
use caaug::native::NativeFrame;
use caaug::occlusion::Strategy;
use caaug::pipeline::stats::{FrameStats, StatsSummary};
use caaug::pipeline::synthetic::{generate_synthetic_scene, random_wall_scene};
use caaug::pipeline::validate::validate_output;
use caaug::pipeline::{augment_dataset, render::render_ppm, AugConfig};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable consulted when a KITTI root is given as `-`.
const KITTI_ROOT_ENV: &str = "CAAUG_KITTI_ROOT";

/// Latency budget per frame for the soft check in `stats`.
const FRAME_BUDGET_MS: f64 = 50.0;

#[derive(Parser)]
#[command(name = "caaug", version, about = "Context-aware ground-truth insertion for lidar point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a ground-truth database from a KITTI split.
    BuildDb {
        /// KITTI root or split directory; `-` reads CAAUG_KITTI_ROOT.
        kitti_root: PathBuf,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated frame ids or `first..last` ranges.
        #[arg(long)]
        frames: Option<String>,
    },
    /// Augment frames and write a KITTI-layout output tree.
    Augment {
        /// KITTI root or split directory; `-` reads CAAUG_KITTI_ROOT.
        kitti_root: PathBuf,
        db: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        /// Comma-separated frame ids or `first..last` ranges.
        #[arg(long)]
        frames: Option<String>,
        /// Worker threads; 0 uses one per core.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate the statistics of an output tree.
    Stats { out_dir: PathBuf },
    /// Render a frame's range image as a PPM.
    Render {
        /// A `.frame` file, or a velodyne `.bin` (projected with the config spec).
        frame: PathBuf,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-check every invariant of an output tree; exits 1 on violation.
    Validate { out_dir: PathBuf },
    /// Write random synthetic wall scenes as a KITTI split.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: caaug::occlusion::OcclusionError| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<AugConfig> {
    match path {
        None => Ok(AugConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            AugConfig::parse(&text).with_context(|| format!("in config {}", p.display()))
        }
    }
}

fn kitti_root(arg: &Path) -> Result<PathBuf> {
    if arg != Path::new("-") {
        return Ok(arg.to_path_buf());
    }
    match std::env::var_os(KITTI_ROOT_ENV) {
        Some(v) => Ok(PathBuf::from(v)),
        None => bail!("KITTI root given as `-` but {KITTI_ROOT_ENV} is not set"),
    }
}

/// Expands `a,b,c..d` where `c..d` is an inclusive numeric range padded to
/// the width of `c`.
fn parse_frames(list: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let lo: u64 = a.parse().with_context(|| format!("bad range start `{a}`"))?;
                let hi: u64 = b.parse().with_context(|| format!("bad range end `{b}`"))?;
                if lo > hi {
                    bail!("empty frame range `{item}`");
                }
                out.extend((lo..=hi).map(|i| format!("{i:0w$}", w = a.len())));
            }
            None => out.push(item.to_string()),
        }
    }
    Ok(out)
}

fn frame_ids(layout: &KittiLayout, frames: Option<&str>) -> Result<Vec<String>> {
    match frames {
        Some(list) => parse_frames(list),
        None => Ok(layout.frame_ids()?),
    }
}

fn build_db(root: &Path, out: &Path, config: Option<&Path>, frames: Option<&str>) -> Result<ExitCode> {
    let config = load_config(config)?;
    let layout = KittiLayout::open(&kitti_root(root)?);
    let ids = frame_ids(&layout, frames)?;
    let mut builder = DatabaseBuilder::new(config.spec);
    for id in &ids {
        let frame = read_frame(&layout, id).with_context(|| format!("frame {id}"))?;
        builder.add_frame(id, &frame.cloud, &frame.boxes);
    }
    let db = builder.finish();
    save_database(&db, out)?;
    let counts: Vec<String> = db.class_counts().iter().map(|(c, n)| format!("{c} {n}")).collect();
    println!(
        "{} objects from {} frames ({}); skipped {} empty, {} other-class, {} invalid",
        db.len(),
        db.meta.frames,
        counts.join(", "),
        db.meta.skipped_empty,
        db.meta.skipped_class,
        db.meta.skipped_invalid
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn augment(
    root: &Path,
    db: &Path,
    out_dir: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    strategy: Option<Strategy>,
    frames: Option<&str>,
    workers: Option<usize>,
) -> Result<ExitCode> {
    let mut config = load_config(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(s) = strategy {
        config.strategy = s;
    }
    if let Some(w) = workers {
        config.workers = w;
    }
    let layout = KittiLayout::open(&kitti_root(root)?);
    let ids = frame_ids(&layout, frames)?;
    let db = load_database_for(db, &config.spec).with_context(|| format!("loading {}", db.display()))?;
    let stats = augment_dataset(&layout, &ids, &db, &config, out_dir)?;
    let mut sum = StatsSummary::default();
    stats.iter().for_each(|s| sum.add(s));
    println!(
        "{} frames: {} of {} candidates accepted, {} dropped by occlusion",
        sum.frames, sum.accepted, sum.candidates, sum.dropped
    );
    Ok(ExitCode::SUCCESS)
}

fn stats(out_dir: &Path) -> Result<ExitCode> {
    let dir = out_dir.join("stats");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "stats"))
        .collect();
    paths.sort();
    let mut sum = StatsSummary::default();
    for p in &paths {
        let mut st = FrameStats::parse(&fs::read_to_string(p)?).map_err(anyhow::Error::msg).with_context(|| p.display().to_string())?;
        if let Ok(t) = fs::read_to_string(p.with_extension("timing")) {
            st.timings = FrameStats::parse_timings(&t).map_err(anyhow::Error::msg)?;
        }
        sum.add(&st);
    }
    print!("{}", sum.to_text());
    if let Some(total) = sum.timings.get("total") {
        let mut ms: Vec<f64> = total.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let median = ms[ms.len() / 2];
        if median > FRAME_BUDGET_MS {
            eprintln!("warning: median frame latency {median:.1} ms exceeds the {FRAME_BUDGET_MS} ms budget");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn render(frame: &Path, out: &Path, config: Option<&Path>) -> Result<ExitCode> {
    let (cloud, spec) = if frame.extension().is_some_and(|x| x == "frame") {
        let bytes = fs::read(frame).with_context(|| format!("reading {}", frame.display()))?;
        let f = NativeFrame::decode(&bytes)?;
        (f.cloud, f.spec)
    } else {
        (read_velodyne(frame)?, load_config(config)?.spec)
    };
    fs::write(out, render_ppm(&cloud, &spec)).with_context(|| format!("writing {}", out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn validate(out_dir: &Path) -> Result<ExitCode> {
    let report = validate_output(out_dir)?;
    for v in &report.violations {
        println!("violation {v}");
    }
    if report.ok() {
        println!("{} frames valid", report.frames);
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} violations in {} frames", report.violations.len(), report.frames);
        Ok(ExitCode::from(1))
    }
}

fn synth(out: &Path, frames: usize, seed: u64, config: Option<&Path>) -> Result<ExitCode> {
    let spec = load_config(config)?.spec;
    for i in 0..frames {
        let id = format!("{i:06}");
        let mut rng = ChaCha8Rng::seed_from_u64(caaug::pipeline::rng::frame_seed(seed, &id));
        let desc = random_wall_scene(spec, &mut rng);
        let mut frame = generate_synthetic_scene(&id, &desc, &mut rng);
        frame.cloud = frame.cloud.strip_tags();
        write_frame(&frame, None, &out.join("training"))?;
    }
    println!("{frames} synthetic frames written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildDb { kitti_root, out, config, frames } => build_db(&kitti_root, &out, config.as_deref(), frames.as_deref()),
        Command::Augment { kitti_root, db, out_dir, config, seed, strategy, frames, workers } => augment(
            &kitti_root,
            &db,
            &out_dir,
            config.as_deref(),
            seed,
            strategy,
            frames.as_deref(),
            workers,
        ),
        Command::Stats { out_dir } => stats(&out_dir),
        Command::Render { frame, out, config } => render(&frame, &out, config.as_deref()),
        Command::Validate { out_dir } => validate(&out_dir),
        Command::Synth { out, frames, seed, config } => synth(&out, frames, seed, config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_lists() {
        assert_eq!(parse_frames("000001,000003..000005").unwrap(), ["000001", "000003", "000004", "000005"]);
        assert!(parse_frames("5..2").is_err());
        assert!(parse_frames("").unwrap().is_empty());
    }
}
