use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crowdpose3d::io;
use crowdpose3d::pipeline::{self, PipelineConfig, PipelineError};
use crowdpose3d::synth::{generate_with, SceneSpec};
use crowdpose3d::{metrics, timing};

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "crowdpose3d", version, about = "Multi-view 3D pose reconstruction for crowds")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct Inputs {
    /// Camera calibration JSON.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// 2D detections JSON.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Cached homographies JSON.
    #[arg(long)]
    homographies: Option<PathBuf>,
    /// Ground-plane correspondence JSON.
    #[arg(long)]
    correspondences: Option<PathBuf>,
    /// Skeleton schema JSON.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Directory for per-pair cost matrices and assignments.
    #[arg(long)]
    dump_matching: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Match and reconstruct every frame of a detections file.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        /// Ground-truth poses, to append an evaluation.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Ground-truth correspondence, for matching precision.
        #[arg(long)]
        gt_correspondence: Option<PathBuf>,
    },
    /// Generate a synthetic scene, export it, and evaluate the pipeline on it.
    Synth {
        #[arg(long)]
        persons: Option<usize>,
        #[arg(long)]
        views: Option<usize>,
        /// Pixel noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        occlusion: Option<f64>,
        #[arg(long)]
        swap: Option<f64>,
        /// Minimum spacing between persons, metres.
        #[arg(long)]
        spacing: Option<f64>,
        /// Number of frames; frame f uses seed + f.
        #[arg(long, default_value_t = 1)]
        frames: usize,
        /// Only export the scene.
        #[arg(long)]
        no_eval: bool,
    },
    /// Compare predicted and ground-truth pose files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Run only the matching stage and emit person tracks.
    Match {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Timing sweep of the LAP, pairwise matching and reconstruction.
    Bench {
        /// Comma-separated person counts.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.paths.out = Some(out.clone());
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(s) = common.seed {
        cfg.synth.seed = s;
    }
    Ok(cfg)
}

fn apply_inputs(cfg: &mut PipelineConfig, i: &Inputs) {
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.calibration, &i.calib),
        (&mut p.detections, &i.detections),
        (&mut p.homographies, &i.homographies),
        (&mut p.correspondences, &i.correspondences),
        (&mut p.schema, &i.schema),
        (&mut p.dump_matching, &i.dump_matching),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
}

fn init_logging(level: &str) {
    let env = env_logger::Env::new().filter_or("CROWDPOSE3D_LOG", level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn init_threads(n: usize) -> Result<(), PipelineError> {
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn write_or_print(out: Option<&Path>, name: &str, text: &str) -> Result<(), PipelineError> {
    match out {
        Some(dir) => Ok(io::write_text(&dir.join(name), text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(&cli.common)?;
    init_logging(&cfg.log_level);
    init_threads(cfg.threads)?;
    match cli.command {
        Command::Run { inputs, ground_truth, gt_correspondence } => {
            apply_inputs(&mut cfg, &inputs);
            if ground_truth.is_some() {
                cfg.paths.ground_truth = ground_truth;
            }
            if gt_correspondence.is_some() {
                cfg.paths.gt_correspondence = gt_correspondence;
            }
            let run = pipeline::run_pipeline(&cfg)?;
            if cfg.paths.out.is_none() {
                print!("{}", serde_json::to_string_pretty(&run.pose_frames()).expect("serializable") + "\n");
            }
            if let Some(r) = &run.report {
                eprintln!("{}", r.to_json());
            }
            Ok(())
        }
        Command::Synth { persons, views, noise, occlusion, swap, spacing, frames, no_eval } => {
            let base = SceneSpec {
                n_persons: persons.unwrap_or(cfg.synth.n_persons),
                n_views: views.unwrap_or(cfg.synth.n_views),
                noise_px: noise.unwrap_or(cfg.synth.noise_px),
                occlusion_rate: occlusion.unwrap_or(cfg.synth.occlusion_rate),
                swap_rate: swap.unwrap_or(cfg.synth.swap_rate),
                min_spacing: spacing.unwrap_or(cfg.synth.min_spacing),
                ..cfg.synth.clone()
            };
            let schema = cfg.schema()?;
            let scenes = (0..frames.max(1))
                .map(|f| {
                    let spec = SceneSpec { seed: base.seed.wrapping_add(f as u64), ..base.clone() };
                    generate_with(&spec, &schema, &cfg.sigma).map_err(|e| PipelineError::Config(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let dir = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("synth_out"));
            let mut run_cfg = pipeline::export_scenes(&scenes, &dir.join("input"), &cfg)?;
            io::write_text(&dir.join("input").join("scene.toml"), &toml::to_string(&base).expect("serializable"))?;
            if no_eval {
                return Ok(());
            }
            run_cfg.paths.out = Some(dir.clone());
            let run = pipeline::run_pipeline(&run_cfg)?;
            if let Some(r) = &run.report {
                println!("{}", r.to_json());
            }
            Ok(())
        }
        Command::Eval { pred, gt, schema } => {
            if schema.is_some() {
                cfg.paths.schema = schema;
            }
            let schema = cfg.schema()?;
            let pred = io::read_poses(&pred)?;
            let gt = io::read_poses(&gt)?;
            let to_frames = |frames: Vec<io::PoseFrame>| {
                let mut out = vec![Vec::new(); frames.iter().map(|f| f.frame + 1).max().unwrap_or(0)];
                for f in frames {
                    out[f.frame] = f.persons.iter().map(|p| p.to_pose()).collect();
                }
                out
            };
            let (pred, gt) = (to_frames(pred), to_frames(gt));
            let empty = Vec::new();
            let pairs: Vec<_> = (0..pred.len().max(gt.len()))
                .map(|f| (pred.get(f).unwrap_or(&empty).as_slice(), gt.get(f).unwrap_or(&empty).as_slice()))
                .collect();
            let report = metrics::EvalReport {
                mpjpe_mm: Some(metrics::mpjpe_frames(&pairs, &schema, &cfg.eval).map_err(|e| PipelineError::Input(e.to_string()))?),
                pcp: metrics::pcp_frames(&pairs, &schema, &cfg.eval).ok(),
                ..Default::default()
            };
            write_or_print(cfg.paths.out.as_deref(), "eval.json", &(report.to_json() + "\n"))
        }
        Command::Match { inputs } => {
            apply_inputs(&mut cfg, &inputs);
            let loaded = pipeline::load_inputs(&cfg)?;
            let mut out = Vec::new();
            for (f, rec) in loaded.frames.iter().enumerate() {
                let views = io::frame_views(rec, &loaded.cameras, loaded.schema.num_joints(), &cfg.sigma)
                    .map_err(|e| PipelineError::Input(format!("frame {f}: {e}")))?;
                match pipeline::match_frame(f, &views, &loaded.ground_maps, &loaded.schema, &cfg.matching) {
                    Ok(m) => {
                        if let Some(dir) = &cfg.paths.dump_matching {
                            for d in &m.dumps {
                                io::write_json(&dir.join(format!("frame{:05}_view{}_view{}.json", f, d.view_a, d.view_b)), d)?;
                            }
                        }
                        out.push(io::TrackFrame::from_tracks(f, &m.tracks));
                    }
                    Err(e) => {
                        log::warn!("frame {f}: {e}");
                        out.push(io::TrackFrame::from_tracks(f, &Default::default()));
                    }
                }
            }
            let text = serde_json::to_string_pretty(&out).expect("serializable") + "\n";
            write_or_print(cfg.paths.out.as_deref(), "tracks.json", &text)
        }
        Command::Bench { n, reps } => {
            let rows = timing::bench_sweep(&n, reps, cfg.synth.seed);
            write_or_print(cfg.paths.out.as_deref(), "bench.csv", &timing::to_csv(&rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
