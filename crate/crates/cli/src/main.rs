use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use diser::grammar::{derive_random, from_text, to_text, validate, Grammar};
use diser::harness::recipes::{pm_overfit, protocol_run, random_search_run, write_losses};
use diser::harness::run::{report_json, METRICS_FILE};
use diser::harness::{evaluate_run, run_experiment, EnvKind, RunConfig};
use diser::search_space::{CameraConfig, RigMode, SpotLight};
use diser::sim_stereo::{export_observation, export_scene, render, sample_scene};

#[derive(Parser)]
#[command(name = "diser", version, about = "Camera system design by co-trained reinforcement learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands that build a run config.
#[derive(Args)]
struct RunArgs {
    /// TOML run config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config and DISER_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// stereo, rig or toy.
    #[arg(long)]
    env: Option<String>,
    /// Rig experiment: a, b or c.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Add the steerable light to the stereo action space.
    #[arg(long)]
    illumination: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = &self.env {
            cfg.env = EnvKind::from_tag(e).with_context(|| format!("unknown env `{e}`"))?;
        }
        if let Some(m) = &self.mode {
            cfg.rig.mode = RigMode::from_tag(m).with_context(|| format!("unknown mode `{m}`"))?;
        }
        if let Some(n) = self.steps {
            cfg.train.total_steps = n;
        }
        if let Some(w) = self.workers {
            if w == 0 {
                bail!("--workers must be at least 1");
            }
            cfg.train.workers = w;
        }
        if self.illumination {
            cfg.stereo.illumination = true;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a camera designer and write a run directory.
    Train(RunArgs),
    /// Recompute the metrics of a run directory from its checkpoints.
    Eval {
        dir: PathBuf,
        /// Where to write the recomputed report (default: print only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a random sphere scene from one camera.
    Render {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Only the light model is read from it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value_t = 75.0)]
        z: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        yaw: f64,
        #[arg(long, default_value_t = 45.0)]
        fov: f64,
        #[arg(long, allow_negative_numbers = true)]
        light_angle: Option<f64>,
        #[arg(long)]
        light_intensity: Option<f64>,
    },
    /// Check a system string against the imaging grammar.
    Parse {
        /// The string itself, or a path to a file holding it.
        input: String,
    },
    /// Print random system strings from the imaging grammar.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overfit a perception model on a small fixed buffer.
    PmOverfit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
    },
    /// Uniformly random actions in the configured environment.
    RandomSearch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
    },
    /// Select a rig from a trained run: top-k test episodes, re-evaluated.
    Protocol {
        dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.config()?;
            let dir = cfg.resolve_out(args.out.as_deref());
            let report = run_experiment(&cfg, &dir)?;
            println!("run written to {}", dir.display());
            println!("mean test return {:.4}", report.mean_test_return);
            if let Some(sel) = &report.selected {
                println!("selected rig: {} cameras, score {:.4}", sel.cameras.len(), sel.score);
            }
        }
        Command::Eval { dir, out } => {
            let report = evaluate_run(&dir)?;
            let json = report_json(&report)?;
            if let Some(p) = out {
                std::fs::write(&p, &json)?;
            }
            let saved = std::fs::read_to_string(dir.join(METRICS_FILE)).ok();
            match saved {
                Some(s) if s == json => println!("metrics reproduced"),
                Some(_) => {
                    println!("metrics differ from {}", dir.join(METRICS_FILE).display());
                    return Ok(ExitCode::from(1));
                }
                None => print!("{json}"),
            }
        }
        Command::Render { seed, out, config, x, z, yaw, fov, light_angle, light_intensity } => {
            let light_model = match config {
                Some(p) => RunConfig::load(&p)?.stereo.light,
                None => Default::default(),
            };
            let scene = sample_scene(seed);
            let cam = CameraConfig { x, z, yaw, fov, ..Default::default() };
            let light = match (light_angle, light_intensity) {
                (None, None) => None,
                (a, i) => Some(SpotLight { angle: a.unwrap_or(0.0), intensity: i.unwrap_or(1.0) }),
            };
            let obs = render(&scene, &cam, light.as_ref().map(|l| (l, &light_model)));
            std::fs::create_dir_all(&out)?;
            export_scene(&out, &scene)?;
            export_observation(&out, "view", &obs)?;
            println!(
                "sphere r={:.3} at x={:.3} z={:.3}; {} lit pixels",
                scene.radius,
                scene.x,
                scene.z,
                obs.image.nonzero_count()
            );
        }
        Command::Parse { input } => {
            let text = if Path::new(&input).is_file() { std::fs::read_to_string(&input)? } else { input };
            let g = Grammar::imaging();
            let s = from_text(text.trim())?;
            match validate(&g, &s) {
                Ok(tree) => {
                    println!("valid");
                    print!("{}", tree.pretty(&g));
                }
                Err(e) => {
                    println!("invalid: {e}");
                    return Ok(ExitCode::from(1));
                }
            }
        }
        Command::Generate { seed, count, depth, out } => {
            let g = Grammar::imaging();
            let lines: Vec<String> = (0..count as u64)
                .map(|k| to_text(&derive_random(&g, seed.wrapping_add(k), depth)))
                .collect();
            let body = lines.join("\n") + "\n";
            match out {
                Some(p) => std::fs::write(p, body)?,
                None => print!("{body}"),
            }
        }
        Command::PmOverfit { config, seed, out, samples, steps } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?.perception,
                None => Default::default(),
            };
            let losses = pm_overfit(&cfg, samples, steps, seed);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_losses(&dir.join("losses.csv"), &losses)?;
            }
            let first = losses.first().copied().unwrap_or(f64::NAN);
            let last = losses.last().copied().unwrap_or(f64::NAN);
            println!("loss {first:.4} -> {last:.4} over {steps} steps on {samples} samples");
        }
        Command::RandomSearch { run, episodes } => {
            let cfg = run.config()?;
            let dir = cfg.resolve_out(run.out.as_deref());
            let out = random_search_run(&cfg, episodes, &dir)?;
            let mean = out.returns.iter().sum::<f64>() / out.returns.len().max(1) as f64;
            println!("mean episode return {mean:.4}, best {:.4}; written to {}", out.best_return, dir.display());
        }
        Command::Protocol { dir, seed, out } => {
            let target = out.unwrap_or_else(|| dir.clone());
            let p = protocol_run(&dir, seed, &target)?;
            println!(
                "selected rig: {} cameras, re-evaluated reward {:.4}",
                p.selected.rig.cameras.len(),
                p.selected.score
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
