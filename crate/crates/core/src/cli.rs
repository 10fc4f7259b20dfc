//! Experiment commands: collect, train, eval, compare-speed, matrix.
//! Every command is a pure function of (config file, seed) to its output
//! files; rerunning reproduces the CSVs byte for byte.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::datapipe::{data_minutes, load_dataset, save_dataset, Dataset};
use crate::dynmodel::{load_model, save_model, DynModel};
use crate::error::{Error, Result};
use crate::plot;
use crate::report::{
    collect_terrain_dataset, compare_speed, projection_for, provider_for, run_cell, seeds_for,
    speed_csv, train_model, Controller, ExperimentReport, ReportRow, VariantKind,
};
use crate::simworld::PathKind;

#[derive(Parser, Debug)]
#[command(name = "scuttle", version, about = "Learned-dynamics MPC pipeline for a simulated legged millirobot")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Config JSON; embedded defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; all per-run seeds derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Collect a random-action dataset on one terrain.
    Collect {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        terrain: String,
        /// Override the configured rollout count.
        #[arg(long)]
        rollouts: Option<usize>,
        /// Override the configured transitions per rollout.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train a dynamics model on one or more datasets.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset files (comma separated or repeated).
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        /// plain | onehot | conditioned
        #[arg(long, default_value = "plain")]
        variant: String,
        /// Output stem; defaults to the variant name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate a controller on one (terrain, path) cell.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// "dd" or a model file path.
        #[arg(long)]
        controller: String,
        #[arg(long)]
        terrain: String,
        /// straight | left | right | zigzag
        #[arg(long, default_value = "straight")]
        path: String,
        /// Runs per cell; defaults to the configured count.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Sweep nominal speed and compare the baseline against the MPC.
    CompareSpeed {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "styrofoam")]
        terrain: String,
        #[arg(long, default_value = "straight")]
        path: String,
        /// Nominal leg speeds (rad/s), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        speeds: Vec<f64>,
    },
    /// Cross-terrain cost matrix and method comparison.
    Matrix {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-terrain models as terrain=model.rchm entries.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
        /// Jointly trained plain model.
        #[arg(long)]
        joint: Option<PathBuf>,
        /// One-hot conditioned joint model.
        #[arg(long)]
        onehot: Option<PathBuf>,
        /// Image-embedding conditioned joint model.
        #[arg(long)]
        conditioned: Option<PathBuf>,
        /// Paths for the method comparison, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "straight")]
        paths: Vec<String>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Collect {
            common,
            terrain,
            rollouts,
            steps,
        } => cmd_collect(&common, &terrain, rollouts, steps),
        Cmd::Train {
            common,
            data,
            variant,
            name,
        } => cmd_train(&common, &data, &variant, name.as_deref()),
        Cmd::Eval {
            common,
            controller,
            terrain,
            path,
            seeds,
        } => cmd_eval(&common, &controller, &terrain, &path, seeds),
        Cmd::CompareSpeed {
            common,
            model,
            terrain,
            path,
            speeds,
        } => cmd_compare_speed(&common, &model, &terrain, &path, &speeds),
        Cmd::Matrix {
            common,
            models,
            joint,
            onehot,
            conditioned,
            paths,
        } => cmd_matrix(
            &common,
            &models,
            joint.as_deref(),
            onehot.as_deref(),
            conditioned.as_deref(),
            &paths,
        ),
    }
}

fn setup(common: &CommonArgs) -> Result<Config> {
    let cfg = Config::load_or_default(common.config.as_deref())?;
    std::fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn write(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_collect(
    common: &CommonArgs,
    terrain: &str,
    rollouts: Option<usize>,
    steps: Option<usize>,
) -> Result<()> {
    let cfg = setup(common)?;
    let n = rollouts.unwrap_or(cfg.collect.rollouts);
    let t = steps.unwrap_or(cfg.collect.steps);
    let ds = collect_terrain_dataset(&cfg, terrain, n, t, common.seed)?;
    let path = common.out.join(format!("dataset-{terrain}-r{n}.rchd"));
    save_dataset(&path, &ds)?;
    println!(
        "collected {} pairs from {} rollouts on {terrain} ({:.1} min of robot time)",
        ds.n_pairs(),
        n,
        data_minutes(n, t, cfg.mpc.dt)
    );
    println!("dataset hash {}", ds.content_hash());
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_train(
    common: &CommonArgs,
    data: &[PathBuf],
    variant: &str,
    name: Option<&str>,
) -> Result<()> {
    let cfg = setup(common)?;
    let kind: VariantKind = variant.parse()?;
    let datasets: Vec<Dataset> = data
        .iter()
        .map(|p| load_dataset(p))
        .collect::<Result<_>>()?;
    let refs: Vec<&Dataset> = datasets.iter().collect();
    let outcome = train_model(&cfg, &refs, kind, common.seed)?;
    let stem = name.map(str::to_string).unwrap_or_else(|| variant.to_string());

    let model_path = common.out.join(format!("model-{stem}.rchm"));
    save_model(&model_path, &outcome.model)?;
    println!("wrote {}", model_path.display());

    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for (i, tl) in outcome.train_curve.iter().enumerate() {
        let vl = outcome
            .val_curve
            .get(i)
            .map(|v| format!("{v:.8}"))
            .unwrap_or_default();
        csv.push_str(&format!("{},{:.8},{}\n", i + 1, tl, vl));
    }
    write(&common.out.join(format!("loss-{stem}.csv")), &csv)?;
    if let (Some(first), Some(last)) = (outcome.val_curve.first(), outcome.val_curve.last()) {
        println!("validation loss {first:.5} -> {last:.5} over {} epochs", outcome.val_curve.len());
    }
    Ok(())
}

fn load_model_checked(path: &Path, cell: &str) -> Result<DynModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "{cell}: model file {} not found",
            path.display()
        )));
    }
    load_model(path)
}

pub fn cmd_eval(
    common: &CommonArgs,
    controller: &str,
    terrain: &str,
    path: &str,
    seeds: Option<usize>,
) -> Result<()> {
    let cfg = setup(common)?;
    let path_kind: PathKind = path.parse()?;
    let terrain_params = cfg.terrain(terrain)?.clone();
    let n_seeds = seeds.unwrap_or(cfg.eval.n_seeds);
    let seed_list = seeds_for(common.seed, n_seeds);
    let proj = projection_for(&cfg)?;

    let model;
    let (label, ctrl) = if controller == "dd" {
        (
            "dd".to_string(),
            Controller::DDrive {
                params: cfg.ddrive.params(),
                pid: cfg.ddrive.pid,
            },
        )
    } else {
        let model_path = Path::new(controller);
        model = load_model_checked(model_path, "eval")?;
        let stem = model_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        (
            stem,
            Controller::Mpc {
                model: &model,
                provider: provider_for(&cfg, &model, terrain, &proj)?,
                mpc: cfg.mpc.clone(),
            },
        )
    };

    let stats = run_cell(&cfg, &ctrl, &terrain_params, path_kind, &seed_list)?;
    println!(
        "{label} on {terrain}/{path}: cost {:.3} +/- {:.3} over {n_seeds} runs",
        stats.mean, stats.std
    );
    let mut report = ExperimentReport::new(&cfg, n_seeds);
    report.rows.push(ReportRow {
        controller: label.clone(),
        terrain: terrain.into(),
        path: path.into(),
        stats,
    });
    write(
        &common.out.join(format!("eval-{label}-{terrain}-{path}.summary.csv")),
        &report.summary_csv(),
    )?;
    write(
        &common.out.join(format!("eval-{label}-{terrain}-{path}.runs.csv")),
        &report.runs_csv(),
    )?;
    println!("report hash {}", report.report_hash());
    Ok(())
}

pub fn cmd_compare_speed(
    common: &CommonArgs,
    model_path: &Path,
    terrain: &str,
    path: &str,
    speeds: &[f64],
) -> Result<()> {
    let cfg = setup(common)?;
    let path_kind: PathKind = path.parse()?;
    let model = load_model_checked(model_path, "compare-speed")?;
    let rows = compare_speed(&cfg, &model, terrain, path_kind, speeds, common.seed)?;
    write(
        &common.out.join(format!("speed-{terrain}-{path}.csv")),
        &speed_csv(&rows),
    )?;
    let dd_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.speed, r.dd.mean)).collect();
    let mpc_pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.speed, r.mpc.mean)).collect();
    let svg = plot::line_chart(
        &format!("cost vs nominal speed on {terrain}"),
        "nominal leg speed (rad/s)",
        "mean path cost",
        &[("differential drive", dd_pts), ("model-based MPC", mpc_pts)],
    );
    write(&common.out.join(format!("speed-{terrain}-{path}.svg")), &svg)?;
    for r in &rows {
        println!(
            "speed {:5.1}: dd {:8.3}  mpc {:8.3}  gap {:8.3}",
            r.speed,
            r.dd.mean,
            r.mpc.mean,
            r.dd.mean - r.mpc.mean
        );
    }
    Ok(())
}

pub fn cmd_matrix(
    common: &CommonArgs,
    models: &[String],
    joint: Option<&Path>,
    onehot: Option<&Path>,
    conditioned: Option<&Path>,
    paths: &[String],
) -> Result<()> {
    let cfg = setup(common)?;
    let proj = projection_for(&cfg)?;
    let seed_list = seeds_for(common.seed, cfg.eval.n_seeds);

    let mut per_terrain: Vec<(String, DynModel)> = Vec::new();
    for entry in models {
        let (terrain, path) = entry.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("--models entry '{entry}' is not terrain=path"))
        })?;
        cfg.terrain(terrain)?;
        let model = load_model_checked(Path::new(path), &format!("per-terrain model {terrain}"))?;
        per_terrain.push((terrain.to_string(), model));
    }
    let path_kinds: Vec<PathKind> = paths
        .iter()
        .map(|p| p.parse())
        .collect::<Result<_>>()?;
    if path_kinds.is_empty() {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }

    // Cross-terrain matrix: every per-terrain model on every listed
    // terrain, straight path.
    let eval_terrains: Vec<String> = per_terrain.iter().map(|(t, _)| t.clone()).collect();
    let mut cross = String::from("model_terrain");
    for t in &eval_terrains {
        cross.push_str(&format!(",on_{t}"));
    }
    cross.push('\n');
    for (mt, model) in &per_terrain {
        cross.push_str(mt);
        for et in &eval_terrains {
            let ctrl = Controller::Mpc {
                model,
                provider: provider_for(&cfg, model, et, &proj)?,
                mpc: cfg.mpc.clone(),
            };
            let stats = run_cell(&cfg, &ctrl, cfg.terrain(et)?, PathKind::Straight, &seed_list)?;
            cross.push_str(&format!(",{:.6}", stats.mean));
        }
        cross.push('\n');
    }
    write(&common.out.join("matrix-cross.csv"), &cross)?;

    // Method comparison across terrains and paths.
    let mut methods: Vec<(String, Option<DynModel>)> = vec![("dd".into(), None)];
    if let Some(p) = joint {
        methods.push(("joint".into(), Some(load_model_checked(p, "joint model")?)));
    }
    if let Some(p) = onehot {
        methods.push(("onehot".into(), Some(load_model_checked(p, "onehot model")?)));
    }
    if let Some(p) = conditioned {
        methods.push((
            "conditioned".into(),
            Some(load_model_checked(p, "conditioned model")?),
        ));
    }

    let mut report = ExperimentReport::new(&cfg, cfg.eval.n_seeds);
    let mut add_cell = |name: &str, model: Option<&DynModel>, terrain: &str, pk: PathKind| -> Result<()> {
        let ctrl = match model {
            None => Controller::DDrive {
                params: cfg.ddrive.params(),
                pid: cfg.ddrive.pid,
            },
            Some(m) => Controller::Mpc {
                model: m,
                provider: provider_for(&cfg, m, terrain, &proj)?,
                mpc: cfg.mpc.clone(),
            },
        };
        let stats = run_cell(&cfg, &ctrl, cfg.terrain(terrain)?, pk, &seed_list)?;
        report.rows.push(ReportRow {
            controller: name.into(),
            terrain: terrain.into(),
            path: pk.name().into(),
            stats,
        });
        Ok(())
    };

    for terrain in &eval_terrains {
        for pk in &path_kinds {
            for (name, model) in &methods {
                add_cell(name, model.as_ref(), terrain, *pk)?;
            }
            // The matched per-terrain model is the oracle cell.
            for (mt, model) in &per_terrain {
                if mt == terrain {
                    add_cell("per-terrain", Some(model), terrain, *pk)?;
                }
            }
        }
    }
    write(&common.out.join("matrix-methods.summary.csv"), &report.summary_csv())?;
    write(&common.out.join("matrix-methods.runs.csv"), &report.runs_csv())?;

    // Bars: mean cost per method per terrain, averaged over paths.
    let mut method_names: Vec<String> = Vec::new();
    for r in &report.rows {
        if !method_names.contains(&r.controller) {
            method_names.push(r.controller.clone());
        }
    }
    let series: Vec<(String, Vec<f64>)> = method_names
        .iter()
        .map(|name| {
            let vals = eval_terrains
                .iter()
                .map(|t| {
                    let cells: Vec<&ReportRow> = report
                        .rows
                        .iter()
                        .filter(|r| &r.controller == name && &r.terrain == t)
                        .collect();
                    cells.iter().map(|r| r.stats.mean).sum::<f64>() / cells.len().max(1) as f64
                })
                .collect();
            (name.clone(), vals)
        })
        .collect();
    let svg = plot::grouped_bars("method comparison", &eval_terrains, &series);
    write(&common.out.join("matrix-methods.svg"), &svg)?;
    println!("report hash {}", report.report_hash());
    Ok(())
}
