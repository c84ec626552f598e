use std::path::{Path, PathBuf};

use serde::Serialize;
use t2c_core::captioner::{evaluate, CaptionModel, EchoOracle};
use t2c_core::dataset::{generate_corpus, write_corpus};
use t2c_core::geometry::{CameraModel, TrajectoryPlan};
use t2c_core::raster::{overlay, render_trajectory_image, RgbImage};
use t2c_core::verify;

use crate::config::RunConfig;
use crate::experiment::{ablation, format_table, Dataset};
use crate::{AblateArgs, CliError, ConfigArgs, EvalArgs, GenDataArgs, OutArgs, RenderArgs, TrainArgs, VerifyArgs};

pub const CHECKPOINT: &str = "model.ckpt";

fn out_dir(args: &OutArgs, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    let dir = match (&args.out, cfg.and_then(|c| c.out_dir.as_ref())) {
        (Some(d), _) | (None, Some(d)) => d.clone(),
        (None, None) => Path::new("runs").join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string()),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::User(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn run_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::resolve(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    let plan = TrajectoryPlan::load(&a.plan)?;
    let cam = CameraModel::load(&a.calib)?;
    let traj = render_trajectory_image(&plan, &cam);
    // load and check the overlay before writing anything
    let composed = match &a.overlay {
        Some(p) => Some(overlay(&RgbImage::load_ppm(p)?, &traj)?),
        None => None,
    };
    let dir = out_dir(&a.out, None)?;
    let path = dir.join("trajectory.ppm");
    traj.save_ppm(&path)?;
    println!("{} {}", path.display(), traj.digest());
    if let Some(img) = composed {
        let path = dir.join("overlaid.ppm");
        img.save_ppm(&path)?;
        println!("{} {}", path.display(), img.digest());
    }
    Ok(())
}

pub fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let mut cfg = run_config(&a.cfg)?;
    if let Some(n) = a.standard {
        cfg.data.standard = n;
    }
    if let Some(n) = a.pairs {
        cfg.data.pairs = n;
    }
    let cam = match &a.calib {
        Some(p) => CameraModel::load(p)?,
        None => CameraModel::toy_default(),
    };
    let corpus = generate_corpus(&cfg.corpus_spec(), &cam)?;
    let dir = out_dir(&a.out, Some(&cfg))?;
    let manifest = write_corpus(&dir, &corpus, &cam)?;
    println!(
        "{} samples ({} standard, {} pairs, seed {}) -> {}",
        corpus.len(),
        cfg.data.standard,
        cfg.data.pairs,
        cfg.seed,
        manifest.display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = run_config(&a.cfg)?;
    let m = &a.model;
    if let Some(f) = m.fusion {
        cfg.model.fusion = f;
        // a fusion flag alone resets the query side left over from the config
        cfg.model.xattn_query = None;
    }
    if let Some(q) = m.xattn_query {
        cfg.model.xattn_query = Some(q);
    }
    if let Some(v) = m.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = m.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = m.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = m.freeze {
        cfg.train.freeze = v;
    }
    if let Some(d) = &a.data {
        cfg.data_dir = Some(d.clone());
    }
    cfg.validate()?;
    let data_dir = cfg
        .data_dir
        .clone()
        .ok_or_else(|| CliError::User("no data: pass --data or set data_dir in the config".into()))?;
    let data = Dataset::load(&data_dir)?;
    let dir = out_dir(&a.out, Some(&cfg))?;
    write_json(&dir.join("run_config.json"), &cfg)?;
    eprintln!(
        "training {} on {} samples ({} val), {} epochs",
        cfg.model.resolved_fusion()?,
        data.train.len(),
        data.val.len(),
        cfg.train.epochs
    );
    let (model, log) = crate::experiment::fit(cfg.model, &data, &cfg.train_config(), cfg.seed, |e| {
        eprintln!(
            "epoch {:>2}  train {:.4}  val {}",
            e.epoch,
            e.train_loss,
            e.val_loss.map_or("-".into(), |v| format!("{v:.4}"))
        );
    })?;
    let ckpt = dir.join(CHECKPOINT);
    model.save(&ckpt)?;
    log.write_csv(dir.join("train_log.csv"))?;
    println!("{} (best epoch {})", ckpt.display(), log.best_epoch);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let data = Dataset::load(&a.data)?;
    let examples = data.select(a.split);
    if examples.is_empty() {
        return Err(CliError::User(format!("split {:?} is empty", a.split)));
    }
    let report = match (&a.checkpoint, a.echo) {
        (_, true) => evaluate(&EchoOracle, &examples)?,
        (Some(ckpt), false) => {
            if !ckpt.is_file() {
                return Err(CliError::User(format!("checkpoint {} not found", ckpt.display())));
            }
            evaluate(&CaptionModel::load(ckpt)?, &examples)?
        }
        (None, false) => return Err(CliError::User("pass --checkpoint or --echo".into())),
    };
    let dir = out_dir(&a.out, None)?;
    report.table.write_json(dir.join("eval_table.json"))?;
    report.write_per_sample_csv(dir.join("per_sample.csv"))?;
    print!("{}", format_table(&[(format!("{:?}", a.split).to_lowercase(), report.table)]));
    println!("action accuracy {:.4} over {} samples", report.action_accuracy(), examples.len());
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Result<(), CliError> {
    let mut cfg = run_config(&a.cfg)?;
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if let Some(d) = &a.data {
        cfg.data_dir = Some(d.clone());
    }
    cfg.validate()?;
    let data = match &cfg.data_dir {
        Some(d) => Dataset::load(d)?,
        None => {
            let cam = CameraModel::toy_default();
            Dataset::from_generated(&generate_corpus(&cfg.corpus_spec(), &cam)?, &cam)
        }
    };
    let dir = out_dir(&a.out, Some(&cfg))?;
    let report = ablation(cfg.model, &data, &cfg.train_config(), cfg.seed, |q, e| {
        eprintln!("[query {q}] epoch {:>2}  train {:.4}", e.epoch, e.train_loss);
    })?;
    write_json(&dir.join("ablation.json"), &report)?;
    let rows: Vec<_> = report.rows.iter().map(|r| (r.query.to_string(), r.test.table)).collect();
    println!("test split ({} samples)", data.test.len());
    print!("{}", format_table(&rows));
    let image = &report.rows[0];
    match &image.ambiguous {
        Some(s) => {
            println!("ambiguous pairs, image query ({} samples)", s.samples);
            print!("{}", format_table(&[("image".into(), s.table)]));
            println!("action accuracy {:.4}", s.action_accuracy);
        }
        None => println!("no ambiguous pairs in the test split"),
    }
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let checks = verify::run_all(a.grad_seeds, a.oracle_pairs);
    for c in &checks {
        println!(
            "{} {:<18} {:>7.2}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Internal(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
