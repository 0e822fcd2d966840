use std::path::{Path, PathBuf};

use dataset::{
    build_manifest, read_evolution, write_evolution, BinSpec, DatasetManifest, SequenceStore,
    Split,
};
use degradation::{calibrate_lambda, simulate_with_id, DegradationParams, EvolutionSequence};
use hetmigen::{generate as run_generation, parse_params_csv};
use rayon::prelude::*;
use training::{
    evaluate, load_checkpoint, save_checkpoint, train as run_training, write_loss_csv, EvalModel,
    OptimizerKind, TrainConfig,
};
use transvnet::{rollout, ModelConfig};
use voxel_core::{largest_component_fraction, Connectivity, MINERAL};

use crate::{data_err, runtime_err, CliResult, OptimizerArg, SplitArg, StubArg};

/// Worker count: OSTEOVOX_THREADS beats --jobs; 0 leaves it to rayon.
fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool, crate::CliError> {
    let jobs = std::env::var("OSTEOVOX_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(jobs);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(runtime_err)
}

/// Per-job seed mixing so results do not depend on scheduling or row order.
fn mix_seed(seed: u64, id: u64) -> u64 {
    seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn generate(
    params_path: &Path,
    out_dir: &Path,
    seed: u64,
    dims: usize,
    jobs: usize,
    max_iterations: u32,
) -> CliResult {
    let text = std::fs::read_to_string(params_path).map_err(data_err)?;
    let rows = parse_params_csv(&text).map_err(data_err)?;
    std::fs::create_dir_all(out_dir).map_err(runtime_err)?;
    let max_iterations = (max_iterations > 0).then_some(max_iterations);

    let pool = worker_pool(jobs)?;
    let results: Vec<Result<String, crate::CliError>> = pool.install(|| {
        rows.par_iter()
            .map(|row| {
                let outcome =
                    run_generation(row, (dims, dims, dims), mix_seed(seed, row.id), max_iterations)
                        .map_err(data_err)?;
                let vf = outcome
                    .grid
                    .volume_fraction(MINERAL)
                    .map_err(data_err)?;
                let clustering = if outcome.grid.count_phase(MINERAL) > 0 {
                    largest_component_fraction(&outcome.grid, MINERAL, Connectivity::Face6)
                        .map_err(data_err)?
                } else {
                    0.0
                };
                let seq = EvolutionSequence::new(row.id, vec![outcome.grid], None)
                    .map_err(data_err)?;
                let path = out_dir.join(format!("{:06}.ovxe", row.id));
                write_evolution(&seq, &path).map_err(runtime_err)?;
                Ok(format!(
                    "id={} vf={vf:.4} clustering={clustering:.4} shortfall={}",
                    row.id, !outcome.reached_target
                ))
            })
            .collect()
    });
    for line in results {
        println!("{}", line?);
    }
    Ok(())
}

fn evolution_files(dir: &Path) -> Result<Vec<PathBuf>, crate::CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(data_err)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ovxe"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(crate::CliError::Data(format!(
            "no evolution files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

pub fn degrade(
    dir: &Path,
    months: u32,
    r0: f64,
    target_loss: f64,
    seed: u64,
    jobs: usize,
) -> CliResult {
    // The rate decay is a material property calibrated on the full
    // 36-month window; --months only sets the simulated horizon.
    let lambda = calibrate_lambda(r0, target_loss, degradation::MAX_MONTHS).map_err(data_err)?;
    let files = evolution_files(dir)?;
    let pool = worker_pool(jobs)?;
    let results: Vec<Result<String, crate::CliError>> = pool.install(|| {
        files
            .par_iter()
            .map(|path| {
                let seq = read_evolution(path).map_err(data_err)?;
                let initial = &seq.frames[0];
                let id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.parse::<u64>().ok())
                    .unwrap_or(0);
                let params = DegradationParams::new(r0, lambda, months, mix_seed(seed, id))
                    .map_err(data_err)?;
                let out = simulate_with_id(initial, &params, id).map_err(|e| {
                    crate::CliError::Data(format!("{}: {e}", path.display()))
                })?;
                let first = out.frames[0].count_phase(MINERAL) as f64;
                let last = out.frames[out.frames.len() - 1].count_phase(MINERAL) as f64;
                let loss = if first > 0.0 { 1.0 - last / first } else { 0.0 };
                write_evolution(&out, path).map_err(runtime_err)?;
                Ok(format!(
                    "{} months={months} loss={loss:.4}",
                    path.file_name().unwrap_or_default().to_string_lossy()
                ))
            })
            .collect()
    });
    for line in results {
        println!("{}", line?);
    }
    Ok(())
}

pub fn build_dataset(dir: &Path, out: &Path, seed: u64, bin_width: f64) -> CliResult {
    let files = evolution_files(dir)?;
    let (mut manifest, rejected) =
        build_manifest(&files, BinSpec::Width(bin_width), seed).map_err(data_err)?;
    for (path, reason) in &rejected {
        eprintln!("rejected {}: {reason}", path.display());
    }
    for warning in &manifest.warnings {
        eprintln!("warning: {warning}");
    }
    // Store paths relative to the manifest when possible, so the dataset
    // directory can move as a unit.
    if let Some(base) = out.parent() {
        for entry in &mut manifest.entries {
            if let Ok(rel) = Path::new(&entry.file).strip_prefix(base) {
                entry.file = rel.to_string_lossy().into_owned();
            }
        }
    }
    manifest.save(out).map_err(runtime_err)?;
    println!(
        "test {} / val {} / train {}",
        manifest.split_len(Split::Test),
        manifest.split_len(Split::Val),
        manifest.split_len(Split::Train)
    );
    Ok(())
}

pub struct TrainArgs {
    pub manifest: PathBuf,
    pub model_config: PathBuf,
    pub out: PathBuf,
    pub epochs: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerArg,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub horizon: u32,
    pub augment: bool,
    pub seed: u64,
    pub checkpoint_every: usize,
}

fn manifest_and_store(path: &Path) -> Result<(DatasetManifest, SequenceStore), crate::CliError> {
    let manifest = DatasetManifest::load(path).map_err(data_err)?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, SequenceStore::new(base)))
}

pub fn train(args: TrainArgs) -> CliResult {
    let (manifest, store) = manifest_and_store(&args.manifest)?;
    let model_config = ModelConfig::load(&args.model_config).map_err(data_err)?;
    std::fs::create_dir_all(&args.out).map_err(runtime_err)?;

    let optimizer = match args.optimizer {
        OptimizerArg::Sgd => OptimizerKind::Sgd {
            lr: args.lr,
            momentum: args.momentum,
        },
        OptimizerArg::Adam => OptimizerKind::Adam {
            lr: args.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
    };
    let train_config = TrainConfig {
        epochs: args.epochs,
        steps_per_epoch: (args.steps > 0).then_some(args.steps),
        batch_size: args.batch_size,
        optimizer,
        horizon: args.horizon,
        augment: args.augment,
        seed: args.seed,
        checkpoint_every: args.checkpoint_every,
        weight_decay: args.weight_decay,
        out_dir: Some(args.out.clone()),
    };

    let (params, curve) = run_training(&manifest, &store, &model_config, &train_config)
        .map_err(runtime_err)?;
    save_checkpoint(&params, &args.out.join("model.ovxw")).map_err(runtime_err)?;
    model_config
        .save(&args.out.join("model_config.toml"))
        .map_err(runtime_err)?;
    write_loss_csv(&curve, &args.out.join("loss.csv")).map_err(runtime_err)?;
    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        println!(
            "trained {} steps: loss {:.4} -> {:.4} ({})",
            curve.len(),
            first.combined,
            last.combined,
            model_config.label()
        );
    } else {
        println!("trained 0 steps ({})", model_config.label());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    manifest_path: &Path,
    model_config: Option<&Path>,
    checkpoint: Option<&Path>,
    split: SplitArg,
    horizon: u32,
    stub: Option<StubArg>,
    label: Option<String>,
    out: Option<&Path>,
) -> CliResult {
    let (manifest, store) = manifest_and_store(manifest_path)?;
    let split = match split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };

    let (report, default_label) = match stub {
        Some(stub) => {
            let (model, name) = match stub {
                StubArg::Copy => (EvalModel::CopyTarget, "copy-stub"),
                StubArg::Invert => (EvalModel::InvertTarget, "invert-stub"),
                StubArg::Identity => (EvalModel::Identity, "identity-stub"),
            };
            let report =
                evaluate(&model, &manifest, &store, split, horizon).map_err(data_err)?;
            (report, name.to_string())
        }
        None => {
            let (config_path, checkpoint_path) = match (model_config, checkpoint) {
                (Some(c), Some(k)) => (c, k),
                _ => {
                    return Err(crate::CliError::Data(
                        "eval needs --model-config and --checkpoint (or --stub)".into(),
                    ))
                }
            };
            let config = ModelConfig::load(config_path).map_err(data_err)?;
            let params = load_checkpoint(checkpoint_path, &config).map_err(data_err)?;
            let model = EvalModel::TransVNet {
                config: &config,
                params: &params,
            };
            let report =
                evaluate(&model, &manifest, &store, split, horizon).map_err(data_err)?;
            (report, config.label())
        }
    };
    let label = label.unwrap_or(default_label);
    println!(
        "{label}: DSC {:.6}, HD {:.6} (max {:.6}) over {} pairs",
        report.mean_dsc, report.mean_hd_avg, report.mean_hd_max, report.n_pairs
    );
    if let Some(path) = out {
        let text = format!("label = {label:?}\n{}", report.to_toml());
        std::fs::write(path, text).map_err(runtime_err)?;
    }
    Ok(())
}

pub fn predict(
    input: &Path,
    frame: u32,
    steps: usize,
    horizon: u32,
    model_config: &Path,
    checkpoint: &Path,
    out: &Path,
) -> CliResult {
    let seq = read_evolution(input).map_err(data_err)?;
    let n = seq.n_timesteps() as u32;
    if frame >= n {
        return Err(crate::CliError::Data(format!(
            "frame {frame} out of range: file has {n} frames"
        )));
    }
    let config = ModelConfig::load(model_config).map_err(data_err)?;
    let params = load_checkpoint(checkpoint, &config).map_err(data_err)?;
    let frames = rollout(
        &config,
        &params,
        &seq.frames[frame as usize],
        frame,
        steps,
        horizon,
    )
    .map_err(data_err)?;
    let out_seq = EvolutionSequence::new(seq.source_id, frames, None).map_err(data_err)?;
    write_evolution(&out_seq, out).map_err(runtime_err)?;
    println!(
        "wrote {} frames (start month {frame}, horizon {horizon}) to {}",
        out_seq.n_timesteps(),
        out.display()
    );
    Ok(())
}

pub fn export(input: &Path, frame: u32, mode: crate::ExportMode, out: &Path) -> CliResult {
    let seq = read_evolution(input).map_err(data_err)?;
    let n = seq.n_timesteps() as u32;
    if frame >= n {
        return Err(crate::CliError::Data(format!(
            "frame {frame} out of range: file has {n} frames"
        )));
    }
    let grid = &seq.frames[frame as usize];
    match mode {
        crate::ExportMode::Slices => crate::export::write_slices(grid, out),
        crate::ExportMode::Mesh => crate::export::write_mesh(grid, out),
    }
}
