//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Run with `cargo test -p osteovox-cli --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use dataset::{
    build_manifest, read_evolution, sample_batch, write_evolution, BinSpec, DatasetManifest,
    ManifestEntry, SequenceStore, Split,
};
use degradation::{calibrate_lambda, simulate_with_id, DegradationParams, EvolutionSequence};
use hetmigen::{generate, parse_params_csv};
use nn_core::{grad_check, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use training::{
    evaluate, load_checkpoint, save_checkpoint, train, train_from, transfer_weights, EvalModel,
    TrainConfig,
};
use transvnet::{
    combined_loss, forward, grids_to_input, init_params, Bound, InputEncoding, Mode, ModelConfig,
    ParamStore,
};
use voxel_core::{
    dice, hausdorff, largest_component_fraction, Connectivity, HausdorffMode, SymmetryElement,
    VoxelGrid, MINERAL,
};

// ---------------------------------------------------------------------
// Criterion 1: metric oracle equivalence
// ---------------------------------------------------------------------

fn brute_dice(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for i in 0..a.len() {
        let (x, y) = (a.data()[i] == 1, b.data()[i] == 1);
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

fn brute_hausdorff(a: &VoxelGrid, b: &VoxelGrid, mode: HausdorffMode) -> f64 {
    let points = |g: &VoxelGrid| -> Vec<(f64, f64, f64)> {
        (0..g.len())
            .filter(|&i| g.data()[i] == 1)
            .map(|i| {
                let (x, y, z) = g.coords(i);
                (x as f64, y as f64, z as f64)
            })
            .collect()
    };
    let (pa, pb) = (points(a), points(b));
    let nearest = |p: (f64, f64, f64), s: &[(f64, f64, f64)]| -> f64 {
        s.iter()
            .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) + (p.2 - q.2).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    match mode {
        HausdorffMode::Max => {
            let f = pa.iter().map(|&p| nearest(p, &pb)).fold(0.0, f64::max);
            let g = pb.iter().map(|&q| nearest(q, &pa)).fold(0.0, f64::max);
            f.max(g)
        }
        HausdorffMode::Average => {
            let f: f64 = pa.iter().map(|&p| nearest(p, &pb)).sum();
            let g: f64 = pb.iter().map(|&q| nearest(q, &pa)).sum();
            (f + g) / (pa.len() + pb.len()) as f64
        }
    }
}

#[test]
fn criterion_1_metric_oracles() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for pair in 0..100 {
        let mut gen = |density: f64| loop {
            let data: Vec<u8> = (0..512)
                .map(|_| (rng.random::<f64>() < density) as u8)
                .collect();
            if data.iter().any(|&l| l == 1) {
                return VoxelGrid::from_data((8, 8, 8), 2, data).unwrap();
            }
        };
        let a = gen(0.15 + 0.3 * (pair as f64 / 100.0));
        let b = gen(0.25);
        assert_eq!(
            dice(&a, &b, MINERAL).unwrap(),
            brute_dice(&a, &b),
            "dice mismatch on pair {pair}"
        );
        for mode in [HausdorffMode::Max, HausdorffMode::Average] {
            let fast = hausdorff(&a, &b, MINERAL, mode).unwrap();
            let slow = brute_hausdorff(&a, &b, mode);
            assert!(
                (fast - slow).abs() <= 1e-12,
                "hausdorff {mode:?} mismatch on pair {pair}: {fast} vs {slow}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!("ACCEPTANCE 1 (metric oracle equivalence): PASS ({elapsed:.2?})");
}

// ---------------------------------------------------------------------
// Criterion 2: gradient verification
// ---------------------------------------------------------------------

fn randn64(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::param(
        shape.to_vec(),
        (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    )
}

#[test]
fn criterion_2_gradient_verification() {
    let started = Instant::now();
    use nn_core::ops::*;

    // Every op at f64 over random small shapes (3 seeds here; the nn-core
    // suite runs 10).
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let salt = Tensor::from_vec(
            vec![2, 2, 2, 2, 2],
            (0..32).map(|i| ((i + 3) as f64 * 0.37).sin()).collect(),
        );
        let weigh = |t: &Tensor<f64>| -> nn_core::Result<Tensor<f64>> {
            let w = Tensor::from_vec(
                t.shape().to_vec(),
                (0..t.len()).map(|i| ((i * 7 + 1) as f64 * 0.13).sin()).collect(),
            );
            Ok(t.mul(&w)?.sum_all())
        };
        let _ = salt;

        let x = randn64(&[2, 2, 3, 3, 3], &mut rng);
        let k = randn64(&[2, 2, 3, 3, 3], &mut rng);
        let b = randn64(&[2], &mut rng);
        let err = grad_check(
            |t| weigh(&conv3d(&t[0], &t[1], Some(&t[2]), 1, 1)?),
            &[x, k, b],
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "conv3d: {err}");

        let x = randn64(&[2, 3, 2, 2, 2], &mut rng);
        let gamma = randn64(&[3], &mut rng);
        let beta = randn64(&[3], &mut rng);
        let err = grad_check(
            |t| {
                let (y, _) = batch_norm(
                    &t[0],
                    &t[1],
                    &t[2],
                    &[0.0; 3],
                    &[1.0; 3],
                    BatchNormMode::Train,
                    0.1,
                    1e-5,
                )?;
                weigh(&y)
            },
            &[x, gamma, beta],
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "batch_norm: {err}");

        let x = randn64(&[3, 6], &mut rng);
        let gamma = randn64(&[6], &mut rng);
        let beta = randn64(&[6], &mut rng);
        let err = grad_check(
            |t| weigh(&layer_norm(&t[0], &t[1], &t[2], 1e-6)?),
            &[x, gamma, beta],
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "layer_norm: {err}");

        let x = randn64(&[2, 5], &mut rng);
        let err = grad_check(|t| weigh(&softmax(&t[0], 1)?), &[x.clone()], None).unwrap();
        assert!(err < 1e-4, "softmax: {err}");
        let err = grad_check(|t| weigh(&log_softmax(&t[0], 1)?), &[x], None).unwrap();
        assert!(err < 1e-4, "log_softmax: {err}");

        let x = randn64(&[2, 3, 4], &mut rng);
        let w = randn64(&[4, 5], &mut rng);
        let bias = randn64(&[5], &mut rng);
        let err = grad_check(
            |t| weigh(&linear(&t[0], &t[1], Some(&t[2]))?),
            &[x, w, bias],
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "linear: {err}");

        let x = randn64(&[1, 2, 4, 4, 4], &mut rng);
        let err = grad_check(|t| weigh(&max_pool3d(&t[0], 2)?), &[x.clone()], None).unwrap();
        assert!(err < 1e-4, "max_pool3d: {err}");
        let err =
            grad_check(|t| weigh(&trilinear_upsample(&t[0], 2)?), &[x.clone()], None).unwrap();
        assert!(err < 1e-4, "trilinear_upsample: {err}");
        let err = grad_check(|t| weigh(&extract_patches(&t[0], 2)?), &[x.clone()], None).unwrap();
        assert!(err < 1e-4, "extract_patches: {err}");
        let err = grad_check(|t| weigh(&t[0].relu()), &[x.clone()], None).unwrap();
        assert!(err < 1e-4, "relu: {err}");
        let err = grad_check(|t| weigh(&t[0].gelu()), &[x], None).unwrap();
        assert!(err < 1e-4, "gelu: {err}");

        let d = 8;
        let z = randn64(&[1, 4, d], &mut rng);
        let mats: Vec<Tensor<f64>> = (0..4).map(|_| randn64(&[d, d], &mut rng)).collect();
        let biases: Vec<Tensor<f64>> = (0..3).map(|_| randn64(&[d], &mut rng)).collect();
        let inputs: Vec<Tensor<f64>> =
            std::iter::once(z).chain(mats).chain(biases).collect();
        let err = grad_check(
            |t| {
                let params = AttentionParams {
                    wq: &t[1],
                    bq: &t[5],
                    wk: &t[2],
                    wv: &t[3],
                    bv: &t[6],
                    wo: &t[4],
                    bo: &t[7],
                    n_heads: 2,
                };
                weigh(&multi_head_self_attention(&t[0], &params)?)
            },
            &inputs,
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "msa: {err}");
    }

    // Full toy TransVNet: H=16, C'=4, D=16, L=1, P=2.
    let cfg = ModelConfig {
        input_resolution: 16,
        in_channels: 3,
        n_classes: 2,
        cnn_downscalings: 2,
        cnn_channels: 4,
        patch_size: 2,
        hidden_dim: 16,
        n_layers: 1,
        n_heads: 2,
        mlp_dim: 32,
        decoder_channels: vec![],
        t_max: 36,
        vit_only: false,
        input_encoding: InputEncoding::Replicate,
    };
    let store = init_params(&cfg, 277);
    let mut rng = ChaCha8Rng::seed_from_u64(278);
    let grid = VoxelGrid::from_data(
        (16, 16, 16),
        2,
        (0..4096).map(|_| rng.random_range(0..2u8)).collect(),
    )
    .unwrap();
    let target: Vec<u8> = (0..4096).map(|_| rng.random_range(0..2u8)).collect();
    let input = grids_to_input::<f64>(&cfg, &[&grid]).unwrap();
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let leaves: Vec<Tensor<f64>> = store
        .iter()
        .map(|(_, e)| {
            Tensor::param(
                e.shape.clone(),
                e.values.iter().map(|&v| f64::from(v)).collect(),
            )
        })
        .collect();
    let err = grad_check(
        |t| {
            let bound =
                Bound::from_tensors(names.iter().cloned().zip(t.iter().cloned()));
            let out = forward(&cfg, &bound, &input, &[4], Mode::Train).map_err(|e| {
                nn_core::NnError::Invalid {
                    op: "forward",
                    message: e.to_string(),
                }
            })?;
            Ok(combined_loss(&out.logits, &target)
                .map_err(|e| nn_core::NnError::Invalid {
                    op: "loss",
                    message: e.to_string(),
                })?
                .total)
        },
        &leaves,
        Some(5),
    )
    .unwrap();
    assert!(err < 1e-3, "full model gradient error {err}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget 5 min");
    println!("ACCEPTANCE 2 (gradient verification): PASS (max full-model error {err:.2e}, {elapsed:.2?})");
}

// ---------------------------------------------------------------------
// Criterion 3: generator contract
// ---------------------------------------------------------------------

#[test]
fn criterion_3_generator_contract() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for row_idx in 0..20u64 {
        let vf = 0.2 + 0.3 * rng.random::<f64>();
        let threshold = 0.45 + 0.25 * rng.random::<f64>();
        let seeds = rng.random_range(30..=60);
        let freq = rng.random_range(8..=12);
        let inc = rng.random_range(-1..=2);
        let decay = if rng.random::<f64>() < 0.5 { 0.0 } else { 0.004 };
        let prox = rng.random_range(0..=1);
        let csv = format!(
            "{row_idx},1,{vf:.4},{seeds},{inc},{freq},{prox},1,{decay},{threshold:.4}"
        );
        let params = parse_params_csv(&csv).unwrap().remove(0);
        let out = generate(&params, (64, 64, 64), 3000 + row_idx, None).unwrap();
        let got_vf = out.grid.volume_fraction(MINERAL).unwrap();
        assert!(
            (got_vf - vf).abs() <= 0.02,
            "row {row_idx}: vf {got_vf:.4} vs target {vf:.4} ({csv})"
        );
        let lcf = largest_component_fraction(&out.grid, MINERAL, Connectivity::Face6).unwrap();
        assert_eq!(lcf, 1.0, "row {row_idx}: clustering fraction {lcf}");
    }

    // Threshold-1 growth equals BFS dilation at 32 cubed.
    let params = parse_params_csv("99,1,0.9,1,0,1000,0,0,0,1.0")
        .unwrap()
        .remove(0);
    let mut state = hetmigen::GeneratorState::new((32, 32, 32), &params, 77).unwrap();
    state.place_seeds(&params, 1);
    let seed_at = state
        .grid()
        .data()
        .iter()
        .position(|&l| l == 1)
        .expect("seed placed");
    let (sx, sy, sz) = state.grid().coords(seed_at);
    for k in 1..=8i64 {
        state.grow_step(&params);
        for z in 0..32i64 {
            for y in 0..32i64 {
                for x in 0..32i64 {
                    let manhattan =
                        (x - sx as i64).abs() + (y - sy as i64).abs() + (z - sz as i64).abs();
                    assert_eq!(
                        state.grid().get(x as usize, y as usize, z as usize),
                        (manhattan <= k) as u8,
                        "voxel ({x},{y},{z}) after {k} steps"
                    );
                }
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget 5 min");
    println!("ACCEPTANCE 3 (generator contract): PASS ({elapsed:.2?})");
}

// ---------------------------------------------------------------------
// Criterion 4: degradation calibration
// ---------------------------------------------------------------------

#[test]
fn criterion_4_degradation_calibration() {
    let started = Instant::now();
    let lambda = calibrate_lambda(0.02, 0.35, 36).unwrap();
    for i in 0..5u64 {
        let vf = 0.25 + 0.05 * i as f64;
        let csv = format!("{i},1,{vf:.3},40,0,100,0,1,0,0.55");
        let params = parse_params_csv(&csv).unwrap().remove(0);
        let structure = generate(&params, (64, 64, 64), 400 + i, None).unwrap().grid;

        let dp = DegradationParams::new(0.02, lambda, 36, 40 + i).unwrap();
        let seq = simulate_with_id(&structure, &dp, i).unwrap();
        let initial = seq.frames[0].count_phase(MINERAL) as f64;
        let last = seq.frames[36].count_phase(MINERAL) as f64;
        let loss = 1.0 - last / initial;
        assert!(
            (0.30..=0.40).contains(&loss),
            "structure {i}: 36-month loss {loss:.4}"
        );

        let mut prev_frac = f64::INFINITY;
        let mut prev_count = usize::MAX;
        for t in 1..seq.frames.len() {
            let a = seq.frames[t - 1].count_phase(MINERAL);
            let b = seq.frames[t].count_phase(MINERAL);
            assert!(b <= a, "mineral count grew at month {t}");
            assert!(b <= prev_count);
            prev_count = b;
            let frac = (a - b) as f64 / a as f64;
            assert!(
                frac <= prev_frac + 1e-9,
                "monthly loss rose at month {t}: {frac} after {prev_frac}"
            );
            prev_frac = frac;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}, budget 5 min");
    println!("ACCEPTANCE 4 (degradation calibration): PASS ({elapsed:.2?})");
}

// ---------------------------------------------------------------------
// Criterion 5: dataset contract
// ---------------------------------------------------------------------

/// Single-blob 8-cube sequence with the requested mineral count.
fn slab_sequence(mineral: usize, months: u32, seed: u64) -> EvolutionSequence {
    let mut g = VoxelGrid::new((8, 8, 8), 2).unwrap();
    let mut placed = 0;
    'outer: for z in 0..8 {
        for y in 0..8 {
            for x in 0..8 {
                if placed == mineral {
                    break 'outer;
                }
                g.set(x, y, z, 1);
                placed += 1;
            }
        }
    }
    let params = DegradationParams::new(0.03, 0.0, months, seed).unwrap();
    simulate_with_id(&g, &params, seed).unwrap()
}

#[test]
fn criterion_5_dataset_contract() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<PathBuf> = (0..100usize)
        .map(|i| {
            let mineral = 64 + (i * 120 / 100) * 2; // vf roughly 0.12..0.6
            let seq = slab_sequence(mineral, 3, i as u64);
            let path = dir.path().join(format!("{i:06}.ovxe"));
            write_evolution(&seq, &path).unwrap();
            path
        })
        .collect();

    // Round-trip bit exactness on a sample of files.
    for path in files.iter().step_by(17) {
        let seq = read_evolution(path).unwrap();
        let copy = dir.path().join("rt.ovxe");
        write_evolution(&seq, &copy).unwrap();
        assert_eq!(
            std::fs::read(path).unwrap(),
            std::fs::read(&copy).unwrap(),
            "round trip altered bytes"
        );
    }

    let (manifest, rejected) = build_manifest(&files, BinSpec::Width(0.05), 55).unwrap();
    assert!(rejected.is_empty());
    assert_eq!(manifest.split_len(Split::Test), 10);
    assert_eq!(manifest.split_len(Split::Val), 14);
    assert_eq!(manifest.split_len(Split::Train), 76);

    // Balanced sampler: chi-square uniformity over 10k draws at 1%.
    let store = SequenceStore::new(dir.path());
    let train_bins: Vec<usize> = {
        let mut bins: Vec<usize> = manifest
            .split_entries(Split::Train)
            .map(|e| e.bin)
            .collect();
        bins.sort_unstable();
        bins.dedup();
        bins
    };
    let k = train_bins.len();
    assert!(k >= 2, "need multiple bins, got {k}");
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let draws = 10_000usize;
    let batch = sample_batch(&manifest, &store, Split::Train, draws, 1, &mut rng, false).unwrap();
    // Classify each draw by its source entry's bin.
    let entries: Vec<&ManifestEntry> = manifest.split_entries(Split::Train).collect();
    let mut counts = vec![0usize; k];
    for sample in &batch {
        let entry = entries
            .iter()
            .find(|e| e.id == sample.source_id)
            .expect("drawn entry is in the split");
        let slot = train_bins.iter().position(|&b| b == entry.bin).unwrap();
        counts[slot] += 1;
    }
    let expected = draws as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    // Upper 1% chi-square critical values for df = 1..=10.
    let critical = [
        6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209,
    ];
    let df = k - 1;
    assert!(df <= critical.len(), "too many bins for the table");
    assert!(
        stat < critical[df - 1],
        "chi-square {stat:.2} over df {df} exceeds the 1% critical value (counts {counts:?})"
    );

    println!(
        "ACCEPTANCE 5 (dataset contract): PASS (chi-square {stat:.2}, df {df})"
    );
}

// ---------------------------------------------------------------------
// Criteria 6 and 7 share a trained toy model.
// ---------------------------------------------------------------------

fn toy32() -> ModelConfig {
    ModelConfig {
        input_resolution: 32,
        in_channels: 3,
        n_classes: 2,
        cnn_downscalings: 2,
        cnn_channels: 8,
        patch_size: 2,
        hidden_dim: 64,
        n_layers: 2,
        n_heads: 4,
        mlp_dim: 128,
        decoder_channels: vec![16, 8, 8],
        t_max: 36,
        vit_only: false,
        input_encoding: InputEncoding::Replicate,
    }
}

struct Fixture {
    dir: tempfile::TempDir,
    manifest: DatasetManifest,
    hybrid: ParamStore,
    hybrid_steps: usize,
    train_secs: f64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

/// 50 generated 32-cube sequences (8 months), split manifest, and a
/// hybrid model trained until the val split clears DSC 0.92.
fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let lambda = calibrate_lambda(0.02, 0.35, 36).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(600);
        let files: Vec<PathBuf> = (1..=50u64)
            .map(|i| {
                let vf = 0.2 + 0.3 * rng.random::<f64>();
                let threshold = 0.5 + 0.15 * rng.random::<f64>();
                let csv = format!("{i},1,{vf:.4},15,0,100,0,1,0,{threshold:.4}");
                let params = parse_params_csv(&csv).unwrap().remove(0);
                let grid = generate(&params, (32, 32, 32), 600 + i, None).unwrap().grid;
                let dp = DegradationParams::new(0.02, lambda, 8, i).unwrap();
                let seq = simulate_with_id(&grid, &dp, i).unwrap();
                let path = dir.path().join(format!("{i:06}.ovxe"));
                write_evolution(&seq, &path).unwrap();
                path
            })
            .collect();
        let (manifest, rejected) = build_manifest(&files, BinSpec::Width(0.05), 61).unwrap();
        assert!(rejected.is_empty(), "rejected: {rejected:?}");

        let store = SequenceStore::new(dir.path());
        let cfg = toy32();
        let started = Instant::now();
        let mut params = init_params(&cfg, 62);
        let mut steps = 0usize;
        let chunk = 60usize;
        for round in 0..7 {
            let tc = TrainConfig {
                epochs: 1,
                steps_per_epoch: Some(chunk),
                batch_size: 4,
                horizon: 1,
                augment: true,
                seed: 63 + round,
                ..TrainConfig::default()
            };
            let (next, _) = train_from(params, &manifest, &store, &cfg, &tc).unwrap();
            params = next;
            steps += chunk;
            let val = evaluate(
                &EvalModel::TransVNet {
                    config: &cfg,
                    params: &params,
                },
                &manifest,
                &store,
                Split::Val,
                1,
            )
            .unwrap();
            if val.mean_dsc >= 0.92 {
                break;
            }
        }
        Fixture {
            dir,
            manifest,
            hybrid: params,
            hybrid_steps: steps,
            train_secs: started.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_6_learning_capability() {
    let fx = fixture();
    // The fixture's own training time is measured inside it; the clock
    // here starts after, so a parallel test building the fixture first
    // does not get double-counted.
    let started = Instant::now();
    let store = SequenceStore::new(fx.dir.path());
    let cfg = toy32();

    // Overfit check: 4 fixed pairs to hard DSC >= 0.99 within 500 steps.
    let overfit_dir = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for (i, entry) in fx
        .manifest
        .split_entries(Split::Train)
        .take(4)
        .enumerate()
    {
        let seq = store.get(entry).unwrap();
        let pair = EvolutionSequence::new(
            entry.id,
            vec![seq.frames[0].clone(), seq.frames[1].clone()],
            None,
        )
        .unwrap();
        let path = overfit_dir.path().join(format!("p{i}.ovxe"));
        write_evolution(&pair, &path).unwrap();
        entries.push(ManifestEntry {
            id: entry.id,
            file: format!("p{i}.ovxe"),
            vf: entry.vf,
            bin: 0,
            split: Split::Train,
            timesteps: 2,
        });
    }
    let overfit_manifest = DatasetManifest {
        split_seed: 0,
        bin_edges: vec![0.0, 1.0],
        warnings: vec![],
        entries,
    };
    let overfit_store = SequenceStore::new(overfit_dir.path());
    let mut params = init_params(&cfg, 70);
    let mut overfit_steps = 0usize;
    let mut overfit_dsc = 0.0;
    while overfit_steps < 500 {
        let tc = TrainConfig {
            epochs: 1,
            steps_per_epoch: Some(100),
            batch_size: 4,
            optimizer: training::OptimizerKind::Adam {
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            horizon: 1,
            augment: false,
            seed: 71 + overfit_steps as u64,
            ..TrainConfig::default()
        };
        let (next, _) = train_from(params, &overfit_manifest, &overfit_store, &cfg, &tc).unwrap();
        params = next;
        overfit_steps += 100;
        let report = evaluate(
            &EvalModel::TransVNet {
                config: &cfg,
                params: &params,
            },
            &overfit_manifest,
            &overfit_store,
            Split::Train,
            1,
        )
        .unwrap();
        overfit_dsc = report.mean_dsc;
        if overfit_dsc >= 0.99 {
            break;
        }
    }
    assert!(
        overfit_dsc >= 0.99,
        "overfit DSC {overfit_dsc:.4} after {overfit_steps} steps"
    );

    // Held-out performance of the shared trained hybrid.
    let hybrid_test = evaluate(
        &EvalModel::TransVNet {
            config: &cfg,
            params: &fx.hybrid,
        },
        &fx.manifest,
        &store,
        Split::Test,
        1,
    )
    .unwrap();
    assert!(
        hybrid_test.mean_dsc >= 0.90,
        "hybrid held-out DSC {:.4} after {} steps",
        hybrid_test.mean_dsc,
        fx.hybrid_steps
    );

    // ViT-only ablation on the same data with at least the same budget.
    let vit_cfg = ModelConfig {
        vit_only: true,
        patch_size: 8,
        cnn_downscalings: 0,
        ..toy32()
    };
    vit_cfg.validate().unwrap();
    let vit_steps = fx.hybrid_steps.max(300);
    let tc = TrainConfig {
        epochs: 1,
        steps_per_epoch: Some(vit_steps),
        batch_size: 4,
        horizon: 1,
        augment: true,
        seed: 80,
        ..TrainConfig::default()
    };
    let (vit_params, _) = train(&fx.manifest, &store, &vit_cfg, &tc).unwrap();
    let vit_test = evaluate(
        &EvalModel::TransVNet {
            config: &vit_cfg,
            params: &vit_params,
        },
        &fx.manifest,
        &store,
        Split::Test,
        1,
    )
    .unwrap();
    assert!(
        vit_test.mean_dsc <= hybrid_test.mean_dsc - 0.15,
        "ablation gap too small: hybrid {:.4} vs ViT-only {:.4}",
        hybrid_test.mean_dsc,
        vit_test.mean_dsc
    );

    let total_secs = fx.train_secs + started.elapsed().as_secs_f64();
    assert!(
        total_secs < 1800.0,
        "criterion 6 took {total_secs:.0} s, budget 30 min"
    );
    println!(
        "ACCEPTANCE 6 (learning capability): PASS (overfit {overfit_dsc:.4} in {overfit_steps} steps; hybrid {:.4} vs ViT-only {:.4} on test; {total_secs:.0} s)",
        hybrid_test.mean_dsc, vit_test.mean_dsc
    );
}

#[test]
fn criterion_7_transfer_property() {
    let fx = fixture();
    let low_cfg = toy32();
    let high_cfg = ModelConfig {
        input_resolution: 64,
        ..toy32()
    };
    high_cfg.validate().unwrap();

    // Transfer must load and survive a checkpoint round trip unchanged.
    let (transferred, report) =
        transfer_weights(&fx.hybrid, &low_cfg, &high_cfg, 700).unwrap();
    assert!(report.resampled.contains(&"pos_embed".to_string()));
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("transfer.ovxw");
    save_checkpoint(&transferred, &ckpt).unwrap();
    let reloaded = load_checkpoint(&ckpt, &high_cfg).unwrap();
    assert_eq!(reloaded, transferred);

    // Held-out 64-cube pairs.
    let lambda = calibrate_lambda(0.02, 0.35, 36).unwrap();
    let mut inputs = Vec::new();
    let mut targets: Vec<u8> = Vec::new();
    let mut months = Vec::new();
    for i in 0..3u64 {
        let vf = 0.25 + 0.08 * i as f64;
        let csv = format!("{i},1,{vf:.3},40,0,100,0,1,0,0.55");
        let params = parse_params_csv(&csv).unwrap().remove(0);
        let grid = generate(&params, (64, 64, 64), 710 + i, None).unwrap().grid;
        let dp = DegradationParams::new(0.02, lambda, 1, 720 + i).unwrap();
        let seq = simulate_with_id(&grid, &dp, i).unwrap();
        inputs.push(seq.frames[0].clone());
        targets.extend_from_slice(seq.frames[1].data());
        months.push(0u32);
    }
    let grid_refs: Vec<&VoxelGrid> = inputs.iter().collect();
    let batch = grids_to_input::<f32>(&high_cfg, &grid_refs).unwrap();

    let eval_loss = |params: &ParamStore| -> f64 {
        let bound = Bound::<f32>::from_store(params);
        let out = forward(&high_cfg, &bound, &batch, &months, Mode::Eval).unwrap();
        f64::from(combined_loss(&out.logits, &targets).unwrap().total.item())
    };

    let transferred_loss = eval_loss(&transferred);
    let mut random_losses = Vec::new();
    for seed in [901u64, 902, 903] {
        random_losses.push(eval_loss(&init_params(&high_cfg, seed)));
    }
    let random_mean = random_losses.iter().sum::<f64>() / random_losses.len() as f64;
    assert!(
        transferred_loss < random_mean,
        "transferred loss {transferred_loss:.4} not below random mean {random_mean:.4} ({random_losses:?})"
    );
    println!(
        "ACCEPTANCE 7 (transfer property): PASS (transferred {transferred_loss:.4} vs random mean {random_mean:.4})"
    );
}

// ---------------------------------------------------------------------
// Criterion 8: determinism
// ---------------------------------------------------------------------

/// One tiny end-to-end pipeline run; returns byte-level artifacts of every
/// stage.
fn pipeline_artifacts(root: &Path) -> (Vec<Vec<u8>>, String, Vec<u8>, String, Vec<u8>) {
    let data = root.join("data");
    std::fs::create_dir_all(&data).unwrap();
    let lambda = calibrate_lambda(0.02, 0.35, 36).unwrap();
    let mut evolution_bytes = Vec::new();
    let mut files = Vec::new();
    for i in 1..=4u64 {
        let vf = 0.25 + 0.05 * i as f64;
        let csv = format!("{i},1,{vf:.3},8,0,100,0,1,0,0.6");
        let params = parse_params_csv(&csv).unwrap().remove(0);
        let grid = generate(&params, (16, 16, 16), 800 + i, None).unwrap().grid;
        let dp = DegradationParams::new(0.02, lambda, 3, 810 + i).unwrap();
        let seq = simulate_with_id(&grid, &dp, i).unwrap();
        let path = data.join(format!("{i:06}.ovxe"));
        write_evolution(&seq, &path).unwrap();
        evolution_bytes.push(std::fs::read(&path).unwrap());
        files.push(path);
    }

    let (manifest, _) = build_manifest(&files, BinSpec::Width(0.1), 820).unwrap();
    let manifest_toml = manifest.to_toml().unwrap();

    let cfg = ModelConfig {
        input_resolution: 16,
        cnn_downscalings: 2,
        cnn_channels: 4,
        patch_size: 2,
        hidden_dim: 16,
        n_layers: 1,
        n_heads: 2,
        mlp_dim: 32,
        decoder_channels: vec![],
        ..toy32()
    };
    let store = SequenceStore::new(&data);
    let tc = TrainConfig {
        epochs: 1,
        steps_per_epoch: Some(3),
        batch_size: 2,
        horizon: 1,
        augment: true,
        seed: 830,
        ..TrainConfig::default()
    };
    let (params, curve) = train(&manifest, &store, &cfg, &tc).unwrap();
    let ckpt = root.join("model.ovxw");
    save_checkpoint(&params, &ckpt).unwrap();
    let checkpoint_bytes = std::fs::read(&ckpt).unwrap();

    let report = evaluate(
        &EvalModel::TransVNet {
            config: &cfg,
            params: &params,
        },
        &manifest,
        &store,
        Split::Train,
        1,
    )
    .unwrap();
    let metrics = format!(
        "{:.12}|{:.12}|{:.12}|{}",
        report.mean_dsc, report.mean_hd_max, report.mean_hd_avg, report.n_pairs
    );
    let curve_text: String = curve
        .iter()
        .map(|p| format!("{}:{:.12}:{:.12};", p.step, p.combined, p.ce))
        .collect();

    let seq = read_evolution(&files[0]).unwrap();
    let frames = transvnet::rollout(&cfg, &params, &seq.frames[0], 0, 2, 1).unwrap();
    let rollout_seq = EvolutionSequence::new(0, frames, None).unwrap();
    let rollout_path = root.join("rollout.ovxe");
    write_evolution(&rollout_seq, &rollout_path).unwrap();
    let rollout_bytes = std::fs::read(&rollout_path).unwrap();

    (
        evolution_bytes,
        manifest_toml,
        checkpoint_bytes,
        format!("{metrics}#{curve_text}"),
        rollout_bytes,
    )
}

#[test]
fn criterion_8_determinism() {
    // Two runs over the same paths; the second overwrites the first, so
    // every artifact must come out bit-identical.
    let dir = tempfile::tempdir().unwrap();
    let a = pipeline_artifacts(dir.path());
    let b = pipeline_artifacts(dir.path());
    assert_eq!(a.0, b.0, "evolution files differ");
    assert_eq!(a.1, b.1, "manifests differ");
    assert_eq!(a.2, b.2, "checkpoints differ");
    assert_eq!(a.3, b.3, "metrics or loss curves differ");
    assert_eq!(a.4, b.4, "rollout outputs differ");

    // Augmented symmetry sanity: all 48 elements are exercised somewhere
    // in the pipeline's sampling; spot-check group closure.
    for i in 0..48u8 {
        let s = SymmetryElement::new(i).unwrap();
        assert_eq!(s.compose(s.inverse()), SymmetryElement::IDENTITY);
    }
    println!("ACCEPTANCE 8 (determinism): PASS");
}
