//! Self-checks run by the `verify` command: shape contracts, the gradient
//! battery, metric oracles and golden render digests.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::dataset::{build_plan, render_camera_image, SceneParams};
use crate::encoders::{fuse_concatenated, CrossAttentionFusion, EncoderConfig, ImageEncoder, QuerySource};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, TrajectoryPlan};
use crate::metrics::{bleu4, rouge_l, ROUGE_BETA};
use crate::nn::{CrossAttentionBlock, DecoderBlock, LayerNorm, Linear, SelfAttentionBlock};
use crate::raster::{overlay, render_trajectory_image, RgbImage};
use crate::tensor::{grad_check, grad_check_params, Graph, ParamStore, Tensor, Var, DEFAULT_STEP};

/// Pass threshold for every gradient check.
pub const GRAD_TOLERANCE: f64 = 1e-5;
/// Pass threshold for metric/oracle agreement.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
        let t = Instant::now();
        let (passed, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        Check {
            name: name.to_string(),
            passed,
            detail,
            seconds: t.elapsed().as_secs_f64(),
        }
    }
}

// ---------------------------------------------------------------- shapes

/// `(camera tokens, trajectory tokens, fused tokens, dim)` of the
/// concatenated variant, from shape arithmetic alone.
pub fn concat_shape(cfg: &EncoderConfig) -> (usize, usize, usize, usize) {
    let n = cfg.tokens();
    (n, n, 2 * n, cfg.dim)
}

/// Shape contract of the concatenated variant at full scale (arithmetic)
/// and toy scale (an actual forward pass).
pub fn shape_contract() -> Result<(bool, String)> {
    let full = concat_shape(&EncoderConfig::full_scale());
    let cfg = EncoderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let cam = ImageEncoder::new(&mut store, "cam", cfg, &mut rng)?;
    let traj = ImageEncoder::new(&mut store, "traj", cfg, &mut rng)?;
    let img = RgbImage::new(cfg.image_size, cfg.image_size);
    let mut g = Graph::new();
    let a = cam.encode(&mut g, &store, &img)?;
    let b = traj.encode(&mut g, &store, &img)?;
    let (na, nb) = (g.value(a).rows(), g.value(b).rows());
    let fused = fuse_concatenated(&mut g, a, b)?;
    let toy = (na, nb, fused.n_tokens, g.value(fused.tokens).cols());
    let ok = full == (257, 257, 514, 1408) && toy == (17, 17, 34, 64);
    Ok((
        ok,
        format!(
            "full {}+{} -> {}x{}; toy {}+{} -> {}x{}",
            full.0, full.1, full.2, full.3, toy.0, toy.1, toy.2, toy.3
        ),
    ))
}

// ---------------------------------------------------------------- gradients

const GC_DIM: usize = 4;
const GC_HEADS: usize = 2;
const GC_INIT_STD: f64 = 0.5;

/// Blocks covered by the gradient battery.
pub const GRAD_BLOCKS: [&str; 6] = ["patch_embed", "self_attn", "cross_attn_fusion", "qformer", "decoder", "loss"];

fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// Scalar readout `Σ w ⊙ y` with fixed random weights, so every output
/// coordinate carries a distinct gradient.
fn readout(g: &mut Graph, y: Var, w: &Tensor) -> Result<Var> {
    let w = g.constant(w.clone());
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn worst_of(a: f64, b: f64) -> f64 {
    a.max(b)
}

/// Worst relative error of `block` for one seed, over both inputs and
/// parameters.
pub fn grad_check_block(block: &str, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::with_init_std(GC_INIT_STD);
    let d = GC_DIM;
    let h = DEFAULT_STEP;
    match block {
        "patch_embed" => {
            let cfg = EncoderConfig {
                image_size: 8,
                patch_size: 4,
                dim: d,
                layers: 1,
                heads: GC_HEADS,
            };
            let lin = Linear::new(&mut store, "patch", cfg.patch_dim(), d, &mut rng);
            let enc = ImageEncoder::new(&mut store, "enc", cfg, &mut rng)?;
            let x = random_tensor(&mut rng, &[cfg.patches(), cfg.patch_dim()]);
            let w1 = random_tensor(&mut rng, &[cfg.patches(), d]);
            let w2 = random_tensor(&mut rng, &[cfg.tokens(), d]);
            let bytes: Vec<u8> = (0..cfg.image_size * cfg.image_size * 3).map(|_| rng.random()).collect();
            let img = RgbImage::from_raw(cfg.image_size, cfg.image_size, bytes)?;
            let input = grad_check(|g, x| { let y = lin.forward(g, &store, x)?; readout(g, y, &w1) }, &x, h)?;
            let params = grad_check_params(
                |g, s| {
                    let px = g.constant(x.clone());
                    let y = lin.forward(g, s, px)?;
                    let a = readout(g, y, &w1)?;
                    let e = enc.encode(g, s, &img)?;
                    let b = readout(g, e, &w2)?;
                    g.add(a, b)
                },
                &mut store,
                h,
            )?;
            Ok(worst_of(input, params))
        }
        "self_attn" => {
            let block = SelfAttentionBlock::new(&mut store, "sa", d, GC_HEADS, &mut rng)?;
            let x = random_tensor(&mut rng, &[4, d]);
            let w = random_tensor(&mut rng, &[4, d]);
            let causal = seed % 2 == 1;
            let input = grad_check(|g, x| { let y = block.forward(g, &store, x, causal)?; readout(g, y, &w) }, &x, h)?;
            let params = grad_check_params(
                |g, s| {
                    let xv = g.constant(x.clone());
                    let y = block.forward(g, s, xv, causal)?;
                    readout(g, y, &w)
                },
                &mut store,
                h,
            )?;
            Ok(worst_of(input, params))
        }
        "cross_attn_fusion" => {
            let fusion = CrossAttentionFusion::new(&mut store, "fx", d, GC_HEADS, &mut rng)?;
            let (ni, nt) = (3, 4);
            let q = if seed % 2 == 0 { QuerySource::Image } else { QuerySource::Trajectory };
            let nq = if q == QuerySource::Image { ni } else { nt };
            let x = random_tensor(&mut rng, &[ni + nt, d]);
            let w = random_tensor(&mut rng, &[nq, d]);
            let run = |g: &mut Graph, s: &ParamStore, x: Var| -> Result<Var> {
                let fi = g.slice_rows(x, 0, ni)?;
                let ft = g.slice_rows(x, ni, nt)?;
                let y = fusion.fuse(g, s, fi, ft, q)?;
                readout(g, y.tokens, &w)
            };
            let input = grad_check(|g, xv| run(g, &store, xv), &x, h)?;
            let params = grad_check_params(|g, s| { let xv = g.constant(x.clone()); run(g, s, xv) }, &mut store, h)?;
            Ok(worst_of(input, params))
        }
        "qformer" => {
            let m = 3;
            let queries = store.add_init("queries", &[m, d], &mut rng);
            let blocks = (0..2)
                .map(|i| CrossAttentionBlock::new(&mut store, &format!("qf{i}"), d, GC_HEADS, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let ln = LayerNorm::new(&mut store, "qf_ln", d);
            let proj = Linear::new(&mut store, "proj", d, d, &mut rng);
            let ctx = random_tensor(&mut rng, &[5, d]);
            let w = random_tensor(&mut rng, &[m, d]);
            let run = |g: &mut Graph, s: &ParamStore, c: Var| -> Result<Var> {
                let mut x = g.param(s, queries);
                for b in &blocks {
                    x = b.forward(g, s, x, c)?;
                }
                let x = ln.forward(g, s, x)?;
                let y = proj.forward(g, s, x)?;
                readout(g, y, &w)
            };
            let input = grad_check(|g, c| run(g, &store, c), &ctx, h)?;
            let params = grad_check_params(|g, s| { let c = g.constant(ctx.clone()); run(g, s, c) }, &mut store, h)?;
            Ok(worst_of(input, params))
        }
        "decoder" => {
            let vocab = 7;
            let emb = store.add_init("tok_emb", &[vocab, d], &mut rng);
            let block = DecoderBlock::new(&mut store, "dec", d, GC_HEADS, &mut rng)?;
            let ln = LayerNorm::new(&mut store, "dec_ln", d);
            let ids: Vec<usize> = (0..4).map(|_| rng.random_range(0..vocab)).collect();
            let targets: Vec<Option<usize>> = (0..4)
                .map(|i| (i != 3 || seed % 3 != 0).then(|| rng.random_range(0..vocab)))
                .collect();
            let mem = random_tensor(&mut rng, &[3, d]);
            let run = |g: &mut Graph, s: &ParamStore, m: Var| -> Result<Var> {
                let table = g.param(s, emb);
                let x = g.gather(table, &ids)?;
                let x = block.forward(g, s, x, m)?;
                let x = ln.forward(g, s, x)?;
                let logits = g.matmul_bt(x, table)?;
                g.cross_entropy(logits, &targets)
            };
            let input = grad_check(|g, m| run(g, &store, m), &mem, h)?;
            let params = grad_check_params(|g, s| { let m = g.constant(mem.clone()); run(g, s, m) }, &mut store, h)?;
            Ok(worst_of(input, params))
        }
        "loss" => {
            let (rows, vocab) = (5, 6);
            let logits = random_tensor(&mut rng, &[rows, vocab]);
            let targets: Vec<Option<usize>> = (0..rows)
                .map(|i| (i % 4 != 3).then(|| rng.random_range(0..vocab)))
                .collect();
            grad_check(|g, x| { let x = g.scale(x, 3.0)?; g.cross_entropy(x, &targets) }, &logits, h)
        }
        other => Err(Error::InvalidArgument(format!("unknown block `{other}`"))),
    }
}

/// Worst relative error per block over `seeds`.
pub fn gradient_battery(seeds: std::ops::Range<u64>) -> Result<Vec<(&'static str, f64)>> {
    GRAD_BLOCKS
        .iter()
        .map(|&b| {
            let mut worst = 0.0f64;
            for s in seeds.clone() {
                worst = worst.max(grad_check_block(b, s)?);
            }
            Ok((b, worst))
        })
        .collect()
}

// ---------------------------------------------------------------- metrics

/// Clipped n-gram matches and candidate n-gram total, by exhaustive
/// pairwise counting.
fn brute_clipped(cand: &[u32], refr: &[u32], n: usize) -> (usize, usize) {
    if cand.len() < n {
        return (0, 0);
    }
    let grams: Vec<&[u32]> = cand.windows(n).collect();
    let mut matched = 0;
    for (i, gram) in grams.iter().enumerate() {
        if grams[..i].contains(gram) {
            continue;
        }
        let in_cand = grams.iter().filter(|g| *g == gram).count();
        let in_ref = if refr.len() < n { 0 } else { refr.windows(n).filter(|g| g == gram).count() };
        matched += in_cand.min(in_ref);
    }
    (matched, grams.len())
}

/// Brute-force corpus BLEU-4.
pub fn bleu4_oracle(cands: &[Vec<u32>], refs: &[Vec<u32>]) -> f64 {
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    for (c, r) in cands.iter().zip(refs) {
        for n in 1..=4 {
            let (a, b) = brute_clipped(c, r, n);
            m[n - 1] += a;
            t[n - 1] += b;
        }
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    if c == 0 || m.contains(&0) {
        return 0.0;
    }
    let p: f64 = (0..4).map(|i| (m[i] as f64 / t[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c <= r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * p.exp()
}

/// ROUGE-L from a full LCS table.
pub fn rouge_l_oracle(cand: &[u32], refr: &[u32]) -> f64 {
    let (n, m) = (cand.len(), refr.len());
    if n == 0 || m == 0 {
        return 0.0;
    }
    let mut t = vec![vec![0usize; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            t[i][j] = if cand[i - 1] == refr[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    let l = t[n][m] as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / n as f64, l / m as f64);
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Random short sequences over a small alphabet, so n-gram matches are
/// common.
pub fn random_token_pair<R: Rng>(rng: &mut R) -> (Vec<u32>, Vec<u32>) {
    let alphabet = rng.random_range(2..6u32);
    let seq = |rng: &mut R| -> Vec<u32> {
        let len = rng.random_range(0..14);
        (0..len).map(|_| rng.random_range(0..alphabet)).collect()
    };
    let a = seq(rng);
    let b = seq(rng);
    (a, b)
}

/// Worst absolute disagreement between the metrics and their oracles over
/// `pairs` random sentence pairs (each pair scored alone and as a corpus of
/// groups of eight).
pub fn metric_oracle_gap(pairs: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<_> = (0..pairs).map(|_| random_token_pair(&mut rng)).collect();
    let mut worst = 0.0f64;
    for (c, r) in &data {
        worst = worst.max((rouge_l(c, r) - rouge_l_oracle(c, r)).abs());
        let (cs, rs) = (vec![c.clone()], vec![r.clone()]);
        worst = worst.max((bleu4(&cs, &rs)? - bleu4_oracle(&cs, &rs)).abs());
    }
    for chunk in data.chunks(8) {
        let cs: Vec<Vec<u32>> = chunk.iter().map(|p| p.0.clone()).collect();
        let rs: Vec<Vec<u32>> = chunk.iter().map(|p| p.1.clone()).collect();
        worst = worst.max((bleu4(&cs, &rs)? - bleu4_oracle(&cs, &rs)).abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------- goldens

const FIXTURE_CALIBRATION: &str = include_str!("../fixtures/golden/calibration.json");
const FIXTURE_SCENES: &str = include_str!("../fixtures/golden/scenes.json");
const FIXTURE_DIGESTS: &str = include_str!("../fixtures/golden/digests.json");

#[derive(Debug, Clone, Deserialize)]
struct FixtureEntry {
    name: String,
    scene: SceneParams,
}

/// One checked-in render fixture.
#[derive(Debug, Clone)]
pub struct GoldenFixture {
    pub name: String,
    pub scene: SceneParams,
    pub plan: TrajectoryPlan,
}

/// SHA-256 digests of the three renders of a fixture.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct GoldenDigests {
    pub trajectory: String,
    pub overlay: String,
    pub camera: String,
}

pub fn golden_camera() -> CameraModel {
    CameraModel::from_json_str(FIXTURE_CALIBRATION).expect("fixture calibration parses")
}

pub fn golden_fixtures() -> Result<Vec<GoldenFixture>> {
    let entries: Vec<FixtureEntry> =
        serde_json::from_str(FIXTURE_SCENES).map_err(|e| Error::Config(format!("golden scenes: {e}")))?;
    entries
        .into_iter()
        .map(|e| {
            Ok(GoldenFixture {
                plan: build_plan(&e.scene)?,
                name: e.name,
                scene: e.scene,
            })
        })
        .collect()
}

pub fn golden_table() -> Result<BTreeMap<String, GoldenDigests>> {
    serde_json::from_str(FIXTURE_DIGESTS).map_err(|e| Error::Config(format!("golden digests: {e}")))
}

/// Renders a fixture and returns the digests of (trajectory, overlay, camera).
pub fn render_digests(fx: &GoldenFixture, cam: &CameraModel) -> Result<GoldenDigests> {
    let traj = render_trajectory_image(&fx.plan, cam);
    let camera = render_camera_image(&fx.scene, cam);
    let over = overlay(&camera, &traj)?;
    Ok(GoldenDigests {
        trajectory: traj.digest(),
        overlay: over.digest(),
        camera: camera.digest(),
    })
}

/// Names of fixtures whose renders differ from the checked-in table.
pub fn golden_mismatches() -> Result<Vec<String>> {
    let cam = golden_camera();
    let table = golden_table()?;
    let mut bad = Vec::new();
    for fx in golden_fixtures()? {
        let got = render_digests(&fx, &cam)?;
        if table.get(&fx.name) != Some(&got) {
            bad.push(fx.name);
        }
    }
    if table.len() != golden_fixtures()?.len() {
        bad.push("table size".into());
    }
    Ok(bad)
}

// ---------------------------------------------------------------- battery

/// The full battery in a fixed order.
pub fn run_all(grad_seeds: u64, oracle_pairs: usize) -> Vec<Check> {
    vec![
        Check::timed("shape contract", shape_contract),
        Check::timed("gradient battery", || {
            let per_block = gradient_battery(0..grad_seeds)?;
            let worst = per_block.iter().map(|b| b.1).fold(0.0, f64::max);
            let detail = per_block.iter().map(|(b, e)| format!("{b} {e:.2e}")).collect::<Vec<_>>().join(", ");
            Ok((worst < GRAD_TOLERANCE, format!("{grad_seeds} seeds: {detail}")))
        }),
        Check::timed("metric oracles", || {
            let gap = metric_oracle_gap(oracle_pairs, 7)?;
            Ok((gap < ORACLE_TOLERANCE, format!("{oracle_pairs} pairs, max gap {gap:.1e}")))
        }),
        Check::timed("golden renders", || {
            let bad = golden_mismatches()?;
            Ok((bad.is_empty(), if bad.is_empty() { "all digests match".into() } else { format!("mismatch: {}", bad.join(", ")) }))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_pass_for_a_few_seeds() {
        for (b, e) in gradient_battery(0..2).unwrap() {
            assert!(e < GRAD_TOLERANCE, "{b}: {e}");
        }
    }

    #[test]
    fn oracles_agree_on_fixtures() {
        let c = vec![vec![1u32, 2, 3, 4]];
        let r = vec![vec![1u32, 2, 3, 4, 5]];
        assert!((bleu4_oracle(&c, &r) - 0.77880).abs() < 1e-5);
        assert!((rouge_l_oracle(&[1, 2, 3, 4], &[1, 2, 9]) - 0.58653).abs() < 1e-4);
    }

    #[test]
    fn unknown_block_is_rejected() {
        assert!(grad_check_block("nope", 0).is_err());
    }
}
