//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the lines always reach
//! the terminal. Exits non-zero if any gated criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use t2c_cli::experiment::{separation, SeparationReport, SeparationSpec};
use t2c_core::dataset::render_camera_image;
use t2c_core::encoders::FusionKind;
use t2c_core::metrics::{bleu4, rouge_l};
use t2c_core::raster::{overlay, render_trajectory_image};
use t2c_core::text::tokenize;
use t2c_core::verify::{golden_camera, golden_fixtures, golden_table, gradient_battery, shape_contract};

const SHAPE_BUDGET_S: f64 = 1.0;

const GRAD_SEEDS: u64 = 100;
const GRAD_TOL: f64 = 1e-5;
const GRAD_BUDGET_S: f64 = 60.0;

const ORACLE_PAIRS: usize = 1000;
const ORACLE_TOL: f64 = 1e-12;
const FIXTURE_TOL: f64 = 1e-4;
const ORACLE_BUDGET_S: f64 = 30.0;

const GOLDEN_COUNT: usize = 10;
const GOLDEN_BUDGET_S: f64 = 10.0;

const CHANCE_BAND: (f64, f64) = (0.40, 0.60);
const XATTN_MIN_ACCURACY: f64 = 0.90;
const MAX_EPOCHS: usize = 10;
const SEPARATION_BUDGET_S: f64 = 600.0;

struct Line {
    id: u8,
    name: &'static str,
    passed: bool,
    seconds: f64,
    detail: String,
}

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Line {
    let t = Instant::now();
    let (passed, detail) = f();
    Line {
        id,
        name,
        passed,
        seconds: t.elapsed().as_secs_f64(),
        detail,
    }
}

fn report(line: &Line) {
    println!(
        "{} criterion {} {:<22} {:>8.2}s  {}",
        if line.passed { "PASS" } else { "FAIL" },
        line.id,
        line.name,
        line.seconds,
        line.detail
    );
}

// ------------------------------------------------------------ oracles

/// Clipped n-gram matches by direct scanning: every candidate window is
/// counted in both sequences with a linear pass.
fn brute_bleu4(cands: &[Vec<u32>], refs: &[Vec<u32>]) -> f64 {
    fn occurrences(s: &[u32], g: &[u32]) -> usize {
        (0..s.len().saturating_sub(g.len() - 1)).filter(|&i| &s[i..i + g.len()] == g).count()
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (mut hits, mut total) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            if c.len() < n {
                continue;
            }
            total += c.len() + 1 - n;
            let mut seen: Vec<&[u32]> = Vec::new();
            for i in 0..=c.len() - n {
                let g = &c[i..i + n];
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                hits += occurrences(c, g).min(occurrences(r, g));
            }
        }
        if hits == 0 {
            return 0.0;
        }
        log_sum += (hits as f64 / total as f64).ln();
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / 4.0).exp()
}

/// ROUGE-L F (beta 1.2) from an iterative LCS table.
fn dp_rouge_l(c: &[u32], r: &[u32]) -> f64 {
    let mut t = vec![vec![0usize; r.len() + 1]; c.len() + 1];
    for i in 1..=c.len() {
        for j in 1..=r.len() {
            t[i][j] = if c[i - 1] == r[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    let l = t[c.len()][r.len()] as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
    let b2 = 1.44;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

fn criterion_metrics() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut gap = 0.0f64;
    let mut cands = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..ORACLE_PAIRS {
        let v = rng.random_range(2..8u32);
        let seq = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..rng.random_range(0..14)).map(|_| rng.random_range(0..v)).collect() };
        let (c, r) = (seq(&mut rng), seq(&mut rng));
        gap = gap.max((rouge_l(&c, &r) - dp_rouge_l(&c, &r)).abs());
        let single = bleu4(&[c.clone()], &[r.clone()]).unwrap_or(f64::NAN);
        gap = gap.max((single - brute_bleu4(&[c.clone()], &[r.clone()])).abs());
        cands.push(c);
        refs.push(r);
    }
    let corpus = bleu4(&cands, &refs).unwrap_or(f64::NAN);
    gap = gap.max((corpus - brute_bleu4(&cands, &refs)).abs());

    let b = bleu4(&[tokenize("i will slow down")], &[tokenize("i will slow down .")]).unwrap_or(f64::NAN);
    let r = rouge_l(&tokenize("i will slow down"), &tokenize("i will stop"));
    let fixtures_ok = (b - 0.77880).abs() < FIXTURE_TOL && (r - 0.58653).abs() < FIXTURE_TOL;
    (
        gap < ORACLE_TOL && fixtures_ok,
        format!("{ORACLE_PAIRS} pairs, max gap {gap:.1e}; fixtures bleu {b:.5} rouge {r:.5}"),
    )
}

// ------------------------------------------------------------ goldens

fn criterion_golden() -> (bool, String) {
    let cam = golden_camera();
    let (Ok(fixtures), Ok(table)) = (golden_fixtures(), golden_table()) else {
        return (false, "fixtures failed to load".into());
    };
    let sha = |b: Vec<u8>| hex::encode(Sha256::digest(b));
    let mut bad = Vec::new();
    for fx in &fixtures {
        let Some(want) = table.get(&fx.name) else {
            bad.push(format!("{} missing", fx.name));
            continue;
        };
        for _ in 0..2 {
            let traj = render_trajectory_image(&fx.plan, &cam);
            let camera = render_camera_image(&fx.scene, &cam);
            let Ok(over) = overlay(&camera, &traj) else {
                bad.push(format!("{} overlay", fx.name));
                break;
            };
            if sha(traj.to_ppm()) != want.trajectory || sha(over.to_ppm()) != want.overlay || sha(camera.to_ppm()) != want.camera {
                bad.push(fx.name.clone());
                break;
            }
        }
    }
    let n = fixtures.len();
    (
        bad.is_empty() && n == GOLDEN_COUNT,
        if bad.is_empty() { format!("{n} fixtures x 3 images, 2 renders each") } else { format!("mismatch: {}", bad.join(", ")) },
    )
}

// ------------------------------------------------------------ CLI helpers

fn t2c(args: &[&str], dir: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_t2c"))
        .args(args)
        .current_dir(dir)
        .env_remove("T2C_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(String::from_utf8_lossy(&o.stdout).into_owned())
    } else {
        Err(format!("t2c {} -> {:?}: {}", args.join(" "), o.status.code(), String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn file_digest(p: &Path) -> Result<String, String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?)))
}

fn criterion_ablation(dir: &Path) -> Result<(bool, String), String> {
    std::fs::write(
        dir.join("ablate.json"),
        r#"{"seed": 2, "data": {"standard": 40, "pairs": 30}, "train": {"epochs": 2}}"#,
    )
    .map_err(|e| e.to_string())?;
    let out = t2c(&["ablate", "--config", "ablate.json", "--out", "ablate"], dir)?;
    let rows: Vec<(String, usize)> = out
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let label = it.next()?.to_string();
            let vals: Vec<f64> = it.map(str::parse).collect::<Result<_, _>>().ok()?;
            (!vals.is_empty()).then_some((label, vals.len()))
        })
        .collect();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("ablate/ablation.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let amb_acc = json["rows"][0]["ambiguous"]["action_accuracy"].as_f64();
    let shaped = rows.len() == 3
        && rows[0] == ("image".into(), 6)
        && rows[1] == ("trajectory".into(), 6)
        && rows[2] == ("image".into(), 6)
        && amb_acc.is_some();
    let mut detail = format!("rows {:?}", rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>());
    for line in out.lines() {
        detail.push_str("\n      ");
        detail.push_str(line);
    }
    Ok((shaped, detail))
}

fn criterion_determinism(dir: &Path) -> Result<(bool, String), String> {
    let mut digests: HashMap<&str, Vec<String>> = HashMap::new();
    for run in ["a", "b"] {
        let data = format!("{run}/data");
        let model = format!("{run}/model");
        let ev = format!("{run}/eval");
        t2c(&["gen-data", "--seed", "9", "--standard", "30", "--pairs", "15", "--out", &data], dir)?;
        t2c(&["train", "--seed", "9", "--data", &data, "--epochs", "2", "--out", &model], dir)?;
        t2c(&["eval", "--checkpoint", &format!("{model}/model.ckpt"), "--data", &data, "--out", &ev], dir)?;
        let d = dir.join(run);
        for (key, path) in [
            ("manifest", d.join("data/manifest.jsonl")),
            ("checkpoint", d.join("model/model.ckpt")),
            ("sidecar", d.join("model/model.ckpt.json")),
            ("train log", d.join("model/train_log.csv")),
            ("eval table", d.join("eval/eval_table.json")),
            ("per-sample", d.join("eval/per_sample.csv")),
        ] {
            digests.entry(key).or_default().push(file_digest(&path)?);
        }
    }
    let mut keys: Vec<_> = digests.keys().copied().collect();
    keys.sort();
    let differing: Vec<_> = keys.iter().filter(|k| digests[*k][0] != digests[*k][1]).collect();
    Ok((
        differing.is_empty(),
        if differing.is_empty() { format!("identical: {}", keys.join(", ")) } else { format!("differ: {differing:?}") },
    ))
}

fn from_result(r: Result<(bool, String), String>) -> (bool, String) {
    r.unwrap_or_else(|e| (false, e))
}

// ------------------------------------------------------------ main

fn separation_lines(t: Instant, report: Result<SeparationReport, String>) -> (Line, Line) {
    let seconds = t.elapsed().as_secs_f64();
    let rep = match report {
        Ok(r) => r,
        Err(e) => {
            let fail = |id, name| Line {
                id,
                name,
                passed: false,
                seconds,
                detail: e.clone(),
            };
            return (fail(5, "separation"), fail(6, "directional ordering"));
        }
    };
    let get = |k| rep.get(k).expect("variant was trained");
    let (base, xattn) = (get(FusionKind::Baseline), get(FusionKind::Xattn));
    let gated_seconds = base.seconds + xattn.seconds;
    let (a, b) = (base.ambiguous.action_accuracy, xattn.ambiguous.action_accuracy);
    let sep = Line {
        id: 5,
        name: "separation",
        passed: (CHANCE_BAND.0..=CHANCE_BAND.1).contains(&a)
            && b >= XATTN_MIN_ACCURACY
            && rep.spec.epochs <= MAX_EPOCHS
            && gated_seconds < SEPARATION_BUDGET_S,
        seconds: gated_seconds,
        detail: format!(
            "{} held-out pair samples, {} epochs: baseline action accuracy {a:.4} (band {:?}), xattn {b:.4} (min {XATTN_MIN_ACCURACY})",
            base.ambiguous.samples, rep.spec.epochs, CHANCE_BAND
        ),
    };
    let mut detail = format!(
        "test split whole BLEU-4: xattn {:.4} >= baseline {:.4}",
        xattn.test.table.whole_b4, base.test.table.whole_b4
    );
    let mut ranked: Vec<_> = rep.variants.iter().map(|v| (v.fusion, v.test.table.whole_b4)).collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1));
    detail.push_str("; ranking ");
    detail.push_str(&ranked.iter().map(|(f, s)| format!("{f} {s:.4}")).collect::<Vec<_>>().join(" > "));
    let ord = Line {
        id: 6,
        name: "directional ordering",
        passed: xattn.test.table.whole_b4 >= base.test.table.whole_b4,
        seconds: rep.seconds - gated_seconds,
        detail,
    };
    (sep, ord)
}

fn main() {
    // `cargo test -- <filter>` style arguments are accepted and ignored;
    // listing prints nothing so test discovery stays quiet
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut lines = Vec::new();
    let mut emit = |l: Line| {
        report(&l);
        lines.push(l);
    };

    emit(timed(1, "shape contract", || match shape_contract() {
        Ok((ok, d)) => (ok, d),
        Err(e) => (false, e.to_string()),
    }));
    emit(timed(2, "gradient battery", || match gradient_battery(0..GRAD_SEEDS) {
        Ok(per) => {
            let worst = per.iter().map(|b| b.1).fold(0.0, f64::max);
            (worst < GRAD_TOL, format!("{GRAD_SEEDS} seeds x {} blocks, max rel err {worst:.2e}", per.len()))
        }
        Err(e) => (false, e.to_string()),
    }));
    emit(timed(3, "metric oracles", criterion_metrics));
    emit(timed(4, "golden renders", criterion_golden));

    let t = Instant::now();
    let spec = SeparationSpec::default();
    let fusions = [FusionKind::Baseline, FusionKind::Xattn, FusionKind::Concat, FusionKind::Overlay];
    let rep = separation(&spec, &fusions, |f, e| {
        eprintln!("    [{f}] epoch {:>2} train {:.4} val {:.4}", e.epoch, e.train_loss, e.val_loss.unwrap_or(f64::NAN));
    })
    .map_err(|e| e.to_string());
    let (sep, ord) = separation_lines(t, rep);
    emit(sep);
    emit(ord);

    emit(timed(7, "ablation harness", || from_result(criterion_ablation(tmp.path()))));
    emit(timed(8, "determinism", || from_result(criterion_determinism(tmp.path()))));

    // wall-clock budgets for the fast criteria
    let budgets = [(1, SHAPE_BUDGET_S), (2, GRAD_BUDGET_S), (3, ORACLE_BUDGET_S), (4, GOLDEN_BUDGET_S)];
    let mut failed: Vec<u8> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    for (id, budget) in budgets {
        if let Some(l) = lines.iter().find(|l| l.id == id) {
            if l.seconds >= budget {
                println!("FAIL criterion {id} exceeded its {budget}s budget ({:.2}s)", l.seconds);
                failed.push(id);
            }
        }
    }
    failed.sort();
    failed.dedup();
    println!("acceptance: {} of 8 criteria passed", 8 - failed.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
