//! Acceptance suite for the command-line surface: the dose-threshold sweep
//! must peak in the useful band, and every command must be byte-for-byte
//! reproducible under a fixed seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rtseg_core::dataset::{save_manifest, write_case};
use rtseg_core::grid::{Mask, ProbVolume};
use rtseg_core::io;
use rtseg_core::phantom::{generate_case, PhantomSpec};
use rtseg_core::rng::SeededRng;
use rtseg_core::textprompt::Task;

/// Prints the criterion verdict when the test finishes — PASS if the body
/// ran to completion, FAIL if it unwound through an assertion.
struct Criterion {
    name: &'static str,
    passed: bool,
}

impl Criterion {
    fn start(name: &'static str) -> Self {
        Criterion { name, passed: false }
    }

    fn pass(mut self) {
        self.passed = true;
    }
}

impl Drop for Criterion {
    fn drop(&mut self) {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let line = format!("ACCEPTANCE {}: {verdict}\n", self.name);
        // The test harness captures a passing test's stdout/stderr; write
        // the verdict to the real stderr so a plain `cargo test` run still
        // shows one line per criterion.
        #[cfg(unix)]
        {
            use std::io::Write;
            use std::mem::ManuallyDrop;
            use std::os::unix::io::FromRawFd;
            let mut err = ManuallyDrop::new(unsafe { std::fs::File::from_raw_fd(2) });
            let _ = err.write_all(line.as_bytes());
            return;
        }
        #[allow(unreachable_code)]
        {
            print!("{line}");
        }
    }
}

fn rtseg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rtseg"))
}

/// Run to completion, assert success, return raw stdout bytes.
fn run_ok(cmd: &mut Command) -> Vec<u8> {
    let out = cmd.output().expect("spawning the binary");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

// ---------------------------------------------------------------------------
// C7 — dose-threshold sweep peaks in the useful band
// ---------------------------------------------------------------------------

/// Write `n` generated cases into `dir` and a manifest beside them.
fn write_split(dir: &Path, task: Task, base: u64, offset: u64, n: usize) {
    fs::create_dir_all(dir).unwrap();
    let mut entries = Vec::new();
    for i in 0..n {
        let spec = PhantomSpec {
            task,
            seed: SeededRng::derive(base, &[offset + i as u64]).seed(),
            ..Default::default()
        };
        let case = generate_case(&spec).unwrap();
        entries.push(write_case(dir, &format!("case_{i:03}"), &case).unwrap());
    }
    save_manifest(dir.join("manifest.json"), &entries).unwrap();
}

#[test]
fn c7_tau_sweep_peaks_in_the_useful_band() {
    let crit = Criterion::start("C7");
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    // Stock phantoms make both failure ends of the sweep visible: a loose
    // box (low threshold) reaches into the mid-dose band and admits bright
    // distractor blobs, while a tight box (high threshold) clips the lesion
    // itself, so the Dice curve rises and then falls across the sweep.
    let train_dir = tmp.path().join("train");
    let test_dir = tmp.path().join("test");
    write_split(&train_dir, Task::Ce, 70, 0, 10);
    write_split(&test_dir, Task::Ce, 70, 1000, 5);

    let stdout = run_ok(
        rtseg()
            .arg("sweep-tau")
            .arg("--manifest")
            .arg(train_dir.join("manifest.json"))
            .arg("--test-manifest")
            .arg(test_dir.join("manifest.json"))
            .args(["--taus", "0.5,0.6,0.7,0.8,0.9"])
            .args(["--epochs", "40", "--seed", "11"]),
    );
    let report: serde_json::Value = serde_json::from_slice(&stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let mut best: Option<(f64, f64)> = None;
    for row in rows {
        let tau = row["value"].as_f64().unwrap();
        assert!(
            row.get("error").is_none() || row["error"].is_null(),
            "row {tau} failed: {row}"
        );
        let dice = row["mean_dice"].as_f64().unwrap();
        eprintln!(
            "C7: tau {tau:.1} mean dice {dice:.4} mean hd95 {:?}",
            row["mean_hd95_mm"].as_f64()
        );
        if best.is_none_or(|(_, d)| dice > d) {
            best = Some((tau, dice));
        }
    }
    let (best_tau, best_dice) = best.unwrap();
    eprintln!("C7: best tau {best_tau:.1} (dice {best_dice:.4}), wall {:.1} s", t0.elapsed().as_secs_f64());
    assert!(
        [0.7, 0.8, 0.9].iter().any(|t| (best_tau - t).abs() < 1e-9),
        "dice peaked at tau {best_tau}, outside the 0.7-0.9 band"
    );
    crit.pass();
}

// ---------------------------------------------------------------------------
// C8 — byte-identical reruns for every command
// ---------------------------------------------------------------------------

/// Recursively collect every file under `dir`, as paths relative to it.
fn walk(dir: &Path) -> Vec<PathBuf> {
    fn go(base: &Path, cur: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(cur).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                go(base, &path, out);
            } else {
                out.push(path.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    go(dir, dir, &mut out);
    out.sort();
    out
}

/// Assert the two run directories hold identical trees, byte for byte.
fn assert_same_tree(a: &Path, b: &Path) {
    let fa = walk(a);
    let fb = walk(b);
    assert_eq!(fa, fb, "file sets diverged");
    for rel in &fa {
        let ba = fs::read(a.join(rel)).unwrap();
        let bb = fs::read(b.join(rel)).unwrap();
        assert_eq!(ba, bb, "file {} differs between reruns", rel.display());
    }
}

/// Run one command with identical relative arguments in both directories
/// and assert the stdout bytes match; the caller then re-checks the trees.
fn run_twice(a: &Path, b: &Path, args: &[&str]) {
    let out_a = run_ok(rtseg().current_dir(a).args(args));
    let out_b = run_ok(rtseg().current_dir(b).args(args));
    assert_eq!(
        out_a,
        out_b,
        "stdout differs for {:?}:\nA: {}\nB: {}",
        args,
        String::from_utf8_lossy(&out_a),
        String::from_utf8_lossy(&out_b)
    );
    assert_same_tree(a, b);
}

#[test]
fn c8_every_command_is_byte_reproducible() {
    let crit = Criterion::start("C8");
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();

    // Auxiliary inputs for the loss command: a seeded probability volume
    // and an all-ones ROI, fabricated identically in both directories.
    for dir in [&a, &b] {
        let spec = PhantomSpec {
            task: Task::Ce,
            dims: [28, 28, 28],
            seed: 77,
            ..Default::default()
        };
        let case = generate_case(&spec).unwrap();
        let grid = case.gt.grid.clone();
        let mut rng = SeededRng::new(8);
        let prob = ProbVolume::new(
            grid.clone(),
            (0..grid.voxel_count())
                .map(|_| rng.range_f64(0.0, 1.0) as f32)
                .collect(),
        )
        .unwrap();
        io::write_prob_volume(dir.join("prob"), &prob).unwrap();
        let roi = Mask::new(grid.clone(), vec![1u8; grid.voxel_count()]).unwrap();
        io::write_mask(dir.join("roi"), &roi).unwrap();
        fs::write(dir.join("train.json"), br#"{"epochs": 6}"#).unwrap();
    }

    // The full command surface, in dependency order. Each entry reruns in
    // both directories; outputs feed later commands, so reproducibility is
    // established inductively along the chain.
    let steps: Vec<Vec<&str>> = vec![
        vec![
            "phantom", "--task", "ce", "--n", "2", "--dim", "28", "--augment", "1",
            "--out", "data", "--seed", "3",
        ],
        vec!["prompt-box", "--dose", "data/ce_000_dose.mv1", "--tau", "0.8", "--out", "highdose.mv1"],
        vec![
            "clicks", "--pred", "data/ce_001_gt.mv1", "--gt", "data/ce_000_gt.mv1",
            "--count", "5", "--seed", "9",
        ],
        vec![
            "loss", "--prob", "prob.mv1", "--gt", "data/ce_000_gt.mv1", "--roi", "roi.mv1",
        ],
        vec!["eval", "--pred", "data/ce_001_gt.mv1", "--gt", "data/ce_000_gt.mv1"],
        vec![
            "train", "--manifest", "data/manifest.json", "--out", "model.json",
            "--epochs", "25", "--seed", "11",
        ],
        vec![
            "predict", "--model", "model.json", "--image", "data/ce_000_image.mv1",
            "--dose", "data/ce_000_dose.mv1", "--text", "data/ce_000_text.json",
            "--out", "pred.mv1",
        ],
        vec![
            "sweep-tau", "--manifest", "data/manifest.json",
            "--test-manifest", "data/manifest.json", "--taus", "0.7,0.8",
            "--epochs", "8", "--parallel", "2", "--seed", "11",
        ],
        vec![
            "sweep-clicks", "--manifest", "data/manifest.json",
            "--test-manifest", "data/manifest.json", "--iterations", "0,1",
            "--clicks", "2", "--epochs", "8", "--seed", "11",
        ],
        // Defaults from a config file merge before flags; the merged run
        // must be just as reproducible.
        vec![
            "train", "--config", "train.json", "--manifest", "data/manifest.json",
            "--out", "model_cfg.json", "--seed", "12",
        ],
        // Pretty-printed output is part of the byte contract too.
        vec!["eval", "--json", "--pred", "data/ce_000_gt.mv1", "--gt", "data/ce_000_gt.mv1"],
    ];
    for step in &steps {
        run_twice(&a, &b, step);
    }
    crit.pass();
}
