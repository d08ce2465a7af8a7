//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion ids (`A2 A3`) to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use photodepth::augment::{sample_ar_crop, AspectRatioTable};
use photodepth::eval::{
    align_lsq, align_median, fscore, fscore_clouds, improvement_aggregate, rank_aggregate, within_threshold_brute,
    within_threshold_grid, DepthPair,
};
use photodepth::geometry::warp_support;
use photodepth::io::{read_camera, read_pfm, subsample_indices, CameraRecord, SequenceManifest};
use photodepth::losses::{automask, LossConfig};
use photodepth::optim::{forward_backward, gradcheck, GradcheckSubset, SceneState};
use photodepth::synth::{
    add_dynamic_occluder, camera_locked_occluder, make_scene, occlusion_masks, perturbed_synthetic_state,
    render_sequence, transient_occluder, PlaneScene, RenderedFrame, SceneSpec,
};
use photodepth::types::depth_to_disp;
use photodepth::{Camera, DepthField, Rng};
use rand::Rng as _;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

const CRITERIA: [(&str, &str, Check); 11] = [
    ("A1", "gradient correctness", a1_gradients),
    ("A2", "depth recovery", a2_depth_recovery),
    ("A3", "intrinsics self-calibration", a3_self_calibration),
    ("A4", "automask semantics", a4_automask),
    ("A5", "min-loss occlusion routing", a5_occlusion_routing),
    ("A6", "alignment exactness", a6_alignment),
    ("A7", "metric oracles", a7_metric_oracles),
    ("A8", "aspect-ratio augmentation distribution", a8_ar_distribution),
    ("A9", "aggregation formulas", a9_aggregation),
    ("A10", "thread-count determinism", a10_determinism),
    ("A11", "frame subsampling", a11_subsampling),
];

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!result.pass);
        println!(
            "{id:<4} {verdict}  {name}: {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

// ---- oracles -------------------------------------------------------------

/// Least-squares `(s, b)` minimising `sum (s*x + b - y)^2`.
fn lsq_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let s = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (s, (sy - s * sx) / n)
}

/// AbsRel (%) and delta < 1.25 (%) after disparity-space lsq alignment.
fn aligned_metrics(pred: &DepthField, gt: &DepthField) -> (f64, f64) {
    let dp: Vec<f64> = pred.values.iter().map(|d| 1.0 / d).collect();
    let dg: Vec<f64> = gt.values.iter().map(|d| 1.0 / d).collect();
    let (s, b) = lsq_oracle(&dp, &dg);
    let aligned: Vec<f64> = dp.iter().map(|d| 1.0 / (s * d + b).max(1e-6)).collect();
    let n = aligned.len() as f64;
    let absrel = aligned
        .iter()
        .zip(&gt.values)
        .map(|(p, g)| (p - g).abs() / g)
        .sum::<f64>()
        / n;
    let delta = aligned
        .iter()
        .zip(&gt.values)
        .filter(|(p, g)| (*p / *g).max(*g / *p) < 1.25)
        .count() as f64
        / n;
    (100.0 * absrel, 100.0 * delta)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- CLI runs ------------------------------------------------------------

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_photodepth")
}

fn workdir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temporary directory"))
        .path()
}

fn photodepth(args: &[&str]) -> Duration {
    let start = Instant::now();
    let out = Command::new(bin()).args(args).output().expect("running photodepth");
    assert!(
        out.status.success(),
        "photodepth {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    start.elapsed()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// The 64x96 two-plane scene shared by A2, A3 and A10.
fn scene_dir() -> &'static Path {
    static DONE: OnceLock<PathBuf> = OnceLock::new();
    DONE.get_or_init(|| {
        let dir = workdir().join("two_plane");
        photodepth(&["--seed", "1", "synth", "--out", p(&dir), "--scene", "two-plane"]);
        dir
    })
}

struct Recovery {
    absrel: f64,
    delta: f64,
    camera: Camera,
    elapsed: Duration,
}

fn recover(name: &str, learn_intrinsics: bool) -> Recovery {
    let scene = scene_dir();
    let out = workdir().join(name);
    let manifest = scene.join("manifest.txt");
    let mut args = vec![
        "--threads",
        "1",
        "optimize",
        "--manifest",
        p(&manifest),
        "--out",
        p(&out),
        "--fixed-poses",
        "--iterations",
        "3000",
        "--lr",
        "0.05",
    ];
    if learn_intrinsics {
        args.push("--learn-intrinsics");
    }
    let elapsed = photodepth(&args);
    let pred = read_pfm(&out.join("depth.pfm")).unwrap();
    let record = SequenceManifest::read(&manifest).unwrap();
    let gt = read_pfm(&record.resolve(record.gt_depth.as_ref().unwrap())).unwrap();
    let (absrel, delta) = aligned_metrics(&pred, &gt);
    Recovery {
        absrel,
        delta,
        camera: read_camera(&out.join("camera.txt")).unwrap(),
        elapsed,
    }
}

fn fixed_run() -> &'static Recovery {
    static RUN: OnceLock<Recovery> = OnceLock::new();
    RUN.get_or_init(|| recover("fixed", false))
}

// ---- criteria ------------------------------------------------------------

fn a1_gradients() -> Outcome {
    let start = Instant::now();
    let cfg = LossConfig::default();
    let subset = GradcheckSubset {
        disparity_samples: 16 * 24,
        poses: true,
        intrinsics: true,
    };
    let root = Rng::new(2024);
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for i in 0..20 {
        let mut rng = root.fork(i);
        let mut state = perturbed_synthetic_state(&mut rng, 16, 24).unwrap();
        let report = gradcheck(&mut state, &cfg, subset, 1e-5, &mut rng).unwrap();
        entries += report.entries.len();
        worst = worst.max(report.max_rel_error);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 120.0,
        format!("max rel error {worst:.2e} (< 1e-4) over {entries} entries in 20 scenes, {secs:.1}s (< 120s)"),
    )
}

fn a2_depth_recovery() -> Outcome {
    let r = fixed_run();
    let secs = r.elapsed.as_secs_f64();
    outcome(
        r.absrel < 2.0 && r.delta > 99.0 && secs < 300.0,
        format!(
            "AbsRel {:.3}% (< 2), delta {:.2}% (> 99), {secs:.1}s single-threaded (< 300s)",
            r.absrel, r.delta
        ),
    )
}

fn a3_self_calibration() -> Outcome {
    let truth = read_camera(&scene_dir().join("camera.txt")).unwrap();
    let fixed = fixed_run();
    let r = recover("learned", true);
    let c = r.camera;
    let fx_err = (c.fx / truth.fx - 1.0).abs() * 100.0;
    let fy_err = (c.fy / truth.fy - 1.0).abs() * 100.0;
    let cx_err = (c.cx - truth.cx).abs();
    let cy_err = (c.cy - truth.cy).abs();
    let gap = (r.absrel - fixed.absrel).abs();
    outcome(
        fx_err < 1.0 && fy_err < 1.0 && cx_err < 2.0 && cy_err < 2.0 && gap <= 0.5,
        format!(
            "fx {:.2} vs {:.2} ({fx_err:.2}%), fy {:.2} vs {:.2} ({fy_err:.2}%) (< 1%); \
             cx off {cx_err:.2}px, cy off {cy_err:.2}px (< 2px); AbsRel {:.3}% vs fixed {:.3}% (gap {gap:.3} <= 0.5)",
            c.fx, truth.fx, c.fy, truth.fy, r.absrel, fixed.absrel
        ),
    )
}

fn rendered(scene: &PlaneScene) -> (RenderedFrame, Vec<RenderedFrame>) {
    let mut frames = render_sequence(scene).unwrap().into_iter().map(|(_, f)| f);
    let target = frames.next().unwrap();
    (target, frames.collect())
}

/// Automask with every parameter at the truth.
fn gt_automask(scene: &PlaneScene) -> (Vec<bool>, Vec<bool>, RenderedFrame) {
    let (target, supports) = rendered(scene);
    let warps: Vec<_> = supports
        .iter()
        .map(|s| warp_support(&s.image, &target.gt_depth, &scene.camera, &s.gt_pose).unwrap())
        .collect();
    let images: Vec<_> = supports.iter().map(|s| s.image.clone()).collect();
    let mask = automask(&target.image, &images, &warps, &LossConfig::default()).unwrap();
    let any_valid = (0..mask.keep.len()).map(|i| warps.iter().any(|w| w.valid[i])).collect();
    (mask.keep, any_valid, target)
}

fn a4_automask() -> Outcome {
    let (h, w) = (64, 96);
    let rng = Rng::new(4);

    let still = make_scene(&mut rng.fork(0), &SceneSpec::static_two_plane(h, w)).unwrap();
    let (keep, _, _) = gt_automask(&still);
    let static_cov = 100.0 * keep.iter().filter(|&&k| k).count() as f64 / keep.len() as f64;

    let moving = make_scene(&mut rng.fork(1), &SceneSpec::two_plane(h, w)).unwrap();
    let (keep, valid, _) = gt_automask(&moving);
    let in_view = valid.iter().filter(|&&v| v).count();
    let moving_cov = 100.0 * keep.iter().zip(&valid).filter(|(k, v)| **k && **v).count() as f64 / in_view as f64;
    let overall_cov = 100.0 * keep.iter().filter(|&&k| k).count() as f64 / keep.len() as f64;

    let spec = camera_locked_occluder(&moving);
    let occluded = add_dynamic_occluder(&moving, spec, &mut rng.fork(2)).unwrap();
    let (keep, _, target) = gt_automask(&occluded);
    let occ_pixels = target.occluder_mask.iter().filter(|&&o| o).count();
    let masked = keep
        .iter()
        .zip(&target.occluder_mask)
        .filter(|(k, o)| **o && !**k)
        .count();
    let occ_masked = 100.0 * masked as f64 / occ_pixels as f64;

    outcome(
        static_cov < 1.0 && moving_cov > 95.0 && occ_masked >= 90.0,
        format!(
            "static coverage {static_cov:.2}% (< 1); moving coverage {moving_cov:.2}% of in-view pixels (> 95, \
             {overall_cov:.2}% of all); comoving occluder {occ_masked:.2}% of {occ_pixels} pixels masked (>= 90)"
        ),
    )
}

fn a5_occlusion_routing() -> Outcome {
    let rng = Rng::new(5);
    let base = make_scene(&mut rng.fork(0), &SceneSpec::two_plane(64, 96)).unwrap();
    let spec = transient_occluder(&base);
    let scene = add_dynamic_occluder(&base, spec, &mut rng.fork(1)).unwrap();
    let (target, supports) = rendered(&scene);

    let mut state = SceneState::new(
        target.image.clone(),
        scene
            .offsets()
            .into_iter()
            .zip(supports.iter().map(|s| s.image.clone()))
            .collect(),
    )
    .unwrap()
    .with_camera(scene.camera)
    .unwrap()
    .with_depth_range(scene.depth_range)
    .with_poses(&supports.iter().map(|s| s.gt_pose).collect::<Vec<_>>())
    .unwrap()
    .with_disparity(&depth_to_disp(&target.gt_depth, scene.depth_range).unwrap())
    .unwrap();
    let argmin = forward_backward(&mut state, &LossConfig::default())
        .unwrap()
        .gates
        .argmin;

    let masks = occlusion_masks(&scene).unwrap();
    let (mut total, mut routed) = (0, 0);
    for (px, choice) in argmin.iter().enumerate() {
        let hidden: Vec<usize> = (0..masks.len()).filter(|&k| masks[k].1[px]).collect();
        if let [k] = hidden[..] {
            total += 1;
            routed += usize::from(choice.is_some_and(|a| a != k));
        }
    }
    let frac = 100.0 * routed as f64 / total.max(1) as f64;
    outcome(
        total > 0 && frac >= 90.0,
        format!("{routed} of {total} singly-occluded pixels routed to the clear support ({frac:.2}% >= 90)"),
    )
}

fn field(values: Vec<f64>) -> DepthField {
    DepthField::new(1, values.len(), values).unwrap()
}

fn a6_alignment() -> Outcome {
    let mut rng = Rng::new(6);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (s, b) = (rng.random_range(0.2..=5.0), rng.random_range(-0.5..=0.5));
        let n = rng.random_range(4..200);
        let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.35)).collect();
        let pred: Vec<f64> = gt.iter().map(|g| 1.0 / (s / g + b)).collect();
        let fit = align_lsq(&DepthPair::new(field(pred), field(gt.clone()), None).unwrap()).unwrap();
        let absrel = fit
            .aligned
            .prediction
            .values
            .iter()
            .zip(&gt)
            .map(|(p, g)| (p - g).abs() / g)
            .sum::<f64>()
            / n as f64;
        worst = worst.max(absrel);
    }
    let mut median_exact = true;
    for _ in 0..200 {
        let c: f64 = rng.random_range(0.1..10.0);
        let gt: Vec<f64> = (0..rng.random_range(1..50))
            .map(|_| rng.random_range(0.5..80.0))
            .collect();
        let pred: Vec<f64> = gt.iter().map(|g| g / c).collect();
        let (scale, aligned) = align_median(&DepthPair::new(field(pred), field(gt.clone()), None).unwrap()).unwrap();
        median_exact &= close(scale, c, 1e-12 * c)
            && aligned
                .prediction
                .values
                .iter()
                .zip(&gt)
                .all(|(p, g)| close(*p, *g, 1e-12 * g));
    }
    outcome(
        worst < 1e-8 && median_exact,
        format!("worst lsq AbsRel {worst:.2e} (< 1e-8) over 200 affine maps; median scales exact: {median_exact}"),
    )
}

fn random_cloud(rng: &mut Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(1.0..3.0),
            )
        })
        .collect()
}

fn a7_metric_oracles() -> Outcome {
    let tol = 1e-10;
    let mut notes = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            notes.push(what.to_string());
        }
    };

    let pair = DepthPair::new(field(vec![1.0, 5.0]), field(vec![2.0, 4.0]), None).unwrap();
    check(
        close(photodepth::eval::absrel(&pair).unwrap(), 37.5, tol),
        "AbsRel (2,4)/(1,5) != 37.5",
    );
    let pair = DepthPair::new(field(vec![1.3]), field(vec![1.0]), None).unwrap();
    check(
        close(photodepth::eval::delta_acc(&pair, 1.25).unwrap(), 0.0, tol),
        "delta 1.3 counted as pass",
    );
    let pair = DepthPair::new(field(vec![1.2]), field(vec![1.0]), None).unwrap();
    check(
        close(photodepth::eval::delta_acc(&pair, 1.25).unwrap(), 100.0, tol),
        "delta 1.2 counted as fail",
    );

    let cam = Camera::new(2.0, 2.0, 0.5, 0.5, 2, 2).unwrap();
    let d = DepthField::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let pair = DepthPair::new(d.clone(), d, None).unwrap();
    check(
        close(fscore(&pair, &cam, 0.1, 0).unwrap().fscore, 100.0, tol),
        "identical clouds F != 100",
    );
    let mut rng = Rng::new(7);
    let cloud = random_cloud(&mut rng, 4);
    let shifted: Vec<_> = cloud.iter().map(|q| q + Vector3::new(0.0, 0.0, 0.2)).collect();
    check(
        close(fscore_clouds(&shifted, &cloud, 0.1).unwrap().fscore, 0.0, tol),
        "offset clouds F != 0",
    );

    let pair = DepthPair::new(field(vec![2.0, 4.0, 6.0]), field(vec![1.0, 2.0, 3.0]), None).unwrap();
    check(close(align_median(&pair).unwrap().0, 0.5, tol), "median scale != 0.5");

    let gt = vec![0.5, 1.0, 2.0, 4.0];
    let pred: Vec<f64> = gt.iter().map(|g| 1.0 / (2.0 / g + 0.3)).collect();
    let fit = align_lsq(&DepthPair::new(field(pred), field(gt.clone()), None).unwrap()).unwrap();
    check(
        close(fit.scale, 0.5, tol) && close(fit.shift, -0.15, tol),
        "lsq (s, b) != (0.5, -0.15)",
    );
    let resid = fit
        .aligned
        .prediction
        .values
        .iter()
        .zip(&gt)
        .map(|(p, g)| (1.0 / p - 1.0 / g).abs())
        .fold(0.0, f64::max);
    check(resid < tol, "lsq residual above 1e-10");

    let mut grid_equal = 0;
    for i in 0..10 {
        let mut r = rng.fork(i);
        let (a, b) = (random_cloud(&mut r, 500), random_cloud(&mut r, 500));
        for t in [0.05, 0.1, 0.2] {
            let same = within_threshold_grid(&a, &b, t) == within_threshold_brute(&a, &b, t)
                && within_threshold_grid(&b, &a, t) == within_threshold_brute(&b, &a, t);
            grid_equal += usize::from(same);
        }
    }
    check(grid_equal == 30, "grid search disagrees with brute force");

    let ok = notes.is_empty();
    let detail = if ok {
        "hand examples to 1e-10; grid equals brute force on 10 clouds x 3 thresholds".to_string()
    } else {
        notes.join("; ")
    };
    outcome(ok, detail)
}

fn a8_ar_distribution() -> Outcome {
    let (h, w) = (384, 640);
    let table = AspectRatioTable::default();
    let mut rng = Rng::new(8);
    let n = 10_000;
    let mut counts = vec![0usize; table.len()];
    let (mut fmin, mut fmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut bad_shape = 0;
    let mut worst_area: f64 = 0.0;
    for _ in 0..n {
        let c = sample_ar_crop(&mut rng, h, w, &table, (0.5, 1.0)).unwrap();
        counts[table.ratios().iter().position(|&r| r == c.ratio).unwrap()] += 1;
        fmin = fmin.min(c.fraction);
        fmax = fmax.max(c.fraction);
        let area = (c.out_height * c.out_width) as f64 / (h * w) as f64;
        worst_area = worst_area.max((area - 1.0).abs());
        bad_shape += usize::from(!c.out_height.is_multiple_of(32) || !c.out_width.is_multiple_of(32));
    }
    let e = n as f64 / table.len() as f64;
    let chi2: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    let pval = 1.0 - ChiSquared::new((table.len() - 1) as f64).unwrap().cdf(chi2);
    let range_ok = (0.5..0.505).contains(&fmin) && fmax <= 1.0 && fmax > 0.995;
    outcome(
        table.len() == 16 && pval > 0.01 && worst_area <= 0.05 && bad_shape == 0 && range_ok,
        format!(
            "chi2 {chi2:.2}, p {pval:.3} (> 0.01); worst area deviation {:.2}% (<= 5); {bad_shape} sizes off the \
             32 grid; fractions in [{fmin:.4}, {fmax:.4}]",
            100.0 * worst_area
        ),
    )
}

fn a9_aggregation() -> Outcome {
    let lower = [true, false, false];
    let table = vec![vec![10.0, 90.0, 80.0], vec![12.0, 90.0, 85.0], vec![10.0, 85.0, 70.0]];
    let ranks = rank_aggregate(&table, &lower).unwrap();
    let expected_ranks = [5.0 / 3.0, 11.0 / 6.0, 2.5];
    let imp_b = improvement_aggregate(&table[1], &table[0], &lower).unwrap();
    let imp_c = improvement_aggregate(&table[2], &table[0], &lower).unwrap();
    // B: (-0.2 + 0 + 0.0625) / 3, C: (0 - 5/90 - 0.125) / 3
    let (want_b, want_c) = (100.0 * (-0.2 + 0.0625) / 3.0, 100.0 * (-5.0 / 90.0 - 0.125) / 3.0);

    let mut ok = ranks.iter().zip(expected_ranks).all(|(r, e)| close(*r, e, 1e-12))
        && close(imp_b, want_b, 1e-10)
        && close(imp_c, want_c, 1e-10);
    ok &= close(improvement_aggregate(&[5.0], &[10.0], &[true]).unwrap(), 50.0, 1e-10);
    ok &= close(improvement_aggregate(&[88.0], &[80.0], &[false]).unwrap(), 10.0, 1e-10);
    ok &= rank_aggregate(&[vec![10.0, 90.0], vec![20.0, 80.0]], &[true, false]).unwrap() == vec![1.0, 2.0];
    ok &= rank_aggregate(&[vec![1.0, 2.0], vec![1.0, 2.0]], &[true, false]).unwrap() == vec![1.5, 1.5];
    outcome(
        ok,
        format!(
            "ranks {:.4}/{:.4}/{:.4} (5/3, 11/6, 5/2); improvement B {imp_b:.6}% C {imp_c:.6}% \
             ({want_b:.6}, {want_c:.6}); halved lower-better +50, 80->88 +10, tie 1.5",
            ranks[0], ranks[1], ranks[2]
        ),
    )
}

fn a10_determinism() -> Outcome {
    let manifest = scene_dir().join("manifest.txt");
    let run = |threads: &str| {
        let out = workdir().join(format!("threads_{threads}"));
        photodepth(&[
            "--seed",
            "3",
            "--threads",
            threads,
            "optimize",
            "--manifest",
            p(&manifest),
            "--out",
            p(&out),
            "--learn-intrinsics",
            "--iterations",
            "200",
            "--lr",
            "0.05",
        ]);
        std::fs::read(out.join("depth.pfm")).unwrap()
    };
    let (one, four) = (run("1"), run("4"));
    outcome(
        one == four,
        format!(
            "{} depth bytes, identical at 1 and 4 threads: {}",
            one.len(),
            one == four
        ),
    )
}

fn a11_subsampling() -> Outcome {
    let expect = |n: usize| -> Vec<usize> {
        match n {
            250 => (0..100).collect(),
            500 => (0..100).chain(250..350).collect(),
            80 => (0..80).collect(),
            _ => unreachable!(),
        }
    };
    let mut ok = true;
    let mut sizes = Vec::new();
    for n in [250, 500, 80] {
        let frames: Vec<PathBuf> = (0..n).map(|i| PathBuf::from(format!("frames/{i:05}.png"))).collect();
        let kept = subsample_indices(n);
        ok &= kept == expect(n);
        let manifest = SequenceManifest::new("/data", photodepth::io::subsample_frames(&frames), CameraRecord::Learn);
        let back = SequenceManifest::parse(&manifest.to_text(), "/data").unwrap();
        ok &= back.frames == manifest.frames && back.frames.iter().zip(&kept).all(|(f, &i)| f == &frames[i]);
        sizes.push(format!("{n}->{}", kept.len()));
    }
    outcome(
        ok,
        format!("retained {} frames; manifests round-trip", sizes.join(", ")),
    )
}
