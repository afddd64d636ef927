//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Uses synthetic fixtures only.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semgap::eval::{evaluate, split_report, CategoryResult, EvalConfig, EvalResult, IouType, Metrics};
use semgap::matcher::{build_prototypes, dedup, match_proposals, DEFAULT_NMS_IOU, DEFAULT_SIM_THRESHOLD};
use semgap::probe::{loss_and_gradient, mean_loss, topk_accuracy, train, ProbeModel, TrainConfig};
use semgap::rle::{box_iou, Bitmask, RleMask};
use semgap::store::{Annotation, AnnotationSet, Category, DetectionRecord, ImageInfo};
use semgap::synthetic::{
    gen_blobs, gen_planted_scene, oracle_match_ap, oracle_nms, random_detections, random_eval_instance, random_mask,
    BlobSpec, SceneSpec,
};
use semgap::viz::{calibrate_affinities, silhouette, tsne, TsneConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let spent = start.elapsed();
    check(spent < limit, format!("took {spent:.2?}, limit {limit:?}"))?;
    Ok(spent)
}

fn reference_loss(w: &[f64], b: &[f64], x: &[f64], y: &[usize], c: usize, d: usize) -> f64 {
    let mut total = 0.0;
    for (row, &label) in x.chunks(d).zip(y) {
        let z: Vec<f64> = (0..c)
            .map(|k| b[k] + (0..d).map(|j| w[k * d + j] * row[j]).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - z[label];
    }
    total / y.len() as f64
}

fn probe_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for c in [10usize, 100, 1000] {
        let d = 16;
        let x: Vec<f32> = (0..32 * d).map(|_| rng.random_range(-3.0f32..3.0)).collect();
        let y: Vec<i64> = (0..32).map(|_| rng.random_range(0..c as i64)).collect();
        let loss = mean_loss(&ProbeModel::zeros(c, d).unwrap(), &x, d, &y).unwrap();
        check(loss == (c as f64).ln() as f32, format!("C={c}: initial loss {loss}"))?;
    }
    let h = 1e-4;
    let mut worst = 0.0f64;
    let instances = 25;
    for _ in 0..instances {
        let (c, d, n) = (rng.random_range(2..6), rng.random_range(1..8), rng.random_range(1..10));
        let w: Vec<f32> = (0..c * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let b: Vec<f32> = (0..c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let x: Vec<f32> = (0..n * d).map(|_| rng.random_range(-2.0f32..2.0)).collect();
        let y: Vec<i64> = (0..n).map(|_| rng.random_range(0..c as i64)).collect();
        let (_, grad) =
            loss_and_gradient(&ProbeModel::from_parts(c, d, w.clone(), b.clone()).unwrap(), &x, d, &y).unwrap();
        let to64 = |v: &[f32]| v.iter().map(|&a| a as f64).collect::<Vec<f64>>();
        let (w64, b64, x64) = (to64(&w), to64(&b), to64(&x));
        let yu: Vec<usize> = y.iter().map(|&v| v as usize).collect();
        for (p, a) in grad.weights.iter().chain(&grad.bias).map(|&g| g as f64).enumerate() {
            let (mut wp, mut wm, mut bp, mut bm) = (w64.clone(), w64.clone(), b64.clone(), b64.clone());
            if p < c * d {
                wp[p] += h;
                wm[p] -= h;
            } else {
                bp[p - c * d] += h;
                bm[p - c * d] -= h;
            }
            let numeric =
                (reference_loss(&wp, &bp, &x64, &yu, c, d) - reference_loss(&wm, &bm, &x64, &yu, c, d)) / (2.0 * h);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
        }
    }
    check(worst < 1e-4, format!("max relative gradient error {worst:.2e}"))?;
    let spent = within(start, Duration::from_secs(5))?;
    Ok(format!(
        "ln C exact for C in {{10,100,1000}}; max FD rel err {worst:.2e} over {instances} instances; {spent:.2?}"
    ))
}

fn probe_learning() -> Outcome {
    let start = Instant::now();
    let sets = |sep: f64| {
        (
            gen_blobs(&BlobSpec::new(10, 64, 500, sep, 0)).unwrap(),
            gen_blobs(&BlobSpec::new(10, 64, 200, sep, 1)).unwrap(),
        )
    };
    let cfg = TrainConfig::default();
    check(
        cfg.epochs == 10 && cfg.batch_size == 128,
        "default config is not 10 epochs / batch 128",
    )?;
    let ((x, y), (vx, vy)) = sets(6.0);
    let sep6 = topk_accuracy(&train(&x, &y, None, &cfg).unwrap().model, &vx, &vy, 1).unwrap();
    check(sep6 >= 0.99, format!("separation 6: top-1 {sep6}"))?;
    let ((x, y), (vx, vy)) = sets(0.0);
    let sep0 = topk_accuracy(&train(&x, &y, None, &cfg).unwrap().model, &vx, &vy, 1).unwrap();
    check((sep0 - 0.1).abs() <= 0.10, format!("separation 0: top-1 {sep0}"))?;
    let spent = within(start, Duration::from_secs(30))?;
    Ok(format!(
        "top-1 {sep6:.4} at separation 6, {sep0:.4} at separation 0; {spent:.2?}"
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_semgap"))
        .args(args)
        .output()
        .map_err(|e| format!("spawning semgap: {e}"))?;
    check(
        out.status.success(),
        format!(
            "semgap {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn probe_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    run_cli(&[
        "synth",
        "blobs",
        "--classes",
        "5",
        "--dim",
        "16",
        "--per-class",
        "100",
        "--separation",
        "3",
        "--out",
        &p("blobs"),
    ])?;
    let (f, l) = (p("blobs/features.tnsr"), p("blobs/labels.tnsr"));
    let mut checkpoints = Vec::new();
    for (run, threads) in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "3")] {
        let out = p(&format!("{run}.lpck"));
        run_cli(&[
            "--threads",
            threads,
            "probe",
            "train",
            "--features",
            &f,
            "--labels",
            &l,
            "--epochs",
            "3",
            "--batch-size",
            "32",
            "--seed",
            "7",
            "--out",
            &out,
        ])?;
        checkpoints.push(std::fs::read(Path::new(&out)).map_err(|e| e.to_string())?);
    }
    check(
        checkpoints.windows(2).all(|w| w[0] == w[1]),
        "checkpoints differ between runs",
    )?;
    Ok(format!(
        "4 runs at --threads 1,1,4,3 give identical {}-byte checkpoints",
        checkpoints[0].len()
    ))
}

fn scene_detections(spec: &SceneSpec) -> (AnnotationSet, Vec<DetectionRecord>) {
    let scene = gen_planted_scene(spec).unwrap();
    let protos = build_prototypes(&scene.reference_set()).unwrap();
    let matched = match_proposals(
        &scene.proposals,
        &protos,
        &scene.target,
        scene.spec.stride,
        DEFAULT_SIM_THRESHOLD,
    )
    .unwrap();
    let dets = dedup(&matched, DEFAULT_NMS_IOU)
        .unwrap()
        .iter()
        .map(DetectionRecord::from)
        .collect();
    (scene.ground_truth, dets)
}

fn matcher_end_to_end() -> Outcome {
    let start = Instant::now();
    let (gt, dets) = scene_detections(&SceneSpec::default());
    for t in [IouType::Mask, IouType::Box] {
        let ap = evaluate(&dets, &gt, &EvalConfig::new(t)).unwrap().mean.ap;
        check(ap == Some(1.0), format!("sigma 0, {t:?}: AP {ap:?}"))?;
    }
    for seed in 0..20 {
        let spec = SceneSpec {
            noise_sigma: 0.1,
            num_distractors: 4,
            seed,
            ..SceneSpec::default()
        };
        let (gt, dets) = scene_detections(&spec);
        let ap = evaluate(&dets, &gt, &EvalConfig::new(IouType::Mask)).unwrap().mean.ap;
        check(ap == Some(1.0), format!("sigma 0.1, seed {seed}: AP_mask {ap:?}"))?;
    }
    let spent = within(start, Duration::from_secs(10))?;
    Ok(format!(
        "AP_mask = AP_box = 1 at sigma 0; AP_mask = 1 on 20 seeds at sigma 0.1; {spent:.2?}"
    ))
}

fn hand_walked_ap() -> f64 {
    let rect = |x0| RleMask::from_rect(10, 30, x0, 0, x0 + 5, 5).unwrap();
    let gt = AnnotationSet::new(
        vec![ImageInfo {
            id: 1,
            width: 30,
            height: 10,
        }],
        [(1, 0), (2, 10)]
            .into_iter()
            .map(|(id, x0)| Annotation {
                id,
                image_id: 1,
                category_id: 1,
                bbox: rect(x0).bbox(),
                segmentation: Some(rect(x0)),
                iscrowd: false,
            })
            .collect(),
        vec![Category {
            id: 1,
            name: "obj".into(),
        }],
    )
    .unwrap();
    let dets: Vec<DetectionRecord> = [(0, 0.9), (20, 0.8), (10, 0.7)]
        .into_iter()
        .map(|(x0, score)| DetectionRecord {
            image_id: 1,
            category_id: 1,
            bbox: Some(rect(x0).bbox()),
            score,
            segmentation: Some(rect(x0)),
            feature: None,
        })
        .collect();
    evaluate(&dets, &gt, &EvalConfig::new(IouType::Mask))
        .unwrap()
        .mean
        .ap
        .unwrap()
}

fn eval_oracle() -> Outcome {
    let mut compared = 0;
    for seed in 0..200 {
        let (gts, dets) = random_eval_instance(seed);
        for t in [IouType::Mask, IouType::Box] {
            let cfg = EvalConfig::new(t);
            let ours = evaluate(&dets, &gts, &cfg).unwrap();
            let oracle = oracle_match_ap(&dets, &gts, &cfg);
            check(
                (ours.mean.ap, ours.mean.ap50, ours.mean.ap75, ours.mean.ar)
                    == (oracle.ap, oracle.ap50, oracle.ap75, oracle.ar),
                format!("seed {seed} {t:?}: mean metrics differ"),
            )?;
            for c in &ours.categories {
                let o = &oracle.categories[&c.category_id];
                let flags: Vec<Vec<(usize, bool)>> = c
                    .ranked
                    .iter()
                    .map(|r| r.iter().map(|f| (f.index, f.true_positive)).collect())
                    .collect();
                check(
                    flags == o.flags,
                    format!("seed {seed} {t:?} category {}: flags", c.category_id),
                )?;
                check(
                    (c.metrics.ap, c.metrics.ar) == (o.ap, o.ar),
                    format!("seed {seed} {t:?} category {}: AP/AR", c.category_id),
                )?;
                compared += 1;
            }
        }
    }
    let ap = hand_walked_ap();
    let exact = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
    check(
        (ap - exact).abs() < 1e-6,
        format!("hand case AP {ap}, expected {exact}"),
    )?;
    Ok(format!(
        "200 instances, {compared} category results equal to oracle; hand case AP {ap:.6}"
    ))
}

fn rle_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let (h, w) = (rng.random_range(1..25u32), rng.random_range(1..25u32));
        let p = rng.random::<f64>();
        let pixels = (0..h * w).map(|_| rng.random::<f64>() < p).collect();
        let m = Bitmask::new(h, w, pixels).unwrap();
        check(
            RleMask::encode(&m).decode() == m,
            format!("mask {i} does not round-trip"),
        )?;
    }
    for seed in 0..500u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let a = random_mask(&mut r, 16, 16);
        let b = random_mask(&mut r, 16, 16);
        let (pa, pb) = (a.decode(), b.decode());
        let inter = pa.pixels().iter().zip(pb.pixels()).filter(|(x, y)| **x && **y).count();
        let union = pa.pixels().iter().zip(pb.pixels()).filter(|(x, y)| **x || **y).count();
        let pixel = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
        check(
            a.iou(&b, false).unwrap() == pixel,
            format!("pair {seed}: run IoU differs from pixel IoU"),
        )?;
    }
    let a = [0.0, 0.0, 2.0, 2.0];
    check(box_iou(&a, &a, false) == 1.0, "identical boxes")?;
    check(box_iou(&a, &[5.0, 5.0, 1.0, 1.0], false) == 0.0, "disjoint boxes")?;
    let q = box_iou(&a, &[1.0, 1.0, 2.0, 2.0], false);
    check((q - 1.0 / 7.0).abs() < 1e-9, format!("overlap case {q}"))?;
    Ok("1000 round trips, 500 IoU pairs exact, box hand cases".into())
}

fn nms_oracle() -> Outcome {
    for seed in 0..100 {
        let dets = random_detections(seed, 50, 3, 24);
        let ours = dedup(&dets, DEFAULT_NMS_IOU).unwrap();
        check(
            ours == oracle_nms(&dets, DEFAULT_NMS_IOU),
            format!("seed {seed}: survivors differ"),
        )?;
    }
    Ok("100 detection sets, identical survivors".into())
}

fn tsne_separability() -> Outcome {
    let spec = BlobSpec {
        sigma: 4.0,
        ..BlobSpec::new(3, 16, 20, 2.5, 1)
    };
    let (x, y) = gen_blobs(&spec).unwrap();
    let perplexity = 10.0;
    let aff = calibrate_affinities(x.data(), 16, perplexity).unwrap();
    let worst = aff
        .entropies
        .iter()
        .map(|h| (h - perplexity.log2()).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-4, format!("entropy off by {worst:.2e}"))?;
    let emb = tsne(
        x.data(),
        16,
        &TsneConfig {
            perplexity,
            ..TsneConfig::default()
        },
    )
    .unwrap();
    let s = silhouette(&emb.points, 2, y.labels()).unwrap();
    check(s > 0.5, format!("silhouette {s}"))?;
    let kl250 = emb.kl_history[250];
    check(
        emb.final_kl < kl250,
        format!("final KL {} vs {kl250} at iteration 250", emb.final_kl),
    )?;
    Ok(format!(
        "silhouette {s:.3}; KL {kl250:.4} -> {:.4}; max entropy error {worst:.1e}",
        emb.final_kl
    ))
}

fn split_reporting() -> Outcome {
    let category = |id: i64, ap: f64| CategoryResult {
        category_id: id,
        name: format!("c{id}"),
        num_gt: 1,
        num_detections: 1,
        ap_per_threshold: Some(vec![ap]),
        recall_per_threshold: Some(vec![ap]),
        metrics: Metrics {
            ap: Some(ap),
            ap50: Some(ap),
            ap75: Some(ap),
            ar: Some(ap),
        },
        ranked: Vec::new(),
    };
    let result = EvalResult {
        iou_type: IouType::Mask,
        categories: vec![category(1, 0.8), category(2, 0.2)],
        mean: Metrics {
            ap: Some(0.5),
            ap50: Some(0.5),
            ap75: Some(0.5),
            ar: Some(0.5),
        },
        categories_evaluated: 2,
        num_detections: 2,
        num_gt: 2,
    };
    let r = split_report(&result, &[1], &[2]).unwrap();
    check(
        r.base.metrics.ap == Some(0.8),
        format!("base AP {:?}", r.base.metrics.ap),
    )?;
    check(
        r.novel.metrics.ap == Some(0.2),
        format!("novel AP {:?}", r.novel.metrics.ap),
    )?;
    check(
        split_report(&result, &[1, 2], &[2]).is_err(),
        "overlapping split accepted",
    )?;
    Ok("base 0.8 / novel 0.2 exact; overlapping ids rejected".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("probe correctness", probe_correctness),
        ("probe learning", probe_learning),
        ("probe determinism", probe_determinism),
        ("matcher end-to-end", matcher_end_to_end),
        ("eval oracle equivalence", eval_oracle),
        ("rle/iou exactness", rle_exactness),
        ("nms oracle equivalence", nms_oracle),
        ("t-sne separability", tsne_separability),
        ("split reporting", split_reporting),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
