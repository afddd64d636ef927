use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use semgap::eval::{evaluate, load_split_file, split_report, EvalConfig, IouType};
use semgap::matcher::{
    build_prototypes, dedup, grid_points, load_proposals, load_reference_set, match_proposals, read_prototypes,
    write_prototypes, MapMeta, ReferenceList, DEFAULT_NMS_IOU, DEFAULT_POINTS_PER_SIDE, DEFAULT_SIM_THRESHOLD,
};
use semgap::probe::{topk_accuracy, train, TrainConfig};
use semgap::store::{
    load_annotations, load_detections, read_checkpoint, read_feature_matrix, read_json, read_labels, read_tensor,
    save_detections, write_checkpoint, write_json, write_tensor, DenseFeatureMap, DetectionRecord, Tensor,
};
use semgap::synthetic::{gen_blobs, gen_planted_scene, write_scene, BlobSpec, SceneSpec};
use semgap::viz::{l2_normalize_rows, pca, scatter_svg, silhouette, TsneConfig};

use crate::manifest::{manifest_path_for, Recorder};
use crate::table::{pct, Table};

#[derive(Debug, Args, Serialize)]
pub struct ProbeTrainArgs {
    /// Training features, f32 TNSR [N, D].
    #[arg(long)]
    pub features: PathBuf,
    /// Optional i64 TNSR [N] of row ids.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Training labels, i64 TNSR [N].
    #[arg(long)]
    pub labels: PathBuf,
    /// Number of classes (default: max label + 1).
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, requires = "val_labels")]
    pub val_features: Option<PathBuf>,
    #[arg(long, requires = "val_features")]
    pub val_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Visit examples in file order every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Checkpoint path (LPCK).
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a TrainConfig,
    num_classes: usize,
    dim: usize,
    train_examples: usize,
    history: &'a [semgap::probe::EpochMetrics],
}

pub fn probe_train(a: &ProbeTrainArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("probe train", a, threads)?;
    rec.seed(a.seed);
    let x = read_feature_matrix(&a.features, a.ids.as_deref())?;
    let y = read_labels(&a.labels, a.num_classes)?;
    rec.input(&a.features)?;
    rec.input(&a.labels)?;
    if let Some(p) = &a.ids {
        rec.input(p)?;
    }
    let val = match (&a.val_features, &a.val_labels) {
        (Some(f), Some(l)) => {
            rec.input(f)?;
            rec.input(l)?;
            Some((read_feature_matrix(f, None)?, read_labels(l, Some(y.num_classes()))?))
        }
        _ => None,
    };
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
        weight_decay: a.weight_decay,
        seed: a.seed,
        shuffle: !a.no_shuffle,
    };
    let outcome = train(&x, &y, val.as_ref().map(|(f, l)| (f, l)), &config)?;

    let mut table = Table::new(["epoch", "train loss", "val top-1"]);
    for m in &outcome.history {
        table.row([m.epoch.to_string(), format!("{:.4}", m.train_loss), pct(m.val_top1)]);
    }
    print!("{}", table.render());

    write_checkpoint(&a.out, &outcome.model)?;
    rec.output(&a.out);
    if let Some(p) = &a.report {
        write_json(
            p,
            &TrainReport {
                config: &config,
                num_classes: y.num_classes(),
                dim: x.dim(),
                train_examples: x.rows(),
                history: &outcome.history,
            },
        )?;
        rec.output(p);
    }
    rec.finish(&manifest_path_for(&a.out))
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    pub topk: Vec<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn probe_eval(a: &ProbeEvalArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("probe eval", a, threads)?;
    let model = read_checkpoint(&a.model)?;
    let x = read_feature_matrix(&a.features, a.ids.as_deref())?;
    let y = read_labels(&a.labels, Some(model.num_classes()))?;
    for p in [&a.model, &a.features, &a.labels] {
        rec.input(p)?;
    }
    let mut results = BTreeMap::new();
    let mut table = Table::new(["metric", "accuracy"]);
    for &k in &a.topk {
        let acc = topk_accuracy(&model, &x, &y, k)?;
        table.row([format!("top-{k}"), pct(Some(acc))]);
        results.insert(format!("top{k}"), acc);
    }
    print!("{}", table.render());
    if let Some(p) = &a.report {
        write_json(p, &results)?;
        rec.output(p);
        rec.finish(&manifest_path_for(p))?;
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct ProtoBuildArgs {
    /// Reference list JSON.
    #[arg(long)]
    pub refs: PathBuf,
    /// Pixels per patch for references that do not set their own stride.
    #[arg(long, default_value_t = 14)]
    pub stride: u32,
    /// Output [K, D] TNSR; category ids go to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn proto_build(a: &ProtoBuildArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("proto build", a, threads)?;
    rec.input(&a.refs)?;
    let list: ReferenceList = read_json(&a.refs)?;
    let base = a.refs.parent().unwrap_or_else(|| Path::new("."));
    for e in &list.references {
        rec.input(&base.join(&e.map))?;
    }
    let refs = load_reference_set(&a.refs, a.stride)?;
    let protos = build_prototypes(&refs)?;
    write_prototypes(&a.out, &protos)?;
    rec.output(&a.out);

    let mut table = Table::new(["category", "source ref", "dim"]);
    for p in &protos {
        table.row([
            p.category_id.to_string(),
            p.source_ref.to_string(),
            p.vector.len().to_string(),
        ]);
    }
    print!("{}", table.render());
    rec.finish(&manifest_path_for(&a.out))
}

#[derive(Debug, Args, Serialize)]
pub struct MatchRunArgs {
    /// Target dense map, f32 TNSR [Hp, Wp, D].
    #[arg(long)]
    pub target_map: PathBuf,
    /// Target sidecar JSON {image_id, stride, width, height}.
    #[arg(long)]
    pub target_meta: PathBuf,
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long)]
    pub protos: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SIM_THRESHOLD)]
    pub sim_threshold: f32,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    pub nms_iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn match_run(a: &MatchRunArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("match run", a, threads)?;
    for p in [&a.target_map, &a.target_meta, &a.proposals, &a.protos] {
        rec.input(p)?;
    }
    let meta = MapMeta::load(&a.target_meta)?;
    let map = DenseFeatureMap::from_tensor(read_tensor(&a.target_map)?)?;
    meta.check_map(&map)?;
    let proposals = load_proposals(&a.proposals)?;
    if let Some(p) = proposals.iter().find(|p| p.image_id != meta.image_id) {
        bail!(semgap::Error::Validation(format!(
            "proposal for image {} does not belong to target image {}",
            p.image_id, meta.image_id
        )));
    }
    let protos = read_prototypes(&a.protos)?;
    let matched = match_proposals(&proposals, &protos, &map, meta.stride, a.sim_threshold)?;
    let kept = dedup(&matched, a.nms_iou)?;
    let records: Vec<DetectionRecord> = kept.iter().map(DetectionRecord::from).collect();
    save_detections(&a.out, &records)?;
    rec.output(&a.out);

    let mut per_cat: BTreeMap<i64, usize> = BTreeMap::new();
    for d in &kept {
        *per_cat.entry(d.category_id).or_default() += 1;
    }
    println!(
        "{} proposals, {} above threshold, {} after NMS",
        proposals.len(),
        matched.len(),
        kept.len()
    );
    let mut table = Table::new(["category", "detections"]);
    for (c, n) in per_cat {
        table.row([c.to_string(), n.to_string()]);
    }
    print!("{}", table.render());
    rec.finish(&manifest_path_for(&a.out))
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub width: u32,
    #[arg(long)]
    pub height: u32,
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_SIDE)]
    pub points_per_side: u32,
    /// JSON array of [x, y] pixel coordinates.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn grid(a: &GridArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("grid", a, threads)?;
    let points: Vec<[f32; 2]> = grid_points(a.width, a.height, a.points_per_side)?
        .into_iter()
        .map(|(x, y)| [x, y])
        .collect();
    write_json(&a.out, &points)?;
    rec.output(&a.out);
    println!("{} points written to {}", points.len(), a.out.display());
    rec.finish(&manifest_path_for(&a.out))
}

#[derive(Debug, Args, Serialize)]
pub struct EvalCocoArgs {
    #[arg(long)]
    pub dets: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// `mask` or `box`.
    #[arg(long, default_value = "mask")]
    pub iou_type: String,
    /// JSON {"base": [ids], "novel": [ids]}.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_dets: usize,
    /// Full JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-category CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    result: &'a semgap::eval::EvalResult,
    splits: Option<&'a semgap::eval::SplitReport>,
}

pub fn eval_coco(a: &EvalCocoArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("eval coco", a, threads)?;
    let iou_type: IouType = a.iou_type.parse()?;
    let gts = load_annotations(&a.gt)?;
    let dets = load_detections(&a.dets)?;
    rec.input(&a.gt)?;
    rec.input(&a.dets)?;
    let mut config = EvalConfig::new(iou_type);
    config.max_detections = a.max_dets;
    let result = evaluate(&dets, &gts, &config)?;
    let splits = match &a.splits {
        Some(p) => {
            rec.input(p)?;
            let s = load_split_file(p)?;
            Some(split_report(&result, &s.base, &s.novel)?)
        }
        None => None,
    };

    let mut table = Table::new(["category", "name", "gt", "dets", "AP", "AP50", "AP75", "AR@100"]);
    for c in &result.categories {
        table.row([
            c.category_id.to_string(),
            c.name.clone(),
            c.num_gt.to_string(),
            c.num_detections.to_string(),
            pct(c.metrics.ap),
            pct(c.metrics.ap50),
            pct(c.metrics.ap75),
            pct(c.metrics.ar),
        ]);
    }
    let m = &result.mean;
    table.row([
        "mean".to_string(),
        format!("({} categories)", result.categories_evaluated),
        result.num_gt.to_string(),
        result.num_detections.to_string(),
        pct(m.ap),
        pct(m.ap50),
        pct(m.ap75),
        pct(m.ar),
    ]);
    if let Some(s) = &splits {
        for row in [&s.base, &s.novel] {
            table.row([
                row.name.clone(),
                format!("({} categories)", row.categories_evaluated),
                String::new(),
                String::new(),
                pct(row.metrics.ap),
                pct(row.metrics.ap50),
                pct(row.metrics.ap75),
                pct(row.metrics.ar),
            ]);
        }
    }
    println!("iou type: {}", if iou_type == IouType::Mask { "mask" } else { "box" });
    print!("{}", table.render());

    if let Some(p) = &a.report {
        write_json(
            p,
            &EvalReport {
                result: &result,
                splits: splits.as_ref(),
            },
        )?;
        rec.output(p);
    }
    if let Some(p) = &a.csv {
        let mut csv = String::from("category_id,name,num_gt,num_detections,ap,ap50,ap75,ar\n");
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for c in &result.categories {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.category_id,
                c.name.replace(',', " "),
                c.num_gt,
                c.num_detections,
                f(c.metrics.ap),
                f(c.metrics.ap50),
                f(c.metrics.ap75),
                f(c.metrics.ar)
            ));
        }
        std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
        rec.output(p);
    }
    if let Some(p) = a.report.as_ref().or(a.csv.as_ref()) {
        rec.finish(&manifest_path_for(p))?;
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct TsneArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Labels for colouring and the silhouette score.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale every feature row to unit length before embedding.
    #[arg(long)]
    pub l2_normalize: bool,
    /// Reduce to this many principal components before embedding.
    #[arg(long)]
    pub pca_dims: Option<usize>,
    /// Output f32 TNSR [N, 2].
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// JSON {final_kl, silhouette, ...}; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct TsneReport {
    final_kl: f64,
    kl_at_switch: Option<f64>,
    silhouette: Option<f64>,
    points: usize,
}

pub fn tsne(a: &TsneArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("tsne", a, threads)?;
    rec.seed(a.seed);
    let x = read_feature_matrix(&a.features, None)?;
    rec.input(&a.features)?;
    let labels = match &a.labels {
        Some(p) => {
            rec.input(p)?;
            let l = read_labels(p, None)?;
            if l.len() != x.rows() {
                bail!(semgap::Error::Input(format!(
                    "{} feature rows but {} labels",
                    x.rows(),
                    l.len()
                )));
            }
            Some(l)
        }
        None => None,
    };
    let mut data = x.data().to_vec();
    let mut dim = x.dim();
    if a.l2_normalize {
        l2_normalize_rows(&mut data, dim);
    }
    if let Some(k) = a.pca_dims {
        data = pca(&data, dim, k)?;
        dim = k;
    }
    let config = TsneConfig {
        perplexity: a.perplexity,
        iterations: a.iterations,
        learning_rate: a.learning_rate,
        seed: a.seed,
        ..TsneConfig::default()
    };
    let emb = semgap::viz::tsne(&data, dim, &config)?;
    let sil = match &labels {
        Some(l) => Some(silhouette(&emb.points, 2, l.labels())?),
        None => None,
    };
    write_tensor(
        &a.out,
        &Tensor::from_f32(vec![emb.len() as u64, 2], emb.points.clone())?,
    )?;
    rec.output(&a.out);
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".report.json");
        PathBuf::from(s)
    });
    write_json(
        &report_path,
        &TsneReport {
            final_kl: emb.final_kl,
            kl_at_switch: emb.kl_history.get(config.switch_iteration).copied(),
            silhouette: sil,
            points: emb.len(),
        },
    )?;
    rec.output(&report_path);
    if let Some(p) = &a.svg {
        let svg = scatter_svg(&emb.points, labels.as_ref().map(|l| l.labels()), 600);
        std::fs::write(p, svg).with_context(|| format!("writing {}", p.display()))?;
        rec.output(p);
    }
    let mut table = Table::new(["points", "final KL", "silhouette"]);
    table.row([
        emb.len().to_string(),
        format!("{:.4}", emb.final_kl),
        sil.map_or_else(|| "-".to_string(), |s| format!("{s:.4}")),
    ]);
    print!("{}", table.render());
    rec.finish(&manifest_path_for(&a.out))
}

#[derive(Debug, Args, Serialize)]
pub struct SynthBlobsArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 500)]
    pub per_class: usize,
    /// Pairwise class-mean distance in units of sigma.
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    /// RMS distance of a point from its class mean.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving features.tnsr and labels.tnsr.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth_blobs(a: &SynthBlobsArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("synth blobs", a, threads)?;
    rec.seed(a.seed);
    let spec = BlobSpec {
        num_classes: a.classes,
        dim: a.dim,
        per_class: a.per_class,
        separation: a.separation,
        sigma: a.sigma,
        seed: a.seed,
    };
    let (x, y) = gen_blobs(&spec)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (fp, lp) = (a.out.join("features.tnsr"), a.out.join("labels.tnsr"));
    write_tensor(&fp, &x.to_tensor())?;
    write_tensor(&lp, &y.to_tensor())?;
    rec.output(&fp);
    rec.output(&lp);
    println!(
        "{} points, {} classes, dim {} -> {}",
        x.rows(),
        a.classes,
        a.dim,
        a.out.display()
    );
    rec.finish(&a.out.join("manifest.json"))
}

#[derive(Debug, Args, Serialize)]
pub struct SynthSceneArgs {
    #[arg(long, default_value_t = 224)]
    pub width: u32,
    #[arg(long, default_value_t = 224)]
    pub height: u32,
    #[arg(long, default_value_t = 14)]
    pub stride: u32,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub categories: usize,
    #[arg(long, default_value_t = 6)]
    pub objects: usize,
    #[arg(long, default_value_t = 4)]
    pub distractors: usize,
    /// Per-coordinate noise on object patches.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth_scene(a: &SynthSceneArgs, threads: Option<usize>) -> Result<()> {
    let mut rec = Recorder::new("synth scene", a, threads)?;
    rec.seed(a.seed);
    let spec = SceneSpec {
        width: a.width,
        height: a.height,
        stride: a.stride,
        dim: a.dim,
        num_categories: a.categories,
        num_objects: a.objects,
        num_distractors: a.distractors,
        noise_sigma: a.sigma,
        seed: a.seed,
        ..SceneSpec::default()
    };
    let scene = gen_planted_scene(&spec)?;
    write_scene(&a.out, &scene)?;
    for name in ["target.tnsr", "target.json", "refs.json", "proposals.json", "gt.json"] {
        rec.output(&a.out.join(name));
    }
    println!(
        "{} objects, {} proposals, {} references -> {}",
        scene.ground_truth.annotations.len(),
        scene.proposals.len(),
        scene.references.len(),
        a.out.display()
    );
    rec.finish(&a.out.join("manifest.json"))
}
