//! Detection evaluation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use evtk::metrics::{detection_eval, DetEvalReport, Detection, Rect};

use crate::manifest::{beside, RunContext};
use crate::EvalDetArgs;

/// Image key: a string or an integer, compared by its JSON text.
#[derive(Deserialize)]
#[serde(untagged)]
enum ImageId {
    Name(String),
    Number(serde_json::Number),
}

impl ImageId {
    fn key(&self) -> String {
        match self {
            ImageId::Name(s) => s.clone(),
            ImageId::Number(n) => n.to_string(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetRecord {
    image: ImageId,
    bbox: [f64; 4],
    score: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GtRecord {
    image: ImageId,
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct EvalDetOutput<'a> {
    min_score: f64,
    #[serde(flatten)]
    report: &'a DetEvalReport,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, ctx: &mut RunContext) -> anyhow::Result<T> {
    ctx.input(path)?;
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("cannot parse {}", path.display()))
}

fn rect(b: [f64; 4], what: &str, i: usize) -> anyhow::Result<Rect<f64>> {
    Rect::new(b[0], b[1], b[2], b[3]).with_context(|| format!("{what} {i}"))
}

pub fn eval_det(a: &EvalDetArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.min_score) {
        return Err(crate::usage("--min-score must lie in [0, 1]"));
    }
    let gt_records: Vec<GtRecord> = read_json(&a.gts, ctx)?;
    let det_records: Vec<DetRecord> = read_json(&a.dets, ctx)?;

    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut gts: Vec<Vec<Rect<f64>>> = Vec::new();
    let mut dets: Vec<Vec<Detection<f64>>> = Vec::new();
    let mut index_of =
        |id: &ImageId, gts: &mut Vec<Vec<Rect<f64>>>, dets: &mut Vec<Vec<Detection<f64>>>| {
            let next = slot.len();
            let i = *slot.entry(id.key()).or_insert(next);
            if i == gts.len() {
                gts.push(Vec::new());
                dets.push(Vec::new());
            }
            i
        };
    for (n, g) in gt_records.iter().enumerate() {
        let i = index_of(&g.image, &mut gts, &mut dets);
        gts[i].push(rect(g.bbox, "ground truth", n)?);
    }
    let mut dropped = 0usize;
    for (n, d) in det_records.iter().enumerate() {
        let det = Detection::new(rect(d.bbox, "detection", n)?, d.score)
            .with_context(|| format!("detection {n}"))?;
        if det.score < a.min_score {
            dropped += 1;
            continue;
        }
        let i = index_of(&d.image, &mut gts, &mut dets);
        dets[i].push(det);
    }

    let report = detection_eval(&dets, &gts);
    let out = EvalDetOutput {
        min_score: a.min_score,
        report: &report,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(&a.output)?), &out)?;
    ctx.output(&a.output);

    let pct = |v: f64| format!("{:.1}", 100.0 * v);
    println!(
        "{}",
        crate::table::render(
            &["", "AP50", "AP75", "AP_S", "AP_M", "AP_L", "AR", "AR_S", "AR_M", "AR_L"],
            &[vec![
                "all".to_string(),
                pct(report.ap50),
                pct(report.ap75),
                pct(report.ap_s),
                pct(report.ap_m),
                pct(report.ap_l),
                pct(report.ar),
                pct(report.ar_s),
                pct(report.ar_m),
                pct(report.ar_l),
            ]],
        )
    );
    println!(
        "{} images, {} detections ({} below --min-score), {} ground truth (S {} / M {} / L {})",
        report.n_images,
        report.n_detections,
        dropped,
        report.n_gt,
        report.gt_per_bucket.small,
        report.gt_per_bucket.medium,
        report.gt_per_bucket.large
    );
    if report.empty {
        eprintln!("warning: no ground truth boxes; all metrics are 0");
    }
    ctx.finish("eval-det", a, beside(&a.output))
}
