//! Stream commands: convert, frame, filter, emulate.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use evtk::emulator::{emulate_events, EmulatorParams, IntensityFrame};
use evtk::event::{slice_windows_from, EventStream, EventWindow, SensorGeometry};
use evtk::filter::{
    filter_dataset, BBox, FilterInputs, MaskDistributionParams, DEFAULT_BBOX_THRESHOLD,
    DEFAULT_KL_THRESHOLD, DEFAULT_MIN_EVENTS,
};
use evtk::io::{
    decode_events, encode_events, read_mask, read_pgm, sniff_format, write_frame_pnm, write_tensor,
    EventFormat, Mask, TensorFile,
};
use evtk::repr::build_frame;
use evtk::Representation;

use crate::manifest::{beside, inside, RunContext};
use crate::{
    usage, ConvertArgs, EmulateArgs, EventInput, FilterArgs, FilterMethodArg, FormatArg, FrameArgs,
    ReprArg, WindowArgs,
};

/// Windows processed in parallel before their files are written in order.
const FRAME_BATCH: usize = 32;

fn format_of(f: FormatArg) -> EventFormat {
    match f {
        FormatArg::Text => EventFormat::Text,
        FormatArg::Evb1 => EventFormat::Evb1,
    }
}

fn requested_geometry(ev: &EventInput) -> anyhow::Result<Option<SensorGeometry>> {
    match (ev.width, ev.height) {
        (Some(w), Some(h)) => Ok(Some(
            SensorGeometry::new(w, h).map_err(|e| usage(e.to_string()))?,
        )),
        (None, None) => Ok(None),
        _ => Err(usage("--width and --height must be given together")),
    }
}

pub fn load_events(
    ev: &EventInput,
    ctx: &mut RunContext,
) -> anyhow::Result<(EventStream, EventFormat)> {
    ctx.input(&ev.input)?;
    let geometry = requested_geometry(ev)?;
    let mut f =
        File::open(&ev.input).with_context(|| format!("cannot open {}", ev.input.display()))?;
    let mut magic = [0u8; 4];
    let n = f.read(&mut magic)?;
    let format = sniff_format(&magic[..n]);
    if format == EventFormat::Text && geometry.is_none() {
        return Err(usage("text events need --width and --height"));
    }
    let f = File::open(&ev.input)?;
    let stream = decode_events(BufReader::new(f), format, geometry)
        .with_context(|| format!("reading {}", ev.input.display()))?;
    Ok((stream, format))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn convert(a: &ConvertArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    let (stream, from) = load_events(&a.events, ctx)?;
    let to = match a.to {
        Some(f) => format_of(f),
        None if from == EventFormat::Text => EventFormat::Evb1,
        None => EventFormat::Text,
    };
    encode_events(&stream, to, create(&a.output)?)?;
    ctx.output(&a.output);
    eprintln!("{} events -> {}", stream.len(), a.output.display());
    ctx.finish("convert", a, beside(&a.output))
}

fn windows<'a>(stream: &'a EventStream, w: &WindowArgs) -> anyhow::Result<Vec<EventWindow<'a>>> {
    let stride = w.stride_us.unwrap_or(w.window_us);
    slice_windows_from(stream, w.origin_us, w.window_us, stride).map_err(|e| usage(e.to_string()))
}

fn representation(r: ReprArg) -> Representation {
    match r {
        ReprArg::E2f => Representation::E2f,
        ReprArg::Lnes => Representation::Lnes,
        ReprArg::Ts => Representation::Ts,
        ReprArg::ThreeC => Representation::ThreeChannel,
    }
}

#[derive(Serialize)]
struct FrameEntry {
    frame: usize,
    t_start_us: u64,
    t_end_us: u64,
    events: usize,
    tensor: String,
    image: Option<String>,
}

#[derive(Serialize)]
struct FrameIndex {
    representation: Representation,
    width: u16,
    height: u16,
    window_us: u64,
    stride_us: u64,
    decay_us: Option<f64>,
    frames: Vec<FrameEntry>,
}

pub fn frame(a: &FrameArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    let repr = representation(a.repr);
    if let Some(d) = a.decay_us {
        if !(d > 0.0 && d.is_finite()) {
            return Err(usage(format!("--decay-us must be positive, got {d}")));
        }
    }
    let (stream, _) = load_events(&a.events, ctx)?;
    let wins = windows(&stream, &a.window)?;
    create_dir(&a.out)?;
    let image_ext = match repr.channels() {
        1 => Some("pgm"),
        3 => Some("ppm"),
        _ => None,
    }
    .filter(|_| !a.no_images);
    let decay = a
        .decay_us
        .map(|d| d as f32)
        .or_else(|| repr.default_decay_us(a.window.window_us).map(|d| d as f32));

    let mut entries = Vec::with_capacity(wins.len());
    for (b, batch) in wins.chunks(FRAME_BATCH).enumerate() {
        let rendered: Vec<(Vec<u8>, Option<Vec<u8>>)> = batch
            .par_iter()
            .map(|w| -> anyhow::Result<_> {
                let f = build_frame::<f32>(w, repr, decay)?;
                let mut tensor = Vec::new();
                write_tensor(&TensorFile::from_frame(&f), &mut tensor)?;
                let image = match image_ext {
                    Some(_) => {
                        let mut img = Vec::new();
                        write_frame_pnm(&f, &mut img)?;
                        Some(img)
                    }
                    None => None,
                };
                Ok((tensor, image))
            })
            .collect::<anyhow::Result<_>>()?;
        for (j, (w, (tensor, image))) in batch.iter().zip(rendered).enumerate() {
            let i = b * FRAME_BATCH + j;
            let tensor_name = format!("frame_{i:06}.etf");
            fs::write(a.out.join(&tensor_name), tensor)?;
            let image_name = match (image, image_ext) {
                (Some(bytes), Some(ext)) => {
                    let name = format!("frame_{i:06}.{ext}");
                    fs::write(a.out.join(&name), bytes)?;
                    Some(name)
                }
                _ => None,
            };
            entries.push(FrameEntry {
                frame: i,
                t_start_us: w.t_start,
                t_end_us: w.t_end,
                events: w.len(),
                tensor: tensor_name,
                image: image_name,
            });
        }
    }
    let g = stream.geometry();
    let index = FrameIndex {
        representation: repr,
        width: g.width,
        height: g.height,
        window_us: a.window.window_us,
        stride_us: a.window.stride_us.unwrap_or(a.window.window_us),
        decay_us: decay.map(f64::from),
        frames: entries,
    };
    let index_path = a.out.join("index.json");
    serde_json::to_writer_pretty(create(&index_path)?, &index)?;
    ctx.output(&a.out);
    eprintln!(
        "{} {} frames -> {}",
        index.frames.len(),
        repr,
        a.out.display()
    );
    ctx.finish("frame", a, inside(&a.out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskEntry {
    frame: usize,
    file: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BboxEntry {
    frame: usize,
    bbox: [u32; 4],
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, ctx: &mut RunContext) -> anyhow::Result<T> {
    ctx.input(path)?;
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_masks(
    list: &Path,
    frames: usize,
    g: SensorGeometry,
    ctx: &mut RunContext,
) -> anyhow::Result<Vec<Option<Mask>>> {
    let entries: Vec<MaskEntry> = read_json(list, ctx)?;
    let base = list.parent().unwrap_or(Path::new("."));
    let mut masks = vec![None; frames];
    for e in entries {
        if e.frame >= frames {
            bail!(
                "mask for frame {} but the stream has {frames} windows",
                e.frame
            );
        }
        let path = base.join(&e.file);
        ctx.input(&path)?;
        let f = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
        let m = read_mask(
            BufReader::new(f),
            Some((g.width as usize, g.height as usize)),
        )
        .with_context(|| format!("reading mask {}", path.display()))?;
        masks[e.frame] = Some(m);
    }
    Ok(masks)
}

fn load_bboxes(
    list: &Path,
    frames: usize,
    g: SensorGeometry,
    ctx: &mut RunContext,
) -> anyhow::Result<Vec<Option<BBox>>> {
    let entries: Vec<BboxEntry> = read_json(list, ctx)?;
    let mut boxes = vec![None; frames];
    for e in entries {
        if e.frame >= frames {
            bail!(
                "bbox for frame {} but the stream has {frames} windows",
                e.frame
            );
        }
        let [x, y, w, h] = e.bbox;
        boxes[e.frame] = Some(BBox::new(x, y, w, h)?.within(g)?);
    }
    Ok(boxes)
}

pub fn filter(a: &FilterArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    match a.method {
        FilterMethodArg::MaskKl if a.masks.is_none() => {
            return Err(usage("--method mask-kl needs --masks"))
        }
        FilterMethodArg::Bbox if a.bboxes.is_none() => {
            return Err(usage("--method bbox needs --bboxes"))
        }
        _ => {}
    }
    let threshold = a.threshold.unwrap_or(match a.method {
        FilterMethodArg::MaskKl => DEFAULT_KL_THRESHOLD,
        FilterMethodArg::Bbox => DEFAULT_BBOX_THRESHOLD,
        FilterMethodArg::Count => DEFAULT_MIN_EVENTS as f64,
    });
    let (stream, _) = load_events(&a.events, ctx)?;
    let wins = windows(&stream, &a.window)?;
    let g = stream.geometry();
    let report = match a.method {
        FilterMethodArg::MaskKl => {
            let masks = load_masks(a.masks.as_deref().unwrap(), wins.len(), g, ctx)?;
            let inputs = FilterInputs::MaskKl {
                masks: &masks,
                params: MaskDistributionParams::default(),
                min_mask_events: a.min_mask_events,
            };
            filter_dataset(&wins, &inputs, threshold)?
        }
        FilterMethodArg::Bbox => {
            let bboxes = load_bboxes(a.bboxes.as_deref().unwrap(), wins.len(), g, ctx)?;
            filter_dataset(
                &wins,
                &FilterInputs::BboxRatio { bboxes: &bboxes },
                threshold,
            )?
        }
        FilterMethodArg::Count => filter_dataset(&wins, &FilterInputs::MinCount, threshold)?,
    };
    create_dir(&a.out)?;
    serde_json::to_writer_pretty(create(&a.out.join("report.json"))?, &report)?;
    let mut kept = create(&a.out.join("kept.txt"))?;
    for f in report.kept_frames() {
        writeln!(kept, "{f}")?;
    }
    kept.flush()?;
    ctx.output(&a.out);
    println!(
        "{}",
        crate::table::render(
            &["method", "threshold", "total", "kept", "kept %"],
            &[vec![
                report
                    .scores
                    .first()
                    .map_or_else(|| format!("{:?}", a.method), |s| s.method.to_string()),
                format!("{threshold}"),
                report.summary.total.to_string(),
                report.summary.kept.to_string(),
                format!("{:.2}", 100.0 * report.summary.kept_fraction),
            ]],
        )
    );
    ctx.finish("filter", a, inside(&a.out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmulatorFrameEntry {
    file: PathBuf,
    t_us: u64,
}

pub fn emulate(a: &EmulateArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    let params = EmulatorParams {
        contrast_threshold: a.contrast,
        refractory_us: a.refractory_us,
        log_eps: a.log_eps,
        leak_rate_hz: a.leak_rate_hz,
    };
    if !(a.contrast > 0.0) || !(a.log_eps > 0.0) || !(a.leak_rate_hz >= 0.0) {
        return Err(usage(
            "--contrast and --log-eps must be positive and --leak-rate-hz non-negative",
        ));
    }
    ctx.seed(a.seed);
    let index_path = a
        .index
        .clone()
        .unwrap_or_else(|| a.frames.join("index.json"));
    let entries: Vec<EmulatorFrameEntry> = read_json(&index_path, ctx)?;
    let mut frames = Vec::with_capacity(entries.len());
    let mut dims = None;
    for e in &entries {
        let path = a.frames.join(&e.file);
        ctx.input(&path)?;
        let f = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
        let img =
            read_pgm(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
        match dims {
            None => dims = Some((img.width, img.height)),
            Some(d) if d != (img.width, img.height) => bail!(
                "{} is {}x{}, earlier frames are {}x{}",
                path.display(),
                img.width,
                img.height,
                d.0,
                d.1
            ),
            _ => {}
        }
        frames.push(IntensityFrame {
            t_us: e.t_us,
            pixels: img.normalized::<f64>(),
        });
    }
    let (w, h) = dims.unwrap_or((0, 0));
    let g = SensorGeometry::new(
        u16::try_from(w).context("frame width exceeds the event format")?,
        u16::try_from(h).context("frame height exceeds the event format")?,
    )
    .context("no frames listed")?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let stream = emulate_events(g, &frames, &params, &mut rng)?;
    encode_events(&stream, format_of(a.format), create(&a.output)?)?;
    ctx.output(&a.output);
    eprintln!(
        "{} events from {} frames -> {}",
        stream.len(),
        frames.len(),
        a.output.display()
    );
    ctx.finish("emulate", a, beside(&a.output))
}
