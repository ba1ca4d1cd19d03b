use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};

use evcomp::eval::{DetectionBox, EvalOptions, OverlapMeasure};
use evcomp::io::{
    read_events, read_ground_truth, read_object_records, save_events, write_ground_truth, write_object_record,
    ObjectRecord, OBJECT_RECORD_COLUMNS,
};
use evcomp::render::{save_count_image, save_time_image};
use evcomp::synth::ObjectSceneParams;
use evcomp::{
    analyze_slice, compensate, evaluate_success_rate, project_about, random_object_scene, slice_events, synthesize,
    synthesize_sequence, BoundingBox, Error, EventSlice, MotionModel, Pipeline, RunConfig,
};

use crate::{Cmd, ConfigArgs, InputArgs, SynthArgs};

type Cfg = RunConfig<f64>;

pub fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Compensate { input, render, config } => cmd_compensate(&input, render.as_deref(), &load_config(&config)?),
        Cmd::Detect { input, render, config } => cmd_detect(&input, render.as_deref(), &load_config(&config)?),
        Cmd::Track { input, render, config } => cmd_track(&input, render.as_deref(), &load_config(&config)?),
        Cmd::Synth { synth, config } => cmd_synth(&synth, &load_config(&config)?),
        Cmd::Eval {
            gt,
            detections,
            measure,
            overlap,
            time_tolerance,
        } => cmd_eval(&gt, &detections, &measure, overlap, time_tolerance),
        Cmd::Render {
            input,
            out_dir,
            model,
            config,
        } => cmd_render(&input, &out_dir, &model, &load_config(&config)?),
    }
}

fn load_config(args: &ConfigArgs) -> Result<Cfg> {
    let mut cfg = match &args.file {
        Some(p) => Cfg::load(p)?,
        None => Cfg::default(),
    };
    for (k, v) in &args.overrides {
        cfg.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_slices(input: &InputArgs, cfg: &Cfg) -> Result<Vec<EventSlice<f64>>> {
    let file = read_events::<f64>(&input.input)?;
    if file.events.is_empty() {
        bail!("{}: no events", input.input.display());
    }
    let sensor = match (input.width, input.height, file.sensor) {
        (Some(w), Some(h), _) => (w, h),
        (None, None, Some(s)) => s,
        (None, None, None) => {
            let max = |f: fn(&evcomp::Event<f64>) -> f64| file.events.iter().map(f).fold(0.0, f64::max);
            let s = (max(|e| e.x) as u32 + 1, max(|e| e.y) as u32 + 1);
            warn!("no sensor header; using the event extent {}x{}", s.0, s.1);
            s
        }
        _ => bail!("--width and --height must be given together"),
    };
    let mut slices = slice_events(&file.events, cfg.window, sensor)?;
    if cfg.dither && file.events.iter().all(|e| e.x.fract() == 0.0 && e.y.fract() == 0.0) {
        slices = slices
            .iter()
            .enumerate()
            .map(|(k, s)| s.dithered(cfg.seed.wrapping_add(k as u64)))
            .collect();
    }
    info!(
        "{} events in {} slices, sensor {}x{}",
        file.events.len(),
        slices.len(),
        sensor.0,
        sensor.1
    );
    Ok(slices)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_header(w: &mut dyn Write, command: &str, input: Option<&Path>, cfg: &Cfg, columns: &str) -> Result<()> {
    writeln!(w, "# evcomp {command} {}", env!("CARGO_PKG_VERSION"))?;
    if let Some(p) = input {
        writeln!(w, "# input: {}", p.display())?;
    }
    for line in cfg.header_lines() {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# {columns}")?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn slice_path(dir: &Path, k: usize, suffix: &str) -> PathBuf {
    dir.join(format!("slice_{k:05}_{suffix}"))
}

fn fmt_model(m: &MotionModel<f64>) -> String {
    format!("{} {} {} {}", m.h_x, m.h_y, m.h_z, m.theta)
}

const COMPENSATE_COLUMNS: &str = "t0 dt events h_x h_y h_z theta density coarse_iterations fine_iterations converged";

fn cmd_compensate(input: &InputArgs, render: Option<&Path>, cfg: &Cfg) -> Result<()> {
    let slices = load_slices(input, cfg)?;
    let mut out = open_output(input.output.as_deref())?;
    write_header(&mut out, "compensate", Some(&input.input), cfg, COMPENSATE_COLUMNS)?;
    if let Some(dir) = render {
        create_dir(dir)?;
    }
    let opt = &cfg.pipeline.optimizer;
    let mut warm = MotionModel::identity();
    for (k, slice) in slices.iter().enumerate() {
        let r = match compensate(slice, &warm, opt) {
            Ok(r) => r,
            Err(e) => {
                out.flush()?;
                return Err(anyhow!(e).context(format!("slice {k} at t={}", slice.t0())));
            }
        };
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            evcomp::io::format_time(slice.t0()),
            slice.dt(),
            slice.len(),
            fmt_model(&r.model),
            r.final_density,
            r.iterations_coarse,
            r.iterations_fine,
            r.converged as u8,
        )?;
        if let Some(dir) = render {
            let before = project_about(slice, &MotionModel::identity(), opt.bin_size, opt.center_for(slice))?;
            save_time_image(&slice_path(dir, k, "before.ppm"), &before.time, &[])?;
            save_time_image(&slice_path(dir, k, "after.ppm"), &r.time_image, &[])?;
        }
        warm = r.model;
    }
    out.flush()?;
    Ok(())
}

fn cmd_detect(input: &InputArgs, render: Option<&Path>, cfg: &Cfg) -> Result<()> {
    let slices = load_slices(input, cfg)?;
    let mut out = open_output(input.output.as_deref())?;
    write_header(&mut out, "detect", Some(&input.input), cfg, OBJECT_RECORD_COLUMNS)?;
    if let Some(dir) = render {
        create_dir(dir)?;
    }
    let mut warm = MotionModel::identity();
    for (k, slice) in slices.iter().enumerate() {
        let a = analyze_slice(slice, &warm, &cfg.pipeline).with_context(|| format!("slice {k}"))?;
        for (i, o) in a.objects.iter().enumerate() {
            let record = ObjectRecord {
                frame_time: a.t_end,
                id: i as u64,
                centroid: o.centroid,
                bbox: o.bbox,
                model: o.model.unwrap_or(a.background.model),
            };
            write_object_record(&mut out, &record)?;
        }
        if let Some(dir) = render {
            render_analysis(dir, k, &a, cfg)?;
        }
        warm = a.background.model;
    }
    out.flush()?;
    Ok(())
}

fn render_analysis(dir: &Path, k: usize, a: &evcomp::SliceAnalysis<f64>, cfg: &Cfg) -> Result<()> {
    let bin = cfg.pipeline.detection.bin_size;
    let boxes: Vec<BoundingBox<f64>> = a.detected.iter().map(|o| o.pixel_box(bin)).collect();
    save_count_image(&slice_path(dir, k, "count.pgm"), &a.background.count_image)?;
    save_time_image(&slice_path(dir, k, "time.ppm"), &a.background.time_image, &boxes)?;
    Ok(())
}

fn cmd_track(input: &InputArgs, render: Option<&Path>, cfg: &Cfg) -> Result<()> {
    let slices = load_slices(input, cfg)?;
    let mut out = open_output(input.output.as_deref())?;
    write_header(&mut out, "track", Some(&input.input), cfg, OBJECT_RECORD_COLUMNS)?;
    if let Some(dir) = render {
        create_dir(dir)?;
    }
    let mut pipeline = Pipeline::new(cfg.pipeline.clone())?;
    for (k, slice) in slices.iter().enumerate() {
        let step = match pipeline.process(slice) {
            Ok(s) => s,
            Err(e) => {
                out.flush()?;
                return Err(anyhow!(e).context(format!("slice {k} at t={}", slice.t0())));
            }
        };
        for t in step.tracks.iter().filter(|t| t.missed == 0) {
            let record = ObjectRecord {
                frame_time: step.analysis.t_end,
                id: t.id,
                centroid: t.centroid(),
                bbox: t.bbox(),
                model: t.model(),
            };
            write_object_record(&mut out, &record)?;
        }
        if !step.step.failed.is_empty() {
            warn!(
                "slice {k}: tracks {:?} retired after a numerical failure",
                step.step.failed
            );
        }
        if let Some(dir) = render {
            render_analysis(dir, k, &step.analysis, cfg)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs, cfg: &Cfg) -> Result<()> {
    let dt = match cfg.window {
        evcomp::SliceWindow::Duration(dt) => dt,
        evcomp::SliceWindow::Count(_) => bail!("synth needs a slice duration, not an event count"),
    };
    if args.slices == 0 {
        bail!("--slices must be positive");
    }
    if args.noise.is_nan() || args.noise < 0.0 {
        bail!("--noise must be >= 0");
    }
    let params = ObjectSceneParams {
        sensor_width: args.width,
        sensor_height: args.height,
        objects: (args.min_objects, args.max_objects),
        speed_factor: (args.min_speed, args.max_speed),
        texture_density: args.texture,
        background_shift: args.shift,
        background_zoom: args.zoom,
        ..Default::default()
    };
    let mut spec = random_object_scene::<f64>(&params, cfg.seed)?;
    spec.dt = dt;
    spec.quantize = true;
    if args.noise > 0.0 {
        let signal = synthesize(&spec, cfg.seed)?.slice.len() as f64;
        spec.noise_rate = args.noise * signal / dt;
    }
    let seq = synthesize_sequence(&spec, args.slices, cfg.seed)?;
    let events = seq.events();
    save_events(&args.output, &events, Some((args.width, args.height)))?;
    info!("{} events in {} slices", events.len(), args.slices);
    if let Some(p) = &args.gt {
        let mut header = vec![format!("evcomp synth {}", env!("CARGO_PKG_VERSION"))];
        header.push(format!("background model: {}", fmt_model(&spec.background_model)));
        for (i, o) in spec.objects.iter().enumerate() {
            header.push(format!("object {i} model: {}", fmt_model(&o.model)));
        }
        header.extend(cfg.header_lines());
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_ground_truth(BufWriter::new(f), &header, &seq.ground_truth())?;
    }
    Ok(())
}

/// Object records, or boxes in the ground-truth layout.
fn read_detections(path: &Path) -> Result<Vec<DetectionBox<f64>>> {
    match read_object_records::<f64>(path) {
        Ok(r) => Ok(r
            .into_iter()
            .map(|r| DetectionBox {
                frame_time: r.frame_time,
                bbox: r.bbox,
            })
            .collect()),
        Err(Error::Parse { .. }) => {
            let boxes = read_ground_truth::<f64>(path)
                .with_context(|| format!("{} is neither object records nor boxes", path.display()))?;
            Ok(boxes
                .into_iter()
                .map(|g| DetectionBox {
                    frame_time: g.frame_time,
                    bbox: g.bbox,
                })
                .collect())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_eval(gt: &[PathBuf], detections: &[PathBuf], measure: &str, overlap: f64, time_tolerance: f64) -> Result<()> {
    if gt.len() != detections.len() {
        bail!("give one --detections per --gt ({} vs {})", detections.len(), gt.len());
    }
    let measure = match measure {
        "coverage" => OverlapMeasure::Coverage,
        "iou" => OverlapMeasure::IntersectionOverUnion,
        other => bail!("unknown overlap measure {other:?}"),
    };
    if !(overlap > 0.0 && overlap <= 1.0) {
        bail!("--overlap must be in (0, 1]");
    }
    let options = EvalOptions {
        measure,
        threshold: overlap,
        time_tolerance,
    };
    let mut rows = Vec::new();
    for (g, d) in gt.iter().zip(detections) {
        let labels = read_ground_truth::<f64>(g)?;
        let dets = read_detections(d)?;
        let report = evaluate_success_rate(&dets, &labels, &options).with_context(|| format!("{}", g.display()))?;
        let name = d
            .file_stem()
            .map_or_else(|| d.display().to_string(), |s| s.to_string_lossy().into_owned());
        let objects: usize = report.frames.iter().map(|f| f.objects).sum();
        rows.push((name, report.frames.len(), objects, report.rate_percent));
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("sequence".len());
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:<width$}  {:>6}  {:>7}  {:>8}",
        "sequence", "frames", "objects", "success"
    )?;
    for (name, frames, objects, rate) in &rows {
        writeln!(out, "{name:<width$}  {frames:>6}  {objects:>7}  {:>7.2}%", rate)?;
    }
    if rows.len() > 1 {
        let mean = rows.iter().map(|r| r.3).sum::<f64>() / rows.len() as f64;
        writeln!(out, "{:<width$}  {:>6}  {:>7}  {:>7.2}%", "mean", "", "", mean)?;
    }
    Ok(())
}

fn parse_model(s: &str) -> Result<MotionModel<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad model {s:?}"))?;
    match v.as_slice() {
        [x, y, z, t] => Ok(MotionModel::new(*x, *y, *z, *t)),
        _ => bail!("model needs four values h_x,h_y,h_z,theta, got {s:?}"),
    }
}

fn cmd_render(input: &InputArgs, out_dir: &Path, model: &str, cfg: &Cfg) -> Result<()> {
    let model = parse_model(model)?;
    let slices = load_slices(input, cfg)?;
    create_dir(out_dir)?;
    let opt = &cfg.pipeline.optimizer;
    for (k, slice) in slices.iter().enumerate() {
        let p = project_about(slice, &model, opt.bin_size, opt.center_for(slice))?;
        save_count_image(&slice_path(out_dir, k, "count.pgm"), &p.count)?;
        save_time_image(&slice_path(out_dir, k, "time.ppm"), &p.time, &[])?;
    }
    Ok(())
}
