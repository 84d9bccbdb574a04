use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use fofkit::fof::{
    band_split, fof_to_occupancy, fof_to_occupancy_with, hf_mse, intervals_to_fof, read_fof,
    read_occupancy, voxelize_intervals, write_csej, write_fof, write_occupancy, DecodeOptions,
    Magic,
};
use fofkit::geometry::shapes::{box_mesh, icosphere};
use fofkit::geometry::{
    apply_frame, denormalize_mesh, load_mesh, normalize_mesh, raycast_intervals,
    raycast_with_report, save_mesh,
};
use fofkit::joints::{
    self, concat_condition, load_aux_png, load_joints, radius_from_cm, DEFAULT_RADIUS_CM,
};
use fofkit::meshing::{
    chamfer_with_seed, grid_iou, marching_cubes, render_views, write_png, RenderMode, RenderSpec,
};
use fofkit::recarve::{self, refiner_from_name, External, RecarvePlan, Refiner};
use fofkit::{ErrorClass, FofGrid, Mesh, NormalizedFrame, OccupancyGrid};
use serde::Serialize;

use crate::config::{parse_angles, parse_weights, PipelineConfig};
use crate::error::CliError;
use crate::{DecodeArgs, EmbedArgs, EncodeArgs, MetricsArgs, ModeArg, RecarveArgs, RenderArgs};

/// Sidecar holding the frame of an encoded mesh: `<output>.frame.json`.
pub fn frame_sidecar(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".frame.json");
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn finish(
    path: &Path,
    result: std::io::Result<()>,
    mut w: BufWriter<File>,
) -> Result<(), CliError> {
    result
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn write_fof_file(path: &Path, fof: &FofGrid) -> Result<(), CliError> {
    let mut w = create(path)?;
    let result = write_fof(&mut w, fof);
    finish(path, result, w)
}

fn write_occupancy_file(path: &Path, grid: &OccupancyGrid) -> Result<(), CliError> {
    let mut w = create(path)?;
    let result = write_occupancy(&mut w, grid);
    finish(path, result, w)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn read_fof_file(path: &Path) -> Result<FofGrid, CliError> {
    read_fof(&mut open(path)?).map_err(|e| CliError::container(path, e))
}

fn read_frame(path: &Path) -> Result<NormalizedFrame, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Mesh, CliError> {
    let (mesh, warnings) = load_mesh(path)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(mesh)
}

pub fn encode(args: EncodeArgs, mut config: PipelineConfig) -> Result<(), CliError> {
    config.resolution = args.resolution.unwrap_or(config.resolution);
    config.channels = args.channels.unwrap_or(config.channels);
    config.margin = args.margin.unwrap_or(config.margin);
    config.validate()?;
    let mesh = load(&args.input)?;
    let (normalized, frame) = normalize_mesh(&mesh, config.margin)?;
    let n = config.resolution;
    let (intervals, report) = raycast_with_report(&normalized, n, n)?;
    eprintln!(
        "parity: {} of {} hit pixels repaired ({:.4}%)",
        report.violations,
        report.hit_pixels,
        100.0 * report.violation_fraction()
    );
    let fof = intervals_to_fof(&intervals, config.channels)?;
    write_fof_file(&args.output, &fof)?;
    write_json(&frame_sidecar(&args.output), &frame)?;
    log::info!(
        "wrote {} ({}x{}x{}), frame {frame}",
        args.output.display(),
        n,
        n,
        config.channels
    );
    Ok(())
}

pub fn decode(args: DecodeArgs, mut config: PipelineConfig) -> Result<(), CliError> {
    config.depth = args.depth.unwrap_or(config.depth);
    config.iso = args.iso.unwrap_or(config.iso);
    config.validate()?;
    let fof = read_fof_file(&args.input)?;
    let options = DecodeOptions {
        lanczos: args.lanczos,
    };
    let occupancy = fof_to_occupancy_with(&fof, config.depth, options)?;
    if let Some(path) = &args.occupancy_out {
        write_occupancy_file(path, &occupancy)?;
    }
    let mut mesh = marching_cubes(&occupancy, config.iso)?;
    if mesh.is_empty() {
        log::warn!(
            "{}: field never reaches iso {}, writing an empty mesh",
            args.input.display(),
            config.iso
        );
    }
    let sidecar = frame_sidecar(&args.input);
    if !args.normalized && sidecar.exists() {
        mesh = denormalize_mesh(&mesh, &read_frame(&sidecar)?);
    }
    save_mesh(&mesh, &args.output)?;
    Ok(())
}

#[derive(Serialize)]
struct BlockJson<'a> {
    label: &'a str,
    start: usize,
    len: usize,
}

pub fn embed_joints(args: EmbedArgs, mut config: PipelineConfig) -> Result<(), CliError> {
    config.resolution = args.resolution.unwrap_or(config.resolution);
    config.joint_channels = args.channels_per_joint.unwrap_or(config.joint_channels);
    config.validate()?;
    let joint_set = load_joints(&args.input)?;
    let frame = args.frame.as_deref().map(read_frame).transpose()?;
    let radius = match (args.radius, args.radius_cm, config.joint_radius, frame) {
        (Some(r), _, _, _) => r,
        (None, Some(cm), _, Some(frame)) => radius_from_cm(cm, &frame),
        (None, None, Some(r), _) => r,
        (None, None, None, Some(frame)) => radius_from_cm(DEFAULT_RADIUS_CM, &frame),
        _ => {
            return Err(CliError::format(
                "joint radius unknown: pass --radius, or --frame with the mesh's sidecar",
            ))
        }
    };
    let n = config.resolution;
    let csej = joints::embed_joints(&joint_set, radius, n, n, config.joint_channels)?;
    let mut w = create(&args.output)?;
    let result = write_csej(&mut w, &csej.grid, &csej.header());
    finish(&args.output, result, w)?;
    log::info!("radius {radius}, {} channels", csej.grid.channels());
    if let Some(path) = &args.condition_out {
        let aux = args.aux.as_deref().map(load_aux_png).transpose()?;
        let condition = concat_condition(&csej, aux.as_ref())?;
        write_fof_file(path, &condition.grid)?;
        let blocks: Vec<BlockJson> = condition
            .blocks
            .iter()
            .map(|b| BlockJson {
                label: &b.label,
                start: b.start,
                len: b.len,
            })
            .collect();
        let mut name = path.as_os_str().to_owned();
        name.push(".blocks.json");
        write_json(Path::new(&name), &blocks)?;
    }
    Ok(())
}

pub fn recarve(args: RecarveArgs, mut config: PipelineConfig) -> Result<(), CliError> {
    config.depth = args.depth.unwrap_or(config.depth);
    config.channels = args.channels.unwrap_or(config.channels);
    config.iso = args.iso.unwrap_or(config.iso);
    config.band_low = args.band_low.unwrap_or(config.band_low);
    if let Some(refiner) = args.refiner {
        config.refiner = refiner;
    }
    if let Some(views) = &args.views {
        config.plan.angles = parse_angles(views)?;
        let n = config.plan.angles.len() + 1;
        config.plan.weights = vec![1.0 / n as f64; n];
    }
    if let Some(weights) = &args.weights {
        config.plan.weights = parse_weights(weights)?;
    }
    config.validate()?;
    let plan = RecarvePlan {
        angles: config.plan.angles.clone(),
        weights: config.plan.weights.clone(),
        depth: config.depth,
        iso: config.iso,
    };
    let refiner: Box<dyn Refiner> =
        match (config.refiner.strip_prefix("extern:"), args.extern_timeout) {
            (Some(dir), Some(secs)) if !dir.is_empty() => {
                if !(secs > 0.0 && secs.is_finite()) {
                    return Err(CliError::format(format!("extern timeout {secs}")));
                }
                let mut external = External::new(dir);
                external.timeout = Some(Duration::from_secs_f64(secs));
                Box::new(external)
            }
            _ => refiner_from_name(&config.refiner, config.band_low)?,
        };
    let mesh = load(&args.input)?;
    let (normalized, frame) = normalize_mesh(&mesh, config.margin)?;
    let output = recarve::recarve(&normalized, &plan, config.channels, refiner.as_ref())?;
    if let Some(dir) = &args.dump_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (k, fof) in output.view_fofs.iter().enumerate() {
            write_fof_file(&dir.join(format!("view_{k}.fof")), fof)?;
        }
    }
    if let Some(path) = &args.occupancy_out {
        write_occupancy_file(path, &output.occupancy)?;
    }
    if output.mesh.is_empty() {
        log::warn!("recarved field is empty, writing an empty mesh");
    }
    save_mesh(&denormalize_mesh(&output.mesh, &frame), &args.output)?;
    Ok(())
}

pub fn render(args: RenderArgs, config: PipelineConfig) -> Result<(), CliError> {
    let spec = RenderSpec {
        views: args.views,
        interval_deg: args.interval,
        width: args.size,
        height: args.size,
        mode: match args.mode {
            ModeArg::Normal => RenderMode::Normal,
            ModeArg::Shading => RenderMode::Shading,
        },
    };
    spec.validate()?;
    let mut mesh = load(&args.input)?;
    if !args.raw {
        mesh = normalize_mesh(&mesh, config.margin)?.0;
    }
    let images = render_views(&mesh, &spec)?;
    fs::create_dir_all(&args.output).map_err(|e| CliError::io(&args.output, e))?;
    for (k, image) in images.iter().enumerate() {
        write_png(&args.output.join(format!("view_{k:03}.png")), image)?;
    }
    Ok(())
}

enum Input {
    Fof(FofGrid),
    Occupancy(OccupancyGrid),
    Mesh(Mesh),
}

fn sniff(path: &Path) -> Result<Input, CliError> {
    let mut magic = [0u8; 4];
    let is_grid = {
        let mut f = open(path)?;
        f.read_exact(&mut magic).is_ok()
    };
    match Magic::from_bytes(magic).filter(|_| is_grid) {
        Some(Magic::Fof) => Ok(Input::Fof(read_fof_file(path)?)),
        Some(Magic::Occupancy) => Ok(Input::Occupancy(
            read_occupancy(&mut open(path)?).map_err(|e| CliError::container(path, e))?,
        )),
        Some(Magic::Csej) => Err(CliError::format(format!(
            "{}: joint grids cannot be compared",
            path.display()
        ))),
        None => Ok(Input::Mesh(load(path)?)),
    }
}

#[derive(Serialize, Default)]
struct Report {
    kind: &'static str,
    iou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    chamfer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hf_mse: Option<f64>,
}

fn shape_error(a: (usize, usize, usize), b: (usize, usize, usize)) -> CliError {
    CliError::format(format!("grid shapes differ: {a:?} vs {b:?}"))
}

pub fn metrics(args: MetricsArgs, mut config: PipelineConfig) -> Result<(), CliError> {
    config.depth = args.depth.unwrap_or(config.depth);
    config.iso = args.iso.unwrap_or(config.iso);
    config.seed = args.seed.unwrap_or(config.seed);
    config.margin = args.margin.unwrap_or(config.margin);
    config.validate()?;
    let report = match (sniff(&args.a)?, sniff(&args.b)?) {
        (Input::Fof(a), Input::Fof(b)) => {
            if a.shape() != b.shape() {
                return Err(shape_error(a.shape(), b.shape()));
            }
            let hf = if config.band_low >= 1 && config.band_low < a.channels() {
                Some(hf_mse(
                    &band_split(&a, config.band_low)?.high,
                    &band_split(&b, config.band_low)?.high,
                )?)
            } else {
                None
            };
            let (oa, ob) = (
                fof_to_occupancy(&a, config.depth)?,
                fof_to_occupancy(&b, config.depth)?,
            );
            Report {
                kind: "fof",
                iou: grid_iou(&oa, &ob, config.iso)?,
                mse: Some(hf_mse(&a, &b)?),
                hf_mse: hf,
                ..Report::default()
            }
        }
        (Input::Occupancy(a), Input::Occupancy(b)) => {
            if a.shape() != b.shape() {
                return Err(shape_error(a.shape(), b.shape()));
            }
            Report {
                kind: "occupancy",
                iou: grid_iou(&a, &b, config.iso)?,
                ..Report::default()
            }
        }
        (Input::Mesh(a), Input::Mesh(b)) => {
            let (na, frame) = normalize_mesh(&a, config.margin)?;
            let nb = apply_frame(&b, &frame);
            let chamfer = chamfer_with_seed(&na, &nb, args.samples, config.seed)?;
            let n = args.grid;
            let va = voxelize_intervals(&raycast_intervals(&na, n, n)?, n)?;
            let vb = voxelize_intervals(&raycast_intervals(&nb, n, n)?, n)?;
            Report {
                kind: "mesh",
                iou: grid_iou(&va, &vb, 0.5)?,
                chamfer: Some(chamfer),
                ..Report::default()
            }
        }
        _ => {
            return Err(CliError::format(
                "metrics needs two meshes, two FOF grids or two occupancy grids",
            ))
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("json serializes")
    );
    Ok(())
}

/// Small end-to-end checks at low resolution.
pub fn selftest() -> Result<(), CliError> {
    let n = 64;
    let mut failed = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{name}: {} ({detail})", if ok { "ok" } else { "FAILED" });
        failed += usize::from(!ok);
    };

    let sphere = icosphere([0.0; 3], 0.6, 4);
    let intervals = raycast_intervals(&sphere, n, n)?;
    let fof = intervals_to_fof(&intervals, 32)?;
    let truth = voxelize_intervals(&intervals, n)?;
    let decoded = fof_to_occupancy(&fof, n)?;
    let iou = grid_iou(&decoded, &truth, 0.5)?;
    check("sphere round trip", iou >= 0.97, format!("IoU {iou:.4}"));

    let mesh = marching_cubes(&decoded, 0.5)?;
    check(
        "extracted mesh is closed",
        mesh.is_edge_manifold() && mesh.euler_characteristic() == 2,
        format!("{} triangles", mesh.triangles.len()),
    );

    let cube = box_mesh([0.0; 3], [0.5; 3]);
    let plan = RecarvePlan {
        depth: n,
        ..RecarvePlan::default()
    };
    let out = recarve::recarve(&cube, &plan, 32, &recarve::Identity)?;
    let cube_truth = voxelize_intervals(&raycast_intervals(&cube, n, n)?, n)?;
    let iou = grid_iou(&out.occupancy, &cube_truth, 0.5)?;
    check("cube recarve", iou >= 0.97, format!("IoU {iou:.4}"));

    let c = chamfer_with_seed(&sphere, &sphere, 10_000, fofkit::meshing::CHAMFER_SEED)?;
    check("self chamfer", c <= 1e-4, format!("{c:.2e}"));

    if failed > 0 {
        return Err(CliError::new(
            ErrorClass::Geometry,
            format!("{failed} self-test check(s) failed"),
        ));
    }
    Ok(())
}
