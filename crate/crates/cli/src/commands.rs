//! Subcommand implementations. Each is a thin adapter over one library call.

use std::io::Write;
use std::path::Path;

use treesegnet::dataset::io::{
    read_f32r, read_pgm, read_ppm, read_rgbir, write_bytes, write_f32r, write_pgm, write_ppm,
};
use treesegnet::dataset::{
    cut_tiles, fuse_channels, generate_synthetic_scene, labels_to_colors, load_patch, read_labels, scan_directory,
    split_train_val, synthetic_split, Modalities, Palette, Sample,
};
use treesegnet::geometry::{augment_rotations, extract_tile, gaussian_weight_map, plan_tiles, StitchAccumulator, TilePlan};
use treesegnet::metrics::{confusion_from_maps, fold_lower_triangular, parse_matrix_text, render_error_map, score, ConfusionMatrix};
use treesegnet::raster::{Image, RgbImage};
use treesegnet::trainer::{
    load_checkpoint, predict_scores, resume_structure_iteration, run_structure_iteration, TrainConfig,
};
use treesegnet::treecut::{graph_from_fold, serialize_tree, tree_cutting_with_trace};
use treesegnet::{Error, LabelMap};

use crate::error::CliError;
use crate::{Cli, Command, RunConfig};

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| io_err(Path::new("<stdout>"), e))
}

/// Parse errors from a file carry its name.
fn in_file<T>(path: &Path, r: treesegnet::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { message, .. } => Error::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
    .map_err(CliError::from)
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

/// `.f32r` planar floats, `.rgbir` paired PPMs, `.ppm` RGB.
pub fn read_image(path: &Path) -> Result<Image> {
    match extension(path).as_str() {
        "f32r" => Ok(read_f32r(path)?),
        "rgbir" => Ok(read_rgbir(path)?),
        "ppm" => Ok(read_ppm(path)?.to_image()),
        other => Err(CliError::Usage(format!(
            "{}: unsupported image extension `{other}` (use .f32r, .rgbir or .ppm)",
            path.display()
        ))),
    }
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    match extension(path).as_str() {
        "f32r" => Ok(write_f32r(path, image)?),
        "rgbir" => Ok(treesegnet::dataset::io::write_rgbir(path, image)?),
        "ppm" => Ok(write_ppm(path, &RgbImage::from_image(image)?)?),
        other => Err(CliError::Usage(format!(
            "{}: unsupported image extension `{other}` (use .f32r, .rgbir or .ppm)",
            path.display()
        ))),
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = cli.global.run_config()?;
    match &cli.command {
        Command::Fuse {
            rgb,
            irrg,
            rgbir,
            dsm,
            out: dest,
        } => fuse(rgb.as_deref(), irrg.as_deref(), rgbir.as_deref(), dsm, dest, out),
        Command::Augment { input, labels, out: dest } => augment(input, labels, dest, out),
        Command::Tile { input, out: dest } => tile(&cfg, input, dest, out),
        Command::Stitch { plan, tiles, out: dest } => stitch(&cfg, plan, tiles, dest, out),
        Command::Treecut { matrix, trace } => treecut(matrix, *trace, out),
        Command::Eval {
            reference,
            pred,
            error_map,
            json,
        } => eval(reference, pred, error_map.as_deref(), json.as_deref(), out),
        Command::Synth { out: dest, count, size } => synth(&cfg, dest, *count, *size, out),
        Command::Train { out: dest, data, resume } => train(&cfg, dest, data.as_deref(), *resume, out),
        Command::Predict {
            checkpoint,
            input,
            out: dest,
            scores,
            color,
        } => predict(&cfg, checkpoint, input, dest, scores.as_deref(), color.as_deref(), out),
    }
}

fn fuse(
    rgb: Option<&Path>,
    irrg: Option<&Path>,
    rgbir: Option<&Path>,
    dsm: &Path,
    dest: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let load = |p: Option<&Path>| p.map(read_image).transpose();
    let (rgb, irrg, rgbir, dsm) = (load(rgb)?, load(irrg)?, load(rgbir)?, read_image(dsm)?);
    let fused = fuse_channels(Modalities {
        rgb: rgb.as_ref(),
        irrg: irrg.as_ref(),
        rgbir: rgbir.as_ref(),
        dsm: Some(&dsm),
    })?;
    write_image(dest, &fused)?;
    emit(
        out,
        &format!("fused {}x{}x{} -> {}\n", fused.channels(), fused.height(), fused.width(), dest.display()),
    )
}

fn augment(input: &Path, labels: &Path, dest: &Path, out: &mut dyn Write) -> Result<()> {
    let image = read_image(input)?;
    let gt = read_labels(labels, &Palette::default())?;
    let pairs = augment_rotations(&image, &gt)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let ext = if image.channels() == 3 { "ppm" } else { "f32r" };
    for p in &pairs {
        let name = format!("{stem}_rot{:03}", p.crop.angle_deg.round() as i64);
        write_image(&dest.join(format!("{name}.{ext}")), &p.image)?;
        write_pgm(&dest.join(format!("{name}_gt.pgm")), &p.labels)?;
    }
    emit(out, &format!("{} pairs written to {}\n", pairs.len(), dest.display()))
}

fn tile(cfg: &RunConfig, input: &Path, dest: &Path, out: &mut dyn Write) -> Result<()> {
    let image = read_image(input)?;
    let plan = plan_tiles(image.height(), image.width(), cfg.tile_size, cfg.margin())?;
    for k in 0..plan.len() {
        write_f32r(&dest.join(format!("tile_{k:05}.f32r")), &extract_tile(&image, &plan, k)?)?;
    }
    let plan_path = dest.join("plan.json");
    write_bytes(&plan_path, serde_json::to_string_pretty(&plan).map_err(Error::from)?.as_bytes())?;
    emit(out, &format!("{} tiles, plan {}\n", plan.len(), plan_path.display()))
}

fn stitch(cfg: &RunConfig, plan_path: &Path, tiles: &Path, dest: &Path, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(plan_path).map_err(|e| io_err(plan_path, e))?;
    let plan: TilePlan = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: plan_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let weight = gaussian_weight_map(plan.tile, cfg.sigma)?;
    let mut acc: Option<StitchAccumulator> = None;
    for k in 0..plan.len() {
        let t = read_f32r(&tiles.join(format!("tile_{k:05}.f32r")))?;
        let acc = match &mut acc {
            Some(a) => a,
            None => acc.insert(StitchAccumulator::new(&plan, &weight, t.channels())?),
        };
        acc.push(&t)?;
    }
    let image = acc
        .ok_or_else(|| Error::Format {
            path: plan_path.to_path_buf(),
            message: "plan has no tiles".into(),
        })?
        .finish()?;
    write_image(dest, &image)?;
    emit(out, &format!("stitched {}x{} -> {}\n", image.height(), image.width(), dest.display()))
}

fn treecut(matrix: &Path, trace: bool, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(matrix).map_err(|e| io_err(matrix, e))?;
    let rows = in_file(matrix, parse_matrix_text(&text))?;
    // Folding a lower-triangular input leaves it unchanged, so either form works.
    let confusion = in_file(matrix, ConfusionMatrix::from_rows(&rows))?;
    let graph = graph_from_fold(&fold_lower_triangular(&confusion))?;
    let (tree, splits) = tree_cutting_with_trace(&graph)?;
    let mut text = format!("{}\n", serialize_tree(&tree));
    if trace {
        for s in &splits {
            let removed: Vec<String> = s.removed.iter().map(|e| format!("({},{}):{}", e.i, e.j, e.weight)).collect();
            text.push_str(&format!(
                "split {:?} -> {:?} | {:?} removed {}\n",
                s.subset,
                s.left,
                s.right,
                removed.join(" ")
            ));
        }
    }
    emit(out, &text)
}

fn read_label_file(path: &Path) -> Result<LabelMap> {
    Ok(if extension(path) == "pgm" {
        read_pgm(path)?
    } else {
        read_labels(path, &Palette::default())?
    })
}

fn eval(reference: &Path, pred: &Path, error_map: Option<&Path>, json: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let r = read_label_file(reference)?;
    let p = read_label_file(pred)?;
    let classes = Palette::default().len();
    let confusion = confusion_from_maps(&r, &p, classes)?;
    let report = score(&confusion)?;
    if let Some(path) = error_map {
        write_ppm(path, &render_error_map(&r, &p)?)?;
    }
    if let Some(path) = json {
        write_bytes(path, report.to_json()?.as_bytes())?;
    }
    emit(out, &report.to_table())
}

fn synth(cfg: &RunConfig, dest: &Path, count: usize, size: usize, out: &mut dyn Write) -> Result<()> {
    let palette = Palette::default();
    for k in 0..count {
        let seed = treesegnet::seeding::derive(cfg.seed, "cli-synth", &[k as u64]);
        let (image, labels) = generate_synthetic_scene(seed, size, size)?;
        write_f32r(&dest.join(format!("scene_{k:03}.f32r")), &image)?;
        write_pgm(&dest.join(format!("scene_{k:03}_gt.pgm")), &labels)?;
        write_ppm(&dest.join(format!("scene_{k:03}_rgb.ppm")), &RgbImage::from_image(&image)?)?;
        write_ppm(&dest.join(format!("scene_{k:03}_gt.ppm")), &labels_to_colors(&labels, &palette)?)?;
    }
    emit(out, &format!("{count} scenes of {size}x{size} written to {}\n", dest.display()))
}

fn load_dataset(cfg: &RunConfig, train: &TrainConfig, data: Option<&Path>) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let Some(dir) = data else {
        let s = &cfg.synthetic;
        return Ok(synthetic_split(cfg.seed, s.train_scenes, s.val_scenes, s.scene_side, train.tile)?);
    };
    let manifest = scan_directory(dir)?;
    let (train_records, val_records) = split_train_val(&manifest)?;
    let palette = Palette::default();
    let load = |records: &[treesegnet::dataset::PatchRecord]| -> Result<Vec<Sample>> {
        records
            .iter()
            .map(|r| {
                let (image, labels) = load_patch(r, &palette)?;
                let labels = labels.ok_or_else(|| Error::Data(format!("patch {} has no labels", r.id)))?;
                Ok(Sample { image, labels })
            })
            .collect()
    };
    Ok((cut_tiles(&load(&train_records)?, train.tile)?, load(&val_records)?))
}

fn train(cfg: &RunConfig, dest: &Path, data: Option<&Path>, resume: bool, out: &mut dyn Write) -> Result<()> {
    let tc = cfg.train_config()?;
    let (train, val) = load_dataset(cfg, &tc, data)?;
    let (transcript, _) = if resume {
        resume_structure_iteration(dest, &tc, &train, &val)?
    } else {
        run_structure_iteration(&tc, &train, &val, Some(dest))?
    };
    let mut text = String::new();
    for p in &transcript.passes {
        let tree = p.tree.as_ref().map_or_else(|| "none".to_string(), serialize_tree);
        text.push_str(&format!(
            "pass {} OA {:.4} mean_F1 {:.4} tree {tree}\n",
            p.pass, p.report.oa, p.report.mean_f1
        ));
    }
    text.push_str(&format!(
        "{} after {} passes; run directory {}\n",
        if transcript.converged { "converged" } else { "stopped unconverged" },
        transcript.passes.len(),
        dest.display()
    ));
    emit(out, &text)
}

#[allow(clippy::too_many_arguments)]
fn predict(
    cfg: &RunConfig,
    checkpoint: &Path,
    input: &Path,
    dest: &Path,
    scores_path: Option<&Path>,
    color: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let (net, stored, _) = load_checkpoint(checkpoint)?;
    let tc = TrainConfig {
        tile: cfg.tile_size,
        margin: cfg.margin(),
        sigma: cfg.sigma,
        workers: cfg.workers(),
        ..stored
    };
    tc.validate()?;
    let image = read_image(input)?;
    let scores = predict_scores(&net, &image, &tc)?;
    let labels = argmax_image(&scores)?;
    write_pgm(dest, &labels)?;
    if let Some(p) = scores_path {
        write_f32r(p, &scores)?;
    }
    if let Some(p) = color {
        write_ppm(p, &labels_to_colors(&labels, &Palette::default())?)?;
    }
    emit(out, &format!("labels {}x{} -> {}\n", labels.height(), labels.width(), dest.display()))
}

fn argmax_image(scores: &Image) -> Result<LabelMap> {
    let (c, h, w) = (scores.channels(), scores.height(), scores.width());
    let t = treesegnet::nn::Tensor::from_vec([1, c, h, w], scores.data().to_vec())?;
    Ok(LabelMap::from_vec(h, w, treesegnet::nn::argmax_labels(&t))?)
}
