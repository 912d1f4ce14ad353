use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fieldmap_core::change::{
    flow_table, write_flow_csv, write_summary_csv, year_summary, YearMask,
};
use fieldmap_core::container::{self, RasterData};
use fieldmap_core::fusion::{annotate, fuse as fuse_labels, wheat_field_mask};
use fieldmap_core::geojson;
use fieldmap_core::metrics::{confusion, report, write_csv, ConfusionCounts, MetricsRow};
use fieldmap_core::pipeline::{delineate as run_delineation, fuse_fields, Delineation, Timings};
use fieldmap_core::synth::{generate, SceneSpec};
use fieldmap_core::threshold::binarize;
use fieldmap_core::vectorize::polygonize;
use fieldmap_core::{BinaryMask, FieldPolygon, ProbabilityRaster};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{
    DelineateArgs, FuseArgs, InspectArgs, MetricsArgs, PipelineArgs, SynthArgs, TransitionsArgs,
    WheatSource,
};

fn prepare(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_scores(what: &str, path: &Path) -> Result<ProbabilityRaster> {
    container::read_raster(path).with_context(|| format!("reading {what} {}", path.display()))
}

fn write_geojson(polys: &[FieldPolygon], crs: &str, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    geojson::write(polys, crs, &mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn load_wheat_mask(src: &WheatSource, threshold: f64, m: &mut RunManifest) -> Result<BinaryMask> {
    if let Some(path) = &src.wheat_mask {
        m.input("wheat_mask", path);
        return container::read_mask(path)
            .with_context(|| format!("reading wheat mask {}", path.display()));
    }
    let path = src
        .wheat_scores
        .as_ref()
        .expect("clap requires one wheat source");
    m.input("wheat_scores", path);
    m.param("wheat_threshold", threshold);
    let scores = read_scores("wheat scores", path)?;
    binarize(&scores, threshold).context("stage binarize(wheat) failed")
}

fn delineate_inputs(
    field: &Path,
    boundary: &Path,
    args: &crate::ConfigArgs,
    m: &mut RunManifest,
) -> Result<Delineation> {
    let config = args.resolve()?;
    m.config = Some(config.clone());
    m.input("field_scores", field);
    m.input("boundary_scores", boundary);
    if let Some(c) = &args.config {
        m.input("config", c);
    }
    let f = read_scores("field scores", field)?;
    let b = read_scores("boundary scores", boundary)?;
    run_delineation(&f, &b, &config).with_context(|| {
        format!(
            "delineating {} with {}",
            field.display(),
            boundary.display()
        )
    })
}

fn write_delineation(
    d: &Delineation,
    polys: &[FieldPolygon],
    out: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    let labels = out.join("labels");
    container::write_labels(&d.labels, &labels).context("writing label raster")?;
    m.output("labels", &labels);
    let fields = out.join("fields.geojson");
    write_geojson(polys, &d.labels.grid().crs, &fields)?;
    m.output("fields", &fields);
    Ok(())
}

pub fn delineate(a: &DelineateArgs, jobs: usize) -> Result<()> {
    let mut m = RunManifest::new("delineate", jobs);
    prepare(&a.common.out_dir)?;
    let d = delineate_inputs(&a.field, &a.boundary, &a.config, &mut m)?;
    write_delineation(&d, &d.polygons, &a.common.out_dir, &mut m)?;
    m.param("seed_count", d.seed_count);
    m.record(&d.timings);
    m.write(&a.common.out_dir)
}

fn write_fusion_outputs(
    report: &fieldmap_core::fusion::FusionReport,
    labels: &fieldmap_core::LabelRaster,
    out: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    let csv = out.join("fusion.csv");
    let mut w = create(&csv)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    m.output("fusion", &csv);
    let mask = out.join("wheat_fields");
    container::write_mask(&wheat_field_mask(labels, report), &mask)
        .context("writing wheat field mask")?;
    m.output("wheat_fields_mask", &mask);
    Ok(())
}

pub fn pipeline(a: &PipelineArgs, jobs: usize) -> Result<()> {
    let mut m = RunManifest::new("pipeline", jobs);
    let out = &a.common.out_dir;
    prepare(out)?;
    let mut d = delineate_inputs(&a.field, &a.boundary, &a.config, &mut m)?;
    let wheat = load_wheat_mask(&a.wheat, a.wheat_threshold, &mut m)?;
    let config = m.config.clone().expect("set by delineate_inputs");
    let mut timings = Timings::default();
    let (report, annotated) = fuse_fields(&d.labels, &d.polygons, &wheat, &config, &mut timings)
        .context("fusing fields with wheat mask")?;
    d.timings.0.extend(timings.0);
    write_delineation(&d, &annotated, out, &mut m)?;
    let wheat_polys: Vec<FieldPolygon> = annotated
        .iter()
        .filter(|p| p.properties.is_wheat == Some(true))
        .cloned()
        .collect();
    let wheat_path = out.join("wheat_fields.geojson");
    write_geojson(&wheat_polys, &d.labels.grid().crs, &wheat_path)?;
    m.output("wheat_fields", &wheat_path);
    write_fusion_outputs(&report, &d.labels, out, &mut m)?;
    m.param("seed_count", d.seed_count);
    m.record(&d.timings);
    m.write(out)
}

pub fn fuse(a: &FuseArgs, jobs: usize) -> Result<()> {
    let mut m = RunManifest::new("fuse", jobs);
    let out = &a.common.out_dir;
    prepare(out)?;
    let config = a.config.resolve()?;
    m.config = Some(config.clone());
    m.input("labels", &a.labels);
    let labels = container::read_labels(&a.labels)
        .with_context(|| format!("reading labels {}", a.labels.display()))?;
    let wheat = load_wheat_mask(&a.wheat, a.wheat_threshold, &mut m)?;
    let report = fuse_labels(&labels, &wheat, config.wheat_overlap_threshold)
        .context("stage fuse failed")?;
    write_fusion_outputs(&report, &labels, out, &mut m)?;
    if let Some(fields) = &a.fields {
        m.input("fields", fields);
        let file = File::open(fields).with_context(|| format!("opening {}", fields.display()))?;
        let polys = geojson::read(file).with_context(|| format!("reading {}", fields.display()))?;
        let annotated = annotate(&polys, &report).context("stage annotate failed")?;
        let path = out.join("fields.geojson");
        write_geojson(&annotated, &labels.grid().crs, &path)?;
        m.output("fields", &path);
    }
    m.write(out)
}

fn scene_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    rows: &'a [MetricsRow],
    pooled: Option<&'a MetricsRow>,
}

pub fn metrics(a: &MetricsArgs, jobs: usize) -> Result<()> {
    let mut m = RunManifest::new("metrics", jobs);
    let out = &a.common.out_dir;
    prepare(out)?;
    for (i, (p, t)) in a.pred.iter().zip(&a.truth).enumerate() {
        m.input(format!("pred[{i}]"), p);
        m.input(format!("truth[{i}]"), t);
    }
    let counts: Vec<ConfusionCounts> = a
        .pred
        .par_iter()
        .zip(&a.truth)
        .map(|(p, t)| -> Result<ConfusionCounts> {
            let pred = container::read_mask(p)
                .with_context(|| format!("reading prediction {}", p.display()))?;
            let truth = container::read_mask(t)
                .with_context(|| format!("reading truth {}", t.display()))?;
            confusion(&pred, &truth)
                .with_context(|| format!("comparing {} with {}", p.display(), t.display()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(counts.len());
    for (c, p) in counts.iter().zip(&a.pred) {
        let r = report(*c).with_context(|| format!("scoring {}", p.display()))?;
        rows.push(MetricsRow {
            method: a.method.clone(),
            scene: scene_name(p),
            report: r,
        });
    }
    let pooled = if rows.len() > 1 {
        Some(MetricsRow {
            method: a.method.clone(),
            scene: "pooled".into(),
            report: report(counts.iter().copied().sum()).context("scoring pooled counts")?,
        })
    } else {
        None
    };

    let csv = out.join("metrics.csv");
    let mut w = create(&csv)?;
    let all: Vec<MetricsRow> = rows.iter().cloned().chain(pooled.clone()).collect();
    write_csv(&all, &mut w)?;
    w.flush()?;
    m.output("metrics_csv", &csv);

    let json = out.join("metrics.json");
    let mut text = serde_json::to_string_pretty(&MetricsDocument {
        rows: &rows,
        pooled: pooled.as_ref(),
    })?;
    text.push('\n');
    fs::write(&json, text).with_context(|| format!("writing {}", json.display()))?;
    m.output("metrics_json", &json);
    m.write(out)
}

pub fn transitions(a: &TransitionsArgs, jobs: usize) -> Result<()> {
    let mut m = RunManifest::new("transitions", jobs);
    let out = &a.common.out_dir;
    prepare(out)?;
    m.param("gaps", &a.gaps);
    m.param("connectivity", a.connectivity);
    let mut masks = Vec::with_capacity(a.years.len());
    for (year, path) in &a.years {
        m.input(format!("mask[{year}]"), path);
        let mask = container::read_mask(path)
            .with_context(|| format!("reading {year} mask {}", path.display()))?;
        let mut ym = YearMask::new(*year, mask);
        if let Some((_, fields)) = a.fields.iter().find(|(y, _)| y == year) {
            m.input(format!("fields[{year}]"), fields);
            let file =
                File::open(fields).with_context(|| format!("opening {}", fields.display()))?;
            let polys =
                geojson::read(file).with_context(|| format!("reading {}", fields.display()))?;
            ym = ym.with_field_count(geojson::wheat_field_count(&polys));
        }
        masks.push(ym);
    }
    if let Some((y, _)) = a
        .fields
        .iter()
        .find(|(y, _)| !a.years.iter().any(|(my, _)| my == y))
    {
        anyhow::bail!("--fields given for {y} but no --year mask for it");
    }
    let flows = flow_table(&masks, &a.gaps).context("stage flow_table failed")?;
    masks.sort_by_key(|ym| ym.year);
    let summaries = masks
        .par_iter()
        .map(|ym| {
            year_summary(ym, a.connectivity).with_context(|| format!("summarizing {}", ym.year))
        })
        .collect::<Result<Vec<_>>>()?;

    let flows_path = out.join("flows.csv");
    let mut w = create(&flows_path)?;
    write_flow_csv(&flows, &mut w)?;
    w.flush()?;
    m.output("flows", &flows_path);

    let years_path = out.join("years.csv");
    let mut w = create(&years_path)?;
    write_summary_csv(&summaries, &mut w)?;
    w.flush()?;
    m.output("years", &years_path);
    m.write(out)
}

pub fn synth(a: &SynthArgs, jobs: usize) -> Result<()> {
    let mut m = RunManifest::new("synth", jobs);
    let out = &a.common.out_dir;
    prepare(out)?;
    let spec = SceneSpec {
        rng_seed: a.seed,
        width: a.width,
        height: a.height,
        n_parcels: a.parcels,
        boundary_width: a.boundary_width,
        noise_sigma: a.noise,
        wheat_fraction: a.wheat_fraction,
        pixel_size: a.pixel_size,
    };
    m.param("scene", &spec);
    let scene = generate(&spec).context("stage synth failed")?;
    let put = |m: &mut RunManifest, name: &str| -> PathBuf {
        let p = out.join(name);
        m.output(name, &p);
        p
    };
    container::write_raster(&scene.field_scores, put(&mut m, "field_scores"))?;
    container::write_raster(&scene.boundary_scores, put(&mut m, "boundary_scores"))?;
    container::write_raster(&scene.wheat_scores, put(&mut m, "wheat_scores"))?;
    container::write_labels(&scene.truth_labels, put(&mut m, "truth_labels"))?;
    container::write_mask(&scene.truth_wheat, put(&mut m, "truth_wheat"))?;

    let mut polys = polygonize(&scene.truth_labels).context("polygonizing truth")?;
    for p in &mut polys {
        p.properties.is_wheat = Some(scene.parcel_is_wheat[p.id as usize - 1]);
    }
    let truth = put(&mut m, "truth.geojson");
    write_geojson(&polys, &scene.truth_labels.grid().crs, &truth)?;
    m.write(out)
}

pub fn inspect<W: Write>(a: &InspectArgs, out: &mut W) -> Result<()> {
    let header =
        container::read_header(&a.path).with_context(|| format!("reading {}", a.path.display()))?;
    writeln!(out, "size        {} x {}", header.width, header.height)?;
    writeln!(out, "dtype       {}", header.dtype)?;
    writeln!(out, "geotransform {:?}", header.geotransform)?;
    writeln!(out, "crs         {}", header.crs)?;
    writeln!(out, "nodata      {}", header.nodata_count)?;
    match container::read_any(&a.path).with_context(|| format!("reading {}", a.path.display()))? {
        RasterData::Scores(r) => {
            let valid: Vec<f32> = (0..r.grid().len()).filter_map(|i| r.get(i)).collect();
            if valid.is_empty() {
                writeln!(out, "values      none valid")?;
            } else {
                let min = valid.iter().copied().fold(f32::INFINITY, f32::min);
                let max = valid.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let mean = valid.iter().map(|&v| f64::from(v)).sum::<f64>() / valid.len() as f64;
                writeln!(out, "min         {min}")?;
                writeln!(out, "max         {max}")?;
                writeln!(out, "mean        {mean}")?;
            }
        }
        RasterData::Labels(l) => {
            let distinct = l.distinct_labels().into_iter().filter(|&v| v != 0).count();
            let labelled = l.labels().iter().filter(|&&v| v != 0).count();
            writeln!(
                out,
                "labels      {distinct} distinct non-zero, max {}",
                l.max_label()
            )?;
            writeln!(out, "labelled    {labelled} pixels")?;
        }
    }
    Ok(())
}
