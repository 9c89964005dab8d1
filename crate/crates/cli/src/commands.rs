use std::path::{Path, PathBuf};

use mbf_core::fixtures::{build_fixture, synthetic_models, FixtureSpec};
use mbf_core::fsutil::write_atomic;
use mbf_core::generate::{
    index_csv, interpolate, latent_arithmetic, load_latent, perturb, sample_latents, save_latent, GeneratorModel,
    IndexRow, LatentVector, Sign,
};
use mbf_core::imaging::{metaball_image, write_report, GSConfig, KFloor};
use mbf_core::metaball::{load_model, mesh_surface, save_model, voxelize_like, MetaballModel};
use mbf_core::metrics::{grid_metrics, metrics_csv, shape_metrics, ShapeMetrics};
use mbf_core::vae::{log_csv, save_weights, train, TrainConfig};
use mbf_core::voxel::{load_voxel_grid, save_voxel_grid, GridFormat, VoxelGrid};
use rayon::prelude::*;

use crate::run::{check_inputs, check_output, ensure_dir, stem, usage, worker_count, Failure, Outcome, RunConfig};
use crate::{Cli, Command, FitArgs, FixtureArgs, GenerateArgs, LatentCommand, MeshArgs, MetricsArgs, TrainArgs};

pub fn run(cli: &Cli) -> Outcome {
    let workers = worker_count(cli.workers)?;
    // Fails only if a pool already exists, which cannot happen here.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    let ctx = Ctx { seed: cli.seed, workers };
    match &cli.command {
        Command::Fixture(a) => fixture(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Mesh(a) => mesh(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Latent(c) => latent(&ctx, c),
    }
}

struct Ctx {
    seed: u64,
    workers: usize,
}

impl Ctx {
    fn config(&self, subcommand: &str, inputs: &[&PathBuf], outputs: &[&Path]) -> RunConfig {
        let mut c = RunConfig::new(subcommand, self.seed, self.workers);
        c.inputs = inputs.iter().map(|p| p.to_path_buf()).collect();
        c.outputs = outputs.iter().map(|p| p.to_path_buf()).collect();
        c
    }
}

/// Keeps going past failed items and reports the most severe at the end.
#[derive(Default)]
struct Failures(Vec<Failure>);

impl Failures {
    fn note(&mut self, what: &Path, f: Failure) {
        eprintln!("mbf: {}: {f}", what.display());
        self.0.push(f);
    }

    fn finish(self, total: usize) -> Outcome {
        let count = self.0.len();
        match self.0.into_iter().max_by_key(Failure::code) {
            None => Ok(()),
            Some(Failure::Usage(_)) => Err(usage(format!("{count} of {total} inputs failed"))),
            Some(Failure::Numeric(_)) => Err(Failure::Numeric(format!("{count} of {total} inputs failed"))),
        }
    }
}

fn load_grid(path: &Path) -> Outcome<VoxelGrid> {
    Ok(load_voxel_grid(path, GridFormat::from_path(path))?)
}

fn is_model(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "mball")
}

fn fixture(ctx: &Ctx, a: &FixtureArgs) -> Outcome {
    check_output(&a.output)?;
    let mut spec = FixtureSpec::new(a.kind, a.radius);
    spec.voxel_size = a.voxel_size;
    spec.seed = ctx.seed;
    spec.ratio = a.ratio.unwrap_or(spec.ratio);
    spec.offset = a.offset.unwrap_or(spec.offset);
    spec.rounding = a.rounding.unwrap_or(spec.rounding);
    spec.dims = match a.dims.as_slice() {
        [] => None,
        &[n] => Some([n; 3]),
        &[x, y, z] => Some([x, y, z]),
        _ => return Err(usage("--dims takes one or three values")),
    };
    let f = build_fixture(&spec)?;
    save_voxel_grid(&f.grid, &a.output, GridFormat::from_path(&a.output))?;
    ctx.config("fixture", &[], &[&a.output]).save_beside(&a.output)?;
    eprintln!("{}: {} of {} voxels occupied", a.output.display(), f.grid.occupied_count(), f.grid.len());
    Ok(())
}

struct FitOutcome {
    id: String,
    model: MetaballModel,
    report: String,
    row: String,
    diverged: bool,
}

fn fit(ctx: &Ctx, a: &FitArgs) -> Outcome {
    check_inputs(&a.inputs)?;
    ensure_dir(&a.output_dir)?;
    let config = GSConfig {
        generations: a.generations,
        learning_rate: a.learning_rate,
        adam_fraction: a.adam_fraction,
        k_floor: KFloor::Relative(a.k_floor),
        seed: ctx.seed,
        ..GSConfig::default()
    };
    config.validate()?;
    let results: Vec<Outcome<FitOutcome>> = a
        .inputs
        .par_iter()
        .map(|path| {
            let grid = load_grid(path)?;
            let r = metaball_image(&grid, a.n, &config)?;
            let iou = grid.iou(&voxelize_like(&r.model, &grid, r.frame_offset))?;
            let id = stem(path);
            let row = format!(
                "{id},{},{:?},{:?},{:?},{},{}",
                r.n, r.initial_loss, r.final_loss, iou, r.diverged, r.exhausted
            );
            Ok(FitOutcome {
                model: r.model.translated(r.frame_offset),
                report: write_report(&r),
                row,
                diverged: r.diverged,
                id,
            })
        })
        .collect();

    let mut failures = Failures::default();
    let mut csv = String::from("id,n,initial_loss,final_loss,iou,diverged,exhausted\n");
    let mut outputs = Vec::new();
    for (path, result) in a.inputs.iter().zip(results) {
        let o = match result {
            Ok(o) => o,
            Err(f) => {
                failures.note(path, f);
                continue;
            }
        };
        let model_path = a.output_dir.join(format!("{}.mball", o.id));
        let report_path = a.output_dir.join(format!("{}.report.txt", o.id));
        save_model(&o.model, &model_path)?;
        write_atomic(&report_path, o.report.as_bytes())?;
        csv.push_str(&o.row);
        csv.push('\n');
        eprintln!("{}: {}", path.display(), o.row);
        if o.diverged {
            failures.note(path, Failure::Numeric("gradient search diverged".into()));
        }
        outputs.push(model_path);
        outputs.push(report_path);
    }
    let summary = a.output_dir.join("fit.csv");
    write_atomic(&summary, csv.as_bytes())?;
    outputs.push(summary);
    let inputs: Vec<&PathBuf> = a.inputs.iter().collect();
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    ctx.config("fit", &inputs, &outs).save(&a.output_dir.join("run.json"))?;
    failures.finish(a.inputs.len())
}

fn metrics(ctx: &Ctx, a: &MetricsArgs) -> Outcome {
    check_inputs(&a.inputs)?;
    check_output(&a.output)?;
    let results: Vec<Outcome<ShapeMetrics>> = a
        .inputs
        .par_iter()
        .map(|path| {
            if is_model(path) {
                Ok(shape_metrics(&load_model(path)?, a.resolution)?)
            } else {
                Ok(grid_metrics(&load_grid(path)?)?)
            }
        })
        .collect();
    let mut failures = Failures::default();
    let mut rows = Vec::new();
    for (path, r) in a.inputs.iter().zip(results) {
        match r {
            Ok(m) => rows.push((stem(path), m)),
            Err(f) => failures.note(path, f),
        }
    }
    let csv = metrics_csv(rows.iter().map(|(id, m)| (id.as_str(), m)));
    write_atomic(&a.output, csv.as_bytes())?;
    let inputs: Vec<&PathBuf> = a.inputs.iter().collect();
    ctx.config("metrics", &inputs, &[&a.output]).save_beside(&a.output)?;
    failures.finish(a.inputs.len())
}

fn mesh(ctx: &Ctx, a: &MeshArgs) -> Outcome {
    check_inputs([&a.input])?;
    check_output(&a.output)?;
    let mesh = if is_model(&a.input) {
        mesh_surface(&load_model(&a.input)?, a.resolution)?
    } else {
        mbf_core::metrics::grid_surface(&load_grid(&a.input)?)?
    };
    mesh.save(&a.output)?;
    ctx.config("mesh", &[&a.input], &[&a.output]).save_beside(&a.output)?;
    Ok(())
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Outcome {
    check_inputs(&a.inputs)?;
    check_output(&a.output)?;
    if let Some(log) = &a.log {
        check_output(log)?;
    }
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        steps: a.steps,
        seed: ctx.seed,
        rotations_per_particle: a.rotations,
        shuffles_per_particle: a.shuffles,
        leaky_slope: a.leaky_slope,
        warmup_steps: a.warmup,
        target_radius: a.target_radius,
        encoder: a.encoder.clone().unwrap_or(defaults.encoder),
        latent: a.latent,
        decoder: a.decoder.clone().unwrap_or(defaults.decoder),
    };
    config.validate()?;
    let models = match a.synthetic {
        Some(count) => {
            let models = synthetic_models(count, a.synthetic_points, ctx.seed)?;
            if let Some(dir) = &a.save_dataset {
                ensure_dir(dir)?;
                for (i, m) in models.iter().enumerate() {
                    save_model(m, &dir.join(format!("parent_{i:04}.mball")))?;
                }
            }
            models
        }
        None if a.inputs.is_empty() => return Err(usage("train needs input models or --synthetic")),
        None => a.inputs.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?,
    };
    let trained = train(&models, &config)?;
    save_weights(&a.output, &trained.network, &trained.scaler)?;
    let mut outputs = vec![a.output.as_path()];
    if let Some(log) = &a.log {
        write_atomic(log, log_csv(&trained.log).as_bytes())?;
        outputs.push(log);
    }
    let inputs: Vec<&PathBuf> = a.inputs.iter().collect();
    ctx.config("train", &inputs, &outputs).save_beside(&a.output)?;
    if let (Some(first), Some(last)) = (trained.log.first(), trained.log.last()) {
        eprintln!(
            "{} steps: reconstruction {:.4} -> {:.4}, distribution {:.4} -> {:.4}",
            trained.log.len(),
            first.reconstruction,
            last.reconstruction,
            first.distribution,
            last.distribution
        );
    }
    if trained.diverged {
        return Err(Failure::Numeric("training diverged; kept the last finite weights".into()));
    }
    Ok(())
}

fn load_generator(weights: &Path, k_floor: f64) -> Outcome<GeneratorModel> {
    let mut g = GeneratorModel::load(weights)?;
    g.k_floor = KFloor::Relative(k_floor);
    Ok(g)
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> Outcome {
    check_inputs([&a.weights])?;
    ensure_dir(&a.output_dir)?;
    let g = load_generator(&a.weights, a.k_floor)?;
    let latents = sample_latents(g.latent_dim(), a.count, ctx.seed);
    let decoded = latents.par_iter().map(|z| g.decode(z)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(a.count);
    let mut outputs = Vec::new();
    let mut clamped = 0;
    for (i, p) in decoded.iter().enumerate() {
        let id = format!("{}_{i:04}", a.prefix);
        let model_path = a.output_dir.join(format!("{id}.mball"));
        let latent_path = a.output_dir.join(format!("{id}.latent"));
        save_model(&p.model, &model_path)?;
        save_latent(&p.z, &latent_path)?;
        clamped += p.clamped;
        rows.push(IndexRow { id, seed: ctx.seed, edit: format!("sample {i}") });
        outputs.extend([model_path, latent_path]);
    }
    let index = a.output_dir.join("index.csv");
    write_atomic(&index, index_csv(&rows).as_bytes())?;
    outputs.push(index);
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    ctx.config("generate", &[&a.weights], &outs).save(&a.output_dir.join("run.json"))?;
    eprintln!("{} particles, {clamped} weights raised to the floor", a.count);
    Ok(())
}

/// Writes the decoded model of `z` (and optionally its mesh).
fn write_decoded(g: &GeneratorModel, z: &LatentVector, model_path: &Path, mesh: Option<(&Path, usize)>) -> Outcome {
    let p = g.decode(z)?;
    if p.clamped > 0 {
        eprintln!("{}: {} weights raised to the floor", model_path.display(), p.clamped);
    }
    save_model(&p.model, model_path)?;
    if let Some((path, resolution)) = mesh {
        mesh_surface(&p.model, resolution)?.save(path)?;
    }
    Ok(())
}

fn latent(ctx: &Ctx, c: &LatentCommand) -> Outcome {
    match c {
        LatentCommand::Encode { weights, input, output } => {
            check_inputs([weights, input])?;
            check_output(output)?;
            let g = load_generator(weights, 1e-8)?;
            save_latent(&g.encode(&load_model(input)?)?, output)?;
            ctx.config("latent encode", &[weights, input], &[output]).save_beside(output)
        }
        LatentCommand::Decode { weights, input, output, mesh } => {
            check_inputs([weights, input])?;
            check_output(output)?;
            if let Some(m) = &mesh.mesh {
                check_output(m)?;
            }
            let g = load_generator(weights, 1e-8)?;
            let z = load_latent(input)?;
            write_decoded(&g, &z, output, mesh.mesh.as_deref().map(|m| (m, mesh.resolution)))?;
            ctx.config("latent decode", &[weights, input], &[output]).save_beside(output)
        }
        LatentCommand::Interp { weights, z1, z2, alphas, output_dir, meshes, resolution } => {
            check_inputs([weights, z1, z2])?;
            ensure_dir(output_dir)?;
            let g = load_generator(weights, 1e-8)?;
            let (a, b) = (load_latent(z1)?, load_latent(z2)?);
            let mut rows = Vec::new();
            let mut outputs = Vec::new();
            for (i, &alpha) in alphas.iter().enumerate() {
                let z = interpolate(&a, &b, alpha)?;
                let id = format!("interp_{i:02}");
                let model_path = output_dir.join(format!("{id}.mball"));
                let mesh_path = output_dir.join(format!("{id}.obj"));
                save_latent(&z, &output_dir.join(format!("{id}.latent")))?;
                write_decoded(&g, &z, &model_path, meshes.then_some((mesh_path.as_path(), *resolution)))?;
                rows.push(IndexRow {
                    id,
                    seed: ctx.seed,
                    edit: format!("interp {} {} {alpha:?}", z1.display(), z2.display()),
                });
                outputs.push(model_path);
            }
            let index = output_dir.join("index.csv");
            write_atomic(&index, index_csv(&rows).as_bytes())?;
            outputs.push(index);
            let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
            ctx.config("latent interp", &[weights, z1, z2], &outs).save(&output_dir.join("run.json"))
        }
        LatentCommand::Add { z1, z2, plus, minus, output, decode } => {
            let plus: Vec<&PathBuf> = z1.iter().chain(z2).chain(plus).collect();
            let all: Vec<&PathBuf> = plus.iter().copied().chain(minus).chain(&decode.weights).collect();
            check_inputs(all.iter().copied())?;
            check_output(output)?;
            let mut terms = Vec::new();
            for p in &plus {
                terms.push((Sign::Plus, load_latent(p)?));
            }
            for p in minus {
                terms.push((Sign::Minus, load_latent(p)?));
            }
            let refs: Vec<(Sign, &LatentVector)> = terms.iter().map(|(s, z)| (*s, z)).collect();
            let z = latent_arithmetic(&refs)?;
            save_latent(&z, output)?;
            decode_if_asked(decode, &z)?;
            ctx.config("latent add", &all, &[output]).save_beside(output)
        }
        LatentCommand::Perturb { input, sigma, output, decode } => {
            let all: Vec<&PathBuf> = std::iter::once(input).chain(&decode.weights).collect();
            check_inputs(all.iter().copied())?;
            check_output(output)?;
            let z = perturb(&load_latent(input)?, *sigma, ctx.seed)?;
            save_latent(&z, output)?;
            decode_if_asked(decode, &z)?;
            ctx.config("latent perturb", &all, &[output]).save_beside(output)
        }
    }
}

fn decode_if_asked(d: &crate::DecodeOut, z: &LatentVector) -> Outcome {
    if let (Some(w), Some(out)) = (&d.weights, &d.decode_output) {
        check_output(out)?;
        write_decoded(&load_generator(w, 1e-8)?, z, out, None)?;
    }
    Ok(())
}
