//! Command implementations. Every command reads its declared inputs, writes
//! its outputs under the output directory and prints a JSON summary listing
//! the files it wrote.

use std::path::{Path, PathBuf};

use collab_retarget::contacts::{detect_contacts, CONTACT_THRESHOLD};
use collab_retarget::discriminator::{make_negative, pairs_from_negative, read_pairs, source_contacts, train, write_pairs, RankingModel};
use collab_retarget::geometry::{box_mesh_with_cell, compute_sdf, Bvh, TriMesh};
use collab_retarget::humanoid::{retarget_humanoid, HumanoidChain, JointPairMap};
use collab_retarget::metrics::evaluate;
use collab_retarget::morph::{build_morph_sequence_with, transfer_contacts, ContactCandidate, ContactConstraint};
use collab_retarget::motion::{generate_toy_scene, read_motion, write_motion, MotionSequence, ObjectTrack, ToyKind};
use collab_retarget::retarget::{retarget_human_motion, retarget_object_motion};
use collab_retarget::selection::{
    build_pool, read_pool, run_pipeline, select_for_sequence, sequence_report, write_pool, PipelineInputs,
};
use collab_retarget::Error;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{CliError, Command, ContactsCommand, DiscCommand, RetargetCommand, RunConfig, SdfCommand, ToyKindArg};

type CmdResult = Result<(), CliError>;

/// File stem used to name outputs derived from `path`.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &serde_json::to_string_pretty(value).expect("serializable"))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_mesh(path: &Path) -> Result<TriMesh, CliError> {
    let mesh = TriMesh::read_obj(path)?;
    mesh.validate()?;
    Ok(mesh)
}

fn read_named_motions(paths: &[PathBuf]) -> Result<Vec<(String, MotionSequence)>, CliError> {
    let mut out: Vec<(String, MotionSequence)> = Vec::with_capacity(paths.len());
    for p in paths {
        let name = stem(p);
        if out.iter().any(|(n, _)| *n == name) {
            return Err(Error::Invalid(format!("two motions named {name:?}")).into());
        }
        out.push((name, read_motion(p)?));
    }
    Ok(out)
}

fn validate_pool(pool: &[ContactCandidate], mesh: &TriMesh) -> Result<(), CliError> {
    for c in pool {
        c.validate(mesh)?;
    }
    Ok(())
}

fn summary(command: &str, outputs: &[PathBuf], extra: serde_json::Value) {
    let files: Vec<String> = outputs.iter().map(|p| p.display().to_string()).collect();
    let mut v = json!({ "command": command, "outputs": files });
    if let (Some(map), serde_json::Value::Object(extra)) = (v.as_object_mut(), extra) {
        map.extend(extra);
    }
    println!("{v}");
}

pub fn dispatch(command: &Command, cfg: &RunConfig, out: &Path) -> CmdResult {
    match command {
        Command::Sdf(SdfCommand::Build { mesh }) => sdf_build(mesh, cfg, out),
        Command::Morph { source, target, pool } => morph(source, target, pool.as_deref(), cfg, out),
        Command::Contacts(ContactsCommand::Extract { mesh, motions }) => contacts_extract(mesh, motions, out),
        Command::Retarget(RetargetCommand::Object { motion, target }) => retarget_object(motion, target, cfg, out),
        Command::Retarget(RetargetCommand::Human { motion, source_mesh, track, constraint, object_id }) => {
            retarget_human(motion, source_mesh, track, constraint, object_id.as_deref(), cfg, out)
        }
        Command::Disc(DiscCommand::GenPairs { mesh, motions }) => gen_pairs(mesh, motions, cfg, out),
        Command::Disc(DiscCommand::Train { pairs }) => disc_train(pairs, cfg, out),
        Command::Disc(DiscCommand::Score { model, motions }) => disc_score(model, motions, out),
        Command::Select { source_mesh, target_mesh, motion, track, pool, model } => {
            select(source_mesh, target_mesh, motion, track, pool, model, cfg, out)
        }
        Command::Pipeline { source_mesh, targets, motions, model } => pipeline(source_mesh, targets, motions, model, cfg, out),
        Command::Metrics { pred, gt, mesh } => metrics(pred, gt, mesh, out),
        Command::Humanoid { motion, chain, pairs } => humanoid(motion, chain.as_deref(), pairs.as_deref(), cfg, out),
        Command::ToyScene { kind, frames, half, cell, name, object_id } => {
            toy_scene(*kind, *frames, half, *cell, name.as_deref(), object_id.as_deref(), cfg, out)
        }
    }
}

fn sdf_build(mesh_path: &Path, cfg: &RunConfig, out: &Path) -> CmdResult {
    let mesh = read_mesh(mesh_path)?;
    let grid = compute_sdf(&mesh, cfg.sdf.padding * mesh.aabb().diagonal(), cfg.sdf.resolution)?;
    let path = out.join(format!("{}.sdf", stem(mesh_path)));
    grid.write(&path)?;
    summary("sdf build", &[path], json!({ "dims": grid.lattice.dims, "spacing": grid.spacing() }));
    Ok(())
}

fn morph(source: &Path, target: &Path, pool: Option<&Path>, cfg: &RunConfig, out: &Path) -> CmdResult {
    let (src, tgt) = (read_mesh(source)?, read_mesh(target)?);
    let seq = build_morph_sequence_with(&src, &tgt, cfg.morph.intermediates, cfg.morph.resolution)?;
    let mut outputs = Vec::new();
    for (i, step) in seq.steps.iter().enumerate() {
        let path = out.join(format!("morph_{i}.obj"));
        step.mesh.write_obj(&path)?;
        outputs.push(path);
    }
    let info = out.join("morph.json");
    write_json(
        &info,
        &json!({
            "intermediates": seq.n_intermediates,
            "source_weights": seq.weights,
            "spacing": seq.spacing(),
            "steps": outputs.iter().map(|p| stem(p)).collect::<Vec<_>>(),
        }),
    )?;
    outputs.push(info);
    if let Some(pool_path) = pool {
        let pool = read_pool(pool_path)?;
        validate_pool(&pool, &src)?;
        for (i, cand) in pool.iter().enumerate() {
            let path = out.join(format!("constraint_{i}.json"));
            transfer_contacts(cand, &seq)?.write(&path)?;
            outputs.push(path);
        }
    }
    summary("morph", &outputs, json!({}));
    Ok(())
}

fn contacts_extract(mesh_path: &Path, motions: &[PathBuf], out: &Path) -> CmdResult {
    let mesh = read_mesh(mesh_path)?;
    let sources = read_named_motions(motions)?;
    let pool = build_pool(&sources, &mesh);
    let path = out.join("pool.json");
    write_pool(&pool, &path)?;
    summary("contacts extract", &[path], json!({ "candidates": pool.len() }));
    Ok(())
}

fn retarget_object(motion: &Path, target: &Path, cfg: &RunConfig, out: &Path) -> CmdResult {
    let seq = read_motion(motion)?;
    let mesh = read_mesh(target)?;
    let p = cfg.pipeline();
    let res = retarget_object_motion(&seq.object, &mesh, &p.weights.object, &p.object_optim)?;
    let track_path = out.join(format!("{}.track.json", stem(motion)));
    let trace_path = out.join(format!("{}.object_trace.csv", stem(motion)));
    res.track.write(&track_path)?;
    write_text(&trace_path, &res.trace.to_csv())?;
    summary("retarget object", &[track_path, trace_path], json!({}));
    Ok(())
}

fn retarget_human(
    motion: &Path,
    source_mesh: &Path,
    track_path: &Path,
    constraint_path: &Path,
    object_id: Option<&str>,
    cfg: &RunConfig,
    out: &Path,
) -> CmdResult {
    let seq = read_motion(motion)?;
    let mesh = read_mesh(source_mesh)?;
    let track = ObjectTrack::read(track_path)?;
    let constraint = ContactConstraint::read(constraint_path)?;
    let masks = detect_contacts(&seq, &Bvh::new(&mesh), CONTACT_THRESHOLD);
    let p = cfg.pipeline();
    let res = retarget_human_motion(&seq, &track, &constraint, &masks, &p.weights.human, &p.human_optim)?;
    let result = MotionSequence {
        object: track,
        object_id: object_id.map(str::to_string).unwrap_or_else(|| stem(track_path)),
        ..seq.with_agents(res.agents)
    };
    let path = out.join(format!("{}.human.json", stem(motion)));
    let trace_path = out.join(format!("{}.human_trace.csv", stem(motion)));
    write_motion(&result, &path)?;
    write_text(&trace_path, &res.trace.to_csv())?;
    summary("retarget human", &[path, trace_path], json!({}));
    Ok(())
}

fn gen_pairs(mesh_path: &Path, motions: &[PathBuf], cfg: &RunConfig, out: &Path) -> CmdResult {
    let mesh = read_mesh(mesh_path)?;
    let sources = read_named_motions(motions)?;
    let p = cfg.pipeline();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jobs: Vec<(usize, u64)> = (0..sources.len())
        .flat_map(|s| (0..cfg.discriminator.negatives_per_sequence).map(move |_| s))
        .map(|s| (s, rng.next_u64()))
        .collect();
    let masks: Vec<_> = sources.iter().map(|(_, seq)| source_contacts(seq, &mesh).1).collect();
    let batches: Vec<_> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            let seq = &sources[s].1;
            let neg = make_negative(seq, &mesh, &cfg.noise, seed, &p.weights.human, &p.human_optim)?;
            Ok(pairs_from_negative(seq, &masks[s], &neg))
        })
        .collect::<Result<_, Error>>()?;
    let pairs: Vec<_> = batches.into_iter().flatten().collect();
    let path = out.join("pairs.json");
    write_pairs(&pairs, &path)?;
    summary("disc gen-pairs", &[path], json!({ "pairs": pairs.len(), "negatives": jobs.len() }));
    Ok(())
}

fn disc_train(pairs_path: &Path, cfg: &RunConfig, out: &Path) -> CmdResult {
    let pairs = read_pairs(pairs_path)?;
    let trained = train(&pairs, &cfg.train())?;
    let model_path = out.join("model.rnk");
    let loss_path = out.join("train_loss.csv");
    trained.model.write(&model_path)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in trained.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write_text(&loss_path, &csv)?;
    let accuracy = trained.model.ranking_accuracy(&pairs);
    summary("disc train", &[model_path, loss_path], json!({ "train_accuracy": accuracy }));
    Ok(())
}

fn disc_score(model_path: &Path, motions: &[PathBuf], out: &Path) -> CmdResult {
    let model = RankingModel::read(model_path)?;
    let sources = read_named_motions(motions)?;
    let scores: Vec<_> =
        sources.iter().map(|(name, seq)| json!({ "name": name, "score": model.score_sequence(seq) })).collect();
    let path = out.join("scores.json");
    write_json(&path, &scores)?;
    summary("disc score", &[path], json!({ "scores": scores }));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn select(
    source_mesh: &Path,
    target_mesh: &Path,
    motion: &Path,
    track_path: &Path,
    pool_path: &Path,
    model_path: &Path,
    cfg: &RunConfig,
    out: &Path,
) -> CmdResult {
    let (src, tgt) = (read_mesh(source_mesh)?, read_mesh(target_mesh)?);
    let seq = read_motion(motion)?;
    let track = ObjectTrack::read(track_path)?;
    let pool = read_pool(pool_path)?;
    validate_pool(&pool, &src)?;
    let model = RankingModel::read(model_path)?;
    let p = cfg.pipeline();
    let morph = build_morph_sequence_with(&src, &tgt, p.morph_intermediates, p.morph_resolution)?;
    let name = stem(motion);
    let outcome = select_for_sequence(&seq, &track, &pool, &morph, &model, &p);
    let report_path = out.join(format!("{name}.select.json"));
    write_json(&report_path, &sequence_report(&name, &outcome))?;
    let res = outcome?;
    let result = MotionSequence { object_id: stem(target_mesh), ..res.best.motion };
    let path = out.join(format!("{name}.json"));
    write_motion(&result, &path)?;
    summary("select", &[path, report_path], json!({ "score": res.best.score, "history": res.history }));
    Ok(())
}

fn pipeline(source_mesh: &Path, targets: &[PathBuf], motions: &[PathBuf], model_path: &Path, cfg: &RunConfig, out: &Path) -> CmdResult {
    let src = read_mesh(source_mesh)?;
    let sources = read_named_motions(motions)?;
    let model = RankingModel::read(model_path)?;
    let p = cfg.pipeline();
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    let mut succeeded = 0usize;
    let mut seen = Vec::new();
    for target in targets {
        let id = stem(target);
        if seen.contains(&id) {
            return Err(Error::Invalid(format!("two targets named {id:?}")).into());
        }
        seen.push(id.clone());
        let tgt = read_mesh(target)?;
        let inputs = PipelineInputs { source_mesh: &src, target_mesh: &tgt, target_id: &id, sources: &sources, model: &model };
        let run = run_pipeline(&inputs, &p)?;
        let dir = out.join(&id);
        create_dir(&dir)?;
        for ((name, _), motion) in sources.iter().zip(&run.motions) {
            if let Some(m) = motion {
                let path = dir.join(format!("{name}.json"));
                write_motion(m, &path)?;
                outputs.push(path);
                succeeded += 1;
            }
        }
        failures.extend(run.manifest.sequences.iter().filter_map(|s| s.error_kind.clone()));
        let manifest = dir.join("manifest.json");
        write_text(&manifest, &run.manifest.to_json())?;
        outputs.push(manifest);
    }
    summary("pipeline", &outputs, json!({ "motions": succeeded, "failures": failures.len() }));
    if succeeded == 0 {
        if failures.iter().all(|k| k == "all_candidates_rejected") {
            return Err(Error::AllCandidatesRejected.into());
        }
        return Err(Error::Invalid(format!("every sequence failed ({}); see the manifests", failures.join(", "))).into());
    }
    Ok(())
}

fn metrics(pred: &Path, gt: &Path, mesh_path: &Path, out: &Path) -> CmdResult {
    let (p, g) = (read_motion(pred)?, read_motion(gt)?);
    let mesh = read_mesh(mesh_path)?;
    let report = evaluate(&p, &g, &mesh, CONTACT_THRESHOLD)?;
    let json_path = out.join("metrics.json");
    let csv_path = out.join("metrics.csv");
    write_text(&json_path, &report.to_json())?;
    write_text(&csv_path, &report.to_csv())?;
    summary("metrics", &[json_path, csv_path], json!({ "report": report }));
    Ok(())
}

fn humanoid(motion: &Path, chain_path: Option<&Path>, pairs_path: Option<&Path>, cfg: &RunConfig, out: &Path) -> CmdResult {
    let seq = read_motion(motion)?;
    let chain = match chain_path {
        Some(p) => HumanoidChain::read(p)?,
        None => HumanoidChain::standard(),
    };
    chain.validate()?;
    let pairs = match pairs_path {
        Some(p) => JointPairMap::read(p, &chain)?,
        None => JointPairMap::standard(&chain)?,
    };
    let hcfg = cfg.humanoid();
    let results: Vec<_> = (0..2)
        .into_par_iter()
        .map(|a| retarget_humanoid(&seq.agents[a], &seq.bodies[a], &chain, &pairs, &hcfg))
        .collect::<Result<_, Error>>()?;
    let mut outputs = Vec::new();
    for (a, mut r) in results.into_iter().enumerate() {
        r.trajectory.fps = seq.fps;
        let path = out.join(format!("{}.agent{}.h4d.json", stem(motion), a + 1));
        r.trajectory.write(&path)?;
        outputs.push(path);
    }
    summary("humanoid", &outputs, json!({}));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn toy_scene(
    kind: ToyKindArg,
    frames: usize,
    half: &[f64],
    cell: f64,
    name: Option<&str>,
    object_id: Option<&str>,
    cfg: &RunConfig,
    out: &Path,
) -> CmdResult {
    let (kind, default_name) = match kind {
        ToyKindArg::Carry => (ToyKind::Carry, "carry"),
        ToyKindArg::Handover => (ToyKind::Handover, "handover"),
    };
    if half.len() != 3 || half.iter().any(|h| !(*h > 0.0 && h.is_finite())) || !(cell > 0.0 && cell.is_finite()) {
        return Err(CliError::Config { path: "--half/--cell".into(), message: "must be positive".into() });
    }
    let mesh = box_mesh_with_cell(collab_retarget::so3::Vec3::new(half[0], half[1], half[2]), cell);
    let name = name.unwrap_or(default_name);
    let mut seq = generate_toy_scene(kind, frames, &mesh, cfg.seed)?.sequence;
    seq.object_id = object_id.unwrap_or(name).to_string();
    let mesh_path = out.join(format!("{name}.obj"));
    let motion_path = out.join(format!("{name}.json"));
    mesh.write_obj(&mesh_path)?;
    write_motion(&seq, &motion_path)?;
    summary("toy-scene", &[mesh_path, motion_path], json!({}));
    Ok(())
}
