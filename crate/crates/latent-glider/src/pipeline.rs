//! The design loop as commands: make or preprocess a corpus, train the
//! shape learner, move between lattices and latents, fly designs and search
//! latent space. Each command writes its artifacts plus a manifest into an
//! output directory.

use std::cell::RefCell;
use std::path::{Path, PathBuf};

use latent_glider_core::flightsim::{
    design_mesh, evaluate_design_with, match_reference_aircraft, measure_geometry, simulate_launch_with, FlightOutcome,
    GliderGeometry, Landing, SimOptions,
};
use latent_glider_core::learner::{
    decode, denormalize, encode_dataset, normalize_sdf, train_with, EpochLoss, LatentVector, NormalizedGrid,
};
use latent_glider_core::mesh::{align_mesh, clean_mesh, MeshIndex};
use latent_glider_core::optimizer::{evolve_with, init_population, Evaluator, EvolutionRun, GenerationStats, Population};
use latent_glider_core::sdf::{default_epsilon, extract_surface, perturb_zero_nodes, GridSpec, SdfGrid};
use latent_glider_core::synth::{glider_mesh, sample_corpus};
use latent_glider_core::TriangleMesh;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::checkpoint::{read_checkpoint, write_checkpoint, CheckpointFile};
use crate::formats::manifest::RunManifest;
use crate::formats::mesh::{load_mesh, write_obj};
use crate::formats::population::write_snapshot;
use crate::formats::sdf::{read_sdf, write_sdf};
use crate::formats::tables::{read_latents, write_latents, write_rows, CsvLog, GenerationRow, LossRow, TrajectoryRow};
use crate::parallel::{mesh_to_sdf_par, LatentEvaluator};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types always serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Files in `dir` whose extension (case-insensitive) is one of `exts`,
/// sorted by name.
pub fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

// ---------------------------------------------------------------- corpus

#[derive(Debug, Clone, Serialize)]
pub struct CorpusSummary {
    pub meshes: Vec<PathBuf>,
}

/// Samples `corpus_size` parametric gliders and writes them as OBJ meshes
/// plus their parameters (`gliders.json`).
pub fn synth_corpus(config: &RunConfig, out: &Path) -> Result<CorpusSummary> {
    create_dir(out)?;
    let manifest = RunManifest::new("synth-corpus", config.to_json(), vec![config.seed]);
    let gliders = sample_corpus(config.corpus_size, config.seed);
    let meshes: Vec<TriangleMesh> = gliders
        .par_iter()
        .map(|g| glider_mesh(g, config.mesh_cells).map_err(Error::from))
        .collect::<Result<_>>()?;
    let mut paths = Vec::with_capacity(meshes.len());
    for (i, mesh) in meshes.iter().enumerate() {
        let p = out.join(format!("glider_{i:04}.obj"));
        write_obj(&p, mesh)?;
        paths.push(p);
    }
    let params = out.join("gliders.json");
    write_json(&params, &gliders)?;
    let mut artifacts = paths.clone();
    artifacts.push(params);
    manifest.finish(out, &artifacts)?;
    info!("wrote {} synthetic gliders to {}", paths.len(), out.display());
    Ok(CorpusSummary { meshes: paths })
}

// ------------------------------------------------------------ preprocess

/// Clean, align and sample one mesh on the design lattice.
pub fn mesh_to_design_sdf(mesh: &TriangleMesh, spec: GridSpec) -> Result<SdfGrid> {
    let cleaned = clean_mesh(mesh)?;
    let (aligned, _) = align_mesh(&cleaned)?;
    let sdf = mesh_to_sdf_par(&aligned, spec)?;
    Ok(perturb_zero_nodes(&sdf, default_epsilon(&spec)))
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessSummary {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<(PathBuf, String)>,
}

/// Converts every OBJ/STL file in `input` to an `SDF1` lattice in `out`.
/// Files that fail are logged and skipped; the command fails only when
/// nothing could be converted.
pub fn preprocess(config: &RunConfig, input: &Path, out: &Path) -> Result<PreprocessSummary> {
    let files = list_files(input, &["obj", "stl"])?;
    if files.is_empty() {
        return Err(Error::Data(format!("no .obj or .stl files in {}", input.display())));
    }
    create_dir(out)?;
    let spec = config.lattice()?;
    let mut manifest = RunManifest::new("preprocess", config.to_json(), vec![]);
    let results: Vec<Result<SdfGrid>> =
        files.par_iter().map(|f| load_mesh(f).and_then(|m| mesh_to_design_sdf(&m, spec))).collect();
    let mut summary = PreprocessSummary { written: Vec::new(), skipped: Vec::new() };
    let mut seen = std::collections::BTreeSet::new();
    for (file, result) in files.iter().zip(results) {
        manifest.add_input(file)?;
        let name = stem(file);
        match result {
            Ok(_) if !seen.insert(name.clone()) => {
                warn!("skipping {}: another input already produced {name}.sdf", file.display());
                summary.skipped.push((file.clone(), "duplicate name".into()));
            }
            Ok(grid) => {
                let p = out.join(format!("{name}.sdf"));
                write_sdf(&p, &grid)?;
                summary.written.push(p);
            }
            Err(e) => {
                warn!("skipping {}: {e}", file.display());
                summary.skipped.push((file.clone(), e.to_string()));
            }
        }
    }
    if summary.written.is_empty() {
        return Err(Error::Data(format!("all {} input meshes failed", files.len())));
    }
    manifest.finish(out, &summary.written)?;
    info!("preprocessed {} meshes, skipped {}", summary.written.len(), summary.skipped.len());
    Ok(summary)
}

/// All `.sdf` files of a directory with their names, sorted.
pub fn load_sdf_dir(dir: &Path) -> Result<Vec<(String, SdfGrid)>> {
    let files = list_files(dir, &["sdf"])?;
    if files.is_empty() {
        return Err(Error::Data(format!("no .sdf files in {}", dir.display())));
    }
    files.iter().map(|f| Ok((stem(f), read_sdf(f)?))).collect()
}

fn normalized_corpus(grids: &[(String, SdfGrid)], d_max: f64, expect: Option<GridSpec>) -> Result<Vec<NormalizedGrid>> {
    let spec = expect.unwrap_or(grids[0].1.spec);
    grids
        .iter()
        .map(|(name, g)| {
            if g.spec.dims != spec.dims {
                return Err(Error::Data(format!("{name}: lattice {:?} differs from {:?}", g.spec.dims, spec.dims)));
            }
            Ok(normalize_sdf(g, d_max))
        })
        .collect()
}

// ----------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub history: Vec<EpochLoss>,
}

/// Trains the learner on a directory of lattices. The loss history streams
/// to `loss.csv`; periodic checkpoints go to `checkpoints/`. On divergence
/// the last good parameters are saved before the error is returned.
pub fn train(config: &RunConfig, sdf_dir: &Path, out: &Path) -> Result<TrainSummary> {
    let corpus = load_sdf_dir(sdf_dir)?;
    let lattice = corpus[0].1.spec;
    let d_max = config.d_max_cells * lattice.spacing;
    let mut learner = config.learner.clone();
    learner.resolution = lattice.dims;
    let data = normalized_corpus(&corpus, d_max, None)?;
    create_dir(out)?;
    let ck_dir = out.join("checkpoints");
    create_dir(&ck_dir)?;
    let mut manifest = RunManifest::new("train", config.to_json(), vec![learner.seed]);
    for f in list_files(sdf_dir, &["sdf"])? {
        manifest.add_input(&f)?;
    }

    let loss_path = out.join("loss.csv");
    let mut log = CsvLog::create(&loss_path)?;
    let mut log_error = None;
    let epochs = learner.epochs;
    let outcome = train_with(&data, &learner, |e| {
        if log_error.is_none() {
            log_error = log.push(&LossRow::from(e)).err();
        }
        if e.epoch == 1 || e.epoch % 10 == 0 || e.epoch == epochs {
            info!("epoch {}/{epochs}: reconstruction {:.3} kl {:.3}", e.epoch, e.reconstruction, e.kl);
        }
    });
    if let Some(e) = log_error {
        return Err(e);
    }
    let mut artifacts = vec![loss_path];
    match outcome {
        Ok(run) => {
            for ck in &run.checkpoints {
                let p = ck_dir.join(format!("epoch_{:04}.vsl", ck.epoch));
                write_checkpoint(&p, &CheckpointFile { params: ck.params.clone(), d_max, epoch: ck.epoch })?;
                artifacts.push(p);
            }
            let checkpoint = out.join("checkpoint.vsl");
            write_checkpoint(&checkpoint, &CheckpointFile { params: run.params, d_max, epoch: run.history.len() })?;
            artifacts.push(checkpoint.clone());
            manifest.finish(out, &artifacts)?;
            Ok(TrainSummary { checkpoint, history: run.history })
        }
        Err(failure) => {
            if let Some(params) = failure.last_good {
                let p = out.join("last_good.vsl");
                let epoch = failure.epoch.saturating_sub(1);
                write_checkpoint(&p, &CheckpointFile { params, d_max, epoch })?;
                artifacts.push(p);
                manifest.finish(out, &artifacts)?;
            }
            Err(failure.error.into())
        }
    }
}

// ------------------------------------------------------- encode / decode

/// Posterior means of every lattice in `sdf_dir`, written to `latents.csv`.
pub fn encode(config: &RunConfig, checkpoint: &Path, sdf_dir: &Path, out: &Path) -> Result<PathBuf> {
    let ck = read_checkpoint(checkpoint)?;
    let corpus = load_sdf_dir(sdf_dir)?;
    let data = normalized_corpus(&corpus, ck.d_max, Some(ck.params.lattice))?;
    let latents = encode_dataset(&data, &ck.params)?;
    create_dir(out)?;
    let rows: Vec<(String, Vec<f64>)> =
        corpus.iter().zip(&latents).map(|((name, _), z)| (name.clone(), z.flatten())).collect();
    let path = out.join("latents.csv");
    write_latents(&path, &rows)?;
    let mut manifest = RunManifest::new("encode", config.to_json(), vec![]);
    manifest.add_input(checkpoint)?;
    manifest.finish(out, std::slice::from_ref(&path))?;
    Ok(path)
}

/// Decodes every latent row to an `SDF1` lattice and, when it encloses
/// solid, a surfaced OBJ mesh.
pub fn decode_latents(config: &RunConfig, checkpoint: &Path, latents: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let ck = read_checkpoint(checkpoint)?;
    let rows = read_latents(latents)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{} holds no latent vectors", latents.display())));
    }
    create_dir(out)?;
    let decoded: Vec<Result<(SdfGrid, Option<TriangleMesh>)>> = rows
        .par_iter()
        .map(|(_, z)| {
            let z = LatentVector::from_flat(z, ck.params.config())?;
            let sdf = denormalize(&decode(&z, &ck.params)?, ck.d_max);
            let mesh = design_mesh(&sdf)?;
            Ok((sdf, mesh))
        })
        .collect();
    let mut artifacts = Vec::new();
    for ((name, _), result) in rows.iter().zip(decoded) {
        let (sdf, mesh) = result?;
        let p = out.join(format!("{name}.sdf"));
        write_sdf(&p, &sdf)?;
        artifacts.push(p);
        match mesh {
            Some(m) => {
                let p = out.join(format!("{name}.obj"));
                write_obj(&p, &m)?;
                artifacts.push(p);
            }
            None => warn!("{name}: decoded lattice holds no solid"),
        }
    }
    let mut manifest = RunManifest::new("decode", config.to_json(), vec![]);
    manifest.add_input(checkpoint)?;
    manifest.add_input(latents)?;
    manifest.finish(out, &artifacts)?;
    Ok(artifacts)
}

// -------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub height: f64,
    pub outcome: String,
    pub feasible: bool,
    pub profile: Option<String>,
    pub wing_area: Option<f64>,
    pub forward_area: Option<f64>,
    pub mass: Option<f64>,
    pub flight_time: Option<f64>,
}

fn outcome_name(o: FlightOutcome) -> &'static str {
    match o {
        FlightOutcome::Reached => "reached",
        FlightOutcome::Grounded => "grounded",
        FlightOutcome::Timeout => "timeout",
    }
}

/// Flies one design (an `SDF1` lattice or an OBJ/STL mesh, which is cleaned,
/// aligned and scaled to the design box) and writes `trajectory.csv` and
/// `simulation.json`.
pub fn simulate(config: &RunConfig, input: &Path, out: &Path) -> Result<SimulationReport> {
    let task = config.task.design_task()?;
    let table = config.profile_table()?;
    let options = SimOptions { record_trace: true, ..SimOptions::default() };
    let is_sdf = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("sdf"));
    let (geometry, profile, landing): (Option<GliderGeometry>, Option<String>, Option<Landing>) = if is_sdf {
        let grid = read_sdf(input)?;
        let e = evaluate_design_with(&grid, &task, &table, &options)?;
        (e.geometry, e.profile.map(|i| table[i].name.clone()), e.landing)
    } else {
        let mesh = clean_mesh(&load_mesh(input)?)?;
        let (aligned, _) = align_mesh(&mesh)?;
        let scaled = aligned.map_vertices(|v| v * task.box_size);
        let g = measure_geometry(&scaled, &task)?;
        let p = match_reference_aircraft(&g, &table)?;
        let landing = simulate_launch_with(&task, &g, p, &options)?;
        (Some(g), Some(p.name.clone()), Some(landing))
    };
    create_dir(out)?;
    let mut artifacts = Vec::new();
    if let Some(l) = &landing {
        let p = out.join("trajectory.csv");
        write_rows(&p, l.trace.iter().map(TrajectoryRow::from))?;
        artifacts.push(p);
    }
    let report = SimulationReport {
        height: landing.as_ref().map_or(0.0, |l| l.height),
        outcome: landing.as_ref().map_or("infeasible", |l| outcome_name(l.outcome)).into(),
        feasible: landing.is_some(),
        profile,
        wing_area: geometry.map(|g| g.wing_area),
        forward_area: geometry.map(|g| g.forward_area),
        mass: geometry.map(|g| g.mass),
        flight_time: landing.as_ref().map(|l| l.last.t),
    };
    let p = out.join("simulation.json");
    write_json(&p, &report)?;
    artifacts.push(p);
    let mut manifest = RunManifest::new("simulate", config.to_json(), vec![]);
    manifest.add_input(input)?;
    manifest.finish(out, &artifacts)?;
    info!("{}: height {:.3} m ({})", input.display(), report.height, report.outcome);
    Ok(report)
}

// ------------------------------------------------------------- roundtrip

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTripMetrics {
    pub triangles: usize,
    pub boundary_edges: usize,
    pub cell_diagonal: f64,
    /// Reconstructed vertices to the original surface.
    pub forward_max: f64,
    pub forward_mean: f64,
    /// Original vertices to the reconstructed surface.
    pub backward_max: f64,
    pub backward_mean: f64,
}

impl RoundTripMetrics {
    pub fn max_deviation(&self) -> f64 {
        self.forward_max.max(self.backward_max)
    }
}

fn one_sided(from: &TriangleMesh, to: &TriangleMesh) -> (f64, f64) {
    let index = MeshIndex::new(to);
    let d: Vec<f64> = from.vertices.par_iter().map(|&v| index.distance(v)).collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    (max, d.iter().sum::<f64>() / d.len().max(1) as f64)
}

/// Samples `mesh` on a lattice of `resolution` nodes along its longest axis
/// (two empty cells of padding), surfaces it again and measures the
/// symmetric vertex-to-surface deviation. With `perturb` off, lattice nodes
/// lying exactly on the surface surface as an explicit degeneracy error.
pub fn roundtrip_mesh(mesh: &TriangleMesh, resolution: usize, perturb: bool) -> Result<(TriangleMesh, RoundTripMetrics)> {
    let spec = GridSpec::padded_around(&mesh.bounds(), [resolution; 3], 2)?;
    let mut sdf = mesh_to_sdf_par(mesh, spec)?;
    if perturb {
        sdf = perturb_zero_nodes(&sdf, default_epsilon(&spec));
    }
    let surface = extract_surface(&sdf)?;
    if surface.mesh.is_empty() {
        return Err(Error::Data("reconstructed surface is empty".into()));
    }
    let (forward_max, forward_mean) = one_sided(&surface.mesh, mesh);
    let (backward_max, backward_mean) = one_sided(mesh, &surface.mesh);
    let metrics = RoundTripMetrics {
        triangles: surface.mesh.triangles.len(),
        boundary_edges: surface.mesh.boundary_edge_count(),
        cell_diagonal: spec.cell_diagonal(),
        forward_max,
        forward_mean,
        backward_max,
        backward_mean,
    };
    Ok((surface.mesh, metrics))
}

pub fn roundtrip(config: &RunConfig, input: &Path, out: &Path, perturb: bool) -> Result<RoundTripMetrics> {
    let mesh = load_mesh(input)?;
    let (rebuilt, metrics) = roundtrip_mesh(&mesh, config.resolution, perturb)?;
    create_dir(out)?;
    let obj = out.join("roundtrip.obj");
    write_obj(&obj, &rebuilt)?;
    let json = out.join("roundtrip.json");
    write_json(&json, &metrics)?;
    let mut manifest = RunManifest::new("roundtrip", config.to_json(), vec![]);
    manifest.add_input(input)?;
    manifest.finish(out, &[obj, json])?;
    info!(
        "round trip: {} triangles, {} boundary edges, max deviation {:.4} m ({:.2} cell diagonals)",
        metrics.triangles,
        metrics.boundary_edges,
        metrics.max_deviation(),
        metrics.max_deviation() / metrics.cell_diagonal
    );
    Ok(metrics)
}

// -------------------------------------------------------------- optimize

/// One row of the tolerance table: the fraction of the population within
/// `delta` metres of the target, before and after the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceRow {
    pub delta: f64,
    pub initial: f64,
    pub r#final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopDesign {
    pub rank: usize,
    pub height: f64,
    pub fitness: f64,
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub target: f64,
    pub corpus_size: usize,
    pub corpus_min_height: f64,
    pub corpus_max_height: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub failures: usize,
    pub stopped_early: bool,
    pub table: Vec<ToleranceRow>,
    pub initial_median_fitness: f64,
    pub final_median_fitness: f64,
    pub best_height: f64,
    pub max_height: f64,
    /// Last generation that improved the best fitness.
    pub last_improvement: usize,
    /// True when the best design stopped improving before the run ended
    /// without reaching the target.
    pub plateaued: bool,
    pub top: Vec<TopDesign>,
}

impl OptimizeReport {
    /// The tolerance table as Markdown.
    pub fn table_markdown(&self) -> String {
        let mut s = format!("Target height {:.2} m\n\n| δ (m) | Initial | Final |\n|---|---|---|\n", self.target);
        for r in &self.table {
            s.push_str(&format!("| {} | {:.0}% | {:.0}% |\n", r.delta, 100.0 * r.initial, 100.0 * r.r#final));
        }
        s
    }
}

/// Everything the search needs once the corpus is encoded and flown.
pub struct SearchSetup {
    pub corpus: Vec<(Vec<f64>, f64)>,
    pub names: Vec<String>,
}

/// Encodes a normalized corpus and flies each decoded reconstruction, so
/// initial heights come from the same objective the search optimizes.
/// Designs that fail to evaluate are dropped with a warning.
pub fn score_corpus(
    names: &[String],
    data: &[NormalizedGrid],
    evaluator: &LatentEvaluator<'_>,
) -> Result<SearchSetup> {
    let latents = encode_dataset(data, evaluator.params)?;
    let genomes: Vec<Vec<f64>> = latents.iter().map(LatentVector::flatten).collect();
    let refs: Vec<&[f64]> = genomes.iter().map(Vec::as_slice).collect();
    let heights = evaluator.evaluate_batch(&refs);
    let mut setup = SearchSetup { corpus: Vec::new(), names: Vec::new() };
    for ((name, g), h) in names.iter().zip(genomes).zip(heights) {
        match h {
            Ok(h) if h.is_finite() => {
                setup.corpus.push((g, h));
                setup.names.push(name.clone());
            }
            Ok(_) => warn!("{name}: non-finite height, dropped from the corpus"),
            Err(e) => warn!("{name}: {e}, dropped from the corpus"),
        }
    }
    Ok(setup)
}

/// Runs the latent-space search from a scored corpus and writes the
/// generation log, population snapshots, top designs and the report into
/// `out`. The log and the latest snapshot are flushed even when the search
/// aborts.
pub fn run_search(
    config: &RunConfig,
    setup: &SearchSetup,
    evaluator: &LatentEvaluator<'_>,
    out: &Path,
) -> Result<(OptimizeReport, EvolutionRun, Vec<PathBuf>)> {
    let target = evaluator.task.target_height;
    let ga = &config.ga;
    create_dir(out)?;
    let pop_dir = out.join("populations");
    create_dir(&pop_dir)?;
    let (initial, _) = init_population(&setup.corpus, ga.population, target, ga.seed)?;

    let log_path = out.join("generations.csv");
    let log = RefCell::new(CsvLog::create(&log_path)?);
    let latest: RefCell<Option<Population>> = RefCell::new(None);
    let io_error: RefCell<Option<Error>> = RefCell::new(None);
    let initial_snapshot = pop_dir.join("generation_0000.pop");
    write_snapshot(&initial_snapshot, &initial)?;
    let result = evolve_with(initial, evaluator, target, ga, |pop: &Population, s: &GenerationStats| {
        if let Err(e) = log.borrow_mut().push(&GenerationRow::from(s)) {
            io_error.borrow_mut().get_or_insert(e);
        }
        if s.generation % 10 == 0 {
            info!(
                "generation {}: best {:.4} median {:.4} within 0.1 m {:.0}%",
                s.generation,
                s.best,
                s.median,
                100.0 * s.within_0_1
            );
        }
        *latest.borrow_mut() = Some(pop.clone());
    });
    let mut artifacts = vec![log_path, initial_snapshot];
    let run = match result {
        Ok(run) => run,
        Err(e) => {
            if let Some(pop) = latest.borrow().as_ref() {
                let p = pop_dir.join(format!("generation_{:04}.pop", pop.generation));
                write_snapshot(&p, pop)?;
            }
            return Err(e.into());
        }
    };
    if let Some(e) = io_error.into_inner() {
        return Err(e);
    }
    let final_snapshot = pop_dir.join(format!("generation_{:04}.pop", run.last.generation));
    write_snapshot(&final_snapshot, &run.last)?;
    artifacts.push(final_snapshot);

    // Top designs: distinct, successfully evaluated genomes by fitness.
    let mut ranked: Vec<_> = run.last.individuals.iter().filter(|i| !i.failed).collect();
    ranked.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    let mut seen = std::collections::BTreeSet::new();
    ranked.retain(|i| seen.insert(i.genome.iter().map(|v| v.to_bits()).collect::<Vec<_>>()));
    ranked.truncate(config.top_k);
    let designs_dir = out.join("designs");
    create_dir(&designs_dir)?;
    let meshes: Vec<Result<Option<TriangleMesh>>> = ranked
        .par_iter()
        .map(|ind| {
            let sdf = evaluator.design(&ind.genome).map_err(Error::Data)?;
            Ok(design_mesh(&sdf)?)
        })
        .collect();
    let mut top = Vec::new();
    for (rank, (ind, mesh)) in ranked.iter().zip(meshes).enumerate() {
        let mesh_path = match mesh? {
            Some(m) => {
                let p = designs_dir.join(format!("design_{:02}.obj", rank + 1));
                write_obj(&p, &m)?;
                artifacts.push(p.clone());
                Some(p)
            }
            None => None,
        };
        top.push(TopDesign { rank: rank + 1, height: ind.height, fitness: ind.fitness, mesh: mesh_path });
    }

    let first = &run.history[0];
    let last = run.history.last().unwrap_or(first);
    let mut best = f64::INFINITY;
    let mut last_improvement = 0;
    for s in &run.history {
        if s.best < best {
            best = s.best;
            last_improvement = s.generation;
        }
    }
    let heights = setup.corpus.iter().map(|c| c.1);
    let best_ind = run.last.best();
    let report = OptimizeReport {
        target,
        corpus_size: setup.corpus.len(),
        corpus_min_height: heights.clone().fold(f64::INFINITY, f64::min),
        corpus_max_height: heights.fold(f64::NEG_INFINITY, f64::max),
        generations: last.generation,
        evaluations: run.evaluations,
        failures: run.failures.len(),
        stopped_early: run.stopped_early,
        table: vec![
            ToleranceRow { delta: 0.1, initial: first.within_0_1, r#final: last.within_0_1 },
            ToleranceRow { delta: 0.5, initial: first.within_0_5, r#final: last.within_0_5 },
        ],
        initial_median_fitness: first.median,
        final_median_fitness: last.median,
        best_height: best_ind.map_or(0.0, |i| i.height),
        max_height: run.history.iter().map(|s| s.max_height).fold(0.0, f64::max),
        last_improvement,
        plateaued: !run.stopped_early && last_improvement < last.generation && best >= ga.stop_fitness,
        top,
    };
    let json = out.join("report.json");
    write_json(&json, &report)?;
    let md = out.join("report.md");
    std::fs::write(&md, report.table_markdown()).map_err(|e| Error::io(&md, e))?;
    artifacts.push(json);
    artifacts.push(md);
    if report.plateaued {
        info!(
            "best fitness {:.4} m has not improved since generation {}; the target may lie outside the reachable design space",
            best, report.last_improvement
        );
    }
    Ok((report, run, artifacts))
}

/// Encodes the corpus with a trained checkpoint, flies it, and searches
/// latent space for designs that clear the gap at the target height.
pub fn optimize(config: &RunConfig, checkpoint: &Path, sdf_dir: &Path, out: &Path) -> Result<OptimizeReport> {
    let ck = read_checkpoint(checkpoint)?;
    let corpus = load_sdf_dir(sdf_dir)?;
    let data = normalized_corpus(&corpus, ck.d_max, Some(ck.params.lattice))?;
    let names: Vec<String> = corpus.iter().map(|c| c.0.clone()).collect();
    let table = config.profile_table()?;
    let evaluator = LatentEvaluator {
        params: &ck.params,
        d_max: ck.d_max,
        task: config.task.design_task()?,
        table: &table,
        options: SimOptions::default(),
    };
    let setup = score_corpus(&names, &data, &evaluator)?;
    info!(
        "corpus of {} designs flies {:.2}..{:.2} m; target {:.2} m",
        setup.corpus.len(),
        setup.corpus.iter().map(|c| c.1).fold(f64::INFINITY, f64::min),
        setup.corpus.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
        evaluator.task.target_height
    );
    let mut manifest = RunManifest::new("optimize", config.to_json(), vec![config.ga.seed]);
    manifest.add_input(checkpoint)?;
    let (report, _, artifacts) = run_search(config, &setup, &evaluator, out)?;
    manifest.finish(out, &artifacts)?;
    Ok(report)
}
