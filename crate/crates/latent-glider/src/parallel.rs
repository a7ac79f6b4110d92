//! Thread-parallel drivers over the pure core kernels. Work is split per
//! item and collected in input order, so results do not depend on the
//! number of threads.

use latent_glider_core::flightsim::{evaluate_design_with, AeroProfile, DesignTask, Evaluation, SimOptions};
use latent_glider_core::learner::{decode, denormalize, LatentVector, LearnerParams};
use latent_glider_core::mesh::MeshIndex;
use latent_glider_core::optimizer::Evaluator;
use latent_glider_core::sdf::{check_encloses, signed_distance, GridSpec, SdfError, SdfGrid};
use latent_glider_core::TriangleMesh;
use rayon::prelude::*;

/// Same values as the sequential `mesh_to_sdf_on`, computed across threads.
pub fn mesh_to_sdf_par(mesh: &TriangleMesh, spec: GridSpec) -> Result<SdfGrid, SdfError> {
    check_encloses(mesh, &spec)?;
    let index = MeshIndex::new(mesh);
    let values = (0..spec.node_count())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| signed_distance(&index, spec.node_position(i)))
        .collect();
    SdfGrid::new(spec, values)
}

/// Decodes genomes to lattices and flies them: the optimizer's objective.
pub struct LatentEvaluator<'a> {
    pub params: &'a LearnerParams,
    pub d_max: f64,
    pub task: DesignTask,
    pub table: &'a [AeroProfile],
    pub options: SimOptions,
}

impl LatentEvaluator<'_> {
    pub fn design(&self, genome: &[f64]) -> Result<SdfGrid, String> {
        let z = LatentVector::from_flat(genome, self.params.config()).map_err(|e| e.to_string())?;
        let grid = decode(&z, self.params).map_err(|e| e.to_string())?;
        Ok(denormalize(&grid, self.d_max))
    }

    pub fn evaluation(&self, genome: &[f64]) -> Result<Evaluation, String> {
        let sdf = self.design(genome)?;
        evaluate_design_with(&sdf, &self.task, self.table, &self.options).map_err(|e| e.to_string())
    }
}

impl Evaluator for LatentEvaluator<'_> {
    fn evaluate(&self, genome: &[f64]) -> Result<f64, String> {
        self.evaluation(genome).map(|e| e.height)
    }

    fn evaluate_batch(&self, genomes: &[&[f64]]) -> Vec<Result<f64, String>> {
        genomes.par_iter().map(|g| self.evaluate(g)).collect()
    }
}

/// Evaluates many lattices at once, in input order.
pub fn evaluate_grids(
    grids: &[SdfGrid],
    task: &DesignTask,
    table: &[AeroProfile],
    options: &SimOptions,
) -> Vec<Result<Evaluation, String>> {
    grids.par_iter().map(|g| evaluate_design_with(g, task, table, options).map_err(|e| e.to_string())).collect()
}

/// Installs the global worker pool; `0` keeps rayon's default of one thread
/// per core. Only the first call in a process takes effect.
pub fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}
