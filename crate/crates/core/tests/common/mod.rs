#![allow(dead_code)]

use koopnav::koopman::{GradientMatrix, InputMatrix, KoopmanModel, ModelFamily, OutputMatrix, SystemMatrix};
use koopnav::pipeline::{collect_dataset, load_stack, train, ExperimentConfig};
use koopnav::terrain::{build_layer_stack, generate_synthetic_terrain, LayerStack, TerrainRecipe, TerrainSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ramp_recipe() -> TerrainRecipe {
    TerrainRecipe::Ramp { angle_deg: 8.0, azimuth_deg: 90.0 }
}

pub fn ridge_recipe() -> TerrainRecipe {
    TerrainRecipe::Ridge { height: 1.0, width: 4.0, azimuth_deg: 45.0, offset: [0.0, 0.0] }
}

/// Cross-slope ramp with an oblique ridge across the default mission.
pub fn ramp_ridge_recipe() -> TerrainRecipe {
    TerrainRecipe::Composite {
        layers: vec![
            ramp_recipe(),
            TerrainRecipe::Ridge { height: 0.8, width: 4.0, azimuth_deg: 45.0, offset: [0.0, 0.0] },
        ],
    }
}

pub fn config(recipe: TerrainRecipe) -> ExperimentConfig {
    ExperimentConfig { terrain: recipe, ..ExperimentConfig::default() }
}

pub fn stack_for(recipe: TerrainRecipe, seed: u64) -> LayerStack {
    let h = generate_synthetic_terrain(&TerrainSpec::new(recipe), seed).unwrap();
    build_layer_stack(h, &[], 15f64.to_radians().tan(), 25f64.to_radians().tan()).unwrap()
}

/// Collects the configured dataset and fits the family on it.
pub fn trained(cfg: &ExperimentConfig) -> (LayerStack, ModelFamily) {
    let stack = load_stack(cfg, None).unwrap();
    let logs: Vec<_> = collect_dataset(cfg, &stack).unwrap().into_iter().map(|(_, log)| log.rows).collect();
    let (family, _) = train(cfg, &logs, false).unwrap();
    (stack, family)
}

fn uniform<const R: usize, const C: usize>(rng: &mut impl Rng, scale: f64) -> nalgebra::SMatrix<f64, R, C> {
    nalgebra::SMatrix::from_fn(|_, _| rng.random_range(-scale..scale))
}

/// Random model whose `A` has spectral radius at most `radius`.
pub fn random_model(rng: &mut impl Rng, radius: f64) -> KoopmanModel {
    let raw: SystemMatrix = uniform(rng, 1.0);
    let rho = raw.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max);
    let a = raw * (radius * rng.random_range(0.5..1.0) / rho.max(1e-12));
    let b: InputMatrix = uniform(rng, 1.0);
    let bg: GradientMatrix = uniform(rng, 1.0);
    let c: OutputMatrix = uniform(rng, 1.0);
    KoopmanModel { a, b, bg, c, bin_index: 0, kappa_range: (-0.8, -0.6) }
}

pub fn spectral_radius(a: &SystemMatrix) -> f64 {
    a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}
