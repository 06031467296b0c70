use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::HeightGrid;
use crate::error::{Error, Result};

/// Procedural terrain families. Heights are in metres, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainRecipe {
    Flat,
    /// Plane rising at `angle_deg` towards `azimuth_deg` (0 = +x).
    Ramp {
        angle_deg: f64,
        #[serde(default)]
        azimuth_deg: f64,
    },
    /// Raised-cosine ridge of half-width `width` whose crest runs through
    /// `offset` along `azimuth_deg`.
    Ridge {
        height: f64,
        width: f64,
        #[serde(default = "default_ridge_azimuth")]
        azimuth_deg: f64,
        #[serde(default)]
        offset: [f64; 2],
    },
    /// Gaussian-filtered white noise scaled to a peak of `amplitude`.
    SmoothedNoise { amplitude: f64, correlation_length: f64 },
    /// Sum of several recipes.
    Composite { layers: Vec<TerrainRecipe> },
}

fn default_ridge_azimuth() -> f64 {
    90.0
}

fn default_extent() -> f64 {
    40.0
}

fn default_resolution() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub recipe: TerrainRecipe,
    /// Square side length in metres; the grid is centred on the world origin.
    #[serde(default = "default_extent")]
    pub extent: f64,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

impl TerrainSpec {
    pub fn new(recipe: TerrainRecipe) -> Self {
        Self { recipe, extent: default_extent(), resolution: default_resolution() }
    }
}

pub fn generate_synthetic_terrain(spec: &TerrainSpec, seed: u64) -> Result<HeightGrid> {
    if !(spec.extent > 0.0) || !(spec.resolution > 0.0) {
        return Err(Error::Parameter("terrain extent and resolution must be positive".into()));
    }
    validate(&spec.recipe)?;
    let n = (spec.extent / spec.resolution).round() as usize + 1;
    let origin = [-0.5 * spec.extent, -0.5 * spec.extent];
    let mut heights = vec![0.0; n * n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    accumulate(&spec.recipe, origin, spec.resolution, n, &mut heights, &mut rng);
    HeightGrid::new(origin, spec.resolution, n, n, heights)
}

fn validate(recipe: &TerrainRecipe) -> Result<()> {
    match recipe {
        TerrainRecipe::Flat => Ok(()),
        TerrainRecipe::Ramp { angle_deg, .. } => {
            if !(angle_deg.abs() < 90.0) {
                return Err(Error::Parameter(format!("ramp angle {angle_deg} out of (-90, 90)")));
            }
            Ok(())
        }
        TerrainRecipe::Ridge { height, width, .. } => {
            if !(*height > 0.0) || !(*width > 0.0) {
                return Err(Error::Parameter("ridge height and width must be positive".into()));
            }
            Ok(())
        }
        TerrainRecipe::SmoothedNoise { amplitude, correlation_length } => {
            if !(*amplitude > 0.0) || !(*correlation_length > 0.0) {
                return Err(Error::Parameter("noise amplitude and correlation length must be positive".into()));
            }
            Ok(())
        }
        TerrainRecipe::Composite { layers } => layers.iter().try_for_each(validate),
    }
}

fn accumulate(recipe: &TerrainRecipe, origin: [f64; 2], res: f64, n: usize, out: &mut [f64], rng: &mut ChaCha8Rng) {
    let coord = |k: usize| (origin[0] + (k % n) as f64 * res, origin[1] + (k / n) as f64 * res);
    match recipe {
        TerrainRecipe::Flat => {}
        TerrainRecipe::Ramp { angle_deg, azimuth_deg } => {
            let slope = angle_deg.to_radians().tan();
            let (s, c) = azimuth_deg.to_radians().sin_cos();
            for (k, h) in out.iter_mut().enumerate() {
                let (x, y) = coord(k);
                *h += slope * (c * x + s * y);
            }
        }
        TerrainRecipe::Ridge { height, width, azimuth_deg, offset } => {
            let (s, c) = azimuth_deg.to_radians().sin_cos();
            for (k, h) in out.iter_mut().enumerate() {
                let (x, y) = coord(k);
                let d = -s * (x - offset[0]) + c * (y - offset[1]);
                if d.abs() < *width {
                    *h += height * 0.5 * (1.0 + (PI * d / width).cos());
                }
            }
        }
        TerrainRecipe::SmoothedNoise { amplitude, correlation_length } => {
            let noise: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
            let smooth = gaussian_blur(&noise, n, correlation_length / res);
            let peak = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.0 {
                for (h, v) in out.iter_mut().zip(smooth) {
                    *h += amplitude * v / peak;
                }
            }
        }
        TerrainRecipe::Composite { layers } => {
            for layer in layers {
                accumulate(layer, origin, res, n, out, rng);
            }
        }
    }
}

/// Separable Gaussian filter with clamped borders; `sigma` in cells.
fn gaussian_blur(src: &[f64], n: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let pass = |input: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for (t, w) in kernel.iter().enumerate() {
                    let d = t as isize - radius;
                    let (ii, jj) = if horizontal {
                        (i as isize, (j as isize + d).clamp(0, n as isize - 1))
                    } else {
                        ((i as isize + d).clamp(0, n as isize - 1), j as isize)
                    };
                    acc += w * input[ii as usize * n + jj as usize];
                }
                out[i * n + j] = acc / norm;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::compute_gradient_map;

    #[test]
    fn flat_is_zero_with_default_geometry() {
        let h = generate_synthetic_terrain(&TerrainSpec::new(TerrainRecipe::Flat), 1).unwrap();
        assert_eq!(h.rows(), 81);
        assert_eq!(h.cols(), 81);
        assert_eq!(h.resolution(), 0.5);
        assert_eq!(h.origin(), [-20.0, -20.0]);
        assert!(h.heights().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ramp_gradient_is_tan_angle() {
        let spec = TerrainSpec::new(TerrainRecipe::Ramp { angle_deg: 15.0, azimuth_deg: 0.0 });
        let g = compute_gradient_map(&generate_synthetic_terrain(&spec, 0).unwrap()).unwrap();
        let expect = 15f64.to_radians().tan();
        for i in 1..80 {
            for j in 1..80 {
                let (gx, gy) = g.at(i, j);
                assert!((gx - expect).abs() < 1e-9);
                assert!(gy.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = TerrainSpec::new(TerrainRecipe::SmoothedNoise { amplitude: 0.8, correlation_length: 3.0 });
        let a = generate_synthetic_terrain(&spec, 42).unwrap();
        let b = generate_synthetic_terrain(&spec, 42).unwrap();
        let c = generate_synthetic_terrain(&spec, 43).unwrap();
        assert!(a.heights().iter().zip(b.heights()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.heights(), c.heights());
        let peak = a.heights().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        let bad = TerrainSpec::new(TerrainRecipe::SmoothedNoise { amplitude: 0.0, correlation_length: 1.0 });
        assert!(matches!(generate_synthetic_terrain(&bad, 0), Err(Error::Parameter(_))));
        let mut spec = TerrainSpec::new(TerrainRecipe::Flat);
        spec.extent = -1.0;
        assert!(generate_synthetic_terrain(&spec, 0).is_err());
        let ridge = TerrainSpec::new(TerrainRecipe::Composite {
            layers: vec![TerrainRecipe::Flat, TerrainRecipe::Ridge { height: 1.0, width: 0.0, azimuth_deg: 0.0, offset: [0.0, 0.0] }],
        });
        assert!(generate_synthetic_terrain(&ridge, 0).is_err());
    }

    #[test]
    fn ridge_peaks_on_crest() {
        let spec = TerrainSpec::new(TerrainRecipe::Ridge { height: 1.5, width: 4.0, azimuth_deg: 90.0, offset: [2.0, 0.0] });
        let h = generate_synthetic_terrain(&spec, 0).unwrap();
        // crest runs along +y through x = 2
        assert!((h.height_at(crate::geometry::Point2::new(2.0, 5.0)).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(h.height_at(crate::geometry::Point2::new(6.5, 5.0)).unwrap(), 0.0);
    }

    #[test]
    fn recipe_json_shape() {
        let r: TerrainRecipe = serde_json::from_str(r#"{"kind":"ramp","angle_deg":10}"#).unwrap();
        assert_eq!(r, TerrainRecipe::Ramp { angle_deg: 10.0, azimuth_deg: 0.0 });
    }
}
