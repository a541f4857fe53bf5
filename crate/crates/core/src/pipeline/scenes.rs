//! Deterministic analytic test scenes. Liquid scenes produce SDF frames in
//! cell units (negative inside); the smoke scene produces densities.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, ScalarField};
use crate::interpolation::DataKind;

pub const MIN_RESOLUTION: usize = 32;
/// Cells per frame for the moving scenes.
pub const SPEED: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scene {
    TranslatingCircle,
    FallingDrop,
    Star,
    QuadrantStar,
    GaussianSmoke,
}

impl Scene {
    pub const ALL: [Scene; 5] = [
        Scene::TranslatingCircle,
        Scene::FallingDrop,
        Scene::Star,
        Scene::QuadrantStar,
        Scene::GaussianSmoke,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scene::TranslatingCircle => "translating-circle",
            Scene::FallingDrop => "falling-drop",
            Scene::Star => "star",
            Scene::QuadrantStar => "quadrant-star",
            Scene::GaussianSmoke => "gaussian-smoke",
        }
    }

    pub fn kind(self) -> DataKind {
        match self {
            Scene::GaussianSmoke => DataKind::SmokeDensity,
            _ => DataKind::LiquidSdf,
        }
    }
}

impl FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scene> {
        Scene::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownScene(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    /// Shift along x in cells; this is the parameter that varies between samples.
    pub offset: f64,
    pub seed: u64,
    /// 2, or 3 for the translating circle.
    pub spatial_axes: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            offset: 0.0,
            seed: 0,
            spatial_axes: 2,
        }
    }
}

pub fn gen_scene(scene: Scene, resolution: usize, frames: usize, params: &SceneParams) -> Result<Vec<ScalarField>> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} below {MIN_RESOLUTION}"
        )));
    }
    if frames == 0 {
        return Err(Error::InvalidArgument("need at least one frame".into()));
    }
    if params.spatial_axes != 2 && !(params.spatial_axes == 3 && scene == Scene::TranslatingCircle) {
        return Err(Error::InvalidArgument(format!(
            "{} supports 2 spatial axes, not {}",
            scene.name(),
            params.spatial_axes
        )));
    }
    let res = resolution as f64;
    let dims = Dims::new(&vec![resolution; params.spatial_axes])?;
    let out = match scene {
        Scene::TranslatingCircle => (0..frames)
            .map(|t| {
                let cx = 0.3 * res + params.offset + SPEED * t as f64;
                ScalarField::from_fn(dims.clone(), |c| {
                    let mut d2 = (c[0] as f64 - cx).powi(2);
                    for &ci in &c[1..] {
                        d2 += (ci as f64 - 0.5 * res).powi(2);
                    }
                    d2.sqrt() - 0.15 * res
                })
            })
            .collect(),
        Scene::FallingDrop => {
            let drop = FallingDrop::new(res, frames, params.offset);
            (0..frames)
                .map(|t| ScalarField::from_fn(dims.clone(), |c| drop.sdf(c[0] as f64, c[1] as f64, t as f64)))
                .collect()
        }
        Scene::Star => (0..frames)
            .map(|t| {
                let star = Star::new(0.3 * res + params.offset + SPEED * t as f64, 0.5 * res, res);
                ScalarField::from_fn(dims.clone(), |c| star.sdf(c[0] as f64, c[1] as f64))
            })
            .collect(),
        Scene::QuadrantStar => {
            let star = Star::new(0.75 * res + params.offset, 0.25 * res, res);
            let frame = ScalarField::from_fn(dims.clone(), |c| star.sdf(c[0] as f64, c[1] as f64));
            vec![frame; frames]
        }
        Scene::GaussianSmoke => smoke(&dims, res, frames, params),
    };
    Ok(out)
}

/// Five-pointed star polygon with an exact signed distance.
#[derive(Clone, Debug)]
pub struct Star {
    vertices: Vec<(f64, f64)>,
}

impl Star {
    pub fn new(cx: f64, cy: f64, res: f64) -> Star {
        let outer = 0.12 * res;
        let inner = 0.05 * res;
        let vertices = (0..10)
            .map(|k| {
                let r = if k % 2 == 0 { outer } else { inner };
                let a = PI / 2.0 + k as f64 * PI / 5.0;
                (cx + r * a.cos(), cy + r * a.sin())
            })
            .collect();
        Star { vertices }
    }

    pub fn sdf(&self, x: f64, y: f64) -> f64 {
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        let mut inside = false;
        for i in 0..n {
            let (ax, ay) = self.vertices[i];
            let (bx, by) = self.vertices[(i + 1) % n];
            let (ex, ey) = (bx - ax, by - ay);
            let (wx, wy) = (x - ax, y - ay);
            let h = ((wx * ex + wy * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            best = best.min((wx - h * ex).hypot(wy - h * ey));
            if (ay > y) != (by > y) && x < ax + (y - ay) * ex / ey {
                inside = !inside;
            }
        }
        if inside {
            -best
        } else {
            best
        }
    }
}

/// Drop falling into a pool, with a bump on the surface after impact.
struct FallingDrop {
    pool: f64,
    radius: f64,
    x: f64,
    y0: f64,
    gravity: f64,
    impact: f64,
    bump: f64,
    width: f64,
}

impl FallingDrop {
    fn new(res: f64, frames: usize, offset: f64) -> FallingDrop {
        let pool = 0.25 * res;
        let radius = 0.08 * res;
        let y0 = 0.75 * res;
        let impact = (0.6 * (frames as f64 - 1.0)).max(1.0);
        FallingDrop {
            pool,
            radius,
            x: 0.5 * res + offset,
            y0,
            gravity: 2.0 * (y0 - radius - pool) / (impact * impact),
            impact,
            bump: 0.06 * res,
            width: 0.06 * res,
        }
    }

    fn drop_center(&self, t: f64) -> f64 {
        self.y0 - 0.5 * self.gravity * t * t
    }

    fn surface(&self, x: f64, t: f64) -> (f64, f64) {
        if t <= self.impact {
            return (self.pool, 0.0);
        }
        let s = (t - self.impact) / (0.25 * self.impact);
        let amp = self.bump * s * (1.0 - s).exp();
        let dx = x - self.x;
        let g = (-dx * dx / (2.0 * self.width * self.width)).exp();
        (self.pool + amp * g, -amp * g * dx / (self.width * self.width))
    }

    fn sdf(&self, x: f64, y: f64, t: f64) -> f64 {
        let (h, slope) = self.surface(x, t);
        let pool = (y - h) / (1.0 + slope * slope).sqrt();
        let drop = (x - self.x).hypot(y - self.drop_center(t)) - self.radius;
        pool.min(drop)
    }
}

fn smoke(dims: &Dims, res: f64, frames: usize, params: &SceneParams) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let raw: Vec<f64> = (0..dims.cell_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = ScalarField::new(dims.clone(), raw).expect("finite noise").blurred(1.5);
    let scale = noise.max_value().max(-noise.min_value()).max(1e-12);
    let sigma = 0.1 * res;
    let x0 = 0.5 * res + params.offset;
    let y0 = 0.3 * res;
    (0..frames)
        .map(|t| {
            let rise = SPEED * t as f64;
            ScalarField::from_fn(dims.clone(), |c| {
                let (x, y) = (c[0] as f64, c[1] as f64);
                let r2 = (x - x0).powi(2) + (y - y0 - rise).powi(2);
                // Texture moves with the blob.
                let n = noise.sample(&[x - params.offset, y - rise]) / scale;
                (-r2 / (2.0 * sigma * sigma)).exp() * (1.0 + 0.3 * n)
            })
        })
        .collect()
}
