//! Oracles and fixtures shared by the integration tests and the acceptance
//! harness. Nothing here calls into the code under test for the quantity it
//! is checking.

#![allow(dead_code)]

use flof_core::deformation::{advect, error_metric, mismatch, Deformation};
use flof_core::flof::{flof, flof_with, register, MatchResult, Stages};
use flof_core::grid::{Dims, ScalarField, VectorField};
use flof_core::interpolation::{DataKind, ParameterSpace, Sample};
use flof_core::levelset::{assemble_raw, assemble_spacetime, iso_from_density, AssembleParams, SpaceTimeSdf};
use flof_core::levelset::DEFAULT_DENSITY_LEVEL;
use flof_core::optical_flow::FlofParams;
use flof_core::pipeline::scenes::{gen_scene, Scene, SceneParams, Star};

pub fn dims(e: &[usize]) -> Dims {
    Dims::new(e).unwrap()
}

pub fn single_threaded<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let pivot_row = a[col].clone();
            for (v, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn coords(d: &Dims, mut i: usize) -> Vec<usize> {
    d.extents()
        .iter()
        .map(|&e| {
            let c = i % e;
            i /= e;
            c
        })
        .collect()
}

fn is_interior(d: &Dims, i: usize) -> bool {
    coords(d, i).iter().zip(d.extents()).all(|(&c, &e)| c > 0 && c + 1 < e)
}

/// Central differences at an interior cell.
pub fn central_gradient(f: &ScalarField, i: usize) -> Vec<f64> {
    let d = f.dims();
    let mut stride = 1;
    let mut g = Vec::new();
    for &e in d.extents() {
        g.push(0.5 * (f.data()[i + stride] - f.data()[i - stride]));
        stride *= e;
    }
    g
}

/// The discrete flow energy: data term and Tikhonov term over interior
/// cells, smoothness over every grid edge touching an interior cell, with
/// the flow pinned to zero on boundary cells.
pub fn flow_energy(phi1: &ScalarField, phi2: &ScalarField, u: &[f64], beta_s: f64, beta_t: f64) -> f64 {
    let d = phi2.dims();
    let n = d.ndim();
    let cells = d.cell_count();
    let interior: Vec<bool> = (0..cells).map(|i| is_interior(d, i)).collect();
    let value = |i: usize, c: usize| if interior[i] { u[i * n + c] } else { 0.0 };
    let mut data = 0.0;
    let mut tikhonov = 0.0;
    let mut smooth = 0.0;
    for i in 0..cells {
        if interior[i] {
            let g = central_gradient(phi2, i);
            let r: f64 = (0..n).map(|c| g[c] * value(i, c)).sum::<f64>() + phi2.data()[i] - phi1.data()[i];
            data += r * r;
            tikhonov += (0..n).map(|c| value(i, c).powi(2)).sum::<f64>();
        }
        let ci = coords(d, i);
        let mut stride = 1;
        for (axis, &c) in ci.iter().enumerate() {
            if c + 1 < d.extent(axis) {
                let j = i + stride;
                if interior[i] || interior[j] {
                    smooth += (0..n).map(|c| (value(j, c) - value(i, c)).powi(2)).sum::<f64>();
                }
            }
            stride *= d.extent(axis);
        }
    }
    0.5 * data + 0.5 * beta_s * smooth + 0.5 * beta_t * tikhonov
}

pub fn interior_mask(d: &Dims) -> Vec<bool> {
    (0..d.cell_count()).map(|i| is_interior(d, i)).collect()
}

/// Per-cell sign mismatch indicator, written out independently of the library.
pub fn error_oracle(a: &ScalarField, b: &ScalarField) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&s1, &s2)| if (s1 >= 0.0) == (s2 >= 0.0) { 0.0 } else { (s1 - s2).abs().min(1.0) })
        .sum()
}

pub fn disc(d: &Dims, cx: f64, cy: f64, r: f64) -> ScalarField {
    ScalarField::from_fn(d.clone(), |c| (c[0] as f64 - cx).hypot(c[1] as f64 - cy) - r)
}

// Circle fixture: 64² frames, 32 of them, second input offset by 6 cells.

pub const CIRCLE_RES: usize = 64;
pub const CIRCLE_FRAMES: usize = 32;
pub const CIRCLE_OFFSET: f64 = 6.0;

pub fn circle_frames(offset: f64) -> Vec<ScalarField> {
    let p = SceneParams {
        offset,
        ..SceneParams::default()
    };
    gen_scene(Scene::TranslatingCircle, CIRCLE_RES, CIRCLE_FRAMES, &p).unwrap()
}

pub fn circle_pair() -> (SpaceTimeSdf, SpaceTimeSdf) {
    let p = AssembleParams::default();
    (
        assemble_spacetime(&circle_frames(0.0), &p).unwrap(),
        assemble_spacetime(&circle_frames(CIRCLE_OFFSET), &p).unwrap(),
    )
}

pub fn run_stages(a: &SpaceTimeSdf, b: &SpaceTimeSdf, params: &FlofParams, hierarchy: bool, projection: bool) -> MatchResult {
    flof_with(a, b, params, Stages { hierarchy, projection }).unwrap()
}

/// Warp `a` by `u` and score it against `b`.
pub fn post_warp_error(a: &ScalarField, b: &ScalarField, u: &VectorField) -> f64 {
    error_metric(&advect(a, u, 1.0).unwrap(), b).unwrap()
}

/// Sign indicator with the SDF's sign convention: -0.2 inside, 0.2 outside.
pub fn indicator(f: &ScalarField) -> ScalarField {
    f.map(|v| if v < 0.0 { -0.2 } else { 0.2 })
}

/// Registers the indicator images in place of the SDFs (for the flow solve,
/// the acceptance test and projection alike). The flow solve sees them with
/// the same range and orientation as a scaled SDF, inside +0.2.
pub fn indicator_registration(a: &SpaceTimeSdf, b: &SpaceTimeSdf, params: &FlofParams) -> MatchResult {
    let (ia, ib) = (indicator(&a.field), indicator(&b.field));
    let flip = |f: &ScalarField| f.map(|v| -v);
    register(&flip(&ia), &flip(&ib), &ia, &ib, params, Stages::default()).unwrap()
}

// Star quadrant fixture: a star in the bottom-right quadrant, to be moved
// left and then up into the top-left quadrant.

pub const STAR_RES: usize = 64;

pub struct StarFixture {
    pub source: ScalarField,
    pub target: ScalarField,
    pub left: VectorField,
    pub up: VectorField,
}

/// Error restricted to the top-left quadrant, where the star should end up.
pub fn target_quadrant_error(a: &ScalarField, target: &ScalarField) -> f64 {
    let half = STAR_RES / 2;
    let mut total = 0.0;
    for y in half..STAR_RES {
        for x in 0..half {
            total += mismatch(a.get(&[x, y]), target.get(&[x, y]));
        }
    }
    total
}

pub fn star_fixture() -> StarFixture {
    let d = dims(&[STAR_RES, STAR_RES]);
    let res = STAR_RES as f64;
    let half = res / 2.0;
    let source_star = Star::new(0.75 * res, 0.25 * res, res);
    let target_star = Star::new(0.25 * res, 0.75 * res, res);
    let source = ScalarField::from_fn(d.clone(), |c| source_star.sdf(c[0] as f64, c[1] as f64));
    let target = ScalarField::from_fn(d.clone(), |c| target_star.sdf(c[0] as f64, c[1] as f64));
    // Backward lookup: a'(x) = a(x - u(x)), so u = (-32, 0) on the bottom
    // half pulls content left, and u = (0, 32) on the left half pulls it up.
    let left = VectorField::from_fn(d.clone(), |c, out| {
        if (c[1] as f64) < half {
            out.copy_from_slice(&[-half, 0.0]);
        }
    });
    let up = VectorField::from_fn(d, |c, out| {
        if (c[0] as f64) < half {
            out.copy_from_slice(&[0.0, half]);
        }
    });
    StarFixture {
        source,
        target,
        left,
        up,
    }
}

// Gaussian smoke fixture: two samples of the smoke scene along a 1D
// parameter, with the deformations between their iso-surfaces.

pub const SMOKE_RES: usize = 32;
pub const SMOKE_FRAMES: usize = 12;

pub fn smoke_space() -> ParameterSpace {
    let assemble = AssembleParams {
        gamma_max: 12.0,
        ..AssembleParams::default()
    };
    let params = small_params();
    let mut samples = Vec::new();
    let mut sdfs = Vec::new();
    for (k, offset) in [0.0, 5.0].into_iter().enumerate() {
        let p = SceneParams {
            offset,
            seed: 7 + k as u64,
            ..SceneParams::default()
        };
        let frames = gen_scene(Scene::GaussianSmoke, SMOKE_RES, SMOKE_FRAMES, &p).unwrap();
        let iso: Vec<_> = frames
            .iter()
            .map(|f| iso_from_density(f, DEFAULT_DENSITY_LEVEL).unwrap())
            .collect();
        sdfs.push(assemble_spacetime(&iso, &assemble).unwrap());
        samples.push(Sample {
            name: format!("smoke-{k}"),
            r: vec![k as f64],
            data: assemble_raw(&frames, &assemble, 0.0).unwrap(),
        });
    }
    let forward = flof_with(&sdfs[0], &sdfs[1], &params, Stages::default()).unwrap();
    let backward = flof_with(&sdfs[1], &sdfs[0], &params, Stages::default()).unwrap();
    ParameterSpace::new(
        "smoke",
        DataKind::SmokeDensity,
        assemble.repeat_first,
        samples,
        vec![vec![0, 1]],
        vec![(0, 1, forward.deformation), (1, 0, backward.deformation)],
    )
    .unwrap()
}

/// Two-sample liquid space built from precomputed deformations.
pub fn liquid_segment(a: ScalarField, b: ScalarField, forward: Deformation, backward: Deformation) -> ParameterSpace {
    ParameterSpace::new(
        "segment",
        DataKind::LiquidSdf,
        0,
        vec![
            Sample {
                name: "a".into(),
                r: vec![0.0],
                data: a,
            },
            Sample {
                name: "b".into(),
                r: vec![1.0],
                data: b,
            },
        ],
        vec![vec![0, 1]],
        vec![(0, 1, forward), (1, 0, backward)],
    )
    .unwrap()
}

// Alignment against composition: random smooth deformation pairs acting on a
// truncated circle SDF.

pub const COMPOSITION_RES: usize = 48;
pub const COMPOSITION_GAMMA: f64 = 8.0;

/// Blurred noise rescaled so that its largest vector has length `magnitude`.
pub fn smooth_noise(d: &Dims, rng: &mut impl rand::Rng, magnitude: f64) -> VectorField {
    let n = d.ndim();
    let raw: Vec<f64> = (0..d.cell_count() * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let field = VectorField::new(d.clone(), raw).unwrap().blurred(3.0);
    let largest = field
        .data()
        .chunks(n)
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    field.scaled(magnitude / largest)
}

/// Mean |double advection - aligned single advection| over the half band of
/// the double-advected result.
pub fn composition_difference(rng: &mut impl rand::Rng) -> f64 {
    use flof_core::deformation::align_velocity;
    let d = dims(&[COMPOSITION_RES, COMPOSITION_RES]);
    let c = COMPOSITION_RES as f64 / 2.0;
    let phi = disc(&d, c + rng.random_range(-2.0..2.0), c + rng.random_range(-2.0..2.0), rng.random_range(8.0..14.0))
        .map(|v| v.clamp(-COMPOSITION_GAMMA, COMPOSITION_GAMMA));
    let m1 = rng.random_range(0.5..3.0);
    let m2 = rng.random_range(0.5..3.0);
    let u1 = smooth_noise(&d, rng, m1);
    let u2 = smooth_noise(&d, rng, m2);
    let twice = advect(&advect(&phi, &u1, 1.0).unwrap(), &u2, 1.0).unwrap();
    let once = advect(&phi, &align_velocity(&[&u1, &u2], &[1.0, 1.0]).unwrap(), 1.0).unwrap();
    let (mut total, mut count) = (0.0, 0usize);
    for (a, b) in twice.data().iter().zip(once.data()) {
        if a.abs() < COMPOSITION_GAMMA / 2.0 {
            total += (a - b).abs();
            count += 1;
        }
    }
    total / count as f64
}

// Broken versus intact surface: a small disc as the target; the intact
// candidate is the disc displaced along x, the broken one is the disc cut by
// a two-cell slot. The displacement is the smallest multiple of 0.05 cells
// whose flow data residual is at least that of the broken candidate.

pub struct BrokenSurfaceCase {
    pub intact_error: f64,
    pub broken_error: f64,
    pub intact_residual: f64,
    pub broken_residual: f64,
    pub shift: f64,
}

fn data_residual(a: &ScalarField, b: &ScalarField) -> f64 {
    0.5 * a.data().iter().zip(b.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>()
}

pub fn broken_surface_case(cx: f64, cy: f64) -> BrokenSurfaceCase {
    let d = dims(&[48, 48]);
    let r = 6.0;
    let target = disc(&d, cx, cy, r);
    let broken = ScalarField::from_fn(d.clone(), |c| {
        let slot = 1.0 - (c[0] as f64 - cx).abs();
        ((c[0] as f64 - cx).hypot(c[1] as f64 - cy) - r).max(slot)
    });
    let broken_residual = data_residual(&broken, &target);
    let mut shift = 0.0;
    let intact = loop {
        shift += 0.05;
        let candidate = disc(&d, cx + shift, cy, r);
        if data_residual(&candidate, &target) >= broken_residual {
            break candidate;
        }
    };
    BrokenSurfaceCase {
        intact_error: error_metric(&intact, &target).unwrap(),
        broken_error: error_metric(&broken, &target).unwrap(),
        intact_residual: data_residual(&intact, &target),
        broken_residual,
        shift,
    }
}

pub const BROKEN_SURFACE_CENTERS: [(f64, f64); 4] = [(24.0, 24.0), (23.7, 24.2), (24.5, 24.5), (23.3, 23.9)];

// Liquid fixture: four discs in a 2D parameter square split into two
// triangles that share the edge between samples 1 and 2.

pub const LIQUID_PARAMS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];

pub fn liquid_sdf(r: (f64, f64)) -> SpaceTimeSdf {
    let d = dims(&[28, 28]);
    let frames: Vec<ScalarField> = (0..10)
        .map(|t| disc(&d, 10.0 + 4.0 * r.0 + 0.4 * t as f64, 11.0 + 4.0 * r.1, 4.0 + r.0))
        .collect();
    let p = AssembleParams {
        gamma_max: 12.0,
        repeat_first: 2,
        ..AssembleParams::default()
    };
    assemble_spacetime(&frames, &p).unwrap()
}

pub fn small_params() -> FlofParams {
    FlofParams {
        gamma_max: 12.0,
        beta_image: -0.2 / 12.0,
        ..FlofParams::default()
    }
}

pub fn liquid_triangles() -> ParameterSpace {
    let sdfs: Vec<SpaceTimeSdf> = LIQUID_PARAMS.iter().map(|&r| liquid_sdf(r)).collect();
    let simplices = vec![vec![0, 1, 2], vec![1, 3, 2]];
    let edges = [(0, 1), (1, 2), (2, 0), (1, 3), (3, 2), (2, 1)];
    let deformations = edges
        .iter()
        .map(|&(a, b)| (a, b, flof(&sdfs[a], &sdfs[b], &small_params()).unwrap().deformation))
        .collect();
    let samples = sdfs
        .iter()
        .zip(LIQUID_PARAMS)
        .enumerate()
        .map(|(k, (s, r))| Sample {
            name: format!("disc-{k}"),
            r: vec![r.0, r.1],
            data: s.field.clone(),
        })
        .collect();
    ParameterSpace::new("discs", DataKind::LiquidSdf, 2, samples, simplices, deformations).unwrap()
}
