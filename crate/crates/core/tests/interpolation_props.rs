mod common;

use std::sync::OnceLock;

use common::*;
use flof_core::deformation::advect_chain;
use flof_core::grid::ScalarField;
use flof_core::interpolation::{
    barycentric, chain_weights, union_weights, union_weights_1d, BlendWeights, DataKind, Mode, ParameterSpace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_barycentric(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-12..1.0f64).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn position(point: &[usize], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for &v in point {
        p[v] = 1.0 / point.len() as f64;
    }
    p
}

#[test]
fn union_weights_partition_unity_and_reproduce_the_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [2, 3] {
        for _ in 0..10_000 {
            let x = random_barycentric(n, &mut rng);
            let w = union_weights(&x).unwrap();
            assert!((w.sum() - 1.0).abs() <= 1e-9, "{x:?}: {}", w.sum());
            assert!(w.weights.iter().all(|&v| v >= 0.0));
            assert!(w.weights.iter().filter(|&&v| v > 0.0).count() <= n);
            // The active data points, at their positions in the parent
            // simplex, have the query point as their barycenter.
            let mut centroid = vec![0.0; n];
            for (p, &v) in w.points.iter().zip(&w.weights) {
                for (c, q) in centroid.iter_mut().zip(position(p, n)) {
                    *c += v * q;
                }
            }
            for (c, q) in centroid.iter().zip(&x) {
                assert!((c - q).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn barycentric_weights_partition_unity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10_000 {
        let verts: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let refs: Vec<&[f64]> = verts.iter().map(|v| v.as_slice()).collect();
        let Ok(_) = barycentric(refs[0], &refs) else { continue };
        let x = random_barycentric(3, &mut rng);
        let p: Vec<f64> = (0..2).map(|d| (0..3).map(|k| x[k] * verts[k][d]).sum()).collect();
        let w = barycentric(&p, &refs).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(w.iter().all(|&v| v >= -1e-9));
    }
    for _ in 0..10_000 {
        let a = rng.random_range(-5.0..5.0);
        let b = a + rng.random_range(0.1..5.0);
        let p = rng.random_range(a..=b);
        let w = barycentric(&[p], &[&[a], &[b]]).unwrap();
        assert!((w[0] + w[1] - 1.0).abs() <= 1e-9 && w.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn union_weights_1d_follow_the_clamp_formulas() {
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let table = [
        (0.0, (1.0, 0.0, 0.0)),
        (0.25, (0.5, 0.5, 0.0)),
        (0.5, (0.0, 1.0, 0.0)),
        (0.75, (0.0, 0.5, 0.5)),
        (1.0, (0.0, 0.0, 1.0)),
    ];
    for (alpha, expected) in table {
        let w1 = clamp(1.0 - 2.0 * alpha);
        let w2 = clamp(2.0 * alpha - 1.0);
        assert_eq!(union_weights_1d(alpha), (w1, 1.0 - w1 - w2, w2));
        assert_eq!(union_weights_1d(alpha), expected);
        let sub = union_weights(&[1.0 - alpha, alpha]).unwrap();
        assert_eq!(sub.weights, vec![expected.0, expected.1, expected.2]);
    }
}

fn liquid_space() -> &'static ParameterSpace {
    static CELL: OnceLock<ParameterSpace> = OnceLock::new();
    CELL.get_or_init(liquid_triangles)
}

fn smoke() -> &'static ParameterSpace {
    static CELL: OnceLock<ParameterSpace> = OnceLock::new();
    CELL.get_or_init(smoke_space)
}

fn assert_bitwise(a: &ScalarField, b: &ScalarField) {
    assert_eq!(a.dims(), b.dims());
    let same = a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    assert!(same, "slices differ");
}

#[test]
fn vertices_reproduce_stored_slices_in_every_mode() {
    for space in [liquid_space(), smoke()] {
        let modes: &[Mode] = match space.kind {
            DataKind::LiquidSdf => &Mode::ALL,
            DataKind::SmokeDensity => &[Mode::Linear, Mode::Nearest],
        };
        for sample in space.samples() {
            for &mode in modes {
                for t in 0..space.time_extent() {
                    let s = space.synthesize(&sample.r, t, mode).unwrap();
                    assert_bitwise(&s.slice, &sample.data.last_axis_slab(t).unwrap());
                }
            }
        }
    }
}

/// Full space-time blend computed volume-wide, then sliced.
fn full_volume_blend(space: &ParameterSpace, simplex: usize, x: &[f64], mode: Mode, t: usize) -> ScalarField {
    let s = &space.simplices()[simplex];
    let n = s.len();
    let deformed: Vec<ScalarField> = (0..n)
        .map(|k| {
            let chain: Vec<_> = (0..n - 1)
                .map(|j| space.deformation(s[(k + j) % n], s[(k + j + 1) % n]).unwrap())
                .collect();
            advect_chain(&space.samples()[s[k]].data, &chain, &chain_weights(x, k)).unwrap()
        })
        .collect();
    let weights = match mode {
        Mode::Union => union_weights(x).unwrap(),
        _ => BlendWeights {
            points: (0..n).map(|k| vec![k]).collect(),
            weights: x.to_vec(),
        },
    };
    let dims = deformed[0].dims().clone();
    let mut out = vec![0.0; dims.cell_count()];
    for (point, &w) in weights.points.iter().zip(&weights.weights) {
        if w == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let v = point.iter().map(|&k| deformed[k].at(i)).fold(f64::INFINITY, f64::min);
            *o += w * v;
        }
    }
    ScalarField::new(dims, out).unwrap().last_axis_slab(t).unwrap()
}

#[test]
fn sliced_evaluation_matches_the_full_volume() {
    let space = liquid_space();
    let queries = [[0.3, 0.2], [0.1, 0.7], [0.45, 0.45], [0.6, 0.0]];
    for q in queries {
        for mode in [Mode::Linear, Mode::Union] {
            for t in [0, 4, space.time_extent() - 1] {
                let s = space.synthesize(&q, t, mode).unwrap();
                let full = full_volume_blend(space, s.simplex, &s.barycentric, mode, t);
                for (a, b) in s.slice.data().iter().zip(full.data()) {
                    assert!((a - b).abs() <= 1e-12, "{q:?} {mode} t={t}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn union_blend_is_below_both_deformed_inputs_at_the_midpoint() {
    let space = liquid_space();
    // Midpoint of the edge between samples 0 and 1: the union alone.
    let s = space.synthesize(&[0.5, 0.0], 5, Mode::Union).unwrap();
    assert_eq!(s.blend.weights.iter().filter(|&&w| w > 0.0).count(), 1);
    let linear = space.synthesize(&[0.5, 0.0], 5, Mode::Linear).unwrap();
    for (u, l) in s.slice.data().iter().zip(linear.slice.data()) {
        assert!(u <= l);
    }
    let simplex = &space.simplices()[s.simplex];
    let x = &s.barycentric;
    for k in 0..2 {
        let n = simplex.len();
        let chain: Vec<_> = (0..n - 1)
            .map(|j| space.deformation(simplex[(k + j) % n], simplex[(k + j + 1) % n]).unwrap())
            .collect();
        let deformed = advect_chain(&space.samples()[simplex[k]].data, &chain, &chain_weights(x, k))
            .unwrap()
            .last_axis_slab(5)
            .unwrap();
        for (u, d) in s.slice.data().iter().zip(deformed.data()) {
            assert!(u <= d);
        }
    }
}

#[test]
fn shared_edge_evaluations_are_reported() {
    let space = liquid_space();
    for q in [[0.5, 0.5], [0.8, 0.2], [0.25, 0.75]] {
        for mode in Mode::ALL {
            let a = space.synthesize_in(0, &q, 6, mode).unwrap();
            let b = space.synthesize_in(1, &q, 6, mode).unwrap();
            let diff = a
                .slice
                .data()
                .iter()
                .zip(b.slice.data())
                .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            let sign_flips = a
                .slice
                .data()
                .iter()
                .zip(b.slice.data())
                .filter(|(p, q)| (**p >= 0.0) != (**q >= 0.0))
                .count();
            eprintln!("edge point {q:?} {mode}: max |difference| {diff:.4}, sign flips {sign_flips}");
            assert!(diff.is_finite());
        }
    }
}

#[test]
fn smoke_mass_follows_the_weights() {
    let space = smoke();
    for t in 0..space.time_extent() {
        let m = space.input_masses(t).unwrap();
        for alpha in [0.1, 0.25, 0.5, 0.8, 0.95] {
            let s = space.synthesize(&[alpha], t, Mode::Linear).unwrap();
            let expected = (1.0 - alpha) * m[0] + alpha * m[1];
            let total = s.slice.sum();
            assert!((total - expected).abs() <= 1e-6 * expected, "t={t} alpha={alpha}: {total} vs {expected}");
            assert!(s.slice.data().iter().all(|&v| v >= 0.0));
        }
        let near = space.synthesize(&[0.3], t, Mode::Nearest).unwrap();
        assert!((near.slice.sum() - m[0]).abs() <= 1e-6 * m[0]);
    }
    assert!(space.synthesize(&[0.5], 0, Mode::Union).is_err());
}
