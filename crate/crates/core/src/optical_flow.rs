//! One resolution level of the regularized optical-flow solve.
//!
//! The deformation `u` minimizes
//!
//! ```text
//! E(u) = 1/2 |G u + (phi2 - phi1)|^2 + beta_s/2 sum_j |grad u_j|^2 + beta_t/2 |u|^2
//! ```
//!
//! where `G` holds the per-cell gradient of `phi2`. Setting the derivative to
//! zero gives `(G^T G + beta_s L + beta_t I) u = -G^T (phi2 - phi1)`, which is
//! applied matrix-free with a `2N + 1` Laplacian stencil. Boundary cells are
//! pinned to zero (identity rows, zero right-hand side).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_same_dims, Error, Result};
use crate::grid::{det_dot, Dims, ScalarField, VectorField};

/// Tuning constants for the full registration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlofParams {
    /// Smoothness weight.
    pub beta_s: f64,
    /// Tikhonov (magnitude) weight.
    pub beta_t: f64,
    /// Initial blur of each flow solution, in cells.
    pub sigma_of: f64,
    /// Initial blur of each projection update, in cells.
    pub sigma_proj: f64,
    /// Narrow band half-width for projection, in cells.
    pub tau_proj: f64,
    /// Size threshold for the coarsest hierarchy level.
    pub s_max: usize,
    /// Residual flow iterations per level.
    pub l_max: usize,
    /// Projection iterations at the finest level.
    pub k_max: usize,
    /// SDF truncation distance in cells.
    pub gamma_max: f64,
    /// Scale applied to SDF values before the flow solve.
    pub beta_image: f64,
    /// Relative residual at which CG stops.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for FlofParams {
    fn default() -> Self {
        let gamma_max = 40.0;
        FlofParams {
            beta_s: 1e-3,
            beta_t: 1e-4,
            sigma_of: 4.0,
            sigma_proj: 4.0,
            tau_proj: 4.0,
            s_max: 10,
            l_max: 3,
            k_max: 3,
            gamma_max,
            beta_image: -0.2 / gamma_max,
            cg_tol: 1e-2,
            cg_max_iter: 600,
        }
    }
}

impl FlofParams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("beta_s", self.beta_s),
            ("beta_t", self.beta_t),
            ("sigma_of", self.sigma_of),
            ("sigma_proj", self.sigma_proj),
            ("tau_proj", self.tau_proj),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be >= 0")));
            }
        }
        if !(self.gamma_max.is_finite() && self.gamma_max > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma_max = {}", self.gamma_max)));
        }
        if !self.beta_image.is_finite() || self.beta_image == 0.0 {
            return Err(Error::InvalidArgument(format!("beta_image = {}", self.beta_image)));
        }
        if self.s_max < 2 {
            return Err(Error::InvalidArgument(format!("s_max = {} < 2", self.s_max)));
        }
        if self.l_max < 1 || self.k_max < 1 || self.cg_max_iter < 1 {
            return Err(Error::InvalidArgument("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Matrix-free normal equations of the flow energy.
#[derive(Clone, Debug)]
pub struct FlowSystem {
    dims: Dims,
    phi2_gradient: VectorField,
    rhs: VectorField,
    boundary: Vec<bool>,
    beta_s: f64,
    beta_t: f64,
}

/// Builds the system for flow inputs already scaled by `beta_image`.
pub fn assemble(phi1: &ScalarField, phi2: &ScalarField, params: &FlofParams) -> Result<FlowSystem> {
    check_same_dims(phi1.dims(), phi2.dims())?;
    let dims = phi2.dims().clone();
    let grad = phi2.gradient()?;
    let n = dims.ndim();
    let boundary: Vec<bool> = (0..dims.cell_count())
        .into_par_iter()
        .map(|i| dims.is_boundary(i))
        .collect();
    let mut rhs = vec![0.0; dims.cell_count() * n];
    rhs.par_chunks_mut(n).enumerate().for_each(|(i, b)| {
        if boundary[i] {
            return;
        }
        let diff = phi2.at(i) - phi1.at(i);
        for (bc, g) in b.iter_mut().zip(grad.at(i)) {
            *bc = -g * diff;
        }
    });
    Ok(FlowSystem {
        rhs: VectorField::from_raw(dims.clone(), rhs),
        dims,
        phi2_gradient: grad,
        boundary,
        beta_s: params.beta_s,
        beta_t: params.beta_t,
    })
}

impl FlowSystem {
    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn unknowns(&self) -> usize {
        self.dims.cell_count() * self.dims.ndim()
    }

    pub fn phi2_gradient(&self) -> &VectorField {
        &self.phi2_gradient
    }

    pub fn rhs(&self) -> &VectorField {
        &self.rhs
    }

    pub fn is_boundary(&self, cell: usize) -> bool {
        self.boundary[cell]
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.beta_s, self.beta_t)
    }

    /// `out = A v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dims.ndim();
        let dims = &self.dims;
        let degree = (2 * n) as f64;
        out.par_chunks_mut(n).enumerate().for_each(|(i, o)| {
            let vi = &v[i * n..(i + 1) * n];
            if self.boundary[i] {
                o.copy_from_slice(vi);
                return;
            }
            let g = self.phi2_gradient.at(i);
            let gv: f64 = g.iter().zip(vi).map(|(a, b)| a * b).sum();
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = g[c] * gv + (self.beta_t + self.beta_s * degree) * vi[c];
            }
            // Interior cells have all 2N neighbors; boundary neighbors are pinned to 0.
            for axis in 0..n {
                let s = dims.stride(axis);
                for j in [i - s, i + s] {
                    if self.boundary[j] {
                        continue;
                    }
                    for (c, oc) in o.iter_mut().enumerate() {
                        *oc -= self.beta_s * v[j * n + c];
                    }
                }
            }
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.dims.ndim();
        let degree = (2 * n) as f64;
        let mut d = vec![1.0; self.unknowns()];
        d.par_chunks_mut(n).enumerate().for_each(|(i, dc)| {
            if self.boundary[i] {
                return;
            }
            let g = self.phi2_gradient.at(i);
            for (c, x) in dc.iter_mut().enumerate() {
                *x = g[c] * g[c] + self.beta_s * degree + self.beta_t;
            }
        });
        d
    }

    /// Row-major dense copy of the operator. Only for small test instances.
    pub fn to_dense(&self) -> Result<Vec<Vec<f64>>> {
        let m = self.unknowns();
        if m > 4usize.pow(4) * 4 {
            return Err(Error::InvalidArgument(format!(
                "{m} unknowns is too large for a dense operator"
            )));
        }
        let mut cols = Vec::with_capacity(m);
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            cols.push(col.clone());
            e[j] = 0.0;
        }
        Ok((0..m).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub iterations: usize,
    /// `|b - A u| / |b|`, recomputed from the returned solution.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
///
/// `observer` sees the iterate after every step.
pub fn pcg<A, O>(
    apply: A,
    diagonal: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
    mut observer: O,
) -> Result<(Vec<f64>, CgReport)>
where
    A: Fn(&[f64], &mut [f64]),
    O: FnMut(usize, &[f64]),
{
    let m = b.len();
    let mut x = vec![0.0; m];
    let b_norm = det_dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let inv_diag: Vec<f64> = diagonal.iter().map(|d| 1.0 / d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz = det_dot(&r, &z);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        apply(&p, &mut ap);
        let pap = det_dot(&p, &ap);
        if !pap.is_finite() || !rz.is_finite() {
            return Err(Error::NonFinite(format!(
                "CG iteration {iterations}: p.Ap = {pap}, r.z = {rz}"
            )));
        }
        if pap <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "CG iteration {iterations}: operator not positive definite (p.Ap = {pap})"
            )));
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(p.par_iter()).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(ap.par_iter()).for_each(|(ri, api)| *ri -= alpha * api);
        iterations += 1;
        observer(iterations, &x);
        if det_dot(&r, &r).sqrt() <= tol * b_norm {
            converged = true;
            break;
        }
        z.par_iter_mut()
            .zip(r.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
        let rz_new = det_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    apply(&x, &mut ap);
    let res: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let relative_residual = det_dot(&res, &res).sqrt() / b_norm;
    if !relative_residual.is_finite() {
        return Err(Error::NonFinite(format!(
            "CG finished with residual {relative_residual}"
        )));
    }
    Ok((
        x,
        CgReport {
            iterations,
            relative_residual,
            converged,
        },
    ))
}

/// Solves the flow system; hitting the iteration cap is reported, not fatal.
pub fn solve_cg(system: &FlowSystem, params: &FlofParams) -> Result<(VectorField, CgReport)> {
    let diag = system.diagonal();
    let (x, report) = pcg(
        |v, out| system.apply(v, out),
        &diag,
        system.rhs().data(),
        params.cg_tol,
        params.cg_max_iter,
        |_, _| {},
    )?;
    Ok((VectorField::from_raw(system.dims().clone(), x), report))
}

/// Assemble, solve, and blur the solution with `sigma_of`.
pub fn flow_single_level(
    phi1: &ScalarField,
    phi2: &ScalarField,
    sigma_of: f64,
    params: &FlofParams,
) -> Result<(VectorField, CgReport)> {
    let system = assemble(phi1, phi2, params)?;
    let (u, report) = solve_cg(&system, params)?;
    Ok((u.blurred(sigma_of), report))
}
