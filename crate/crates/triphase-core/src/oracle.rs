//! Independent reference solver: second-order finite differences in
//! physical space on a refined grid, coupling the three equations
//! directly through the shared interface value. Shares no numerical
//! machinery with the spectral path (separate Laplacians, separate time
//! stepping, separate trace extraction), so agreement between the two is
//! evidence, not tautology.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::field::TriField;
use crate::params::{GridSpec, PhysParams};
use crate::scenario::InitialData;
use crate::trajectory::{EnergyRow, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVariant {
    /// Explicit Euler with second-order one-sided interface fluxes;
    /// order `dt + h^2` overall with the CFL-tied step.
    Explicit,
    /// Backward Euler on the variational (edge-based) form; energy
    /// dissipative at any step size, first-order interface mass.
    ImplicitVariational,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Grid refinement relative to the reference grid (each axis).
    pub refine: usize,
    pub variant: OracleVariant,
    /// Spacing of stored checkpoints in time.
    pub checkpoint_interval: f64,
    /// Hold the surface field at zero (decoupled Dirichlet dynamics).
    pub pin_surface: bool,
    /// Explicit step override; rejected when it violates the CFL bound.
    pub dt_override: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            refine: 2,
            variant: OracleVariant::Explicit,
            checkpoint_interval: 0.025,
            pin_surface: false,
            dt_override: None,
        }
    }
}

struct FineGrid {
    nh: usize,
    nz: usize,
    h_h: f64,
    h_z: f64,
    refine: usize,
}

impl FineGrid {
    fn new(grid: &GridSpec, refine: usize) -> Self {
        let nh = grid.n_h * refine;
        let nz = (grid.n_z + 1) * refine - 1;
        FineGrid {
            nh,
            nz,
            h_h: grid.l_h / nh as f64,
            h_z: grid.l_z / (nz + 1) as f64,
            refine,
        }
    }
}

struct OracleState {
    a: Array3<f64>,
    b: Array3<f64>,
    s: Array2<f64>,
}

impl OracleState {
    fn sample(data: &InitialData, fg: &FineGrid) -> Self {
        let mut a = Array3::zeros((fg.nh, fg.nh, fg.nz));
        let mut b = Array3::zeros((fg.nh, fg.nh, fg.nz));
        let mut s = Array2::zeros((fg.nh, fg.nh));
        for i in 0..fg.nh {
            let x = i as f64 * fg.h_h;
            for j in 0..fg.nh {
                let y = j as f64 * fg.h_h;
                for k in 0..fg.nz {
                    let z = (k + 1) as f64 * fg.h_z;
                    a[[i, j, k]] = data.theta_a(x, y, z);
                    b[[i, j, k]] = data.theta_b(x, y, z);
                }
                s[[i, j]] = data.surface(x, y);
            }
        }
        OracleState { a, b, s }
    }
}

/// Five-point horizontal Laplacian with periodic wrap, one bulk level.
fn lap_h_level(src: &Array3<f64>, k: usize, i: usize, j: usize, fg: &FineGrid) -> f64 {
    let n = fg.nh;
    let ip = (i + 1) % n;
    let im = (i + n - 1) % n;
    let jp = (j + 1) % n;
    let jm = (j + n - 1) % n;
    (src[[ip, j, k]] + src[[im, j, k]] + src[[i, jp, k]] + src[[i, jm, k]]
        - 4.0 * src[[i, j, k]])
        / (fg.h_h * fg.h_h)
}

fn lap_h_surf(src: &Array2<f64>, i: usize, j: usize, fg: &FineGrid) -> f64 {
    let n = fg.nh;
    let ip = (i + 1) % n;
    let im = (i + n - 1) % n;
    let jp = (j + 1) % n;
    let jm = (j + n - 1) % n;
    (src[[ip, j]] + src[[im, j]] + src[[i, jp]] + src[[i, jm]] - 4.0 * src[[i, j]])
        / (fg.h_h * fg.h_h)
}

/// Evolution rates of the explicit scheme at the current state.
fn explicit_rates(
    st: &OracleState,
    fg: &FineGrid,
    params: &PhysParams,
    pin_surface: bool,
) -> OracleState {
    let hz2 = fg.h_z * fg.h_z;
    let mut rate = OracleState {
        a: Array3::zeros(st.a.dim()),
        b: Array3::zeros(st.b.dim()),
        s: Array2::zeros(st.s.dim()),
    };
    for i in 0..fg.nh {
        for j in 0..fg.nh {
            for k in 0..fg.nz {
                let below_a = if k == 0 { st.s[[i, j]] } else { st.a[[i, j, k - 1]] };
                let above_a = if k == fg.nz - 1 { 0.0 } else { st.a[[i, j, k + 1]] };
                let lz_a = (above_a - 2.0 * st.a[[i, j, k]] + below_a) / hz2;
                rate.a[[i, j, k]] =
                    params.kappa_a * (lap_h_level(&st.a, k, i, j, fg) + lz_a);
                let below_b = if k == 0 { st.s[[i, j]] } else { st.b[[i, j, k - 1]] };
                let above_b = if k == fg.nz - 1 { 0.0 } else { st.b[[i, j, k + 1]] };
                let lz_b = (above_b - 2.0 * st.b[[i, j, k]] + below_b) / hz2;
                rate.b[[i, j, k]] =
                    params.kappa_b * (lap_h_level(&st.b, k, i, j, fg) + lz_b);
            }
            if !pin_surface {
                let s = st.s[[i, j]];
                // One-sided second-order interface derivatives.
                let da = (-3.0 * s + 4.0 * st.a[[i, j, 0]] - st.a[[i, j, 1]]) / (2.0 * fg.h_z);
                let db = (3.0 * s - 4.0 * st.b[[i, j, 0]] + st.b[[i, j, 1]]) / (2.0 * fg.h_z);
                let jump = params.kappa_a * da - params.kappa_b * db;
                rate.s[[i, j]] = (params.kappa_s() * lap_h_surf(&st.s, i, j, fg) + jump)
                    / params.alpha_s;
            }
        }
    }
    rate
}

/// Discrete energy terms of the oracle state with finite-difference
/// gradients (its own functionals, independent of the spectral ledger).
fn energy_terms(st: &OracleState, fg: &FineGrid) -> (f64, f64, f64, f64, f64, f64) {
    let wb = fg.h_h * fg.h_h * fg.h_z;
    let ws = fg.h_h * fg.h_h;
    let a_sq = wb * st.a.iter().map(|v| v * v).sum::<f64>();
    let b_sq = wb * st.b.iter().map(|v| v * v).sum::<f64>();
    let s_sq = ws * st.s.iter().map(|v| v * v).sum::<f64>();
    let mut grad = [0.0f64; 3];
    for i in 0..fg.nh {
        let ip = (i + 1) % fg.nh;
        for j in 0..fg.nh {
            let jp = (j + 1) % fg.nh;
            for k in 0..fg.nz {
                let dx = (st.a[[ip, j, k]] - st.a[[i, j, k]]) / fg.h_h;
                let dy = (st.a[[i, jp, k]] - st.a[[i, j, k]]) / fg.h_h;
                let below = if k == 0 { st.s[[i, j]] } else { st.a[[i, j, k - 1]] };
                let dz = (st.a[[i, j, k]] - below) / fg.h_z;
                grad[0] += wb * (dx * dx + dy * dy + dz * dz);
                let dxb = (st.b[[ip, j, k]] - st.b[[i, j, k]]) / fg.h_h;
                let dyb = (st.b[[i, jp, k]] - st.b[[i, j, k]]) / fg.h_h;
                let belowb = if k == 0 { st.s[[i, j]] } else { st.b[[i, j, k - 1]] };
                let dzb = (st.b[[i, j, k]] - belowb) / fg.h_z;
                grad[1] += wb * (dxb * dxb + dyb * dyb + dzb * dzb);
            }
            // Wall edges.
            grad[0] += wb * (st.a[[i, j, fg.nz - 1]] / fg.h_z).powi(2);
            grad[1] += wb * (st.b[[i, j, fg.nz - 1]] / fg.h_z).powi(2);
            let dsx = (st.s[[ip, j]] - st.s[[i, j]]) / fg.h_h;
            let dsy = (st.s[[i, jp]] - st.s[[i, j]]) / fg.h_h;
            grad[2] += ws * (dsx * dsx + dsy * dsy);
        }
    }
    (a_sq, b_sq, s_sq, grad[0], grad[1], grad[2])
}

fn subsample(st: &OracleState, fg: &FineGrid, grid: &GridSpec) -> TriField {
    let r = fg.refine;
    let mut f = TriField::zeros(grid);
    for i in 0..grid.n_h {
        for j in 0..grid.n_h {
            for k in 0..grid.n_z {
                let kf = (k + 1) * r - 1;
                f.f_a[[i, j, k]] = st.a[[i * r, j * r, kf]];
                f.f_b[[i, j, k]] = st.b[[i * r, j * r, kf]];
            }
            f.f_s[[i, j]] = st.s[[i * r, j * r]];
        }
    }
    f
}

/// Reference solve of the coupled system from analytic initial data.
/// Returns a trajectory with coarse-grid checkpoints at the configured
/// interval; energy rows use the oracle's own finite-difference
/// functionals.
pub fn oracle_solve(
    data: &InitialData,
    t_end: f64,
    grid: &GridSpec,
    params: &PhysParams,
    cfg: &OracleConfig,
) -> Result<Trajectory> {
    if cfg.refine == 0 {
        return Err(Error::Config("refinement factor must be positive".into()));
    }
    match cfg.variant {
        OracleVariant::Explicit => explicit_solve(data, t_end, grid, params, cfg),
        OracleVariant::ImplicitVariational => implicit_solve(data, t_end, grid, params, cfg),
    }
}

fn stable_dt(fg: &FineGrid, params: &PhysParams) -> f64 {
    let kmax = params.kappa_a.max(params.kappa_b).max(params.kappa_s_tilde);
    let h_min = fg.h_h.min(fg.h_z);
    let bulk = h_min * h_min / (6.0 * kmax);
    // Surface row: horizontal diffusion at reduced diffusivity plus the
    // flux coupling scale.
    let surf_diff = fg.h_h * fg.h_h / (8.0 * params.kappa_s_tilde);
    let flux_scale = params.alpha_s * fg.h_z
        / (3.0 * (params.kappa_a + params.kappa_b));
    bulk.min(surf_diff).min(flux_scale)
}

fn explicit_solve(
    data: &InitialData,
    t_end: f64,
    grid: &GridSpec,
    params: &PhysParams,
    cfg: &OracleConfig,
) -> Result<Trajectory> {
    let fg = FineGrid::new(grid, cfg.refine);
    let limit = stable_dt(&fg, params);
    let interval = cfg.checkpoint_interval.min(t_end);
    let n_sub = match cfg.dt_override {
        Some(dt) => {
            if dt > limit {
                return Err(Error::CflViolation { dt, limit });
            }
            (interval / dt).ceil() as usize
        }
        None => (interval / limit).ceil() as usize,
    }
    .max(1);
    let dt = interval / n_sub as f64;
    let n_checks = (t_end / interval).round().max(1.0) as usize;

    let mut st = OracleState::sample(data, &fg);
    let mut traj = empty_trajectory(grid, interval, n_checks);
    let mut diss_integral = 0.0;
    let mut prev_diss = push_checkpoint(
        &mut traj, &st, &fg, grid, params, cfg, 0.0, &mut diss_integral, None,
    );
    for chk in 0..n_checks {
        for _ in 0..n_sub {
            let rate = explicit_rates(&st, &fg, params, cfg.pin_surface);
            st.a.zip_mut_with(&rate.a, |x, r| *x += dt * r);
            st.b.zip_mut_with(&rate.b, |x, r| *x += dt * r);
            if !cfg.pin_surface {
                st.s.zip_mut_with(&rate.s, |x, r| *x += dt * r);
            }
        }
        let t = (chk + 1) as f64 * interval;
        prev_diss = push_checkpoint(
            &mut traj, &st, &fg, grid, params, cfg, t, &mut diss_integral, Some(prev_diss),
        );
    }
    Ok(traj)
}

fn empty_trajectory(grid: &GridSpec, interval: f64, n_checks: usize) -> Trajectory {
    Trajectory {
        grid: grid.clone(),
        times: (0..=n_checks).map(|c| c as f64 * interval).collect(),
        checkpoint_idx: (0..=n_checks).collect(),
        states: Vec::new(),
        derivs: Vec::new(),
        spectral_states: Vec::new(),
        energy: Vec::new(),
        norm_trace: None,
    }
}

#[allow(clippy::too_many_arguments)]
fn push_checkpoint(
    traj: &mut Trajectory,
    st: &OracleState,
    fg: &FineGrid,
    grid: &GridSpec,
    params: &PhysParams,
    cfg: &OracleConfig,
    t: f64,
    diss_integral: &mut f64,
    prev_diss: Option<f64>,
) -> f64 {
    let (a_sq, b_sq, s_sq, ga, gb, gs) = energy_terms(st, fg);
    let diss_a = 2.0 * params.kappa_a * ga;
    let diss_b = 2.0 * params.kappa_b * gb;
    let diss_s = 2.0 * params.kappa_s() * gs;
    let total = diss_a + diss_b + diss_s;
    if let Some(prev) = prev_diss {
        *diss_integral += 0.5 * traj.dt_checkpoint() * (prev + total);
    }
    traj.energy.push(EnergyRow {
        t,
        bulk_a_sq: a_sq,
        bulk_b_sq: b_sq,
        surf_sq: params.alpha_s * s_sq,
        diss_a,
        diss_b,
        diss_s,
        diss_integral: *diss_integral,
    });
    traj.states.push(subsample(st, fg, grid));
    let rate = explicit_rates(st, fg, params, cfg.pin_surface);
    traj.derivs.push(subsample(&rate, fg, grid));
    total
}

impl Trajectory {
    fn dt_checkpoint(&self) -> f64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }
}

/// Backward Euler on the edge-based variational form; conjugate gradients
/// on the symmetric positive-definite step system. Used for the
/// energy-dissipation and total-heat invariants; runs at desk scale only.
fn implicit_solve(
    data: &InitialData,
    t_end: f64,
    grid: &GridSpec,
    params: &PhysParams,
    cfg: &OracleConfig,
) -> Result<Trajectory> {
    let fg = FineGrid::new(grid, cfg.refine);
    let interval = cfg.checkpoint_interval.min(t_end);
    let n_checks = (t_end / interval).round().max(1.0) as usize;
    let dt = interval;

    let mut st = OracleState::sample(data, &fg);
    let mut traj = empty_trajectory(grid, interval, n_checks);
    let mut diss_integral = 0.0;
    let mut prev = push_checkpoint(
        &mut traj, &st, &fg, grid, params, cfg, 0.0, &mut diss_integral, None,
    );
    for chk in 0..n_checks {
        backward_euler_step(&mut st, &fg, params, dt)?;
        let t = (chk + 1) as f64 * interval;
        prev = push_checkpoint(
            &mut traj, &st, &fg, grid, params, cfg, t, &mut diss_integral, Some(prev),
        );
    }
    Ok(traj)
}

/// Mass-weighted inner product of oracle states.
fn dot(x: &OracleState, y: &OracleState, fg: &FineGrid, params: &PhysParams) -> f64 {
    let wb = fg.h_h * fg.h_h * fg.h_z;
    let ws = fg.h_h * fg.h_h * (params.alpha_s + fg.h_z);
    let mut acc = 0.0;
    for (p, q) in x.a.iter().zip(y.a.iter()) {
        acc += wb * p * q;
    }
    for (p, q) in x.b.iter().zip(y.b.iter()) {
        acc += wb * p * q;
    }
    for (p, q) in x.s.iter().zip(y.s.iter()) {
        acc += ws * p * q;
    }
    acc
}

/// Stiffness application of the edge-based Dirichlet form (interface value
/// shared with the surface unknown, homogeneous wall).
fn apply_stiffness(
    y: &OracleState,
    fg: &FineGrid,
    params: &PhysParams,
) -> OracleState {
    let wv = fg.h_h * fg.h_h / fg.h_z;
    let wh = fg.h_z;
    let mut out = OracleState {
        a: Array3::zeros(y.a.dim()),
        b: Array3::zeros(y.b.dim()),
        s: Array2::zeros(y.s.dim()),
    };
    for i in 0..fg.nh {
        let ip = (i + 1) % fg.nh;
        for j in 0..fg.nh {
            let jp = (j + 1) % fg.nh;
            for k in 0..fg.nz {
                for (field, kappa, out_field) in [
                    (&y.a, params.kappa_a, &mut out.a),
                    (&y.b, params.kappa_b, &mut out.b),
                ] {
                    let v = field[[i, j, k]];
                    // Vertical edges: below (interface or neighbor), above
                    // (neighbor or wall zero).
                    let below = if k == 0 { y.s[[i, j]] } else { field[[i, j, k - 1]] };
                    let above = if k == fg.nz - 1 { 0.0 } else { field[[i, j, k + 1]] };
                    out_field[[i, j, k]] += kappa * wv * ((v - below) + (v - above));
                    // Horizontal edges (each edge applied from both ends).
                    let dx = v - field[[ip, j, k]];
                    let dy = v - field[[i, jp, k]];
                    out_field[[i, j, k]] += kappa * wh * (dx + dy);
                    out_field[[ip, j, k]] -= kappa * wh * dx;
                    out_field[[i, jp, k]] -= kappa * wh * dy;
                }
            }
            // Surface: its own horizontal form plus the interface edges.
            let s = y.s[[i, j]];
            let dsx = s - y.s[[ip, j]];
            let dsy = s - y.s[[i, jp]];
            out.s[[i, j]] += params.kappa_s() * (dsx + dsy);
            out.s[[ip, j]] -= params.kappa_s() * dsx;
            out.s[[i, jp]] -= params.kappa_s() * dsy;
            out.s[[i, j]] += params.kappa_a * wv * (s - y.a[[i, j, 0]])
                + params.kappa_b * wv * (s - y.b[[i, j, 0]]);
        }
    }
    out
}

fn backward_euler_step(
    st: &mut OracleState,
    fg: &FineGrid,
    params: &PhysParams,
    dt: f64,
) -> Result<()> {
    // Solve (M + dt K) y = M x by CG in the M-free composite metric.
    let apply = |y: &OracleState| -> OracleState {
        let mut ky = apply_stiffness(y, fg, params);
        let wb = fg.h_h * fg.h_h * fg.h_z;
        let ws = fg.h_h * fg.h_h * (params.alpha_s + fg.h_z);
        ky.a.zip_mut_with(&y.a, |k, v| *k = wb * v + dt * *k);
        ky.b.zip_mut_with(&y.b, |k, v| *k = wb * v + dt * *k);
        ky.s.zip_mut_with(&y.s, |k, v| *k = ws * v + dt * *k);
        ky
    };
    let rhs = {
        let wb = fg.h_h * fg.h_h * fg.h_z;
        let ws = fg.h_h * fg.h_h * (params.alpha_s + fg.h_z);
        OracleState {
            a: st.a.mapv(|v| wb * v),
            b: st.b.mapv(|v| wb * v),
            s: st.s.mapv(|v| ws * v),
        }
    };
    // Plain inner product for CG (the operator is symmetric in it).
    let raw_dot = |x: &OracleState, y: &OracleState| -> f64 {
        x.a.iter().zip(y.a.iter()).map(|(p, q)| p * q).sum::<f64>()
            + x.b.iter().zip(y.b.iter()).map(|(p, q)| p * q).sum::<f64>()
            + x.s.iter().zip(y.s.iter()).map(|(p, q)| p * q).sum::<f64>()
    };
    let mut x = OracleState {
        a: st.a.clone(),
        b: st.b.clone(),
        s: st.s.clone(),
    };
    let ax = apply(&x);
    let mut r = OracleState {
        a: &rhs.a - &ax.a,
        b: &rhs.b - &ax.b,
        s: &rhs.s - &ax.s,
    };
    let mut p = OracleState {
        a: r.a.clone(),
        b: r.b.clone(),
        s: r.s.clone(),
    };
    let mut rs = raw_dot(&r, &r);
    let tol = 1e-24 * rs.max(1e-300);
    for _ in 0..2000 {
        if rs <= tol {
            break;
        }
        let ap = apply(&p);
        let alpha = rs / raw_dot(&p, &ap);
        x.a.zip_mut_with(&p.a, |v, q| *v += alpha * q);
        x.b.zip_mut_with(&p.b, |v, q| *v += alpha * q);
        x.s.zip_mut_with(&p.s, |v, q| *v += alpha * q);
        r.a.zip_mut_with(&ap.a, |v, q| *v -= alpha * q);
        r.b.zip_mut_with(&ap.b, |v, q| *v -= alpha * q);
        r.s.zip_mut_with(&ap.s, |v, q| *v -= alpha * q);
        let rs_new = raw_dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        p.a.zip_mut_with(&r.a, |v, q| *v = q + beta * *v);
        p.b.zip_mut_with(&r.b, |v, q| *v = q + beta * *v);
        p.s.zip_mut_with(&r.s, |v, q| *v = q + beta * *v);
    }
    *st = x;
    Ok(())
}

/// Discrete weighted energy in the implicit variant's own metric.
pub fn implicit_energy(
    data: &InitialData,
    grid: &GridSpec,
    params: &PhysParams,
    refine: usize,
    dt: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let fg = FineGrid::new(grid, refine);
    let mut st = OracleState::sample(data, &fg);
    let mut energies = vec![dot(&st, &st, &fg, params)];
    for _ in 0..steps {
        backward_euler_step(&mut st, &fg, params, dt)?;
        energies.push(dot(&st, &st, &fg, params));
    }
    Ok(energies)
}

/// Total-heat rate of the variational form: sums of the stiffness
/// application, which telescope to wall-edge flux only.
pub fn heat_rate_telescoping(
    data: &InitialData,
    grid: &GridSpec,
    params: &PhysParams,
    refine: usize,
) -> Result<(f64, f64)> {
    let fg = FineGrid::new(grid, refine);
    let st = OracleState::sample(data, &fg);
    let ky = apply_stiffness(&st, &fg, params);
    let total: f64 = ky.a.sum() + ky.b.sum() + ky.s.sum();
    // Wall flux: the only surviving boundary contribution.
    let wv = fg.h_h * fg.h_h / fg.h_z;
    let mut wall = 0.0;
    for i in 0..fg.nh {
        for j in 0..fg.nh {
            wall += params.kappa_a * wv * st.a[[i, j, fg.nz - 1]]
                + params.kappa_b * wv * st.b[[i, j, fg.nz - 1]];
        }
    }
    Ok((total, wall))
}

/// L2-in-time-and-space distance between two trajectories over their
/// common checkpoint times (trapezoid in time, product-space norm at each
/// common node).
pub fn l2_time_space_difference(t1: &Trajectory, t2: &Trajectory) -> Result<f64> {
    let grid = &t1.grid;
    let mut pairs = Vec::new();
    for (slot1, &idx1) in t1.checkpoint_idx.iter().enumerate() {
        let time = t1.times[idx1];
        for (slot2, &idx2) in t2.checkpoint_idx.iter().enumerate() {
            if (t2.times[idx2] - time).abs() < 1e-9 {
                pairs.push((time, slot1, slot2));
                break;
            }
        }
    }
    if pairs.len() < 2 {
        return Err(Error::State(
            "trajectories share fewer than two checkpoint times".into(),
        ));
    }
    let mut acc = 0.0;
    for (w_idx, &(_, s1, s2)) in pairs.iter().enumerate() {
        let diff = t1.states[s1].axpy(-1.0, &t2.states[s2]);
        let sq = crate::field::h_inner(&diff, &diff, grid)?;
        let dt = if w_idx + 1 < pairs.len() {
            pairs[w_idx + 1].0 - pairs[w_idx].0
        } else {
            pairs[w_idx].0 - pairs[w_idx - 1].0
        };
        let w = if w_idx == 0 || w_idx == pairs.len() - 1 {
            0.5
        } else {
            1.0
        };
        acc += w * dt * sq;
    }
    Ok(acc.sqrt())
}
