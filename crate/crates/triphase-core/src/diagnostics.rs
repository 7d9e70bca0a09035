//! Executable forms of the system's verifiable claims: the energy balance,
//! short-time continuity at the initial data, interface-trace consistency
//! over time, and interior-in-time smoothness sampling.

use crate::error::{Error, Result};
use crate::field::{h_norm, TriField};
use crate::lift::LiftCache;
use crate::params::{GridSpec, PhysParams};
use crate::spectral::TransformPlan;
use crate::trajectory::{EnergyRow, Trajectory};

/// Energy-balance summary: the per-node ledger rows plus the worst defect
/// of the balance `E(t2) + int_{t1}^{t2} dissipation = E(t1)` over all
/// ordered node pairs, absolute and relative to the initial energy.
#[derive(Debug, Clone)]
pub struct EnergyTable {
    pub rows: Vec<EnergyRow>,
    pub max_defect: f64,
    pub rel_defect: f64,
}

/// Evaluate the energy balance of a trajectory. Solver trajectories carry
/// exact ledger rows at every node (closed-form profile algebra, trapezoid
/// time integral); trajectories without rows are rejected.
///
/// The defect over a pair `(t1, t2)` is the change of
/// `energy + accumulated dissipation`; the maximum over all pairs is the
/// spread of that balance function.
pub fn energy_ledger(traj: &Trajectory) -> Result<EnergyTable> {
    if traj.energy.is_empty() {
        return Err(Error::State(
            "trajectory carries no energy ledger rows".into(),
        ));
    }
    let balances: Vec<f64> = traj.energy.iter().map(|r| r.balance()).collect();
    let max_b = balances.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_b = balances.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_defect = max_b - min_b;
    let scale = traj.energy[0].total_energy().max(f64::MIN_POSITIVE);
    Ok(EnergyTable {
        rows: traj.energy.clone(),
        max_defect,
        rel_defect: max_defect / scale,
    })
}

/// Weighted energy must not increase along a trajectory (nonnegative
/// dissipation); returns the worst relative uptick.
pub fn max_energy_uptick(traj: &Trajectory) -> f64 {
    let scale = traj
        .energy
        .first()
        .map(|r| r.total_energy())
        .unwrap_or(0.0)
        .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for w in traj.energy.windows(2) {
        worst = worst.max((w[1].total_energy() - w[0].total_energy()) / scale);
    }
    worst
}

/// One row of the short-time continuity table.
#[derive(Debug, Clone, Copy)]
pub struct ContinuityRow {
    pub t: f64,
    pub diff_a: f64,
    pub diff_b: f64,
    pub diff_s: f64,
    pub diff_total: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    /// Least-squares slope of `log diff_total` against `log t`.
    pub fitted_exponent: f64,
}

/// Distances `|theta(t) - theta_0|` componentwise at the earliest stored
/// checkpoints after zero, with a power-law fit of the total.
pub fn initial_continuity(
    traj: &Trajectory,
    theta0: &TriField,
    grid: &GridSpec,
) -> Result<ContinuityTable> {
    let mut rows = Vec::new();
    for (slot, &idx) in traj.checkpoint_idx.iter().enumerate() {
        if idx == 0 || rows.len() >= 3 {
            continue;
        }
        let t = traj.times[idx];
        let state = &traj.states[slot];
        let diff = state.axpy(-1.0, theta0);
        let zero = TriField::zeros(grid);
        let part = |sel: usize| -> Result<f64> {
            let mut masked = zero.clone();
            match sel {
                0 => masked.f_a.assign(&diff.f_a),
                1 => masked.f_b.assign(&diff.f_b),
                _ => masked.f_s.assign(&diff.f_s),
            }
            h_norm(&masked, grid)
        };
        rows.push(ContinuityRow {
            t,
            diff_a: part(0)?,
            diff_b: part(1)?,
            diff_s: part(2)?,
            diff_total: h_norm(&diff, grid)?,
        });
    }
    if rows.len() < 2 {
        return Err(Error::State(
            "too few early checkpoints for a continuity fit".into(),
        ));
    }
    // log-log least squares.
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.diff_total > 0.0)
        .map(|r| (r.t.ln(), r.diff_total.ln()))
        .collect();
    let fitted_exponent = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::INFINITY
    };
    Ok(ContinuityTable {
        rows,
        fitted_exponent,
    })
}

/// One row of the trace-consistency table.
#[derive(Debug, Clone, Copy)]
pub struct TraceGapRow {
    pub t: f64,
    /// Representation gap: how far the stored state is from an exact
    /// decomposition `sine span + theta_s * profile` (machine level for
    /// solver output by construction).
    pub gap_repr: f64,
    /// Measured compatibility gap: profile-corrected one-sided
    /// extrapolation of the bulk interface values against the surface
    /// field (resolution limited, RMS over the box).
    pub gap_extrap: f64,
}

#[derive(Debug, Clone)]
pub struct TraceGapTable {
    pub rows: Vec<TraceGapRow>,
    pub max_repr: f64,
    pub max_extrap: f64,
}

/// Interface-trace consistency along a trajectory.
///
/// The representation gap lifts each stored temperature state by its own
/// surface field, pushes the remainder through the sine basis, and
/// measures the physical-space mismatch of the round trip: zero exactly
/// when the state is `sine span + theta_s * profile`, as solver output is.
pub fn trace_gap(traj: &Trajectory, params: &PhysParams) -> Result<TraceGapTable> {
    let grid = &traj.grid;
    let plan = TransformPlan::new(grid);
    let mut rows = Vec::new();
    for (slot, &idx) in traj.checkpoint_idx.iter().enumerate() {
        let state = &traj.states[slot];
        let lifted = crate::lift::lower_to_theta(
            &crate::lift::lift_to_u(state, grid, params, f64::INFINITY)?,
            grid,
            params,
        );
        // Round-trip sanity of the lift algebra itself.
        let mut alg_err: f64 = 0.0;
        for (x, y) in lifted.f_a.iter().zip(state.f_a.iter()) {
            alg_err = alg_err.max((x - y).abs());
        }
        let u = crate::lift::lift_to_u(state, grid, params, f64::INFINITY)?;
        let u_round = plan.from_spectral(&plan.to_spectral(&u));
        let mut repr: f64 = alg_err;
        for (x, y) in u.f_a.iter().zip(u_round.f_a.iter()) {
            repr = repr.max((x - y).abs());
        }
        for (x, y) in u.f_b.iter().zip(u_round.f_b.iter()) {
            repr = repr.max((x - y).abs());
        }
        rows.push(TraceGapRow {
            t: traj.times[idx],
            gap_repr: repr,
            gap_extrap: crate::lift::compat_gap(state, grid, params.beta),
        });
    }
    let max_repr = rows.iter().map(|r| r.gap_repr).fold(0.0, f64::max);
    let max_extrap = rows.iter().map(|r| r.gap_extrap).fold(0.0, f64::max);
    Ok(TraceGapTable {
        rows,
        max_repr,
        max_extrap,
    })
}

/// One sampled interior smoothness quotient.
#[derive(Debug, Clone, Copy)]
pub struct HolderRow {
    pub t1: f64,
    pub t2: f64,
    pub quotient: f64,
}

#[derive(Debug, Clone)]
pub struct HolderTable {
    pub rows: Vec<HolderRow>,
    pub max_quotient: f64,
}

/// Interior smoothness probe: `|L V(t2) - L V(t1)|_H / (t2 - t1)^q` over
/// stored checkpoint pairs inside `[eps, t_max]`, using the lifted spectral
/// states. Bounded quotients certify the interior Hoelder-type regularity
/// of the generator image at exponent `q`.
pub fn holder_probe(
    traj: &Trajectory,
    params: &PhysParams,
    q: f64,
    eps: f64,
    t_max: f64,
) -> Result<HolderTable> {
    if traj.spectral_states.is_empty() {
        return Err(Error::State(
            "smoothness probe needs stored spectral states".into(),
        ));
    }
    let grid = &traj.grid;
    let mut rows = Vec::new();
    let n = traj.checkpoint_idx.len();
    for i in 0..n {
        let ti = traj.times[traj.checkpoint_idx[i]];
        if ti < eps || ti > t_max {
            continue;
        }
        for j in (i + 1)..n {
            let tj = traj.times[traj.checkpoint_idx[j]];
            if tj > t_max {
                break;
            }
            let la = crate::spectral::apply_l_power(&traj.spectral_states[i], 1.0, grid, params)?;
            let lb = crate::spectral::apply_l_power(&traj.spectral_states[j], 1.0, grid, params)?;
            let diff = lb.axpy(-1.0, &la);
            let norm = crate::spectral::h_norm_spectral(&diff, grid);
            rows.push(HolderRow {
                t1: ti,
                t2: tj,
                quotient: norm / (tj - ti).powf(q),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::State(
            "no checkpoint pairs inside the probe window".into(),
        ));
    }
    let max_quotient = rows.iter().map(|r| r.quotient).fold(0.0, f64::max);
    Ok(HolderTable { rows, max_quotient })
}

/// Recompute ledger rows from stored checkpoints of a temperature
/// trajectory that carries no rows (external or oracle data): lift each
/// state, apply the closed-form profile algebra, integrate dissipation by
/// trapezoid over the checkpoint times.
pub fn recompute_energy_rows(
    traj: &Trajectory,
    params: &PhysParams,
) -> Result<Vec<EnergyRow>> {
    let grid = &traj.grid;
    let plan = TransformPlan::new(grid);
    let cache = LiftCache::new(grid, params.beta)?;
    let mut rows: Vec<EnergyRow> = Vec::new();
    let mut diss_integral = 0.0;
    let mut prev_diss = 0.0;
    let mut prev_t = 0.0;
    for (slot, &idx) in traj.checkpoint_idx.iter().enumerate() {
        let t = traj.times[idx];
        let state = &traj.states[slot];
        let u = crate::lift::lift_to_u(state, grid, params, f64::INFINITY)?;
        let c = plan.to_spectral(&u);
        let area = grid.l_h * grid.l_h;
        let s_sq: f64 = c.c_s.iter().map(|v| v.norm_sqr()).sum::<f64>() * area;
        let mut grad_s = 0.0;
        for i in 0..grid.n_h {
            for j in 0..grid.n_h {
                grad_s += grid.xi_sq(i, j) * c.c_s[[i, j]].norm_sqr();
            }
        }
        grad_s *= area;
        let diss_a = 2.0 * params.kappa_a * cache.bulk_dirichlet_sq(&c.c_a, &c.c_s, grid);
        let diss_b = 2.0 * params.kappa_b * cache.bulk_dirichlet_sq(&c.c_b, &c.c_s, grid);
        let diss_s = 2.0 * params.kappa_s_tilde * params.alpha_s * grad_s;
        let total = diss_a + diss_b + diss_s;
        if slot > 0 {
            diss_integral += 0.5 * (t - prev_t) * (prev_diss + total);
        }
        rows.push(EnergyRow {
            t,
            bulk_a_sq: cache.bulk_l2_sq(&c.c_a, &c.c_s, grid),
            bulk_b_sq: cache.bulk_l2_sq(&c.c_b, &c.c_s, grid),
            surf_sq: params.alpha_s * s_sq,
            diss_a,
            diss_b,
            diss_s,
            diss_integral,
        });
        prev_diss = total;
        prev_t = t;
    }
    Ok(rows)
}
