//! Time-indexed solution data: checkpointed states, per-node energy ledger
//! rows, and the norm traces behind the window norm
//! `sup_t |v|_H + |dv/dt|_{L2(H)} + |L v|_{L2(H)}`.

use crate::error::{Error, Result};
use crate::field::TriField;
use crate::params::GridSpec;
use crate::spectral::SpectralTri;

/// One ledger row: the squared energy terms and dissipation rates of the
/// temperature variables at one time node, plus the running time integral
/// of the total dissipation (trapezoid, matching the stepper's order).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    /// `|theta_a|^2`.
    pub bulk_a_sq: f64,
    /// `|theta_b|^2`.
    pub bulk_b_sq: f64,
    /// `alpha_s |theta_s|^2`.
    pub surf_sq: f64,
    /// `2 kappa_a |grad theta_a|^2`.
    pub diss_a: f64,
    /// `2 kappa_b |grad theta_b|^2`.
    pub diss_b: f64,
    /// `2 kappa_s_tilde alpha_s |grad_h theta_s|^2`.
    pub diss_s: f64,
    /// Cumulative `int_0^t (diss_a + diss_b + diss_s)`.
    pub diss_integral: f64,
}

impl EnergyRow {
    pub fn total_energy(&self) -> f64 {
        self.bulk_a_sq + self.bulk_b_sq + self.surf_sq
    }

    /// The conserved combination: energy plus accumulated dissipation.
    pub fn balance(&self) -> f64 {
        self.total_energy() + self.diss_integral
    }
}

/// Per-node squared norms of a spectral trajectory: the product-space norm
/// of the state, of its stored derivative, and of the generator applied to
/// it. Sufficient to evaluate the window norm without retaining fields.
#[derive(Debug, Clone, Default)]
pub struct NormTrace {
    pub h_sq: Vec<f64>,
    pub deriv_sq: Vec<f64>,
    pub gen_sq: Vec<f64>,
}

/// Trapezoid-in-time window norm from a norm trace on a uniform grid.
pub fn xt_norm_from_trace(trace: &NormTrace, dt: f64) -> Result<f64> {
    let n = trace.h_sq.len();
    if n == 0 || trace.deriv_sq.len() != n || trace.gen_sq.len() != n {
        return Err(Error::State(
            "norm trace empty or derivative norms missing".into(),
        ));
    }
    let sup = trace.h_sq.iter().cloned().fold(0.0f64, f64::max).sqrt();
    let quad = |v: &[f64]| -> f64 {
        if v.len() == 1 {
            return 0.0;
        }
        let mut acc = 0.5 * (v[0] + v[n - 1]);
        for x in &v[1..n - 1] {
            acc += x;
        }
        (acc * dt).max(0.0).sqrt()
    };
    Ok(sup + quad(&trace.deriv_sq) + quad(&trace.gen_sq))
}

/// A computed trajectory in temperature variables.
///
/// `times` covers every time node; full fields are stored only at
/// `checkpoint_idx` (always including the initial node, the first few nodes
/// for short-time diagnostics, and the final node). `energy` has one row
/// per node. Solver output additionally carries the lifted spectral states
/// at the checkpoints and the norm trace of the lifted evolution; oracle
/// output leaves those empty.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub checkpoint_idx: Vec<usize>,
    pub states: Vec<TriField>,
    pub derivs: Vec<TriField>,
    pub spectral_states: Vec<SpectralTri>,
    pub energy: Vec<EnergyRow>,
    pub norm_trace: Option<NormTrace>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// Stored state at the checkpoint closest to time `t` (exact match
    /// expected; errs when no checkpoint lies within half a step).
    pub fn state_at(&self, t: f64) -> Result<&TriField> {
        let dt = self.dt().max(f64::MIN_POSITIVE);
        for (slot, &idx) in self.checkpoint_idx.iter().enumerate() {
            if (self.times[idx] - t).abs() < 0.5 * dt {
                return Ok(&self.states[slot]);
            }
        }
        Err(Error::State(format!("no checkpoint stored near t = {t}")))
    }

    pub fn final_state(&self) -> &TriField {
        self.states.last().expect("trajectory stores the final state")
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        self.checkpoint_idx.iter().map(|&i| self.times[i]).collect()
    }
}

/// Window norm of a solver trajectory: requires the stored norm trace
/// (populated by the spectral solver; the trapezoid runs over every node).
pub fn xt_norm(traj: &Trajectory) -> Result<f64> {
    match &traj.norm_trace {
        Some(trace) => xt_norm_from_trace(trace, traj.dt()),
        None => Err(Error::State(
            "trajectory carries no derivative norm trace; window norm undefined".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trace_gives_zero_norm() {
        let n = 11;
        let trace = NormTrace {
            h_sq: vec![0.0; n],
            deriv_sq: vec![0.0; n],
            gen_sq: vec![0.0; n],
        };
        assert_eq!(xt_norm_from_trace(&trace, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn missing_derivs_is_state_error() {
        let trace = NormTrace {
            h_sq: vec![1.0; 4],
            deriv_sq: vec![1.0; 3],
            gen_sq: vec![1.0; 4],
        };
        assert!(xt_norm_from_trace(&trace, 0.1).is_err());
    }

    #[test]
    fn single_mode_decay_closed_form() {
        // v(t) = e^{-lambda t} v0 with |v0| = c: window norm
        // c (1 + 2 lambda sqrt((1 - e^{-2 lambda T}) / (2 lambda))).
        let lambda = 1.3;
        let c = 0.8;
        let t_end = 1.0;
        let n = 5001;
        let dt = t_end / (n - 1) as f64;
        let mut trace = NormTrace::default();
        for j in 0..n {
            let t = j as f64 * dt;
            let v_sq = (c * (-lambda * t).exp()).powi(2);
            trace.h_sq.push(v_sq);
            trace.deriv_sq.push(lambda * lambda * v_sq);
            trace.gen_sq.push(lambda * lambda * v_sq);
        }
        let got = xt_norm_from_trace(&trace, dt).unwrap();
        let integral = (1.0 - (-2.0 * lambda * t_end).exp()) / (2.0 * lambda);
        let expected = c * (1.0 + 2.0 * lambda * integral.sqrt());
        assert!(
            (got - expected).abs() < 1e-6 * expected,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn energy_row_balance_combines_terms() {
        let row = EnergyRow {
            t: 0.5,
            bulk_a_sq: 1.0,
            bulk_b_sq: 2.0,
            surf_sq: 3.0,
            diss_a: 0.0,
            diss_b: 0.0,
            diss_s: 0.0,
            diss_integral: 4.0,
        };
        assert_eq!(row.total_energy(), 6.0);
        assert_eq!(row.balance(), 10.0);
    }
}
