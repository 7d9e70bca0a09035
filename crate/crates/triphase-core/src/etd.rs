//! Scalar exponential-integrator weights.
//!
//! Each spectral mode obeys `v' = -lambda v + F(t)`. With `F` taken
//! piecewise linear between nodes the Duhamel integral is evaluated exactly
//! by the phi-function weights below, so the homogeneous part of the flow
//! is reproduced to machine precision at every step.

/// `phi1(z) = (e^z - 1)/z`, stable near zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

/// `phi2(z) = (e^z - 1 - z)/z^2`, stable near zero.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Precomputed one-step weights for a single eigenvalue and step size:
/// `v_next = decay * v + w_prev * F(t_j) + w_next * F(t_{j+1})`.
#[derive(Debug, Clone, Copy)]
pub struct StepWeights {
    pub decay: f64,
    pub w_prev: f64,
    pub w_next: f64,
}

impl StepWeights {
    pub fn new(lambda: f64, dt: f64) -> Self {
        let z = -lambda * dt;
        let p1 = phi1(z);
        let p2 = phi2(z);
        StepWeights {
            decay: z.exp(),
            w_prev: dt * (p1 - p2),
            w_next: dt * p2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_match_direct_formulas() {
        // The naive formulas are themselves accurate away from zero.
        for z in [-3.0, -0.9, -0.05] {
            let p1 = phi1(z);
            let p2 = phi2(z);
            assert!((p1 - (z.exp() - 1.0) / z).abs() < 1e-12);
            assert!((p2 - (z.exp() - 1.0 - z) / (z * z)).abs() < 1e-10);
        }
        for z in [-1e-5, -1e-7, 0.0] {
            assert!((phi1(z) - 1.0).abs() < 1e-4);
            assert!((phi2(z) - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_forcing_is_integrated_exactly() {
        // v' = -lambda v + f, v(0) = 0 has v(t) = (1 - e^{-lambda t}) f / lambda.
        let lambda = 2.3;
        let dt = 0.07;
        let f = 1.37;
        let w = StepWeights::new(lambda, dt);
        let mut v = 0.0;
        for j in 0..40 {
            v = w.decay * v + (w.w_prev + w.w_next) * f;
            let t = (j + 1) as f64 * dt;
            let exact = (1.0 - (-lambda * t).exp()) * f / lambda;
            assert!((v - exact).abs() < 1e-14 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn zero_eigenvalue_reduces_to_trapezoid() {
        let w = StepWeights::new(0.0, 0.1);
        assert!((w.decay - 1.0).abs() < 1e-15);
        assert!((w.w_prev - 0.05).abs() < 1e-9);
        assert!((w.w_next - 0.05).abs() < 1e-9);
    }

    #[test]
    fn linear_forcing_is_integrated_exactly() {
        // v' = -lambda v + (a + b t): closed form via phi functions.
        let lambda = 1.7;
        let dt = 0.05;
        let (a, b) = (0.4, -2.2);
        let w = StepWeights::new(lambda, dt);
        let mut v = 0.0;
        let mut t = 0.0;
        for _ in 0..60 {
            let f0 = a + b * t;
            let f1 = a + b * (t + dt);
            v = w.decay * v + w.w_prev * f0 + w.w_next * f1;
            t += dt;
            // Exact solution with v(0)=0: particular + homogeneous.
            // v_p(t) = (a + b t)/lambda - b/lambda^2; v = v_p + C e^{-lambda t}.
            let c = -(a / lambda - b / (lambda * lambda));
            let exact = (a + b * t) / lambda - b / (lambda * lambda) + c * (-lambda * t).exp();
            assert!((v - exact).abs() < 1e-13 * exact.abs().max(1.0));
        }
    }
}
