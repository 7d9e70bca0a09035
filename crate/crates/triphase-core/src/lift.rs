//! Change of variables between interface-matched temperatures and
//! homogeneous-Dirichlet bulk unknowns.
//!
//! The lift subtracts `theta_s * exp(-beta z)` from each bulk field (`z`
//! measured away from the interface on either side), so the transformed
//! bulk fields carry zero interface trace and live in the sine basis. All
//! integrals against the exponential profile have closed forms, collected
//! once per `(beta, grid)` in [`LiftCache`]; the coupled energy functionals
//! of lowered states are evaluated through these exact formulas rather than
//! by pushing the profile through the sine transform.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::coupling::{trace_minus_extrapolated, trace_plus_extrapolated};
use crate::error::{Error, Result};
use crate::field::TriField;
use crate::params::{GridSpec, PhysParams};

/// Vertical extent used when integrating the squared lift profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerticalExtent {
    /// Truncated slab `(0, l_z)`; differs from the half line by
    /// `exp(-2 beta l_z)` in the squared integral.
    Slab,
    /// Untruncated half line `(0, inf)`; reproduces the exact weighted-norm
    /// constant `1/sqrt(2 beta)`.
    HalfLine,
}

/// Closed-form integrals of the lift profile `E(z) = exp(-beta z)` against
/// the vertical sine basis on one slab, plus the node samples.
///
/// `sigma[m]` is `int_0^lz sin(k_n z) E(z) dz` for `n = m + 1`, `sine_coef`
/// the L2-projection coefficients `(2/l_z) sigma`, `w0` the slab integral of
/// `E^2`, and `unresolved_mass` the squared projection error
/// `|E - P E|^2_{L2(0, l_z)}`, the profile mass invisible to the sine
/// basis at this resolution.
#[derive(Debug, Clone)]
pub struct LiftCache {
    pub beta: f64,
    pub l_z: f64,
    /// Node samples `E(z_j)`.
    pub nodes: Vec<f64>,
    /// `int sin(k_n z) E dz`, closed form.
    pub sigma: Vec<f64>,
    /// L2-projection coefficients of `E` on the sine basis.
    pub sine_coef: Vec<f64>,
    /// `int_0^lz E^2 dz`.
    pub w0: f64,
    /// `int_0^inf E^2 dz = 1/(2 beta)`.
    pub w0_halfline: f64,
    /// `w0 - sum sine_coef_n * sigma_n`; nonnegative.
    pub unresolved_mass: f64,
}

impl LiftCache {
    pub fn new(grid: &GridSpec, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        let l_z = grid.l_z;
        let wall = (-beta * l_z).exp();
        let nodes: Vec<f64> = (0..grid.n_z).map(|j| (-beta * grid.z(j)).exp()).collect();
        let mut sigma = Vec::with_capacity(grid.n_z);
        let mut sine_coef = Vec::with_capacity(grid.n_z);
        for m in 0..grid.n_z {
            let k = grid.k_z(m);
            let parity: f64 = if (m + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let mu = 1.0 - parity * wall;
            let s = k * mu / (beta * beta + k * k);
            sigma.push(s);
            sine_coef.push(2.0 / l_z * s);
        }
        let w0 = (1.0 - (-2.0 * beta * l_z).exp()) / (2.0 * beta);
        let captured: f64 = sigma
            .iter()
            .zip(sine_coef.iter())
            .map(|(s, e)| s * e)
            .sum();
        let cache = LiftCache {
            beta,
            l_z,
            nodes,
            sigma,
            sine_coef,
            w0,
            w0_halfline: 1.0 / (2.0 * beta),
            unresolved_mass: (w0 - captured).max(0.0),
        };
        Ok(cache)
    }

    /// Fraction of the profile's slab L2 mass captured by the sine basis.
    pub fn capture_fraction(&self) -> f64 {
        1.0 - self.unresolved_mass / self.w0
    }

    /// Squared L2 norm over one slab (and box) of `u + s * E`, with `u`
    /// given by bulk sine/Fourier coefficients and `s` by surface Fourier
    /// coefficients. Exact for the represented function.
    pub fn bulk_l2_sq(
        &self,
        coef: &Array3<Complex64>,
        s: &Array2<Complex64>,
        grid: &GridSpec,
    ) -> f64 {
        let area = grid.l_h * grid.l_h;
        let half = grid.l_z / 2.0;
        let (nh, _, nz) = coef.dim();
        let ca = coef.as_slice().expect("standard layout");
        let cs = s.as_slice().expect("standard layout");
        let mut total = 0.0;
        for r in 0..nh * nh {
            let sv = cs[r];
            let b = r * nz;
            let mut pure = 0.0;
            let mut cross = Complex64::default();
            for m in 0..nz {
                let a = ca[b + m];
                pure += a.norm_sqr();
                cross += a * self.sigma[m];
            }
            total += half * pure + 2.0 * (cross * sv.conj()).re + sv.norm_sqr() * self.w0;
        }
        area * total
    }

    /// Squared Dirichlet seminorm `|grad (u + s E)|^2` over one slab,
    /// via the same closed-form profile integrals.
    pub fn bulk_dirichlet_sq(
        &self,
        coef: &Array3<Complex64>,
        s: &Array2<Complex64>,
        grid: &GridSpec,
    ) -> f64 {
        let area = grid.l_h * grid.l_h;
        let half = grid.l_z / 2.0;
        let b2 = self.beta * self.beta;
        let (nh, _, nz) = coef.dim();
        let ca = coef.as_slice().expect("standard layout");
        let cs = s.as_slice().expect("standard layout");
        let k2: Vec<f64> = (0..nz).map(|m| grid.k_z(m) * grid.k_z(m)).collect();
        let mut total = 0.0;
        for r in 0..nh * nh {
            let xi2 = grid.xi_sq(r / nh, r % nh);
            let sv = cs[r];
            let b = r * nz;
            let mut pure = 0.0;
            let mut cross = Complex64::default();
            for m in 0..nz {
                let a = ca[b + m];
                pure += (xi2 + k2[m]) * a.norm_sqr();
                cross += a * self.sigma[m];
            }
            total += half * pure
                + 2.0 * (xi2 - b2) * (cross * sv.conj()).re
                + sv.norm_sqr() * (xi2 + b2) * self.w0;
        }
        area * total
    }
}

/// Trace-compatibility gap of a temperature triple: the larger of
/// `|gamma_plus[theta_a] - theta_s|` and `|gamma_minus[theta_b] - theta_s|`
/// in the discrete surface L2 norm, with traces extrapolated from the first
/// interior nodes.
pub fn trace_gap_of(theta: &TriField, grid: &GridSpec) -> f64 {
    let ga = trace_plus_extrapolated(&theta.f_a);
    let gb = trace_minus_extrapolated(&theta.f_b);
    let ws = grid.w_surf();
    let mut gap_a = 0.0;
    let mut gap_b = 0.0;
    for i in 0..grid.n_h {
        for j in 0..grid.n_h {
            let s = theta.f_s[[i, j]];
            gap_a += (ga[[i, j]] - s).powi(2);
            gap_b += (gb[[i, j]] - s).powi(2);
        }
    }
    (ws * gap_a).sqrt().max((ws * gap_b).sqrt())
}

/// Compatibility gate measurement: root-mean-square extrapolated interface
/// value of the *lifted* bulk remainder `theta - theta_s * exp(-beta z)`.
/// Subtracting the carried profile before extrapolating cancels the
/// extrapolation error of the profile itself, so smooth compatible data
/// measures near zero while a genuine surface mismatch of size `delta`
/// measures as `delta`.
pub fn compat_gap(theta: &TriField, grid: &GridSpec, beta: f64) -> f64 {
    let mut shifted = theta.clone();
    for k in 0..grid.n_z.min(3) {
        let e = (-beta * grid.z(k)).exp();
        for i in 0..grid.n_h {
            for j in 0..grid.n_h {
                let carried = theta.f_s[[i, j]] * e;
                shifted.f_a[[i, j, k]] -= carried;
                shifted.f_b[[i, j, k]] -= carried;
            }
        }
    }
    let ga = trace_plus_extrapolated(&shifted.f_a);
    let gb = trace_minus_extrapolated(&shifted.f_b);
    let n = (grid.n_h * grid.n_h) as f64;
    let mut gap_a = 0.0;
    let mut gap_b = 0.0;
    for v in ga.iter() {
        gap_a += v * v;
    }
    for v in gb.iter() {
        gap_b += v * v;
    }
    (gap_a / n).sqrt().max((gap_b / n).sqrt())
}

/// Subtract the exponential carrier of the surface field from both bulk
/// fields. Rejects data whose interface traces disagree with the surface
/// field by more than `trace_tol` (measured gap attached to the error).
pub fn lift_to_u(
    theta: &TriField,
    grid: &GridSpec,
    params: &PhysParams,
    trace_tol: f64,
) -> Result<TriField> {
    theta.validate(grid)?;
    let gap = compat_gap(theta, grid, params.beta);
    if gap > trace_tol {
        return Err(Error::Data(format!(
            "interface traces incompatible with surface field: gap {gap:.3e} exceeds tolerance {trace_tol:.3e}"
        )));
    }
    Ok(apply_lift(theta, grid, params, -1.0))
}

/// Exact algebraic inverse of [`lift_to_u`].
pub fn lower_to_theta(u: &TriField, grid: &GridSpec, params: &PhysParams) -> TriField {
    apply_lift(u, grid, params, 1.0)
}

fn apply_lift(f: &TriField, grid: &GridSpec, params: &PhysParams, sign: f64) -> TriField {
    let mut out = f.clone();
    for k in 0..grid.n_z {
        let profile = (-params.beta * grid.z(k)).exp();
        for i in 0..grid.n_h {
            for j in 0..grid.n_h {
                let shift = sign * f.f_s[[i, j]] * profile;
                out.f_a[[i, j, k]] += shift;
                out.f_b[[i, j, k]] += shift;
            }
        }
    }
    out
}

/// Replace the surface component by the mean extrapolated bulk trace,
/// making the triple compatible by construction. Explicit experiment-setup
/// helper; the lift itself never projects silently.
pub fn project_compatible(theta: &TriField, grid: &GridSpec) -> TriField {
    let ga = trace_plus_extrapolated(&theta.f_a);
    let gb = trace_minus_extrapolated(&theta.f_b);
    let mut out = theta.clone();
    for i in 0..grid.n_h {
        for j in 0..grid.n_h {
            out.f_s[[i, j]] = 0.5 * (ga[[i, j]] + gb[[i, j]]);
        }
    }
    out
}

/// Weighted norm of a surface field carried into the bulk by the lift
/// profile: `| exp(-/+ beta z) f_s |_{L2}`. The vertical factor is the
/// closed-form integral of the squared exponential over the requested
/// extent; the horizontal factor is the discrete surface norm. For the half
/// line the ratio to `|f_s|` is exactly `1/sqrt(2 beta)`; the slab value
/// falls short by `exp(-2 beta l_z)` in the square.
pub fn weighted_surface_norm(
    f_s: &Array2<f64>,
    grid: &GridSpec,
    params: &PhysParams,
    extent: VerticalExtent,
) -> f64 {
    let beta = params.beta;
    let vertical_sq = match extent {
        VerticalExtent::Slab => (1.0 - (-2.0 * beta * grid.l_z).exp()) / (2.0 * beta),
        VerticalExtent::HalfLine => 1.0 / (2.0 * beta),
    };
    let surf_sq: f64 = f_s.iter().map(|v| v * v).sum::<f64>() * grid.w_surf();
    (surf_sq * vertical_sq).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid() -> GridSpec {
        GridSpec::new(16.0, 8, 8.0, 16, 0.1, 1.0).unwrap()
    }

    fn params_with_beta(beta: f64) -> PhysParams {
        PhysParams::new(0.5, 0.5, 1.0, 8.0, beta).unwrap()
    }

    fn surface_bump(grid: &GridSpec) -> TriField {
        let c = grid.l_h / 2.0;
        TriField::from_fn(
            grid,
            |_, _, _| 0.0,
            |_, _, _| 0.0,
            |x, y| (-(x - c).powi(2) - (y - c).powi(2)).exp(),
        )
    }

    #[test]
    fn sigma_matches_fine_quadrature() {
        let g = grid();
        let cache = LiftCache::new(&g, 1.3).unwrap();
        let fine = 200_000;
        let dz = g.l_z / fine as f64;
        for m in [0, 1, 4, g.n_z - 1] {
            let k = g.k_z(m);
            let mut acc = 0.0;
            for q in 0..fine {
                let z = (q as f64 + 0.5) * dz;
                acc += (k * z).sin() * (-1.3 * z).exp();
            }
            acc *= dz;
            assert!(
                (acc - cache.sigma[m]).abs() < 1e-9,
                "mode {m}: quadrature {acc} vs closed form {}",
                cache.sigma[m]
            );
        }
    }

    #[test]
    fn unresolved_mass_is_small_nonnegative_fraction() {
        let g = grid();
        let cache = LiftCache::new(&g, 1.0).unwrap();
        assert!(cache.unresolved_mass >= 0.0);
        assert!(cache.capture_fraction() > 0.75);
        assert!(cache.capture_fraction() <= 1.0);
    }

    #[test]
    fn pure_profile_lifts_to_zero_bulk() {
        let g = grid();
        let p = params_with_beta(1.0);
        let mut theta = surface_bump(&g);
        for k in 0..g.n_z {
            let e = (-p.beta * g.z(k)).exp();
            for i in 0..g.n_h {
                for j in 0..g.n_h {
                    theta.f_a[[i, j, k]] = theta.f_s[[i, j]] * e;
                    theta.f_b[[i, j, k]] = theta.f_s[[i, j]] * e;
                }
            }
        }
        let u = lift_to_u(&theta, &g, &p, 1e-10).unwrap();
        assert!(u.f_a.iter().all(|v| v.abs() < 1e-14));
        assert!(u.f_b.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(u.f_s, theta.f_s);
    }

    #[test]
    fn zero_surface_field_lifts_identically() {
        let g = grid();
        let p = params_with_beta(2.0);
        let theta = TriField::from_fn(
            &g,
            |_, _, z| (std::f64::consts::PI * z / g.l_z).sin(),
            |_, _, z| 0.4 * (std::f64::consts::PI * z / g.l_z).sin(),
            |_, _| 0.0,
        );
        let u = lift_to_u(&theta, &g, &p, 0.01).unwrap();
        assert_eq!(u, theta);
    }

    #[test]
    fn incompatible_traces_are_rejected_with_gap() {
        let g = grid();
        let p = params_with_beta(1.0);
        let mut theta = surface_bump(&g);
        theta.f_s.mapv_inplace(|v| v + 0.5);
        let err = lift_to_u(&theta, &g, &p, 0.02).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("gap"), "unexpected message: {msg}");
        let fixed = project_compatible(&theta, &g);
        assert!(lift_to_u(&fixed, &g, &p, 0.02).is_ok());
    }

    #[test]
    fn weighted_norm_beta_two_is_half() {
        let g = grid();
        let p = params_with_beta(2.0);
        let mut f_s = Array2::zeros((g.n_h, g.n_h));
        // Normalize to unit surface norm.
        f_s[[3, 4]] = 1.0 / g.w_surf().sqrt();
        let half_line = weighted_surface_norm(&f_s, &g, &p, VerticalExtent::HalfLine);
        assert!((half_line - 0.5).abs() < 1e-14);
        let slab = weighted_surface_norm(&f_s, &g, &p, VerticalExtent::Slab);
        let trunc = (-2.0 * p.beta * g.l_z).exp();
        assert!(slab <= half_line);
        assert!((half_line - slab) < trunc * half_line);
        assert_eq!(
            weighted_surface_norm(&Array2::zeros((g.n_h, g.n_h)), &g, &p, VerticalExtent::Slab),
            0.0
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn weighted_norm_inequality_random(beta in 0.3f64..5.0, seed in 0u64..10_000) {
            let g = grid();
            let p = params_with_beta(beta);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut f_s = Array2::zeros((g.n_h, g.n_h));
            f_s.mapv_inplace(|_: f64| rng.gen_range(-1.0..1.0));
            let surf: f64 = f_s.iter().map(|v| v * v).sum::<f64>() * g.w_surf();
            let bound = surf.sqrt() / (2.0 * beta).sqrt();
            for extent in [VerticalExtent::Slab, VerticalExtent::HalfLine] {
                let v = weighted_surface_norm(&f_s, &g, &p, extent);
                prop_assert!(v <= bound * (1.0 + 1e-12));
            }
        }

        #[test]
        fn lift_round_trip_identity(seed in 0u64..1000) {
            let g = grid();
            let p = params_with_beta(1.7);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut theta = surface_bump(&g);
            theta.f_a.mapv_inplace(|v| v + 0.01 * rng.gen_range(-1.0f64..1.0));
            theta.f_b.mapv_inplace(|v| v + 0.01 * rng.gen_range(-1.0f64..1.0));
            let u = apply_lift(&theta, &g, &p, -1.0);
            let back = lower_to_theta(&u, &g, &p);
            for (x, y) in theta.f_a.iter().zip(back.f_a.iter()) {
                prop_assert!((x - y).abs() < 1e-14);
            }
            for (x, y) in theta.f_b.iter().zip(back.f_b.iter()) {
                prop_assert!((x - y).abs() < 1e-14);
            }
            prop_assert_eq!(&theta.f_s, &back.f_s);
        }
    }

    #[test]
    fn lifted_field_has_machine_zero_spectral_trace() {
        // The sine representation of the lifted bulk carries zero interface
        // value; the extrapolated trace is bounded by the input gap.
        let g = grid();
        let p = params_with_beta(1.0);
        let mut theta = surface_bump(&g);
        for k in 0..g.n_z {
            let e = (-p.beta * g.z(k)).exp();
            let z = g.z(k);
            for i in 0..g.n_h {
                for j in 0..g.n_h {
                    let interior = (std::f64::consts::PI * z / g.l_z).sin() * 0.3;
                    theta.f_a[[i, j, k]] = theta.f_s[[i, j]] * e + interior;
                    theta.f_b[[i, j, k]] = theta.f_s[[i, j]] * e;
                }
            }
        }
        let gap = trace_gap_of(&theta, &g);
        let u = lift_to_u(&theta, &g, &p, 1.0).unwrap();
        let gu = trace_plus_extrapolated(&u.f_a);
        let ws = g.w_surf();
        let trace_norm: f64 = (gu.iter().map(|v| v * v).sum::<f64>() * ws).sqrt();
        assert!(trace_norm <= gap + 1e-12);
    }
}
