//! The state triple: two bulk temperature fields and one surface field,
//! with the product inner product that makes the coupled generator
//! self-adjoint.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::params::GridSpec;

/// One element of the product space `L2(upper slab) x L2(lower slab) x
/// L2(surface box)`, sampled on the grid.
///
/// `f_a[[i, j, k]]` is the upper-bulk value at horizontal node `(i, j)` and
/// height `z(k)`; `f_b` uses the same layout with `k` indexing *depth* below
/// the interface. `weight_s` scales the surface term of the inner product:
/// 1 for the plain product norm, `alpha_s` for the physical energy norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TriField {
    pub f_a: Array3<f64>,
    pub f_b: Array3<f64>,
    pub f_s: Array2<f64>,
    pub weight_s: f64,
}

impl TriField {
    /// Zero element on the given grid with unit surface weight.
    pub fn zeros(grid: &GridSpec) -> Self {
        TriField {
            f_a: Array3::zeros((grid.n_h, grid.n_h, grid.n_z)),
            f_b: Array3::zeros((grid.n_h, grid.n_h, grid.n_z)),
            f_s: Array2::zeros((grid.n_h, grid.n_h)),
            weight_s: 1.0,
        }
    }

    /// Build from closures of the physical coordinates. `a(x, y, z)` with
    /// `z > 0` the height above the interface, `b(x, y, d)` with `d > 0`
    /// the depth below it, `s(x, y)` on the interface.
    pub fn from_fn(
        grid: &GridSpec,
        a: impl Fn(f64, f64, f64) -> f64,
        b: impl Fn(f64, f64, f64) -> f64,
        s: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut f = TriField::zeros(grid);
        for i in 0..grid.n_h {
            let x = grid.x_h(i);
            for j in 0..grid.n_h {
                let y = grid.x_h(j);
                for k in 0..grid.n_z {
                    let z = grid.z(k);
                    f.f_a[[i, j, k]] = a(x, y, z);
                    f.f_b[[i, j, k]] = b(x, y, z);
                }
                f.f_s[[i, j]] = s(x, y);
            }
        }
        f
    }

    pub fn shape_matches(&self, grid: &GridSpec) -> bool {
        self.f_a.dim() == (grid.n_h, grid.n_h, grid.n_z)
            && self.f_b.dim() == (grid.n_h, grid.n_h, grid.n_z)
            && self.f_s.dim() == (grid.n_h, grid.n_h)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !self.shape_matches(grid) {
            return Err(Error::Config(format!(
                "field shape {:?}/{:?} does not match grid ({}, {}, {})",
                self.f_a.dim(),
                self.f_s.dim(),
                grid.n_h,
                grid.n_h,
                grid.n_z
            )));
        }
        let finite = self.f_a.iter().all(|v| v.is_finite())
            && self.f_b.iter().all(|v| v.is_finite())
            && self.f_s.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data("field contains non-finite entries".into()));
        }
        Ok(())
    }

    /// Componentwise linear combination `self + c * other`.
    pub fn axpy(&self, c: f64, other: &TriField) -> TriField {
        TriField {
            f_a: &self.f_a + &(c * &other.f_a),
            f_b: &self.f_b + &(c * &other.f_b),
            f_s: &self.f_s + &(c * &other.f_s),
            weight_s: self.weight_s,
        }
    }

    pub fn scale(&self, c: f64) -> TriField {
        TriField {
            f_a: c * &self.f_a,
            f_b: c * &self.f_b,
            f_s: c * &self.f_s,
            weight_s: self.weight_s,
        }
    }

    /// Same samples with the surface term reweighted (used to switch between
    /// the product norm and the physical energy norm).
    pub fn with_surface_weight(&self, w: f64) -> TriField {
        TriField {
            weight_s: w,
            ..self.clone()
        }
    }
}

/// Discrete inner product of the product space: midpoint quadrature in the
/// horizontal plane, trapezoid over interior sine nodes in the vertical
/// (wall values vanish, so the trapezoid reduces to a plain sum). The
/// surface term carries `f.weight_s`.
pub fn h_inner(f: &TriField, g: &TriField, grid: &GridSpec) -> Result<f64> {
    f.validate(grid)?;
    g.validate(grid)?;
    let wb = grid.w_bulk();
    let ws = grid.w_surf();
    let mut acc = 0.0;
    for (x, y) in f.f_a.iter().zip(g.f_a.iter()) {
        acc += x * y;
    }
    let mut accb = 0.0;
    for (x, y) in f.f_b.iter().zip(g.f_b.iter()) {
        accb += x * y;
    }
    let mut accs = 0.0;
    for (x, y) in f.f_s.iter().zip(g.f_s.iter()) {
        accs += x * y;
    }
    Ok(wb * (acc + accb) + ws * f.weight_s * accs)
}

/// Norm induced by [`h_inner`].
pub fn h_norm(f: &TriField, grid: &GridSpec) -> Result<f64> {
    Ok(h_inner(f, f, grid)?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn small_grid() -> GridSpec {
        GridSpec::new(16.0, 8, 8.0, 8, 0.1, 1.0).unwrap()
    }

    fn random_field(grid: &GridSpec, seed: u64) -> TriField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = TriField::zeros(grid);
        f.f_a.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        f.f_b.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        f.f_s.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        f
    }

    #[test]
    fn zero_inner_product_is_zero() {
        let g = small_grid();
        let z = TriField::zeros(&g);
        assert_eq!(h_inner(&z, &z, &g).unwrap(), 0.0);
    }

    #[test]
    fn constant_surface_field_integrates_to_box_area() {
        let g = small_grid();
        let mut f = TriField::zeros(&g);
        f.f_s.fill(1.0);
        let v = h_inner(&f, &f, &g).unwrap();
        assert!((v - g.l_h * g.l_h).abs() < 1e-12);
    }

    #[test]
    fn matches_nested_loop_quadrature_oracle() {
        let g = small_grid();
        let f = random_field(&g, 7);
        let h = random_field(&g, 11);
        // Independent brute-force quadrature: explicit nested loops over
        // every node with the same weights.
        let mut oracle = 0.0;
        for i in 0..g.n_h {
            for j in 0..g.n_h {
                for k in 0..g.n_z {
                    oracle += g.w_bulk()
                        * (f.f_a[[i, j, k]] * h.f_a[[i, j, k]]
                            + f.f_b[[i, j, k]] * h.f_b[[i, j, k]]);
                }
                oracle += g.w_surf() * f.f_s[[i, j]] * h.f_s[[i, j]];
            }
        }
        let got = h_inner(&f, &h, &g).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
    }

    #[test]
    fn single_sine_mode_norm_closed_form() {
        // f_a = sin(pi z / l_z) on the DC horizontal mode: norm l_h * sqrt(l_z/2).
        let g = small_grid();
        let f = TriField::from_fn(
            &g,
            |_, _, z| (std::f64::consts::PI * z / g.l_z).sin(),
            |_, _, _| 0.0,
            |_, _| 0.0,
        );
        let expected = g.l_h * (g.l_z / 2.0).sqrt();
        assert!((h_norm(&f, &g).unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = small_grid();
        let other = GridSpec::new(16.0, 4, 8.0, 4, 0.1, 1.0).unwrap();
        let f = TriField::zeros(&g);
        let h = TriField::zeros(&other);
        assert!(h_inner(&f, &h, &g).is_err());
    }

    #[test]
    fn surface_weight_scales_surface_term() {
        let g = small_grid();
        let mut f = TriField::zeros(&g);
        f.f_s.fill(1.0);
        let plain = h_inner(&f, &f, &g).unwrap();
        let weighted = h_inner(&f.with_surface_weight(4.0), &f, &g).unwrap();
        assert!((weighted - 4.0 * plain).abs() < 1e-12 * plain);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn inner_product_symmetric_bilinear(sa in -3.0f64..3.0, sb in -3.0f64..3.0, seed in 0u64..1000) {
            let g = small_grid();
            let f = random_field(&g, seed);
            let h = random_field(&g, seed.wrapping_add(1));
            let w = random_field(&g, seed.wrapping_add(2));
            let fg = h_inner(&f, &h, &g).unwrap();
            let gf = h_inner(&h, &f, &g).unwrap();
            prop_assert!((fg - gf).abs() < 1e-12 * fg.abs().max(1.0));
            let lin = h_inner(&f.scale(sa).axpy(sb, &w), &h, &g).unwrap();
            let expanded = sa * fg + sb * h_inner(&w, &h, &g).unwrap();
            prop_assert!((lin - expanded).abs() < 1e-11 * expanded.abs().max(1.0));
        }

        #[test]
        fn norm_triangle_inequality(seed in 0u64..100) {
            let g = small_grid();
            let f = random_field(&g, seed);
            let h = random_field(&g, seed.wrapping_add(77));
            let sum = h_norm(&f.axpy(1.0, &h), &g).unwrap();
            let parts = h_norm(&f, &g).unwrap() + h_norm(&h, &g).unwrap();
            prop_assert!(sum <= parts + 1e-12);
        }
    }
}
