//! Physical parameters and the truncated tensor grid.
//!
//! The unbounded geometry (two half spaces joined along a plane) is replaced
//! by a periodic horizontal box of side `l_h` and vertical slabs of depth
//! `l_z` on each side of the interface, with a homogeneous Dirichlet
//! condition at the far walls. All quantities are dimensionless.

use crate::error::{Error, Result};

/// Constant coefficients of the three-phase heat system.
///
/// `kappa_s` is derived, never set independently: the surface equation is
/// written with the reduced diffusivity `kappa_s_tilde`, and the physical
/// surface conductivity is `kappa_s = kappa_s_tilde * alpha_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Bulk conductivity in the upper half space.
    pub kappa_a: f64,
    /// Bulk conductivity in the lower half space.
    pub kappa_b: f64,
    /// Reduced surface diffusivity.
    pub kappa_s_tilde: f64,
    /// Surface mass coefficient (heat capacity per unit area).
    pub alpha_s: f64,
    /// Decay rate of the exponential lift profile.
    pub beta: f64,
}

impl PhysParams {
    pub fn new(
        kappa_a: f64,
        kappa_b: f64,
        kappa_s_tilde: f64,
        alpha_s: f64,
        beta: f64,
    ) -> Result<Self> {
        let p = PhysParams {
            kappa_a,
            kappa_b,
            kappa_s_tilde,
            alpha_s,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Surface conductivity, `kappa_s_tilde * alpha_s` by standing assumption.
    pub fn kappa_s(&self) -> f64 {
        self.kappa_s_tilde * self.alpha_s
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("kappa_a", self.kappa_a),
            ("kappa_b", self.kappa_b),
            ("kappa_s_tilde", self.kappa_s_tilde),
            ("alpha_s", self.alpha_s),
            ("beta", self.beta),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for PhysParams {
    /// Desk-scale defaults used throughout the test scenarios.
    fn default() -> Self {
        PhysParams {
            kappa_a: 0.5,
            kappa_b: 0.5,
            kappa_s_tilde: 1.0,
            alpha_s: 8.0,
            beta: 1.0,
        }
    }
}

/// Truncated tensor grid: periodic box in the horizontal plane, interior
/// sine nodes in the vertical, uniform time step.
///
/// Horizontal nodes sit at `i * l_h / n_h`; wavenumbers run over
/// `(2*pi/l_h) * {-n_h/2, ..., n_h/2 - 1}` per axis in FFT order. Vertical
/// interior nodes sit at `j * l_z / (n_z + 1)` for `j = 1..=n_z` (depth on
/// the lower side); sine wavenumbers are `k_n = n*pi/l_z`, `n = 1..=n_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Horizontal box side.
    pub l_h: f64,
    /// Horizontal points per axis (even).
    pub n_h: usize,
    /// Vertical slab depth on each side.
    pub l_z: f64,
    /// Interior vertical points per side.
    pub n_z: usize,
    /// Time step.
    pub dt: f64,
    /// Final time; `t_end / dt` must be an integer.
    pub t_end: f64,
}

impl GridSpec {
    pub fn new(l_h: f64, n_h: usize, l_z: f64, n_z: usize, dt: f64, t_end: f64) -> Result<Self> {
        let g = GridSpec {
            l_h,
            n_h,
            l_z,
            n_z,
            dt,
            t_end,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_h > 0.0 && self.l_z > 0.0 && self.dt > 0.0 && self.t_end > 0.0) {
            return Err(Error::Config(
                "l_h, l_z, dt, t_end must be strictly positive".into(),
            ));
        }
        if self.n_h == 0 || self.n_h % 2 != 0 {
            return Err(Error::Config(format!(
                "n_h must be even and positive, got {}",
                self.n_h
            )));
        }
        if self.n_z == 0 {
            return Err(Error::Config("n_z must be positive".into()));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Config(format!(
                "t_end/dt must be an integer number of steps, got {steps}"
            )));
        }
        Ok(())
    }

    /// Number of time steps, `t_end / dt`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Horizontal mesh width.
    pub fn h_h(&self) -> f64 {
        self.l_h / self.n_h as f64
    }

    /// Vertical mesh width (node spacing including the wall gaps).
    pub fn h_z(&self) -> f64 {
        self.l_z / (self.n_z + 1) as f64
    }

    /// Horizontal wavenumber for FFT index `i` along one axis.
    pub fn xi(&self, i: usize) -> f64 {
        let n = self.n_h as isize;
        let i = i as isize;
        let m = if i < n / 2 { i } else { i - n };
        2.0 * std::f64::consts::PI / self.l_h * m as f64
    }

    /// Vertical sine wavenumber `k_n = n*pi/l_z` for mode index `m = n - 1`.
    pub fn k_z(&self, m: usize) -> f64 {
        (m + 1) as f64 * std::f64::consts::PI / self.l_z
    }

    /// Vertical coordinate (distance from the interface) of node index `j`.
    pub fn z(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.h_z()
    }

    /// Horizontal coordinate of node index `i`.
    pub fn x_h(&self, i: usize) -> f64 {
        i as f64 * self.h_h()
    }

    /// Squared horizontal wavenumber, `|xi|^2`, for the mode pair `(i, j)`.
    pub fn xi_sq(&self, i: usize, j: usize) -> f64 {
        let a = self.xi(i);
        let b = self.xi(j);
        a * a + b * b
    }

    /// Quadrature weight of one bulk sample (midpoint in the plane,
    /// trapezoid over interior sine nodes in the vertical).
    pub fn w_bulk(&self) -> f64 {
        self.h_h() * self.h_h() * self.h_z()
    }

    /// Quadrature weight of one surface sample.
    pub fn w_surf(&self) -> f64 {
        self.h_h() * self.h_h()
    }

    /// Grid with the same box but a different time step (`t_end` preserved).
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        GridSpec::new(self.l_h, self.n_h, self.l_z, self.n_z, dt, self.t_end)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            l_h: 16.0,
            n_h: 32,
            l_z: 8.0,
            n_z: 32,
            dt: 1e-3,
            t_end: 1.0,
        }
    }
}
