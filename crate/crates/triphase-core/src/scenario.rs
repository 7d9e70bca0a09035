//! Initial-data families for experiments and tests. Each family produces
//! closures over physical coordinates so that different solvers can sample
//! the same data on their own grids, plus a sampled state triple on a
//! given grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::TriField;
use crate::params::{GridSpec, PhysParams};

/// A single bulk bump: center, width, amplitude.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub width: f64,
    pub amp: f64,
}

impl Bump {
    fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        self.amp
            * (-((x - self.cx).powi(2) + (y - self.cy).powi(2) + (z - self.cz).powi(2))
                / (self.width * self.width))
                .exp()
    }
}

/// A single product mode `amp * sin(k_z z) * cos(xi x)` (vanishes on the
/// interface, so it never disturbs compatibility).
#[derive(Debug, Clone, Copy)]
pub struct BulkMode {
    pub amp: f64,
    pub k_z: f64,
    pub xi: f64,
}

/// Initial data: interior Gaussian bumps on each side plus a surface
/// component carried into the bulk by the exponential lift profile, so the
/// triple is interface-compatible by construction. Optional product modes
/// add exactly representable spectral content.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub bumps_a: Vec<Bump>,
    pub bumps_b: Vec<Bump>,
    /// Surface Gaussian bumps (cx, cy, width, amp).
    pub bumps_s: Vec<(f64, f64, f64, f64)>,
    pub modes_a: Vec<BulkMode>,
    pub modes_b: Vec<BulkMode>,
    pub beta: f64,
}

impl InitialData {
    pub fn bumps_only(beta: f64) -> Self {
        InitialData {
            bumps_a: Vec::new(),
            bumps_b: Vec::new(),
            bumps_s: Vec::new(),
            modes_a: Vec::new(),
            modes_b: Vec::new(),
            beta,
        }
    }

    pub fn surface(&self, x: f64, y: f64) -> f64 {
        self.bumps_s
            .iter()
            .map(|&(cx, cy, w, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (w * w)).exp())
            .sum()
    }

    /// Upper temperature at height `z > 0`.
    pub fn theta_a(&self, x: f64, y: f64, z: f64) -> f64 {
        self.bumps_a.iter().map(|b| b.eval(x, y, z)).sum::<f64>()
            + self.surface(x, y) * (-self.beta * z).exp()
            + self
                .modes_a
                .iter()
                .map(|m| m.amp * (m.k_z * z).sin() * (m.xi * x).cos())
                .sum::<f64>()
    }

    /// Lower temperature at depth `d > 0` below the interface.
    pub fn theta_b(&self, x: f64, y: f64, d: f64) -> f64 {
        self.bumps_b.iter().map(|b| b.eval(x, y, d)).sum::<f64>()
            + self.surface(x, y) * (-self.beta * d).exp()
            + self
                .modes_b
                .iter()
                .map(|m| m.amp * (m.k_z * d).sin() * (m.xi * x).cos())
                .sum::<f64>()
    }

    pub fn sample(&self, grid: &GridSpec) -> TriField {
        TriField::from_fn(
            grid,
            |x, y, z| self.theta_a(x, y, z),
            |x, y, d| self.theta_b(x, y, d),
            |x, y| self.surface(x, y),
        )
    }
}

/// Bulk-dominant compatible data: asymmetric interior bumps well separated
/// from both the interface and the far wall, no initial surface component.
/// The surface field is switched on only through the interface flux.
pub fn gaussian_bump(grid: &GridSpec, params: &PhysParams) -> InitialData {
    let c = grid.l_h / 2.0;
    InitialData {
        bumps_a: vec![Bump {
            cx: c - 1.0,
            cy: c,
            cz: 0.5 * grid.l_z,
            width: 1.2,
            amp: 1.0,
        }],
        bumps_b: vec![Bump {
            cx: c + 1.2,
            cy: c - 0.8,
            cz: 0.5 * grid.l_z,
            width: 1.25,
            amp: -0.8,
        }],
        bumps_s: Vec::new(),
        modes_a: Vec::new(),
        modes_b: Vec::new(),
        beta: params.beta,
    }
}

/// Pure lift profile: the bulk fields are exactly the carried surface
/// bump, so the lifted initial state has zero bulk components.
pub fn pure_lift(grid: &GridSpec, params: &PhysParams) -> InitialData {
    let c = grid.l_h / 2.0;
    InitialData {
        bumps_a: Vec::new(),
        bumps_b: Vec::new(),
        bumps_s: vec![(c, c, 2.0, 1.0)],
        modes_a: Vec::new(),
        modes_b: Vec::new(),
        beta: params.beta,
    }
}

/// Mixed data: bulk bumps plus a surface bump; the default for contraction
/// and uniqueness experiments.
pub fn mixed(grid: &GridSpec, params: &PhysParams) -> InitialData {
    let mut d = gaussian_bump(grid, params);
    let c = grid.l_h / 2.0;
    d.bumps_s.push((c + 0.7, c - 0.5, 1.8, 0.6));
    d
}

/// Randomized variant of [`mixed`] with a deterministic seed.
pub fn random_scenario(grid: &GridSpec, params: &PhysParams, seed: u64) -> InitialData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = InitialData {
        bumps_a: Vec::new(),
        bumps_b: Vec::new(),
        bumps_s: Vec::new(),
        modes_a: Vec::new(),
        modes_b: Vec::new(),
        beta: params.beta,
    };
    for _ in 0..2 {
        data.bumps_a.push(Bump {
            cx: rng.gen_range(0.3..0.7) * grid.l_h,
            cy: rng.gen_range(0.3..0.7) * grid.l_h,
            cz: rng.gen_range(0.35..0.65) * grid.l_z,
            width: rng.gen_range(1.0..1.6),
            amp: rng.gen_range(-1.0..1.0),
        });
        data.bumps_b.push(Bump {
            cx: rng.gen_range(0.3..0.7) * grid.l_h,
            cy: rng.gen_range(0.3..0.7) * grid.l_h,
            cz: rng.gen_range(0.35..0.65) * grid.l_z,
            width: rng.gen_range(1.0..1.6),
            amp: rng.gen_range(-1.0..1.0),
        });
    }
    data.bumps_s.push((
        rng.gen_range(0.35..0.65) * grid.l_h,
        rng.gen_range(0.35..0.65) * grid.l_h,
        rng.gen_range(1.5..2.5),
        rng.gen_range(-0.8..0.8),
    ));
    data
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::compat_gap;

    #[test]
    fn scenarios_are_interface_compatible() {
        let grid = GridSpec::new(16.0, 16, 8.0, 16, 0.01, 1.0).unwrap();
        let params = PhysParams::default();
        for data in [
            gaussian_bump(&grid, &params),
            pure_lift(&grid, &params),
            mixed(&grid, &params),
            random_scenario(&grid, &params, 5),
        ] {
            let theta = data.sample(&grid);
            let gap = compat_gap(&theta, &grid, params.beta);
            assert!(gap < 5e-3, "compat gap {gap}");
        }
    }

    #[test]
    fn bulk_bumps_vanish_at_walls() {
        let grid = GridSpec::default();
        let params = PhysParams::default();
        let data = gaussian_bump(&grid, &params);
        for x in [0.0, 8.0, 15.5] {
            assert!(data.theta_a(x, x, grid.l_z).abs() < 1e-4);
            assert!(data.theta_b(x, x, grid.l_z).abs() < 1e-4);
        }
    }
}
