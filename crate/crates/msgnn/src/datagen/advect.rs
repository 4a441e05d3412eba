//! Advection oracles: the exact shift solution for uniform velocities on
//! periodic domains, and a semi-Lagrangian reference solver (backward
//! particle tracing with bicubic interpolation on a background grid) for
//! non-uniform velocity fields and inflow boundaries.

use crate::datagen::fourier::FourierIc;
use crate::error::{Error, Result};
use crate::geometry::{Domain, PeriodicSpec};

/// Exact solution of scalar advection under a uniform velocity: the initial
/// condition evaluated at the back-shifted, periodically wrapped position.
/// Non-periodic directions require a zero velocity component.
pub fn advect_exact(
    ic: &FourierIc,
    velocity: [f64; 2],
    t: f64,
    pos: [f64; 2],
    periodic: &PeriodicSpec,
) -> Result<f64> {
    let mut q = [pos[0] - velocity[0] * t, pos[1] - velocity[1] * t];
    for axis in 0..2 {
        match periodic.period(axis) {
            Some(p) => q[axis] = q[axis].rem_euclid(p),
            None => {
                if velocity[axis] != 0.0 {
                    return Err(Error::Config(format!(
                        "exact advection requires zero velocity along non-periodic axis {axis}; use the semi-Lagrangian solver"
                    )));
                }
            }
        }
    }
    Ok(ic.eval(q[0], q[1]))
}

/// A time-independent velocity field evaluable anywhere in the domain.
pub trait VelocityField: Sync {
    fn at(&self, pos: [f64; 2]) -> [f64; 2];
}

pub struct UniformVelocity(pub [f64; 2]);

impl VelocityField for UniformVelocity {
    fn at(&self, _pos: [f64; 2]) -> [f64; 2] {
        self.0
    }
}

/// Solid-body rotation about a centre: v = omega x r.
pub struct RigidRotation {
    pub center: [f64; 2],
    pub omega: f64,
}

impl VelocityField for RigidRotation {
    fn at(&self, pos: [f64; 2]) -> [f64; 2] {
        [
            -self.omega * (pos[1] - self.center[1]),
            self.omega * (pos[0] - self.center[0]),
        ]
    }
}

/// Incompressible Taylor-Green cell pattern on the unit square.
pub struct TaylorGreenVelocity {
    pub amplitude: f64,
}

impl VelocityField for TaylorGreenVelocity {
    fn at(&self, pos: [f64; 2]) -> [f64; 2] {
        let tau = 2.0 * std::f64::consts::PI;
        [
            self.amplitude * (tau * pos[0]).sin() * (tau * pos[1]).cos(),
            -self.amplitude * (tau * pos[0]).cos() * (tau * pos[1]).sin(),
        ]
    }
}

/// Configuration of a semi-Lagrangian run. `dt` is the output cadence;
/// each advance is split into `substeps` backward-tracing substeps which
/// must respect `max speed * dt / substeps <= 2 * min(h)`.
pub struct SemiLagConfig {
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub steps: usize,
    pub substeps: usize,
}

impl SemiLagConfig {
    /// Substep count satisfying the displacement bound for a velocity cap.
    pub fn required_substeps(domain: &Domain, nx: usize, ny: usize, dt: f64, max_speed: f64) -> usize {
        let (hx, hy) = grid_spacing(domain, nx, ny);
        let limit = 2.0 * hx.min(hy);
        ((max_speed * dt / limit).ceil() as usize).max(1)
    }
}

fn grid_spacing(domain: &Domain, nx: usize, ny: usize) -> (f64, f64) {
    let ext = domain.extent();
    let periodic = domain.periodic();
    let hx = if periodic.period_x.is_some() { ext[0] / nx as f64 } else { ext[0] / (nx - 1) as f64 };
    let hy = if periodic.period_y.is_some() { ext[1] / ny as f64 } else { ext[1] / (ny - 1) as f64 };
    (hx, hy)
}

/// Gridded trajectory produced by the semi-Lagrangian solver; frames can be
/// sampled anywhere in the domain by bicubic interpolation.
pub struct GridTrajectory {
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub frames: Vec<Vec<f64>>,
    hx: f64,
    hy: f64,
    periodic: PeriodicSpec,
}

/// 4-point cubic Lagrange weights at fraction `s` in [0, 1) relative to the
/// second stencil point.
fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

impl GridTrajectory {
    fn stencil(&self, q: f64, axis: usize) -> ([usize; 4], [f64; 4]) {
        let (min, h, n, periodic) = if axis == 0 {
            (self.domain.min[0], self.hx, self.nx, self.periodic.period_x.is_some())
        } else {
            (self.domain.min[1], self.hy, self.ny, self.periodic.period_y.is_some())
        };
        let t = (q - min) / h;
        let base = t.floor();
        let s = t - base;
        let b = base as i64;
        let mut idx = [0usize; 4];
        for (j, off) in (-1i64..=2).enumerate() {
            let raw = b + off;
            idx[j] = if periodic {
                raw.rem_euclid(n as i64) as usize
            } else {
                raw.clamp(0, n as i64 - 1) as usize
            };
        }
        (idx, cubic_weights(s))
    }

    /// Bicubic sample of one frame.
    pub fn sample(&self, frame: usize, pos: [f64; 2]) -> f64 {
        let values = &self.frames[frame];
        let (ix, wx) = self.stencil(pos[0], 0);
        let (iy, wy) = self.stencil(pos[1], 1);
        let mut acc = 0.0;
        for j in 0..4 {
            let mut row = 0.0;
            for i in 0..4 {
                row += wx[i] * values[iy[j] * self.nx + ix[i]];
            }
            acc += wy[j] * row;
        }
        acc
    }

    /// Sample one frame at many positions.
    pub fn sample_many(&self, frame: usize, positions: &[[f64; 2]]) -> Vec<f64> {
        positions.iter().map(|&p| self.sample(frame, p)).collect()
    }
}

/// Run the semi-Lagrangian solver. `inflow(t, pos)` supplies Dirichlet
/// values for backward traces leaving through a non-periodic boundary; traces
/// that leave where no inflow is given use clamped (zero-gradient)
/// interpolation.
pub fn advect_semi_lagrangian(
    ic: &dyn Fn([f64; 2]) -> f64,
    velocity: &dyn VelocityField,
    cfg: &SemiLagConfig,
    inflow: Option<&dyn Fn(f64, [f64; 2]) -> f64>,
) -> Result<GridTrajectory> {
    cfg.domain.validate()?;
    if cfg.nx < 8 || cfg.ny < 8 {
        return Err(Error::Config("semi-Lagrangian grid must be at least 8 x 8".into()));
    }
    if cfg.substeps == 0 || cfg.dt <= 0.0 {
        return Err(Error::Config("dt and substeps must be positive".into()));
    }
    let periodic = cfg.domain.periodic();
    let (hx, hy) = grid_spacing(&cfg.domain, cfg.nx, cfg.ny);
    let points: Vec<[f64; 2]> = (0..cfg.ny)
        .flat_map(|j| {
            (0..cfg.nx).map(move |i| {
                [
                    cfg.domain.min[0] + i as f64 * hx,
                    cfg.domain.min[1] + j as f64 * hy,
                ]
            })
        })
        .collect();
    let max_speed = points
        .iter()
        .map(|&p| {
            let v = velocity.at(p);
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        })
        .fold(0.0, f64::max);
    let dt_sub = cfg.dt / cfg.substeps as f64;
    if max_speed * dt_sub > 2.0 * hx.min(hy) + 1e-12 {
        return Err(Error::Config(format!(
            "CFL violation: max speed {max_speed:.3} x substep {dt_sub:.4} exceeds 2 x grid spacing {:.4}; increase substeps",
            hx.min(hy)
        )));
    }

    let mut traj = GridTrajectory {
        domain: cfg.domain,
        nx: cfg.nx,
        ny: cfg.ny,
        dt: cfg.dt,
        frames: Vec::with_capacity(cfg.steps + 1),
        hx,
        hy,
        periodic,
    };
    traj.frames.push(points.iter().map(|&p| ic(p)).collect());

    let mut current: Vec<f64> = traj.frames[0].clone();
    let mut time = 0.0;
    for _ in 0..cfg.steps {
        for _ in 0..cfg.substeps {
            traj.frames.push(current.clone());
            let prev_idx = traj.frames.len() - 1;
            let mut next = vec![0.0f64; points.len()];
            for (g, &p) in points.iter().enumerate() {
                // RK4 backward trace of dX/dt = -v(X) over one substep.
                let f = |q: [f64; 2]| {
                    let v = velocity.at(q);
                    [-v[0], -v[1]]
                };
                let k1 = f(p);
                let k2 = f([p[0] + 0.5 * dt_sub * k1[0], p[1] + 0.5 * dt_sub * k1[1]]);
                let k3 = f([p[0] + 0.5 * dt_sub * k2[0], p[1] + 0.5 * dt_sub * k2[1]]);
                let k4 = f([p[0] + dt_sub * k3[0], p[1] + dt_sub * k3[1]]);
                let mut q = [
                    p[0] + dt_sub / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                    p[1] + dt_sub / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                ];
                let mut outside = false;
                for axis in 0..2 {
                    match periodic.period(axis) {
                        Some(per) => q[axis] = q[axis].rem_euclid(per),
                        None => {
                            if q[axis] < cfg.domain.min[axis] - 1e-12 || q[axis] > cfg.domain.max[axis] + 1e-12 {
                                outside = true;
                            }
                        }
                    }
                }
                next[g] = if outside {
                    match inflow {
                        Some(f) => f(time, q),
                        None => traj.sample(prev_idx, [
                            q[0].clamp(cfg.domain.min[0], cfg.domain.max[0]),
                            q[1].clamp(cfg.domain.min[1], cfg.domain.max[1]),
                        ]),
                    }
                } else {
                    traj.sample(prev_idx, q)
                };
            }
            traj.frames.pop();
            current = next;
            time += dt_sub;
        }
        traj.frames.push(current.clone());
    }
    Ok(traj)
}
