//! Random truncated Fourier-series initial conditions with a Gaussian
//! envelope, rescaled so the field range over the domain is exactly [-1, 1].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Domain;

/// Scan resolution used to locate the field extrema before polishing.
pub const CALIBRATION_GRID: usize = 512;

/// Initial condition: sum over (m, n) of `c[m][n] cos(2 pi (m x + n y))`,
/// multiplied by a Gaussian envelope centred on the domain, then affinely
/// mapped so the extrema over the domain are exactly +1 and -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierIc {
    /// Row-major (m_terms + 1) x (n_terms + 1) coefficients in [0, 1).
    pub coeffs: Vec<f64>,
    pub m_terms: usize,
    pub n_terms: usize,
    /// Envelope centre (the domain centre).
    pub center: [f64; 2],
    pub scale: f64,
    pub shift: f64,
}

impl FourierIc {
    /// Draw coefficients and term counts (both uniform on 3..=8), centre the
    /// envelope on the domain, and calibrate the [-1, 1] scaling.
    pub fn sample(rng: &mut ChaCha8Rng, domain: &Domain) -> Self {
        let m_terms = rng.gen_range(3..=8usize);
        let n_terms = rng.gen_range(3..=8usize);
        let coeffs = (0..(m_terms + 1) * (n_terms + 1)).map(|_| rng.gen::<f64>()).collect();
        let center = [
            0.5 * (domain.min[0] + domain.max[0]),
            0.5 * (domain.min[1] + domain.max[1]),
        ];
        let mut ic = Self { coeffs, m_terms, n_terms, center, scale: 1.0, shift: 0.0 };
        ic.calibrate(domain);
        ic
    }

    /// The unscaled field.
    pub fn raw(&self, x: f64, y: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        let mut acc = 0.0;
        for m in 0..=self.m_terms {
            for n in 0..=self.n_terms {
                acc += self.coeffs[m * (self.n_terms + 1) + n] * (tau * (m as f64 * x + n as f64 * y)).cos();
            }
        }
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        acc * (-2.0 * dx * dx - 2.0 * dy * dy).exp()
    }

    /// The calibrated field.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.scale * self.raw(x, y) + self.shift
    }

    /// Locate the raw extrema over the domain (dense scan plus local
    /// polish) and set `scale`/`shift` so they map to +1 / -1.
    fn calibrate(&mut self, domain: &Domain) {
        let (min, max) = self.raw_extrema(domain, CALIBRATION_GRID);
        self.scale = 2.0 / (max - min);
        self.shift = -1.0 - self.scale * min;
    }

    /// Raw-field extrema over the domain: separable grid scan, then a
    /// shrinking local search around the best grid candidates. The polish
    /// drives the position error far below the grid spacing, so the returned
    /// values are the true extrema to well under 1e-9.
    pub fn raw_extrema(&self, domain: &Domain, grid: usize) -> (f64, f64) {
        let g = grid.max(8);
        let ext = [domain.max[0] - domain.min[0], domain.max[1] - domain.min[1]];
        let hx = ext[0] / (g - 1) as f64;
        let hy = ext[1] / (g - 1) as f64;
        let tau = 2.0 * std::f64::consts::PI;
        let mt = self.m_terms;
        let nt = self.n_terms;

        // Per-axis tables: complex exponentials for x, y and the envelope.
        let xs: Vec<f64> = (0..g).map(|i| domain.min[0] + i as f64 * hx).collect();
        let ys: Vec<f64> = (0..g).map(|j| domain.min[1] + j as f64 * hy).collect();
        let ex: Vec<(f64, f64)> = xs
            .iter()
            .flat_map(|&x| (0..=mt).map(move |m| ((tau * m as f64 * x).cos(), (tau * m as f64 * x).sin())))
            .collect();
        let env_x: Vec<f64> = xs.iter().map(|&x| (-2.0 * (x - self.center[0]).powi(2)).exp()).collect();
        let env_y: Vec<f64> = ys.iter().map(|&y| (-2.0 * (y - self.center[1]).powi(2)).exp()).collect();

        let mut values = vec![0.0f64; g * g];
        let mut t_re = vec![0.0f64; mt + 1];
        let mut t_im = vec![0.0f64; mt + 1];
        for (j, &y) in ys.iter().enumerate() {
            for m in 0..=mt {
                let mut re = 0.0;
                let mut im = 0.0;
                for n in 0..=nt {
                    let c = self.coeffs[m * (nt + 1) + n];
                    let a = tau * n as f64 * y;
                    re += c * a.cos();
                    im += c * a.sin();
                }
                t_re[m] = re;
                t_im[m] = im;
            }
            for i in 0..g {
                let mut acc = 0.0;
                for m in 0..=mt {
                    let (c, s) = ex[i * (mt + 1) + m];
                    // Re{ e^{i 2 pi m x} * T_m(y) }
                    acc += c * t_re[m] - s * t_im[m];
                }
                values[j * g + i] = acc * env_x[i] * env_y[j];
            }
        }

        let candidates = |want_max: bool| -> Vec<[f64; 2]> {
            let mut local: Vec<(f64, usize, usize)> = Vec::new();
            for j in 0..g {
                for i in 0..g {
                    let v = values[j * g + i];
                    let mut extremal = true;
                    'nb: for dj in -1i64..=1 {
                        for di in -1i64..=1 {
                            if di == 0 && dj == 0 {
                                continue;
                            }
                            let jj = j as i64 + dj;
                            let ii = i as i64 + di;
                            if jj < 0 || jj >= g as i64 || ii < 0 || ii >= g as i64 {
                                continue;
                            }
                            let w = values[jj as usize * g + ii as usize];
                            if (want_max && w > v) || (!want_max && w < v) {
                                extremal = false;
                                break 'nb;
                            }
                        }
                    }
                    if extremal {
                        local.push((v, i, j));
                    }
                }
            }
            local.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            if !want_max {
                local.reverse();
            }
            local.iter().take(12).map(|&(_, i, j)| [xs[i], ys[j]]).collect()
        };

        let polish = |start: [f64; 2], want_max: bool| -> f64 {
            let mut best_pos = start;
            let sign = if want_max { 1.0 } else { -1.0 };
            let mut best_val = sign * self.raw(start[0], start[1]);
            let mut w = hx.max(hy);
            for _ in 0..24 {
                for dj in -2i64..=2 {
                    for di in -2i64..=2 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let x = (best_pos[0] + di as f64 * w * 0.5).clamp(domain.min[0], domain.max[0]);
                        let y = (best_pos[1] + dj as f64 * w * 0.5).clamp(domain.min[1], domain.max[1]);
                        let v = sign * self.raw(x, y);
                        if v > best_val {
                            best_val = v;
                            best_pos = [x, y];
                        }
                    }
                }
                w *= 0.45;
            }
            sign * best_val
        };

        let max = candidates(true)
            .into_iter()
            .map(|c| polish(c, true))
            .fold(f64::NEG_INFINITY, f64::max);
        let min = candidates(false)
            .into_iter()
            .map(|c| polish(c, false))
            .fold(f64::INFINITY, f64::min);
        (min, max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_coefficient_is_pure_envelope() {
        let ic = FourierIc {
            coeffs: vec![1.0],
            m_terms: 0,
            n_terms: 0,
            center: [0.5, 0.5],
            scale: 1.0,
            shift: 0.0,
        };
        for (x, y) in [(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)] {
            let expect = (-2.0f64 * (x - 0.5f64).powi(2) - 2.0 * (y - 0.5f64).powi(2)).exp();
            assert!((ic.raw(x, y) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn centre_value_is_coefficient_sum_of_cosines() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ic = FourierIc {
            coeffs: (0..12).map(|_| rng.gen::<f64>()).collect(),
            m_terms: 2,
            n_terms: 3,
            center: [0.3, 0.6],
            scale: 1.0,
            shift: 0.0,
        };
        let tau = 2.0 * std::f64::consts::PI;
        let mut expect = 0.0;
        for m in 0..=2 {
            for n in 0..=3 {
                expect += ic.coeffs[m * 4 + n] * (tau * (m as f64 * 0.3 + n as f64 * 0.6)).cos();
            }
        }
        assert!((ic.raw(0.3, 0.6) - expect).abs() < 1e-12);
    }

    #[test]
    fn scaled_range_holds_on_denser_grid() {
        let domain = Domain::unit_periodic();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ic = FourierIc::sample(&mut rng, &domain);
        // Re-scan with a 4x denser grid plus polish: the scaled extrema must
        // still be +1/-1 within 1e-6.
        let (min, max) = ic.raw_extrema(&domain, 4 * CALIBRATION_GRID);
        let smax = ic.scale * max + ic.shift;
        let smin = ic.scale * min + ic.shift;
        assert!((smax - 1.0).abs() < 1e-6, "scaled max {smax}");
        assert!((smin + 1.0).abs() < 1e-6, "scaled min {smin}");
        // And no grid value escapes the range.
        for j in 0..256 {
            for i in 0..256 {
                let v = ic.eval(i as f64 / 256.0, j as f64 / 256.0);
                assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let domain = Domain::unit_periodic();
        let a = FourierIc::sample(&mut ChaCha8Rng::seed_from_u64(42), &domain);
        let b = FourierIc::sample(&mut ChaCha8Rng::seed_from_u64(42), &domain);
        assert_eq!(a, b);
        assert!(a.m_terms >= 3 && a.m_terms <= 8);
        assert!(a.n_terms >= 3 && a.n_terms <= 8);
    }
}
