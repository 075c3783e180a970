//! Periodic 1D grids, FFT plumbing and carrier snapping.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Periodic grid on [−X/2, X/2) with `n` points (a power of two).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub length: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "length",
                value: length,
                reason: "must be positive".into(),
            });
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter {
                name: "n_points",
                value: n as f64,
                reason: "must be a power of two >= 2".into(),
            });
        }
        Ok(Grid1D { length, n })
    }

    /// Grid whose length is the multiple of 2πε/k closest to `target`, so the
    /// carrier k/ε is an exact grid frequency.
    pub fn for_carrier(target: f64, n: usize, k: f64, epsilon: f64) -> Result<Self> {
        let period = 2.0 * PI * epsilon / k;
        let m = (target / period).round().max(1.0);
        Grid1D::new(m * period, n)
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Fundamental frequency 2π/X.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Signed integer mode index in FFT storage order.
    pub fn mode_index(&self, slot: usize) -> i64 {
        let n = self.n as i64;
        let s = slot as i64;
        if s < n / 2 {
            s
        } else {
            s - n
        }
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n)
            .map(|s| self.mode_index(s) as f64 * self.dk())
            .collect()
    }

    pub fn nearest_mode(&self, kappa: f64) -> i64 {
        (kappa / self.dk()).round() as i64
    }

    pub fn snap(&self, kappa: f64) -> f64 {
        self.nearest_mode(kappa) as f64 * self.dk()
    }

    /// Errors unless `kappa` is a grid frequency to relative 1e-9.
    pub fn check_snapped(&self, kappa: f64) -> Result<i64> {
        let m = self.nearest_mode(kappa);
        let nearest = m as f64 * self.dk();
        if (nearest - kappa).abs() > 1e-9 * kappa.abs().max(self.dk()) {
            return Err(Error::UnsnappedCarrier {
                carrier: kappa,
                nearest,
            });
        }
        if m.unsigned_abs() as usize >= self.n / 2 {
            return Err(Error::UnsnappedCarrier {
                carrier: kappa,
                nearest: f64::NAN,
            });
        }
        Ok(m)
    }

    pub fn l2_norm(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        (values.into_iter().map(|v| v * v).sum::<f64>() * self.dx()).sqrt()
    }
}

/// Forward/inverse FFT pair for one size; inverse is normalized.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Spectral({})", self.n)
    }
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, buf: &mut [C64]) {
        self.fwd.process(buf);
    }

    pub fn inverse(&self, buf: &mut [C64]) {
        self.inv.process(buf);
        let s = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= s;
        }
    }

    /// Spectral derivative of a periodic complex function on `grid`.
    pub fn derivative(&self, grid: &Grid1D, f: &[C64]) -> Vec<C64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        for (s, z) in buf.iter_mut().enumerate() {
            let m = grid.mode_index(s);
            // the Nyquist mode has no well-defined derivative
            if 2 * m.unsigned_abs() as usize == self.n {
                *z = C64::new(0.0, 0.0);
            } else {
                *z *= C64::new(0.0, m as f64 * grid.dk());
            }
        }
        self.inverse(&mut buf);
        buf
    }
}

/// Trigonometric interpolation of periodic samples onto `n_out ≥ n_in` points
/// (zero padding; the Nyquist coefficient is split symmetrically).
pub fn upsample(f: &[C64], n_out: usize) -> Vec<C64> {
    let n_in = f.len();
    assert!(n_out >= n_in, "upsample needs n_out >= n_in");
    if n_out == n_in {
        return f.to_vec();
    }
    let sp_in = Spectral::new(n_in);
    let mut buf = f.to_vec();
    sp_in.forward(&mut buf);
    let mut out = vec![C64::new(0.0, 0.0); n_out];
    let h = n_in / 2;
    out[..h].copy_from_slice(&buf[..h]);
    out[n_out - n_in + h + 1..].copy_from_slice(&buf[h + 1..]);
    out[h] = buf[h] * 0.5;
    out[n_out - h] = buf[h] * 0.5;
    let sp_out = Spectral::new(n_out);
    sp_out.inverse(&mut out);
    let scale = n_out as f64 / n_in as f64;
    for z in out.iter_mut() {
        *z *= scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_origin_and_is_periodic() {
        let g = Grid1D::new(8.0, 64).unwrap();
        assert_eq!(g.x(32), 0.0);
        assert!((g.x(0) + 4.0).abs() < 1e-15);
        assert!(Grid1D::new(8.0, 60).is_err());
    }

    #[test]
    fn carrier_grid_snaps_exactly() {
        let k = 0.5033222956847165;
        let eps = 1e-2;
        let g = Grid1D::for_carrier(8.0, 1 << 12, k, eps).unwrap();
        assert!((g.length - 8.0).abs() < 2.0 * PI * eps / k);
        let m = g.check_snapped(k / eps).unwrap();
        assert!(m > 0);
        assert!(g.check_snapped(k / eps + 0.3 * g.dk()).is_err());
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid1D::new(2.0 * PI, 64).unwrap();
        let sp = Spectral::new(g.n);
        let f: Vec<C64> = g
            .xs()
            .iter()
            .map(|x| C64::new((3.0 * x).sin(), 0.0))
            .collect();
        let d = sp.derivative(&g, &f);
        for (x, v) in g.xs().iter().zip(&d) {
            assert!((v.re - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_reproduces_band_limited() {
        let g = Grid1D::new(2.0 * PI, 32).unwrap();
        let f: Vec<C64> = g
            .xs()
            .iter()
            .map(|x| C64::new((2.0 * x).cos(), (5.0 * x).sin()))
            .collect();
        let up = upsample(&f, 128);
        let g2 = Grid1D::new(2.0 * PI, 128).unwrap();
        for (x, v) in g2.xs().iter().zip(&up) {
            assert!((v.re - (2.0 * x).cos()).abs() < 1e-12);
            assert!((v.im - (5.0 * x).sin()).abs() < 1e-12);
        }
    }
}
