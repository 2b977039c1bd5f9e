//! Coefficients of the fGBm family against the Hermite-function basis.
//!
//! Using the Fourier eigen-relation of `h~_k`, every coefficient becomes a
//! one-sided integral `int_0^inf kern(y t) y^g h~_k(y) dy` with `g = 1/2 - H`
//! (noise `M_H h~_k`), or `g = H - 1/2` (inverse `M_H^{-1} h~_k`). The first
//! panel uses product weights for `y^g`; the rest uses Gauss-Legendre panels
//! narrow enough to resolve both `h~_K` and the trigonometric kernel.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{ChaosExpansion, TruncationSpec};
use crate::error::{invalid, Error, Result};
use crate::fracops::{hermite_functions, mh_constant};
use crate::model::{HurstIndex, TimeGrid};
use crate::numerics::{singular_weights, GaussLegendre};

/// Largest supported basis size.
pub const MAX_BASIS: usize = 512;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Noise,
    Integrated,
    Inverse,
}

/// Quadrature in the frequency variable for a fixed `(H, K, t_max)`.
#[derive(Debug, Clone)]
pub struct HermiteSpectral {
    h: HurstIndex,
    kmax: usize,
    tmax: f64,
    nodes: Vec<f64>,
    w_noise: Vec<f64>,
    w_inverse: Vec<f64>,
}

impl HermiteSpectral {
    pub fn new(h: HurstIndex, kmax: usize, tmax: f64) -> Result<Self> {
        if kmax == 0 || kmax > MAX_BASIS {
            return Err(invalid(format!("basis size must be in 1..={MAX_BASIS}, got {kmax}")));
        }
        if !tmax.is_finite() {
            return Err(invalid("non-finite time"));
        }
        let tmax = tmax.abs();
        let g = 0.5 - h.value();
        let panel = (2.0 / ((2.0 * kmax as f64).sqrt() + tmax + 1.0)).min(0.5);
        let ymax = (2.0 * kmax as f64 + 1.0).sqrt() + 12.0;
        let (mut nodes, mut w_noise) = singular_weights(12, panel, g);
        let (_, mut w_inverse) = singular_weights(12, panel, -g);
        let gl = GaussLegendre::new(16);
        let panels = ((ymax - panel) / panel).ceil() as usize;
        for p in 0..panels {
            let a = panel * (p + 1) as f64;
            for (y, w) in gl.mapped(a, a + panel) {
                nodes.push(y);
                w_noise.push(w * y.powf(g));
                w_inverse.push(w * y.powf(-g));
            }
        }
        Ok(Self {
            h,
            kmax,
            tmax,
            nodes,
            w_noise,
            w_inverse,
        })
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    /// `M_H h~_k(t)`, `k = 1..=K`.
    pub fn noise(&self, t: f64) -> Vec<f64> {
        if self.h.is_half() {
            return hermite_functions(self.kmax, t);
        }
        self.batch(&[t], Kind::Noise).pop().expect("one row")
    }

    /// `int_0^t M_H h~_k(s) ds`, `k = 1..=K`.
    pub fn integrated(&self, t: f64) -> Vec<f64> {
        self.integrated_many(&[t]).pop().expect("one row")
    }

    pub fn integrated_many(&self, ts: &[f64]) -> Vec<Vec<f64>> {
        self.batch(ts, Kind::Integrated)
    }

    /// `M_H^{-1} h~_k(t)`, `k = 1..=K`.
    pub fn inverse(&self, t: f64) -> Vec<f64> {
        if self.h.is_half() {
            return hermite_functions(self.kmax, t);
        }
        self.batch(&[t], Kind::Inverse).pop().expect("one row")
    }

    fn batch(&self, ts: &[f64], kind: Kind) -> Vec<Vec<f64>> {
        let k = self.kmax;
        for &t in ts {
            debug_assert!(t.abs() <= self.tmax * (1.0 + 1e-12) + 1e-12, "t outside quadrature design");
        }
        let weights = match kind {
            Kind::Inverse => &self.w_inverse,
            _ => &self.w_noise,
        };
        let chunk = 256;
        let partial: Vec<Vec<f64>> = self
            .nodes
            .par_chunks(chunk)
            .enumerate()
            .map(|(ci, ys)| {
                let mut acc = vec![0.0; ts.len() * k];
                for (j, &y) in ys.iter().enumerate() {
                    let w = weights[ci * chunk + j];
                    let hv = hermite_functions(k, y);
                    for (ti, &t) in ts.iter().enumerate() {
                        let (even_kern, odd_kern) = match kind {
                            // odd k pairs with cos, even k with sin
                            Kind::Noise | Kind::Inverse => ((y * t).cos(), (y * t).sin()),
                            Kind::Integrated => {
                                let s = (0.5 * y * t).sin();
                                ((y * t).sin() / y, 2.0 * s * s / y)
                            }
                        };
                        let row = &mut acc[ti * k..(ti + 1) * k];
                        for (i, r) in row.iter_mut().enumerate() {
                            let kern = if i % 2 == 0 { even_kern } else { odd_kern };
                            *r += w * kern * hv[i];
                        }
                    }
                }
                acc
            })
            .collect();
        let c = mh_constant(self.h);
        let scale = match kind {
            Kind::Inverse => 1.0 / c,
            _ => c,
        } * (2.0 / PI).sqrt();
        (0..ts.len())
            .map(|ti| {
                (0..k)
                    .map(|i| {
                        let sign = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
                        let s: f64 = partial.iter().map(|p| p[ti * k + i]).sum();
                        sign * scale * s
                    })
                    .collect()
            })
            .collect()
    }
}

fn check_trunc(trunc: &TruncationSpec) -> Result<()> {
    if trunc.max_basis == 0 || trunc.max_basis > MAX_BASIS {
        return Err(invalid(format!(
            "basis size must be in 1..={MAX_BASIS}, got {}",
            trunc.max_basis
        )));
    }
    Ok(())
}

/// Fractional noise coefficients `M_H h~_k(t)`, `k = 1..=K`.
pub fn gnoise_coeffs(t: f64, h: HurstIndex, trunc: &TruncationSpec) -> Result<Vec<f64>> {
    check_trunc(trunc)?;
    Ok(HermiteSpectral::new(h, trunc.max_basis, t)?.noise(t))
}

/// `int_0^t M_H h~_k`, `k = 1..=K`.
pub fn integrated_coeffs(t: f64, h: HurstIndex, trunc: &TruncationSpec) -> Result<Vec<f64>> {
    check_trunc(trunc)?;
    Ok(HermiteSpectral::new(h, trunc.max_basis, t)?.integrated(t))
}

/// `e_k(t) = M_H^{-1} h~_k(t)`, `k = 1..=K`.
pub fn inverse_coeffs(t: f64, h: HurstIndex, trunc: &TruncationSpec) -> Result<Vec<f64>> {
    check_trunc(trunc)?;
    Ok(HermiteSpectral::new(h, trunc.max_basis, t)?.inverse(t))
}

/// First-order expansion of `B_H(t)` (unit volatility).
pub fn fgbm_chaos(t: f64, h: HurstIndex, trunc: &TruncationSpec) -> Result<ChaosExpansion> {
    Ok(ChaosExpansion::first_order(&integrated_coeffs(t, h, trunc)?, *trunc))
}

/// Discrete model on `[0, T]`: `B_H` coefficients at grid nodes, linear in
/// between, so `W_H` is piecewise constant. Wick-Itô integrals against this
/// model telescope exactly for Wick polynomials.
#[derive(Debug, Clone)]
pub struct NoiseBasis {
    pub h: HurstIndex,
    pub grid: TimeGrid,
    spectral: HermiteSpectral,
    nodal: Vec<Vec<f64>>,
}

impl NoiseBasis {
    pub fn new(h: HurstIndex, horizon: f64, cells: usize, kmax: usize) -> Result<Self> {
        let grid = TimeGrid::new(0.0, horizon, cells)?;
        let spectral = HermiteSpectral::new(h, kmax, horizon)?;
        let nodal = spectral.integrated_many(&grid.points());
        if nodal.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite basis coefficient".into()));
        }
        Ok(Self {
            h,
            grid,
            spectral,
            nodal,
        })
    }

    pub fn kmax(&self) -> usize {
        self.spectral.kmax
    }

    pub fn horizon(&self) -> f64 {
        self.grid.t1
    }

    pub fn spectral(&self) -> &HermiteSpectral {
        &self.spectral
    }

    pub fn nodal(&self, i: usize) -> &[f64] {
        &self.nodal[i]
    }

    /// Cell containing `t` (the last cell for `t = T`).
    pub fn cell_of(&self, t: f64) -> usize {
        let x = (t - self.grid.t0) / self.grid.dt();
        (x.floor().max(0.0) as usize).min(self.grid.n - 1)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.grid.t1 * (1.0 + 1e-12)) {
            return Err(Error::OutOfDomain(format!(
                "t={t} outside [0, {}]",
                self.grid.t1
            )));
        }
        Ok(())
    }

    /// Coefficients of `B_H(t)` (linear between nodes).
    pub fn coeffs_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let c = self.cell_of(t);
        let u = ((t - self.grid.point(c)) / self.grid.dt()).clamp(0.0, 1.0);
        Ok(self.nodal[c]
            .iter()
            .zip(&self.nodal[c + 1])
            .map(|(a, b)| a + u * (b - a))
            .collect())
    }

    pub fn increment(&self, cell: usize) -> Vec<f64> {
        self.nodal[cell + 1]
            .iter()
            .zip(&self.nodal[cell])
            .map(|(b, a)| b - a)
            .collect()
    }

    pub fn fgbm_chaos_at(&self, t: f64, trunc: &TruncationSpec) -> Result<ChaosExpansion> {
        Ok(ChaosExpansion::first_order(&self.coeffs_at(t)?, *trunc))
    }

    pub fn increment_chaos(&self, cell: usize, trunc: &TruncationSpec) -> ChaosExpansion {
        ChaosExpansion::first_order(&self.increment(cell), *trunc)
    }

    /// `e_k(t)` from the spectral quadrature.
    pub fn inverse(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok(self.spectral.inverse(t))
    }

    pub fn noise(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok(self.spectral.noise(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::{hermite_function, mh_time_domain};
    use crate::numerics::{linear_fit, GaussLegendre};

    fn hi(h: f64) -> HurstIndex {
        HurstIndex::new(h).unwrap()
    }

    fn tr(k: usize) -> TruncationSpec {
        TruncationSpec::new(4, k).unwrap()
    }

    #[test]
    fn half_is_identity() {
        let v = gnoise_coeffs(0.8, hi(0.5), &tr(40)).unwrap();
        for (k, x) in v.iter().enumerate() {
            assert_eq!(*x, hermite_function(k + 1, 0.8));
        }
    }

    #[test]
    fn integrated_at_half_matches_time_quadrature() {
        let gl = GaussLegendre::new(40);
        for t in [0.3, 1.0, 2.5] {
            let v = integrated_coeffs(t, hi(0.5), &tr(24)).unwrap();
            for k in 1..=24 {
                let exact = gl.composite(0.0, t, 8, |s| hermite_function(k, s));
                assert!((v[k - 1] - exact).abs() < 1e-9, "k={k} t={t}: {} vs {exact}", v[k - 1]);
            }
        }
    }

    #[test]
    fn noise_matches_time_domain_operator() {
        for h in [0.3, 0.7] {
            for t in [0.0, 0.5, 1.3] {
                let v = gnoise_coeffs(t, hi(h), &tr(4)).unwrap();
                for k in 1..=4 {
                    let f = move |x: f64| hermite_function(k, x);
                    let o = mh_time_domain(&f, (-14.0, 14.0), t, hi(h));
                    assert!((v[k - 1] - o).abs() < 1e-5, "h={h} k={k} t={t}: {} vs {o}", v[k - 1]);
                }
            }
        }
    }

    #[test]
    fn derivative_of_integrated_is_noise() {
        let d = 1e-4;
        for h in [0.3, 0.7] {
            let sp = HermiteSpectral::new(hi(h), 32, 2.0).unwrap();
            for t in [0.2, 0.9, 1.7] {
                let up = sp.integrated(t + d);
                let dn = sp.integrated(t - d);
                let m = sp.noise(t);
                for k in 0..32 {
                    let fd = (up[k] - dn[k]) / (2.0 * d);
                    assert!((fd - m[k]).abs() < 1e-6, "h={h} t={t} k={}", k + 1);
                }
            }
        }
    }

    #[test]
    fn inverse_is_dual_operator() {
        // M_H^{-1} = M_{1-H} / (c_H c_{1-H})
        for h in [0.3, 0.8] {
            let c = mh_constant(hi(h)) * mh_constant(hi(1.0 - h));
            let sp = HermiteSpectral::new(hi(h), 12, 1.0).unwrap();
            let dual = HermiteSpectral::new(hi(1.0 - h), 12, 1.0).unwrap();
            for t in [0.0, 0.4, 1.0] {
                let e = sp.inverse(t);
                let m = dual.noise(t);
                for k in 0..12 {
                    assert!((e[k] - m[k] / c).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn variance_truncation_at_half() {
        // independent oracle: partial sums of (int_0^1 h~_k)^2
        let table = [(16, 0.9015), (32, 0.9107), (64, 0.9484), (128, 0.9607)];
        let sp = HermiteSpectral::new(hi(0.5), 128, 1.0).unwrap();
        let b = sp.integrated(1.0);
        for (k, want) in table {
            let s: f64 = b[..k].iter().map(|x| x * x).sum();
            assert!((s - want).abs() < 5e-4, "K={k}: {s}");
        }
    }

    #[test]
    fn weighted_noise_sums_bounded_in_t() {
        let h = hi(0.3);
        let sp = HermiteSpectral::new(h, 256, 20.0).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=40 {
            let t = i as f64 * 0.5;
            let m = sp.noise(t);
            let s: f64 = m
                .iter()
                .enumerate()
                .map(|(k, v)| v * v * (2.0 * (k + 1) as f64).powi(-2))
                .sum();
            worst = worst.max(s);
        }
        assert!(worst.is_finite() && worst < 1.0, "{worst}");
    }

    #[test]
    fn coefficient_growth_exponent() {
        for h in [0.3, 0.7] {
            let sp = HermiteSpectral::new(hi(h), 256, 3.0).unwrap();
            let mut env = vec![0.0f64; 256];
            for i in 0..=30 {
                let m = sp.noise(i as f64 * 0.1);
                for k in 0..256 {
                    env[k] = env[k].max(m[k].abs());
                }
            }
            let ks: Vec<f64> = (16..=256).map(|k| (k as f64).ln()).collect();
            let ys: Vec<f64> = (16..=256).map(|k| env[k - 1].ln()).collect();
            let (_, slope, _) = linear_fit(&ks, &ys);
            let bound = -1.0 / 12.0 + 0.75 - h / 2.0;
            assert!(slope <= bound + 0.1, "h={h}: slope {slope} vs {bound}");
        }
    }

    #[test]
    fn discrete_model_interpolates() {
        let nb = NoiseBasis::new(hi(0.7), 1.0, 8, 16).unwrap();
        let direct = integrated_coeffs(0.5, hi(0.7), &tr(16)).unwrap();
        let v = nb.coeffs_at(0.5).unwrap();
        for k in 0..16 {
            assert!((v[k] - direct[k]).abs() < 1e-9);
        }
        assert!(nb.coeffs_at(1.5).is_err());
        assert_eq!(nb.coeffs_at(0.0).unwrap().iter().map(|x| x.abs()).sum::<f64>(), 0.0);
        assert!(fgbm_chaos(0.0, hi(0.7), &tr(8)).unwrap().is_empty());
        assert!(gnoise_coeffs(0.1, hi(0.7), &TruncationSpec { max_order: 2, max_basis: 513 }).is_err());
    }
}
