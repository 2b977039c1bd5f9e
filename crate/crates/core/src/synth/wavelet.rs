//! Orthonormal compactly supported wavelet filters and the periodic
//! discrete wavelet transform.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const FILTER_TABLE: &str = include_str!("../../data/daubechies.txt");

/// Low-pass Daubechies filter with `n` vanishing moments (`2 <= n <= 8`).
pub fn daubechies_filter(n: usize) -> Result<Vec<f64>> {
    for line in FILTER_TABLE.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let order: usize = it.next().and_then(|s| s.parse().ok()).unwrap_or(0);
        if order == n {
            return Ok(it.map(|s| s.parse::<f64>().expect("filter table is numeric")).collect());
        }
    }
    Err(invalid(format!(
        "no bundled filter with {n} vanishing moments (available: 2..=8)"
    )))
}

/// Largest violation of `sum h = sqrt 2` and `sum_k h_k h_{k+2m} = delta_{m0}`.
pub fn orthonormality_residual(h: &[f64]) -> f64 {
    let mut worst = (h.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs();
    let len = h.len();
    for m in 0..len.div_ceil(2) {
        let s: f64 = (0..len.saturating_sub(2 * m)).map(|k| h[k] * h[k + 2 * m]).sum();
        let target = if m == 0 { 1.0 } else { 0.0 };
        worst = worst.max((s - target).abs());
    }
    worst
}

fn high_pass(h: &[f64]) -> Vec<f64> {
    let l = h.len();
    (0..l)
        .map(|k| if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletParams {
    pub vanishing_moments: usize,
    /// Finest detail level is `levels - 1`.
    pub levels: usize,
    pub filter: Vec<f64>,
    /// History window in units of the horizon (noise on `[-window*T, 0]`).
    pub window: usize,
    /// Levels used on history blocks further than one horizon back.
    pub far_levels: usize,
    /// Extra dyadic levels used when projecting the kernels.
    pub oversample: usize,
}

impl WaveletParams {
    pub fn daubechies(vanishing_moments: usize, levels: usize) -> Result<Self> {
        if vanishing_moments < 2 {
            return Err(invalid("wavelet needs at least 2 vanishing moments"));
        }
        if levels < 2 {
            return Err(invalid("wavelet expansion needs at least 2 levels"));
        }
        if levels > 16 {
            return Err(invalid("more than 16 wavelet levels is not supported"));
        }
        Ok(Self {
            vanishing_moments,
            levels,
            filter: daubechies_filter(vanishing_moments)?,
            window: 20,
            far_levels: levels.min(5),
            oversample: 2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter.len() != 2 * self.vanishing_moments {
            return Err(invalid("filter length must be twice the vanishing moments"));
        }
        let r = orthonormality_residual(&self.filter);
        if r > 1e-12 {
            return Err(invalid(format!("filter violates orthonormality by {r:e}")));
        }
        if self.window < 1 || self.far_levels < 1 || self.far_levels > self.levels {
            return Err(invalid("wavelet window/far_levels out of range"));
        }
        Ok(())
    }
}

impl Default for WaveletParams {
    fn default() -> Self {
        Self::daubechies(4, 10).expect("bundled default filter")
    }
}

/// Full periodic decomposition of a length-`2^m` signal. Output layout:
/// `[a_0, d_0, d_1 (2), d_2 (4), ..., d_{m-1} (2^{m-1})]`.
pub fn dwt_periodic(data: &[f64], h: &[f64]) -> Vec<f64> {
    let n = data.len();
    assert!(n.is_power_of_two(), "periodic DWT needs a power-of-two length");
    let g = high_pass(h);
    let mut out = vec![0.0; n];
    let mut approx = data.to_vec();
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        let mut a = vec![0.0; half];
        let mut d = vec![0.0; half];
        for i in 0..half {
            let (mut sa, mut sd) = (0.0, 0.0);
            for k in 0..h.len() {
                let x = approx[(2 * i + k) % len];
                sa += h[k] * x;
                sd += g[k] * x;
            }
            a[i] = sa;
            d[i] = sd;
        }
        out[half..len].copy_from_slice(&d);
        approx = a;
        len = half;
    }
    out[0] = approx[0];
    out
}

/// Inverse of [`dwt_periodic`].
pub fn idwt_periodic(coeffs: &[f64], h: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    assert!(n.is_power_of_two());
    let g = high_pass(h);
    let mut approx = vec![coeffs[0]];
    let mut len = 1;
    while len < n {
        let d = &coeffs[len..2 * len];
        let full = 2 * len;
        let mut next = vec![0.0; full];
        for i in 0..len {
            for k in 0..h.len() {
                let idx = (2 * i + k) % full;
                next[idx] += h[k] * approx[i] + g[k] * d[i];
            }
        }
        approx = next;
        len = full;
    }
    approx
}

/// `(level, shift)` of a coefficient index in the [`dwt_periodic`] layout;
/// the scaling coefficient reports level `-1`.
pub fn level_of(index: usize) -> (i32, usize) {
    if index == 0 {
        return (-1, 0);
    }
    let j = usize::BITS - 1 - index.leading_zeros();
    (j as i32, index - (1usize << j))
}
