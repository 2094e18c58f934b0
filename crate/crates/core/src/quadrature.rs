//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

impl Quadrature {
    /// Integrates `f` over the finite interval `[a, b]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<Integral> {
        if a == b {
            return Ok(Integral { value: 0.0, error: 0.0 });
        }
        let mut pieces = vec![(a, b, gk15(&f, a, b))];
        loop {
            let value: f64 = pieces.iter().map(|p| p.2 .0).sum();
            let error: f64 = pieces.iter().map(|p| p.2 .1).sum();
            if error <= self.abs_tol.max(self.rel_tol * value.abs()) {
                return Ok(Integral { value, error });
            }
            if pieces.len() >= self.max_intervals {
                return Err(Error::Quadrature { estimate: value, error });
            }
            let worst = pieces
                .iter()
                .enumerate()
                .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let (lo, hi, _) = pieces.swap_remove(worst);
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // interval exhausted at machine precision
                let value: f64 = pieces.iter().map(|p| p.2 .0).sum::<f64>();
                return Err(Error::Quadrature { estimate: value, error });
            }
            pieces.push((lo, mid, gk15(&f, lo, mid)));
            pieces.push((mid, hi, gk15(&f, mid, hi)));
        }
    }

    /// Integrates over `[a, inf)` with `t = a + s / (1 - s)`.
    pub fn integrate_to_infinity(&self, f: impl Fn(f64) -> f64, a: f64) -> Result<Integral> {
        self.integrate(
            |s| {
                if s >= 1.0 {
                    return 0.0;
                }
                let one_minus = 1.0 - s;
                let t = a + s / one_minus;
                let v = f(t) / (one_minus * one_minus);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = Quadrature::default();
        let r = q.integrate(|x| 3.0 * x * x, 0.0, 2.0).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_tail() {
        let q = Quadrature::default();
        let r = q
            .integrate_to_infinity(|x| (-x * x / 2.0).exp(), 0.0)
            .unwrap();
        assert!((r.value - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        let q = Quadrature::default();
        let r = q.integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{}", r.value);
    }
}
