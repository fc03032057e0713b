//! Normality testing of per-run accuracies.
//!
//! Shapiro–Wilk W with Royston's polynomial approximations for the
//! coefficients and p-value (algorithm AS R94), valid for 3 ≤ n ≤ 5000.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    #[serde(rename = "W")]
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// A normality test over a sample; lets validation swap the test family.
pub trait NormalityTest: Send + Sync {
    fn name(&self) -> &'static str;
    fn test(&self, xs: &[f64]) -> Result<NormalityResult>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ShapiroWilk;

impl NormalityTest for ShapiroWilk {
    fn name(&self) -> &'static str {
        "shapiro-wilk"
    }

    fn test(&self, xs: &[f64]) -> Result<NormalityResult> {
        shapiro_wilk(xs)
    }
}

const SMALL: f64 = 1e-19;

fn poly(cc: &[f64], x: f64) -> f64 {
    let mut ret = cc[0];
    if cc.len() > 1 {
        let mut p = x * cc[cc.len() - 1];
        for &c in cc[1..cc.len() - 1].iter().rev() {
            p = (p + c) * x;
        }
        ret += p;
    }
    ret
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Half-vector `a[0..n/2]` of Shapiro–Wilk coefficients (largest first,
/// positive), antisymmetric around the median.
fn coefficients(n: usize) -> Vec<f64> {
    let nn2 = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let z = std_normal();
    let an = n as f64;
    let an25 = an + 0.25;
    // m[i] are approximate expected normal order statistics (negative tail).
    let mut m: Vec<f64> = (1..=nn2).map(|i| z.inverse_cdf((i as f64 - 0.375) / an25)).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();

    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let (first_scaled, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        m[1] = -a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    m[0] = -a1;
    for v in &mut m[first_scaled..] {
        *v /= fac;
    }
    // m now holds the lower-tail coefficients (negative); flip to positive.
    m.iter().map(|v| -v).collect()
}

/// Shapiro–Wilk W and its p-value.
pub fn shapiro_wilk(xs: &[f64]) -> Result<NormalityResult> {
    let n = xs.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::argument(format!(
            "Shapiro–Wilk needs 3 ≤ n ≤ 5000, got {n}"
        )));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("Shapiro–Wilk input must be finite"));
    }
    let mut x = xs.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range < SMALL {
        return Err(Error::Degenerate("all values are identical".into()));
    }

    let half = coefficients(n);
    let nn2 = n / 2;
    let coef: Vec<f64> = (0..n)
        .map(|i| {
            let j = n - 1 - i;
            match i.cmp(&j) {
                std::cmp::Ordering::Less => -half[i],
                std::cmp::Ordering::Greater => half[j],
                std::cmp::Ordering::Equal => 0.0,
            }
        })
        .collect();
    debug_assert_eq!(coef.len(), n);
    debug_assert!(nn2 == half.len());

    let scaled: Vec<f64> = x.iter().map(|v| v / range).collect();
    let sa = coef.iter().sum::<f64>() / n as f64;
    let sx = scaled.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (a, xv) in coef.iter().zip(&scaled) {
        let asa = a - sa;
        let xsx = xv - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    // 1 − W, computed this way to keep precision when W is close to 1.
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    Ok(NormalityResult {
        statistic: w,
        p_value: p_value(w, w1, n),
        n,
    })
}

fn p_value(w: f64, w1: f64, n: usize) -> f64 {
    if n == 3 {
        const SIX_OVER_PI: f64 = 1.909_859_317_102_744;
        const PI_OVER_THREE: f64 = std::f64::consts::FRAC_PI_3;
        return (SIX_OVER_PI * (w.sqrt().asin() - PI_OVER_THREE)).clamp(0.0, 1.0);
    }
    const G: [f64; 2] = [-2.273, 0.459];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

    let an = n as f64;
    let mut y = w1.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return 1e-99;
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let ln_n = an.ln();
        (poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    std_normal().sf((y - m) / s).clamp(0.0, 1.0)
}
