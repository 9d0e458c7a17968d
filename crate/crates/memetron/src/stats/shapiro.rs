//! Shapiro–Wilk normality test via Royston's AS R94 approximation,
//! valid for sample sizes 3..=5000.

use crate::error::{Error, Result};

use super::dist::{normal_cdf, normal_quantile};

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(coefficients: &[f64], x: f64) -> f64 {
    coefficients
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * x + c)
}

/// W statistic and p-value of the Shapiro–Wilk test.
///
/// Errors on sample sizes outside 3..=5000 and on degenerate (all-equal)
/// samples, where the statistic is undefined.
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64)> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::SizeOutOfRange {
            n,
            min: 3,
            max: 5000,
        });
    }
    let mut x: Vec<f64> = sample.to_vec();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("sample contains non-finite values".into()));
    }
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(Error::DegenerateSample);
    }

    let an = n as f64;
    let n2 = n / 2;

    // Expected normal order statistics for the lower half, then the Royston
    // polynomial corrections to the extreme weights.
    let mut weights = vec![0.0f64; n2];
    if n == 3 {
        weights[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let mut m = vec![0.0f64; n2];
        let mut sum_m2 = 0.0;
        for (i, slot) in m.iter_mut().enumerate() {
            *slot = normal_quantile((i as f64 + 1.0 - 0.375) / (an + 0.25));
            sum_m2 += *slot * *slot;
        }
        sum_m2 *= 2.0;
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / sum_m2.sqrt();

        let (start, fac) = if n > 5 {
            let a2 = -m[1] / sum_m2.sqrt() + poly(&C2, rsn);
            let fac = ((sum_m2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            weights[1] = a2;
            (2, fac)
        } else {
            let fac =
                ((sum_m2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        weights[0] = a1;
        for i in start..n2 {
            weights[i] = -m[i] / fac;
        }
    }

    // Antisymmetric coefficient vector: -w for the lower half, +w mirrored
    // for the upper half, 0 in the middle of odd-sized samples.
    let coefficient = |i: usize| -> f64 {
        let j = n - 1 - i;
        match i.cmp(&j) {
            std::cmp::Ordering::Less => -weights[i],
            std::cmp::Ordering::Greater => weights[j],
            std::cmp::Ordering::Equal => 0.0,
        }
    };

    // W is the squared correlation between coefficients and sorted data.
    let mean_x: f64 = x.iter().sum::<f64>() / an;
    let mean_c: f64 = (0..n).map(coefficient).sum::<f64>() / an;
    let mut ssx = 0.0;
    let mut ssc = 0.0;
    let mut sxc = 0.0;
    for (i, value) in x.iter().enumerate() {
        let dx = value - mean_x;
        let dc = coefficient(i) - mean_c;
        ssx += dx * dx;
        ssc += dc * dc;
        sxc += dx * dc;
    }
    let w = (sxc * sxc) / (ssx * ssc);
    let w = w.min(1.0);

    if n == 3 {
        // Exact small-sample distribution.
        let pi6 = 6.0 / std::f64::consts::PI;
        let p = (pi6 * ((w.sqrt()).asin() - (0.75f64.sqrt()).asin())).clamp(0.0, 1.0);
        return Ok((w, p));
    }

    let y = (1.0 - w).ln();
    let p = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            0.0
        } else {
            let y = -(gamma - y).ln();
            let mu = poly(&C3, an);
            let sigma = poly(&C4, an).exp();
            1.0 - normal_cdf((y - mu) / sigma)
        }
    } else {
        let ln_n = an.ln();
        let mu = poly(&C5, ln_n);
        let sigma = poly(&C6, ln_n).exp();
        1.0 - normal_cdf((y - mu) / sigma)
    };
    Ok((w, p.clamp(0.0, 1.0)))
}
