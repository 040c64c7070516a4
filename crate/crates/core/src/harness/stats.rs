//! Regret-curve statistics.

use super::HarnessError;
use serde::{Deserialize, Serialize};

/// Shortest run the exponent fit accepts.
pub const MIN_FIT_EPISODES: usize = 100;

/// `log Reg(k) ≈ log a + b log k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
}

/// Least-squares power-law fit of a cumulative regret curve (`cum[k-1] =
/// Reg(k)`) over the second half of the run, `k > ⌊K/2⌋`.
///
/// Points with zero regret are dropped; with fewer than two positive points
/// the curve is reported flat (`a = 0, b = 0, r² = 1`), and a constant
/// curve gets `b = 0, r² = 1`.
pub fn fit_regret_exponent(cum: &[f64]) -> Result<RegretFit, HarnessError> {
    let k = cum.len();
    if k < MIN_FIT_EPISODES {
        return Err(HarnessError::TooFewEpisodes {
            got: k,
            need: MIN_FIT_EPISODES,
        });
    }
    let pts: Vec<(f64, f64)> = (k / 2..k)
        .filter(|&i| cum[i] > 0.0)
        .map(|i| (((i + 1) as f64).ln(), cum[i].ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(RegretFit {
            a: 0.0,
            b: 0.0,
            r2: 1.0,
        });
    }
    if pts.iter().all(|p| p.1 == pts[0].1) {
        return Ok(RegretFit {
            a: pts[0].1.exp(),
            b: 0.0,
            r2: 1.0,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let intercept = my - b * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - b * p.0).powi(2))
        .sum();
    let r2 = 1.0 - ss_res / ss_tot;
    Ok(RegretFit {
        a: intercept.exp(),
        b,
        r2,
    })
}

/// Mean and standard error (`n − 1` variance); the error is 0 for one value.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_laws() {
        let sqrt: Vec<f64> = (1..=1000).map(|k| 2.0 * (k as f64).sqrt()).collect();
        let f = fit_regret_exponent(&sqrt).unwrap();
        assert!((f.b - 0.5).abs() < 0.01 && f.r2 > 0.999);
        assert!((f.a - 2.0).abs() < 1e-9);
        let lin: Vec<f64> = (1..=1000).map(|k| 0.1 * k as f64).collect();
        assert!((fit_regret_exponent(&lin).unwrap().b - 1.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_curves() {
        assert_eq!(
            fit_regret_exponent(&[0.0; 200]).unwrap(),
            RegretFit {
                a: 0.0,
                b: 0.0,
                r2: 1.0
            }
        );
        let flat = fit_regret_exponent(&[3.0; 200]).unwrap();
        assert!(flat.b.abs() < 1e-12 && flat.r2 == 1.0);
        assert!(matches!(
            fit_regret_exponent(&[1.0; 99]),
            Err(HarnessError::TooFewEpisodes { got: 99, need: 100 })
        ));
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[7.0]), (7.0, 0.0));
    }
}
