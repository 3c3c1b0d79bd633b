//! Student and Welch t-tests. Two-sided p-values come from the regularized
//! incomplete beta function: `p = I_{df/(df+t^2)}(df/2, 1/2)`.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn one_sample_t_test(values: &[f64], mu0: f64) -> Result<TTest, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFew {
            need: 2,
            got: values.len(),
        });
    }
    let (mean, var) = mean_var(values);
    if var == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let n = values.len() as f64;
    let t = (mean - mu0) / (var / n).sqrt();
    let df = n - 1.0;
    Ok(TTest {
        t,
        df,
        p: two_sided_p(t, df),
    })
}

/// Welch's unequal-variance test with Welch-Satterthwaite degrees of
/// freedom. Two constant samples give `t = 0, p = 1` when equal and
/// `t = +-inf, p = 0` otherwise.
pub fn unpaired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    let short = a.len().min(b.len());
    if short < 2 {
        return Err(MetricsError::TooFew { need: 2, got: short });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest {
        t,
        df,
        p: two_sided_p(t, df),
    })
}
