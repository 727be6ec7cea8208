use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Empirical Rademacher complexity of a finite class: rows of `values` are the
/// functions, columns the sample points. Averages `(1/s) max_f sum_i sigma_i f(x_i)`
/// over `trials` random sign vectors.
pub fn empirical_rademacher(
    values: &DMatrix<f64>,
    trials: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    let (nf, s) = values.shape();
    if nf == 0 || s == 0 {
        return Err(Error::EmptyInput("function evaluation matrix"));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut rng = linalg::rng(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sigma = vec![0.0; s];
    for _ in 0..trials {
        for x in sigma.iter_mut() {
            *x = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let sup = (0..nf)
            .map(|r| (0..s).map(|c| sigma[c] * values[(r, c)]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
            / s as f64;
        sum += sup;
        sum_sq += sup * sup;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = if trials > 1 {
        ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        mean,
        std_error: (var / t).sqrt(),
        trials,
    })
}
