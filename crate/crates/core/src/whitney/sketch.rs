use nalgebra::DVector;

use crate::error::{Error, Result};

/// Representatives with group weights, group-mean targets and the assignment map.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchedData {
    pub reps: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub targets: Vec<DVector<f64>>,
    pub assignment: Vec<usize>,
}

impl SketchedData {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }
}

/// [`sketch_weighted`] with uniform weights.
pub fn sketch(
    points: &[DVector<f64>],
    values: &[DVector<f64>],
    eps_bar: f64,
) -> Result<SketchedData> {
    let w = vec![1.0; points.len()];
    sketch_weighted(points, values, &w, eps_bar)
}

/// Sequential greedy sketch: each point joins the lowest-index representative
/// within `eps_bar` or becomes a new one. Weights are group masses normalized to
/// sum 1; targets are weighted group means.
pub fn sketch_weighted(
    points: &[DVector<f64>],
    values: &[DVector<f64>],
    weights: &[f64],
    eps_bar: f64,
) -> Result<SketchedData> {
    if points.is_empty() {
        return Err(Error::EmptyInput("sketch points"));
    }
    if values.len() != points.len() || weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: values.len().min(weights.len()),
        });
    }
    if !(eps_bar > 0.0) {
        return Err(Error::InvalidParameter("eps_bar must be positive".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidParameter(
            "weights must be nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("weights sum to zero".into()));
    }
    let mut reps: Vec<DVector<f64>> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    let mut sums: Vec<DVector<f64>> = Vec::new();
    let mut assignment = Vec::with_capacity(points.len());
    for ((p, v), &w) in points.iter().zip(values).zip(weights) {
        match reps.iter().position(|r| (r - p).norm() <= eps_bar) {
            Some(k) => {
                mass[k] += w;
                sums[k] += v * w;
                assignment.push(k);
            }
            None => {
                assignment.push(reps.len());
                reps.push(p.clone());
                mass.push(w);
                sums.push(v * w);
            }
        }
    }
    let targets = sums
        .iter()
        .zip(&mass)
        .map(|(s, &m)| if m > 0.0 { s / m } else { s.clone() })
        .collect();
    let weights = mass.iter().map(|m| m / total).collect();
    Ok(SketchedData {
        reps,
        weights,
        targets,
        assignment,
    })
}
