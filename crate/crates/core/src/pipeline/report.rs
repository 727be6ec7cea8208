use std::io::Write;
use std::path::Path;

use serde::{Serialize, Serializer};

use super::evaluate::Residual;
use super::TestConfig;
use crate::error::Result;

/// Serializes non-finite values as the strings `"inf"`, `"-inf"` and `"nan"`.
pub(crate) fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub(crate) fn json_f64(v: f64) -> serde_json::Value {
    serde_json::to_value(Wrapped(v)).expect("float serializes")
}

#[derive(Serialize)]
struct Wrapped(#[serde(serialize_with = "ser_f64")] f64);

/// Asymptotic operation count of the exhaustive search against the searched budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    /// `C (V / tau^d) n ln(1 / tau)`, the natural log of the operation count.
    pub log_ops: f64,
    pub log2_ops: f64,
    pub searched: usize,
    pub statement: String,
}

/// `exp(C (V / tau^d) n ln(1/tau))` for ambient dimension `n`, reported in base 2
/// next to the number of packets actually searched.
pub fn budget_estimate(config: &TestConfig, n: usize) -> BudgetReport {
    let log_ops = config.c * config.volume / config.tau.powi(config.d as i32)
        * n as f64
        * (1.0 / config.tau).ln();
    let log2_ops = log_ops / std::f64::consts::LN_2;
    let statement = format!(
        "searched {} of ~2^{:.0} candidate packets; Case Two is certified only over the searched family",
        config.packet_budget, log2_ops
    );
    BudgetReport {
        log_ops,
        log2_ops,
        searched: config.packet_budget,
        statement,
    }
}

/// Per-point residual table: `index,residual,in_tube,weight`.
pub fn write_residual_csv(residuals: &[Residual], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,residual,in_tube,weight")?;
    for r in residuals {
        writeln!(
            f,
            "{},{:.17e},{},{:.17e}",
            r.index,
            r.residual,
            u8::from(r.in_tube),
            r.weight
        )?;
    }
    f.flush()?;
    Ok(())
}
