use super::{GradientError, GradientTable};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientErrorNorms {
    /// Largest entrywise discrepancy over both `p` and `q` blocks.
    pub max_abs: f64,
    /// Frobenius norm of the stacked `[∂v/∂p, ∂v/∂q]` difference.
    pub frobenius: f64,
}

pub fn gradient_error(
    table: &GradientTable,
    oracle: &GradientTable,
) -> Result<GradientErrorNorms, GradientError> {
    if table.observed != oracle.observed || table.actuated != oracle.actuated {
        return Err(GradientError::IndexMismatch);
    }
    let dp = &table.dv_dp - &oracle.dv_dp;
    let dq = &table.dv_dq - &oracle.dv_dq;
    let max_abs = dp.amax().max(dq.amax());
    let frobenius = (dp.norm_squared() + dq.norm_squared()).sqrt();
    Ok(GradientErrorNorms { max_abs, frobenius })
}
