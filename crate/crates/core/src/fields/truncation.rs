use super::{gradient_at, GradientField, GradientMatrix, MatRef, SampledField};
use crate::error::{invalid, Error, Result};

/// `u_k = u` where `|u| ≤ k`, `u_k = k u/|u|` where `|u| > k`.
///
/// Norms within a few ulps above `k` count as `|u| = k`, so that truncating
/// an already truncated field changes nothing.
pub fn vectorial_truncation(u: &SampledField, k: f64) -> Result<SampledField> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(invalid(format!("truncation level must be positive, got {k}")));
    }
    let nn = u.target_dim();
    let mut values = u.values().to_vec();
    for chunk in values.chunks_mut(nn) {
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > k * (1.0 + 4.0 * f64::EPSILON) {
            let s = k / norm;
            chunk.iter_mut().for_each(|v| *v *= s);
        }
    }
    SampledField::new(u.grid().clone(), nn, values)
}

/// Gradient of the vectorial truncation at a point of the superlevel set:
///
/// `D_i u_k^α = (k/|u|) [D_i u^α − (u^α/|u|) Σ_β (u^β/|u|) D_i u^β]`.
///
/// The bracket is `Du` with its component along `u/|u|` removed, so the
/// Frobenius norm never exceeds `|Du|`.
pub fn truncation_gradient_from(value: &[f64], du: MatRef<'_>, k: f64) -> Result<GradientMatrix> {
    if value.len() != du.rows() {
        return Err(crate::error::mismatch("value length must equal the gradient's row count"));
    }
    let norm = value.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(k > 0.0) || !(norm > k) {
        return Err(Error::Precondition(format!(
            "identity needs |u| > k > 0, got |u| = {norm}, k = {k}"
        )));
    }
    let (rows, cols) = (du.rows(), du.cols());
    let dir: Vec<f64> = value.iter().map(|v| v / norm).collect();
    let scale = k / norm;
    let mut out = GradientMatrix::zeros(rows, cols);
    for i in 0..cols {
        let along: f64 = (0..rows).map(|beta| dir[beta] * du.get(beta, i)).sum();
        for alpha in 0..rows {
            out.set(alpha, i, scale * (du.get(alpha, i) - dir[alpha] * along));
        }
    }
    Ok(out)
}

/// [`truncation_gradient_from`] with `Du` taken from the field's finite differences.
pub fn truncation_gradient_identity(u: &SampledField, k: f64, node: usize) -> Result<GradientMatrix> {
    if node >= u.grid().node_count() {
        return Err(invalid(format!("node {node} out of range")));
    }
    let du = gradient_at(u, node);
    truncation_gradient_from(u.value(node), du.view(), k)
}

/// Scalar truncation `max(−k, min(u, k))`; only defined for `N = 1`.
pub fn scalar_truncation(u: &SampledField, k: f64) -> Result<SampledField> {
    require_scalar(u)?;
    if !(k > 0.0) || !k.is_finite() {
        return Err(invalid(format!("truncation level must be positive, got {k}")));
    }
    let values = u.values().iter().map(|v| v.clamp(-k, k)).collect();
    SampledField::new(u.grid().clone(), 1, values)
}

/// Weak gradient of the scalar truncation: `Du` on `{|u| ≤ k}`, zero elsewhere.
pub fn scalar_truncation_gradient(u: &SampledField, du: &GradientField, k: f64) -> Result<GradientField> {
    require_scalar(u)?;
    if du.grid() != u.grid() || du.rows() != 1 {
        return Err(crate::error::mismatch("gradient field does not belong to the scalar field"));
    }
    let n = du.cols();
    let mut data = du.data().to_vec();
    for (node, chunk) in data.chunks_mut(n).enumerate() {
        if u.values()[node].abs() > k {
            chunk.fill(0.0);
        }
    }
    GradientField::new(u.grid().clone(), 1, data)
}

fn require_scalar(u: &SampledField) -> Result<()> {
    if u.target_dim() != 1 {
        return Err(Error::Precondition(format!(
            "scalar truncation needs N = 1, got N = {}",
            u.target_dim()
        )));
    }
    Ok(())
}
