use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `params`.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p)?;
        p[i] = orig - step;
        let down = f(&p)?;
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("objective not finite around coordinate {i}")));
        }
        let g = (up - down) / (2.0 * step);
        if !g.is_finite() {
            return Err(Error::Numeric(format!("difference quotient overflowed at coordinate {i}")));
        }
        out.push(g);
    }
    Ok(out)
}

/// Largest elementwise relative error `|a−b| / max(|a|, |b|, floor)`.
///
/// The floor keeps coordinates whose true gradient is ~0 from dominating
/// with pure rounding noise.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
