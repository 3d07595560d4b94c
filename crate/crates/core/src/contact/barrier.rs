//! Log barrier `b(d) = -κ (d - d̂)² ln(d / d̂)` supported on `0 < d < d̂`.

use super::BarrierParams;
use crate::{Error, Result};

fn check(d: f64) -> Result<()> {
    if d > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveDistance { distance: d })
    }
}

pub fn barrier(d: f64, p: &BarrierParams) -> Result<f64> {
    check(d)?;
    if d >= p.dhat {
        return Ok(0.0);
    }
    let t = d - p.dhat;
    Ok(-p.kappa * t * t * (d / p.dhat).ln())
}

/// `db/dd`.
pub fn barrier_derivative(d: f64, p: &BarrierParams) -> Result<f64> {
    check(d)?;
    if d >= p.dhat {
        return Ok(0.0);
    }
    let t = d - p.dhat;
    Ok(-p.kappa * (2.0 * t * (d / p.dhat).ln() + t * t / d))
}

/// `d²b/dd²`.
pub fn barrier_second_derivative(d: f64, p: &BarrierParams) -> Result<f64> {
    check(d)?;
    if d >= p.dhat {
        return Ok(0.0);
    }
    let t = d - p.dhat;
    Ok(-p.kappa * (2.0 * (d / p.dhat).ln() + 4.0 * t / d - t * t / (d * d)))
}
