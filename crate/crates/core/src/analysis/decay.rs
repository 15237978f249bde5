use serde::Serialize;

use super::certificate::StabilityCertificate;
use crate::error::{Error, Result};
use crate::field::SolutionField;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub rho: f64,
    pub c: f64,
    pub checked: usize,
    pub violations: usize,
    /// max over checked rows of sup|N| / (c e^{−ρ(t − τ_max)}).
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Fitted rate of sup_{m>0} |N| ≈ ĉ e^{−rate (t − t_start)};
    /// infinite when the field vanishes identically.
    pub rate: f64,
    pub prefactor: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    /// Same fit with m = 0 included in the supremum.
    pub rate_with_origin: f64,
    pub samples: usize,
    pub envelope: Option<EnvelopeCheck>,
}

/// Least-squares slope and intercept of y against t, with RMS residual.
fn fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let (st, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (t - mt), b + (t - mt) * (y - my))
    });
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let rms = (points
        .iter()
        .map(|(t, y)| (y - intercept - slope * t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

fn log_sup(field: &SolutionField, rows: &[usize], skip_origin: bool) -> Vec<(f64, f64)> {
    let skip = usize::from(skip_origin && field.maturities()[0] == 0.0);
    rows.iter()
        .filter_map(|&r| {
            let s = field.row(r)[skip..]
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            (s > 0.0).then(|| (field.time(r), s.ln()))
        })
        .collect()
}

/// Exponential decay rate of sup_m |N| over rows with t ≥ t_start, and the
/// certified envelope check when a certificate with a rate is given.
pub fn decay_rate_estimate(
    field: &SolutionField,
    t_start: f64,
    certificate: Option<&StabilityCertificate>,
) -> Result<DecayFit> {
    let rows: Vec<usize> = (0..field.rows())
        .filter(|&r| field.time(r) >= t_start - 1e-9 * field.dt())
        .collect();
    if rows.len() < 2 {
        return Err(Error::param(
            "decay.t_start",
            "fewer than two rows after t_start",
        ));
    }
    let envelope = certificate.and_then(|c| {
        let (rho, cc) = (c.rho?, c.c?);
        let mut check = EnvelopeCheck {
            rho,
            c: cc,
            checked: 0,
            violations: 0,
            worst_ratio: 0.0,
        };
        for r in (0..field.rows()).filter(|&r| field.time(r) >= c.tau_max - 1e-9) {
            let bound = c.envelope(field.time(r))?;
            let ratio = field.row_sup(r) / bound;
            check.checked += 1;
            check.worst_ratio = check.worst_ratio.max(ratio);
            if ratio > 1.0 {
                check.violations += 1;
            }
        }
        Some(check)
    });
    let interior = log_sup(field, &rows, true);
    let all = log_sup(field, &rows, false);
    if all.is_empty() {
        return Ok(DecayFit {
            rate: f64::INFINITY,
            prefactor: 0.0,
            residual: 0.0,
            rate_with_origin: f64::INFINITY,
            samples: 0,
            envelope,
        });
    }
    let rate_of = |pts: &[(f64, f64)]| {
        if pts.len() < 2 {
            (f64::INFINITY, 0.0, 0.0)
        } else {
            let (s, b, rms) = fit(pts);
            (-s, (b + s * t_start).exp(), rms)
        }
    };
    let (rate, prefactor, residual) = rate_of(&interior);
    let (rate_with_origin, _, _) = rate_of(&all);
    Ok(DecayFit {
        rate,
        prefactor,
        residual,
        rate_with_origin,
        samples: interior.len(),
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exponential(rate: f64) -> SolutionField {
        let nodes = vec![0.0, 0.5, 1.0];
        let rows = 51;
        let values = (0..rows)
            .flat_map(|r| {
                let t = 0.1 * r as f64;
                [0.0, 2.0 * (-rate * t).exp(), (-rate * t).exp()]
            })
            .collect();
        SolutionField::new(0.0, 0.1, rows, nodes, values).unwrap()
    }

    #[test]
    fn recovers_exact_exponential() {
        let fit = decay_rate_estimate(&exponential(0.3), 1.0, None).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-12);
        assert!((fit.prefactor - 2.0 * (-0.3f64).exp()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(fit.envelope.is_none());
    }

    #[test]
    fn zero_field_has_infinite_rate() {
        let f = SolutionField::zeros(0.0, 0.1, 10, vec![0.0, 1.0]).unwrap();
        let fit = decay_rate_estimate(&f, 0.0, None).unwrap();
        assert!(fit.rate.is_infinite());
    }
}
