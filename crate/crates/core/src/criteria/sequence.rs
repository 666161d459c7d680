//! Verdicts on sequences of truncated integrals.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceRate {
    /// At most quadratic in `log(1/r)`.
    Log,
    /// Faster than any fixed power of `log(1/r)` seen on the ladder.
    Power,
    ToMinusInfinity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum SequenceVerdict {
    /// `accelerated` marks a limit obtained by Aitken extrapolation of geometric increments.
    Converges { limit: f64, residual: f64, accelerated: bool },
    Diverges { rate: DivergenceRate },
    Oscillates { amplitude: f64 },
    Inconclusive { reason: String },
}

impl SequenceVerdict {
    pub fn converges(&self) -> bool {
        matches!(self, SequenceVerdict::Converges { .. })
    }
    pub fn limit(&self) -> Option<f64> {
        match self {
            SequenceVerdict::Converges { limit, .. } => Some(*limit),
            _ => None,
        }
    }
    pub fn to_minus_infinity(&self) -> bool {
        matches!(self, SequenceVerdict::Diverges { rate: DivergenceRate::ToMinusInfinity })
    }
}

/// Classify the partial values `p_k` of a truncated integral along the ladder.
///
/// Checked in order: the last three values agree within `tol` (scaled by
/// `max(1, |p|)`); the last three increments shrink geometrically with ratio at
/// most 0.9 and the two latest Aitken extrapolants agree within `tol`;
/// increments of one sign that do not decay (ratio at least 0.95); increments
/// alternating in sign without decaying amplitude.
pub fn sequence_verdict(p: &[f64], tol: f64) -> SequenceVerdict {
    let k = p.len();
    if k < 3 {
        return SequenceVerdict::Inconclusive { reason: format!("{k} partial values, need at least 3") };
    }
    if p.iter().any(|v| !v.is_finite()) {
        return SequenceVerdict::Inconclusive { reason: "non-finite partial value".into() };
    }
    let last = p[k - 1];
    let scale = last.abs().max(1.0);
    let tail = &p[k - 3..];
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= tol * scale {
        return SequenceVerdict::Converges { limit: last, residual: spread, accelerated: false };
    }
    let d: Vec<f64> = p.windows(2).map(|w| w[1] - w[0]).collect();
    let m = d.len();
    if m >= 3 {
        let (d1, d2, d3) = (d[m - 3], d[m - 2], d[m - 1]);
        let (q1, q2) = (d2 / d1, d3 / d2);
        if q1 > 0.0 && q2 > 0.0 && q1 <= 0.9 && q2 <= 0.9 && (q2 - q1).abs() <= 0.1 * q2.max(q1) {
            let a1 = p[k - 2] + d2 * q1 / (1.0 - q1);
            let a2 = last + d3 * q2 / (1.0 - q2);
            let residual = (a2 - a1).abs();
            if residual <= tol * a2.abs().max(1.0) {
                return SequenceVerdict::Converges { limit: a2, residual, accelerated: true };
            }
        }
    }
    if m >= 4 {
        let tail = &d[m - 4..];
        let same_sign = tail.iter().all(|&x| x > 0.0) || tail.iter().all(|&x| x < 0.0);
        if same_sign {
            let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
            if ratios.iter().all(|&q| q >= 0.95) {
                if tail[0] < 0.0 {
                    return SequenceVerdict::Diverges { rate: DivergenceRate::ToMinusInfinity };
                }
                let q = ratios.last().copied().unwrap();
                let rate = if q <= 4.0 { DivergenceRate::Log } else { DivergenceRate::Power };
                return SequenceVerdict::Diverges { rate };
            }
        }
        let alternating = tail.windows(2).all(|w| w[0] * w[1] < 0.0);
        if alternating && tail[3].abs() >= 0.5 * tail[1].abs() && tail[2].abs() >= 0.5 * tail[0].abs() {
            let window = &p[k - 5..];
            let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
            return SequenceVerdict::Oscillates { amplitude: hi - lo };
        }
    }
    SequenceVerdict::Inconclusive { reason: format!("partial values neither settle nor diverge (spread {spread:.3e})") }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_tail_is_accelerated() {
        let p: Vec<f64> = (0..12).map(|k| 1.0 - 0.8f64.powi(k)).collect();
        match sequence_verdict(&p, 1e-10) {
            SequenceVerdict::Converges { limit, accelerated, .. } => {
                assert!(accelerated);
                assert!((limit - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shapes() {
        let lin: Vec<f64> = (0..10).map(|k| 0.3 * k as f64).collect();
        assert_eq!(sequence_verdict(&lin, 1e-9), SequenceVerdict::Diverges { rate: DivergenceRate::Log });
        let neg: Vec<f64> = lin.iter().map(|v| -v).collect();
        assert!(sequence_verdict(&neg, 1e-9).to_minus_infinity());
        let exp: Vec<f64> = (0..10).map(|k| 10f64.powi(k)).collect();
        assert_eq!(sequence_verdict(&exp, 1e-9), SequenceVerdict::Diverges { rate: DivergenceRate::Power });
        let osc: Vec<f64> = (0..10).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(matches!(sequence_verdict(&osc, 1e-9), SequenceVerdict::Oscillates { .. }));
        assert!(sequence_verdict(&[0.0; 5], 1e-12).converges());
    }
}
