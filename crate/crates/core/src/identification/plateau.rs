use std::ops::Range;

use crate::error::{Error, Result};

/// A constant-level stretch of a staircase signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    /// Sample indices averaged over (settling transients trimmed off).
    pub samples: Range<usize>,
    pub mean: f64,
}

/// Finds the settled levels of a staircase signal sampled at `rate` Hz.
///
/// A sample is settled when the 21-sample moving average changes by less
/// than `tol` across ±10 samples. `tol` is widened to four standard
/// deviations of that change when the signal is noisier than it allows, with
/// the noise estimated from the median absolute first difference. Settled
/// runs whose means agree within the tolerance are joined. Runs lasting at
/// least `min_duration` become plateaus, with 50 ms trimmed from each end.
/// Levels must be strictly increasing.
pub fn detect_plateaus(signal: &[f64], rate: f64, tol: f64, min_duration: f64) -> Result<Vec<Plateau>> {
    const HALF: usize = 10;
    let n = signal.len();
    if n < 4 * HALF {
        return Err(Error::InsufficientExcitation("staircase signal is too short".into()));
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + signal[i];
    }
    let avg = |c: usize| {
        let a = c.saturating_sub(HALF);
        let b = (c + HALF + 1).min(n);
        (prefix[b] - prefix[a]) / (b - a) as f64
    };
    let mut diffs: Vec<f64> = signal.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let sigma = diffs[diffs.len() / 2] / (0.6745 * std::f64::consts::SQRT_2);
    let tol = tol.max(4.0 * sigma * (2.0 / (2 * HALF + 1) as f64).sqrt());
    let settled: Vec<bool> = (0..n)
        .map(|i| {
            i >= HALF && i + HALF < n && (avg(i + HALF) - avg(i - HALF)).abs() < tol
        })
        .collect();

    let mut runs: Vec<Range<usize>> = Vec::new();
    let mut i = 0;
    while i < n {
        if !settled[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && settled[i] {
            i += 1;
        }
        let run = start..i;
        match runs.last_mut() {
            Some(prev) if (mean_over(signal, prev) - mean_over(signal, &run)).abs() < tol => prev.end = run.end,
            _ => runs.push(run),
        }
    }

    let trim = (0.05 * rate).round() as usize;
    let min_len = (min_duration * rate).round() as usize;
    let mut out = Vec::new();
    for run in runs {
        if run.len() >= min_len.max(2 * trim + 1) {
            let r = (run.start + trim)..(run.end - trim);
            out.push(Plateau { mean: mean_over(signal, &r), samples: r });
        }
    }
    if out.len() < 2 {
        return Err(Error::InsufficientExcitation(format!(
            "found {} tension plateau(s); a staircase needs at least two",
            out.len()
        )));
    }
    if let Some(w) = out.windows(2).find(|w| w[1].mean <= w[0].mean) {
        return Err(Error::ProtocolViolation(format!(
            "tension levels must increase strictly ({:.3} N followed by {:.3} N)",
            w[0].mean, w[1].mean
        )));
    }
    Ok(out)
}

/// Mean of `x` over the sample range.
pub(crate) fn mean_over(x: &[f64], r: &Range<usize>) -> f64 {
    x[r.clone()].iter().sum::<f64>() / r.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn staircase(levels: &[f64], dwell: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut y = levels[0];
        for &l in levels {
            for _ in 0..dwell {
                y += (l - y) * 0.06;
                out.push(y);
            }
        }
        out
    }

    #[test]
    fn finds_every_level() {
        let levels = [4.0, 5.0, 6.0, 7.0];
        let p = detect_plateaus(&staircase(&levels, 500), 1000.0, 0.1, 0.2).unwrap();
        assert_eq!(p.len(), 4);
        for (pl, l) in p.iter().zip(levels) {
            assert!((pl.mean - l).abs() < 1e-3, "{} vs {l}", pl.mean);
        }
    }

    #[test]
    fn noisy_levels_are_not_split() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let levels: Vec<f64> = (0..10).map(|k| 4.0 + k as f64).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.16).unwrap();
        let signal: Vec<f64> = staircase(&levels, 1000).into_iter().map(|y| y + noise.sample(&mut rng)).collect();
        let p = detect_plateaus(&signal, 1000.0, 0.05, 0.2).unwrap();
        assert_eq!(p.len(), levels.len());
        for (pl, l) in p.iter().zip(&levels) {
            assert!((pl.mean - l).abs() < 0.03, "{} vs {l}", pl.mean);
        }
    }

    #[test]
    fn decreasing_levels_are_a_protocol_violation() {
        let err = detect_plateaus(&staircase(&[6.0, 5.0, 4.0], 500), 1000.0, 0.1, 0.2).unwrap_err();
        assert!(matches!(err, Error::ProtocolViolation(_)));
    }

    #[test]
    fn flat_signal_is_insufficient() {
        let err = detect_plateaus(&[1.0; 2000], 1000.0, 0.1, 0.2).unwrap_err();
        assert!(matches!(err, Error::InsufficientExcitation(_)));
    }
}
