use crate::error::{Error, Result};

/// Band half-width, in population standard deviations.
pub const BAND_STD_FRACTION: f64 = 0.3;

/// 1-based index of the first episode with positive reward, looking at no
/// more than `cap` episodes. `None` means unsolved.
pub fn episodes_to_solve(rewards: &[f64], cap: usize) -> Option<usize> {
    rewards
        .iter()
        .take(cap)
        .position(|&r| r > 0.0)
        .map(|i| i + 1)
}

/// Fraction of exploratory actions in one episode.
pub fn exploration_rate(flags: &[bool]) -> Result<f64> {
    if flags.is_empty() {
        return Err(Error::UndefinedMetric(
            "exploration rate of an empty episode".into(),
        ));
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

/// Trailing moving average; the first `window - 1` entries average over the
/// shorter available prefix, so the output has the input's length.
pub fn moving_average(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Config(
            "moving-average window must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(x.len());
    let mut sum = 0.0;
    for i in 0..x.len() {
        sum += x[i];
        if i >= window {
            sum -= x[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Per-episode mean across runs with a `mean ± 0.3 std` band.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AggregateCurve {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Aggregates equal-length curves. The standard deviation is the
/// population one (divide by the number of runs).
pub fn aggregate_curves<C: AsRef<[f64]>>(curves: &[C]) -> Result<AggregateCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::UndefinedMetric("aggregate of zero runs".into()))?
        .as_ref();
    let len = first.len();
    for c in curves {
        if c.as_ref().len() != len {
            return Err(Error::Shape {
                context: "aggregated curve length",
                expected: len,
                got: c.as_ref().len(),
            });
        }
    }
    let n = curves.len() as f64;
    let mut out = AggregateCurve {
        mean: Vec::with_capacity(len),
        lower: Vec::with_capacity(len),
        upper: Vec::with_capacity(len),
    };
    for i in 0..len {
        let mean = curves.iter().map(|c| c.as_ref()[i]).sum::<f64>() / n;
        let var = curves
            .iter()
            .map(|c| (c.as_ref()[i] - mean).powi(2))
            .sum::<f64>()
            / n;
        let half = BAND_STD_FRACTION * var.sqrt();
        out.mean.push(mean);
        out.lower.push(mean - half);
        out.upper.push(mean + half);
    }
    Ok(out)
}

/// Median of a non-empty slice; even lengths average the middle pair.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("median of an empty sequence".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
