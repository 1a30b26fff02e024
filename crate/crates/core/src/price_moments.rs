//! Price statistics of a window.
//!
//! Two estimators are provided. The moment-based one divides trade-value by
//! trade-volume power means, `p(n) = C_m(n) / U_m(n)`; for `n = 1` this is the
//! VWAP. The frequency-based one counts trades per price level,
//! `f(p_k) = m(p_k) / N`, and its mean is the plain average of trade prices.
//! They disagree whenever volume is related to price.

use num_rational::Ratio;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::power_sums::{accumulate, to_moments, CompensatedSum, TradeMoments};
use crate::scalar::Scalar;
use crate::trade::{TradeTick, WindowedTrades};

/// Rounding slack for `p(2) - p(1)^2`, relative to `p(2)`.
pub const VARIANCE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceStatus {
    Positive,
    /// `|p(2) - p(1)^2|` within rounding of zero; reported as exactly zero.
    Clamped,
    /// `p(2) - p(1)^2` is negative beyond rounding. Possible because the
    /// moment-based estimator is a ratio of means, not an expectation under a
    /// single measure, once prices and volumes correlate inside the window.
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceMoments<T> {
    /// `p(1..=n_max)`.
    pub p: Vec<T>,
    pub mean: T,
    /// `p(2) - p(1)^2` before clamping.
    pub raw_variance: Option<T>,
    /// Variance after clamping rounding noise to zero.
    pub variance: Option<T>,
    pub variance_status: Option<VarianceStatus>,
    /// `p(3) - 3 p(2) p(1) + 2 p(1)^3`, i.e. `Sk * sigma^3`.
    pub third_central: Option<T>,
    pub skewness: Option<T>,
    /// Excess kurtosis; absent below order 4 and for a point mass.
    pub excess_kurtosis: Option<T>,
}

impl<T: Scalar> PriceMoments<T> {
    pub fn n_max(&self) -> usize {
        self.p.len()
    }

    /// `p(n)` for `1 <= n <= n_max`.
    pub fn moment(&self, n: usize) -> T {
        self.p[n - 1]
    }

    pub fn std_dev(&self) -> Option<T> {
        self.variance.filter(|v| *v >= T::zero()).map(Float::sqrt)
    }

    /// Builds the derived statistics from raw price moments `p(1..)`.
    pub fn from_raw(p: Vec<T>) -> Self {
        Self::from_words(p.into_iter().map(Dd::from).collect())
    }

    /// Central combinations are formed in double words and rounded once.
    fn from_words(words: Vec<Dd<T>>) -> Self {
        let p: Vec<T> = words.iter().map(|d| d.value()).collect();
        let m1 = p[0];
        let mut out = PriceMoments {
            mean: m1,
            raw_variance: None,
            variance: None,
            variance_status: None,
            third_central: None,
            skewness: None,
            excess_kurtosis: None,
            p,
        };
        if words.len() < 2 {
            return out;
        }
        let (w1, w2) = (words[0], words[1]);
        let w1sq = w1 * w1;
        let raw = (w2 - w1sq).value();
        let eps = T::lit(VARIANCE_EPSILON) * out.p[1].abs();
        let (status, variance) = if raw.abs() <= eps {
            (VarianceStatus::Clamped, T::zero())
        } else if raw < T::zero() {
            (VarianceStatus::Negative, raw)
        } else {
            (VarianceStatus::Positive, raw)
        };
        out.raw_variance = Some(raw);
        out.variance = Some(variance);
        out.variance_status = Some(status);
        if words.len() < 3 {
            return out;
        }
        let w3 = words[2];
        let w1cube = w1sq * w1;
        let third = (w3 - (w2 * w1).scale(T::lit(3.0)) + w1cube.scale(T::lit(2.0))).value();
        match status {
            VarianceStatus::Clamped => {
                out.third_central = Some(T::zero());
                out.skewness = Some(T::zero());
            }
            VarianceStatus::Negative => out.third_central = Some(third),
            VarianceStatus::Positive => {
                out.third_central = Some(third);
                out.skewness = Some(third / (variance * variance.sqrt()));
                if words.len() >= 4 {
                    let w4 = words[3];
                    let fourth = (w4 - (w3 * w1).scale(T::lit(4.0)) + (w2 * w1sq).scale(T::lit(6.0))
                        - (w1cube * w1).scale(T::lit(3.0)))
                    .value();
                    out.excess_kurtosis = Some(fourth / (variance * variance) - T::lit(3.0));
                }
            }
        }
        out
    }
}

/// `p(n) = C_m(n) / U_m(n)` for every available order.
pub fn price_moments_from_trades<T: Scalar>(moments: &TradeMoments<T>) -> Result<PriceMoments<T>> {
    let words = (1..=moments.n_max())
        .map(|n| {
            let u = moments.volume_dd(n);
            if u.value() == T::zero() {
                Err(Error::DegenerateVolume { order: n })
            } else {
                Ok(moments.value_dd(n) / u)
            }
        })
        .collect::<Result<Vec<Dd<T>>>>()?;
    Ok(PriceMoments::from_words(words))
}

/// Moment-based price statistics of a nonempty window.
pub fn window_price_moments<T: Scalar>(window: &WindowedTrades<T>, n_max: usize) -> Result<PriceMoments<T>> {
    let sums = accumulate(window, n_max)?;
    price_moments_from_trades(&to_moments(&sums)?)
}

/// Volume weighted average price, `sum C_i / sum U_i`.
pub fn vwap<T: Scalar>(window: &WindowedTrades<T>) -> Result<T> {
    vwap_ticks(window.ticks())
}

pub fn vwap_ticks<T: Scalar>(ticks: &[TradeTick<T>]) -> Result<T> {
    if ticks.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let value: CompensatedSum<T> = ticks.iter().map(|t| t.value).collect();
    let volume: CompensatedSum<T> = ticks.iter().map(|t| t.volume).collect();
    Ok(value.value() / volume.value())
}

/// Plain average of trade prices, `(1/N) sum p(t_i)`.
pub fn frequency_mean<T: Scalar>(ticks: &[TradeTick<T>]) -> Result<T> {
    frequency_raw_moment(ticks, 1)
}

/// `(1/N) sum p(t_i)^n`.
pub fn frequency_raw_moment<T: Scalar>(ticks: &[TradeTick<T>], n: usize) -> Result<T> {
    if ticks.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let sum: CompensatedSum<T> = ticks.iter().map(|t| t.price.powi(n as i32)).collect();
    Ok(sum.value() / T::from_count(ticks.len()))
}

/// Pearson correlation of price and volume across the ticks; `None` when
/// either series is constant or fewer than two ticks are given.
pub fn price_volume_correlation<T: Scalar>(ticks: &[TradeTick<T>]) -> Option<T> {
    if ticks.len() < 2 {
        return None;
    }
    let n = T::from_count(ticks.len());
    let mp = ticks.iter().map(|t| t.price).collect::<CompensatedSum<T>>().value() / n;
    let mu = ticks.iter().map(|t| t.volume).collect::<CompensatedSum<T>>().value() / n;
    let mut spp = CompensatedSum::new();
    let mut suu = CompensatedSum::new();
    let mut spu = CompensatedSum::new();
    for t in ticks {
        let dp = t.price - mp;
        let du = t.volume - mu;
        spp += dp * dp;
        suu += du * du;
        spu += dp * du;
    }
    let denom = (spp.value() * suu.value()).sqrt();
    if denom > T::zero() {
        Some(spu.value() / denom)
    } else {
        None
    }
}

/// How observations are grouped into frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub enum Bins<T> {
    /// One bin per distinct observed value.
    Exact,
    /// Half-open bins `[origin + k w, origin + (k+1) w)` with
    /// `origin = floor(min / w) * w`.
    FixedWidth(T),
    /// Explicit strictly increasing edges; the last bin is closed on the right.
    Edges(Vec<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinKind {
    /// `bin_edges` holds the distinct levels themselves.
    Levels,
    /// `bin_edges` holds `K + 1` interval edges.
    Intervals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDistribution<T> {
    pub kind: BinKind,
    pub bin_edges: Vec<T>,
    pub counts: Vec<usize>,
    pub probabilities: Vec<T>,
    pub total: usize,
}

impl<T: Scalar> FrequencyDistribution<T> {
    /// `m(p_k) / N` in exact rational arithmetic.
    pub fn exact_probabilities(&self) -> Vec<Ratio<u64>> {
        self.counts
            .iter()
            .map(|&m| Ratio::new(m as u64, self.total as u64))
            .collect()
    }

    fn from_counts(kind: BinKind, bin_edges: Vec<T>, counts: Vec<usize>) -> Self {
        let total: usize = counts.iter().sum();
        let n = T::from_count(total);
        let probabilities = counts.iter().map(|&m| T::from_count(m) / n).collect();
        FrequencyDistribution {
            kind,
            bin_edges,
            counts,
            probabilities,
            total,
        }
    }

    /// Probability of the bin holding `x`, zero when no bin does.
    pub fn probability_of(&self, x: T) -> T {
        let idx = match self.kind {
            BinKind::Levels => self.bin_edges.iter().position(|&l| l == x),
            BinKind::Intervals => interval_index(&self.bin_edges, x),
        };
        idx.map_or(T::zero(), |i| self.probabilities[i])
    }
}

fn interval_index<T: Scalar>(edges: &[T], x: T) -> Option<usize> {
    let last = *edges.last()?;
    if x < edges[0] || x > last {
        return None;
    }
    if x == last {
        return Some(edges.len() - 2);
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// Frequency distribution of an arbitrary series under `bins`.
pub fn frequency_distribution<T: Scalar>(values: &[T], bins: &Bins<T>) -> Result<FrequencyDistribution<T>> {
    if values.is_empty() {
        return Err(Error::EmptyWindow);
    }
    match bins {
        Bins::Exact => {
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite tick fields"));
            let mut levels: Vec<T> = Vec::new();
            let mut counts: Vec<usize> = Vec::new();
            for x in sorted {
                if levels.last() == Some(&x) {
                    *counts.last_mut().unwrap() += 1;
                } else {
                    levels.push(x);
                    counts.push(1);
                }
            }
            Ok(FrequencyDistribution::from_counts(BinKind::Levels, levels, counts))
        }
        Bins::FixedWidth(width) => {
            let w = *width;
            if !(w.is_finite() && w > T::zero()) {
                return Err(Error::BadBins(format!("bin width must be positive, got {w}")));
            }
            let min = values.iter().copied().fold(T::infinity(), T::min);
            let max = values.iter().copied().fold(T::neg_infinity(), T::max);
            let origin = (min / w).floor() * w;
            let bins = ((max - origin) / w).floor().to_usize().unwrap_or(0) + 1;
            let edges: Vec<T> = (0..=bins).map(|k| origin + T::from_count(k) * w).collect();
            let mut counts = vec![0usize; bins];
            for &x in values {
                let guess = ((x - origin) / w).floor().to_usize().unwrap_or(0).min(bins - 1);
                // floor((x - origin) / w) can land one bin off at an edge
                let idx = if x < edges[guess] {
                    guess.saturating_sub(1)
                } else if x >= edges[guess + 1] && guess + 1 < bins {
                    guess + 1
                } else {
                    guess
                };
                counts[idx] += 1;
            }
            Ok(FrequencyDistribution::from_counts(BinKind::Intervals, edges, counts))
        }
        Bins::Edges(edges) => {
            if edges.len() < 2 {
                return Err(Error::BadBins("need at least two edges".into()));
            }
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::BadBins("edges must be finite and strictly increasing".into()));
            }
            let mut counts = vec![0usize; edges.len() - 1];
            for &x in values {
                let idx = interval_index(edges, x)
                    .ok_or_else(|| Error::BadBins(format!("{x} lies outside the bin edges")))?;
                counts[idx] += 1;
            }
            Ok(FrequencyDistribution::from_counts(
                BinKind::Intervals,
                edges.clone(),
                counts,
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPriceStats<T> {
    pub distribution: FrequencyDistribution<T>,
    /// `E[p] = (1/N) sum p(t_i)`, from the raw ticks regardless of binning.
    pub mean: T,
}

pub fn frequency_price_stats<T: Scalar>(window: &WindowedTrades<T>, bins: &Bins<T>) -> Result<FrequencyPriceStats<T>> {
    let prices: Vec<T> = window.ticks().iter().map(|t| t.price).collect();
    let distribution = frequency_distribution(&prices, bins)?;
    Ok(FrequencyPriceStats {
        distribution,
        mean: frequency_mean(window.ticks())?,
    })
}

/// Frequency distributions of trade value and trade volume.
pub fn frequency_value_volume_stats<T: Scalar>(
    window: &WindowedTrades<T>,
    bins: &Bins<T>,
) -> Result<(FrequencyDistribution<T>, FrequencyDistribution<T>)> {
    let values: Vec<T> = window.ticks().iter().map(|t| t.value).collect();
    let volumes: Vec<T> = window.ticks().iter().map(|t| t.volume).collect();
    Ok((
        frequency_distribution(&values, bins)?,
        frequency_distribution(&volumes, bins)?,
    ))
}
