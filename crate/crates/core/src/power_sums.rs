//! Window sums of n-th powers of trade values and volumes,
//! `C(n) = sum_i C(t_i)^n` and `U(n) = sum_i U(t_i)^n`, and their means
//! `C_m(n) = C(n) / N`, `U_m(n) = U(n) / N`.

use std::ops::AddAssign;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trade::{TradeTick, WindowedTrades};

pub const DEFAULT_ORDER: usize = 4;
/// Raw power sums beyond this order overflow `f64` for ordinary price ranges.
pub const MAX_ORDER: usize = 16;

/// Neumaier compensated sum: a running total plus the accumulated low-order
/// error of every addition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        CompensatedSum {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation = self.compensation + ((self.sum - t) + x);
        } else {
            self.compensation = self.compensation + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.compensation = self.compensation + other.compensation;
    }

    pub fn value(&self) -> T {
        self.sum + self.compensation
    }

    pub fn is_finite(&self) -> bool {
        self.sum.is_finite() && self.compensation.is_finite()
    }

    pub(crate) fn dd(&self) -> Dd<T> {
        Dd::from_sum(self.sum, self.compensation)
    }
}

impl<T: Scalar> AddAssign<T> for CompensatedSum<T> {
    fn add_assign(&mut self, x: T) {
        self.add(x);
    }
}

impl<T: Scalar> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `C(1..=n_max)` and `U(1..=n_max)` over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums<T> {
    count: usize,
    value: Vec<CompensatedSum<T>>,
    volume: Vec<CompensatedSum<T>>,
}

pub fn check_order(n_max: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&n_max) {
        Ok(())
    } else {
        Err(Error::InvalidOrder { n_max, cap: MAX_ORDER })
    }
}

impl<T: Scalar> PowerSums<T> {
    /// Empty accumulator (`N = 0`).
    pub fn empty(n_max: usize) -> Result<Self> {
        check_order(n_max)?;
        Ok(PowerSums {
            count: 0,
            value: vec![CompensatedSum::new(); n_max],
            volume: vec![CompensatedSum::new(); n_max],
        })
    }

    pub fn push(&mut self, tick: &TradeTick<T>) {
        add_powers(&mut self.value, tick.value);
        add_powers(&mut self.volume, tick.volume);
        self.count += 1;
    }

    pub fn extend<'a, I>(&mut self, ticks: I)
    where
        I: IntoIterator<Item = &'a TradeTick<T>>,
    {
        for tick in ticks {
            self.push(tick);
        }
    }

    /// Componentwise sum; the result covers the union of both tick sets.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.n_max() != other.n_max() {
            return Err(Error::OrderMismatch {
                left: self.n_max(),
                right: other.n_max(),
            });
        }
        for (a, b) in self.value.iter_mut().zip(&other.value) {
            a.merge(b);
        }
        for (a, b) in self.volume.iter_mut().zip(&other.volume) {
            a.merge(b);
        }
        self.count += other.count;
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.value.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `C(n)` for `1 <= n <= n_max`.
    pub fn value_sum(&self, n: usize) -> T {
        self.value[n - 1].value()
    }

    /// `U(n)` for `1 <= n <= n_max`.
    pub fn volume_sum(&self, n: usize) -> T {
        self.volume[n - 1].value()
    }

    pub fn value_sums(&self) -> Vec<T> {
        self.value.iter().map(CompensatedSum::value).collect()
    }

    pub fn volume_sums(&self) -> Vec<T> {
        self.volume.iter().map(CompensatedSum::value).collect()
    }

    /// Fails with `Overflow` naming the lowest order whose sum is not finite.
    pub fn check_finite(&self) -> Result<()> {
        let bad = |sums: &[CompensatedSum<T>]| sums.iter().position(|s| !s.is_finite() || !s.value().is_finite());
        match (bad(&self.value), bad(&self.volume)) {
            (None, None) => Ok(()),
            (a, b) => Err(Error::Overflow {
                order: a.unwrap_or(usize::MAX).min(b.unwrap_or(usize::MAX)) + 1,
            }),
        }
    }
}

// Powers by repeated multiplication: x, x*x, (x*x)*x, ...
/// Powers are formed exactly as double words; both words enter the sum.
fn add_powers<T: Scalar>(sums: &mut [CompensatedSum<T>], x: T) {
    let mut power = Dd::from(x);
    for (i, s) in sums.iter_mut().enumerate() {
        if i > 0 {
            power = power.scale(x);
        }
        s.add(power.hi);
        if power.lo != T::zero() {
            s.add(power.lo);
        }
    }
}

/// Power sums of a nonempty window.
pub fn accumulate<T: Scalar>(window: &WindowedTrades<T>, n_max: usize) -> Result<PowerSums<T>> {
    accumulate_ticks(window.ticks(), n_max)
}

pub fn accumulate_ticks<T: Scalar>(ticks: &[TradeTick<T>], n_max: usize) -> Result<PowerSums<T>> {
    check_order(n_max)?;
    if ticks.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut sums = PowerSums::empty(n_max)?;
    sums.extend(ticks);
    sums.check_finite()?;
    Ok(sums)
}

/// Power sums of a window delivered as consecutive fragments. Each fragment
/// is reduced on its own and the partial sums merged in order, so a fixed
/// chunking always reproduces the same bits.
pub fn accumulate_streaming<'a, T, I>(chunks: I, n_max: usize) -> Result<PowerSums<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a [TradeTick<T>]>,
{
    let mut total = PowerSums::empty(n_max)?;
    for chunk in chunks {
        let mut part = PowerSums::empty(n_max)?;
        part.extend(chunk);
        total.merge(&part)?;
    }
    if total.count() == 0 {
        return Err(Error::EmptyWindow);
    }
    total.check_finite()?;
    Ok(total)
}

/// `C_m(1..=n_max)` and `U_m(1..=n_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeMoments<T> {
    pub count: usize,
    pub value_moments: Vec<T>,
    pub volume_moments: Vec<T>,
    /// Rounding residuals of the means above.
    value_residuals: Vec<T>,
    volume_residuals: Vec<T>,
}

impl<T: Scalar> TradeMoments<T> {
    pub fn new(count: usize, value_moments: Vec<T>, volume_moments: Vec<T>) -> Self {
        let value_residuals = vec![T::zero(); value_moments.len()];
        let volume_residuals = vec![T::zero(); volume_moments.len()];
        TradeMoments {
            count,
            value_moments,
            volume_moments,
            value_residuals,
            volume_residuals,
        }
    }

    pub(crate) fn value_dd(&self, n: usize) -> Dd<T> {
        Dd::new(
            self.value_moments[n - 1],
            self.value_residuals.get(n - 1).copied().unwrap_or_else(T::zero),
        )
    }

    pub(crate) fn volume_dd(&self, n: usize) -> Dd<T> {
        Dd::new(
            self.volume_moments[n - 1],
            self.volume_residuals.get(n - 1).copied().unwrap_or_else(T::zero),
        )
    }

    pub fn n_max(&self) -> usize {
        self.value_moments.len()
    }

    pub fn value_moment(&self, n: usize) -> T {
        self.value_moments[n - 1]
    }

    pub fn volume_moment(&self, n: usize) -> T {
        self.volume_moments[n - 1]
    }
}

pub fn to_moments<T: Scalar>(sums: &PowerSums<T>) -> Result<TradeMoments<T>> {
    if sums.count() == 0 {
        return Err(Error::EmptyWindow);
    }
    let n = Dd::from(T::from_count(sums.count()));
    let value: Vec<Dd<T>> = sums.value.iter().map(|c| c.dd() / n).collect();
    let volume: Vec<Dd<T>> = sums.volume.iter().map(|u| u.dd() / n).collect();
    Ok(TradeMoments {
        count: sums.count(),
        value_moments: value.iter().map(|d| d.hi).collect(),
        volume_moments: volume.iter().map(|d| d.hi).collect(),
        value_residuals: value.iter().map(|d| d.lo).collect(),
        volume_residuals: volume.iter().map(|d| d.lo).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trade::{make_tick, Timestamp};
    use proptest::prelude::*;

    fn tick(p: f64, u: f64) -> TradeTick<f64> {
        make_tick(Timestamp(0), p, u, None).unwrap()
    }

    #[test]
    fn single_tick_sums() {
        let s = accumulate_ticks(&[tick(2.0, 3.0)], 2).unwrap();
        assert_eq!(s.value_sums(), vec![6.0, 36.0]);
        assert_eq!(s.volume_sums(), vec![3.0, 9.0]);
    }

    #[test]
    fn identical_ticks_double() {
        let one = accumulate_ticks(&[tick(2.0, 3.0)], 4).unwrap();
        let two = accumulate_ticks(&[tick(2.0, 3.0), tick(2.0, 3.0)], 4).unwrap();
        for n in 1..=4 {
            assert_eq!(two.value_sum(n), 2.0 * one.value_sum(n));
            assert_eq!(two.volume_sum(n), 2.0 * one.volume_sum(n));
        }
    }

    #[test]
    fn first_order_hand_sum() {
        let s = accumulate_ticks(&[tick(1.0, 1.0), tick(3.0, 3.0)], 1).unwrap();
        assert_eq!((s.value_sum(1), s.volume_sum(1)), (10.0, 4.0));
    }

    #[test]
    fn order_and_emptiness_errors() {
        assert!(matches!(
            accumulate_ticks(&[tick(1.0, 1.0)], 0),
            Err(Error::InvalidOrder { .. })
        ));
        assert!(matches!(
            accumulate_ticks(&[tick(1.0, 1.0)], 17),
            Err(Error::InvalidOrder { .. })
        ));
        assert_eq!(accumulate_ticks::<f64>(&[], 2).unwrap_err(), Error::EmptyWindow);
        let empty: [&[TradeTick<f64>]; 2] = [&[], &[]];
        assert_eq!(accumulate_streaming(empty, 2).unwrap_err(), Error::EmptyWindow);
    }

    #[test]
    fn overflow_is_an_error() {
        let err = accumulate_ticks(&[tick(1e30, 1e10)], 16).unwrap_err();
        assert_eq!(err, Error::Overflow { order: 8 });
        let t = make_tick(Timestamp(0), 1e20f32, 1e10f32, None).unwrap();
        assert_eq!(accumulate_ticks(&[t], 2).unwrap_err(), Error::Overflow { order: 2 });
    }

    #[test]
    fn empty_chunks_change_nothing() {
        let ticks = [tick(1.5, 2.0), tick(0.7, 11.0), tick(9.0, 0.25)];
        let plain = accumulate_streaming([&ticks[..1], &ticks[1..]], 4).unwrap();
        let padded = accumulate_streaming([&[][..], &ticks[..1], &[], &ticks[1..], &[]], 4).unwrap();
        assert_eq!(plain, padded);
    }

    #[test]
    fn merge_rejects_mismatched_orders() {
        let mut a = PowerSums::<f64>::empty(2).unwrap();
        let b = PowerSums::<f64>::empty(3).unwrap();
        assert_eq!(a.merge(&b).unwrap_err(), Error::OrderMismatch { left: 2, right: 3 });
    }

    #[test]
    fn compensation_recovers_cancelled_terms() {
        let mut acc = CompensatedSum::new();
        for x in [1e16, 1.0, -1e16, 1.0] {
            acc += x;
        }
        assert_eq!(acc.value(), 2.0);
        assert_eq!([1e16, 1.0, -1e16, 1.0].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn moments_divide_by_count() {
        let s = accumulate_ticks(&[tick(1.0, 1.0), tick(3.0, 3.0)], 1).unwrap();
        assert_eq!(to_moments(&s).unwrap().value_moment(1), 5.0);
        let single = accumulate_ticks(&[tick(2.0, 3.0)], 3).unwrap();
        let m = to_moments(&single).unwrap();
        assert_eq!(m.value_moments, single.value_sums());
        assert_eq!(m.volume_moments, single.volume_sums());
        assert_eq!(
            to_moments(&PowerSums::<f64>::empty(2).unwrap()).unwrap_err(),
            Error::EmptyWindow
        );
    }

    #[test]
    fn constant_values_have_power_moments() {
        let ticks: Vec<_> = (0..7).map(|_| tick(2.0, 1.5)).collect();
        let m = to_moments(&accumulate_ticks(&ticks, 4).unwrap()).unwrap();
        for n in 1..=4 {
            assert_eq!(m.value_moment(n), 3.0f64.powi(n as i32));
        }
    }

    fn tape() -> impl Strategy<Value = Vec<TradeTick<f64>>> {
        prop::collection::vec((0.01f64..1e3, 0.01f64..1e3), 1..60)
            .prop_map(|v| v.into_iter().map(|(p, u)| tick(p, u)).collect())
    }

    proptest! {
        #[test]
        fn additive_over_disjoint_parts(ticks in tape(), cut in 0usize..60) {
            let cut = cut.min(ticks.len());
            let whole = accumulate_ticks(&ticks, 4).unwrap();
            let mut left = PowerSums::empty(4).unwrap();
            left.extend(&ticks[..cut]);
            let mut right = PowerSums::empty(4).unwrap();
            right.extend(&ticks[cut..]);
            left.merge(&right).unwrap();
            prop_assert_eq!(left.count(), whole.count());
            for n in 1..=4 {
                prop_assert!(crate::rel_diff(left.value_sum(n), whole.value_sum(n)) <= 1e-12);
                prop_assert!(crate::rel_diff(left.volume_sum(n), whole.volume_sum(n)) <= 1e-12);
            }
        }

        #[test]
        fn permutation_invariant(mut ticks in tape(), seed in any::<u64>()) {
            let before = accumulate_ticks(&ticks, 4).unwrap();
            let len = ticks.len();
            for i in (1..len).rev() {
                let j = (seed.wrapping_mul(i as u64 + 7) >> 3) as usize % (i + 1);
                ticks.swap(i, j);
            }
            let after = accumulate_ticks(&ticks, 4).unwrap();
            for n in 1..=4 {
                prop_assert!(crate::rel_diff(before.value_sum(n), after.value_sum(n)) <= 1e-12);
            }
        }

        #[test]
        fn jensen_consistency(ticks in tape()) {
            let m = to_moments(&accumulate_ticks(&ticks, 8).unwrap()).unwrap();
            for n in 1..=4 {
                let tol = 1.0 + 1e-12;
                prop_assert!(m.value_moment(2 * n) * tol >= m.value_moment(n).powi(2));
                prop_assert!(m.volume_moment(2 * n) * tol >= m.volume_moment(n).powi(2));
            }
        }

        #[test]
        fn volume_scaling_law(ticks in tape(), lambda in 0.1f64..10.0) {
            let base = accumulate_ticks(&ticks, 4).unwrap();
            let scaled: Vec<_> = ticks.iter().map(|t| t.scaled(1.0, lambda).unwrap()).collect();
            let s = accumulate_ticks(&scaled, 4).unwrap();
            for n in 1..=4 {
                let f = lambda.powi(n as i32);
                prop_assert!(crate::rel_diff(s.volume_sum(n), f * base.volume_sum(n)) <= 1e-12);
                prop_assert!(crate::rel_diff(s.value_sum(n), f * base.value_sum(n)) <= 1e-12);
            }
        }

        #[test]
        fn sums_grow_with_ticks(ticks in tape()) {
            let mut acc = PowerSums::empty(3).unwrap();
            let mut prev = acc.value_sums();
            for t in &ticks {
                acc.push(t);
                let now = acc.value_sums();
                prop_assert!(now.iter().zip(&prev).all(|(a, b)| a >= b && *a > 0.0));
                prev = now;
            }
        }
    }
}
