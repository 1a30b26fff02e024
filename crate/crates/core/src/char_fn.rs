//! Moment-matched approximations of the price characteristic function,
//!
//! ```text
//! F_k(x) = exp( sum_{m=1..k} i^m / m! * a_m * x^m )
//! ```
//!
//! whose first `k` derivatives at zero reproduce `i^n p(n)`. The coefficients
//! are the first cumulants: `a_1 = p(1)`, `a_2 = sigma^2`, `a_3 = Sk sigma^3`.
//!
//! Densities use the transform pair
//! `eta(p) = 1/(2 pi) * integral F(x) exp(-i p x) dx`. For `k = 2` this is the
//! Gaussian in closed form. For `k = 3` the integral is evaluated numerically;
//! `F_3` is not a true characteristic function once `a_3 != 0`, so its inverse
//! has small negative lobes which are clipped and reported.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::price_moments::{PriceMoments, VarianceStatus};
use crate::scalar::Scalar;

/// Characteristic-function integration runs over `|x| <= CUTOFF_SIGMAS / sigma`,
/// where `|F_k| = exp(-72)`.
pub const CUTOFF_SIGMAS: f64 = 12.0;
/// Trapezoid intervals on `[0, X]`; the mirrored half is folded in through
/// Hermitian symmetry.
pub const INVERSION_NODES: usize = 4096;
/// Largest accepted inversion error estimate, relative to the peak density.
pub const QUADRATURE_LIMIT: f64 = 1e-5;
/// Grid half-width, in standard deviations, required by the closed form.
pub const MIN_GRID_SIGMAS: f64 = 6.0;

const ANCHOR_EVERY: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct CharFnApprox<T> {
    order: usize,
    coefficients: Vec<T>,
}

impl<T: Scalar> CharFnApprox<T> {
    /// Builds an approximation from cumulant coefficients `a_1..a_k`.
    pub fn from_coefficients(coefficients: Vec<T>) -> Result<Self> {
        let order = coefficients.len();
        if !(1..=3).contains(&order) {
            return Err(Error::UnsupportedOrder { k: order });
        }
        if order >= 2 && coefficients[1] < T::zero() {
            return Err(Error::NegativeVariance {
                variance: coefficients[1].as_f64(),
            });
        }
        Ok(CharFnApprox { order, coefficients })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// `a_m` for `1 <= m <= k`, zero above the order.
    pub fn coefficient(&self, m: usize) -> T {
        self.coefficients.get(m - 1).copied().unwrap_or_else(T::zero)
    }

    pub fn mean(&self) -> T {
        self.coefficients[0]
    }

    pub fn variance(&self) -> T {
        self.coefficient(2)
    }

    pub fn sigma(&self) -> T {
        self.variance().sqrt()
    }

    /// Same approximation with the location moved by `delta`.
    pub fn shifted(&self, delta: T) -> Self {
        let mut coefficients = self.coefficients.clone();
        coefficients[0] = coefficients[0] + delta;
        CharFnApprox {
            order: self.order,
            coefficients,
        }
    }

    /// Raw moments `p(1..=k)` implied by the coefficients.
    pub fn raw_moments(&self) -> Vec<T> {
        let a1 = self.mean();
        let a2 = self.variance();
        let a3 = self.coefficient(3);
        let three = T::lit(3.0);
        let all = [a1, a2 + a1 * a1, a3 + three * a1 * a2 + a1 * a1 * a1];
        all[..self.order].to_vec()
    }
}

/// Fits `F_k` to the price moments by matching the first `k` cumulants.
pub fn fit_charfn<T: Scalar>(moments: &PriceMoments<T>, k: usize) -> Result<CharFnApprox<T>> {
    if !(1..=3).contains(&k) {
        return Err(Error::UnsupportedOrder { k });
    }
    if moments.n_max() < k {
        return Err(Error::InsufficientMoments {
            k,
            available: moments.n_max(),
        });
    }
    let mut coefficients = vec![moments.mean];
    if k >= 2 {
        if moments.variance_status == Some(VarianceStatus::Negative) {
            let variance = moments.raw_variance.map_or(f64::NAN, Scalar::as_f64);
            return Err(Error::NegativeVariance { variance });
        }
        coefficients.push(moments.variance.expect("order >= 2 has a variance"));
    }
    if k >= 3 {
        coefficients.push(moments.third_central.expect("order >= 3 has a third cumulant"));
    }
    Ok(CharFnApprox { order: k, coefficients })
}

/// `F_k(x)`.
pub fn eval_charfn<T: Scalar>(approx: &CharFnApprox<T>, x: T) -> Complex<T> {
    let x2 = x * x;
    let re = -approx.variance() * x2 / T::lit(2.0);
    let im = approx.mean() * x - approx.coefficient(3) * x2 * x / T::lit(6.0);
    Complex::new(re, im).exp()
}

/// `eta_2(p)`, the Gaussian density with mean `a_1` and variance `a_2`.
pub fn gaussian_pdf<T: Scalar>(approx: &CharFnApprox<T>, p: T) -> Result<T> {
    if approx.order() != 2 {
        return Err(Error::UnsupportedOrder { k: approx.order() });
    }
    if approx.variance() <= T::zero() {
        return Err(Error::ZeroVariance {
            mean: approx.mean().as_f64(),
        });
    }
    let sigma = approx.sigma();
    let z = (p - approx.mean()) / sigma;
    Ok((-z * z / T::lit(2.0)).exp() / (sigma * T::TAU().sqrt()))
}

/// Uniform grid of `points` prices over `center +- sigmas * sigma`.
pub fn price_grid<T: Scalar>(center: T, sigma: T, sigmas: T, points: usize) -> Result<Vec<T>> {
    if points < 2 {
        return Err(Error::BadGrid("need at least two grid points".into()));
    }
    if !(sigma.is_finite() && sigma > T::zero() && sigmas.is_finite() && sigmas > T::zero()) {
        return Err(Error::BadGrid("grid half-width must be positive".into()));
    }
    let lo = center - sigmas * sigma;
    let step = (sigmas * sigma + sigmas * sigma) / T::from_count(points - 1);
    Ok((0..points).map(|i| lo + T::from_count(i) * step).collect())
}

fn check_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::BadGrid("need at least two grid points".into()));
    }
    if grid.iter().any(|p| !p.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadGrid("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Trapezoid weights of a sorted grid.
pub fn trapezoid_weights<T: Scalar>(grid: &[T]) -> Vec<T> {
    let half = T::lit(0.5);
    (0..grid.len())
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { T::zero() };
            let right = if i + 1 < grid.len() {
                grid[i + 1] - grid[i]
            } else {
                T::zero()
            };
            half * (left + right)
        })
        .collect()
}

/// Density samples on a price grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityApprox<T> {
    pub order: usize,
    pub grid: Vec<T>,
    /// Nonnegative density; for `k = 3` renormalized after clipping.
    pub density: Vec<T>,
    /// Density before clipping.
    pub raw_density: Vec<T>,
    /// Absolute trapezoid mass of the negative lobes removed (`k = 3` only).
    pub clipped_mass: T,
    /// Estimated inversion error relative to the peak density; zero for the
    /// closed form.
    pub error_estimate: T,
}

impl<T: Scalar> DensityApprox<T> {
    fn integrate(&self, samples: &[T], n: usize) -> T {
        trapezoid_weights(&self.grid)
            .iter()
            .zip(&self.grid)
            .zip(samples)
            .map(|((w, p), d)| *w * *d * p.powi(n as i32))
            .sum()
    }

    /// Trapezoid mass of the (clipped) density.
    pub fn mass(&self) -> T {
        self.integrate(&self.density, 0)
    }

    /// Trapezoid mass before clipping.
    pub fn raw_mass(&self) -> T {
        self.integrate(&self.raw_density, 0)
    }

    /// `integral p^n eta(p) dp` over the grid, before clipping.
    pub fn raw_moment(&self, n: usize) -> T {
        self.integrate(&self.raw_density, n)
    }

    pub fn moment(&self, n: usize) -> T {
        self.integrate(&self.density, n)
    }
}

/// Closed-form Gaussian density on a grid covering at least `mean +- 6 sigma`.
pub fn gaussian_density<T: Scalar>(approx: &CharFnApprox<T>, grid: &[T]) -> Result<DensityApprox<T>> {
    if approx.order() != 2 {
        return Err(Error::UnsupportedOrder { k: approx.order() });
    }
    if approx.variance() <= T::zero() {
        return Err(Error::ZeroVariance {
            mean: approx.mean().as_f64(),
        });
    }
    check_grid(grid)?;
    let sigma = approx.sigma();
    let reach = T::lit(MIN_GRID_SIGMAS) * sigma * (T::one() - T::lit(1e-9));
    if grid[0] > approx.mean() - reach || grid[grid.len() - 1] < approx.mean() + reach {
        return Err(Error::BadGrid(format!(
            "grid must cover the mean +- {MIN_GRID_SIGMAS} sigma"
        )));
    }
    let density = grid
        .iter()
        .map(|&p| gaussian_pdf(approx, p))
        .collect::<Result<Vec<T>>>()?;
    Ok(DensityApprox {
        order: 2,
        grid: grid.to_vec(),
        raw_density: density.clone(),
        density,
        clipped_mass: T::zero(),
        error_estimate: T::zero(),
    })
}

/// Trapezoid rule for `(1/pi) int_0^X Re[G(x) exp(-i q x)] dx` on nodes
/// `x_j = j * step`, with `G(x) = F(x) exp(-i a_1 x)` pre-split into
/// `A_j = w_j |G| cos(arg G)` and `B_j = w_j |G| sin(arg G)`.
struct InversionKernel<T> {
    step: T,
    cos_part: Vec<T>,
    sin_part: Vec<T>,
}

impl<T: Scalar> InversionKernel<T> {
    fn new(approx: &CharFnApprox<T>, intervals: usize, cutoff: T) -> Self {
        let step = cutoff / T::from_count(intervals);
        let half = T::lit(0.5);
        let a2 = approx.variance();
        let a3 = approx.coefficient(3);
        let (cos_part, sin_part) = (0..=intervals)
            .map(|j| {
                let x = T::from_count(j) * step;
                let weight = if j == 0 || j == intervals { half } else { T::one() };
                let modulus = weight * (-a2 * x * x * half).exp();
                let phase = -a3 * x * x * x / T::lit(6.0);
                (modulus * phase.cos(), modulus * phase.sin())
            })
            .unzip();
        InversionKernel {
            step,
            cos_part,
            sin_part,
        }
    }

    fn eval(&self, q: T) -> T {
        let turn = q * self.step;
        let rotation = Complex::new(turn.cos(), turn.sin());
        let mut acc = T::zero();
        for (block, (a, b)) in self
            .cos_part
            .chunks(ANCHOR_EVERY)
            .zip(self.sin_part.chunks(ANCHOR_EVERY))
            .enumerate()
        {
            let start = turn * T::from_count(block * ANCHOR_EVERY);
            let mut z = Complex::new(start.cos(), start.sin());
            for (a, b) in a.iter().zip(b) {
                acc = acc + *a * z.re + *b * z.im;
                z = z * rotation;
            }
        }
        acc * self.step / T::PI()
    }
}

/// Numerical inverse Fourier transform of `F_k` (`k` in {2, 3}) on a grid.
pub fn invert_charfn<T: Scalar>(approx: &CharFnApprox<T>, grid: &[T]) -> Result<DensityApprox<T>> {
    if !(2..=3).contains(&approx.order()) {
        return Err(Error::UnsupportedOrder { k: approx.order() });
    }
    if approx.variance() <= T::zero() {
        return Err(Error::ZeroVariance {
            mean: approx.mean().as_f64(),
        });
    }
    check_grid(grid)?;
    let sigma = approx.sigma();
    let cutoff = T::lit(CUTOFF_SIGMAS) / sigma;
    let mean = approx.mean();

    let fine = InversionKernel::new(approx, INVERSION_NODES, cutoff);
    let raw: Vec<T> = grid.par_iter().map(|&p| fine.eval(p - mean)).collect();

    // Error estimate: half-resolution rule on a subsample, plus the tail
    // beyond the cutoff, both relative to the peak.
    let coarse = InversionKernel::new(approx, INVERSION_NODES / 2, cutoff);
    let stride = (grid.len() / 64).max(1);
    let peak = raw.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let resolution = (0..grid.len())
        .step_by(stride)
        .chain(std::iter::once(grid.len() - 1))
        .map(|i| (coarse.eval(grid[i] - mean) - raw[i]).abs())
        .fold(T::zero(), T::max);
    let half_cut2 = T::lit(CUTOFF_SIGMAS * CUTOFF_SIGMAS / 2.0);
    let tail = (-half_cut2).exp() / (T::PI() * approx.variance() * cutoff);
    let error_estimate = (resolution + tail) / peak;
    if error_estimate.is_nan() || error_estimate > T::lit(QUADRATURE_LIMIT) {
        return Err(Error::QuadratureFailure {
            estimate: error_estimate.as_f64(),
            limit: QUADRATURE_LIMIT,
        });
    }

    let weights = trapezoid_weights(grid);
    let clipped_mass: T = if approx.order() == 3 {
        raw.iter().zip(&weights).map(|(d, w)| *w * (-*d).max(T::zero())).sum()
    } else {
        T::zero()
    };
    let mut density: Vec<T> = raw.iter().map(|d| d.max(T::zero())).collect();
    if clipped_mass > T::zero() {
        let mass: T = density.iter().zip(&weights).map(|(d, w)| *d * *w).sum();
        if mass > T::zero() {
            density.iter_mut().for_each(|d| *d = *d / mass);
        }
    }
    Ok(DensityApprox {
        order: approx.order(),
        grid: grid.to_vec(),
        density,
        raw_density: raw,
        clipped_mass,
        error_estimate,
    })
}

/// Closed form for `k = 2`, numerical inversion for `k = 3`.
pub fn density<T: Scalar>(approx: &CharFnApprox<T>, grid: &[T]) -> Result<DensityApprox<T>> {
    match approx.order() {
        2 => gaussian_density(approx, grid),
        _ => invert_charfn(approx, grid),
    }
}
