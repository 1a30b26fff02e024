//! Double-word arithmetic: an unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd<T> {
    pub hi: T,
    pub lo: T,
}

fn two_sum<T: Scalar>(a: T, b: T) -> Dd<T> {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: e }
}

fn fast_two_sum<T: Scalar>(a: T, b: T) -> Dd<T> {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod<T: Scalar>(a: T, b: T) -> Dd<T> {
    let p = a * b;
    Dd {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

impl<T: Scalar> Dd<T> {
    pub fn new(hi: T, lo: T) -> Self {
        fast_two_sum(hi, lo)
    }

    pub fn from_sum(a: T, b: T) -> Self {
        two_sum(a, b)
    }

    pub fn value(self) -> T {
        self.hi + self.lo
    }

    pub fn scale(self, k: T) -> Self {
        let p = two_prod(self.hi, k);
        fast_two_sum(p.hi, self.lo.mul_add(k, p.lo))
    }
}

impl<T: Scalar> From<T> for Dd<T> {
    fn from(x: T) -> Self {
        Dd { hi: x, lo: T::zero() }
    }
}

impl<T: Scalar> Add for Dd<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let s = fast_two_sum(s.hi, s.lo + t.hi);
        fast_two_sum(s.hi, s.lo + t.lo)
    }
}

impl<T: Scalar> Neg for Dd<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl<T: Scalar> Sub for Dd<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<T: Scalar> Mul for Dd<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let p = two_prod(self.hi, o.hi);
        let lo = self.hi.mul_add(o.lo, self.lo.mul_add(o.hi, p.lo));
        fast_two_sum(p.hi, lo)
    }
}

impl<T: Scalar> Div for Dd<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o.scale(q1);
        let q2 = r.hi / o.hi;
        let r = r - o.scale(q2);
        let q3 = r.hi / o.hi;
        fast_two_sum(q1, q2) + Dd::from(q3)
    }
}
