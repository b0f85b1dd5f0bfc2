//! Forward-mode dual numbers with a small fixed number of derivative slots.
//!
//! The physics kernels (slip closures, flux functions, property laws) are
//! written once, generic over [`Scalar`], and evaluated either on plain `f64`
//! or on [`Dual<N>`] to obtain exact analytic partial derivatives. All kinks
//! (`abs`, `max`, clamp) take the derivative of the active branch.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by `f64` and `Dual<N>`.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lift a constant (zero derivative).
    fn c(x: f64) -> Self;
    fn value(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, e: f64) -> Self;
    /// Branch-wise maximum; ties keep `self`.
    fn max_s(self, o: Self) -> Self;
    /// Branch-wise minimum; ties keep `self`.
    fn min_s(self, o: Self) -> Self;

    /// Positive part `max(x, 0)`.
    fn pos(self) -> Self {
        self.max_s(Self::c(0.0))
    }
    /// Negative part `min(x, 0)`.
    fn neg_p(self) -> Self {
        self.min_s(Self::c(0.0))
    }
    /// Projection onto `[0, 1]`.
    fn clamp01(self) -> Self {
        self.max_s(Self::c(0.0)).min_s(Self::c(1.0))
    }
}

impl Scalar for f64 {
    #[inline]
    fn c(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    #[inline]
    fn max_s(self, o: Self) -> Self {
        if self >= o {
            self
        } else {
            o
        }
    }
    #[inline]
    fn min_s(self, o: Self) -> Self {
        if self <= o {
            self
        } else {
            o
        }
    }
}

/// Value plus `N` derivative slots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// A variable seeded with a unit derivative in slot `k`.
    pub fn var(v: f64, k: usize) -> Self {
        let mut d = [0.0; N];
        d[k] = 1.0;
        Self { v, d }
    }

    /// Copy into a wider dual, placing the derivative slots at `offset`.
    pub fn embed<const M: usize>(self, offset: usize) -> Dual<M> {
        assert!(offset + N <= M);
        let mut d = [0.0; M];
        d[offset..offset + N].copy_from_slice(&self.d);
        Dual { v: self.v, d }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= dv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d.iter()) {
            *a += b;
        }
        Self { v: self.v + o.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d.iter()) {
            *a -= b;
        }
        Self { v: self.v - o.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        let inv = 1.0 / o.v;
        let mut d = [0.0; N];
        for k in 0..N {
            d[k] = (self.d[k] - v * o.d[k]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x = -*x;
        }
        Self { v: -self.v, d }
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn c(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let v = self.v.sqrt();
        self.chain(v, 0.5 / v)
    }
    fn abs(self) -> Self {
        if self.v >= 0.0 {
            self
        } else {
            -self
        }
    }
    fn exp(self) -> Self {
        let v = self.v.exp();
        self.chain(v, v)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn powi(self, n: i32) -> Self {
        let v = self.v.powi(n);
        self.chain(v, f64::from(n) * self.v.powi(n - 1))
    }
    fn powf(self, e: f64) -> Self {
        let v = self.v.powf(e);
        self.chain(v, e * self.v.powf(e - 1.0))
    }
    fn max_s(self, o: Self) -> Self {
        if self.v >= o.v {
            self
        } else {
            o
        }
    }
    fn min_s(self, o: Self) -> Self {
        if self.v <= o.v {
            self
        } else {
            o
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn check1(f_dual: impl Fn(Dual<1>) -> Dual<1>, f: impl Fn(f64) -> f64, x: f64) {
        let out = f_dual(Dual::var(x, 0));
        let num = fd(&f, x);
        assert!(
            (out.d[0] - num).abs() <= 1e-6 * num.abs().max(1.0),
            "x={x}: analytic {} vs fd {num}",
            out.d[0]
        );
        assert!((out.v - f(x)).abs() <= 1e-12 * f(x).abs().max(1.0));
    }

    #[test]
    fn elementary_derivatives_match_finite_differences() {
        check1(|x| x.sqrt(), |x| x.sqrt(), 2.7);
        check1(|x| x.exp(), |x| x.exp(), 0.3);
        check1(|x| x.ln(), |x| x.ln(), 5.0);
        check1(|x| x.powi(3), |x| x.powi(3), 1.4);
        check1(|x| x.powf(0.25), |x| x.powf(0.25), 3.0);
        check1(
            |x| (x * x + Dual::constant(1.0)) / x,
            |x| (x * x + 1.0) / x,
            0.8,
        );
        check1(|x| x.abs(), |x| x.abs(), -1.5);
    }

    #[test]
    fn max_takes_active_branch() {
        let a = Dual::<2>::var(2.0, 0);
        let b = Dual::<2>::var(1.0, 1);
        let m = a.max_s(b);
        assert_eq!(m.d, [1.0, 0.0]);
        // tie keeps the first argument
        let t = Dual::<2>::var(1.0, 0).max_s(Dual::<2>::var(1.0, 1));
        assert_eq!(t.d, [1.0, 0.0]);
    }

    #[test]
    fn embed_preserves_slots() {
        let a = Dual::<2> { v: 3.0, d: [1.0, 2.0] };
        let w: Dual<4> = a.embed(2);
        assert_eq!(w.v, 3.0);
        assert_eq!(w.d, [0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn clamp01_is_one_sided_at_the_bounds() {
        let x = Dual::<1>::var(1.3, 0).clamp01();
        assert_eq!(x.v, 1.0);
        assert_eq!(x.d, [0.0]);
        let y = Dual::<1>::var(0.4, 0).clamp01();
        assert_eq!(y.d, [1.0]);
    }
}
