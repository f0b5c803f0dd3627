//! Monotone cubic (Fritsch-Carlson) interpolation on a uniform grid, with
//! inverse lookup for strictly increasing data. Used as the cache for the
//! hot-path constitutive transforms.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneTable {
    x0: f64,
    h: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl MonotoneTable {
    /// Build from uniformly spaced samples. Derivatives follow the
    /// Fritsch-Carlson limiter, so data monotone on a subinterval yields an
    /// interpolant monotone there.
    pub fn new(x0: f64, x1: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n >= 3, "table needs at least 3 nodes");
        let h = (x1 - x0) / (n - 1) as f64;
        let slopes: Vec<f64> = (0..n - 1)
            .map(|k| (values[k + 1] - values[k]) / h)
            .collect();
        let mut derivs = vec![0.0; n];
        for k in 1..n - 1 {
            let (d0, d1) = (slopes[k - 1], slopes[k]);
            derivs[k] = if d0 * d1 <= 0.0 {
                0.0
            } else {
                // harmonic mean (uniform-spacing weights are equal)
                2.0 * d0 * d1 / (d0 + d1)
            };
        }
        derivs[0] = edge_derivative(slopes[0], slopes[1]);
        derivs[n - 1] = edge_derivative(slopes[n - 2], slopes[n - 3]);
        MonotoneTable {
            x0,
            h,
            values,
            derivs,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x0
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.values.len() - 1) as f64
    }

    pub fn first_value(&self) -> f64 {
        self.values[0]
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    fn segment(&self, x: f64) -> (usize, f64) {
        let n = self.values.len();
        let t = (x - self.x0) / self.h;
        let k = (t.floor() as isize).clamp(0, n as isize - 2) as usize;
        (k, t - k as f64)
    }

    /// Cubic Hermite evaluation; clamps x to the table range.
    pub fn eval(&self, x: f64) -> f64 {
        let (k, t) = self.segment(x);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.derivs[k] * self.h, self.derivs[k + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
    }

    /// Derivative of the interpolant (always finite; nonnegative if the data
    /// are nondecreasing).
    pub fn eval_deriv(&self, x: f64) -> f64 {
        let (k, t) = self.segment(x);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.derivs[k] * self.h, self.derivs[k + 1] * self.h);
        let t2 = t * t;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        (dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1) / self.h
    }

    /// Inverse lookup for strictly increasing tables: returns x with
    /// eval(x) = y, by bracketed bisection plus a Newton polish.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (lo_v, hi_v) = (self.first_value(), self.last_value());
        if !(lo_v..=hi_v).contains(&y) {
            return Err(Error::domain(format!(
                "inverse lookup {y} outside table range [{lo_v}, {hi_v}]"
            )));
        }
        if y == lo_v {
            return Ok(self.x_min());
        }
        if y == hi_v {
            return Ok(self.x_max());
        }
        // locate the segment by binary search on node values
        let mut lo = 0usize;
        let mut hi = self.values.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.values[mid] <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut a = self.x0 + self.h * lo as f64;
        let mut b = self.x0 + self.h * hi as f64;
        let mut x = 0.5 * (a + b);
        for _ in 0..100 {
            let f = self.eval(x) - y;
            if f.abs() <= 1e-15 * hi_v.abs().max(1.0) {
                return Ok(x);
            }
            if f > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let d = self.eval_deriv(x);
            let newton = if d > 0.0 { x - f / d } else { x };
            x = if newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
        }
        Ok(x)
    }
}

fn edge_derivative(nearest: f64, next: f64) -> f64 {
    // one-sided estimate clipped for monotonicity (uniform spacing)
    let d = 0.5 * (3.0 * nearest - next);
    if d * nearest <= 0.0 {
        0.0
    } else if next * nearest <= 0.0 && d.abs() > 3.0 * nearest.abs() {
        3.0 * nearest
    } else {
        d
    }
}
