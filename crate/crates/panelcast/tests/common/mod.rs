//! Shared test-only oracles, independent of the library's solver paths.
//!
//! The least-squares oracle forms the normal equations in double-double
//! (~31 significant digits) arithmetic and solves them by Gaussian
//! elimination with partial pivoting - deliberately a different algorithm
//! and precision than the QR path under test. The normal CDF here uses a
//! rational erfc approximation rather than the statrs implementation.

#![allow(dead_code)]

/// Double-double value: an unevaluated sum `hi + lo` with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn zero() -> Dd {
        Dd::from(0.0)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn sub(self, other: Dd) -> Dd {
        self.add(Dd {
            hi: -other.hi,
            lo: -other.lo,
        })
    }

    pub fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul(Dd::from(q1)));
        let q2 = r.hi / other.hi;
        let r2 = r.sub(other.mul(Dd::from(q2)));
        let q3 = r2.hi / other.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        let (hi, lo2) = quick_two_sum(hi, lo + q3);
        Dd { hi, lo: lo2 }
    }

    pub fn abs(self) -> f64 {
        self.hi.abs()
    }
}

/// Least squares by normal equations in double-double arithmetic.
///
/// `design` is row-major (n rows, p columns). Returns the coefficient
/// vector as f64.
#[allow(clippy::needless_range_loop)] // indexed elimination reads clearer
pub fn dd_normal_equations(design: &[Vec<f64>], response: &[f64]) -> Vec<f64> {
    let n = design.len();
    let p = design[0].len();

    // Augmented system [X'X | X'y] accumulated exactly-ish.
    let mut a = vec![vec![Dd::zero(); p + 1]; p];
    for i in 0..p {
        for j in i..p {
            let mut acc = Dd::zero();
            for row in design.iter().take(n) {
                acc = acc.add(Dd::from(row[i]).mul(Dd::from(row[j])));
            }
            a[i][j] = acc;
        }
        let mut acc = Dd::zero();
        for (row, y) in design.iter().zip(response).take(n) {
            acc = acc.add(Dd::from(row[i]).mul(Dd::from(*y)));
        }
        a[i][p] = acc;
    }
    for i in 1..p {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }

    // Gaussian elimination with partial pivoting.
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        for row in col + 1..p {
            let factor = a[row][col].div(a[col][col]);
            for j in col..=p {
                a[row][j] = a[row][j].sub(factor.mul(a[col][j]));
            }
        }
    }
    let mut coeffs = vec![Dd::zero(); p];
    for row in (0..p).rev() {
        let mut acc = a[row][p];
        for j in row + 1..p {
            acc = acc.sub(a[row][j].mul(coeffs[j]));
        }
        coeffs[row] = acc.div(a[row][row]);
    }
    coeffs.into_iter().map(Dd::to_f64).collect()
}

/// Standard normal CDF from a rational erfc approximation (Abramowitz &
/// Stegun 7.1.26 refined with the Hastings coefficients; absolute error
/// below 1.5e-7, ample for KS distances at n = 1000).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    let erf = if z >= 0.0 { erf } else { -erf };
    0.5 * (1.0 + erf)
}

/// Two-sided Kolmogorov-Smirnov distance of a sample against a CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in sorted.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic Kolmogorov tail probability Q(lambda).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    let mut q = 0.0;
    for k in 1..101 {
        let term =
            2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        q += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    q.clamp(0.0, 1.0)
}

/// One pass/fail line per acceptance criterion, then assert.
pub fn check(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[{}] {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}
