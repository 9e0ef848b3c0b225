//! Reference implementations written from the textbook definitions, sharing
//! no code with the library beyond its public types.

#![allow(dead_code)]

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

/// `P(X >= k)` for every `k in 0..=n`, `X ~ Binomial(n, p)`, summed exactly.
/// `p` is taken at its exact binary value.
pub fn binomial_tails_exact(n: u64, p: f64) -> Vec<f64> {
    let p = BigRational::from_float(p).expect("finite p");
    let a = p.numer().clone();
    let den = p.denom().clone();
    let b = &den - &a;
    let total = num::pow(den, n as usize);
    // terms[j] = C(n, j) a^j b^(n-j)
    let mut a_pow = vec![BigInt::one()];
    let mut b_pow = vec![BigInt::one()];
    for i in 0..n as usize {
        a_pow.push(&a_pow[i] * &a);
        b_pow.push(&b_pow[i] * &b);
    }
    let mut choose = BigInt::one();
    let mut terms = Vec::with_capacity(n as usize + 1);
    for j in 0..=n {
        terms.push(&choose * &a_pow[j as usize] * &b_pow[(n - j) as usize]);
        choose = choose * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    let mut tails = vec![0.0; n as usize + 1];
    let mut acc = BigInt::zero();
    for j in (0..=n as usize).rev() {
        acc += &terms[j];
        tails[j] = BigRational::new(acc.clone(), total.clone()).to_f64().unwrap();
    }
    tails
}

/// Exact upper tail `P(X >= k)` with `p = num/den` exactly rational.
pub fn binomial_tail_rational(k: u64, n: u64, num: u64, den: u64) -> BigRational {
    let a = BigInt::from(num);
    let b = BigInt::from(den - num);
    let mut choose = BigInt::one();
    let mut acc = BigInt::zero();
    for j in 0..=n {
        if j >= k {
            acc += &choose * num::pow(a.clone(), j as usize) * num::pow(b.clone(), (n - j) as usize);
        }
        choose = choose * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    BigRational::new(acc, num::pow(BigInt::from(den), n as usize))
}

pub fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Two-sided Fisher exact p-value by full hypergeometric enumeration with
/// integer weights: tables at most `1 + 1e-7` times as probable as the
/// observed one are summed.
pub fn fisher_two_sided(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let weight = |x: u64| choose(r1, x) * choose(r2, c1 - x);
    let observed = weight(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let mut sum: u128 = 0;
    for x in lo..=hi {
        let w = weight(x);
        if w * 10_000_000 <= observed * 10_000_001 {
            sum += w;
        }
    }
    sum as f64 / choose(n, c1) as f64
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Welch statistic, degrees of freedom, and the two-sided p-value from
/// numerical integration of the t density. With `t = sqrt(nu) tan(theta)`
/// the tail mass is a ratio of integrals of `cos^(nu-1)`.
pub fn welch(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let (vx, vy) = (sample_var(xs) / xs.len() as f64, sample_var(ys) / ys.len() as f64);
    let t = (mean(xs) - mean(ys)) / (vx + vy).sqrt();
    let nu = (vx + vy).powi(2) / (vx * vx / (xs.len() as f64 - 1.0) + vy * vy / (ys.len() as f64 - 1.0));
    let half_pi = std::f64::consts::FRAC_PI_2;
    let kernel = move |theta: f64| theta.cos().max(0.0).powf(nu - 1.0);
    let theta_t = (t.abs() / nu.sqrt()).atan();
    let norm = integrate(&kernel, 0.0, half_pi, 1e-15);
    // integrate whichever side is shorter
    let p = if theta_t > half_pi / 2.0 {
        integrate(&kernel, theta_t, half_pi, 1e-15) / norm
    } else {
        1.0 - integrate(&kernel, 0.0, theta_t, 1e-15) / norm
    };
    (t, nu, p)
}

pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let mut both = 0;
    let mut differ = 0;
    for i in 0..a.len() {
        if a[i] && b[i] {
            both += 1;
        } else if a[i] != b[i] {
            differ += 1;
        }
    }
    if both + differ == 0 {
        0.0
    } else {
        differ as f64 / (both + differ) as f64
    }
}

pub fn manhattan(a: &[bool], b: &[bool]) -> f64 {
    let mut d = 0.0;
    for i in 0..a.len() {
        d += (a[i] as u8 as f64 - b[i] as u8 as f64).abs();
    }
    d
}

pub fn gower(a: (&[bool], &[f64]), b: (&[bool], &[f64]), ranges: &[(f64, f64)]) -> f64 {
    let mut num = 0.0;
    let mut weight = 0.0;
    for i in 0..a.0.len() {
        if a.0[i] || b.0[i] {
            weight += 1.0;
            if a.0[i] != b.0[i] {
                num += 1.0;
            }
        }
    }
    #[allow(clippy::needless_range_loop)]
    for j in 0..a.1.len() {
        let range = ranges[j].1 - ranges[j].0;
        if range > 0.0 {
            num += (a.1[j] - b.1[j]).abs() / range;
            weight += 1.0;
        }
    }
    if weight == 0.0 {
        0.0
    } else {
        num / weight
    }
}
