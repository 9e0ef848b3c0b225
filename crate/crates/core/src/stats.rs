//! Exact small-sample tests: binomial upper tail, Fisher's exact test, Welch's
//! t-test and Benjamini-Hochberg adjustment.
//!
//! Tail sums are accumulated in log space relative to their largest term, so
//! neighborhoods with thousands of members do not underflow.

use statrs::function::beta::checked_beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Relative tolerance under which a table counts as "as extreme as" the
/// observed one in the two-sided Fisher sum.
pub const FISHER_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    /// Odds ratio for Fisher, t for Welch.
    pub statistic: f64,
    pub p_value: f64,
}

#[inline]
fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Terms smaller than the running maximum by this many nats are dropped once
/// the mode has been passed; they cannot move the sum at double precision.
const TAIL_CUTOFF: f64 = 40.0;

fn upper_tail(k: u64, n: u64, p: f64, ln_fact: impl Fn(u64) -> f64) -> f64 {
    if k == 0 || p == 1.0 {
        return 1.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_n = ln_fact(n);
    let log_term = |j: u64| ln_n - ln_fact(j) - ln_fact(n - j) + j as f64 * ln_p + (n - j) as f64 * ln_q;

    let mut terms = Vec::with_capacity((n - k + 1) as usize);
    let mut max = f64::NEG_INFINITY;
    for j in k..=n {
        let t = log_term(j);
        if t < max - TAIL_CUTOFF {
            break;
        }
        max = max.max(t);
        terms.push(t);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binom_sf(k: u64, n: u64, p: f64) -> Result<f64> {
    if k > n || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArguments(format!(
            "binomial tail needs 0 <= k <= n and p in [0, 1], got k={k}, n={n}, p={p}"
        )));
    }
    Ok(upper_tail(k, n, p, ln_factorial))
}

/// Binomial upper tail for a fixed success probability, with the log
/// factorials tabulated. Gives bit-for-bit the same values as [`binom_sf`].
#[derive(Debug, Clone)]
pub struct BinomialTail {
    p: f64,
    ln_fact: Vec<f64>,
}

impl BinomialTail {
    pub fn new(p: f64, max_n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArguments(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self {
            p,
            ln_fact: (0..=max_n as u64).map(ln_factorial).collect(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `P(X >= k)`; panics if `k > n` or `n` exceeds the tabulated range.
    pub fn sf(&self, k: usize, n: usize) -> f64 {
        assert!(k <= n && n < self.ln_fact.len(), "k={k}, n={n} outside table");
        upper_tail(k as u64, n as u64, self.p, |i| self.ln_fact[i as usize])
    }
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`.
///
/// The p-value sums the probabilities of all tables with the observed margins
/// that are no more likely than the observed table (within
/// [`FISHER_REL_TOL`]). The statistic is the sample odds ratio `ad / bc`,
/// with 0.5 added to every cell when any cell is zero.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> Result<TestResult> {
    let [[a, b], [c, d]] = table;
    let total = a + b + c + d;
    if total == 0 {
        return Err(Error::DegenerateTable);
    }
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;

    let ln_choose = |n: u64, k: u64| ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    let denom = ln_choose(total, col1);
    let log_prob = |x: u64| ln_choose(row1, x) + ln_choose(row2, col1 - x) - denom;

    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let observed = log_prob(a);
    let threshold = observed + FISHER_REL_TOL.ln_1p();

    let logs: Vec<f64> = (lo..=hi).map(log_prob).filter(|&lp| lp <= threshold).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|lp| (lp - max).exp()).sum();
    let p_value = (max + sum.ln()).exp().min(1.0);

    Ok(TestResult {
        statistic: odds_ratio(table),
        p_value,
    })
}

/// Sample odds ratio with the Haldane-Anscombe correction on zero cells.
pub fn odds_ratio(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let shift = if a == 0 || b == 0 || c == 0 || d == 0 { 0.5 } else { 0.0 };
    let (a, b, c, d) = (a as f64 + shift, b as f64 + shift, c as f64 + shift, d as f64 + shift);
    (a * d) / (b * c)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Two-tailed Welch t-test of `mean(xs) == mean(ys)`.
pub fn welch_t(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::InsufficientSample);
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArguments("samples must be finite".to_string()));
    }
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    if vx == 0.0 && vy == 0.0 {
        return Err(Error::ZeroVarianceBoth);
    }
    let sx = vx / xs.len() as f64;
    let sy = vy / ys.len() as f64;
    let se2 = sx + sy;
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (sx * sx / (xs.len() - 1) as f64 + sy * sy / (ys.len() - 1) as f64);
    let x = df / (df + t * t);
    let p_value = checked_beta_reg(df / 2.0, 0.5, x)
        .map_err(|e| Error::InvalidArguments(format!("incomplete beta: {e}")))?
        .clamp(0.0, 1.0);
    Ok(TestResult { statistic: t, p_value })
}

/// Welch-Satterthwaite degrees of freedom, exposed for diagnostics.
pub fn welch_df(xs: &[f64], ys: &[f64]) -> f64 {
    let (_, vx) = mean_var(xs);
    let (_, vy) = mean_var(ys);
    let sx = vx / xs.len() as f64;
    let sy = vy / ys.len() as f64;
    (sx + sy) * (sx + sy) / (sx * sx / (xs.len() - 1) as f64 + sy * sy / (ys.len() - 1) as f64)
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_fdr(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArguments(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]).then(i.cmp(&j)));

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // m / rank >= 1, so the max only repairs rounding in the product
        let scaled = (pvals[i] * m as f64 / (rank + 1) as f64).max(pvals[i]);
        running = running.min(scaled).min(1.0);
        adjusted[i] = running;
    }
    Ok(adjusted)
}
