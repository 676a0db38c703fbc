//! Rank statistics: Spearman correlation, Wilcoxon rank-sum test and the
//! Vargha-Delaney A12 effect size.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: Option<f64>,
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        i = j;
    }
    ranks
}

/// Sizes of the groups of tied values.
fn tie_groups(xs: &[f64]) -> Vec<usize> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
    }
}

/// Spearman's rho with a two-sided p-value from the t approximation with
/// `n - 2` degrees of freedom.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<StatResult> {
    if xs.len() != ys.len() {
        return Err(Error::Usage(format!(
            "spearman needs paired samples ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::Usage("spearman needs at least 3 pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Usage("spearman needs finite values".into()));
    }
    let rho = pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(Error::UndefinedCorrelation)?;
    let df = (xs.len() - 2) as f64;
    let p = if libm::fabs(rho) >= 1.0 {
        0.0
    } else {
        let t2 = rho * rho * df / (1.0 - rho * rho);
        regularized_incomplete_beta(df / (df + t2), df / 2.0, 0.5)
    };
    Ok(StatResult {
        statistic: rho,
        p_value: Some(p.clamp(0.0, 1.0)),
    })
}

/// Mann-Whitney U statistic of sample `a` against `b` (ties count half).
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> f64 {
    let mut all = a.to_vec();
    all.extend_from_slice(b);
    let ranks = average_ranks(&all);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let n1 = a.len() as f64;
    r1 - n1 * (n1 + 1.0) / 2.0
}

/// Samples per group below which the exact null distribution is used (when
/// there are no ties).
const EXACT_LIMIT: usize = 8;

/// Two-sided Wilcoxon rank-sum test. The statistic is the standardized U
/// (0 for the exact test); the p-value uses the exact distribution for small
/// tie-free samples and otherwise the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<StatResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Usage("rank-sum test needs two non-empty samples".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let u = mann_whitney_u(a, b);
    let mut all = a.to_vec();
    all.extend_from_slice(b);
    let ties = tie_groups(&all);
    let has_ties = ties.iter().any(|&t| t > 1);
    let mean = (n1 * n2) as f64 / 2.0;

    if n1 < EXACT_LIMIT && n2 < EXACT_LIMIT && !has_ties {
        let counts = exact_u_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        // u is an integer without ties.
        let k = libm::round(u) as usize;
        let lower: f64 = counts[..=k].iter().sum::<f64>() / total;
        let upper: f64 = counts[k..].iter().sum::<f64>() / total;
        return Ok(StatResult {
            statistic: 0.0,
            p_value: Some((2.0 * lower.min(upper)).min(1.0)),
        });
    }

    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return Ok(StatResult {
            statistic: 0.0,
            p_value: Some(1.0),
        });
    }
    let diff = u - mean;
    let corrected = (libm::fabs(diff) - 0.5).max(0.0);
    let z = libm::copysign(corrected, diff) / libm::sqrt(var);
    let p = libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2);
    Ok(StatResult {
        statistic: z,
        p_value: Some(p.min(1.0)),
    })
}

/// Number of arrangements yielding each U in `0..=n1*n2` under the null.
fn exact_u_counts(n1: usize, n2: usize) -> Vec<f64> {
    // f(i, j)[u]: arrangements of i items of group 1 and j of group 2 with U = u.
    let max = n1 * n2;
    let mut table: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            let mut f = vec![0.0; max + 1];
            if i == 0 || j == 0 {
                f[0] = 1.0;
            } else {
                // Largest element from group 1 beats all j of group 2.
                for (u, v) in table[i - 1][j].iter().take(max + 1 - j).enumerate() {
                    f[u + j] += v;
                }
                for (u, v) in table[i][j - 1].iter().enumerate() {
                    f[u] += v;
                }
            }
            table[i][j] = f;
        }
    }
    core::mem::take(&mut table[n1][n2])
}

/// Vargha-Delaney A12: probability that a draw from `a` exceeds one from
/// `b`, ties counting half.
pub fn a12(a: &[f64], b: &[f64]) -> Result<StatResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Usage("A12 needs two non-empty samples".into()));
    }
    let mut greater = 0.0;
    let mut ties = 0.0;
    for x in a {
        for y in b {
            if x > y {
                greater += 1.0;
            } else if x == y {
                ties += 1.0;
            }
        }
    }
    Ok(StatResult {
        statistic: (greater + 0.5 * ties) / (a.len() * b.len()) as f64,
        p_value: None,
    })
}

/// Regularized incomplete beta function `I_x(a, b)` by Lentz's continued
/// fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + even * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + odd * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if libm::fabs(delta - 1.0) < EPS {
            break;
        }
    }
    h
}
