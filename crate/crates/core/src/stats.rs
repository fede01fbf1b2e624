//! Small statistics toolkit used by the benchmarks and statistical tests.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n − 1` denominator (0 for a single value).
pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Average ranks (1-based), ties receive the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with `n − 2` degrees of freedom.
    pub p_two_sided: f64,
}

pub fn spearman(x: &[f64], y: &[f64]) -> Correlation {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let rho = pearson(&ranks(x), &ranks(y));
    if n < 3 {
        return Correlation { rho, p_two_sided: 1.0 };
    }
    if rho.abs() >= 1.0 {
        return Correlation { rho, p_two_sided: 0.0 };
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
    Correlation {
        rho,
        p_two_sided: 2.0 * (1.0 - dist.cdf(t.abs())),
    }
}

/// One-sided Wilcoxon rank-sum (Mann–Whitney) test of `H1: a tends to be smaller than b`.
///
/// Exact permutation distribution of the rank sum when the pooled sample has
/// at most 24 values, normal approximation with tie correction otherwise.
pub fn rank_sum_less(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return 1.0;
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = ranks(&pooled);
    let observed: f64 = r[..n].iter().sum();
    if n + m <= 24 {
        // Enumerate all subsets of size n via a DP over (items, chosen, doubled rank sum).
        let doubled: Vec<usize> = r.iter().map(|x| (x * 2.0).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![vec![0f64; max_sum + 1]; n + 1];
        counts[0][0] = 1.0;
        for &w in &doubled {
            for c in (1..=n).rev() {
                for s in (w..=max_sum).rev() {
                    counts[c][s] += counts[c - 1][s - w];
                }
            }
        }
        let obs = (observed * 2.0).round() as usize;
        let total: f64 = counts[n].iter().sum();
        let below: f64 = counts[n][..=obs].iter().sum();
        return below / total;
    }
    let (nf, mf) = (n as f64, m as f64);
    let nt = nf + mf;
    let mu = nf * (nt + 1.0) / 2.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * mf / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let zc = (observed - mu + 0.5) / var.sqrt();
    Normal::standard().cdf(zc)
}

/// One-sided paired sign test of `H1: P(better) > 1/2` given counts of pairs
/// where the first method was strictly better and strictly worse (ties dropped).
pub fn sign_test(better: usize, worse: usize) -> f64 {
    let n = better + worse;
    if n == 0 {
        return 1.0;
    }
    if better == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
    // P(X >= better)
    1.0 - dist.cdf(better as u64 - 1)
}

/// Paired sign test on two samples of equal length: `H1: a_i < b_i` more often than not.
pub fn sign_test_less(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let better = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let worse = a.iter().zip(b).filter(|(x, y)| x > y).count();
    sign_test(better, worse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_uses_sample_denominator() {
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - 1.290_994_448_735_805_6).abs() < 1e-12);
        assert_eq!(std_dev(&[5.0]), 0.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&a, &[4.0, 5.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_monotone() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        let c = spearman(&x, &y);
        assert!((c.rho - 1.0).abs() < 1e-12);
        assert_eq!(c.p_two_sided, 0.0);
    }

    #[test]
    fn rank_sum_exact_extreme() {
        // Complete separation of 5 vs 5: p = 1 / C(10,5).
        let p = rank_sum_less(&[1.0, 2.0, 3.0, 4.0, 5.0], &[6.0, 7.0, 8.0, 9.0, 10.0]);
        assert!((p - 1.0 / 252.0).abs() < 1e-12);
        let q = rank_sum_less(&[6.0, 7.0, 8.0, 9.0, 10.0], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_sum_normal_branch_is_reasonable() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 + 10.0).collect();
        let p = rank_sum_less(&a, &b);
        assert!(p < 0.01 && p > 0.0);
    }

    #[test]
    fn sign_test_counts() {
        assert!((sign_test(5, 0) - 1.0 / 32.0).abs() < 1e-12);
        assert!((sign_test(0, 5) - 1.0).abs() < 1e-12);
        assert!((sign_test(1, 1) - 0.75).abs() < 1e-12);
    }
}
