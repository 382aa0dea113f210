//! Binomial distribution support shared by the codec and the accountant.
//!
//! All masses are computed in log space via the log-gamma function so that
//! trial counts up to 10^6 stay finite; nothing here ever forms a raw
//! binomial coefficient.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

/// ln P[Bin(m, q) = k].
pub fn ln_pmf(m: u32, k: u32, q: f64) -> f64 {
    debug_assert!(k <= m);
    debug_assert!(q > 0.0 && q < 1.0);
    let (m, k) = (f64::from(m), f64::from(k));
    let ln_choose = ln_gamma(m + 1.0) - ln_gamma(k + 1.0) - ln_gamma(m - k + 1.0);
    ln_choose + k * q.ln() + (m - k) * (1.0 - q).ln()
}

/// P[Bin(m, q) = k]; zero outside 0..=m so the piecewise noise density can
/// index one past each end.
pub fn pmf(m: u32, k: i64, q: f64) -> f64 {
    if k < 0 || k > i64::from(m) {
        return 0.0;
    }
    if m == 0 {
        return 1.0;
    }
    ln_pmf(m, k as u32, q).exp()
}

/// The mode of Bin(m, q), floor((m+1)q), clamped to the support.
pub fn mode(m: u32, q: f64) -> u32 {
    let k = ((f64::from(m) + 1.0) * q).floor() as i64;
    k.clamp(0, i64::from(m)) as u32
}

/// Largest probability mass, max_k P[Bin(m, q) = k]. Exactly 1 for m = 0.
pub fn pmax(m: u32, q: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    pmf(m, i64::from(mode(m, q)), q)
}

/// One Bin(m, q) draw.
///
/// For m <= 64 this is a literal sum of m Bernoulli(q) draws; beyond that it
/// inverts the exact CDF with a single uniform variate. Both paths consume
/// the generator deterministically for a fixed m.
pub fn sample<R: Rng>(m: u32, q: f64, rng: &mut R) -> u32 {
    if m == 0 {
        return 0;
    }
    if m <= 64 {
        let mut total = 0u32;
        for _ in 0..m {
            if rng.gen_bool(q) {
                total += 1;
            }
        }
        return total;
    }
    let cdf = cdf_table(m, q);
    invert_cdf(&cdf, rng.gen::<f64>())
}

/// Cumulative masses P[Bin(m, q) <= k] for k = 0..=m.
///
/// Terms far in the tails underflow to zero individually, which is fine: the
/// running sum reaches 1.0 to within f64 round-off.
pub fn cdf_table(m: u32, q: f64) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(m as usize + 1);
    let mut acc = 0.0f64;
    for k in 0..=m {
        acc += pmf(m, i64::from(k), q);
        cdf.push(acc.min(1.0));
    }
    cdf
}

/// Smallest k with cdf[k] > u.
pub fn invert_cdf(cdf: &[f64], u: f64) -> u32 {
    let k = cdf.partition_point(|&c| c <= u);
    (k.min(cdf.len() - 1)) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Stream};

    #[test]
    fn pmf_small_cases() {
        // Bin(4, 1/2) masses are (1, 4, 6, 4, 1)/16.
        let expect = [1.0, 4.0, 6.0, 4.0, 1.0].map(|x| x / 16.0);
        for (k, e) in expect.iter().enumerate() {
            assert!((pmf(4, k as i64, 0.5) - e).abs() < 1e-14);
        }
        assert_eq!(pmf(4, -1, 0.5), 0.0);
        assert_eq!(pmf(4, 5, 0.5), 0.0);
    }

    #[test]
    fn pmax_values() {
        assert_eq!(pmax(0, 0.3), 1.0);
        assert!((pmax(4, 0.5) - 0.375).abs() < 1e-14);
        // Asymmetric q: mode of Bin(10, 0.3) is 3.
        assert_eq!(mode(10, 0.3), 3);
        let brute = (0..=10).map(|k| pmf(10, k, 0.3)).fold(0.0f64, f64::max);
        assert!((pmax(10, 0.3) - brute).abs() < 1e-15);
    }

    #[test]
    fn cdf_reaches_one() {
        for m in [1u32, 64, 65, 251, 997, 16279] {
            let cdf = cdf_table(m, 0.5);
            let last = *cdf.last().unwrap();
            assert!((last - 1.0).abs() < 1e-9, "m={m} last={last}");
        }
    }

    #[test]
    fn sampler_matches_pmf_small_m() {
        // Chi-square GOF for the Bernoulli-sum path, Bin(6, 1/2).
        let stream = Stream::new(11, 0, 0, Purpose::Report);
        let mut rng = stream.whole();
        let n = 200_000usize;
        let mut counts = [0u64; 7];
        for _ in 0..n {
            counts[sample(6, 0.5, &mut rng) as usize] += 1;
        }
        let mut chi2 = 0.0;
        for k in 0..=6 {
            let e = pmf(6, k as i64, 0.5) * n as f64;
            let d = counts[k] as f64 - e;
            chi2 += d * d / e;
        }
        // 6 dof, alpha = 0.01.
        assert!(chi2 < 16.812, "chi2 = {chi2}");
    }

    #[test]
    fn sampler_matches_pmf_inversion_path() {
        // m = 200 goes through CDF inversion; compare mean/variance to mq,
        // mq(1-q).
        let stream = Stream::new(12, 0, 0, Purpose::Report);
        let mut rng = stream.whole();
        let n = 200_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = f64::from(sample(200, 0.5, &mut rng));
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // 5-sigma bands.
        let mean_se = (50.0f64 / n as f64).sqrt();
        assert!((mean - 100.0).abs() < 5.0 * mean_se, "mean = {mean}");
        assert!((var - 50.0).abs() < 0.05 * 50.0, "var = {var}");
    }

    #[test]
    fn invert_cdf_boundaries() {
        let cdf = cdf_table(4, 0.5);
        assert_eq!(invert_cdf(&cdf, 0.0), 0);
        assert_eq!(invert_cdf(&cdf, 1.0 - 1e-16), 4);
        assert_eq!(invert_cdf(&cdf, 0.07), 1);
        // u exactly on a step goes to the next value, matching P[X <= k].
        let exact = [0.25, 0.5, 1.0];
        assert_eq!(invert_cdf(&exact, 0.25), 1);
        assert_eq!(invert_cdf(&exact, 0.2499), 0);
    }
}
