//! Privacy accounting for the binomial-mechanism codec.
//!
//! Per-round epsilon follows the exact form 8 d s L P_max / (|D|^2 delta)
//! with P_max evaluated in log space, never silently replaced by its
//! Gaussian approximation 6.4 d s L / (|D|^2 sqrt(m) delta); the
//! approximation is exposed as a separate quantity. T-round totals are
//! tracked under both the strong-composition formula
//! eps^T = sqrt(-2T ln delta') eps + T eps (e^eps - 1) and the simplified
//! sqrt(2T ln(1/delta)) eps form, in natural logarithms throughout.

use crate::binomial;
use crate::codec::BqConfig;
use crate::error::{BqError, Result};
use std::io::Write;

/// Target privacy budget (epsilon, delta) for one client.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrivacySpec {
    pub epsilon_target: f64,
    pub delta_target: f64,
}

impl PrivacySpec {
    pub fn new(epsilon_target: f64, delta_target: f64) -> Result<Self> {
        if !(epsilon_target.is_finite() && epsilon_target > 0.0) {
            return Err(BqError::InvalidConfig(format!(
                "epsilon target must be positive, got {epsilon_target}"
            )));
        }
        if !(delta_target > 0.0 && delta_target < 1.0) {
            return Err(BqError::InvalidConfig(format!(
                "delta target must lie in (0, 1), got {delta_target}"
            )));
        }
        Ok(PrivacySpec {
            epsilon_target,
            delta_target,
        })
    }
}

/// What the accountant needs to know about one client's data: local dataset
/// size |D|, batch size L, and the dimension d used for privacy accounting
/// (the model dimension by default, or an effective-dimension override).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientDataProfile {
    pub dataset_size: u64,
    pub batch_size: u64,
    pub privacy_dimension: u64,
}

impl ClientDataProfile {
    pub fn new(dataset_size: u64, batch_size: u64, privacy_dimension: u64) -> Result<Self> {
        if dataset_size == 0 || privacy_dimension == 0 {
            return Err(BqError::InvalidConfig(
                "dataset size and privacy dimension must be positive".into(),
            ));
        }
        if batch_size == 0 || batch_size > dataset_size {
            return Err(BqError::InvalidConfig(format!(
                "batch size {batch_size} must lie in [1, {dataset_size}]"
            )));
        }
        Ok(ClientDataProfile {
            dataset_size,
            batch_size,
            privacy_dimension,
        })
    }
}

/// Largest Bin(m, q) mass, exact in log space.
pub fn binomial_pmax(m: u32, q: f64) -> f64 {
    binomial::pmax(m, q)
}

/// The De Moivre-Laplace approximation of P_max at q = 1/2:
/// 1 / sqrt(2 pi m / 4). Reasonable for m > 10, within 1% of exact for
/// m >= ~100.
pub fn gaussian_pmax_approx(m: u32) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * f64::from(m) / 4.0).sqrt()
}

/// Whether the adjacent-bin argument behind the per-round bound applies;
/// it assumes L > 2s. Callers should warn (not fail) when this is false.
pub fn adjacency_assumption_holds(config: &BqConfig, profile: &ClientDataProfile) -> bool {
    profile.batch_size > 2 * u64::from(config.quant_level())
}

/// Exact per-round epsilon: 8 d s L P_max / (|D|^2 delta).
///
/// m = 0 means uniform quantization alone, which provides no guarantee.
pub fn per_round_privacy(
    config: &BqConfig,
    profile: &ClientDataProfile,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BqError::InvalidConfig(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if config.noise_trials() == 0 {
        return Err(BqError::NoPrivacyGuarantee);
    }
    let pmax = binomial::pmax(config.noise_trials(), config.noise_prob());
    let d = profile.privacy_dimension as f64;
    let s = f64::from(config.quant_level());
    let l = profile.batch_size as f64;
    let n = profile.dataset_size as f64;
    Ok(8.0 * d * s * l * pmax / (n * n * delta))
}

/// The closed-form approximation 6.4 d s L / (|D|^2 sqrt(m) delta).
pub fn per_round_privacy_gaussian(
    config: &BqConfig,
    profile: &ClientDataProfile,
    delta: f64,
) -> Result<f64> {
    if config.noise_trials() == 0 {
        return Err(BqError::NoPrivacyGuarantee);
    }
    let d = profile.privacy_dimension as f64;
    let s = f64::from(config.quant_level());
    let l = profile.batch_size as f64;
    let n = profile.dataset_size as f64;
    let m = f64::from(config.noise_trials());
    Ok(6.4 * d * s * l / (n * n * m.sqrt() * delta))
}

/// Linear subsampling amplification: a batch of L drawn from |D| turns an
/// (eps', delta')-guarantee into (L/|D| eps', L/|D| delta').
pub fn amplify_by_subsampling(
    epsilon_full: f64,
    delta_full: f64,
    batch_size: u64,
    dataset_size: u64,
) -> (f64, f64) {
    let ratio = batch_size as f64 / dataset_size as f64;
    (ratio * epsilon_full, ratio * delta_full)
}

/// T-round totals under both composition forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComposedPrivacy {
    /// sqrt(-2T ln delta') eps + T eps (e^eps - 1).
    pub epsilon_exact: f64,
    /// sqrt(2T ln(1/delta)) eps.
    pub epsilon_simplified: f64,
    /// T delta + delta'.
    pub delta_exact: f64,
    /// T delta.
    pub delta_simplified: f64,
}

/// Strong composition of a per-round (eps, delta) guarantee over T rounds.
/// `delta_prime` is the composition slack; passing the per-round delta
/// reproduces the simplified total's first term exactly.
pub fn compose(epsilon: f64, delta: f64, rounds: u64, delta_prime: f64) -> Result<ComposedPrivacy> {
    if rounds == 0 {
        return Err(BqError::InvalidInput("composition needs T >= 1".into()));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(BqError::InvalidInput(format!(
            "delta' must lie in (0, 1), got {delta_prime}"
        )));
    }
    let t = rounds as f64;
    let exact = (-2.0 * t * delta_prime.ln()).sqrt() * epsilon
        + t * epsilon * (epsilon.exp_m1());
    let simplified = (2.0 * t * (1.0 / delta).ln()).sqrt() * epsilon;
    Ok(ComposedPrivacy {
        epsilon_exact: exact,
        epsilon_simplified: simplified,
        delta_exact: t * delta + delta_prime,
        delta_simplified: t * delta,
    })
}

/// Lower bound on the per-coordinate wire width needed for an
/// (eps, delta)-guarantee: (1/2) log2(6.4 d L / |D|^2) - (1/2) log2(eps delta).
pub fn min_bits_for_privacy(profile: &ClientDataProfile, spec: &PrivacySpec) -> f64 {
    let d = profile.privacy_dimension as f64;
    let l = profile.batch_size as f64;
    let n = profile.dataset_size as f64;
    0.5 * (6.4 * d * l / (n * n)).log2()
        - 0.5 * (spec.epsilon_target * spec.delta_target).log2()
}

/// One ledger line: the guarantee consumed at a given round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub round: u64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Per-client running record of round guarantees and their composed totals.
///
/// Rounds are homogeneous in this artifact (the plan is fixed up front), so
/// totals compose the worst recorded per-round pair.
#[derive(Debug, Clone, Default)]
pub struct PrivacyLedger {
    entries: Vec<LedgerEntry>,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        PrivacyLedger::default()
    }

    pub fn record(&mut self, round: u64, epsilon: f64, delta: f64) {
        self.entries.push(LedgerEntry {
            round,
            epsilon,
            delta,
        });
    }

    pub fn rounds(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    fn worst_round(&self) -> Option<(f64, f64)> {
        let eps = self.entries.iter().map(|e| e.epsilon).fold(f64::NAN, f64::max);
        let delta = self.entries.iter().map(|e| e.delta).fold(f64::NAN, f64::max);
        if eps.is_nan() {
            None
        } else {
            Some((eps, delta))
        }
    }

    /// Totals after all recorded rounds, composing with delta' = per-round
    /// delta. Infinite epsilon (no-guarantee rounds) stays infinite.
    pub fn totals(&self) -> Option<ComposedPrivacy> {
        let (eps, delta) = self.worst_round()?;
        let t = self.rounds();
        if eps.is_infinite() {
            return Some(ComposedPrivacy {
                epsilon_exact: f64::INFINITY,
                epsilon_simplified: f64::INFINITY,
                delta_exact: t as f64 * delta + delta,
                delta_simplified: t as f64 * delta,
            });
        }
        compose(eps, delta, t, delta).ok()
    }

    /// Totals as of round index t (0-based), for per-round reporting.
    pub fn totals_at(&self, upto_round: u64) -> Option<ComposedPrivacy> {
        let (eps, delta) = self.worst_round()?;
        let t = upto_round + 1;
        if eps.is_infinite() {
            return Some(ComposedPrivacy {
                epsilon_exact: f64::INFINITY,
                epsilon_simplified: f64::INFINITY,
                delta_exact: t as f64 * delta + delta,
                delta_simplified: t as f64 * delta,
            });
        }
        compose(eps, delta, t, delta).ok()
    }

    /// CSV rows: round, eps_round, delta_round, eps_total_exact,
    /// eps_total_simplified, delta_total.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "round,eps_round,delta_round,eps_total_exact,eps_total_simplified,delta_total"
        )?;
        for (i, e) in self.entries.iter().enumerate() {
            let totals = self.totals_at(i as u64).expect("non-empty ledger");
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.round,
                e.epsilon,
                e.delta,
                totals.epsilon_exact,
                totals.epsilon_simplified,
                totals.delta_simplified
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(s: u32, m: u32) -> BqConfig {
        BqConfig::new(1.0, s, m).unwrap()
    }

    #[test]
    fn pmax_degenerate_and_central() {
        assert_eq!(binomial_pmax(0, 0.3), 1.0);
        assert!((binomial_pmax(4, 0.5) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn pmax_matches_gaussian_for_large_m() {
        for m in [251u32, 997, 1003, 4043, 4079, 16279, 100_000, 1_000_000] {
            let exact = binomial_pmax(m, 0.5);
            let approx = gaussian_pmax_approx(m);
            assert!(exact <= 1.0);
            assert!(
                ((exact - approx) / approx).abs() < 0.01,
                "m = {m}: exact {exact} vs gaussian {approx}"
            );
        }
        // The spec's quoted value for m = 251.
        assert!((gaussian_pmax_approx(251) - 0.0503).abs() < 2e-4);
    }

    #[test]
    fn pmax_gaussian_gap_widens_for_small_m() {
        // The 1% agreement does not extend down to m = 11; the exact value
        // sits ~6% below the Gaussian form there.
        let exact = binomial_pmax(11, 0.5);
        let approx = gaussian_pmax_approx(11);
        let rel = ((exact - approx) / approx).abs();
        assert!(rel > 0.05 && rel < 0.08, "rel = {rel}");
    }

    fn mnist_profile() -> ClientDataProfile {
        ClientDataProfile::new(15000, 32, 3000).unwrap()
    }

    fn fashion_profile() -> ClientDataProfile {
        ClientDataProfile::new(15000, 32, 30000).unwrap()
    }

    #[test]
    fn per_round_matches_published_rows() {
        let eps = per_round_privacy(&cfg(2, 251), &mnist_profile(), 1e-4).unwrap();
        assert!((eps - 3.44).abs() / 3.44 < 0.02, "eps = {eps}");

        let eps = per_round_privacy(&cfg(13, 997), &fashion_profile(), 1e-4).unwrap();
        assert!((eps - 112.42).abs() / 112.42 < 0.02, "eps = {eps}");
    }

    #[test]
    fn per_round_closed_form_at_m4() {
        // P_max(4, 1/2) = 0.375, so eps = 3 d s L / (|D|^2 delta).
        let profile = ClientDataProfile::new(500, 10, 7).unwrap();
        let eps = per_round_privacy(&cfg(3, 4), &profile, 1e-2).unwrap();
        let want = 3.0 * 7.0 * 3.0 * 10.0 / (500.0f64.powi(2) * 1e-2);
        assert!((eps - want).abs() < 1e-12);
    }

    #[test]
    fn per_round_rejects_m_zero() {
        let err = per_round_privacy(&cfg(2, 0), &mnist_profile(), 1e-4);
        assert!(matches!(err, Err(BqError::NoPrivacyGuarantee)));
    }

    #[test]
    fn epsilon_monotone_in_parameters() {
        let base = per_round_privacy(&cfg(4, 100), &mnist_profile(), 1e-4).unwrap();
        let more_s = per_round_privacy(&cfg(5, 100), &mnist_profile(), 1e-4).unwrap();
        let more_m = per_round_privacy(&cfg(4, 140), &mnist_profile(), 1e-4).unwrap();
        assert!(more_s > base);
        assert!(more_m < base);

        let profile_d = ClientDataProfile::new(15000, 32, 6000).unwrap();
        assert!(per_round_privacy(&cfg(4, 100), &profile_d, 1e-4).unwrap() > base);
        let profile_n = ClientDataProfile::new(30000, 32, 3000).unwrap();
        assert!(per_round_privacy(&cfg(4, 100), &profile_n, 1e-4).unwrap() < base);
    }

    #[test]
    fn amplification_trivial_cases() {
        assert_eq!(amplify_by_subsampling(1.0, 1e-2, 100, 100), (1.0, 1e-2));
        let (e, d) = amplify_by_subsampling(2.0, 1e-2, 32, 15000);
        assert!((e - 2.0 * 32.0 / 15000.0).abs() < 1e-15);
        assert!((d - 1e-2 * 32.0 / 15000.0).abs() < 1e-18);
    }

    #[test]
    fn amplification_reconstructs_per_round_epsilon() {
        // Pre-amplification eps' = 8 d s P_max / (L delta') with
        // delta' = (|D|/L) delta composes with the L/|D| ratio back to the
        // per-round formula.
        let profile = mnist_profile();
        let config = cfg(2, 251);
        let delta = 1e-4;
        let ratio = profile.batch_size as f64 / profile.dataset_size as f64;
        let delta_full = delta / ratio;
        let pmax = binomial_pmax(251, 0.5);
        let eps_full = 8.0
            * profile.privacy_dimension as f64
            * 2.0
            * pmax
            / (profile.batch_size as f64 * delta_full);
        let (eps, d) = amplify_by_subsampling(
            eps_full,
            delta_full,
            profile.batch_size,
            profile.dataset_size,
        );
        let direct = per_round_privacy(&config, &profile, delta).unwrap();
        assert!((eps - direct).abs() / direct < 1e-12, "{eps} vs {direct}");
        assert!((d - delta).abs() < 1e-18);
    }

    #[test]
    fn compose_exact_value() {
        let c = compose(0.1, 1e-4, 100, 1e-5).unwrap();
        // sqrt(2 * 100 * ln 1e5) * 0.1 + 100 * 0.1 * (e^0.1 - 1)
        assert!((c.epsilon_exact - 5.8501).abs() < 1e-3, "{}", c.epsilon_exact);
        assert!((c.epsilon_exact - 5.851).abs() < 1e-3);
    }

    #[test]
    fn compose_never_shrinks_epsilon() {
        let one = compose(0.1, 1e-4, 1, 1e-5).unwrap();
        assert!(one.epsilon_exact >= 0.1);
        let mut prev = 0.0;
        for t in [1u64, 2, 5, 10, 100, 1000] {
            let c = compose(0.1, 1e-4, t, 1e-5).unwrap();
            assert!(c.epsilon_exact > prev);
            prev = c.epsilon_exact;
        }
    }

    #[test]
    fn compose_small_epsilon_forms_agree() {
        let c = compose(1e-4, 1e-4, 100, 1e-4).unwrap();
        let rel = (c.epsilon_exact - c.epsilon_simplified).abs() / c.epsilon_simplified;
        assert!(rel < 0.01, "rel = {rel}");
    }

    #[test]
    fn exact_form_dominates_simplified_when_slacks_match() {
        for &eps in &[1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0] {
            for &t in &[1u64, 10, 100, 10_000] {
                for &delta in &[1e-6, 1e-4, 1e-2] {
                    let c = compose(eps, delta, t, delta).unwrap();
                    assert!(
                        c.epsilon_exact >= c.epsilon_simplified,
                        "eps={eps} t={t} delta={delta}"
                    );
                }
            }
        }
    }

    #[test]
    fn compose_t1_reduces_to_per_round() {
        let c = compose(0.2, 1e-3, 1, 1e-3).unwrap();
        assert!((c.delta_exact - 2e-3).abs() < 1e-18);
        assert!((c.delta_simplified - 1e-3).abs() < 1e-18);
        assert!(c.epsilon_exact >= 0.2);
    }

    #[test]
    fn min_bits_value_and_shifts() {
        let spec = PrivacySpec::new(3.44, 1e-4).unwrap();
        let bits = min_bits_for_privacy(&mnist_profile(), &spec);
        assert!((bits - 1.4944).abs() < 1e-3, "bits = {bits}");

        // Doubling eps*delta lowers the bound by exactly half a bit.
        let spec2 = PrivacySpec::new(2.0 * 3.44, 1e-4).unwrap();
        let bits2 = min_bits_for_privacy(&mnist_profile(), &spec2);
        assert!((bits - bits2 - 0.5).abs() < 1e-12);

        // Monotone in d, anti-monotone in |D|.
        let more_d = ClientDataProfile::new(15000, 32, 6000).unwrap();
        assert!(min_bits_for_privacy(&more_d, &spec) > bits);
        let more_n = ClientDataProfile::new(30000, 32, 3000).unwrap();
        assert!(min_bits_for_privacy(&more_n, &spec) < bits);
    }

    #[test]
    fn ledger_totals_are_exact_identities() {
        let mut ledger = PrivacyLedger::new();
        let (eps, delta) = (0.03, 1e-4);
        for round in 0..50 {
            ledger.record(round, eps, delta);
        }
        let totals = ledger.totals().unwrap();
        let t = 50.0f64;
        let simplified = (2.0 * t * (1.0f64 / delta).ln()).sqrt() * eps;
        assert_eq!(totals.epsilon_simplified, simplified);
        assert_eq!(totals.delta_simplified, t * delta);
        assert!(totals.epsilon_exact >= totals.epsilon_simplified);
    }

    #[test]
    fn ledger_csv_shape() {
        let mut ledger = PrivacyLedger::new();
        ledger.record(0, 0.1, 1e-4);
        ledger.record(1, 0.1, 1e-4);
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "round,eps_round,delta_round,eps_total_exact,eps_total_simplified,delta_total"
        );
        assert!(lines[1].starts_with("0,0.1,0.0001,"));
    }

    #[test]
    fn adjacency_warning_condition() {
        let profile = ClientDataProfile::new(1000, 32, 10).unwrap();
        assert!(adjacency_assumption_holds(&cfg(10, 5), &profile));
        assert!(!adjacency_assumption_holds(&cfg(16, 5), &profile));
    }
}
