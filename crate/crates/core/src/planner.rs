//! Closed-form (s, m) planner under joint communication and privacy
//! constraints.
//!
//! For a bit budget b and privacy ratio R = delta eps |D|^2 / (6.4 d L),
//! the continuous optimum is
//!
//!   s* = R sqrt(R^2 + (2^b - 1)) - R^2,
//!   m* = s*^2 / R^2 = (2^b - 1) + 2 R^2 - 2 R sqrt(R^2 + (2^b - 1)),
//!
//! integerized as s = max(1, round-half-up(s*)), m = floor(m*), with m
//! decremented if needed so the alphabet fits: 2s + m + 1 <= 2^b. The
//! achieved epsilon is then re-derived from the exact accountant rather
//! than assumed equal to the target.

use crate::codec::{self, BqConfig};
use crate::privacy::{
    self, ClientDataProfile, PrivacySpec,
};

/// A solved codec parameterization plus the budgets it was derived from and
/// the guarantees it actually achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plan {
    pub s: u32,
    pub m: u32,
    /// Privacy ratio R used by the continuous solution.
    pub ratio: f64,
    pub bit_budget: u32,
    /// ceil(log2(2s + m + 1)), the payload width actually needed.
    pub width_bits: u32,
    /// Exact-P_max epsilon re-derived from the integer plan; infinite when
    /// m = 0 (no guarantee).
    pub achieved_epsilon: f64,
    /// The Remark-style Gaussian-approximation epsilon; infinite when m = 0.
    pub gaussian_epsilon: f64,
    /// Normalized noise variance V(m, 1/2, s).
    pub variance: f64,
    pub feasible: bool,
    /// Remark-2 lower bound on the width.
    pub min_bits: f64,
    /// s* rounded to zero and was clamped up to 1.
    pub clamped_s: bool,
    /// m was decremented to satisfy the communication constraint.
    pub capped_m: bool,
}

impl Plan {
    pub fn alphabet_size(&self) -> u64 {
        2 * u64::from(self.s) + u64::from(self.m) + 1
    }

    pub fn has_privacy_guarantee(&self) -> bool {
        self.m > 0
    }

    /// The codec this plan parameterizes, at a given clip bound.
    pub fn to_config(&self, clip_bound: f64) -> crate::error::Result<BqConfig> {
        BqConfig::new(clip_bound, self.s, self.m)
    }
}

/// R = delta eps |D|^2 / (6.4 d L), the scalar the closed form depends on.
pub fn privacy_ratio(profile: &ClientDataProfile, spec: &PrivacySpec) -> f64 {
    let n = profile.dataset_size as f64;
    spec.delta_target * spec.epsilon_target * n * n
        / (6.4 * profile.privacy_dimension as f64 * profile.batch_size as f64)
}

/// Continuous optimum (s*, m*) before integerization.
pub fn continuous_solution(ratio: f64, bit_budget: u32) -> (f64, f64) {
    let budget = (2.0f64).powi(bit_budget as i32) - 1.0;
    let root = (ratio * ratio + budget).sqrt();
    let s_star = ratio * root - ratio * ratio;
    let m_star = budget + 2.0 * ratio * ratio - 2.0 * ratio * root;
    (s_star, m_star)
}

fn ceil_log2(n: u64) -> u32 {
    debug_assert!(n >= 1);
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Solve for the integer plan at the given bit budget.
pub fn solve(profile: &ClientDataProfile, spec: &PrivacySpec, bit_budget: u32) -> Plan {
    let ratio = privacy_ratio(profile, spec);
    let min_bits = privacy::min_bits_for_privacy(profile, spec);
    let (s_star, m_star) = continuous_solution(ratio, bit_budget);

    let mut plan = Plan {
        s: 0,
        m: 0,
        ratio,
        bit_budget,
        width_bits: 0,
        achieved_epsilon: f64::INFINITY,
        gaussian_epsilon: f64::INFINITY,
        variance: f64::NAN,
        feasible: false,
        min_bits,
        clamped_s: false,
        capped_m: false,
    };

    if f64::from(bit_budget) < min_bits.ceil() {
        return plan;
    }

    let rounded_s = (s_star + 0.5).floor();
    plan.clamped_s = rounded_s < 1.0;
    let s = rounded_s.max(1.0) as u32;

    // Communication cap on m for this s; negative means even m = 0 cannot
    // fit the alphabet in the budget.
    let cap = (2.0f64).powi(bit_budget as i32) - 1.0 - 2.0 * f64::from(s);
    if cap < 0.0 {
        return plan;
    }
    let m_floor = m_star.max(0.0).floor();
    plan.capped_m = m_floor > cap;
    let m = m_floor.min(cap) as u32;

    plan.s = s;
    plan.m = m;
    plan.width_bits = ceil_log2(2 * u64::from(s) + u64::from(m) + 1);
    plan.feasible = true;
    debug_assert!(plan.alphabet_size() <= 1u64 << bit_budget);

    let config = BqConfig::new(1.0, s, m).expect("s >= 1");
    plan.variance = codec::noise_variance(&config);
    if m > 0 {
        plan.achieved_epsilon =
            privacy::per_round_privacy(&config, profile, spec.delta_target)
                .expect("m > 0 has a finite epsilon");
        plan.gaussian_epsilon =
            privacy::per_round_privacy_gaussian(&config, profile, spec.delta_target)
                .expect("m > 0 has a finite epsilon");
    }
    plan
}

/// Normalized variance of a solved plan, V(m, 1/2, s).
pub fn variance_of_plan(plan: &Plan) -> f64 {
    plan.variance
}
