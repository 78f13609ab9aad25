//! Probability of a positive Bloom test and the derived false-positive,
//! true-positive and true-negative estimates.
//!
//! Treating each of the `q = sum(Bz)` hash applications behind `Bz` as an
//! independent uniform draw over `m` positions, position `i` of `Bz`
//! receives `Binomial(q, 1/m)` increments. The test `By <= Bz` succeeds when
//! every position reaches its count threshold `By[i]`, so
//!
//! ```text
//! pr_p = prod_i ( 1 - sum_{l < By[i]} b(l, q, 1/m) )
//! ```
//!
//! For `q` above [`EXACT_CUTOFF`] the binomial is replaced by a Poisson with
//! mean `q / m`, whose CDF is a regularized upper incomplete gamma function.

mod gamma;

pub use gamma::{regularized_gamma_p, regularized_gamma_pair, regularized_gamma_q};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::clock::BloomClock;
use crate::error::{Error, Result};

/// Largest trial count evaluated by exact binomial summation.
pub const EXACT_CUTOFF: u64 = 1024;

const CLAMP_SLACK: f64 = 1e-12;

/// A real number in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    /// Accepts values within `1e-12` of `[0, 1]` and clamps them into range.
    pub fn new(value: f64) -> Result<Self> {
        if !(-CLAMP_SLACK..=1.0 + CLAMP_SLACK).contains(&value) {
            return Err(Error::Numeric(format!("probability out of range: {value}")));
        }
        Ok(Probability(value.clamp(0.0, 1.0)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// How the count-threshold sum is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMethod {
    /// Exact binomial up to [`EXACT_CUTOFF`] trials, Poisson above.
    #[default]
    Auto,
    Exact,
    Poisson,
}

fn check_width(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::config("clock width m must be at least 1"));
    }
    Ok(())
}

fn ln_choose(q: u64, l: u64) -> f64 {
    ln_gamma(q as f64 + 1.0) - ln_gamma(l as f64 + 1.0) - ln_gamma((q - l) as f64 + 1.0)
}

/// Binomial pmf `C(q, l) (1/m)^l (1 - 1/m)^(q - l)`, evaluated in log space.
pub fn binom_pmf(l: u64, q: u64, m: usize) -> Result<Probability> {
    check_width(m)?;
    if l > q {
        return Err(Error::domain(format!("binomial pmf needs l <= q, got l = {l}, q = {q}")));
    }
    if m == 1 {
        return Ok(if l == q { Probability::ONE } else { Probability::ZERO });
    }
    let p = 1.0 / m as f64;
    let ln = ln_choose(q, l) + l as f64 * p.ln() + (q - l) as f64 * (-p).ln_1p();
    Probability::new(ln.exp())
}

// Sum of pmf(l, q, 1/m) for l in lo..hi, walking the pmf recurrence in log space.
fn binom_range_sum(lo: u64, hi: u64, q: u64, m: usize) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    if m == 1 {
        return if (lo..hi).contains(&q) { 1.0 } else { 0.0 };
    }
    let p = 1.0 / m as f64;
    let ln_odds = p.ln() - (-p).ln_1p();
    let mut ln_pmf = ln_choose(q, lo) + lo as f64 * p.ln() + (q - lo) as f64 * (-p).ln_1p();
    let mut sum = 0.0;
    for l in lo..hi {
        sum += ln_pmf.exp();
        ln_pmf += ((q - l) as f64).ln() - ((l + 1) as f64).ln() + ln_odds;
    }
    sum
}

/// `(P(X < c), P(X >= c))` for `X ~ Binomial(q, 1/m)`, each side summed
/// directly when it is the smaller one.
fn exact_split(c: u64, q: u64, m: usize) -> (f64, f64) {
    if c == 0 {
        return (0.0, 1.0);
    }
    if c > q {
        return (1.0, 0.0);
    }
    let mean = q as f64 / m as f64;
    if (c as f64) <= mean {
        let below = binom_range_sum(0, c, q, m).min(1.0);
        (below, 1.0 - below)
    } else {
        let above = binom_range_sum(c, q + 1, q, m).min(1.0);
        (1.0 - above, above)
    }
}

fn poisson_split(c: u64, lambda: f64) -> Result<(f64, f64)> {
    if c == 0 {
        return Ok((0.0, 1.0));
    }
    if lambda == 0.0 {
        return Ok((1.0, 0.0));
    }
    // P(X <= c - 1) = Q(c, lambda) and P(X >= c) = P(c, lambda).
    let (p, q) = regularized_gamma_pair(c as f64, lambda)?;
    Ok((q, p))
}

fn threshold_split(c: u64, q: u64, m: usize, method: ThresholdMethod) -> Result<(f64, f64)> {
    check_width(m)?;
    let use_exact = match method {
        ThresholdMethod::Exact => true,
        ThresholdMethod::Poisson => false,
        ThresholdMethod::Auto => q <= EXACT_CUTOFF,
    };
    if use_exact {
        Ok(exact_split(c, q, m))
    } else if c > q && method == ThresholdMethod::Auto {
        Ok((1.0, 0.0))
    } else {
        poisson_split(c, q as f64 / m as f64)
    }
}

/// Probability that fewer than `c` of `q` uniform hash applications land
/// on a given position of a width-`m` clock.
pub fn count_threshold_cdf(c: u64, q: u64, m: usize) -> Result<Probability> {
    count_threshold_cdf_with(c, q, m, ThresholdMethod::Auto)
}

pub fn count_threshold_cdf_with(
    c: u64,
    q: u64,
    m: usize,
    method: ThresholdMethod,
) -> Result<Probability> {
    let (below, _) = threshold_split(c, q, m, method)?;
    Probability::new(below)
}

/// `P(X <= c - 1)` for `X ~ Poisson(lambda)`, i.e. `Q(c, lambda)`.
pub fn poisson_cdf_via_gamma(c: u64, lambda: f64) -> Result<Probability> {
    if c == 0 {
        return Err(Error::domain("poisson cdf needs a count threshold c >= 1"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::domain(format!("poisson mean must be finite and >= 0, got {lambda}")));
    }
    let (below, _) = poisson_split(c, lambda)?;
    Probability::new(below)
}

/// Probability that `Bz` dominates `By` under the uniform-hashing model.
pub fn pr_positive(by: &BloomClock, bz: &BloomClock) -> Result<Probability> {
    pr_positive_with(by, bz, ThresholdMethod::Auto)
}

pub fn pr_positive_with(
    by: &BloomClock,
    bz: &BloomClock,
    method: ThresholdMethod,
) -> Result<Probability> {
    let m = by.width();
    if m != bz.width() {
        return Err(Error::config(format!("bloom clock width mismatch: {m} vs {}", bz.width())));
    }
    check_width(m)?;
    let q = bz.sum();
    let mut ln_prod = 0.0;
    for &c in by.counters() {
        let (_, at_least) = threshold_split(c, q, m, method)?;
        if at_least <= 0.0 {
            return Ok(Probability::ZERO);
        }
        ln_prod += at_least.ln();
    }
    Probability::new(ln_prod.exp())
}

/// Step evaluation of a positive: 1 if `By <= Bz`, else 0.
pub fn pr_delta(by: &BloomClock, bz: &BloomClock) -> Result<u8> {
    Ok(u8::from(by.leq(bz)?))
}

/// Both families of outcome probabilities for one ordered pair.
///
/// The step variant gates on the exact test outcome; the smooth variant
/// uses `pr_p` in its place.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityReport {
    pub pr_p: Probability,
    pub pr_delta_p: u8,
    pub pr_fp_step: Probability,
    pub pr_tp_step: Probability,
    pub pr_tn_step: Probability,
    pub pr_fp_smooth: Probability,
    pub pr_tp_smooth: Probability,
    pub pr_tn_smooth: Probability,
}

impl ProbabilityReport {
    pub fn from_parts(pr_p: Probability, pr_delta_p: u8) -> Result<Self> {
        let p = pr_p.value();
        let delta = f64::from(pr_delta_p);
        Ok(ProbabilityReport {
            pr_p,
            pr_delta_p,
            pr_fp_step: Probability::new((1.0 - p) * delta)?,
            pr_tp_step: Probability::new(p * delta)?,
            pr_tn_step: Probability::new(1.0 - delta)?,
            pr_fp_smooth: Probability::new((1.0 - p) * p)?,
            pr_tp_smooth: Probability::new(p * p)?,
            pr_tn_smooth: Probability::new(1.0 - p)?,
        })
    }
}

pub fn classify_probabilities(by: &BloomClock, bz: &BloomClock) -> Result<ProbabilityReport> {
    let delta = pr_delta(by, bz)?;
    let pr_p = pr_positive(by, bz)?;
    ProbabilityReport::from_parts(pr_p, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bc(v: &[u64]) -> BloomClock {
        BloomClock::from_counters(v.to_vec())
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn probability_clamps_slack_only() {
        assert_eq!(Probability::new(1.0 + 5e-13).unwrap().value(), 1.0);
        assert_eq!(Probability::new(-5e-13).unwrap().value(), 0.0);
        assert!(Probability::new(1.01).is_err());
        assert!(Probability::new(f64::NAN).is_err());
    }

    #[test]
    fn pmf_examples() {
        assert!(close(binom_pmf(0, 0, 8).unwrap().value(), 1.0, 1e-15));
        assert!(close(binom_pmf(0, 3, 2).unwrap().value(), 0.125, 1e-15));
        let total: f64 = (0..=20).map(|l| binom_pmf(l, 20, 5).unwrap().value()).sum();
        assert!(close(total, 1.0, 1e-12));
        assert!(matches!(binom_pmf(4, 3, 2), Err(Error::Domain(_))));
        assert_eq!(binom_pmf(3, 3, 1).unwrap().value(), 1.0);
        assert_eq!(binom_pmf(2, 3, 1).unwrap().value(), 0.0);
    }

    #[test]
    fn threshold_examples() {
        for q in [0, 1, 7, 2000] {
            assert_eq!(count_threshold_cdf(0, q, 4).unwrap().value(), 0.0);
        }
        for q in [0, 3, 40, 1024] {
            assert!(close(count_threshold_cdf(q + 1, q, 6).unwrap().value(), 1.0, 1e-12));
        }
        assert!(close(count_threshold_cdf(2, 3, 2).unwrap().value(), 0.5, 1e-12));
    }

    #[test]
    fn threshold_matches_pmf_sum() {
        for (c, q, m) in [(3, 30, 10), (12, 30, 3), (40, 100, 2), (1, 5, 1), (6, 5, 1)] {
            let direct: f64 = (0..c.min(q + 1)).map(|l| binom_pmf(l, q, m).unwrap().value()).sum();
            let got = count_threshold_cdf_with(c, q, m, ThresholdMethod::Exact).unwrap().value();
            assert!(close(got, direct, 1e-12), "c={c} q={q} m={m}: {got} vs {direct}");
        }
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_cdf_via_gamma(1, 0.0).unwrap().value(), 1.0);
        assert!(close(poisson_cdf_via_gamma(1, 1.0).unwrap().value(), (-1.0f64).exp(), 1e-14));
        assert!(matches!(poisson_cdf_via_gamma(0, 1.0), Err(Error::Domain(_))));
        assert!(poisson_cdf_via_gamma(2, -1.0).is_err());
    }

    #[test]
    fn poisson_tracks_binomial_for_q500_m50() {
        let worst = (1..=40)
            .map(|c| {
                let exact = count_threshold_cdf_with(c, 500, 50, ThresholdMethod::Exact).unwrap();
                let pois = poisson_cdf_via_gamma(c, 10.0).unwrap();
                (exact.value() - pois.value()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.01, "max deviation {worst}");
    }

    #[test]
    fn pr_positive_examples() {
        assert_eq!(pr_positive(&bc(&[0, 0, 0]), &bc(&[1, 4, 0])).unwrap().value(), 1.0);
        // each factor is 1 - P(X = 0) with X ~ Binomial(2, 1/2)
        let p = pr_positive(&bc(&[1, 1]), &bc(&[1, 1])).unwrap().value();
        assert!(close(p, 0.5625, 1e-15));
        assert!(matches!(pr_positive(&bc(&[1]), &bc(&[1, 1])), Err(Error::Config(_))));
        // a threshold above the trial count is unreachable
        assert_eq!(pr_positive(&bc(&[3, 0]), &bc(&[1, 1])).unwrap().value(), 0.0);
    }

    #[test]
    fn pr_delta_examples() {
        assert_eq!(pr_delta(&bc(&[0, 0]), &bc(&[0, 0])).unwrap(), 1);
        assert_eq!(pr_delta(&bc(&[3, 0]), &bc(&[2, 9])).unwrap(), 0);
    }

    #[test]
    fn report_examples() {
        let r = classify_probabilities(&bc(&[0, 0]), &bc(&[5, 2])).unwrap();
        assert_eq!(r.pr_p.value(), 1.0);
        assert_eq!(r.pr_fp_step.value(), 0.0);
        assert_eq!(r.pr_tp_step.value(), 1.0);
        assert_eq!(r.pr_tn_step.value(), 0.0);

        let half = ProbabilityReport::from_parts(Probability::new(0.5).unwrap(), 1).unwrap();
        assert_eq!(half.pr_fp_smooth.value(), 0.25);

        let gated = ProbabilityReport::from_parts(Probability::new(0.3).unwrap(), 0).unwrap();
        assert_eq!(gated.pr_fp_step.value(), 0.0);
        assert_eq!(gated.pr_tn_step.value(), 1.0);
    }

    fn report_strategy() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
        (1usize..12).prop_flat_map(|m| {
            (
                proptest::collection::vec(0u64..60, m),
                proptest::collection::vec(0u64..400, m),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn report_invariants((y, z) in report_strategy()) {
            let r = classify_probabilities(&bc(&y), &bc(&z)).unwrap();
            let p = r.pr_p.value();
            let d = f64::from(r.pr_delta_p);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(r.pr_fp_step.value(), (1.0 - p) * d);
            prop_assert_eq!(r.pr_tp_step.value(), p * d);
            prop_assert_eq!(r.pr_tn_step.value(), 1.0 - d);
            prop_assert!(r.pr_fp_smooth.value() <= 0.25);
            prop_assert_eq!(r.pr_tp_smooth.value(), p * p);
            prop_assert_eq!(r.pr_tn_smooth.value(), 1.0 - p);
            let total = r.pr_tp_step.value() + r.pr_fp_step.value() + r.pr_tn_step.value();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert_eq!(r.pr_delta_p, u8::from(bc(&y).leq(&bc(&z)).unwrap()));
        }

        #[test]
        fn pr_positive_monotone_in_trials(
            y in proptest::collection::vec(0u64..30, 1..10),
            q1 in 0u64..1024,
            extra in 0u64..512,
        ) {
            // Both trial counts stay on the exact side of the cutoff.
            let m = y.len();
            let q2 = (q1 + extra).min(EXACT_CUTOFF);
            let mut z1 = vec![0; m];
            z1[0] = q1;
            let mut z2 = vec![0; m];
            z2[0] = q2;
            let lo = pr_positive(&bc(&y), &bc(&z1)).unwrap().value();
            let hi = pr_positive(&bc(&y), &bc(&z2)).unwrap().value();
            prop_assert!(hi >= lo - 1e-12, "q {q1}->{q2}: {lo} > {hi}");
        }

        #[test]
        fn pr_positive_antitone_in_threshold(
            y in proptest::collection::vec(0u64..30, 1..10),
            q in 0u64..3000,
            bump_at in 0usize..10,
        ) {
            let m = y.len();
            let mut z = vec![0; m];
            z[0] = q;
            let mut y2 = y.clone();
            y2[bump_at % m] += 1;
            let base = pr_positive(&bc(&y), &bc(&z)).unwrap().value();
            let bumped = pr_positive(&bc(&y2), &bc(&z)).unwrap().value();
            prop_assert!(bumped <= base + 1e-12);
        }
    }
}
