use std::time::Duration;

use rand::Rng;

/// Exponential backoff: the n-th retry waits `base * 2^n`. With jitter
/// enabled the wait is drawn uniformly from `[0, base * 2^n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub max_retries: u32,
    pub jitter: bool,
}

impl RetryPolicy {
    pub fn new(base: Duration, max_retries: u32, jitter: bool) -> Self {
        RetryPolicy {
            base,
            max_retries,
            jitter,
        }
    }

    /// Nominal delay before retry `n` (0-based), without jitter.
    pub fn nominal_delay(&self, n: u32) -> Duration {
        self.base.saturating_mul(1u32.checked_shl(n).unwrap_or(u32::MAX))
    }

    /// The full nominal schedule, one entry per permitted retry.
    pub fn schedule(&self) -> Vec<Duration> {
        (0..self.max_retries).map(|n| self.nominal_delay(n)).collect()
    }

    pub fn delay(&self, n: u32) -> Duration {
        let nominal = self.nominal_delay(n);
        if !self.jitter || nominal.is_zero() {
            return nominal;
        }
        let nanos = rand::thread_rng().gen_range(0..=nominal.as_nanos() as u64);
        Duration::from_nanos(nanos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_doubles_from_base() {
        let policy = RetryPolicy::new(Duration::from_millis(500), 3, false);
        assert_eq!(
            policy.schedule(),
            vec![
                Duration::from_millis(500),
                Duration::from_millis(1000),
                Duration::from_millis(2000)
            ]
        );
        assert!(RetryPolicy::new(Duration::from_millis(500), 0, false)
            .schedule()
            .is_empty());
    }

    #[test]
    fn jitter_stays_under_nominal() {
        let policy = RetryPolicy::new(Duration::from_millis(10), 4, true);
        for n in 0..4 {
            assert!(policy.delay(n) <= policy.nominal_delay(n));
        }
    }
}
