//! Shared HTTP plumbing: a fixed-delay rate limiter and a retry loop.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct RateLimiter {
    delay: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(delay: Duration) -> Self {
        Self {
            delay,
            last: Mutex::new(None),
        }
    }

    /// Blocks until at least `delay` has passed since the previous call.
    pub fn wait(&self) {
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.delay {
                std::thread::sleep(self.delay - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Runs `op` until it succeeds, fails with a non-retryable error, or the
/// attempt budget is spent. Backoff doubles after each failed attempt.
pub fn with_retries<T>(policy: RetryPolicy, mut op: impl FnMut() -> Result<T>) -> Result<T> {
    let mut delay = policy.backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op() {
            Err(Error::Retryable { message, .. }) => {
                if attempt >= policy.max_attempts.max(1) {
                    return Err(Error::Retryable {
                        attempts: attempt,
                        message,
                    });
                }
                log::debug!("attempt {attempt} failed ({message}); retrying in {delay:?}");
                std::thread::sleep(delay);
                delay *= 2;
            }
            other => return other,
        }
    }
}

/// Whether an HTTP status should be retried rather than treated as final.
pub fn is_transient_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}
