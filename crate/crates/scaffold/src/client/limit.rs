//! Blocking token-bucket rate limiter and counting semaphore.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

struct BucketState {
    tokens: f64,
    last: Instant,
}

/// Token bucket with capacity one burst token; `acquire` blocks until a
/// token is available.
pub struct RateLimiter {
    per_second: f64,
    state: Mutex<BucketState>,
}

impl RateLimiter {
    pub fn per_second(per_second: f64) -> Self {
        RateLimiter {
            per_second: per_second.max(1e-6),
            state: Mutex::new(BucketState {
                tokens: 1.0,
                last: Instant::now(),
            }),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("limiter lock");
                let now = Instant::now();
                s.tokens = (s.tokens + now.duration_since(s.last).as_secs_f64() * self.per_second)
                    .min(1.0);
                s.last = now;
                if s.tokens >= 1.0 {
                    s.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - s.tokens) / self.per_second)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Counting semaphore bounding in-flight provider calls.
pub struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

pub struct SemaphorePermit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphorePermit<'_> {
        let mut count = self.permits.lock().expect("semaphore lock");
        while *count == 0 {
            count = self.available.wait(count).expect("semaphore wait");
        }
        *count -= 1;
        SemaphorePermit { sem: self }
    }
}

impl Drop for SemaphorePermit<'_> {
    fn drop(&mut self) {
        let mut count = self.sem.permits.lock().expect("semaphore lock");
        *count += 1;
        self.sem.available.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limiter_spaces_acquisitions() {
        let limiter = RateLimiter::per_second(50.0);
        let start = Instant::now();
        limiter.acquire(); // burst token
        limiter.acquire();
        limiter.acquire();
        // Two refills at 20ms apiece.
        assert!(start.elapsed() >= Duration::from_millis(30));
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        let sem = Arc::new(Semaphore::new(2));
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let (sem, current, peak) = (sem.clone(), current.clone(), peak.clone());
            handles.push(std::thread::spawn(move || {
                let _permit = sem.acquire();
                let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                current.fetch_sub(1, Ordering::SeqCst);
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
