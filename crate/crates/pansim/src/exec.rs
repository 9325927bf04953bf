//! Scoped-thread executor for independent training jobs.

use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pansim_core::pipeline::{Executor, Job};

/// Runs jobs on up to `threads` scoped threads. Job `i`'s result lands in
/// slot `i`, so output order never depends on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct Threads {
    pub threads: usize,
}

impl Threads {
    pub fn new(threads: usize) -> Self {
        Threads { threads: threads.max(1) }
    }

    /// One thread per available core.
    pub fn available() -> Self {
        Threads::new(std::thread::available_parallelism().map_or(1, NonZeroUsize::get))
    }
}

impl Executor for Threads {
    fn run<'a, T: Send + 'a>(&self, jobs: Vec<Job<'a, T>>) -> Vec<T> {
        let n = jobs.len();
        if self.threads == 1 || n <= 1 {
            return jobs.into_iter().map(|j| j()).collect();
        }
        let queue: Vec<Mutex<Option<Job<'a, T>>>> = jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
        let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.threads.min(n) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let job = queue[i].lock().expect("job lock").take().expect("each job taken once");
                    let out = job();
                    *slots[i].lock().expect("slot lock") = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pansim_core::pipeline::Sequential;

    #[test]
    fn results_keep_job_order() {
        let jobs = |k: u64| -> Vec<Job<'static, u64>> {
            (0..k)
                .map(|i| -> Job<'static, u64> {
                    Box::new(move || {
                        std::thread::sleep(std::time::Duration::from_millis((k - i) % 3));
                        i * i
                    })
                })
                .collect()
        };
        let want = Sequential.run(jobs(17));
        for t in [1, 2, 4, 32] {
            assert_eq!(Threads::new(t).run(jobs(17)), want);
        }
        assert!(Threads::new(3).run(jobs(0)).is_empty());
    }
}
