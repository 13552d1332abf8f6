//! Fixed-partition parallel map.
//!
//! Work is split into chunks whose boundaries do not depend on the thread
//! count, and results come back in chunk order, so any reduction the caller
//! performs is bit-identical whether one thread or many ran the chunks.

use std::thread;

/// Environment variable capping worker threads; `0` or unset means auto.
pub const THREADS_ENV: &str = "SIGNCRAFT_THREADS";

pub fn worker_threads() -> usize {
    let auto = || thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(0) | None => auto(),
        Some(n) => n,
    }
}

/// Applies `f` to every index in `0..n`, returning results in index order.
/// The first error (by index) wins.
pub fn map_indexed<R, E, F>(n: usize, threads: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<Result<R, E>>> = (0..n).map(|_| None).collect();
    thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                s.spawn(move || {
                    (w..n)
                        .step_by(threads)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}
