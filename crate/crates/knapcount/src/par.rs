//! Order-preserving parallel map over draw indices.

/// `f(0), ..., f(count - 1)` computed on up to `threads` scoped threads.
pub fn par_map<T, F>(count: u64, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let threads = threads.max(1).min(count.max(1) as usize);
    if threads == 1 {
        return (0..count).map(&f).collect();
    }
    let chunk = count.div_ceil(threads as u64);
    let f = &f;
    std::thread::scope(|sc| {
        let handles: Vec<_> = (0..threads as u64)
            .map(|t| {
                let lo = (t * chunk).min(count);
                let hi = ((t + 1) * chunk).min(count);
                sc.spawn(move || (lo..hi).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}
