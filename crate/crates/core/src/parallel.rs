use rayon::prelude::*;

/// Map `f` over `items` on up to `workers` threads, keeping input order.
///
/// Falls back to a sequential loop for a single worker or when the backend
/// behind `f` is not reentrant.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, reentrant: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers <= 1 || !reentrant || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}
