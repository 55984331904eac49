//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these fan out over rayon; without it
//! they run sequentially with identical results. Outputs preserve input order
//! either way, so reports merge deterministically.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always-sequential twin of [`map_collect`]; the benchmark baseline.
pub fn map_collect_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Caps the worker count for subsequent parallel sections. Returns the
/// effective number of workers (always 1 without the `parallel` feature).
pub fn configure_workers(workers: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            // Ignore the error if a global pool already exists; callers may
            // configure at most once per process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<i64> = (0..1000).collect();
        let ys = map_collect(&xs, |x| x * 2);
        let zs = map_collect_seq(&xs, |x| x * 2);
        assert_eq!(ys, zs);
        assert_eq!(ys[999], 1998);
    }
}
