use gradlab_core::experiments::RungMap;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Runs rungs on a rayon pool. Results come back in input order, so reports
/// do not depend on the thread count.
pub struct Parallel {
    pool: ThreadPool,
}

impl Parallel {
    /// `threads = 0` lets rayon choose.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl RungMap for Parallel {
    fn map<T: Send, R: Send>(&self, items: Vec<T>, f: &(dyn Fn(T) -> R + Sync)) -> Vec<R> {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}
