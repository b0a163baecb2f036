//! Thread pool for the blocked kernels.

use std::sync::Arc;

use inferbench_core::kernels::optimized::Parallel;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuildError, ThreadPoolBuilder};

/// Spreads kernel chunks over a fixed rayon pool. Chunks are independent,
/// so results do not depend on the thread count.
#[derive(Clone)]
pub struct Pool {
    pool: Arc<ThreadPool>,
    threads: usize,
}

impl Pool {
    pub fn new(threads: usize) -> Result<Self, ThreadPoolBuildError> {
        let threads = threads.max(1);
        let pool = ThreadPoolBuilder::new().num_threads(threads).thread_name(|i| format!("kernel-{i}")).build()?;
        Ok(Self { pool: Arc::new(pool), threads })
    }
}

impl std::fmt::Debug for Pool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pool").field("threads", &self.threads).finish()
    }
}

impl Parallel for Pool {
    fn for_each_chunk<T, F>(&self, out: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync,
    {
        if self.threads == 1 {
            out.chunks_mut(chunk_len.max(1)).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
        self.pool.install(|| out.par_chunks_mut(chunk_len.max(1)).enumerate().for_each(|(i, c)| f(i, c)));
    }

    fn threads(&self) -> usize {
        self.threads
    }
}
