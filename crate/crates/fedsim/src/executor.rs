use fedspeed_core::simulator::ClientExecutor;
use rayon::prelude::*;

use crate::error::{FedsimError, Result};

/// Runs each round's local stages on a dedicated rayon pool. Results come
/// back in input order, so the thread count never changes the trajectory.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads = 0` lets rayon pick the number of cores.
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| FedsimError::config("--threads", e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ClientExecutor for RayonExecutor {
    fn map_clients<T, F>(&self, ids: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| ids.par_iter().map(|&id| f(id)).collect())
    }
}
