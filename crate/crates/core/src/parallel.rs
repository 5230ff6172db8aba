//! Replication-level parallelism.
//!
//! Each replication draws from its own noise coordinates, so results do not
//! depend on scheduling. Outputs are always returned in replication order.

use rayon::prelude::*;

use crate::error::Result;

pub const DETERMINISTIC_ENV: &str = "CMKV_DETERMINISTIC";

/// True when `CMKV_DETERMINISTIC=1` asks for single-threaded execution.
pub fn deterministic_mode() -> bool {
    std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v.trim() == "1")
}

/// `f(0), …, f(reps - 1)`, in parallel unless deterministic mode is on.
pub fn map_replications<T, F>(reps: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if deterministic_mode() {
        (0..reps).map(f).collect()
    } else {
        (0..reps).into_par_iter().map(f).collect()
    }
}
