//! Deterministic fan-out over agents.

use std::sync::Arc;

use rayon::prelude::*;

/// Runs per-agent work either inline or on a fixed rayon pool. Results are
/// always returned in agent order, so both paths give identical output.
#[derive(Clone, Default)]
pub struct Executor {
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Executor({} workers)", self.workers())
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self { pool: None }
    }

    /// `workers <= 1` means sequential.
    pub fn with_workers(workers: usize) -> Result<Self, String> {
        if workers <= 1 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            pool: Some(Arc::new(pool)),
        })
    }

    /// Reads `DISTDDP_WORKERS`, defaulting to sequential.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var("DISTDDP_WORKERS") {
            Ok(v) => Self::with_workers(
                v.trim()
                    .parse()
                    .map_err(|_| format!("DISTDDP_WORKERS={v:?} is not a count"))?,
            ),
            Err(_) => Ok(Self::sequential()),
        }
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let e = Executor::with_workers(3).unwrap();
        assert_eq!(
            e.map(10, |i| i * i),
            (0..10).map(|i| i * i).collect::<Vec<_>>()
        );
        assert_eq!(Executor::with_workers(0).unwrap().workers(), 1);
    }
}
