//! Run-directory plumbing and a small deterministic thread pool.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Create the run directory layout: the directory itself plus
/// `checkpoints/` and `structures/`.
pub fn prepare_run_dir(out: &Path) -> Result<RunDir> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create run directory {}", out.display()))?;
    std::fs::create_dir_all(out.join("checkpoints"))?;
    std::fs::create_dir_all(out.join("structures"))?;
    Ok(RunDir {
        root: out.to_path_buf(),
    })
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(name)
    }

    pub fn structure(&self, name: &str) -> PathBuf {
        self.root.join("structures").join(name)
    }

    pub fn write_echo(&self, echo: &str) -> Result<()> {
        std::fs::write(self.file("config.echo"), echo)?;
        Ok(())
    }
}

/// Apply `job` to every index in 0..n on up to `threads` workers. Results
/// come back in index order, so output is identical at every thread count
/// (each job must derive its own RNG stream from its index).
pub fn parallel_map<T, F>(n: usize, threads: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(n.max(1));
    if threads <= 1 || n <= 1 {
        return (0..n).map(job).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_ptr = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = job(i);
                let mut guard = slots_ptr.lock().unwrap();
                guard[i] = Some(value);
            });
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}

/// Write CSV rows (already formatted) under a header. All float formatting
/// uses Rust's shortest round-trip representation for byte determinism.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order() {
        let out = parallel_map(17, 4, |i| i * i);
        assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn parallel_map_single_thread_matches() {
        let a = parallel_map(9, 1, |i| i + 1);
        let b = parallel_map(9, 3, |i| i + 1);
        assert_eq!(a, b);
    }
}
