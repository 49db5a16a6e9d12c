use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use avfield::error::{Error, Result};

pub const LOCK_FILE: &str = ".avfield.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    /// Creates `dir` if needed and claims it. Fails if another run holds it.
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::Usage(format!(
                    "{} is in use by another run (delete {} if that run is gone)",
                    dir.display(),
                    path.display()
                ))
            } else {
                Error::Config(format!("cannot lock {}: {e}", dir.display()))
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_writer_is_refused_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let a = DirLock::acquire(&out).unwrap();
        assert!(matches!(DirLock::acquire(&out), Err(Error::Usage(_))));
        drop(a);
        assert!(!out.join(LOCK_FILE).exists());
        DirLock::acquire(&out).unwrap();
    }
}
