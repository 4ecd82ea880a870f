use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

fn staging(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!(".{name}.{}.tmp", std::process::id()))
}

/// Writes every file to a temporary name first and renames them into place
/// only once all writes succeeded.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>, CliError> {
    let fail = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Write { path, source }
    };
    fs::create_dir_all(dir).map_err(fail(dir))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let tmp = staging(dir, name);
        if let Err(err) = fs::write(&tmp, contents) {
            for t in staged.iter().chain(std::iter::once(&tmp)) {
                let _ = fs::remove_file(t);
            }
            return Err(fail(&tmp)(err));
        }
        staged.push(tmp);
    }
    let mut written = Vec::with_capacity(files.len());
    for ((name, _), tmp) in files.iter().zip(&staged) {
        let target = dir.join(name);
        if let Err(err) = fs::rename(tmp, &target) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(fail(&target)(err));
        }
        written.push(target);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_and_leaves_no_staging_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        let files = vec![("a.txt".to_string(), "1\n".to_string()), ("b.csv".to_string(), "x\n".to_string())];
        let written = write_all(&out, &files).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "1\n");
        let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }
}
