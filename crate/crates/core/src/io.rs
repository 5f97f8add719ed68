use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DistError, Result};

/// Write `bytes` to a sibling temp file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| DistError::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp).map_err(|e| DistError::io(tmp, e))?;
        f.write_all(bytes).map_err(|e| DistError::io(tmp, e))?;
        f.sync_all().map_err(|e| DistError::io(tmp, e))?;
    }
    fs::rename(tmp, path).map_err(|e| DistError::io(path, e))
}
