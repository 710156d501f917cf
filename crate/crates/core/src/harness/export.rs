//! Plot-data files: histogram TSVs, presence grid CSV and niche scatter.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::metrics::{write_file, write_signature, BehaviouralSignature};
use crate::qd::Archive;

pub fn export_signature(sig: &BehaviouralSignature, dir: &Path, prefix: &str) -> Result<()> {
    write_signature(sig, dir, prefix)
}

pub fn archive_scatter(archive: &Archive) -> String {
    let mut out = String::from("d0,d1,d2,d3,fitness\n");
    for (_, e) in archive.elites() {
        let d = e.descriptor.values();
        let _ = writeln!(out, "{},{},{},{},{}", d[0], d[1], d[2], d[3], e.fitness);
    }
    out
}

/// One row per filled niche: descriptor and fitness.
pub fn export_archive_scatter(archive: &Archive, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| crate::error::Error::io(parent, e))?;
    }
    write_file(path, &archive_scatter(archive))
}
