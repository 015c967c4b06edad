//! Binary epoch file format plus a structured-text metadata sidecar.
//!
//! Layout, all integers little-endian:
//!   8 bytes  magic "QEEG\x00\x01\x00\x00"
//!   u32      n_trials, n_channels, n_samples, n_classes
//!   f32      sample_rate
//!   u16[n]   labels, subject_ids, session_ids
//!   f32[...] epoch payload, trial-major then channel then sample
//!
//! Channel names, provenance, and the preprocessing log travel in a TOML
//! sidecar at `<path>.meta`; the sidecar is optional on load.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::EpochSet;
use crate::error::{Error, Result};

pub const EPOCH_MAGIC: [u8; 8] = *b"QEEG\x00\x01\x00\x00";

#[derive(Debug, Serialize, Deserialize)]
struct SidecarMeta {
    schema_version: u32,
    provenance: String,
    channel_names: Vec<String>,
    #[serde(default)]
    preprocessing_log: Vec<String>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    os.into()
}

pub fn save_epochs(path: &Path, set: &EpochSet) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&EPOCH_MAGIC)?;
    for dim in [set.n_trials, set.n_channels, set.n_samples, set.n_classes] {
        file.write_all(&(dim as u32).to_le_bytes())?;
    }
    file.write_all(&set.sample_rate.to_le_bytes())?;
    for arr in [&set.labels, &set.subject_ids, &set.session_ids] {
        for v in arr.iter() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    for v in &set.epochs {
        file.write_all(&(*v as f32).to_le_bytes())?;
    }
    file.flush()?;

    let meta = SidecarMeta {
        schema_version: 1,
        provenance: "qeegnet epoch writer".into(),
        channel_names: set.channel_names.clone(),
        preprocessing_log: set.preprocessing_log.clone(),
    };
    let text = toml::to_string_pretty(&meta)
        .map_err(|e| Error::Format(format!("sidecar serialization failed: {e}")))?;
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

fn read_exact_or_corrupt(file: &mut fs::File, buf: &mut [u8], what: &str) -> Result<()> {
    file.read_exact(buf).map_err(|_| {
        Error::Corruption(format!("epoch file truncated while reading {what}"))
    })
}

pub fn load_epochs(path: &Path) -> Result<EpochSet> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic header".into()))?;
    if magic != EPOCH_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:02x?}, expected {EPOCH_MAGIC:02x?}"
        )));
    }

    let mut u32buf = [0u8; 4];
    let mut dims = [0usize; 4];
    for (i, name) in ["n_trials", "n_channels", "n_samples", "n_classes"].iter().enumerate() {
        read_exact_or_corrupt(&mut file, &mut u32buf, name)?;
        dims[i] = u32::from_le_bytes(u32buf) as usize;
    }
    let [n_trials, n_channels, n_samples, n_classes] = dims;
    read_exact_or_corrupt(&mut file, &mut u32buf, "sample_rate")?;
    let sample_rate = f32::from_le_bytes(u32buf);

    let mut read_u16s = |what: &str| -> Result<Vec<u16>> {
        let mut out = Vec::with_capacity(n_trials);
        let mut b = [0u8; 2];
        for _ in 0..n_trials {
            read_exact_or_corrupt(&mut file, &mut b, what)?;
            out.push(u16::from_le_bytes(b));
        }
        Ok(out)
    };
    let labels = read_u16s("labels")?;
    let subject_ids = read_u16s("subject_ids")?;
    let session_ids = read_u16s("session_ids")?;

    let payload_len = n_trials * n_channels * n_samples;
    let mut epochs = Vec::with_capacity(payload_len);
    let mut f32buf = [0u8; 4];
    for _ in 0..payload_len {
        read_exact_or_corrupt(&mut file, &mut f32buf, "epoch payload")?;
        epochs.push(f32::from_le_bytes(f32buf) as f64);
    }
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(Error::Corruption("trailing bytes after epoch payload".into()));
    }

    let mut set = EpochSet::new(
        epochs,
        labels,
        subject_ids,
        session_ids,
        n_channels,
        n_samples,
        n_classes,
        sample_rate,
    )
    .map_err(|e| Error::Format(format!("inconsistent epoch header: {e}")))?;

    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = fs::read_to_string(&sidecar)?;
        let meta: SidecarMeta = toml::from_str(&text)
            .map_err(|e| Error::Format(format!("bad sidecar {}: {e}", sidecar.display())))?;
        if meta.channel_names.len() == n_channels {
            set.channel_names = meta.channel_names;
        }
        set.preprocessing_log = meta.preprocessing_log;
    }
    Ok(set)
}
