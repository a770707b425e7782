//! Binary container for precomputed features.
//!
//! Little-endian layout: `b"LCPF"`, `u32` version, `u64` n, `u64` d,
//! `u64` K, `u64` power count, one `u64` per power, then one row-major
//! `n × d` f64 matrix per power in listed order. A text manifest
//! (`<file>.manifest`) records the dataset hash and decomposition plan.

use super::{DecompositionPlan, PrecomputedFeatures};
use crate::dense::DenseMatrix;
use crate::io::DataError;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const LCPF_MAGIC: &[u8; 4] = b"LCPF";
pub const LCPF_VERSION: u32 = 1;

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn write_lcpf(path: &Path, pf: &PrecomputedFeatures, plan: &DecompositionPlan) -> Result<PathBuf, DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(LCPF_MAGIC);
    buf.extend_from_slice(&LCPF_VERSION.to_le_bytes());
    for v in [pf.n, pf.d, pf.k_max as usize, pf.per_power.len()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &k in pf.per_power.keys() {
        buf.extend_from_slice(&u64::from(k).to_le_bytes());
    }
    for m in pf.per_power.values() {
        for v in m.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(io)?;

    let powers: Vec<String> = pf.per_power.keys().map(u32::to_string).collect();
    let manifest = format!(
        "format = \"LCPF\"\nversion = {LCPF_VERSION}\ndataset_hash = \"{}\"\nn = {}\nd = {}\nk = {}\npowers = \"{}\"\nplan = \"{}\"\n",
        pf.dataset_hash,
        pf.n,
        pf.d,
        pf.k_max,
        powers.join(","),
        plan
    );
    let mpath = manifest_path(path);
    fs::write(&mpath, manifest).map_err(|source| DataError::Io {
        path: mpath.clone(),
        source,
    })?;
    Ok(mpath)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DataError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DataError::Format {
                path: self.path.to_path_buf(),
                msg: format!("truncated at byte {}", self.pos),
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_lcpf(path: &Path) -> Result<PrecomputedFeatures, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: String| DataError::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != LCPF_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != LCPF_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = r.u64()? as usize;
    let d = r.u64()? as usize;
    let k_max = r.u64()? as u32;
    let count = r.u64()? as usize;
    if count > bytes.len() / 8 {
        return Err(bad(format!("implausible power count {count}")));
    }
    let powers = (0..count)
        .map(|_| r.u64().map(|k| k as u32))
        .collect::<Result<Vec<_>, _>>()?;
    let mut per_power = BTreeMap::new();
    for k in powers {
        let raw = r.take(
            n.checked_mul(d)
                .and_then(|v| v.checked_mul(8))
                .ok_or_else(|| bad("size overflow".into()))?,
        )?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        per_power.insert(k, DenseMatrix::from_vec(n, d, values).expect("length matches"));
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let dataset_hash = fs::read_to_string(manifest_path(path))
        .ok()
        .and_then(|m| {
            m.lines().find_map(|l| {
                let (key, val) = l.split_once('=')?;
                (key.trim() == "dataset_hash").then(|| val.trim().trim_matches('"').to_string())
            })
        })
        .unwrap_or_default();
    Ok(PrecomputedFeatures {
        per_power,
        n,
        d,
        k_max,
        dataset_hash,
    })
}
