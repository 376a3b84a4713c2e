//! Plain-text oracle cache.
//!
//! One record per line, tab separated:
//! `key  method  certified_digits  k_re,k_im;k_re,k_im;...`.
//! Floats are written in shortest round-trip form so reloaded values are
//! bit-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::{KRect, OracleMethod, OracleResult};
use crate::potentials::PotentialKind;
use crate::{Error, Result};

pub fn cache_key(kind: &PotentialKind, region: &KRect) -> String {
    let params = match *kind {
        PotentialKind::Free => "free".to_string(),
        PotentialKind::SquareWell { v0, a } => format!("square_well V0={v0:?} a={a:?}"),
        PotentialKind::GaussianBump { v0, sigma } => format!("gaussian_bump V0={v0:?} sigma={sigma:?}"),
        PotentialKind::PoschlTeller { v0 } => format!("poschl_teller V0={v0:?}"),
    };
    format!(
        "{params} k=[{:?},{:?}]x[{:?},{:?}]",
        region.re_min, region.re_max, region.im_min, region.im_max
    )
}

#[derive(Debug, Clone, Default)]
pub struct OracleCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, OracleResult>,
}

impl OracleCache {
    pub fn in_memory() -> Self {
        OracleCache::default()
    }

    /// Opens (or starts) the cache file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::InvalidInput(format!("cannot read oracle cache {}: {e}", path.display())))?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, rec) = parse_line(line)
                    .ok_or_else(|| Error::InvalidInput(format!("{}:{}: malformed cache line", path.display(), n + 1)))?;
                entries.insert(key, rec);
            }
        }
        Ok(OracleCache {
            path: Some(path),
            entries,
        })
    }

    pub fn get(&self, key: &str) -> Option<&OracleResult> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: String, result: OracleResult) -> Result<()> {
        self.entries.insert(key, result);
        self.flush()
    }

    /// Cached value or a fresh root search.
    pub fn find_resonances(&mut self, kind: &PotentialKind, region: &KRect) -> Result<OracleResult> {
        let key = cache_key(kind, region);
        if let Some(hit) = self.entries.get(&key) {
            return Ok(hit.clone());
        }
        let fresh = super::find_resonances(kind, region)?;
        self.insert(key, fresh.clone())?;
        Ok(fresh)
    }

    fn flush(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut out = String::from("# key\tmethod\tcertified_digits\tk values (re,im;...)\n");
        for (key, rec) in &self.entries {
            let method = match rec.method {
                OracleMethod::ClosedForm => "closed_form",
                OracleMethod::DeterminantRoots => "determinant_roots",
            };
            let ks: Vec<String> = rec.k_values.iter().map(|k| format!("{:?},{:?}", k.re, k.im)).collect();
            out.push_str(&format!("{key}\t{method}\t{}\t{}\n", rec.certified_digits, ks.join(";")));
        }
        fs::write(path, out).map_err(|e| Error::InvalidInput(format!("cannot write oracle cache {}: {e}", path.display())))
    }
}

fn parse_line(line: &str) -> Option<(String, OracleResult)> {
    let mut cols = line.split('\t');
    let key = cols.next()?.to_string();
    let method = match cols.next()? {
        "closed_form" => OracleMethod::ClosedForm,
        "determinant_roots" => OracleMethod::DeterminantRoots,
        _ => return None,
    };
    let certified_digits = cols.next()?.parse().ok()?;
    let ks = cols.next().unwrap_or("");
    let mut k_values = Vec::new();
    for pair in ks.split(';').filter(|s| !s.is_empty()) {
        let (re, im) = pair.split_once(',')?;
        k_values.push(Complex64::new(re.parse().ok()?, im.parse().ok()?));
    }
    let values = k_values.iter().map(|k| k * k).collect();
    Some((
        key,
        OracleResult {
            values,
            k_values,
            method,
            certified_digits,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_file() {
        let dir = std::env::temp_dir().join(format!("capres-cache-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("oracle.tsv");
        let _ = fs::remove_file(&path);
        let kind = PotentialKind::PoschlTeller { v0: 4.0 };
        let region = KRect::new(0.5, 3.0, -1.0, -0.1).unwrap();
        let mut cache = OracleCache::open(&path).unwrap();
        let fresh = cache.find_resonances(&kind, &region).unwrap();
        assert_eq!(fresh.values.len(), 1);
        let reopened = OracleCache::open(&path).unwrap();
        let hit = reopened.get(&cache_key(&kind, &region)).unwrap();
        assert_eq!(hit, &fresh);
        fs::remove_dir_all(&dir).unwrap();
    }
}
