//! Persisted per-operator demarcations (`demarcations.json` in the drill
//! output directory).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use celldrill_core::DemarcationRect;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const STORE_FILE: &str = "demarcations.json";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDemarcation {
    pub demarcation: DemarcationRect,
    pub committed_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct StoreFile {
    schema_version: u32,
    demarcations: BTreeMap<u32, StoredDemarcation>,
}

/// At most one committed demarcation per operator. Readers share the lock;
/// writers are serialized and the in-memory map only changes after the file
/// has been replaced on disk.
#[derive(Debug)]
pub struct DemarcationStore {
    path: PathBuf,
    entries: RwLock<BTreeMap<u32, StoredDemarcation>>,
}

impl DemarcationStore {
    pub fn open(dir: &Path) -> io::Result<Self> {
        let path = dir.join(STORE_FILE);
        let entries = match fs::read_to_string(&path) {
            Ok(text) => {
                let file: StoreFile =
                    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                file.demarcations
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            path,
            entries: RwLock::new(entries),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, mnc: u32) -> Option<StoredDemarcation> {
        self.entries.read().expect("store lock").get(&mnc).cloned()
    }

    pub fn all(&self) -> BTreeMap<u32, StoredDemarcation> {
        self.entries.read().expect("store lock").clone()
    }

    /// Replaces the operator's demarcation. Last writer wins.
    pub fn commit(&self, entry: StoredDemarcation) -> io::Result<()> {
        let mut guard = self.entries.write().expect("store lock");
        let mut next = guard.clone();
        next.insert(entry.demarcation.mnc, entry);
        self.persist(&next)?;
        *guard = next;
        Ok(())
    }

    fn persist(&self, entries: &BTreeMap<u32, StoredDemarcation>) -> io::Result<()> {
        let file = StoreFile {
            schema_version: STORE_VERSION,
            demarcations: entries.clone(),
        };
        let mut body = serde_json::to_vec_pretty(&file).map_err(io::Error::other)?;
        body.push(b'\n');
        let tmp = self.path.with_extension("json.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use celldrill_core::geo::{GeoRect, RectSource};

    fn entry(mnc: u32, lat_max: f64) -> StoredDemarcation {
        let rect = GeoRect::new(40.0, lat_max, -3.7, -3.6).unwrap();
        StoredDemarcation {
            demarcation: DemarcationRect::evaluate(mnc, rect, &[], RectSource::Manual),
            committed_at: Utc::now(),
            note: Some("first pass".into()),
        }
    }

    #[test]
    fn survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = DemarcationStore::open(dir.path()).unwrap();
        assert!(store.get(1).is_none());
        let e = entry(1, 40.1);
        store.commit(e.clone()).unwrap();
        drop(store);
        let reopened = DemarcationStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get(1), Some(e));
    }

    #[test]
    fn last_writer_wins() {
        let dir = tempfile::tempdir().unwrap();
        let store = DemarcationStore::open(dir.path()).unwrap();
        store.commit(entry(1, 40.1)).unwrap();
        store.commit(entry(1, 40.2)).unwrap();
        store.commit(entry(3, 40.3)).unwrap();
        assert_eq!(store.all().len(), 2);
        assert_eq!(store.get(1).unwrap().demarcation.rect.lat_max(), 40.2);
    }

    #[test]
    fn failed_write_leaves_store_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let store = DemarcationStore::open(dir.path()).unwrap();
        store.commit(entry(1, 40.1)).unwrap();
        // a directory squatting on the temp path makes the write fail
        fs::create_dir(store.path().with_extension("json.tmp")).unwrap();
        assert!(store.commit(entry(1, 40.5)).is_err());
        assert_eq!(store.get(1).unwrap().demarcation.rect.lat_max(), 40.1);
        let reopened = DemarcationStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get(1).unwrap().demarcation.rect.lat_max(), 40.1);
    }
}
