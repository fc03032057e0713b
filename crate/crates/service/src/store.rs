//! On-disk layout under the data directory:
//!
//! ```text
//! sessions/<id>/meta.json          resource, config, subject, state history
//! sessions/<id>/frames.csv         every consumed frame
//! sessions/<id>/predictions.ndjson one window prediction per line
//! models/<id>.json                 forest
//! models/<id>.variance.csv         training-data variance table
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use affect_core::api::SessionResource;
use affect_core::evaluation::VarianceTable;
use affect_core::forest::Forest;
use affect_core::realtime::{read_json, write_json, SessionLog, SessionMeta, META_FILE, PREDICTIONS_FILE};
use affect_core::{Error, Result};

const VARIANCE_SUFFIX: &str = ".variance.csv";

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub session: SessionResource,
    #[serde(flatten)]
    pub log: SessionMeta,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let store = Store { root: root.into() };
        for dir in [store.sessions_dir(), store.models_dir()] {
            fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.sessions_dir().join(id)
    }

    pub fn model_path(&self, id: &str) -> PathBuf {
        self.models_dir().join(format!("{id}.json"))
    }

    pub fn variance_path(&self, id: &str) -> PathBuf {
        self.models_dir().join(format!("{id}{VARIANCE_SUFFIX}"))
    }

    pub fn save_meta(&self, stored: &StoredSession) -> Result<()> {
        let dir = self.session_dir(&stored.session.id);
        fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        write_atomically(&dir.join(META_FILE), |tmp| write_json(tmp, stored))
    }

    /// Writes frames and predictions first, then the metadata that marks the
    /// session finished.
    pub fn save_finished(&self, session: &SessionResource, log: &SessionLog) -> Result<()> {
        let dir = self.session_dir(&session.id);
        log.save(&dir)?;
        self.save_meta(&StoredSession { session: session.clone(), log: log.meta() })
    }

    pub fn load_sessions(&self) -> Result<Vec<StoredSession>> {
        let mut out = Vec::new();
        let dir = self.sessions_dir();
        for entry in fs::read_dir(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })? {
            let path = entry.map_err(|e| Error::Io { path: dir.clone(), source: e })?.path();
            let meta = path.join(META_FILE);
            if meta.is_file() {
                out.push(read_json::<StoredSession>(&meta)?);
            }
        }
        out.sort_by(|a, b| (&a.session.created_at, &a.session.id).cmp(&(&b.session.created_at, &b.session.id)));
        Ok(out)
    }

    pub fn predictions_path(&self, id: &str) -> PathBuf {
        self.session_dir(id).join(PREDICTIONS_FILE)
    }

    pub fn model_ids(&self) -> Result<Vec<String>> {
        let dir = self.models_dir();
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::Io { path: dir.clone(), source: e })?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter_map(|name| name.strip_suffix(".json").map(str::to_string))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn save_model(&self, id: &str, forest: &Forest, variance: Option<&VarianceTable>) -> Result<()> {
        if let Some(table) = variance {
            let path = self.variance_path(id);
            write_atomically(&path, |tmp| fs::write(tmp, table.to_csv()).map_err(|e| Error::Io { path: tmp.into(), source: e }))?;
        }
        write_atomically(&self.model_path(id), |tmp| forest.save(tmp))
    }

    pub fn load_variance(&self, id: &str) -> Result<Option<VarianceTable>> {
        let path = self.variance_path(id);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(VarianceTable::from_csv(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::Io { path, source: e }),
        }
    }
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomically(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::Io { path: path.into(), source: e })
}
