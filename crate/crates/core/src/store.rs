//! On-disk persistence: `<root>/sessions/<id>.json` and
//! `<root>/images/<sha256>.png`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::image::{ImageRef, Png};
use crate::session::Session;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("session {0} not found")]
    NotFound(String),
    #[error("invalid identifier `{0}`")]
    BadId(String),
    #[error("decoding {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where the loop puts rendered images.
pub trait ImageSink {
    fn put_image(&mut self, png: &Png) -> Result<ImageRef, StoreError>;
}

/// Keeps images in memory; used when nothing should touch the disk.
#[derive(Debug, Default, Clone)]
pub struct MemoryImages {
    pub images: BTreeMap<ImageRef, Png>,
}

impl ImageSink for MemoryImages {
    fn put_image(&mut self, png: &Png) -> Result<ImageRef, StoreError> {
        let r = png.hash();
        self.images.entry(r.clone()).or_insert_with(|| png.clone());
        Ok(r)
    }
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Writes through a temporary file so readers never see partial content.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["sessions", "images"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn image_path(&self, r: &ImageRef) -> PathBuf {
        self.root.join("images").join(format!("{}.png", r.0))
    }

    pub fn save_session(&self, session: &Session) -> Result<PathBuf, StoreError> {
        if !valid_id(&session.id) {
            return Err(StoreError::BadId(session.id.clone()));
        }
        let path = self.session_path(&session.id);
        let mut json = serde_json::to_vec_pretty(session).expect("sessions always serialize");
        json.push(b'\n');
        write_atomic(&path, &json)?;
        Ok(path)
    }

    pub fn load_session(&self, id: &str) -> Result<Session, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::BadId(id.to_string()));
        }
        let path = self.session_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_slice(&bytes).map_err(|source| StoreError::Json { path, source })
    }

    /// Ids of every stored session, sorted.
    pub fn list_sessions(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn get_image(&self, r: &ImageRef) -> Result<Option<Png>, StoreError> {
        if !ImageRef::is_well_formed(&r.0) {
            return Err(StoreError::BadId(r.0.clone()));
        }
        let path = self.image_path(r);
        match fs::read(&path) {
            Ok(b) => Ok(Some(Png(b))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl ImageSink for SessionStore {
    fn put_image(&mut self, png: &Png) -> Result<ImageRef, StoreError> {
        (&*self).put_image(png)
    }
}

impl ImageSink for &SessionStore {
    fn put_image(&mut self, png: &Png) -> Result<ImageRef, StoreError> {
        let r = png.hash();
        let path = self.image_path(&r);
        if !path.exists() {
            write_atomic(&path, png.bytes())?;
        }
        Ok(r)
    }
}
