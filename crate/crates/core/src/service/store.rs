//! Persistence behind a repository trait, with an SQLite implementation.
//! Version rows are insert-only.

use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension};

use super::{Courseware, StoredDocument, Version, VersionOrigin};
use crate::gateway::{MediaType, PageImage};

#[derive(Debug, thiserror::Error)]
#[error("storage failure: {0}")]
pub struct StoreError(pub String);

impl From<rusqlite::Error> for StoreError {
    fn from(e: rusqlite::Error) -> Self {
        StoreError(e.to_string())
    }
}

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> Self {
        StoreError(e.to_string())
    }
}

pub trait Repository: Send + Sync {
    fn insert_document(&self, doc: &StoredDocument) -> Result<(), StoreError>;
    fn get_document(&self, id: &str) -> Result<Option<StoredDocument>, StoreError>;
    fn set_document_knowledge(&self, id: &str, knowledge_json: &str) -> Result<(), StoreError>;
    /// Stores a courseware together with all of its versions.
    fn insert_courseware(&self, cw: &Courseware) -> Result<(), StoreError>;
    fn get_courseware(&self, id: &str) -> Result<Option<Courseware>, StoreError>;
    fn list_courseware_ids(&self) -> Result<Vec<String>, StoreError>;
    /// Appends a version and makes it current.
    fn append_version(&self, id: &str, version: &Version) -> Result<(), StoreError>;
    fn set_current_version(&self, id: &str, number: u32) -> Result<(), StoreError>;
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS documents (
    id TEXT PRIMARY KEY,
    created_at TEXT NOT NULL,
    knowledge TEXT
);
CREATE TABLE IF NOT EXISTS document_pages (
    document_id TEXT NOT NULL REFERENCES documents(id),
    page_index INTEGER NOT NULL,
    media_type TEXT NOT NULL,
    bytes BLOB NOT NULL,
    PRIMARY KEY (document_id, page_index)
);
CREATE TABLE IF NOT EXISTS coursewares (
    id TEXT PRIMARY KEY,
    knowledge TEXT NOT NULL,
    theme TEXT NOT NULL,
    level TEXT NOT NULL,
    current_version INTEGER NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS versions (
    courseware_id TEXT NOT NULL REFERENCES coursewares(id),
    number INTEGER NOT NULL,
    html TEXT NOT NULL,
    content_hash TEXT NOT NULL,
    origin TEXT NOT NULL,
    created_at TEXT NOT NULL,
    PRIMARY KEY (courseware_id, number)
);
CREATE TRIGGER IF NOT EXISTS versions_immutable BEFORE UPDATE ON versions
BEGIN
    SELECT RAISE(ABORT, 'versions are immutable');
END;
";

pub struct SqliteRepository {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for SqliteRepository {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SqliteRepository")
    }
}

fn origin_str(o: VersionOrigin) -> &'static str {
    match o {
        VersionOrigin::Generated => "Generated",
        VersionOrigin::Edited => "Edited",
        VersionOrigin::Regenerated => "Regenerated",
    }
}

fn parse_origin(s: &str) -> Result<VersionOrigin, StoreError> {
    match s {
        "Generated" => Ok(VersionOrigin::Generated),
        "Edited" => Ok(VersionOrigin::Edited),
        "Regenerated" => Ok(VersionOrigin::Regenerated),
        other => Err(StoreError(format!("unknown version origin {other:?}"))),
    }
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, StoreError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError(e.to_string()))
}

impl SqliteRepository {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch("PRAGMA foreign_keys = ON; PRAGMA journal_mode = WAL;")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self {
            conn: Mutex::new(conn),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|p| p.into_inner())
    }
}

fn insert_version_row(conn: &Connection, id: &str, v: &Version) -> Result<(), StoreError> {
    conn.execute(
        "INSERT INTO versions (courseware_id, number, html, content_hash, origin, created_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![id, v.number, v.html, v.content_hash, origin_str(v.origin), v.created_at.to_rfc3339()],
    )?;
    Ok(())
}

impl Repository for SqliteRepository {
    fn insert_document(&self, doc: &StoredDocument) -> Result<(), StoreError> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO documents (id, created_at, knowledge) VALUES (?1, ?2, NULL)",
            params![doc.id, doc.created_at.to_rfc3339()],
        )?;
        for (i, page) in doc.pages.iter().enumerate() {
            tx.execute(
                "INSERT INTO document_pages (document_id, page_index, media_type, bytes) VALUES (?1, ?2, ?3, ?4)",
                params![doc.id, i as i64, page.media_type.as_str(), page.bytes],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    fn get_document(&self, id: &str) -> Result<Option<StoredDocument>, StoreError> {
        let conn = self.lock();
        let row: Option<(String, Option<String>)> = conn
            .query_row(
                "SELECT created_at, knowledge FROM documents WHERE id = ?1",
                [id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        let Some((created_at, knowledge)) = row else {
            return Ok(None);
        };
        let mut stmt = conn.prepare("SELECT media_type, bytes FROM document_pages WHERE document_id = ?1 ORDER BY page_index")?;
        let pages = stmt
            .query_map([id], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, Vec<u8>>(1)?))
            })?
            .map(|row| {
                let (media, bytes) = row?;
                let media_type = MediaType::parse(&media)
                    .ok_or_else(|| StoreError(format!("bad media type {media}")))?;
                Ok(PageImage { media_type, bytes })
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        Ok(Some(StoredDocument {
            id: id.to_string(),
            pages,
            created_at: parse_time(&created_at)?,
            knowledge: knowledge.map(|k| serde_json::from_str(&k)).transpose()?,
        }))
    }

    fn set_document_knowledge(&self, id: &str, knowledge_json: &str) -> Result<(), StoreError> {
        let n = self.lock().execute(
            "UPDATE documents SET knowledge = ?2 WHERE id = ?1",
            params![id, knowledge_json],
        )?;
        if n == 0 {
            return Err(StoreError(format!("no document {id}")));
        }
        Ok(())
    }

    fn insert_courseware(&self, cw: &Courseware) -> Result<(), StoreError> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO coursewares (id, knowledge, theme, level, current_version, created_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                cw.id,
                serde_json::to_string(&cw.knowledge)?,
                serde_json::to_string(&cw.theme)?,
                serde_json::to_string(&cw.degradation_level)?,
                cw.current_version,
                cw.created_at.to_rfc3339(),
            ],
        )?;
        for v in &cw.versions {
            insert_version_row(&tx, &cw.id, v)?;
        }
        tx.commit()?;
        Ok(())
    }

    fn get_courseware(&self, id: &str) -> Result<Option<Courseware>, StoreError> {
        let conn = self.lock();
        type Row = (String, String, String, u32, String);
        let row: Option<Row> = conn
            .query_row(
                "SELECT knowledge, theme, level, current_version, created_at FROM coursewares WHERE id = ?1",
                [id],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?)),
            )
            .optional()?;
        let Some((knowledge, theme, level, current_version, created_at)) = row else {
            return Ok(None);
        };
        let mut stmt =
            conn.prepare("SELECT number, html, content_hash, origin, created_at FROM versions WHERE courseware_id = ?1 ORDER BY number")?;
        let versions = stmt
            .query_map([id], |r| {
                Ok((
                    r.get::<_, u32>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, String>(4)?,
                ))
            })?
            .map(|row| {
                let (number, html, content_hash, origin, created_at) = row?;
                Ok(Version {
                    number,
                    html,
                    content_hash,
                    origin: parse_origin(&origin)?,
                    created_at: parse_time(&created_at)?,
                })
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        Ok(Some(Courseware {
            id: id.to_string(),
            knowledge: serde_json::from_str(&knowledge)?,
            theme: serde_json::from_str(&theme)?,
            degradation_level: serde_json::from_str(&level)?,
            versions,
            current_version,
            created_at: parse_time(&created_at)?,
        }))
    }

    fn list_courseware_ids(&self) -> Result<Vec<String>, StoreError> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT id FROM coursewares ORDER BY created_at, id")?;
        let ids = stmt
            .query_map([], |r| r.get(0))?
            .collect::<Result<Vec<String>, _>>()?;
        Ok(ids)
    }

    fn append_version(&self, id: &str, version: &Version) -> Result<(), StoreError> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let max: Option<u32> = tx.query_row(
            "SELECT MAX(number) FROM versions WHERE courseware_id = ?1",
            [id],
            |r| r.get(0),
        )?;
        if max.is_some_and(|m| version.number <= m) {
            return Err(StoreError(format!(
                "version {} is not newer than {}",
                version.number,
                max.unwrap_or(0)
            )));
        }
        insert_version_row(&tx, id, version)?;
        tx.execute(
            "UPDATE coursewares SET current_version = ?2 WHERE id = ?1",
            params![id, version.number],
        )?;
        tx.commit()?;
        Ok(())
    }

    fn set_current_version(&self, id: &str, number: u32) -> Result<(), StoreError> {
        let n = self.lock().execute(
            "UPDATE coursewares SET current_version = ?2 WHERE id = ?1",
            params![id, number],
        )?;
        if n == 0 {
            return Err(StoreError(format!("no courseware {id}")));
        }
        Ok(())
    }
}
