//! Entity profile storage for a domain master.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};

use crate::address::Address;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityProfile {
    pub vid: Address,
    pub display_name: String,
    pub group_id: String,
    pub registered_at: u64,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl EntityProfile {
    /// Attribute lookup that also exposes the fixed profile columns.
    pub fn attribute(&self, key: &str) -> Option<String> {
        match key {
            "vid" => Some(self.vid.to_string()),
            "display_name" => Some(self.display_name.clone()),
            "group_id" => Some(self.group_id.clone()),
            other => self.attributes.get(other).cloned(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("profile store: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("profile store row: {0}")]
    Corrupt(String),
}

/// Keyed profile storage; `vid` is the primary key.
pub trait ProfileStore: Send {
    fn get(&self, vid: &Address) -> Result<Option<EntityProfile>, StoreError>;
    /// Inserts or replaces the profile for `profile.vid`.
    fn put(&mut self, profile: &EntityProfile) -> Result<(), StoreError>;
    fn remove(&mut self, vid: &Address) -> Result<bool, StoreError>;
    /// All profiles ordered by vid.
    fn list(&self) -> Result<Vec<EntityProfile>, StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryProfileStore {
    rows: BTreeMap<Address, EntityProfile>,
}

impl ProfileStore for MemoryProfileStore {
    fn get(&self, vid: &Address) -> Result<Option<EntityProfile>, StoreError> {
        Ok(self.rows.get(vid).cloned())
    }

    fn put(&mut self, profile: &EntityProfile) -> Result<(), StoreError> {
        self.rows.insert(profile.vid, profile.clone());
        Ok(())
    }

    fn remove(&mut self, vid: &Address) -> Result<bool, StoreError> {
        Ok(self.rows.remove(vid).is_some())
    }

    fn list(&self) -> Result<Vec<EntityProfile>, StoreError> {
        Ok(self.rows.values().cloned().collect())
    }
}

/// Single-file SQLite store. Attributes are kept as a JSON column.
pub struct SqliteProfileStore {
    conn: Connection,
}

impl SqliteProfileStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(
            "CREATE TABLE IF NOT EXISTS profiles (
                vid TEXT PRIMARY KEY,
                display_name TEXT NOT NULL,
                group_id TEXT NOT NULL,
                registered_at INTEGER NOT NULL,
                attributes TEXT NOT NULL
            );",
        )?;
        Ok(SqliteProfileStore { conn })
    }

    fn decode(
        vid: String,
        display_name: String,
        group_id: String,
        registered_at: i64,
        attributes: String,
    ) -> Result<EntityProfile, StoreError> {
        Ok(EntityProfile {
            vid: vid.parse().map_err(|e| StoreError::Corrupt(format!("vid {vid}: {e}")))?,
            display_name,
            group_id,
            registered_at: registered_at as u64,
            attributes: serde_json::from_str(&attributes).map_err(|e| StoreError::Corrupt(e.to_string()))?,
        })
    }
}

type Row = (String, String, String, i64, String);

fn read_row(row: &rusqlite::Row<'_>) -> rusqlite::Result<Row> {
    Ok((row.get(0)?, row.get(1)?, row.get(2)?, row.get(3)?, row.get(4)?))
}

impl ProfileStore for SqliteProfileStore {
    fn get(&self, vid: &Address) -> Result<Option<EntityProfile>, StoreError> {
        let row = self
            .conn
            .query_row(
                "SELECT vid, display_name, group_id, registered_at, attributes FROM profiles WHERE vid = ?1",
                params![vid.to_string()],
                read_row,
            )
            .optional()?;
        row.map(|(a, b, c, d, e)| Self::decode(a, b, c, d, e)).transpose()
    }

    fn put(&mut self, profile: &EntityProfile) -> Result<(), StoreError> {
        let attributes = serde_json::to_string(&profile.attributes).expect("string map serializes");
        self.conn.execute(
            "INSERT OR REPLACE INTO profiles (vid, display_name, group_id, registered_at, attributes)
             VALUES (?1, ?2, ?3, ?4, ?5)",
            params![
                profile.vid.to_string(),
                profile.display_name,
                profile.group_id,
                profile.registered_at as i64,
                attributes
            ],
        )?;
        Ok(())
    }

    fn remove(&mut self, vid: &Address) -> Result<bool, StoreError> {
        Ok(self
            .conn
            .execute("DELETE FROM profiles WHERE vid = ?1", params![vid.to_string()])?
            > 0)
    }

    fn list(&self) -> Result<Vec<EntityProfile>, StoreError> {
        let mut stmt = self
            .conn
            .prepare("SELECT vid, display_name, group_id, registered_at, attributes FROM profiles ORDER BY vid")?;
        let rows = stmt.query_map([], read_row)?;
        rows.map(|r| {
            let (a, b, c, d, e) = r?;
            Self::decode(a, b, c, d, e)
        })
        .collect()
    }
}

/// Audit export: `vid,display_name,group_id,registered_at,attributes` with
/// attributes rendered as `key=value` pairs joined by `;`.
pub fn export_profiles_csv<W: io::Write>(profiles: &[EntityProfile], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vid", "display_name", "group_id", "registered_at", "attributes"])?;
    for p in profiles {
        let attrs = p
            .attributes
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            p.vid.to_string(),
            p.display_name.clone(),
            p.group_id.clone(),
            p.registered_at.to_string(),
            attrs,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(n: u64) -> EntityProfile {
        EntityProfile {
            vid: Address::from_low_u64(n),
            display_name: format!("node-{n}"),
            group_id: "zone-A".into(),
            registered_at: n * 10,
            attributes: [("department".to_owned(), "imaging".to_owned())].into(),
        }
    }

    fn exercise(store: &mut dyn ProfileStore) {
        assert_eq!(store.get(&Address::from_low_u64(1)).unwrap(), None);
        store.put(&profile(2)).unwrap();
        store.put(&profile(1)).unwrap();
        assert_eq!(store.get(&Address::from_low_u64(1)).unwrap(), Some(profile(1)));
        let vids: Vec<_> = store.list().unwrap().into_iter().map(|p| p.vid).collect();
        assert_eq!(vids, [Address::from_low_u64(1), Address::from_low_u64(2)]);
        assert!(store.remove(&Address::from_low_u64(1)).unwrap());
        assert!(!store.remove(&Address::from_low_u64(1)).unwrap());
    }

    #[test]
    fn memory_store() {
        exercise(&mut MemoryProfileStore::default());
    }

    #[test]
    fn sqlite_store() {
        exercise(&mut SqliteProfileStore::in_memory().unwrap());
    }

    #[test]
    fn sqlite_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.db");
        {
            let mut store = SqliteProfileStore::open(&path).unwrap();
            store.put(&profile(7)).unwrap();
        }
        let store = SqliteProfileStore::open(&path).unwrap();
        assert_eq!(store.get(&Address::from_low_u64(7)).unwrap(), Some(profile(7)));
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        export_profiles_csv(&[profile(1)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "vid,display_name,group_id,registered_at,attributes\n\
             0x0000000000000000000000000000000000000001,node-1,zone-A,10,department=imaging\n"
        );
    }
}
