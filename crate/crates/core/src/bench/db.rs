use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::{DateTime, NaiveDateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Rows kept per table in a snapshot.
pub const SNAPSHOT_ROWS: usize = 5;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("statement logging is not enabled: {0}")]
    LoggingDisabled(String),
    #[error("log window already closed")]
    WindowClosed,
    #[error("database unreachable: {0}")]
    Unreachable(String),
    #[error("database query failed: {0}")]
    Query(String),
    #[error("log read failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbKind {
    Sqlite,
    #[serde(alias = "postgres")]
    Postgresql,
}

/// How to reach a site's database, and where its statement log lands.
/// Relative paths resolve against the site root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbConfig {
    #[serde(rename = "type")]
    pub kind: DbKind,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub db_host: Option<String>,
    #[serde(default)]
    pub db_port: Option<u16>,
    #[serde(default)]
    pub db_username: Option<String>,
    #[serde(default)]
    pub db_password: Option<String>,
    #[serde(default)]
    pub db_name: Option<String>,
    /// Server log written with statement logging on.
    #[serde(default)]
    pub statement_log: Option<PathBuf>,
}

impl DbConfig {
    pub fn sqlite(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: DbKind::Sqlite,
            path: Some(path.into()),
            db_host: None,
            db_port: None,
            db_username: None,
            db_password: None,
            db_name: None,
            statement_log: None,
        }
    }

    pub fn resolved(&self, root: &Path) -> Self {
        let abs = |p: &Option<PathBuf>| p.as_ref().map(|p| root.join(p));
        Self { path: abs(&self.path), statement_log: abs(&self.statement_log), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedStatement {
    pub at: DateTime<Utc>,
    pub sql: String,
}

fn line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}(?:\.\d+)?)(?: [A-Z]{2,5})? \[\d+\][^:]*?\s*LOG:\s+(?:statement|execute [^:]*):\s?(.*)$",
        )
        .unwrap()
    })
}

fn any_entry_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}").unwrap())
}

/// Parses PostgreSQL server log text (`log_statement = 'all'`,
/// `log_line_prefix = '%m [%p] '`). Lines without a timestamp continue the
/// previous statement; other log entries are skipped. Timestamps are read
/// as UTC.
pub fn parse_statement_log(text: &str) -> Vec<LoggedStatement> {
    let mut out: Vec<LoggedStatement> = Vec::new();
    let mut open = false;
    for line in text.lines() {
        if let Some(c) = line_re().captures(line) {
            let at = NaiveDateTime::parse_from_str(&c[1], "%Y-%m-%d %H:%M:%S%.f").map(|t| t.and_utc()).ok();
            open = at.is_some();
            if let Some(at) = at {
                out.push(LoggedStatement { at, sql: c[2].to_string() });
            }
        } else if any_entry_re().is_match(line) {
            open = false;
        } else if open {
            if let Some(last) = out.last_mut() {
                last.sql.push('\n');
                last.sql.push_str(line);
            }
        }
    }
    out
}

/// Statements a database logged between `open` and `close`.
#[derive(Debug)]
pub struct DbLogWindow {
    path: PathBuf,
    offset: u64,
    started: DateTime<Utc>,
    closed: bool,
}

impl DbLogWindow {
    pub fn open(cfg: &DbConfig) -> Result<Self, DbError> {
        let hint = match cfg.kind {
            DbKind::Postgresql => {
                "set log_statement = 'all' and log_line_prefix = '%m [%p] ' in postgresql.conf, \
                                   then point statement_log at the server log file"
            }
            DbKind::Sqlite => "have the app trace its SQL into the statement_log file in the server log format",
        };
        let path = cfg
            .statement_log
            .clone()
            .ok_or_else(|| DbError::LoggingDisabled(format!("no statement_log configured; {hint}")))?;
        let meta = std::fs::metadata(&path)
            .map_err(|_| DbError::LoggingDisabled(format!("{} does not exist; {hint}", path.display())))?;
        Ok(Self { path, offset: meta.len(), started: truncate_ms(Utc::now()), closed: false })
    }

    pub fn started(&self) -> DateTime<Utc> {
        self.started
    }

    /// Statements appended since `open` with timestamps inside the window,
    /// in log order. A second close is an error.
    pub fn close(&mut self) -> Result<Vec<LoggedStatement>, DbError> {
        if self.closed {
            return Err(DbError::WindowClosed);
        }
        self.closed = true;
        let ended = Utc::now();
        let mut file = std::fs::File::open(&self.path)?;
        let len = file.metadata()?.len();
        // a rotated or truncated log restarts from its beginning
        let from = if len < self.offset { 0 } else { self.offset };
        file.seek(SeekFrom::Start(from))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let text = String::from_utf8_lossy(&bytes);
        let mut statements: Vec<LoggedStatement> =
            parse_statement_log(&text).into_iter().filter(|s| s.at >= self.started && s.at <= ended).collect();
        statements.sort_by_key(|s| s.at);
        Ok(statements)
    }
}

fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).unwrap_or(t)
}

/// Log text for the validation prompt.
pub fn render_statements(statements: &[LoggedStatement]) -> String {
    if statements.is_empty() {
        return "(no database log entries were written)".into();
    }
    statements
        .iter()
        .map(|s| format!("{} {}", s.at.format("%Y-%m-%d %H:%M:%S%.3f"), s.sql))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSnapshot {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

/// First rows of every user table, keyed by table name.
pub type DbSnapshot = BTreeMap<String, TableSnapshot>;

pub fn snapshot_database(cfg: &DbConfig) -> Result<DbSnapshot, DbError> {
    match cfg.kind {
        DbKind::Sqlite => snapshot_sqlite(cfg),
        DbKind::Postgresql => snapshot_postgres(cfg),
    }
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn snapshot_sqlite(cfg: &DbConfig) -> Result<DbSnapshot, DbError> {
    use rusqlite::{types::ValueRef, Connection, OpenFlags};
    let path = cfg.path.as_ref().ok_or_else(|| DbError::Unreachable("sqlite database path missing".into()))?;
    if !path.is_file() {
        return Err(DbError::Unreachable(format!("{} does not exist", path.display())));
    }
    let conn = Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY)
        .map_err(|e| DbError::Unreachable(e.to_string()))?;
    let q = |e: rusqlite::Error| DbError::Query(e.to_string());
    let mut stmt = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name")
        .map_err(q)?;
    let tables: Vec<String> = stmt.query_map([], |r| r.get(0)).map_err(q)?.collect::<Result<_, _>>().map_err(q)?;
    let mut out = DbSnapshot::new();
    for table in tables {
        let mut stmt =
            conn.prepare(&format!("SELECT * FROM {} LIMIT {SNAPSHOT_ROWS}", quote_ident(&table))).map_err(q)?;
        let columns: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
        let n = columns.len();
        let rows = stmt
            .query_map([], |r| {
                (0..n)
                    .map(|i| {
                        Ok(match r.get_ref(i)? {
                            ValueRef::Null => Value::Null,
                            ValueRef::Integer(v) => Value::from(v),
                            ValueRef::Real(v) => Value::from(v),
                            ValueRef::Text(t) => Value::from(String::from_utf8_lossy(t).into_owned()),
                            ValueRef::Blob(b) => Value::from(format!("<{} bytes>", b.len())),
                        })
                    })
                    .collect::<Result<Vec<Value>, rusqlite::Error>>()
            })
            .map_err(q)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(q)?;
        out.insert(table, TableSnapshot { columns, rows });
    }
    Ok(out)
}

fn snapshot_postgres(cfg: &DbConfig) -> Result<DbSnapshot, DbError> {
    let mut pg = postgres::Config::new();
    pg.host(cfg.db_host.as_deref().unwrap_or("localhost"))
        .port(cfg.db_port.unwrap_or(5432))
        .user(cfg.db_username.as_deref().unwrap_or("postgres"))
        .dbname(cfg.db_name.as_deref().unwrap_or("postgres"))
        .connect_timeout(std::time::Duration::from_secs(10));
    if let Some(pw) = &cfg.db_password {
        pg.password(pw);
    }
    let mut client = pg.connect(postgres::NoTls).map_err(|e| DbError::Unreachable(e.to_string()))?;
    let q = |e: postgres::Error| DbError::Query(e.to_string());
    let tables = client
        .query(
            "SELECT table_schema, table_name FROM information_schema.tables \
             WHERE table_type = 'BASE TABLE' AND table_schema NOT IN ('pg_catalog', 'information_schema') \
             ORDER BY table_schema, table_name",
            &[],
        )
        .map_err(q)?;
    let mut out = DbSnapshot::new();
    for t in tables {
        let (schema, name): (String, String) = (t.get(0), t.get(1));
        let qualified = format!("{}.{}", quote_ident(&schema), quote_ident(&name));
        // row_to_json keeps column order and sidesteps per-type decoding
        let rows = client
            .query(
                &format!("SELECT row_to_json(t)::text FROM (SELECT * FROM {qualified} LIMIT {SNAPSHOT_ROWS}) t"),
                &[],
            )
            .map_err(q)?;
        let columns: Vec<String> = client
            .query(
                "SELECT column_name::text FROM information_schema.columns \
                 WHERE table_schema = $1 AND table_name = $2 ORDER BY ordinal_position",
                &[&schema, &name],
            )
            .map_err(q)?
            .iter()
            .map(|r| r.get(0))
            .collect();
        let rows = rows
            .iter()
            .map(|r| {
                let obj: serde_json::Map<String, Value> = serde_json::from_str(r.get::<_, &str>(0)).unwrap_or_default();
                columns.iter().map(|c| obj.get(c).cloned().unwrap_or(Value::Null)).collect()
            })
            .collect();
        let key = if schema == "public" { name } else { format!("{schema}.{name}") };
        out.insert(key, TableSnapshot { columns, rows });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_server_log_lines() {
        let log = "2025-06-01 10:00:00.100 UTC [42] LOG:  statement: SELECT 1\n\
                   2025-06-01 10:00:00.200 UTC [42] LOG:  connection received: host=[local]\n\
                   2025-06-01 10:00:01.000 UTC [43] LOG:  execute <unnamed>: INSERT INTO t (a)\n\
                   \tVALUES (1)\n\
                   2025-06-01 10:00:02 UTC [43] LOG:  statement: DELETE FROM t\n";
        let s = parse_statement_log(log);
        let sql: Vec<&str> = s.iter().map(|s| s.sql.as_str()).collect();
        assert_eq!(sql, ["SELECT 1", "INSERT INTO t (a)\n\tVALUES (1)", "DELETE FROM t"]);
        assert_eq!(s[0].at.timestamp_subsec_millis(), 100);
    }

    fn log_line(sql: &str) -> String {
        format!("{} UTC [7] LOG:  statement: {sql}\n", Utc::now().format("%Y-%m-%d %H:%M:%S%.3f"))
    }

    fn append(path: &Path, text: &str) {
        std::fs::OpenOptions::new().append(true).open(path).unwrap().write_all(text.as_bytes()).unwrap();
    }

    #[test]
    fn window_captures_only_its_own_traffic() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("pg.log");
        std::fs::write(&log, log_line("SELECT 'before'")).unwrap();
        let mut cfg = DbConfig::sqlite(dir.path().join("x.db"));
        cfg.statement_log = Some(log.clone());

        let mut quiet = DbLogWindow::open(&cfg).unwrap();
        assert!(quiet.close().unwrap().is_empty());
        assert!(matches!(quiet.close(), Err(DbError::WindowClosed)));

        let mut w = DbLogWindow::open(&cfg).unwrap();
        append(&log, &log_line("INSERT INTO t VALUES (1)"));
        let got = w.close().unwrap();
        append(&log, &log_line("SELECT 'after'"));
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].sql, "INSERT INTO t VALUES (1)");
    }

    #[test]
    fn missing_log_explains_how_to_enable_it() {
        let mut cfg = DbConfig::sqlite("x.db");
        cfg.kind = DbKind::Postgresql;
        let err = DbLogWindow::open(&cfg).unwrap_err();
        assert!(err.to_string().contains("log_statement"));
        cfg.statement_log = Some("/nonexistent/pg.log".into());
        assert!(matches!(DbLogWindow::open(&cfg), Err(DbError::LoggingDisabled(_))));
    }

    fn sqlite_with(tables: &[(&str, usize)]) -> (tempfile::TempDir, DbConfig) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("app.db");
        let conn = rusqlite::Connection::open(&path).unwrap();
        for (name, n) in tables {
            conn.execute(&format!("CREATE TABLE {name} (id INTEGER PRIMARY KEY, label TEXT, score REAL)"), []).unwrap();
            for i in 0..*n {
                conn.execute(
                    &format!("INSERT INTO {name} (label, score) VALUES (?1, ?2)"),
                    rusqlite::params![format!("r{i}"), i as f64 / 2.0],
                )
                .unwrap();
            }
        }
        (dir, DbConfig::sqlite(path))
    }

    #[test]
    fn snapshot_caps_rows_and_keeps_column_order() {
        let (_d, cfg) = sqlite_with(&[("entries", 7), ("authors", 2)]);
        let snap = snapshot_database(&cfg).unwrap();
        assert_eq!(snap.keys().collect::<Vec<_>>(), ["authors", "entries"]);
        assert_eq!(snap["entries"].columns, ["id", "label", "score"]);
        assert_eq!(snap["entries"].rows.len(), 5);
        assert_eq!(snap["authors"].rows.len(), 2);
        assert_eq!(snap["entries"].rows[1], vec![Value::from(2), Value::from("r1"), Value::from(0.5)]);
        let (_d, empty) = sqlite_with(&[]);
        assert!(snapshot_database(&empty).unwrap().is_empty());
    }

    #[test]
    fn missing_database_is_unreachable() {
        let err = snapshot_database(&DbConfig::sqlite("/nonexistent/app.db")).unwrap_err();
        assert!(matches!(err, DbError::Unreachable(_)));
    }
}
