//! Append-only JSON-lines event log with periodic snapshots.
//!
//! Each line is `{"seq": n, "kind": "...", "payload": {...}}` with `seq`
//! starting at 1 and increasing by one. A snapshot of the full state is
//! written next to the log (`<log>.snapshot`) every [`SNAPSHOT_INTERVAL`]
//! entries so startup only replays the tail.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SNAPSHOT_INTERVAL: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryKind {
    TaskCreated,
    ComparisonSubmitted,
    TaskFinalized,
    TaskDiscarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub kind: EntryKind,
    pub payload: Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    state: Value,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("event log {path}, line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("event log {path}: expected seq {expected}, found {found}")]
    SeqGap { path: PathBuf, expected: u64, found: u64 },
    #[error("snapshot {path} is at seq {snapshot} but the log ends at {log}")]
    SnapshotAhead { path: PathBuf, snapshot: u64, log: u64 },
}

/// What was on disk when the log was opened.
#[derive(Debug, Default)]
pub struct Recovered {
    /// Latest snapshot as `(seq, state)`.
    pub snapshot: Option<(u64, Value)>,
    /// Entries after the snapshot (all entries when there is none).
    pub entries: Vec<LogEntry>,
    /// An incomplete final line was found and cut off.
    pub truncated_tail: bool,
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    len: u64,
    next_seq: u64,
    sync: bool,
}

fn snapshot_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".snapshot");
    PathBuf::from(s)
}

impl EventLog {
    /// Opens (creating if needed) the log at `path` and returns everything
    /// needed to rebuild state. With `sync`, every append is fsynced.
    pub fn open(path: &Path, sync: bool) -> Result<(Self, Recovered), LogError> {
        let io_err = |source| LogError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };

        let mut entries = Vec::new();
        let mut good_len = 0usize;
        let mut truncated_tail = false;
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let (line, end, complete) = match bytes[offset..].iter().position(|&b| b == b'\n') {
                Some(i) => (&bytes[offset..offset + i], offset + i + 1, true),
                None => (&bytes[offset..], bytes.len(), false),
            };
            match serde_json::from_slice::<LogEntry>(line) {
                Ok(entry) => {
                    let expected = entries.last().map_or(1, |e: &LogEntry| e.seq + 1);
                    if entry.seq != expected {
                        return Err(LogError::SeqGap {
                            path: path.to_path_buf(),
                            expected,
                            found: entry.seq,
                        });
                    }
                    entries.push(entry);
                    good_len = end;
                }
                // a crash mid-append leaves a partial last line; drop it
                Err(_) if !complete => {
                    truncated_tail = true;
                    break;
                }
                Err(e) => {
                    return Err(LogError::Corrupt {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: e.to_string(),
                    })
                }
            }
            offset = end;
        }

        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)
            .map_err(io_err)?;
        let needs_newline = good_len > 0 && bytes[good_len - 1] != b'\n';
        if truncated_tail || good_len != bytes.len() {
            file.set_len(good_len as u64).map_err(io_err)?;
        }
        let mut len = good_len as u64;
        {
            use std::io::Seek;
            file.seek(io::SeekFrom::Start(len)).map_err(io_err)?;
        }
        if needs_newline {
            file.write_all(b"\n").map_err(io_err)?;
            len += 1;
        }
        let last_seq = entries.last().map_or(0, |e| e.seq);

        let snap_path = snapshot_path(path);
        let snapshot = match fs::read(&snap_path) {
            Ok(b) => {
                let snap: Snapshot = serde_json::from_slice(&b).map_err(|e| LogError::Corrupt {
                    path: snap_path.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
                if snap.seq > last_seq {
                    return Err(LogError::SnapshotAhead {
                        path: snap_path,
                        snapshot: snap.seq,
                        log: last_seq,
                    });
                }
                Some((snap.seq, snap.state))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => {
                return Err(LogError::Io {
                    path: snap_path,
                    source: e,
                })
            }
        };
        if let Some((seq, _)) = &snapshot {
            entries.retain(|e| e.seq > *seq);
        }

        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                len,
                next_seq: last_seq + 1,
                sync,
            },
            Recovered {
                snapshot,
                entries,
                truncated_tail,
            },
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Seq the next append will get.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Writes and flushes one entry. On failure the file is cut back to its
    /// previous length and the seq is not consumed.
    pub fn append(&mut self, kind: EntryKind, payload: Value) -> Result<LogEntry, LogError> {
        let entry = LogEntry {
            seq: self.next_seq,
            kind,
            payload,
        };
        let mut line = serde_json::to_vec(&entry).expect("log entries always serialize");
        line.push(b'\n');
        let result = self.file.write_all(&line).and_then(|_| {
            self.file.flush()?;
            if self.sync {
                self.file.sync_data()?;
            }
            Ok(())
        });
        if let Err(source) = result {
            let _ = self.file.set_len(self.len);
            return Err(LogError::Io {
                path: self.path.clone(),
                source,
            });
        }
        self.len += line.len() as u64;
        self.next_seq += 1;
        Ok(entry)
    }

    /// Atomically replaces the snapshot with `state` as of `seq`.
    pub fn write_snapshot<T: Serialize>(&self, seq: u64, state: &T) -> Result<(), LogError> {
        let final_path = snapshot_path(&self.path);
        let mut tmp = final_path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let io_err = |source| LogError::Io {
            path: tmp.clone(),
            source,
        };
        let snap = Snapshot {
            seq,
            state: serde_json::to_value(state).expect("state always serializes"),
        };
        let mut f = File::create(&tmp).map_err(io_err)?;
        serde_json::to_writer(&mut f, &snap).map_err(|e| io_err(e.into()))?;
        f.sync_all().map_err(io_err)?;
        fs::rename(&tmp, &final_path).map_err(io_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn log_in(dir: &tempfile::TempDir) -> PathBuf {
        dir.path().join("events.jsonl")
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = log_in(&dir);
        let (mut log, rec) = EventLog::open(&path, false).unwrap();
        assert!(rec.entries.is_empty());
        log.append(EntryKind::TaskCreated, json!({"a": 1})).unwrap();
        let e = log.append(EntryKind::ComparisonSubmitted, json!({"b": 2})).unwrap();
        assert_eq!(e.seq, 2);
        drop(log);
        let (log, rec) = EventLog::open(&path, false).unwrap();
        assert_eq!(rec.entries.len(), 2);
        assert_eq!(rec.entries[1], e);
        assert_eq!(log.next_seq(), 3);
        assert!(!rec.truncated_tail);
    }

    #[test]
    fn partial_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = log_in(&dir);
        let (mut log, _) = EventLog::open(&path, false).unwrap();
        log.append(EntryKind::TaskCreated, json!({})).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"seq":2,"kind":"TaskCr"#).unwrap();
        drop(f);
        let (mut log, rec) = EventLog::open(&path, false).unwrap();
        assert!(rec.truncated_tail);
        assert_eq!(rec.entries.len(), 1);
        assert_eq!(log.append(EntryKind::TaskFinalized, json!({})).unwrap().seq, 2);
        drop(log);
        let (_, rec) = EventLog::open(&path, false).unwrap();
        assert_eq!(rec.entries.len(), 2);
    }

    #[test]
    fn gaps_and_garbage_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = log_in(&dir);
        fs::write(
            &path,
            "{\"seq\":1,\"kind\":\"TaskCreated\",\"payload\":{}}\n{\"seq\":3,\"kind\":\"TaskCreated\",\"payload\":{}}\n",
        )
        .unwrap();
        assert!(matches!(
            EventLog::open(&path, false),
            Err(LogError::SeqGap {
                expected: 2,
                found: 3,
                ..
            })
        ));
        fs::write(&path, "not json\n{\"seq\":1,\"kind\":\"TaskCreated\",\"payload\":{}}\n").unwrap();
        assert!(matches!(
            EventLog::open(&path, false),
            Err(LogError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn snapshot_skips_replayed_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = log_in(&dir);
        let (mut log, _) = EventLog::open(&path, true).unwrap();
        for _ in 0..3 {
            log.append(EntryKind::ComparisonSubmitted, json!({})).unwrap();
        }
        log.write_snapshot(2, &json!({"n": 2})).unwrap();
        drop(log);
        let (_, rec) = EventLog::open(&path, false).unwrap();
        assert_eq!(rec.snapshot, Some((2, json!({"n": 2}))));
        assert_eq!(rec.entries.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn snapshot_ahead_of_log_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = log_in(&dir);
        let (log, _) = EventLog::open(&path, false).unwrap();
        log.write_snapshot(5, &json!({})).unwrap();
        drop(log);
        assert!(matches!(
            EventLog::open(&path, false),
            Err(LogError::SnapshotAhead { .. })
        ));
    }
}
