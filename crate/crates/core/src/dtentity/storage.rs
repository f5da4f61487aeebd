//! Embedded SQL store for ego state, tracks and accepted commands, plus a
//! background writer so persistence never blocks the control loop.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};

use rusqlite::{params, Connection};

use super::DtError;
use crate::domain::{EgoState, Lifecycle, ObjectClass, ObjectTrack};

pub const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS ego_state(ts_us INTEGER, speed REAL, steering REAL, acc_enabled INTEGER, set_speed REAL, commanded_speed REAL);
CREATE TABLE IF NOT EXISTS tracks(ts_us INTEGER, track_id INTEGER, x REAL, y REAL, vx REAL, vy REAL, length REAL, width REAL, class TEXT, state TEXT);
CREATE TABLE IF NOT EXISTS commands(ts_us INTEGER, kind TEXT, value REAL);
CREATE INDEX IF NOT EXISTS ego_state_ts ON ego_state(ts_us);
CREATE INDEX IF NOT EXISTS tracks_ts ON tracks(ts_us);
";

pub const WRITE_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct EgoRow {
    pub ts_us: i64,
    pub speed: f64,
    pub steering: f64,
    pub acc_enabled: bool,
    pub set_speed: f64,
    pub commanded_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub ts_us: i64,
    pub track_id: i64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub length: f64,
    pub width: f64,
    pub class: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandRow {
    pub ts_us: i64,
    pub kind: String,
    pub value: Option<f64>,
}

pub struct Storage {
    conn: Connection,
}

impl std::fmt::Debug for Storage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Storage").finish_non_exhaustive()
    }
}

fn ts_to_sql(ts: u64) -> i64 {
    i64::try_from(ts).unwrap_or(i64::MAX)
}

impl Storage {
    pub fn open(path: &Path) -> Result<Self, DtError> {
        let conn = Connection::open(path)?;
        Self::init(conn)
    }

    /// Open an existing store without creating it.
    pub fn open_existing(path: &Path) -> Result<Self, DtError> {
        if !path.is_file() {
            return Err(DtError::MissingStore(path.to_path_buf()));
        }
        Self::open(path)
    }

    pub fn open_in_memory() -> Result<Self, DtError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, DtError> {
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    /// One ego row plus one row per track, in a single transaction.
    pub fn insert_sample(&mut self, ego: &EgoState, tracks: &[ObjectTrack], ts_us: u64) -> Result<(), DtError> {
        let ts = ts_to_sql(ts_us);
        let tx = self.conn.transaction()?;
        tx.execute(
            "INSERT INTO ego_state VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                ts,
                ego.speed,
                ego.steering_angle,
                ego.acc_enabled as i64,
                ego.set_speed,
                ego.commanded_speed
            ],
        )?;
        {
            let mut stmt = tx.prepare_cached("INSERT INTO tracks VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)")?;
            for t in tracks {
                stmt.execute(params![
                    ts,
                    t.id as i64,
                    t.x,
                    t.y,
                    t.vx,
                    t.vy,
                    t.length,
                    t.width,
                    t.object_class.as_str(),
                    t.lifecycle.as_str()
                ])?;
            }
        }
        tx.commit()?;
        Ok(())
    }

    pub fn insert_command(&mut self, ts_us: u64, kind: &str, value: Option<f64>) -> Result<(), DtError> {
        self.conn.execute(
            "INSERT INTO commands VALUES (?1, ?2, ?3)",
            params![ts_to_sql(ts_us), kind, value],
        )?;
        Ok(())
    }

    pub fn ego_rows(&self, from_us: i64, to_us: i64) -> Result<Vec<EgoRow>, DtError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT ts_us, speed, steering, acc_enabled, set_speed, commanded_speed FROM ego_state
             WHERE ts_us BETWEEN ?1 AND ?2 ORDER BY ts_us, rowid",
        )?;
        let rows = stmt.query_map(params![from_us, to_us], |r| {
            Ok(EgoRow {
                ts_us: r.get(0)?,
                speed: r.get(1)?,
                steering: r.get(2)?,
                acc_enabled: r.get::<_, i64>(3)? != 0,
                set_speed: r.get(4)?,
                commanded_speed: r.get(5)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn track_rows(&self, from_us: i64, to_us: i64) -> Result<Vec<TrackRow>, DtError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT ts_us, track_id, x, y, vx, vy, length, width, class, state FROM tracks
             WHERE ts_us BETWEEN ?1 AND ?2 ORDER BY ts_us, rowid",
        )?;
        let rows = stmt.query_map(params![from_us, to_us], |r| {
            Ok(TrackRow {
                ts_us: r.get(0)?,
                track_id: r.get(1)?,
                x: r.get(2)?,
                y: r.get(3)?,
                vx: r.get(4)?,
                vy: r.get(5)?,
                length: r.get(6)?,
                width: r.get(7)?,
                class: r.get(8)?,
                state: r.get(9)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn command_rows(&self) -> Result<Vec<CommandRow>, DtError> {
        let mut stmt = self.conn.prepare_cached("SELECT ts_us, kind, value FROM commands ORDER BY rowid")?;
        let rows = stmt.query_map([], |r| {
            Ok(CommandRow {
                ts_us: r.get(0)?,
                kind: r.get(1)?,
                value: r.get(2)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn count(&self, table: Table) -> Result<u64, DtError> {
        let sql = format!("SELECT COUNT(*) FROM {}", table.name());
        Ok(self.conn.query_row(&sql, [], |r| r.get::<_, i64>(0))? as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    EgoState,
    Tracks,
    Commands,
}

impl Table {
    fn name(self) -> &'static str {
        match self {
            Table::EgoState => "ego_state",
            Table::Tracks => "tracks",
            Table::Commands => "commands",
        }
    }
}

pub fn class_from_str(s: &str) -> Option<ObjectClass> {
    match s {
        "Vehicle" => Some(ObjectClass::Vehicle),
        "Obstacle" => Some(ObjectClass::Obstacle),
        _ => None,
    }
}

pub fn lifecycle_from_str(s: &str) -> Option<Lifecycle> {
    match s {
        "Tentative" => Some(Lifecycle::Tentative),
        "Confirmed" => Some(Lifecycle::Confirmed),
        _ => None,
    }
}

/// User-gated sample collection with the per-run monotonic timestamp check.
#[derive(Debug, Default, Clone)]
pub struct Collector {
    active: bool,
    last_ts: Option<u64>,
}

impl Collector {
    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn start(&mut self) {
        self.active = true;
    }

    pub fn stop(&mut self) {
        self.active = false;
    }

    /// Returns `Ok(false)` when collection is off.
    pub fn collect_sample(
        &mut self,
        sink: &mut dyn SampleSink,
        ego: &EgoState,
        tracks: &[ObjectTrack],
        ts_us: u64,
    ) -> Result<bool, DtError> {
        if !self.active {
            return Ok(false);
        }
        if let Some(last) = self.last_ts {
            if ts_us <= last {
                return Err(DtError::NonMonotonic { last, now: ts_us });
            }
        }
        self.last_ts = Some(ts_us);
        sink.write_sample(ego, tracks, ts_us)?;
        Ok(true)
    }
}

pub trait SampleSink {
    fn write_sample(&mut self, ego: &EgoState, tracks: &[ObjectTrack], ts_us: u64) -> Result<(), DtError>;
}

impl SampleSink for Storage {
    fn write_sample(&mut self, ego: &EgoState, tracks: &[ObjectTrack], ts_us: u64) -> Result<(), DtError> {
        self.insert_sample(ego, tracks, ts_us)
    }
}

type StorageJob = Box<dyn FnOnce(&mut Storage) + Send>;

enum WriteOp {
    Sample {
        ego: EgoState,
        tracks: Vec<ObjectTrack>,
        ts_us: u64,
    },
    Command {
        ts_us: u64,
        kind: String,
        value: Option<f64>,
    },
    Job(StorageJob),
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WriterStats {
    pub written: u64,
    pub dropped: u64,
    pub failures: u64,
}

struct Shared {
    queue: VecDeque<WriteOp>,
    busy: bool,
    closed: bool,
    stats: WriterStats,
    last_error: Option<String>,
}

/// Owns the [`Storage`] on a dedicated thread. Writes go through a bounded
/// queue; beyond capacity the oldest pending write is dropped and counted.
pub struct StorageWriter {
    shared: Arc<(Mutex<Shared>, Condvar)>,
    handle: Option<JoinHandle<Storage>>,
    capacity: usize,
}

impl std::fmt::Debug for StorageWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StorageWriter").field("capacity", &self.capacity).finish_non_exhaustive()
    }
}

impl StorageWriter {
    pub fn spawn(storage: Storage) -> Self {
        Self::with_capacity(storage, WRITE_QUEUE_CAPACITY)
    }

    pub fn with_capacity(mut storage: Storage, capacity: usize) -> Self {
        let shared = Arc::new((
            Mutex::new(Shared {
                queue: VecDeque::new(),
                busy: false,
                closed: false,
                stats: WriterStats::default(),
                last_error: None,
            }),
            Condvar::new(),
        ));
        let worker = Arc::clone(&shared);
        let handle = thread::Builder::new()
            .name("storage-writer".into())
            .spawn(move || {
                let (lock, cv) = &*worker;
                loop {
                    let op = {
                        let mut g = lock.lock().expect("writer lock");
                        loop {
                            if let Some(op) = g.queue.pop_front() {
                                g.busy = true;
                                break Some(op);
                            }
                            if g.closed {
                                break None;
                            }
                            g = cv.wait(g).expect("writer lock");
                        }
                    };
                    let Some(op) = op else { break };
                    let result = match op {
                        WriteOp::Sample { ego, tracks, ts_us } => storage.insert_sample(&ego, &tracks, ts_us).map(|_| true),
                        WriteOp::Command { ts_us, kind, value } => storage.insert_command(ts_us, &kind, value).map(|_| true),
                        WriteOp::Job(job) => {
                            job(&mut storage);
                            Ok(false)
                        }
                    };
                    let mut g = lock.lock().expect("writer lock");
                    match result {
                        Ok(true) => g.stats.written += 1,
                        Ok(false) => {}
                        Err(e) => {
                            g.stats.failures += 1;
                            g.last_error = Some(e.to_string());
                        }
                    }
                    g.busy = false;
                    cv.notify_all();
                }
                storage
            })
            .expect("spawn storage writer");
        Self {
            shared,
            handle: Some(handle),
            capacity,
        }
    }

    fn push(&self, op: WriteOp, bounded: bool) {
        let (lock, cv) = &*self.shared;
        let mut g = lock.lock().expect("writer lock");
        if bounded {
            while g.queue.len() >= self.capacity {
                // Jobs are never dropped; only data writes are.
                match g.queue.iter().position(|o| !matches!(o, WriteOp::Job(_))) {
                    Some(i) => {
                        g.queue.remove(i);
                        g.stats.dropped += 1;
                    }
                    None => break,
                }
            }
        }
        g.queue.push_back(op);
        cv.notify_all();
    }

    pub fn submit_command(&self, ts_us: u64, kind: &str, value: Option<f64>) {
        self.push(
            WriteOp::Command {
                ts_us,
                kind: kind.to_string(),
                value,
            },
            true,
        );
    }

    /// Run `f` on the writer thread after all earlier writes and wait for it.
    pub fn run<R: Send + 'static>(&self, f: impl FnOnce(&mut Storage) -> R + Send + 'static) -> R {
        let (tx, rx) = std::sync::mpsc::sync_channel(1);
        self.push(
            WriteOp::Job(Box::new(move |s| {
                let _ = tx.send(f(s));
            })),
            false,
        );
        rx.recv().expect("storage writer thread alive")
    }

    /// Block until everything queued so far is persisted.
    pub fn flush(&self) {
        let (lock, cv) = &*self.shared;
        let mut g = lock.lock().expect("writer lock");
        while !g.queue.is_empty() || g.busy {
            g = cv.wait(g).expect("writer lock");
        }
    }

    pub fn stats(&self) -> WriterStats {
        self.shared.0.lock().expect("writer lock").stats
    }

    pub fn last_error(&self) -> Option<String> {
        self.shared.0.lock().expect("writer lock").last_error.clone()
    }

    /// Drain the queue, stop the thread and hand the storage back.
    pub fn finish(mut self) -> Storage {
        self.close();
        self.handle.take().expect("joined once").join().expect("storage writer panicked")
    }

    fn close(&self) {
        let (lock, cv) = &*self.shared;
        lock.lock().expect("writer lock").closed = true;
        cv.notify_all();
    }
}

impl SampleSink for StorageWriter {
    fn write_sample(&mut self, ego: &EgoState, tracks: &[ObjectTrack], ts_us: u64) -> Result<(), DtError> {
        self.push(
            WriteOp::Sample {
                ego: *ego,
                tracks: tracks.to_vec(),
                ts_us,
            },
            true,
        );
        Ok(())
    }
}

impl Drop for StorageWriter {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            self.close();
            let _ = h.join();
        }
    }
}
