//! On-disk layout of the data directory: one `<id>.snapshot` and one
//! `<id>.log.jsonl` per experiment.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use adlift_core::engine::{restore, snapshot, Experiment};
use adlift_core::sim::{read_log, write_log};
use adlift_core::LogRecord;

const SNAPSHOT_EXT: &str = "snapshot";

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn snapshot_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.{SNAPSHOT_EXT}"))
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.log.jsonl"))
    }

    /// Writes the snapshot via a temp file and rename so readers never see
    /// a partial file.
    pub fn save(&self, exp: &Experiment) -> io::Result<()> {
        let path = self.snapshot_path(exp.id());
        let tmp = path.with_extension("snapshot.tmp");
        {
            let mut f = BufWriter::new(File::create(&tmp)?);
            f.write_all(snapshot(exp).as_bytes())?;
            f.into_inner()?.sync_all()?;
        }
        fs::rename(tmp, path)
    }

    pub fn append_log(&self, id: &str, records: &[LogRecord]) -> io::Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let f = OpenOptions::new().create(true).append(true).open(self.log_path(id))?;
        let mut w = BufWriter::new(f);
        write_log(records, &mut w)?;
        w.flush()
    }

    pub fn read_log(&self, id: &str) -> io::Result<Vec<LogRecord>> {
        match File::open(self.log_path(id)) {
            Ok(f) => read_log(BufReader::new(f)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    }

    /// Restores every snapshot in the directory. Log lines from a batch the
    /// snapshot never recorded (a crash between the two writes) are dropped.
    /// Unreadable snapshots are returned as errors alongside the good ones.
    pub fn load_all(&self) -> io::Result<(Vec<Experiment>, Vec<(PathBuf, String)>)> {
        let mut loaded = Vec::new();
        let mut failed = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == SNAPSHOT_EXT))
            .collect();
        paths.sort();
        for path in paths {
            let text = match fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    failed.push((path, e.to_string()));
                    continue;
                }
            };
            match restore(&text) {
                Ok(exp) => {
                    self.trim_log(&exp)?;
                    loaded.push(exp);
                }
                Err(e) => failed.push((path, e.to_string())),
            }
        }
        Ok((loaded, failed))
    }

    fn trim_log(&self, exp: &Experiment) -> io::Result<()> {
        let records = self.read_log(exp.id())?;
        let t = exp.state().t();
        if records.iter().all(|r| r.t < t) {
            return Ok(());
        }
        let kept: Vec<_> = records.into_iter().filter(|r| r.t < t).collect();
        let path = self.log_path(exp.id());
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            write_log(&kept, &mut w)?;
            w.flush()?;
        }
        fs::rename(tmp, path)
    }
}
