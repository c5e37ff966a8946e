//! External solver orchestration.
//!
//! A job is launched through `sh -c` in its working directory. The solver
//! signals that it is running by holding `{job}.lck`; the run is complete
//! once that file is gone and `{job}.fil` is read back.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use thiserror::Error;

use crate::codec::{read_fil, CodecError, FilStream};

#[derive(Debug, Error)]
pub enum JobError {
    #[error("marker {0:?} not found in template")]
    MarkerNotFound(String),
    #[error("invalid job spec: {0}")]
    InvalidSpec(String),
    #[error("failed to launch {command:?}: {source}")]
    SpawnFailure {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("job {job} exited with {status}\n--- stdout ---\n{stdout}--- stderr ---\n{stderr}")]
    SolverFailed {
        job: String,
        status: ExitStatus,
        stdout: String,
        stderr: String,
    },
    #[error("job {job} still holds {lock} after {elapsed:?}")]
    Timeout {
        job: String,
        lock: PathBuf,
        elapsed: Duration,
    },
    #[error("job {job} finished without writing {path}\n--- stdout ---\n{stdout}--- stderr ---\n{stderr}")]
    MissingResults {
        job: String,
        path: PathBuf,
        stdout: String,
        stderr: String,
    },
    #[error("job {0} is already running in this process")]
    JobBusy(String),
    #[error("lock file {0} exists before launch")]
    LockHeld(PathBuf),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Replaces every line containing a marker with that marker's replacement
/// line. Other lines, including line endings, are left as they are.
pub fn render_input(template: &str, substitutions: &[(&str, &str)]) -> Result<String, JobError> {
    for (marker, _) in substitutions {
        if !template.lines().any(|l| l.contains(marker)) {
            return Err(JobError::MarkerNotFound(marker.to_string()));
        }
    }
    let mut out = String::with_capacity(template.len());
    for line in template.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        let ending = &line[body.len()..];
        match substitutions.iter().find(|(m, _)| body.contains(m)) {
            Some((_, replacement)) => {
                out.push_str(replacement);
                out.push_str(ending);
            }
            None => out.push_str(line),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct JobSpec {
    /// Shell command; `{job}` is replaced by the job name.
    pub command_template: String,
    pub job_name: String,
    pub workdir: PathBuf,
    pub initial_wait: Duration,
    pub poll_interval: Duration,
    /// Measured from launch.
    pub timeout: Duration,
    /// Files named `{job}{suffix}` removed by [`cleanup`].
    pub cleanup_suffixes: Vec<String>,
}

impl JobSpec {
    pub fn new(
        command_template: impl Into<String>,
        job_name: impl Into<String>,
        workdir: impl Into<PathBuf>,
    ) -> Self {
        JobSpec {
            command_template: command_template.into(),
            job_name: job_name.into(),
            workdir: workdir.into(),
            initial_wait: Duration::from_millis(500),
            poll_interval: Duration::from_millis(100),
            timeout: Duration::from_secs(600),
            cleanup_suffixes: [".fil", ".prt", ".com", ".sim"].map(String::from).to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), JobError> {
        if self.job_name.is_empty() || self.job_name.contains(['/', '\\']) {
            return Err(JobError::InvalidSpec(format!(
                "job name {:?}",
                self.job_name
            )));
        }
        if self.poll_interval.is_zero() {
            return Err(JobError::InvalidSpec(
                "poll interval must be positive".into(),
            ));
        }
        if self.timeout <= self.initial_wait {
            return Err(JobError::InvalidSpec(
                "timeout must exceed the initial wait".into(),
            ));
        }
        Ok(())
    }

    pub fn command(&self) -> String {
        self.command_template.replace("{job}", &self.job_name)
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.workdir.join(format!("{}{suffix}", self.job_name))
    }

    pub fn lock_path(&self) -> PathBuf {
        self.path(".lck")
    }

    pub fn fil_path(&self) -> PathBuf {
        self.path(".fil")
    }

    pub fn stdout_path(&self) -> PathBuf {
        self.path(".stdout.log")
    }

    pub fn stderr_path(&self) -> PathBuf {
        self.path(".stderr.log")
    }
}

static ACTIVE: Mutex<Option<HashSet<PathBuf>>> = Mutex::new(None);

struct ActiveGuard(PathBuf);

impl ActiveGuard {
    fn acquire(spec: &JobSpec) -> Result<Self, JobError> {
        let key = spec.lock_path();
        let key = fs::canonicalize(&spec.workdir)
            .map(|d| d.join(key.file_name().unwrap_or_default()))
            .unwrap_or(key);
        let mut active = ACTIVE.lock().unwrap_or_else(|e| e.into_inner());
        if !active.get_or_insert_with(HashSet::new).insert(key.clone()) {
            return Err(JobError::JobBusy(spec.job_name.clone()));
        }
        Ok(ActiveGuard(key))
    }
}

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        let mut active = ACTIVE.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(set) = active.as_mut() {
            set.remove(&self.0);
        }
    }
}

fn read_log(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_default()
}

fn failed(spec: &JobSpec, status: ExitStatus) -> JobError {
    JobError::SolverFailed {
        job: spec.job_name.clone(),
        status,
        stdout: read_log(&spec.stdout_path()),
        stderr: read_log(&spec.stderr_path()),
    }
}

fn check_exit(
    spec: &JobSpec,
    child: &mut Child,
    status: &mut Option<ExitStatus>,
) -> Result<(), JobError> {
    if status.is_none() {
        *status = child.try_wait()?;
    }
    match status {
        Some(s) if !s.success() => Err(failed(spec, *s)),
        _ => Ok(()),
    }
}

/// Launches the job and waits for its lock file to disappear.
///
/// The run is complete when `{job}.lck` is absent after the initial wait and
/// either the lock was observed or the launched command has exited. Captured
/// output goes to `{job}.stdout.log` and `{job}.stderr.log`. On timeout a
/// still-running launcher is killed.
pub fn run_job(spec: &JobSpec) -> Result<PathBuf, JobError> {
    spec.validate()?;
    let _guard = ActiveGuard::acquire(spec)?;
    let lock = spec.lock_path();
    if lock.exists() {
        return Err(JobError::LockHeld(lock));
    }

    let command = spec.command();
    info!(
        "launching job {} in {}: {command}",
        spec.job_name,
        spec.workdir.display()
    );
    let stdout = File::create(spec.stdout_path())?;
    let stderr = File::create(spec.stderr_path())?;
    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .current_dir(&spec.workdir)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(|source| JobError::SpawnFailure {
            command: command.clone(),
            source,
        })?;

    let mut status = None;
    let mut seen_lock = false;
    while start.elapsed() < spec.initial_wait {
        check_exit(spec, &mut child, &mut status)?;
        seen_lock |= lock.exists();
        let left = spec.initial_wait.saturating_sub(start.elapsed());
        thread::sleep(left.min(spec.poll_interval));
    }

    loop {
        check_exit(spec, &mut child, &mut status)?;
        if lock.exists() {
            seen_lock = true;
        } else if seen_lock || status.is_some() {
            break;
        }
        let elapsed = start.elapsed();
        if elapsed >= spec.timeout {
            if status.is_none() {
                let _ = child.kill();
                let _ = child.wait();
            }
            warn!("job {} timed out after {elapsed:?}", spec.job_name);
            return Err(JobError::Timeout {
                job: spec.job_name.clone(),
                lock,
                elapsed,
            });
        }
        thread::sleep(spec.poll_interval.min(spec.timeout - elapsed));
    }
    debug!(
        "job {} released its lock after {:?}",
        spec.job_name,
        start.elapsed()
    );

    let fil = spec.fil_path();
    if !fil.is_file() {
        // give a launcher that is still flushing a chance to report failure
        if status.is_none() {
            status = child.try_wait()?;
        }
        if let Some(s) = status.filter(|s| !s.success()) {
            return Err(failed(spec, s));
        }
        return Err(JobError::MissingResults {
            job: spec.job_name.clone(),
            path: fil,
            stdout: read_log(&spec.stdout_path()),
            stderr: read_log(&spec.stderr_path()),
        });
    }
    Ok(fil)
}

/// Removes `{job}{suffix}` for every cleanup suffix; returns how many files
/// were deleted.
pub fn cleanup(spec: &JobSpec) -> Result<usize, JobError> {
    let mut removed = 0;
    for suffix in &spec.cleanup_suffixes {
        match fs::remove_file(spec.path(suffix)) {
            Ok(()) => removed += 1,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(removed)
}

/// [`run_job`], decode the results file, then [`cleanup`].
pub fn run_job_and_read(spec: &JobSpec) -> Result<FilStream, JobError> {
    let path = run_job(spec)?;
    let stream = read_fil(&path)?;
    cleanup(spec)?;
    Ok(stream)
}
