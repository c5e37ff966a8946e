use std::fs;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use filpost::codec::{encode_stream, DataItem, FilStream, LogicalRecord};
use filpost::jobs::*;
use filpost::records::{extract_nodal_field, DISPLACEMENT_KEY};

const PLANTED: [(i64, [f64; 2]); 3] = [
    (1, [0.0, 0.0]),
    (2, [1.25e-3, -3.5e-4]),
    (3, [-7.0625e-2, 0.1]),
];

fn planted_fil() -> String {
    let recs = PLANTED
        .iter()
        .map(|(n, u)| {
            LogicalRecord::new(
                DISPLACEMENT_KEY,
                vec![
                    DataItem::Int(*n),
                    DataItem::Float(u[0]),
                    DataItem::Float(u[1]),
                ],
            )
            .unwrap()
        })
        .collect();
    encode_stream(&FilStream::new(recs))
}

fn stub(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    format!("sh {}", path.display())
}

fn fast(spec: &mut JobSpec) {
    spec.initial_wait = Duration::from_millis(20);
    spec.poll_interval = Duration::from_millis(10);
    spec.timeout = Duration::from_secs(20);
}

#[test]
fn stub_solver_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("planted.fil"), planted_fil()).unwrap();
    let template = "*HEADING\n*MATERIAL\n** E = @E@\n*STEP\n";
    let deck = render_input(template, &[("@E@", "*ELASTIC\n68948., 0.33")]).unwrap();
    fs::write(dir.path().join("job.inp"), &deck).unwrap();
    // the stub refuses decks that were not rendered
    let cmd = stub(
        dir.path(),
        "solver.sh",
        "grep -q '^68948., 0.33$' $1.inp || { echo bad deck >&2; exit 3; }\n\
         touch $1.lck\nsleep 0.2\ncp planted.fil $1.fil\necho done\nrm $1.lck",
    );
    let mut spec = JobSpec::new(format!("{cmd} {{job}}"), "job", dir.path());
    fast(&mut spec);
    let start = Instant::now();
    let stream = run_job_and_read(&spec).unwrap();
    assert!(start.elapsed() >= Duration::from_millis(200));
    let field = extract_nodal_field(&stream, DISPLACEMENT_KEY).unwrap();
    assert_eq!(field.rows.len(), 3);
    for (row, (n, u)) in field.rows.iter().zip(PLANTED) {
        assert_eq!(row.node_id, n);
        assert_eq!(row.components, u);
    }
    assert!(!spec.fil_path().exists());
    assert_eq!(fs::read_to_string(spec.stdout_path()).unwrap(), "done\n");
}

#[test]
fn solver_that_never_locks_completes_on_exit() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("planted.fil"), planted_fil()).unwrap();
    let mut spec = JobSpec::new("cp planted.fil {job}.fil", "quick", dir.path());
    fast(&mut spec);
    assert_eq!(run_job(&spec).unwrap(), spec.fil_path());
    assert_eq!(cleanup(&spec).unwrap(), 1);
    assert_eq!(cleanup(&spec).unwrap(), 0);
}

#[test]
fn timeout_fires_within_one_poll() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = JobSpec::new("touch {job}.lck; exec sleep 30", "hang", dir.path());
    spec.initial_wait = Duration::from_millis(100);
    spec.poll_interval = Duration::from_millis(100);
    spec.timeout = Duration::from_millis(600);
    let start = Instant::now();
    let err = run_job(&spec).unwrap_err();
    let wall = start.elapsed();
    match err {
        JobError::Timeout { elapsed, lock, .. } => {
            assert!(elapsed >= spec.timeout);
            assert!(elapsed <= spec.timeout + spec.poll_interval, "{elapsed:?}");
            assert_eq!(lock, spec.lock_path());
        }
        e => panic!("{e}"),
    }
    assert!(
        wall <= spec.timeout + spec.poll_interval + Duration::from_millis(100),
        "{wall:?}"
    );
}

#[test]
fn nonzero_exit_reports_captured_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = JobSpec::new(
        "echo started; echo 'license error' >&2; exit 7",
        "bad",
        dir.path(),
    );
    fast(&mut spec);
    match run_job(&spec).unwrap_err() {
        JobError::SolverFailed {
            status,
            stdout,
            stderr,
            ..
        } => {
            assert_eq!(status.code(), Some(7));
            assert_eq!(stdout, "started\n");
            assert_eq!(stderr, "license error\n");
        }
        e => panic!("{e}"),
    }
}

#[test]
fn missing_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = JobSpec::new(
        "touch {job}.lck; sleep 0.05; rm {job}.lck",
        "nofil",
        dir.path(),
    );
    fast(&mut spec);
    assert!(matches!(
        run_job(&spec),
        Err(JobError::MissingResults { .. })
    ));
}

#[test]
fn stale_lock_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = JobSpec::new("true", "stale", dir.path());
    fast(&mut spec);
    fs::write(spec.lock_path(), "").unwrap();
    assert!(matches!(run_job(&spec), Err(JobError::LockHeld(p)) if p == spec.lock_path()));
}

#[test]
fn concurrent_run_of_same_job_is_busy() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("planted.fil"), planted_fil()).unwrap();
    let mut spec = JobSpec::new(
        "touch {job}.lck; sleep 0.4; cp planted.fil {job}.fil; rm {job}.lck",
        "shared",
        dir.path(),
    );
    fast(&mut spec);
    let first = {
        let spec = spec.clone();
        thread::spawn(move || run_job(&spec))
    };
    thread::sleep(Duration::from_millis(100));
    assert!(matches!(run_job(&spec), Err(JobError::JobBusy(j)) if j == "shared"));
    first.join().unwrap().unwrap();
    // released afterwards
    cleanup(&spec).unwrap();
    run_job(&spec).unwrap();
}

#[test]
fn distinct_jobs_run_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("planted.fil"), planted_fil()).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let mut spec = JobSpec::new(
                "touch {job}.lck; sleep 0.2; cp planted.fil {job}.fil; rm {job}.lck",
                format!("p{i}"),
                dir.path(),
            );
            fast(&mut spec);
            thread::spawn(move || run_job_and_read(&spec).map(|s| s.len()))
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap().unwrap(), 3);
    }
}

#[test]
fn spawn_failure_for_missing_workdir() {
    let spec = JobSpec::new("true", "j", "/nonexistent/filpost-workdir");
    assert!(run_job(&spec).is_err());
}
