//! Child processes with a wall-clock limit and an output-volume cap.
//!
//! Each child leads its own process group. On timeout, cap breach, or
//! normal exit the whole group is sent SIGKILL, so no descendant outlives
//! the call.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ending {
    Exited(Option<i32>),
    TimedOut,
    OutputFlood,
}

#[derive(Debug, Clone)]
pub struct Finished {
    pub ending: Ending,
    pub pid: u32,
    /// Combined stdout and stderr in arrival order, truncated at the cap.
    pub output: Vec<u8>,
    pub elapsed: Duration,
}

impl Finished {
    pub fn success(&self) -> bool {
        self.ending == Ending::Exited(Some(0))
    }

    pub fn output_text(&self) -> String {
        String::from_utf8_lossy(&self.output).into_owned()
    }

    /// Last `n` lines of the captured output.
    pub fn tail(&self, n: usize) -> String {
        let text = self.output_text();
        let lines: Vec<&str> = text.lines().collect();
        lines[lines.len().saturating_sub(n)..].join("\n")
    }
}

fn kill_group(pgid: u32) {
    // SAFETY: kill(2) with a negative pid signals a process group; no memory is touched.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

/// Pids of live (non-zombie) members of a process group, read from `/proc`.
pub fn group_members(pgid: u32) -> Vec<u32> {
    let Ok(dir) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for entry in dir.flatten() {
        let Some(pid) = entry.file_name().to_str().and_then(|s| s.parse::<u32>().ok()) else {
            continue;
        };
        let Ok(stat) = std::fs::read_to_string(entry.path().join("stat")) else {
            continue;
        };
        // Fields after the parenthesised command name: state ppid pgrp ...
        let Some(rest) = stat.rsplit_once(')').map(|(_, r)| r) else {
            continue;
        };
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.len() > 2 && fields[0] != "Z" && fields[0] != "X" && fields[2] == pgid.to_string() {
            out.push(pid);
        }
    }
    out
}

/// Whether any process in the group is still alive. Killed processes take
/// a moment to die, so this polls briefly before answering yes.
pub fn group_alive(pgid: u32) -> bool {
    for _ in 0..50 {
        if group_members(pgid).is_empty() {
            return false;
        }
        thread::sleep(Duration::from_millis(10));
    }
    true
}

/// Runs `cmd` to completion or until `timeout` passes or more than
/// `output_cap` bytes of output arrive.
pub fn run_bounded(mut cmd: Command, timeout: Duration, output_cap: u64) -> std::io::Result<Finished> {
    cmd.stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    // The child leaves our process group, so a killed driver would not take
    // it down; ask the kernel to.
    #[cfg(target_os = "linux")]
    unsafe {
        cmd.pre_exec(|| {
            libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGKILL);
            Ok(())
        });
    }
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pid = child.id();
    let buf = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::new(AtomicU64::new(0));
    let flooded = Arc::new(AtomicBool::new(false));

    let mut readers = Vec::new();
    let pipes: Vec<Box<dyn Read + Send>> = vec![
        Box::new(child.stdout.take().expect("piped stdout")),
        Box::new(child.stderr.take().expect("piped stderr")),
    ];
    for mut pipe in pipes {
        let (buf, seen, flooded) = (buf.clone(), seen.clone(), flooded.clone());
        readers.push(thread::spawn(move || {
            let mut chunk = [0u8; 8192];
            loop {
                match pipe.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        let total = seen.fetch_add(n as u64, Ordering::SeqCst) + n as u64;
                        let mut b = buf.lock().unwrap_or_else(|e| e.into_inner());
                        let room = output_cap.saturating_sub(b.len() as u64) as usize;
                        b.extend_from_slice(&chunk[..n.min(room)]);
                        if total > output_cap {
                            flooded.store(true, Ordering::SeqCst);
                        }
                    }
                }
            }
        }));
    }

    let mut poll = Duration::from_millis(2);
    let ending = loop {
        if let Some(status) = child.try_wait()? {
            break Ending::Exited(exit_code(status));
        }
        if flooded.load(Ordering::SeqCst) {
            kill_group(pid);
            let _ = child.wait();
            break Ending::OutputFlood;
        }
        if start.elapsed() >= timeout {
            kill_group(pid);
            let _ = child.wait();
            break Ending::TimedOut;
        }
        thread::sleep(poll.min(timeout.saturating_sub(start.elapsed())));
        poll = (poll * 2).min(Duration::from_millis(50));
    };
    // Stray descendants would otherwise keep the pipes open.
    kill_group(pid);
    for r in readers {
        let _ = r.join();
    }
    let ending = if ending != Ending::TimedOut && flooded.load(Ordering::SeqCst) {
        Ending::OutputFlood
    } else {
        ending
    };
    let output = std::mem::take(&mut *buf.lock().unwrap_or_else(|e| e.into_inner()));
    Ok(Finished {
        ending,
        pid,
        output,
        elapsed: start.elapsed(),
    })
}

fn exit_code(status: ExitStatus) -> Option<i32> {
    status.code()
}

/// Resolves a program name the way a shell would. Names containing a
/// slash are taken as paths.
pub fn find_program(program: &str) -> Option<std::path::PathBuf> {
    use std::os::unix::fs::PermissionsExt;
    let executable = |p: &std::path::Path| {
        p.metadata()
            .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
            .unwrap_or(false)
    };
    if program.contains('/') {
        let p = std::path::PathBuf::from(program);
        return executable(&p).then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|d| d.join(program))
        .find(|p| executable(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Command {
        let mut c = Command::new("sh");
        c.args(["-c", script]);
        c
    }

    #[test]
    fn captures_output_and_status() {
        let f = run_bounded(sh("echo out; echo err >&2; exit 3"), Duration::from_secs(10), 1 << 20).unwrap();
        assert_eq!(f.ending, Ending::Exited(Some(3)));
        assert!(f.output_text().contains("out") && f.output_text().contains("err"));
    }

    #[test]
    fn timeout_kills_whole_group() {
        let f = run_bounded(sh("sleep 30 & sleep 30; wait"), Duration::from_millis(200), 1 << 20).unwrap();
        assert_eq!(f.ending, Ending::TimedOut);
        assert!(f.elapsed < Duration::from_secs(10));
        assert!(!group_alive(f.pid));
    }

    #[test]
    fn output_cap_stops_flood() {
        let f = run_bounded(sh("yes flood"), Duration::from_secs(20), 64 * 1024).unwrap();
        assert_eq!(f.ending, Ending::OutputFlood);
        assert!(f.output.len() <= 64 * 1024);
    }

    #[test]
    fn tail_keeps_last_lines() {
        let f = run_bounded(sh("seq 1 100"), Duration::from_secs(10), 1 << 20).unwrap();
        assert_eq!(f.tail(2), "99\n100");
    }

    #[test]
    fn program_lookup() {
        assert!(find_program("sh").is_some());
        assert!(find_program("definitely-not-on-path-xyz").is_none());
        assert!(find_program("/nonexistent/tool").is_none());
    }
}
