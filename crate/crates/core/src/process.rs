//! Subprocess execution with a wall-clock limit.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessOutput {
    /// `None` when the process was killed or ended by a signal.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub wall_time: Duration,
    pub timed_out: bool,
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Runs `cmd`, feeding `stdin_text`, killing it once `limit` elapses.
pub fn run_with_limit(cmd: &mut Command, stdin_text: &str, limit: Duration) -> std::io::Result<ProcessOutput> {
    let start = Instant::now();
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        // own process group, so solver subprocesses die with the parent
        cmd.process_group(0);
    }
    let mut child = cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn()?;

    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let input = stdin_text.as_bytes().to_vec();
    let mut stdin = child.stdin.take();
    let feeder = thread::spawn(move || {
        if let Some(s) = stdin.as_mut() {
            // a program may exit without reading its input
            let _ = s.write_all(&input);
        }
    });

    let (status, timed_out) = match child.wait_timeout(limit)? {
        Some(status) => (Some(status), false),
        None => {
            #[cfg(unix)]
            unsafe {
                libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            (None, true)
        }
    };
    let _ = feeder.join();
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(ProcessOutput {
        exit_code: status.and_then(|s| s.code()),
        stdout,
        stderr,
        wall_time: start.elapsed(),
        timed_out,
    })
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    #[test]
    fn captures_output_and_exit_code() {
        let out = run_with_limit(Command::new("sh").args(["-c", "cat; echo err >&2; exit 3"]), "hello", Duration::from_secs(5))
            .unwrap();
        assert_eq!(out.stdout, "hello");
        assert_eq!(out.stderr, "err\n");
        assert_eq!(out.exit_code, Some(3));
        assert!(!out.timed_out);
    }

    #[test]
    fn kills_at_limit() {
        let out = run_with_limit(Command::new("sleep").arg("5"), "", Duration::from_millis(100)).unwrap();
        assert!(out.timed_out);
        assert_eq!(out.exit_code, None);
        assert!(out.wall_time < Duration::from_secs(4));
    }

    #[test]
    fn kills_whole_process_group() {
        let out = run_with_limit(Command::new("sh").args(["-c", "sleep 5 & sleep 5"]), "", Duration::from_millis(100)).unwrap();
        assert!(out.timed_out);
        assert!(out.wall_time < Duration::from_secs(4));
    }

    #[test]
    fn missing_binary_is_an_error() {
        assert!(run_with_limit(&mut Command::new("/nonexistent/bin"), "", Duration::from_secs(1)).is_err());
    }
}
