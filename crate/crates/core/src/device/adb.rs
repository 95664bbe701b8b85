//! Android phones through the `adb` executable. Every operation is one
//! `adb -s SERIAL ...` invocation issued through a [`CommandRunner`], so tests
//! can substitute a recording fake for the real process.

use std::collections::VecDeque;
use std::process::Command;
use std::sync::{Arc, Mutex};

use super::{swipe_geometry, Device, DeviceError, DeviceInfo, Driver};
use crate::action::Direction;
use crate::geometry::Point;
use crate::trace::Observation;

pub const ENV_ADB_PATH: &str = "ADB_PATH";
pub const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];
/// Packages cleared when no scope is configured.
pub const DEFAULT_CACHE_SCOPE: &[&str] = &["com.android.chrome"];

/// Characters rejected by [`escape_text`].
const SHELL_METACHARACTERS: &str = "\\'\"`$&|;<>()*?~#%!{}[]^";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandOutput {
    pub success: bool,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl CommandOutput {
    pub fn ok(stdout: impl Into<Vec<u8>>) -> Self {
        CommandOutput { success: true, stdout: stdout.into(), stderr: String::new() }
    }

    pub fn failed(stderr: impl Into<String>) -> Self {
        CommandOutput { success: false, stdout: Vec::new(), stderr: stderr.into() }
    }
}

pub trait CommandRunner: Send {
    /// Runs `program args...`; `Err` only when the program could not be started.
    fn run(&mut self, program: &str, args: &[String]) -> Result<CommandOutput, String>;
}

/// Spawns real processes.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProcessRunner;

impl CommandRunner for ProcessRunner {
    fn run(&mut self, program: &str, args: &[String]) -> Result<CommandOutput, String> {
        let out = Command::new(program).args(args).output().map_err(|e| format!("cannot run {program}: {e}"))?;
        Ok(CommandOutput {
            success: out.status.success(),
            stdout: out.stdout,
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        })
    }
}

/// Records every invocation and answers from a list of `(needle, output)`
/// rules; the first rule whose needle occurs in the joined argument string
/// wins, and a rule is consumed when it is marked once-only. Unmatched calls
/// succeed with empty output.
#[derive(Debug, Clone, Default)]
pub struct RecordingRunner {
    log: Arc<Mutex<Vec<String>>>,
    rules: Arc<Mutex<VecDeque<(String, CommandOutput, bool)>>>,
}

impl RecordingRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond(self, needle: impl Into<String>, output: CommandOutput) -> Self {
        self.rules.lock().unwrap().push_back((needle.into(), output, false));
        self
    }

    pub fn respond_once(self, needle: impl Into<String>, output: CommandOutput) -> Self {
        self.rules.lock().unwrap().push_back((needle.into(), output, true));
        self
    }

    /// Command lines issued so far, as `program arg arg ...`.
    pub fn commands(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }
}

impl CommandRunner for RecordingRunner {
    fn run(&mut self, program: &str, args: &[String]) -> Result<CommandOutput, String> {
        let joined = args.join(" ");
        self.log.lock().unwrap().push(format!("{program} {joined}"));
        let mut rules = self.rules.lock().unwrap();
        let Some(pos) = rules.iter().position(|(needle, _, _)| joined.contains(needle.as_str())) else {
            return Ok(CommandOutput::ok(Vec::new()));
        };
        let (_, output, once) = rules[pos].clone();
        if once {
            rules.remove(pos);
        }
        Ok(output)
    }
}

/// `ADB_PATH` or plain `adb`.
pub fn adb_path_from_env() -> String {
    std::env::var(ENV_ADB_PATH).ok().filter(|p| !p.is_empty()).unwrap_or_else(|| "adb".to_string())
}

/// Spaces become `%s`; shell metacharacters and control characters are rejected.
pub fn escape_text(text: &str) -> Result<String, DeviceError> {
    if text.is_empty() || text.chars().any(|c| c.is_control() || SHELL_METACHARACTERS.contains(c)) {
        return Err(DeviceError::UnsafeText(text.to_string()));
    }
    Ok(format!("\"{}\"", text.replace(' ', "%s")))
}

/// Width and height from a PNG's IHDR chunk.
pub fn png_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    if bytes.len() < 24 || bytes[..8] != PNG_SIGNATURE || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let w = u32::from_be_bytes(bytes[16..20].try_into().ok()?);
    let h = u32::from_be_bytes(bytes[20..24].try_into().ok()?);
    (w > 0 && h > 0).then_some((w, h))
}

/// Ids from `pm list packages` output, prefix stripped, sorted and de-duplicated.
pub fn parse_package_list(stdout: &str) -> Vec<String> {
    let mut ids: Vec<String> = stdout
        .lines()
        .filter_map(|l| l.trim().strip_prefix("package:"))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Serials in state `device` from `adb devices` output.
pub fn parse_device_list(stdout: &str) -> Vec<String> {
    stdout
        .lines()
        .skip_while(|l| !l.starts_with("List of devices"))
        .skip(1)
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some(serial), Some("device")) => Some(serial.to_string()),
                _ => None,
            }
        })
        .collect()
}

/// Serials of attached phones.
pub fn list_serials(runner: &mut dyn CommandRunner, adb_path: &str) -> Result<Vec<String>, DeviceError> {
    let out = runner.run(adb_path, &["devices".to_string()]).map_err(DeviceError::Unreachable)?;
    if !out.success {
        return Err(DeviceError::Unreachable(out.stderr.trim().to_string()));
    }
    Ok(parse_device_list(&String::from_utf8_lossy(&out.stdout)))
}

fn looks_unreachable(stderr: &str) -> bool {
    let s = stderr.to_ascii_lowercase();
    ["not found", "offline", "no devices", "unauthorized", "device still"].iter().any(|m| s.contains(m))
}

pub struct AdbDevice<R: CommandRunner = ProcessRunner> {
    runner: R,
    adb_path: String,
    serial: String,
    info: DeviceInfo,
}

impl AdbDevice<ProcessRunner> {
    /// Connects to `serial` using `ADB_PATH` (or `adb`).
    pub fn connect_default(serial: &str) -> Result<Self, DeviceError> {
        AdbDevice::connect(ProcessRunner, adb_path_from_env(), serial)
    }
}

impl<R: CommandRunner> AdbDevice<R> {
    /// Opens a session; screen dimensions come from a first screenshot.
    pub fn connect(runner: R, adb_path: impl Into<String>, serial: impl Into<String>) -> Result<Self, DeviceError> {
        let serial = serial.into();
        let mut dev = AdbDevice {
            runner,
            adb_path: adb_path.into(),
            info: DeviceInfo { driver: Driver::Adb, screen_w: 0, screen_h: 0, serial_or_world_id: serial.clone(), source: None },
            serial,
        };
        let png = dev.screencap()?;
        let (w, h) = png_dimensions(&png).ok_or_else(|| DeviceError::Command("screencap did not return a PNG".into()))?;
        dev.info.screen_w = w;
        dev.info.screen_h = h;
        Ok(dev)
    }

    pub fn runner(&self) -> &R {
        &self.runner
    }

    fn adb(&mut self, args: &[&str]) -> Result<Vec<u8>, DeviceError> {
        let mut full = vec!["-s".to_string(), self.serial.clone()];
        full.extend(args.iter().map(|a| a.to_string()));
        let out = self.runner.run(&self.adb_path, &full).map_err(DeviceError::Unreachable)?;
        if !out.success {
            let msg = out.stderr.trim().to_string();
            return Err(if looks_unreachable(&msg) { DeviceError::Unreachable(msg) } else { DeviceError::Command(msg) });
        }
        Ok(out.stdout)
    }

    fn shell(&mut self, args: &[&str]) -> Result<Vec<u8>, DeviceError> {
        let mut full = vec!["shell"];
        full.extend_from_slice(args);
        self.adb(&full)
    }

    fn screencap(&mut self) -> Result<Vec<u8>, DeviceError> {
        let png = self.adb(&["exec-out", "screencap", "-p"])?;
        if png.is_empty() {
            return Err(DeviceError::EmptyCapture);
        }
        Ok(png)
    }
}

impl<R: CommandRunner> Device for AdbDevice<R> {
    fn info(&self) -> &DeviceInfo {
        &self.info
    }

    fn capture_screenshot(&mut self) -> Result<Observation, DeviceError> {
        let png = self.screencap()?;
        let (w, h) = png_dimensions(&png).ok_or_else(|| DeviceError::Command("screencap did not return a PNG".into()))?;
        if (w, h) != (self.info.screen_w, self.info.screen_h) {
            return Err(DeviceError::Command(format!(
                "screen size changed from {}x{} to {w}x{h}",
                self.info.screen_w, self.info.screen_h
            )));
        }
        Ok(Observation::new(png, "png", w, h, 0))
    }

    fn tap(&mut self, p: Point) -> Result<(), DeviceError> {
        let (x, y) = (p.x().to_string(), p.y().to_string());
        self.shell(&["input", "tap", &x, &y]).map(drop)
    }

    fn swipe(&mut self, direction: Direction) -> Result<(), DeviceError> {
        let g = swipe_geometry(direction, self.info.screen_w, self.info.screen_h)?;
        let args = [g.from.x(), g.from.y(), g.to.x(), g.to.y()].map(|v| v.to_string());
        let dur = g.duration_ms.to_string();
        self.shell(&["input", "swipe", &args[0], &args[1], &args[2], &args[3], &dur]).map(drop)
    }

    fn type_text(&mut self, text: &str) -> Result<(), DeviceError> {
        let escaped = escape_text(text)?;
        self.shell(&["input", "text", &escaped]).map(drop)
    }

    fn list_apps(&mut self) -> Result<Vec<String>, DeviceError> {
        let out = self.shell(&["pm", "list", "packages"])?;
        Ok(parse_package_list(&String::from_utf8_lossy(&out)))
    }

    fn launch_app(&mut self, app_id: &str) -> Result<(), DeviceError> {
        let out = self.shell(&["monkey", "-p", app_id, "-c", "android.intent.category.LAUNCHER", "1"])?;
        let text = String::from_utf8_lossy(&out);
        if text.contains("No activities found") {
            return Err(DeviceError::UnknownApp(app_id.to_string()));
        }
        Ok(())
    }

    fn reset_cache(&mut self, scope: &[String]) -> Result<(), DeviceError> {
        for pkg in scope {
            let out = self.shell(&["pm", "clear", pkg])?;
            let text = String::from_utf8_lossy(&out);
            if !text.contains("Success") {
                log::warn!("pm clear {pkg}: {}", text.trim());
            }
        }
        Ok(())
    }
}

/// A minimal valid-looking PNG header of the given size, for fakes.
pub fn fake_png(w: u32, h: u32) -> Vec<u8> {
    let mut v = PNG_SIGNATURE.to_vec();
    v.extend_from_slice(&13u32.to_be_bytes());
    v.extend_from_slice(b"IHDR");
    v.extend_from_slice(&w.to_be_bytes());
    v.extend_from_slice(&h.to_be_bytes());
    v.extend_from_slice(&[8, 6, 0, 0, 0, 0, 0, 0, 0]);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phone() -> (AdbDevice<RecordingRunner>, RecordingRunner) {
        let runner = RecordingRunner::new()
            .respond("screencap", CommandOutput::ok(fake_png(1080, 1920)))
            .respond("pm list packages", CommandOutput::ok("package:com.x\npackage:com.a\npackage:com.x\n\n"))
            .respond("pm clear", CommandOutput::ok("Success\n"));
        let dev = AdbDevice::connect(runner.clone(), "adb", "emulator-5554").unwrap();
        (dev, runner)
    }

    #[test]
    fn connect_reads_dimensions() {
        let (dev, runner) = phone();
        assert_eq!((dev.info().screen_w, dev.info().screen_h), (1080, 1920));
        assert_eq!(runner.commands(), vec!["adb -s emulator-5554 exec-out screencap -p"]);
    }

    #[test]
    fn command_strings() {
        let (mut dev, runner) = phone();
        dev.tap(Point::new(540, 1152, 1080, 1920).unwrap()).unwrap();
        dev.swipe(Direction::Up).unwrap();
        dev.type_text("hello world").unwrap();
        assert_eq!(dev.list_apps().unwrap(), vec!["com.a", "com.x"]);
        dev.launch_app("com.x").unwrap();
        dev.reset_cache(&["com.android.chrome".to_string()]).unwrap();
        let obs = dev.capture_screenshot().unwrap();
        assert_eq!(&obs.bytes[..8], &PNG_SIGNATURE);
        let cmds = runner.commands();
        assert_eq!(
            &cmds[1..],
            &[
                "adb -s emulator-5554 shell input tap 540 1152",
                "adb -s emulator-5554 shell input swipe 540 1280 540 640 300",
                "adb -s emulator-5554 shell input text \"hello%sworld\"",
                "adb -s emulator-5554 shell pm list packages",
                "adb -s emulator-5554 shell monkey -p com.x -c android.intent.category.LAUNCHER 1",
                "adb -s emulator-5554 shell pm clear com.android.chrome",
                "adb -s emulator-5554 exec-out screencap -p",
            ]
        );
    }

    #[test]
    fn escaping_rules() {
        assert_eq!(escape_text("hello world").unwrap(), "\"hello%sworld\"");
        for bad in ["a;b", "$(rm)", "x|y", "50%", "it's", "a\nb", ""] {
            assert!(matches!(escape_text(bad), Err(DeviceError::UnsafeText(_))), "{bad:?}");
        }
    }

    #[test]
    fn unplugged_serial_is_unreachable() {
        let runner = RecordingRunner::new().respond("screencap", CommandOutput::failed("error: device 'zz' not found"));
        assert!(matches!(AdbDevice::connect(runner, "adb", "zz"), Err(DeviceError::Unreachable(_))));
    }

    #[test]
    fn empty_capture() {
        let runner = RecordingRunner::new()
            .respond_once("screencap", CommandOutput::ok(fake_png(10, 20)))
            .respond("screencap", CommandOutput::ok(Vec::new()));
        let mut dev = AdbDevice::connect(runner, "adb", "s").unwrap();
        assert_eq!(dev.capture_screenshot(), Err(DeviceError::EmptyCapture));
    }

    #[test]
    fn package_and_device_lists() {
        assert!(parse_package_list("").is_empty());
        assert_eq!(parse_package_list("package:com.x\n"), vec!["com.x"]);
        let out = "* daemon started\nList of devices attached\nemulator-5554\tdevice\nR58M\tunauthorized\n\n";
        assert_eq!(parse_device_list(out), vec!["emulator-5554"]);
    }
}
