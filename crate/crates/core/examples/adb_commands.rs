//! The adb driver against a recording command runner: shows the exact
//! command lines a phone session would issue, without a phone.
//!
//! ```bash
//! cargo run --example adb_commands
//! ADB_PATH=/opt/android/platform-tools/adb cargo run --example adb_commands -- --real emulator-5554
//! ```

use tapwise::device::adb::{escape_text, fake_png, list_serials, CommandOutput};
use tapwise::device::{AdbDevice, Device, ProcessRunner, RecordingRunner};
use tapwise::{bbox_center, BoundingBox, Direction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) == Some("--real") {
        let adb = tapwise::device::adb::adb_path_from_env();
        println!("attached: {:?}", list_serials(&mut ProcessRunner, &adb)?);
        let serial = args.get(1).ok_or("--real needs a serial")?;
        let mut dev = AdbDevice::connect_default(serial)?;
        println!("{:?}", dev.info());
        println!("{} packages installed", dev.list_apps()?.len());
        return Ok(());
    }

    let runner = RecordingRunner::new()
        .respond("screencap", CommandOutput::ok(fake_png(1080, 2400)))
        .respond("pm list packages", CommandOutput::ok(b"package:com.android.chrome\npackage:com.google.android.gm\n".to_vec()));
    let mut dev = AdbDevice::connect(runner.clone(), "adb", "emulator-5554")?;
    let info = dev.info().clone();
    println!("screen {}x{}", info.screen_w, info.screen_h);

    dev.reset_cache(&["com.android.chrome".to_string()])?;
    dev.launch_app("com.google.android.gm")?;
    let b = BoundingBox::new(0.1, 0.2, 0.3, 0.25)?;
    dev.tap(bbox_center(&b, info.screen_w, info.screen_h)?)?;
    dev.swipe(Direction::Up)?;
    dev.type_text("meeting agenda")?;
    let apps = dev.list_apps()?;
    println!("apps: {apps:?}");
    // Shell metacharacters are refused rather than escaped.
    println!("typing `a;b`: {:?}", dev.type_text("a;b").unwrap_err());
    println!("escape_text(\"hello world\") = {}", escape_text("hello world")?);

    println!("\ncommands issued:");
    for c in runner.commands() {
        println!("  {c}");
    }
    Ok(())
}
