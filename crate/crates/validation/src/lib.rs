//! Helpers for the acceptance suite in `tests/acceptance.rs`.

use std::path::PathBuf;
use std::process::Command;

/// Path to the `vbm` binary next to the running test executable, building it
/// first when this package is tested on its own.
pub fn vbm_binary() -> PathBuf {
    let exe = std::env::current_exe().expect("test executable path");
    let profile_dir = exe.parent().and_then(|deps| deps.parent()).expect("target/<profile>/deps layout");
    let bin = profile_dir.join(format!("vbm{}", std::env::consts::EXE_SUFFIX));
    if !bin.exists() {
        let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
        let status = Command::new(cargo)
            .args(["build", "-p", "vbm-cli", "--bin", "vbm"])
            .status()
            .expect("cargo runs");
        assert!(status.success(), "building vbm failed");
    }
    bin
}

/// The `examples/` directory of the CLI crate.
pub fn cli_examples() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/examples")
}
