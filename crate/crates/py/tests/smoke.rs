//! Runs python/smoke_test.py in an embedded interpreter with the module
//! registered in-process, so no wheel build is needed.

use std::ffi::CString;
use std::path::PathBuf;

use driveforge::driveforge as forge_module;
use pyo3::prelude::*;

#[test]
fn python_smoke_script() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap();
    let script = std::fs::read_to_string(root.join("python/smoke_test.py")).unwrap();
    pyo3::append_to_inittab!(forge_module);
    Python::attach(|py| {
        let sys = py.import("sys").unwrap();
        sys.setattr("argv", vec!["smoke_test.py".to_string(), root.display().to_string()]).unwrap();
        let globals = pyo3::types::PyDict::new(py);
        globals.set_item("__name__", "__main__").unwrap();
        globals.set_item("__file__", root.join("python/smoke_test.py").display().to_string()).unwrap();
        let code = CString::new(script).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.display(py);
            panic!("smoke script failed: {e}");
        }
    });
}
