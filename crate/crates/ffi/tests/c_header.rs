//! Compiles and runs a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "owadj.h"

int main(void) {
    double y[] = {1, 3, 2, 4};
    uint8_t z[] = {1, 1, 0, 0};
    double x[] = {0.5, 1.5, -0.5, 2.0};
    OwadjDataset *ds = NULL;
    if (owadj_dataset_new(y, z, x, 4, 1, false, &ds) != OWADJ_STATUS_OK) return 1;
    OwadjEstimate est;
    if (owadj_estimate(ds, "unadj", OWADJ_ESTIMAND_RD, 0.95, &est) != OWADJ_STATUS_OK) return 2;
    if (est.point != -1.0) return 3;
    OwadjStatus st = owadj_estimate(ds, "ow", OWADJ_ESTIMAND_LOG_RR, 0.95, &est);
    if (st != OWADJ_STATUS_ESTIMAND_REQUIRES_BINARY) return 4;
    if (strstr(owadj_last_error_message(), "binary") == NULL) return 5;
    owadj_dataset_free(ds);
    printf("%s\n", owadj_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libowadj_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .expect("C compiler available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
