use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use sqa_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sqa_last_error_message()) }.to_string_lossy().into_owned()
}

fn generate(w: usize, h: usize, seed: u64) -> *mut SqaInstance {
    let mut inst = ptr::null_mut();
    let status = unsafe { sqa_instance_generate(w, h, true, seed, &mut inst) };
    assert_eq!(status, SqaStatus::Ok, "{}", last_error());
    inst
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sqa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn instance_lifecycle() {
    let inst = generate(4, 4, 3);
    unsafe {
        assert_eq!(sqa_instance_n_sites(inst), 16);
        assert_eq!(sqa_instance_n_bonds(inst), 32);
        assert!(sqa_instance_ground_energy(inst).is_nan());

        let mut e0 = 0.0;
        let mut spins = vec![0i8; 16];
        assert_eq!(sqa_instance_ground_state(inst, &mut e0, spins.as_mut_ptr()), SqaStatus::Ok);
        assert!(spins.iter().all(|&s| s == 1 || s == -1));
        assert_eq!(sqa_instance_ground_energy(inst), e0);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("i.txt").to_str().unwrap()).unwrap();
        assert_eq!(sqa_instance_write(inst, path.as_ptr()), SqaStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(sqa_instance_read(path.as_ptr(), &mut back), SqaStatus::Ok);
        assert_eq!(sqa_instance_n_bonds(back), 32);
        assert_eq!(sqa_instance_ground_energy(back), e0);
        sqa_instance_free(back);
        sqa_instance_free(inst);
        sqa_instance_free(ptr::null_mut());
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(sqa_instance_generate(1, 4, true, 0, &mut inst), SqaStatus::InvalidArgument);
        assert!(inst.is_null());
        assert!(last_error().contains("2x2"), "{}", last_error());

        assert_eq!(sqa_instance_generate(2, 2, true, 0, ptr::null_mut()), SqaStatus::NullPointer);

        let missing = CString::new("/nonexistent/instance.txt").unwrap();
        assert_eq!(sqa_instance_read(missing.as_ptr(), &mut inst), SqaStatus::Io);

        let big = generate(6, 6, 0);
        let mut e0 = 0.0;
        assert_eq!(sqa_instance_ground_state(big, &mut e0, ptr::null_mut()), SqaStatus::Capacity);
        let mut zz = 0.0;
        assert_eq!(sqa_ed_zz(big, 1.0, 0.0, 1.0, &mut zz), SqaStatus::Capacity);
        sqa_instance_free(big);

        let small = generate(3, 3, 0);
        assert_eq!(sqa_ed_zz(small, 1.0, 0.0, 1.0, &mut zz), SqaStatus::Ok);
        assert!(last_error().is_empty());
        assert!(zz.abs() <= 1.0);
        sqa_instance_free(small);
    }
}

#[test]
fn anneal_through_the_abi() {
    let inst = generate(3, 3, 7);
    unsafe {
        let mut e0 = 0.0;
        assert_eq!(sqa_instance_ground_state(inst, &mut e0, ptr::null_mut()), SqaStatus::Ok);
        let mut opts = sqa_anneal_options_default();
        opts.beta = 5.0;
        opts.t_final = 2000;
        opts.seed = 11;
        let mut a = std::mem::zeroed::<SqaAnnealResult>();
        let mut b = std::mem::zeroed::<SqaAnnealResult>();
        assert_eq!(sqa_anneal(inst, &opts, &mut a), SqaStatus::Ok, "{}", last_error());
        assert_eq!(sqa_anneal(inst, &opts, &mut b), SqaStatus::Ok);
        assert_eq!(a, b);
        assert!(a.e_residual >= 0.0);
        assert_eq!(a.cost, 2000.0 * a.mean_cluster_size);
        assert_eq!(a.m_slices, 16);

        opts.driver = SqaDriver::Tf;
        assert_eq!(sqa_anneal(inst, &opts, &mut a), SqaStatus::InvalidArgument);
        assert!(last_error().contains("tf"));
        sqa_instance_free(inst);
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "sqa.h"

int main(void) {
    SqaInstance *inst = NULL;
    if (sqa_instance_generate(3, 3, true, 5, &inst) != SQA_STATUS_OK) return 10;
    double e0 = 0.0;
    if (sqa_instance_ground_state(inst, &e0, NULL) != SQA_STATUS_OK) return 11;
    SqaAnnealOptions opts = sqa_anneal_options_default();
    opts.beta = 4.0;
    opts.t_final = 500;
    SqaAnnealResult r;
    if (sqa_anneal(inst, &opts, &r) != SQA_STATUS_OK) return 12;
    if (!(r.e_residual >= 0.0)) return 13;
    SqaInstance *bad = NULL;
    if (sqa_instance_generate(1, 1, true, 0, &bad) != SQA_STATUS_INVALID_ARGUMENT) return 14;
    if (sqa_last_error_message()[0] == '\0') return 15;
    printf("%s %.6f %.6f\n", sqa_version(), e0, r.e_residual);
    sqa_instance_free(inst);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let lib = target_dir().join("libsqa_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}
