//! The exported C functions, called from Rust and from a compiled C program.

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ialp_ffi::*;

fn new_agent(items: usize, seed: u64) -> *mut IalpAgent {
    let mut agent = ptr::null_mut();
    let status = unsafe { ialp_agent_new(8, 10, items, 0.9, seed, &mut agent) };
    assert_eq!(status, IalpStatus::Ok);
    assert!(!agent.is_null());
    agent
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ialp_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn distribution_sums_to_one_and_greedy_is_its_argmax() {
    let agent = new_agent(12, 1);
    let history = [3usize, 7, 1];
    let mut probs = vec![0.0; 12];
    let status = unsafe {
        ialp_agent_action_distribution(agent, history.as_ptr(), 3, probs.as_mut_ptr(), 12)
    };
    assert_eq!(status, IalpStatus::Ok);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut best = usize::MAX;
    assert_eq!(
        unsafe { ialp_agent_greedy_action(agent, history.as_ptr(), 3, &mut best) },
        IalpStatus::Ok
    );
    let expected = (0..12).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
    assert_eq!(best, expected);
    let mut q = vec![f64::NAN; 12];
    assert_eq!(
        unsafe { ialp_agent_q_values(agent, history.as_ptr(), 3, q.as_mut_ptr(), 12) },
        IalpStatus::Ok
    );
    assert!(q.iter().all(|v| v.is_finite()));
    assert_eq!(unsafe { ialp_agent_num_items(agent) }, 12);
    unsafe { ialp_agent_free(agent) };
}

#[test]
fn save_and_load_preserve_the_policy() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("a.ckpt").to_str().unwrap()).unwrap();
    let agent = new_agent(9, 2);
    assert_eq!(
        unsafe { ialp_agent_save(agent, path.as_ptr()) },
        IalpStatus::Ok
    );
    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { ialp_agent_load(path.as_ptr(), &mut loaded) },
        IalpStatus::Ok
    );
    for start in 0..9usize {
        let history = [start, (start + 4) % 9];
        let (mut a, mut b) = (0, 0);
        unsafe {
            ialp_agent_greedy_action(agent, history.as_ptr(), 2, &mut a);
            ialp_agent_greedy_action(loaded, history.as_ptr(), 2, &mut b);
        }
        assert_eq!(a, b);
    }
    unsafe {
        ialp_agent_free(agent);
        ialp_agent_free(loaded);
    }
}

#[test]
fn failures_return_codes_and_messages() {
    let agent = new_agent(5, 3);
    let history = [1usize];
    let mut small = [0.0; 4];
    let status = unsafe {
        ialp_agent_action_distribution(agent, history.as_ptr(), 1, small.as_mut_ptr(), 4)
    };
    assert_eq!(status, IalpStatus::BufferTooSmall);
    assert!(last_error().contains("4"), "{}", last_error());

    let bad = [5usize];
    let mut out = 0;
    let status = unsafe { ialp_agent_greedy_action(agent, bad.as_ptr(), 1, &mut out) };
    assert_eq!(status, IalpStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { ialp_agent_greedy_action(agent, history.as_ptr(), 0, &mut out) },
        IalpStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { ialp_agent_greedy_action(ptr::null(), history.as_ptr(), 1, &mut out) },
        IalpStatus::NullPointer
    );

    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { ialp_agent_new(8, 10, 5, 1.5, 0, &mut handle) },
        IalpStatus::InvalidArgument
    );
    assert!(handle.is_null());

    let missing = CString::new("/nonexistent/dir/agent.ckpt").unwrap();
    assert_eq!(
        unsafe { ialp_agent_load(missing.as_ptr(), &mut handle) },
        IalpStatus::Io
    );

    // a success clears the message
    assert_eq!(
        unsafe { ialp_agent_greedy_action(agent, history.as_ptr(), 1, &mut out) },
        IalpStatus::Ok
    );
    assert_eq!(last_error(), "");
    unsafe {
        ialp_agent_free(agent);
        ialp_agent_free(ptr::null_mut());
    }
}

#[test]
fn corrupt_checkpoint_is_a_checkpoint_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("junk.ckpt");
    std::fs::write(&file, b"not a checkpoint").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { ialp_agent_load(path.as_ptr(), &mut handle) },
        IalpStatus::Checkpoint
    );
    assert!(handle.is_null());
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "ialp.h"

int main(void) {
    IalpAgent *agent = NULL;
    if (ialp_agent_new(8, 10, 6, 0.9, 7, &agent) != IALP_STATUS_OK) return 1;
    size_t history[2] = {2, 4};
    double probs[6];
    if (ialp_agent_action_distribution(agent, history, 2, probs, 6) != IALP_STATUS_OK) return 2;
    double total = 0.0;
    for (int i = 0; i < 6; i++) total += probs[i];
    size_t best = 99;
    if (ialp_agent_greedy_action(agent, history, 2, &best) != IALP_STATUS_OK) return 3;
    IalpStatus s = ialp_agent_greedy_action(agent, history, 0, &best);
    printf("%.6f %zu %s %s\n", total, best, ialp_status_name(s), ialp_last_error()[0] ? "msg" : "none");
    ialp_agent_free(agent);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libialp_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or {} missing", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let build = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        build.status.success(),
        "{}",
        String::from_utf8_lossy(&build.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let text = String::from_utf8(run.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields[0], "1.000000");
    assert!(fields[1].parse::<usize>().unwrap() < 6);
    assert_eq!(&fields[2..], ["invalid_argument", "msg"]);
}
