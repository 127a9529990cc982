use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use navwatch_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = nw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn region_codes() {
    let mut r = NwRegion::Front;
    unsafe {
        assert_eq!(nw_assign_region(0.1, 0.9, &mut r), NwStatus::Ok);
        assert_eq!(r, NwRegion::Left);
        assert_eq!(nw_assign_region(0.5, 0.5, &mut r), NwStatus::Ok);
        assert_eq!(r, NwRegion::Front);
        assert_eq!(nw_assign_region(0.5, 0.51, &mut r), NwStatus::Ok);
        assert_eq!(r, NwRegion::Ground);
        assert_eq!(nw_assign_region(1.2, 0.5, &mut r), NwStatus::OutOfRange);
        assert!(last_error().contains("outside"));
        assert_eq!(nw_assign_region(0.5, 0.5, ptr::null_mut()), NwStatus::NullPointer);
    }
}

#[test]
fn classify_and_parse() {
    let frame = c(r#"{"frame_id": 3, "timestamp_ms": 99, "source": "x", "objects": [{"class": "car", "conf": 0.9, "cx": 0.1, "cy": 0.3, "w": 0.4, "h": 0.4}]}"#);
    let mut anomaly = false;
    unsafe {
        assert_eq!(nw_classify_frame(frame.as_ptr(), 0.10, &mut anomaly), NwStatus::Ok);
        assert!(anomaly);
        assert_eq!(nw_classify_frame(frame.as_ptr(), 1.5, &mut anomaly), NwStatus::InvalidArgument);
        assert_eq!(nw_classify_frame(c("{").as_ptr(), 0.1, &mut anomaly), NwStatus::ParseError);
        assert_eq!(nw_classify_frame(ptr::null(), 0.1, &mut anomaly), NwStatus::NullPointer);

        let mut score = 0.0;
        let reply = c(r#"Sure! {"anomaly_score": 0.85, "reason": "Car and people nearby."}"#);
        assert_eq!(nw_parse_response(reply.as_ptr(), NwOutputMode::Annotation, &mut score), NwStatus::Ok);
        assert_eq!(score, 0.85);
        assert_eq!(nw_parse_response(c("nothing").as_ptr(), NwOutputMode::Full, &mut score), NwStatus::ParseError);
    }
}

#[test]
fn fps_and_cost() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(nw_effective_fps(62.0, 5, 0.6, &mut v), NwStatus::Ok);
        assert!((v - 76.92).abs() < 0.01);
        assert_eq!(nw_effective_fps(62.0, 0, 0.6, &mut v), NwStatus::InvalidArgument);
        assert_eq!(nw_estimate_daily_cost(573, 35, &mut v), NwStatus::Ok);
        assert!((v - 2.44).abs() / 2.44 < 0.01, "{v}");
    }
}

#[test]
fn session_round_trip() {
    let feed: String = (0..60)
        .map(|i| {
            let objects = if (30..60).contains(&i) {
                r#"[{"class": "hole", "conf": 0.8, "cx": 0.5, "cy": 0.8, "w": 0.1, "h": 0.1}]"#
            } else {
                "[]"
            };
            format!("{{\"frame_id\": {i}, \"timestamp_ms\": {}, \"source\": \"t\", \"objects\": {objects}}}\n", i * 33)
        })
        .collect();
    let feed = c(&feed);
    unsafe {
        let mut session = ptr::null_mut();
        assert_eq!(nw_session_new(ptr::null(), &mut session), NwStatus::Ok);
        let mut report = ptr::null_mut();
        assert_eq!(nw_session_run(session, feed.as_ptr(), &mut report), NwStatus::Ok);
        assert_eq!(nw_report_frame_count(report), 60);
        let (mut auc, mut ap) = (0.0, 0.0);
        assert_eq!(nw_report_metrics(report, &mut auc, &mut ap), NwStatus::Ok);
        assert_eq!((auc, ap), (1.0, 1.0));
        let (mut score, mut label) = (0.0, false);
        assert_eq!(nw_report_frame(report, 99, &mut score, &mut label), NwStatus::OutOfRange);
        let mut log = ptr::null_mut();
        assert_eq!(nw_report_event_log(report, &mut log), NwStatus::Ok);
        let text = CStr::from_ptr(log).to_str().unwrap().to_string();
        assert_eq!(text.lines().count(), 60 + 2 + 2);
        nw_string_free(log);
        nw_report_free(report);

        // A broken line still yields a partial report.
        let bad = c("{\"frame_id\": 0, \"timestamp_ms\": 0, \"source\": \"t\", \"objects\": []}\nnot json\n");
        let mut report = ptr::null_mut();
        assert_eq!(nw_session_run(session, bad.as_ptr(), &mut report), NwStatus::PipelineError);
        assert!(last_error().contains("line 2"));
        assert_eq!(nw_report_frame_count(report), 1);
        nw_report_free(report);
        nw_session_free(session);

        let mut session = ptr::null_mut();
        assert_eq!(nw_session_new(c("llm_interval = 7").as_ptr(), &mut session), NwStatus::InvalidArgument);
        assert!(session.is_null());
        assert_eq!(nw_session_new(c("no equals sign").as_ptr(), &mut session), NwStatus::ParseError);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(nw_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/navwatch.h")).unwrap();
    for name in [
        "nw_session_new",
        "nw_session_run",
        "nw_report_metrics",
        "nw_classify_frame",
        "nw_last_error",
        "typedef struct NwSession NwSession",
        "NW_STATUS_PIPELINE_ERROR = 5",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

/// Compiles and runs a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libnavwatch_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
