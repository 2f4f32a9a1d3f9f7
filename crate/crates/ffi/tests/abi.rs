use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use tri_ffi::*;

fn toy(file: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus/toy").join(file);
    CString::new(p.display().to_string()).unwrap()
}

unsafe fn text(p: *const std::ffi::c_char) -> Option<String> {
    (!p.is_null()).then(|| CStr::from_ptr(p).to_string_lossy().into_owned())
}

#[test]
fn session_round_trip() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(
            tri_session_open(toy("manifest.jsonl").as_ptr(), toy("transcripts").as_ptr(), &mut s),
            TriStatus::Ok
        );
        assert_eq!(tri_session_len(s), 5);
        let mut r = ptr::null_mut();
        let strategies = CString::new("tri,plurality").unwrap();
        assert_eq!(tri_session_run(s, strategies.as_ptr(), 2, &mut r), TriStatus::Ok);
        assert_eq!(tri_report_len(r), 10);
        assert_eq!(tri_report_errors(r), 0);

        let mut view = std::mem::zeroed::<TriDecisionView>();
        assert_eq!(tri_report_get(r, 0, &mut view), TriStatus::Ok);
        assert_eq!(text(view.problem_id).as_deref(), Some("toy-next"));
        assert_eq!(text(view.strategy).as_deref(), Some("tri"));
        assert_eq!(text(view.class_id).as_deref(), Some("next-fwd-00"));
        assert!(view.selected);
        assert_eq!(tri_report_get(r, 6, &mut view), TriStatus::Ok);
        assert_eq!(text(view.problem_id).as_deref(), Some("toy-square"));
        assert!(!view.selected && view.class_id.is_null());
        assert_eq!(text(view.reason).as_deref(), Some("all schemes failed"));
        assert_eq!(tri_report_get(r, 10, &mut view), TriStatus::OutOfRange);
        assert!(text(tri_last_error()).unwrap().contains("decision 10"));

        let json = text(tri_report_json(r)).unwrap();
        assert_eq!(json.lines().count(), 10);

        let (mut counts, mut m) = (TriCounts::default(), TriMetrics::default());
        let tri = CString::new("tri").unwrap();
        assert_eq!(tri_report_metrics(r, tri.as_ptr(), &mut counts, &mut m), TriStatus::Ok);
        assert_eq!((counts.n1, counts.n5), (4, 1));
        assert_eq!(m.reliable_accuracy, 1.0);
        let plu = CString::new("plurality").unwrap();
        assert_eq!(tri_report_metrics(r, plu.as_ptr(), ptr::null_mut(), &mut m), TriStatus::Ok);
        assert!(m.precision_abs.is_nan());
        let maj = CString::new("majority").unwrap();
        assert_eq!(tri_report_metrics(r, maj.as_ptr(), ptr::null_mut(), &mut m), TriStatus::InvalidArgument);

        tri_report_free(r);
        tri_session_free(s);
        tri_report_free(ptr::null_mut());
        tri_session_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(tri_session_open(ptr::null(), ptr::null(), &mut s), TriStatus::NullArgument);
        let missing = CString::new("/nonexistent/manifest.jsonl").unwrap();
        assert_eq!(tri_session_open(missing.as_ptr(), ptr::null(), &mut s), TriStatus::Corpus);
        assert!(s.is_null());
        assert!(text(tri_last_error()).is_some());
        let bad = [0xffu8, 0];
        assert_eq!(tri_session_open(bad.as_ptr().cast(), ptr::null(), &mut s), TriStatus::InvalidUtf8);

        assert_eq!(tri_session_open(toy("manifest.jsonl").as_ptr(), ptr::null(), &mut s), TriStatus::Ok);
        assert!(tri_last_error().is_null());
        let mut r = ptr::null_mut();
        let vote = CString::new("vote").unwrap();
        assert_eq!(tri_session_run(s, vote.as_ptr(), 1, &mut r), TriStatus::InvalidArgument);
        assert!(text(tri_last_error()).unwrap().contains("vote"));
        let plu = CString::new("plurality").unwrap();
        assert_eq!(tri_session_run(s, plu.as_ptr(), 1, &mut r), TriStatus::Ok);
        // Without transcripts the problem needing generated inputs is skipped.
        assert_eq!(tri_report_errors(r), 1);
        assert_eq!(tri_report_len(r), 4);
        tri_report_free(r);
        tri_session_free(s);
        assert_eq!(tri_session_run(ptr::null(), ptr::null(), 1, &mut r), TriStatus::NullArgument);
    }
}

#[test]
fn pure_entry_points() {
    unsafe {
        assert_eq!(text(tri_version()).as_deref(), Some(env!("CARGO_PKG_VERSION")));
        let mut m = TriMetrics::default();
        let c = TriCounts { n1: 3, n2: 1, n3: 0, n4: 0, n5: 1 };
        assert_eq!(tri_metrics(&c, &mut m), TriStatus::Ok);
        assert_eq!(m.reliable_accuracy, 0.75);
        assert_eq!(m.overall_accuracy, 0.8);
        assert!(m.precision_abs == 1.0 && m.recall_abs == 0.5);
        assert_eq!(tri_metrics(ptr::null(), &mut m), TriStatus::NullArgument);

        let mut h = -1.0;
        let uniform = [0.25; 4];
        assert_eq!(tri_entropy(uniform.as_ptr(), 4, &mut h), TriStatus::Ok);
        assert!((h - 4f64.ln()).abs() < 1e-12);
        let bad = [0.5, 0.6];
        assert_eq!(tri_entropy(bad.as_ptr(), 2, &mut h), TriStatus::InvalidArgument);

        let mut t = TriTruth::Undefined;
        let term = CString::new("(forall x (values 1 2 3) (= x x))").unwrap();
        assert_eq!(tri_property_eval(term.as_ptr(), 1, 3, &mut t), TriStatus::Ok);
        assert_eq!(t, TriTruth::True);
        let term = CString::new("(= #D 1)").unwrap();
        assert_eq!(tri_property_eval(term.as_ptr(), 1, 3, &mut t), TriStatus::Ok);
        assert_eq!(t, TriTruth::Demonic);
        let term = CString::new("(forall x").unwrap();
        assert_eq!(tri_property_eval(term.as_ptr(), 1, 3, &mut t), TriStatus::Parse);
        let term = CString::new("true").unwrap();
        assert_eq!(tri_property_eval(term.as_ptr(), 0, 3, &mut t), TriStatus::InvalidArgument);
    }
}
