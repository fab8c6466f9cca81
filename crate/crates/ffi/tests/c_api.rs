use std::ffi::{c_char, CStr, CString};
use std::ptr;

use distddp_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { distddp_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn builtin(name: &str) -> *mut DistddpScenario {
    let name = CString::new(name).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { distddp_scenario_builtin(name.as_ptr(), &mut s) },
        DistddpStatus::Ok
    );
    s
}

fn set(s: *mut DistddpScenario, kv: &str) -> DistddpStatus {
    let kv = CString::new(kv).unwrap();
    unsafe { distddp_scenario_set(s, kv.as_ptr()) }
}

#[test]
fn solve_swap_and_read_back() {
    let s = builtin("swap2");
    assert_eq!(unsafe { distddp_scenario_agents(s) }, 2);
    assert_eq!(set(s, "solver=central"), DistddpStatus::Ok);
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { distddp_solve(s, 1, &mut o) }, DistddpStatus::Ok);
    let (mut m, mut k, mut p, mut q) = (0, 0, 0, 0);
    assert_eq!(
        unsafe { distddp_outcome_dims(o, 0, &mut m, &mut k, &mut p, &mut q) },
        DistddpStatus::Ok
    );
    assert_eq!((m, p, q), (2, 4, 2));

    // size query with an empty buffer
    let mut need = 0;
    assert_eq!(
        unsafe { distddp_outcome_states(o, 1, ptr::null_mut(), 0, &mut need) },
        DistddpStatus::BufferTooSmall
    );
    assert_eq!(need, (k + 1) * p);
    let mut xs = vec![0.0; need];
    assert_eq!(
        unsafe { distddp_outcome_states(o, 1, xs.as_mut_ptr(), xs.len(), ptr::null_mut()) },
        DistddpStatus::Ok
    );
    assert!(xs.iter().all(|v| v.is_finite()));

    let mut gains = vec![0.0; k * q * p];
    let mut n = 0;
    assert_eq!(
        unsafe { distddp_outcome_feedback(o, 0, gains.as_mut_ptr(), gains.len(), &mut n) },
        DistddpStatus::Ok
    );
    assert_eq!(n, gains.len());

    let json = unsafe { CStr::from_ptr(distddp_outcome_summary_json(o)) }
        .to_str()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(v["agents"], 2);

    assert_eq!(
        unsafe {
            distddp_outcome_dims(
                o,
                5,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
            )
        },
        DistddpStatus::OutOfRange
    );
    unsafe {
        distddp_outcome_free(o);
        distddp_scenario_free(s);
    }
}

#[test]
fn errors_are_reported() {
    let mut s = ptr::null_mut();
    let name = CString::new("nowhere").unwrap();
    assert_eq!(
        unsafe { distddp_scenario_builtin(name.as_ptr(), &mut s) },
        DistddpStatus::UnknownScenario
    );
    assert!(s.is_null());
    assert!(last_error().contains("nowhere"));

    let bad = CString::new("name = [").unwrap();
    assert_eq!(
        unsafe { distddp_scenario_from_toml(bad.as_ptr(), &mut s) },
        DistddpStatus::InvalidConfig
    );
    assert_eq!(
        unsafe { distddp_scenario_from_toml(ptr::null(), &mut s) },
        DistddpStatus::NullPointer
    );

    let s = builtin("swap2");
    assert_eq!(set(s, "model.dt=-1"), DistddpStatus::InvalidConfig);
    assert!(!last_error().is_empty());
    // failed override leaves the scenario usable
    assert_eq!(set(s, "md.iterations=3"), DistddpStatus::Ok);
    let mut o = ptr::null_mut();
    assert_eq!(
        unsafe { distddp_solve(ptr::null(), 1, &mut o) },
        DistddpStatus::NullPointer
    );
    unsafe { distddp_scenario_free(s) };
    unsafe { distddp_scenario_free(ptr::null_mut()) };
}

#[test]
fn toml_round_trip_through_the_api() {
    let s = builtin("robots4");
    unsafe { distddp_scenario_free(s) };
    let text = CString::new(distddp::scenario::builtin::robot_swap(4).to_toml()).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { distddp_scenario_from_toml(text.as_ptr(), &mut s) },
        DistddpStatus::Ok
    );
    assert_eq!(unsafe { distddp_scenario_agents(s) }, 4);
    unsafe { distddp_scenario_free(s) };
    let v = unsafe { CStr::from_ptr(distddp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let h =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/distddp.h")).unwrap();
    for f in [
        "distddp_solve",
        "distddp_scenario_free",
        "distddp_outcome_feedback",
        "DISTDDP_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
