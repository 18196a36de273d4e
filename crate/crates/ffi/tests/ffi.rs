use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ecgloc::geometry::{chamfer, fps_indices};
use ecgloc::synth::{generate_subject, SliceProtocol};
use ecgloc::model::ModelConfig;
use ecgloc::train::{model_checkpoint, TrainConfig, TrainState};
use ecgloc::{Point3, PointCloud};
use ecgloc_ffi::*;

fn packed(c: &PointCloud) -> Vec<f64> {
    c.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        ecgloc_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn grid(n: usize, shift: f64) -> PointCloud {
    PointCloud::new((0..n).map(|i| Point3::new(i as f64 * 0.7 + shift, (i * i % 5) as f64, (i % 3) as f64)).collect())
}

#[test]
fn kernels_match_the_library() {
    let a = grid(20, 0.0);
    let b = grid(13, 0.3);
    let (pa, pb) = (packed(&a), packed(&b));
    let mut d = f64::NAN;
    let st = unsafe { ecgloc_chamfer(pa.as_ptr(), 20, pb.as_ptr(), 13, &mut d) };
    assert_eq!(st, EcglocStatus::Ok);
    assert_eq!(d, chamfer(&a, &b).unwrap());

    let mut idx = [usize::MAX; 6];
    let st = unsafe { ecgloc_fps(pa.as_ptr(), 20, 6, 3, idx.as_mut_ptr()) };
    assert_eq!(st, EcglocStatus::Ok);
    assert_eq!(idx.to_vec(), fps_indices(&a, 6, 3).unwrap());

    let s: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
    let mut flagged = -1;
    let st = unsafe { ecgloc_dtw(s.as_ptr(), 30, s.as_ptr(), 30, &mut d, &mut flagged) };
    assert_eq!(st, EcglocStatus::Ok);
    assert_eq!((d, flagged), (0.0, 0));
}

#[test]
fn errors_are_codes_with_messages() {
    let mut d = 0.0;
    let st = unsafe { ecgloc_chamfer(ptr::null(), 3, ptr::null(), 3, &mut d) };
    assert_eq!(st, EcglocStatus::NullPointer);
    assert!(last_error().contains("null pointer"));

    let one = [0.0, 0.0, 0.0];
    let st = unsafe { ecgloc_chamfer(one.as_ptr(), 1, one.as_ptr(), 0, &mut d) };
    assert_eq!(st, EcglocStatus::InvalidArgument);
    assert!(last_error().contains("empty"));

    let mut idx = [0usize; 4];
    let st = unsafe { ecgloc_fps(one.as_ptr(), 1, 4, 0, idx.as_mut_ptr()) };
    assert_eq!(st, EcglocStatus::InvalidArgument);

    let path = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { ecgloc_model_load(path.as_ptr(), &mut m) };
    assert_eq!(st, EcglocStatus::Io);
    assert!(m.is_null());
    unsafe { ecgloc_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { ecgloc_model_input_points(ptr::null()) }, 0);
}

#[test]
fn model_round_trip_through_the_handle() {
    let cfg = TrainConfig { model: ModelConfig::tiny(96, 12), ..TrainConfig::default() };
    let state = TrainState::new(cfg.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model_checkpoint(&cfg, &state.model, vec![]).save(&path).unwrap();

    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ecgloc_model_load(c.as_ptr(), &mut m) }, EcglocStatus::Ok);
    assert_eq!(unsafe { ecgloc_model_input_points(m) }, 96);

    let s = generate_subject(0, 9, &SliceProtocol::default()).unwrap();
    let input = ecgloc::eval::eval_input(&s, 96, 0).unwrap();
    let pts = packed(&input);
    let mut out = [0.0; ECGLOC_ELECTRODE_VALUES];
    assert_eq!(unsafe { ecgloc_model_infer(m, pts.as_ptr(), 96, out.as_mut_ptr()) }, EcglocStatus::Ok);
    let expect = state.model.predict(&input).unwrap().electrodes;
    let got: Vec<f64> = expect.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    assert_eq!(out.to_vec(), got);

    let st = unsafe { ecgloc_model_infer(m, pts.as_ptr(), 50, out.as_mut_ptr()) };
    assert_eq!(st, EcglocStatus::InvalidArgument);
    assert!(last_error().contains("96"));
    unsafe { ecgloc_model_free(m) };
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ecgloc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cxx() {
    let dir = env!("CARGO_MANIFEST_DIR");
    for (compiler, lang, std) in [("cc", "c", "-std=c11"), ("c++", "c++", "-std=c++17")] {
        let out = Command::new(compiler)
            .args([std, "-Wall", "-Werror", "-fsyntax-only", "-x", lang])
            .arg(format!("-I{dir}/include"))
            .arg(format!("{dir}/tests/smoke.c"))
            .output()
            .expect("C compiler");
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
