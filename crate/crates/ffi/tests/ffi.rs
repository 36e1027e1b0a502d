use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;
use std::sync::OnceLock;

use xflex_core::distributions::{dgp_cdf, dgp_pmf, GpParams};
use xflex_core::pipeline::synth::{synth_data, SynthConfig, PRECIP, WIND};
use xflex_core::pipeline::{fit_bundle, training_data, ModelBundle, PipelineConfig};
use xflex_core::splice::CountDistribution;
use xflex_core::terms::Covariates;
use xflex_ffi::*;

/// A bundle fitted once on synthetic data and saved under a temporary directory.
fn fixture() -> &'static (tempfile::TempDir, PathBuf, ModelBundle) {
    static F: OnceLock<(tempfile::TempDir, PathBuf, ModelBundle)> = OnceLock::new();
    F.get_or_init(|| {
        let cfg =
            SynthConfig { districts: vec!["d1".into()], nwp_years: 0, leads: vec![], seed: 5, ..Default::default() };
        let data = synth_data(&cfg).unwrap();
        let pc = PipelineConfig::default();
        let t = training_data(&data.faults, &data.weather, "d1", &[WIND, PRECIP]).unwrap();
        let b = fit_bundle(&t, &data.bands[0], &pc, pc.alpha_t, &pc.tail_formula().unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d1.json");
        b.save(&path).unwrap();
        (dir, path, b)
    })
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = xflex_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(path: &Path) -> *mut XflexBundle {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { xflex_bundle_load(cpath(path).as_ptr(), &mut b) }, XflexStatus::Ok);
    b
}

fn predict(b: *const XflexBundle, ws: f64, tp: f64) -> *mut XflexDist {
    let names = [CString::new(WIND).unwrap(), CString::new(PRECIP).unwrap()];
    let ptrs = [names[0].as_ptr(), names[1].as_ptr()];
    let vals = [ws, tp];
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { xflex_predict(b, ptrs.as_ptr(), vals.as_ptr(), 2, &mut d) }, XflexStatus::Ok);
    d
}

#[test]
fn dgp_values_match_core() {
    for (k, sigma, xi) in [(0, 2.5, 0.0), (3, 1.0, 0.3), (7, 2.5, -0.4)] {
        let (mut p, mut c) = (0.0, 0.0);
        unsafe {
            assert_eq!(xflex_dgp_pmf(k, sigma, xi, &mut p), XflexStatus::Ok);
            assert_eq!(xflex_dgp_cdf(k, sigma, xi, &mut c), XflexStatus::Ok);
        }
        let g = GpParams::new(sigma, xi).unwrap();
        assert_eq!(p, dgp_pmf(k, &g));
        assert_eq!(c, dgp_cdf(k, &g));
    }
    let mut p = 0.0;
    assert_eq!(unsafe { xflex_dgp_pmf(1, -1.0, 0.0, &mut p) }, XflexStatus::Invalid);
    assert!(last_error().contains("scale"), "{}", last_error());
}

#[test]
fn weights_and_bands() {
    let (mut h, mut m) = (0.0, 0.0);
    for (lead, want) in [(0, 50.0), (36, 25.5), (72, 1.0), (96, 1.0)] {
        assert_eq!(unsafe { xflex_member_weights(lead, &mut h, &mut m) }, XflexStatus::Ok);
        assert_eq!((h, m), (want, 1.0));
    }
    assert_eq!(unsafe { xflex_member_weights(-1, &mut h, &mut m) }, XflexStatus::Invalid);

    let mut band = 9u8;
    for ((g, a, r), want) in
        [((0.85, 0.10, 0.05), 0), ((0.50, 0.25, 0.25), 2), ((0.60, 0.30, 0.10), 1), ((0.70, 0.10, 0.20), 0)]
    {
        assert_eq!(unsafe { xflex_assign_band(g, a, r, &mut band) }, XflexStatus::Ok);
        assert_eq!(band, want);
    }
    assert_eq!(unsafe { xflex_assign_band(1.5, 0.0, 0.0, &mut band) }, XflexStatus::Invalid);
}

#[test]
fn null_pointers_are_reported() {
    let mut out = 0.0;
    assert_eq!(unsafe { xflex_dist_cdf(ptr::null(), 3, &mut out) }, XflexStatus::NullPointer);
    assert!(last_error().contains("dist"));
    assert_eq!(unsafe { xflex_dgp_cdf(1, 1.0, 0.0, ptr::null_mut()) }, XflexStatus::NullPointer);
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { xflex_bundle_load(ptr::null(), &mut b) }, XflexStatus::NullPointer);
    unsafe {
        xflex_bundle_free(ptr::null_mut());
        xflex_dist_free(ptr::null_mut());
    }
}

#[test]
fn load_errors() {
    let (dir, path, _) = fixture();
    let mut b = ptr::null_mut();
    let missing = dir.path().join("nope.json");
    assert_eq!(unsafe { xflex_bundle_load(cpath(&missing).as_ptr(), &mut b) }, XflexStatus::Io);
    assert!(b.is_null());

    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("schema_version");
    let stale = dir.path().join("stale.json");
    std::fs::write(&stale, v.to_string()).unwrap();
    assert_eq!(unsafe { xflex_bundle_load(cpath(&stale).as_ptr(), &mut b) }, XflexStatus::VersionMismatch);
}

#[test]
fn predictions_match_the_rust_bundle() {
    let (_, path, bundle) = fixture();
    let b = load(path);
    for (ws, tp) in [(6.0, 0.5), (10.0, 2.0), (22.0, 6.0)] {
        let d = predict(b, ws, tp);
        let x = Covariates::from([(WIND.to_string(), ws), (PRECIP.to_string(), tp)]);
        let want = bundle.predict(&x).unwrap();
        for y in [0, 5, 20, 60, 200] {
            let mut c = 0.0;
            assert_eq!(unsafe { xflex_dist_cdf(d, y, &mut c) }, XflexStatus::Ok);
            assert_eq!(c, want.cdf(y));
        }
        for p in [0.05, 0.5, 0.9, 0.999] {
            let mut q = 0;
            assert_eq!(unsafe { xflex_dist_quantile(d, p, &mut q) }, XflexStatus::Ok);
            assert_eq!(q, want.quantile(p).unwrap());
        }
        let mut probs = [0.0; 3];
        assert_eq!(unsafe { xflex_dist_band_probs(d, 30, 60, probs.as_mut_ptr()) }, XflexStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(unsafe { xflex_dist_band_probs(d, 60, 30, probs.as_mut_ptr()) }, XflexStatus::Invalid);
        unsafe { xflex_dist_free(d) };
    }
    unsafe { xflex_bundle_free(b) };
}

#[test]
fn identical_members_combine_to_the_single_forecast() {
    let (_, path, _) = fixture();
    let b = load(path);
    let single = predict(b, 12.0, 1.0);
    let names = [CString::new(WIND).unwrap(), CString::new(PRECIP).unwrap()];
    let ptrs = [names[0].as_ptr(), names[1].as_ptr()];
    let ids: Vec<u32> = (0..=50).collect();
    let vals: Vec<f64> = ids.iter().flat_map(|_| [12.0, 1.0]).collect();
    let mut ens = ptr::null_mut();
    let st =
        unsafe { xflex_predict_ensemble(b, ids.as_ptr(), ids.len(), ptrs.as_ptr(), vals.as_ptr(), 2, 24, &mut ens) };
    assert_eq!(st, XflexStatus::Ok);
    for y in [0, 10, 30, 90] {
        let (mut a, mut e) = (0.0, 0.0);
        unsafe {
            xflex_dist_cdf(single, y, &mut a);
            xflex_dist_cdf(ens, y, &mut e);
        }
        assert_eq!(a, e);
    }
    let mut dup = ptr::null_mut();
    let st = unsafe { xflex_predict_ensemble(b, [1u32, 1].as_ptr(), 2, ptrs.as_ptr(), vals.as_ptr(), 2, 0, &mut dup) };
    assert_eq!(st, XflexStatus::Invalid);
    unsafe {
        xflex_dist_free(single);
        xflex_dist_free(ens);
        xflex_bundle_free(b);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/xflex.h")).unwrap();
    for f in [
        "xflex_bundle_load",
        "xflex_bundle_free",
        "xflex_predict",
        "xflex_predict_ensemble",
        "xflex_dist_free",
        "xflex_dist_cdf",
        "xflex_dist_quantile",
        "xflex_dist_band_probs",
        "xflex_assign_band",
        "xflex_dgp_pmf",
        "xflex_dgp_cdf",
        "xflex_member_weights",
        "xflex_last_error_message",
        "XFLEX_STATUS_VERSION_MISMATCH",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}

/// Directory holding `libxflex_ffi.a` for this build.
fn static_lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let found = [deps, deps.parent().unwrap()]
        .into_iter()
        .find(|d| d.join("libxflex_ffi.a").exists())
        .expect("static library built alongside the tests")
        .to_path_buf();
    found
}

#[test]
fn c_program_links_and_agrees() {
    let (dir, path, bundle) = fixture();
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(static_lib_dir().join("libxflex_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&exe).arg(path).args(["14.5", "2.25"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();

    let x = Covariates::from([(WIND.to_string(), 14.5), (PRECIP.to_string(), 2.25)]);
    let d = bundle.predict(&x).unwrap();
    assert_eq!(fields[0].parse::<u64>().unwrap(), d.quantile(0.5).unwrap());
    assert_eq!(fields[1].parse::<f64>().unwrap(), d.cdf(40));
    let green: f64 = fields[2].parse().unwrap();
    assert_eq!(green, d.cdf(30));
}
