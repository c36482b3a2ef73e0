use std::fs;

use cifusion::image::Channel;
use cifusion::io::config::RunConfig;
use cifusion::pipeline;

const TWO_PROBES: &str = r#"{
  "sample": {
    "width": 0.08, "length": 0.08, "thickness": 0.006, "eps_r": [4.5, -0.09],
    "defects": [{"kind": "ellipsoid_blob", "center": [0.04, 0.04], "axes": [0.012, 0.008], "height": 0.004}]
  },
  "probes": [
    {"name": "b2b", "type": "back_to_back", "params": {"s": 0.004, "b": 0.008, "h": 0.008}},
    {"type": "concentric", "params": {"R1": 0.004, "R2": 0.008, "R3": 0.012}}
  ],
  "plan": {"x0": 0.036, "y0": 0.036, "dx": 0.004, "dy": 0.004, "nx_points": 3, "ny_points": 3, "lift_off": 0.002},
  "solver": {"resolution": 500.0, "padding": 0.008},
  "output": {"formats": ["csv"]}
}"#;

#[test]
fn several_probes_write_one_directory_each() {
    let cfg = RunConfig::from_json(TWO_PROBES).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let written = pipeline::simulate(&cfg, tmp.path()).unwrap();
    assert_eq!(written.len(), 8);
    for dir in ["b2b", "concentric"] {
        for ch in ["R", "PHI", "X", "Y"] {
            assert!(tmp.path().join(dir).join(format!("{ch}.csv")).is_file());
        }
        assert!(!tmp.path().join(dir).join("R.pgm").exists());
    }
    let r_b2b = pipeline::load_channel(&tmp.path().join("b2b"), Channel::R).unwrap();
    let r_conc = pipeline::load_channel(&tmp.path().join("concentric"), Channel::R).unwrap();
    assert_eq!(r_b2b.shape(), (3, 3));
    assert_ne!(r_b2b.values, r_conc.values);
}

#[test]
fn single_defect_analysis_skips_depth_fits() {
    let cfg = RunConfig::from_json(TWO_PROBES).unwrap();
    let probe = &cfg.named_probes().unwrap()[0];
    let scan = pipeline::simulate_probe(&cfg, probe).unwrap();
    let (report, images) = pipeline::analyze(&cfg, &scan.r, &scan.phi).unwrap();
    assert!(report.delta_fit.is_none() && report.delta_rmse_not_worse.is_none());
    assert_eq!(report.centers, vec![[0.04, 0.04]]);
    assert_eq!(report.xi_cells.len(), 1);
    assert_eq!(images.xi.channel, Channel::Xi);
    // The blob sits under the middle scan point; the image is symmetric there.
    let r = &scan.r;
    assert!((r.at(0, 1) - r.at(2, 1)).abs() <= 1e-6 * r.at(1, 1));
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"delta_fit\":null"));
}

#[test]
fn analyze_dir_reads_written_images() {
    let mut cfg = RunConfig::from_json(TWO_PROBES).unwrap();
    cfg.probes.as_mut().unwrap().truncate(1);
    let tmp = tempfile::tempdir().unwrap();
    pipeline::simulate(&cfg, tmp.path()).unwrap();
    let out = tmp.path().join("analysis.json");
    let report = pipeline::analyze_dir(&cfg, tmp.path(), &out).unwrap();
    let back: pipeline::AnalysisReport = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(back, report);
}
