use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jacforge::mask::{CompactSetMask, DyadicLevel};

const SPARSE: [(u32, u32); 10] =
    [(2, 60), (38, 59), (37, 47), (57, 45), (44, 32), (56, 31), (4, 20), (31, 14), (40, 6), (45, 3)];

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("jacforge-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn sparse_mask(dir: &Path) -> PathBuf {
    let m = CompactSetMask::from_cells(DyadicLevel::new(6).unwrap(), SPARSE).unwrap();
    let path = dir.join("mask.txt");
    std::fs::write(&path, m.to_grid()).unwrap();
    path
}

fn field_csv(dir: &Path, n: usize, f: impl Fn(usize, usize) -> f64) -> PathBuf {
    let rows: Vec<String> =
        (0..n).rev().map(|j| (0..n).map(|i| f(i, j).to_string()).collect::<Vec<_>>().join(",")).collect();
    let path = dir.join("f.csv");
    std::fs::write(&path, rows.join("\n") + "\n").unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jacforge")).args(args).env("JACFORGE_THREADS", "1").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cover_writes_strips_within_bound() {
    let dir = workdir("cover");
    let mask = sparse_mask(&dir);
    let o = run(&["cover", "--mask", s(&mask), "--out", s(&dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(dir.join("cover_summary.json"));
    assert_eq!(summary["withinBound"], true);
    assert!(dir.join("strips.json").exists() && dir.join("strips.svg").exists());
}

#[test]
fn boundary_stretch_on_sparse_mask() {
    let dir = workdir("stretch");
    let mask = sparse_mask(&dir);
    let o = run(&["stretch", "--mask", s(&mask), "--tau", "0.1", "--out", s(&dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = read_json(dir.join("boundary_report.json"));
    assert!(b["boundaryMaxErr"].as_f64().unwrap() <= 1e-12);
    assert!(b["minDetOnMask"].as_f64().unwrap() >= 1.1);
    assert!(dir.join("deformed_grid.svg").exists());
}

#[test]
fn no_boundary_writes_stretch_and_edge_reports() {
    let dir = workdir("raw");
    let mask = sparse_mask(&dir);
    let o = run(&["stretch", "--mask", s(&mask), "--tau", "0.1", "--no-boundary", "--out", s(&dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(dir.join("stretch_report.json"));
    assert!(r["minDetOnK"].as_f64().unwrap() >= 1.1 - 1e-9);
    assert!(dir.join("edge_report.json").exists());
    assert!(!dir.join("boundary_report.json").exists());
}

#[test]
fn large_tau_hits_the_smallness_gate() {
    let dir = workdir("gate");
    let mask = sparse_mask(&dir);
    let o = run(&["stretch", "--mask", s(&mask), "--tau", "1", "--no-boundary", "--out", s(&dir)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1/32"));
}

#[test]
fn malformed_mask_is_an_input_error() {
    let dir = workdir("bad");
    let path = dir.join("bad.txt");
    std::fs::write(&path, "0101\n0101\n01x1\n0000\n").unwrap();
    let o = run(&["cover", "--mask", s(&path), "--out", s(&dir)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert_eq!(code(&run(&["cover", "--mask", s(&dir.join("missing.txt")), "--out", s(&dir)])), 2);
    assert_eq!(code(&run(&["stretch", "--mask", s(&path), "--grid", "8", "--out", s(&dir)])), 2);
}

#[test]
fn zero_field_needs_no_iterations() {
    let dir = workdir("zero");
    let f = field_csv(&dir, 32, |_, _| 0.0);
    let o = run(&["solve", "--field", s(&f), "--out", s(&dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(dir.join("solve_report.json"));
    assert_eq!(r["report"]["iterations"], 0);
    assert_eq!(std::fs::read_to_string(dir.join("trace.jsonl")).unwrap(), "");
}

#[test]
fn too_much_mass_is_a_gate_violation() {
    let dir = workdir("heavy");
    let f = field_csv(&dir, 32, |_, _| 1.0);
    let o = run(&["solve", "--field", s(&f), "--out", s(&dir)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("must be < |Omega| = 1"));
}

#[test]
fn config_file_and_flags() {
    let dir = workdir("config");
    let mask = sparse_mask(&dir);
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, format!("# sparse run\ntau = 1\nmask = {}\nno-boundary = true\n", s(&mask))).unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "stretch", "--out", s(&dir)])), 3);
    assert_eq!(code(&run(&["--config", s(&cfg), "stretch", "--tau", "0.1", "--out", s(&dir)])), 0);
    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "cover", "--out", s(&dir)])), 2);
}

#[test]
fn verify_is_byte_identical_across_runs() {
    let mut outputs = Vec::new();
    for k in 0..2 {
        let dir = workdir(&format!("det{k}"));
        let mask = sparse_mask(&dir);
        let o = run(&["verify", "--mask", s(&mask), "--tau", "0.1", "--grid", "64", "--seed", "7", "--out", s(&dir)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((
            std::fs::read(dir.join("verify_report.json")).unwrap(),
            std::fs::read(dir.join("det.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let threaded = {
        let dir = workdir("det-threads");
        let mask = sparse_mask(&dir);
        let o = Command::new(env!("CARGO_BIN_EXE_jacforge"))
            .args(["verify", "--mask", s(&mask), "--tau", "0.1", "--grid", "64", "--seed", "7", "--out", s(&dir)])
            .env("JACFORGE_THREADS", "3")
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        std::fs::read(dir.join("verify_report.json")).unwrap()
    };
    assert_eq!(threaded, outputs[0].0);
}

#[test]
fn render_polygon_decomposition() {
    let dir = workdir("render");
    let poly = dir.join("poly.json");
    std::fs::write(&poly, r#"{"outer": [[0,0],[2,0],[2,1],[1,2],[0,1]]}"#).unwrap();
    let o = run(&["render", "--polygon", s(&poly), "--out", s(&dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(dir.join("decomposition.svg")).unwrap().starts_with("<svg"));
}
