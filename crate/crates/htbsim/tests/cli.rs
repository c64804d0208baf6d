use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn htbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htbsim")).args(args).output().expect("spawn htbsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    for s in ["scenario1.toml", "scenario2.toml", "scenario3.toml"] {
        let o = htbsim(&["validate", path(&fixture(s))]);
        assert_eq!(code(&o), 0, "{s}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = htbsim(&["validate", "--hierarchy", path(&fixture("scenario2.xml"))]);
    assert_eq!(code(&o), 0);

    let o = htbsim(&["validate", path(&fixture("ceiling_below_assured.toml"))]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());

    let o = htbsim(&["validate", "/nonexistent/scenario.toml"]);
    assert_eq!(code(&o), 2);

    let o = htbsim(&[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_rejects_bad_naming() {
    let dir = tempfile::tempdir().unwrap();
    let xml = dir.path().join("h.xml");
    fs::write(
        &xml,
        "<htb><class id=\"root\"><rate>10Mbps</rate><ceil>10Mbps</ceil><parentId>NULL</parentId><level>1</level></class>\
         <class id=\"flow0\"><rate>1Mbps</rate><ceil>10Mbps</ceil><parentId>root</parentId><level>0</level><queueNum>0</queueNum></class></htb>",
    )
    .unwrap();
    let o = htbsim(&["validate", "--hierarchy", path(&xml)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("leaf"));

    fs::write(&xml, "<htb><class id=\"root\">").unwrap();
    assert_eq!(code(&htbsim(&["validate", "--hierarchy", path(&xml)])), 2);
}

#[test]
fn zero_horizon_writes_header_only_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("s.toml");
    fs::write(
        &toml,
        format!(
            "hierarchy = {:?}\nlink_rate = \"50Mbit/s\"\nhorizon = 0\n\n[[source]]\nflow = 0\nstart = 0\nstop = 1\npacket_size = 1500\ninterval = \"100us\"\n\n[[filter]]\nflow = 0\nleaf = \"leaf0\"\n",
            path(&fixture("scenario1.xml"))
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = htbsim(&["run", path(&toml), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["throughput.csv", "delay.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert_eq!(text.lines().count(), 1, "{f}: {text}");
    }
}

#[test]
fn run_is_reproducible_and_report_flags_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let scenario = fixture("scenario1.toml");
    assert_eq!(code(&htbsim(&["run", path(&scenario), "--out", path(&a)])), 0);
    assert_eq!(code(&htbsim(&["run", path(&scenario), "--out", path(&b), "--seedless"])), 0);

    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?} differs");
    }

    let tp = fs::read_to_string(a.join("throughput.csv")).unwrap();
    let mid: Vec<&str> = tp
        .lines()
        .filter(|l| {
            let t: f64 = l.split(',').next().unwrap().parse().unwrap_or(-1.0);
            (25.0..30.0).contains(&t)
        })
        .collect();
    assert_eq!(mid.len(), 5 * 5);
    for l in mid.iter().filter(|l| l.split(',').nth(1) == Some("2")) {
        let bps: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
        assert!((bps - 19.667e6).abs() < 0.03 * 19.667e6, "{l}");
    }

    let o = htbsim(&["report", path(&a)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("ceiling violations: none"));

    // leaf0's ceiling is 20 Mbit/s; push one window well past it.
    let forged: String = tp
        .lines()
        .map(|l| if l.starts_with("50.000000,0,") { "50.000000,0,45000000.000".to_string() } else { l.to_string() })
        .map(|l| l + "\n")
        .collect();
    fs::write(a.join("throughput.csv"), forged).unwrap();
    let o = htbsim(&["report", path(&a)]);
    assert_eq!(code(&o), 1);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("class leaf0 window 50"), "{text}");

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&htbsim(&["report", path(&empty)])), 2);
}
