use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ddtwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddtwin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, manifest: &Path, out: &Path) -> Output {
    ddtwin(&[
        cmd,
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the trivial fixture into a scratch directory, with `edit`
/// applied to each file's text.
fn trivial_copy(edit: impl Fn(&str, String) -> String) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for name in ["trivial.rdsl", "deployment.yaml", "manifest.yaml"] {
        let text = fs::read_to_string(fixtures().join("trivial").join(name)).unwrap();
        let text = text.replace("../srs_chest/", &format!("{}/", fixtures().join("srs_chest").display()));
        fs::write(dir.path().join(name), edit(name, text)).unwrap();
    }
    dir
}

#[test]
fn srs_fixtures_validate() {
    let out = tempfile::tempdir().unwrap();
    let o = run("validate", &fixtures().join("srs_chest/manifest.yaml"), out.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok: 3 flows, 10 tasks"));
}

#[test]
fn trivial_solve_is_the_runtime() {
    let out = tempfile::tempdir().unwrap();
    let o = run("solve", &fixtures().join("trivial/manifest.yaml"), out.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = fs::read_to_string(out.path().join("summary.txt")).unwrap();
    assert!(summary.contains("status: optimal"), "{summary}");
    assert!(
        summary.contains("makespan: 7,200 / 1,000,000 = 0.01 of slot"),
        "{summary}"
    );
    assert!(out.path().join("schedule.json").exists());
}

#[test]
fn tight_deadline_is_infeasible() {
    let dir = trivial_copy(|name, t| {
        if name == "deployment.yaml" {
            t.replace("1000000", "100")
        } else {
            t
        }
    });
    let m = dir.path().join("manifest.yaml");
    let out = dir.path().join("o");
    let o = run("solve", &m, &out);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("infeasible: DEADLINE"), "{summary}");

    let o = run("scenarios", &m, &out);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!out.join("scenarios.csv").exists());
}

#[test]
fn dangling_member_fails_validation() {
    let dir = trivial_copy(|name, t| {
        if name == "manifest.yaml" {
            t + "catalog: ghost.xml\n"
        } else {
            t
        }
    });
    fs::write(
        dir.path().join("ghost.xml"),
        r#"<patterns><pattern name="a"><defining_memory>L3_0</defining_memory>
        <observing_memory>L3_0</observing_memory>
        <exclusive_define_with><member>ghost</member></exclusive_define_with>
        </pattern></patterns>"#,
    )
    .unwrap();
    let o = run("validate", &dir.path().join("manifest.yaml"), &dir.path().join("o"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ghost"), "{}", stderr(&o));
}

#[test]
fn missing_file_names_the_path() {
    let dir = trivial_copy(|name, t| {
        if name == "manifest.yaml" {
            t.replace("trivial.rdsl", "nowhere.rdsl")
        } else {
            t
        }
    });
    let o = run("validate", &dir.path().join("manifest.yaml"), &dir.path().join("o"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nowhere.rdsl"), "{}", stderr(&o));

    let o = ddtwin(&["solve", "--manifest", "/no/such/manifest.yaml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/no/such/manifest.yaml"));
}

#[test]
fn usage_errors_are_input_errors() {
    assert_eq!(code(&ddtwin(&["solve"])), 1);
    assert_eq!(code(&ddtwin(&["solve", "--manifest", "x", "--mode", "fast"])), 1);
    assert_eq!(code(&ddtwin(&["--help"])), 0);
}

#[test]
fn empty_scenario_list_is_header_only() {
    let dir = trivial_copy(|name, t| {
        if name == "manifest.yaml" {
            t + "builtin_scenarios: false\n"
        } else {
            t
        }
    });
    let out = dir.path().join("o");
    let o = run("scenarios", &dir.path().join("manifest.yaml"), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(out.join("scenarios.csv")).unwrap(),
        "strategy,latency_cycles,delta_pct,risk\n"
    );
}

#[test]
fn infeasible_scenario_ranks_first() {
    let dir = trivial_copy(|name, t| {
        if name == "manifest.yaml" {
            t + "builtin_scenarios: false\nscenarios: [squeeze.yaml]\n"
        } else {
            t
        }
    });
    fs::write(
        dir.path().join("squeeze.yaml"),
        "apiVersion: rdsl/v0\nkind: scenario\nmetadata:\n  name: squeeze\nspec:\n  injections:\n    - kind: TIGHTEN_DEADLINE\n      cycles: 100\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run("scenarios", &dir.path().join("manifest.yaml"), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("scenarios.txt")).unwrap();
    let first = text.lines().nth(2).unwrap();
    assert!(first.starts_with("squeeze") && first.contains("INFEASIBLE"), "{text}");

    let mut rdr = csv::Reader::from_path(out.join("scenarios.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["strategy", "latency_cycles", "delta_pct", "risk"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(
        &rows[0],
        &csv::StringRecord::from(vec!["squeeze", "INFEASIBLE", "", "CERTAIN_FAILURE"])
    );
    assert_eq!(&rows[1], &csv::StringRecord::from(vec!["baseline", "7200", "0", "LOW"]));
}

#[test]
fn scenarios_are_byte_stable_and_written_whole() {
    let m = fixtures().join("trivial/manifest.yaml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = ddtwin(&[
            "scenarios",
            "--manifest",
            m.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--seed",
            "3",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["scenarios.csv", "scenarios.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["scenarios.csv", "scenarios.txt"],
        "stray files after atomic writes"
    );
}

const SET_A: &str = "strategy,latency_cycles,delta_pct,risk\nbaseline,1000,0,LOW\nslow,1500,50,HIGH\n";
const SET_B: &str = "strategy,latency_cycles,delta_pct,risk\nbaseline,1000,0,LOW\nodd,1200,20,MODERATE\n";

fn report(files: &[(&str, &str)]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    fs::create_dir_all(&out).unwrap();
    for (n, body) in files {
        fs::write(out.join(n), body).unwrap();
    }
    let o = run("report", &fixtures().join("trivial/manifest.yaml"), &out);
    (o, dir)
}

#[test]
fn report_merges_disjoint_sets() {
    let (o, dir) = report(&[("a.csv", SET_A), ("b.csv", SET_B)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let merged = fs::read_to_string(dir.path().join("o/report.csv")).unwrap();
    assert_eq!(
        merged,
        "strategy,latency_cycles,delta_pct,risk\nslow,1500,50,HIGH\nodd,1200,20,MODERATE\nbaseline,1000,0,LOW\n"
    );
}

#[test]
fn report_is_idempotent() {
    let (once, d1) = report(&[("a.csv", SET_A)]);
    let (twice, d2) = report(&[("a.csv", SET_A), ("again.csv", SET_A)]);
    assert_eq!(code(&once), 0);
    assert_eq!(code(&twice), 0);
    let r1 = fs::read(d1.path().join("o/report.csv")).unwrap();
    assert_eq!(r1, fs::read(d2.path().join("o/report.csv")).unwrap());

    // rerunning over its own output changes nothing
    let again = run(
        "report",
        &fixtures().join("trivial/manifest.yaml"),
        &d1.path().join("o"),
    );
    assert_eq!(code(&again), 0);
    assert_eq!(r1, fs::read(d1.path().join("o/report.csv")).unwrap());
}

#[test]
fn report_conflict_names_the_scenario() {
    let clash = SET_A.replace("slow,1500,50,HIGH", "slow,1600,60,HIGH");
    let (o, _d) = report(&[("a.csv", SET_A), ("b.csv", &clash)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("slow"), "{}", stderr(&o));
}

fn makespan(summary: &str) -> u64 {
    let line = summary
        .lines()
        .find(|l| l.starts_with("makespan: "))
        .expect("makespan line");
    line["makespan: ".len()..]
        .split(' ')
        .next()
        .unwrap()
        .replace(',', "")
        .parse()
        .unwrap()
}

#[test]
fn downlink_analog_fills_a_fifth_of_the_slot() {
    let m = fixtures().join("du_downlink/manifest.yaml");
    let out = tempfile::tempdir().unwrap();
    let o = run("solve", &m, out.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let exact = makespan(&String::from_utf8_lossy(&o.stdout));
    assert!((150_000..=250_000).contains(&exact), "{exact}");

    let o = ddtwin(&[
        "solve",
        "--manifest",
        m.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--mode",
        "heuristic",
    ]);
    assert_eq!(code(&o), 0);
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.contains("status: heuristic"));
    assert!(makespan(&summary) >= exact);
}
