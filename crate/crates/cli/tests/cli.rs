use std::fs;
use std::process::{Command, Output};

use tempfile::tempdir;

fn squadsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_squadsim"))
        .args(args)
        .env_remove("SQUADSIM_OUT")
        .output()
        .expect("binary runs")
}

#[test]
fn worst_case_sweep_emits_one_row_per_seed() {
    let out = squadsim(&["--protocol", "squad", "--n", "4", "--scenario", "worst_case", "--seeds", "0..9"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[0].starts_with("protocol,n,f,seed,scenario,"));
    for (seed, row) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[..5], ["squad", "4", "1", &seed.to_string(), "worst_case"]);
        assert_eq!(cols.last(), Some(&"0"), "violations column: {row}");
    }
}

#[test]
fn n_not_of_form_3f_plus_1_is_a_config_error() {
    let out = squadsim(&["--n", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("3f+1"));
    assert_eq!(squadsim(&["--protocol", "paxos"]).status.code(), Some(2));
    assert_eq!(squadsim(&["--seeds", "4..1"]).status.code(), Some(2));
}

#[test]
fn same_config_twice_gives_identical_bytes() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("sweep.conf");
    fs::write(&config, "protocol = raresync-quad\nn = 4,7\nseeds = 0..3\nscenario = random\n").unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let out = squadsim(&["--config", config.to_str().unwrap(), "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(text.matches("protocol,n,f").count(), 1);
    // rows come in (n, seed) order
    let keys: Vec<(String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[1].to_string(), c[3].to_string())
        })
        .collect();
    let expected: Vec<(String, String)> =
        ["4", "7"].iter().flat_map(|n| (0..4).map(move |s| (n.to_string(), s.to_string()))).collect();
    assert_eq!(keys, expected);
}

#[test]
fn flags_override_config_file_and_env_sets_output_dir() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("c.conf");
    fs::write(&config, "protocol = alltoall\nn = 7\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_squadsim"))
        .args(["--config", config.to_str().unwrap(), "--n", "4"])
        .env("SQUADSIM_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("alltoall-happy.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("alltoall,4,1,0,happy,"));
}

#[test]
fn custom_scenario_file_and_trace_dir() {
    let dir = tempdir().unwrap();
    let scenario = dir.path().join("two-faults.conf");
    fs::write(&scenario, "byzantine.P1 = equivocate\nbyzantine.P2 = silent\nrate.P3 = 3/2\ndelay = max\n").unwrap();
    let traces = dir.path().join("traces");
    let out = squadsim(&[
        "--n",
        "7",
        "--scenario",
        scenario.to_str().unwrap(),
        "--trace-dir",
        traces.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(traces.join("squad-custom-n7-s0.trace")).unwrap();
    assert!(!trace.is_empty());
}

#[test]
fn too_many_faults_is_a_config_error() {
    let dir = tempdir().unwrap();
    let scenario = dir.path().join("s.conf");
    fs::write(&scenario, "byzantine.P1 = silent\nbyzantine.P2 = silent\n").unwrap();
    let out = squadsim(&["--n", "4", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
