use std::path::Path;
use std::process::{Command, Output};

use vvnet::container::{read_container, write_container, Tensor};
use vvnet::Matrix;

fn vvnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vvnet")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write_pair(dir: &Path, phi: &[Vec<f64>], psi: &[Vec<f64>]) -> (String, String) {
    let path = dir.join("pair");
    write_container(
        &path,
        &[
            Tensor::from_matrix("Phi", &Matrix::from_rows(phi).unwrap()),
            Tensor::from_matrix("Psi", &Matrix::from_rows(psi).unwrap()),
        ],
    )
    .unwrap();
    (format!("{}:Phi", s(&path)), format!("{}:Psi", s(&path)))
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&vvnet(&[])), 1);
    assert_eq!(code(&vvnet(&["solve", "--phi", "x:Phi"])), 1);
    assert_eq!(code(&vvnet(&["--help"])), 0);
    assert_eq!(
        code(&vvnet(&[
            "train", "--reg", "l2", "--lambda", "1", "--seed", "0", "--out", "x"
        ])),
        1
    );
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = format!("{}:Phi", s(&dir.path().join("nothing")));
    let out = vvnet(&["rank", "--tensor", &missing]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    // Ψ has a component outside row(Φ).
    let (phi, psi) = write_pair(dir.path(), &[vec![1.0, 0.0], vec![2.0, 0.0]], &[vec![0.0, 1.0]]);
    let out = vvnet(&[
        "solve",
        "--phi",
        &phi,
        "--psi",
        &psi,
        "--constrained",
        "--out",
        &s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 2);
    let out = vvnet(&[
        "solve",
        "--phi",
        &phi,
        "--psi",
        &psi,
        "--lambda=-1",
        "--out",
        &s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unconverged_solve_exits_three_but_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let inst = s(&dir.path().join("inst"));
    let args = [
        "oracle",
        "--D",
        "2",
        "--N",
        "3",
        "--K",
        "9",
        "--seed",
        "3",
        "--rank-phi",
        "3",
        "--rank-psi",
        "2",
    ];
    assert_eq!(code(&vvnet(&[&args[..], &["--out", &inst]].concat())), 0);
    let out = s(&dir.path().join("sol"));
    let phi = format!("{inst}/instance:Phi");
    let psi = format!("{inst}/instance:Psi");
    let r = vvnet(&[
        "solve",
        "--phi",
        &phi,
        "--psi",
        &psi,
        "--lambda",
        "1e-3",
        "--max-iters",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(code(&r), 3);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sol/report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
    assert_eq!(
        read_container(&dir.path().join("sol/solution"))
            .unwrap()
            .matrix("V")
            .unwrap()
            .shape(),
        (2, 9)
    );
}

#[test]
fn oracle_instance_ranks_and_reduce() {
    let dir = tempfile::tempdir().unwrap();
    let inst = s(&dir.path().join("inst"));
    let r = vvnet(&[
        "oracle",
        "--D",
        "2",
        "--N",
        "4",
        "--K",
        "8",
        "--seed",
        "11",
        "--rank-phi",
        "3",
        "--rank-psi",
        "2",
        "--out",
        &inst,
    ]);
    assert_eq!(code(&r), 0);
    let phi = format!("{inst}/instance:Phi");
    let psi = format!("{inst}/instance:Psi");
    let rank = vvnet(&["rank", "--tensor", &phi, "--threshold", "1e-9", "--relative"]);
    assert_eq!(String::from_utf8_lossy(&rank.stdout).trim(), "3");

    let sol = s(&dir.path().join("sol"));
    assert_eq!(
        code(&vvnet(&[
            "solve",
            "--phi",
            &phi,
            "--psi",
            &psi,
            "--constrained",
            "--out",
            &sol
        ])),
        0
    );
    let red = s(&dir.path().join("red"));
    let v = format!("{sol}/solution:V");
    assert_eq!(
        code(&vvnet(&[
            "reduce", "--phi", &phi, "--psi", &psi, "--v", &v, "--out", &red
        ])),
        0
    );
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("red/report.json")).unwrap()).unwrap();
    assert!(trace["final_support"].as_u64().unwrap() <= 6);
}

#[test]
fn experiment_results_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let r = vvnet(&[
            "experiment",
            "lasso-hist",
            "--D",
            "3",
            "--N",
            "6",
            "--K",
            "40",
            "--seed",
            "2",
            "--rank-phi",
            "4",
            "--rank-psi",
            "3",
            "--trials",
            "8",
            "--threads",
            threads,
            "--out",
            &s(&out),
        ]);
        assert_eq!(code(&r), 0);
        (
            std::fs::read(out.join("histogram.csv")).unwrap(),
            std::fs::read(out.join("trials.csv")).unwrap(),
        )
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn train_writes_neuron_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let r = vvnet(&[
        "train",
        "--reg",
        "wd",
        "--lambda",
        "0.01",
        "--iters",
        "300",
        "--seed",
        "4",
        "--out",
        &s(&out),
    ]);
    assert_eq!(code(&r), 0);
    let csv = std::fs::read_to_string(out.join("neurons.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("theta,b,v_norm,v1,v2,v3"));
    assert_eq!(lines.count(), 150);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().last().unwrap().starts_with("300,"));
}
