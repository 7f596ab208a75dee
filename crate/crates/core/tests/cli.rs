use std::path::Path;
use std::process::{Command, Output};

const TINY_HDICE: &str = "env = gridworld-v1\nmethod = hdice\ntotal_iterations = 2\nepisodes_per_update = 4\nppo_epochs = 1\n\
                          eval_episodes = 2\nhindsight_epochs = 1\nreturn_epochs = 1\ndice_epochs = 1\n";

fn hdice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdice")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn train_probe_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.cfg", TINY_HDICE);
    let run = dir.path().join("run");
    let stdout = ok(&hdice(&["train", "--config", &cfg, "--out", run.to_str().unwrap(), "--seed=3"]));
    assert!(stdout.contains("hdice seed 3"), "{stdout}");
    let echoed = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(echoed.contains("seed = 3\n"));
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let snap = run.join("snapshot.json");
    let probe = ok(&hdice(&[
        "probe",
        "--snapshot",
        snap.to_str().unwrap(),
        "--state",
        r#"{"row": 1, "col": 3, "collected": [[0, 1]]}"#,
    ]));
    let lines: Vec<&str> = probe.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("action\tz\tpi\th"));
    assert!(lines[1].starts_with("left\t-100"));
    assert!(lines[4].starts_with("right\t69"));

    let svg = dir.path().join("curve.svg");
    ok(&hdice(&["plot", "--csv", run.join("metrics.csv").to_str().unwrap(), "--out", svg.to_str().unwrap()]));
    let body = std::fs::read_to_string(svg).unwrap();
    assert!(body.starts_with("<svg") && body.contains("hdice"));
}

#[test]
fn sweep_runs_every_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    std::fs::create_dir(&configs).unwrap();
    write_config(&configs, "hdice.cfg", TINY_HDICE);
    write_config(
        &configs,
        "ppo.cfg",
        "env = gridworld-v1\nmethod = ppo\ntotal_iterations = 2\nepisodes_per_update = 4\nppo_epochs = 1\neval_episodes = 2\n",
    );
    let out = dir.path().join("sweep");
    ok(&hdice(&["sweep", "--configs", configs.to_str().unwrap(), "--seeds", "0,1", "--out", out.to_str().unwrap(), "--jobs", "2"]));
    for stem in ["hdice", "ppo"] {
        for seed in [0, 1] {
            let cfg = std::fs::read_to_string(out.join(stem).join(format!("seed{seed}")).join("config.txt")).unwrap();
            assert!(cfg.contains(&format!("seed = {seed}\n")));
        }
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "env = gridworld-v1\nmethod = ppo\nclip_eps = 2\n");
    let out = hdice(&["train", "--config", &cfg, "--out", dir.path().join("r").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("clip_eps"));

    let cfg = write_config(dir.path(), "ok.cfg", TINY_HDICE);
    let out = hdice(&["train", "--config", &cfg, "--out", dir.path().join("r").to_str().unwrap(), "--no_such_key=1"]);
    assert!(!out.status.success());

    let out = hdice(&["plot", "--csv", dir.path().join("missing.csv").to_str().unwrap(), "--out", "x.svg"]);
    assert!(!out.status.success());
}
