use std::process::{Command, Output};

fn linmhd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linmhd")).args(args).output().unwrap()
}

#[test]
fn run_writes_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = linmhd(&["run", "--case", "test1", "--k", "1", "--levels", "1,2", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("h,dofs_u,dofs_p,dofs_B,err_u_L2"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out.csv");
    std::fs::write(
        &cfg,
        format!("# patch study\ncase = patch\nk = 1\nnu = 1e-6\nlevels = 1\nout = {}\n", out.display()),
    )
    .unwrap();
    let o = linmhd(&["run", "--config", cfg.to_str().unwrap(), "--k", "2", "--mu-a", "30"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout.contains("case=patch k=2 nu=1e-6"), "{stdout}");
    assert!(stdout.contains("mu_a=30"), "{stdout}");
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn invalid_input_fails_with_message() {
    let o = linmhd(&["run", "--case", "test1", "--k", "3"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("k = 3"));

    let o = linmhd(&["run", "--levels", "2,1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("strictly increasing"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "k = 1\nspeed = 3\n").unwrap();
    let o = linmhd(&["run", "--config", cfg.to_str().unwrap()]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(!o.status.success());
    assert!(err.contains("line 2") && err.contains("speed"), "{err}");
}

#[test]
fn generated_mesh_can_be_solved_on() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("cube.msh");
    let o = linmhd(&["mesh", "--domain", "cube", "--n", "1", "--out", mesh.to_str().unwrap()]);
    assert!(o.status.success());
    let o = linmhd(&["run", "--case", "patch", "--mesh", mesh.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("residual="));
}
