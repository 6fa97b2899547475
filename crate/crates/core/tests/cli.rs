use std::fs;
use std::path::Path;

use evstereo::cli::run_cli;

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["evstereo"];
    full.extend_from_slice(args);
    let code = run_cli(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn value<'a>(report: &'a str, key: &str) -> &'a str {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("missing `{key}` in:\n{report}"))
}

fn synth(dir: &Path) {
    let (code, out, err) = cli(&["synth", "--out", dir.to_str().unwrap(), "--duration-us", "300000"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("true_lifetime_us: 10000"));
}

fn run(mode: &str, data: &Path, out: &Path, extra: &[&str]) -> String {
    let left = data.join("left.txt");
    let right = data.join("right.txt");
    let mut args: Vec<&str> = extra.to_vec();
    args.extend([
        mode,
        "--left",
        left.to_str().unwrap(),
        "--right",
        right.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let (code, stdout, err) = cli(&args);
    assert_eq!(code, 0, "{err}");
    stdout
}

#[test]
fn dump_config_matches_golden() {
    let (code, out, _) = cli(&["--dump-config"]);
    assert_eq!(code, 0);
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/default_config.txt")).unwrap();
    assert_eq!(out, golden);
}

#[test]
fn dumped_config_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.conf");
    let (_, first, _) = cli(&["--set", "seed=9", "--set", "mu=0.004", "--dump-config"]);
    fs::write(&path, &first).unwrap();
    let (code, second, _) = cli(&["--config", path.to_str().unwrap(), "--dump-config"]);
    assert_eq!(code, 0);
    assert_eq!(first, second);
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["--help"]).0, 0);
    assert_eq!(cli(&["--bogus"]).0, 1);
    assert_eq!(cli(&[]).0, 1);
    assert_eq!(cli(&["--set", "window_n=4", "--dump-config"]).0, 1);
    assert_eq!(cli(&["--set", "nonsense=1", "--dump-config"]).0, 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "0.000001 1 1 1\n0.000000 2 2 0\n").unwrap();
    let out = dir.path().join("o");
    let (code, _, err) = cli(&["run", "--left", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("line 2"), "{err}");

    let missing = dir.path().join("missing.txt");
    // Unreadable input is an I/O failure rather than malformed input.
    assert_eq!(cli(&["run", "--left", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 3);
}

#[test]
fn synth_run_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let coupled = dir.path().join("coupled");
    let decoupled = dir.path().join("decoupled");
    let report = run("run", &data, &coupled, &[]);
    run("run-decoupled", &data, &decoupled, &[]);
    assert_eq!(value(&report, "pipeline"), "coupled");

    for side in ["left", "right"] {
        let a = coupled.join(format!("{side}.aug"));
        let b = decoupled.join(format!("{side}.aug"));
        let truth = data.join(format!("{side}.truth"));
        let (code, out, err) = cli(&[
            "compare",
            a.to_str().unwrap(),
            b.to_str().unwrap(),
            "--truth-a",
            truth.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        assert_eq!(value(&out, "a.side"), side);
        assert_eq!(value(&out, "a.pipeline"), "coupled");
        assert_eq!(value(&out, "b.pipeline"), "decoupled");

        // Every lifetimed line of the augmented file carries a lifetime.
        let text = fs::read_to_string(&a).unwrap();
        let lifetimed = text.lines().filter(|l| !l.starts_with('#') && l.ends_with(" ok")).count();
        assert_eq!(value(&out, "a.lifetimed").parse::<usize>().unwrap(), lifetimed);
        let events: usize = value(&out, "a.events").parse().unwrap();
        let noise: usize = value(&out, "a.noise").parse().unwrap();
        assert_eq!(lifetimed + noise, events);

        let ratio: f64 = value(&out, "plane_fit_ratio").parse().unwrap();
        assert!(ratio < 0.75, "plane fit ratio {ratio}");
        // Left events plane-fit in the coupled run, so only the right side
        // carries matches in both runs.
        if side == "right" {
            let agreement: f64 = value(&out, "disparity_agreement").parse().unwrap();
            assert!(agreement >= 0.9, "agreement {agreement}");
        }
        let err_us: f64 = value(&out, "a.median_abs_tau_error_us").parse().unwrap();
        assert!(err_us <= 1000.0, "median lifetime error {err_us}");
    }
}

#[test]
fn run_fixed_writes_five_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let out = dir.path().join("fixed");
    run("run-fixed", &data, &out, &["--set", "render_times=100000"]);
    let text = fs::read_to_string(out.join("left.aug")).unwrap();
    assert!(text.starts_with("# format: fixed"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|l| l.split_whitespace().count() == 5), "{}", rows[0]);
    for name in ["frame_left_100000.pgm", "disparity_right_100000.pgm"] {
        assert!(fs::read_to_string(out.join(name)).unwrap().starts_with("P2\n240 180\n255\n"));
    }
}

#[test]
fn identical_seeds_reproduce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("run", &data, &a, &["--seed", "3"]);
    run("run", &data, &b, &["--seed", "3"]);
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("# lifetime_time_us"))
            .map(String::from)
            .collect()
    };
    for side in ["left.aug", "right.aug"] {
        assert_eq!(strip(&a.join(side)), strip(&b.join(side)));
    }
}
