use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deepshift"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn model(dir: &Path) {
    let o = run(dir, &["gen-model", "--context", "3", "--channels", "4,2", "--windows", "3,4", "--out", "m.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_passes_on_generated_model() {
    let d = TempDir::new().unwrap();
    model(d.path());
    let o = run(d.path(), &["verify", "--model", "m.json", "--steps", "120", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# deepshift "));
    assert_eq!(
        lines.next().unwrap(),
        "steps,layers,frames_compared,verified,divergence_step,divergence_layer"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..2], ["120", "2"]);
    assert_eq!(row[3], "true");
}

#[test]
fn verify_with_zero_steps_is_trivially_clean() {
    let d = TempDir::new().unwrap();
    model(d.path());
    let o = run(d.path(), &["verify", "--model", "m.json", "--steps", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().nth(2).unwrap().starts_with("0,2,0,true"));
}

#[test]
fn malformed_model_exits_two() {
    let d = TempDir::new().unwrap();
    std::fs::write(d.path().join("bad.json"), "{\"format\":\"deepshift-model\",\"layers\":[{]}").unwrap();
    let o = run(d.path(), &["verify", "--model", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = run(d.path(), &["verify", "--model", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(d.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn count_report_has_full_grid() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["count", "--n", "1-2", "--t", "10", "--w", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    // n=2, t=10, w=3: series A 10+12, closed A 20, series B 8+6, closed B 18
    let r: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(&r[..11], ["2", "10", "3", "22", "20", "14", "18", "2", "7", "22", "14"]);
    assert_eq!(&r[11..], ["false", "false", "true", "true"]);
    let o = run(d.path(), &["count", "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_and_classify_are_byte_deterministic() {
    let d = TempDir::new().unwrap();
    let data = ["gen-data", "--classes", "3", "--per-class", "8", "--len", "10", "--seed", "2", "--out", "d.csv"];
    assert!(run(d.path(), &data).status.success());
    let train = ["train", "--data", "d.csv", "--epochs", "5", "--window", "3", "--hidden", "4", "--seed", "1"];
    let a = run(d.path(), &train);
    let b = run(d.path(), &train);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 2 + 2 * 6);

    let classify = [
        "classify", "--synth", "--classes", "3", "--per-class", "10", "--len", "10", "--window", "3", "--epochs",
        "3", "--split", "kfold:3", "--mode", "shiftnet",
    ];
    let a = run(d.path(), &classify);
    let b = run(d.path(), &classify);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().nth(1).unwrap(), "mode,fold,test_error,initial_loss,final_loss");
    assert_eq!(text.lines().filter(|l| l.starts_with("shiftnet,")).count(), 4);
}

#[test]
fn bench_writes_csv_and_skips_infeasible_points() {
    let d = TempDir::new().unwrap();
    std::fs::write(
        d.path().join("b.toml"),
        "warmup = 1\nruns = 2\nsteps = 3\nseed = 1\n\n[[sweep]]\nn_layers = [2]\nwindow = [3]\ncontext = [2]\nframes = [4, 12]\n",
    )
    .unwrap();
    let o = run(d.path(), &["bench", "--config", "b.toml", "--out", "r.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("r.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "mode,n_layers,window,context,frames,steps,mean_ns,std_ns,ops_per_step,skipped");
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().any(|r| r.starts_with("naive,2,3,2,4,") && !r.ends_with(',')));
    assert!(rows.iter().any(|r| r.starts_with("shift,2,3,2,12,")));
}
