use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use whitevec::io::{read_emb1, write_emb1};
use whitevec::EmbeddingMatrix;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_whitevec"));
    c.env_remove("WHITEVEC_THREADS").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn whitevec")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

// Small deterministic generator; test data only needs to be irregular.
struct XorShift(u64);

impl XorShift {
    fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Pairs in d=12 whose similarity lives in the first two coordinates,
    /// plus a large shared offset on every row.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (n, d) = (200, 12);
        let mut g = XorShift(0x9e37_79b9_7f4a_7c15);
        let (mut left, mut right, mut gold) = (vec![], vec![], vec![]);
        for _ in 0..n {
            let a: Vec<f64> = (0..d)
                .map(|j| 5.0 + g.next() * if j < 2 { 4.0 } else { 1.0 })
                .collect();
            let mut b: Vec<f64> = (0..d)
                .map(|j| 5.0 + g.next() * if j < 2 { 4.0 } else { 1.0 })
                .collect();
            let mix = (g.next() + 1.0) / 2.0;
            for j in 0..2 {
                b[j] = mix * a[j] + (1.0 - mix) * b[j];
            }
            gold.push(5.0 * mix);
            left.push(a);
            right.push(b);
        }
        let f = Fixture { dir };
        write_emb1(
            f.path("left.emb1"),
            &EmbeddingMatrix::from_rows(&left).unwrap(),
        )
        .unwrap();
        write_emb1(
            f.path("right.emb1"),
            &EmbeddingMatrix::from_rows(&right).unwrap(),
        )
        .unwrap();
        let text: String = gold.iter().map(|v| format!("{v}\n")).collect();
        std::fs::write(f.path("gold.txt"), text).unwrap();
        let union: Vec<Vec<f64>> = left.iter().chain(&right).cloned().collect();
        write_emb1(
            f.path("union.emb1"),
            &EmbeddingMatrix::from_rows(&union).unwrap(),
        )
        .unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn eval_args(&self) -> Vec<String> {
        [
            "eval",
            "--left",
            &self.p("left.emb1"),
            "--right",
            &self.p("right.emb1"),
            "--gold",
            &self.p("gold.txt"),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

fn run_owned(args: &[String], extra: &[&str]) -> Output {
    let mut all: Vec<&str> = args.iter().map(String::as_str).collect();
    all.extend_from_slice(extra);
    run(&all)
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status.code(),
        stderr(o)
    );
}

#[test]
fn fit_writes_transform_json() {
    let f = Fixture::new();
    let o = run(&[
        "fit",
        "--input",
        &f.p("union.emb1"),
        "--k",
        "4",
        "--out",
        &f.p("w.json"),
    ]);
    assert_ok(&o);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("w.json")).unwrap()).unwrap();
    assert_eq!(v["format"], "whitening-v1");
    assert_eq!(v["input_dim"], 12);
    assert_eq!(v["output_dim"], 4);
    assert_eq!(v["fit_count"], 400);
}

#[test]
fn streaming_fit_matches_batch_fit_closely() {
    let f = Fixture::new();
    let batch = run(&[
        "fit",
        "--input",
        &f.p("union.emb1"),
        "--k",
        "full",
        "--out",
        &f.p("a.json"),
    ]);
    let stream = run(&[
        "fit",
        "--streaming",
        "--input",
        &f.p("union.emb1"),
        "--k",
        "full",
        "--out",
        &f.p("b.json"),
    ]);
    assert_ok(&batch);
    assert_ok(&stream);
    let a = whitevec::io::load_transform(f.path("a.json")).unwrap();
    let b = whitevec::io::load_transform(f.path("b.json")).unwrap();
    assert_eq!(a.output_dim(), b.output_dim());
    for (x, y) in a.mean().iter().zip(b.mean()) {
        assert!((x - y).abs() <= 1e-10);
    }
}

#[test]
fn k_zero_is_a_usage_error_before_io() {
    let o = run(&[
        "fit",
        "--input",
        "/nonexistent/a.emb1",
        "--k",
        "0",
        "--out",
        "/nonexistent/w.json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    assert_eq!(
        run(&["fit", "--input", "a.emb1", "--k", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn eval_reports_json_with_five_decimals() {
    let f = Fixture::new();
    let o = run_owned(&f.eval_args(), &["--fit", "target", "--k", "full"]);
    assert_ok(&o);
    let v = json(&o);
    assert_eq!(v["n_pairs"], 200);
    assert_eq!(v["skipped"], 0);
    assert_eq!(v["k"], "full");
    assert_eq!(v["dataset"], "gold");
    let text = stdout(&o);
    let rho = text
        .split("\"spearman_rho_x100\":")
        .nth(1)
        .unwrap()
        .trim_end_matches(['}', '\n']);
    assert_eq!(rho.split('.').nth(1).unwrap().len(), 5, "{rho}");
}

#[test]
fn eval_output_is_byte_deterministic() {
    let f = Fixture::new();
    let a = run_owned(&f.eval_args(), &["--k", "3", "--report", "tsv"]);
    let b = run_owned(&f.eval_args(), &["--k", "3", "--report", "tsv"]);
    assert_ok(&a);
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<&str> = std::str::from_utf8(&a.stdout).unwrap().lines().collect();
    assert_eq!(
        lines[0],
        "dataset\tn_pairs\tskipped\tk\tdim\tspearman_rho_x100"
    );
    assert!(lines[1].starts_with("gold\t200\t0\t3\t3\t"));
}

#[test]
fn whitening_beats_raw_on_offset_pairs() {
    let f = Fixture::new();
    let raw = json(&run_owned(&f.eval_args(), &["--fit", "none"]));
    let white = json(&run_owned(&f.eval_args(), &["--fit", "target", "--k", "2"]));
    assert_eq!(raw["k"], serde_json::Value::Null);
    let (r, w) = (
        raw["spearman_rho_x100"].as_f64().unwrap(),
        white["spearman_rho_x100"].as_f64().unwrap(),
    );
    assert!(w > r + 5.0, "raw {r} whitened {w}");
}

#[test]
fn fit_file_equals_target_when_corpus_is_the_union() {
    let f = Fixture::new();
    let target = json(&run_owned(&f.eval_args(), &["--fit", "target", "--k", "5"]));
    let file = json(&run_owned(
        &f.eval_args(),
        &["--fit", &f.p("union.emb1"), "--k", "5"],
    ));
    assert_eq!(target, file);
}

#[test]
fn transform_then_raw_eval_equals_target_eval() {
    let f = Fixture::new();
    assert_ok(&run(&[
        "fit",
        "--input",
        &f.p("union.emb1"),
        "--k",
        "6",
        "--out",
        &f.p("w.json"),
    ]));
    for side in ["left", "right"] {
        let o = run(&[
            "transform",
            "--input",
            &f.p(&format!("{side}.emb1")),
            "--transform",
            &f.p("w.json"),
            "--out",
            &f.p(&format!("{side}.w.emb1")),
            "--threads",
            "3",
        ]);
        assert_ok(&o);
    }
    assert_eq!(read_emb1(f.path("left.w.emb1")).unwrap().dim(), 6);
    let pre = run(&[
        "eval",
        "--left",
        &f.p("left.w.emb1"),
        "--right",
        &f.p("right.w.emb1"),
        "--gold",
        &f.p("gold.txt"),
        "--fit",
        "none",
    ]);
    let direct = json(&run_owned(&f.eval_args(), &["--fit", "target", "--k", "6"]));
    assert_eq!(json(&pre)["spearman_rho_x100"], direct["spearman_rho_x100"]);
}

#[test]
fn transform_f32_output_halves_payload() {
    let f = Fixture::new();
    assert_ok(&run(&[
        "fit",
        "--input",
        &f.p("union.emb1"),
        "--k",
        "full",
        "--out",
        &f.p("w.json"),
    ]));
    assert_ok(&run(&[
        "transform",
        "--input",
        &f.p("left.emb1"),
        "--transform",
        &f.p("w.json"),
        "--out",
        &f.p("l32.emb1"),
        "--dtype",
        "f32",
    ]));
    let len = std::fs::metadata(f.path("l32.emb1")).unwrap().len();
    assert_eq!(len, 32 + 200 * 12 * 4);
}

#[test]
fn rank_deficient_k_is_a_runtime_error_with_its_name() {
    let f = Fixture::new();
    let o = run_owned(&f.eval_args(), &["--k", "13"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: InvalidK:"), "{}", stderr(&o));
}

#[test]
fn missing_file_reports_io_error() {
    let o = run(&["stats", "--input", "/nonexistent/x.emb1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: Io:"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_header_reports_bad_magic() {
    let f = Fixture::new();
    std::fs::write(f.path("bad.emb1"), [b'X'; 40]).unwrap();
    let o = run(&["stats", "--input", &f.p("bad.emb1")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: BadMagic:"), "{}", stderr(&o));
}

#[test]
fn bad_gold_line_reports_parse_error() {
    let f = Fixture::new();
    std::fs::write(f.path("gold.txt"), "1.0\nabc\n").unwrap();
    let o = run_owned(&f.eval_args(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).starts_with("error: ParseError:"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn sweep_emits_tsv_and_warns_on_skipped_k() {
    let f = Fixture::new();
    let mut args = f.eval_args();
    args[0] = "sweep".into();
    let o = run_owned(&args, &["--ks", "1,2,full,40"]);
    assert_ok(&o);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k\tdim\tspearman_rho_x100");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("full\t12\t"));
    assert!(stderr(&o).contains("k=40"));
}

#[test]
fn sweep_without_fit_corpus_is_a_usage_error() {
    let o = run(&[
        "sweep",
        "--left",
        "/nonexistent/l",
        "--right",
        "/nonexistent/r",
        "--gold",
        "/nonexistent/g",
        "--fit",
        "none",
        "--ks",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_prints_summary() {
    let f = Fixture::new();
    let o = run(&["stats", "--input", &f.p("union.emb1")]);
    assert_ok(&o);
    let text = stdout(&o);
    let get = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}\t")))
            .unwrap()
            .to_string()
    };
    assert_eq!(get("n"), "400");
    assert_eq!(get("dim"), "12");
    let mean_norm: f64 = get("mean_norm").parse().unwrap();
    assert!((mean_norm - 5.0 * 12f64.sqrt()).abs() < 0.5);
    let eig: Vec<f64> = get("top_eigenvalues")
        .split(',')
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(eig.len(), 10);
    assert!(eig.windows(2).all(|w| w[0] >= w[1]));
    let trace: f64 = get("trace").parse().unwrap();
    assert!(eig.iter().sum::<f64>() <= trace + 1e-9);
}

fn search_output(f: &Fixture, threads: Option<&str>) -> Output {
    let mut c = bin();
    c.args([
        "search",
        "--index",
        &f.p("union.emb1"),
        "--query",
        &f.p("left.emb1"),
        "--top",
        "3",
    ]);
    if let Some(t) = threads {
        c.env("WHITEVEC_THREADS", t);
    }
    c.output().unwrap()
}

#[test]
fn search_finds_each_query_itself_first() {
    let f = Fixture::new();
    let o = search_output(&f, None);
    assert_ok(&o);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("query_row\trank\tid\tscore"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 200 * 3);
    for r in rows.iter().filter(|r| r[1] == "1") {
        assert_eq!(r[0], r[2]);
        assert_eq!(r[3], "1.000000");
    }
}

#[test]
fn threads_env_does_not_change_search_output() {
    let f = Fixture::new();
    let one = search_output(&f, None);
    let four = search_output(&f, Some("4"));
    assert_ok(&four);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(search_output(&f, Some("0")).status.code(), Some(2));
}

#[test]
fn search_with_transform_reduces_dimension() {
    let f = Fixture::new();
    assert_ok(&run(&[
        "fit",
        "--input",
        &f.p("union.emb1"),
        "--k",
        "2",
        "--out",
        &f.p("w.json"),
    ]));
    let o = run(&[
        "search",
        "--index",
        &f.p("union.emb1"),
        "--query",
        &f.p("right.emb1"),
        "--transform",
        &f.p("w.json"),
        "--top",
        "1",
    ]);
    assert_ok(&o);
    assert_eq!(stdout(&o).lines().count(), 201);
}

#[test]
fn bench_reports_storage_and_throughput() {
    let f = Fixture::new();
    let o = run(&[
        "bench",
        "--index",
        &f.p("union.emb1"),
        "--query",
        &f.p("left.emb1"),
        "--top",
        "5",
        "--reps",
        "3",
        "--threads",
        "2",
    ]);
    assert_ok(&o);
    let v = json(&o);
    assert_eq!(v["n_vectors"], 400);
    assert_eq!(v["bytes_per_vector"], 48);
    assert_eq!(v["total_index_bytes"], 400 * 48);
    assert_eq!(v["repetitions"], 3);
    assert!(v["queries_per_second"].as_f64().unwrap() > 0.0);
}

#[test]
fn bench_rejects_fewer_than_three_reps() {
    let o = run(&["bench", "--index", "a", "--query", "b", "--reps", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file_instead_of_stdout() {
    let f = Fixture::new();
    let o = run_owned(&f.eval_args(), &["--out", &f.p("report.json")]);
    assert_ok(&o);
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(f.path("report.json")).unwrap();
    assert!(text.starts_with("{\"dataset\":\"gold\""));
    assert!(Path::new(&f.p("report.json")).exists());
}
