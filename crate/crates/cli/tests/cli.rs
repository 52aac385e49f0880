use std::path::PathBuf;
use std::process::Command;

use permctl::harness::parse_decision_log;
use permctl::{parse_level, parse_policy, Decision, LatencyReport, Reason, Verdict};
use permctl_cli::{run_with, EXIT_DENY, EXIT_OK, EXIT_USAGE};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("permctl").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("permctl-cli-{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn file(&self, name: &str, contents: &str) -> String {
        let path = self.0.join(name);
        std::fs::write(&path, contents).unwrap();
        path.to_string_lossy().into_owned()
    }

    fn path(&self, name: &str) -> String {
        self.0.join(name).to_string_lossy().into_owned()
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

const SIG: &str = "ab01";
const READ_SMS: &str = "android.permission.READ_SMS";

#[test]
fn gen_levels_default() {
    let o = run(&["gen-levels", "--default"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.lines().any(|l| l == "system s1:{nobody,radio,system}"));
    assert!(o.stdout.lines().any(|l| l == "install s1:{install}"));
    assert_eq!(o.stdout.lines().count(), 15);
}

#[test]
fn gen_levels_json_parses_back() {
    let o = run(&["gen-levels", "--default", "--json"]);
    assert_eq!(o.code, EXIT_OK);
    let value: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(value["max_sensitivity"], 2);
    let levels = value["levels"].as_object().unwrap();
    assert_eq!(levels.len(), 15);
    for (user, level) in levels {
        let level = parse_level(level.as_str().unwrap()).unwrap();
        assert!(level.categories().contains(user));
    }
    let assignment: permctl::LevelAssignment = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(assignment, permctl::generate_levels(&permctl::default_android_tree()));
}

#[test]
fn gen_levels_from_tree_file() {
    let dir = Scratch::new("tree");
    let tree = dir.file("users.tree", "# chain\nb < c\na < b\n");
    let out = dir.path("levels.txt");
    let o = run(&["gen-levels", "--tree", &tree, "--format", "numeric", "--out", &out]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.is_empty());
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "a s0:{c0}\nb s1:{c0,c1}\nc s2:{c0,c1,c2}\n"
    );
}

#[test]
fn check_mls_exit_codes() {
    let o = run(&["check-mls", "--default", "--subject", "radio", "--owner", "root", "--class", "file", "--op", "read"]);
    assert_eq!(o.code, EXIT_DENY);
    assert!(o.stdout.starts_with("Deny"));

    let o = run(&["check-mls", "--default", "--subject", "root", "--owner", "shell", "--class", "file", "--op", "read"]);
    assert_eq!(o.code, EXIT_OK);

    let o = run(&[
        "check-mls", "--default", "--subject", "shell", "--owner", "root", "--class", "process", "--op", "transition", "--json",
    ]);
    assert_eq!(o.code, EXIT_DENY);
    let d: permctl::MlsDecision = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(d.verdict, Verdict::Deny);

    let o = run(&["check-mls", "--default", "--subject", "ghost", "--owner", "root", "--class", "file", "--op", "read"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("ghost"));

    let o = run(&["check-mls", "--default", "--subject", "radio", "--owner", "root", "--class", "file", "--op", "transition"]);
    assert_eq!(o.code, EXIT_USAGE);
}

#[test]
fn tree_validate() {
    let o = run(&["tree", "validate", "--default", "--json"]);
    assert_eq!(o.code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["users"], 15);
    let edges: Vec<permctl::ContainmentEdge> = v["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| permctl::ContainmentEdge::new(e["child"].as_str().unwrap(), e["parent"].as_str().unwrap()).unwrap())
        .collect();
    assert_eq!(permctl::build_tree(&edges).unwrap(), permctl::default_android_tree());

    let dir = Scratch::new("badtree");
    let cyclic = dir.file("cycle.tree", "a < b\nb < a\n");
    let o = run(&["tree", "validate", "--tree", &cyclic]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("cycle"), "{}", o.stderr);

    let malformed = dir.file("bad.tree", "radio system\n");
    let o = run(&["tree", "validate", "--tree", &malformed]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("line 1"), "{}", o.stderr);
}

#[test]
fn policy_eval_and_validate() {
    let dir = Scratch::new("policy");
    let policy = dir.file(
        "p.xml",
        &format!(r#"<policy><signer signature="{SIG}"><allow-permission name="{READ_SMS}"/></signer><signer signature="cd"/></policy>"#),
    );

    let o = run(&["policy", "eval", "--policy", &policy, "--pkg", "com.a", "--sig", SIG, "--perm", READ_SMS]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.starts_with("Allow/AllowedByWhitelist"), "{}", o.stdout);

    let o = run(&["policy", "eval", "--policy", &policy, "--pkg", "com.a", "--sig", "cd", "--perm", "X", "--json"]);
    assert_eq!(o.code, EXIT_DENY);
    let d: Decision = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(d.reason, Reason::DefaultDenyNoRule);

    let o = run(&["policy", "eval", "--policy", &policy, "--pkg", "com.a", "--sig", "zz", "--perm", "X"]);
    assert_eq!(o.code, EXIT_USAGE);

    let o = run(&["policy", "validate", "--policy", &policy]);
    assert_eq!(o.code, EXIT_DENY);
    assert!(o.stdout.contains("signer cd"), "{}", o.stdout);

    let o = run(&["policy", "validate", "--policy", &policy, "--json"]);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["violations"].as_array().unwrap().len(), 1);

    let bad = dir.file("bad.xml", "<policy><signer signature=\"ab0g\"/></policy>");
    let o = run(&["policy", "validate", "--policy", &bad]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("ab0g"));
}

#[test]
fn policy_dir_lookup() {
    let dir = Scratch::new("dir");
    dir.file("mac_permissions.xml", r#"<policy><package name="com.a"><allow-all/></package></policy>"#);
    let root = dir.0.to_string_lossy().into_owned();
    let o = run(&["policy", "eval", "--policy-dir", &root, "--pkg", "com.a", "--sig", "ff", "--perm", "X"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert!(o.stdout.contains("global-package"));
}

#[test]
fn policy_mutate_writes_canonical_policy() {
    let dir = Scratch::new("mutate");
    let policy = dir.file(
        "p.xml",
        &format!(r#"<policy><signer signature="{SIG}"><allow-permission name="{READ_SMS}"/><allow-permission name="S"/></signer></policy>"#),
    );
    let out = dir.path("next.xml");
    let o = run(&[
        "policy", "mutate", "--policy", &policy, "--scope", "signer-global", "--sig", SIG, "--action", "revoke", "--perm",
        READ_SMS, "--out", &out,
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let doc = parse_policy(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let rules = &doc.signers[&permctl::Signature::parse(SIG).unwrap()].global_rules;
    assert!(rules.denies.contains(READ_SMS));
    assert!(!rules.allows.contains(READ_SMS));

    let o = run(&[
        "policy", "mutate", "--policy", &policy, "--scope", "signer-global", "--action", "revoke", "--perm", READ_SMS,
    ]);
    assert_eq!(o.code, EXIT_USAGE);

    let o = run(&[
        "policy", "mutate", "--policy", &policy, "--scope", "global-package", "--pkg", "com.x", "--action", "set-allow-all",
        "--json",
    ]);
    assert_eq!(o.code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    let m: permctl::PolicyMutation = serde_json::from_value(v["mutation"].clone()).unwrap();
    assert_eq!(m.action, permctl::MutationAction::SetAllowAll);
    let doc = parse_policy(v["policy"].as_str().unwrap()).unwrap();
    assert!(doc.global_packages["com.x"].allow_all);
}

#[test]
fn replay_outputs_decision_log() {
    let dir = Scratch::new("replay");
    let policy = dir.file(
        "p.xml",
        &format!(r#"<policy><signer signature="{SIG}"><allow-permission name="{READ_SMS}"/></signer></policy>"#),
    );
    let trace = dir.file(
        "t.jsonl",
        &format!(
            "{{\"seq\":1,\"kind\":\"call\",\"pkg\":\"w\",\"sig\":\"{SIG}\",\"perm\":\"{READ_SMS}\",\"checkpoint\":\"ContentResolver.query\"}}\n\
             {{\"seq\":2,\"kind\":\"mutate\",\"mutation\":{{\"scope\":\"signer-global\",\"signature\":\"{SIG}\",\"action\":\"revoke\",\"perm\":\"{READ_SMS}\"}}}}\n\
             {{\"seq\":3,\"kind\":\"call\",\"pkg\":\"w\",\"sig\":\"{SIG}\",\"perm\":\"{READ_SMS}\"}}\n"
        ),
    );
    let log = dir.path("log.jsonl");
    let o = run(&["replay", "--policy", &policy, "--trace", &trace, "--json", "--out", &log]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let records = parse_decision_log(&o.stdout).unwrap();
    let verdicts: Vec<_> = records.iter().map(|r| r.decision.verdict).collect();
    assert_eq!(verdicts, [Verdict::Allow, Verdict::Deny]);
    assert_eq!(records[0].checkpoint, "ContentResolver.query");
    assert_eq!(parse_decision_log(&std::fs::read_to_string(&log).unwrap()).unwrap().len(), 2);

    let o = run(&["replay", "--policy", &policy, "--trace", &trace]);
    assert_eq!(o.lines_containing("Deny"), 1);

    let unordered = dir.file("u.jsonl", "{\"seq\":2,\"kind\":\"call\",\"pkg\":\"w\",\"sig\":\"ab\",\"perm\":\"P\"}\n{\"seq\":1,\"kind\":\"call\",\"pkg\":\"w\",\"sig\":\"ab\",\"perm\":\"P\"}\n");
    let o = run(&["replay", "--policy", &policy, "--trace", &unordered]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("line 2"), "{}", o.stderr);
}

impl Output {
    fn lines_containing(&self, needle: &str) -> usize {
        self.stdout.lines().filter(|l| l.contains(needle)).count()
    }
}

#[test]
fn bench_reports() {
    let o = run(&["bench", "--signers", "5", "--perms", "4", "--requests", "500", "--json"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let report: LatencyReport = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(report.samples, 500);
    assert_eq!(report.signers, 5);

    let o = run(&["bench", "--requests", "50"]);
    assert_eq!(o.code, EXIT_USAGE);

    let o = run(&["bench", "--signers", "5", "--requests", "200"]);
    assert!(o.stdout.contains("median"));
}

#[test]
fn help_for_every_subcommand() {
    for args in [
        vec!["--help"],
        vec!["gen-levels", "--help"],
        vec!["check-mls", "--help"],
        vec!["tree", "validate", "--help"],
        vec!["policy", "validate", "--help"],
        vec!["policy", "eval", "--help"],
        vec!["policy", "mutate", "--help"],
        vec!["replay", "--help"],
        vec!["bench", "--help"],
    ] {
        let o = run(&args);
        assert_eq!(o.code, EXIT_OK, "{args:?}");
        assert!(o.stdout.contains("Usage"), "{args:?}");
    }
}

#[test]
fn usage_errors() {
    assert_eq!(run(&[]).code, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(run(&["gen-levels", "--default", "--bogus"]).code, EXIT_USAGE);
    assert_eq!(run(&["gen-levels", "--default", "--format", "hex"]).code, EXIT_USAGE);
    assert_eq!(run(&["gen-levels", "--default", "--tree", "x"]).code, EXIT_USAGE);
    assert_eq!(run(&["gen-levels", "--tree", "/nonexistent/tree"]).code, EXIT_USAGE);
}

#[test]
fn binary_exit_status() {
    let status = Command::new(env!("CARGO_BIN_EXE_permctl"))
        .args(["check-mls", "--default", "--subject", "radio", "--owner", "root", "--class", "file", "--op", "read"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_DENY));
    assert!(String::from_utf8_lossy(&status.stdout).starts_with("Deny"));
}
