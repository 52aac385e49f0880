//! `permctl` command dispatch.
//!
//! Exit status: 0 on success or Allow, 1 when a check or evaluation denies
//! (or validation finds violations), 2 on usage, I/O and parse errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use permctl::harness::{
    complexity_report, complexity_table, format_decision_log, MIN_REQUESTS,
};
use permctl::policy::MutationWire;
use permctl::store::{load_policy_file, policy_path, DEFAULT_POLICY_DIR};
use permctl::synth::synthetic_policy;
use permctl::{
    assign_category_indices, benchmark, build_tree, check_user_access, default_android_tree,
    evaluate_request, export_contexts, generate_levels, parse_trace, parse_tree_file, replay,
    serialize, validate, AccessClass, ContextFormat, Operation, PermissionRequest,
    PermissionTree, PolicyDocument, PolicyMutation, Verdict, WorkloadMix,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DENY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "permctl", version, about = "MLS level generation and app permission policy tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an MLS level for every user of a permission tree.
    GenLevels {
        #[command(flatten)]
        tree: TreeSource,
        /// `named` (user-name categories) or `numeric` (c<index> categories).
        #[arg(long, default_value = "named")]
        format: ContextFormat,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check one access against the MLS constraints.
    CheckMls {
        #[command(flatten)]
        tree: TreeSource,
        #[arg(long)]
        subject: String,
        /// Owner of the object (file) or the target domain (process).
        #[arg(long)]
        owner: String,
        #[arg(long)]
        class: AccessClass,
        #[arg(long)]
        op: Operation,
        #[arg(long)]
        json: bool,
    },
    /// Permission tree commands.
    #[command(subcommand)]
    Tree(TreeCommand),
    /// Application permission policy commands.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Replay a permission-call trace through the decision engine.
    Replay {
        #[command(flatten)]
        policy: PolicySource,
        #[arg(long)]
        trace: PathBuf,
        /// Also write the decision log (JSON lines) here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Measure decision latency.
    Bench {
        /// Benchmark this policy instead of a synthetic one.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        signers: usize,
        #[arg(long, default_value_t = 10)]
        perms: usize,
        #[arg(long, default_value_t = 10_000)]
        requests: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        signer_hit_ratio: f64,
        #[arg(long, default_value_t = 0.5)]
        perm_hit_ratio: f64,
        /// Compare the indexed engine with the text-scanning oracle at
        /// 10, 100 and 1000 signers.
        #[arg(long)]
        complexity: bool,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum TreeCommand {
    /// Check a tree file for structural errors.
    Validate {
        #[command(flatten)]
        tree: TreeSource,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
enum PolicyCommand {
    /// Report scopes that define no rule.
    Validate {
        #[command(flatten)]
        policy: PolicySource,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate one request.
    Eval {
        #[command(flatten)]
        policy: PolicySource,
        #[arg(long)]
        pkg: String,
        #[arg(long)]
        sig: String,
        #[arg(long)]
        perm: String,
        #[arg(long)]
        json: bool,
    },
    /// Apply one administrative change and print the resulting policy.
    Mutate {
        #[command(flatten)]
        policy: PolicySource,
        /// signer-global, signer-package or global-package.
        #[arg(long)]
        scope: String,
        #[arg(long)]
        sig: Option<String>,
        #[arg(long)]
        pkg: Option<String>,
        /// grant, revoke, set-allow-all or clear-allow-all.
        #[arg(long)]
        action: String,
        #[arg(long)]
        perm: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct TreeSource {
    /// Tree file with one `child < parent` per line.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Use the built-in Android user tree.
    #[arg(long = "default")]
    builtin: bool,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct PolicySource {
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Directory holding mac_permissions.xml (default ./policy/).
    #[arg(long)]
    policy_dir: Option<PathBuf>,
}

impl TreeSource {
    fn load(&self) -> Result<PermissionTree> {
        match &self.tree {
            Some(path) => {
                let text = read(path)?;
                let edges = parse_tree_file(&text).with_context(|| path.display().to_string())?;
                build_tree(&edges).with_context(|| path.display().to_string())
            }
            None => Ok(default_android_tree()),
        }
    }
}

impl PolicySource {
    fn path(&self) -> PathBuf {
        match (&self.policy, &self.policy_dir) {
            (Some(p), _) => p.clone(),
            (None, Some(dir)) => policy_path(dir),
            (None, None) => policy_path(DEFAULT_POLICY_DIR),
        }
    }

    fn load(&self) -> Result<PolicyDocument> {
        Ok(load_policy_file(self.path())?)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => out.write_all(text.as_bytes()).map_err(Into::into),
    }
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Allow => EXIT_OK,
        Verdict::Deny => EXIT_DENY,
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::GenLevels {
            tree,
            format,
            json,
            out: path,
        } => {
            let tree = tree.load()?;
            let assignment = generate_levels(&tree);
            let indices = assign_category_indices(&tree);
            let text = if json {
                let levels: serde_json::Map<String, serde_json::Value> = assignment
                    .iter()
                    .map(|(user, level)| {
                        let rendered = match format {
                            ContextFormat::Named => level.to_string(),
                            ContextFormat::Numeric => {
                                permctl::levelgen::numeric_level(level, &indices)
                            }
                        };
                        (user.to_string(), rendered.into())
                    })
                    .collect();
                let doc = json!({ "levels": levels, "max_sensitivity": assignment.max_sensitivity() });
                serde_json::to_string_pretty(&doc)? + "\n"
            } else {
                export_contexts(&assignment, &indices, format)
            };
            emit(out, path.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::CheckMls {
            tree,
            subject,
            owner,
            class,
            op,
            json,
        } => {
            let assignment = generate_levels(&tree.load()?);
            let decision = check_user_access(&assignment, &subject, &owner, class, op)?;
            if json {
                writeln!(out, "{}", serde_json::to_string(&decision)?)?;
            } else {
                writeln!(
                    out,
                    "{} (constraint {}: {} {} {} {}'s {})",
                    decision.verdict,
                    decision.rule_fired.numeral(),
                    subject,
                    op,
                    match class {
                        AccessClass::File => "on",
                        AccessClass::Process => "into",
                    },
                    owner,
                    class,
                )?;
            }
            Ok(verdict_code(decision.verdict))
        }
        Command::Tree(TreeCommand::Validate { tree, json }) => {
            let tree = tree.load()?;
            if json {
                let edges: Vec<_> = tree
                    .edges()
                    .iter()
                    .map(|e| json!({ "child": e.child(), "parent": e.parent() }))
                    .collect();
                let doc = json!({
                    "root": tree.root(),
                    "users": tree.len(),
                    "height": tree.height(),
                    "edges": edges,
                });
                writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
            } else {
                writeln!(
                    out,
                    "ok: {} users, root `{}`, height {}",
                    tree.len(),
                    tree.root(),
                    tree.height()
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Policy(PolicyCommand::Validate { policy, json }) => {
            let doc = policy.load()?;
            let violations = validate(&doc);
            if json {
                let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
                writeln!(out, "{}", serde_json::to_string_pretty(&json!({ "violations": list }))?)?;
            } else if violations.is_empty() {
                writeln!(out, "ok: {} signers, {} global packages", doc.signers.len(), doc.global_packages.len())?;
            } else {
                for v in &violations {
                    writeln!(out, "violation: {v}")?;
                }
            }
            Ok(if violations.is_empty() { EXIT_OK } else { EXIT_DENY })
        }
        Command::Policy(PolicyCommand::Eval {
            policy,
            pkg,
            sig,
            perm,
            json,
        }) => {
            let doc = policy.load()?;
            let request = PermissionRequest::new(&pkg, &sig, &perm)?;
            let decision = evaluate_request(&doc, &request);
            if json {
                writeln!(out, "{}", serde_json::to_string(&decision)?)?;
            } else {
                let scope = serde_json::to_value(decision.scope_used)?;
                writeln!(
                    out,
                    "{}/{:?} (scope {})",
                    decision.verdict,
                    decision.reason,
                    scope.as_str().unwrap_or("none")
                )?;
            }
            Ok(verdict_code(decision.verdict))
        }
        Command::Policy(PolicyCommand::Mutate {
            policy,
            scope,
            sig,
            pkg,
            action,
            perm,
            out: path,
            json,
        }) => {
            let doc = policy.load()?;
            let mutation = PolicyMutation::try_from(MutationWire {
                scope,
                signature: sig,
                package: pkg,
                action,
                perm,
            })?;
            let next = permctl::apply_mutation(&doc, &mutation);
            let text = serialize(&next);
            if json {
                let doc = json!({ "mutation": mutation, "policy": text });
                emit(out, path.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
            } else {
                emit(out, path.as_deref(), &text)?;
            }
            Ok(EXIT_OK)
        }
        Command::Replay {
            policy,
            trace,
            out: path,
            json,
        } => {
            let doc = policy.load()?;
            let text = read(&trace)?;
            let events = parse_trace(&text).with_context(|| trace.display().to_string())?;
            let (records, _) = replay(&doc, &events);
            let log = format_decision_log(&records);
            if let Some(p) = &path {
                std::fs::write(p, &log).with_context(|| format!("cannot write {}", p.display()))?;
            }
            if json {
                out.write_all(log.as_bytes())?;
            } else {
                for r in &records {
                    writeln!(
                        out,
                        "{:>6}  {:<5} {:<22} {:<14} {} {} {}{}",
                        r.seq,
                        r.decision.verdict.to_string(),
                        format!("{:?}", r.decision.reason),
                        serde_json::to_value(r.decision.scope_used)?.as_str().unwrap_or(""),
                        r.request.pkg_name,
                        r.request.signature,
                        r.request.perm,
                        if r.checkpoint.is_empty() {
                            String::new()
                        } else {
                            format!(" @{}", r.checkpoint)
                        },
                    )?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Bench {
            policy,
            signers,
            perms,
            requests,
            seed,
            signer_hit_ratio,
            perm_hit_ratio,
            complexity,
            json,
            out: path,
        } => {
            if requests < MIN_REQUESTS {
                bail!("--requests must be at least {MIN_REQUESTS}");
            }
            if complexity {
                let rows = complexity_report(&[10, 100, 1000], perms, requests, 200.min(requests), seed)?;
                let text = if json {
                    serde_json::to_string_pretty(&rows)? + "\n"
                } else {
                    complexity_table(&rows)
                };
                emit(out, path.as_deref(), &text)?;
                return Ok(EXIT_OK);
            }
            let doc = match policy {
                Some(p) => load_policy_file(p)?,
                None => {
                    use rand::SeedableRng;
                    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                    synthetic_policy(&mut rng, signers, perms)
                }
            };
            let mix = WorkloadMix {
                signer_hit_ratio,
                perm_hit_ratio,
                seed,
                ..WorkloadMix::default()
            };
            let report = benchmark(&doc, requests, &mix)?;
            let text = if json {
                serde_json::to_string_pretty(&report)? + "\n"
            } else {
                report.to_table()
            };
            emit(out, path.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
    }
}

/// Runs `permctl` with the given arguments (program name first).
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}
