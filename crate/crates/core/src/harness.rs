//! Enforcement-point simulation: trace replay and decision latency.
//!
//! A trace is one JSON object per line. Call events carry a request and a
//! descriptive checkpoint label; mutate events edit the policy, and the new
//! snapshot governs every later call.
//!
//! ```text
//! {"seq":1,"kind":"call","pkg":"cn.com.wali.walisms","sig":"ab01","perm":"android.permission.READ_SMS","checkpoint":"ContentResolver.query"}
//! {"seq":2,"kind":"mutate","mutation":{"scope":"signer-global","signature":"ab01","action":"revoke","perm":"android.permission.READ_SMS"}}
//! ```

use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{evaluate_request, reference_oracle_evaluate, Decision, PermissionRequest};
use crate::policy::{apply_mutation, serialize, PolicyDocument, PolicyMutation, Signature};
use crate::synth::{synthetic_policy, unknown_signature};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: seq {seq} does not follow {previous}")]
    NonMonotonic { line: usize, seq: u64, previous: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEventKind {
    Call {
        request: PermissionRequest,
        checkpoint: String,
    },
    Mutate {
        mutation: PolicyMutation,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub kind: TraceEventKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum EventLine {
    Call {
        seq: u64,
        pkg: String,
        sig: String,
        perm: String,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        checkpoint: String,
    },
    Mutate {
        seq: u64,
        mutation: PolicyMutation,
    },
}

impl TraceEvent {
    pub fn call(seq: u64, request: PermissionRequest, checkpoint: impl Into<String>) -> Self {
        Self {
            seq,
            kind: TraceEventKind::Call {
                request,
                checkpoint: checkpoint.into(),
            },
        }
    }

    pub fn mutate(seq: u64, mutation: PolicyMutation) -> Self {
        Self {
            seq,
            kind: TraceEventKind::Mutate { mutation },
        }
    }

    /// The event as one trace line (no trailing newline).
    pub fn to_line(&self) -> String {
        let line = match &self.kind {
            TraceEventKind::Call {
                request,
                checkpoint,
            } => EventLine::Call {
                seq: self.seq,
                pkg: request.pkg_name.clone(),
                sig: request.signature.to_string(),
                perm: request.perm.clone(),
                checkpoint: checkpoint.clone(),
            },
            TraceEventKind::Mutate { mutation } => EventLine::Mutate {
                seq: self.seq,
                mutation: mutation.clone(),
            },
        };
        serde_json::to_string(&line).expect("trace events serialize")
    }
}

pub fn format_trace(events: &[TraceEvent]) -> String {
    events.iter().map(|e| e.to_line() + "\n").collect()
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = |message: String| TraceError::Malformed { line, message };
        let parsed: EventLine =
            serde_json::from_str(trimmed).map_err(|e| malformed(e.to_string()))?;
        let event = match parsed {
            EventLine::Call {
                seq,
                pkg,
                sig,
                perm,
                checkpoint,
            } => {
                let request =
                    PermissionRequest::new(&pkg, &sig, &perm).map_err(|e| malformed(e.to_string()))?;
                TraceEvent::call(seq, request, checkpoint)
            }
            EventLine::Mutate { seq, mutation } => TraceEvent::mutate(seq, mutation),
        };
        if let Some(prev) = events.last() {
            if event.seq <= prev.seq {
                return Err(TraceError::NonMonotonic {
                    line,
                    seq: event.seq,
                    previous: prev.seq,
                });
            }
        }
        events.push(event);
    }
    Ok(events)
}

/// Outcome of one replayed call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub request: PermissionRequest,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub checkpoint: String,
    #[serde(flatten)]
    pub decision: Decision,
    /// Wall-clock time spent in the decision, in microseconds.
    pub elapsed_us: f64,
}

/// Replays `trace` against `doc`, returning one record per call and the
/// final policy.
pub fn replay(doc: &PolicyDocument, trace: &[TraceEvent]) -> (Vec<DecisionRecord>, PolicyDocument) {
    let mut current = doc.clone();
    let mut records = Vec::new();
    for event in trace {
        match &event.kind {
            TraceEventKind::Call {
                request,
                checkpoint,
            } => {
                let start = Instant::now();
                let decision = evaluate_request(&current, request);
                let elapsed = start.elapsed();
                records.push(DecisionRecord {
                    seq: event.seq,
                    request: request.clone(),
                    checkpoint: checkpoint.clone(),
                    decision,
                    elapsed_us: elapsed.as_nanos() as f64 / 1_000.0,
                });
            }
            TraceEventKind::Mutate { mutation } => {
                current = apply_mutation(&current, mutation);
            }
        }
    }
    (records, current)
}

/// One JSON object per line.
pub fn format_decision_log(records: &[DecisionRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

pub fn parse_decision_log(text: &str) -> Result<Vec<DecisionRecord>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TraceError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("request count {0} is below the minimum of {MIN_REQUESTS}")]
    TooFewRequests(usize),
    #[error("invalid workload: {0}")]
    BadMix(String),
}

pub const MIN_REQUESTS: usize = 100;

/// Shape of a synthetic request stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMix {
    /// Fraction of requests signed by a signer present in the policy.
    pub signer_hit_ratio: f64,
    /// Fraction of known-signer requests naming a permission listed in the
    /// resolved scope.
    pub perm_hit_ratio: f64,
    /// Fraction of known-signer requests targeting a package override.
    pub package_override_ratio: f64,
    /// Untimed evaluations run before sampling.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for WorkloadMix {
    fn default() -> Self {
        Self {
            signer_hit_ratio: 0.8,
            perm_hit_ratio: 0.5,
            package_override_ratio: 0.1,
            warmup: 1_000,
            seed: 0x5eed,
        }
    }
}

impl WorkloadMix {
    fn check(&self) -> Result<(), BenchError> {
        for (name, v) in [
            ("signer_hit_ratio", self.signer_hit_ratio),
            ("perm_hit_ratio", self.perm_hit_ratio),
            ("package_override_ratio", self.package_override_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BenchError::BadMix(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub samples: usize,
    pub min_us: f64,
    pub median_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
    pub mean_us: f64,
    pub signers: usize,
    pub mean_perms_per_scope: f64,
    pub allows: usize,
    pub denies: usize,
}

impl LatencyReport {
    pub fn to_table(&self) -> String {
        format!(
            "samples   {}\n\
             signers   {}\n\
             perms     {:.1} per scope\n\
             verdicts  {} allow / {} deny\n\
             min       {:.3} us\n\
             median    {:.3} us\n\
             p95       {:.3} us\n\
             max       {:.3} us\n\
             mean      {:.3} us\n",
            self.samples,
            self.signers,
            self.mean_perms_per_scope,
            self.allows,
            self.denies,
            self.min_us,
            self.median_us,
            self.p95_us,
            self.max_us,
            self.mean_us,
        )
    }
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Summary statistics for raw samples in microseconds.
pub fn summarize(samples: &mut [f64]) -> (f64, f64, f64, f64, f64) {
    samples.sort_unstable_by(f64::total_cmp);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    (
        samples[0],
        percentile(samples, 0.5),
        percentile(samples, 0.95),
        samples[samples.len() - 1],
        mean,
    )
}

/// Synthesizes `count` requests against `doc` following `mix`.
pub fn synthesize_requests(doc: &PolicyDocument, count: usize, mix: &WorkloadMix) -> Vec<PermissionRequest> {
    let mut rng = StdRng::seed_from_u64(mix.seed);
    let mut signers: Vec<&Signature> = doc.signers.keys().collect();
    signers.sort_unstable();
    let mut global_pkgs: Vec<&String> = doc.global_packages.keys().collect();
    global_pkgs.sort_unstable();

    (0..count)
        .map(|i| {
            let miss_perm = format!("android.permission.UNLISTED_{}", rng.gen_range(0..64));
            if !signers.is_empty() && rng.gen_bool(mix.signer_hit_ratio) {
                let signer = &doc.signers[*signers.choose(&mut rng).unwrap()];
                let mut pkgs: Vec<&String> = signer.package_rules.keys().collect();
                pkgs.sort_unstable();
                let (pkg, rules) = if !pkgs.is_empty() && rng.gen_bool(mix.package_override_ratio) {
                    let pkg = *pkgs.choose(&mut rng).unwrap();
                    (pkg.clone(), &signer.package_rules[pkg])
                } else {
                    (format!("com.bench.app{i}"), &signer.global_rules)
                };
                let listed: Vec<&String> = rules.allows.iter().chain(&rules.denies).collect();
                let perm = if !listed.is_empty() && rng.gen_bool(mix.perm_hit_ratio) {
                    (*listed.choose(&mut rng).unwrap()).clone()
                } else {
                    miss_perm
                };
                PermissionRequest {
                    pkg_name: pkg,
                    signature: signer.signature.clone(),
                    perm,
                }
            } else {
                let pkg = match global_pkgs.choose(&mut rng) {
                    Some(p) if rng.gen_bool(0.5) => (*p).clone(),
                    _ => format!("com.bench.unknown{i}"),
                };
                PermissionRequest {
                    pkg_name: pkg,
                    signature: unknown_signature(&mut rng, doc),
                    perm: miss_perm,
                }
            }
        })
        .collect()
}

fn mean_perms_per_scope(doc: &PolicyDocument) -> f64 {
    let scopes = doc.scopes();
    if scopes.is_empty() {
        return 0.0;
    }
    let total: usize = scopes
        .iter()
        .map(|(_, r)| r.allows.len() + r.denies.len())
        .sum();
    total as f64 / scopes.len() as f64
}

/// Times `evaluate_request` over a synthesized stream.
pub fn benchmark(
    doc: &PolicyDocument,
    request_count: usize,
    mix: &WorkloadMix,
) -> Result<LatencyReport, BenchError> {
    if request_count < MIN_REQUESTS {
        return Err(BenchError::TooFewRequests(request_count));
    }
    mix.check()?;
    let requests = synthesize_requests(doc, request_count, mix);

    for req in requests.iter().cycle().take(mix.warmup) {
        std::hint::black_box(evaluate_request(doc, req));
    }

    let mut samples = Vec::with_capacity(requests.len());
    let (mut allows, mut denies) = (0, 0);
    for req in &requests {
        let start = Instant::now();
        let decision = std::hint::black_box(evaluate_request(doc, std::hint::black_box(req)));
        samples.push(start.elapsed().as_nanos() as f64 / 1_000.0);
        if decision.is_allow() {
            allows += 1;
        } else {
            denies += 1;
        }
    }

    let (min_us, median_us, p95_us, max_us, mean_us) = summarize(&mut samples);
    Ok(LatencyReport {
        samples: samples.len(),
        min_us,
        median_us,
        p95_us,
        max_us,
        mean_us,
        signers: doc.signers.len(),
        mean_perms_per_scope: mean_perms_per_scope(doc),
        allows,
        denies,
    })
}

/// Median latency of the text-scanning oracle over `requests`.
pub fn oracle_median_us(policy_text: &str, requests: &[PermissionRequest]) -> f64 {
    let mut samples: Vec<f64> = requests
        .iter()
        .map(|req| {
            let start = Instant::now();
            let verdict = reference_oracle_evaluate(policy_text, req);
            std::hint::black_box(verdict.ok());
            start.elapsed().as_nanos() as f64 / 1_000.0
        })
        .collect();
    summarize(&mut samples).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub signers: usize,
    pub fast_median_us: f64,
    pub oracle_median_us: f64,
}

/// Medians of the indexed engine and of the oracle for each policy size.
pub fn complexity_report(
    sizes: &[usize],
    perms_per_scope: usize,
    fast_requests: usize,
    oracle_requests: usize,
    seed: u64,
) -> Result<Vec<ComplexityRow>, BenchError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut rng = StdRng::seed_from_u64(seed ^ n as u64);
        let doc = synthetic_policy(&mut rng, n, perms_per_scope);
        let mix = WorkloadMix {
            seed: seed.wrapping_add(n as u64),
            ..WorkloadMix::default()
        };
        let fast = benchmark(&doc, fast_requests, &mix)?;
        let text = serialize(&doc);
        let requests = synthesize_requests(&doc, oracle_requests, &mix);
        rows.push(ComplexityRow {
            signers: n,
            fast_median_us: fast.median_us,
            oracle_median_us: oracle_median_us(&text, &requests),
        });
    }
    Ok(rows)
}

pub fn complexity_table(rows: &[ComplexityRow]) -> String {
    let mut out = format!("{:>8}  {:>14}  {:>16}\n", "signers", "indexed (us)", "text scan (us)");
    for r in rows {
        out.push_str(&format!(
            "{:>8}  {:>14.3}  {:>16.3}\n",
            r.signers, r.fast_median_us, r.oracle_median_us
        ));
    }
    out
}
