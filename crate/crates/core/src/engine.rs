//! Policy decision point.
//!
//! A request `{pkg_name, signature, perm}` is resolved to one rule set by
//! scope precedence (signer package entry, then signer global rules, then a
//! signature-independent global package entry) and the rule set is evaluated
//! blacklist first. Anything unmatched is denied.
//!
//! [`reference_oracle_evaluate`] is a naive re-implementation that scans the
//! raw policy text for every request. It is kept for differential testing and
//! as the linear-cost baseline in benchmarks.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::Verdict;
use crate::policy::{PermissionRuleSet, PolicyDocument, PolicyError, Signature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RequestError {
    #[error("request field `{0}` is empty")]
    EmptyField(&'static str),
    #[error(transparent)]
    Signature(#[from] PolicyError),
}

/// `{pkg_name, signature, perm}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermissionRequest {
    #[serde(rename = "pkg")]
    pub pkg_name: String,
    #[serde(rename = "sig")]
    pub signature: Signature,
    pub perm: String,
}

impl PermissionRequest {
    pub fn new(pkg_name: &str, signature: &str, perm: &str) -> Result<Self, RequestError> {
        if pkg_name.is_empty() {
            return Err(RequestError::EmptyField("pkg"));
        }
        if perm.is_empty() {
            return Err(RequestError::EmptyField("perm"));
        }
        if signature.is_empty() {
            return Err(RequestError::EmptyField("sig"));
        }
        Ok(Self {
            pkg_name: pkg_name.to_string(),
            signature: Signature::parse(signature)?,
            perm: perm.to_string(),
        })
    }
}

impl fmt::Display for PermissionRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}, {}}}", self.pkg_name, self.signature, self.perm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    DeniedByBlacklist,
    AllowedByWhitelist,
    AllowedByBlacklistMode,
    AllowedByAllowAll,
    DefaultDenyNoRule,
    DenyUnknownSigner,
    DenyNotWhitelisted,
}

impl Reason {
    pub fn verdict(self) -> Verdict {
        match self {
            Reason::AllowedByWhitelist
            | Reason::AllowedByBlacklistMode
            | Reason::AllowedByAllowAll => Verdict::Allow,
            Reason::DeniedByBlacklist
            | Reason::DefaultDenyNoRule
            | Reason::DenyUnknownSigner
            | Reason::DenyNotWhitelisted => Verdict::Deny,
        }
    }
}

/// Which rule set answered a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeKind {
    SignerPackage,
    SignerGlobal,
    GlobalPackage,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub reason: Reason,
    #[serde(rename = "scope")]
    pub scope_used: ScopeKind,
}

impl Decision {
    pub fn new(reason: Reason, scope_used: ScopeKind) -> Self {
        Self {
            verdict: reason.verdict(),
            reason,
            scope_used,
        }
    }

    pub fn is_allow(&self) -> bool {
        self.verdict.is_allow()
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:?}", self.verdict, self.reason)
    }
}

/// Picks the rule set that governs `req`, if any.
pub fn resolve_scope<'d>(
    doc: &'d PolicyDocument,
    req: &PermissionRequest,
) -> Option<(&'d PermissionRuleSet, ScopeKind)> {
    if let Some(signer) = doc.signers.get(&req.signature) {
        return Some(match signer.package_rules.get(&req.pkg_name) {
            Some(rules) => (rules, ScopeKind::SignerPackage),
            None => (&signer.global_rules, ScopeKind::SignerGlobal),
        });
    }
    doc.global_packages
        .get(&req.pkg_name)
        .map(|rules| (rules, ScopeKind::GlobalPackage))
}

/// Blacklist, then whitelist, then blacklist mode, then allow-all, then deny.
pub fn evaluate_rule_set(rules: &PermissionRuleSet, perm: &str) -> Reason {
    if rules.denies.contains(perm) {
        Reason::DeniedByBlacklist
    } else if !rules.allows.is_empty() {
        if rules.allows.contains(perm) {
            Reason::AllowedByWhitelist
        } else {
            Reason::DenyNotWhitelisted
        }
    } else if !rules.denies.is_empty() {
        Reason::AllowedByBlacklistMode
    } else if rules.allow_all {
        Reason::AllowedByAllowAll
    } else {
        Reason::DefaultDenyNoRule
    }
}

pub fn evaluate_request(doc: &PolicyDocument, req: &PermissionRequest) -> Decision {
    match resolve_scope(doc, req) {
        Some((rules, scope)) => Decision::new(evaluate_rule_set(rules, &req.perm), scope),
        None => Decision::new(Reason::DenyUnknownSigner, ScopeKind::None),
    }
}

/// Re-reads `policy_text` and walks it element by element for every call.
pub fn reference_oracle_evaluate(
    policy_text: &str,
    req: &PermissionRequest,
) -> Result<bool, PolicyError> {
    let xml = roxmltree::Document::parse(policy_text).map_err(|e| PolicyError::Xml {
        line: e.pos().row,
        column: e.pos().col,
        message: e.to_string(),
    })?;
    let root = xml.root_element();

    let mut scope = None;
    for signer in root.children().filter(|n| n.has_tag_name("signer")) {
        let sig = signer.attribute("signature").unwrap_or_default();
        if !sig.eq_ignore_ascii_case(req.signature.as_str()) {
            continue;
        }
        scope = Some(signer);
        for package in signer.children().filter(|n| n.has_tag_name("package")) {
            if package.attribute("name") == Some(req.pkg_name.as_str()) {
                scope = Some(package);
                break;
            }
        }
        break;
    }
    if scope.is_none() {
        scope = root
            .children()
            .filter(|n| n.has_tag_name("package"))
            .find(|n| n.attribute("name") == Some(req.pkg_name.as_str()));
    }
    let Some(scope) = scope else {
        return Ok(false);
    };

    let tags: Vec<(&str, Option<&str>)> = scope
        .children()
        .filter(|n| n.is_element() && !n.has_tag_name("package"))
        .map(|n| (n.tag_name().name(), n.attribute("name")))
        .collect();
    let listed = |tag: &str| {
        tags.iter()
            .any(|&(t, name)| t == tag && name == Some(req.perm.as_str()))
    };
    let any = |tag: &str| tags.iter().any(|&(t, _)| t == tag);

    let black_mode = any("deny-permission");
    let white_mode = any("allow-permission");
    if listed("deny-permission") {
        return Ok(false);
    }
    if white_mode {
        return Ok(listed("allow-permission"));
    }
    Ok(black_mode || any("allow-all"))
}
