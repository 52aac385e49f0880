//! Application permission policy: document model, XML reader/writer,
//! validation, and administrative mutations.
//!
//! ```xml
//! <policy>
//!   <signer signature="HEX">
//!     <allow-permission name="android.permission.READ_SMS"/>
//!     <deny-permission name="android.permission.SEND_SMS"/>
//!     <allow-all/>
//!     <package name="com.example">
//!       <deny-permission name="android.permission.CAMERA"/>
//!     </package>
//!   </signer>
//!   <package name="com.other">
//!     <allow-all/>
//!   </package>
//! </policy>
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("XML syntax error at {line}:{column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("line {line}: unknown element `<{name}>` inside `<{parent}>`")]
    UnknownElement {
        name: String,
        parent: String,
        line: u32,
    },
    #[error("line {line}: unknown attribute `{attribute}` on `<{element}>`")]
    UnknownAttribute {
        element: String,
        attribute: String,
        line: u32,
    },
    #[error("line {line}: `<{element}>` requires a non-empty `{attribute}` attribute")]
    MissingAttribute {
        element: String,
        attribute: &'static str,
        line: u32,
    },
    #[error("line {line}: unexpected text content `{text}`")]
    UnexpectedText { text: String, line: u32 },
    #[error("malformed signature `{value}`: {reason}")]
    BadSignature { value: String, reason: &'static str },
    #[error("duplicate signer `{0}`")]
    DuplicateSigner(String),
    #[error("duplicate package `{package}` in {scope}")]
    DuplicatePackage { package: String, scope: String },
    #[error("line {line}: `<allow-all/>` given more than once in one scope")]
    DuplicateAllowAll { line: u32 },
    #[error("invalid mutation: {0}")]
    InvalidMutation(String),
}

/// Hex-encoded signing certificate, stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(String);

impl Signature {
    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let bad = |reason| PolicyError::BadSignature {
            value: text.to_string(),
            reason,
        };
        if text.is_empty() {
            return Err(bad("empty"));
        }
        if !text.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad("non-hex character"));
        }
        if !text.len().is_multiple_of(2) {
            return Err(bad("odd length"));
        }
        Ok(Self(text.to_ascii_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Signature {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Signature::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Whitelist, blacklist and allow-all flag of one scope.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PermissionRuleSet {
    pub allows: BTreeSet<String>,
    pub denies: BTreeSet<String>,
    pub allow_all: bool,
}

impl PermissionRuleSet {
    /// True when the set defines neither list nor allow-all.
    pub fn is_empty(&self) -> bool {
        self.allows.is_empty() && self.denies.is_empty() && !self.allow_all
    }

    pub fn allow_all() -> Self {
        Self {
            allow_all: true,
            ..Self::default()
        }
    }

    pub fn grant(&mut self, perm: &str) {
        self.denies.remove(perm);
        self.allows.insert(perm.to_string());
    }

    pub fn revoke(&mut self, perm: &str) {
        self.allows.remove(perm);
        self.denies.insert(perm.to_string());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignerPolicy {
    pub signature: Signature,
    pub global_rules: PermissionRuleSet,
    pub package_rules: HashMap<String, PermissionRuleSet>,
}

impl SignerPolicy {
    pub fn new(signature: Signature) -> Self {
        Self {
            signature,
            global_rules: PermissionRuleSet::default(),
            package_rules: HashMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyDocument {
    pub signers: HashMap<Signature, SignerPolicy>,
    pub global_packages: HashMap<String, PermissionRuleSet>,
}

impl PolicyDocument {
    pub fn is_empty(&self) -> bool {
        self.signers.is_empty() && self.global_packages.is_empty()
    }

    /// Inserts a signer, replacing any previous entry for the same signature.
    pub fn insert_signer(&mut self, signer: SignerPolicy) {
        self.signers.insert(signer.signature.clone(), signer);
    }

    /// Every rule set in the document with its scope.
    pub fn scopes(&self) -> Vec<(ScopeRef, &PermissionRuleSet)> {
        let mut out = Vec::new();
        for signer in self.signers.values() {
            out.push((ScopeRef::SignerGlobal(signer.signature.clone()), &signer.global_rules));
            for (pkg, rules) in &signer.package_rules {
                out.push((
                    ScopeRef::SignerPackage(signer.signature.clone(), pkg.clone()),
                    rules,
                ));
            }
        }
        for (pkg, rules) in &self.global_packages {
            out.push((ScopeRef::GlobalPackage(pkg.clone()), rules));
        }
        out
    }
}

/// Identifies one rule set inside a document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScopeRef {
    SignerGlobal(Signature),
    SignerPackage(Signature, String),
    GlobalPackage(String),
}

impl fmt::Display for ScopeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScopeRef::SignerGlobal(sig) => write!(f, "signer {sig}"),
            ScopeRef::SignerPackage(sig, pkg) => write!(f, "package {pkg} of signer {sig}"),
            ScopeRef::GlobalPackage(pkg) => write!(f, "global package {pkg}"),
        }
    }
}

// ---------------------------------------------------------------------------
// XML reader
// ---------------------------------------------------------------------------

const ALLOW: &str = "allow-permission";
const DENY: &str = "deny-permission";
const ALLOW_ALL: &str = "allow-all";
const PACKAGE: &str = "package";
const SIGNER: &str = "signer";
const POLICY: &str = "policy";

struct Reader<'a> {
    doc: &'a roxmltree::Document<'a>,
}

impl<'a> Reader<'a> {
    fn line(&self, node: roxmltree::Node) -> u32 {
        self.doc.text_pos_at(node.range().start).row
    }

    fn element_children<'b>(
        &self,
        node: roxmltree::Node<'a, 'b>,
    ) -> Result<Vec<roxmltree::Node<'a, 'b>>, PolicyError> {
        let mut out = Vec::new();
        for child in node.children() {
            if child.is_element() {
                out.push(child);
            } else if child.is_text() {
                let text = child.text().unwrap_or_default().trim();
                if !text.is_empty() {
                    return Err(PolicyError::UnexpectedText {
                        text: text.to_string(),
                        line: self.line(child),
                    });
                }
            }
        }
        Ok(out)
    }

    fn unknown_element(&self, node: roxmltree::Node, parent: roxmltree::Node) -> PolicyError {
        PolicyError::UnknownElement {
            name: node.tag_name().name().to_string(),
            parent: parent.tag_name().name().to_string(),
            line: self.line(node),
        }
    }

    /// Returns the single permitted attribute, rejecting any other.
    /// Value of `name` on `node`; any other attribute is an error. `None`
    /// admits no attributes at all.
    fn attribute_only(
        &self,
        node: roxmltree::Node,
        name: Option<&'static str>,
    ) -> Result<Option<String>, PolicyError> {
        let mut value = None;
        for attr in node.attributes() {
            if Some(attr.name()) == name && attr.namespace().is_none() {
                value = Some(attr.value().to_string());
            } else {
                return Err(PolicyError::UnknownAttribute {
                    element: node.tag_name().name().to_string(),
                    attribute: attr.name().to_string(),
                    line: self.line(node),
                });
            }
        }
        Ok(value)
    }

    fn required(&self, node: roxmltree::Node, name: &'static str) -> Result<String, PolicyError> {
        match self.attribute(node, name)? {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(PolicyError::MissingAttribute {
                element: node.tag_name().name().to_string(),
                attribute: name,
                line: self.line(node),
            }),
        }
    }

    fn attribute(&self, node: roxmltree::Node, name: &'static str) -> Result<Option<String>, PolicyError> {
        self.attribute_only(node, Some(name))
    }

    fn no_attributes(&self, node: roxmltree::Node) -> Result<(), PolicyError> {
        self.attribute_only(node, None).map(|_| ())
    }

    /// Applies one permission tag to `rules`; returns false if `node` is not
    /// a permission tag.
    fn permission_tag(
        &self,
        node: roxmltree::Node,
        rules: &mut PermissionRuleSet,
    ) -> Result<bool, PolicyError> {
        match node.tag_name().name() {
            ALLOW | DENY => {
                let perm = self.required(node, "name")?;
                if !self.element_children(node)?.is_empty() {
                    let first = self.element_children(node)?[0];
                    return Err(self.unknown_element(first, node));
                }
                if node.tag_name().name() == ALLOW {
                    rules.allows.insert(perm);
                } else {
                    rules.denies.insert(perm);
                }
                Ok(true)
            }
            ALLOW_ALL => {
                self.no_attributes(node)?;
                if let Some(&first) = self.element_children(node)?.first() {
                    return Err(self.unknown_element(first, node));
                }
                if rules.allow_all {
                    return Err(PolicyError::DuplicateAllowAll {
                        line: self.line(node),
                    });
                }
                rules.allow_all = true;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn package(&self, node: roxmltree::Node) -> Result<(String, PermissionRuleSet), PolicyError> {
        let name = self.required(node, "name")?;
        let mut rules = PermissionRuleSet::default();
        for child in self.element_children(node)? {
            if !self.permission_tag(child, &mut rules)? {
                return Err(self.unknown_element(child, node));
            }
        }
        Ok((name, rules))
    }

    fn signer(&self, node: roxmltree::Node) -> Result<SignerPolicy, PolicyError> {
        let signature = Signature::parse(&self.required(node, "signature")?)?;
        let mut signer = SignerPolicy::new(signature);
        for child in self.element_children(node)? {
            if self.permission_tag(child, &mut signer.global_rules)? {
                continue;
            }
            if child.tag_name().name() != PACKAGE {
                return Err(self.unknown_element(child, node));
            }
            let (name, rules) = self.package(child)?;
            if signer.package_rules.contains_key(&name) {
                return Err(PolicyError::DuplicatePackage {
                    package: name,
                    scope: format!("signer {}", signer.signature),
                });
            }
            signer.package_rules.insert(name, rules);
        }
        Ok(signer)
    }

    fn policy(&self) -> Result<PolicyDocument, PolicyError> {
        let root = self.doc.root_element();
        if root.tag_name().name() != POLICY || root.tag_name().namespace().is_some() {
            return Err(self.unknown_element(root, self.doc.root()));
        }
        self.no_attributes(root)?;

        let mut doc = PolicyDocument::default();
        for child in self.element_children(root)? {
            match child.tag_name().name() {
                SIGNER => {
                    let signer = self.signer(child)?;
                    if doc.signers.contains_key(&signer.signature) {
                        return Err(PolicyError::DuplicateSigner(signer.signature.0));
                    }
                    doc.insert_signer(signer);
                }
                PACKAGE => {
                    let (name, rules) = self.package(child)?;
                    if doc.global_packages.contains_key(&name) {
                        return Err(PolicyError::DuplicatePackage {
                            package: name,
                            scope: "global scope".into(),
                        });
                    }
                    doc.global_packages.insert(name, rules);
                }
                _ => return Err(self.unknown_element(child, root)),
            }
        }
        Ok(doc)
    }
}

pub fn parse_policy(text: &str) -> Result<PolicyDocument, PolicyError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        PolicyError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    Reader { doc: &doc }.policy()
}

// ---------------------------------------------------------------------------
// XML writer
// ---------------------------------------------------------------------------

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn write_rules(out: &mut String, rules: &PermissionRuleSet, indent: &str) {
    for perm in &rules.allows {
        out.push_str(&format!("{indent}<{ALLOW} name=\"{}\"/>\n", escape(perm)));
    }
    for perm in &rules.denies {
        out.push_str(&format!("{indent}<{DENY} name=\"{}\"/>\n", escape(perm)));
    }
    if rules.allow_all {
        out.push_str(&format!("{indent}<{ALLOW_ALL}/>\n"));
    }
}

fn write_package(out: &mut String, name: &str, rules: &PermissionRuleSet, indent: &str) {
    let open = format!("{indent}<{PACKAGE} name=\"{}\"", escape(name));
    if rules.is_empty() {
        out.push_str(&open);
        out.push_str("/>\n");
        return;
    }
    out.push_str(&open);
    out.push_str(">\n");
    write_rules(out, rules, &format!("{indent}  "));
    out.push_str(&format!("{indent}</{PACKAGE}>\n"));
}

fn sorted<V>(map: &HashMap<String, V>) -> Vec<(&String, &V)> {
    let mut entries: Vec<_> = map.iter().collect();
    entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
    entries
}

/// Canonical XML: signers, packages and permissions in ascending order.
pub fn serialize(doc: &PolicyDocument) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
    if doc.is_empty() {
        out.push_str("<policy/>\n");
        return out;
    }
    out.push_str("<policy>\n");

    let mut signers: Vec<&SignerPolicy> = doc.signers.values().collect();
    signers.sort_unstable_by(|a, b| a.signature.cmp(&b.signature));
    for signer in signers {
        let open = format!("  <{SIGNER} signature=\"{}\"", signer.signature);
        if signer.global_rules.is_empty() && signer.package_rules.is_empty() {
            out.push_str(&open);
            out.push_str("/>\n");
            continue;
        }
        out.push_str(&open);
        out.push_str(">\n");
        write_rules(&mut out, &signer.global_rules, "    ");
        for (name, rules) in sorted(&signer.package_rules) {
            write_package(&mut out, name, rules, "    ");
        }
        out.push_str(&format!("  </{SIGNER}>\n"));
    }
    for (name, rules) in sorted(&doc.global_packages) {
        write_package(&mut out, name, rules, "  ");
    }
    out.push_str("</policy>\n");
    out
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A consulted scope that defines no rule at all.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub scope: ScopeRef,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} defines no allow-permission, deny-permission or allow-all",
            self.scope
        )
    }
}

/// Lists every empty consulted scope, sorted. A signer's global scope only
/// counts when the signer has no package children.
pub fn validate(doc: &PolicyDocument) -> Vec<Violation> {
    let mut out: Vec<Violation> = doc
        .scopes()
        .into_iter()
        .filter(|(scope, rules)| {
            let consulted = match scope {
                ScopeRef::SignerGlobal(sig) => doc.signers[sig].package_rules.is_empty(),
                _ => true,
            };
            consulted && rules.is_empty()
        })
        .map(|(scope, _)| Violation { scope })
        .collect();
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Mutations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutationTarget {
    SignerGlobal { signature: Signature },
    SignerPackage { signature: Signature, package: String },
    GlobalPackage { package: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutationAction {
    Grant(String),
    Revoke(String),
    SetAllowAll,
    ClearAllowAll,
}

/// An administrative edit to one scope of a policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MutationWire", into = "MutationWire")]
pub struct PolicyMutation {
    pub target: MutationTarget,
    pub action: MutationAction,
}

impl PolicyMutation {
    pub fn revoke_signer(signature: Signature, perm: impl Into<String>) -> Self {
        Self {
            target: MutationTarget::SignerGlobal { signature },
            action: MutationAction::Revoke(perm.into()),
        }
    }

    pub fn grant_signer(signature: Signature, perm: impl Into<String>) -> Self {
        Self {
            target: MutationTarget::SignerGlobal { signature },
            action: MutationAction::Grant(perm.into()),
        }
    }
}

/// Flat JSON form:
/// `{"scope":"signer-package","signature":"ab01","package":"com.a","action":"revoke","perm":"P"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationWire {
    pub scope: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<String>,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm: Option<String>,
}

impl TryFrom<MutationWire> for PolicyMutation {
    type Error = PolicyError;

    fn try_from(w: MutationWire) -> Result<Self, Self::Error> {
        let invalid = |msg: String| PolicyError::InvalidMutation(msg);
        let signature = w.signature.as_deref().map(Signature::parse).transpose()?;
        let package = match w.package {
            Some(p) if p.is_empty() => return Err(invalid("empty package name".into())),
            other => other,
        };
        let target = match (w.scope.as_str(), signature, package) {
            ("signer-global", Some(signature), None) => MutationTarget::SignerGlobal { signature },
            ("signer-package", Some(signature), Some(package)) => {
                MutationTarget::SignerPackage { signature, package }
            }
            ("global-package", None, Some(package)) => MutationTarget::GlobalPackage { package },
            ("signer-global" | "signer-package" | "global-package", _, _) => {
                return Err(invalid(format!(
                    "scope `{}` needs signature iff signer-scoped and package iff package-scoped",
                    w.scope
                )))
            }
            (other, _, _) => return Err(invalid(format!("unknown scope `{other}`"))),
        };
        let perm = match w.perm {
            Some(p) if p.is_empty() => return Err(invalid("empty permission name".into())),
            other => other,
        };
        let action = match (w.action.as_str(), perm) {
            ("grant", Some(p)) => MutationAction::Grant(p),
            ("revoke", Some(p)) => MutationAction::Revoke(p),
            ("set-allow-all", None) => MutationAction::SetAllowAll,
            ("clear-allow-all", None) => MutationAction::ClearAllowAll,
            ("grant" | "revoke", None) => {
                return Err(invalid(format!("action `{}` needs a perm", w.action)))
            }
            ("set-allow-all" | "clear-allow-all", Some(_)) => {
                return Err(invalid(format!("action `{}` takes no perm", w.action)))
            }
            (other, _) => return Err(invalid(format!("unknown action `{other}`"))),
        };
        Ok(PolicyMutation { target, action })
    }
}

impl From<PolicyMutation> for MutationWire {
    fn from(m: PolicyMutation) -> Self {
        let (scope, signature, package) = match m.target {
            MutationTarget::SignerGlobal { signature } => ("signer-global", Some(signature.0), None),
            MutationTarget::SignerPackage { signature, package } => {
                ("signer-package", Some(signature.0), Some(package))
            }
            MutationTarget::GlobalPackage { package } => ("global-package", None, Some(package)),
        };
        let (action, perm) = match m.action {
            MutationAction::Grant(p) => ("grant", Some(p)),
            MutationAction::Revoke(p) => ("revoke", Some(p)),
            MutationAction::SetAllowAll => ("set-allow-all", None),
            MutationAction::ClearAllowAll => ("clear-allow-all", None),
        };
        MutationWire {
            scope: scope.to_string(),
            signature,
            package,
            action: action.to_string(),
            perm,
        }
    }
}

/// Returns a copy of `doc` with `m` applied. Missing scopes are created.
pub fn apply_mutation(doc: &PolicyDocument, m: &PolicyMutation) -> PolicyDocument {
    let mut next = doc.clone();
    let rules = match &m.target {
        MutationTarget::SignerGlobal { signature } => {
            &mut next
                .signers
                .entry(signature.clone())
                .or_insert_with(|| SignerPolicy::new(signature.clone()))
                .global_rules
        }
        MutationTarget::SignerPackage { signature, package } => next
            .signers
            .entry(signature.clone())
            .or_insert_with(|| SignerPolicy::new(signature.clone()))
            .package_rules
            .entry(package.clone())
            .or_default(),
        MutationTarget::GlobalPackage { package } => {
            next.global_packages.entry(package.clone()).or_default()
        }
    };
    match &m.action {
        MutationAction::Grant(p) => rules.grant(p),
        MutationAction::Revoke(p) => rules.revoke(p),
        MutationAction::SetAllowAll => rules.allow_all = true,
        MutationAction::ClearAllowAll => rules.allow_all = false,
    }
    next
}
