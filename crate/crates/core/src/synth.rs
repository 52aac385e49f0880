//! Synthetic policies and request streams for benchmarks and randomized tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::engine::PermissionRequest;
use crate::policy::{PermissionRuleSet, PolicyDocument, Signature, SignerPolicy};

/// Common dangerous-level Android permissions.
pub const ANDROID_PERMISSIONS: [&str; 24] = [
    "android.permission.READ_CONTACTS",
    "android.permission.WRITE_CONTACTS",
    "android.permission.READ_SMS",
    "android.permission.SEND_SMS",
    "android.permission.RECEIVE_SMS",
    "android.permission.RECORD_AUDIO",
    "android.permission.CAMERA",
    "android.permission.ACCESS_FINE_LOCATION",
    "android.permission.ACCESS_COARSE_LOCATION",
    "android.permission.READ_PHONE_STATE",
    "android.permission.CALL_PHONE",
    "android.permission.READ_CALL_LOG",
    "android.permission.WRITE_CALL_LOG",
    "android.permission.READ_CALENDAR",
    "android.permission.WRITE_CALENDAR",
    "android.permission.BODY_SENSORS",
    "android.permission.READ_EXTERNAL_STORAGE",
    "android.permission.WRITE_EXTERNAL_STORAGE",
    "android.permission.GET_ACCOUNTS",
    "android.permission.INTERNET",
    "android.permission.ACCESS_WIFI_STATE",
    "android.permission.BLUETOOTH",
    "android.permission.NFC",
    "android.permission.READ_HISTORY_BOOKMARKS",
];

/// Name of the `i`-th permission in an unbounded pool.
pub fn permission_name(i: usize) -> String {
    match ANDROID_PERMISSIONS.get(i) {
        Some(p) => p.to_string(),
        None => format!("com.example.permission.P{i}"),
    }
}

pub fn random_signature<R: Rng + ?Sized>(rng: &mut R, bytes: usize) -> Signature {
    let mut text = String::with_capacity(bytes * 2);
    for _ in 0..bytes {
        text.push_str(&format!("{:02x}", rng.gen::<u8>()));
    }
    Signature::parse(&text).expect("generated hex is valid")
}

/// A signature guaranteed absent from `doc`.
pub fn unknown_signature<R: Rng + ?Sized>(rng: &mut R, doc: &PolicyDocument) -> Signature {
    loop {
        let sig = random_signature(rng, 8);
        if !doc.signers.contains_key(&sig) {
            return sig;
        }
    }
}

/// Knobs for [`random_policy`].
#[derive(Debug, Clone)]
pub struct RandomPolicyConfig {
    pub max_signers: usize,
    pub max_perms: usize,
    /// Size of the permission-name pool drawn from.
    pub perm_pool: usize,
    pub max_packages_per_signer: usize,
    pub max_global_packages: usize,
    /// Package names are drawn from `pkg0..pkg{package_pool}`.
    pub package_pool: usize,
}

impl Default for RandomPolicyConfig {
    fn default() -> Self {
        Self {
            max_signers: 20,
            max_perms: 30,
            perm_pool: 40,
            max_packages_per_signer: 3,
            max_global_packages: 4,
            package_pool: 8,
        }
    }
}

fn random_rules<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomPolicyConfig) -> PermissionRuleSet {
    let mut rules = PermissionRuleSet::default();
    let n = rng.gen_range(0..=cfg.max_perms);
    // Mode bias keeps pure whitelists, pure blacklists and mixes all common.
    let deny_share: f64 = *[0.0, 0.3, 0.5, 1.0].choose(rng).unwrap();
    for _ in 0..n {
        let perm = permission_name(rng.gen_range(0..cfg.perm_pool));
        if rng.gen_bool(deny_share) {
            rules.denies.insert(perm);
        } else {
            rules.allows.insert(perm);
        }
    }
    rules.allow_all = rng.gen_bool(0.3);
    rules
}

/// A policy with mixed whitelist/blacklist/allow-all scopes and package
/// overrides. Empty scopes occur too.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomPolicyConfig) -> PolicyDocument {
    let mut doc = PolicyDocument::default();
    for _ in 0..rng.gen_range(0..=cfg.max_signers) {
        let sig_bytes = rng.gen_range(1..=4);
        let mut signer = SignerPolicy::new(random_signature(rng, sig_bytes));
        signer.global_rules = random_rules(rng, cfg);
        for _ in 0..rng.gen_range(0..=cfg.max_packages_per_signer) {
            let pkg = format!("pkg{}", rng.gen_range(0..cfg.package_pool));
            signer.package_rules.insert(pkg, random_rules(rng, cfg));
        }
        doc.insert_signer(signer);
    }
    for _ in 0..rng.gen_range(0..=cfg.max_global_packages) {
        let pkg = format!("pkg{}", rng.gen_range(0..cfg.package_pool));
        doc.global_packages.insert(pkg, random_rules(rng, cfg));
    }
    doc
}

/// A request that hits a known signer about two thirds of the time.
pub fn random_request<R: Rng + ?Sized>(
    rng: &mut R,
    doc: &PolicyDocument,
    cfg: &RandomPolicyConfig,
) -> PermissionRequest {
    let signature = if !doc.signers.is_empty() && rng.gen_bool(0.67) {
        let mut sigs: Vec<&Signature> = doc.signers.keys().collect();
        sigs.sort_unstable();
        (*sigs.choose(rng).unwrap()).clone()
    } else {
        unknown_signature(rng, doc)
    };
    PermissionRequest {
        pkg_name: format!("pkg{}", rng.gen_range(0..cfg.package_pool)),
        signature,
        perm: permission_name(rng.gen_range(0..cfg.perm_pool + 2)),
    }
}

/// The benchmark policy: `signers` signers, each scope listing
/// `perms_per_scope` permissions. Signers rotate through whitelist,
/// blacklist and allow-all-with-exceptions modes; every fourth signer also
/// carries a package override.
pub fn synthetic_policy<R: Rng + ?Sized>(
    rng: &mut R,
    signers: usize,
    perms_per_scope: usize,
) -> PolicyDocument {
    let pool = perms_per_scope.max(1) * 3;
    let mut doc = PolicyDocument::default();
    while doc.signers.len() < signers {
        let i = doc.signers.len();
        let mut signer = SignerPolicy::new(random_signature(rng, 16));
        let mut perms: Vec<usize> = (0..pool).collect();
        perms.shuffle(rng);
        let chosen = perms[..perms_per_scope.min(pool)].iter().map(|&p| permission_name(p));
        match i % 3 {
            0 => signer.global_rules.allows.extend(chosen),
            1 => signer.global_rules.denies.extend(chosen),
            _ => {
                signer.global_rules.denies.extend(chosen);
                signer.global_rules.allow_all = true;
            }
        }
        if i % 4 == 0 {
            let mut rules = PermissionRuleSet::default();
            rules
                .denies
                .extend(perms[..perms_per_scope.min(pool)].iter().map(|&p| permission_name(p)));
            signer.package_rules.insert(format!("com.app{i}.restricted"), rules);
        }
        doc.insert_signer(signer);
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn synthetic_policy_dimensions() {
        let mut rng = StdRng::seed_from_u64(7);
        let doc = synthetic_policy(&mut rng, 50, 10);
        assert_eq!(doc.signers.len(), 50);
        for s in doc.signers.values() {
            let r = &s.global_rules;
            assert_eq!(r.allows.len() + r.denies.len(), 10);
        }
    }

    #[test]
    fn random_policy_respects_limits() {
        let mut rng = StdRng::seed_from_u64(1);
        let cfg = RandomPolicyConfig::default();
        for _ in 0..50 {
            let doc = random_policy(&mut rng, &cfg);
            assert!(doc.signers.len() <= cfg.max_signers);
            for (_, rules) in doc.scopes() {
                assert!(rules.allows.len() + rules.denies.len() <= cfg.max_perms);
            }
            let req = random_request(&mut rng, &doc, &cfg);
            assert!(!req.perm.is_empty());
        }
    }

    #[test]
    fn unknown_signature_is_unknown() {
        let mut rng = StdRng::seed_from_u64(3);
        let doc = synthetic_policy(&mut rng, 20, 5);
        for _ in 0..100 {
            assert!(!doc.signers.contains_key(&unknown_signature(&mut rng, &doc)));
        }
    }
}
