//! Simulated (k, n) threshold signatures.
//!
//! A partial signature is just `(signer, digest, scheme)`, and a threshold
//! signature records the digest together with the set of distinct signers.
//! Unforgeability holds by construction: a [`SigningKey`] can only be
//! obtained from [`Keyring::issue`], each process receives only its own key,
//! and the fields of signature objects are private, so the only way to
//! obtain a threshold signature is to combine partials that were really
//! produced by their signers.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::CryptoError;
use crate::ProcessId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemeKind {
    /// k = 2f+1, used by RareSync and the view core.
    Quorum,
    /// k = f+1, used by the certification phase.
    Cert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub k: usize,
    pub n: usize,
}

impl SchemeConfig {
    pub fn quorum(n: usize, f: usize) -> Self {
        SchemeConfig { kind: SchemeKind::Quorum, k: 2 * f + 1, n }
    }

    pub fn cert(n: usize, f: usize) -> Self {
        SchemeConfig { kind: SchemeKind::Cert, k: f + 1, n }
    }

    pub fn share_sign(&self, key: &SigningKey, digest: &Digest) -> PartialSignature {
        PartialSignature { signer: key.owner, digest: digest.clone(), scheme: self.kind }
    }

    pub fn share_verify(&self, signer: ProcessId, digest: &Digest, psig: &PartialSignature) -> bool {
        psig.scheme == self.kind
            && psig.signer == signer
            && &psig.digest == digest
            && (1..=self.n as u32).contains(&signer.0)
    }

    /// Combines partials into a threshold signature. Duplicate signers are
    /// counted once.
    pub fn combine<'a, I>(&self, partials: I) -> Result<ThresholdSignature, CryptoError>
    where
        I: IntoIterator<Item = &'a PartialSignature>,
    {
        let mut digest: Option<&Digest> = None;
        let mut signers = BTreeSet::new();
        for p in partials {
            if p.scheme != self.kind {
                return Err(CryptoError::MixedSchemes);
            }
            match digest {
                Some(d) if d != &p.digest => return Err(CryptoError::MixedDigests),
                Some(_) => {}
                None => digest = Some(&p.digest),
            }
            signers.insert(p.signer);
        }
        if signers.len() < self.k {
            return Err(CryptoError::ThresholdTooSmall { have: signers.len(), need: self.k });
        }
        let digest = digest.cloned().expect("k >= 1 implies at least one partial");
        Ok(ThresholdSignature { digest, signers, scheme: self.kind })
    }

    pub fn combined_verify(&self, digest: &Digest, tsig: &ThresholdSignature) -> bool {
        tsig.scheme == self.kind
            && &tsig.digest == digest
            && tsig.signers.len() >= self.k
            && tsig.signers.iter().all(|s| (1..=self.n as u32).contains(&s.0))
    }
}

/// Canonical serialization of a signed message tuple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(String);

impl Digest {
    pub fn epoch(epoch: u64) -> Self {
        Digest(format!("epoch:{epoch}"))
    }

    pub fn vote(phase: &str, value: u64, view: u64) -> Self {
        Digest(format!("vote:{phase}:{value}:{view}"))
    }

    pub fn value(value: u64) -> Self {
        Digest(format!("value:{value}"))
    }

    pub fn any_value() -> Self {
        Digest("any value".to_string())
    }

    pub fn raw(text: impl Into<String>) -> Self {
        Digest(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The right to produce partial signatures for one process.
#[derive(Debug, PartialEq, Eq)]
pub struct SigningKey {
    owner: ProcessId,
}

impl SigningKey {
    pub fn owner(&self) -> ProcessId {
        self.owner
    }
}

/// Hands out exactly one key per process.
pub struct Keyring;

impl Keyring {
    pub fn issue(n: usize) -> Vec<SigningKey> {
        (1..=n as u32).map(|i| SigningKey { owner: ProcessId(i) }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartialSignature {
    signer: ProcessId,
    digest: Digest,
    scheme: SchemeKind,
}

impl PartialSignature {
    pub fn signer(&self) -> ProcessId {
        self.signer
    }

    pub fn digest(&self) -> &Digest {
        &self.digest
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }
}

impl fmt::Display for PartialSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "psig({},{})", self.digest, self.signer)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThresholdSignature {
    digest: Digest,
    signers: BTreeSet<ProcessId>,
    scheme: SchemeKind,
}

impl ThresholdSignature {
    pub fn digest(&self) -> &Digest {
        &self.digest
    }

    pub fn signers(&self) -> &BTreeSet<ProcessId> {
        &self.signers
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    /// Drops all but the `keep` lowest signers. Tampering can only remove
    /// signers, so the result stays attributable but stops verifying once it
    /// falls below the threshold.
    pub fn truncated(&self, keep: usize) -> Self {
        ThresholdSignature {
            digest: self.digest.clone(),
            signers: self.signers.iter().copied().take(keep).collect(),
            scheme: self.scheme,
        }
    }
}

impl fmt::Display for ThresholdSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sig({},{{", self.digest)?;
        for (i, s) in self.signers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys() -> Vec<SigningKey> {
        Keyring::issue(4)
    }

    #[test]
    fn share_verify_checks_signer_and_digest() {
        let keys = keys();
        let q = SchemeConfig::quorum(4, 1);
        let d3 = Digest::epoch(3);
        let psig = q.share_sign(&keys[0], &d3);
        assert!(q.share_verify(ProcessId(1), &d3, &psig));
        assert!(!q.share_verify(ProcessId(2), &d3, &psig));
        assert!(!q.share_verify(ProcessId(1), &Digest::epoch(4), &psig));
        assert!(!SchemeConfig::cert(4, 1).share_verify(ProcessId(1), &d3, &psig));
    }

    #[test]
    fn combine_quorum() {
        let keys = keys();
        let q = SchemeConfig::quorum(4, 1);
        let d = Digest::epoch(1);
        let parts: Vec<_> = keys[..3].iter().map(|k| q.share_sign(k, &d)).collect();
        let tsig = q.combine(&parts).unwrap();
        assert_eq!(tsig.signers().len(), 3);
        assert!(q.combined_verify(&d, &tsig));
        assert!(!q.combined_verify(&Digest::epoch(2), &tsig));
        assert_eq!(tsig.to_string(), "sig(epoch:1,{P1,P2,P3})");
    }

    #[test]
    fn combine_rejects_duplicates_below_threshold() {
        let keys = keys();
        let q = SchemeConfig::quorum(4, 1);
        let d = Digest::epoch(1);
        let a = q.share_sign(&keys[0], &d);
        let b = q.share_sign(&keys[1], &d);
        let err = q.combine([&a, &a, &b]).unwrap_err();
        assert_eq!(err, CryptoError::ThresholdTooSmall { have: 2, need: 3 });
    }

    #[test]
    fn combine_rejects_mixed_digests() {
        let keys = keys();
        let q = SchemeConfig::quorum(4, 1);
        let parts = [
            q.share_sign(&keys[0], &Digest::epoch(1)),
            q.share_sign(&keys[1], &Digest::epoch(1)),
            q.share_sign(&keys[2], &Digest::epoch(2)),
        ];
        assert_eq!(q.combine(&parts).unwrap_err(), CryptoError::MixedDigests);
    }

    #[test]
    fn cert_scheme_threshold() {
        let keys = keys();
        let c = SchemeConfig::cert(4, 1);
        let d = Digest::value(7);
        let parts = [c.share_sign(&keys[0], &d), c.share_sign(&keys[3], &d)];
        let tsig = c.combine(&parts).unwrap();
        assert!(c.combined_verify(&d, &tsig));
        assert!(!SchemeConfig::quorum(4, 1).combined_verify(&d, &tsig));
    }

    #[test]
    fn tampered_signer_set_fails() {
        let keys = keys();
        let q = SchemeConfig::quorum(4, 1);
        let d = Digest::epoch(1);
        let parts: Vec<_> = keys[..3].iter().map(|k| q.share_sign(k, &d)).collect();
        let tsig = q.combine(&parts).unwrap();
        assert!(!q.combined_verify(&d, &tsig.truncated(2)));
    }

    proptest::proptest! {
        #[test]
        fn any_k_subset_round_trips(n_f in 1usize..6, mask in proptest::collection::vec(proptest::bool::ANY, 16)) {
            let f = n_f;
            let n = 3 * f + 1;
            let keys = Keyring::issue(n);
            for scheme in [SchemeConfig::quorum(n, f), SchemeConfig::cert(n, f)] {
                let d = Digest::vote("prepare", 5, 3);
                let chosen: Vec<_> = keys.iter().zip(mask.iter().cycle())
                    .filter(|(_, keep)| **keep)
                    .map(|(k, _)| scheme.share_sign(k, &d))
                    .collect();
                let result = scheme.combine(&chosen);
                if chosen.len() >= scheme.k {
                    proptest::prop_assert!(scheme.combined_verify(&d, &result.unwrap()));
                } else {
                    proptest::prop_assert!(result.is_err());
                }
            }
        }
    }
}
