//! Threshold El Gamal over the prime-order subgroup.
//!
//! The secret key is additively split across the `N` group managers: each
//! contributes `y_i = g^{x_i}` and the public key is the product of the
//! contributions. Decrypting needs a share `a^{x_i}` from every manager.
//! Every operation tallies its modular exponentiations and multiplications
//! into the caller's [`OpCounters`]; reductions and comparisons are free, and
//! a modular inversion is charged as one multiplication.

use crate::algebra::{int_to_fixed_bytes, mod_inverse, Exponent, GroupElement, GroupParams};
use crate::metrics::OpCounters;
use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ElgamalError {
    #[error("at least one public-key contribution is required")]
    NoContributions,
    #[error("decryption share for manager {0} is missing")]
    MissingShare(u32),
    #[error("duplicate decryption share for manager {0}")]
    DuplicateShare(u32),
    #[error("ciphertext bytes have the wrong length")]
    BadLength,
    #[error("ciphertext component is not a subgroup member")]
    BadComponent,
}

/// One manager's key material: the secret exponent and its public image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShare {
    pub index: u32,
    pub(crate) secret: Exponent,
    pub public: GroupElement,
}

impl KeyShare {
    /// Build a share from a known secret; used by tests and fault rigs.
    pub fn from_parts(params: &GroupParams, index: u32, secret: Exponent) -> KeyShare {
        let public = params.pow(&params.g, &secret);
        KeyShare {
            index,
            secret,
            public,
        }
    }

    pub fn secret(&self) -> &Exponent {
        &self.secret
    }
}

/// Combined public key together with the per-manager contributions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub y: GroupElement,
    pub contributions: Vec<GroupElement>,
}

impl PublicKey {
    /// A product of contributions equal to the identity makes decryption leak
    /// plaintexts directly; callers surface this as a warning.
    pub fn is_degenerate(&self) -> bool {
        self.y.value().is_one()
    }
}

/// An El Gamal pair `(a, b) = (g^r, m * y^r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub a: GroupElement,
    pub b: GroupElement,
}

impl Ciphertext {
    /// Fixed-width big-endian serialization: `a` then `b`, each
    /// `ceil(log2 p) / 8` bytes. This is the unit the transmitted-bits
    /// counter measures.
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let w = params.element_width();
        let mut out = int_to_fixed_bytes(self.a.value(), w);
        out.extend(int_to_fixed_bytes(self.b.value(), w));
        out
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Ciphertext, ElgamalError> {
        let w = params.element_width();
        if bytes.len() != 2 * w {
            return Err(ElgamalError::BadLength);
        }
        let a = BigUint::from_bytes_be(&bytes[..w]);
        let b = BigUint::from_bytes_be(&bytes[w..]);
        let a = params.element(a).map_err(|_| ElgamalError::BadComponent)?;
        let b = params.element(b).map_err(|_| ElgamalError::BadComponent)?;
        Ok(Ciphertext { a, b })
    }
}

/// A manager's decryption share `d = a^{x_i}` for one ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptionShare {
    pub index: u32,
    pub d: GroupElement,
}

/// Draw a fresh key share: `x_i` uniform in `[1, q-1]`, `y_i = g^{x_i}`.
pub fn tkg_contribute(
    params: &GroupParams,
    index: u32,
    rng: &mut impl Rng,
    counters: &mut OpCounters,
) -> KeyShare {
    let secret = params.random_nonzero_exponent(rng);
    counters.tally_exp(1);
    KeyShare::from_parts(params, index, secret)
}

/// Combine the published contributions into the group public key.
pub fn combine_public_keys(
    params: &GroupParams,
    contributions: &[GroupElement],
    counters: &mut OpCounters,
) -> Result<PublicKey, ElgamalError> {
    let mut iter = contributions.iter();
    let first = iter.next().ok_or(ElgamalError::NoContributions)?;
    let mut y = first.clone();
    for c in iter {
        y = params.mul(&y, c);
        counters.tally_mul(1);
    }
    Ok(PublicKey {
        y,
        contributions: contributions.to_vec(),
    })
}

/// `E_pk(m; r) = (g^r, m * y^r)`. Two exponentiations, one multiplication.
pub fn encrypt(
    params: &GroupParams,
    pk: &PublicKey,
    m: &GroupElement,
    r: &Exponent,
    counters: &mut OpCounters,
) -> Ciphertext {
    let a = params.pow(&params.g, r);
    let b = params.mul(m, &params.pow(&pk.y, r));
    counters.tally_exp(2);
    counters.tally_mul(1);
    Ciphertext { a, b }
}

/// One manager's decryption share `a^{x_i}`. One exponentiation.
pub fn td_share(
    params: &GroupParams,
    key: &KeyShare,
    c: &Ciphertext,
    counters: &mut OpCounters,
) -> DecryptionShare {
    counters.tally_exp(1);
    DecryptionShare {
        index: key.index,
        d: params.pow(&c.a, &key.secret),
    }
}

/// Recover the plaintext as `b / prod(d_i)` from exactly one share per
/// manager index in `[1, n_managers]`.
pub fn combine_decryption(
    params: &GroupParams,
    c: &Ciphertext,
    shares: &[DecryptionShare],
    n_managers: u32,
    counters: &mut OpCounters,
) -> Result<GroupElement, ElgamalError> {
    let mut seen = vec![false; n_managers as usize];
    for s in shares {
        let idx = s.index;
        if idx == 0 || idx > n_managers {
            return Err(ElgamalError::MissingShare(idx));
        }
        if seen[(idx - 1) as usize] {
            return Err(ElgamalError::DuplicateShare(idx));
        }
        seen[(idx - 1) as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(ElgamalError::MissingShare(missing as u32 + 1));
    }

    let mut prod = shares[0].d.clone();
    for s in &shares[1..] {
        prod = params.mul(&prod, &s.d);
        counters.tally_mul(1);
    }
    // The inversion is charged as one multiplication.
    let inv = GroupElement::unchecked(mod_inverse(prod.value(), &params.p));
    counters.tally_mul(1);
    let m = params.mul(&c.b, &inv);
    counters.tally_mul(1);
    Ok(m)
}

/// `Re_pk(c; gamma) = (a * g^gamma, b * y^gamma)`: a fresh-looking ciphertext
/// of the same plaintext. Two exponentiations, two multiplications.
pub fn rerandomize(
    params: &GroupParams,
    pk: &PublicKey,
    c: &Ciphertext,
    gamma: &Exponent,
    counters: &mut OpCounters,
) -> Ciphertext {
    let a = params.mul(&c.a, &params.pow(&params.g, gamma));
    let b = params.mul(&c.b, &params.pow(&pk.y, gamma));
    counters.tally_exp(2);
    counters.tally_mul(2);
    Ciphertext { a, b }
}

/// Componentwise product of two ciphertexts; decrypts to the product of the
/// plaintexts.
pub fn mul_ciphertexts(params: &GroupParams, c1: &Ciphertext, c2: &Ciphertext) -> Ciphertext {
    Ciphertext {
        a: params.mul(&c1.a, &c2.a),
        b: params.mul(&c1.b, &c2.b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::generate_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> GroupParams {
        generate_params(5, 2, b"toy").unwrap().0
    }

    fn toy_exp(params: &GroupParams, v: u32) -> Exponent {
        params.exponent(BigUint::from(v)).unwrap()
    }

    fn toy_elem(params: &GroupParams, v: u32) -> GroupElement {
        params.element(BigUint::from(v)).unwrap()
    }

    #[test]
    fn key_share_matches_hand_computation() {
        let params = toy();
        let mut c = OpCounters::default();
        let ks = KeyShare::from_parts(&params, 1, toy_exp(&params, 3));
        // 4^3 mod 23 = 18
        assert_eq!(ks.public.value(), &BigUint::from(18u32));
        let ks1 = KeyShare::from_parts(&params, 1, toy_exp(&params, 1));
        assert_eq!(ks1.public, params.g);

        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let drawn = tkg_contribute(&params, 2, &mut rng, &mut c);
        assert_eq!(c.exp, 1);
        assert!(!drawn.secret().is_zero());
        assert_eq!(drawn.public, params.pow(&params.g, drawn.secret()));
    }

    #[test]
    fn public_key_combination() {
        let params = toy();
        let mut c = OpCounters::default();
        // y_1 = 4^3 = 18, y_2 = 4^5 = 12; y = 4^8 mod 23 = 9.
        let y1 = toy_elem(&params, 18);
        let y2 = toy_elem(&params, 12);
        let pk = combine_public_keys(&params, &[y1.clone(), y2], &mut c).unwrap();
        assert_eq!(pk.y.value(), &BigUint::from(9u32));
        assert_eq!(c.mul, 1);

        let single = combine_public_keys(&params, std::slice::from_ref(&y1), &mut c).unwrap();
        assert_eq!(single.y.value(), &BigUint::from(18u32));

        assert_eq!(
            combine_public_keys(&params, &[], &mut c),
            Err(ElgamalError::NoContributions)
        );

        // Inverse pair collapses to the identity: accepted but degenerate.
        let g_inv = params.inv(&params.g);
        let pk = combine_public_keys(&params, &[params.g.clone(), g_inv], &mut c).unwrap();
        assert!(pk.y.value().is_one());
        assert!(pk.is_degenerate());
        assert!(!single.is_degenerate());
    }

    #[test]
    fn encrypt_matches_hand_computation_and_counts() {
        let params = toy();
        let pk = PublicKey {
            y: toy_elem(&params, 18),
            contributions: vec![toy_elem(&params, 18)],
        };
        let mut c = OpCounters::default();
        let ct = encrypt(
            &params,
            &pk,
            &toy_elem(&params, 9),
            &toy_exp(&params, 2),
            &mut c,
        );
        // (4^2, 9 * 18^2) = (16, 18) mod 23
        assert_eq!(ct.a.value(), &BigUint::from(16u32));
        assert_eq!(ct.b.value(), &BigUint::from(18u32));
        assert_eq!(c, OpCounters { exp: 2, mul: 1 });

        // Identity plaintext: (g^r, y^r).
        let ct1 = encrypt(
            &params,
            &pk,
            &GroupElement::one(),
            &toy_exp(&params, 5),
            &mut c,
        );
        assert_eq!(ct1.a, params.pow(&params.g, &toy_exp(&params, 5)));
        assert_eq!(ct1.b, params.pow(&pk.y, &toy_exp(&params, 5)));
    }

    #[test]
    fn td_share_and_combine_invert_encryption() {
        let params = toy();
        let ks = KeyShare::from_parts(&params, 1, toy_exp(&params, 3));
        let ct = Ciphertext {
            a: toy_elem(&params, 16),
            b: toy_elem(&params, 18),
        };
        let mut c = OpCounters::default();
        let share = td_share(&params, &ks, &ct, &mut c);
        // 16^3 mod 23 = 2
        assert_eq!(share.d.value(), &BigUint::from(2u32));
        assert_eq!(c.exp, 1);

        // 18 * 2^{-1} mod 23 = 9
        let m = combine_decryption(&params, &ct, &[share], 1, &mut c).unwrap();
        assert_eq!(m.value(), &BigUint::from(9u32));

        // Identity base gives the identity share.
        let ct_id = Ciphertext {
            a: GroupElement::one(),
            b: toy_elem(&params, 9),
        };
        assert!(td_share(&params, &ks, &ct_id, &mut c).d.value().is_one());
    }

    #[test]
    fn shares_compose_multiplicatively() {
        let params = toy();
        let ct = Ciphertext {
            a: toy_elem(&params, 16),
            b: toy_elem(&params, 18),
        };
        let mut c = OpCounters::default();
        let s_i = td_share(
            &params,
            &KeyShare::from_parts(&params, 1, toy_exp(&params, 3)),
            &ct,
            &mut c,
        );
        let s_j = td_share(
            &params,
            &KeyShare::from_parts(&params, 2, toy_exp(&params, 5)),
            &ct,
            &mut c,
        );
        let composed = params.mul(&s_i.d, &s_j.d);
        assert_eq!(composed, params.pow(&ct.a, &toy_exp(&params, 8)));
    }

    #[test]
    fn combine_rejects_missing_and_duplicate_shares() {
        let params = toy();
        let ct = Ciphertext {
            a: toy_elem(&params, 16),
            b: toy_elem(&params, 18),
        };
        let share = DecryptionShare {
            index: 1,
            d: toy_elem(&params, 2),
        };
        let mut c = OpCounters::default();
        assert_eq!(
            combine_decryption(&params, &ct, std::slice::from_ref(&share), 2, &mut c),
            Err(ElgamalError::MissingShare(2))
        );
        assert_eq!(
            combine_decryption(&params, &ct, &[share.clone(), share], 2, &mut c),
            Err(ElgamalError::DuplicateShare(1))
        );
    }

    #[test]
    fn rerandomize_preserves_plaintext() {
        let params = toy();
        let pk = PublicKey {
            y: toy_elem(&params, 18),
            contributions: vec![toy_elem(&params, 18)],
        };
        let ct = Ciphertext {
            a: toy_elem(&params, 16),
            b: toy_elem(&params, 18),
        };
        let mut c = OpCounters::default();

        let same = rerandomize(&params, &pk, &ct, &Exponent::zero(), &mut c);
        assert_eq!(same, ct);
        assert_eq!(c, OpCounters { exp: 2, mul: 2 });

        // (16*4, 18*18) = (18, 2) mod 23, still decrypting to 9.
        let fresh = rerandomize(&params, &pk, &ct, &toy_exp(&params, 1), &mut c);
        assert_eq!(fresh.a.value(), &BigUint::from(18u32));
        assert_eq!(fresh.b.value(), &BigUint::from(2u32));
        let ks = KeyShare::from_parts(&params, 1, toy_exp(&params, 3));
        let share = td_share(&params, &ks, &fresh, &mut c);
        let m = combine_decryption(&params, &fresh, &[share], 1, &mut c).unwrap();
        assert_eq!(m.value(), &BigUint::from(9u32));
    }

    #[test]
    fn rerandomized_first_component_sweeps_whole_subgroup() {
        let params = toy();
        let pk = PublicKey {
            y: toy_elem(&params, 18),
            contributions: vec![toy_elem(&params, 18)],
        };
        let ct = Ciphertext {
            a: toy_elem(&params, 16),
            b: toy_elem(&params, 18),
        };
        let mut c = OpCounters::default();
        let mut seen: Vec<BigUint> = (0u32..11)
            .map(|g| {
                rerandomize(&params, &pk, &ct, &toy_exp(&params, g), &mut c)
                    .a
                    .value()
                    .clone()
            })
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 11);
    }

    #[test]
    fn homomorphic_product_on_toy_group() {
        let params = toy();
        let ks = KeyShare::from_parts(&params, 1, toy_exp(&params, 3));
        let pk = PublicKey {
            y: ks.public.clone(),
            contributions: vec![ks.public.clone()],
        };
        let mut c = OpCounters::default();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..50 {
            let m1 = params.pow(&params.g, &params.random_exponent(&mut rng));
            let m2 = params.pow(&params.g, &params.random_exponent(&mut rng));
            let r1 = params.random_nonzero_exponent(&mut rng);
            let r2 = params.random_nonzero_exponent(&mut rng);
            let prod = mul_ciphertexts(
                &params,
                &encrypt(&params, &pk, &m1, &r1, &mut c),
                &encrypt(&params, &pk, &m2, &r2, &mut c),
            );
            let share = td_share(&params, &ks, &prod, &mut c);
            let m = combine_decryption(&params, &prod, &[share], 1, &mut c).unwrap();
            assert_eq!(m, params.mul(&m1, &m2));
        }
    }

    #[test]
    fn ciphertext_bytes_roundtrip() {
        let (params, _) = generate_params(64, 2, b"bytes").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut c = OpCounters::default();
        let ks = tkg_contribute(&params, 1, &mut rng, &mut c);
        let pk = combine_public_keys(&params, std::slice::from_ref(&ks.public), &mut c).unwrap();
        let m = params.pow(&params.g, &params.random_exponent(&mut rng));
        let ct = encrypt(
            &params,
            &pk,
            &m,
            &params.random_nonzero_exponent(&mut rng),
            &mut c,
        );
        let bytes = ct.to_bytes(&params);
        assert_eq!(bytes.len(), 2 * params.element_width());
        assert_eq!(Ciphertext::from_bytes(&params, &bytes).unwrap(), ct);
        assert!(Ciphertext::from_bytes(&params, &bytes[1..]).is_err());
    }
}
