//! Property tests over the algebraic core: bit-string arithmetic, the two
//! Toeplitz hash families and the ledger accounting.

use proptest::prelude::*;

use hepuf_qkd::auth::{self, WcKeyMaterial};
use hepuf_qkd::bits::BitSequence;
use hepuf_qkd::channel::{ClassicalMessage, MsgType};
use hepuf_qkd::extractor::{extractable_length, toeplitz_extract, ToeplitzSeed};
use hepuf_qkd::framing;
use hepuf_qkd::ledger::{KeyLedger, Region};

fn bit_seq(len: std::ops::Range<usize>) -> impl Strategy<Value = BitSequence> {
    prop::collection::vec(any::<bool>(), len).prop_map(|v| BitSequence::from_bools(&v))
}

proptest! {
    #[test]
    fn xor_is_associative_and_commutative(
        v in prop::collection::vec(any::<(bool, bool, bool)>(), 1..200)
    ) {
        let a: BitSequence = v.iter().map(|t| t.0).collect();
        let b: BitSequence = v.iter().map(|t| t.1).collect();
        let c: BitSequence = v.iter().map(|t| t.2).collect();
        let ab_c = a.xor(&b).unwrap().xor(&c).unwrap();
        let a_bc = a.xor(&b.xor(&c).unwrap()).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        prop_assert_eq!(a.xor(&b).unwrap(), b.xor(&a).unwrap());
        // involution
        prop_assert_eq!(a.xor(&b).unwrap().xor(&b).unwrap(), a);
    }

    #[test]
    fn concat_then_slice_recovers(a in bit_seq(0..150), b in bit_seq(0..150)) {
        let joined = a.concat(&b);
        prop_assert_eq!(joined.len(), a.len() + b.len());
        prop_assert_eq!(joined.slice(0, a.len()).unwrap(), a.clone());
        prop_assert_eq!(joined.slice(a.len(), b.len()).unwrap(), b);
    }

    #[test]
    fn hex_round_trips(a in bit_seq(0..200)) {
        let restored = BitSequence::from_hex(&a.to_hex(), a.len()).unwrap();
        prop_assert_eq!(restored, a);
    }

    #[test]
    fn toeplitz_is_linear(
        n_in in 1usize..96,
        n_out_frac in 0.05f64..1.0,
        seed_bits in prop::collection::vec(any::<bool>(), 200),
        a_bits in prop::collection::vec(any::<bool>(), 96),
        b_bits in prop::collection::vec(any::<bool>(), 96),
    ) {
        let n_out = ((n_in as f64 * n_out_frac) as usize).max(1).min(n_in);
        let seed = ToeplitzSeed::new(
            BitSequence::from_bools(&seed_bits[..n_in + n_out - 1]),
            n_in,
            n_out,
        ).unwrap();
        let a = BitSequence::from_bools(&a_bits[..n_in]);
        let b = BitSequence::from_bools(&b_bits[..n_in]);
        let lhs = toeplitz_extract(&a.xor(&b).unwrap(), &seed).unwrap();
        let rhs = toeplitz_extract(&a, &seed).unwrap()
            .xor(&toeplitz_extract(&b, &seed).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn wc_round_trip_accepts_and_tamper_rejects_wrong_pad(
        key_bits in prop::collection::vec(any::<bool>(), 16),
        msg in bit_seq(1..120),
        otp_bits in prop::collection::vec(any::<bool>(), 8),
    ) {
        let keys = WcKeyMaterial::from_key(BitSequence::from_bools(&key_bits)).unwrap();
        let otp = BitSequence::from_bools(&otp_bits);
        let tag = auth::tag(&msg, &keys, &otp).unwrap();
        prop_assert_eq!(
            auth::verify(&msg, &tag, &keys, &otp).unwrap(),
            auth::VerifyOutcome::Accept
        );
    }

    #[test]
    fn framing_round_trips(
        payload in bit_seq(0..200),
        tag in prop::option::of(bit_seq(1..64)),
        type_code in 1u8..=10,
    ) {
        let msg = ClassicalMessage {
            msg_type: MsgType::from_code(type_code).unwrap(),
            payload,
            tag,
        };
        let bytes = framing::encode(&msg).unwrap();
        let (decoded, used) = framing::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(decoded, msg);
    }

    #[test]
    fn extraction_length_never_exceeds_raw(raw in 0usize..100_000, delta in 0.0f64..0.5) {
        let l = extractable_length(raw, delta, 2.5e-11);
        prop_assert!(l <= raw);
        // more bias never helps
        let l_worse = extractable_length(raw, (delta + 0.05).min(0.5), 2.5e-11);
        prop_assert!(l_worse <= l);
    }

    #[test]
    fn ledger_conserves_bits(
        pool_bits in prop::collection::vec(any::<bool>(), 32..256),
        partition_frac in 0.0f64..1.0,
        draws in prop::collection::vec((any::<bool>(), 0usize..40), 0..20),
    ) {
        let pool = BitSequence::from_bools(&pool_bits);
        let partition = (pool.len() as f64 * partition_frac) as usize;
        let mut ledger = KeyLedger::new(pool.clone(), partition).unwrap();
        for (aut, n) in draws {
            let region = if aut { Region::Aut } else { Region::Qkd };
            let before = ledger.remaining(region);
            match ledger.draw(region, n) {
                Ok(bits) => prop_assert_eq!(bits.len(), n),
                Err(_) => prop_assert!(n > before),
            }
        }
        let consumed = ledger.consumed(Region::Qkd) + ledger.consumed(Region::Aut);
        let remaining = ledger.remaining(Region::Qkd) + ledger.remaining(Region::Aut);
        prop_assert_eq!(consumed + remaining, pool.len());
    }
}
