mod common;

use common::cir_grammar::{sample, Production, ALL};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempnorm::slots::{decode_slots, encode_cir, CirClass};

fn expected_class(p: Production) -> CirClass {
    match p {
        Production::Reference => CirClass::Reference,
        Production::ExplicitDate => CirClass::ExplicitDate,
        Production::Duration => CirClass::Duration,
        Production::RelativeDate => CirClass::RelativeDate,
        Production::CoarseRelative => CirClass::CoarseRelative,
        Production::FunctionDate => CirClass::FunctionDate,
    }
}

#[test]
fn sampled_cirs_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    for i in 0..6000 {
        let p = ALL[i % ALL.len()];
        let cir = sample(&mut rng, p);
        match encode_cir(&cir) {
            Ok((slots, class)) => {
                let back = decode_slots(&slots).map(|d| d.value).ok();
                if back.as_deref() != Some(cir.as_str()) || class != expected_class(p) {
                    failures.push(format!("{cir}: {back:?} {class:?}"));
                }
            }
            Err(e) => failures.push(format!("{cir}: {e}")),
        }
    }
    assert!(failures.is_empty(), "{} failures, first: {:?}", failures.len(), &failures[..failures.len().min(5)]);
}

fn production() -> impl Strategy<Value = Production> {
    prop::sample::select(ALL.to_vec())
}

proptest! {
    #[test]
    fn grammar_round_trip(p in production(), seed in any::<u64>()) {
        let cir = sample(&mut ChaCha8Rng::seed_from_u64(seed), p);
        let (slots, class) = encode_cir(&cir).unwrap();
        prop_assert_eq!(class, expected_class(p));
        let d = decode_slots(&slots).unwrap();
        prop_assert!(d.canonical);
        prop_assert_eq!(d.value, cir);
    }

    #[test]
    fn arbitrary_strings_never_panic(s in "\\PC{0,40}") {
        if let Ok((slots, _)) = encode_cir(&s) {
            prop_assert_eq!(decode_slots(&slots).unwrap().value, s);
        }
    }
}
