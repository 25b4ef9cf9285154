//! Randomised merge properties: conservation, order independence and
//! idempotence.

mod common;

use common::merge::*;
use proptest::prelude::*;
use sgcr_core::merger::merge_ssd;
use sgcr_core::scl::{parse_scl, SclKind};

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn conserves_elements(m in model()) {
        let (a, s) = (ssds(&m), seds(&m));
        let merged = merge_ssd(&a, &s).unwrap();
        let (p, b, e) = counts(&a);
        let (_, sb, se) = counts(&s);
        prop_assert_eq!(counts(std::slice::from_ref(&merged)), (p, b + sb, e + se));
        let c = scds(&m);
        let scd = merge_scd(&c).unwrap();
        prop_assert_eq!(scd.ieds.len(), c.iter().map(|d| d.ieds.len()).sum::<usize>());
        prop_assert_eq!(scd.connected_aps().count(), c.iter().map(|d| d.connected_aps().count()).sum::<usize>());
    }

    #[test]
    fn order_independent(m in model(), rot in 0..5usize, rev in any::<bool>()) {
        let (mut a, mut s, mut c) = (ssds(&m), seds(&m), scds(&m));
        let base_ssd = canonical(merge_ssd(&a, &s).unwrap());
        let base_scd = canonical(merge_scd(&c).unwrap());
        let n = a.len();
        a.rotate_left(rot % n);
        c.rotate_left(rot % n);
        if rev {
            a.reverse();
            s.reverse();
            c.reverse();
        }
        prop_assert_eq!(canonical(merge_ssd(&a, &s).unwrap()), base_ssd);
        prop_assert_eq!(canonical(merge_scd(&c).unwrap()), base_scd);
    }

    #[test]
    fn merging_a_merged_model_is_identity(m in model()) {
        let merged = merge_ssd(&ssds(&m), &seds(&m)).unwrap();
        prop_assert_eq!(merge_ssd(std::slice::from_ref(&merged), &[]).unwrap(), merged.clone());
        // Also through a serialise/parse round trip.
        let reparsed = parse_scl(&merged.to_xml(), SclKind::Ssd).unwrap();
        prop_assert_eq!(canonical(merge_ssd(&[reparsed], &[]).unwrap()), canonical(merged));
        let scd = merge_scd(&scds(&m)).unwrap();
        prop_assert_eq!(merge_scd(std::slice::from_ref(&scd)).unwrap(), scd);
    }
}
