use cnumlab_core::coherent::SymbolKind;
use cnumlab_core::fock::{annihilation, creation};
use cnumlab_core::gas::{build_h, build_substituted, delta_bound_margin, delta_correction, GasParams, Interaction, SymbolExpansion};
use cnumlab_core::griffiths::MeasureSequence;
use cnumlab_core::magnet::{sector_spectrum, SpinLattice};
use cnumlab_core::{Execution, FockBasis, ModeSet, Truncation, C64};
use proptest::prelude::*;

fn modes(choice: u8, volume: f64) -> ModeSet {
    match choice {
        0 => ModeSet::zero_only(volume),
        1 => ModeSet::new(vec![0, 1], volume),
        _ => ModeSet::symmetric(1, volume),
    }
    .unwrap()
}

prop_compose! {
    fn gas()(choice in 0u8..3, volume in 1.0f64..3.0, g in 0.0f64..1.0,
             mu in -2.0f64..0.3, lambda in -0.8f64..0.8, beta in 0.2f64..4.0) -> GasParams {
        GasParams::new(modes(choice, volume), Interaction::Contact { g }, g, mu, lambda, beta).unwrap()
    }
}

prop_compose! {
    fn point()(r in 0.0f64..3.0, theta in 0.0f64..std::f64::consts::TAU) -> C64 {
        C64::from_polar(r, theta)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canonical_commutator_below_cap(choice in 0u8..3, cap in 1u32..5) {
        let b = FockBasis::build(&modes(choice, 2.0), Truncation::uniform(cap)).unwrap();
        for mode in 0..b.modes().len() {
            let a = annihilation(&b, mode).unwrap();
            let ad = creation(&b, mode).unwrap();
            let c = a.commutator(&ad);
            let slot = b.slot_of_mode(mode).unwrap();
            for i in 0..b.dim() {
                if (b.state(i)[slot] as u32) < cap {
                    prop_assert!((c.get(i, i) - C64::new(1.0, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian(p in gas(), cap in 1u32..4) {
        let b = FockBasis::build(&p.modes, Truncation::uniform(cap)).unwrap();
        prop_assert!(build_h(&p, &b).unwrap().max_antihermitian() < 1e-12);
    }

    #[test]
    fn delta_identity_and_bound(p in gas(), z in point(), cap in 1u32..5) {
        let b = FockBasis::build_primed(&p.modes, Truncation::uniform(cap)).unwrap();
        let lower = build_substituted(&p, &b, z, SymbolKind::Lower).unwrap();
        let upper = build_substituted(&p, &b, z, SymbolKind::Upper).unwrap();
        let d = delta_correction(&p, &b, z).unwrap();
        prop_assert!(upper.matrix.sub(&lower.matrix).sub(&d).max_abs() < 1e-12);
        prop_assert!(delta_bound_margin(&p, &b, z).unwrap() >= -1e-12);
    }

    #[test]
    fn substituted_trace_is_conjugation_even(p in gas(), z in point(), cap in 1u32..4) {
        let b = FockBasis::build_primed(&p.modes, Truncation::uniform(cap)).unwrap();
        let e = SymbolExpansion::new(&p, &b).unwrap();
        for kind in [SymbolKind::Lower, SymbolKind::Upper] {
            let a = e.ln_trace(z, kind).unwrap();
            let c = e.ln_trace(z.conj(), kind).unwrap();
            prop_assert!((a - c).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn scaled_cgf_is_convex(h in -1.0f64..1.0, n in 4u32..60, y in -2.0f64..2.0, s in 0.01f64..0.5) {
        let seq = MeasureSequence::tilted_coins(&[n], h).unwrap();
        let m = &seq.entries[0];
        let mid = m.scaled_cgf(y);
        let second = m.scaled_cgf(y + s) + m.scaled_cgf(y - s) - 2.0 * mid;
        prop_assert!(second >= -1e-12);
        prop_assert!(m.scaled_cgf(0.0).abs() < 1e-12);
    }

    #[test]
    fn magnetization_is_odd_and_bounded(sites in 2u32..7, b in 0.0f64..2.0, beta in 0.1f64..5.0) {
        let lat = SpinLattice::chain(sites).with_beta(beta);
        let s = sector_spectrum(&lat, Execution::Sequential).unwrap();
        let (up, down) = (s.at(b), s.at(-b));
        prop_assert!((up.m + down.m).abs() < 1e-10);
        prop_assert!(up.m >= -1e-12 && up.m <= 0.5 + 1e-12);
        prop_assert!(up.m2 >= up.m * up.m - 1e-12);
    }
}
