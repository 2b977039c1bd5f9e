use fgbm_core::chaos::{ChaosExpansion, TruncationSpec};
use fgbm_core::market::{bs_closed_form, price_bid_ask, Engine, MarketModel, Payoff};
use fgbm_core::synth::stats::covariance_closed_form;
use fgbm_core::synth::GeneratorKind;
use fgbm_core::{make_scenario_family, HurstIndex, SeedSpec, TimeGrid, VolatilityBand, VolatilityScenario};
use proptest::prelude::*;

fn model(h: f64, lo: f64, hi: f64, t: f64, r: f64) -> MarketModel {
    MarketModel::new(100.0, r, HurstIndex::new(h).unwrap(), VolatilityBand::new(lo, hi).unwrap(), t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_quotes_ordered_and_monotone(
        h in 0.05f64..0.95,
        lo in 0.05f64..0.3,
        w in 0.0f64..0.3,
        extra in 0.0f64..0.2,
        k in 60.0f64..140.0,
        t in 0.1f64..3.0,
        r in -0.02f64..0.08,
        put in any::<bool>(),
    ) {
        let p = if put { Payoff::Put { strike: k } } else { Payoff::Call { strike: k } };
        let q = price_bid_ask(&model(h, lo, lo + w, t, r), &p, &Engine::PerScenarioClosedForm, None).unwrap();
        prop_assert!(q.bid >= q.ask);
        let lo2 = (lo - extra).max(0.01);
        let wide = price_bid_ask(&model(h, lo2, lo + w + extra, t, r), &p, &Engine::PerScenarioClosedForm, None).unwrap();
        prop_assert!(wide.bid >= q.bid - 1e-12 && wide.ask <= q.ask + 1e-12);
    }

    #[test]
    fn call_value_bounds(x in 10.0f64..200.0, k in 10.0f64..200.0, v in 0.0f64..1.0, t in 0.1f64..2.0, r in 0.0f64..0.1) {
        let c = bs_closed_form(x, k, r, v, t).value;
        prop_assert!(c >= (x - k * (-r * t).exp()).max(0.0) - 1e-9);
        prop_assert!(c <= x + 1e-9);
    }

    #[test]
    fn chaos_json_roundtrip(c in proptest::collection::vec(-2.0f64..2.0, 1..6)) {
        let t = TruncationSpec::new(3, 8).unwrap();
        let x = ChaosExpansion::first_order(&c, t).wick_power(2);
        let back: ChaosExpansion = serde_json::from_str(&x.to_json()).unwrap();
        prop_assert!(back.max_abs_diff(&x) == 0.0);
    }
}

#[test]
fn same_seed_same_paths_across_generators() {
    let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let s = VolatilityScenario::constant(0.2, (0.0, 1.0)).unwrap();
    for gen in &[GeneratorKind::CovarianceFactorization, GeneratorKind::MovingAverage(Default::default())] {
        let a = gen.generate(HurstIndex::new(0.7).unwrap(), &grid, &s, 50, SeedSpec::new(3)).unwrap();
        let b = gen.generate(HurstIndex::new(0.7).unwrap(), &grid, &s, 50, SeedSpec::new(3)).unwrap();
        assert_eq!(a.paths, b.paths);
        let c = gen.generate(HurstIndex::new(0.7).unwrap(), &grid, &s, 50, SeedSpec::new(4)).unwrap();
        assert_ne!(a.paths, c.paths);
    }
}

#[test]
fn family_members_stay_inside_band_covariance() {
    // any adapted scenario's variance lies between the band-edge variances
    let band = VolatilityBand::new(0.1, 0.3).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
    let h = HurstIndex::new(0.3).unwrap();
    let fam = make_scenario_family(band, 6, &grid).unwrap();
    for s in &fam.members {
        let e = GeneratorKind::MovingAverage(Default::default()).generate(h, &grid, s, 2, SeedSpec::new(1)).unwrap();
        let v = *e.metadata.variance.last().unwrap();
        assert!(v <= covariance_closed_form(h, 0.3, 1.0, 1.0) * 1.03, "{}", s.label());
        assert!(v >= covariance_closed_form(h, 0.1, 1.0, 1.0) * 0.97, "{}", s.label());
    }
}
