//! Randomized property suites over the built-in behaviors: arbiter algebra,
//! cost-saving monotonicity, fire-protection duty bound and thermostat
//! no-chatter. Each property runs on 256 generated cases.

use std::collections::BTreeMap;

use proptest::prelude::*;

use dartwin_core::sim::behaviors::{
    arbiter_strictest, Behavior, CostSaving, FireProtection, KineticLimits, StepContext,
    Thermostat,
};

fn ctx<'a>(
    ports: &'a BTreeMap<String, f64>,
    ambient: &'a BTreeMap<String, f64>,
    step: f64,
) -> StepContext<'a> {
    StepContext { time: 0.0, step, ports, ambient }
}

fn min_of(a: f64, b: f64) -> f64 {
    a.min(b)
}

/// Strictly increasing thresholds with non-increasing deltas `<= 0`.
fn price_table() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (1usize..6).prop_flat_map(|n| {
        (
            proptest::collection::vec(0.1f64..2.0, n),
            proptest::collection::vec(0.0f64..3.0, n),
        )
            .prop_map(|(increments, drops)| {
                let mut threshold = 0.0;
                let mut delta = 0.0;
                let mut table = Vec::new();
                for (inc, drop) in increments.into_iter().zip(drops) {
                    threshold += inc;
                    delta -= drop;
                    table.push((threshold, delta));
                }
                table
            })
    })
}

proptest! {
    #[test]
    fn arbiter_min_is_idempotent(x in -50.0f64..50.0) {
        prop_assert_eq!(min_of(x, x), x);
    }

    #[test]
    fn arbiter_min_is_commutative(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        prop_assert_eq!(min_of(a, b), min_of(b, a));
    }

    #[test]
    fn arbiter_min_is_dominated_by_both_inputs(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let m = min_of(a, b);
        prop_assert!(m <= a && m <= b);
        prop_assert!(m == a || m == b);
    }

    #[test]
    fn strictest_is_idempotent(v in 0.1f64..10.0, a in 0.1f64..10.0) {
        let x = KineticLimits { max_velocity: v, max_acceleration: a };
        prop_assert_eq!(arbiter_strictest(x, x), x);
    }

    #[test]
    fn strictest_is_commutative_and_dominated(
        v1 in 0.1f64..10.0, a1 in 0.1f64..10.0,
        v2 in 0.1f64..10.0, a2 in 0.1f64..10.0,
    ) {
        let x = KineticLimits { max_velocity: v1, max_acceleration: a1 };
        let y = KineticLimits { max_velocity: v2, max_acceleration: a2 };
        let xy = arbiter_strictest(x, y);
        prop_assert_eq!(xy, arbiter_strictest(y, x));
        prop_assert!(xy.max_velocity <= x.max_velocity && xy.max_velocity <= y.max_velocity);
        prop_assert!(
            xy.max_acceleration <= x.max_acceleration && xy.max_acceleration <= y.max_acceleration
        );
    }

    #[test]
    fn cost_saving_is_monotone_in_price(
        table in price_table(),
        price_a in 0.0f64..10.0,
        price_b in 0.0f64..10.0,
    ) {
        let (low, high) = if price_a <= price_b { (price_a, price_b) } else { (price_b, price_a) };
        let out_low = CostSaving::delta_for(&table, low);
        let out_high = CostSaving::delta_for(&table, high);
        // Higher price never raises the comfort temperature.
        prop_assert!(out_low >= out_high, "table {table:?}: {low} -> {out_low}, {high} -> {out_high}");
        prop_assert!(out_high <= 0.0);
    }

    #[test]
    fn fire_protection_never_exceeds_the_maximum_on_run(
        upstream in proptest::collection::vec(proptest::bool::ANY, 1..200),
        max_steps in 1u32..10,
        cooloff_steps in 1u32..10,
    ) {
        let step = 60.0;
        let mut b = FireProtection::new(max_steps as f64 * step, cooloff_steps as f64 * step);
        let ambient = BTreeMap::new();
        let mut longest = 0u32;
        let mut current = 0u32;
        for on in upstream {
            let ports = BTreeMap::from([(
                "upstream_cmd".to_string(),
                if on { 1.0 } else { 0.0 },
            )]);
            let out = b.step(&ctx(&ports, &ambient, step));
            if out != 0.0 {
                current += 1;
                longest = longest.max(current);
            } else {
                current = 0;
            }
        }
        prop_assert!(
            f64::from(longest) * step <= max_steps as f64 * step,
            "on-run of {longest} steps exceeds the {max_steps}-step maximum"
        );
    }

    #[test]
    fn thermostat_commands_change_only_at_band_crossings(
        temps in proptest::collection::vec(10.0f64..30.0, 2..200),
        set in 15.0f64..25.0,
        band in 0.1f64..2.0,
    ) {
        let mut t = Thermostat::new(band);
        let ambient = BTreeMap::new();
        let mut previous: Option<f64> = None;
        for temp in temps {
            let ports = BTreeMap::from([
                ("temp".to_string(), temp),
                ("comfort_temp".to_string(), set),
            ]);
            let command = t.step(&ctx(&ports, &ambient, 60.0));
            if let Some(prev) = previous {
                if command != prev {
                    // A switch is only legal at a band crossing.
                    if command != 0.0 {
                        prop_assert!(temp < set - band, "switched on inside the band at {temp}");
                    } else {
                        prop_assert!(temp > set + band, "switched off inside the band at {temp}");
                    }
                }
            }
            previous = Some(command);
        }
    }
}
