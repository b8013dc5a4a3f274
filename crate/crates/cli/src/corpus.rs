//! Bundled example configs, embedded at compile time.

/// Name and JSON text of every bundled config, sorted by name.
pub const FIXTURES: &[(&str, &str)] = &[
    (
        "cancel-row1-osc-ci-ill",
        include_str!("../../../fixtures/cancel-row1-osc-ci-ill.json"),
    ),
    (
        "cancel-row2-ci-osc-right",
        include_str!("../../../fixtures/cancel-row2-ci-osc-right.json"),
    ),
    (
        "cancel-row3-int-ci-ramp-ill",
        include_str!("../../../fixtures/cancel-row3-int-ci-ramp-ill.json"),
    ),
    (
        "cancel-row4-lag-ci-ramp",
        include_str!("../../../fixtures/cancel-row4-lag-ci-ramp.json"),
    ),
    (
        "cancel-row5-int-di-ramp",
        include_str!("../../../fixtures/cancel-row5-int-di-ramp.json"),
    ),
    (
        "cancel-row6-di-int-right",
        include_str!("../../../fixtures/cancel-row6-di-int-right.json"),
    ),
    (
        "cancel-row7-int-fore-step-ill",
        include_str!("../../../fixtures/cancel-row7-int-fore-step-ill.json"),
    ),
    (
        "cancel-row8-int-fore2-step",
        include_str!("../../../fixtures/cancel-row8-int-fore2-step.json"),
    ),
    (
        "focus-deadlock",
        include_str!("../../../fixtures/focus-deadlock.json"),
    ),
    (
        "fourth-order-return-map",
        include_str!("../../../fixtures/fourth-order-return-map.json"),
    ),
    (
        "integrator-ci-sine-ref",
        include_str!("../../../fixtures/integrator-ci-sine-ref.json"),
    ),
    (
        "lag-plant-osc-left-series",
        include_str!("../../../fixtures/lag-plant-osc-left-series.json"),
    ),
    (
        "quarter-turn-origin",
        include_str!("../../../fixtures/quarter-turn-origin.json"),
    ),
    (
        "servo-pi-step-noise",
        include_str!("../../../fixtures/servo-pi-step-noise.json"),
    ),
    (
        "spinner-skew-surface",
        include_str!("../../../fixtures/spinner-skew-surface.json"),
    ),
    (
        "third-order-carrier-cones",
        include_str!("../../../fixtures/third-order-carrier-cones.json"),
    ),
    (
        "third-order-loop-noise",
        include_str!("../../../fixtures/third-order-loop-noise.json"),
    ),
    (
        "third-order-tangential",
        include_str!("../../../fixtures/third-order-tangential.json"),
    ),
];

pub fn get(name: &str) -> Option<&'static str> {
    FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}
