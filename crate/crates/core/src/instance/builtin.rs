use super::{validate_instance, Instance};

/// The bundled 33-bus instance file (`data/ieee33.json`).
pub const IEEE33_INSTANCE_JSON: &str = include_str!("../../../../data/ieee33.json");

/// The scenario generator settings shipped alongside it
/// (`data/ieee33_gen.json`).
pub const IEEE33_GEN_CONFIG_JSON: &str = include_str!("../../../../data/ieee33_gen.json");

/// Canonical 33-bus radial feeder (Baran and Wu topology, 32 lines of 1 km)
/// with three data-center nodes at the ends of the main feeder and the two
/// laterals, two conventional load nodes using the feeder's published bus
/// loads, three candidate hubs and two suppliers.
pub fn builtin_ieee33() -> Instance {
    let raw = serde_json::from_str(IEEE33_INSTANCE_JSON).expect("bundled instance parses");
    validate_instance(raw).expect("bundled instance is valid")
}
