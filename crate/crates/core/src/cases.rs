//! Bundled test networks.

use crate::network::NetworkCase;

pub const CASE6: &str = include_str!("../cases/case6.json");
pub const CASE33: &str = include_str!("../cases/case33.json");

/// Six-bus, seven-branch feeder with two renewables and one storage unit.
pub fn case6() -> NetworkCase {
    NetworkCase::from_json(CASE6).expect("bundled case6 is valid")
}

/// The 33-bus test feeder with five tie lines, six renewables and four storage units.
pub fn case33() -> NetworkCase {
    NetworkCase::from_json(CASE33).expect("bundled case33 is valid")
}

/// Looks up a bundled case by name.
pub fn bundled(name: &str) -> Option<NetworkCase> {
    match name {
        "case6" => Some(case6()),
        "case33" => Some(case33()),
        _ => None,
    }
}
