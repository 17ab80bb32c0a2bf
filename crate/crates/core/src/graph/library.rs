//! Named graphs used throughout the tests, examples and CLI.

use super::{canonicalize, validate, CanonicalDag, LvDag};

const IV: &str = include_str!("../../graphs/iv.json");
const PROXY: &str = include_str!("../../graphs/proxy.json");
const LONGITUDINAL: &str = include_str!("../../graphs/longitudinal.json");
const LONGITUDINAL_CONFOUNDED: &str = include_str!("../../graphs/longitudinal_confounded.json");
const UNDERSPECIFIED_IV: &str = include_str!("../../graphs/underspecified_iv.json");
const G1: &str = include_str!("../../graphs/g1.json");
const G2: &str = include_str!("../../graphs/g2.json");
const G3: &str = include_str!("../../graphs/g3.json");
const G4: &str = include_str!("../../graphs/g4.json");

/// Every shipped graph as `(name, json)`.
pub const ALL: &[(&str, &str)] = &[
    ("iv", IV),
    ("proxy", PROXY),
    ("longitudinal", LONGITUDINAL),
    ("longitudinal_confounded", LONGITUDINAL_CONFOUNDED),
    ("underspecified_iv", UNDERSPECIFIED_IV),
    ("g1", G1),
    ("g2", G2),
    ("g3", G3),
    ("g4", G4),
];

fn parse(text: &str) -> LvDag {
    LvDag::from_json_str(text).expect("shipped graph parses")
}

fn canonical(text: &str) -> CanonicalDag {
    canonicalize(parse(text)).expect("shipped graph is acyclic").0
}

/// Shipped graph by name, canonicalized.
pub fn by_name(name: &str) -> Option<CanonicalDag> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, text)| canonical(text))
}

/// Instrument I → T → Y with a latent L confounding T and Y.
pub fn iv() -> CanonicalDag {
    validate(parse(IV)).expect("iv graph is canonical")
}

/// Proxy graph W, T, Y with two latents, including the latent-to-latent edge.
pub fn proxy_raw() -> LvDag {
    parse(PROXY)
}

pub fn proxy() -> CanonicalDag {
    canonical(PROXY)
}

/// Two-period panel with one latent and a shared covariate.
pub fn longitudinal() -> CanonicalDag {
    canonical(LONGITUDINAL)
}

/// Two-period panel with a latent and covariate per period, including the
/// latent-to-latent edge.
pub fn longitudinal_confounded_raw() -> LvDag {
    parse(LONGITUDINAL_CONFOUNDED)
}

pub fn longitudinal_confounded() -> CanonicalDag {
    canonical(LONGITUDINAL_CONFOUNDED)
}

/// One instrument, two treatments, one outcome, a latent per treatment.
pub fn underspecified_iv() -> CanonicalDag {
    canonical(UNDERSPECIFIED_IV)
}

/// Latent L1 over W, T, Y with T → Y.
pub fn g1() -> CanonicalDag {
    canonical(G1)
}

/// As `g1` with an additional W → T edge.
pub fn g2() -> CanonicalDag {
    canonical(G2)
}

/// As `g1` with a noiseless-proxy child Z of the latent.
pub fn g3() -> CanonicalDag {
    canonical(G3)
}

/// Two latents over W, T, Y with T → Y.
pub fn g4() -> CanonicalDag {
    canonical(G4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_graph_canonicalizes() {
        for (name, _) in ALL {
            let dag = by_name(name).unwrap();
            assert!(dag.p_o() >= 3, "{name}");
        }
        assert!(by_name("missing").is_none());
    }
}
