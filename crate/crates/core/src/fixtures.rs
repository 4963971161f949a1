//! Named example graphs with their side information.

use crate::graph::MixedGraph;
use crate::seeds::{IvTriple, SeedSpec};

pub const FIXTURE_NAMES: [&str; 7] = ["fig1b", "fig2", "ce1", "ce2", "mr", "sachs", "education"];

struct Def {
    labels: &'static [&'static str],
    directed: &'static [(&'static str, &'static str)],
    bidirected: &'static [(&'static str, &'static str)],
    iv: &'static [(&'static str, &'static str, &'static str)],
}

const FIG1B: Def = Def {
    labels: &["Z", "T", "W", "Y"],
    directed: &[("Z", "T"), ("T", "Y"), ("W", "Y")],
    bidirected: &[("T", "Y")],
    iv: &[("Z", "T", "Y")],
};

const FIG2: Def = Def {
    labels: &["Z", "T", "U", "W", "Y"],
    directed: &[("Z", "T"), ("Z", "U"), ("T", "Y"), ("W", "Y"), ("U", "Y")],
    bidirected: &[("T", "Y"), ("W", "Y")],
    iv: &[("Z", "T", "Y"), ("Z", "U", "Y")],
};

const CE1: Def = Def {
    labels: &["0", "1", "2", "3"],
    directed: &[("0", "1"), ("1", "2"), ("3", "2")],
    bidirected: &[("1", "2"), ("3", "2")],
    iv: &[("0", "1", "2")],
};

// Z is not exogenous: U drives both Z and Y.
const CE2: Def = Def {
    labels: &["U", "Z", "T", "Y"],
    directed: &[("U", "Z"), ("U", "Y"), ("Z", "T"), ("T", "Y")],
    bidirected: &[],
    iv: &[("Z", "T", "Y")],
};

const MR: Def = Def {
    labels: &["G_bmi", "G_ldl", "G_bp", "BMI", "LDL", "SBP", "CRP", "SMK", "CHD"],
    directed: &[
        ("G_bmi", "BMI"),
        ("G_ldl", "LDL"),
        ("G_bp", "SBP"),
        ("G_bp", "CRP"),
        ("BMI", "CHD"),
        ("LDL", "CHD"),
        ("LDL", "SBP"),
        ("SBP", "CHD"),
        ("CRP", "CHD"),
        ("SMK", "BMI"),
        ("SMK", "LDL"),
        ("SMK", "CRP"),
        ("SMK", "CHD"),
    ],
    bidirected: &[("BMI", "CHD"), ("LDL", "CHD"), ("SBP", "CHD"), ("CRP", "CHD")],
    iv: &[("G_bmi", "BMI", "CHD"), ("G_ldl", "LDL", "CHD"), ("G_bp", "SBP", "CHD")],
};

// Consensus signalling edges; the six confounded pairs are non-adjacent.
const SACHS: Def = Def {
    labels: &[
        "Raf", "Mek", "Plcg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk",
    ],
    directed: &[
        ("PKC", "Raf"),
        ("PKC", "Mek"),
        ("PKC", "PKA"),
        ("PKC", "Jnk"),
        ("PKC", "P38"),
        ("PKA", "Raf"),
        ("PKA", "Mek"),
        ("PKA", "Erk"),
        ("PKA", "Akt"),
        ("PKA", "Jnk"),
        ("PKA", "P38"),
        ("Raf", "Mek"),
        ("Mek", "Erk"),
        ("Erk", "Akt"),
        ("Plcg", "PIP2"),
        ("Plcg", "PIP3"),
        ("PIP3", "PIP2"),
    ],
    bidirected: &[
        ("Raf", "Jnk"),
        ("Mek", "P38"),
        ("Erk", "PIP2"),
        ("Akt", "PIP3"),
        ("Plcg", "PKC"),
        ("P38", "Jnk"),
    ],
    iv: &[],
};

// Q quarter of birth, E education, Y earnings, A ability, R region, X experience.
const EDUCATION: Def = Def {
    labels: &["Q", "E", "Y", "A", "R", "X"],
    directed: &[
        ("Q", "E"),
        ("E", "Y"),
        ("A", "E"),
        ("A", "Y"),
        ("R", "Y"),
        ("X", "Y"),
        ("X", "E"),
    ],
    bidirected: &[("E", "Y")],
    iv: &[("Q", "E", "Y")],
};

fn def(name: &str) -> Option<&'static Def> {
    Some(match name {
        "fig1b" => &FIG1B,
        "fig2" => &FIG2,
        "ce1" => &CE1,
        "ce2" => &CE2,
        "mr" => &MR,
        "sachs" => &SACHS,
        "education" => &EDUCATION,
        _ => return None,
    })
}

fn index(d: &Def, label: &str) -> usize {
    d.labels.iter().position(|l| *l == label).expect("fixture label")
}

pub fn fixture(name: &str) -> Option<MixedGraph> {
    let d = def(name)?;
    let directed: Vec<(usize, usize)> = d.directed.iter().map(|(a, b)| (index(d, a), index(d, b))).collect();
    let bidirected: Vec<(usize, usize)> = d.bidirected.iter().map(|(a, b)| (index(d, a), index(d, b))).collect();
    let g = MixedGraph::new(d.labels.len(), directed, bidirected).expect("fixture is a valid graph");
    Some(
        g.with_labels(d.labels.iter().enumerate().map(|(i, l)| (i, l.to_string())))
            .expect("fixture labels"),
    )
}

/// The instrument triples that accompany a fixture.
pub fn fixture_seeds(name: &str) -> Option<SeedSpec> {
    let d = def(name)?;
    let mut spec = SeedSpec::default();
    for (z, t, y) in d.iv {
        spec = spec.with_iv(IvTriple::new(index(d, z), index(d, t), index(d, y)));
    }
    Some(spec)
}
