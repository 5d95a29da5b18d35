//! The reference models bundled with the library.

use crate::dsl::parse_model;
use crate::srn::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Builtin {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
    pub description: &'static str,
    pub source: &'static str,
    /// Species and horizon of the usual estimation target.
    pub target: (&'static str, f64),
    /// Truncation bounds for the master equation solver, if in scope.
    pub fsp_box: Option<&'static [i64]>,
}

impl Builtin {
    pub fn model(&self) -> Model {
        parse_model(self.source).expect("bundled models parse")
    }
}

const BUILTINS: [Builtin; 4] = [
    Builtin {
        name: "birth_death",
        aliases: &["birthdeath", "bd"],
        description: "0 -> X (10), X -> 0 (1), X0 = 0",
        source: include_str!("../models/birth_death.srn"),
        target: ("X", 2.0),
        fsp_box: Some(&[200]),
    },
    Builtin {
        name: "dimerization",
        aliases: &["dimer"],
        description: "0 -> M (10), 2M -> D (0.1), M0 = D0 = 0",
        source: include_str!("../models/dimerization.srn"),
        target: ("M", 2.0),
        fsp_box: Some(&[80, 50]),
    },
    Builtin {
        name: "distmod",
        aliases: &["distributive_modification"],
        description: "bimodal distributive modification switch, X0 = Y0 = B0 = 100",
        source: include_str!("../models/distmod.srn"),
        target: ("X", 50.0),
        fsp_box: Some(&[300, 300, 300]),
    },
    Builtin {
        name: "lacoperon",
        aliases: &["lac_operon", "lac"],
        description: "lac operon, 11 species and 25 reactions",
        source: include_str!("../models/lac_operon.srn"),
        target: ("Y", 1.0),
        fsp_box: None,
    },
];

pub fn builtin_models() -> &'static [Builtin] {
    &BUILTINS
}

pub fn builtin(name: &str) -> Option<&'static Builtin> {
    let key = name.to_ascii_lowercase().replace('-', "_");
    BUILTINS.iter().find(|b| b.name == key || b.aliases.contains(&key.as_str()))
}
