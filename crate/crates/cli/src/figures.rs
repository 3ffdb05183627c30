//! Scenario files shipped for each reproduced figure.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FigureConfig {
    pub name: &'static str,
    pub title: &'static str,
    pub text: &'static str,
}

pub const FIGURES: &[FigureConfig] = &[
    FigureConfig {
        name: "fig2",
        title: "Raman pi/2 pulse: unitary, conditioned and ideal-detector ensemble",
        text: include_str!("../../../figs/fig2.toml"),
    },
    FigureConfig {
        name: "fig3",
        title: "CZ two-body process: conditioned vs unitary populations and phases",
        text: include_str!("../../../figs/fig3.toml"),
    },
    FigureConfig {
        name: "fig4",
        title: "CZ gate error over intermediate and Rydberg decay rates",
        text: include_str!("../../../figs/fig4.toml"),
    },
    FigureConfig {
        name: "fig5",
        title: "readout no-decay probability for weak drives",
        text: include_str!("../../../figs/fig5.toml"),
    },
    FigureConfig {
        name: "supp1",
        title: "light-shift phase gate: unitary, conditioned and ensemble",
        text: include_str!("../../../figs/supp1.toml"),
    },
    FigureConfig {
        name: "supp2",
        title: "readout no-decay probability for strong drives (saturation)",
        text: include_str!("../../../figs/supp2.toml"),
    },
    FigureConfig {
        name: "supp3",
        title: "CZ no-decay probability for single- and two-body processes",
        text: include_str!("../../../figs/supp3.toml"),
    },
];

pub fn figure(name: &str) -> Option<&'static FigureConfig> {
    let stem = name.strip_suffix(".toml").unwrap_or(name);
    let stem = stem.rsplit('/').next().unwrap_or(stem);
    FIGURES.iter().find(|f| f.name == stem)
}
