use serde::Serialize;

use crate::config::ExperimentKind;

#[derive(Clone, Debug, Serialize)]
pub struct Parameter {
    pub name: &'static str,
    pub kind: &'static str,
    pub default: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub kind: ExperimentKind,
    pub anchor: &'static str,
    pub summary: &'static str,
    pub parameters: Vec<Parameter>,
}

fn param(name: &'static str, kind: &'static str, default: &'static str) -> Parameter {
    Parameter { name, kind, default }
}

fn model_params() -> Vec<Parameter> {
    vec![
        param("model.d", "integer >= 1", "1"),
        param("model.n_per_axis", "integer >= 2", "256"),
        param("model.side_length", "float > 0", "256"),
    ]
}

pub fn entry(kind: ExperimentKind) -> CatalogEntry {
    use ExperimentKind::*;
    let mut parameters = model_params();
    let (anchor, summary, extra) = match kind {
        CertifySpace => (
            "doubling and annulus conditions",
            "Sample balls and annuli on the grid and report the doubling and annulus constants.",
            vec![param("sample_size", "integer >= 1", "512")],
        ),
        KernelBounds => (
            "complex-time Poisson kernel bound",
            "Constant C in |k_z(x,y)| <= C|z|/|z^2+rho^2|^((d+1)/2) per theta, closed form and torus model.",
            vec![param("thetas", "list of |theta| < pi/2", "[0, ±pi/4, ±(pi/2-0.01)]")],
        ),
        LemmaProfile => (
            "annulus integral near the light cone",
            "Annulus integral of |z^2+rho^2|^(-b) against the cone distance, with fitted exponent.",
            vec![
                param("b", "float > d/2", "1.5"),
                param("thetas", "list of |theta| < pi/2", "pi/2 - 10^(-k/2), k = 1..6"),
            ],
        ),
        CzProfile => (
            "Calderon-Zygmund integral condition",
            "Off-diagonal sup over dyadic scales of kernel differences for the line kernel.",
            vec![
                param("t", "float in [1/2, 1]", "0.75"),
                param("delta", "float > 0", "1"),
                param("j_range", "[lo, hi]", "[-40, 40]"),
                param("thetas", "list of |theta| < pi/2", "pi/2 - 10^(-k/2), k = 1..6"),
            ],
        ),
        RboundScaling => (
            "R-boundedness of the complex-time semigroup",
            "Witness lower estimates of the R-bound of exp(-e^(i theta) 2^j t A) and their growth in theta.",
            vec![
                param("p_list", "list of p in (1, inf)", "[4/3, 2, 4]"),
                param("t", "float > 0", "0.75"),
                param("j_range", "[lo, hi]", "[-2, 7]"),
                param("n_terms", "integer >= 1", "10"),
                param("thetas", "list of |theta| < pi/2", "pi/2 - 10^(-k/2), k = 1..6"),
                param("budget", "witness search budget", "see SearchBudget"),
            ],
        ),
        CalculusNorms => (
            "H^alpha functional calculus bound",
            "Sup of ||f(2^m A)||_p / ||f||_{H^alpha} over a multiplier family and dilations, with grid refinement.",
            vec![
                param("alpha", "float > 1/2 (> (d+2)/2 when asserted)", "1.6"),
                param("p_list", "list of p in (1, inf)", "[4/3, 4]"),
                param("multipliers", "list of multiplier specs", "20 built-in members"),
                param("dilations", "[lo, hi]", "[-6, 6]"),
                param("refine", "bool", "true"),
            ],
        ),
    };
    parameters.extend(extra);
    CatalogEntry {
        kind,
        anchor,
        summary,
        parameters,
    }
}

pub fn catalog() -> Vec<CatalogEntry> {
    ExperimentKind::ALL.iter().map(|&k| entry(k)).collect()
}

pub fn catalog_text() -> String {
    let mut out = String::new();
    for e in catalog() {
        out.push_str(&format!("{:<16} [{}]\n    {}\n", e.kind.name(), e.anchor, e.summary));
        for p in &e.parameters {
            out.push_str(&format!("    - {} : {} (default {})\n", p.name, p.kind, p.default));
        }
    }
    out
}

pub fn catalog_json() -> String {
    serde_json::to_string_pretty(&catalog()).expect("catalog serializes")
}
