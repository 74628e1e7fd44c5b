//! Prompt rendering for the gene-perturbation and molecular-property domains.
//!
//! The gene templates reproduce the wording of the released IL2 trace; the
//! molecule templates follow the published template with the feedback block
//! dropped in round 1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agents::Feedback;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    #[default]
    Genes,
    Molecules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    /// Ask for cluster centers.
    Llmnn,
    /// Cluster centers, Solution block only.
    LlmnnNoexp,
    /// Ask for the whole batch by name.
    Bda,
}

/// Dataset-specific wording substituted into the templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub domain: Domain,
    pub func_desc: String,
    /// Gene domain: what the score measures.
    #[serde(default)]
    pub score_desc: String,
    /// Molecule domain: one-sentence description of the library.
    #[serde(default)]
    pub candidate_space_info: String,
}

impl Descriptor {
    pub fn genes(func_desc: &str, score_desc: &str) -> Self {
        Self {
            domain: Domain::Genes,
            func_desc: func_desc.into(),
            score_desc: score_desc.into(),
            candidate_space_info: String::new(),
        }
    }

    pub fn molecules(func_desc: &str, candidate_space_info: &str) -> Self {
        Self {
            domain: Domain::Molecules,
            func_desc: func_desc.into(),
            score_desc: String::new(),
            candidate_space_info: candidate_space_info.into(),
        }
    }

    /// Built-in descriptors for the benchmark datasets. Lookup ignores case
    /// and punctuation, so `"Ion. E."`, `"ion_e"` and `"IONE"` all match.
    pub fn preset(dataset: &str) -> Option<Self> {
        let key: String = dataset
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        const TAU_SCORE: &str = "change in tau protein level compared to the non-targeting control, using a total tau antibody";
        const SMALL_ORGANIC: &str = "The molecules in the library are small organic molecules.";
        Some(match key.as_str() {
            "il2" => Self::genes(
                "regulate the production of Interleukin-2 (IL-2)",
                "log fold change in Interleukin-2 (IL-2) normalized read counts",
            ),
            "ifng" => Self::genes(
                "regulate the production of Interferon-gamma (IFNG)",
                "log fold change in Interferon-gamma (IFNG) normalized read counts",
            ),
            "carnevale" => Self::genes(
                "upon being knocked out, would boost the efficacy of engineered T cells in the presence of an adenosine agonist that creates an immunosuppresive condition",
                "change in T cell proliferation",
            ),
            "sanchez" => Self::genes(
                "when knocked out, either increase or decrease expression of endogenous tau protein levels in neurons",
                TAU_SCORE,
            ),
            "sanchezdown" => Self::genes(
                "when knocked out, decrease expression of endogenous tau protein levels in neurons",
                TAU_SCORE,
            ),
            "ione" | "ionizationenergy" => Self::molecules(
                "ionization energy (in eV)",
                "The molecules in the library are composed of only C, H, N and O elements.",
            ),
            "esol" => Self::molecules("solubility in water (log mol per litre)", SMALL_ORGANIC),
            "freesolv" => Self::molecules("hydration free energy in water", SMALL_ORGANIC),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 8] = [
        "IL2",
        "IFNG",
        "Carnevale",
        "Sanchez",
        "Sanchez Down",
        "Ion. E.",
        "ESOL",
        "FreeSolv",
    ];
}

#[derive(Debug, Clone)]
pub struct PromptSpec<'a> {
    pub descriptor: &'a Descriptor,
    pub variant: PromptVariant,
    pub round: usize,
    /// Experimental budget per round.
    pub batch_len: usize,
    pub num_centers: usize,
    pub feedback: Option<&'a Feedback>,
    /// Appended after the format instructions when re-prompting for
    /// replacements (BDA).
    pub followup: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Renders a two-column `name  score` table with right-aligned columns and
/// scores at two decimals.
pub fn render_table(rows: &[(&str, f64)]) -> String {
    let scores: Vec<String> = rows.iter().map(|(_, s)| format!("{s:.2}")).collect();
    let name_w = rows.iter().map(|(n, _)| n.chars().count()).chain([4]).max().unwrap_or(4);
    let score_w = scores.iter().map(String::len).chain([5]).max().unwrap_or(5);
    let mut out = format!("{:>name_w$}  {:>score_w$}", "name", "score");
    for ((name, _), score) in rows.iter().zip(&scores) {
        let pad = name_w - name.chars().count();
        let _ = write!(out, "\n{}{name}  {score:>score_w$}", " ".repeat(pad));
    }
    out
}

/// The `[HITS]` / `[OTHER RESULTS]` block.
pub fn render_feedback(feedback: &Feedback) -> String {
    let hits: Vec<(&str, f64)> = feedback.hits().map(|r| (r.name.as_str(), r.score)).collect();
    let others: Vec<(&str, f64)> = feedback.others().map(|r| (r.name.as_str(), r.score)).collect();
    format!(
        "[HITS]\n{}\n[OTHER RESULTS]\n{}",
        render_table(&hits),
        render_table(&others)
    )
}

fn solution_lines(label: &str, n: usize) -> String {
    let mut out = String::new();
    match n {
        0..=3 => {
            for i in 1..=n.max(1) {
                let _ = writeln!(out, "## <{label} {i}>");
            }
        }
        _ => {
            let _ = writeln!(out, "## <{label} 1>\n## <{label} 2>\n...\n## <{label} {n}>");
        }
    }
    out
}

pub fn render_prompt(spec: &PromptSpec<'_>) -> Result<Prompt> {
    if spec.round == 0 {
        return Err(Error::Prompt("rounds are numbered from 1".into()));
    }
    if spec.round == 1 && spec.feedback.is_some() {
        return Err(Error::Prompt("round 1 cannot carry feedback".into()));
    }
    if spec.round > 1 && spec.feedback.is_none() {
        return Err(Error::Prompt(format!("round {} needs feedback", spec.round)));
    }
    let d = spec.descriptor;
    let wanted = match spec.variant {
        PromptVariant::Bda => spec.batch_len,
        PromptVariant::Llmnn | PromptVariant::LlmnnNoexp => spec.num_centers,
    };
    if wanted == 0 {
        return Err(Error::Prompt("must ask for at least one candidate".into()));
    }
    let system = match d.domain {
        Domain::Genes => format!(
            "You are a biomedicine expert who will assist me on problems in drug discovery. I am planning to run a CRISPR screen to identify genes that {}. I can only perturb exactly {} genes at a time. For each predicted perturbation, I am able to measure out the {} which will be referred to as the score. I can only do 5 rounds of experimentation. After every round of experiment, I will provide you with feedback on your predictions, including the correctly identified genes called hits and the corresponding score. The predictions which are not hits will be included in other results.",
            d.func_desc, spec.batch_len, d.score_desc
        ),
        Domain::Molecules => format!(
            "You are a chemistry expert who will assist me with problems in molecular property optimization. Given a library of molecules, I am planning to conduct wet-lab experiments to identify molecules that have high {}. {} I can only experiment with exactly {} molecules at a time. For each predicted molecule, I am able to measure out the property value, which will be referred to as the score. I can only do 5 rounds of experimentation. After every round of experiment, I will provide you with feedback on your predictions, including the correctly identified molecules called hits and the corresponding score. The predictions which are not hits will be included in other results.",
            d.func_desc, d.candidate_space_info, spec.batch_len
        ),
    };

    let mut user = String::new();
    match (d.domain, spec.feedback) {
        (Domain::Genes, None) => {
            let _ = writeln!(user, "This is round {}. We are beginning with our experiments.", spec.round);
            user.push_str("Here is a strategy to follow: Choose genes that are very different in their biological pathways to discover what pathways give you hits.\n");
        }
        (Domain::Molecules, None) => {
            let _ = writeln!(user, "This is round {}.", spec.round);
            user.push_str("Here is a strategy to follow: Update your priors appropriately and choose SMILES that gave you hits. Also, be sure to explore by including some SMILES strings that could give hits.\n");
        }
        (domain, Some(fb)) => {
            let _ = writeln!(user, "This is round {}.", spec.round);
            user.push_str("Here is the feedback on all your predictions till now:\n");
            user.push_str(&render_feedback(fb));
            user.push('\n');
            user.push_str(match domain {
                Domain::Genes => "Here is a strategy to follow: Update your priors appropriately and choose genes that gave you hits. Also, be sure to explore by including some genes that could give hits.\n",
                Domain::Molecules => "Here is a strategy to follow: Update your priors appropriately and choose SMILES that gave you hits. Also, be sure to explore by including some SMILES strings that could give hits.\n",
            });
        }
    }

    let (label, ask) = match (d.domain, spec.variant) {
        (Domain::Genes, PromptVariant::Bda) => (
            "Gene",
            format!("Please propose {wanted} different yet valid gene names as per the HGNC nomenclature you want to test next. Do not propose genes that have already been tested."),
        ),
        (Domain::Genes, _) => (
            "Gene",
            format!("Please propose {wanted} different yet valid gene names as per the HGNC nomenclature you want to explore next. Note that I will choose unexplored genes closest to your predicted genes to form the predictions."),
        ),
        (Domain::Molecules, PromptVariant::Bda) => (
            "SMILES",
            format!("Please propose {wanted} different yet valid SMILES strings of molecules from the library you want to test next. Do not propose molecules that have already been tested."),
        ),
        (Domain::Molecules, _) => (
            "SMILES",
            format!("Please propose {wanted} different yet valid SMILES strings of molecules you want to explore next. Note that I will choose unexplored molecules closest to your predicted SMILES strings to form the predictions."),
        ),
    };
    user.push_str(&ask);
    user.push_str(" Your response should exactly follow the format:\n");
    if spec.variant != PromptVariant::LlmnnNoexp {
        user.push_str("**Reflection: Thoughts on previous results and next steps.\n");
        user.push_str("**Research Plan: The full high level research plan, with current status and reasoning behind each proposed approach. It should be at most 5 sentences.\n");
    }
    user.push_str("**Solution:\n");
    user.push_str(&solution_lines(label, wanted));
    user.push_str(match d.domain {
        Domain::Genes => "Each gene in the solution should only be the gene name in the HGNC nomenclature.\n",
        Domain::Molecules => "Each SMILES string in the solution should be a SMILES string representation of a valid molecule.\n",
    });
    user.push_str("DO NOT ADD ANY COMMENTS IN THE SOLUTION OR AFTER THE SOLUTION.");
    if let Some(followup) = &spec.followup {
        user.push('\n');
        user.push_str(followup);
    }
    Ok(Prompt { system, user })
}
