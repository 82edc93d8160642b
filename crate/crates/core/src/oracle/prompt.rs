use serde::{Deserialize, Serialize};

use crate::data::ItemRecord;
use crate::error::{Error, Result};

/// Largest candidate count: labels `a..=y`, with the following letter meaning "None".
pub const MAX_CANDIDATES: usize = 25;

pub const PREAMBLE: &str = "Below is an instruction that describes a task, paired with an input \
that provides further context. Write a response that appropriately completes the request.";

pub const RESPONSE_STEM: &str = "By analysing the user's preference, the user will select ";

/// Scenario wording substituted into the judge prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    /// e.g. "music streaming"
    pub scenario: String,
    /// e.g. "track"
    pub item_noun: String,
    /// e.g. "listening"
    pub behavior: String,
    pub attribute_names: Vec<String>,
    pub k: usize,
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CANDIDATES).contains(&self.k) {
            return Err(Error::invalid(format!(
                "k = {} outside 2..={MAX_CANDIDATES}",
                self.k
            )));
        }
        if self.attribute_names.is_empty() {
            return Err(Error::invalid("prompt needs at least one attribute name"));
        }
        Ok(())
    }
}

/// Lowercase label for candidate position `index` (`0 -> 'a'`).
pub fn label(index: usize) -> char {
    debug_assert!(index <= MAX_CANDIDATES);
    (b'a' + index as u8) as char
}

fn render_item(item: &ItemRecord, attrs: &[String]) -> Result<String> {
    let parts = attrs
        .iter()
        .map(|name| {
            item.attribute(name)
                .map(str::to_owned)
                .ok_or_else(|| Error::invalid(format!("item {} lacks attribute `{name}`", item.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.join("; "))
}

/// Render the instruction / input / response-stem prompt for one judgement.
pub fn build_prompt(
    history: &[ItemRecord],
    candidates: &[ItemRecord],
    spec: &PromptSpec,
) -> Result<String> {
    spec.validate()?;
    if history.is_empty() {
        return Err(Error::invalid("prompt history is empty"));
    }
    if candidates.len() != spec.k {
        return Err(Error::invalid(format!(
            "expected {} candidates, got {}",
            spec.k,
            candidates.len()
        )));
    }
    let attrs = spec.attribute_names.join("; ");
    let item = &spec.item_noun;
    let history_text = history
        .iter()
        .map(|h| render_item(h, &spec.attribute_names).map(|s| format!("[{s}]")))
        .collect::<Result<Vec<_>>>()?
        .join(", ");

    let mut out = String::new();
    out.push_str(PREAMBLE);
    out.push_str("\n\n### Instruction:\n");
    out.push_str(&format!(
        "You are a user in a {} platform now. The {item} is in the form of {{{attrs}}}. \
Given a user's {} history of {item}, and candidate {item} labelled by lowercase letter to be \
decided to recommend to the user, identify which {item} the user will mostly prefer to at next \
timestamp. Please judge by the user's preference on {{{attrs}}}; if you think that none of the \
candidates will be selected by the user, please answer \"None\"\n",
        spec.scenario, spec.behavior
    ));
    out.push_str("\n### Input:\n");
    out.push_str(&format!("History: {history_text}.\n"));
    out.push_str(
        "Which one the user will mostly like at next timestamp in the following candidates?\n",
    );
    for (i, c) in candidates.iter().enumerate() {
        out.push_str(&format!(
            "{}. {}\n",
            label(i),
            render_item(c, &spec.attribute_names)?
        ));
    }
    out.push_str(&format!("{}. None\n", label(spec.k)));
    out.push_str("\n### Response:\n");
    out.push_str(RESPONSE_STEM);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: usize) -> ItemRecord {
        ItemRecord {
            id,
            attributes: vec![
                ("title".into(), format!("Song {id}")),
                ("artist".into(), format!("Band {id}")),
            ],
        }
    }

    fn spec(k: usize) -> PromptSpec {
        PromptSpec {
            scenario: "music streaming".into(),
            item_noun: "track".into(),
            behavior: "listening".into(),
            attribute_names: vec!["title".into(), "artist".into()],
            k,
        }
    }

    #[test]
    fn two_candidates_get_none_as_c() {
        let p = build_prompt(&[item(0)], &[item(1), item(2)], &spec(2)).unwrap();
        assert!(p.contains("\na. Song 1; Band 1\n"));
        assert!(p.contains("\nb. Song 2; Band 2\n"));
        assert!(p.contains("\nc. None\n"));
        assert!(p.starts_with("Below is an instruction that describes a task"));
        assert!(p.contains("You are a user in a music streaming platform now. The track is in the form of {title; artist}."));
        assert!(p.contains("History: [Song 0; Band 0]."));
        assert!(p.ends_with("the user will select "));
    }

    #[test]
    fn ten_candidates_label_a_to_j_plus_k_none() {
        let cands: Vec<ItemRecord> = (1..=10).map(item).collect();
        let p = build_prompt(&[item(0), item(11)], &cands, &spec(10)).unwrap();
        for (i, l) in ('a'..='j').enumerate() {
            assert!(p.contains(&format!("\n{l}. Song {}; Band {}\n", i + 1, i + 1)));
        }
        assert!(p.contains("\nk. None\n"));
        assert!(!p.contains("\nl. "));
    }

    #[test]
    fn errors() {
        assert!(build_prompt(&[], &[item(1), item(2)], &spec(2)).is_err());
        assert!(build_prompt(&[item(0)], &[item(1)], &spec(2)).is_err());
        assert!(build_prompt(&[item(0)], &[item(1)], &spec(1)).is_err());
        let mut bad = item(3);
        bad.attributes.pop();
        let err = build_prompt(&[item(0)], &[item(1), bad], &spec(2)).unwrap_err();
        assert!(err.to_string().contains("artist"));
    }
}
