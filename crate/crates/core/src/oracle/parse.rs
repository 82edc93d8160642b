//! Free-text judge responses to a candidate label.
//!
//! Resolution order:
//! 1. the first token after "the user will select" (or "will select"), when it is a label or "None";
//! 2. the earliest *marked* mention: `(c)`, `c)`, `c.`, `c:`, a label after a keyword such as
//!    "option"/"answer"/"choose", or the word "None";
//! 3. the earliest bare lowercase letter (skipping the article "a");
//! 4. otherwise the response is unparseable and treated as "None".

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleChoice {
    /// Candidate position; `None` means the judge declined every candidate.
    pub label_index: Option<usize>,
    pub raw_response: String,
}

const KEYWORDS: &[&str] = &[
    "option",
    "label",
    "candidate",
    "answer",
    "choice",
    "select",
    "selects",
    "pick",
    "choose",
    "letter",
    "item",
    "recommend",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mention {
    Label(usize),
    Decline,
}

#[derive(Debug)]
struct Token<'a> {
    text: &'a str,
    prev: Option<char>,
    next: Option<char>,
    following: Option<char>,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].1.is_alphanumeric() || chars[i].1 == '\'' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '\'') {
                i += 1;
            }
            let s = chars[start].0;
            let e = chars.get(i).map_or(text.len(), |c| c.0);
            tokens.push(Token {
                text: &text[s..e],
                prev: start.checked_sub(1).map(|p| chars[p].1),
                next: chars.get(i).map(|c| c.1),
                following: chars.get(i + 1).map(|c| c.1),
            });
        } else {
            i += 1;
        }
    }
    tokens
}

fn letter_mention(tok: &Token<'_>, k: usize) -> Option<Mention> {
    let mut chars = tok.text.chars();
    let c = chars.next()?;
    if chars.next().is_some() || !c.is_ascii_alphabetic() {
        return None;
    }
    let index = (c.to_ascii_lowercase() as u8 - b'a') as usize;
    match index.cmp(&k) {
        std::cmp::Ordering::Less => Some(Mention::Label(index)),
        std::cmp::Ordering::Equal => Some(Mention::Decline),
        std::cmp::Ordering::Greater => None,
    }
}

fn is_none_word(tok: &Token<'_>) -> bool {
    tok.text.eq_ignore_ascii_case("none")
}

/// A letter inside a dotted abbreviation such as "e.g." or "i.e.".
fn in_abbreviation(tok: &Token<'_>) -> bool {
    tok.prev == Some('.')
        || (tok.next == Some('.') && tok.following.is_some_and(|c| c.is_alphabetic()))
}

fn is_marked(tokens: &[Token<'_>], i: usize) -> bool {
    let tok = &tokens[i];
    if in_abbreviation(tok) {
        return false;
    }
    let punctuated =
        matches!(tok.next, Some(')') | Some(':')) || tok.prev == Some('(') || tok.next == Some('.');
    let keyworded = (1..=2).any(|back| {
        i.checked_sub(back)
            .is_some_and(|j| KEYWORDS.contains(&tokens[j].text.to_ascii_lowercase().as_str()))
    });
    punctuated || keyworded
}

fn resolve(tokens: &[Token<'_>], k: usize) -> Option<Mention> {
    // marked mentions and explicit "None", whichever comes first
    for (i, tok) in tokens.iter().enumerate() {
        if is_none_word(tok) {
            return Some(Mention::Decline);
        }
        if let Some(m) = letter_mention(tok, k) {
            if is_marked(tokens, i) {
                return Some(m);
            }
        }
    }
    // bare lowercase letters
    for tok in tokens {
        let lower = tok.text.len() == 1 && tok.text.chars().all(|c| c.is_ascii_lowercase());
        if !lower {
            continue;
        }
        let article = tok.text == "a"
            && tok.next.is_some_and(char::is_whitespace)
            && tok.following.is_some_and(char::is_alphabetic);
        if article || tok.text == "i" || in_abbreviation(tok) {
            continue;
        }
        if let Some(m) = letter_mention(tok, k) {
            return Some(m);
        }
    }
    None
}

fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(needle)
}

/// Map a judge response onto a candidate position among `k` candidates.
pub fn parse_response(text: &str, k: usize) -> OracleChoice {
    let choice = |label_index| OracleChoice {
        label_index,
        raw_response: text.to_owned(),
    };
    let scope = match find_ascii_ci(text, "will select") {
        Some(pos) => &text[pos + "will select".len()..],
        None => text,
    };
    let tokens = tokenize(scope);
    if scope.len() != text.len() {
        if let Some(first) = tokens.first() {
            if is_none_word(first) {
                return choice(None);
            }
            if let Some(m) = letter_mention(first, k) {
                return choice(match m {
                    Mention::Label(i) => Some(i),
                    Mention::Decline => None,
                });
            }
        }
    }
    match resolve(&tokens, k).or_else(|| {
        // the phrase was present but nothing followed it usefully; fall back to the whole text
        (scope.len() != text.len())
            .then(|| resolve(&tokenize(text), k))
            .flatten()
    }) {
        Some(Mention::Label(i)) => choice(Some(i)),
        Some(Mention::Decline) => choice(None),
        None => {
            log::debug!("unparseable judge response treated as None: {text:?}");
            choice(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_phrase() {
        assert_eq!(
            parse_response("the user will select c", 10).label_index,
            Some(2)
        );
        assert_eq!(
            parse_response(
                "By analysing the user's preference, the user will select None",
                10
            )
            .label_index,
            None
        );
        assert_eq!(
            parse_response("the user will select k", 10).label_index,
            None
        );
    }

    #[test]
    fn free_text() {
        assert_eq!(parse_response("None of these fit.", 10).label_index, None);
        assert_eq!(
            parse_response("I think (b) is best", 10).label_index,
            Some(1)
        );
        assert_eq!(parse_response("", 10).label_index, None);
        assert_eq!(parse_response("xyz", 10).label_index, None);
    }

    #[test]
    fn abbreviations_are_not_labels() {
        assert_eq!(
            parse_response("e.g. the user might like d", 10).label_index,
            Some(3)
        );
        assert_eq!(parse_response("i.e. (c)", 10).label_index, Some(2));
    }

    #[test]
    fn out_of_range_letters_are_ignored() {
        assert_eq!(
            parse_response("option q, or maybe b", 3).label_index,
            Some(1)
        );
    }

    proptest::proptest! {
        #[test]
        fn stem_completion_round_trips(k in 2usize..=25, pick in 0usize..25) {
            let index = pick % k;
            let text = format!("{}{}", super::super::prompt::RESPONSE_STEM, super::super::prompt::label(index));
            proptest::prop_assert_eq!(parse_response(&text, k).label_index, Some(index));
        }
    }
}
