//! Mapping free-form model answers onto a fixed option list.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnswerError {
    #[error("answer {0:?} matches none of the options")]
    Unmatched(String),
    #[error("answer {answer:?} matches several options ({})", .candidates.join(", "))]
    Ambiguous { answer: String, candidates: Vec<String> },
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn loose(s: &str) -> String {
    words(s).join(" ")
}

fn leading_letter(answer: &str, n: usize) -> Option<usize> {
    let t = answer.trim_start();
    let t = t
        .strip_prefix("Option ")
        .or_else(|| t.strip_prefix("option "))
        .or_else(|| t.strip_prefix("Answer: "))
        .unwrap_or(t);
    let t = t.strip_prefix('(').unwrap_or(t);
    let mut chars = t.chars();
    let letter = chars.next()?.to_ascii_uppercase();
    let rest = chars.as_str();
    let boundary = match rest.chars().next() {
        None => true,
        Some(c) => matches!(c, '.' | ')' | ':' | ',' | ' ' | '\n'),
    };
    if !boundary || !letter.is_ascii_uppercase() {
        return None;
    }
    // A bare leading "A " is the article, not an option letter.
    if letter == 'A' && rest.starts_with(' ') {
        return None;
    }
    let i = (letter as u8 - b'A') as usize;
    (i < n).then_some(i)
}

/// Index of the option the answer selects: exact text first, then a leading
/// option letter, then word-level containment in either direction.
pub fn parse_choice(answer: &str, options: &[String]) -> Result<usize, AnswerError> {
    let trimmed = answer.trim();
    if let Some(i) = options.iter().position(|o| o.trim() == trimmed) {
        return Ok(i);
    }
    let norm = loose(trimmed);
    if let Some(i) = options.iter().position(|o| loose(o) == norm) {
        return Ok(i);
    }
    if let Some(i) = leading_letter(trimmed, options.len()) {
        return Ok(i);
    }
    let aw = words(trimmed);
    let hits: Vec<usize> = options
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let ow = words(o);
            !ow.is_empty()
                && !aw.is_empty()
                && (contains_run(&aw, &ow) || contains_run(&ow, &aw) || ow.iter().all(|w| aw.contains(w)))
        })
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [i] => Ok(*i),
        [] => Err(AnswerError::Unmatched(trimmed.to_string())),
        many => {
            // Prefer an option that contains every other match.
            let longest = *many.iter().max_by_key(|&&i| words(&options[i]).len()).expect("non-empty");
            let lw = words(&options[longest]);
            if many.iter().all(|&i| i == longest || contains_run(&lw, &words(&options[i]))) {
                return Ok(longest);
            }
            Err(AnswerError::Ambiguous {
                answer: trimmed.to_string(),
                candidates: many.iter().map(|&i| options[i].clone()).collect(),
            })
        }
    }
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exact_then_letter_then_fuzzy() {
        let opts = o(&["He/his", "She/her", "They/them"]);
        assert_eq!(parse_choice("She/her", &opts), Ok(1));
        assert_eq!(parse_choice("  they/them. ", &opts), Ok(2));
        assert_eq!(parse_choice("C", &opts), Ok(2));
        assert_eq!(parse_choice("B. She/her", &opts), Ok(1));
        assert_eq!(parse_choice("(A)", &opts), Ok(0));
        assert_eq!(parse_choice("The answer is they/them.", &opts), Ok(2));
        assert_eq!(parse_choice("his", &opts), Ok(0));
        assert_eq!(parse_choice("she", &opts), Ok(1));
        assert!(matches!(parse_choice("it", &opts), Err(AnswerError::Unmatched(_))));
        assert!(matches!(parse_choice("he/his or she/her", &opts), Err(AnswerError::Ambiguous { .. })));
        assert!(matches!(parse_choice("D", &opts), Err(AnswerError::Unmatched(_))));
    }

    #[test]
    fn sentences() {
        let opts = o(&[
            "He was good at math.",
            "She was good at math.",
            "A cat sat on the mat.",
        ]);
        assert_eq!(parse_choice("A cat sat on the mat.", &opts), Ok(2));
        assert_eq!(parse_choice("A cat sat on the mat", &opts), Ok(2));
        assert_eq!(parse_choice("I pick: she was good at math", &opts), Ok(1));
        assert_eq!(parse_choice("A", &opts), Ok(0));
    }
}
