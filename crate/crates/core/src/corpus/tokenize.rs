use super::Token;

// Punctuation that stays inside a token when flanked by alphanumerics,
// e.g. "IL-2", "2.5", "patient's", "1,000".
const JOINERS: [char; 5] = ['-', '.', '\'', ',', '/'];

fn is_split_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())
}

/// Whitespace-plus-punctuation tokenization with byte offsets.
///
/// Punctuation becomes its own token unless it is a joiner character sitting
/// between two alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;

    let push = |tokens: &mut Vec<Token>, from: usize, to: usize| {
        let index = tokens.len();
        tokens.push(Token {
            text: text[from..to].to_string(),
            index,
            offset: Some((from, to)),
        });
    };

    for (i, &(pos, c)) in chars.iter().enumerate() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                push(&mut tokens, s, pos);
            }
            continue;
        }
        if is_split_punct(c) {
            let prev_alnum = i > 0 && chars[i - 1].1.is_alphanumeric();
            let next_alnum = chars.get(i + 1).is_some_and(|&(_, n)| n.is_alphanumeric());
            if JOINERS.contains(&c) && prev_alnum && next_alnum && start.is_some() {
                continue;
            }
            if let Some(s) = start.take() {
                push(&mut tokens, s, pos);
            }
            push(&mut tokens, pos, pos + c.len_utf8());
            continue;
        }
        if start.is_none() {
            start = Some(pos);
        }
    }
    if let Some(s) = start {
        push(&mut tokens, s, text.len());
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn splits_trailing_punctuation() {
        assert_eq!(texts("Give aspirin."), ["Give", "aspirin", "."]);
        assert_eq!(texts("(IL-2)"), ["(", "IL-2", ")"]);
    }

    #[test]
    fn keeps_inner_joiners() {
        assert_eq!(texts("a 2.5 mg dose"), ["a", "2.5", "mg", "dose"]);
        assert_eq!(texts("up-regulation, then"), ["up-regulation", ",", "then"]);
    }

    #[test]
    fn offsets_point_into_source() {
        let src = "  Aspirin  inhibits COX-1 ;";
        for t in tokenize(src) {
            let (a, b) = t.offset.unwrap();
            assert_eq!(&src[a..b], t.text);
        }
    }

    #[test]
    fn indices_are_contiguous() {
        let toks = tokenize("a, b; c");
        assert!(toks.iter().enumerate().all(|(i, t)| t.index == i));
    }
}
