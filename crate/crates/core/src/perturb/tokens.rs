//! Whitespace tokenization with detached trailing punctuation.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Rendered without a leading space (punctuation split off a word).
    pub attached: bool,
}

impl Token {
    fn new(text: impl Into<String>, attached: bool) -> Self {
        Token {
            text: text.into(),
            attached,
        }
    }

    /// A token containing at least one alphanumeric character.
    pub fn is_word(&self) -> bool {
        self.text.chars().any(char::is_alphanumeric)
    }
}

fn is_trailing_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '"' | ')' | '…')
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let cut = chunk
            .char_indices()
            .rev()
            .take_while(|&(_, c)| is_trailing_punct(c))
            .last()
            .map(|(i, _)| i)
            .unwrap_or(chunk.len());
        let (word, punct) = chunk.split_at(cut);
        if word.is_empty() {
            out.push(Token::new(punct, false));
        } else {
            out.push(Token::new(word, false));
            if !punct.is_empty() {
                out.push(Token::new(punct, true));
            }
        }
    }
    out
}

pub fn render(tokens: &[Token]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 && !t.attached {
            s.push(' ');
        }
        s.push_str(&t.text);
    }
    s
}

/// Lowercased word tokens, punctuation dropped.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(Token::is_word)
        .map(|t| t.text.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_is_detached_and_reattached() {
        let toks = tokenize("Are you a robot?");
        assert_eq!(toks.len(), 5);
        assert_eq!(toks[4], Token::new("?", true));
        assert_eq!(render(&toks), "Are you a robot?");
        assert_eq!(render(&tokenize("aftercare.. please help")), "aftercare.. please help");
    }

    #[test]
    fn words_drop_punctuation() {
        assert_eq!(words("Hey, are you a bot?"), ["hey", "are", "you", "a", "bot"]);
    }
}
