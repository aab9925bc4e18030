//! Lexical tokenizer for C-like function text and micro-target functions.

use serde::{Deserialize, Serialize};

pub const NUM: &str = "NUM";
pub const STR: &str = "STR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub function_name: String,
    pub tokens: Vec<Token>,
    /// Training label, `Some(true)` for vulnerable.
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizeError {
    #[error("line {line}, column {column}: unexpected character {ch:?}")]
    BadChar { line: u32, column: usize, ch: char },
    #[error("line {line}: unterminated literal")]
    Unterminated { line: u32 },
    #[error("function has no tokens")]
    Empty,
}

const OPERATORS: [&str; 48] = [
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "::", "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^", "~", "?", ":", ";",
    ",", ".", "(", ")", "[", "]", "{", "}", "#",
];

/// Splits a trailing `@file:line` anchor off a micro-target line.
fn split_anchor(line: &str) -> (&str, Option<(&str, u32)>) {
    if let Some(at) = line.rfind('@') {
        let (body, anchor) = (&line[..at], line[at + 1..].trim());
        if let Some((file, n)) = anchor.rsplit_once(':') {
            if let Ok(n) = n.parse() {
                if !file.is_empty() && !file.contains(char::is_whitespace) {
                    return (body, Some((file, n)));
                }
            }
        }
    }
    (line, None)
}

/// Tokenizes one function. Lines carrying an `@file:line` anchor take that
/// location; other lines take the next anchor, else the previous one, else
/// `first_line` plus their offset in `file`.
pub fn tokenize_function(source: &str, file: &str, first_line: u32) -> Result<TokenSeq, TokenizeError> {
    let mut per_line: Vec<(Vec<String>, Option<(String, u32)>)> = Vec::new();
    let mut in_comment = false;
    for (offset, raw) in source.lines().enumerate() {
        let line_no = first_line + offset as u32;
        let (body, anchor) = split_anchor(raw);
        let mut toks = Vec::new();
        let chars: Vec<char> = body.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if in_comment {
                if c == '*' && chars.get(i + 1) == Some(&'/') {
                    in_comment = false;
                    i += 1;
                }
                i += 1;
                continue;
            }
            if c.is_whitespace() {
                i += 1;
            } else if c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            } else if c == '/' && chars.get(i + 1) == Some(&'*') {
                in_comment = true;
                i += 2;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push(chars[start..i].iter().collect());
            } else if c.is_ascii_digit() {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                toks.push(NUM.to_string());
            } else if c == '"' || c == '\'' {
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(TokenizeError::Unterminated { line: line_no }),
                        Some('\\') => i += 2,
                        Some(&q) if q == c => break,
                        Some(_) => i += 1,
                    }
                }
                i += 1;
                toks.push(STR.to_string());
            } else {
                let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
                match OPERATORS.iter().find(|op| rest.starts_with(*op)) {
                    Some(op) => {
                        toks.push(op.to_string());
                        i += op.len();
                    }
                    None => return Err(TokenizeError::BadChar { line: line_no, column: i + 1, ch: c }),
                }
            }
        }
        per_line.push((toks, anchor.map(|(f, n)| (f.to_string(), n))));
    }

    let mut located: Vec<Option<(String, u32)>> = per_line.iter().map(|(_, a)| a.clone()).collect();
    let mut next = None;
    for slot in located.iter_mut().rev() {
        match slot {
            Some(a) => next = Some(a.clone()),
            None => *slot = next.clone(),
        }
    }
    let mut last = None;
    for (slot, (_, own)) in located.iter_mut().zip(&per_line) {
        if let Some(a) = own {
            last = Some(a.clone());
        }
        if slot.is_none() {
            *slot = last.clone();
        }
    }

    let mut tokens = Vec::new();
    for (offset, ((toks, _), loc)) in per_line.into_iter().zip(located).enumerate() {
        let (f, line) = loc.unwrap_or_else(|| (file.to_string(), first_line + offset as u32));
        tokens.extend(toks.into_iter().map(|text| Token { text, file: f.clone(), line }));
    }
    if tokens.is_empty() {
        return Err(TokenizeError::Empty);
    }
    Ok(TokenSeq { function_name: function_name(&tokens), tokens, label: None })
}

/// `fn NAME` for micro-target text, else the first identifier followed by `(`.
fn function_name(tokens: &[Token]) -> String {
    if tokens[0].text == "fn" {
        if let Some(t) = tokens.get(1) {
            return t.text.clone();
        }
    }
    tokens
        .windows(2)
        .find(|w| w[1].text == "(" && w[0].text.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_'))
        .map_or_else(|| "anonymous".to_string(), |w| w[0].text.clone())
}

/// Splits micro-target program text into per-function chunks.
pub fn split_functions(program_text: &str) -> Vec<String> {
    let mut chunks: Vec<String> = Vec::new();
    for line in program_text.lines() {
        if line.trim_start().starts_with("fn ") {
            chunks.push(String::new());
        }
        if let Some(c) = chunks.last_mut() {
            c.push_str(line);
            c.push('\n');
        }
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(seq: &TokenSeq) -> Vec<&str> {
        seq.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn malloc_line() {
        let s = tokenize_function("t=malloc(strlen(s)+3);", "decompile.c", 381).unwrap();
        assert_eq!(texts(&s), ["t", "=", "malloc", "(", "strlen", "(", "s", ")", "+", "NUM", ")", ";"]);
        assert!(s.tokens.iter().all(|t| t.line == 381 && t.file == "decompile.c"));
    }

    #[test]
    fn empty_and_bad_input() {
        assert_eq!(tokenize_function("  \n// nothing\n", "a.c", 1), Err(TokenizeError::Empty));
        assert_eq!(
            tokenize_function("x = 1;\ny = $;", "a.c", 1),
            Err(TokenizeError::BadChar { line: 2, column: 5, ch: '$' })
        );
        assert!(matches!(tokenize_function("s = \"abc", "a.c", 1), Err(TokenizeError::Unterminated { .. })));
    }

    #[test]
    fn two_lines_keep_their_lines() {
        let s = tokenize_function("int f(char *p) {\n  return p[0] == 'x' ? 1 : 0; }", "a.c", 10).unwrap();
        assert_eq!(s.function_name, "f");
        assert_eq!(s.tokens.first().unwrap().line, 10);
        assert_eq!(s.tokens.last().unwrap().line, 11);
        assert!(texts(&s).contains(&"STR"));
    }

    #[test]
    fn micro_target_anchors() {
        let src = "fn leaf entry=b0\nblock b0\n  LOADIN r4, 3 @d.c:381\n  MEMW r4, r5 @d.c:381\nblock b1\n  RET @d.c:382\n";
        let s = tokenize_function(src, "ignored.c", 1).unwrap();
        assert_eq!(s.function_name, "leaf");
        assert_eq!(texts(&s)[..5], ["fn", "leaf", "entry", "=", "b0"]);
        let loadin = s.tokens.iter().find(|t| t.text == "LOADIN").unwrap();
        assert_eq!((loadin.file.as_str(), loadin.line), ("d.c", 381));
        // headers inherit a neighbouring anchor
        assert_eq!(s.tokens[0].line, 381);
        assert_eq!(s.tokens.iter().find(|t| t.text == "b1").unwrap().line, 382);
    }

    #[test]
    fn splits_program_text() {
        let chunks = split_functions("program p mem=0\nfile a.c\nfn a entry=b\nblock b\n  RET @a.c:1\n\nfn b entry=c\n");
        assert_eq!(chunks.len(), 2);
        assert!(chunks[1].starts_with("fn b"));
    }
}
