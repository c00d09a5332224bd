// SPDX-License-Identifier: Apache-2.0

//! Context-sensitive tokenizer.
//!
//! Outside parentheses `<` and `>` delimit sentences and `=` is an ordinary
//! atom character. Inside a modifier `=`, `<`, `>`, `<=` and `>=` are
//! comparators. `:` and `/` are atom characters everywhere, so URLs lex as a
//! single atom.

use super::ast::Comparator;
use super::{ParseDiagnostic, ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Open,
    Close,
    LParen,
    RParen,
    Comma,
    Amp,
    Null,
    Cmp(Comparator),
    Atom(String),
}

impl Token {
    pub fn describe(&self) -> String {
        match self {
            Token::Open => "'<'".into(),
            Token::Close => "'>'".into(),
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::Comma => "','".into(),
            Token::Amp => "'&'".into(),
            Token::Null => "NULL".into(),
            Token::Cmp(c) => format!("comparator '{c}'"),
            Token::Atom(a) => format!("atom '{a}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub token: Token,
    /// Byte offset of the first character.
    pub offset: usize,
}

fn is_outer_delim(c: char) -> bool {
    matches!(c, '<' | '>' | '(' | ')' | ',' | '&')
}

fn is_inner_delim(c: char) -> bool {
    matches!(c, '<' | '>' | '(' | ')' | ',' | '&' | '=')
}

pub fn tokenize(source: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut tokens = Vec::new();
    let mut paren_depth = 0usize;
    let mut angle_depth = 0isize;
    let mut chars = source.char_indices().peekable();

    while let Some(&(offset, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c.is_control() {
            return Err(ParseError::single(
                ParseErrorKind::IllegalCharacter,
                ParseDiagnostic::error(
                    source,
                    offset,
                    format!("illegal control character U+{:04X}", c as u32),
                ),
            ));
        }
        let in_paren = paren_depth > 0;
        let token = match c {
            '(' => {
                chars.next();
                paren_depth += 1;
                Token::LParen
            }
            ')' => {
                chars.next();
                paren_depth = paren_depth.saturating_sub(1);
                Token::RParen
            }
            ',' => {
                chars.next();
                Token::Comma
            }
            '&' => {
                chars.next();
                Token::Amp
            }
            '=' if in_paren => {
                chars.next();
                Token::Cmp(Comparator::Eq)
            }
            '<' | '>' if in_paren => {
                chars.next();
                let with_eq = matches!(chars.peek(), Some(&(_, '=')));
                if with_eq {
                    chars.next();
                }
                Token::Cmp(match (c, with_eq) {
                    ('<', false) => Comparator::Lt,
                    ('<', true) => Comparator::Le,
                    ('>', false) => Comparator::Gt,
                    _ => Comparator::Ge,
                })
            }
            '<' => {
                chars.next();
                angle_depth += 1;
                Token::Open
            }
            '>' => {
                chars.next();
                angle_depth -= 1;
                Token::Close
            }
            _ => {
                let delim = if in_paren { is_inner_delim } else { is_outer_delim };
                let mut end = offset;
                while let Some(&(i, ch)) = chars.peek() {
                    if ch.is_whitespace() || ch.is_control() || delim(ch) {
                        break;
                    }
                    end = i + ch.len_utf8();
                    chars.next();
                }
                let text = &source[offset..end];
                if !in_paren && text == "NULL" {
                    Token::Null
                } else {
                    Token::Atom(text.to_string())
                }
            }
        };
        tokens.push(Spanned { token, offset });
    }

    if paren_depth > 0 || angle_depth > 0 {
        return Err(ParseError::single(
            ParseErrorKind::UnterminatedInput,
            ParseDiagnostic::error(
                source,
                source.len(),
                if paren_depth > 0 {
                    "input ends inside a modifier".to_string()
                } else {
                    "input ends inside an intent; missing '>'".to_string()
                },
            ),
        ));
    }
    Ok(tokens)
}
