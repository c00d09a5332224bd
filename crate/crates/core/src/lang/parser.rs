// SPDX-License-Identifier: Apache-2.0

use super::ast::{IntentExpr, ModifierAtom, ModifierClause, Priority, SubjectExpr, TypedValue};
use super::lexer::{Spanned, Token};
use super::{ParseDiagnostic, ParseError, ParseErrorKind};

enum Element {
    Null,
    Clause(ModifierClause),
    Identifier(String),
    Nested(IntentExpr),
}

pub(super) struct Parser<'a> {
    source: &'a str,
    tokens: Vec<Spanned>,
    pos: usize,
    max_depth: usize,
}

/// `[A-Za-z][A-Za-z0-9_-]*`
pub fn is_verb(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl<'a> Parser<'a> {
    pub(super) fn new(source: &'a str, tokens: Vec<Spanned>, max_depth: usize) -> Self {
        Parser {
            source,
            tokens,
            pos: 0,
            max_depth,
        }
    }

    pub(super) fn parse_document(mut self) -> Result<IntentExpr, ParseError> {
        let intent = self.intent(1)?;
        if let Some(extra) = self.tokens.get(self.pos) {
            return Err(self.syntax(
                extra.offset,
                format!("unexpected {} after the intent", extra.token.describe()),
            ));
        }
        Ok(intent)
    }

    fn syntax(&self, offset: usize, message: String) -> ParseError {
        ParseError::single(
            ParseErrorKind::SyntaxError,
            ParseDiagnostic::error(self.source, offset, message),
        )
    }

    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn eof_offset(&self) -> usize {
        self.source.len()
    }

    fn next(&mut self, expected: &str) -> Result<Spanned, ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(self.syntax(
                self.eof_offset(),
                format!("unexpected end of input, expected {expected}"),
            )),
        }
    }

    fn expect(&mut self, want: Token, expected: &str) -> Result<usize, ParseError> {
        let t = self.next(expected)?;
        if t.token == want {
            Ok(t.offset)
        } else {
            Err(self.syntax(
                t.offset,
                format!("expected {expected}, found {}", t.token.describe()),
            ))
        }
    }

    fn atom(&mut self, expected: &str) -> Result<(String, usize), ParseError> {
        let t = self.next(expected)?;
        match t.token {
            Token::Atom(a) => Ok((a, t.offset)),
            other => Err(self.syntax(
                t.offset,
                format!("expected {expected}, found {}", other.describe()),
            )),
        }
    }

    fn intent(&mut self, depth: usize) -> Result<IntentExpr, ParseError> {
        let open = self.expect(Token::Open, "'<'")?;
        if depth > self.max_depth {
            return Err(ParseError::single(
                ParseErrorKind::DepthExceeded,
                ParseDiagnostic::error(
                    self.source,
                    open,
                    format!("intent nesting exceeds the maximum depth of {}", self.max_depth),
                ),
            ));
        }
        let (verb, verb_at) = self.atom("verb")?;
        if !is_verb(&verb) {
            return Err(self.syntax(verb_at, format!("'{verb}' is not a valid verb name")));
        }
        self.expect(Token::Comma, "','")?;
        let (object, _) = self.atom("object")?;

        let mut elements: Vec<(Element, usize)> = Vec::new();
        loop {
            let t = self.next("',' or '>'")?;
            match t.token {
                Token::Close => break,
                Token::Comma => {}
                other => {
                    return Err(self.syntax(
                        t.offset,
                        format!("expected ',' or '>', found {}", other.describe()),
                    ))
                }
            }
            if let Some((Element::Identifier(..) | Element::Nested(..), at)) = elements.last() {
                return Err(self.syntax(*at, "the subject must be the last element".into()));
            }
            let el = self.element(depth)?;
            elements.push(el);
        }

        let subject = match elements.pop() {
            None => SubjectExpr::Null,
            Some((Element::Null, _)) => SubjectExpr::Null,
            Some((Element::Identifier(id), _)) => SubjectExpr::Identifier(id),
            Some((Element::Nested(inner), _)) => SubjectExpr::Nested(Box::new(inner)),
            Some((Element::Clause(_), at)) => {
                return Err(self.syntax(
                    at,
                    "expected a subject (NULL, identifier or intent) as the last element".into(),
                ))
            }
        };
        let mut modifiers = Vec::new();
        for (el, _) in elements {
            match el {
                Element::Null => {}
                Element::Clause(c) => modifiers.push(c),
                // Non-final subjects are rejected inside the loop.
                Element::Identifier(..) | Element::Nested(..) => unreachable!(),
            }
        }
        Ok(IntentExpr {
            verb: verb.to_ascii_lowercase(),
            object,
            modifiers,
            subject,
        })
    }

    fn element(&mut self, depth: usize) -> Result<(Element, usize), ParseError> {
        let Some(t) = self.peek().cloned() else {
            return Err(self.syntax(
                self.eof_offset(),
                "unexpected end of input, expected a modifier or subject".into(),
            ));
        };
        let el = match t.token {
            Token::Null => {
                self.pos += 1;
                Element::Null
            }
            Token::Atom(a) => {
                self.pos += 1;
                Element::Identifier(a)
            }
            Token::Open => Element::Nested(self.intent(depth + 1)?),
            Token::LParen => {
                let mut atoms = vec![self.modifier()?];
                while matches!(self.peek(), Some(Spanned { token: Token::Amp, .. })) {
                    self.pos += 1;
                    atoms.push(self.modifier()?);
                }
                Element::Clause(ModifierClause { atoms })
            }
            other => {
                return Err(self.syntax(
                    t.offset,
                    format!("expected a modifier or subject, found {}", other.describe()),
                ))
            }
        };
        Ok((el, t.offset))
    }

    fn modifier(&mut self) -> Result<ModifierAtom, ParseError> {
        self.expect(Token::LParen, "'('")?;
        let (key, _) = self.atom("modifier key")?;
        let t = self.next("comparator")?;
        let comparator = match t.token {
            Token::Cmp(c) => c,
            other => {
                return Err(self.syntax(
                    t.offset,
                    format!("expected comparator, found {}", other.describe()),
                ))
            }
        };
        let (raw, _) = self.atom("modifier value")?;
        let t = self.next("',' or ')'")?;
        let priority = match t.token {
            Token::RParen => Priority::Essential,
            Token::Comma => {
                let (tag, at) = self.atom("'essential' or 'desirable'")?;
                let Some(p) = Priority::parse_tag(&tag) else {
                    return Err(self.syntax(
                        at,
                        format!("unknown priority tag '{tag}', expected 'essential' or 'desirable'"),
                    ));
                };
                self.expect(Token::RParen, "')'")?;
                p
            }
            other => {
                return Err(self.syntax(
                    t.offset,
                    format!("expected ',' or ')', found {}", other.describe()),
                ))
            }
        };
        Ok(ModifierAtom {
            key,
            comparator,
            value: TypedValue::parse(&raw),
            priority,
        })
    }
}
