use super::{FixedPart, Formula, Grouping, Interaction, RandomTerm, ReLhs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Dot,
    Tilde,
    Plus,
    Minus,
    Colon,
    Slash,
    Bar,
    DoubleBar,
    LParen,
    RParen,
    Star,
    Eof,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax { offset, message: message.into() }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(off, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == '.' {
            let mut end = off;
            while let Some(&(o, ch)) = chars.peek() {
                if !is_ident_char(ch) {
                    break;
                }
                end = o + ch.len_utf8();
                chars.next();
            }
            let word = &src[off..end];
            out.push((if word == "." { Tok::Dot } else { Tok::Ident(word.to_string()) }, off));
            continue;
        }
        if c.is_ascii_digit() {
            let mut end = off;
            while let Some(&(o, ch)) = chars.peek() {
                if !(ch.is_ascii_digit() || ch == '.') {
                    break;
                }
                end = o + 1;
                chars.next();
            }
            out.push((Tok::Num(src[off..end].to_string()), off));
            continue;
        }
        chars.next();
        let tok = match c {
            '~' => Tok::Tilde,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            ':' => Tok::Colon,
            '/' => Tok::Slash,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '*' => Tok::Star,
            '|' => {
                if matches!(chars.peek(), Some(&(_, '|'))) {
                    chars.next();
                    Tok::DoubleBar
                } else {
                    Tok::Bar
                }
            }
            other => return Err(syntax(off, format!("unexpected character '{other}'"))),
        };
        out.push((tok, off));
    }
    out.push((Tok::Eof, src.len()));
    Ok(out)
}

fn check_parens(toks: &[(Tok, usize)]) -> Result<()> {
    let mut open = Vec::new();
    for (t, off) in toks {
        match t {
            Tok::LParen => open.push(*off),
            Tok::RParen => {
                if open.pop().is_none() {
                    return Err(syntax(*off, "unmatched ')'"));
                }
            }
            _ => {}
        }
    }
    match open.pop() {
        Some(off) => Err(syntax(off, "unbalanced '(' is never closed")),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
enum Item {
    One,
    Zero,
    Dot,
    Term(Interaction),
    Offset(String),
    Random(RandomTerm),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    allow_dot: bool,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if t.0 != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.next() {
            (Tok::Ident(s), _) => Ok(s),
            (_, off) => Err(syntax(off, format!("expected {what}"))),
        }
    }

    fn response(&mut self) -> Result<Option<String>> {
        match self.next() {
            (Tok::Ident(s), _) => {
                if *self.peek() == Tok::LParen {
                    return Err(syntax(
                        self.offset(),
                        format!("transformed response '{s}(...)' is not supported; precompute it as a data column"),
                    ));
                }
                Ok(Some(s))
            }
            (Tok::Dot, _) if self.allow_dot => Ok(None),
            (Tok::Tilde, off) => Err(syntax(off, "missing response before '~'")),
            (_, off) => Err(syntax(off, "expected a response name")),
        }
    }

    fn rhs(&mut self) -> Result<Vec<(bool, Item, usize)>> {
        if *self.peek() == Tok::Eof {
            return Err(syntax(self.offset(), "empty right-hand side"));
        }
        let mut items = Vec::new();
        let mut plus = true;
        if *self.peek() == Tok::Minus {
            self.next();
            plus = false;
        }
        loop {
            let off = self.offset();
            let item = self.item()?;
            items.push((plus, item, off));
            match self.next() {
                (Tok::Plus, _) => plus = true,
                (Tok::Minus, _) => plus = false,
                (Tok::Eof, _) => break,
                (Tok::Bar | Tok::DoubleBar, off) => {
                    return Err(syntax(off, "'|' is only allowed inside parentheses, as in (1 | g)"))
                }
                (Tok::Star, off) => return Err(star(off)),
                (Tok::Tilde, off) => return Err(syntax(off, "a formula has exactly one '~'")),
                (_, off) => return Err(syntax(off, "expected '+' or '-'")),
            }
        }
        Ok(items)
    }

    fn item(&mut self) -> Result<Item> {
        let (tok, off) = self.next();
        match tok {
            Tok::Num(n) => match n.as_str() {
                "1" => Ok(Item::One),
                "0" => Ok(Item::Zero),
                _ => Err(syntax(off, format!("numeric term '{n}'; only 0 and 1 are allowed"))),
            },
            Tok::Dot if self.allow_dot => Ok(Item::Dot),
            Tok::Dot => Err(syntax(off, "'.' is only meaningful when updating a formula")),
            Tok::LParen => self.random(off).map(Item::Random),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    if name != "offset" {
                        return Err(syntax(
                            off,
                            format!("function '{name}(...)' is not supported; precompute it as a data column"),
                        ));
                    }
                    self.next();
                    let col = self.ident("a column name inside offset()")?;
                    match self.next() {
                        (Tok::RParen, _) => Ok(Item::Offset(col)),
                        (_, o) => Err(syntax(o, "offset() takes a single column name")),
                    }
                } else {
                    let mut term = vec![name];
                    while *self.peek() == Tok::Colon {
                        self.next();
                        term.push(self.ident("a name after ':'")?);
                    }
                    Ok(Item::Term(term))
                }
            }
            Tok::Star => Err(star(off)),
            Tok::Eof => Err(syntax(off, "expected a term after the operator")),
            _ => Err(syntax(off, "expected a term")),
        }
    }

    fn random(&mut self, lparen: usize) -> Result<RandomTerm> {
        if matches!(self.peek(), Tok::Bar | Tok::DoubleBar) {
            return Err(syntax(self.offset(), "empty random-effects term: nothing before '|'"));
        }
        let mut lhs = ReLhs { intercept: true, covariates: Vec::new() };
        let mut plus = true;
        if *self.peek() == Tok::Minus {
            self.next();
            plus = false;
        }
        let correlated = loop {
            let (tok, off) = self.next();
            match tok {
                Tok::Num(n) if n == "1" => lhs.intercept = plus,
                Tok::Num(n) if n == "0" => lhs.intercept = !plus,
                Tok::Ident(name) => {
                    if matches!(self.peek(), Tok::Colon | Tok::LParen) {
                        return Err(syntax(
                            self.offset(),
                            "only plain column names may appear left of '|'; precompute interactions or transforms",
                        ));
                    }
                    if plus {
                        if !lhs.covariates.contains(&name) {
                            lhs.covariates.push(name);
                        }
                    } else {
                        lhs.covariates.retain(|c| *c != name);
                    }
                }
                Tok::Star => return Err(star(off)),
                _ => return Err(syntax(off, "expected 0, 1 or a column name in a random-effects term")),
            }
            match self.next() {
                (Tok::Plus, _) => plus = true,
                (Tok::Minus, _) => plus = false,
                (Tok::Bar, _) => break true,
                (Tok::DoubleBar, _) => break false,
                (Tok::RParen, _) => return Err(syntax(lparen, "parenthesized terms must have the form (lhs | group)")),
                (Tok::Star, off) => return Err(star(off)),
                (_, off) => return Err(syntax(off, "expected '+', '-' or '|'")),
            }
        };
        if *self.peek() == Tok::RParen {
            return Err(syntax(self.offset(), "empty grouping factor after '|'"));
        }
        let mut parts = vec![self.ident("a grouping factor name")?];
        let mut sep: Option<Tok> = None;
        loop {
            let (tok, off) = self.next();
            match tok {
                Tok::RParen => break,
                Tok::Colon | Tok::Slash => {
                    if let Some(s) = &sep {
                        if *s != tok {
                            return Err(syntax(
                                off,
                                "mixing '/' and ':' in one grouping expression is ambiguous; write the terms out",
                            ));
                        }
                    }
                    sep = Some(tok);
                    parts.push(self.ident("a grouping factor name")?);
                }
                _ => return Err(syntax(off, "expected ')' to close the random-effects term")),
            }
        }
        if lhs.ncol() == 0 {
            return Err(syntax(lparen, "random-effects term has no columns"));
        }
        let grouping = if sep == Some(Tok::Slash) { Grouping::Nested(parts) } else { Grouping::Factor(parts) };
        Ok(RandomTerm { lhs, grouping, correlated })
    }
}

fn star(off: usize) -> Error {
    syntax(off, "'*' is not supported; write main effects and a:b interactions explicitly")
}

fn parse_with(src: &str, base: Option<&Formula>) -> Result<Formula> {
    if src.trim().is_empty() {
        return Err(syntax(0, "empty formula"));
    }
    let toks = lex(src)?;
    check_parens(&toks)?;
    let mut p = Parser { toks, pos: 0, allow_dot: base.is_some() };
    let response = p.response()?;
    match p.next() {
        (Tok::Tilde, _) => {}
        (_, off) => return Err(syntax(off, "expected '~' after the response")),
    }
    let items = p.rhs()?;
    let response = match (response, base) {
        (Some(r), _) => r,
        (None, Some(b)) => b.response.clone(),
        (None, None) => unreachable!("'.' rejected without a base formula"),
    };

    let mut fixed = FixedPart { intercept: true, terms: Vec::new(), offsets: Vec::new() };
    let mut random: Vec<RandomTerm> = Vec::new();
    fn add<T: PartialEq>(v: &mut Vec<T>, x: T, plus: bool) {
        if plus {
            if !v.contains(&x) {
                v.push(x);
            }
        } else {
            v.retain(|y| *y != x);
        }
    }
    for (plus, item, off) in items {
        match item {
            Item::One => fixed.intercept = plus,
            Item::Zero => fixed.intercept = !plus,
            Item::Term(t) => add(&mut fixed.terms, t, plus),
            Item::Offset(o) => add(&mut fixed.offsets, o, plus),
            Item::Random(r) => add(&mut random, r, plus),
            Item::Dot => {
                if !plus {
                    return Err(syntax(off, "'- .' is not meaningful"));
                }
                let b = base.expect("dot only lexed with a base");
                fixed.intercept = b.fixed.intercept;
                for t in &b.fixed.terms {
                    add(&mut fixed.terms, t.clone(), true);
                }
                for o in &b.fixed.offsets {
                    add(&mut fixed.offsets, o.clone(), true);
                }
                for r in &b.random {
                    add(&mut random, r.clone(), true);
                }
            }
        }
    }
    Ok(Formula { response, fixed, random })
}

/// Parses `resp ~ rhs`. Random-effects terms keep their source order.
pub fn parse_formula(src: &str) -> Result<Formula> {
    parse_with(src, None)
}

/// Applies an update formula such as `. ~ . - (x | g) + (1 | g)` to `base`.
pub fn update_formula(base: &Formula, src: &str) -> Result<Formula> {
    parse_with(src, Some(base))
}
